"""Exact transient analysis of instantiated finite-state chains.

The chain is uniformized: with q at least the largest exit rate, the
distribution at time t is a Poisson-weighted sum of powers of the
discrete matrix P = I + Q/q.  The series is truncated once the Poisson
tail mass drops below the requested tolerance, and terms accumulate in
ascending order.

Time-bounded until probabilities use the standard two-phase reduction:
run the chain with non-phi1 states made absorbing up to the window start,
then from each phi1 state take the probability of sitting in a phi2 state
at the window end, in the chain where phi2 and dead-end states absorb.
Rate matrices here are linear in the parameters (one rate parameter per
reaction), so repeated evaluations at different points reuse one sparse
matrix per parameter.
"""

from dataclasses import dataclass
from functools import cache

import numpy as np
from scipy import sparse
from scipy.stats import poisson

from .csl import CslFormula, StateFormula
from .errors import ConfigError
from .model import PCRN, ParamPoint, StateSpace, compiled_reactions, enumerate_states

DEFAULT_TOL = 1e-10
RATE_MARGIN = 1.02  # uniformization rate = margin * max exit rate


@dataclass(frozen=True, eq=False)
class UniformizedChain:
    """Row-stochastic jump matrix P = I + Q/q plus its uniformization rate."""

    q: float
    P: sparse.csr_matrix
    n_states: int

    @classmethod
    def from_rate_matrix(cls, rates: sparse.spmatrix | np.ndarray) -> "UniformizedChain":
        """Build from off-diagonal transition rates (diagonal entries ignored)."""
        R = sparse.csr_matrix(rates, dtype=float)
        R.setdiag(0.0)
        R.eliminate_zeros()
        n = R.shape[0]
        exit_rates = np.asarray(R.sum(axis=1)).ravel()
        q = RATE_MARGIN * float(exit_rates.max()) if exit_rates.size and exit_rates.max() > 0 else 0.0
        if q == 0.0:
            P = sparse.identity(n, format="csr")
        else:
            P = (R / q + sparse.diags(1.0 - exit_rates / q)).tocsr()
        return cls(q=q, P=P, n_states=n)

    def row_sum_defect(self) -> float:
        ones = np.ones(self.n_states)
        return float(np.abs(np.asarray(self.P.sum(axis=1)).ravel() - ones).max())


def _poisson_weights(qt: float, tol: float) -> np.ndarray:
    """Probability weights pmf(0..K) with tail mass beyond K below tol."""
    k_max = int(poisson.isf(tol, qt)) + 1
    while poisson.sf(k_max, qt) > tol:
        k_max += max(1, k_max // 10)
    return poisson.pmf(np.arange(k_max + 1), qt)


def transient(
    chain: UniformizedChain,
    initial: np.ndarray,
    t: float,
    tol: float = DEFAULT_TOL,
) -> np.ndarray:
    """Distribution over states at time t, starting from ``initial``.

    Returns the raw truncated series: entries sum to 1 minus a defect of at
    most ``tol``.  Renormalize only for reporting.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    pi = np.asarray(initial, dtype=float).copy()
    if t == 0 or chain.q == 0:
        return pi
    weights = _poisson_weights(chain.q * t, tol)
    acc = np.zeros_like(pi)
    for w in weights:
        if w > 0.0:
            acc += w * pi
        pi = pi @ chain.P
    return acc


def _weighted_powers_applied(chain: UniformizedChain, v: np.ndarray, t: float, tol: float) -> np.ndarray:
    """Column-vector analogue of ``transient``: sum_k pois(k) P^k v."""
    vec = np.asarray(v, dtype=float).copy()
    if t == 0 or chain.q == 0:
        return vec
    weights = _poisson_weights(chain.q * t, tol)
    acc = np.zeros_like(vec)
    for w in weights:
        if w > 0.0:
            acc += w * vec
        vec = chain.P @ vec
    return acc


# ---------------------------------------------------------------------------
# Parameter-linear chain assembly for a network's enumerated state space.


@cache
def _chain_basis(pcrn: PCRN):
    """Per-parameter sparse rate matrices: R(theta) = sum_k theta_k * basis_k.

    Also returns the state space and, per parameter, the vector of exit-rate
    factors (basis row sums).
    """
    space = enumerate_states(pcrn)
    n = len(space)
    compiled = compiled_reactions(pcrn)
    by_param: dict[str, list] = {name: [[], [], []] for name in pcrn.params.names}
    states = space.states
    for reactants, delta, param in compiled:
        g = np.ones(n, dtype=float)
        for i, needed in reactants:
            col = states[:, i].astype(float)
            # clamped falling factorial: any nonpositive factor zeroes the product
            for k in range(needed):
                g *= np.maximum(col - k, 0.0)
        active = np.nonzero(g > 0)[0]
        if active.size == 0:
            continue
        targets = states[active].copy()
        for i, d in delta:
            targets[:, i] += d
        tgt_idx = np.fromiter(
            (space.index.get(tuple(row), -1) for row in targets),
            dtype=np.int64,
            count=len(targets),
        )
        keep = tgt_idx >= 0
        rows, cols, vals = by_param[param]
        rows.extend(active[keep].tolist())
        cols.extend(tgt_idx[keep].tolist())
        vals.extend(g[active][keep].tolist())
    basis = {}
    exit_factors = {}
    for name, (rows, cols, vals) in by_param.items():
        B = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
        B.sum_duplicates()
        basis[name] = B
        exit_factors[name] = np.asarray(B.sum(axis=1)).ravel()
    return space, basis, exit_factors


def build_chain(pcrn: PCRN, point: ParamPoint) -> tuple[UniformizedChain, StateSpace]:
    """Uniformized chain of the network instantiated at one parameter point."""
    space, basis, _ = _chain_basis(pcrn)
    R = _combine(basis, pcrn.params.names, point)
    return UniformizedChain.from_rate_matrix(R), space


def _combine(basis: dict, names: tuple[str, ...], point: ParamPoint) -> sparse.csr_matrix:
    acc = None
    for name in names:
        term = basis[name] * point[name]
        acc = term if acc is None else acc + term
    return acc


class UntilEvaluator:
    """Reusable two-phase evaluator for one network and one until formula.

    Building the evaluator enumerates the state space and precomputes the
    per-parameter rate pieces with absorbing rows already zeroed, so each
    call to :meth:`probability` only assembles two sparse matrices and runs
    the Poisson series.
    """

    def __init__(self, pcrn: PCRN, phi1: StateFormula, phi2: StateFormula, t_lo: float, t_hi: float):
        if not 0 <= t_lo <= t_hi:
            raise ConfigError(f"until window [{t_lo}, {t_hi}] needs 0 <= t <= t'")
        self.pcrn = pcrn
        self.t_lo = float(t_lo)
        self.t_hi = float(t_hi)
        space, basis, _ = _chain_basis(pcrn)
        self.space = space
        index = pcrn.species_index()
        self.mask1 = phi1.mask(space.states, index)
        self.mask2 = phi2.mask(space.states, index)
        n = len(space)
        self.init_idx = space.ordinal(pcrn.initial_state)
        names = pcrn.params.names
        # phase 1: non-phi1 states absorb; phase 2: phi2 and (!phi1 & !phi2) absorb
        keep1 = sparse.diags(self.mask1.astype(float))
        keep2 = sparse.diags((self.mask1 & ~self.mask2).astype(float))
        self._basis1 = {name: (keep1 @ basis[name]).tocsr() for name in names}
        self._basis2 = {name: (keep2 @ basis[name]).tocsr() for name in names}
        self._names = names
        self._n = n

    def probability(self, point: ParamPoint, tol: float = DEFAULT_TOL) -> float:
        chain2 = UniformizedChain.from_rate_matrix(_combine(self._basis2, self._names, point))
        values = _weighted_powers_applied(
            chain2, self.mask2.astype(float), self.t_hi - self.t_lo, tol
        )
        if self.t_lo == 0:
            result = values[self.init_idx]
            if self.mask2[self.init_idx]:
                result = 1.0
            elif not self.mask1[self.init_idx]:
                result = 0.0
        else:
            chain1 = UniformizedChain.from_rate_matrix(_combine(self._basis1, self._names, point))
            pi0 = np.zeros(self._n)
            pi0[self.init_idx] = 1.0
            pi_t = transient(chain1, pi0, self.t_lo, tol)
            result = float(np.dot(pi_t[self.mask1], values[self.mask1]))
        return float(min(max(result, 0.0), 1.0))


def bounded_until_prob(
    pcrn: PCRN,
    point: ParamPoint,
    phi1: StateFormula,
    phi2: StateFormula,
    t_lo: float,
    t_hi: float,
    tol: float = DEFAULT_TOL,
) -> float:
    """Probability that the instantiated chain satisfies phi1 U[t_lo,t_hi] phi2
    from its initial state."""
    return UntilEvaluator(pcrn, phi1, phi2, t_lo, t_hi).probability(point, tol)


def evaluator_for(pcrn: PCRN, formula: CslFormula) -> UntilEvaluator:
    path = formula.path
    return UntilEvaluator(pcrn, path.phi1, path.phi2, path.t_lo, path.t_hi)


def check_threshold(pcrn: PCRN, point: ParamPoint, formula: CslFormula, tol: float = DEFAULT_TOL) -> bool:
    """Exactly decide the top-level probability comparison at one point."""
    value = evaluator_for(pcrn, formula).probability(point, tol)
    return formula.compare(value)
