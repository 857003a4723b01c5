"""Parametric chemical reaction networks and their finite Markov-chain semantics.

A network is a set of species, mass-action reactions whose rate constants
are free parameters confined to a hyperrectangle, and an initial molecule
count vector.  States of the induced continuous-time Markov chain are
molecule-count vectors; reaction j fires in state x at propensity
``theta_j * g_j(x)`` where ``g_j`` counts distinct reactant combinations
(product of falling factorials).

All types are immutable after construction and safe to share across
concurrent tasks.
"""

from collections import deque
from dataclasses import dataclass, field
from functools import cache

import numpy as np

from .errors import ConfigError, StateSpaceCapError

DEFAULT_STATE_CAP = 1_000_000


@dataclass(frozen=True)
class Species:
    """A chemical species and its position in the state vector."""

    name: str
    index: int


@dataclass(frozen=True)
class Reaction:
    """One mass-action reaction: reactants -> products at a named rate parameter.

    ``reactants`` and ``products`` map species names to nonnegative counts.
    The net stoichiometric change must be nonzero.
    """

    reactants: tuple[tuple[str, int], ...]
    products: tuple[tuple[str, int], ...]
    rate_parameter: str
    name: str = ""

    def __post_init__(self):
        for side in (self.reactants, self.products):
            for species, count in side:
                if count < 0:
                    raise ConfigError(f"negative stoichiometric count for {species}")
        if not self.net_change():
            raise ConfigError(f"reaction {self.name or self.rate_parameter!r} has zero net change")

    def net_change(self) -> dict[str, int]:
        """Map species -> net count change, omitting zero entries."""
        delta: dict[str, int] = {}
        for species, count in self.products:
            delta[species] = delta.get(species, 0) + count
        for species, count in self.reactants:
            delta[species] = delta.get(species, 0) - count
        return {s: d for s, d in delta.items() if d != 0}


@dataclass(frozen=True)
class ParameterSpace:
    """Compact hyperrectangle of admissible rate-parameter values."""

    dims: tuple[tuple[str, float, float], ...]

    def __post_init__(self):
        seen = set()
        for name, lo, hi in self.dims:
            if name in seen:
                raise ConfigError(f"duplicate parameter {name!r}")
            seen.add(name)
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise ConfigError(f"parameter {name!r} bounds must be finite")
            if not lo < hi:
                raise ConfigError(f"parameter {name!r} needs lower < upper bound")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _, _ in self.dims)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for _, lo, _ in self.dims])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, _, hi in self.dims])

    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, point: "ParamPoint") -> bool:
        for name, lo, hi in self.dims:
            v = point[name]
            if not lo <= v <= hi:
                return False
        return True

    def with_bounds(self, overrides: dict[str, tuple[float, float]]) -> "ParameterSpace":
        """Copy with some dimensions' bounds replaced."""
        unknown = set(overrides) - set(self.names)
        if unknown:
            raise ConfigError(f"bound override for unknown parameter(s) {sorted(unknown)}")
        dims = tuple(
            (name, *overrides[name]) if name in overrides else (name, lo, hi)
            for name, lo, hi in self.dims
        )
        return ParameterSpace(dims)


@dataclass(frozen=True)
class ParamPoint:
    """One valuation of the rate parameters (per-second rate constants)."""

    names: tuple[str, ...]
    values: tuple[float, ...]

    @classmethod
    def from_dict(cls, values: dict[str, float]) -> "ParamPoint":
        return cls(tuple(values.keys()), tuple(float(v) for v in values.values()))

    def __getitem__(self, name: str) -> float:
        try:
            return self.values[self.names.index(name)]
        except ValueError:
            raise ConfigError(f"unknown parameter {name!r}") from None

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values))

    def array(self, order: tuple[str, ...]) -> np.ndarray:
        return np.array([self[name] for name in order])


@dataclass(frozen=True)
class PCRN:
    """A parametric chemical reaction network.

    ``conserved_total``, when set, bounds the total molecule count during
    state-space enumeration (the SIR case conserves S+I+R exactly).
    """

    species: tuple[Species, ...]
    reactions: tuple[Reaction, ...]
    params: ParameterSpace
    initial_state: tuple[int, ...]
    conserved_total: int | None = None

    def __post_init__(self):
        names = [s.name for s in self.species]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate species names")
        if [s.index for s in self.species] != list(range(len(names))):
            raise ConfigError("species indices must be contiguous from 0")
        if len(self.initial_state) != len(self.species):
            raise ConfigError("initial state length does not match species count")
        if any(c < 0 for c in self.initial_state):
            raise ConfigError("initial molecule counts must be nonnegative")
        declared = set(self.params.names)
        known = set(names)
        for r in self.reactions:
            if r.rate_parameter not in declared:
                raise ConfigError(f"reaction {r.name or '?'} uses undeclared parameter {r.rate_parameter!r}")
            for species, _ in r.reactants + r.products:
                if species not in known:
                    raise ConfigError(f"reaction {r.name or '?'} references unknown species {species!r}")
        if self.conserved_total is not None and sum(self.initial_state) > self.conserved_total:
            raise ConfigError("initial state exceeds conserved total")

    @property
    def n_species(self) -> int:
        return len(self.species)

    def species_index(self) -> dict[str, int]:
        return {s.name: s.index for s in self.species}

    def species_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.species)


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Enumerated reachable states with a state<->ordinal bijection.

    ``states`` is an (N, n) int array in lexicographic order; ``index``
    maps state tuples back to row numbers.
    """

    states: np.ndarray
    index: dict[tuple[int, ...], int] = field(repr=False)

    def __len__(self) -> int:
        return len(self.states)

    def ordinal(self, state) -> int:
        return self.index[tuple(int(c) for c in state)]


def _falling_factorial(x: int, k: int) -> int:
    out = 1
    for i in range(k):
        out *= x - i
    return out


# Per-network compiled reaction structure: index-based reactant lists and
# sparse stoichiometric deltas, shared by the simulator and the chain builder.
@cache
def compiled_reactions(pcrn: PCRN):
    idx = pcrn.species_index()
    compiled = []
    for r in pcrn.reactions:
        reactants: dict[int, int] = {}
        for species, count in r.reactants:
            if count:
                reactants[idx[species]] = reactants.get(idx[species], 0) + count
        delta = tuple(sorted((idx[s], d) for s, d in r.net_change().items()))
        compiled.append((tuple(sorted(reactants.items())), delta, r.rate_parameter))
    return tuple(compiled)


def propensity(state, reaction: Reaction, point: ParamPoint, species_index: dict[str, int]) -> float:
    """Mass-action propensity of one reaction in one state.

    ``species_index`` maps species names to state-vector positions (see
    ``PCRN.species_index``).  Returns ``rate * prod_i ff(x_i, u_i)`` with
    ``ff`` the falling factorial; zero whenever a reactant count is below
    its required multiplicity.
    """
    rate = point[reaction.rate_parameter]
    counts: dict[str, int] = {}
    for species, count in reaction.reactants:
        counts[species] = counts.get(species, 0) + count
    g = 1
    for species, needed in counts.items():
        g *= _falling_factorial(int(state[species_index[species]]), needed)
        if g <= 0:
            return 0.0
    return rate * g


def propensity_in(pcrn: PCRN, state, reaction_index: int, point: ParamPoint) -> float:
    """Propensity of ``pcrn.reactions[reaction_index]`` at ``state``."""
    reactants, _, param = compiled_reactions(pcrn)[reaction_index]
    rate = point[param]
    g = 1
    for i, needed in reactants:
        g *= _falling_factorial(int(state[i]), needed)
        if g <= 0:
            return 0.0
    return rate * g


def exit_rate(state, pcrn: PCRN, point: ParamPoint) -> float:
    """Total rate of leaving ``state``: the sum of all reaction propensities."""
    return sum(propensity_in(pcrn, state, j, point) for j in range(len(pcrn.reactions)))


def enumerate_states(pcrn: PCRN, max_states: int = DEFAULT_STATE_CAP) -> StateSpace:
    """Breadth-first closure of the reachable state set.

    Successors whose total molecule count exceeds ``conserved_total`` (when
    set) are outside the modeled manifold and are not explored.  Exceeding
    ``max_states`` raises rather than truncating silently.
    """
    compiled = compiled_reactions(pcrn)
    start = tuple(int(c) for c in pcrn.initial_state)
    seen = {start}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        for reactants, delta, _ in compiled:
            if any(state[i] < needed for i, needed in reactants):
                continue
            nxt = list(state)
            for i, d in delta:
                nxt[i] += d
            if any(c < 0 for c in nxt):
                continue
            if pcrn.conserved_total is not None and sum(nxt) > pcrn.conserved_total:
                continue
            nxt = tuple(nxt)
            if nxt not in seen:
                if len(seen) >= max_states:
                    raise StateSpaceCapError(
                        f"state space exceeds cap of {max_states} states; "
                        "raise the cap or bound the network"
                    )
                seen.add(nxt)
                queue.append(nxt)
    ordered = sorted(seen)
    states = np.array(ordered, dtype=np.int64)
    states.setflags(write=False)
    return StateSpace(states=states, index={s: i for i, s in enumerate(ordered)})


def rate_matrix_row(state, pcrn: PCRN, point: ParamPoint, space: StateSpace) -> dict[tuple[int, ...], float]:
    """Outgoing transition rates from ``state`` as a map target -> rate.

    Reactions with the same net effect are summed.  A positive-propensity
    target missing from ``space`` means the enumeration was capped short,
    which is an error; targets leaving the conserved manifold are dropped.
    """
    row: dict[tuple[int, ...], float] = {}
    compiled = compiled_reactions(pcrn)
    state = tuple(int(c) for c in state)
    for j, (_, delta, _) in enumerate(compiled):
        a = propensity_in(pcrn, state, j, point)
        if a <= 0.0:
            continue
        target = list(state)
        for i, d in delta:
            target[i] += d
        target = tuple(target)
        if target not in space.index:
            if pcrn.conserved_total is not None and sum(target) > pcrn.conserved_total:
                continue
            raise StateSpaceCapError(f"transition target {target} missing from enumerated space")
        row[target] = row.get(target, 0.0) + a
    return row
