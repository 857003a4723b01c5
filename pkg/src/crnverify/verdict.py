"""Posterior fitting, slice sampling, and the final verification probability.

The pooled particles are summarized by an independent (diagonal-covariance)
Gaussian.  The probability that the underlying system satisfies the
property is the posterior mass on the satisfying region, estimated by
classifying slice-sampler draws against the synthesized partition.  Mass in
undecided boxes or outside the parameter space is never counted as
satisfying; both fractions are reported alongside.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .abcsmc import Particle
from .csl import CslFormula
from .errors import ConfigError
from .model import PCRN, ParamPoint
from .monitor import estimate_lambda
from .synthesis import LABEL_SAT, LABEL_UNDECIDED, RegionPartition, classify_points

FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class Posterior:
    """Independent Gaussian over the rate parameters (means and variances)."""

    names: tuple[str, ...]
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        if np.any(self.variance <= 0):
            raise ConfigError("posterior variances must be positive")

    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def logpdf(self, values: np.ndarray) -> float:
        z = (values - self.mean) ** 2 / self.variance
        return float(-0.5 * (np.sum(z) + np.sum(np.log(2.0 * np.pi * self.variance))))


@dataclass
class VerdictReport:
    """Outcome of integrating the posterior over the satisfying region."""

    probability: float
    standard_error: float
    mass_sat: float
    mass_viol: float
    mass_undecided: float
    mass_outside: float
    n_samples: int
    seed: int | None
    partition_file: str | None
    posterior: Posterior
    wall_time: float = 0.0


def weighted_mean_variance(pooled) -> tuple[tuple[str, ...], np.ndarray, np.ndarray]:
    """Population-weighted mean and per-dimension variance of particles."""
    particles = [p if isinstance(p, Particle) else p[1] for p in pooled]
    if len(particles) < 2:
        raise ConfigError("need at least two particles to fit a posterior")
    names = particles[0].point.names
    points = np.array([p.point.array(names) for p in particles])
    weights = np.array([p.weight for p in particles], dtype=float)
    total = weights.sum()
    if total <= 0:
        raise ConfigError("particle weights sum to zero")
    weights = weights / total
    mean = weights @ points
    variance = weights @ (points - mean) ** 2
    return names, mean, variance


def fit_posterior(pooled: list[tuple[int, Particle]] | list[Particle]) -> Posterior:
    """Independent Gaussian fitted to pooled particles.

    A dimension with zero weighted variance means the particle cloud is
    degenerate (all mass on one value) and is rejected: the posterior
    could not be sampled from.
    """
    names, mean, variance = weighted_mean_variance(pooled)
    if np.any(variance <= 0):
        raise ConfigError("degenerate posterior: zero variance in some dimension")
    return Posterior(names=names, mean=mean, variance=variance)


def slice_sample(
    posterior: Posterior,
    n_samples: int,
    scale: float,
    rng: np.random.Generator,
    init: np.ndarray | None = None,
) -> np.ndarray:
    """Draw from the posterior by coordinate-wise slice sampling.

    Each coordinate update places an interval of width ``scale`` around the
    current point, steps it out until both ends leave the slice, then
    shrinks toward the current point until a draw lands inside.  Total for
    any positive density; no tuning beyond the scale is needed.
    """
    if n_samples < 1:
        raise ConfigError("need at least one sample")
    if scale <= 0:
        raise ConfigError("slice scale must be positive")
    x = np.array(posterior.mean if init is None else init, dtype=float)
    k = len(x)
    out = np.empty((n_samples, k))
    logf = posterior.logpdf
    for s in range(n_samples):
        for d in range(k):
            # floor the uniform so the auxiliary level never degenerates
            log_y = logf(x) + math.log(max(rng.random(), 1e-300))
            left = x[d] - scale * rng.random()
            right = left + scale
            probe = x.copy()
            while True:
                probe[d] = left
                if logf(probe) <= log_y:
                    break
                left -= scale
            while True:
                probe[d] = right
                if logf(probe) <= log_y:
                    break
                right += scale
            while True:
                cand = left + (right - left) * rng.random()
                probe[d] = cand
                if logf(probe) > log_y:
                    x[d] = cand
                    break
                if cand < x[d]:
                    left = cand
                else:
                    right = cand
        out[s] = x
    return out


def probability(
    partition: RegionPartition,
    posterior: Posterior,
    rng: np.random.Generator,
    n_samples: int = 10000,
    scale: float = 2.0,
    init: np.ndarray | None = None,
    seed: int | None = None,
    partition_file: str | None = None,
) -> VerdictReport:
    """Posterior mass on the satisfying region, by Monte Carlo over slice draws.

    Draws falling outside the parameter space, in violating boxes, or in
    undecided boxes all count against satisfaction; the four mass fractions
    sum to one exactly over the sample.
    """
    if tuple(partition.param_names) != tuple(posterior.names):
        raise ConfigError("partition and posterior cover different parameters")
    samples = slice_sample(posterior, n_samples, scale, rng, init=init)
    labels = classify_points(partition, samples)
    n = len(labels)
    n_outside = sum(1 for lab in labels if lab is None)
    n_sat = sum(1 for lab in labels if lab == LABEL_SAT)
    n_und = sum(1 for lab in labels if lab == LABEL_UNDECIDED)
    n_viol = n - n_outside - n_sat - n_und
    c = n_sat / n
    return VerdictReport(
        probability=c,
        standard_error=float(np.sqrt(c * (1.0 - c) / n)),
        mass_sat=c,
        mass_viol=n_viol / n,
        mass_undecided=n_und / n,
        mass_outside=n_outside / n,
        n_samples=n,
        seed=seed,
        partition_file=partition_file,
        posterior=posterior,
    )


def bayes_smc(
    posterior: Posterior,
    pcrn: PCRN,
    formula: CslFormula,
    n_params: int,
    n_sims: int,
    rng: np.random.Generator,
) -> list[tuple[ParamPoint, float, bool]]:
    """Statistical model-checking baseline over posterior parameter draws.

    Samples parameter points from the fitted Gaussian (redrawing the rare
    draw with a negative rate, which the simulator cannot run), estimates
    the satisfaction probability of each by simulation, and compares the
    plain frequency estimate against the property threshold.
    """
    if n_params < 1 or n_sims < 1:
        raise ConfigError("n_params and n_sims must be positive")
    std = posterior.std()
    results = []
    for i, child in enumerate(rng.spawn(n_params)):
        for _ in range(1000):
            values = posterior.mean + std * child.standard_normal(len(std))
            if np.all(values >= 0):
                break
        else:
            raise ConfigError("posterior mass is almost entirely negative")
        point = ParamPoint(posterior.names, tuple(values))
        estimate = estimate_lambda(pcrn, point, formula, n_sims, child)
        results.append((point, estimate.mean, formula.compare(estimate.mean)))
    return results


def majority_verdict(results: list[tuple[ParamPoint, float, bool]]) -> bool:
    verdicts = [v for _, _, v in results]
    return sum(verdicts) * 2 > len(verdicts)


# ---------------------------------------------------------------------------
# Report serialization (wall time stays out of the file so reruns with the
# same seed are byte-identical).


def save_report(report: VerdictReport, path: str | Path) -> None:
    doc = {
        "format": FORMAT_VERSION,
        "C": report.probability,
        "se": report.standard_error,
        "mass_T": report.mass_sat,
        "mass_F": report.mass_viol,
        "mass_U": report.mass_undecided,
        "mass_outside": report.mass_outside,
        "n_samples": report.n_samples,
        "seed": report.seed,
        "partition_file": report.partition_file,
        "posterior": {
            "mu": {n: float(m) for n, m in zip(report.posterior.names, report.posterior.mean)},
            "sigma": {n: float(s) for n, s in zip(report.posterior.names, report.posterior.std())},
        },
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_report(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != FORMAT_VERSION:
        raise ConfigError(f"unsupported report format {doc.get('format')!r}")
    return doc
