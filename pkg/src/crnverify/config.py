"""Experiment configuration: one JSON file drives the whole pipeline.

The file is a flat JSON object with a ``format`` version key.  A seed is
mandatory; every stage derives its substreams from it, so a config fully
determines every output byte.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

FORMAT_VERSION = 1

_KNOWN_KEYS = {
    "format", "scenario", "model", "property", "seed", "workers",
    "param_bounds", "true_point",
    "observation_times", "observation_count", "observation_end", "noise_sigma",
    "abc_particles", "abc_batches", "abc_rounds", "abc_max_attempts",
    "synth_volume_tolerance", "synth_margin", "synth_max_depth",
    "synth_backend", "synth_transient_tol", "grid_resolution",
    "slice_samples", "slice_scale", "slice_init",
}


@dataclass
class ExperimentConfig:
    model: str
    property: str
    seed: int
    scenario: str = ""
    workers: int = 1
    param_bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    true_point: dict[str, float] = field(default_factory=dict)
    observation_times: list[float] | None = None
    observation_count: int = 20
    observation_end: float | None = None  # defaults to the property's window end
    noise_sigma: float = 0.0
    abc_particles: int = 1000
    abc_batches: int = 10
    abc_rounds: int = 8
    abc_max_attempts: int = 5000
    synth_volume_tolerance: float = 0.1
    synth_margin: float = 0.02
    synth_max_depth: int = 12
    synth_backend: str = "uniformization"
    synth_transient_tol: float = 1e-8
    grid_resolution: int = 100
    slice_samples: int = 10000
    slice_scale: float = 2.0
    slice_init: list[float] | None = None

    def __post_init__(self):
        if self.seed is None:
            raise ConfigError("a seed is mandatory (reproducibility)")
        for name, value in (
            ("observation_count", self.observation_count),
            ("abc_particles", self.abc_particles),
            ("abc_batches", self.abc_batches),
            ("abc_rounds", self.abc_rounds),
            ("abc_max_attempts", self.abc_max_attempts),
            ("slice_samples", self.slice_samples),
            ("grid_resolution", self.grid_resolution),
            ("synth_max_depth", self.synth_max_depth),
            ("workers", self.workers),
        ):
            if int(value) < 1:
                raise ConfigError(f"{name} must be a positive count, got {value}")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be nonnegative")
        if self.slice_scale <= 0:
            raise ConfigError("slice_scale must be positive")
        if not 0 < self.synth_volume_tolerance < 1:
            raise ConfigError("synth_volume_tolerance must lie strictly between 0 and 1")
        if self.synth_backend != "uniformization":
            raise ConfigError(f"unknown synthesis backend {self.synth_backend!r}")
        if self.observation_times is not None:
            times = list(map(float, self.observation_times))
            if not times or any(b <= a for a, b in zip(times, times[1:])):
                raise ConfigError("observation_times must be nonempty and strictly increasing")

    def times(self, default_end: float) -> np.ndarray:
        """Observation grid: explicit times, or evenly spaced over (0, end]."""
        if self.observation_times is not None:
            return np.array(self.observation_times, dtype=float)
        end = self.observation_end if self.observation_end is not None else default_end
        if end <= 0:
            raise ConfigError("observation_end must be positive")
        q = self.observation_count
        return end * np.arange(1, q + 1) / q

    def scenario_name(self) -> str:
        if self.scenario:
            return self.scenario
        q = len(self.observation_times) if self.observation_times is not None else self.observation_count
        noise = "with noise" if self.noise_sigma > 0 else "without noise"
        return f"{q} obs {noise}"


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a config file, apply CLI overrides, and validate."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path}: expected a JSON object")
    if doc.get("format") != FORMAT_VERSION:
        raise ConfigError(f"config {path}: missing or unsupported 'format' (expected {FORMAT_VERSION})")
    unknown = set(doc) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"config {path}: unknown keys {sorted(unknown)}")
    merged = {k: v for k, v in doc.items() if k != "format"}
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    for key in ("model", "property", "seed"):
        if key not in merged:
            raise ConfigError(f"config {path}: missing required key {key!r}")
    if "param_bounds" in merged:
        merged["param_bounds"] = {
            k: (float(v[0]), float(v[1])) for k, v in merged["param_bounds"].items()
        }
    try:
        return ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigError(f"config {path}: {exc}") from exc
