"""Command-line pipeline: generate data, synthesize regions, infer
parameters, and integrate the posterior into a verification probability.

Every command takes ``--seed`` (or a config file carrying one) and writes
byte-identical outputs when rerun with the same inputs.  Wall-clock timings
go to stdout only, never into output files.

Exit codes: 0 success, 2 configuration or parse error, 3 synthesis finished
without meeting the undecided-volume tolerance, 4 runtime failure.
"""

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .abcsmc import AbcConfig, ParticleSet, Prior, abcseq, load_particles, pool_batches, save_particles
from .config import ExperimentConfig, load_config
from .crn_text import load_crn
from .csl import parse_csl
from .errors import ConfigError, CrnVerifyError, ParseError, ToleranceUnmetError
from .model import PCRN, ParamPoint
from .simulate import observe, save_dataset, simulate, load_dataset
from .synthesis import (
    STATUS_OK,
    SynthesisConfig,
    save_heatmap_grid,
    save_partition,
    load_partition,
    synthesize,
)
from .verdict import (
    bayes_smc,
    fit_posterior,
    majority_verdict,
    probability,
    Posterior,
    save_report,
)

FORMAT_VERSION = 1


@dataclass
class PipelineRun:
    """Stage outputs and timings of one full pipeline invocation."""

    config: ExperimentConfig
    dataset_path: str = ""
    partition_path: str = ""
    particles_path: str = ""
    verdict_path: str = ""
    timings: dict[str, float] = field(default_factory=dict)


def _model_with_bounds(config: ExperimentConfig) -> PCRN:
    pcrn = load_crn(config.model)
    if config.param_bounds:
        pcrn = PCRN(
            species=pcrn.species,
            reactions=pcrn.reactions,
            params=pcrn.params.with_bounds(config.param_bounds),
            initial_state=pcrn.initial_state,
            conserved_total=pcrn.conserved_total,
        )
    return pcrn


def _true_point(config: ExperimentConfig, pcrn: PCRN) -> ParamPoint:
    if not config.true_point:
        raise ConfigError("config needs a true_point to generate data")
    unknown = set(config.true_point) - set(pcrn.params.names)
    if unknown:
        raise ConfigError(f"true_point names unknown parameters {sorted(unknown)}")
    missing = set(pcrn.params.names) - set(config.true_point)
    if missing:
        raise ConfigError(f"true_point missing parameters {sorted(missing)}")
    return ParamPoint(pcrn.params.names, tuple(config.true_point[n] for n in pcrn.params.names))


def cmd_generate(config: ExperimentConfig, out_dir: Path) -> Path:
    """Simulate the data-generating system once and write the observations."""
    pcrn = _model_with_bounds(config)
    formula = parse_csl(config.property)
    point = _true_point(config, pcrn)
    times = config.times(default_end=formula.path.t_hi)
    stream = rngmod.stream(config.seed, rngmod.STAGE_GENERATE)
    traj = simulate(pcrn, point, float(times[-1]), stream)
    data = observe(traj, times, config.noise_sigma, stream, species=pcrn.species_names())
    path = out_dir / "dataset.csv"
    save_dataset(
        data,
        path,
        meta={"seed": config.seed, "true_point": config.true_point, "model": str(config.model)},
    )
    return path


def cmd_synth(config: ExperimentConfig, out_dir: Path) -> tuple[Path, Path, str]:
    """Partition the parameter space and export it plus a plotting grid."""
    pcrn = _model_with_bounds(config)
    formula = parse_csl(config.property)
    synth_config = SynthesisConfig(
        margin=config.synth_margin,
        max_depth=config.synth_max_depth,
        transient_tol=config.synth_transient_tol,
        workers=config.workers,
    )
    partition = synthesize(pcrn, formula, config.synth_volume_tolerance, synth_config)
    partition_path = out_dir / "partition.json"
    heatmap_path = out_dir / "heatmap.csv"
    save_partition(partition, partition_path, seed=config.seed)
    save_heatmap_grid(partition, heatmap_path, resolution=config.grid_resolution, seed=config.seed)
    return partition_path, heatmap_path, partition.status


def _run_batch(args) -> ParticleSet:
    pcrn, prior, data, abc_config = args
    return abcseq(pcrn, prior, data, abc_config)


def cmd_infer(config: ExperimentConfig, dataset_path: Path, out_dir: Path) -> tuple[Path, Path]:
    """Run batched sequential ABC and write particles plus a posterior summary."""
    pcrn = _model_with_bounds(config)
    data = load_dataset(dataset_path)
    if data.species != pcrn.species_names():
        raise ConfigError(
            f"dataset species {data.species} do not match model species {pcrn.species_names()}"
        )
    prior = Prior(pcrn.params)
    jobs = [
        (pcrn, prior, data, AbcConfig(
            particles=config.abc_particles,
            rounds=config.abc_rounds,
            max_attempts=config.abc_max_attempts,
            seed=config.seed,
            batch=b,
        ))
        for b in range(config.abc_batches)
    ]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            batch_sets = list(pool.map(_run_batch, jobs))
    else:
        batch_sets = [_run_batch(job) for job in jobs]
    particles_path = out_dir / "particles.csv"
    save_particles(batch_sets, pcrn.params, particles_path, seed=config.seed)
    pooled = pool_batches(batch_sets, pcrn.params)
    posterior = fit_posterior(pooled)
    posterior_path = out_dir / "posterior.json"
    doc = {
        "format": FORMAT_VERSION,
        "mu": {n: float(m) for n, m in zip(posterior.names, posterior.mean)},
        "sigma": {n: float(s) for n, s in zip(posterior.names, posterior.std())},
        "particles": config.abc_particles,
        "batches": config.abc_batches,
        "rounds": config.abc_rounds,
        "seed": config.seed,
        "statuses": [s.status for s in batch_sets],
    }
    posterior_path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return particles_path, posterior_path


def cmd_verify(
    partition_path: Path,
    particles_path: Path,
    out_dir: Path,
    seed: int,
    n_samples: int = 10000,
    scale: float = 2.0,
) -> Path:
    """Integrate the fitted posterior over the satisfying region."""
    partition = load_partition(partition_path)
    batch_sets, space, _ = load_particles(particles_path)
    posterior = fit_posterior(pool_batches(batch_sets, space))
    report = probability(
        partition,
        posterior,
        rngmod.stream(seed, rngmod.STAGE_VERIFY),
        n_samples=n_samples,
        scale=scale,
        seed=seed,
        partition_file=os.path.relpath(partition_path, out_dir),
    )
    path = out_dir / "verdict.json"
    save_report(report, path)
    return path


def _posterior_from_file(path: Path) -> Posterior:
    if path.suffix == ".json":
        doc = json.loads(path.read_text(encoding="utf-8"))
        if doc.get("format") != FORMAT_VERSION:
            raise ConfigError(f"unsupported posterior format in {path}")
        names = tuple(doc["mu"].keys())
        mean = np.array([doc["mu"][n] for n in names])
        std = np.array([doc["sigma"][n] for n in names])
        return Posterior(names=names, mean=mean, variance=std**2)
    batch_sets, space, _ = load_particles(path)
    return fit_posterior(pool_batches(batch_sets, space))


def cmd_baseline(
    source_path: Path,
    config: ExperimentConfig,
    out_dir: Path,
    n_params: int = 100,
    n_sims: int = 1000,
) -> Path:
    """Bayesian statistical model checking over posterior parameter draws."""
    pcrn = _model_with_bounds(config)
    formula = parse_csl(config.property)
    posterior = _posterior_from_file(source_path)
    results = bayes_smc(
        posterior, pcrn, formula, n_params, n_sims,
        rngmod.stream(config.seed, rngmod.STAGE_BASELINE),
    )
    doc = {
        "format": FORMAT_VERSION,
        "n_params": n_params,
        "n_sims": n_sims,
        "seed": config.seed,
        "majority_verdict": majority_verdict(results),
        "satisfied_fraction": sum(v for _, _, v in results) / len(results),
        "points": [
            {"point": point.as_dict(), "estimate": estimate, "verdict": verdict}
            for point, estimate, verdict in results
        ],
    }
    path = out_dir / "baseline.json"
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return path


def cmd_pipeline(config: ExperimentConfig, out_dir: Path) -> PipelineRun:
    """All stages in order; writes a run summary reconstructible from stage files."""
    run = PipelineRun(config=config)
    t0 = time.perf_counter()
    dataset_path = cmd_generate(config, out_dir)
    run.dataset_path = str(dataset_path)
    run.timings["generate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    partition_path, _, status = cmd_synth(config, out_dir)
    run.partition_path = str(partition_path)
    run.timings["synthesize"] = time.perf_counter() - t0
    if status != STATUS_OK:
        raise ToleranceUnmetError(
            f"synthesis stopped at status {status!r}; partition written to {partition_path}"
        )

    t0 = time.perf_counter()
    particles_path, posterior_path = cmd_infer(config, dataset_path, out_dir)
    run.particles_path = str(particles_path)
    run.timings["infer"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    verdict_path = cmd_verify(
        partition_path, particles_path, out_dir, config.seed,
        n_samples=config.slice_samples, scale=config.slice_scale,
    )
    run.verdict_path = str(verdict_path)
    run.timings["verdict"] = time.perf_counter() - t0

    posterior_doc = json.loads(Path(posterior_path).read_text(encoding="utf-8"))
    verdict_doc = json.loads(Path(verdict_path).read_text(encoding="utf-8"))
    summary = {
        "format": FORMAT_VERSION,
        "scenario": config.scenario_name(),
        "true_point": config.true_point,
        "mean": posterior_doc["mu"],
        "std_dev": posterior_doc["sigma"],
        "probability": verdict_doc["C"],
        "seed": config.seed,
        # stage files are recorded relative to the run directory so reruns
        # into any directory are byte-identical and the directory can move
        "stages": {
            "dataset": Path(run.dataset_path).name,
            "partition": Path(run.partition_path).name,
            "particles": Path(run.particles_path).name,
            "verdict": Path(run.verdict_path).name,
        },
    }
    (out_dir / "run.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n", encoding="utf-8")

    total = sum(run.timings.values())
    mu = ", ".join(f"{k}={v:.4g}" for k, v in posterior_doc["mu"].items())
    sd = ", ".join(f"{k}={v:.3g}" for k, v in posterior_doc["sigma"].items())
    print(f"scenario:    {summary['scenario']}")
    print(f"true params: {config.true_point}")
    print(f"mean:        {mu}")
    print(f"std dev:     {sd}")
    print(f"probability: {verdict_doc['C']:.4f}")
    print(f"time:        {total:.1f} s " + " ".join(f"({k} {v:.1f}s)" for k, v in run.timings.items()))
    return run


# ---------------------------------------------------------------------------
# Argument parsing and dispatch.


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    p.add_argument("--out-dir", default="out", help="output directory (default: out)")
    p.add_argument("--workers", type=int, help="max concurrent worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crnverify",
        description="Verify a partially known reaction network against a "
        "time-bounded property, with a computed probability.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate the true system and write observations")
    _add_common(p)

    p = sub.add_parser("synth", help="partition the parameter space by the property threshold")
    _add_common(p)
    p.add_argument("--model", help="network .crn file (overrides config)")
    p.add_argument("--property", help="property string (overrides config)")
    p.add_argument("--tolerance", type=float, help="undecided-volume tolerance")

    p = sub.add_parser("infer", help="sequential ABC over observed data")
    _add_common(p)
    p.add_argument("--model", help="network .crn file (overrides config)")
    p.add_argument("--dataset", required=True, help="observations CSV from 'generate'")
    p.add_argument("--particles", type=int, help="particles per batch")
    p.add_argument("--batches", type=int, help="independent batches")
    p.add_argument("--rounds", type=int, help="ABC rounds (including the prior round)")

    p = sub.add_parser("verify", help="integrate the posterior over the satisfying region")
    p.add_argument("partition", help="partition JSON from 'synth'")
    p.add_argument("particles", help="particle CSV from 'infer'")
    _add_common(p)
    p.add_argument("--samples", type=int, help="slice-sampler draws")
    p.add_argument("--scale", type=float, help="slice-sampler step scale")

    p = sub.add_parser("baseline", help="Bayesian statistical model checking comparison")
    p.add_argument("particles", help="particle CSV or posterior JSON")
    _add_common(p)
    p.add_argument("--model", help="network .crn file (overrides config)")
    p.add_argument("--property", help="property string (overrides config)")
    p.add_argument("--n-params", type=int, default=100, help="posterior draws to check")
    p.add_argument("--n-sims", type=int, default=1000, help="simulations per draw")

    p = sub.add_parser("pipeline", help="run generate, synth, infer, and verify in order")
    _add_common(p)

    return parser


def _config_from_args(args, require_config: bool = False) -> ExperimentConfig:
    overrides = {
        "seed": getattr(args, "seed", None),
        "workers": getattr(args, "workers", None),
        "model": getattr(args, "model", None),
        "property": getattr(args, "property", None),
        "synth_volume_tolerance": getattr(args, "tolerance", None),
        "abc_particles": getattr(args, "particles", None) if args.command == "infer" else None,
        "abc_batches": getattr(args, "batches", None),
        "abc_rounds": getattr(args, "rounds", None),
        "slice_samples": getattr(args, "samples", None),
        "slice_scale": getattr(args, "scale", None),
    }
    if args.config:
        return load_config(args.config, overrides)
    if require_config:
        raise ConfigError("this command needs --config")
    merged = {k: v for k, v in overrides.items() if v is not None}
    for key in ("model", "property", "seed"):
        if key not in merged:
            raise ConfigError(f"missing --{key} (or provide --config)")
    return ExperimentConfig(**merged)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        if args.command == "generate":
            config = _config_from_args(args, require_config=True)
            path = cmd_generate(config, out_dir)
            print(f"wrote {path} ({time.perf_counter() - t0:.2f} s)")
        elif args.command == "synth":
            config = _config_from_args(args)
            partition_path, heatmap_path, status = cmd_synth(config, out_dir)
            print(f"wrote {partition_path} and {heatmap_path} ({time.perf_counter() - t0:.2f} s)")
            if status != STATUS_OK:
                print(f"synthesis status: {status}", file=sys.stderr)
                return 3
        elif args.command == "infer":
            config = _config_from_args(args)
            particles_path, posterior_path = cmd_infer(config, Path(args.dataset), out_dir)
            print(f"wrote {particles_path} and {posterior_path} ({time.perf_counter() - t0:.2f} s)")
        elif args.command == "verify":
            if args.seed is None:
                cfg_seed = load_config(args.config).seed if args.config else None
                if cfg_seed is None:
                    raise ConfigError("verify needs --seed or a config with one")
                args.seed = cfg_seed
            path = cmd_verify(
                Path(args.partition),
                Path(args.particles),
                out_dir,
                seed=args.seed,
                n_samples=args.samples or 10000,
                scale=args.scale or 2.0,
            )
            print(f"wrote {path} ({time.perf_counter() - t0:.2f} s)")
        elif args.command == "baseline":
            config = _config_from_args(args)
            path = cmd_baseline(
                Path(args.particles), config, out_dir,
                n_params=args.n_params, n_sims=args.n_sims,
            )
            print(f"wrote {path} ({time.perf_counter() - t0:.2f} s)")
        elif args.command == "pipeline":
            config = _config_from_args(args, require_config=True)
            cmd_pipeline(config, out_dir)
        return 0
    except (ParseError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ToleranceUnmetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CrnVerifyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # runtime failures map to a dedicated exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
