"""Command-line entry point: ``mixsmooth <subcommand> --config FILE``.

Each run writes a canonical JSON report (sorted keys, 17-digit floats, no
timestamps or worker counts) and a plain-text summary that also records the
wall-clock time and worker count.

Exit status: 0 success, 1 a kernel validation check failed, 3 invalid
configuration, 4 unreadable sample file, 5 invalid input, 6 numerical
failure, 7 any other estimation error.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import SUBCOMMANDS, ExperimentConfig, parse_config
from .errors import (
    ConfigError,
    InvalidInputError,
    MixsmoothError,
    NumericalFailureError,
    SampleParseError,
)
from .estimators import bandwidth_grid, estimate_surface, eval_grid
from .kernels import validate_kernel
from .model import (
    Constant,
    ConstantThreshold,
    Coordinates,
    Identity,
    PsiIndex,
    Raw,
    ShortfallIndicator,
    ShortfallNumerator,
    SingleIndex,
    load_sample,
    save_sample,
)
from .processes import simulate
from .report import canonical_json, format_table
from .risk import CesIndex, ces_index_grid, ces_surface
from .verification import bias_slope, kernel_class_norm_check, rate_experiment

EXIT_CODES = (
    (ConfigError, 3),
    (SampleParseError, 4),
    (InvalidInputError, 5),
    (NumericalFailureError, 6),
    (MixsmoothError, 7),
)


def _phi(entry):
    if entry.kind == "raw":
        return Raw(entry.j)
    if entry.kind == "constant":
        return Constant(entry.value)
    cls = ShortfallNumerator if entry.kind == "shortfall_numerator" else ShortfallIndicator
    return cls(tuple(entry.a), ConstantThreshold(entry.c))


def _w_map(entry):
    if entry.kind == "identity":
        return Identity()
    if entry.kind == "single_index":
        return SingleIndex(tuple(entry.b))
    return Coordinates(tuple(entry.indices))


def _grid(cfg):
    return eval_grid(cfg.eval.radius, cfg.eval.points)


def _interval(cfg):
    bw = cfg.bandwidth
    return bandwidth_grid(bw.a_n, bw.b_n, bw.count).values


def run_simulate(cfg: ExperimentConfig, workers: int):
    sim = cfg.simulate
    sample = simulate(cfg.model.build(), sim.n, sim.seed, sim.burnin)
    save_sample(sample, sim.path)
    result = {"path": sim.path, "n": sample.n, "q": sample.q, "p": sample.p,
              "mean_x": np.mean(sample.x, axis=0).tolist(), "sd_x": np.std(sample.x, axis=0).tolist()}
    summary = f"wrote {sample.n} rows (q={sample.q}, p={sample.p}) to {sim.path}"
    return result, summary, 0


def run_validate_kernel(cfg: ExperimentConfig, workers: int):
    kernel = cfg.kernel.build()
    report = validate_kernel(kernel, cfg.validation.quad_tol, cfg.validation.order)
    rows = [[c.name, "pass" if c.passed else "FAIL", c.residual] for c in report.checks]
    summary = format_table(["check", "status", "residual"], rows)
    return report.to_dict(), summary, 0 if report.passed else 1


def run_estimate(cfg: ExperimentConfig, workers: int):
    sample = load_sample(cfg.data.path, cfg.data.q, cfg.data.p)
    est = cfg.estimate
    psis = [PsiIndex(_phi(p), _w_map(m)) for m in est.w_maps for p in est.phi]
    surface = estimate_surface(sample, psis, cfg.kernel.build(), _interval(cfg), _grid(cfg),
                               quantity=est.quantity, trim_tau=est.trim_tau)
    result = surface.to_dict()
    summary = (f"{est.quantity}-surface: {len(surface.bandwidths)} bandwidths x {len(psis)} indices x "
               f"{len(surface.points)} points, n={sample.n}, undefined cells: {surface.undefined_count}")
    return result, summary, 0


def run_ces(cfg: ExperimentConfig, workers: int):
    sample = load_sample(cfg.data.path, cfg.data.q, cfg.data.p)
    ix = cfg.index
    indices = ces_index_grid(ix.a_angles, ix.b_vectors, ix.p_levels)
    for angle in ix.a_angles:
        for b in ix.b_vectors:
            for c in ix.c_values:
                indices.append(CesIndex((math.cos(angle), math.sin(angle)), tuple(b), ConstantThreshold(c)))
    surface = ces_surface(sample, indices, cfg.kernel.build(), _interval(cfg), _grid(cfg), cfg.ces.trim_tau)
    summary = (f"CES surface: {len(surface.bandwidths)} bandwidths x {len(indices)} indices x "
               f"{len(surface.points)} points, n={sample.n}, undefined cells: {surface.undefined_count}, "
               f"quantile violations: {surface.quantile_violations}")
    return surface.to_dict(), summary, 0


def run_rate_check(cfg: ExperimentConfig, workers: int):
    report = rate_experiment(cfg, workers=workers)
    rows = [[n, s, m, f] for n, s, m, f in zip(report.n_grid, report.sup_errors,
                                                report.median_sup_errors, report.fixed_bandwidth_errors)]
    summary = "\n".join([
        format_table(["n", "mean sup", "median sup", "fixed h"], rows),
        f"fitted slope {report.fitted_slope:.4f}  CI [{report.slope_ci[0]:.4f}, {report.slope_ci[1]:.4f}]"
        f"  theory {report.theoretical_slope:.4f}",
        f"undefined cells per n: {report.diagnostics['undefined_cells']}",
    ])
    return report.to_dict(), summary, 0


def run_theory_check(cfg: ExperimentConfig, workers: int):
    kernel = cfg.kernel.build()
    b = cfg.bias
    sd = b.target_sd

    def target(w):
        return math.exp(-0.5 * (w / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))

    slope, biases = bias_slope(target, kernel, b.h_grid, b.w, b.quad_tol)
    nc = cfg.norm
    norm = kernel_class_norm_check(nc.build(), kernel, nc.density_bound, nc.h_grid, nc.tail, nc.quad_points)
    result = {
        "bias": {"h_grid": list(b.h_grid), "bias": biases, "slope": slope, "order": kernel.order},
        "norm": norm.to_dict(),
    }
    summary = "\n".join([
        f"bias slope {slope:.4f} (kernel order {kernel.order})",
        format_table(["h", "norm^2", "norm^2 / h"],
                     [[h, v, r] for h, v, r in zip(norm.h_grid, norm.norm_sq_values, norm.ratio_values)]),
        f"ratio spread {norm.spread:.4f}, increasing as h shrinks: {norm.monotone_increasing}",
    ])
    return result, summary, 0


RUNNERS = {
    "simulate": run_simulate,
    "validate-kernel": run_validate_kernel,
    "estimate": run_estimate,
    "ces": run_ces,
    "rate-check": run_rate_check,
    "theory-check": run_theory_check,
}


def _apply_overrides(cfg: ExperimentConfig, args) -> tuple[ExperimentConfig, dict]:
    overrides = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError([f"--seed: must be non-negative, got {args.seed}"])
        overrides["seed"] = args.seed
        for name in ("experiment", "simulate"):
            section = getattr(cfg, name)
            if section is not None:
                cfg = cfg.model_copy(update={name: section.model_copy(update={"seed": args.seed})})
    if args.output is not None:
        overrides["output"] = args.output
        cfg = cfg.model_copy(update={"output": cfg.output.model_copy(update={"path": args.output})})
    return cfg, overrides


def _protect_inputs(cfg: ExperimentConfig, config_path: Path):
    out = Path(cfg.output.path).resolve()
    inputs = [config_path.resolve()]
    if cfg.data is not None:
        inputs.append(Path(cfg.data.path).resolve())
    if out in inputs:
        raise ConfigError([f"output.path: {cfg.output.path} would overwrite an input file"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixsmooth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="TOML experiment file")
        p.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--output", default=None, help="override output.path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise ConfigError([f"--workers: must be >= 1, got {args.workers}"])
        cfg = parse_config(args.config, args.subcommand)
        cfg, overrides = _apply_overrides(cfg, args)
        _protect_inputs(cfg, args.config)
        started = time.perf_counter()
        result, summary, status = RUNNERS[args.subcommand](cfg, args.workers)
        elapsed = time.perf_counter() - started
    except MixsmoothError as exc:
        code = next(c for cls, c in EXIT_CODES if isinstance(exc, cls))
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return code

    payload = {
        "subcommand": args.subcommand,
        "version": __version__,
        "config": cfg.echo(),
        "overrides": overrides,
        "result": result,
    }
    out = Path(cfg.output.path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(canonical_json(payload))
    summary_path = Path(cfg.output.summary) if cfg.output.summary else out.with_suffix(".txt")
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    summary_path.write_text(
        f"mixsmooth {args.subcommand}  ({stamp}, {elapsed:.2f} s, workers={args.workers})\n"
        f"config: {args.config}\nreport: {out}\n\n{summary}\n"
    )
    print(summary)
    return status
