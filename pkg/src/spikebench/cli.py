"""spikebench command line: bounds, effdim, run, fit.

Exit codes: 0 success, 2 usage or domain error, 3 an invariant check inside
a run failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    DESIGN_C,
    E_SOP_JOULES,
    BoundInputs,
    compression_ratio,
    compute_bounds,
    effective_dimension,
    fit_scaling_law,
)
from .datasets import load_cifar10, read_csv_matrix
from .errors import SpikeBenchError
from .harness import EXPERIMENTS, ExperimentConfig, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_GATE = 0, 2, 3
SEED_ENV = "SPIKEBENCH_SEED"
CIFAR_REFERENCE = {"d_eff_mean": 47.0, "d_eff_std": 3.0}


class UsageError(Exception):
    pass


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(text)


def _resolve_seed(args) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return None
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_bounds(args) -> int:
    inputs = BoundInputs(L_f=args.lf, n=args.n, d=args.d, epsilon=args.eps, d_eff=args.deff)
    rep = compute_bounds(inputs, C=args.C, e_sop=args.esop)
    out = rep.to_dict()
    if args.deff is not None:
        out["compression_ratio"] = compression_ratio(inputs.nd, args.deff)
    lines = [
        f"worst-case spikes      {rep.worst_case_spikes}  ({rep.convention})",
        f"energy                 {rep.energy_joules:.6g} J",
    ]
    if rep.input_dependent_spikes is not None:
        lines += [
            f"input-dependent spikes {rep.input_dependent_spikes}",
            f"input-dependent energy {rep.input_dependent_energy_joules:.6g} J",
            f"compression ratio      {out['compression_ratio']:.6g}",
        ]
    lo, hi = rep.constant_C_ci
    lines.append(f"recommended T          {rep.recommended_T}  (C = {rep.constant_C}, 95% CI [{lo}, {hi}])")
    _emit(args, out, "\n".join(lines))
    return EXIT_OK


def _load_effdim_input(path: Path, fmt: str):
    if fmt == "auto":
        fmt = "cifar" if path.is_dir() or path.suffix == ".bin" else "csv"
    if fmt == "cifar":
        pixels, _ = load_cifar10(path)
        return pixels, 1.0 / 255.0, fmt
    return read_csv_matrix(path), 1.0, fmt


def cmd_effdim(args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise UsageError(f"--input: no such file {path}")
    data, scale, fmt = _load_effdim_input(path, args.format)
    seed = _resolve_seed(args) or 0
    rep = effective_dimension(data, args.threshold, args.subsamples, args.fraction, seed, scale=scale)
    out = rep.to_dict()
    out.update({"input": str(path), "format": fmt, "samples": int(data.shape[0]), "seed": seed})
    if fmt == "cifar":
        ref = CIFAR_REFERENCE
        out["reference"] = dict(ref)
        out["matches_reference"] = abs(rep.d_eff_mean - ref["d_eff_mean"]) <= ref["d_eff_std"]
        out["preprocessing"] = "raw flattened pixels scaled to [0,1], columns centered"
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = path.stem if path.is_file() else path.name
    spec_path = out_dir / f"{stem}_spectrum.csv"
    with open(spec_path, "w") as fh:
        fh.write("component,variance,explained_ratio,cumulative_ratio\n")
        cum = np.cumsum(rep.spectrum) / rep.total_variance
        for k, (v, c) in enumerate(zip(rep.spectrum, cum), start=1):
            fh.write(f"{k},{v!r},{v / rep.total_variance!r},{c!r}\n")
    report_path = out_dir / f"{stem}_effdim.json"
    report_path.write_text(json.dumps(out, sort_keys=True, indent=2) + "\n")
    out["outputs"] = [str(report_path), str(spec_path)]
    text = (f"d_eff = {rep.d_eff_mean:g} +/- {rep.d_eff_std:g} over {rep.subsample_count} subsamples "
            f"(threshold {rep.variance_threshold}, ambient {rep.ambient_dim})")
    if fmt == "cifar":
        text += (f"\nreference value {CIFAR_REFERENCE['d_eff_mean']:g} +/- {CIFAR_REFERENCE['d_eff_std']:g}"
                 f" ({'consistent' if out['matches_reference'] else 'mismatch'})")
    _emit(args, out, text)
    return EXIT_OK


def cmd_run(args) -> int:
    overrides = {"seed": _resolve_seed(args), "threads": args.threads, "output_dir": args.out_dir}
    if args.config:
        if not Path(args.config).exists():
            raise UsageError(f"--config: no such file {args.config}")
        cfg = ExperimentConfig.from_file(args.config, args.experiment, overrides)
    else:
        cfg = ExperimentConfig.from_mapping({"experiment": args.experiment}, overrides)
    result = run_experiment(cfg)
    paths = result.write()
    summary = result.summary()
    summary["outputs"] = [str(p) for p in paths]
    lines = [f"experiment {result.name}: {'ok' if result.passed else 'INVARIANT FAILURE'}"]
    for name, fit in sorted(result.fits.items()):
        if fit is not None:
            lines.append(f"  fit {name}: slope {fit.slope:.4f}, R^2 {fit.r_squared:.4f}, points {fit.n_points}")
    for c in result.checks:
        lines.append(f"  [{'pass' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
    lines += [f"  wrote {p}" for p in paths]
    _emit(args, summary, "\n".join(lines))
    return EXIT_OK if result.passed else EXIT_GATE


def cmd_fit(args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise UsageError(f"--input: no such file {path}")
    pts = read_csv_matrix(path)
    if pts.shape[1] != 2:
        raise UsageError(f"--input: expected 2 columns (spikes, error), got {pts.shape[1]}")
    if pts.shape[0] < 2:
        raise UsageError(f"--input: need at least 2 rows, got {pts.shape[0]}")
    fit = fit_scaling_law([tuple(r) for r in pts])
    _emit(args, fit.to_dict(),
          f"slope {fit.slope:.6g}\nintercept {fit.intercept:.6g}\nR^2 {fit.r_squared:.6g}\npoints {fit.n_points}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print exactly one JSON document")
    common.add_argument("--seed", type=int, default=None,
                        help=f"base seed (default: ${SEED_ENV} or 0)")
    common.add_argument("--threads", type=int, default=None, help="cap on worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="spikebench", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", parents=[common], help="spike, energy and timestep bounds")
    b.add_argument("--lf", type=float, required=True, help="Lipschitz constant L_f")
    b.add_argument("--n", type=int, required=True, help="sequence length")
    b.add_argument("--d", type=int, required=True, help="feature dimension")
    b.add_argument("--eps", type=float, required=True, help="target error in (0,1)")
    b.add_argument("--deff", type=float, default=None, help="effective dimension")
    b.add_argument("--esop", type=float, default=E_SOP_JOULES, help="energy per synaptic op in joules")
    b.add_argument("--C", type=float, default=DESIGN_C, help="design-rule constant")
    b.set_defaults(func=cmd_bounds)

    e = sub.add_parser("effdim", parents=[common], help="effective dimension of a dataset")
    e.add_argument("--input", required=True, help="CSV file, CIFAR-10 batch file or directory")
    e.add_argument("--format", choices=("auto", "csv", "cifar"), default="auto")
    e.add_argument("--threshold", type=float, default=0.95)
    e.add_argument("--subsamples", type=int, default=5)
    e.add_argument("--fraction", type=float, default=0.8)
    e.add_argument("--out-dir", default=".", help="where the report and spectrum CSV go")
    e.set_defaults(func=cmd_effdim)

    r = sub.add_parser("run", parents=[common], help="run an experiment")
    r.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    r.add_argument("--config", default=None, help="sectioned key=value config file")
    r.add_argument("--out-dir", default=None, help="override output_dir")
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("fit", parents=[common], help="log-log fit of error vs spikes")
    f.add_argument("--input", required=True, help="CSV of (spikes, error) rows")
    f.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, SpikeBenchError, FileNotFoundError) as e:
        msg = str(e) if not isinstance(e, FileNotFoundError) else f"no such file {e.filename or e}"
        print(f"spikebench {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
