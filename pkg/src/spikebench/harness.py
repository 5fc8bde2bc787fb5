"""Experiment runners: Task-1 circuit attention, WTA convergence, encoding
concentration and the spike-vs-accuracy search.

Every runner returns an :class:`ExperimentResult` whose tables and summary
serialize deterministically: identical configs give byte-identical files.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .analysis import BoundInputs, ScalingFit, fit_scaling_law, lower_bound_spikes
from .attention import circuit_attention, float_attention_oracle
from .circuits import WtaConfig, wta_counts
from .core import chernoff_T0, chernoff_tail, concentration_trial, derive_seed, make_rng
from .errors import DomainError

EXPERIMENTS = ("task1", "wta", "concentration", "spike-accuracy")
T_CAP = 1 << 18


def _ints(text) -> tuple[int, ...]:
    return tuple(int(float(v)) for v in str(text).replace(",", " ").split())


def _floats(text) -> tuple[float, ...]:
    return tuple(float(v) for v in str(text).replace(",", " ").split())


@dataclass
class ExperimentConfig:
    """Settings for one experiment; unused fields are ignored by a runner."""

    experiment: str = "task1"
    seed: int = 0
    seeds: tuple[int, ...] = tuple(range(10))
    n: int = 16
    d: int = 32
    T_grid: tuple[int, ...] = (4, 8, 16, 32, 64)
    backend: str = "counts"
    n_grid: tuple[int, ...] = (4, 8, 16, 32)
    trials: int = 20
    x_grid: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    delta_grid: tuple[float, ...] = (0.02, 0.05, 0.1, 0.2)
    rho: float = 0.0
    epsilon_targets: tuple[float, ...] = (0.2, 0.1, 0.05, 0.02, 0.01)
    lipschitz: float = 1.0
    T_cap: int = T_CAP
    output_dir: str = "results"
    threads: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise DomainError(f"unknown experiment {self.experiment!r}; valid: {', '.join(EXPERIMENTS)}")
        for name in ("seeds", "T_grid", "n_grid", "x_grid", "delta_grid", "epsilon_targets"):
            if len(getattr(self, name)) == 0:
                raise DomainError(f"{name} must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise DomainError("seeds must be distinct")
        if any(T < 1 for T in self.T_grid):
            raise DomainError("T_grid entries must be positive")
        if list(self.T_grid) != sorted(set(self.T_grid)):
            raise DomainError("T_grid must be strictly ascending")
        if self.trials < 1 or self.threads < 1:
            raise DomainError("trials and threads must be >= 1")
        if not (1 <= self.T_cap <= T_CAP):
            raise DomainError(f"T_cap must be in [1, {T_CAP}]")

    @classmethod
    def defaults(cls, experiment: str) -> ExperimentConfig:
        """Reference settings per experiment."""
        per = {
            "task1": {},
            "wta": {"T_grid": tuple(1 << k for k in range(8, 17)), "trials": 50},
            "concentration": {"T_grid": (64, 256, 1024, 4096, 16384), "trials": 10_000},
            "spike-accuracy": {},
        }
        if experiment not in per:
            raise DomainError(f"unknown experiment {experiment!r}; valid: {', '.join(EXPERIMENTS)}")
        return cls(experiment=experiment, **per[experiment])

    @classmethod
    def from_file(cls, path, experiment: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
        """Read a sectioned key=value file.

        Keys in ``[run]`` apply to every experiment; a section named after the
        experiment overrides them; ``overrides`` (from flags) win over both.
        """
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(path)
        try:
            parser.read(path)
        except configparser.Error as e:
            raise DomainError(f"{path}: {e}") from None
        raw = dict(parser["run"]) if parser.has_section("run") else {}
        experiment = experiment or raw.get("experiment", "task1")
        if parser.has_section(experiment):
            raw.update(parser[experiment])
        raw["experiment"] = experiment
        return cls.from_mapping(raw, overrides)

    @classmethod
    def from_mapping(cls, raw: dict, overrides: dict | None = None) -> ExperimentConfig:
        raw = dict(raw)
        raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
        experiment = raw.get("experiment", "task1")
        base = asdict(cls.defaults(experiment))
        known = {f.name: f for f in fields(cls)}
        for key, value in raw.items():
            if key not in known:
                raise DomainError(f"unknown config key {key!r}")
            cur = base[key]
            try:
                if isinstance(cur, tuple):
                    conv = _floats if cur and isinstance(cur[0], float) else _ints
                    base[key] = conv(value) if isinstance(value, str) else tuple(value)
                elif isinstance(cur, bool):
                    base[key] = str(value).lower() in ("1", "true", "yes")
                elif isinstance(cur, int):
                    base[key] = int(value)
                elif isinstance(cur, float):
                    base[key] = float(value)
                else:
                    base[key] = str(value)
            except ValueError:
                raise DomainError(f"config key {key!r}: cannot parse {value!r}") from None
        return cls(**base)

    def trial_seed(self, s: int) -> int:
        return derive_seed(self.seed, "trial", s)


@dataclass
class ExperimentRow:
    """One Task-1 grid point, aggregated over seeds."""

    T: int
    mse: float
    mse_median: float
    error: float
    stderr: float
    spikes_used: float
    n_runs: int


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class ExperimentResult:
    name: str
    config: ExperimentConfig
    columns: list[str]
    rows: list[dict]
    fits: dict[str, ScalingFit | None] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(row[c]) for c in self.columns])
        return buf.getvalue()

    def summary(self) -> dict:
        from . import __version__

        return {
            "experiment": self.name,
            "config": _jsonable(asdict(self.config)),
            "fits": {k: (None if v is None else v.to_dict()) for k, v in sorted(self.fits.items())},
            "checks": [asdict(c) for c in self.checks],
            "passed": self.passed,
            "extra": _jsonable(self.extra),
            "versions": {"artifact": __version__, "numpy": np.__version__},
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2) + "\n"

    def write(self, out_dir=None) -> list[Path]:
        out = Path(out_dir or self.config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = self.name.replace("-", "_")
        paths = [out / f"{stem}.csv", out / f"{stem}_summary.json"]
        paths[0].write_text(self.table_csv())
        paths[1].write_text(self.summary_json())
        return paths


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _pool_map(fn: Callable, tasks: Sequence, threads: int) -> list:
    """Map in task order, optionally on a process pool."""
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, tasks))


def _safe_fit(points) -> ScalingFit | None:
    pts = [(x, y) for x, y in points if x > 0 and y > 0]
    if len(pts) < 2 or len({x for x, _ in pts}) < 2:
        return None
    return fit_scaling_law(pts)


# --------------------------------------------------------------------------
# Task 1: circuit attention vs the float oracle
# --------------------------------------------------------------------------

def task1_input(cfg: ExperimentConfig, s: int) -> np.ndarray:
    return make_rng(derive_seed(cfg.seed, "X", s)).random((cfg.n, cfg.d))


def _task1_trial(args) -> tuple[float, int]:
    cfg, T, s = args
    X = task1_input(cfg, s)
    out = circuit_attention(X, None, T, seed=cfg.trial_seed(s), backend=cfg.backend)
    mse = float(np.mean((out.rates - float_attention_oracle(X)) ** 2))
    return mse, out.spikes_used


def task1_point(cfg: ExperimentConfig, T: int) -> ExperimentRow:
    res = _pool_map(_task1_trial, [(cfg, T, s) for s in cfg.seeds], cfg.threads)
    mses = np.array([r[0] for r in res])
    spikes = np.array([r[1] for r in res], dtype=float)
    k = len(mses)
    return ExperimentRow(
        T=int(T),
        mse=float(mses.mean()),
        mse_median=float(np.median(mses)),
        error=float(math.sqrt(mses.mean())),
        stderr=float(mses.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0,
        spikes_used=float(spikes.mean()),
        n_runs=k,
    )


def run_task1(cfg: ExperimentConfig) -> ExperimentResult:
    """softmax(X X^T) X on X ~ U([0,1]^{n x d}) with identity projections."""
    rows = [task1_point(cfg, T) for T in cfg.T_grid]
    fits = {
        "error_vs_spikes": _safe_fit([(r.spikes_used, r.error) for r in rows]),
        "error_vs_T": _safe_fit([(r.T, r.error) for r in rows]),
        "mse_vs_T": _safe_fit([(r.T, r.mse) for r in rows]),
    }
    checks = []
    med = [r.mse_median for r in rows]
    if len(rows) > 1:
        mono = all(b < a for a, b in zip(med, med[1:]))
        checks.append(Check("median_mse_strictly_decreasing", mono, f"median mse {med}"))
    f = fits["error_vs_spikes"]
    if f is not None:
        checks.append(Check("error_vs_spikes_slope_in_[-1.1,-0.35]", -1.1 <= f.slope <= -0.35,
                            f"slope {f.slope:.4f}"))
    for name, fit in fits.items():
        if fit is not None:
            checks.append(Check(f"{name}_fit_well_formed",
                                0 <= fit.r_squared <= 1 and fit.n_points == len(rows),
                                f"r2 {fit.r_squared:.4f}, points {fit.n_points}"))
    cols = [f.name for f in fields(ExperimentRow)]
    return ExperimentResult("task1", cfg, cols, [asdict(r) for r in rows], fits, checks)


# --------------------------------------------------------------------------
# WTA convergence
# --------------------------------------------------------------------------

def wta_errors(n: int, T: int, trials: int, seed: int, rates: np.ndarray | None = None) -> np.ndarray:
    """Max-abs error of the pool's normalized counts, one value per trial.

    Input rates are drawn from U(0.1, 1) per trial unless given (shape
    (trials, n)); the target is e_i / sum_j e_j.
    """
    if rates is None:
        rates = make_rng(derive_seed(seed, "rates", n)).uniform(0.1, 1.0, size=(trials, n))
    rates = np.asarray(rates, dtype=np.float64).reshape(trials, n)
    rng = make_rng(derive_seed(seed, "drive", n, T))
    errs = np.empty(trials)
    cfg = WtaConfig(n=n, T=T)
    chunk = max(1, (1 << 24) // (n * T))
    for start in range(0, trials, chunk):
        r = rates[start:start + chunk]
        drive = rng.random((r.shape[0], n, T)) < r[:, :, None]
        counts, _ = wta_counts(drive, cfg)
        tot = counts.sum(axis=1, keepdims=True)
        alpha = np.divide(counts, tot, out=np.full(counts.shape, 1.0 / n), where=tot > 0)
        target = r / r.sum(axis=1, keepdims=True)
        errs[start:start + r.shape[0]] = np.abs(alpha - target).max(axis=1)
    return errs


def _wta_cell(args):
    n, T, trials, seed = args
    return wta_errors(n, T, trials, seed)


def run_wta_convergence(
    n_grid: Sequence[int],
    T_grid: Sequence[int],
    trials: int,
    seed: int = 0,
    threads: int = 1,
    cfg: ExperimentConfig | None = None,
) -> ExperimentResult:
    """Error table over (n, T) with a log-log fit of mean error vs T per n."""
    if not n_grid or not T_grid:
        raise DomainError("n_grid and T_grid must be nonempty")
    cfg = cfg or ExperimentConfig(experiment="wta", n_grid=tuple(n_grid), T_grid=tuple(T_grid),
                                  trials=trials, seed=seed, threads=threads)
    cells = [(n, T) for n in n_grid for T in T_grid]
    errs = _pool_map(_wta_cell, [(n, T, trials, seed) for n, T in cells], threads)
    rows, table = [], {}
    for (n, T), e in zip(cells, errs):
        table[n, T] = float(e.mean())
        rows.append({"n": n, "T": T, "error_mean": float(e.mean()), "error_median": float(np.median(e)),
                     "error_max": float(e.max()), "trials": trials})
    fits = {f"n={n}": _safe_fit([(T, table[n, T]) for T in T_grid]) for n in n_grid}
    checks = []
    for n in n_grid:
        f = fits[f"n={n}"]
        if f is not None:
            checks.append(Check(f"slope_n={n}_in_[-0.65,-0.35]", -0.65 <= f.slope <= -0.35, f"slope {f.slope:.4f}"))
    ns = sorted(n_grid)
    growth = {}
    for a, b in zip(ns, ns[1:]):
        if b == 2 * a:
            ratio = float(np.median([table[b, T] / table[a, T] for T in T_grid]))
            growth[f"{b}/{a}"] = ratio
            checks.append(Check(f"growth_{b}/{a}_le_2.5", ratio <= 2.5, f"median ratio {ratio:.4f}"))
    return ExperimentResult("wta", cfg, ["n", "T", "error_mean", "error_median", "error_max", "trials"],
                            rows, fits, checks, {"growth_ratios": growth})


# --------------------------------------------------------------------------
# encoding concentration
# --------------------------------------------------------------------------

def _conc_cell(args):
    x, T, trials, seed, deltas, rho = args
    return concentration_trial(x, T, trials, seed, deltas, rho)


def run_encoding_concentration(cfg: ExperimentConfig) -> ExperimentResult:
    """Observed tail P[|rate - x| > delta] against the Chernoff bound.

    Cells with T at or above ln(2/delta) / (2 delta^2) must show a tail below
    delta.
    """
    cells = [(ix, x, T) for ix, x in enumerate(cfg.x_grid) for T in cfg.T_grid]
    tasks = [(x, T, cfg.trials, derive_seed(cfg.seed, "conc", ix, T), cfg.delta_grid, cfg.rho)
             for ix, x, T in cells]
    tails = _pool_map(_conc_cell, tasks, cfg.threads)
    rows = []
    bad = []
    for (ix, x, T), tail in zip(cells, tails):
        for delta in cfg.delta_grid:
            t0 = chernoff_T0(delta)["explicit"] if delta < 2 else 0.0
            applies = T >= t0
            obs = tail[float(delta)]
            ok = (obs < delta) if applies else True
            if not ok:
                bad.append((x, T, delta, obs))
            rows.append({"x": float(x), "T": T, "delta": float(delta), "observed_tail": obs,
                         "chernoff_bound": min(1.0, chernoff_tail(T, delta)), "T0_explicit": t0,
                         "bound_applies": applies, "passes": ok})
    n_app = sum(r["bound_applies"] for r in rows)
    checks = [Check("tail_below_delta_when_T_ge_T0", not bad, f"{n_app} cells checked, failures {bad}")]
    cols = ["x", "T", "delta", "observed_tail", "chernoff_bound", "T0_explicit", "bound_applies", "passes"]
    return ExperimentResult("concentration", cfg, cols, rows, {}, checks)


# --------------------------------------------------------------------------
# spikes needed for a target accuracy
# --------------------------------------------------------------------------

def _rmse_trial(args) -> tuple[float, int]:
    mse, spikes = _task1_trial(args)
    return math.sqrt(mse), spikes


class _Task1Cache:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.seen: dict[int, tuple[float, float]] = {}

    def __call__(self, T: int) -> tuple[float, float]:
        if T not in self.seen:
            res = _pool_map(_rmse_trial, [(self.cfg, T, s) for s in self.cfg.seeds], self.cfg.threads)
            self.seen[T] = (float(np.median([r[0] for r in res])), float(np.median([r[1] for r in res])))
        return self.seen[T]


def run_spike_accuracy(epsilon_targets: Sequence[float], cfg: ExperimentConfig) -> ExperimentResult:
    """Smallest T whose median Task-1 RMSE is <= eps, with its spike count.

    T doubles from 1 (or the previous answer) up to ``cfg.T_cap``, then eight
    evenly spaced points between the last failing and first passing power of
    two refine it. Targets that stay out of reach are reported as saturated.
    """
    eps = [float(e) for e in epsilon_targets]
    if not eps or any(not (0 < e < 1) for e in eps):
        raise DomainError("epsilon targets must lie in (0,1)")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise DomainError("epsilon targets must be strictly descending")
    evaluate = _Task1Cache(cfg)
    rows = []
    start = 1
    for e in eps:
        T, hit = start, None
        while T <= cfg.T_cap:
            if evaluate(T)[0] <= e:
                hit = T
                break
            T *= 2
        if hit is None:
            T_found, saturated = cfg.T_cap, True
        else:
            T_found, saturated = hit, False
            lo = hit // 2 if hit > start else hit
            step = max(1, (hit - lo) // 8)
            for cand in range(lo + step, hit, step):
                if evaluate(cand)[0] <= e:
                    T_found = cand
                    break
        err, spikes = evaluate(T_found)
        bound = lower_bound_spikes(BoundInputs(cfg.lipschitz, cfg.n, cfg.d, e))
        rows.append({"epsilon": e, "T": T_found, "median_error": err, "measured_spikes": spikes,
                     "bound": bound, "ratio": spikes / bound, "saturated": saturated})
        start = T_found
    checks = []
    live = [r for r in rows if not r["saturated"]]
    if len(live) > 1:
        sp = [r["measured_spikes"] for r in live]
        checks.append(Check("measured_spikes_nondecreasing", all(b >= a for a, b in zip(sp, sp[1:])),
                            f"spikes {sp}"))
    fit = _safe_fit([(1.0 / r["epsilon"], r["ratio"]) for r in live])
    if fit is not None:
        checks.append(Check("ratio_trend_nonincreasing", fit.slope <= 0, f"log-log slope {fit.slope:.4f}"))
    extra = {"ratio_trend_slope": None if fit is None else fit.slope,
             "evaluated_T": sorted(evaluate.seen)}
    cols = ["epsilon", "T", "median_error", "measured_spikes", "bound", "ratio", "saturated"]
    return ExperimentResult("spike-accuracy", cfg, cols, rows, {"ratio_vs_inv_eps": fit}, checks, extra)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    if cfg.experiment == "task1":
        return run_task1(cfg)
    if cfg.experiment == "wta":
        return run_wta_convergence(cfg.n_grid, cfg.T_grid, cfg.trials, cfg.seed, cfg.threads, cfg)
    if cfg.experiment == "concentration":
        return run_encoding_concentration(cfg)
    return run_spike_accuracy(cfg.epsilon_targets, cfg)
