"""Closed-form spike/energy bounds, effective dimension, empirical Lipschitz
constants and log-log scaling fits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import derive_seed, make_rng
from .errors import DegenerateInputError, DomainError

E_SOP_JOULES = 0.2e-12
DESIGN_C = 2.3
DESIGN_C_CI = (1.9, 2.7)
BOUND_CONVENTION = "order bound, constant convention: 1"


def _ceil_count(v: float) -> int:
    # formula values such as 1 * 512 / 0.1**2 land a few ulps above an integer
    r = round(v)
    if abs(v - r) <= 1e-9 * max(1.0, abs(v)):
        return int(r)
    return math.ceil(v)


def _check_eps(epsilon: float, name: str = "eps") -> float:
    if not (0.0 < epsilon < 1.0):
        raise DomainError(f"{name} must be in (0,1), got {epsilon}")
    return float(epsilon)


# --------------------------------------------------------------------------
# bounds
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundInputs:
    L_f: float
    n: int
    d: int
    epsilon: float
    d_eff: float | None = None

    def __post_init__(self):
        if not (self.L_f > 0 and math.isfinite(self.L_f)):
            raise DomainError(f"lf must be positive, got {self.L_f}")
        if self.n < 1 or self.d < 1:
            raise DomainError("n and d must be positive")
        _check_eps(self.epsilon)
        if self.d_eff is not None:
            if not (self.d_eff > 0):
                raise DomainError(f"deff must be positive, got {self.d_eff}")
            if self.d_eff > self.nd:
                raise DomainError(f"deff = {self.d_eff} exceeds n*d = {self.nd}")

    @property
    def nd(self) -> int:
        return self.n * self.d


def lower_bound_spikes(inputs: BoundInputs) -> int:
    """ceil(L_f^2 n d / eps^2), the worst-case spike count with constant 1."""
    return _ceil_count(inputs.L_f**2 * inputs.nd / inputs.epsilon**2)


def input_dependent_bound(inputs: BoundInputs) -> int:
    """ceil(L_f^2 d_eff / eps^2): the worst case with n*d replaced by d_eff."""
    if inputs.d_eff is None:
        raise DomainError("input-dependent bound needs d_eff")
    return _ceil_count(inputs.L_f**2 * inputs.d_eff / inputs.epsilon**2)


def compression_ratio(nd: float, d_eff: float) -> float:
    if d_eff <= 0 or nd <= 0:
        raise DomainError("nd and d_eff must be positive")
    return nd / d_eff


def energy_estimate(spikes: float, e_sop: float = E_SOP_JOULES) -> float:
    """Energy in joules of ``spikes`` synaptic operations at ``e_sop`` J each."""
    if spikes < 0 or e_sop < 0:
        raise DomainError("spikes and e_sop must be nonnegative")
    return spikes * e_sop


def design_rule_T(d_eff: float, epsilon: float, C: float = DESIGN_C) -> int:
    """Timestep rule ceil(C d_eff / eps^2)."""
    if not d_eff >= 1:
        raise DomainError(f"deff must be >= 1, got {d_eff}")
    _check_eps(epsilon)
    if not C > 0:
        raise DomainError(f"C must be positive, got {C}")
    return _ceil_count(C * d_eff / epsilon**2)


@dataclass
class BoundReport:
    worst_case_spikes: int
    input_dependent_spikes: int | None
    energy_joules: float
    input_dependent_energy_joules: float | None
    recommended_T: int
    constant_C: float
    constant_C_ci: tuple[float, float]
    e_sop_joules: float
    convention: str = BOUND_CONVENTION
    inputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["constant_C_ci"] = list(self.constant_C_ci)
        out["units"] = {"energy_joules": "J", "e_sop_joules": "J", "recommended_T": "timesteps"}
        return out


def compute_bounds(inputs: BoundInputs, C: float = DESIGN_C, e_sop: float = E_SOP_JOULES) -> BoundReport:
    worst = lower_bound_spikes(inputs)
    dep = input_dependent_bound(inputs) if inputs.d_eff is not None else None
    d_for_T = inputs.d_eff if inputs.d_eff is not None else inputs.nd
    return BoundReport(
        worst_case_spikes=worst,
        input_dependent_spikes=dep,
        energy_joules=energy_estimate(worst, e_sop),
        input_dependent_energy_joules=None if dep is None else energy_estimate(dep, e_sop),
        recommended_T=design_rule_T(max(1.0, d_for_T), inputs.epsilon, C),
        constant_C=C,
        constant_C_ci=DESIGN_C_CI,
        e_sop_joules=e_sop,
        inputs=asdict(inputs),
    )


# --------------------------------------------------------------------------
# effective dimension
# --------------------------------------------------------------------------

EXACT_PCA_MAX_FEATURES = 4096


def randomized_svd_values(A: np.ndarray, k: int, rng: np.random.Generator,
                          oversample: int = 10, power_iters: int = 2) -> np.ndarray:
    """Top-k singular values by a randomized range finder with power iterations."""
    m, p = A.shape
    ell = min(k + oversample, m, p)
    Y = A @ rng.standard_normal((p, ell))
    Qm, _ = np.linalg.qr(Y)
    for _ in range(power_iters):
        Z, _ = np.linalg.qr(A.T @ Qm)
        Qm, _ = np.linalg.qr(A @ Z)
    s = np.linalg.svd(Qm.T @ A, compute_uv=False)
    return s[:k]


_CHUNK_ROWS = 4096


def _rows_f64(X, rows, lo, hi, scale):
    idx = slice(lo, hi) if rows is None else rows[lo:hi]
    return np.asarray(X[idx], dtype=np.float64) * scale


def pca_spectrum(data, threshold: float = 0.95, seed: int = 0, rows=None, scale: float = 1.0):
    """Per-component variances (descending) and the total variance.

    Columns are mean-centered and not rescaled. Up to 4096 features the
    spectrum is exact (eigenvalues of the smaller Gram matrix, accumulated in
    row chunks so large integer inputs are never copied whole to float64);
    above that a randomized range finder grows its rank until the captured
    variance reaches ``threshold``, so the returned spectrum may be truncated.
    ``rows`` restricts the computation to a subset of samples and ``scale``
    multiplies the data.
    """
    X = np.asarray(data)
    if X.ndim != 2 or X.shape[1] < 1:
        raise DomainError("data must be a (samples, features) matrix")
    m = X.shape[0] if rows is None else len(rows)
    p = X.shape[1]
    if m < 2:
        raise DomainError("need at least 2 samples")
    chunks = [(lo, min(lo + _CHUNK_ROWS, m)) for lo in range(0, m, _CHUNK_ROWS)]
    mean = sum(_rows_f64(X, rows, lo, hi, scale).sum(axis=0) for lo, hi in chunks) / m
    if p <= EXACT_PCA_MAX_FEATURES and m >= p:
        G = np.zeros((p, p))
        for lo, hi in chunks:
            c = _rows_f64(X, rows, lo, hi, scale) - mean
            G += c.T @ c
        total = float(np.trace(G)) / (m - 1)
        if not total > 0:
            raise DegenerateInputError("data has zero variance (rank 0)")
        ev = np.linalg.eigvalsh(G)[::-1] / (m - 1)
        return np.clip(ev, 0.0, None), total, "exact"
    Xc = _rows_f64(X, rows, 0, m, scale) - mean
    total = float(np.einsum("ij,ij->", Xc, Xc)) / (m - 1)
    if not total > 0:
        raise DegenerateInputError("data has zero variance (rank 0)")
    if p <= EXACT_PCA_MAX_FEATURES:
        ev = np.linalg.eigvalsh(Xc @ Xc.T)[::-1] / (m - 1)
        return np.clip(ev, 0.0, None), total, "exact"
    rng = make_rng(derive_seed(seed, "rsvd"))
    k = 64
    while True:
        k = min(k, m, p)
        s = randomized_svd_values(Xc, k, rng)
        ev = s**2 / (m - 1)
        if ev.sum() >= threshold * total or k == min(m, p):
            return ev, total, "randomized"
        k *= 2


def components_for_threshold(spectrum: np.ndarray, total: float, threshold: float) -> int:
    """Smallest k whose cumulative explained variance ratio is >= threshold."""
    ratio = np.cumsum(spectrum) / total
    hit = np.nonzero(ratio >= threshold - 1e-12)[0]
    if hit.size == 0:
        return int(spectrum.size)
    return int(hit[0]) + 1


@dataclass
class EffDimReport:
    d_eff_mean: float
    d_eff_std: float
    d_eff_samples: list[int]
    d_eff_full: int
    variance_threshold: float
    subsample_fraction: float
    subsample_count: int
    ambient_dim: int
    total_variance: float
    spectrum: np.ndarray
    method: str

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("spectrum")
        out["explained_variance_ratio_head"] = (self.spectrum[:10] / self.total_variance).tolist()
        return out


def effective_dimension(
    data,
    threshold: float = 0.95,
    subsamples: int = 5,
    fraction: float = 0.8,
    seed: int = 0,
    scale: float = 1.0,
) -> EffDimReport:
    """Components needed for ``threshold`` of the variance, over random subsamples.

    Each of ``subsamples`` runs keeps a random ``fraction`` of the rows
    (without replacement); the report carries mean and population std of the
    per-run counts and the spectrum of the full data. ``scale`` multiplies
    the data (e.g. 1/255 for raw pixels) without copying it.
    """
    if not (0 < threshold <= 1):
        raise DomainError(f"threshold must be in (0,1], got {threshold}")
    if not (0 < fraction <= 1):
        raise DomainError(f"fraction must be in (0,1], got {fraction}")
    if subsamples < 1:
        raise DomainError("subsamples must be >= 1")
    X = np.asarray(data)
    if not np.issubdtype(X.dtype, np.number):
        X = X.astype(np.float64)
    spectrum, total, method = pca_spectrum(X, threshold, seed, scale=scale)
    full = components_for_threshold(spectrum, total, threshold)
    m = X.shape[0]
    keep = max(2, int(round(fraction * m)))
    counts = []
    for s in range(subsamples):
        rng = make_rng(derive_seed(seed, "subsample", s))
        rows = np.sort(rng.choice(m, size=keep, replace=False))
        sp, tot, _ = pca_spectrum(X, threshold, derive_seed(seed, "rsvd-sub", s), rows=rows, scale=scale)
        counts.append(components_for_threshold(sp, tot, threshold))
    arr = np.array(counts, dtype=float)
    return EffDimReport(
        d_eff_mean=float(arr.mean()),
        d_eff_std=float(arr.std()),
        d_eff_samples=counts,
        d_eff_full=full,
        variance_threshold=threshold,
        subsample_fraction=fraction,
        subsample_count=subsamples,
        ambient_dim=int(X.shape[1]),
        total_variance=total,
        spectrum=spectrum,
        method=method,
    )


# --------------------------------------------------------------------------
# Lipschitz constant
# --------------------------------------------------------------------------

def estimate_lipschitz(
    f: Callable[[np.ndarray], np.ndarray],
    sampler: Callable[[np.random.Generator], np.ndarray],
    pairs: int,
    seed: int = 0,
) -> float:
    """Max of ||f(x) - f(y)||_F / ||x - y||_F over sampled pairs.

    This is a lower estimate of the true constant. Pair k draws from its own
    sub-seed, so a run with more pairs extends a run with fewer and the
    estimate can only grow. Coincident pairs are skipped.
    """
    if pairs < 1:
        raise DomainError("pairs must be >= 1")
    best = None
    for k in range(int(pairs)):
        rng = make_rng(derive_seed(seed, "pair", k))
        x, y = sampler(rng), sampler(rng)
        den = np.linalg.norm(np.asarray(x) - np.asarray(y))
        if den == 0:
            continue
        ratio = float(np.linalg.norm(np.asarray(f(x)) - np.asarray(f(y))) / den)
        best = ratio if best is None else max(best, ratio)
    if best is None:
        raise DegenerateInputError("every sampled pair was coincident")
    return best


# --------------------------------------------------------------------------
# scaling law
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int

    def to_dict(self) -> dict:
        return asdict(self)

    def predict(self, x: float) -> float:
        return math.exp(self.intercept) * x**self.slope


def fit_scaling_law(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """OLS of log(error) on log(count); slope, intercept and R^2."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise DomainError("need at least two (count, error) points")
    if not np.all(np.isfinite(pts)) or np.any(pts <= 0):
        raise DomainError("scaling-law points must be positive and finite")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(x) == 0:
        raise DomainError("all points share one count; slope undefined")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return ScalingFit(float(slope), float(intercept), float(min(1.0, max(0.0, r2))), int(pts.shape[0]))
