"""Spiking self-attention (Spikformer style), the circuit-built softmax
attention block, and the exact float reference."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .circuits import (
    SoftmaxConfig,
    WtaConfig,
    _Stages,
    _alpha_estimates,
    _check_backend,
    _exponentials,
    _logit_estimates,
    _wta_drive,
    logit_range,
    wta_counts,
)
from .core import (
    LifParams,
    SpikeTensor,
    _check_T,
    content_id,
    derive_seed,
    encode_rate,
    lif_run,
    make_rng,
)
from .errors import DomainError


@dataclass(frozen=True)
class AttentionWeights:
    """Projection matrices W_Q, W_K, W_V, each d x d_k."""

    W_Q: np.ndarray
    W_K: np.ndarray
    W_V: np.ndarray

    def __post_init__(self):
        mats = [np.asarray(m, dtype=np.float64) for m in (self.W_Q, self.W_K, self.W_V)]
        if any(m.ndim != 2 for m in mats) or len({m.shape for m in mats}) != 1:
            raise DomainError("W_Q, W_K, W_V must be 2-D with identical shapes")
        if not all(np.all(np.isfinite(m)) for m in mats):
            raise DomainError("weights must be finite")
        for name, m in zip(("W_Q", "W_K", "W_V"), mats):
            m.flags.writeable = False
            object.__setattr__(self, name, m)

    @property
    def d(self) -> int:
        return self.W_Q.shape[0]

    @property
    def d_k(self) -> int:
        return self.W_Q.shape[1]

    @classmethod
    def identity(cls, d: int) -> AttentionWeights:
        eye = np.eye(d)
        return cls(eye, eye, eye)

    @classmethod
    def random(cls, d: int, d_k: int, seed: int = 0, scale: float | None = None) -> AttentionWeights:
        rng = make_rng(derive_seed(seed, "weights"))
        s = 1.0 / np.sqrt(d) if scale is None else scale
        return cls(*(rng.normal(0.0, s, size=(d, d_k)) for _ in range(3)))


@dataclass
class AttentionOutput:
    """Time-averaged output rates plus spike bookkeeping.

    ``attention`` is the score matrix of the op: A for :func:`ssa_forward`,
    the estimated softmax weights for :func:`circuit_attention`.
    """

    rates: np.ndarray
    spikes: SpikeTensor | None
    spikes_used: int
    attention: np.ndarray
    spikes_by_stage: dict[str, int] = field(default_factory=dict)

    def to_csv(self) -> str:
        return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in self.rates)

    def metadata(self, **extra) -> str:
        meta = {"shape": list(self.rates.shape), "spikes_used": int(self.spikes_used),
                "spikes_by_stage": {k: int(v) for k, v in self.spikes_by_stage.items()}}
        meta.update(extra)
        return json.dumps(meta, sort_keys=True)


def _check_X(X, unit: bool) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise DomainError("X must be a non-empty (n, d) matrix")
    if not np.all(np.isfinite(X)):
        raise DomainError("X must be finite")
    if unit and not np.all((X >= 0) & (X <= 1)):
        raise DomainError("X entries must lie in [0,1]")
    return X


def _project(X: np.ndarray, weights: AttentionWeights | None):
    if weights is None:
        return X, X, X
    if weights.d != X.shape[1]:
        raise DomainError(f"weights expect d = {weights.d}, X has d = {X.shape[1]}")
    return X @ weights.W_Q, X @ weights.W_K, X @ weights.W_V


# --------------------------------------------------------------------------
# float reference
# --------------------------------------------------------------------------

def softmax_rows(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=-1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=-1, keepdims=True)


def float_attention_oracle(X, weights: AttentionWeights | None = None) -> np.ndarray:
    """softmax(Q K^T) V in float64; identity weights when ``weights`` is None."""
    X = _check_X(X, unit=False)
    Q, K, V = _project(X, weights)
    return softmax_rows(Q @ K.T) @ V


# --------------------------------------------------------------------------
# Spikformer-style SSA
# --------------------------------------------------------------------------

def ssa_forward(
    S_X: SpikeTensor,
    weights: AttentionWeights,
    params: LifParams | None = None,
    out_scale: float | None = None,
) -> AttentionOutput:
    """One spiking self-attention block on an input spike tensor.

    S^Q, S^K, S^V are LIF layers (state carried over time, weights shared
    across timesteps) fed with S^X_t W. A is the time average of the binary
    products S^Q_t (S^K_t)^T, so 0 <= A <= d_k. The output layer receives the
    constant current A @ mean_t(S^V) / out_scale for T steps; out_scale
    defaults to d_k, which keeps the current within [0, d_k].
    """
    params = params or LifParams()
    n, d, T = S_X.shape
    if weights.d != d:
        raise DomainError(f"weights expect d = {weights.d}, S_X has d = {d}")
    d_k = weights.d_k
    scale = float(d_k if out_scale is None else out_scale)
    if not scale > 0:
        raise DomainError("out_scale must be positive")
    bits = S_X.bits.astype(np.float64)
    layers = {}
    for name, W in (("q", weights.W_Q), ("k", weights.W_K), ("v", weights.W_V)):
        current = np.einsum("idt,dk->ikt", bits, W)
        layers[name], _, _ = lif_run(current, params)
    SQ, SK, SV = (layers[k].astype(np.float64) for k in ("q", "k", "v"))
    A = np.einsum("ikt,jkt->ij", SQ, SK) / T
    current_out = (A @ SV.mean(axis=-1)) / scale
    S_out, _, _ = lif_run(np.repeat(current_out[..., None], T, axis=-1), params)
    stages = {k: int(layers[k].sum()) for k in ("q", "k", "v")}
    stages["out"] = int(S_out.sum())
    return AttentionOutput(
        rates=S_out.mean(axis=-1),
        spikes=SpikeTensor.from_bits(S_out),
        spikes_used=sum(stages.values()),
        attention=A,
        spikes_by_stage=stages,
    )


# --------------------------------------------------------------------------
# circuit-built attention
# --------------------------------------------------------------------------

def unit_affine(M: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Map M into [0,1] as M = lo + scale * M_unit.

    Matrices already inside [0,1] are passed through (lo=0, scale=1);
    otherwise lo and scale come from the global min and max.
    """
    if np.all((M >= 0) & (M <= 1)):
        return M, 0.0, 1.0
    lo, hi = float(M.min()), float(M.max())
    scale = hi - lo if hi > lo else 1.0
    return np.clip((M - lo) / scale, 0.0, 1.0), lo, scale


def circuit_attention(
    X,
    weights: AttentionWeights | None = None,
    T: int = 1024,
    seed: int = 0,
    *,
    backend: str = "counts",
    config: SoftmaxConfig | None = None,
    spiking_values: bool = False,
) -> AttentionOutput:
    """softmax(Q K^T) V from spike circuits, one spike softmax per query row.

    Q and K rows are mapped into [0,1] by :func:`unit_affine`; the mapping is
    undone exactly in the logits (terms constant over keys cancel in the
    softmax). Values are read out from decoded V rates, or, with
    ``spiking_values``, through coincidences of an alpha-rate train with
    each V train.

    All randomness is keyed by token content (:func:`content_id` of the X
    row), so permuting the rows of X permutes the output rows bit for bit.
    """
    _check_backend(backend)
    cfg = config or SoftmaxConfig()
    T = _check_T(T)
    X = _check_X(X, unit=False)
    Q, K, V = _project(X, weights)
    Qn, lo_q, s_q = unit_affine(Q)
    Kn, lo_k, s_k = unit_affine(K)
    Vn, lo_v, s_v = unit_affine(V)
    n, d_k = Qn.shape
    tids = [content_id(row) for row in X]
    stages = _Stages()

    # token-level encodings, counted once
    if backend == "events":
        enc = {
            role: [[encode_rate(M[i, l], T, derive_seed(seed, role, tid, l)) for l in range(d_k)]
                   for i, tid in enumerate(tids)]
            for role, M in (("q", Qn), ("k", Kn), ("v", Vn))
        }
        v_counts = np.array([[tr.count() for tr in row] for row in enc["v"]])
        for role in ("q", "k", "v"):
            stages.add("encode", sum(tr.count() for row in enc[role] for tr in row))
    else:
        cnt = {
            role: np.stack([make_rng(derive_seed(seed, role, tid)).binomial(T, M[i])
                            for i, tid in enumerate(tids)])
            for role, M in (("q", Qn), ("k", Kn), ("v", Vn))
        }
        v_counts = cnt["v"]
        for role in ("q", "k", "v"):
            stages.add("encode", cnt[role].sum())
    v_hat = v_counts / T

    if n == 1:
        alpha = np.ones((1, 1))
    else:
        logit_scale, key_offset = s_q * s_k, lo_q * s_k
        M = logit_range(d_k, logit_scale, key_offset)
        drives = np.empty((n, n, T), dtype=bool)
        for i, qid in enumerate(tids):
            if backend == "events":
                q_data, key_data = enc["q"][i], enc["k"]
            else:
                q_data, key_data = Qn[i], (Kn, cnt["k"] / T)
            logits = _logit_estimates(q_data, key_data, T, seed, qid, tids, backend,
                                      logit_scale, key_offset, stages)
            exps = _exponentials(logits, M, T, seed, qid, tids, cfg, backend, stages)
            drives[i] = _wta_drive(exps, T, seed, qid, tids, stages)
        wcfg = WtaConfig(n=n, T=T, T0=cfg.wta_T0, excitatory_gain=cfg.wta_gain)
        counts, total = wta_counts(drives, wcfg, cfg.lif)
        stages.add("wta", total.sum())
        alpha = np.array([[a.value for a in _alpha_estimates(c, 0)] for c in counts])

    if spiking_values:
        mixed = np.zeros((n, n, d_k), dtype=np.int64)
        for i, qid in enumerate(tids):
            for j, kid in enumerate(tids):
                rng = make_rng(derive_seed(seed, "mix", qid, kid))
                if backend == "events":
                    a_bits = np.packbits(rng.random(T) < alpha[i, j])
                    stages.add("mix", int(np.bitwise_count(a_bits).sum()))
                    for l, tr in enumerate(enc["v"][j]):
                        mixed[i, j, l] = int(np.bitwise_count(a_bits & tr.packed).sum())
                else:
                    stages.add("mix", rng.binomial(T, alpha[i, j]))
                    mixed[i, j] = rng.binomial(v_counts[j], alpha[i, j])
        stages.add("mix", mixed.sum())
        unit_out = mixed.sum(axis=1) / T
    else:
        # summing sorted terms makes the result independent of key order
        unit_out = np.sort(alpha[:, :, None] * v_hat[None, :, :], axis=1).sum(axis=1)

    by_stage = stages.as_dict()
    return AttentionOutput(
        rates=lo_v + s_v * unit_out,
        spikes=None,
        spikes_used=int(sum(by_stage.values())),
        attention=alpha,
        spikes_by_stage=by_stage,
    )
