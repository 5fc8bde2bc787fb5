"""Spike circuits: coincidence products, the coincidence-Taylor exponential,
ReLU from a single LIF neuron, the lateral-inhibition normalizer and the
composite spike softmax.

Two sampling backends are offered wherever a circuit is a pure function of
Bernoulli trains:

``"events"``
    every train is materialized bit by bit and combined with bitwise AND.
``"counts"``
    only spike counts are drawn. A j-way coincidence chain
    ``C_j = C_{j-1} AND S_j`` has ``|C_j| ~ Binomial(|C_{j-1}|, r)`` exactly,
    so each circuit's count distribution is reproduced exactly at O(J) cost
    instead of O(J*T). Correlations between circuits that share a train in
    event mode are not reproduced.

The lateral-inhibition pool is always simulated step by step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._kernels import wta_kernel
from .core import (
    LifParams,
    SpikeTrain,
    _check_T,
    derive_seed,
    encode_rate,
    lif_run,
    make_rng,
)
from .errors import DegenerateInputError, DomainError

BACKENDS = ("events", "counts")


def _check_backend(backend: str) -> str:
    if backend not in BACKENDS:
        raise DomainError(f"backend must be one of {BACKENDS}, got {backend!r}")
    return backend


@dataclass(frozen=True)
class CircuitEstimate:
    value: float
    stderr: float = 0.0
    spikes_used: int = 0

    def __post_init__(self):
        if self.stderr < 0 or self.spikes_used < 0:
            raise DomainError("stderr and spikes_used must be nonnegative")

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "spikes_used": self.spikes_used}


# --------------------------------------------------------------------------
# coincidence
# --------------------------------------------------------------------------

def coincidence_product(trains: Sequence[SpikeTrain]) -> SpikeTrain:
    """Per-timestep AND of the input trains."""
    if len(trains) == 0:
        raise DomainError("coincidence needs at least one train")
    T = trains[0].T
    if any(tr.T != T for tr in trains):
        raise DomainError("coincidence inputs must share T")
    out = trains[0].packed.copy()
    for tr in trains[1:]:
        out &= tr.packed
    return SpikeTrain(out, T)


def _ones_packed(T: int) -> np.ndarray:
    return np.packbits(np.ones(T, dtype=bool))


# --------------------------------------------------------------------------
# exponential
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpCircuitConfig:
    """Range ``M``, Taylor order ``J`` and timesteps ``T`` of the exp circuit.

    When ``J`` is omitted it is ``ceil(2 M_sub + ln(1/delta))``. If ``M``
    exceeds ``unit_range`` the circuit is built as the product of
    ``ceil(M / unit_range)`` independent sub-circuits, each covering
    ``z / splits`` on the range ``M_sub = M / splits``; ``unit_range=None``
    keeps a single circuit for any M.
    """

    M: float
    T: int
    J: int | None = None
    delta: float = 1e-4
    unit_range: float | None = 1.0

    def __post_init__(self):
        if not (self.M > 0 and math.isfinite(self.M)):
            raise DomainError(f"M must be positive, got {self.M}")
        _check_T(self.T)
        if self.J is not None and (int(self.J) != self.J or self.J < 1):
            raise DomainError(f"J must be a positive integer, got {self.J}")
        if not (0 < self.delta < 1):
            raise DomainError(f"delta must be in (0,1), got {self.delta}")
        if self.unit_range is not None and not self.unit_range > 0:
            raise DomainError("unit_range must be positive")

    @property
    def splits(self) -> int:
        if self.unit_range is None or self.M <= self.unit_range:
            return 1
        return math.ceil(self.M / self.unit_range - 1e-12)

    @property
    def sub_M(self) -> float:
        return self.M / self.splits

    @property
    def order(self) -> int:
        if self.J is not None:
            return int(self.J)
        return math.ceil(2 * self.sub_M + math.log(1 / self.delta))

    def weights(self) -> np.ndarray:
        """Taylor weights (2 M_sub)^j / j! for j = 0..J."""
        a = 2.0 * self.sub_M
        j = np.arange(self.order + 1)
        return np.exp(j * math.log(a) - np.array([math.lgamma(k + 1) for k in j]))


def _chain_events(r: float, J: int, T: int, seed: int):
    """Levels N_0..N_J of the hierarchical coincidence chain, materialized."""
    levels = np.empty(J + 1, dtype=np.int64)
    levels[0] = T
    acc = SpikeTrain(_ones_packed(T), T)
    input_spikes = 0
    for j in range(1, J + 1):
        train = encode_rate(r, T, derive_seed(seed, j))
        input_spikes += train.count()
        acc = coincidence_product([acc, train])
        levels[j] = acc.count()
    return levels, input_spikes


def _chain_counts(r: np.ndarray, J: int, T: int, rng: np.random.Generator):
    """Levels for several chains at once from conditional binomials."""
    m = r.shape[0]
    levels = np.empty((m, J + 1), dtype=np.int64)
    levels[:, 0] = T
    input_spikes = np.zeros(m, dtype=np.int64)
    for j in range(1, J + 1):
        prev = levels[:, j - 1]
        levels[:, j] = rng.binomial(prev, r)
        input_spikes += levels[:, j] + rng.binomial(T - prev, r)
    return levels, input_spikes


def _readout_stats(levels: np.ndarray, w: np.ndarray, T: int):
    """Mean and variance-of-mean of sum_j w_j N_j / T.

    Each timestep contributes W_k = w_0 + ... + w_k where k is the deepest
    level it reaches; timesteps are i.i.d., so the per-step sample variance
    gives the standard error.
    """
    W = np.cumsum(w)
    depth = levels - np.append(levels[..., 1:], np.zeros(levels.shape[:-1] + (1,), np.int64), axis=-1)
    mean = (levels * w).sum(axis=-1) / T
    if T > 1:
        var = (((W - mean[..., None]) ** 2) * depth).sum(axis=-1) / (T - 1)
    else:
        var = np.zeros_like(mean)
    return mean, var / T


def exp_circuit(z: float, cfg: ExpCircuitConfig, seed: int, backend: str = "events") -> CircuitEstimate:
    """Estimate e^z for |z| <= M with truncated-Taylor coincidence chains.

    Each sub-circuit encodes r = (z_b + M_b) / (2 M_b) in J independent trains
    and chains them, ``C_j = C_{j-1} AND S_j``, so that ``E[rate(C_j)] = r^j``.
    The readout ``sum_j (2 M_b)^j / j! * rate(C_j)`` targets
    ``sum_{j<=J} (z_b + M_b)^j / j!`` and is scaled by e^{-M_b}. With
    r = 0 only the j = 0 term survives and the result is e^{-M} exactly.
    """
    _check_backend(backend)
    z = float(z)
    if not math.isfinite(z) or abs(z) > cfg.M * (1 + 1e-12):
        raise DomainError(f"|z| must be <= M = {cfg.M}, got {z}")
    m, Mb, J, T = cfg.splits, cfg.sub_M, cfg.order, cfg.T
    w = cfg.weights()
    r = min(1.0, max(0.0, (z / m + Mb) / (2 * Mb)))
    if backend == "counts":
        levels, inputs = _chain_counts(np.full(m, r), J, T, make_rng(seed))
    else:
        per = [_chain_events(r, J, T, derive_seed(seed, b)) for b in range(m)]
        levels = np.stack([p[0] for p in per])
        inputs = np.array([p[1] for p in per])
    mean, var = _readout_stats(levels, w, T)
    scale = math.exp(-Mb)
    factors = mean * scale
    value = float(np.prod(factors))
    rel_var = float(np.sum(var / mean**2))
    spikes = int(inputs.sum() + levels[:, 2:].sum())
    return CircuitEstimate(value, value * math.sqrt(rel_var), spikes)


# --------------------------------------------------------------------------
# ReLU
# --------------------------------------------------------------------------

RELAY_GAIN = 3.0


def relu_circuit(
    x: float,
    B: float,
    T: int,
    seed: int = 0,
    drive: str = "constant",
    leak: float = 1e-3,
) -> CircuitEstimate:
    """B * (firing rate) of a LIF neuron driven by x / B.

    ``drive="constant"``: unit threshold, decay 1 - leak, constant current
    x / B. The spike count after T steps is within leak*T*(1 + x/B) + 1 of
    the leak-free count floor(T * x / B), so the bias is O(leak) plus B/T
    quantization.

    ``drive="poisson"``: the Bernoulli(|x|/B) train of ``seed`` enters with
    weight sign(x) * 3 on a beta=0.5, v_th=1 neuron, which then relays each
    positive input spike one-for-one; error is O(B / sqrt(T)).

    Non-positive x never fires under either drive.
    """
    if not (B > 0 and math.isfinite(B)):
        raise DomainError(f"B must be positive, got {B}")
    if not math.isfinite(x) or abs(x) > B:
        raise DomainError(f"|x| must be <= B = {B}, got {x}")
    T = _check_T(T)
    if drive == "constant":
        if not (0 < leak < 1):
            raise DomainError("leak must be in (0,1)")
        params = LifParams(beta=1.0 - leak, v_th=1.0)
        spikes, _, _ = lif_run(np.full((1, T), x / B), params)
        count = int(spikes.sum())
        return CircuitEstimate(B * count / T, 0.0, count)
    if drive == "poisson":
        train = encode_rate(abs(x) / B, T, seed)
        current = math.copysign(RELAY_GAIN, x) * train.bits[None, :].astype(float)
        spikes, _, _ = lif_run(current, LifParams(0.5, 1.0))
        count = int(spikes.sum())
        rate = count / T
        return CircuitEstimate(B * rate, B * math.sqrt(rate * (1 - rate) / T), count + train.count())
    raise DomainError(f"drive must be 'constant' or 'poisson', got {drive!r}")


# --------------------------------------------------------------------------
# lateral-inhibition normalizer
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WtaConfig:
    """Pool size ``n``, timesteps ``T`` and transient ``T0`` (discarded).

    ``T0`` defaults to ceil(8 ln n), capped at T // 8 so short runs keep most
    of their steps. ``excitatory_gain`` weights the input spikes;
    ``inhibitory_gain`` defaults to 1/n.
    """

    n: int
    T: int
    T0: int | None = None
    excitatory_gain: float = RELAY_GAIN
    inhibitory_gain: float | None = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise DomainError(f"n must be an integer >= 2, got {self.n}")
        _check_T(self.T)
        if self.T0 is not None and not (0 <= self.T0 < self.T):
            raise DomainError(f"need T > T0 >= 0, got T={self.T}, T0={self.T0}")

    @property
    def transient(self) -> int:
        if self.T0 is not None:
            return int(self.T0)
        return min(math.ceil(8 * math.log(self.n)), self.T // 8)

    @property
    def g_inh(self) -> float:
        return 1.0 / self.n if self.inhibitory_gain is None else float(self.inhibitory_gain)


def wta_counts(drive: np.ndarray, cfg: WtaConfig, params: LifParams | None = None):
    """Simulate pools for a batch of drives shaped (B, n, T).

    Returns (counts[B, n] after the transient, total spikes[B]).
    """
    params = params or LifParams()
    drive = np.ascontiguousarray(np.swapaxes(np.asarray(drive, dtype=bool), -1, -2))
    return wta_kernel(
        drive, float(params.beta), float(params.v_th),
        float(cfg.excitatory_gain), cfg.g_inh, cfg.transient,
    )


def _alpha_estimates(counts: np.ndarray, total: int) -> list[CircuitEstimate]:
    C = int(counts.sum())
    if C == 0:
        raise DegenerateInputError("the pool emitted no spikes after the transient")
    alpha = counts / C
    se = np.sqrt(alpha * (1 - alpha) / C)
    return [CircuitEstimate(float(a), float(s), int(c)) for a, s, c in zip(alpha, se, counts)]


def wta_normalize(
    inputs: Sequence[SpikeTrain],
    cfg: WtaConfig | None = None,
    params: LifParams | None = None,
) -> list[CircuitEstimate]:
    """Normalize input rates through a lateral-inhibition LIF pool.

    Neuron i gets ``excitatory_gain * s_i_in(t)`` and the shared inhibition
    ``g_inh * sum_j s_j(t-1)``; the readout is each neuron's post-transient
    spike count over the pool total, so the estimates sum to 1.

    With beta=0.5, v_th=1, g_inh <= 1/n and gain 3, the membrane stays in
    (-2, 4) and each neuron fires exactly when its input does, so the
    normalized rates target e_i / sum_j e_j with O(1/sqrt(T)) sampling error.
    At gain 1 the same pool is a hard winner-take-all that exaggerates the
    leading rate.
    """
    n = len(inputs)
    if n < 2:
        raise DomainError("the pool needs at least two inputs")
    T = inputs[0].T
    if any(tr.T != T for tr in inputs):
        raise DomainError("pool inputs must share T")
    cfg = cfg or WtaConfig(n=n, T=T)
    if cfg.n != n or cfg.T != T:
        raise DomainError("WtaConfig does not match the inputs")
    if all(tr.count() == 0 for tr in inputs):
        raise DegenerateInputError("all pool inputs are silent; normalization undefined")
    drive = np.stack([tr.bits for tr in inputs])[None]
    counts, total = wta_counts(drive, cfg, params)
    return _alpha_estimates(counts[0], int(total[0]))


def argmax_estimate(estimates: Sequence[CircuitEstimate]) -> int:
    """Index of the largest estimate; the lowest index wins ties."""
    return int(np.argmax([e.value for e in estimates]))


# --------------------------------------------------------------------------
# inner product
# --------------------------------------------------------------------------

def inner_product_circuit(q_trains: Sequence[SpikeTrain], k_trains: Sequence[SpikeTrain]) -> CircuitEstimate:
    """Sum over dimensions of coincidence rates of independent q and k trains."""
    if len(q_trains) != len(k_trains) or len(q_trains) == 0:
        raise DomainError("q and k need the same positive number of dimensions")
    T = q_trains[0].T
    if any(tr.T != T for tr in list(q_trains) + list(k_trains)):
        raise DomainError("all trains must share T")
    counts = np.array([coincidence_product([a, b]).count() for a, b in zip(q_trains, k_trains)])
    return _ip_estimate(counts, T)


def _ip_estimate(counts: np.ndarray, T: int) -> CircuitEstimate:
    p = counts / T
    return CircuitEstimate(float(p.sum()), float(math.sqrt(np.sum(p * (1 - p)) / T)), int(counts.sum()))


# --------------------------------------------------------------------------
# composite softmax
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SoftmaxConfig:
    """Stage settings for :func:`spike_softmax`."""

    exp_delta: float = 1e-4
    exp_unit_range: float | None = 1.0
    exp_order: int | None = None
    wta_T0: int | None = None
    wta_gain: float = RELAY_GAIN
    lif: LifParams = field(default_factory=LifParams)


@dataclass
class SoftmaxEstimate:
    """Attention weights plus the intermediate logits and exponentials."""

    weights: list[CircuitEstimate]
    logits: list[CircuitEstimate]
    exponentials: list[CircuitEstimate]
    spikes_by_stage: dict[str, int]

    @property
    def spikes_used(self) -> int:
        return int(sum(self.spikes_by_stage.values()))

    @property
    def values(self) -> np.ndarray:
        return np.array([w.value for w in self.weights])

    def __len__(self):
        return len(self.weights)

    def __iter__(self):
        return iter(self.weights)

    def __getitem__(self, i):
        return self.weights[i]


class _Stages:
    """Accumulates spike counts per pipeline stage."""

    names = ("encode", "inner_product", "exp", "wta_encode", "wta", "mix")

    def __init__(self):
        self.counts = {k: 0 for k in self.names}

    def add(self, name: str, n: int):
        self.counts[name] += int(n)

    def as_dict(self, keep_zero: bool = False) -> dict[str, int]:
        return {k: v for k, v in self.counts.items() if v or keep_zero}


def _logit_estimates(
    q_data, key_data, T, seed, query_id, key_ids, backend, logit_scale, key_offset, stages,
):
    """Inner products (plus optional key-sum offset) for one query.

    ``q_data``/``key_data`` are lists of trains in event mode, and rate arrays
    (q: (d_k,), keys: (n, d_k)) paired with decoded key rates in count mode.
    """
    out = []
    if backend == "events":
        for kid, k_trains in zip(key_ids, key_data):
            ip = inner_product_circuit(q_data, k_trains)
            stages.add("inner_product", ip.spikes_used)
            z, se = ip.value * logit_scale, ip.stderr * abs(logit_scale)
            if key_offset:
                z += key_offset * sum(tr.count() for tr in k_trains) / T
            out.append(CircuitEstimate(z, se, ip.spikes_used))
    else:
        q_rates, (key_rates, key_decoded) = q_data, key_data
        for kid, k, kd in zip(key_ids, key_rates, key_decoded):
            rng = make_rng(derive_seed(seed, "ip", query_id, kid))
            ip = _ip_estimate(rng.binomial(T, q_rates * k), T)
            stages.add("inner_product", ip.spikes_used)
            z, se = ip.value * logit_scale, ip.stderr * abs(logit_scale)
            if key_offset:
                z += key_offset * float(np.sum(kd))
            out.append(CircuitEstimate(z, se, ip.spikes_used))
    return out


def _exponentials(logits, M, T, seed, query_id, key_ids, cfg: SoftmaxConfig, backend, stages):
    ecfg = ExpCircuitConfig(M=M, T=T, J=cfg.exp_order, delta=cfg.exp_delta, unit_range=cfg.exp_unit_range)
    out = []
    for kid, z in zip(key_ids, logits):
        zc = min(M, max(-M, z.value))
        e = exp_circuit(zc, ecfg, derive_seed(seed, "exp", query_id, kid), backend=backend)
        stages.add("exp", e.spikes_used)
        out.append(e)
    return out


def _wta_drive(exps, T, seed, query_id, key_ids, stages) -> np.ndarray:
    """Encode e_j / max_j e_j as pool drive trains, shape (n, T)."""
    e = np.array([x.value for x in exps])
    rho = np.clip(e / e.max(), 0.0, 1.0)
    bits = np.empty((len(e), T), dtype=bool)
    for j, (kid, r) in enumerate(zip(key_ids, rho)):
        bits[j] = make_rng(derive_seed(seed, "wta", query_id, kid)).random(T) < r
    stages.add("wta_encode", int(bits.sum()))
    return bits


def _combine_alpha(alpha_wta: list[CircuitEstimate], exps) -> list[CircuitEstimate]:
    """Fold exponential-stage uncertainty into the pool's standard errors."""
    e = np.array([x.value for x in exps])
    rel = np.array([x.stderr for x in exps]) / e
    a = e / e.sum()
    out = []
    for i, est in enumerate(alpha_wta):
        others = np.sum((a * rel) ** 2) - (a[i] * rel[i]) ** 2
        var_up = a[i] ** 2 * ((1 - a[i]) ** 2 * rel[i] ** 2 + others)
        out.append(CircuitEstimate(est.value, float(math.sqrt(est.stderr**2 + var_up)), est.spikes_used))
    return out


def logit_range(d_k: int, logit_scale: float = 1.0, key_offset: float = 0.0) -> float:
    """Largest |logit| reachable with q, k in [0,1]^d_k."""
    return d_k * (abs(logit_scale) + abs(key_offset))


def spike_softmax(
    q,
    keys,
    T: int,
    config: SoftmaxConfig | None = None,
    seed: int = 0,
    backend: str = "events",
    *,
    logit_scale: float = 1.0,
    key_offset: float = 0.0,
    query_id: int = 0,
    key_ids: Sequence[int] | None = None,
) -> SoftmaxEstimate:
    """Spike-domain softmax of the logits ``q . k_j`` over keys k_1..k_n.

    Pipeline: coincidence inner products, exponential circuits of range
    M = d_k, then the lateral-inhibition pool driven at rates e_j / max e.
    ``logit_scale`` and ``key_offset`` turn the logits into
    ``logit_scale * q.k_j + key_offset * sum(k_j)`` (used for rescaled inputs).
    Trains are seeded by ``(seed, role, query_id / key_id, dim)``, so tying the
    ids to token content makes results independent of key order.
    """
    _check_backend(backend)
    cfg = config or SoftmaxConfig()
    T = _check_T(T)
    q = np.asarray(q, dtype=np.float64)
    K = np.asarray(keys, dtype=np.float64)
    if K.ndim != 2 or q.ndim != 1 or K.shape[1] != q.shape[0]:
        raise DomainError("keys must be (n, d_k) with d_k = len(q)")
    n, d_k = K.shape
    if n < 2:
        raise DomainError("softmax over fewer than two keys is trivial; need n >= 2")
    for name, arr in (("q", q), ("keys", K)):
        if not np.all((arr >= 0) & (arr <= 1)):
            raise DomainError(f"{name} entries must lie in [0,1]")
    key_ids = list(range(n)) if key_ids is None else list(key_ids)
    if len(key_ids) != n:
        raise DomainError("key_ids must have one id per key")

    stages = _Stages()
    if backend == "events":
        q_data = [encode_rate(q[l], T, derive_seed(seed, "q", query_id, l)) for l in range(d_k)]
        key_data = [
            [encode_rate(K[j, l], T, derive_seed(seed, "k", kid, l)) for l in range(d_k)]
            for j, kid in enumerate(key_ids)
        ]
        stages.add("encode", sum(t.count() for t in q_data))
        stages.add("encode", sum(t.count() for row in key_data for t in row))
    else:
        q_counts = make_rng(derive_seed(seed, "q", query_id)).binomial(T, q)
        k_counts = np.stack([make_rng(derive_seed(seed, "k", kid)).binomial(T, K[j]) for j, kid in enumerate(key_ids)])
        stages.add("encode", q_counts.sum() + k_counts.sum())
        q_data, key_data = q, (K, k_counts / T)

    logits = _logit_estimates(q_data, key_data, T, seed, query_id, key_ids, backend,
                              logit_scale, key_offset, stages)
    M = logit_range(d_k, logit_scale, key_offset)
    exps = _exponentials(logits, M, T, seed, query_id, key_ids, cfg, backend, stages)
    drive = _wta_drive(exps, T, seed, query_id, key_ids, stages)
    wcfg = WtaConfig(n=n, T=T, T0=cfg.wta_T0, excitatory_gain=cfg.wta_gain)
    counts, total = wta_counts(drive[None], wcfg, cfg.lif)
    stages.add("wta", total[0])
    weights = _combine_alpha(_alpha_estimates(counts[0], int(total[0])), exps)
    return SoftmaxEstimate(weights, logits, exps, stages.as_dict())
