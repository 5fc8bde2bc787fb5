"""LIF dynamics, Bernoulli rate coding and the spike containers.

Conventions used everywhere in the package:

* time is the last axis of any spike array;
* spikes are stored bit-packed (``np.packbits`` along time, big bit order);
* membrane potentials are float64;
* every random draw comes from a ``numpy.random.Generator`` seeded with a
  64-bit value obtained through :func:`derive_seed`.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._kernels import lif_kernel
from .errors import DomainError, FormatError

MASK64 = (1 << 64) - 1


# --------------------------------------------------------------------------
# seeds
# --------------------------------------------------------------------------

def splitmix64(x: int) -> int:
    """SplitMix64 finalizer: a fixed bijective 64-bit mixing function."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def _key_to_int(key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        return int(key) & MASK64
    if isinstance(key, str):
        return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "little")
    raise TypeError(f"seed keys must be int or str, got {type(key).__name__}")


def derive_seed(seed: int, *keys) -> int:
    """Mix ``seed`` with a path of int/str keys into a new 64-bit seed.

    ``derive_seed(s, i, j)`` is the sub-seed of matrix entry (i, j). The value
    depends only on the arguments, so runs reproduce across machines.
    """
    h = splitmix64(_key_to_int(seed))
    for k in keys:
        h = splitmix64(h ^ _key_to_int(k))
    return h


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(_key_to_int(seed)))


def content_id(row) -> int:
    """64-bit id of a real vector, from its float64 bytes."""
    data = np.ascontiguousarray(np.asarray(row, dtype=np.float64)).tobytes()
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


# --------------------------------------------------------------------------
# LIF neuron
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LifParams:
    """Decay ``beta`` in (0, 1) and firing threshold ``v_th`` > 0."""

    beta: float = 0.5
    v_th: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise DomainError(f"beta must be in (0,1), got {self.beta}")
        if not (self.v_th > 0.0 and math.isfinite(self.v_th)):
            raise DomainError(f"v_th must be a positive finite number, got {self.v_th}")


@dataclass(frozen=True)
class LifState:
    u: float = 0.0
    s_prev: int = 0

    def __post_init__(self):
        if self.s_prev not in (0, 1):
            raise DomainError(f"s_prev must be 0 or 1, got {self.s_prev}")


def lif_step(state: LifState, input_current: float, params: LifParams) -> tuple[LifState, int]:
    """One discrete LIF update with soft reset.

    u_t = beta * u_{t-1} + I_t - v_th * s_{t-1};  s_t = [u_t >= v_th]
    """
    if not math.isfinite(input_current):
        raise DomainError(f"input current must be finite, got {input_current}")
    u = params.beta * state.u + input_current - params.v_th * state.s_prev
    spike = int(u >= params.v_th)
    return LifState(u=u, s_prev=spike), spike


def lif_run(currents, params: LifParams, u0=None, s0=None):
    """Simulate independent LIF neurons over the last axis of ``currents``.

    Returns ``(spikes, u_final, s_final)``; ``spikes`` is a bool array with
    the shape of ``currents``.
    """
    currents = np.asarray(currents, dtype=np.float64)
    if not np.all(np.isfinite(currents)):
        raise DomainError("input currents must be finite")
    shape = currents.shape
    flat = np.ascontiguousarray(currents.reshape(-1, shape[-1]))
    n = flat.shape[0]
    u0 = np.zeros(n) if u0 is None else np.asarray(u0, dtype=np.float64).reshape(n).copy()
    s0 = np.zeros(n, dtype=bool) if s0 is None else np.asarray(s0, dtype=bool).reshape(n).copy()
    spikes, u, s = lif_kernel(flat, float(params.beta), float(params.v_th), u0, s0)
    return spikes.reshape(shape), u.reshape(shape[:-1]), s.reshape(shape[:-1])


# --------------------------------------------------------------------------
# spike containers
# --------------------------------------------------------------------------

def _packed_len(T: int) -> int:
    return (T + 7) // 8


@dataclass(frozen=True, eq=False)
class SpikeTrain:
    """A binary spike train of length ``T`` stored bit-packed."""

    packed: np.ndarray
    T: int

    def __post_init__(self):
        if self.T < 1:
            raise DomainError(f"T must be positive, got {self.T}")
        packed = np.ascontiguousarray(self.packed, dtype=np.uint8)
        if packed.shape != (_packed_len(self.T),):
            raise DomainError("packed buffer does not match T")
        packed.flags.writeable = False
        object.__setattr__(self, "packed", packed)

    @classmethod
    def from_bits(cls, bits) -> SpikeTrain:
        bits = np.asarray(bits)
        if bits.ndim != 1:
            raise DomainError("a spike train is one-dimensional")
        if not np.all((bits == 0) | (bits == 1)):
            raise DomainError("spike bits must be 0 or 1")
        return cls(np.packbits(bits.astype(bool)), int(bits.size))

    @property
    def bits(self) -> np.ndarray:
        return np.unpackbits(self.packed, count=self.T).astype(bool)

    def count(self) -> int:
        return int(np.bitwise_count(self.packed).sum())

    def __len__(self) -> int:
        return self.T

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpikeTrain):
            return NotImplemented
        return self.T == other.T and np.array_equal(self.packed, other.packed)

    def __repr__(self) -> str:
        return f"SpikeTrain(T={self.T}, count={self.count()})"


@dataclass(frozen=True, eq=False)
class SpikeTensor:
    """Binary values indexed (row, col, t), bit-packed along t."""

    packed: np.ndarray
    T: int

    def __post_init__(self):
        packed = np.ascontiguousarray(self.packed, dtype=np.uint8)
        if packed.ndim != 3 or packed.shape[0] < 1 or packed.shape[1] < 1:
            raise DomainError("a spike tensor needs positive (n, d) dims")
        if self.T < 1 or packed.shape[2] != _packed_len(self.T):
            raise DomainError("packed buffer does not match T")
        packed.flags.writeable = False
        object.__setattr__(self, "packed", packed)

    @classmethod
    def from_bits(cls, bits) -> SpikeTensor:
        bits = np.asarray(bits)
        if bits.ndim != 3:
            raise DomainError("a spike tensor is indexed (n, d, T)")
        if not np.all((bits == 0) | (bits == 1)):
            raise DomainError("spike bits must be 0 or 1")
        return cls(np.packbits(bits.astype(bool), axis=-1), int(bits.shape[-1]))

    @classmethod
    def zeros(cls, n: int, d: int, T: int) -> SpikeTensor:
        return cls(np.zeros((n, d, _packed_len(T)), dtype=np.uint8), T)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.packed.shape[0], self.packed.shape[1], self.T

    @property
    def bits(self) -> np.ndarray:
        return np.unpackbits(self.packed, axis=-1, count=self.T).astype(bool)

    def counts(self) -> np.ndarray:
        return np.bitwise_count(self.packed).sum(axis=-1, dtype=np.int64)

    def rates(self) -> np.ndarray:
        return self.counts() / self.T

    def train(self, i: int, j: int) -> SpikeTrain:
        return SpikeTrain(self.packed[i, j].copy(), self.T)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpikeTensor):
            return NotImplemented
        return self.T == other.T and np.array_equal(self.packed, other.packed)

    def __repr__(self) -> str:
        n, d, T = self.shape
        return f"SpikeTensor(n={n}, d={d}, T={T}, count={int(self.counts().sum())})"

    # --- SPKT container ----------------------------------------------------
    # header: b"SPKT", version u16, n u32, d u32, T u32 (little-endian), then
    # the (i, j, t) row-major bit stream packed MSB-first, zero padded.

    def to_bytes(self) -> bytes:
        n, d, T = self.shape
        header = SPKT_MAGIC + struct.pack("<HIII", SPKT_VERSION, n, d, T)
        return header + np.packbits(self.bits.reshape(-1)).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> SpikeTensor:
        if len(data) < SPKT_HEADER_SIZE or data[:4] != SPKT_MAGIC:
            raise FormatError("missing SPKT magic")
        version, n, d, T = struct.unpack_from("<HIII", data, 4)
        if version != SPKT_VERSION:
            raise FormatError(f"unsupported SPKT version {version}")
        if n < 1 or d < 1 or T < 1:
            raise FormatError("SPKT dims must be positive")
        nbits = n * d * T
        payload = np.frombuffer(data, dtype=np.uint8, offset=SPKT_HEADER_SIZE)
        if payload.size != (nbits + 7) // 8:
            raise FormatError(
                f"SPKT payload has {payload.size} bytes, expected {(nbits + 7) // 8}"
            )
        bits = np.unpackbits(payload, count=nbits).reshape(n, d, T)
        return cls.from_bits(bits)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> SpikeTensor:
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_json(self) -> str:
        n, d, T = self.shape
        rows = [
            ["".join("1" if b else "0" for b in cell) for cell in row]
            for row in self.bits
        ]
        return json.dumps({"format": "SPKT-debug", "n": n, "d": d, "T": T, "bits": rows})


SPKT_MAGIC = b"SPKT"
SPKT_VERSION = 1
SPKT_HEADER_SIZE = 4 + 2 + 4 * 3


# --------------------------------------------------------------------------
# rate coding
# --------------------------------------------------------------------------

def _check_rate(x: float, what: str = "x") -> float:
    x = float(x)
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"{what} must be in [0,1], got {x}")
    return x


def _check_T(T) -> int:
    if int(T) != T or T < 1:
        raise DomainError(f"T must be a positive integer, got {T}")
    return int(T)


def encode_rate(x: float, T: int, seed: int) -> SpikeTrain:
    """Bernoulli(x) spike at each of T timesteps; expected count is x*T."""
    x = _check_rate(x)
    T = _check_T(T)
    bits = make_rng(seed).random(T) < x
    return SpikeTrain(np.packbits(bits), T)


def decode_rate(train: SpikeTrain) -> float:
    return train.count() / train.T


def encode_matrix(X, T: int, seed: int) -> SpikeTensor:
    """Encode every entry with :func:`encode_rate` under sub-seed (seed, i, j)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise DomainError("X must be a non-empty 2-D matrix")
    bad = np.argwhere(~((X >= 0.0) & (X <= 1.0)))
    if bad.size:
        i, j = bad[0]
        raise DomainError(f"X[{i},{j}] = {X[i, j]} is outside [0,1]")
    T = _check_T(T)
    n, d = X.shape
    packed = np.empty((n, d, _packed_len(T)), dtype=np.uint8)
    for i in range(n):
        for j in range(d):
            bits = make_rng(derive_seed(seed, i, j)).random(T) < X[i, j]
            packed[i, j] = np.packbits(bits)
    return SpikeTensor(packed, T)


def chernoff_tail(T: int, delta: float) -> float:
    """Two-sided Hoeffding/Chernoff bound 2 exp(-2 T delta^2)."""
    return 2.0 * math.exp(-2.0 * T * delta * delta)


def chernoff_T0(delta: float) -> dict:
    """Timesteps after which the tail probability drops below ``delta``.

    Returns the explicit form ``ln(2/delta) / (2 delta^2)`` and the
    constant-free order ``1/delta^2``.
    """
    if not (0.0 < delta < 2.0):
        raise DomainError(f"delta must be in (0,2), got {delta}")
    return {
        "explicit": math.log(2.0 / delta) / (2.0 * delta * delta),
        "order": 1.0 / (delta * delta),
    }


def concentration_trial(
    x: float,
    T: int,
    trials: int,
    seed: int,
    deltas: Sequence[float] | float = (0.01, 0.02, 0.05, 0.1, 0.2),
    rho: float = 0.0,
) -> dict[float, float]:
    """Fraction of ``trials`` encodings whose decoded rate misses x by > delta.

    The trial trains are consecutive draws from one generator seeded with
    ``seed``. ``rho`` enforces x in [rho, 1 - rho].
    """
    x = _check_rate(x)
    T = _check_T(T)
    if not (0.0 <= rho < 0.5):
        raise DomainError(f"rho must be in [0, 0.5), got {rho}")
    if not (rho <= x <= 1.0 - rho):
        raise DomainError(f"x = {x} is outside [{rho}, {1 - rho}]")
    if int(trials) != trials or trials < 1:
        raise DomainError(f"trials must be a positive integer, got {trials}")
    if np.isscalar(deltas):
        deltas = (float(deltas),)
    rng = make_rng(seed)
    dev = np.empty(int(trials))
    chunk = max(1, (1 << 22) // T)
    for start in range(0, int(trials), chunk):
        m = min(chunk, int(trials) - start)
        counts = (rng.random((m, T)) < x).sum(axis=1)
        dev[start:start + m] = np.abs(counts / T - x)
    return {float(d): float(np.mean(dev > d)) for d in deltas}


def rates_of(trains: Iterable[SpikeTrain]) -> np.ndarray:
    return np.array([decode_rate(t) for t in trains])
