"""Independent reference implementations used as test oracles.

None of these import the package; they restate each quantity from its
definition with plain Python, math and scipy.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special, stats


def lif_reference(currents, beta, v_th, u0=0.0, s0=0):
    """Scalar loop of u_t = beta u_{t-1} + I_t - v_th s_{t-1}, s_t = [u_t >= v_th]."""
    u, s, out = float(u0), int(s0), []
    for I in currents:
        u = beta * u + I - v_th * s
        s = 1 if u >= v_th else 0
        out.append(s)
    return out, u, s


def binomial_tail(x, T, delta):
    """Exact P[|Bin(T, x)/T - x| > delta]."""
    k = np.arange(T + 1)
    pmf = stats.binom.pmf(k, T, x)
    return float(pmf[np.abs(k / T - x) > delta + 1e-15].sum())


def taylor_partial(z, M, J):
    """sum_{j<=J} (2M r)^j / j! scaled by e^{-M}, r = (z+M)/(2M): the
    J-truncated series the exp circuit estimates."""
    r = (z + M) / (2 * M)
    return math.exp(-M) * sum((2 * M * r) ** j / math.factorial(j) for j in range(J + 1))


def relu_integration(x, B, T, leak):
    """Spike count of a leaky integrator (beta = 1 - leak, v_th = 1, soft
    reset) driven by the constant current x/B, stepped exactly."""
    if x <= 0:
        return 0
    out, _, _ = lif_reference([x / B] * T, 1.0 - leak, 1.0)
    return sum(out)


def softmax(z):
    return special.softmax(np.asarray(z, dtype=np.float64), axis=-1)


def attention(X, W_Q=None, W_K=None, W_V=None):
    X = np.asarray(X, dtype=np.float64)
    Q = X if W_Q is None else X @ W_Q
    K = X if W_K is None else X @ W_K
    V = X if W_V is None else X @ W_V
    return special.softmax(Q @ K.T, axis=1) @ V


def d_eff_svd(data, threshold):
    """Components for ``threshold`` of the variance via a full SVD."""
    X = np.asarray(data, dtype=np.float64)
    X = X - X.mean(axis=0)
    s = np.linalg.svd(X, compute_uv=False) ** 2
    cum = np.cumsum(s) / s.sum()
    return int(np.searchsorted(cum, threshold - 1e-12) + 1)


def ols_loglog(points):
    """Closed-form slope/intercept/R^2 of log y on log x."""
    x = [math.log(p[0]) for p in points]
    y = [math.log(p[1]) for p in points]
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxx = sum((a - mx) ** 2 for a in x)
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    slope = sxy / sxx
    intercept = my - slope * mx
    ss_tot = sum((b - my) ** 2 for b in y)
    ss_res = sum((b - (slope * a + intercept)) ** 2 for a, b in zip(x, y))
    return slope, intercept, (1.0 if ss_tot == 0 else 1 - ss_res / ss_tot)


def rank_k_data(n, p, k, seed, noise=0.0):
    """n samples of p features from k orthonormal factors of equal variance."""
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((p, k)))
    data = rng.standard_normal((n, k)) @ basis.T
    if noise:
        data = data + noise * rng.standard_normal((n, p))
    return data
