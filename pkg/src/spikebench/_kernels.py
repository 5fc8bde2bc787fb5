"""Sequential LIF loops, compiled with numba when it is importable.

Both kernels are written in the subset of Python that numba accepts, so the
uncompiled functions are a drop-in (slow) fallback.
"""

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def lif_kernel(currents, beta, v_th, u0, s0):
    """Run independent LIF neurons over time.

    currents has shape (N, T). Returns (spikes[N, T], u[N], s[N]).
    """
    N, T = currents.shape
    spikes = np.zeros((N, T), dtype=np.bool_)
    u = u0.copy()
    s = s0.copy()
    for t in range(T):
        for i in range(N):
            x = beta * u[i] + currents[i, t]
            if s[i]:
                x -= v_th
            u[i] = x
            fired = x >= v_th
            s[i] = fired
            spikes[i, t] = fired
    return spikes, u, s


@njit(cache=True)
def wta_kernel(drive, beta, v_th, w_exc, g_inh, t0):
    """Lateral-inhibition pool driven by binary input trains.

    drive has shape (B, T, n): B independent pools of n neurons. Every neuron
    receives ``w_exc * drive`` plus the shared inhibitory current
    ``g_inh * (number of pool spikes at t-1)``.

    Returns (counts[B, n] of spikes at t >= t0, total[B] of all spikes).
    """
    B, T, n = drive.shape
    counts = np.zeros((B, n), dtype=np.int64)
    total = np.zeros(B, dtype=np.int64)
    u = np.zeros(n)
    s = np.zeros(n, dtype=np.bool_)
    for b in range(B):
        for i in range(n):
            u[i] = 0.0
            s[i] = False
        fired_prev = 0
        for t in range(T):
            inh = g_inh * fired_prev
            fired = 0
            for i in range(n):
                x = beta * u[i] - inh
                if drive[b, t, i]:
                    x += w_exc
                if s[i]:
                    x -= v_th
                u[i] = x
                if x >= v_th:
                    s[i] = True
                    fired += 1
                    if t >= t0:
                        counts[b, i] += 1
                else:
                    s[i] = False
            total[b] += fired
            fired_prev = fired
    return counts, total
