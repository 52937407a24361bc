"""Hot inner loops.

Every function here is compiled with numba when it is enabled (see
:mod:`hawkes_impact._accel`). Loop kernels double as their own fallback: with
numba off they run as plain Python. Kernels with a cheaper vectorized form
(``propagator_sum``, ``count_increments``) get a separate NumPy fallback.
"""
import cmath
import math

import numpy as np

from ._accel import NUMBA_ENABLED, jit

# ---------------------------------------------------------------------------
# special functions


@jit
def upper_gamma_complex(a, x, gamma_a):
    """Upper incomplete gamma ``Gamma(a, x)`` for complex ``x`` off the negative axis.

    Power series of the lower function for ``|x| < 2``, modified Lentz
    continued fraction otherwise. ``gamma_a`` is ``Gamma(a)``.
    """
    if abs(x) < 2.0:
        term = complex(1.0 / a)
        total = term
        n = 1
        while n < 400:
            term = term * x / (a + n)
            total += term
            if abs(term) < 1e-17 * abs(total):
                break
            n += 1
        return gamma_a - cmath.exp(a * cmath.log(x) - x) * total
    tiny = 1e-300
    b = x + 1.0 - a
    c = complex(1.0 / tiny)
    d = 1.0 / b
    h = d
    for i in range(1, 5000):
        an = -i * (i - a)
        b = b + 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = complex(tiny)
        c = b + an / c
        if abs(c) < tiny:
            c = complex(tiny)
        d = 1.0 / d
        delta = d * c
        h = h * delta
        if abs(delta - 1.0) < 1e-16:
            break
    return cmath.exp(a * cmath.log(x) - x) * h


@jit
def pareto_gap(w, alpha, c, gamma_1ma):
    """``1 - Phi_hat(w)`` for the unit-mass shifted Pareto density.

    Uses ``Phi_hat(w) = 1 + i w c e^{-i w c} E_alpha(-i w c)`` with
    ``E_s(x) = x^{s-1} Gamma(1-s, x)``; no cancellation for small ``w``.
    """
    if w == 0.0:
        return complex(0.0)
    y = abs(w) * c
    x = complex(0.0, -y)
    e_alpha = cmath.exp((alpha - 1.0) * cmath.log(x)) * upper_gamma_complex(1.0 - alpha, x, gamma_1ma)
    r = complex(0.0, -y) * cmath.exp(complex(0.0, -y)) * e_alpha
    if w < 0.0:
        return r.conjugate()
    return r


@jit
def pareto_gap_array(w, alpha, c, gamma_1ma):
    out = np.empty(w.shape[0], dtype=np.complex128)
    for i in range(w.shape[0]):
        out[i] = pareto_gap(w[i], alpha, c, gamma_1ma)
    return out


@jit
def spectral_weight(z, family, norm, p1, p2, gamma_1ma, freq_scale):
    """``1 / |1 - phi_hat(z / freq_scale)|^2`` for exponential (0) or shifted Pareto (1)."""
    w = z / freq_scale
    if family == 0:
        # phi_hat = n b / (b - i w)
        gap = 1.0 - norm * p1 / complex(p1, -w)
    else:
        gap = (1.0 - norm) + norm * pareto_gap(w, p1, p2, gamma_1ma)
    return 1.0 / (gap.real * gap.real + gap.imag * gap.imag)


# ---------------------------------------------------------------------------
# Ogata thinning


@jit
def _grow(buf, n):
    out = np.empty(2 * buf.shape[0] + 16)
    out[:n] = buf[:n]
    return out


@jit
def ogata_exponential(rng, mu, norm, decay, start, end):
    """Thinning for ``phi(t) = norm * decay * exp(-decay t)``.

    The excess intensity follows its Markov recursion, so each candidate is
    O(1). History is empty at ``start``.
    """
    buf = np.empty(max(16, int(2.0 * mu * (end - start) / max(1e-12, 1.0 - norm)) + 16))
    n = 0
    t = start
    excess = 0.0
    jump = norm * decay
    while True:
        bound = mu + excess
        w = rng.standard_exponential() / bound
        t += w
        if t > end:
            break
        excess *= math.exp(-decay * w)
        if rng.random() * bound <= mu + excess:
            if n == buf.shape[0]:
                buf = _grow(buf, n)
            buf[n] = t
            n += 1
            excess += jump
    return buf[:n].copy()


@jit
def ogata_power_law(rng, mu, norm, alpha, c, start, end, cutoff):
    """Thinning for ``phi(t) = norm * alpha * c^alpha / (t + c)^(1 + alpha)``.

    Events whose contribution has fallen below ``cutoff`` leave the active
    window; the kernel is nonincreasing so the window only moves forward.
    """
    buf = np.empty(max(16, int(2.0 * mu * (end - start) / max(1e-12, 1.0 - norm)) + 16))
    n = 0
    first = 0
    amp = norm * alpha * c ** alpha
    expo = 1.0 + alpha
    t = start
    # intensity at the current time, right limit
    lam = mu
    while True:
        bound = lam
        t += rng.standard_exponential() / bound
        if t > end:
            break
        while first < n and amp / (t - buf[first] + c) ** expo < cutoff:
            first += 1
        lam = mu
        for k in range(first, n):
            lam += amp / (t - buf[k] + c) ** expo
        if rng.random() * bound <= lam:
            if n == buf.shape[0]:
                buf = _grow(buf, n)
            buf[n] = t
            n += 1
            lam += amp / c ** expo
    return buf[:n].copy()


# ---------------------------------------------------------------------------
# compensators (history empty at time 0)


@jit
def compensator_increments_exponential(times, mu, norm, decay):
    out = np.empty(times.shape[0])
    prev = 0.0
    excess = 0.0
    for i in range(times.shape[0]):
        dt = times[i] - prev
        out[i] = mu * dt + excess * (1.0 - math.exp(-decay * dt)) / decay
        excess = excess * math.exp(-decay * dt) + norm * decay
        prev = times[i]
    return out


@jit
def compensator_increments_power_law(times, mu, norm, alpha, c):
    # integral of phi over (a, b] after an event at s: norm*[(c/(a-s+c))^alpha - (c/(b-s+c))^alpha]
    out = np.empty(times.shape[0])
    prev = 0.0
    for i in range(times.shape[0]):
        t = times[i]
        acc = mu * (t - prev)
        for k in range(i):
            s = times[k]
            acc += norm * ((c / (prev - s + c)) ** alpha - (c / (t - s + c)) ** alpha)
        out[i] = acc
        prev = t
    return out


# ---------------------------------------------------------------------------
# propagator sums over a tabulated kernel


@jit
def _propagator_sum_loop(sample_times, event_times, signs, zeta, step):
    m = zeta.shape[0]
    out = np.zeros(sample_times.shape[0])
    for j in range(sample_times.shape[0]):
        t = sample_times[j]
        acc = 0.0
        for i in range(event_times.shape[0]):
            lag = t - event_times[i]
            if lag < 0.0:
                break
            x = lag / step
            k = int(x)
            if k >= m - 1:
                acc += signs[i] * zeta[m - 1]
            else:
                f = x - k
                acc += signs[i] * (zeta[k] * (1.0 - f) + zeta[k + 1] * f)
        out[j] = acc
    return out


def _propagator_sum_numpy(sample_times, event_times, signs, zeta, step, chunk=2048):
    grid = np.arange(zeta.shape[0]) * step
    out = np.zeros(sample_times.shape[0])
    for lo in range(0, sample_times.shape[0], chunk):
        t = sample_times[lo:lo + chunk, None]
        lag = t - event_times[None, :]
        vals = np.interp(np.maximum(lag, 0.0), grid, zeta)
        out[lo:lo + chunk] = np.where(lag >= 0.0, vals * signs[None, :], 0.0).sum(axis=1)
    return out


def propagator_sum(sample_times, event_times, signs, zeta, step):
    """``sum_i signs[i] * zeta(t - t_i)`` over ``t_i <= t``; ``event_times`` sorted.

    ``zeta`` is tabulated on ``k * step`` and linearly interpolated; lags past
    the table take its last value (the caller enforces the horizon).
    """
    sample_times = np.ascontiguousarray(sample_times, dtype=np.float64)
    event_times = np.ascontiguousarray(event_times, dtype=np.float64)
    signs = np.ascontiguousarray(signs, dtype=np.float64)
    zeta = np.ascontiguousarray(zeta, dtype=np.float64)
    if NUMBA_ENABLED:
        return _propagator_sum_loop(sample_times, event_times, signs, zeta, float(step))
    return _propagator_sum_numpy(sample_times, event_times, signs, zeta, float(step))


# ---------------------------------------------------------------------------
# counting


@jit
def _count_increments_loop(times, start, step, n_points, width):
    # counts in (start + k*step, start + k*step + width]
    out = np.zeros(n_points)
    lo = 0
    hi = 0
    n = times.shape[0]
    for k in range(n_points):
        a = start + k * step
        b = a + width
        while lo < n and times[lo] <= a:
            lo += 1
        if hi < lo:
            hi = lo
        while hi < n and times[hi] <= b:
            hi += 1
        out[k] = hi - lo
    return out


def count_increments(times, start, step, n_points, width):
    times = np.ascontiguousarray(times, dtype=np.float64)
    if NUMBA_ENABLED:
        return _count_increments_loop(times, float(start), float(step), int(n_points), float(width))
    a = start + np.arange(n_points) * step
    return (np.searchsorted(times, a + width, side="right")
            - np.searchsorted(times, a, side="right")).astype(float)
