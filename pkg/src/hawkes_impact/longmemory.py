"""Covariance of order-flow increments and its fractional-Brownian limit.

For a stationary Hawkes flow with mean rate ``Lambda = mu / (1 - n)`` the
covariance of ``h``-increments at lag ``tau`` has Fourier transform

    C_hat(z, h) = 2 Lambda (1 - cos z h) / (z^2 |1 - phi_hat(z)|^2),

so ``C(tau, h) = (1/pi) int_0^inf C_hat(z, h) cos(z tau) dz``. The integral is
split at a few oscillation periods: the head goes to adaptive quadrature
with breakpoints at the kernel's frequency scales, the tail to QUADPACK's
Fourier-integral routine (QAWF), one call per cosine in
``(1 - cos zh) cos z tau``. No truncation of the frequency range is needed.

In the near-critical regime the rescaled covariance tends to

    K_fbm (|tau + h|^2H + |tau - h|^2H - 2 |tau|^2H),   H = 1/2 + alpha,

with ``K_fbm = K / (2 alpha (2 alpha + 1) h)``, where
``K = h C_mu / (2 Re theta(1 - 2 alpha) |theta(1 + alpha)|^2 c^(2 alpha) alpha^2)``
is the constant in front of the convolution ``g^h * |t|^(2 alpha - 1)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from . import _kernels
from ._io import write_csv
from .errors import ConfigurationError, DomainError, InsufficientDataError, NumericalError
from .impact import fit_log_log
from .kernel import EXPONENTIAL, POWER_LAW, KernelSpec, NearCriticalFamily, make_near_critical
from .simulation import EventStream


@dataclass(frozen=True, eq=False)
class CovarianceCurve:
    h: float
    lags: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    provenance: str
    se: np.ndarray | None = field(default=None, repr=False)
    parameters: dict = field(default_factory=dict)

    def to_csv(self, path, extra: dict | None = None) -> None:
        header = {"kind": "covariance", "h": self.h, "provenance": self.provenance,
                  "parameters": self.parameters, **(extra or {})}
        cols = {"tau": self.lags, "C": self.values}
        if self.se is not None:
            cols["SE"] = self.se
        write_csv(path, header, cols)


# ---------------------------------------------------------------------------
# theta(x)


def _check_theta_arg(x):
    if not (0.0 < x < 1.0 or 1.0 < x < 2.0):
        raise DomainError("theta(x) needs x in (0, 1) or (1, 2)")


def theta_constant(x: float, method: str = "gamma") -> complex:
    """``theta(x) = int_0^inf e^{iu} u^-x du`` for ``x`` in (0, 1).

    For ``x`` in (1, 2) the integrand is regularized to ``(e^{iu} - 1) u^-x``.
    Both branches equal ``Gamma(1 - x) exp(i pi (1 - x) / 2)``. ``method="quad"``
    evaluates the defining integral instead (algebraic-weight quadrature on
    [0, 1], Fourier quadrature on [1, inf)).
    """
    x = float(x)
    _check_theta_arg(x)
    if method == "gamma":
        return complex(gamma_fn(1.0 - x) * np.exp(0.5j * np.pi * (1.0 - x)))
    if method != "quad":
        raise DomainError(f"unknown method {method!r}")
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            if x < 1.0:
                re0 = integrate.quad(np.cos, 0.0, 1.0, weight="alg", wvar=(-x, 0.0))[0]
                im0 = integrate.quad(np.sin, 0.0, 1.0, weight="alg", wvar=(-x, 0.0))[0]
            else:
                # QAWS needs weight exponents > -1: absorb powers of u into the integrand
                re0 = integrate.quad(lambda u: -0.5 * np.sinc(u / (2.0 * np.pi)) ** 2, 0.0, 1.0,
                                     weight="alg", wvar=(2.0 - x, 0.0))[0]
                im0 = integrate.quad(lambda u: np.sinc(u / np.pi), 0.0, 1.0, weight="alg",
                                     wvar=(1.0 - x, 0.0))[0]
            f = lambda u: u ** (-x)
            re1 = integrate.quad(f, 1.0, np.inf, weight="cos", wvar=1.0)[0]
            im1 = integrate.quad(f, 1.0, np.inf, weight="sin", wvar=1.0)[0]
        except integrate.IntegrationWarning as exc:
            raise NumericalError("theta quadrature did not converge", {"x": x, "error": str(exc)})
    if x > 1.0:
        re1 -= 1.0 / (x - 1.0)
    return complex(re0 + re1, im0 + im1)


def limit_constant_K(C_mu: float, alpha: float, c: float, h: float) -> float:
    """``K = h C_mu / (2 Re theta(1 - 2 alpha) |theta(1 + alpha)|^2 c^(2 alpha) alpha^2)``."""
    if not 0.0 < alpha < 0.5:
        raise DomainError("alpha must lie in (0, 1/2)")
    t1 = theta_constant(1.0 - 2.0 * alpha)
    t2 = theta_constant(1.0 + alpha)
    return h * C_mu / (2.0 * t1.real * abs(t2) ** 2 * c ** (2.0 * alpha) * alpha ** 2)


def fbm_amplitude(K: float, alpha: float, h: float) -> float:
    """Amplitude of the fBm increment covariance implied by ``K``.

    ``K (g^h * |t|^(2 alpha - 1))(tau)`` equals
    ``K / (2 alpha (2 alpha + 1) h) (|tau + h|^2H + |tau - h|^2H - 2 |tau|^2H)``,
    so the fBm amplitude does not depend on ``h``.
    """
    return K / (2.0 * alpha * (2.0 * alpha + 1.0) * h)


def fbm_limit_covariance(amplitude: float, alpha: float, h: float, lags) -> CovarianceCurve:
    """``amplitude (|tau + h|^2H + |tau - h|^2H - 2 |tau|^2H)`` with ``H = 1/2 + alpha``."""
    if not 0.0 < alpha < 0.5:
        raise DomainError("alpha must lie in (0, 1/2)")
    tau = np.asarray(lags, dtype=float)
    two_h = 1.0 + 2.0 * alpha
    vals = amplitude * (np.abs(tau + h) ** two_h + np.abs(tau - h) ** two_h - 2.0 * np.abs(tau) ** two_h)
    return CovarianceCurve(float(h), tau, vals, "fbm-limit", None,
                           {"amplitude": amplitude, "alpha": alpha, "H": 0.5 + alpha})


# ---------------------------------------------------------------------------
# Fourier inversion


def _weight_function(spec: KernelSpec, prefactor: float, freq_scale: float = 1.0):
    """``z -> prefactor / |1 - phi_hat(z / freq_scale)|^2`` as a fast scalar callable."""
    n = spec.branching_ratio
    if n == 0:
        return lambda z: prefactor
    if spec.family == EXPONENTIAL:
        fam, p1, p2, g = 0, spec.decay, 0.0, 0.0
    elif spec.family == POWER_LAW:
        fam, p1, p2, g = 1, spec.alpha, spec.scale, float(gamma_fn(1.0 - spec.alpha))
    else:
        from .kernel import fourier_gap

        return lambda z: prefactor / abs(fourier_gap(spec, z / freq_scale)) ** 2
    sw = _kernels.spectral_weight
    fs = float(freq_scale)
    return lambda z: prefactor * sw(float(z), fam, n, p1, p2, g, fs)


def _frequency_scales(spec: KernelSpec, freq_scale: float = 1.0):
    n = spec.branching_ratio
    if n == 0:
        return []
    if spec.family == EXPONENTIAL:
        s = [spec.decay * (1.0 - n), spec.decay]
    else:
        c = spec.characteristic_time()
        alpha = spec.tail_alpha or 1.0
        s = [(1.0 - n) ** (1.0 / alpha) / c, 0.1 / c, 1.0 / c]
    return [x * freq_scale for x in s]


def _cosine_tail(q, z0, s, h, w_max):
    """``int_{z0}^inf q(z) cos(sz) dz`` and its error estimate."""
    if s < 1e-12 * h:
        # replacing cos(sz) by 1 moves the integral by at most pi s w_max / 2
        val, err = integrate.quad(q, z0, np.inf, limit=2000, epsabs=1e-14)
        return val, err + 0.5 * np.pi * s * w_max
    z1 = z0
    val = err = 0.0
    if s * z0 < 2.0 * np.pi:
        # QAWF's first cycle would span [z0, z0 + pi/s] with all the mass near z0;
        # integrate in log z until the cosine has turned over a few times
        z1 = 40.0 * np.pi / s
        f = lambda u: q(math.exp(u)) * math.cos(s * math.exp(u)) * math.exp(u)
        val, err = integrate.quad(f, math.log(z0), math.log(z1), limit=2000, epsabs=1e-14,
                                  epsrel=1e-11)
    # QAWF's cycle extrapolation occasionally stalls for an unlucky start; the
    # tail then restarts further out, with the gap done by finite-range QAWO
    best = None
    for shift in (0.0, 0.37, 1.13, 2.71):
        z2 = z1 + shift * np.pi / s
        gap, egap = (0.0, 0.0) if shift == 0.0 else integrate.quad(
            q, z1, z2, weight="cos", wvar=s, limit=2000, epsabs=1e-14)
        v2, e2 = integrate.quad(q, z2, np.inf, weight="cos", wvar=s, limlst=200, limit=2000,
                                epsabs=1e-14)
        cand = (egap + e2, gap + v2)
        if best is None or cand[0] < best[0]:
            best = cand
        if best[0] <= 1e-9 * q(z1) / s + 1e-14:
            break
    return val + best[1], err + best[0]


def _invert(W, h, tau, scales, rtol=1e-10):
    """``(1/pi) int_0^inf W(z) (1 - cos zh) cos(z tau) / z^2 dz``."""
    tau = abs(float(tau))
    z0 = 20.0 * np.pi / (h + tau) if tau > 0 else 20.0 * np.pi / h
    pts = sorted({s for s in scales if 0.0 < s < z0} | {s / 10 for s in scales if 0.0 < s / 10 < z0})

    def head(z):
        if z == 0.0:
            return W(0.0) * h * h / 2.0
        return 2.0 * W(z) * math.sin(0.5 * z * h) ** 2 * math.cos(z * tau) / (z * z)

    def q(z):
        return W(z) / (z * z)

    diag = {"tau": tau, "h": h, "z0": z0}
    # quadpack flags roundoff whenever the kernel evaluation noise floor is
    # reached; the returned error estimates decide whether that matters
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        total, err = integrate.quad(head, 0.0, z0, points=pts or None, limit=5000,
                                    epsabs=1e-13, epsrel=rtol)
        errs = [err]
        for wgt, s in ((1.0, tau), (-0.5, tau + h), (-0.5, abs(tau - h))):
            val, err = _cosine_tail(q, z0, s, h, W(0.0))
            total += wgt * val
            errs.append(err)
    # absolute floor relative to the variance scale W h / 2, so exact zeros (tau = h
    # for a Poisson flow) do not fail on roundoff
    budget = 1e-6 * abs(total) + 1e-9 * W(z0) * h / 2.0
    if not np.isfinite(total) or sum(errs) > budget:
        diag["error_estimate"] = float(sum(errs))
        diag["warnings"] = [str(w.message) for w in caught]
        raise NumericalError("covariance inversion did not converge", diag)
    return total / np.pi


def theoretical_covariance(spec: KernelSpec, mu: float, h: float, lags) -> CovarianceCurve:
    """Increment covariance ``C(tau, h)`` of the stationary flow by Fourier inversion."""
    if spec.branching_ratio >= 1.0:
        raise DomainError("stationary covariance needs int phi < 1")
    if h <= 0 or mu <= 0:
        raise DomainError("h and mu must be positive")
    lam = mu / (1.0 - spec.branching_ratio)
    W = _weight_function(spec, 2.0 * lam)
    scales = _frequency_scales(spec)
    tau = np.asarray(lags, dtype=float)
    vals = np.array([_invert(W, h, t, scales) for t in tau.ravel()]).reshape(tau.shape)
    return CovarianceCurve(float(h), tau, vals, "theoretical-fourier", None,
                           {"kernel": spec.to_dict(), "mu": mu, "rate": lam})


def spectral_covariance(spec: KernelSpec, mu: float, h: float, z) -> np.ndarray:
    """``C_hat(z, h)``, the Fourier transform of ``tau -> C(tau, h)``."""
    lam = mu / (1.0 - spec.branching_ratio)
    W = _weight_function(spec, 2.0 * lam)
    z = np.asarray(z, dtype=float)
    out = np.empty(z.size)
    for i, zi in enumerate(z.ravel()):
        zi = abs(zi)
        out[i] = W(zi) * h * h / 2.0 if zi == 0 else 2.0 * W(zi) * math.sin(0.5 * zi * h) ** 2 / (zi * zi)
    return out.reshape(z.shape)


def rescaled_covariance(family: NearCriticalFamily, h: float, lags) -> CovarianceCurve:
    """``A_T^2 C^{N,T}(T tau, T h)``, computed in rescaled frequency ``z``.

    Its Fourier transform is ``2 C_mu T^(-2 alpha) (1 - cos zh) / (z^2 |1 - phi_hat^T(z / T)|^2)``.
    """
    T = family.T
    W = _weight_function(family.kernel, 2.0 * family.C_mu * T ** (-2.0 * family.alpha), T)
    scales = _frequency_scales(family.kernel, T)
    tau = np.asarray(lags, dtype=float)
    vals = np.array([_invert(W, h, t, scales) for t in tau.ravel()]).reshape(tau.shape)
    return CovarianceCurve(float(h), tau, vals, "theoretical-fourier-rescaled", None,
                           family.to_dict())


@dataclass(frozen=True)
class ConvergenceStudy:
    T_values: tuple
    a_values: tuple
    scale_ratios: tuple
    distances: tuple
    amplitude: float
    curves: tuple = field(repr=False, default=())

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.distances, self.distances[1:]))

    def to_dict(self) -> dict:
        return {"T": list(self.T_values), "a_T": list(self.a_values),
                "scale_ratio": list(self.scale_ratios), "sup_distance": list(self.distances),
                "fbm_amplitude": self.amplitude, "decreasing": self.decreasing}


def a_for_scale_ratio(T: float, ratio: float, alpha: float) -> float:
    """``a_T`` with ``T (1 - a_T)^(1/alpha) = ratio``."""
    return 1.0 - (ratio / T) ** alpha


def convergence_study(base: KernelSpec, C_mu: float, h: float, lags, T_values, a_values,
                      check_assumption: bool = True) -> ConvergenceStudy:
    """Sup distance between ``A_T^2 C^{N,T}(T., T h)`` and the fBm limit along ``(T, a_T)``.

    The sequence must move towards the limit regime: ``T`` increasing and
    ``T (1 - a_T)^(1/alpha)`` decreasing. Otherwise a
    :class:`ConfigurationError` is raised unless ``check_assumption`` is off
    (used for negative controls).
    """
    T_values = [float(t) for t in T_values]
    a_values = [float(a) for a in a_values]
    if len(T_values) != len(a_values) or not T_values:
        raise ConfigurationError("T_values and a_values must be non-empty and of equal length")
    fams = [make_near_critical(base, T, a, C_mu) for T, a in zip(T_values, a_values)]
    ratios = [f.scale_ratio for f in fams]
    if check_assumption:
        ok = (all(b > a for a, b in zip(T_values, T_values[1:]))
              and all(b < a for a, b in zip(ratios, ratios[1:])))
        if not ok:
            raise ConfigurationError(
                "sequence violates the scaling assumption: need T increasing and "
                f"T (1 - a_T)^(1/alpha) decreasing, got {ratios}")
    alpha = fams[0].alpha
    amp = fbm_amplitude(limit_constant_K(C_mu, alpha, fams[0].c, h), alpha, h)
    limit = fbm_limit_covariance(amp, alpha, h, lags)
    curves, dist = [], []
    for f in fams:
        cur = rescaled_covariance(f, h, lags)
        curves.append(cur)
        dist.append(float(np.max(np.abs(cur.values - limit.values))))
    return ConvergenceStudy(tuple(T_values), tuple(a_values), tuple(ratios), tuple(dist), amp,
                            tuple(curves))


# ---------------------------------------------------------------------------
# empirical side


def _increments(stream: EventStream, h, step):
    n_points = int(math.floor((stream.horizon - h) / step + 1e-9)) + 1
    if n_points <= 0:
        return np.empty(0)
    return _kernels.count_increments(stream.times, 0.0, step, n_points, h)


def _as_list(streams):
    if isinstance(streams, EventStream):
        return [streams]
    return list(streams)


def _lag_steps(lags, step):
    m = np.rint(np.asarray(lags, dtype=float) / step).astype(int)
    if np.any(np.abs(m * step - np.asarray(lags)) > 1e-9 * max(1.0, step)) or np.any(m < 0):
        raise DomainError("lags must be nonnegative multiples of the sampling step")
    return m


def empirical_covariance(streams, h: float, lags, step: float | None = None,
                         other=None) -> CovarianceCurve:
    """Sample covariance of overlapping ``h``-increments sampled every ``step``.

    ``streams`` is one stream or a list of independent replicas. With
    ``other`` (same number of streams) the cross-covariance
    ``Cov(Y_{t+tau}, X_t)`` is returned. Standard errors come from batch
    means with batches of length ``50 (tau + h)``, truncated at the stream
    length, so a set of short replicas falls back to one batch per replica.
    """
    xs = _as_list(streams)
    ys = xs if other is None else _as_list(other)
    if len(xs) != len(ys) or not xs:
        raise DomainError("need matching, non-empty lists of streams")
    if step is None:
        step = h / 4.0
    lags = np.asarray(lags, dtype=float)
    m = _lag_steps(lags, step)
    windows = sum(int(s.horizon // (lags.max() + h)) for s in xs)
    if windows < 1000:
        raise InsufficientDataError(
            f"only {windows} disjoint (tau + h) windows; at least 1000 are needed")
    X = [_increments(s, h, step) for s in xs]
    Y = X if other is None else [_increments(s, h, step) for s in ys]
    xbar = math.fsum(float(x.sum()) for x in X) / sum(x.size for x in X)
    ybar = xbar if other is None else math.fsum(float(y.sum()) for y in Y) / sum(y.size for y in Y)
    vals = np.empty(lags.size)
    se = np.empty(lags.size)
    for j, (mj, tau) in enumerate(zip(m, lags)):
        blen = max(1, int(math.ceil(50.0 * (tau + h) / step)))
        sums, counts = [], []
        for x, y in zip(X, Y):
            if x.size <= mj:
                continue
            prod = (y[mj:] - ybar) * (x[: x.size - mj] - xbar)
            b = min(blen, prod.size)
            nb = prod.size // b
            used = prod[: nb * b].reshape(nb, b)
            sums.append(used.sum(axis=1))
            counts.append(np.full(nb, b))
        s = np.concatenate(sums)
        c = np.concatenate(counts)
        means = s / c
        total = c.sum()
        vals[j] = s.sum() / total
        if means.size < 2:
            se[j] = np.nan
        else:
            w = c / total
            # weighted batch-means variance of the overall mean
            var = np.sum(w ** 2 * (means - vals[j]) ** 2) * means.size / (means.size - 1)
            se[j] = math.sqrt(var)
    return CovarianceCurve(float(h), lags, vals, "empirical", se,
                           {"step": step, "n_streams": len(xs), "mean_increment": xbar,
                            "cross": other is not None})


@dataclass(frozen=True)
class GammaFit:
    gamma: float
    amplitude: float
    r2: float
    window: tuple

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "amplitude": self.amplitude, "r2": self.r2,
                "window": list(self.window)}


def estimate_gamma(curve: CovarianceCurve, window=None) -> GammaFit:
    """Log-log slope of ``C(tau, h)`` against ``tau`` on ``window``; ``gamma = -slope``."""
    lags = np.asarray(curve.lags, dtype=float)
    sel = lags > 0
    fit = fit_log_log(lags[sel], np.asarray(curve.values)[sel], window)
    return GammaFit(-fit.exponent, fit.amplitude, fit.r2, fit.window)
