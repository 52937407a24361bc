"""Hawkes excitation kernels.

Three families are supported:

``exponential``
    ``phi(t) = a * b * exp(-b t)``, branching ratio ``a``.
``shifted-power-law``
    ``phi(t) = n * alpha * c**alpha / (t + c)**(1 + alpha)``, branching
    ratio ``n``. Normalized to one this is the shifted Pareto density, whose
    tail is exactly ``alpha c^alpha / t^(1+alpha)``.
``tabulated``
    samples ``(t_k, phi_k)`` on an increasing grid starting at 0, linearly
    interpolated and continued past the grid by a power law fitted on the last
    decade of the grid.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from . import _kernels
from .errors import DomainError, NumericalError

EXPONENTIAL = "exponential"
POWER_LAW = "shifted-power-law"
TABULATED = "tabulated"
FAMILIES = (EXPONENTIAL, POWER_LAW, TABULATED)


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Immutable description of an excitation kernel.

    Use the :meth:`exponential`, :meth:`power_law` and :meth:`tabulated`
    constructors rather than the raw initializer.
    """

    family: str
    branching_ratio: float
    decay: float | None = None
    alpha: float | None = None
    scale: float | None = None
    grid: np.ndarray | None = field(default=None, repr=False)
    values: np.ndarray | None = field(default=None, repr=False)
    # fitted tail phi(t) ~ tail_amplitude * t^-(1 + tail_exponent), tabulated only
    tail_amplitude: float = field(default=0.0, repr=False)
    tail_exponent: float = field(default=0.0, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown kernel family {self.family!r}")
        if self.family == EXPONENTIAL:
            if not (self.decay and self.decay > 0):
                raise DomainError("exponential kernel needs decay > 0")
        elif self.family == POWER_LAW:
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise DomainError("shifted power law needs 0 < alpha < 1")
            if not (self.scale and self.scale > 0):
                raise DomainError("shifted power law needs scale c > 0")
        if not 0.0 <= self.branching_ratio <= 1.0 + 1e-12:
            raise DomainError(f"branching ratio {self.branching_ratio} outside [0, 1]")

    # -- constructors -----------------------------------------------------

    @classmethod
    def exponential(cls, a: float, b: float) -> KernelSpec:
        return cls(EXPONENTIAL, float(a), decay=float(b))

    @classmethod
    def power_law(cls, norm: float, alpha: float, c: float = 1.0) -> KernelSpec:
        return cls(POWER_LAW, float(norm), alpha=float(alpha), scale=float(c))

    @classmethod
    def tabulated(cls, t, phi) -> KernelSpec:
        t = np.array(t, dtype=float)
        phi = np.array(phi, dtype=float)
        if t.ndim != 1 or t.shape != phi.shape or t.size < 2:
            raise DomainError("tabulated kernel needs two equal-length 1-d arrays")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise DomainError("tabulated grid must start at 0 and increase strictly")
        if np.any(phi < 0):
            raise DomainError("kernel values must be nonnegative")
        amp, expo = _fit_tail(t, phi)
        head = float(np.sum(0.5 * (phi[1:] + phi[:-1]) * np.diff(t)))
        tail = amp * t[-1] ** (-expo) / expo if amp > 0 else 0.0
        t.setflags(write=False)
        phi.setflags(write=False)
        return cls(TABULATED, head + tail, grid=t, values=phi,
                   tail_amplitude=amp, tail_exponent=expo)

    # -- derived quantities -------------------------------------------------

    @property
    def is_critical(self) -> bool:
        return abs(self.branching_ratio - 1.0) <= 1e-12

    @property
    def tail_alpha(self) -> float | None:
        """Exponent ``alpha`` of a ``t^-(1+alpha)`` tail, if the kernel has one."""
        if self.family == POWER_LAW:
            return self.alpha
        if self.family == TABULATED and self.tail_amplitude > 0:
            return self.tail_exponent
        return None

    def rescaled(self, norm: float) -> KernelSpec:
        """Same shape, branching ratio ``norm``."""
        if self.family == EXPONENTIAL:
            return KernelSpec.exponential(norm, self.decay)
        if self.family == POWER_LAW:
            return KernelSpec.power_law(norm, self.alpha, self.scale)
        if self.branching_ratio == 0:
            raise DomainError("cannot rescale a zero kernel")
        return KernelSpec.tabulated(self.grid, self.values * (norm / self.branching_ratio))

    def characteristic_time(self) -> float:
        """Time scale of the kernel head (``1/b`` or ``c``)."""
        if self.family == EXPONENTIAL:
            return 1.0 / self.decay
        if self.family == POWER_LAW:
            return self.scale
        mass = np.cumsum(np.r_[0.0, 0.5 * (self.values[1:] + self.values[:-1]) * np.diff(self.grid)])
        if mass[-1] <= 0:
            return float(self.grid[-1])
        return float(np.interp(0.5 * mass[-1], mass, self.grid))

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        if self.family == EXPONENTIAL:
            return {"family": EXPONENTIAL, "a": self.branching_ratio, "b": self.decay}
        if self.family == POWER_LAW:
            return {"family": POWER_LAW, "norm": self.branching_ratio,
                    "alpha": self.alpha, "c": self.scale}
        return {"family": TABULATED, "t": self.grid.tolist(), "phi": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> KernelSpec:
        family = d.get("family")
        try:
            if family == EXPONENTIAL:
                return cls.exponential(d["a"], d["b"])
            if family == POWER_LAW:
                return cls.power_law(d["norm"], d["alpha"], d.get("c", 1.0))
            if family == TABULATED:
                if "csv" in d:
                    return load_tabulated_csv(d["csv"])
                return cls.tabulated(d["t"], d["phi"])
        except KeyError as exc:
            raise DomainError(f"kernel spec missing field {exc}") from None
        raise DomainError(f"unknown kernel family {family!r}")

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> KernelSpec:
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, KernelSpec):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(json.dumps(self.to_dict(), sort_keys=True))


def load_tabulated_csv(path) -> KernelSpec:
    """Load a two-column ``t,phi`` CSV (optional header row, ``#`` comments)."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                if rows:
                    raise DomainError(f"{path}: malformed row {line!r}") from None
    if not rows:
        raise DomainError(f"{path}: no numeric rows")
    arr = np.array(rows)
    return KernelSpec.tabulated(arr[:, 0], arr[:, 1])


def save_tabulated_csv(spec: KernelSpec, path) -> None:
    if spec.family != TABULATED:
        raise DomainError("only tabulated kernels have a CSV form")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,phi\n")
        for t, p in zip(spec.grid, spec.values):
            fh.write(f"{float(t)!r},{float(p)!r}\n")


def _fit_tail(t, phi):
    """Least-squares power law on the last decade of the grid."""
    end = t[-1]
    sel = (t >= end / 10.0) & (phi > 0)
    if end <= 0 or np.count_nonzero(sel) < 3:
        return 0.0, 0.0
    slope, intercept = np.polyfit(np.log(t[sel]), np.log(phi[sel]), 1)
    expo = -slope - 1.0
    if not np.isfinite(expo) or expo <= 0:
        return 0.0, 0.0
    return float(math.exp(intercept)), float(expo)


def _check_time(t, name="t"):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise DomainError(f"{name} must be >= 0")
    return t


def _ret(x, like):
    return float(x) if np.ndim(like) == 0 else x


# ---------------------------------------------------------------------------
# evaluation


def eval_kernel(spec: KernelSpec, t):
    """``phi(t)`` for ``t >= 0`` (scalar or array)."""
    tt = _check_time(t)
    n = spec.branching_ratio
    if spec.family == EXPONENTIAL:
        out = n * spec.decay * np.exp(-spec.decay * tt)
    elif spec.family == POWER_LAW:
        a, c = spec.alpha, spec.scale
        out = n * a * c ** a / (tt + c) ** (1.0 + a)
    else:
        out = np.interp(tt, spec.grid, spec.values)
        beyond = tt > spec.grid[-1]
        if np.any(beyond):
            out = np.where(beyond, spec.tail_amplitude * np.where(beyond, tt, 1.0) ** (-1.0 - spec.tail_exponent), out)
    return _ret(out, t)


def kernel_norm(spec: KernelSpec) -> float:
    """``int_0^inf phi``."""
    return float(spec.branching_ratio)


def kernel_tail_integral(spec: KernelSpec, x):
    """``int_x^inf phi(s) ds``."""
    xx = _check_time(x, "x")
    n = spec.branching_ratio
    if spec.family == EXPONENTIAL:
        out = n * np.exp(-spec.decay * xx)
    elif spec.family == POWER_LAW:
        out = n * (spec.scale / (xx + spec.scale)) ** spec.alpha
    else:
        out = n - _tabulated_cdf(spec, xx)
        out = np.maximum(out, 0.0)
    return _ret(out, x)


def kernel_cdf(spec: KernelSpec, x):
    """``int_0^x phi(s) ds``."""
    xx = _check_time(x, "x")
    if spec.family == TABULATED:
        return _ret(_tabulated_cdf(spec, xx), x)
    if spec.family == EXPONENTIAL:
        out = spec.branching_ratio * -np.expm1(-spec.decay * xx)
    else:
        a, c = spec.alpha, spec.scale
        out = spec.branching_ratio * -np.expm1(-a * np.log1p(xx / c))
    return _ret(out, x)


def _tabulated_cdf(spec, x):
    g, v = spec.grid, spec.values
    seg = 0.5 * (v[1:] + v[:-1]) * np.diff(g)
    cum = np.r_[0.0, np.cumsum(seg)]
    x = np.asarray(x, dtype=float)
    xc = np.minimum(x, g[-1])
    k = np.clip(np.searchsorted(g, xc, side="right") - 1, 0, g.size - 2)
    dx = xc - g[k]
    slope = (v[k + 1] - v[k]) / (g[k + 1] - g[k])
    out = cum[k] + v[k] * dx + 0.5 * slope * dx * dx
    if spec.tail_amplitude > 0:
        beyond = x > g[-1]
        if np.any(beyond):
            a, e = spec.tail_amplitude, spec.tail_exponent
            extra = a / e * (g[-1] ** (-e) - np.where(beyond, x, g[-1]) ** (-e))
            out = out + np.where(beyond, extra, 0.0)
    return out


def kernel_tail_primitive(spec: KernelSpec, x):
    """``int_0^x int_u^inf phi(s) ds du`` (used for impact integrals)."""
    xx = _check_time(x, "x")
    n = spec.branching_ratio
    if spec.family == EXPONENTIAL:
        out = n * -np.expm1(-spec.decay * xx) / spec.decay
    elif spec.family == POWER_LAW:
        a, c = spec.alpha, spec.scale
        out = n * c * np.expm1((1.0 - a) * np.log1p(xx / c)) / (1.0 - a)
    else:
        out = np.vectorize(
            lambda u: integrate.quad(lambda s: float(kernel_tail_integral(spec, s)), 0.0, u,
                                     limit=500, points=[p for p in (spec.grid[-1],) if p < u])[0]
        )(xx)
    return _ret(out, x)


# ---------------------------------------------------------------------------
# Fourier transform


def kernel_fourier(spec: KernelSpec, z, method: str = "auto"):
    """``phi_hat(z) = int_0^inf phi(t) exp(i t z) dt``.

    ``method="auto"`` uses closed forms (exponential, shifted power law via the
    complex incomplete gamma function) and exact piecewise-linear transforms
    for tabulated kernels. ``method="quad"`` uses oscillatory quadrature on the
    half line and is intended as an independent check.
    """
    zz = np.asarray(z, dtype=float)
    if method == "quad":
        out = np.array([_fourier_quad(spec, float(w)) for w in zz.ravel()]).reshape(zz.shape)
        return complex(out) if np.ndim(z) == 0 else out
    if method != "auto":
        raise DomainError(f"unknown method {method!r}")
    n = spec.branching_ratio
    if spec.family == EXPONENTIAL:
        b = spec.decay
        out = n * b / (b - 1j * zz)
    elif spec.family == POWER_LAW:
        out = n * (1.0 - pareto_gap(zz, spec.alpha, spec.scale))
    else:
        out = np.array([_fourier_tabulated(spec, float(w)) for w in zz.ravel()]).reshape(zz.shape)
    return complex(out) if np.ndim(z) == 0 else out


def fourier_gap(spec: KernelSpec, z):
    """``1 - phi_hat(z)`` computed without cancellation near ``z = 0``."""
    zz = np.asarray(z, dtype=float)
    if spec.family == POWER_LAW:
        n = spec.branching_ratio
        out = (1.0 - n) + n * pareto_gap(zz, spec.alpha, spec.scale)
        return complex(out) if np.ndim(z) == 0 else out
    out = 1.0 - kernel_fourier(spec, zz)
    return complex(out) if np.ndim(z) == 0 else out


def pareto_gap(w, alpha: float, c: float):
    """``1 - Phi_hat(w)`` for the unit-mass shifted Pareto density (vectorized)."""
    ww = np.atleast_1d(np.asarray(w, dtype=float)).ravel()
    g = special.gamma(1.0 - alpha)
    out = _kernels.pareto_gap_array(np.ascontiguousarray(ww), float(alpha), float(c), float(g))
    return complex(out[0]) if np.ndim(w) == 0 else out.reshape(np.shape(w))


def _fourier_quad(spec, w):
    f = lambda t: float(eval_kernel(spec, t))
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            if w == 0.0:
                re, err = integrate.quad(f, 0.0, np.inf, limit=500)
                return complex(re)
            re, err_r = integrate.quad(f, 0.0, np.inf, weight="cos", wvar=abs(w), limlst=200)
            im, err_i = integrate.quad(f, 0.0, np.inf, weight="sin", wvar=abs(w), limlst=200)
        except integrate.IntegrationWarning as exc:
            raise NumericalError("oscillatory quadrature did not converge",
                                 {"z": w, "family": spec.family, "message": str(exc)}) from None
    return complex(re, np.sign(w) * im)


def _fourier_tabulated(spec, w):
    g, v = spec.grid, spec.values
    if w == 0.0:
        head = complex(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(g)))
    else:
        # exact transform of the piecewise-linear interpolant
        t0, t1 = g[:-1], g[1:]
        f0, f1 = v[:-1], v[1:]
        d = t1 - t0
        s = (f1 - f0) / d
        iw = 1j * w
        e0, e1 = np.exp(iw * t0), np.exp(iw * t1)
        head = np.sum((f1 * e1 - f0 * e0) / iw - s * (e1 - e0) / (iw * iw))
    tail = 0.0
    if spec.tail_amplitude > 0:
        a, e = spec.tail_amplitude, spec.tail_exponent
        f = lambda t: a * t ** (-1.0 - e)
        if w == 0.0:
            tail = a * g[-1] ** (-e) / e
        else:
            re = integrate.quad(f, g[-1], np.inf, weight="cos", wvar=abs(w), limlst=200)[0]
            im = integrate.quad(f, g[-1], np.inf, weight="sin", wvar=abs(w), limlst=200)[0]
            tail = complex(re, np.sign(w) * im)
    return complex(head + tail)


# ---------------------------------------------------------------------------
# offspring delays


def sample_delays(spec: KernelSpec, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw iid delays from the normalized kernel ``phi / int phi``."""
    if spec.family == EXPONENTIAL:
        return rng.standard_exponential(size) / spec.decay
    u = rng.random(size)
    if spec.family == POWER_LAW:
        # inverse of 1 - (c / (t + c))^alpha
        return spec.scale * np.expm1(-np.log1p(-u) / spec.alpha)
    n = spec.branching_ratio
    g = spec.grid
    cdf = _tabulated_cdf(spec, g) / n
    head_mass = cdf[-1]
    out = np.interp(u, cdf, g)
    beyond = u > head_mass
    if np.any(beyond) and spec.tail_amplitude > 0:
        a, e = spec.tail_amplitude / n, spec.tail_exponent
        # solve a/e (g^-e - x^-e) = u - head_mass
        rem = u[beyond] - head_mass
        out[beyond] = (g[-1] ** (-e) - rem * e / a) ** (-1.0 / e)
    return out


# ---------------------------------------------------------------------------
# near-critical family


@dataclass(frozen=True)
class NearCriticalFamily:
    """Kernel ``a_T * Phi`` and baseline ``C_mu (1 - a_T) T^(2 alpha - 1)`` at observation scale ``T``."""

    base: KernelSpec
    T: float
    a_T: float
    C_mu: float

    @property
    def alpha(self) -> float:
        return float(self.base.tail_alpha)

    @property
    def c(self) -> float:
        """Tail scale ``c`` with ``Phi(x) ~ alpha c^alpha / x^(1+alpha)``."""
        if self.base.family == POWER_LAW:
            return self.base.scale
        return (self.base.tail_amplitude / self.alpha) ** (1.0 / self.alpha)

    @property
    def mu(self) -> float:
        return self.C_mu * (1.0 - self.a_T) * self.T ** (2.0 * self.alpha - 1.0)

    @property
    def A_T(self) -> float:
        return self.T ** (-2.0 * self.alpha)

    @property
    def kernel(self) -> KernelSpec:
        return self.base.rescaled(self.a_T)

    @property
    def scale_ratio(self) -> float:
        """``T (1 - a_T)^(1/alpha)``; small means observation scale well inside the memory range."""
        return self.T * (1.0 - self.a_T) ** (1.0 / self.alpha)

    @property
    def memory_time(self) -> float:
        """``(1 - a_T)^(-1/alpha)``: time scale up to which the flow looks long-memory."""
        return (1.0 - self.a_T) ** (-1.0 / self.alpha)

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "T": self.T, "a_T": self.a_T, "C_mu": self.C_mu,
                "mu": self.mu, "A_T": self.A_T, "scale_ratio": self.scale_ratio}


def make_near_critical(base: KernelSpec, T: float, a_T: float, C_mu: float,
                       tol: float = 1e-8) -> NearCriticalFamily:
    if abs(base.branching_ratio - 1.0) > tol:
        raise DomainError(f"base kernel must integrate to 1, got {base.branching_ratio}")
    alpha = base.tail_alpha
    if alpha is None or not 0.0 < alpha < 0.5:
        raise DomainError("base kernel needs a power-law tail with 0 < alpha < 1/2")
    if not 0.0 < a_T < 1.0:
        raise DomainError("a_T must lie in (0, 1)")
    if T <= 0 or C_mu <= 0:
        raise DomainError("T and C_mu must be positive")
    return NearCriticalFamily(base, float(T), float(a_T), float(C_mu))
