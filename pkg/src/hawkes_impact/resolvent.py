"""Resolvent of the kernel and the propagator kernel it implies.

The resolvent ``psi = sum_k phi^{*k}`` solves ``psi = phi + phi * psi``. The
propagator ``zeta`` can be built from it,

    zeta(t) = kappa v [1 + int_t^inf psi - int_0^t phi(x) int_{t-x}^inf psi du dx],

or directly from the kernel, ``zeta(x) = zeta(0) (1 - int_0^x phi)`` with
``zeta(0) = kappa v / (1 - int phi)``. Both routes are implemented so they
can be checked against each other.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import AccuracyWarning, CriticalityError, DomainError, HorizonError, MissingParameterError
from .kernel import EXPONENTIAL, KernelSpec, eval_kernel, kernel_cdf, kernel_tail_primitive


def _grid(step, horizon):
    if step <= 0 or horizon <= 0:
        raise DomainError("step and horizon must be positive")
    n = int(round(horizon / step))
    if abs(n * step - horizon) > 1e-9 * horizon:
        raise DomainError("horizon must be a multiple of step")
    return np.arange(n + 1) * step


def trapezoid_convolution(f, g, step):
    """Trapezoid rule for ``int_0^t f(t - s) g(s) ds`` on the grid ``k * step``."""
    full = fftconvolve(f, g)[: f.size]
    return step * (full - 0.5 * f * g[0] - 0.5 * f[0] * g)


def cumulative_trapezoid(f, step):
    out = np.empty_like(f)
    out[0] = 0.0
    np.cumsum(0.5 * step * (f[1:] + f[:-1]), out=out[1:])
    return out


@dataclass(frozen=True, eq=False)
class ResolventGrid:
    step: float
    horizon: float
    values: np.ndarray = field(repr=False)
    spec: KernelSpec
    iterations: int = 0
    residual: float = 0.0
    horizon_warning: bool = False
    converged: bool = True

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.step

    @property
    def total_mass(self) -> float:
        """``int psi`` over all of ``[0, inf)``: ``n / (1 - n)``."""
        n = self.spec.branching_ratio
        return n / (1.0 - n)

    def grid_mass(self) -> float:
        return float(cumulative_trapezoid(self.values, self.step)[-1])

    def tail_mass(self, t) -> np.ndarray:
        """``int_t^inf psi`` for grid-interpolated ``t`` within the horizon."""
        t = np.asarray(t, dtype=float)
        if np.any(t > self.horizon + 1e-12) or np.any(t < 0):
            raise HorizonError(f"t outside [0, {self.horizon}]")
        cum = cumulative_trapezoid(self.values, self.step)
        x = t / self.step
        k = np.minimum(np.floor(x).astype(int), self.values.size - 2)
        f = x - k
        # exact integral of the linear interpolant on the partial cell
        partial = self.step * (self.values[k] * f + 0.5 * (self.values[k + 1] - self.values[k]) * f * f)
        return self.total_mass - (cum[k] + partial)

    def to_csv(self, path) -> None:
        from ._io import write_csv
        header = {"kind": "resolvent", "step": self.step, "horizon": self.horizon,
                  "spec": self.spec.to_dict(), "iterations": self.iterations,
                  "residual": self.residual, "horizon_warning": self.horizon_warning,
                  "converged": self.converged}
        write_csv(path, header, {"t": self.times, "psi": self.values})


def compute_resolvent(spec: KernelSpec, step: float, horizon: float, tol: float = 1e-10,
                      max_iter: int = 100_000) -> ResolventGrid:
    """Solve the renewal equation ``psi = phi + phi * psi`` on ``[0, horizon]``.

    Fixed-point iteration with FFT trapezoid convolutions, stopped when two
    successive iterates differ by less than ``tol`` in sup norm. Iterates
    increase monotonically because ``phi >= 0``.
    """
    if spec.branching_ratio >= 1.0:
        raise CriticalityError("resolvent series diverges for int phi >= 1")
    t = _grid(step, horizon)
    phi = np.asarray(eval_kernel(spec, t), dtype=float)
    psi = phi.copy()
    it = 0
    converged = True
    if np.any(phi):
        for it in range(1, max_iter + 1):
            new = phi + trapezoid_convolution(phi, psi, step)
            diff = float(np.max(np.abs(new - psi)))
            psi = new
            if diff < tol:
                break
        else:
            converged = False
            warnings.warn(f"resolvent iteration stopped after {max_iter} passes", AccuracyWarning)
    residual = float(np.max(np.abs(psi - phi - trapezoid_convolution(phi, psi, step))))
    flag = _resolvent_horizon_too_small(spec, horizon, psi, step)
    if flag:
        warnings.warn("resolvent horizon is short compared to its decay; grid mass is far from "
                      "int phi / (1 - int phi)", AccuracyWarning)
    psi.setflags(write=False)
    return ResolventGrid(step, float(t[-1]), psi, spec, it, residual, flag, converged)


def _resolvent_horizon_too_small(spec, horizon, psi, step):
    n = spec.branching_ratio
    if n == 0:
        return False
    if spec.family == EXPONENTIAL:
        return bool(np.exp(-spec.decay * (1.0 - n) * horizon) > 1e-6)
    missing = n / (1.0 - n) - cumulative_trapezoid(psi, step)[-1]
    return bool(missing > 0.5 * n / (1.0 - n))


@dataclass(frozen=True, eq=False)
class PropagatorKernel:
    """Tabulated propagator ``zeta`` plus, for closed-form kernels, an exact evaluator."""

    step: float
    horizon: float
    values: np.ndarray = field(repr=False)
    zeta0: float
    zeta_inf: float
    kappa: float
    v: float
    spec: KernelSpec | None = None
    provenance: str = "closed-form"

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.step

    @property
    def exact(self) -> bool:
        return self.provenance in ("closed-form", "constant")

    @classmethod
    def constant(cls, zeta0: float, step: float = 1.0, horizon: float = 1.0,
                 kappa: float = 1.0, v: float = 1.0) -> PropagatorKernel:
        """Purely permanent kernel ``zeta(x) = zeta0``."""
        t = _grid(step, horizon)
        return cls(step, float(t[-1]), np.full(t.size, float(zeta0)), float(zeta0), float(zeta0),
                   kappa, v, None, "constant")

    def __call__(self, x):
        xx = np.asarray(x, dtype=float)
        if np.any(xx < 0):
            raise DomainError("zeta is defined for x >= 0")
        if self.provenance == "constant":
            out = np.full(xx.shape, self.zeta0)
        elif self.provenance == "closed-form":
            out = self.zeta0 * (1.0 - np.asarray(kernel_cdf(self.spec, xx)))
        else:
            if np.any(xx > self.horizon * (1 + 1e-12)):
                raise HorizonError(f"lag beyond the zeta horizon {self.horizon}")
            out = np.interp(xx, self.times, self.values)
        return float(out) if np.ndim(x) == 0 else out

    def integral(self, x):
        """``int_0^x zeta``."""
        xx = np.asarray(x, dtype=float)
        if np.any(xx < 0):
            raise DomainError("x must be >= 0")
        if self.provenance == "constant":
            out = self.zeta0 * xx
        elif self.provenance == "closed-form":
            n = self.spec.branching_ratio
            out = self.zeta0 * ((1.0 - n) * xx + np.asarray(kernel_tail_primitive(self.spec, xx)))
        else:
            if np.any(xx > self.horizon * (1 + 1e-12)):
                raise HorizonError(f"integration limit beyond the zeta horizon {self.horizon}")
            z = self.values
            cum = cumulative_trapezoid(z, self.step)
            u = xx / self.step
            k = np.minimum(np.floor(u).astype(int), z.size - 2)
            f = u - k
            out = cum[k] + self.step * (z[k] * f + 0.5 * (z[k + 1] - z[k]) * f * f)
        return float(out) if np.ndim(x) == 0 else out

    def to_csv(self, path) -> None:
        from ._io import write_csv
        header = {"kind": "propagator", "step": self.step, "horizon": self.horizon,
                  "zeta0": self.zeta0, "zeta_inf": self.zeta_inf, "kappa": self.kappa, "v": self.v,
                  "spec": self.spec.to_dict() if self.spec is not None else None,
                  "provenance": self.provenance}
        write_csv(path, header, {"t": self.times, "zeta": self.values})


def propagator_from_resolvent(resolvent: ResolventGrid, kappa: float, v: float,
                              tail: str = "mass") -> PropagatorKernel:
    """Propagator from the resolvent formula.

    ``int_t^inf psi`` needs ``psi`` past the grid. ``tail="mass"`` closes it
    with the exact total mass ``n / (1 - n)``; ``tail="fit"`` extrapolates the
    grid with an exponential (exponential kernels) or ``K / x^(1+alpha)`` tail
    fitted on the last decade; ``tail="none"`` truncates at the horizon.
    """
    spec = resolvent.spec
    step = resolvent.step
    psi = np.asarray(resolvent.values)
    t = resolvent.times
    cum = cumulative_trapezoid(psi, step)
    if tail == "mass":
        total = resolvent.total_mass
    elif tail == "fit":
        total = cum[-1] + _fitted_tail_mass(spec, t, psi)
    elif tail == "none":
        total = cum[-1]
        if spec.family != EXPONENTIAL or resolvent.horizon_warning:
            warnings.warn("resolvent tail beyond the horizon ignored; zeta is biased",
                          AccuracyWarning)
    else:
        raise DomainError(f"unknown tail model {tail!r}")
    upper = total - cum
    phi = np.asarray(eval_kernel(spec, t), dtype=float)
    zeta = kappa * v * (1.0 + upper - trapezoid_convolution(phi, upper, step))
    zeta.setflags(write=False)
    return PropagatorKernel(step, resolvent.horizon, zeta, float(zeta[0]), kappa * v,
                            kappa, v, spec, "resolvent")


def _fitted_tail_mass(spec, t, psi):
    end = t[-1]
    if spec.family == EXPONENTIAL:
        sel = t >= 0.9 * end
        slope = np.polyfit(t[sel], np.log(psi[sel]), 1)[0]
        rate = -slope
        return float(psi[-1] / rate) if rate > 0 else np.inf
    sel = (t >= end / 10.0) & (psi > 0)
    slope, intercept = np.polyfit(np.log(t[sel]), np.log(psi[sel]), 1)
    expo = -slope - 1.0
    if expo <= 0:
        return np.inf
    return float(np.exp(intercept) * end ** (-expo) / expo)


def propagator_closed_form(spec: KernelSpec, kappa: float, v: float, step: float, horizon: float,
                           zeta0: float | None = None) -> PropagatorKernel:
    """``zeta(x) = zeta(0) (1 - int_0^x phi)`` tabulated on the grid.

    At criticality (``int phi = 1``) the level ``zeta0`` must be supplied.
    """
    n = spec.branching_ratio
    if zeta0 is None:
        if spec.is_critical:
            raise MissingParameterError("critical kernel: zeta(0) must be given explicitly")
        zeta0 = kappa * v / (1.0 - n)
    t = _grid(step, horizon)
    values = zeta0 * (1.0 - np.asarray(kernel_cdf(spec, t)))
    values.setflags(write=False)
    zeta_inf = 0.0 if spec.is_critical else zeta0 * (1.0 - n)
    return PropagatorKernel(step, float(t[-1]), values, float(zeta0), float(zeta_inf),
                            kappa, v, spec, "closed-form")


@dataclass(frozen=True)
class IdentityResidual:
    """Residual of ``zeta' + zeta(0) phi`` on grid midpoints."""

    max_abs: float
    l2: float
    residual: np.ndarray = field(repr=False)
    zeta0: float

    @property
    def relative_max(self) -> float:
        return self.max_abs / abs(self.zeta0)


def check_martingale_identity(zeta: PropagatorKernel, spec: KernelSpec) -> IdentityResidual:
    """Check ``zeta'(x) = -zeta(0) phi(x)`` with centred differences at cell midpoints."""
    z = np.asarray(zeta.values, dtype=float)
    step = zeta.step
    mid = (np.arange(z.size - 1) + 0.5) * step
    r = np.diff(z) / step + z[0] * np.asarray(eval_kernel(spec, mid))
    return IdentityResidual(float(np.max(np.abs(r))), float(np.sqrt(step * np.sum(r * r))),
                            r, float(z[0]))


def resolvent_closed_form_exponential(spec: KernelSpec, t):
    """``psi(t) = a b exp(-b (1 - a) t)`` for the exponential family."""
    if spec.family != EXPONENTIAL:
        raise DomainError("closed-form resolvent only for exponential kernels")
    a, b = spec.branching_ratio, spec.decay
    return a * b * np.exp(-b * (1.0 - a) * np.asarray(t, dtype=float))
