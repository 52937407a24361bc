"""Round-trip costs under transient impact, and a toy indifference-price model.

A trader buys at rate ``v1`` on ``[0, theta T]`` and sells at rate ``v2`` on
``[theta T, T]`` with ``theta = v2 / (v1 + v2)``, so the inventory returns to
zero. With price impact ``int_0^t f(x'_s) G(t - s) ds`` the expected cost is

    E = v1 f(v1) int_0^{theta T} int_0^t G(t - s) ds dt
      + v2 f(v2) int_{theta T}^T int_{theta T}^t G(t - s) ds dt
      - v2 f(v1) int_{theta T}^T int_0^{theta T} G(t - s) ds dt.

Putting ``G = G_inf`` in this expression gives the large-``T`` limit of the
normalized cost ``E (v1 + v2)^2 / (T^2 v1 v2)``:
``1/2 G_inf (f(v2) v1 - f(v1) v2)``. It vanishes for every ``(v1, v2)``
only when ``f`` is linear.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import DomainError, NumericalError

POWER = "power"
TABULATED = "tabulated"


@dataclass(frozen=True)
class ImpactModelSpec:
    """Impact function ``f`` and decay kernel ``G(t) = G_inf + (1 - G_inf) exp(-t / theta_G)``.

    ``f`` is ``lam v^delta`` by default. A tabulated ``f`` is given by
    increasing ``f_grid`` / ``f_values`` with ``f(0) = 0`` and is linearly
    interpolated. ``decay`` overrides the exponential ``G`` with any
    nonincreasing callable tending to ``G_inf``. ``sigma`` is recorded only;
    the Brownian part of the price has no effect on the expected cost.
    """

    lam: float = 1.0
    delta: float = 1.0
    G_inf: float = 1.0
    theta_G: float = 1.0
    f_kind: str = POWER
    f_grid: tuple | None = None
    f_values: tuple | None = None
    sigma: float = 0.0
    decay: Callable[[float], float] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.G_inf <= 1.0:
            raise DomainError("G_inf must lie in [0, 1]")
        if self.theta_G <= 0:
            raise DomainError("theta_G must be positive")
        if self.f_kind == POWER:
            if self.lam <= 0 or self.delta <= 0:
                raise DomainError("power impact needs lam > 0 and delta > 0")
        elif self.f_kind == TABULATED:
            v = np.asarray(self.f_grid, dtype=float)
            f = np.asarray(self.f_values, dtype=float)
            if v.ndim != 1 or v.shape != f.shape or v.size < 2:
                raise DomainError("tabulated f needs matching grids of length >= 2")
            if v[0] != 0.0 or f[0] != 0.0:
                raise DomainError("tabulated f must start at f(0) = 0")
            if np.any(np.diff(v) <= 0) or np.any(np.diff(f) <= 0):
                raise DomainError("tabulated f must be strictly increasing")
        else:
            raise DomainError(f"unknown impact function kind {self.f_kind!r}")

    @classmethod
    def power(cls, delta: float, lam: float = 1.0, G_inf: float = 1.0,
              theta_G: float = 1.0) -> "ImpactModelSpec":
        return cls(lam=lam, delta=delta, G_inf=G_inf, theta_G=theta_G)

    @classmethod
    def tabulated(cls, v, f, G_inf: float = 1.0, theta_G: float = 1.0) -> "ImpactModelSpec":
        return cls(f_kind=TABULATED, f_grid=tuple(map(float, v)), f_values=tuple(map(float, f)),
                   G_inf=G_inf, theta_G=theta_G)

    def f(self, v):
        v = np.asarray(v, dtype=float)
        if self.f_kind == POWER:
            out = self.lam * v ** self.delta
        else:
            if np.any(v > self.f_grid[-1]):
                raise DomainError("rate beyond the tabulated impact function")
            out = np.interp(v, self.f_grid, self.f_values)
        return float(out) if out.ndim == 0 else out

    def G(self, t: float) -> float:
        if self.decay is not None:
            return float(self.decay(t))
        return self.G_inf + (1.0 - self.G_inf) * math.exp(-t / self.theta_G)

    @property
    def is_linear(self) -> bool:
        if self.f_kind == POWER:
            return self.delta == 1.0
        v, f = np.asarray(self.f_grid), np.asarray(self.f_values)
        return bool(np.allclose(f[1:] / v[1:], f[1] / v[1], rtol=1e-12, atol=0.0))

    def to_dict(self) -> dict:
        d = {"f_kind": self.f_kind, "G_inf": self.G_inf, "theta_G": self.theta_G,
             "sigma": self.sigma}
        if self.f_kind == POWER:
            d.update(lam=self.lam, delta=self.delta)
        else:
            d.update(f_grid=list(self.f_grid), f_values=list(self.f_values))
        if self.decay is not None:
            d["decay"] = "custom"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ImpactModelSpec":
        d = dict(d)
        if d.pop("decay", None) is not None:
            raise DomainError("a custom decay kernel cannot be restored from a dict")
        for key in ("f_grid", "f_values"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def _dblquad(G, t_lo, t_hi, s_lo, s_hi, epsabs, epsrel):
    """``int_{t_lo}^{t_hi} int_{s_lo}^{s_hi(t)} G(t - s) ds dt``."""
    val, err = integrate.dblquad(lambda s, t: G(t - s), t_lo, t_hi, s_lo, s_hi,
                                 epsabs=epsabs, epsrel=epsrel)
    return val, err


def round_trip_cost(model: ImpactModelSpec, v1: float, v2: float, T: float,
                    epsrel: float = 1e-10) -> float:
    """Expected cost of buying at ``v1`` then selling at ``v2`` over ``[0, T]``, by 2-D quadrature."""
    if v1 <= 0 or v2 <= 0 or T <= 0:
        raise DomainError("v1, v2 and T must be positive")
    theta = v2 / (v1 + v2)
    tT = theta * T
    G = model.G
    # each block is scaled by its area so the absolute tolerance is relative
    scale = T * T
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            a, ea = _dblquad(G, 0.0, tT, 0.0, lambda t: t, 1e-13 * scale, epsrel)
            b, eb = _dblquad(G, tT, T, tT, lambda t: t, 1e-13 * scale, epsrel)
            c, ec = _dblquad(G, tT, T, 0.0, tT, 1e-13 * scale, epsrel)
        except integrate.IntegrationWarning as exc:
            raise NumericalError("round-trip cost quadrature failed",
                                 {"v1": v1, "v2": v2, "T": T, "error": str(exc)}) from None
    f1, f2 = model.f(v1), model.f(v2)
    return v1 * f1 * a + v2 * f2 * b - v2 * f1 * c


def round_trip_cost_exponential(model: ImpactModelSpec, v1: float, v2: float, T: float) -> float:
    """Closed form of :func:`round_trip_cost` for the exponential decay kernel.

    Uses ``int_0^x int_0^t e^{-(t - s)/th} ds dt = th x - th^2 (1 - e^{-x/th})``.
    """
    if model.decay is not None:
        raise DomainError("closed form needs the built-in exponential decay kernel")
    g, th = model.G_inf, model.theta_G
    theta = v2 / (v1 + v2)
    x1, x2 = theta * T, (1.0 - theta) * T

    def tri(x):  # int_0^x int_0^t G(t - s) ds dt
        return 0.5 * g * x * x + (1.0 - g) * (th * x - th * th * (-math.expm1(-x / th)))

    def rect(x, y):  # int_x^{x+y} int_0^x G(t - s) ds dt
        ex = -math.expm1(-x / th)
        ey = -math.expm1(-y / th)
        return g * x * y + (1.0 - g) * th * th * ex * ey

    f1, f2 = model.f(v1), model.f(v2)
    return v1 * f1 * tri(x1) + v2 * f2 * tri(x2) - v2 * f1 * rect(x1, x2)


def normalized_cost(model: ImpactModelSpec, v1: float, v2: float, T: float,
                    method: str = "quadrature") -> float:
    """``E (v1 + v2)^2 / (T^2 v1 v2)``."""
    if method == "quadrature":
        E = round_trip_cost(model, v1, v2, T)
    elif method == "closed-form":
        E = round_trip_cost_exponential(model, v1, v2, T)
    else:
        raise DomainError(f"unknown method {method!r}")
    return E * (v1 + v2) ** 2 / (T * T * v1 * v2)


def leading_cost_term(model: ImpactModelSpec, v1: float, v2: float) -> float:
    """Large-``T`` limit of the normalized cost: ``1/2 G_inf (f(v2) v1 - f(v1) v2)``."""
    return 0.5 * model.G_inf * (model.f(v2) * v1 - model.f(v1) * v2)


@dataclass(frozen=True)
class Extrapolation:
    limit: float
    error: float
    T_values: tuple
    values: tuple

    def to_dict(self) -> dict:
        return {"limit": self.limit, "error": self.error, "T": list(self.T_values),
                "values": list(self.values)}


def richardson_extrapolate(T_values, values) -> Extrapolation:
    """Limit ``T -> inf`` assuming ``values = L + c1 / T + c2 / T^2 + ...``.

    Fits a polynomial in ``1/T`` through all points and takes its constant
    term; the error is the change from dropping the smallest ``T``.
    """
    x = 1.0 / np.asarray(T_values, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size < 2 or x.size != y.size:
        raise DomainError("need at least two matching (T, value) pairs")
    if np.unique(x).size != x.size:
        raise DomainError("T values must be distinct")
    order = np.argsort(x)
    x, y = x[order], y[order]

    def limit(xs, ys):
        return float(np.polynomial.polynomial.polyfit(xs, ys, xs.size - 1)[0])

    full = limit(x, y)
    reduced = limit(x[:-1], y[:-1])
    return Extrapolation(full, abs(full - reduced), tuple(float(t) for t in T_values),
                         tuple(float(v) for v in values))


def extrapolated_cost(model: ImpactModelSpec, v1: float, v2: float,
                      T_values=(10.0, 100.0, 1000.0), method: str = "quadrature") -> Extrapolation:
    vals = [normalized_cost(model, v1, v2, T, method) for T in T_values]
    return richardson_extrapolate(T_values, vals)


@dataclass(frozen=True)
class ScanReport:
    model: dict
    points: tuple
    manipulable: bool
    tolerance: float

    @property
    def verdict(self) -> str:
        return "manipulable" if self.manipulable else "clean"

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "manipulable": self.manipulable,
                "tolerance": self.tolerance, "model": self.model, "grid": list(self.points)}


def manipulation_scan(model: ImpactModelSpec, grid, T_values=(10.0, 100.0, 1000.0),
                      tol: float = 1e-6, method: str = "quadrature") -> ScanReport:
    """Flag ``model`` if some round trip on ``grid`` has a negative extrapolated cost.

    A point counts as negative when its limit is below ``-tol`` times the
    cost scale ``f(v1) v2 + f(v2) v1`` and below minus its own extrapolation
    error, so quadrature noise around an exact zero is not flagged.
    """
    points = []
    flagged = False
    for v1, v2 in grid:
        ex = extrapolated_cost(model, float(v1), float(v2), T_values, method)
        scale = model.f(v1) * v2 + model.f(v2) * v1
        neg = ex.limit < -max(tol * scale, ex.error)
        flagged |= neg
        points.append({"v1": float(v1), "v2": float(v2), "limit": ex.limit, "error": ex.error,
                       "leading_term": leading_cost_term(model, v1, v2), "values": list(ex.values),
                       "negative": bool(neg)})
    return ScanReport(model.to_dict(), tuple(points), bool(flagged), tol)


def default_grid(rates=(0.25, 1.0, 4.0)):
    """All ordered pairs of distinct rates."""
    return [(a, b) for a in rates for b in rates if a != b]


# ---------------------------------------------------------------------------
# indifference prices


@dataclass(frozen=True)
class InvestorPopulation:
    """Mean-variance investors: investor ``i`` holds ``N_i = (E_i - P) / (2 lam_i Sigma_i)``."""

    E: tuple
    lam: tuple
    Sigma: tuple
    N: float

    def __post_init__(self):
        E, lam, S = (np.asarray(x, dtype=float) for x in (self.E, self.lam, self.Sigma))
        if E.size == 0:
            raise DomainError("empty investor population")
        if not (E.shape == lam.shape == S.shape) or E.ndim != 1:
            raise DomainError("E, lam and Sigma must be 1-D of equal length")
        if np.any(lam <= 0) or np.any(S <= 0):
            raise DomainError("risk aversions and variances must be positive")

    @classmethod
    def identical(cls, n: int, E: float, lam: float, Sigma: float, N: float) -> "InvestorPopulation":
        return cls((E,) * n, (lam,) * n, (Sigma,) * n, N)

    def holdings(self, P: float) -> np.ndarray:
        E, lam, S = (np.asarray(x, dtype=float) for x in (self.E, self.lam, self.Sigma))
        return (E - P) / (2.0 * lam * S)

    def to_dict(self) -> dict:
        return {"E": list(self.E), "lam": list(self.lam), "Sigma": list(self.Sigma), "N": self.N}


def impact_coefficient(pop: InvestorPopulation) -> float:
    """``k = 1 / sum_i 1 / (2 lam_i Sigma_i)``."""
    w = [1.0 / (2.0 * l * s) for l, s in zip(pop.lam, pop.Sigma)]
    return 1.0 / math.fsum(w)


def indifference_price(pop: InvestorPopulation) -> float:
    """Price at which optimal holdings sum to the supply ``N``."""
    num = math.fsum(e / (2.0 * l * s) for e, l, s in zip(pop.E, pop.lam, pop.Sigma))
    return (num - pop.N) * impact_coefficient(pop)


@dataclass(frozen=True)
class SupplyShift:
    price: float
    new_price: float
    k: float
    N0: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def price_after_supply_shift(pop: InvestorPopulation, N0: float) -> SupplyShift:
    """A non-optimizing buyer removes ``N0`` shares: ``P+ = P + k N0``."""
    P = indifference_price(pop)
    k = impact_coefficient(pop)
    return SupplyShift(P, P + k * N0, k, float(N0))
