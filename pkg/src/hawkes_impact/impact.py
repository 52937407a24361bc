"""Metaorder impact curves.

``MI(t) = F int_0^{min(t, tau)} zeta(t - s) ds`` is the expected price move
caused by a metaorder executed as a Poisson flow of rate ``F`` on
``[0, tau]``. It is computed exactly from the propagator kernel, estimated by
Monte Carlo, and rescaled for the near-critical limit, where
``(1 - a) / tau^(1 - alpha) MI(t tau)`` tends to ``K' t^(1 - alpha)`` with
``K' = c^alpha kappa v F / (1 - alpha)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from ._io import write_csv
from .errors import DomainError, HorizonError
from .kernel import KernelSpec
from .price import propagator_sum
from .resolvent import PropagatorKernel, propagator_closed_form
from .simulation import BUY, SELL, MarketConfig, simulate_market


@dataclass(frozen=True, eq=False)
class ImpactCurve:
    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    se: np.ndarray | None = field(default=None, repr=False)
    metadata: dict = field(default_factory=dict)
    renormalization: dict | None = None

    def to_csv(self, path, extra: dict | None = None) -> None:
        header = {"kind": "impact", "metadata": self.metadata,
                  "renormalization": self.renormalization, **(extra or {})}
        cols = {"t": self.times, "MI": self.values}
        if self.se is not None:
            cols["SE"] = self.se
        write_csv(path, header, cols)


def impact_analytic(zeta: PropagatorKernel, F: float, tau: float, times) -> ImpactCurve:
    """``MI(t) = F [Z(t) - Z((t - tau)^+)]`` with ``Z`` the primitive of ``zeta``.

    Closed-form kernels integrate exactly; tabulated kernels integrate their
    linear interpolant exactly and raise :class:`HorizonError` past the table.
    """
    if F < 0 or tau < 0:
        raise DomainError("F and tau must be >= 0")
    t = np.asarray(times, dtype=float)
    if np.any(t < 0):
        raise DomainError("times must be >= 0")
    if F == 0 or tau == 0:
        values = np.zeros(t.shape)
    else:
        values = F * (zeta.integral(t) - zeta.integral(np.maximum(t - tau, 0.0)))
    meta = {"F": F, "tau": tau, "zeta": zeta.provenance, "zeta0": zeta.zeta0,
            "kappa": zeta.kappa, "v": zeta.v, "method": "analytic"}
    if zeta.spec is not None:
        meta["kernel"] = zeta.spec.to_dict()
    return ImpactCurve(t, np.asarray(values, dtype=float), None, meta)


def _column_means(rows):
    # fsum is correctly rounded, so the mean does not depend on replica order
    return np.array([math.fsum(col) / len(col) for col in rows.T])


def impact_monte_carlo(config: MarketConfig, n_paths: int, times,
                       zeta: PropagatorKernel | None = None, antithetic: bool = False,
                       method: str = "thinning", first_replica: int = 0) -> ImpactCurve:
    """Average of ``P_t - P_0`` over replicas with the metaorder overlay.

    With ``antithetic`` each replica is paired with its mirror image in
    which the anonymous buy and sell flows swap roles; the pair average
    removes the anonymous contribution, which has the same law either way.
    """
    if config.metaorder is None:
        raise DomainError("config has no metaorder")
    if n_paths < 2:
        raise DomainError("need at least two paths")
    t = np.asarray(times, dtype=float)
    if zeta is None:
        zeta = propagator_closed_form(config.kernel, config.kappa, config.v,
                                      step=config.horizon, horizon=config.horizon)
    meta_sign = 1.0 if config.metaorder.side == BUY else -1.0
    rows = np.empty((n_paths, t.size))
    for k in range(n_paths):
        m = simulate_market(config, first_replica + k, method)
        anon = (propagator_sum(t, m[BUY].times, np.ones(len(m[BUY])), zeta)
                - propagator_sum(t, m[SELL].times, np.ones(len(m[SELL])), zeta))
        own = meta_sign * propagator_sum(t, m["metaorder"].times, np.ones(len(m["metaorder"])), zeta)
        rows[k] = own if antithetic else own + anon
    mean = _column_means(rows)
    se = rows.std(axis=0, ddof=1) / np.sqrt(n_paths)
    meta = {"F": config.metaorder.rate, "tau": config.metaorder.duration,
            "side": config.metaorder.side, "zeta": zeta.provenance, "n_paths": n_paths,
            "antithetic": antithetic, "seed": config.seed, "method": "monte-carlo",
            "config": config.to_dict()}
    return ImpactCurve(t, mean, se, meta)


def renormalize_impact(curve: ImpactCurve, a_T: float, tau_T: float, alpha: float) -> ImpactCurve:
    """``RMI(t) = (1 - a_T) / tau_T^(1 - alpha) MI(t tau_T)`` on the samples with ``t <= 1``."""
    if tau_T <= 0:
        raise DomainError("tau_T must be positive")
    if curve.times.size == 0 or curve.times.max() < tau_T * (1 - 1e-12):
        raise HorizonError("curve does not reach tau_T")
    keep = curve.times <= tau_T * (1 + 1e-12)
    factor = (1.0 - a_T) / tau_T ** (1.0 - alpha)
    se = None if curve.se is None else factor * curve.se[keep]
    record = {"a_T": a_T, "tau_T": tau_T, "alpha": alpha, "factor": factor}
    return ImpactCurve(curve.times[keep] / tau_T, factor * curve.values[keep], se,
                       dict(curve.metadata), record)


def limit_amplitude(c: float, alpha: float, kappa: float, v: float, F: float) -> float:
    """``K' = c^alpha kappa v F / (1 - alpha)``."""
    return c ** alpha * kappa * v * F / (1.0 - alpha)


def near_critical_tau(a_T: float, alpha: float) -> float:
    """``tau_T = (1 - a_T)^(-1 / (2 alpha))``: grows while ``tau_T (1 - a_T)^(1/alpha) -> 0``."""
    return (1.0 - a_T) ** (-1.0 / (2.0 * alpha))


def near_critical_impact(base: KernelSpec, a_T: float, t, kappa: float = 1.0, v: float = 1.0,
                         F: float = 1.0, tau_T: float | None = None) -> ImpactCurve:
    """Renormalized analytic impact for the kernel ``a_T * base`` on rescaled times ``t`` in [0, 1]."""
    alpha = base.tail_alpha
    if tau_T is None:
        tau_T = near_critical_tau(a_T, alpha)
    t = np.asarray(t, dtype=float)
    spec = base.rescaled(a_T)
    zeta = propagator_closed_form(spec, kappa, v, step=tau_T, horizon=tau_T)
    mi = impact_analytic(zeta, F, tau_T, t * tau_T)
    return renormalize_impact(mi, a_T, tau_T, alpha)


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    amplitude: float
    r2: float
    window: tuple
    n_points: int

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "amplitude": self.amplitude, "r2": self.r2,
                "window": list(self.window), "n_points": self.n_points}


def fit_log_log(x, y, window=None) -> PowerLawFit:
    """Least squares of ``log y`` on ``log x`` over ``window`` (inclusive)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if window is not None:
        lo, hi = window
        sel = (x >= lo * (1 - 1e-12)) & (x <= hi * (1 + 1e-12))
        x, y = x[sel], y[sel]
    else:
        window = (float(x.min()), float(x.max()))
    if x.size < 2:
        raise DomainError("fewer than two points in the fit window")
    if np.any(y <= 0) or np.any(x <= 0):
        raise DomainError("power-law fit needs strictly positive values in the window")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss if ss > 0 else 1.0
    return PowerLawFit(float(slope), float(np.exp(intercept)), float(r2),
                       (float(window[0]), float(window[1])), int(x.size))


def fit_power_law(curve: ImpactCurve, window=None) -> PowerLawFit:
    """Fit ``MI(t) ~ A t^nu`` on ``window``; default is the last two decades of the curve."""
    if window is None:
        hi = float(curve.times.max())
        window = (0.01 * hi, hi)
    return fit_log_log(curve.times, curve.values, window)


def _exact(x):
    return x if isinstance(x, Fraction) else float(x)


def exponent_link(gamma):
    """``nu = (1 + gamma) / 2``; a :class:`fractions.Fraction` input gives an exact result."""
    g = _exact(gamma)
    if not 0 < g < 1:
        raise DomainError("gamma must lie in (0, 1)")
    return (1 + g) / 2


def exponent_link_inverse(nu):
    n = _exact(nu)
    if not Fraction(1, 2) < n < 1:
        raise DomainError("nu must lie in (1/2, 1)")
    return 2 * n - 1


@dataclass(frozen=True)
class LimitStudy:
    a_values: tuple
    tau_values: tuple
    distances: tuple
    amplitude: float

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.distances, self.distances[1:]))

    def to_dict(self) -> dict:
        return {"a_T": list(self.a_values), "tau_T": list(self.tau_values),
                "sup_distance": list(self.distances), "K_prime": self.amplitude,
                "decreasing": self.decreasing}


def impact_limit_study(base: KernelSpec, a_values, t=None, kappa: float = 1.0, v: float = 1.0,
                       F: float = 1.0) -> LimitStudy:
    """Sup distance between the renormalized impact and ``K' t^(1 - alpha)`` along ``a_values``."""
    alpha = base.tail_alpha
    c = base.scale if base.scale is not None else (base.tail_amplitude / alpha) ** (1 / alpha)
    if t is None:
        t = np.linspace(0.0, 1.0, 201)
    k = limit_amplitude(c, alpha, kappa, v, F)
    taus, dist = [], []
    for a in a_values:
        rmi = near_critical_impact(base, a, t, kappa, v, F)
        taus.append(rmi.renormalization["tau_T"])
        dist.append(float(np.max(np.abs(rmi.values - k * rmi.times ** (1.0 - alpha)))))
    return LimitStudy(tuple(float(a) for a in a_values), tuple(taus), tuple(dist), k)


def metaorder_config(config: MarketConfig, F: float, tau: float, side: str = BUY) -> MarketConfig:
    from .simulation import Metaorder
    return replace(config, metaorder=Metaorder(F, tau, side))


__all__ = ["ImpactCurve", "impact_analytic", "impact_monte_carlo", "renormalize_impact",
           "limit_amplitude", "near_critical_tau", "near_critical_impact", "PowerLawFit",
           "fit_log_log", "fit_power_law", "exponent_link", "exponent_link_inverse",
           "LimitStudy", "impact_limit_study", "metaorder_config", "SELL"]
