"""Mid price from signed order flows.

``propagator_price`` sums the propagator kernel over past orders.
``anticipation_price`` is an independent route: ``kappa`` times the expected
eventual signed volume given the history, computed from the resolvent and
the compensated order flow. The two must agree when ``zeta`` is the
martingale kernel.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from ._io import write_csv
from .errors import AssumptionError, DomainError, HorizonError
from .kernel import EXPONENTIAL, KernelSpec, eval_kernel
from .resolvent import PropagatorKernel, ResolventGrid, compute_resolvent, propagator_closed_form
from .simulation import BUY, SELL, EventStream, MarketConfig, simulate_thinning


@dataclass(frozen=True, eq=False)
class PricePath:
    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    P0: float = 0.0
    construction: str = "propagator"

    def to_csv(self, path, config: dict | None = None) -> None:
        write_csv(path, {"kind": "price", "P0": self.P0, "construction": self.construction,
                         "config": config}, {"t": self.times, "price": self.values})


def _signed_events(buy: EventStream, sell: EventStream):
    t = np.concatenate([buy.times, sell.times])
    s = np.concatenate([np.ones(len(buy)), -np.ones(len(sell))])
    order = np.argsort(t, kind="stable")
    return t[order], s[order]


def propagator_sum(times, event_times, signs, zeta: PropagatorKernel, chunk: int = 4096):
    """``sum_{t_i <= t} s_i zeta(t - t_i)`` at each of ``times``."""
    times = np.asarray(times, dtype=float)
    if event_times.size == 0 or times.size == 0:
        return np.zeros(times.shape)
    if not zeta.exact:
        if times.max() - event_times.min() > zeta.horizon * (1 + 1e-12):
            raise HorizonError(f"lag exceeds the zeta horizon {zeta.horizon}")
        return _kernels.propagator_sum(times, event_times, signs, zeta.values, zeta.step)
    out = np.zeros(times.size)
    rows = max(1, chunk // event_times.size)
    for lo in range(0, times.size, rows):
        t = times[lo:lo + rows]
        lag = t[:, None] - event_times[None, :]
        past = lag >= 0
        vals = zeta(np.where(past, lag, 0.0))
        out[lo:lo + t.size] = np.where(past, vals * signs[None, :], 0.0).sum(axis=1)
    return out


def propagator_price(buy: EventStream, sell: EventStream, zeta: PropagatorKernel, times,
                     P0: float = 0.0, include_events: bool = False) -> PricePath:
    """``P_t = P0 + sum_buy zeta(t - t_i) - sum_sell zeta(t - t_j)``.

    Events at exactly ``t`` count (prices are right-continuous). With
    ``include_events`` the event times are merged into the sample grid.
    """
    times = np.asarray(times, dtype=float)
    if include_events:
        times = np.union1d(times, np.concatenate([buy.times, sell.times]))
    et, s = _signed_events(buy, sell)
    return PricePath(times, P0 + propagator_sum(times, et, s, zeta), P0, "propagator")


def _tail_mass_function(spec: KernelSpec, t_max: float, resolvent: ResolventGrid | None,
                        step: float):
    """``x -> int_x^inf psi`` on ``[0, t_max]``."""
    n = spec.branching_ratio
    if resolvent is None and spec.family == EXPONENTIAL:
        r = spec.decay * (1.0 - n)
        return lambda x: n / (1.0 - n) * np.exp(-r * np.asarray(x))
    if resolvent is None:
        horizon = step * max(2, int(np.ceil(t_max / step)))
        resolvent = compute_resolvent(spec, step, horizon)
    if resolvent.horizon < t_max:
        raise HorizonError("resolvent grid shorter than the evaluation time")
    return resolvent.tail_mass


def anticipation_price(buy: EventStream, sell: EventStream, spec: KernelSpec, mu: float,
                       kappa: float, v: float, t: float, P0: float = 0.0,
                       resolvent: ResolventGrid | None = None, step: float = 1e-3,
                       nodes: int = 24) -> float:
    """``P0 + kappa lim_s E[V^a_s - V^b_s | F_t]`` evaluated in closed form.

    Writing ``E[lambda_u | F_t] = mu + mu int_0^u psi + int_0^t psi(u - x) dM_x``
    and integrating over ``u > t`` gives, with ``Psi(x) = int_x^inf psi``,

        P_t = P0 + kappa v [sum_i s_i (1 + Psi(t - t_i)) - int_0^t Psi(t - x) dlambda(x) dx],

    where ``dlambda`` is the buy minus sell excess intensity. The baseline
    ``mu`` terms cancel between the sides. The integral runs piecewise
    between events with Gauss-Legendre panels no longer than half the kernel
    time scale.
    """
    n = spec.branching_ratio
    if n >= 1.0:
        raise AssumptionError("the anticipation formula needs int phi < 1")
    if t < 0:
        raise DomainError("t must be >= 0")
    et, s = _signed_events(buy, sell)
    past = et <= t
    et, s = et[past], s[past]
    if et.size == 0:
        return float(P0)
    Psi = _tail_mass_function(spec, t, resolvent, step)
    jumps = np.sum(s * (1.0 + Psi(t - et)))
    # panels between consecutive events and up to t
    edges = np.r_[et, t]
    width = 0.5 * spec.characteristic_time()
    xs, ws = [], []
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        m = int(np.ceil((b - a) / width))
        cuts = np.linspace(a, b, m + 1)
        mid = 0.5 * (cuts[1:] + cuts[:-1])
        half = 0.5 * np.diff(cuts)
        xs.append((mid[:, None] + half[:, None] * gx[None, :]).ravel())
        ws.append((half[:, None] * gw[None, :]).ravel())
    if xs:
        x = np.concatenate(xs)
        w = np.concatenate(ws)
        excess = np.zeros(x.size)
        for ti, si in zip(et, s):
            lag = x - ti
            pos = lag > 0
            excess[pos] += si * eval_kernel(spec, lag[pos])
        drift = np.sum(w * Psi(t - x) * excess)
    else:
        drift = 0.0
    return float(P0 + kappa * v * (jumps - drift))


@dataclass(frozen=True)
class DriftReport:
    """Monte Carlo check of ``E[P_{t+h} - P_t | F_t] = 0``.

    ``mean`` is the average of ``sign(dlambda_t) (P_{t+h} - P_t)``, where
    ``dlambda_t`` is the buy minus sell intensity at ``t``. Any
    ``F_t``-measurable weight must give zero mean under the martingale
    property; the unconditional increment has zero mean for every kernel by
    buy/sell symmetry and is reported for reference only.
    """

    n_paths: int
    t: float
    h: float
    mean: float
    se: float
    statistic: float
    unconditional_mean: float
    unconditional_se: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def martingale_drift_test(config: MarketConfig, n_paths: int, t: float, h: float,
                          zeta: PropagatorKernel | None = None,
                          first_replica: int = 0) -> DriftReport:
    """Simulate ``n_paths`` buy/sell pairs from an empty history at time 0 and test the drift.

    The price sums over all orders since 0, and the flows start at 0 with no
    history, which is the setting in which the propagator price is a
    martingale. ``zeta`` defaults to the closed-form martingale kernel.
    """
    if n_paths < 2:
        raise DomainError("need at least two paths")
    if zeta is None:
        zeta = propagator_closed_form(config.kernel, config.kappa, config.v, step=t + h,
                                      horizon=t + h)
    cfg = replace(config, horizon=float(t + h), burn_in=0.0, metaorder=None)
    spec = cfg.kernel
    inc = np.empty(n_paths)
    weight = np.empty(n_paths)
    grid = np.array([t, t + h])
    for k in range(n_paths):
        r = first_replica + k
        buy = simulate_thinning(cfg, BUY, r)
        sell = simulate_thinning(cfg, SELL, r)
        p = propagator_price(buy, sell, zeta, grid).values
        inc[k] = p[1] - p[0]
        bt = buy.times[buy.times <= t]
        st = sell.times[sell.times <= t]
        dl = np.sum(eval_kernel(spec, t - bt)) - np.sum(eval_kernel(spec, t - st))
        weight[k] = np.sign(dl)
    d = weight * inc
    mean = float(d.mean())
    se = float(d.std(ddof=1) / np.sqrt(n_paths))
    stat = mean / se if se > 0 else 0.0
    return DriftReport(n_paths, float(t), float(h), mean, se, float(stat), float(inc.mean()),
                       float(inc.std(ddof=1) / np.sqrt(n_paths)), bool(abs(mean) < 3 * se))
