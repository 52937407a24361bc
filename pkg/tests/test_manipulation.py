import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from hawkes_impact.errors import DomainError
from hawkes_impact.manipulation import (ImpactModelSpec, InvestorPopulation, default_grid,
                                        extrapolated_cost, impact_coefficient, indifference_price,
                                        leading_cost_term, manipulation_scan, normalized_cost,
                                        price_after_supply_shift, richardson_extrapolate,
                                        round_trip_cost, round_trip_cost_exponential)

rates = st.floats(0.1, 5.0)


@pytest.mark.parametrize("delta,g", [(0.5, 0.3), (1.0, 0.0), (1.5, 1.0), (1.0, 0.7)])
@pytest.mark.parametrize("v1,v2,T", [(1.0, 2.0, 3.0), (4.0, 0.25, 50.0), (0.5, 0.5, 10.0)])
def test_quadrature_matches_closed_form(delta, g, v1, v2, T):
    m = ImpactModelSpec.power(delta, lam=0.8, G_inf=g, theta_G=2.0)
    assert round_trip_cost(m, v1, v2, T) == pytest.approx(round_trip_cost_exponential(m, v1, v2, T), rel=1e-8)


def test_custom_decay_kernel():
    # power-law decay; the quadrature must track the callable, not the exponential default
    m = ImpactModelSpec(delta=1.0, G_inf=0.0, decay=lambda t: (1.0 + t) ** -0.5)
    th = 1.0 / 3.0
    # linear f, v1 = 2 v2: direct nested integral of (1 + t - s)^(-1/2)
    T = 3.0
    x1 = th * T
    tri = lambda x: (4.0 / 3.0) * ((1 + x) ** 1.5 - 1) - 2.0 * x
    rect = lambda x, y: (4.0 / 3.0) * ((1 + x + y) ** 1.5 - (1 + x) ** 1.5 - (1 + y) ** 1.5 + 1)
    v1, v2 = 2.0, 1.0
    expected = v1 * v1 * tri(x1) + v2 * v2 * tri(T - x1) - v2 * v1 * rect(x1, T - x1)
    assert round_trip_cost(m, v1, v2, T) == pytest.approx(expected, rel=1e-9)
    with pytest.raises(DomainError):
        round_trip_cost_exponential(m, v1, v2, T)
    with pytest.raises(DomainError):
        ImpactModelSpec.from_dict(m.to_dict())


@given(st.floats(0.2, 2.0), st.floats(0.0, 1.0), rates, rates)
def test_leading_term_is_antisymmetric(delta, g, v1, v2):
    m = ImpactModelSpec.power(delta, G_inf=g)
    assert leading_cost_term(m, v1, v2) == pytest.approx(-leading_cost_term(m, v2, v1), abs=1e-12)


@settings(max_examples=25)
@given(st.floats(0.0, 1.0), st.floats(0.2, 5.0), rates, rates, st.floats(0.1, 200.0))
def test_linear_impact_costs_are_nonnegative(g, th, v1, v2, T):
    # G is a positive mixture of a constant and an exponential, hence positive definite
    m = ImpactModelSpec.power(1.0, G_inf=g, theta_G=th)
    scale = T * T * (v1 + v2) ** 2
    assert round_trip_cost_exponential(m, v1, v2, T) >= -1e-12 * scale


@pytest.mark.parametrize("delta", [0.5, 1.0, 1.5])
def test_normalized_cost_approaches_the_leading_term(delta):
    m = ImpactModelSpec.power(delta, G_inf=0.6, theta_G=1.0)
    lead = leading_cost_term(m, 1.0, 3.0)
    # default T values: exponentially small terms at T = 10 are covered by the reported error
    ex = extrapolated_cost(m, 1.0, 3.0, method="closed-form")
    assert abs(ex.limit - lead) <= ex.error
    # for large T the cost is exactly quadratic in 1/T up to e^{-T/4} terms
    ex = extrapolated_cost(m, 1.0, 3.0, T_values=(100.0, 200.0, 400.0), method="closed-form")
    assert ex.limit == pytest.approx(lead, abs=1e-9)
    gaps = [abs(normalized_cost(m, 1.0, 3.0, T, "closed-form") - lead) for T in (1e3, 1e4)]
    assert gaps[1] == pytest.approx(gaps[0] / 10, rel=0.05)


def test_no_permanent_impact_gives_zero_limit():
    m = ImpactModelSpec.power(0.5, G_inf=0.0)
    assert abs(extrapolated_cost(m, 1.0, 2.0, T_values=(100.0, 200.0, 400.0),
                                 method="closed-form").limit) < 1e-9


def test_richardson_is_exact_on_polynomials():
    T = np.array([5.0, 20.0, 80.0])
    ex = richardson_extrapolate(T, 2.5 + 3.0 / T - 7.0 / T ** 2)
    assert ex.limit == pytest.approx(2.5, abs=1e-12)
    with pytest.raises(DomainError):
        richardson_extrapolate([1.0, 1.0], [0.0, 1.0])
    with pytest.raises(DomainError):
        richardson_extrapolate([1.0], [0.0])


def test_scan_verdicts():
    lin = manipulation_scan(ImpactModelSpec.power(1.0), default_grid(), method="closed-form")
    assert lin.verdict == "clean" and len(lin.points) == 6
    sqrt = manipulation_scan(ImpactModelSpec.power(0.5), default_grid(), method="closed-form")
    assert sqrt.verdict == "manipulable"
    assert any(p["negative"] for p in sqrt.to_dict()["grid"])


def test_tabulated_impact_function():
    v = np.linspace(0.0, 10.0, 11)
    lin = ImpactModelSpec.tabulated(v, 2.0 * v)
    assert lin.is_linear and lin.f(2.5) == 5.0
    concave = ImpactModelSpec.tabulated(v, np.sqrt(v))
    assert not concave.is_linear
    assert ImpactModelSpec.from_dict(concave.to_dict()) == concave
    with pytest.raises(DomainError):
        concave.f(11.0)


@pytest.mark.parametrize("kwargs", [dict(G_inf=1.5), dict(theta_G=0.0), dict(lam=-1.0),
                                    dict(f_kind="cubic"),
                                    dict(f_kind="tabulated", f_grid=(0.0, 1.0), f_values=(0.0, -1.0)),
                                    dict(f_kind="tabulated", f_grid=(1.0, 2.0), f_values=(0.0, 1.0))])
def test_invalid_models(kwargs):
    with pytest.raises(DomainError):
        ImpactModelSpec(**kwargs)


def test_invalid_round_trip():
    with pytest.raises(DomainError):
        round_trip_cost(ImpactModelSpec.power(1.0), 0.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        normalized_cost(ImpactModelSpec.power(1.0), 1.0, 1.0, 1.0, method="guess")


@settings(max_examples=30)
@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0.1, 3), st.floats(0.1, 3)), min_size=1, max_size=8),
       st.floats(-10, 10))
def test_indifference_price_clears_the_market(investors, N):
    E, lam, S = zip(*investors)
    pop = InvestorPopulation(E, lam, S, N)
    P = indifference_price(pop)
    # oracle: root of total demand minus supply
    root = optimize.brentq(lambda p: pop.holdings(p).sum() - N, -1e4, 1e4, xtol=1e-12, rtol=1e-14)
    assert P == pytest.approx(root, abs=1e-8)


@given(st.integers(1, 50), st.floats(-3, 3), st.floats(0.1, 3), st.floats(0.1, 3), st.floats(-5, 5),
       st.floats(-5, 5))
def test_identical_investors_and_supply_shift(n, E, lam, S, N, N0):
    pop = InvestorPopulation.identical(n, E, lam, S, N)
    assert impact_coefficient(pop) == pytest.approx(2 * lam * S / n)
    assert indifference_price(pop) == pytest.approx(E - 2 * lam * S * N / n, abs=1e-9)
    shift = price_after_supply_shift(pop, N0)
    assert shift.new_price - shift.price == pytest.approx(shift.k * N0, abs=1e-12)
    assert pop.holdings(shift.new_price).sum() == pytest.approx(N - N0, abs=1e-9)


def test_invalid_population():
    with pytest.raises(DomainError):
        InvestorPopulation((), (), (), 1.0)
    with pytest.raises(DomainError):
        InvestorPopulation((1.0,), (0.0,), (1.0,), 1.0)
    with pytest.raises(DomainError):
        InvestorPopulation((1.0, 2.0), (1.0,), (1.0,), 1.0)
