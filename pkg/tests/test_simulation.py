from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hawkes_impact.errors import CriticalityError, DomainError, InsufficientDataError
from hawkes_impact.kernel import KernelSpec, kernel_cdf
from hawkes_impact.simulation import (BUY, SELL, EventStream, MarketConfig, Metaorder,
                                      cluster_statistics, compensator_increments, make_rng,
                                      simulate_branching, simulate_market, simulate_metaorder,
                                      simulate_thinning, time_rescaling_test)

EXP = KernelSpec.exponential(0.5, 1.0)
PL = KernelSpec.power_law(0.5, 0.6, 1.0)


def _direct_compensator(t, spec, mu):
    # oracle: Lambda(t) = mu t + sum_{t_j < t} Phi(t - t_j) evaluated pairwise
    lam = np.array([mu * x + np.sum(kernel_cdf(spec, x - t[t < x])) for x in t])
    return np.diff(np.r_[0.0, lam])


@pytest.mark.parametrize("spec", [EXP, PL])
def test_compensator_matches_pairwise_sum(spec):
    s = simulate_thinning(MarketConfig(spec, 1.0, 200.0, burn_in=0.0, seed=4))
    np.testing.assert_allclose(compensator_increments(s, spec, 1.0),
                               _direct_compensator(s.times, spec, 1.0), rtol=1e-9, atol=1e-12)


def test_tabulated_compensator_uses_generic_route():
    grid = np.linspace(0.0, 30.0, 3001)
    tab = KernelSpec.tabulated(grid, 0.5 * np.exp(-grid))
    s = simulate_branching(MarketConfig(tab, 1.0, 50.0, burn_in=0.0, seed=2))
    np.testing.assert_allclose(compensator_increments(s, tab, 1.0),
                               compensator_increments(s, EXP, 1.0), rtol=1e-4, atol=1e-6)


@pytest.mark.parametrize("spec", [EXP, PL])
@pytest.mark.parametrize("sim", [simulate_thinning, simulate_branching])
def test_time_rescaling_from_empty_history(spec, sim):
    s = sim(MarketConfig(spec, 1.0, 3000.0, burn_in=0.0, seed=11))
    assert time_rescaling_test(s, spec, 1.0).pvalue > 1e-3


@pytest.mark.parametrize("sim", [simulate_thinning, simulate_branching])
def test_stationary_rate(sim):
    # Var N_T ~ T mu / (1 - n)^3 for a stationary Hawkes process
    cfg = MarketConfig(EXP, 1.0, 2e4, seed=8)
    counts = np.array([len(sim(cfg, BUY, r)) for r in range(8)])
    se = np.sqrt(cfg.horizon * 1.0 / 0.5 ** 3 / counts.size)
    assert abs(counts.mean() - cfg.stationary_rate * cfg.horizon) < 4 * se


def test_branching_cluster_size():
    cfg = MarketConfig(KernelSpec.exponential(0.6, 2.0), 0.5, 2e4, seed=3)
    stats = cluster_statistics(simulate_branching(cfg), margin=100.0)
    # Galton-Watson total progeny with Poisson(n) offspring has mean 1 / (1 - n), variance n / (1 - n)^3
    se = np.sqrt(0.6 / 0.4 ** 3 / stats.n_clusters)
    assert abs(stats.mean_size - 2.5) < 4 * se
    assert sum(stats.size_histogram.values()) == stats.n_clusters


def test_cluster_statistics_needs_labels():
    with pytest.raises(InsufficientDataError):
        cluster_statistics(simulate_thinning(MarketConfig(EXP, 1.0, 10.0)))


@settings(max_examples=15)
@given(st.integers(0, 2 ** 32), st.integers(0, 50))
def test_simulation_is_deterministic(seed, replica):
    cfg = MarketConfig(EXP, 1.0, 30.0, seed=seed)
    a = simulate_thinning(cfg, BUY, replica)
    b = simulate_thinning(cfg, BUY, replica)
    np.testing.assert_array_equal(a.times, b.times)
    assert a.seed == {"master": seed, "key": [replica, 0]}
    assert np.all(np.diff(a.times) > 0) and (len(a) == 0 or a.times[-1] <= cfg.horizon)


def test_streams_are_distinct():
    cfg = MarketConfig(EXP, 1.0, 100.0, seed=1)
    a, b, c = simulate_thinning(cfg, BUY, 0), simulate_thinning(cfg, SELL, 0), simulate_thinning(cfg, BUY, 1)
    assert not np.array_equal(a.times[:5], b.times[:5])
    assert not np.array_equal(a.times[:5], c.times[:5])
    assert make_rng(1, 0, 0).random() == make_rng(1, 0, 0).random()


def test_metaorder_is_poisson_on_its_window():
    cfg = MarketConfig(EXP, 1.0, 100.0, metaorder=Metaorder(2.0, 40.0), seed=5)
    counts = [len(simulate_metaorder(cfg, r)) for r in range(400)]
    assert abs(np.mean(counts) - 80.0) < 4 * np.sqrt(80.0 / 400)
    m = simulate_metaorder(cfg, 0)
    assert m.label == "metaorder" and m.times.max() <= 40.0


def test_market_without_metaorder_and_with_feedback():
    cfg = MarketConfig(EXP, 1.0, 50.0, seed=5)
    m = simulate_market(cfg)
    assert len(m["metaorder"]) == 0
    fb = replace(cfg, metaorder=Metaorder(5.0, 20.0), feedback=True)
    plain = simulate_market(replace(fb, feedback=False))
    boosted = simulate_market(fb)
    assert np.isin(plain[BUY].times, boosted[BUY].times).all()
    assert len(boosted[BUY]) > len(plain[BUY])
    np.testing.assert_array_equal(plain[SELL].times, boosted[SELL].times)
    with pytest.raises(DomainError):
        simulate_market(cfg, method="magic")


def test_tabulated_kernel_needs_branching():
    tab = KernelSpec.tabulated([0.0, 1.0, 2.0], [0.2, 0.1, 0.0])
    cfg = MarketConfig(tab, 1.0, 10.0, burn_in=0.0)
    with pytest.raises(DomainError):
        simulate_thinning(cfg)
    assert len(simulate_branching(cfg)) > 0


def test_critical_kernel_is_rejected():
    with pytest.raises(CriticalityError):
        simulate_thinning(MarketConfig(KernelSpec.exponential(1.0, 1.0), 1.0, 10.0))


@pytest.mark.parametrize("kwargs", [dict(mu=0.0), dict(horizon=-1.0), dict(burn_in=-1.0),
                                    dict(metaorder=Metaorder(1.0, 20.0))])
def test_invalid_config(kwargs):
    base = dict(kernel=EXP, mu=1.0, horizon=10.0)
    with pytest.raises(DomainError):
        MarketConfig(**{**base, **kwargs})


@pytest.mark.parametrize("times", [[1.0, 0.5], [-1.0, 2.0], [1.0, 11.0], [1.0, 1.0]])
def test_invalid_streams(times):
    with pytest.raises(DomainError):
        EventStream(np.array(times), 10.0)


def test_config_dict_round_trip():
    cfg = MarketConfig(PL, 0.3, 100.0, kappa=0.5, v=2.0, metaorder=Metaorder(1.0, 10.0, SELL),
                       seed=9, feedback=True)
    back = MarketConfig.from_dict(cfg.to_dict())
    assert back.to_dict() == cfg.to_dict()
    assert back.burn_in == pytest.approx(50.0)


def test_default_burn_in():
    assert MarketConfig(EXP, 1.0, 1.0).resolved_burn_in() == pytest.approx(100.0)
    assert MarketConfig(PL, 1.0, 1.0).resolved_burn_in() == pytest.approx(50.0 * PL.characteristic_time())


def test_stream_csv_round_trip(tmp_path):
    s = simulate_branching(MarketConfig(EXP, 1.0, 40.0, seed=7), SELL)
    s.to_csv(tmp_path / "s.csv", config={"note": 1})
    back = EventStream.from_csv(tmp_path / "s.csv")
    np.testing.assert_array_equal(back.times, s.times)
    np.testing.assert_array_equal(back.cluster_ids, s.cluster_ids)
    assert back.side == SELL and back.seed == s.seed and back.horizon == 40.0
    assert s.count(np.array([0.0, 40.0]))[1] == len(s)
