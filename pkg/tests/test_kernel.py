import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from hawkes_impact.errors import DomainError
from hawkes_impact.kernel import (KernelSpec, eval_kernel, fourier_gap, kernel_cdf, kernel_fourier,
                                  kernel_norm, kernel_tail_integral, kernel_tail_primitive,
                                  load_tabulated_csv, make_near_critical, pareto_gap,
                                  sample_delays, save_tabulated_csv)
from hawkes_impact.simulation import make_rng

norms = st.floats(0.05, 0.95)
alphas = st.floats(0.05, 0.95)
scales = st.floats(0.1, 10.0)


def test_exponential_values():
    k = KernelSpec.exponential(0.5, 1.0)
    assert eval_kernel(k, 0.0) == pytest.approx(0.5)
    assert kernel_tail_integral(k, math.log(2.0)) == pytest.approx(0.25)
    assert kernel_fourier(k, 1.0) == pytest.approx(0.25 + 0.25j)


def test_power_law_values():
    k = KernelSpec.power_law(0.8, 0.5, 2.0)
    assert eval_kernel(k, 0.0) == pytest.approx(0.8 * 0.5 / 2.0)
    assert kernel_tail_integral(k, 6.0) == pytest.approx(0.8 * 0.5)


@given(norms, st.floats(0.1, 5.0))
def test_exponential_norm_matches_quadrature(n, b):
    k = KernelSpec.exponential(n, b)
    f = lambda t: eval_kernel(k, t)
    # split at a few decay lengths so the infinite-range rule does not miss the mass
    val = (integrate.quad(f, 0, 20 / b, epsabs=1e-14, epsrel=1e-12)[0]
           + integrate.quad(f, 20 / b, np.inf, epsabs=1e-14, epsrel=1e-12)[0])
    assert val == pytest.approx(kernel_norm(k), rel=1e-8)


@given(norms, alphas, scales, st.floats(0.0, 100.0))
def test_power_law_cdf_and_tail_add_to_norm(n, a, c, x):
    k = KernelSpec.power_law(n, a, c)
    assert kernel_cdf(k, x) + kernel_tail_integral(k, x) == pytest.approx(n, rel=1e-12)


@given(norms, alphas, scales, st.floats(0.01, 50.0))
def test_power_law_cdf_matches_quadrature(n, a, c, x):
    k = KernelSpec.power_law(n, a, c)
    val = integrate.quad(lambda t: eval_kernel(k, t), 0, x, epsrel=1e-11)[0]
    assert kernel_cdf(k, x) == pytest.approx(val, rel=1e-8)


@given(norms, alphas, scales, st.floats(0.01, 50.0))
def test_tail_primitive_matches_quadrature(n, a, c, x):
    k = KernelSpec.power_law(n, a, c)
    val = integrate.quad(lambda u: kernel_tail_integral(k, u), 0, x, epsrel=1e-11)[0]
    assert kernel_tail_primitive(k, x) == pytest.approx(val, rel=1e-8)


PARETO_CASES = [(0.1, 1.0), (0.4, 1.0), (0.4, 3.0), (0.75, 0.5)]


@pytest.mark.parametrize("alpha,c", PARETO_CASES)
@pytest.mark.parametrize("w", [0.01, 0.3, 1.0, 7.0, -2.0])
def test_pareto_fourier_against_oscillatory_quadrature(alpha, c, w):
    # oracle: arbitrary-precision oscillatory quadrature of the density; it
    # loses accuracy once the period exceeds ~1e3 c, so small w is covered below
    mp.mp.dps = 30
    dens = lambda t: alpha * c ** alpha / (t + c) ** (1 + alpha)
    re = mp.quadosc(lambda t: dens(t) * mp.cos(w * t), [0, mp.inf], omega=abs(w))
    im = mp.quadosc(lambda t: dens(t) * mp.sin(w * t), [0, mp.inf], omega=abs(w))
    expected = 1 - complex(re, im)
    assert abs(pareto_gap(w, alpha, c) - expected) < 1e-9 * max(1.0, abs(expected))


@pytest.mark.parametrize("alpha,c", PARETO_CASES)
@pytest.mark.parametrize("w", [1e-8, 1e-4, 0.05, 2.0, 40.0, -3e-3])
def test_pareto_fourier_against_incomplete_gamma(alpha, c, w):
    # substituting s = -i w (t + c) gives alpha (-i w c)^alpha e^{-i w c} Gamma(-alpha, -i w c)
    mp.mp.dps = 30
    x = mp.mpc(0, -w * c)
    phi_hat = alpha * x ** alpha * mp.exp(x) * mp.gammainc(-alpha, x)
    expected = complex(1 - phi_hat)
    assert abs(pareto_gap(w, alpha, c) - expected) < 1e-9 * max(1e-3, abs(expected))


def test_pareto_gap_small_frequency_asymptote():
    w, alpha = 1e-10, 0.4
    lead = math.gamma(1 - alpha) * complex(0, -w) ** alpha
    assert abs(pareto_gap(w, alpha, 1.0) - lead) < 1e-5 * abs(lead)


@pytest.mark.parametrize("spec", [KernelSpec.exponential(0.6, 2.0),
                                  KernelSpec.power_law(0.7, 0.3, 1.5)])
@pytest.mark.parametrize("w", [0.0, 0.5, 3.0])
def test_fourier_closed_form_matches_quad(spec, w):
    assert abs(kernel_fourier(spec, w) - kernel_fourier(spec, w, method="quad")) < 1e-7


def test_fourier_gap_has_no_cancellation_near_zero():
    k = KernelSpec.power_law(1.0 - 1e-9, 0.4, 1.0)
    gap = fourier_gap(k, 1e-12)
    # leading order: (1 - n) + n Gamma(1 - alpha) (-i w c)^alpha
    lead = 1e-9 + math.gamma(0.6) * complex(0, -1e-12) ** 0.4
    assert abs(gap - lead) / abs(lead) < 1e-3


def test_tabulated_kernel_norm_and_fourier():
    t = np.linspace(0.0, 40.0, 40001)
    k = KernelSpec.tabulated(t, 0.5 * np.exp(-t))
    assert k.branching_ratio == pytest.approx(0.5, rel=1e-6)
    exact = kernel_fourier(KernelSpec.exponential(0.5, 1.0), 0.7)
    assert abs(kernel_fourier(k, 0.7) - exact) < 1e-6


def test_tabulated_csv_round_trip(tmp_path):
    t = np.linspace(0.0, 10.0, 101)
    k = KernelSpec.tabulated(t, 0.3 / (1.0 + t) ** 1.5)
    save_tabulated_csv(k, tmp_path / "k.csv")
    assert load_tabulated_csv(tmp_path / "k.csv") == k


@given(norms, st.floats(0.1, 5.0))
def test_dict_round_trip_exponential(n, b):
    k = KernelSpec.exponential(n, b)
    assert KernelSpec.from_dict(k.to_dict()) == k
    assert KernelSpec.from_json(k.to_json()) == k


def test_power_law_parameter_round_trip():
    k = KernelSpec.power_law(0.9, 0.4, 1.0)
    assert KernelSpec.from_dict(k.to_dict()).branching_ratio == 0.9


@given(norms, norms)
def test_rescaled_keeps_shape(n, m):
    k = KernelSpec.power_law(n, 0.3, 2.0)
    r = k.rescaled(m)
    t = np.array([0.0, 1.0, 10.0])
    np.testing.assert_allclose(eval_kernel(r, t) * n, eval_kernel(k, t) * m, rtol=1e-12)


@pytest.mark.parametrize("bad", [
    lambda: KernelSpec.exponential(0.5, 0.0),
    lambda: KernelSpec.exponential(1.5, 1.0),
    lambda: KernelSpec.power_law(0.5, 1.2, 1.0),
    lambda: KernelSpec.power_law(0.5, 0.4, -1.0),
    lambda: KernelSpec.tabulated([0.0, 1.0], [1.0, -1.0]),
    lambda: KernelSpec.tabulated([1.0, 2.0], [1.0, 1.0]),
    lambda: KernelSpec.from_dict({"family": "gaussian"}),
    lambda: KernelSpec.from_dict({"family": "exponential", "a": 0.5}),
])
def test_invalid_kernels_raise(bad):
    with pytest.raises(DomainError):
        bad()


def test_negative_time_raises():
    with pytest.raises(DomainError):
        eval_kernel(KernelSpec.exponential(0.5, 1.0), -1.0)


@pytest.mark.parametrize("spec", [KernelSpec.exponential(0.5, 2.0),
                                  KernelSpec.power_law(0.5, 0.4, 1.0)])
def test_sample_delays_follow_normalized_kernel(spec):
    d = sample_delays(spec, 20000, make_rng(3, 0))
    cdf = lambda x: kernel_cdf(spec, np.maximum(x, 0.0)) / spec.branching_ratio
    assert stats.kstest(d, cdf).pvalue > 0.001


def test_near_critical_family():
    f = make_near_critical(KernelSpec.power_law(1.0, 0.4, 1.0), 1e4, 1 - 1e-5, 1.0)
    assert f.scale_ratio == pytest.approx(1e4 * (1e-5) ** 2.5)
    assert f.mu == pytest.approx(1e-5 * 1e4 ** -0.2)
    assert f.kernel.branching_ratio == pytest.approx(1 - 1e-5)
    with pytest.raises(DomainError):
        make_near_critical(KernelSpec.power_law(0.9, 0.4, 1.0), 1e4, 0.99, 1.0)
    with pytest.raises(DomainError):
        make_near_critical(KernelSpec.power_law(1.0, 0.7, 1.0), 1e4, 0.99, 1.0)
