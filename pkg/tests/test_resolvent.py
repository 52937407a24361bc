import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hawkes_impact.errors import (AccuracyWarning, CriticalityError, DomainError, HorizonError,
                                  MissingParameterError)
from hawkes_impact.kernel import KernelSpec
from hawkes_impact.resolvent import (PropagatorKernel, check_martingale_identity, compute_resolvent,
                                     propagator_closed_form, propagator_from_resolvent,
                                     resolvent_closed_form_exponential, trapezoid_convolution)


def test_trapezoid_convolution_matches_direct_sum():
    rng = np.random.default_rng(0)
    f, g, h = rng.random(50), rng.random(50), 0.1
    direct = np.empty(50)
    for k in range(50):
        w = np.full(k + 1, h)
        w[0] = w[-1] = h / 2
        direct[k] = np.sum(w * f[k::-1] * g[: k + 1]) if k else 0.0
    np.testing.assert_allclose(trapezoid_convolution(f, g, h), direct, atol=1e-14)


def test_exponential_resolvent_matches_closed_form():
    spec = KernelSpec.exponential(0.5, 1.0)
    res = compute_resolvent(spec, 1e-3, 40.0)
    assert res.converged
    err = np.max(np.abs(res.values - resolvent_closed_form_exponential(spec, res.times)))
    assert err < 1e-6


def test_power_law_resolvent_matches_laplace_inversion():
    # oracle: psi_hat = phi_hat / (1 - phi_hat) with the Laplace transform
    # phi_hat(s) = n alpha (cs)^alpha e^{cs} Gamma(-alpha, cs), inverted numerically
    n, alpha, c = 0.5, 0.4, 1.0
    res = compute_resolvent(KernelSpec.power_law(n, alpha, c), 1e-3, 20.0)
    mp.mp.dps = 30

    def psi_hat(s):
        phi = n * alpha * (c * s) ** alpha * mp.exp(c * s) * mp.gammainc(-alpha, c * s)
        return phi / (1 - phi)

    for t in (0.5, 2.0, 10.0):
        expected = float(mp.invertlaplace(psi_hat, t, method="talbot"))
        got = float(np.interp(t, res.times, res.values))
        assert got == pytest.approx(expected, rel=1e-5)


def test_resolvent_rejects_critical_kernel():
    with pytest.raises(CriticalityError):
        compute_resolvent(KernelSpec.exponential(1.0, 1.0), 0.01, 10.0)


def test_horizon_must_be_multiple_of_step():
    with pytest.raises(DomainError):
        compute_resolvent(KernelSpec.exponential(0.5, 1.0), 0.3, 1.0)


def test_short_horizon_is_flagged():
    with pytest.warns(AccuracyWarning):
        res = compute_resolvent(KernelSpec.exponential(0.9, 1.0), 0.01, 5.0)
    assert res.horizon_warning


def test_nonconvergence_is_reported():
    with pytest.warns(AccuracyWarning):
        res = compute_resolvent(KernelSpec.exponential(0.5, 1.0), 0.01, 30.0, max_iter=3)
    assert not res.converged


def test_tail_mass_is_exact_for_linear_interpolant():
    spec = KernelSpec.exponential(0.5, 1.0)
    res = compute_resolvent(spec, 1e-3, 40.0)
    # int_t^inf a b e^{-b(1-a)s} ds = a/(1-a) e^{-b(1-a)t}
    t = np.array([0.0, 0.0005, 1.2345, 39.9])
    np.testing.assert_allclose(res.tail_mass(t), np.exp(-0.5 * t), atol=2e-7)
    with pytest.raises(HorizonError):
        res.tail_mass(41.0)


def test_propagator_example_exponential():
    # zeta0 = kappa v / (1 - a) = 2, zeta = 2 (1 - 0.5 (1 - e^{-t})) = 1 + e^{-t}
    zeta = propagator_closed_form(KernelSpec.exponential(0.5, 1.0), 1.0, 1.0, 0.01, 10.0)
    t = np.array([0.0, 0.5, 3.0, 10.0])
    np.testing.assert_allclose(zeta(t), 1.0 + np.exp(-t), rtol=1e-14)
    assert zeta.zeta_inf == pytest.approx(1.0)


@pytest.mark.parametrize("spec,horizon", [(KernelSpec.exponential(0.5, 1.0), 40.0),
                                          (KernelSpec.power_law(0.5, 0.4, 1.0), 50.0),
                                          (KernelSpec.exponential(0.9, 2.0), 60.0)])
def test_two_routes_agree(spec, horizon):
    res = compute_resolvent(spec, 1e-3, horizon)
    zr = propagator_from_resolvent(res, 0.7, 2.0)
    zc = propagator_closed_form(spec, 0.7, 2.0, 1e-3, horizon)
    assert np.max(np.abs(zr.values - zc.values)) / zc.zeta0 < 1e-4
    assert check_martingale_identity(zr, spec).relative_max < 1e-4


def test_tail_none_warns_for_power_law():
    res = compute_resolvent(KernelSpec.power_law(0.5, 0.4, 1.0), 1e-2, 50.0)
    with pytest.warns(AccuracyWarning):
        propagator_from_resolvent(res, 1.0, 1.0, tail="none")
    with pytest.raises(DomainError):
        propagator_from_resolvent(res, 1.0, 1.0, tail="bogus")


def test_fitted_tail_is_close_for_exponential():
    spec = KernelSpec.exponential(0.5, 1.0)
    res = compute_resolvent(spec, 1e-3, 20.0)
    zf = propagator_from_resolvent(res, 1.0, 1.0, tail="fit")
    zc = propagator_closed_form(spec, 1.0, 1.0, 1e-3, 20.0)
    assert np.max(np.abs(zf.values - zc.values)) < 1e-5


def test_critical_closed_form_needs_level():
    crit = KernelSpec.power_law(1.0, 0.4, 1.0)
    with pytest.raises(MissingParameterError):
        propagator_closed_form(crit, 1.0, 1.0, 0.1, 10.0)
    z = propagator_closed_form(crit, 1.0, 1.0, 0.1, 10.0, zeta0=3.0)
    assert z.zeta0 == 3.0 and z.zeta_inf == 0.0


def test_resolvent_propagator_horizon():
    res = compute_resolvent(KernelSpec.exponential(0.5, 1.0), 1e-2, 10.0)
    z = propagator_from_resolvent(res, 1.0, 1.0)
    with pytest.raises(HorizonError):
        z(11.0)
    with pytest.raises(HorizonError):
        z.integral(11.0)
    with pytest.raises(DomainError):
        z(-1.0)


@given(st.floats(0.05, 0.95), st.floats(0.1, 0.9), st.floats(0.2, 5.0), st.floats(0.1, 3.0),
       st.lists(st.floats(0.0, 200.0), min_size=2, max_size=10))
def test_closed_form_zeta_is_decreasing_and_bounded(n, alpha, c, kv, xs):
    z = propagator_closed_form(KernelSpec.power_law(n, alpha, c), kv, 1.0, 1.0, 1.0)
    x = np.sort(np.array(xs))
    vals = z(x)
    assert np.all(np.diff(vals) <= 1e-12)
    assert np.all(vals <= z.zeta0 * (1 + 1e-12)) and np.all(vals >= kv * (1 - 1e-12))


@given(st.floats(0.05, 0.95), st.floats(0.1, 5.0), st.floats(0.0, 50.0))
def test_closed_form_integral_matches_quadrature(n, b, x):
    from scipy import integrate

    z = propagator_closed_form(KernelSpec.exponential(n, b), 1.0, 1.0, 1.0, 1.0)
    val = integrate.quad(lambda s: z(s), 0.0, x, epsabs=1e-12, epsrel=1e-12)[0]
    assert z.integral(x) == pytest.approx(val, rel=1e-9, abs=1e-12)


def test_constant_kernel():
    z = PropagatorKernel.constant(3.0, step=1.0, horizon=5.0)
    assert z(4.0) == 3.0 and z.integral(2.0) == 6.0 and z.exact


def test_csv_outputs(tmp_path):
    from hawkes_impact._io import read_csv

    res = compute_resolvent(KernelSpec.exponential(0.5, 1.0), 0.1, 10.0)
    res.to_csv(tmp_path / "psi.csv")
    header, cols = read_csv(tmp_path / "psi.csv")
    assert header["kind"] == "resolvent" and header["converged"]
    np.testing.assert_array_equal(cols["psi"], res.values)
    z = propagator_from_resolvent(res, 1.0, 1.0)
    z.to_csv(tmp_path / "zeta.csv")
    header, cols = read_csv(tmp_path / "zeta.csv")
    assert header["provenance"] == "resolvent"
    np.testing.assert_array_equal(cols["zeta"], z.values)
