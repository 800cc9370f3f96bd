import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oldroyd_isvd.kernels import (KernelError, Nonsingular, TemperedFractional,
                                  averaged_history_weights, cq_apply, cq_beta, cq_build, cq_sigma,
                                  exponential_kernel, fractional_integral_reference, log_kernel,
                                  midpoint_weights, nonsingular_history_weights, probe_orders,
                                  quadrature_error_probe, smooth_probe)


def test_midpoint_weights():
    K = log_kernel(25.0)
    assert midpoint_weights(K, 5, 0.1)[-1] == 0.0
    w = midpoint_weights(K, 2, 0.1)
    assert w[0] == pytest.approx(0.1 * 25 * math.log(1.1), rel=1e-15)
    E = exponential_kernel(3.0, 2.0)
    np.testing.assert_allclose(midpoint_weights(E, 1, 0.2), [0.1 * 3.0])
    w = midpoint_weights(E, 4, 0.25)
    np.testing.assert_allclose(w[:3], 0.25 * 3.0 * np.exp(-2.0 * 0.25 * np.array([3, 2, 1])))
    with pytest.raises(KernelError):
        midpoint_weights(E, 0, 0.1)


def test_kernel_integrals_and_checks():
    assert log_kernel(25.0).integral() == pytest.approx(25 * (2 * math.log(2) - 1))
    E = exponential_kernel(100.0, 100.0)
    assert E.integral() == pytest.approx(1 - math.exp(-100), rel=1e-12)
    assert E.integral(0.5) == pytest.approx(1 - math.exp(-50), rel=1e-10)
    E.check(1.0)
    with pytest.raises(KernelError):
        Nonsingular(lambda t: np.log(t + 0.5), "neg").check(1.0)
    with pytest.raises(KernelError), np.errstate(divide="ignore"):
        Nonsingular(lambda t: 1 / (t - 0.5), "pole").check(1.0)


def test_tempered_kernel_validation():
    for a in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(KernelError):
            TemperedFractional(a, 0.5)
    with pytest.raises(KernelError):
        TemperedFractional(0.5, -1.0)
    K = TemperedFractional(0.5, 0.0)
    assert K(1.0) == pytest.approx(1 / math.sqrt(math.pi))
    assert math.gamma(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-15)


def test_sigma_beta():
    s, b = cq_sigma(0.5, 5), cq_beta(0.5, 5)
    assert s[0] == 1.0 and b[0] == 1.0
    assert s[1] == 0.5 and b[1] == 0.5
    assert s[2] == pytest.approx(0.375) and b[2] == pytest.approx(-0.125)


@pytest.mark.parametrize("alpha", [0.1, 0.25, 0.5, 0.75, 0.9])
def test_beta_decay(alpha):
    b = np.abs(cq_beta(alpha, 200))
    assert np.all(np.diff(b[2:]) < 0)


def test_cq_weights_examples():
    w = cq_build(0.5, 0.0, 8, 0.1)
    assert w.omega0[0] == pytest.approx(2 ** -0.5, rel=1e-15)
    assert w.omega0[1] == pytest.approx(math.sqrt(2) * 0.5, rel=1e-15)
    assert w.rho[0] == pytest.approx(-0.1 ** 0.5 * 2 ** -0.5, rel=1e-14)
    np.testing.assert_array_equal(w.omega, w.omega0)
    wt = cq_build(0.5, 0.7, 8, 0.1)
    np.testing.assert_array_equal(wt.omega, np.exp(-0.7 * (0.1 * np.arange(9))) * wt.omega0)
    with pytest.raises(KernelError):
        cq_build(0.5, 0.0, 0, 0.1)


def test_cq_weights_match_generating_function():
    # omega_n are the Taylor coefficients of (2 (1 - z) / (1 + z))^(-alpha), read off by FFT
    alpha, N, r = 0.3, 64, 0.95
    w = cq_build(alpha, 0.0, N, 1.0)
    M = 2 ** 16
    z = r * np.exp(2j * np.pi * np.arange(M) / M)
    F = (2 * (1 - z) / (1 + z)) ** (-alpha)
    coef = np.fft.fft(F).real[:N + 1] / M / r ** np.arange(N + 1)
    np.testing.assert_allclose(w.omega0, coef[:N + 1], rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("alpha,lam", [(0.25, 0.0), (0.5, 0.5), (0.75, 2.0)])
def test_rho_simplification_matches_literal(alpha, lam):
    w = cq_build(alpha, lam, 50, 0.02)
    np.testing.assert_allclose(w.rho, w.rho_literal(), rtol=0, atol=1e-14)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_omega_asymptotics(alpha):
    N = 2000
    w = cq_build(alpha, 0.0, N, 1.0 / N)
    n = np.arange(16, N + 1)
    ratio = w.omega0[16:] / n ** (alpha - 1.0)
    assert np.all(np.isfinite(w.omega)) and ratio.min() > 0
    # tends to 1 / Gamma(alpha); averaging neighbours cancels the (-1)^n tail
    assert 0.5 * (ratio[-1] + ratio[-2]) == pytest.approx(1 / math.gamma(alpha), rel=1e-3)
    g = 1 / math.gamma(alpha)
    assert 0.5 * g <= ratio.min() and ratio.max() <= 2 * g


def test_cq_apply():
    w = cq_build(0.5, 0.0, 10, 0.1)
    assert not cq_apply(w, np.zeros((3, 11)), 10, np.zeros(3)).any()
    u0 = np.array([1.0, -2.0])
    np.testing.assert_allclose(cq_apply(w, [u0], 0, u0), (w.scale * w.omega[0] + w.rho[0]) * u0)
    ones = [np.ones(1)] * 11
    for n in range(11):
        got = cq_apply(w, ones, n, np.ones(1))[0]
        assert got == pytest.approx((0.1 * n) ** 0.5 / math.gamma(1.5), abs=1e-14)
    with pytest.raises(KernelError):
        cq_apply(w, ones, 11, np.ones(1))
    with pytest.raises(KernelError):
        cq_apply(w, ones[:3], 5, np.ones(1))


def test_averaged_history_weights_match_explicit_sum(rng):
    w = cq_build(0.4, 0.3, 12, 0.05)
    n = 9
    U = rng.standard_normal((4, n))
    ubar = lambda j: 0.5 * (U[:, j] + (U[:, j - 1] if j >= 1 else 0.0))
    explicit = w.scale * sum(w.omega[p] * ubar(n - p) for p in range(1, n + 1))
    np.testing.assert_allclose(U @ averaged_history_weights(w, n), explicit, rtol=1e-13)


def test_nonsingular_history_weights_match_explicit_sum(rng):
    K = log_kernel(25.0)
    dt, n = 0.1, 7
    U = rng.standard_normal((3, n))
    explicit = sum(dt * K(dt * (n - j)) * 0.5 * (U[:, j] + U[:, j - 1]) for j in range(1, n))
    np.testing.assert_allclose(U @ nonsingular_history_weights(K, n, dt), explicit, rtol=1e-13)


def test_reference_quadrature_against_closed_form():
    for alpha, lam in ((0.5, 0.5), (0.25, 0.0), (0.75, 1.0)):
        phi, exact = smooth_probe(alpha, lam)
        for t in (0.1, 0.5, 1.0):
            assert fractional_integral_reference(alpha, lam, phi, t) == pytest.approx(exact(t), rel=1e-11)
    assert fractional_integral_reference(0.5, 0.5, lambda s: 1.0, 0.0) == 0.0


def test_probe_zero_function():
    assert quadrature_error_probe(0.5, 0.5, lambda s: 0.0, 16, 1 / 16) == 0.0


def test_probe_second_order():
    phi, _ = smooth_probe(0.5, 0.5)
    rows = probe_orders(0.5, 0.5, phi, 1.0, [32, 64])
    ratio = rows[0][1] / rows[1][1]
    assert 3.5 <= ratio <= 4.5
    assert math.isnan(rows[0][2])


def quadratic_form(omega, V):
    N = V.shape[0] - 1
    return sum(omega[p] * (V[n - p] @ V[n]) for n in range(1, N + 1) for p in range(n + 1))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), alpha=st.sampled_from([0.25, 0.5, 0.75]),
       lam=st.sampled_from([0.0, 0.5, 3.0]), N=st.integers(1, 64), dim=st.integers(1, 4))
def test_positive_definite_property(seed, alpha, lam, N, dim):
    V = np.random.default_rng(seed).standard_normal((N + 1, dim))
    V[0] = 0.0      # sequences start at index 1
    w = cq_build(alpha, lam, N, 1.0 / N)
    energy = float(np.sum(V[1:] ** 2))
    assert quadratic_form(w.omega, V) >= -1e-12 * energy
