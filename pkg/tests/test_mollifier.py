"""Mollification scheme: normalization, uniform estimates, regularized FPE."""

import numpy as np
import pytest
from scipy.stats import norm

from nlfp.fpe_residual import TestBank
from nlfp.kernels import small_jump_moment, stable_like_kernel, zero_kernel, _log_tail
from nlfp.measures import ParticleCloud, grid_density_from_values, static_curve
from nlfp.mollifier import (
    gaussian_floor,
    gaussian_floor_generator_pairing,
    mollified_expectation,
    mollified_kernel_functionals,
    mollify_coeffs,
    mollify_measure,
    smoothed_test_function,
    space_bump,
    time_bump,
    time_bump_cdf,
    time_weights,
    verify_mollified_fpe,
)
from nlfp.operators import constant_coefficients, poly_bump, smooth_bump
from nlfp.quadrature import DEFAULT_QUAD, gauss_panels
from nlfp.stable_law import stable_flight_curve


def particle_curve(times=(0.0, 0.5, 1.0)):
    rng = np.random.default_rng(5)
    clouds = [ParticleCloud(rng.normal(size=(64, 1))) for _ in times]
    return_curve = static_curve(clouds[0], times)
    return_curve.slices = clouds
    return return_curve


def test_time_bump_mass_and_support():
    s = np.linspace(-0.5, 1.5, 2001)
    vals = time_bump(s)
    assert np.all(vals[(s <= 0) | (s >= 1)] == 0)
    assert np.trapezoid(vals, s) == pytest.approx(1.0, abs=1e-8)
    assert time_bump_cdf(1.0) == 1.0 and time_bump_cdf(0.0) == 0.0


def test_space_bump_mass():
    x = np.linspace(-1.2, 1.2, 4001)[:, None]
    assert np.trapezoid(space_bump(x), x[:, 0]) == pytest.approx(1.0, abs=1e-8)


def test_time_weights_sum_to_one_frozen():
    tau = np.linspace(0.0, 1.0, 21)
    for t in (0.0, 0.03, 0.4, 1.0, 1.7):
        w = time_weights(tau, t, 0.2)
        assert np.sum(w) == pytest.approx(1.0, abs=1e-14)


def test_time_weights_zero_convention_drops_prehistory():
    tau = np.linspace(0.0, 1.0, 21)
    w = time_weights(tau, 0.05, 0.2, zero_before=0.0)
    assert np.sum(w) < 1.0  # window [t-eps, t] dips below zero
    w2 = time_weights(tau, 0.5, 0.2, zero_before=0.0)
    assert np.sum(w2) == pytest.approx(1.0, abs=1e-14)


def test_mollify_single_particle_far_field_is_floor():
    curve = static_curve(ParticleCloud(np.zeros((1, 1))), [0.0, 1.0])
    eps = 0.2
    x = np.array([3.0])  # far outside B_eps(0)
    got = mollify_measure(curve, eps, 0.5, x)
    assert got[0] == pytest.approx(eps * float(gaussian_floor(x[None])), rel=1e-12)


def test_mollified_mass_is_one():
    curve = particle_curve()
    for eps in (0.4, 0.2, 0.1):
        L = 10.0
        n_panels = max(256, int(np.ceil(2 * L / (eps / 6.0))))
        y, w = gauss_panels(np.linspace(-L, L, n_panels + 1))
        vals = mollify_measure(curve, eps, 0.6, y)
        mass = float(np.dot(w, vals)) + 2.0 * eps * norm.sf(L)
        assert mass == pytest.approx(1.0, abs=1e-8)


def test_positivity_floor():
    curve = particle_curve()
    x = np.linspace(-6, 6, 41)
    vals = mollify_measure(curve, 0.3, 0.5, x)
    assert np.all(vals >= 0.3 * gaussian_floor(x[:, None]) - 1e-15)


def test_weak_convergence_monotone_in_eps():
    curve = particle_curve()
    f = smooth_bump(2.0)
    mu_f = curve.slices[1].integrate(f.value)
    gaps = []
    for eps in (0.4, 0.2, 0.1, 0.05):
        f_eps = smoothed_test_function(f, eps)
        gaps.append(abs(mollified_expectation(curve, eps, 0.5, f_eps, f) - mu_f))
    assert all(g1 > g2 for g1, g2 in zip(gaps, gaps[1:]))


def test_mollify_coeffs_identity_passthrough():
    curve = particle_curve()
    coeffs = constant_coefficients(a=1.0, b=0.0, dim=1)
    a_eps, b_eps = mollify_coeffs(curve, coeffs, None, 0.2, 0.7, np.array([0.4]))
    assert a_eps[0, 0] == pytest.approx(1.0, rel=1e-12)
    # only the Gaussian-floor drift survives with b = 0
    x = np.array([0.4])
    mu = float(mollify_measure(curve, 0.2, 0.7, x)[0])
    want = -0.2 * float(gaussian_floor(x[None])) * 0.4 / mu
    assert b_eps[0] == pytest.approx(want, rel=1e-12)


def test_mollify_coeffs_growth_bound_un0():
    # (|a_eps| + g_eps)/(1+x^2) + |b_eps|/(1+|x|) <= 1 + 2 sup(base)
    curve = particle_curve()
    k = stable_like_kernel(1.0, 0.7)
    coeffs = constant_coefficients(a=1.0, b=0.3, dim=1)
    g0 = small_jump_moment(k, 0.0, np.array([0.0]))
    base_sup = (1.0 + g0) + 0.3  # attained at x = 0
    for eps in (0.4, 0.2, 0.1):
        for xv in np.linspace(-4, 4, 9):
            x = np.array([xv])
            a_eps, b_eps = mollify_coeffs(curve, coeffs, k, eps, 0.6, x)
            g_eps, _ = mollified_kernel_functionals(curve, k, eps, 0.6, x)
            lhs = (abs(a_eps[0, 0]) + g_eps) / (1 + xv ** 2) + abs(b_eps[0]) / (1 + abs(xv))
            assert lhs <= 1.0 + 2.0 * base_sup + 1e-9


def test_mollified_kernel_zero_base():
    curve = particle_curve()
    g_eps, H = mollified_kernel_functionals(curve, zero_kernel(), 0.2, 0.5, np.array([0.1]))
    assert g_eps == 0.0
    assert H(np.array([1.0])) == 0.0


def test_regularization_estimate_g():
    # Lemma inequality: g_mix(x)/(1+x^2) <= 2 max_visited[g/(1+y^2)] (rho*mu)(x)
    curve = particle_curve()
    kap = lambda t, x: 1.0 + np.sin(np.linalg.norm(x, axis=-1)) ** 2
    k = stable_like_kernel(1.2, kap)
    eps, t = 0.3, 0.6
    pts = np.concatenate([sl.positions[:, 0] for sl in curve.slices])
    sup_vis = max(
        small_jump_moment(k, t, np.array([y])) / (1 + y ** 2) for y in pts
    )
    for xv in (-1.0, 0.0, 0.8, 2.5):
        x = np.array([xv])
        g_eps, _ = mollified_kernel_functionals(curve, k, eps, t, x)
        mu = float(mollify_measure(curve, eps, t, x)[0])
        rho_mu = (mu - eps * float(gaussian_floor(x[None]))) / (1 - eps)
        g_mix = g_eps * mu / (1 - eps)
        assert g_mix / (1 + xv ** 2) <= 2.0 * sup_vis * rho_mu + 1e-12


def test_un00_shifted_tail_dominated():
    # sup_x H_eps(x, y) <= sup_x H(x, y) for a state-independent kernel
    curve = particle_curve()
    k = stable_like_kernel(1.0)
    y = np.array([0.7])
    # base sup over x of H(x, y) sits at x = y (denominator 1)
    sup_base = _log_tail(k, 0.0, y, 1.0, k.ell, DEFAULT_QUAD)
    for eps in (0.4, 0.2, 0.1):
        for xv in (-0.5, 0.2, 0.7, 1.5):
            _, H = mollified_kernel_functionals(curve, k, eps, 0.6, np.array([xv]))
            assert H(y) <= sup_base + 1e-10


def test_gaussian_floor_stationarity_identity():
    for f in TestBank.default(radii=(1.0, 2.0, 4.0)):
        assert abs(gaussian_floor_generator_pairing(f)) < 1e-10


def test_smoothed_test_function_matches_direct_convolution():
    f = smooth_bump(2.0)
    eps = 0.25
    xs = np.array([-1.0, 0.0, 0.5, 1.9, 2.2])
    y, w = gauss_panels(np.linspace(-1, 1, 65))
    for panels, tol in ((3, 1e-6), (12, 1e-10)):
        f_eps = smoothed_test_function(f, eps, panels=panels)
        for xv in xs:
            direct = float(np.dot(w * space_bump(y[:, None]), f.value((xv - eps * y)[:, None])))
            assert f_eps.value(np.array([[xv]]))[0] == pytest.approx(direct, abs=tol)


def test_verify_mollified_fpe_static_zero_system():
    curve = static_curve(ParticleCloud(np.zeros((1, 1))), np.linspace(0, 1, 11))
    bank = TestBank([smooth_bump(2.0)])
    rep = verify_mollified_fpe(curve, None, None, 0.2, bank)
    assert np.max(np.abs(rep.residuals)) < 1e-9


def test_verify_mollified_fpe_fractional_heat():
    times = np.linspace(0.05, 0.8, 97)
    curve = stable_flight_curve(1.5, times, x_max=60, n=1024)
    k = stable_like_kernel(1.5)
    bank = TestBank([smooth_bump(2.0), poly_bump(4.0)])
    rep = verify_mollified_fpe(curve, None, k, 0.1, bank, kernel_static=True)
    assert np.max(np.abs(rep.residuals)) < 5e-3


def test_verify_mollified_fpe_refinement():
    k = stable_like_kernel(1.2)
    bank = TestBank([smooth_bump(2.0)])
    outs = []
    for n_t, n_x in ((49, 512), (97, 1024)):
        times = np.linspace(0.05, 0.6, n_t)
        curve = stable_flight_curve(1.2, times, x_max=50, n=n_x)
        rep = verify_mollified_fpe(curve, None, k, 0.1, bank, kernel_static=True)
        outs.append(np.max(np.abs(rep.residuals)))
    # decreases under simultaneous refinement (within a 2x allowance)
    assert outs[1] < 2.0 * outs[0]
    assert outs[1] < outs[0] * 1.05
