"""Growth functionals against closed forms and independent quadrature oracles.

Frozen oracle values were produced with adaptive scipy.integrate.quad on the
1-d radial integrands:

    hbar(alpha=1.0, x=0)            2 int_0.5^inf log(1+r) r^-2 dr      = 3.819085009768877
    hbar(alpha=0.5, x=0)            2 int_0.5^inf log(1+r) r^-1.5 dr    = 9.936189964807543
    hbar(alpha=1.5, x=0)            2 int_0.5^inf log(1+r) r^-2.5 dr    = 2.7528298645447893
    H(alpha=1, x=0.3, y=-0.4)       2 int_0.5^inf log(1+r/1.7) r^-2 dr  = 2.7743806030015916
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlfp.errors import NonIntegrable
from nlfp.kernels import (
    ProbeGrid,
    assumption_report,
    example_i_kernel,
    example_ii_kernel,
    log_tail_functional,
    shifted_log_tail,
    small_jump_moment,
    stable_like_kernel,
    tail_mass,
    validate_kernel,
    zero_kernel,
)
from nlfp.operators import constant_coefficients

X0 = np.array([0.0])


def closed_form_g(alpha, ell=0.5, kappa=1.0):
    return kappa * 2.0 * ell ** (2.0 - alpha) / (2.0 - alpha)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_small_jump_moment_closed_form(alpha):
    k = stable_like_kernel(alpha)
    assert small_jump_moment(k, 0.0, X0) == pytest.approx(closed_form_g(alpha), rel=1e-8)


def test_small_jump_moment_examples():
    # isotropic alpha=1 with ell=0.5: g = 1 exactly
    k = stable_like_kernel(1.0)
    assert small_jump_moment(k, 0.0, X0) == pytest.approx(1.0, rel=1e-8)
    # zero kernel: empty integrand
    assert small_jump_moment(zero_kernel(), 0.0, X0) == 0.0
    # kappa = (1+|x|^2): linear scaling of the closed form, x=1 doubles it
    k2 = stable_like_kernel(1.0, lambda t, x: 1.0 + np.linalg.norm(x, axis=-1) ** 2)
    assert small_jump_moment(k2, 0.0, np.array([1.0])) == pytest.approx(2.0, rel=1e-8)


def test_small_jump_moment_without_analytic_inner_ball():
    # same stable kernel with the closed-form inner ball removed: the octave
    # extrapolation has to reproduce it
    k = stable_like_kernel(1.2)
    k.small_ball_moment = None
    assert small_jump_moment(k, 0.0, X0) == pytest.approx(closed_form_g(1.2), rel=1e-5)


def test_inner_divergence_detected():
    # |z|^2 density ~ |z|^(-d-2) is not a Lévy kernel; moment diverges
    bad = stable_like_kernel(1.0)
    bad.small_density = lambda t, x, z: np.linalg.norm(z, axis=-1) ** -3.05
    bad.small_ball_moment = None
    with pytest.raises(NonIntegrable):
        small_jump_moment(bad, 0.0, X0)


@pytest.mark.parametrize(
    "alpha,expected",
    [(0.5, 9.936189964807543), (1.0, 3.819085009768877), (1.5, 2.7528298645447893)],
)
def test_log_tail_reference_quadrature(alpha, expected):
    k = stable_like_kernel(alpha)
    assert log_tail_functional(k, 0.0, X0) == pytest.approx(expected, rel=1e-7)


def test_log_tail_zero_kernel():
    assert log_tail_functional(zero_kernel(), 0.0, X0) == 0.0


def test_log_tail_ibp_path_matches_density_path():
    k = stable_like_kernel(1.0)
    direct = log_tail_functional(k, 0.0, X0)
    k_ibp = stable_like_kernel(1.0)
    k_ibp.big_density = None  # force the tail_measure integration-by-parts path
    assert log_tail_functional(k_ibp, 0.0, X0) == pytest.approx(direct, rel=1e-7)


def test_symmetric_variant_is_smaller():
    x = np.array([1.3])
    k_ns = stable_like_kernel(1.0)
    k_sym = stable_like_kernel(1.0, symmetric=True)
    assert log_tail_functional(k_sym, 0.0, x) < log_tail_functional(k_ns, 0.0, x)


def test_example_i_bounded_hbar():
    k = example_i_kernel(1.0)
    xs = np.geomspace(1.0, 1e3, 13)
    vals = [log_tail_functional(k, 0.0, np.array([x])) for x in xs]
    assert np.isfinite(vals).all()
    assert max(vals) < 20.0


def test_example_ii_bounded_hbar():
    k = example_ii_kernel(1.5)
    vals = [log_tail_functional(k, 0.0, np.array([x])) for x in np.geomspace(1.0, 1e3, 9)]
    assert np.isfinite(vals).all()
    assert max(vals) / min(vals) < 5.0


def test_shifted_log_tail_reference():
    k = stable_like_kernel(1.0)
    got = shifted_log_tail(k, 0.0, np.array([0.3]), np.array([-0.4]))
    assert got == pytest.approx(2.7743806030015916, rel=1e-7)


def test_shifted_log_tail_at_y_equals_x():
    k = stable_like_kernel(1.0)
    x = np.array([0.7])
    # |x-y| = 0 reduces the denominator to 1: matches non-symmetric hbar at 0
    assert shifted_log_tail(k, 0.0, x, x) == pytest.approx(
        log_tail_functional(stable_like_kernel(1.0), 0.0, np.array([0.0])), rel=1e-7
    )
    assert shifted_log_tail(zero_kernel(), 0.0, x, x) == 0.0


def test_shifted_log_tail_paper_bound():
    # H(x, y) <= 2 (1 + |y|) hbar(x)
    k = example_i_kernel(1.0)
    rng = np.random.default_rng(7)
    for _ in range(12):
        x = rng.uniform(-5, 5, size=1)
        y = rng.uniform(-5, 5, size=1)
        H = shifted_log_tail(k, 0.0, x, y)
        hb = log_tail_functional(k, 0.0, x)
        assert H <= 2.0 * (1.0 + abs(y[0])) * hb + 1e-10


@pytest.mark.parametrize("alpha,r,expected", [(1.0, 1.0, 2.0), (0.5, 2.0, 2.0 * 2.0 ** -0.5 / 0.5), (1.5, 1.0, 2.0 / 1.5)])
def test_tail_mass_closed_form(alpha, r, expected):
    k = stable_like_kernel(alpha)
    assert tail_mass(k, 0.0, X0, r) == pytest.approx(expected, rel=1e-12)


def test_tail_mass_quadrature_path_matches():
    k = stable_like_kernel(1.0)
    k2 = stable_like_kernel(1.0)
    k2.tail_measure = None  # force big_density quadrature
    for r in (0.5, 1.0, 3.0):
        assert tail_mass(k2, 0.0, X0, r) == pytest.approx(tail_mass(k, 0.0, X0, r), rel=1e-7)


def test_tail_mass_monotone_to_zero():
    k = stable_like_kernel(0.7)
    radii = np.geomspace(0.5, 1e4, 12)
    masses = [tail_mass(k, 0.0, X0, r) for r in radii]
    assert np.all(np.diff(masses) < 0)
    assert masses[-1] < 1e-2


def test_tail_mass_requires_r_at_least_ell():
    with pytest.raises(ValueError):
        tail_mass(stable_like_kernel(1.0), 0.0, X0, 0.1)


def test_remark_tail_bounds():
    # nu(B^c_{ell v (|x|-R)}) log(1 + ell/(1+ell+R)) <= hbar at every probe
    k = example_i_kernel(1.0)
    R = 2.0
    for xv in np.linspace(-8, 8, 9):
        x = np.array([xv])
        r = max(k.ell, abs(xv) - R)
        lhs = tail_mass(k, 0.0, x, r) * np.log1p(k.ell / (1.0 + k.ell + R))
        assert lhs <= log_tail_functional(k, 0.0, x) + 1e-10


@given(st.floats(0.3, 1.9), st.floats(0.15, 0.7))
@settings(max_examples=20, deadline=None)
def test_g_monotone_in_ell_and_tail_monotone_in_r(alpha, ell):
    ell = min(ell, 1.0 / np.sqrt(2.0))
    k_small = stable_like_kernel(alpha, ell=ell * 0.5)
    k_big = stable_like_kernel(alpha, ell=ell)
    assert small_jump_moment(k_small, 0.0, X0) <= small_jump_moment(k_big, 0.0, X0) + 1e-12
    k = stable_like_kernel(alpha, ell=ell)
    assert tail_mass(k, 0.0, X0, 2.0) <= tail_mass(k, 0.0, X0, ell) + 1e-12


def test_kernel_requires_valid_ell():
    with pytest.raises(ValueError):
        stable_like_kernel(1.0, ell=0.8)


def test_validate_kernel_runs():
    probes = ProbeGrid.box_1d(3.0, n=5, times=(0.0, 1.0))
    validate_kernel(stable_like_kernel(1.2), probes)


def test_assumption_report_identity_diffusion():
    # a = I, b = 0, nu = 0: sup |a|/(1+|x|^2) attained at x = 0, total 1
    coeffs = constant_coefficients(a=1.0, b=0.0, dim=1)
    probes = ProbeGrid.box_1d(10.0, n=41)
    rep = assumption_report(zero_kernel(), coeffs, probes)
    assert rep.total_sup == pytest.approx(1.0, abs=1e-12)
    assert not rep.violated
    assert not rep.unbounded_trend
    assert rep.argmax_probe["x"] == [0.0]


def test_assumption_report_example_ii_finite():
    rep = assumption_report(example_ii_kernel(1.2), None, ProbeGrid.box_1d(50.0, n=21))
    assert np.isfinite(rep.total_sup)
    assert not rep.violated


def test_assumption_report_flags_growing_drift():
    coeffs = constant_coefficients(a=0.0, b=0.0, dim=1)
    coeffs.b = lambda t, X: X ** 2  # quadratic drift: |b|/(1+|x|) grows
    probes = ProbeGrid.box_1d(50.0, n=41)
    rep = assumption_report(zero_kernel(), coeffs, probes)
    assert rep.unbounded_trend


def test_condition_report_serializes():
    rep = assumption_report(zero_kernel(), constant_coefficients(a=1.0), ProbeGrid.box_1d(2.0, n=5))
    d = rep.to_dict()
    assert set(d) >= {"total_sup", "per_term", "argmax_probe", "violated"}
