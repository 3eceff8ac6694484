"""Weak-solution residual against exact curves.

The stable flight marginals (Fourier-inversion oracle) solve the FPE with
generator N for the isotropic kernel, so their residual is a pure
discretization defect and must shrink under refinement.
"""

import numpy as np
import pytest

from nlfp.fpe_residual import TestBank, integrability_report, residual
from nlfp.kernels import stable_like_kernel, zero_kernel
from nlfp.measures import grid_density_from_values, static_curve
from nlfp.operators import TestFunction, constant_coefficients, poly_bump, smooth_bump
from nlfp.stable_law import stable_flight_curve


def small_bank():
    return TestBank([smooth_bump(2.0, name="s2"), poly_bump(4.0, name="p4")])


def gaussian_slice(n=1001, L=10.0):
    x = np.linspace(-L, L, n)
    return grid_density_from_values(x, np.exp(-x ** 2 / 2))


def test_static_curve_zero_generator_residual_exactly_zero():
    curve = static_curve(gaussian_slice(), [0.0, 0.5, 1.0])
    rep = residual(curve, None, None, small_bank(), with_integrability=False)
    assert np.all(rep.residuals == 0.0)


def test_residual_zero_at_initial_time():
    curve = stable_flight_curve(1.5, [0.1, 0.3, 0.5], x_max=60, n=1024)
    k = stable_like_kernel(1.5)
    rep = residual(curve, None, k, small_bank(), kernel_static=True,
                   with_integrability=False)
    assert np.all(rep.residuals[:, 0] == 0.0)


def test_stable_flight_residual_small():
    times = np.linspace(0.1, 0.6, 11)
    curve = stable_flight_curve(1.5, times, x_max=60, n=2048)
    k = stable_like_kernel(1.5)
    rep = residual(curve, None, k, small_bank(), kernel_static=True,
                   with_integrability=False)
    assert rep.max_normalized() < 1e-2


def test_residual_linearity():
    times = np.linspace(0.1, 0.4, 5)
    curve = stable_flight_curve(1.2, times, x_max=60, n=1024)
    k = stable_like_kernel(1.2)
    f, g = smooth_bump(2.0), poly_bump(3.0)
    al, be = 0.6, -2.0
    comb = TestFunction(
        value=lambda X: al * f.value(X) + be * g.value(X),
        gradient=lambda X: al * f.gradient(X) + be * g.gradient(X),
        hessian=lambda X: al * f.hessian(X) + be * g.hessian(X),
        support_radius=3.0, name="comb",
    )
    rep = residual(curve, None, k, TestBank([f, g, comb]), kernel_static=True,
                   with_integrability=False)
    want = al * rep.residuals[0] + be * rep.residuals[1]
    assert np.allclose(rep.residuals[2], want, atol=1e-10)


def test_residual_refinement_consistency():
    # doubling the time grid of an exact-solution curve cuts |R| at the
    # final time by at least ~1.5x while above the quadrature floor
    k = stable_like_kernel(1.5)
    bank = TestBank([smooth_bump(2.0)])
    r_prev = None
    finals = []
    for n_t in (6, 11, 21):
        times = np.linspace(0.1, 0.6, n_t)
        curve = stable_flight_curve(1.5, times, x_max=60, n=2048)
        rep = residual(curve, None, k, bank, kernel_static=True,
                       with_integrability=False)
        finals.append(abs(rep.residuals[0, -1]))
    assert finals[1] < finals[0] / 1.5
    assert finals[2] < finals[1] / 1.5


def test_integrability_report_bounded_system():
    curve = static_curve(gaussian_slice(), [0.0, 1.0])
    coeffs = constant_coefficients(a=1.0, b=0.5, dim=1)
    k = stable_like_kernel(1.0)
    rep = integrability_report(curve, coeffs, k, [1.0, 4.0], 1.0)
    assert rep.all_finite
    for R, row in rep.per_radius.items():
        assert row["local_coefficient_integral"] > 0
        assert row["nonlocal_tail_integral"] > 0


def test_integrability_second_condition_zero_without_jumps():
    curve = static_curve(gaussian_slice(), [0.0, 1.0])
    rep = integrability_report(curve, None, zero_kernel(), [2.0], 1.0)
    assert rep.per_radius[2.0]["nonlocal_tail_integral"] == 0.0


def test_report_serialization(tmp_path):
    curve = static_curve(gaussian_slice(n=301), [0.0, 0.5])
    rep = residual(curve, None, zero_kernel(), small_bank())
    d = rep.to_dict()
    assert d["functions"] == ["s2", "p4"]
    rep.to_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().startswith("function")
