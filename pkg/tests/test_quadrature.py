import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlfp.errors import NonIntegrable
from nlfp.quadrature import (
    QuadratureSpec,
    gauss_panels,
    integrate_radial_tail,
    log_edges,
    radial_nodes,
    sphere_area,
    sphere_directions,
)


def test_gauss_panels_integrate_polynomials_exactly():
    nodes, w = gauss_panels(np.array([0.0, 0.7, 1.3, 2.0]))
    for p in range(0, 12):
        assert np.dot(w, nodes ** p) == pytest.approx(2.0 ** (p + 1) / (p + 1), rel=1e-13)


@given(st.floats(0.3, 3.0), st.floats(1.2, 50.0))
@settings(max_examples=30, deadline=None)
def test_radial_nodes_cover_interval(a, ratio):
    b = a * ratio
    nodes, w = radial_nodes(a, b)
    assert np.all((nodes > a) & (nodes < b))
    assert np.dot(w, np.ones_like(nodes)) == pytest.approx(b - a, rel=1e-12)


def test_log_edges_honour_breakpoints():
    edges = log_edges(0.1, 10.0, 3, breakpoints=(0.5, 2.5))
    assert 0.5 in edges and 2.5 in edges
    assert edges[0] == 0.1 and edges[-1] == 10.0


def test_singular_power_integral_accuracy():
    # int_delta^1 r^(-0.5) dr resolved on log panels
    nodes, w = radial_nodes(1e-6, 1.0)
    val = np.dot(w, nodes ** -0.5)
    assert val == pytest.approx(2.0 * (1.0 - 1e-3), rel=1e-10)


def test_tail_doubling_matches_closed_form():
    val, err = integrate_radial_tail(lambda r: r ** -2.5, 1.0)
    assert val == pytest.approx(1.0 / 1.5, rel=1e-7)


def test_tail_divergence_detected():
    with pytest.raises(NonIntegrable):
        integrate_radial_tail(lambda r: 1.0 / r, 1.0, QuadratureSpec(max_doublings=30))


def test_sphere_rules_integrate_constants():
    for d in (1, 2, 3):
        dirs, w = sphere_directions(d)
        assert np.sum(w) == pytest.approx(sphere_area(d), rel=1e-12)
        assert np.linalg.norm(np.einsum("a,ad->d", w, dirs)) < 1e-12


def test_sphere_rule_second_moment():
    # int_{S^{d-1}} u_i u_j dsigma = omega_d / d * delta_ij
    for d in (2, 3):
        dirs, w = sphere_directions(d)
        m = np.einsum("a,ai,aj->ij", w, dirs, dirs)
        assert np.allclose(m, sphere_area(d) / d * np.eye(d), atol=1e-10)
