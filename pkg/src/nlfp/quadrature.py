"""Radial-angular quadrature for singular Lévy integrals.

Radial integrals use Gauss-Legendre panels placed on a logarithmic axis,
which resolves |z|^(-d-alpha) densities uniformly per decade.  Unbounded
tails are truncated at an outer radius that is doubled until the relative
increment falls below ``rel_tol``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NonIntegrable

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class QuadratureSpec:
    """Knobs for the singular quadratures.

    delta_in_factor: inner cutoff delta_in = ell * delta_in_factor.
    panels_per_decade: 8-point Gauss-Legendre panels per radial decade.
    rel_tol: stop doubling the outer radius once the relative increment of
        the running integral is below this.
    max_doublings: doubling budget before declaring non-integrability.
    n_theta: angular nodes for dim >= 2.
    """

    delta_in_factor: float = 2.0 ** -20
    panels_per_decade: int = 3
    rel_tol: float = 1e-8
    max_doublings: int = 128
    n_theta: int = 64


DEFAULT_QUAD = QuadratureSpec()


def gauss_panels(edges):
    """Gauss-Legendre nodes/weights on consecutive intervals of ``edges``."""
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)[:, None]
    half = 0.5 * (hi - lo)[:, None]
    nodes = (mid + half * _GL_NODES[None, :]).ravel()
    weights = (half * _GL_WEIGHTS[None, :]).ravel()
    return nodes, weights


def log_edges(a, b, panels_per_decade, breakpoints=()):
    """Panel edges on [a, b], log-spaced, honouring interior breakpoints."""
    if not (0 < a < b):
        raise ValueError(f"need 0 < a < b, got [{a}, {b}]")
    pts = [a, b]
    for p in breakpoints:
        if a < p < b:
            pts.append(float(p))
    pts = np.unique(np.asarray(pts, dtype=float))
    out = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        decades = np.log10(hi / lo)
        k = max(1, int(np.ceil(decades * panels_per_decade)))
        out.append(np.geomspace(lo, hi, k + 1)[:-1])
    out.append(np.array([pts[-1]]))
    return np.concatenate(out)


def radial_nodes(a, b, spec=DEFAULT_QUAD, breakpoints=()):
    """Log-panel GL nodes and weights for a radial integral over [a, b]."""
    return gauss_panels(log_edges(a, b, spec.panels_per_decade, breakpoints))


def support_nodes(a, b, spec=DEFAULT_QUAD, min_panels=16):
    """Nodes for a bounded radial integral whose integrand carries structure
    on the linear scale (a test function's support), not just per decade:
    log edges merged with a uniform subdivision."""
    edges = np.union1d(
        log_edges(a, b, spec.panels_per_decade),
        np.linspace(a, b, min_panels + 1),
    )
    return gauss_panels(edges)


def integrate_radial_tail(fn, lower, spec=DEFAULT_QUAD, probe=None):
    """Integrate fn(r) (vectorized) over [lower, oo) by outer doubling.

    Returns (value, truncation_estimate).  Raises NonIntegrable when the
    doubling increments stop shrinking before the budget runs out.
    """
    r, w = radial_nodes(lower, 2.0 * lower, spec)
    total = float(np.dot(w, fn(r)))
    hi = 2.0 * lower
    last_inc = np.inf
    growing = 0
    for _ in range(spec.max_doublings):
        r, w = radial_nodes(hi, 2.0 * hi, spec)
        inc = float(np.dot(w, fn(r)))
        hi *= 2.0
        total += inc
        scale = max(abs(total), 1e-300)
        if abs(inc) <= spec.rel_tol * scale:
            return total, abs(inc)
        # sustained non-shrinking increments mean a divergent tail
        growing = growing + 1 if abs(inc) > 0.999 * last_inc else 0
        if growing >= 8:
            raise NonIntegrable(
                f"tail increments not decaying at R={hi:.3g} (inc={inc:.3g})",
                probe=probe,
            )
        last_inc = abs(inc)
    raise NonIntegrable(
        f"tail quadrature did not converge below rel_tol={spec.rel_tol} "
        f"within {spec.max_doublings} doublings",
        probe=probe,
    )


def sphere_directions(dim, spec=DEFAULT_QUAD):
    """Directions and surface-measure weights so that
    integral over R^d of h(z) dz = int_0^inf r^(d-1) sum_a w_a h(r u_a) dr.
    """
    if dim == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if dim == 2:
        k = spec.n_theta
        th = 2.0 * np.pi * (np.arange(k) + 0.5) / k
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        return dirs, np.full(k, 2.0 * np.pi / k)
    if dim == 3:
        # product rule: GL in cos(polar) x uniform azimuth
        nc = max(8, spec.n_theta // 8)
        c, wc = np.polynomial.legendre.leggauss(nc)
        k = spec.n_theta
        ph = 2.0 * np.pi * (np.arange(k) + 0.5) / k
        s = np.sqrt(1.0 - c ** 2)
        dirs = np.stack(
            [
                np.outer(s, np.cos(ph)).ravel(),
                np.outer(s, np.sin(ph)).ravel(),
                np.repeat(c, k),
            ],
            axis=1,
        )
        w = np.repeat(wc, k) * (2.0 * np.pi / k)
        return dirs, w
    raise NotImplementedError(f"angular rule not implemented for dim={dim}")


def sphere_area(dim):
    """Surface area of the unit sphere S^(dim-1)."""
    from scipy.special import gamma

    return 2.0 * np.pi ** (dim / 2.0) / gamma(dim / 2.0)
