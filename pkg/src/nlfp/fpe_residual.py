"""Weak-solution testing: integrability conditions and the generator identity.

A measure curve (mu_t) is checked against the weak formulation

    mu_t(f) = mu_0(f) + int_0^t mu_s(L_s f) ds

over a finite bank of compactly supported C^2 test functions; R(f, t) is the
defect of this identity.  The quantification over all of C^2_c is replaced
by the bank, so thresholds are declared by the caller, never hard-coded.
"""

import csv
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .measures import GridDensity, MeasureCurve
from .operators import (
    TestFunction,
    coordinate_bump,
    generator_apply_batch,
    poly_bump,
    smooth_bump,
    trace_norm,
)
from .quadrature import DEFAULT_QUAD


@dataclass
class TestBank:
    functions: List[TestFunction]

    def __iter__(self):
        return iter(self.functions)

    def __len__(self):
        return len(self.functions)

    __test__ = False

    @classmethod
    def default(cls, radii=(1.0, 2.0, 4.0, 8.0)):
        """Radial and coordinate-modulated bumps over the given radii."""
        fns = []
        for r in radii:
            fns.append(smooth_bump(r, name=f"smooth(R={r})"))
            fns.append(coordinate_bump(r, name=f"odd(R={r})"))
        fns.append(poly_bump(radii[len(radii) // 2], name="poly"))
        return cls(fns)


@dataclass
class IntegrabilityReport:
    """Sampled values of the two weak-solution integrability conditions."""

    per_radius: dict
    horizon: float

    @property
    def all_finite(self):
        return all(v["finite"] for v in self.per_radius.values())

    def to_dict(self):
        return {
            "horizon": self.horizon,
            "per_radius": {str(k): v for k, v in self.per_radius.items()},
            "all_finite": self.all_finite,
        }


def _pointwise_g(k, t, pts, spec):
    """g(t, x) over a batch; the small-ball moment at radius ell IS g."""
    from .kernels import small_jump_moment

    if k.small_ball_moment is not None:
        return np.asarray(k.small_ball_moment(t, pts, k.ell), dtype=float).reshape(-1)
    return np.array([small_jump_moment(k, t, x, spec) for x in pts])


def _pointwise_tail(k, t, pts, radii, spec):
    from .kernels import tail_mass

    radii = np.asarray(radii, dtype=float)
    if k.tail_measure is not None:
        return np.asarray(k.tail_measure(t, pts, radii), dtype=float).reshape(-1)
    return np.array([tail_mass(k, t, x, r, spec) for x, r in zip(pts, radii)])


def integrability_report(curve, coeffs, k, R_list, T, spec=DEFAULT_QUAD):
    """Time-space quadrature of both integrability conditions up to T.

    Divergence is a report outcome (finite=False), not an exception.
    """
    sel = curve.times <= T + 1e-12
    times = curve.times[sel]
    per_radius = {}
    for R in R_list:
        vals1, vals2 = [], []
        for idx in np.nonzero(sel)[0]:
            t = curve.times[idx]
            pts, mass = curve.slices[idx].as_points()
            ax = np.linalg.norm(pts, axis=1)
            inside = ax <= R
            with np.errstate(over="ignore", invalid="ignore"):
                if coeffs is not None:
                    a_term = np.array([trace_norm(m) for m in coeffs.a(t, pts)])
                    b_term = np.linalg.norm(coeffs.b(t, pts), axis=1)
                else:
                    a_term = b_term = np.zeros(len(pts))
                g_term = _pointwise_g(k, t, pts, spec) if k is not None else np.zeros(len(pts))
                vals1.append(float(np.sum(mass[inside] * (a_term + b_term + g_term)[inside])))
                if k is not None:
                    r_eff = np.maximum(k.ell, ax - R)
                    tails = _pointwise_tail(k, t, pts, r_eff, spec)
                    tails_ell = _pointwise_tail(k, t, pts, np.full(len(pts), k.ell), spec)
                    vals2.append(float(np.sum(mass * (tails + inside * tails_ell))))
                else:
                    vals2.append(0.0)
        i1 = float(np.trapezoid(vals1, times)) if len(times) > 1 else float(vals1[0])
        i2 = float(np.trapezoid(vals2, times)) if len(times) > 1 else float(vals2[0])
        per_radius[float(R)] = {
            "local_coefficient_integral": i1,
            "nonlocal_tail_integral": i2,
            "finite": bool(np.isfinite(i1) and np.isfinite(i2)),
        }
    return IntegrabilityReport(per_radius, float(T))


@dataclass
class ResidualReport:
    """R(f, t) = mu_t(f) - mu_0(f) - int mu_s(L_s f) ds per bank function."""

    times: np.ndarray
    names: List[str]
    residuals: np.ndarray  # (n_functions, n_times)
    error_estimates: np.ndarray  # (n_functions,)
    c2_norms: np.ndarray
    integrability: Optional[IntegrabilityReport] = None

    def max_normalized(self):
        """max over (f, t) of |R| / ||f||_C2."""
        return float(np.max(np.abs(self.residuals) / self.c2_norms[:, None]))

    def to_dict(self):
        return {
            "times": [float(t) for t in self.times],
            "functions": list(self.names),
            "residuals": [[float(v) for v in row] for row in self.residuals],
            "error_estimates": [float(v) for v in self.error_estimates],
            "c2_norms": [float(v) for v in self.c2_norms],
            "integrability": None if self.integrability is None else self.integrability.to_dict(),
        }

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["function"] + [repr(float(t)) for t in self.times])
            for name, row in zip(self.names, self.residuals):
                w.writerow([name] + [repr(float(v)) for v in row])


def generator_expectation(curve_slice, coeffs, k, f, t, spec=DEFAULT_QUAD,
                          cached_jump=None):
    """mu(L_t f) for one slice; cached_jump holds a precomputed jump part on
    the slice's own points (useful when the kernel is time-independent)."""
    pts, mass = curve_slice.as_points()
    X = pts[:, 0]
    if cached_jump is not None:
        vals = cached_jump.copy()
        if coeffs is not None:
            vals += np.einsum("nij,nji->n", coeffs.a(t, pts), f.hessian(pts))
            vals += np.einsum("ni,ni->n", coeffs.b(t, pts), f.gradient(pts))
    else:
        vals = generator_apply_batch(coeffs, k, f, t, X, spec)
    return float(np.dot(mass, vals))


def residual(curve, coeffs, k, bank, spec=DEFAULT_QUAD, kernel_static=False,
             with_integrability=True):
    """ResidualReport for the curve against the generator (coeffs, k).

    kernel_static=True caches the jump part across times when all slices
    share one grid (valid for kernels with no time dependence).
    """
    times = curve.times
    n_t = len(times)
    shared_grid = all(
        isinstance(s, GridDensity) and np.array_equal(s.x, curve.slices[0].x)
        for s in curve.slices
    )
    residuals = np.zeros((len(bank), n_t))
    errors = np.zeros(len(bank))
    names = []
    c2 = []
    for i, f in enumerate(bank):
        names.append(f.name)
        c2.append(f.c2_norm())
        cached = None
        if k is not None and kernel_static and shared_grid:
            from .operators import apply_N_batch

            cached = apply_N_batch(k, f, times[0], curve.slices[0].x, spec)
        mu_f = np.array([s.integrate(f.value) for s in curve.slices])
        lf = np.array([
            generator_expectation(curve.slices[j], coeffs, k, f, times[j], spec,
                                  cached_jump=cached)
            for j in range(n_t)
        ])
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (lf[1:] + lf[:-1]) * np.diff(times))])
        residuals[i] = mu_f - mu_f[0] - cum
        # crude trapezoid-error gauge from the integrand's second differences
        if n_t > 2:
            d2 = np.diff(lf, 2)
            dt = float(np.max(np.diff(times)))
            errors[i] = float(np.sum(np.abs(d2)) * dt / 12.0)
    report = ResidualReport(times, names, residuals, errors, np.array(c2))
    if with_integrability and k is not None:
        radii = sorted({f.support_radius for f in bank})
        report.integrability = integrability_report(curve, coeffs, k, radii,
                                                    times[-1], spec)
    return report
