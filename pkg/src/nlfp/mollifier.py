"""Regularization of measure curves: mollified densities, coefficients and
kernel functionals, plus the FPE identity check for the regularized system.

mu_eps(t, x) = (1 - eps) (rho_eps * mu)(t, x) + eps phi(x)

with rho_eps a product of compactly supported polynomial bumps in time and
space, and phi the standard Gaussian.  The time convolution is quadrature
over the curve's own grid: each grid time carries the exact integral of the
time bump over its cell (the curve is frozen before its first time; for the
coefficient products a, b, nu vanish for s <= 0).  The space convolution of
an atomic slice is an exact mixture of bumps, so the total mass of mu_eps
is exactly one by construction.
"""

import numpy as np

from .measures import GridDensity, MeasureCurve
from .operators import TestFunction
from .quadrature import DEFAULT_QUAD, gauss_panels, sphere_area

# ---------------------------------------------------------------------------
# bumps and the Gaussian floor
# ---------------------------------------------------------------------------

TIME_BUMP_NORM = 140.0  # 1 / int_0^1 s^3 (1-s)^3 ds


def time_bump(s):
    """rho^t on [0, 1], mass one, C^2 at both ends."""
    s = np.asarray(s, dtype=float)
    inside = (s > 0.0) & (s < 1.0)
    sv = np.where(inside, s, 0.5)
    return np.where(inside, TIME_BUMP_NORM * sv ** 3 * (1.0 - sv) ** 3, 0.0)


def time_bump_cdf(u):
    """int_0^u rho^t; clamps outside [0, 1]."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    return 35.0 * u ** 4 - 84.0 * u ** 5 + 70.0 * u ** 6 - 20.0 * u ** 7


def space_bump_norm(dim):
    """Normalizer of (1 - |x|^2)^3 on the unit ball."""
    from scipy.special import beta as beta_fn

    return 1.0 / (0.5 * sphere_area(dim) * beta_fn(dim / 2.0, 4.0))


def space_bump(x, dim=1):
    """rho^x on B_1, mass one, C^2."""
    x = np.asarray(x, dtype=float)
    u = np.sum(x ** 2, axis=-1)
    return np.where(u < 1.0, space_bump_norm(dim) * (1.0 - np.minimum(u, 1.0)) ** 3, 0.0)


def gaussian_floor(x):
    """Standard normal density phi; the strict-positivity floor."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    return (2.0 * np.pi) ** (-d / 2.0) * np.exp(-0.5 * np.sum(x ** 2, axis=-1))


def gaussian_floor_generator_pairing(f, panels=96):
    """int phi (Delta f - x . grad f) dx; zero for the standard normal.

    This is the stationarity identity that lets the Gaussian floor ride
    along in the regularized FPE.
    """
    R = f.support_radius
    y, w = gauss_panels(f.center + np.linspace(-R, R, panels + 1))
    Y = y[:, None]
    lap = f.hessian(Y)[:, 0, 0]
    drift = y * f.gradient(Y)[:, 0]
    return float(np.dot(w, gaussian_floor(Y) * (lap - drift)))


# ---------------------------------------------------------------------------
# time-cell weights
# ---------------------------------------------------------------------------


def time_weights(curve_times, t, eps, zero_before=None):
    """Exact integrals of rho^t_eps(t - s) over the cells around grid times.

    The window is s in [t - eps, t].  Cells partition the line (first and
    last extend to +-infinity: the frozen-curve convention).  With
    ``zero_before`` set, window mass below that time is dropped instead of
    frozen (the coefficient-product convention: a, b, nu vanish there).
    """
    tau = np.asarray(curve_times, dtype=float)
    edges = np.concatenate([[-np.inf], 0.5 * (tau[1:] + tau[:-1]), [np.inf]])
    lo = edges[:-1].copy()
    if zero_before is not None:
        lo = np.maximum(lo, zero_before)
    hi = edges[1:]
    up = np.where(np.isinf(lo) & (lo < 0), 1.0, time_bump_cdf((t - lo) / eps))
    dn = np.where(np.isinf(hi), 0.0, time_bump_cdf((t - hi) / eps))
    w = np.maximum(up - dn, 0.0)
    return w


# ---------------------------------------------------------------------------
# mollified objects
# ---------------------------------------------------------------------------


def _space_convolution(curve_slice, eps, x):
    """(rho^x_eps * mu)(x) as an exact bump mixture; x is (m, d)."""
    pts, mass = curve_slice.as_points()
    d = pts.shape[1]
    diff = (np.asarray(x, dtype=float)[:, None, :] - pts[None, :, :]) / eps
    return (space_bump(diff, dim=d) / eps ** d) @ mass


def mollify_measure(curve, eps, t, x):
    """mu_eps(t, x) for x of shape (m, d) (or (m,) in one dimension)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    w = time_weights(curve.times, t, eps)
    conv = np.zeros(len(x))
    for wi, sl in zip(w, curve.slices):
        if wi > 1e-300:
            conv += wi * _space_convolution(sl, eps, x)
    return (1.0 - eps) * conv + eps * gaussian_floor(x)


def mollified_expectation(curve, eps, t, f_eps, f, panels=64):
    """integral of f d(mu_eps_t) using the smoothed test function at atoms.

    f_eps must be smoothed_test_function(f, eps); the Gaussian-floor part
    integrates f itself against phi.
    """
    w = time_weights(curve.times, t, eps)
    acc = 0.0
    for wi, sl in zip(w, curve.slices):
        if wi > 1e-300:
            acc += wi * sl.integrate(f_eps.value)
    R = f.support_radius
    y, wq = gauss_panels(f.center + np.linspace(-R, R, panels + 1))
    floor = float(np.dot(wq, gaussian_floor(y[:, None]) * f.value(y[:, None])))
    return (1.0 - eps) * acc + eps * floor


def mollify_coeffs(curve, coeffs, k, eps, t, x, spec=DEFAULT_QUAD):
    """(a_eps, b_eps) at one point x (d,).

    a_eps = [(1-eps) rho_eps*(a mu) + eps phi I] / mu_eps
    b_eps = [(1-eps) rho_eps*(b mu) - eps phi x] / mu_eps

    The Gaussian-floor drift is -phi(x) x: the floor is stationary for the
    Ornstein-Uhlenbeck pair (I, -x), which is what keeps the regularized
    FPE identity exact.
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    d = x.shape[1]
    wz = time_weights(curve.times, t, eps, zero_before=0.0)
    num_a = np.zeros((d, d))
    num_b = np.zeros(d)
    for wi, tau, sl in zip(wz, curve.times, curve.slices):
        if wi <= 1e-300:
            continue
        pts, mass = sl.as_points()
        bump = space_bump((x - pts) / eps, dim=d) / eps ** d
        wgt = mass * bump
        if coeffs is not None:
            num_a += np.einsum("n,nij->ij", wgt, coeffs.a(tau, pts))
            num_b += wgt @ coeffs.b(tau, pts)
    phi = float(gaussian_floor(x)[0])
    mu_eps = float(mollify_measure(curve, eps, t, x)[0])
    a_eps = ((1.0 - eps) * num_a + eps * phi * np.eye(d)) / mu_eps
    b_eps = ((1.0 - eps) * num_b - eps * phi * x[0]) / mu_eps
    return a_eps, b_eps


def mollified_kernel_functionals(curve, k, eps, t, x, spec=DEFAULT_QUAD):
    """(g_eps, H_eps) for the mixture kernel nu_eps at the point x.

    g_eps is a scalar; H_eps is a function y -> H^{nu_eps}(x, y).  Both are
    computed by Fubini: base-kernel functionals integrated against the
    mollification weight, divided by mu_eps.  nu_eps itself is never
    materialized.
    """
    from .kernels import small_jump_moment, _log_tail

    x = np.asarray(x, dtype=float).reshape(1, -1)
    d = x.shape[1]
    wz = time_weights(curve.times, t, eps, zero_before=0.0)
    mu_eps = float(mollify_measure(curve, eps, t, x)[0])

    stations = []  # (weight, tau, points, point-weights)
    for wi, tau, sl in zip(wz, curve.times, curve.slices):
        if wi <= 1e-300:
            continue
        pts, mass = sl.as_points()
        bump = space_bump((x - pts) / eps, dim=d) / eps ** d
        keep = bump > 0
        if not np.any(keep):
            continue
        stations.append((wi, tau, pts[keep], (mass * bump)[keep]))

    g_acc = 0.0
    for wi, tau, pts, wgt in stations:
        if k.small_ball_moment is not None:
            gv = np.asarray(k.small_ball_moment(tau, pts, k.ell), dtype=float).reshape(-1)
        else:
            gv = np.array([small_jump_moment(k, tau, p, spec) for p in pts])
        g_acc += wi * float(np.dot(wgt, gv))
    g_eps = (1.0 - eps) * g_acc / mu_eps

    def H_eps(y):
        denom = 1.0 + float(np.linalg.norm(x[0] - np.asarray(y)))
        acc = 0.0
        for wi, tau, pts, wgt in stations:
            vals = np.array([
                _log_tail(k, tau, p, denom, k.ell, spec, probe=(tau, p)) for p in pts
            ])
            acc += wi * float(np.dot(wgt, vals))
        return (1.0 - eps) * acc / mu_eps

    return g_eps, H_eps


def smoothed_test_function(f, eps, panels=3):
    """f * rho^x_eps with exact derivative convolutions (1-d)."""
    if f.dim != 1:
        raise NotImplementedError("smoothed test functions are 1-d")
    v, w = gauss_panels(np.linspace(-1.0, 1.0, panels + 1))
    wb = w * space_bump(v[:, None], dim=1)

    def _conv(fn, X, out_shape):
        X = np.asarray(X, dtype=float)
        lead = X.shape[:-1]
        pts = (X[..., None, :] - (eps * v)[:, None]).reshape(-1, 1)
        vals = fn(pts).reshape(lead + (len(v),) + out_shape)
        return np.tensordot(vals, wb, axes=([len(lead)], [0]))

    return TestFunction(
        value=lambda X: _conv(f.value, X, ()),
        gradient=lambda X: _conv(f.gradient, X, (1,)),
        hessian=lambda X: _conv(f.hessian, X, (1, 1)),
        support_radius=f.support_radius + eps,
        dim=1,
        name=f"{f.name}*rho_{eps}",
        center=f.center,
    )


def verify_mollified_fpe(curve, coeffs, k, eps, bank, spec=DEFAULT_QUAD,
                         times=None, n_sub=4, kernel_static=False):
    """Residual of the regularized FPE: mu_eps_t(f) - mu_eps_ta(f)
    - int mu_eps_s(L_eps_s f) ds over the curve window.

    By Fubini the expectation of the regularized generator reduces to the
    base generator applied to the smoothed test function at the curve's own
    atoms, plus the Gaussian-floor pairing (zero by stationarity); no
    mollified density ever appears in a denominator.
    """
    from .fpe_residual import ResidualReport
    from .operators import apply_N_batch, generator_apply_batch

    if times is None:
        times = curve.times[curve.times >= curve.times[0] + eps]
    times = np.asarray(times, dtype=float)
    t_a = float(times[0])
    residuals = np.zeros((len(bank), len(times)))
    names, c2 = [], []
    for fi, f in enumerate(bank):
        names.append(f.name)
        c2.append(f.c2_norm())
        f_eps = smoothed_test_function(f, eps)
        # per grid time: mu_tau(f_eps) and mu_tau(L_tau f_eps)
        F = np.array([sl.integrate(f_eps.value) for sl in curve.slices])
        G = np.zeros(len(curve.times))
        cached = None
        for j, (tau, sl) in enumerate(zip(curve.times, curve.slices)):
            pts, mass = sl.as_points()
            if k is None:
                vals = np.zeros(len(pts))
            elif kernel_static:
                if cached is None or not np.array_equal(pts[:, 0], cached[0]):
                    cached = (pts[:, 0].copy(), apply_N_batch(k, f_eps, tau, pts[:, 0], spec))
                vals = cached[1].copy()
            else:
                vals = apply_N_batch(k, f_eps, tau, pts[:, 0], spec)
            if coeffs is not None:
                vals = vals + np.einsum("nij,nji->n", coeffs.a(tau, pts), f_eps.hessian(pts))
                vals = vals + np.einsum("ni,ni->n", coeffs.b(tau, pts), f_eps.gradient(pts))
            G[j] = float(np.dot(mass, vals))
        floor_pair = gaussian_floor_generator_pairing(f)

        def mu_eps_f(t):
            w = time_weights(curve.times, t, eps)
            R = f.support_radius
            y, wq = gauss_panels(f.center + np.linspace(-R, R, 65))
            floor = float(np.dot(wq, gaussian_floor(y[:, None]) * f.value(y[:, None])))
            return (1.0 - eps) * float(np.dot(w, F)) + eps * floor

        def integrand(s):
            wz = time_weights(curve.times, s, eps, zero_before=0.0)
            return (1.0 - eps) * float(np.dot(wz, G)) + eps * floor_pair

        base = mu_eps_f(t_a)
        for ti, t in enumerate(times):
            # fine trapezoid in s over [t_a, t]
            m = max(2, int(np.ceil((t - t_a) / (np.min(np.diff(curve.times)) / n_sub))) + 1)
            ss = np.linspace(t_a, t, m)
            ivals = np.array([integrand(s) for s in ss])
            integral = float(np.trapezoid(ivals, ss))
            residuals[fi, ti] = mu_eps_f(t) - base - integral
    return ResidualReport(times, names, residuals,
                          np.zeros(len(bank)), np.array(c2))
