"""Time-space indexed Lévy kernels and their growth functionals.

A kernel nu_{t,x} is split at the small-jump cutoff ell into an absolutely
continuous part on {|z| < ell} (``small_density``) and a big-jump part known
through its radial tail mass ``tail_measure`` and, when available, a density
``big_density`` on {|z| > ell}.

The four functionals computed here drive every well-posedness check:

    g(t, x)     second moment of the small jumps,
    hbar(t, x)  log-tail growth functional (symmetric variant on demand),
    H(t, x, y)  shifted log-tail used by the Lyapunov estimate,
    tail mass   nu_{t,x}({|z| > r}).
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NonIntegrable
from .quadrature import (
    DEFAULT_QUAD,
    QuadratureSpec,
    integrate_radial_tail,
    radial_nodes,
    sphere_area,
    sphere_directions,
)

ELL_MAX = 1.0 / np.sqrt(2.0)


@dataclass
class LevyKernel:
    """A family nu_{t,x} of Lévy measures on R^d.

    Densities are callables (t, x, z) -> values with x, z broadcastable
    arrays of trailing dimension d; tail_measure is (t, x, r) -> mass.
    ``symmetric`` asserts nu_{t,x}(A) = nu_{t,x}(-A) for all (t, x); it also
    switches hbar to the symmetric definition (integration over
    {|z| > 1+|x|} instead of {|z| > ell}).
    """

    ell: float
    dim: int
    small_density: Callable
    tail_measure: Optional[Callable]
    tail_sampler: Optional[Callable] = None
    symmetric: bool = False
    big_density: Optional[Callable] = None
    small_ball_moment: Optional[Callable] = None
    name: str = "levy"
    z_symmetric: Optional[bool] = None  # structural nu(A) = nu(-A); defaults to the flag

    def __post_init_flags__(self):
        pass

    def __post_init__(self):
        if not 0 < self.ell <= ELL_MAX + 1e-15:
            raise ValueError(f"ell={self.ell} violates 0 < ell <= 1/sqrt(2)")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.z_symmetric is None:
            self.z_symmetric = self.symmetric


@dataclass
class ProbeGrid:
    """Finite (t, x) grid over which sampled suprema are taken."""

    times: np.ndarray
    points: np.ndarray  # (n, d)

    @classmethod
    def box_1d(cls, x_max, n=101, times=(0.0,), log=False, x_min=None):
        if log:
            lo = x_min if x_min is not None else x_max * 1e-3
            half = np.geomspace(lo, x_max, n // 2)
            xs = np.concatenate([-half[::-1], [0.0], half])
        else:
            xs = np.linspace(-x_max, x_max, n)
        return cls(np.asarray(times, dtype=float), xs[:, None])


def zero_kernel(dim=1, ell=0.5):
    """Kernel with no jumps at all."""
    return LevyKernel(
        ell=ell,
        dim=dim,
        small_density=lambda t, x, z: np.zeros(np.broadcast(x[..., 0], z[..., 0]).shape),
        tail_measure=lambda t, x, r: np.zeros(np.broadcast(x[..., 0], r).shape),
        tail_sampler=None,
        symmetric=True,
        big_density=lambda t, x, z: np.zeros(np.broadcast(x[..., 0], z[..., 0]).shape),
        small_ball_moment=lambda t, x, delta: np.zeros(np.shape(x[..., 0])),
        name="zero",
    )


def stable_like_kernel(alpha, kappa=None, *, dim=1, ell=0.5, symmetric=False,
                       kappa_state_only=True, name=None):
    """Stable-like kernel nu_{t,x}(dz) = kappa_t(x, z) dz / |z|^(d+alpha).

    kappa may be None (== 1), a constant, or a callable; with
    ``kappa_state_only`` the callable takes (t, x) and the kernel is
    isotropic in z, which unlocks closed-form tail mass, inner-ball moment
    and an exact big-jump sampler.  A (t, x, z) callable is also accepted
    (set ``kappa_state_only=False``); tails then fall back to quadrature.
    """
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"alpha={alpha} outside (0, 2)")
    omega = sphere_area(dim)

    if kappa is None:
        kappa = 1.0
    if np.isscalar(kappa):
        kappa_val = float(kappa)
        kappa_fn = lambda t, x: np.full(np.shape(x[..., 0]), kappa_val)
    elif kappa_state_only:
        kappa_fn = kappa
    else:
        kappa_fn = None

    def density(t, x, z):
        r = np.linalg.norm(z, axis=-1)
        r = np.where(r > 0, r, np.inf)
        if kappa_fn is not None:
            k = kappa_fn(t, x)
        else:
            k = kappa(t, x, z)
        return k * r ** (-(dim + alpha))

    if kappa_fn is not None:
        def tail(t, x, r):
            return kappa_fn(t, x) * omega * np.asarray(r, dtype=float) ** (-alpha) / alpha

        def inner_moment(t, x, delta):
            return kappa_fn(t, x) * omega * delta ** (2.0 - alpha) / (2.0 - alpha)

        def sampler(t, x, rng, size, lower=None):
            lo = ell if lower is None else float(lower)
            u = rng.random(size)
            radii = lo * u ** (-1.0 / alpha)
            if dim == 1:
                signs = rng.choice([-1.0, 1.0], size=size)
                return (radii * signs)[:, None]
            g = rng.standard_normal((size, dim))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            return radii[:, None] * g
    else:
        tail = None
        inner_moment = None
        sampler = None

    return LevyKernel(
        ell=ell,
        dim=dim,
        small_density=density,
        tail_measure=tail,
        tail_sampler=sampler,
        symmetric=symmetric,
        big_density=density,
        small_ball_moment=inner_moment,
        name=name or f"stable_like(alpha={alpha})",
        z_symmetric=True if kappa_fn is not None else symmetric,
    )


def example_i_kernel(alpha, c=1.0, dim=1, ell=0.5):
    """Bounded-hbar stable-like family: kappa = c(1+|x|)^(alpha^1) damped by
    log(1+|x|) when alpha == 1."""
    p = min(alpha, 1.0)

    def kap(t, x):
        ax = np.linalg.norm(x, axis=-1)
        damp = 1.0 + (np.log1p(ax) if alpha == 1.0 else 0.0)
        return c * (1.0 + ax) ** p / damp

    return stable_like_kernel(alpha, kap, dim=dim, ell=ell, name="example_i")


def example_ii_kernel(alpha, c=1.0, dim=1, ell=0.5):
    """Symmetric family with kappa = c(1+|x|)^alpha; bounded hbar through
    the symmetric log-tail definition."""

    def kap(t, x):
        ax = np.linalg.norm(x, axis=-1)
        return c * (1.0 + ax) ** alpha

    return stable_like_kernel(alpha, kap, dim=dim, ell=ell, symmetric=True,
                              name="example_ii")


# ---------------------------------------------------------------------------
# growth functionals
# ---------------------------------------------------------------------------


def _shell_moment(k, t, x, lo, hi, spec):
    """integral over {lo < |z| < hi} of |z|^2 nu(dz) via radial-angular GL."""
    dirs, aw = sphere_directions(k.dim, spec)
    r, rw = radial_nodes(lo, hi, spec)
    z = r[:, None, None] * dirs[None, :, :]
    dens = k.small_density(t, x, z)
    ang = np.tensordot(dens, aw, axes=([-1], [0]))
    return float(np.dot(rw, ang * r ** (k.dim + 1)))


def small_jump_moment_detailed(k, t, x, spec=DEFAULT_QUAD):
    """g(t, x) = int_{|z|<ell} |z|^2 nu_{t,x}(dz), with an error estimate."""
    x = np.asarray(x, dtype=float)
    delta = k.ell * spec.delta_in_factor
    shell = _shell_moment(k, t, x, delta, k.ell, spec)
    if k.small_ball_moment is not None:
        inner = float(k.small_ball_moment(t, x, delta))
        return shell + inner, abs(inner) * 1e-3 + spec.rel_tol * abs(shell)
    # no analytic inner ball: extrapolate octave contributions downward
    contribs = []
    hi = delta
    for _ in range(8):
        lo = hi / 2.0
        contribs.append(_shell_moment(k, t, x, lo, hi, spec))
        hi = lo
    c = np.array(contribs)
    head = abs(c[-1])
    if head <= 1e-300:
        return shell, spec.rel_tol * abs(shell)
    ratios = c[1:] / np.where(np.abs(c[:-1]) > 0, c[:-1], np.inf)
    rho = float(np.median(ratios[-3:]))
    if rho >= 1.0:
        raise NonIntegrable(
            f"inner-ball |z|^2 moment grows without bound (octave ratio {rho:.3f})",
            probe=(t, x),
        )
    geom = c[-1] * rho / (1.0 - rho)
    return shell + float(np.sum(c)) + float(geom), abs(float(geom))


def small_jump_moment(k, t, x, spec=DEFAULT_QUAD):
    return small_jump_moment_detailed(k, t, x, spec)[0]


def small_ball_second_moment(k, t, x, delta, spec=DEFAULT_QUAD):
    """int_{|z| < delta} |z|^2 nu(dz), analytic when the kernel supplies it."""
    x = np.asarray(x, dtype=float)
    if k.small_ball_moment is not None:
        return float(k.small_ball_moment(t, x, delta))
    full, _ = small_jump_moment_detailed(k, t, x, spec)
    shell = _shell_moment(k, t, x, delta, k.ell, spec)
    return max(full - shell, 0.0)


def _log_tail(k, t, x, denom, lower, spec, probe=None):
    """integral over {|z| > lower} of log(1 + |z|/denom) nu_{t,x}(dz)."""
    x = np.asarray(x, dtype=float)
    if k.big_density is not None:
        dirs, aw = sphere_directions(k.dim, spec)

        def fn(r):
            z = r[:, None, None] * dirs[None, :, :]
            dens = k.big_density(t, x, z)
            ang = np.tensordot(dens, aw, axes=([-1], [0]))
            return np.log1p(r / denom) * ang * r ** (k.dim - 1)

        val, _ = integrate_radial_tail(fn, lower, spec, probe=probe)
        return val
    if k.tail_measure is None:
        raise ValueError("kernel supplies neither big_density nor tail_measure")
    # integration by parts: log(1+a/D) M(a) + int_a^inf M(r)/(D+r) dr
    boundary = float(np.log1p(lower / denom) * k.tail_measure(t, x, lower))
    val, _ = integrate_radial_tail(
        lambda r: k.tail_measure(t, x, r) / (denom + r), lower, spec, probe=probe
    )
    return boundary + val


def log_tail_functional(k, t, x, spec=DEFAULT_QUAD):
    """hbar(t, x); uses the symmetric definition when the kernel says so."""
    x = np.asarray(x, dtype=float)
    denom = 1.0 + float(np.linalg.norm(x))
    lower = denom if k.symmetric else k.ell
    return _log_tail(k, t, x, denom, lower, spec, probe=(t, x))


def shifted_log_tail(k, t, x, y, spec=DEFAULT_QUAD):
    """H(t, x, y) = int_{|z|>ell} log(1 + |z|/(1+|x-y|)) nu_{t,x}(dz)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    denom = 1.0 + float(np.linalg.norm(x - y))
    return _log_tail(k, t, x, denom, k.ell, spec, probe=(t, x))


def tail_mass(k, t, x, r, spec=DEFAULT_QUAD):
    """nu_{t,x}({|z| > r}) for r >= ell."""
    if r < k.ell - 1e-15:
        raise ValueError(f"tail_mass needs r >= ell, got r={r} < ell={k.ell}")
    x = np.asarray(x, dtype=float)
    if k.tail_measure is not None:
        return float(k.tail_measure(t, x, r))
    dirs, aw = sphere_directions(k.dim, spec)

    def fn(rr):
        z = rr[:, None, None] * dirs[None, :, :]
        dens = k.big_density(t, x, z)
        ang = np.tensordot(dens, aw, axes=([-1], [0]))
        return ang * rr ** (k.dim - 1)

    val, _ = integrate_radial_tail(fn, r, spec, probe=(t, x))
    return val


# ---------------------------------------------------------------------------
# standing-assumption report
# ---------------------------------------------------------------------------


def _trace_norm(mat):
    """Nuclear norm; equals the trace for positive semi-definite input."""
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (mat + mat.T)))))


@dataclass
class ConditionReport:
    """Sampled supremum of the standing growth condition over a probe grid."""

    total_sup: float
    per_term: dict
    argmax_probe: dict
    violated: bool
    unbounded_trend: bool = False
    caveat: str = "supremum sampled on a finite probe grid"

    def to_dict(self):
        return {
            "total_sup": self.total_sup,
            "per_term": self.per_term,
            "argmax_probe": self.argmax_probe,
            "violated": self.violated,
            "unbounded_trend": self.unbounded_trend,
            "caveat": self.caveat,
        }


def assumption_report(k, coeffs, probes, spec=DEFAULT_QUAD):
    """Sampled sup of (|a|+g)/(1+|x|^2) + |b|/(1+|x|) + hbar over probes.

    ``coeffs`` may be None for a pure-jump system.  Non-finite terms flag
    the report as violated; NonIntegrable propagates with the probe.
    """
    best = -np.inf
    best_probe = None
    per_term_max = {"diffusion_and_g": 0.0, "drift": 0.0, "log_tail": 0.0}
    violated = False
    totals = []
    for t in probes.times:
        for xv in probes.points:
            x = np.asarray(xv, dtype=float)
            ax = float(np.linalg.norm(x))
            if coeffs is not None:
                a_val = _trace_norm(np.asarray(coeffs.a(t, x[None, :]))[0])
                b_val = float(np.linalg.norm(np.asarray(coeffs.b(t, x[None, :]))[0]))
            else:
                a_val, b_val = 0.0, 0.0
            g_val = small_jump_moment(k, t, x, spec)
            h_val = log_tail_functional(k, t, x, spec)
            t1 = (a_val + g_val) / (1.0 + ax ** 2)
            t2 = b_val / (1.0 + ax)
            t3 = h_val
            total = t1 + t2 + t3
            totals.append((ax, total))
            if not np.isfinite(total):
                violated = True
            per_term_max["diffusion_and_g"] = max(per_term_max["diffusion_and_g"], t1)
            per_term_max["drift"] = max(per_term_max["drift"], t2)
            per_term_max["log_tail"] = max(per_term_max["log_tail"], t3)
            if total > best:
                best = total
                best_probe = {"t": float(t), "x": [float(v) for v in x]}
    trend = _unbounded_trend(totals)
    return ConditionReport(
        total_sup=float(best),
        per_term=per_term_max,
        argmax_probe=best_probe,
        violated=violated,
        unbounded_trend=trend,
    )


def _unbounded_trend(totals):
    """Heuristic: does the sampled total keep growing toward the box edge?"""
    ax = np.array([p[0] for p in totals])
    tv = np.array([p[1] for p in totals])
    if ax.max() <= 0:
        return False
    outer = tv[ax > 0.5 * ax.max()]
    inner = tv[ax <= 0.5 * ax.max()]
    if len(outer) == 0 or len(inner) == 0:
        return False
    return bool(np.max(outer) > 1.5 * np.max(inner))


def validate_kernel(k, probes, spec=DEFAULT_QUAD):
    """Assert the structural kernel invariants on a probe grid."""
    assert 0 < k.ell <= ELL_MAX + 1e-15
    radii = k.ell * np.array([1.0, 2.0, 4.0, 16.0, 256.0])
    for t in probes.times:
        for xv in probes.points:
            x = np.asarray(xv, dtype=float)
            if k.tail_measure is not None:
                masses = np.array([k.tail_measure(t, x, r) for r in radii])
                assert np.all(np.isfinite(masses))
                assert np.all(np.diff(masses) <= 1e-12 * (1 + masses[0]))
            g = small_jump_moment(k, t, x, spec)
            assert np.isfinite(g) and g >= 0
            z = np.array([[0.3 * k.ell] + [0.0] * (k.dim - 1)])
            assert k.small_density(t, x, z)[0] >= 0
