"""Distribution-dependent SDE particle system and the representation loop.

    dY = rho_{Y_t}(Y_t-)^((m-1)/alpha) dL_t,

with rho the density of Y_t, estimated from the ensemble by kernel
smoothing each step.  The closure experiment solves the fractional porous
medium equation from the same initial density and compares the particle
density with the PDE solution in L^1, plus the weak-FPE residual of the
particle curve against the kappa = u^(m-1) generator.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .errors import DegenerateEnsemble
from .fpe_residual import TestBank
from .measures import MeasureCurve, ParticleCloud
from .quadrature import DEFAULT_QUAD
from .rng import stream
from .sde_sim import MultiplicativeStableJumps, ParticleEnsemble, euler_step
from .stable_law import StableParams


@dataclass
class DensityEstimator:
    """Kernel smoothing (or histogram) of a particle ensemble on a grid."""

    method: str = "kde"  # "kde" | "hist"
    bandwidth: Optional[float] = None  # None: Silverman's rule per call
    grid_halfwidth: float = 32.0
    grid_n: int = 4096

    def grid(self):
        return np.linspace(-self.grid_halfwidth, self.grid_halfwidth, self.grid_n,
                           endpoint=False)


@dataclass
class DensityEstimate:
    x: np.ndarray
    values: np.ndarray
    bandwidth: float
    in_grid_fraction: float

    def __call__(self, pts):
        return np.interp(pts, self.x, self.values, left=0.0, right=0.0)

    def mass(self):
        return float(np.sum(self.values) * (self.x[1] - self.x[0]))

    def l1_distance(self, other_x, other_vals):
        mine = np.interp(other_x, self.x, self.values, left=0.0, right=0.0)
        return float(np.trapezoid(np.abs(mine - other_vals), other_x))


def silverman_bandwidth(samples):
    n = len(samples)
    std = float(np.std(samples))
    iqr = float(np.subtract(*np.percentile(samples, [75, 25])))
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    if spread == 0:
        raise DegenerateEnsemble("all particles coincide")
    return 0.9 * spread * n ** (-0.2)


def estimate_density(positions, est):
    """Non-negative normalized density on the estimator grid.

    Linear (cloud-in-cell) binning; KDE smooths spectrally with a Gaussian
    of the chosen bandwidth.  Particles outside the grid are dropped and
    reported through in_grid_fraction before renormalization.
    """
    y = np.asarray(positions, dtype=float).reshape(-1)
    x = est.grid()
    dx = x[1] - x[0]
    if est.method == "kde":
        h = est.bandwidth if est.bandwidth is not None else silverman_bandwidth(y)
    else:
        h = dx

    pos = (y - x[0]) / dx
    inside = (pos >= 0) & (pos < len(x) - 1)
    frac_in = float(np.mean(inside))
    if frac_in == 0.0:
        raise DegenerateEnsemble("no particles inside the estimator grid")
    pos = pos[inside]
    i0 = np.floor(pos).astype(int)
    w1 = pos - i0
    counts = np.bincount(i0, weights=1.0 - w1, minlength=len(x)) \
        + np.bincount(i0 + 1, weights=w1, minlength=len(x))
    dens = counts / (len(y) * dx)

    if est.method == "kde":
        xi = 2.0 * np.pi * np.fft.rfftfreq(len(x), d=dx)
        sm = np.fft.irfft(np.fft.rfft(dens) * np.exp(-0.5 * (h * xi) ** 2), len(x))
        dens = np.maximum(sm, 0.0)
    elif est.method != "hist":
        raise ValueError(f"unknown estimator method {est.method!r}")

    mass = dens.sum() * dx
    return DensityEstimate(x, dens / mass, h if est.method == "kde" else dx, frac_in)


@dataclass
class DdsdeRun:
    """Configuration for the nonlinear particle system."""

    n_particles: int
    m: float
    alpha: float
    dt: float
    seed: int = 0
    density_floor: float = 1e-8
    refresh_every: int = 1
    estimator: DensityEstimator = field(default_factory=DensityEstimator)

    def __post_init__(self):
        if self.m <= 1:
            raise ValueError("porous media exponent m must be > 1")
        if not 0.0 < self.alpha < 2.0:
            raise ValueError(f"alpha={self.alpha} outside (0, 2)")


def sigma_from_density(run, density):
    expo = (run.m - 1.0) / run.alpha

    def sigma(t, X):
        rho = density(X[:, 0])
        return (rho + run.density_floor) ** expo

    return sigma


def ddsde_step(run, ens, density):
    """One explicit step: sigma uses the pre-jump positions and the current
    density estimate (predictable evaluation)."""
    jumps = MultiplicativeStableJumps(StableParams(run.alpha, 1),
                                      sigma_from_density(run, density))
    return euler_step(ens, None, jumps, run.dt)


def run_ddsde(run, init_sampler, T, snapshot_times):
    """Evolve to horizon T; returns (MeasureCurve of clouds, density snapshots)."""
    g0 = stream(run.seed, "ddsde-init")
    y0 = np.atleast_2d(np.asarray(init_sampler(g0, run.n_particles), dtype=float))
    ens = ParticleEnsemble(y0, time=0.0, master_seed=run.seed)
    n_steps = int(round(T / run.dt))
    snapshot_times = np.asarray(snapshot_times, dtype=float)
    snap_steps = {int(round(s / run.dt)): float(s) for s in snapshot_times}
    clouds, dens_snaps, times = [], [], []
    density = estimate_density(ens.positions[:, 0], run.estimator)
    if 0 in snap_steps:
        times.append(0.0)
        clouds.append(ens.as_cloud())
        dens_snaps.append(density)
    for step in range(1, n_steps + 1):
        if (step - 1) % run.refresh_every == 0:
            density = estimate_density(ens.positions[:, 0], run.estimator)
        ens = ddsde_step(run, ens, density)
        if step in snap_steps:
            times.append(snap_steps[step])
            clouds.append(ens.as_cloud())
            dens_snaps.append(estimate_density(ens.positions[:, 0], run.estimator))
    return MeasureCurve(np.asarray(times), clouds), dens_snaps


@dataclass
class ComparisonReport:
    """L^1 closure of the particle density against the PDE solution."""

    times: List[float]
    l1_distances: List[float]
    residuals: Optional[dict]
    negative_control_l1_final: Optional[float]
    config: dict

    def to_dict(self):
        return {
            "times": [float(t) for t in self.times],
            "l1_distances": [float(v) for v in self.l1_distances],
            "residuals": self.residuals,
            "negative_control_l1_final": self.negative_control_l1_final,
            "config": self.config,
        }


def inverse_cdf_sampler(x, values):
    """Sampler for a grid density via inverse-CDF interpolation."""
    dx = x[1] - x[0]
    cdf = np.concatenate([[0.0], np.cumsum(values) * dx])
    cdf /= cdf[-1]
    edges = np.concatenate([[x[0] - 0.5 * dx], x + 0.5 * dx])

    def sampler(rng, n):
        u = rng.random(n)
        return np.interp(u, cdf, edges)[:, None]

    return sampler


def representation_experiment(init, m, alpha, T, n_particles, *, grid=None,
                              snapshot_times=(0.1, 0.25, 0.5), dt=2.5e-3,
                              seed=0, estimator=None, bank=None,
                              with_residual=True, negative_control=True,
                              spec=DEFAULT_QUAD):
    """FPME solve and DDSDE particle run from the same initial law.

    Reports L^1(KDE, u(t, .)) at the snapshot times, the weak-FPE residual
    of the particle curve against kappa = u^(m-1), and the m-mismatched
    negative control distance at the final time.
    """
    from . import fpme
    from .fpe_residual import residual as fpe_res
    from .kernels import stable_like_kernel
    from .operators import smooth_bump
    from .sde_sim import make_grid_generator_evaluator

    if grid is None:
        grid = fpme.FpmeGrid(32.0, 1024)
    estimator = estimator or DensityEstimator()
    snapshot_times = tuple(float(s) for s in snapshot_times)
    pde_times = np.unique(np.concatenate([[0.0], snapshot_times, [T]]))
    pde = fpme.solve(init, m, alpha, grid, pde_times)
    curve_u, kappa_fn, _sigma = fpme.as_measure_curve(pde)

    sampler = inverse_cdf_sampler(grid.x, pde.fields[0].values)
    run = DdsdeRun(n_particles, m, alpha, dt, seed=seed, estimator=estimator)
    cloud_curve, dens_snaps = run_ddsde(run, sampler, T, snapshot_times)

    l1 = []
    for s, dens in zip(cloud_curve.times, dens_snaps):
        j = int(np.argmin(np.abs(pde.times - s)))
        l1.append(dens.l1_distance(grid.x, pde.fields[j].values))

    residuals = None
    if with_residual:
        bank = bank or TestBank([smooth_bump(2.0), smooth_bump(4.0)])
        k_u = stable_like_kernel(alpha, kappa_fn, ell=0.5)
        rows = {}
        for f in bank:
            vals = []
            for s in cloud_curve.times:
                lf = make_grid_generator_evaluator(None, k_u, f, grid.x[0],
                                                   grid.x[-1], grid.n + 1,
                                                   spec=spec, t_ref=float(s))
                cloud = cloud_curve.at(float(s))
                vals.append(float(np.dot(cloud.weights, lf(s, cloud.positions))))
            mu_f = [cloud_curve.at(float(s)).integrate(f.value) for s in cloud_curve.times]
            cum = np.concatenate([[0.0], np.cumsum(
                0.5 * (np.array(vals)[1:] + np.array(vals)[:-1])
                * np.diff(cloud_curve.times))])
            rows[f.name] = [float(r) for r in (np.array(mu_f) - mu_f[0] - cum)]
        residuals = rows

    neg_final = None
    if negative_control:
        run_bad = DdsdeRun(n_particles, m + 1.0, alpha, dt, seed=seed,
                           estimator=estimator)
        curve_bad, dens_bad = run_ddsde(run_bad, sampler, T, (T,))
        j = int(np.argmin(np.abs(pde.times - T)))
        neg_final = dens_bad[-1].l1_distance(grid.x, pde.fields[j].values)

    cfg = {
        "m": m, "alpha": alpha, "T": T, "n_particles": n_particles,
        "dt": dt, "seed": seed, "density_floor": run.density_floor,
        "estimator": {"method": estimator.method,
                       "bandwidth": estimator.bandwidth,
                       "grid_halfwidth": estimator.grid_halfwidth,
                       "grid_n": estimator.grid_n},
        "grid": {"width": grid.width, "n": grid.n},
        "snapshot_times": list(snapshot_times),
    }
    return ComparisonReport([float(s) for s in cloud_curve.times], l1, residuals,
                            neg_final, cfg)
