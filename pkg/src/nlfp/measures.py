"""Curves of probability measures: grid densities or weighted particle clouds."""

import csv
from dataclasses import dataclass, field
from typing import List, Union

import numpy as np

from .errors import EmptyCurve

MASS_TOL = 1e-9


@dataclass
class GridDensity:
    """Uniform 1-d grid density; cell masses are values * dx."""

    x: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if len(self.x) < 2:
            raise ValueError("grid needs at least two nodes")
        if np.any(self.values < -1e-14):
            raise ValueError("negative density values")
        m = self.mass()
        if abs(m - 1.0) > MASS_TOL:
            raise ValueError(f"grid density mass {m} != 1")

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])

    def mass(self):
        return float(np.sum(self.values) * self.dx)

    def integrate(self, fn):
        """integral of fn against the measure (cell midpoints as atoms)."""
        return float(np.sum(self.values * fn(self.x[:, None])) * self.dx)

    def as_points(self):
        """(positions (n,1), masses (n,)) treating cells as atoms."""
        return self.x[:, None], self.values * self.dx

    @property
    def dim(self):
        return 1


@dataclass
class ParticleCloud:
    """Weighted particles in R^d; weights sum to one."""

    positions: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        n = len(self.positions)
        if self.weights is None:
            self.weights = np.full(n, 1.0 / n)
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0):
            raise ValueError("negative particle weights")
        m = float(np.sum(self.weights))
        if abs(m - 1.0) > MASS_TOL:
            raise ValueError(f"particle weights sum to {m} != 1")

    def mass(self):
        return float(np.sum(self.weights))

    def integrate(self, fn):
        return float(np.dot(self.weights, fn(self.positions)))

    def as_points(self):
        return self.positions, self.weights

    @property
    def dim(self):
        return self.positions.shape[1]


Slice = Union[GridDensity, ParticleCloud]


@dataclass
class MeasureCurve:
    """Finite time grid of probability measures.

    By convention the curve is frozen outside its window: mu_t := mu_{t0}
    for t <= t0 and mu_t := mu_T for t >= T.
    """

    times: np.ndarray
    slices: List[Slice]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) == 0:
            raise EmptyCurve("curve has no time slices")
        if len(self.times) != len(self.slices):
            raise ValueError("times/slices length mismatch")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @property
    def dim(self):
        return self.slices[0].dim

    def at(self, t):
        """Slice at the grid time nearest to t (frozen outside the window)."""
        return self.slices[self.index_near(t)]

    def index_near(self, t):
        return int(np.argmin(np.abs(self.times - t)))

    def expectation(self, fn, t_index):
        return self.slices[t_index].integrate(fn)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            d = self.dim
            kind = "grid" if isinstance(self.slices[0], GridDensity) else "particle"
            w.writerow(["time"] + [f"x{i+1}" for i in range(d)] + [kind_col(kind)])
            for t, sl in zip(self.times, self.slices):
                pts, mass = sl.as_points()
                if isinstance(sl, GridDensity):
                    payload = sl.values
                else:
                    payload = sl.weights
                for p, v in zip(pts, payload):
                    w.writerow([repr(float(t))] + [repr(float(c)) for c in p]
                               + [repr(float(v))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            kind = header[-1]
            d = len(header) - 2
            rows = [(float(row[0]), [float(c) for c in row[1:1 + d]], float(row[-1]))
                    for row in r]
        times = sorted({t for t, _, _ in rows})
        slices = []
        for t in times:
            pts = np.array([p for tt, p, _ in rows if tt == t])
            vals = np.array([v for tt, _, v in rows if tt == t])
            if kind == "density":
                slices.append(GridDensity(pts[:, 0], vals))
            else:
                slices.append(ParticleCloud(pts, vals))
        return cls(np.asarray(times), slices)


def kind_col(kind):
    return "density" if kind == "grid" else "weight"


def static_curve(sl, times):
    """The same measure at every time (frozen dynamics)."""
    return MeasureCurve(np.asarray(times, dtype=float), [sl] * len(times))


def grid_density_from_values(x, values):
    """Normalize raw non-negative values into a GridDensity."""
    values = np.maximum(np.asarray(values, dtype=float), 0.0)
    dx = float(x[1] - x[0])
    m = values.sum() * dx
    if m <= 0:
        raise ValueError("cannot normalize zero density")
    return GridDensity(x, values / m)
