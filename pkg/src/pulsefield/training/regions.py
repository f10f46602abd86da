"""Collocation sets and fluid/boundary classification."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DegenerateInputError
from ..flowfield import BOUNDARY, FLUID, FlowField

__all__ = ["BoundaryMask", "CollocationSet", "classify_regions", "nearest_index"]


@dataclass
class BoundaryMask:
    """Wall mask on its own rectilinear grid; ``boundary`` is indexed (t, x, y).

    ``times`` may be ``None`` for a static mask, in which case ``boundary``
    has shape ``(nx, ny)``.
    """

    times: np.ndarray | None
    xs: np.ndarray
    ys: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.ys = np.asarray(self.ys, dtype=float)
        self.boundary = np.asarray(self.boundary, dtype=bool)
        if self.times is None:
            if self.boundary.shape != (self.xs.size, self.ys.size):
                raise ConfigError("static mask must have shape (nx, ny)")
            self.boundary = self.boundary[None]
        else:
            self.times = np.asarray(self.times, dtype=float)
            if self.boundary.shape != (self.times.size, self.xs.size, self.ys.size):
                raise ConfigError("mask shape does not match its grid")


def nearest_index(grid: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Index of the nearest grid node for every value (ties go to the lower node)."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 1:
        return np.zeros(np.shape(values), dtype=int)
    hi = np.clip(np.searchsorted(grid, values), 1, grid.size - 1)
    lo = hi - 1
    return np.where(values - grid[lo] <= grid[hi] - values, lo, hi)


@dataclass
class CollocationSet:
    """Training points with observations and region labels.

    ``points`` are physical ``(t, x, y)`` rows, ``targets`` the observed
    ``(u*, v*)``; ``cycle_points`` are the ``(x, y)`` locations compared at
    the start and end of the period.
    """

    points: np.ndarray
    targets: np.ndarray
    region: np.ndarray
    cycle_points: np.ndarray
    t_start: float = 0.0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1, 2)
        self.region = np.asarray(self.region, dtype=np.int8).reshape(-1)
        self.cycle_points = np.asarray(self.cycle_points, dtype=float).reshape(-1, 2)
        if not (len(self.points) == len(self.targets) == len(self.region)):
            raise ConfigError("points, targets and region must have equal length")

    @property
    def N(self) -> int:
        return len(self.points)

    @property
    def N_cycle(self) -> int:
        return len(self.cycle_points)

    @property
    def fluid(self) -> np.ndarray:
        return self.region == FLUID

    @property
    def boundary(self) -> np.ndarray:
        return self.region == BOUNDARY

    def subset(self, idx) -> "CollocationSet":
        return CollocationSet(self.points[idx], self.targets[idx], self.region[idx],
                              self.cycle_points, self.t_start)


def classify_regions(field: FlowField, mask: BoundaryMask | None = None) -> CollocationSet:
    """Label every grid point as fluid or boundary.

    Without a mask the first and last ``y`` rows are walls.  With a mask each
    field point takes the label of the nearest mask node; as the mask grid is
    rectilinear this is the per-axis nearest node.
    """
    nt, nx, ny = field.shape
    if ny < 3:
        raise DegenerateInputError("need at least three y rows")
    if mask is None:
        labels = np.full(field.shape, FLUID, dtype=np.int8)
        labels[:, :, 0] = BOUNDARY
        labels[:, :, -1] = BOUNDARY
    else:
        def disjoint(grid, values):
            return values.max() < grid.min() or values.min() > grid.max()

        if disjoint(mask.xs, field.xs) or disjoint(mask.ys, field.ys) or (
                mask.times is not None and disjoint(mask.times, field.times)):
            raise ConfigError("mask grid does not overlap the flow field")
        ix = nearest_index(mask.xs, field.xs)
        iy = nearest_index(mask.ys, field.ys)
        it = (np.zeros(nt, dtype=int) if mask.times is None
              else nearest_index(mask.times, field.times))
        picked = mask.boundary[np.ix_(it, ix, iy)]
        labels = np.where(picked, BOUNDARY, FLUID).astype(np.int8)
    cyc_x, cyc_y = np.meshgrid(field.xs, field.ys, indexing="ij")
    return CollocationSet(field.coordinates(), field.velocities(), labels.ravel(),
                          np.stack([cyc_x.ravel(), cyc_y.ravel()], axis=1),
                          float(field.times[0]))
