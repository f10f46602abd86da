"""Occlusion probability map and the blending loss for branched models."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DegenerateInputError
from ..flowfield import FlowField
from ..model import BranchedModel, predict, predict_branched
from .regions import CollocationSet, nearest_index

__all__ = ["OcclusionMap", "compute_occlusion_map", "loss_occ", "occ_term",
           "BETA", "UNINFORMATIVE"]

BETA = 4.4
UNINFORMATIVE = 0.5
_EDGE = 1e-12


@dataclass
class OcclusionMap:
    """Probability of *not* being occluded, on a ``(t, x, y)`` grid."""

    times: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.xs = np.asarray(self.xs, dtype=float)
        self.ys = np.asarray(self.ys, dtype=float)
        self.lam = np.asarray(self.lam, dtype=float)
        if self.lam.shape != (self.times.size, self.xs.size, self.ys.size):
            raise ConfigError("occlusion map shape does not match its grid")
        if not (np.all(self.lam > 0.0) and np.all(self.lam < 1.0)):
            raise ConfigError("occlusion map values must lie strictly inside (0, 1)")

    @classmethod
    def constant(cls, field: FlowField, value: float) -> "OcclusionMap":
        """Constant map on the field grid; ``value`` is clipped into the open interval."""
        lam = np.full(field.shape, float(np.clip(value, _EDGE, 1.0 - _EDGE)))
        return cls(field.times, field.xs, field.ys, lam)

    def lookup(self, points) -> np.ndarray:
        """Nearest-node value at each ``(t, x, y)`` row."""
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        it = nearest_index(self.times, p[:, 0])
        ix = nearest_index(self.xs, p[:, 1])
        iy = nearest_index(self.ys, p[:, 2])
        return self.lam[it, ix, iy]


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def compute_occlusion_map(field: FlowField, beta: float = BETA) -> OcclusionMap:
    """Streamline-based occlusion probability.

    Streamlines are taken as constant-``y`` rows at each time.  A point
    whose speed falls below its row mean is likely occluded:
    ``lam = sigmoid(beta * (|u| - mean) / (mean + eps))`` with
    ``eps = 1e-6 * max|u|``.  Boundary rows get 0.5.
    """
    fluid_rows = field.fluid.any(axis=(0, 1))
    if not fluid_rows.any():
        raise DegenerateInputError("field has no fluid rows")
    speed = np.hypot(field.u, field.v)
    eps = 1e-6 * float(speed.max())
    mean = speed.mean(axis=1, keepdims=True)  # over x, per (t, y)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = beta * (speed - mean) / (mean + eps)
    lam = np.where(np.isfinite(z), _sigmoid(np.nan_to_num(z)), UNINFORMATIVE)
    lam[field.boundary] = UNINFORMATIVE
    lam = np.clip(lam, _EDGE, 1.0 - _EDGE)
    return OcclusionMap(field.times, field.xs, field.ys, lam)


def occ_term(blend, a, w, lam):
    """``mean |blend - (lam a + (1 - lam) w)|^2``; works on arrays and tensors."""
    lam = lam[:, None]
    r = blend - (lam * a + (1.0 - lam) * w)
    return (r * r).sum(1).mean()


def loss_occ(bm: BranchedModel, cs: CollocationSet, lam: OcclusionMap) -> float:
    if cs.N < 1:
        raise DegenerateInputError("collocation set is empty")
    a = predict(bm.msff_branch, cs.points)
    w = predict(bm.vanilla_branch, cs.points)
    v = predict_branched(bm, cs.points)
    return float(occ_term(v, a, w, lam.lookup(cs.points)))
