"""Loss terms for fitting a neural field to a noisy flow field.

The ``*_term`` functions work on torch callables and tensors and keep the
autograd graph; the ``loss_*`` wrappers accept a
:class:`~pulsefield.model.FieldModel` (or any callable on ``(N, 3)``
tensors) and a :class:`CollocationSet` and return floats, evaluated in
float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..errors import ConfigError, DegenerateInputError
from ..model import Scales
from ..nets import as_torch_field, residual_terms
from .regions import CollocationSet

__all__ = [
    "LossWeights",
    "LossValues",
    "TERMS",
    "data_term",
    "cycle_term",
    "phys_term",
    "tv_term",
    "loss_data",
    "loss_cycle",
    "loss_phys",
    "loss_tv",
    "total_loss",
    "grid_offsets",
]

TERMS = ("data", "cycle", "phys", "tv")
_CHUNK = 512


@dataclass(frozen=True)
class LossWeights:
    data: float = 1.0
    cycle: float = 1.0
    phys: float = 1e-6
    tv: float = 1.0
    occ: float = 1.0

    def __post_init__(self):
        for name in ("data", "cycle", "phys", "tv", "occ"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")

    def scaled(self, c: float) -> "LossWeights":
        return LossWeights(self.data * c, self.cycle * c, self.phys * c, self.tv * c,
                           self.occ * c)

    def to_dict(self) -> dict:
        return {"lambda_data": self.data, "lambda_cycle": self.cycle,
                "lambda_phys": self.phys, "lambda_tv": self.tv, "lambda_occ": self.occ}


@dataclass
class LossValues:
    total: float
    raw: dict = field(default_factory=dict)
    weighted: dict = field(default_factory=dict)


def _sq(a):
    return (a * a).sum(dim=1)


def data_term(fn, pts, targets):
    return _sq(fn(pts) - targets).mean()


def cycle_term(fn, cycle_xy, t_start: float, period: float):
    n = cycle_xy.shape[0]
    t0 = torch.full((n, 1), t_start, dtype=cycle_xy.dtype)
    a = fn(torch.cat([t0, cycle_xy], dim=1))
    b = fn(torch.cat([t0 + period, cycle_xy], dim=1))
    return _sq(a - b).mean()


def phys_term(fn, fluid_pts, boundary_pts, Re: float, scales: Scales = Scales()):
    """Mean squared residual + mean squared divergence over the fluid points
    + mean squared speed over the boundary points."""
    res, div = residual_terms(fn, fluid_pts, Re, scales)
    wall = _sq(fn(boundary_pts) / scales.velocity).mean()
    return (res * res).mean() + (div * div).mean() + wall


def tv_term(fn, pts, offsets, pred=None):
    """Mean of ``|u(x) - u(x + d)|^2`` over points, averaged over spatial offsets ``d``."""
    if pred is None:
        pred = fn(pts)
    total = 0.0
    for dx, dy in offsets:
        shift = torch.tensor([0.0, dx, dy], dtype=pts.dtype)
        total = total + _sq(pred - fn(pts + shift)).mean()
    return total / len(offsets)


def grid_offsets(xs, ys) -> list[tuple[float, float]]:
    """One grid spacing along +x and along +y."""
    return [(float(xs[1] - xs[0]), 0.0), (0.0, float(ys[1] - ys[0]))]


def _t(a):
    return torch.as_tensor(np.asarray(a, dtype=float), dtype=torch.float64)


def _require(n: int, what: str) -> None:
    if n < 1:
        raise DegenerateInputError(f"{what} is empty")


def loss_data(model, cs: CollocationSet) -> float:
    _require(cs.N, "collocation set")
    fn = as_torch_field(model)
    with torch.no_grad():
        return float(data_term(fn, _t(cs.points), _t(cs.targets)))


def loss_cycle(model, cs: CollocationSet, T: float) -> float:
    _require(cs.N_cycle, "cycle point set")
    fn = as_torch_field(model)
    with torch.no_grad():
        return float(cycle_term(fn, _t(cs.cycle_points), cs.t_start, T))


def loss_phys(model, cs: CollocationSet, Re: float, scales: Scales = Scales()) -> float:
    """Physics loss over the whole set; the residual is evaluated in chunks."""
    fluid = cs.points[cs.fluid]
    wall = cs.points[cs.boundary]
    _require(len(fluid), "fluid region")
    _require(len(wall), "boundary region")
    if Re <= 0:
        raise ConfigError("Re must be positive")
    fn = as_torch_field(model)
    res_sq = div_sq = 0.0
    for start in range(0, len(fluid), _CHUNK):
        res, div = residual_terms(fn, _t(fluid[start:start + _CHUNK]), Re, scales)
        res_sq += float((res * res).sum().detach())
        div_sq += float((div * div).sum().detach())
    with torch.no_grad():
        w = float(_sq(fn(_t(wall)) / scales.velocity).mean())
    return res_sq / len(fluid) + div_sq / len(fluid) + w


def loss_tv(model, cs: CollocationSet, offsets) -> float:
    _require(cs.N, "collocation set")
    offsets = [tuple(map(float, o)) for o in np.atleast_2d(offsets)]
    fn = as_torch_field(model)
    with torch.no_grad():
        return float(tv_term(fn, _t(cs.points), offsets))


def total_loss(model, cs: CollocationSet, w: LossWeights, Re: float, T: float, offsets,
               scales: Scales = Scales()) -> LossValues:
    """Weighted sum of the four terms; terms with zero weight are not evaluated."""
    raw = {}
    if w.data:
        raw["data"] = loss_data(model, cs)
    if w.cycle:
        raw["cycle"] = loss_cycle(model, cs, T)
    if w.phys:
        raw["phys"] = loss_phys(model, cs, Re, scales)
    if w.tv:
        raw["tv"] = loss_tv(model, cs, offsets)
    weights = {"data": w.data, "cycle": w.cycle, "phys": w.phys, "tv": w.tv}
    weighted = {k: weights[k] * v for k, v in raw.items()}
    return LossValues(sum(weighted.values()), raw, weighted)
