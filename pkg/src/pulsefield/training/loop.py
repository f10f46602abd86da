"""Minibatch optimisation of single and branched field models."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import torch

from ..errors import ConfigError, NonFiniteLossError
from ..flowfield import FlowField
from ..model import BranchedModel, FieldModel, Scales, predict
from ..nets import DTYPES, TorchField, TorchMLP, residual_terms
from .losses import LossWeights, cycle_term, grid_offsets, tv_term
from .occlusion import OcclusionMap, compute_occlusion_map, occ_term
from .regions import BoundaryMask, CollocationSet, classify_regions

__all__ = [
    "TrainConfig",
    "LossLog",
    "LOG_COLUMNS",
    "PhysicsContext",
    "batch_objective",
    "train",
    "train_branched",
    "physics_context",
]

LOG_COLUMNS = ("epoch", "loss_total", "loss_data", "loss_cycle", "loss_phys", "loss_tv",
               "loss_occ", "wall_time_s")


@dataclass(frozen=True)
class TrainConfig:
    """Optimiser settings.

    ``phys_points`` caps the number of fluid points per minibatch that enter
    the physics residual (``None`` uses all of them).
    """

    lr: float = 1e-5
    lr_modes: float = 1e-2
    epochs: int = 50
    batch: int = 4096
    seed: int = 0
    stage1_epochs: int = 100
    phys_points: int | None = 256
    dtype: str = "float32"

    def __post_init__(self):
        if not (self.lr > 0 and self.lr_modes > 0):
            raise ConfigError("learning rates must be positive")
        if self.epochs < 0 or self.stage1_epochs < 0:
            raise ConfigError("epoch counts must be >= 0")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")
        if self.phys_points is not None and self.phys_points < 1:
            raise ConfigError("phys_points must be >= 1 or None")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(DTYPES)}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossLog:
    rows: list = field(default_factory=list)

    def append(self, epoch: int, wall: float, **terms) -> None:
        row = {"epoch": epoch, "wall_time_s": wall}
        for c in LOG_COLUMNS[1:-1]:
            row[c] = terms.get(c[len("loss_"):], math.nan)
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in self.rows:
            w.writerow([r["epoch"]] + ["" if math.isnan(r[c]) else repr(float(r[c]))
                                       for c in LOG_COLUMNS[1:]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LossLog":
        log = cls()
        for rec in csv.DictReader(io.StringIO(text)):
            row = {"epoch": int(rec["epoch"])}
            for c in LOG_COLUMNS[1:]:
                row[c] = float(rec[c]) if rec[c] else math.nan
            log.rows.append(row)
        return log

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class PhysicsContext:
    Re: float
    period: float
    scales: Scales
    offsets: tuple


def physics_context(field: FlowField, Re: float | None = None,
                    scales: Scales | None = None) -> PhysicsContext:
    """Reynolds number, period, scales and TV offsets for a field.

    Missing ``Re`` and ``scales`` are taken from the field metadata
    (``Re``, ``radius``, ``nu``) when present.
    """
    meta = field.meta
    if Re is None:
        Re = float(meta.get("Re", 500.0))
    if Re <= 0:
        raise ConfigError("Re must be positive")
    if scales is None:
        if "radius" in meta and "nu" in meta:
            scales = Scales.from_reynolds(float(meta["radius"]), float(meta["nu"]), Re)
        else:
            scales = Scales()
    return PhysicsContext(Re, field.period, scales, tuple(grid_offsets(field.xs, field.ys)))


def batch_objective(fn, ctx: PhysicsContext, w: LossWeights, pts, targets, region,
                    cycle_xy, t_start: float, phys_points: int | None = None):
    """Weighted loss on one minibatch, as a differentiable tensor.

    Returns ``(total, raw)`` where ``raw`` maps term names to unweighted
    tensors.  Terms with zero weight are skipped.  The physics residual uses
    the first ``phys_points`` fluid points of the batch; the wall term uses
    every boundary point in it.
    """
    raw = {}
    pred = None
    if w.data or w.tv:
        pred = fn(pts)
    if w.data:
        d = pred - targets
        raw["data"] = (d * d).sum(1).mean()
    if w.cycle and cycle_xy is not None and len(cycle_xy):
        raw["cycle"] = cycle_term(fn, cycle_xy, t_start, ctx.period)
    if w.phys:
        fluid = pts[region == 0]
        wall = pts[region == 1]
        if phys_points is not None:
            fluid = fluid[:phys_points]
        term = pts.new_zeros(())
        if len(fluid):
            res, div = residual_terms(fn, fluid, ctx.Re, ctx.scales)
            term = term + (res * res).mean() + (div * div).mean()
        if len(wall):
            u = fn(wall) / ctx.scales.velocity
            term = term + (u * u).sum(1).mean()
        raw["phys"] = term
    if w.tv:
        raw["tv"] = tv_term(fn, pts, ctx.offsets, pred)
    weights = {"data": w.data, "cycle": w.cycle, "phys": w.phys, "tv": w.tv}
    total = sum(weights[k] * v for k, v in raw.items())
    if not raw:
        total = pts.new_zeros(())
    return total, raw


def _tensors(cs: CollocationSet, dtype):
    return (torch.as_tensor(cs.points, dtype=dtype), torch.as_tensor(cs.targets, dtype=dtype),
            torch.as_tensor(cs.region.astype(np.int64)),
            torch.as_tensor(cs.cycle_points, dtype=dtype))


def _adam(groups):
    return torch.optim.Adam(groups, betas=(0.9, 0.999), eps=1e-8)


def train(model: FieldModel, field: FlowField, cfg: TrainConfig = TrainConfig(),
          w: LossWeights = LossWeights(), *, mask: BoundaryMask | None = None,
          Re: float | None = None, scales: Scales | None = None,
          progress=None) -> tuple[FieldModel, LossLog]:
    """Fit ``model`` to ``field`` with Adam over seeded shuffled minibatches.

    Each epoch is one pass over all grid points; cycle points are shuffled
    and split across the minibatches of an epoch.  The returned model is a
    new object.  A non-finite loss raises :class:`NonFiniteLossError` whose
    ``model`` attribute holds the weights at the end of the last finished
    epoch.
    """
    field.validate()
    log = LossLog()
    if cfg.epochs == 0:
        return model.copy(), log
    model.check_finite()
    cs = classify_regions(field, mask)
    ctx = physics_context(field, Re, scales)
    dtype = DTYPES[cfg.dtype]
    tf = TorchField(model, dtype)
    groups = [{"params": tf.network_parameters(), "lr": cfg.lr}]
    if isinstance(tf.modes, torch.nn.Parameter):
        groups.append({"params": [tf.modes], "lr": cfg.lr_modes})
    opt = _adam(groups)
    pts, tgt, reg, cyc = _tensors(cs, dtype)
    rng = np.random.default_rng(cfg.seed)
    n_batches = math.ceil(cs.N / cfg.batch)
    last_good = model.copy()
    start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        perm = torch.as_tensor(rng.permutation(cs.N))
        cyc_chunks = np.array_split(rng.permutation(cs.N_cycle), n_batches)
        sums: dict = {}
        for b in range(n_batches):
            idx = perm[b * cfg.batch:(b + 1) * cfg.batch]
            cidx = torch.as_tensor(cyc_chunks[b])
            total, raw = batch_objective(tf, ctx, w, pts[idx], tgt[idx], reg[idx], cyc[cidx],
                                         cs.t_start, cfg.phys_points)
            if not torch.isfinite(total):
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch}, batch {b}: "
                    + ", ".join(f"{k}={float(v.detach()):.3g}" for k, v in raw.items()),
                    model=last_good, epoch=epoch - 1)
            opt.zero_grad(set_to_none=True)
            total.backward()
            opt.step()
            sums["total"] = sums.get("total", 0.0) + float(total.detach())
            for k, v in raw.items():
                sums[k] = sums.get(k, 0.0) + float(v.detach())
        last_good = tf.export()
        log.append(epoch, time.perf_counter() - start,
                   **{k: v / n_batches for k, v in sums.items()})
        if progress is not None:
            progress(epoch, log.rows[-1])
    return last_good, log


def _combiner_inputs(bm: BranchedModel, points):
    a = predict(bm.msff_branch, points)
    v = predict(bm.vanilla_branch, points)
    return np.concatenate([bm.norm.apply(points), a, v], axis=1), a, v


def train_branched(bm: BranchedModel, field: FlowField, cfg: TrainConfig = TrainConfig(),
                   w: LossWeights = LossWeights(), *, lam: OcclusionMap | None = None,
                   mask: BoundaryMask | None = None, progress=None
                   ) -> tuple[BranchedModel, LossLog]:
    """Two-stage fit of a branched model.

    Stage 1 trains each branch on its own with the data and TV terms for
    ``cfg.stage1_epochs``.  Stage 2 freezes both branches and fits the
    combiner for ``cfg.epochs`` to ``lam * u_msff + (1 - lam) * u_vanilla``,
    where ``lam`` defaults to :func:`compute_occlusion_map` of the field.
    """
    field.validate()
    bm.check_finite()
    log = LossLog()
    msff, van = bm.msff_branch, bm.vanilla_branch
    if cfg.stage1_epochs:
        s1 = replace(cfg, epochs=cfg.stage1_epochs)
        w1 = LossWeights(data=w.data, cycle=0.0, phys=0.0, tv=w.tv, occ=0.0)
        msff, log_m = train(msff, field, s1, w1, mask=mask)
        van, log_v = train(van, field, s1, w1, mask=mask)
        for rm, rv in zip(log_m.rows, log_v.rows):
            log.append(rm["epoch"], rm["wall_time_s"] + rv["wall_time_s"],
                       total=rm["loss_total"] + rv["loss_total"],
                       data=rm["loss_data"] + rv["loss_data"],
                       tv=rm["loss_tv"] + rv["loss_tv"])
    out = BranchedModel(msff, van, bm.combiner.copy())
    if cfg.epochs == 0:
        return out, log
    if lam is None:
        lam = compute_occlusion_map(field)
    cs = classify_regions(field, mask)
    dtype = DTYPES[cfg.dtype]
    inputs, a, v = _combiner_inputs(out, cs.points)
    lam_pts = lam.lookup(cs.points)
    X = torch.as_tensor(inputs, dtype=dtype)
    A = torch.as_tensor(a, dtype=dtype)
    V = torch.as_tensor(v, dtype=dtype)
    L = torch.as_tensor(lam_pts, dtype=dtype)
    net = TorchMLP(out.combiner, dtype)
    opt = _adam([{"params": list(net.parameters()), "lr": cfg.lr}])
    rng = np.random.default_rng(cfg.seed + 7919)
    n_batches = math.ceil(cs.N / cfg.batch)
    offset = cfg.stage1_epochs
    start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        perm = torch.as_tensor(rng.permutation(cs.N))
        acc = 0.0
        for b in range(n_batches):
            idx = perm[b * cfg.batch:(b + 1) * cfg.batch]
            occ = occ_term(net(X[idx]), A[idx], V[idx], L[idx])
            if not torch.isfinite(occ):
                raise NonFiniteLossError(f"non-finite occlusion loss at epoch {offset + epoch}",
                                         model=out, epoch=offset + epoch - 1)
            loss = w.occ * occ
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            acc += float(occ.detach())
        out = BranchedModel(msff, van, net.export())
        log.append(offset + epoch, time.perf_counter() - start,
                   total=w.occ * acc / n_batches, occ=acc / n_batches)
        if progress is not None:
            progress(offset + epoch, log.rows[-1])
    return out, log

