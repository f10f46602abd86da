"""Gridded 2D+time velocity fields and their text file format.

A :class:`FlowField` stores ``u`` and ``v`` on a rectilinear ``(t, x, y)``
grid together with a per-point region label and an optional occlusion grid
``lam`` (probability of *not* being occluded).

File format (``pulsefield-flowfield v1``)::

    pulsefield-flowfield v1
    {"dims": {...}, "spacings": {...}, "units": {...}, ...}
    t,x,y,u,v,region,lambda
    0,0,-0.0025,0,0,boundary,
    ...

Rows run over ``t`` slowest and ``y`` fastest.  Reals are written with 17
significant digits so that write -> read -> write is byte-identical.
"""
from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError

__all__ = ["FLUID", "BOUNDARY", "FlowField", "read_flowfield", "write_flowfield",
           "dumps_flowfield", "loads_flowfield", "canonical_json", "sha256_hex"]

MAGIC = "pulsefield-flowfield v1"
COLUMNS = "t,x,y,u,v,region,lambda"
FLUID = 0
BOUNDARY = 1
_LABELS = {FLUID: "fluid", BOUNDARY: "boundary"}
_CODES = {v: k for k, v in _LABELS.items()}
UNITS = {"t": "s", "x": "m", "y": "m", "u": "m/s", "v": "m/s"}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_hex(data) -> str:
    if isinstance(data, str):
        data = data.encode()
    return hashlib.sha256(data).hexdigest()


def _fmt(x: float) -> str:
    return "%.17g" % x


@dataclass
class FlowField:
    times: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    u: np.ndarray
    v: np.ndarray
    region: np.ndarray
    lam: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.xs = np.asarray(self.xs, dtype=float)
        self.ys = np.asarray(self.ys, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.region = np.asarray(self.region, dtype=np.int8)
        if self.lam is not None:
            self.lam = np.asarray(self.lam, dtype=float)
        self.validate()

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.times.size, self.xs.size, self.ys.size)

    @property
    def fluid(self) -> np.ndarray:
        return self.region == FLUID

    @property
    def boundary(self) -> np.ndarray:
        return self.region == BOUNDARY

    @property
    def period(self) -> float:
        return float(self.meta.get("period", self.times[-1] - self.times[0]))

    def validate(self) -> None:
        shape = self.shape
        for name in ("u", "v", "region") + (("lam",) if self.lam is not None else ()):
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ShapeError(f"{name} has shape {arr.shape}, grid is {shape}")
        for name in ("times", "xs", "ys"):
            arr = getattr(self, name)
            if arr.ndim != 1 or arr.size == 0:
                raise ShapeError(f"{name} must be a non-empty 1-D array")
            if arr.size > 1 and np.any(np.diff(arr) <= 0):
                raise ShapeError(f"{name} must be strictly increasing")
        for name in ("times", "xs", "ys", "u", "v"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ShapeError(f"{name} contains non-finite values")
        if not np.all(np.isin(self.region, (FLUID, BOUNDARY))):
            raise ShapeError("region labels must be fluid or boundary")

    def copy(self, **changes) -> "FlowField":
        base = dict(u=self.u.copy(), v=self.v.copy(), region=self.region.copy(),
                    lam=None if self.lam is None else self.lam.copy(),
                    meta=dict(self.meta))
        base.update(changes)
        return replace(self, **base)

    def same_grid(self, other: "FlowField") -> bool:
        return (self.shape == other.shape
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.xs, other.xs)
                and np.array_equal(self.ys, other.ys))

    def coordinates(self) -> np.ndarray:
        """All grid points as an ``(N, 3)`` array of ``(t, x, y)`` in file order."""
        t, x, y = np.meshgrid(self.times, self.xs, self.ys, indexing="ij")
        return np.stack([t.ravel(), x.ravel(), y.ravel()], axis=1)

    def velocities(self) -> np.ndarray:
        return np.stack([self.u.ravel(), self.v.ravel()], axis=1)

    def header(self) -> dict:
        def spacing(a):
            return float(a[1] - a[0]) if a.size > 1 else 0.0

        meta = dict(self.meta)
        meta["dims"] = {"nt": self.times.size, "nx": self.xs.size, "ny": self.ys.size}
        meta["spacings"] = {"dt": spacing(self.times), "dx": spacing(self.xs),
                            "dy": spacing(self.ys)}
        meta["units"] = dict(UNITS)
        meta.setdefault("period", float(self.times[-1] - self.times[0]))
        return meta


def dumps_flowfield(ff: FlowField) -> str:
    ff.validate()
    out = io.StringIO()
    out.write(MAGIC + "\n")
    out.write(canonical_json(ff.header()) + "\n")
    out.write(COLUMNS + "\n")
    ts = [_fmt(v) for v in ff.times]
    xs = [_fmt(v) for v in ff.xs]
    ys = [_fmt(v) for v in ff.ys]
    u = ff.u.ravel()
    v = ff.v.ravel()
    reg = ff.region.ravel()
    lam = None if ff.lam is None else ff.lam.ravel()
    nt, nx, ny = ff.shape
    k = 0
    lines = []
    for i in range(nt):
        for j in range(nx):
            prefix = ts[i] + "," + xs[j] + ","
            for m in range(ny):
                lam_s = "" if lam is None else _fmt(lam[k])
                lines.append(f"{prefix}{ys[m]},{_fmt(u[k])},{_fmt(v[k])},"
                             f"{_LABELS[int(reg[k])]},{lam_s}\n")
                k += 1
    out.write("".join(lines))
    return out.getvalue()


def loads_flowfield(text: str) -> FlowField:
    lines = text.splitlines()
    if len(lines) < 3 or lines[0] != MAGIC:
        raise FormatError(f"not a flowfield file (expected header {MAGIC!r})")
    try:
        meta = json.loads(lines[1])
        dims = meta["dims"]
        nt, nx, ny = int(dims["nt"]), int(dims["nx"]), int(dims["ny"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"bad flowfield metadata: {exc}") from exc
    if lines[2] != COLUMNS:
        raise FormatError(f"unexpected column header {lines[2]!r}")
    body = lines[3:]
    n = nt * nx * ny
    if len(body) != n:
        raise FormatError(f"expected {n} data rows, found {len(body)}")
    cols = [row.split(",") for row in body]
    if any(len(c) != 7 for c in cols):
        raise FormatError("every data row needs 7 columns")
    try:
        t = np.array([float(c[0]) for c in cols]).reshape(nt, nx, ny)
        x = np.array([float(c[1]) for c in cols]).reshape(nt, nx, ny)
        y = np.array([float(c[2]) for c in cols]).reshape(nt, nx, ny)
        u = np.array([float(c[3]) for c in cols]).reshape(nt, nx, ny)
        v = np.array([float(c[4]) for c in cols]).reshape(nt, nx, ny)
        region = np.array([_CODES[c[5]] for c in cols], dtype=np.int8).reshape(nt, nx, ny)
        lam_raw = [c[6] for c in cols]
    except (ValueError, KeyError) as exc:
        raise FormatError(f"bad flowfield row: {exc}") from exc
    has_lam = [s != "" for s in lam_raw]
    if any(has_lam) and not all(has_lam):
        raise FormatError("lambda column must be either empty or filled on every row")
    lam = np.array([float(s) for s in lam_raw]).reshape(nt, nx, ny) if all(has_lam) else None
    times, xs, ys = t[:, 0, 0], x[0, :, 0], y[0, 0, :]
    if not (np.all(t == times[:, None, None]) and np.all(x == xs[None, :, None])
            and np.all(y == ys[None, None, :])):
        raise FormatError("rows do not form a rectilinear (t, x, y) grid in file order")
    for key in ("dims", "spacings", "units"):
        meta.pop(key, None)
    return FlowField(times, xs, ys, u, v, region, lam, meta)


def write_flowfield(ff: FlowField, path) -> None:
    Path(path).write_text(dumps_flowfield(ff), encoding="utf-8")


def read_flowfield(path) -> FlowField:
    return loads_flowfield(Path(path).read_text(encoding="utf-8"))
