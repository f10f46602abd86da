"""Reconstruction metrics: field, cycle and profile errors plus flow rate."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateInputError, FormatError, GeometryError, ShapeError
from .flowfield import FlowField
from .synthdata import WomersleyParams, womersley_velocity

__all__ = [
    "Series",
    "Tube",
    "MetricsReport",
    "mse_field",
    "mean_velocity_cycle",
    "peak_phase_index",
    "profile_mse",
    "flow_rate",
    "flowrate_mse",
    "rel_decrease",
    "evaluate",
    "M3S_TO_ML_MIN",
]

M3S_TO_ML_MIN = 6e7


@dataclass
class Series:
    """A value over time, stored as CSV with columns ``t,value``."""

    t: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.t.shape != self.values.shape:
            raise ShapeError("series times and values differ in length")

    def __len__(self):
        return self.t.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(self.t, self.values):
            w.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Series":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["t", "value"]:
            raise FormatError("series CSV must start with the header 't,value'")
        try:
            data = [(float(r[0]), float(r[1])) for r in rows[1:] if r]
        except (ValueError, IndexError):
            raise FormatError("series CSV has a malformed row") from None
        arr = np.array(data, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def read(cls, path) -> "Series":
        with open(path) as fh:
            return cls.from_csv(fh.read())


@dataclass(frozen=True)
class Tube:
    """Straight tube geometry: wall radius (m) and centreline ``y`` (m)."""

    radius: float
    centerline: float = 0.0


def _check_grids(a: FlowField, b: FlowField) -> None:
    if not a.same_grid(b):
        raise ShapeError(f"flow fields are on different grids: {a.shape} vs {b.shape}")


def mse_field(a: FlowField, b: FlowField) -> float:
    """Mean squared velocity difference over the fluid points of ``a``."""
    _check_grids(a, b)
    m = a.fluid
    if not m.any():
        raise DegenerateInputError("no fluid points")
    du, dv = a.u[m] - b.u[m], a.v[m] - b.v[m]
    return float(np.mean(du * du + dv * dv))


def mean_velocity_cycle(f: FlowField) -> Series:
    """Mean speed over the fluid points of each time slice."""
    speed = np.hypot(f.u, f.v)
    fl = f.fluid
    n = fl.sum(axis=(1, 2))
    tot = np.where(fl, speed, 0.0).sum(axis=(1, 2))
    return Series(f.times, np.where(n > 0, tot / np.maximum(n, 1), 0.0))


def _yfrac(f: FlowField, p: WomersleyParams):
    y = (f.ys - float(f.meta.get("centerline", 0.0))) / p.R
    return np.clip(y, -1.0, 1.0)


def _analytic_profiles(f: FlowField, p: WomersleyParams) -> np.ndarray:
    """Analytic ``u`` on ``(times, ys)``."""
    return womersley_velocity(p, _yfrac(f, p)[None, :], f.times[:, None])


def peak_phase_index(f: FlowField, p: WomersleyParams) -> int:
    """Time index at which the analytic mean speed over the fluid rows peaks."""
    fluid_rows = f.fluid.any(axis=(0, 1))
    prof = np.abs(_analytic_profiles(f, p))[:, fluid_rows]
    return int(np.argmax(prof.mean(axis=1)))


def profile_mse(f: FlowField, p: WomersleyParams) -> float:
    """Error of the ``x``-averaged axial profile at the peak phase.

    The phase is where the analytic mean speed peaks on ``f.times``; only
    fluid rows enter the mean.
    """
    k = peak_phase_index(f, p)
    fluid_rows = f.fluid[k].any(axis=0)
    if not fluid_rows.any():
        raise DegenerateInputError("no fluid rows at the peak phase")
    got = f.u[k].mean(axis=0)[fluid_rows]
    want = _analytic_profiles(f, p)[k][fluid_rows]
    return float(np.mean((got - want) ** 2))


def _half_integral(r: np.ndarray, u: np.ndarray) -> float:
    order = np.argsort(r, kind="stable")
    r, u = r[order], u[order]
    return float(np.trapezoid(2.0 * math.pi * r * u, r))


def _column_rate(ys: np.ndarray, u: np.ndarray, c: float, R: float) -> float:
    """Flow rate through one cross-section, averaging the two half profiles."""
    inside = np.abs(ys - c) <= R * (1 + 1e-9)
    y, uu = ys[inside], u[inside]
    if y.size < 2:
        raise GeometryError("fewer than two samples inside the tube")
    u_c = float(np.interp(c, y, uu))
    halves = []
    for side in (y >= c, y <= c):
        r = np.abs(y[side] - c)
        ur = uu[side]
        if not np.any(r == 0):
            r, ur = np.append(r, 0.0), np.append(ur, u_c)
        halves.append(_half_integral(r, ur))
    return 0.5 * (halves[0] + halves[1])


def _walls_from_regions(ys: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """Centreline and radius of one column from its fluid/boundary labels."""
    fluid = np.flatnonzero(labels == 0)
    wall = np.flatnonzero(labels == 1)
    if fluid.size == 0 or wall.size == 0:
        raise GeometryError("column has no fluid or no wall")
    lo_w = wall[wall < fluid.min()]
    hi_w = wall[wall > fluid.max()]
    if lo_w.size == 0 or hi_w.size == 0:
        raise GeometryError("fluid is not bounded by walls on both sides")
    lo, hi = ys[lo_w.max()], ys[hi_w.min()]
    return 0.5 * (lo + hi), 0.5 * (hi - lo)


def flow_rate(f: FlowField, geometry: Tube | str | None = None) -> Series:
    """Volumetric flow rate in ml/min over time.

    ``u`` is integrated over the disc of radius ``R`` around the centreline
    with ``r = |y - centreline|``, using the trapezoidal rule on each half
    profile and averaging the two halves.  Each time slice is averaged over
    ``x``.

    Parameters
    ----------
    f : FlowField
    geometry : Tube or "regions", optional
        ``Tube`` fixes radius and centreline.  ``"regions"`` reads the walls
        of every ``(t, x)`` column from the field's boundary labels, so a
        mask applied with :func:`~pulsefield.training.classify_regions`
        carries over.  Defaults to ``Tube(meta["radius"], meta["centerline"])``
        when the metadata has a radius, else ``"regions"``.
    """
    if geometry is None:
        if "radius" in f.meta:
            geometry = Tube(float(f.meta["radius"]), float(f.meta.get("centerline", 0.0)))
        else:
            geometry = "regions"
    nt, nx, _ = f.shape
    q = np.zeros(nt)
    for k in range(nt):
        acc = 0.0
        for i in range(nx):
            if isinstance(geometry, Tube):
                c, R = geometry.centerline, geometry.radius
            elif geometry == "regions":
                c, R = _walls_from_regions(f.ys, f.region[k, i])
            else:
                raise GeometryError(f"unknown geometry {geometry!r}")
            if not (R > 0 and math.isfinite(R)):
                raise GeometryError(f"degenerate radius {R!r}")
            acc += _column_rate(f.ys, f.u[k, i], c, R)
        q[k] = acc / nx
    return Series(f.times, q * M3S_TO_ML_MIN)


def flowrate_mse(pred: Series, measured: Series) -> tuple[float, Series]:
    """Mean squared difference and the cumulative squared-error series.

    When lengths differ ``measured`` is linearly interpolated onto ``pred.t``.
    """
    if len(pred) == 0 or len(measured) == 0:
        raise DegenerateInputError("empty flow-rate series")
    if len(pred) == len(measured):
        ref = measured.values
    else:
        ref = np.interp(pred.t, measured.t, measured.values)
    sq = (pred.values - ref) ** 2
    return float(sq.mean()), Series(pred.t, np.cumsum(sq))


def rel_decrease(mse_noisy: float, mse_pred: float) -> float | None:
    """Percentage reduction of the error; ``None`` when the noisy error is zero."""
    if mse_noisy <= 0:
        return None
    return 100.0 * (mse_noisy - mse_pred) / mse_noisy


@dataclass
class MetricsReport:
    mse_field: float
    mse_cycle: float
    mse_profile: float | None
    noisy: dict
    rel_decrease_pct: dict
    flowrate_mse: float
    flowrate_series: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        try:
            return cls(**json.loads(text))
        except (json.JSONDecodeError, TypeError) as exc:
            raise FormatError(f"not a metrics report: {exc}") from None


def evaluate(pred: FlowField, noisy: FlowField, truth: FlowField,
             params: WomersleyParams | None = None,
             measured_flow: Series | None = None) -> tuple[MetricsReport, dict]:
    """Compare a reconstruction and its noisy input against a reference field.

    Returns the report and the series behind it (``flow_pred``,
    ``flow_noisy``, ``flow_ref``, ``cumulative_pred``, ``cumulative_noisy``).
    The flow-rate reference is ``measured_flow`` when given, else the flow
    rate of ``truth``.
    """
    _check_grids(pred, truth)
    _check_grids(noisy, truth)
    cyc_t = mean_velocity_cycle(truth).values

    def metrics(f):
        out = {"mse_field": mse_field(truth, f),
               "mse_cycle": float(np.mean((mean_velocity_cycle(f).values - cyc_t) ** 2))}
        out["mse_profile"] = profile_mse(f, params) if params is not None else None
        return out

    mp, mn = metrics(pred), metrics(noisy)
    geometry = None if "radius" in truth.meta else "regions"
    ref = measured_flow if measured_flow is not None else flow_rate(truth, geometry)
    fp, fn = flow_rate(pred, geometry), flow_rate(noisy, geometry)
    q_pred, cum_pred = flowrate_mse(fp, ref)
    q_noisy, cum_noisy = flowrate_mse(fn, ref)
    mn["flowrate_mse"] = q_noisy
    rel = {k: (rel_decrease(mn[k], mp[k]) if mn[k] is not None else None)
           for k in ("mse_field", "mse_cycle", "mse_profile")}
    rel["flowrate_mse"] = rel_decrease(q_noisy, q_pred)
    report = MetricsReport(mp["mse_field"], mp["mse_cycle"], mp["mse_profile"], mn, rel,
                           q_pred, {"t": fp.t.tolist(), "ml_per_min": fp.values.tolist()})
    series = {"flow_pred": fp, "flow_noisy": fn, "flow_ref": ref,
              "cumulative_pred": cum_pred, "cumulative_noisy": cum_noisy}
    return report, series
