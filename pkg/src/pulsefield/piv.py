"""Synthetic particle images and windowed cross-correlation velocimetry.

Pixel ``(col, row)`` maps to ``x = x0 + col * scale`` and
``y = y0 + row * scale``; rows therefore run along ``+y``.  Displacements
are reported in pixels as ``(dx, dy)``.
"""
from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.signal import correlate

from .errors import ConfigError, FormatError
from .flowfield import FLUID, FlowField

__all__ = [
    "ParticleImage",
    "PivResult",
    "sample_velocity",
    "render_particles",
    "render_positions",
    "cross_correlate",
    "correlation_plane",
    "piv_to_field",
    "write_pgm",
    "read_pgm",
    "dumps_pgm",
    "loads_pgm",
]

PARTICLE_SIGMA = 1.2
_REACH = 4.0  # blob support in units of sigma
_REFINE = 2  # half-width of the subpixel correlation plane, pixels


@dataclass
class ParticleImage:
    """Greyscale image in ``[0, 1]``; ``pixels`` is indexed ``[row, col]``.

    ``positions`` optionally keeps the particle centres (pixel units,
    columns ``(col, row)``) used to render the image.
    """

    pixels: np.ndarray
    scale: float
    timestamp: float = 0.0
    origin: tuple = (0.0, 0.0)
    positions: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float)
        if self.pixels.ndim != 2:
            raise ConfigError("pixels must be a 2-D array")
        if not self.scale > 0:
            raise ConfigError("scale must be positive")
        if self.pixels.size and (self.pixels.min() < 0 or self.pixels.max() > 1):
            raise ConfigError("pixel values must lie in [0, 1]")
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class PivResult:
    """Per-window displacements in pixels; invalid windows hold NaN and peak 0."""

    window_centers: np.ndarray
    displacements: np.ndarray
    correlation_peaks: np.ndarray
    valid: np.ndarray
    grid: tuple
    scale: float = 1.0
    origin: tuple = (0.0, 0.0)
    timestamp: float = 0.0


def sample_velocity(field: FlowField, t: float, x, y):
    """Velocity at physical points, linear in ``t`` and bilinear in ``(x, y)``.

    Points outside the grid take the value at the nearest edge.
    """
    times = field.times
    if times.size == 1 or t <= times[0]:
        u, v = field.u[0], field.v[0]
    elif t >= times[-1]:
        u, v = field.u[-1], field.v[-1]
    else:
        k = int(np.searchsorted(times, t)) - 1
        a = (t - times[k]) / (times[k + 1] - times[k])
        u = (1 - a) * field.u[k] + a * field.u[k + 1]
        v = (1 - a) * field.v[k] + a * field.v[k + 1]
    xq = np.clip(np.asarray(x, dtype=float), field.xs[0], field.xs[-1])
    yq = np.clip(np.asarray(y, dtype=float), field.ys[0], field.ys[-1])
    q = np.stack([xq.ravel(), yq.ravel()], axis=1)
    out = []
    for comp in (u, v):
        if field.xs.size == 1 or field.ys.size == 1:
            out.append(np.full(len(q), float(comp.mean())))
            continue
        out.append(RegularGridInterpolator((field.xs, field.ys), comp)(q))
    return out[0].reshape(np.shape(xq)), out[1].reshape(np.shape(xq))


def render_positions(positions, shape, sigma: float = PARTICLE_SIGMA) -> np.ndarray:
    """Gaussian blobs of unit peak at ``(col, row)`` positions, saturating at 1.

    Particles are accumulated in index order.
    """
    h, w = shape
    img = np.zeros((h, w))
    reach = int(math.ceil(_REACH * sigma))
    inv = 1.0 / (2.0 * sigma * sigma)
    for cx, cy in np.asarray(positions, dtype=float).reshape(-1, 2):
        c0, r0 = int(math.floor(cx)) - reach, int(math.floor(cy)) - reach
        c1, r1 = c0 + 2 * reach + 2, r0 + 2 * reach + 2
        cs, rs = max(c0, 0), max(r0, 0)
        ce, re_ = min(c1, w), min(r1, h)
        if cs >= ce or rs >= re_:
            continue
        dx = np.arange(cs, ce) - cx
        dy = np.arange(rs, re_) - cy
        img[rs:re_, cs:ce] += np.exp(-dy[:, None] ** 2 * inv) * np.exp(-dx[None, :] ** 2 * inv)
    return np.minimum(img, 1.0)


def render_particles(field: FlowField, t: float, dt: float, density: float = 0.02,
                     seed: int = 0, scale: float | None = None,
                     sigma: float = PARTICLE_SIGMA, window: int = 32):
    """Render an image pair of particles carried by the flow.

    Parameters
    ----------
    field : FlowField
        Velocities are sampled at time ``t``.
    t, dt : float
        Time of the first exposure and the gap between exposures, in s.
    density : float
        Particles per pixel, in ``(0, 0.2]``.
    seed : int
    scale : float, optional
        Metres per pixel.  Defaults to 1/64 of the channel height.
    sigma : float
        Blob standard deviation in pixels.
    window : int
        Interrogation window used for the displacement warning.

    Returns
    -------
    ParticleImage, ParticleImage
    """
    if not dt > 0:
        raise ConfigError("dt must be positive")
    if not 0 < density <= 0.2:
        raise ConfigError("density must lie in (0, 0.2]")
    if scale is None:
        scale = float(field.ys[-1] - field.ys[0]) / 64.0
    if not scale > 0:
        raise ConfigError("scale must be positive")
    x0, y0 = float(field.xs[0]), float(field.ys[0])
    w = int(round((field.xs[-1] - x0) / scale)) + 1
    h = int(round((field.ys[-1] - y0) / scale)) + 1
    speed = float(np.hypot(field.u, field.v).max())
    pad = int(math.ceil(speed * dt / scale + _REACH * sigma)) + 1
    if speed * dt / scale >= window / 2:
        warnings.warn("maximum displacement exceeds half the interrogation window",
                      stacklevel=2)
    rng = np.random.default_rng(seed)
    n = int(round(density * (w + 2 * pad) * (h + 2 * pad)))
    p1 = np.column_stack([rng.uniform(-pad, w + pad, n), rng.uniform(-pad, h + pad, n)])
    u, v = sample_velocity(field, t, x0 + p1[:, 0] * scale, y0 + p1[:, 1] * scale)
    p2 = p1 + np.column_stack([u, v]) * (dt / scale)
    a = ParticleImage(render_positions(p1, (h, w), sigma), scale, t, (x0, y0), p1)
    b = ParticleImage(render_positions(p2, (h, w), sigma), scale, t + dt, (x0, y0), p2)
    return a, b


def correlation_plane(wa: np.ndarray, wb: np.ndarray) -> np.ndarray:
    """Linear cross-correlation ``C[d] = sum_p A'(p) B'(p + d)`` of two windows.

    Primes denote mean-free copies.  The result has shape
    ``(2h - 1, 2w - 1)`` with zero displacement at index ``(h - 1, w - 1)``.
    """
    a = wa - wa.mean()
    b = wb - wb.mean()
    return correlate(b, a, mode="full", method="fft")


def _gauss3(cm, c0, cp):
    lm, l0, lp = (math.log(max(c, 1e-300)) for c in (cm, c0, cp))
    den = lm - 2.0 * l0 + lp
    if den >= 0 or not math.isfinite(den):
        return 0.0
    off = 0.5 * (lm - lp) / den
    if abs(off) < 1e-9:
        return 0.0  # rounding noise of a symmetric peak
    return off if abs(off) < 1.0 else 0.0


def cross_correlate(a: ParticleImage, b: ParticleImage, window=(32, 32),
                    overlap: float = 0.5) -> PivResult:
    """Windowed cross-correlation with 3-point Gaussian subpixel peaks.

    Each window is processed in two steps.  The integer displacement is the
    correlation peak of the window of ``a`` over the matching region of
    ``b`` grown by half a window on every side (zero outside the image), so
    particles leaving the window are still paired.  The window of ``b`` is
    then offset by that shift and the equal-size correlation around zero is
    divided by the overlap area before the subpixel fit; without that the
    shrinking overlap pulls estimates towards whole pixels.  Displacements
    up to half a window are resolved.
    """
    if a.pixels.shape != b.pixels.shape:
        raise ConfigError("images must have the same shape")
    ww, wh = (window, window) if np.isscalar(window) else window
    ww, wh = int(ww), int(wh)
    if not (1 <= ww <= a.width and 1 <= wh <= a.height):
        raise ConfigError("window must fit inside the image")
    if not 0.0 <= overlap <= 0.9:
        raise ConfigError("overlap must lie in [0, 0.9]")
    sx = max(1, int(round(ww * (1.0 - overlap))))
    sy = max(1, int(round(wh * (1.0 - overlap))))
    mx, my = ww // 2, wh // 2
    m = _REFINE
    px, py = mx + m, my + m
    padded = np.pad(b.pixels, ((py, py), (px, px)))
    cols = list(range(0, a.width - ww + 1, sx))
    rows = list(range(0, a.height - wh + 1, sy))
    centers, disp, peaks, valid = [], [], [], []

    def invalid():
        disp.append((math.nan, math.nan))
        peaks.append(0.0)
        valid.append(False)

    for r0 in rows:
        for c0 in cols:
            centers.append((c0 + (ww - 1) / 2.0, r0 + (wh - 1) / 2.0))
            A = a.pixels[r0:r0 + wh, c0:c0 + ww]
            R = padded[r0 + py - my:r0 + py + wh + my, c0 + px - mx:c0 + px + ww + mx]
            if float(np.ptp(A)) == 0.0 or float(np.ptp(R)) == 0.0:
                invalid()
                continue
            coarse = correlate(R, A - A.mean(), mode="valid", method="fft")
            i, j = np.unravel_index(int(np.argmax(coarse)), coarse.shape)
            ky, kx = int(i) - my, int(j) - mx
            # slide the pair inward where the shifted region would leave the image
            r1, c1 = r0, c0
            if wh + abs(ky) + 2 * m <= a.height:
                r1 = min(max(r0, m - ky), a.height - wh - ky - m)
            if ww + abs(kx) + 2 * m <= a.width:
                c1 = min(max(c0, m - kx), a.width - ww - kx - m)
            A = a.pixels[r1:r1 + wh, c1:c1 + ww]
            Am = A - A.mean()
            na = float(np.sum(Am * Am))
            br, bc = r1 + py + ky, c1 + px + kx
            B = padded[br:br + wh, bc:bc + ww]
            Bm = B - B.mean()
            nb = float(np.sum(Bm * Bm))
            if na <= 0.0 or nb <= 0.0:
                invalid()
                continue
            # the aligned windows peak near zero shift; dividing by the overlap
            # area removes the pull of equal-size windows towards zero
            c = correlation_plane(A, B)[wh - 1 - m:wh + m, ww - 1 - m:ww + m]
            oy = wh - np.abs(np.arange(-m, m + 1))
            ox = ww - np.abs(np.arange(-m, m + 1))
            c = c * (wh * ww) / np.outer(oy, ox)
            sub = c[m - 1:m + 2, m - 1:m + 2]
            di, dj = np.unravel_index(int(np.argmax(sub)), sub.shape)
            ci, cj = m - 1 + int(di), m - 1 + int(dj)
            dy = ky + ci - m + _gauss3(c[ci - 1, cj], c[ci, cj], c[ci + 1, cj])
            dx = kx + cj - m + _gauss3(c[ci, cj - 1], c[ci, cj], c[ci, cj + 1])
            disp.append((float(dx), float(dy)))
            peaks.append(float(np.clip(c[ci, cj] / math.sqrt(na * nb), 0.0, 1.0)))
            valid.append(True)
    return PivResult(np.array(centers, dtype=float).reshape(-1, 2),
                     np.array(disp, dtype=float).reshape(-1, 2), np.array(peaks),
                     np.array(valid, dtype=bool), (len(rows), len(cols)), a.scale, a.origin,
                     a.timestamp)


def piv_to_field(r: PivResult, dt: float, scale: float | None = None) -> FlowField:
    """Velocities ``displacement * scale / dt`` on the window-centre grid.

    Invalid windows get zero velocity and ``lam = 0``; valid ones ``lam = 1``.
    All points are labelled fluid.
    """
    if not dt > 0:
        raise ConfigError("dt must be positive")
    scale = r.scale if scale is None else scale
    n_rows, n_cols = r.grid
    if n_rows * n_cols == 0:
        raise ConfigError("result has no windows")
    centers = r.window_centers.reshape(n_rows, n_cols, 2)
    xs = r.origin[0] + centers[0, :, 0] * scale
    ys = r.origin[1] + centers[:, 0, 1] * scale
    d = np.where(r.valid[:, None], r.displacements, 0.0).reshape(n_rows, n_cols, 2)
    # (row, col) -> (x, y) layout with a single time slice
    u = (d[..., 0] * scale / dt).T[None]
    v = (d[..., 1] * scale / dt).T[None]
    lam = r.valid.reshape(n_rows, n_cols).T[None].astype(float)
    region = np.full(u.shape, FLUID, dtype=np.int8)
    meta = {"source": "piv", "dt": float(dt), "scale": float(scale)}
    return FlowField(np.array([r.timestamp]), xs, ys, u, v, region, lam, meta)


_PGM_HEAD = re.compile(rb"P5\s+((?:#[^\n]*\n\s*)*)(\d+)\s+(\d+)\s+(\d+)\s")


def dumps_pgm(img: ParticleImage) -> bytes:
    """16-bit binary PGM; scale, origin and timestamp go in a comment line."""
    data = np.round(img.pixels * 65535.0).astype(">u2")
    comment = (f"# pulsefield scale={img.scale!r} x0={img.origin[0]!r} "
               f"y0={img.origin[1]!r} t={img.timestamp!r}\n")
    head = f"P5\n{comment}{img.width} {img.height}\n65535\n".encode("ascii")
    return head + data.tobytes()


def loads_pgm(data: bytes) -> ParticleImage:
    m = _PGM_HEAD.match(data)
    if not m:
        raise FormatError("not a binary PGM (P5) image")
    w, h, maxval = (int(g) for g in m.groups()[1:])
    if maxval != 65535:
        raise FormatError(f"expected maxval 65535, found {maxval}")
    body = data[m.end():]
    if len(body) != 2 * w * h:
        raise FormatError("PGM pixel data has the wrong length")
    pix = np.frombuffer(body, dtype=">u2").reshape(h, w).astype(float) / 65535.0
    info = dict(re.findall(rb"(\w+)=(\S+)", m.group(1)))
    try:
        scale = float(info.get(b"scale", b"1"))
        origin = (float(info.get(b"x0", b"0")), float(info.get(b"y0", b"0")))
        t = float(info.get(b"t", b"0"))
    except ValueError:
        raise FormatError("malformed PGM metadata comment") from None
    return ParticleImage(pix, scale, t, origin)


def write_pgm(img: ParticleImage, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_pgm(img))


def read_pgm(path) -> ParticleImage:
    with open(path, "rb") as fh:
        return loads_pgm(fh.read())
