"""Synthetic pulsatile pipe flow: analytic Womersley fields and corruptions.

The driving pressure gradient is a harmonic series with fundamental angular
frequency ``f``.  ``pressure_modes[n]`` is the complex amplitude of the
*driving* gradient ``-dp/dx`` of harmonic ``n`` (Pa/m); mode 0 is the steady
part and gives a Poiseuille profile.

Fields live on a planar slice through the tube axis: ``x`` runs along the
tube and ``y`` across it, from ``-R`` to ``R``.  The first and last ``y``
rows are the walls.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bessel import bessel_j0_complex
from .errors import ConfigError
from .flowfield import BOUNDARY, FLUID, FlowField, canonical_json, sha256_hex

__all__ = [
    "WomersleyParams",
    "GridSpec",
    "womersley_velocity",
    "default_pressure_modes",
    "generate_field",
    "corrupt",
    "occlude",
    "random_bands",
    "PRESETS",
    "preset",
]

I32 = np.exp(0.75j * np.pi)  # i**(3/2)


@dataclass(frozen=True)
class WomersleyParams:
    """Physical parameters of the analytic pulsatile flow.

    Give either ``alpha`` or ``f``; the other is derived from
    ``alpha = R * sqrt(f * rho / mu)``.  ``Re`` only enters the physics
    residual, not the velocity profile.
    """

    pressure_modes: tuple = ()
    R: float = 2.5e-3
    rho: float = 1060.0
    mu: float = 3e-3
    alpha: float | None = None
    f: float | None = None
    Re: float = 500.0

    def __post_init__(self):
        if not (self.R > 0 and self.rho > 0 and self.mu > 0):
            raise ConfigError("R, rho and mu must be positive")
        if self.alpha is None and self.f is None:
            raise ConfigError("give alpha or f")
        if self.f is None:
            object.__setattr__(self, "f", self.alpha ** 2 * self.mu / (self.rho * self.R ** 2))
        elif self.alpha is None:
            object.__setattr__(self, "alpha", self.R * math.sqrt(self.f * self.rho / self.mu))
        elif not math.isclose(self.alpha, self.R * math.sqrt(self.f * self.rho / self.mu),
                              rel_tol=1e-9):
            raise ConfigError("alpha and f are inconsistent")
        if self.f <= 0:
            raise ConfigError("frequency must be positive")
        modes = tuple(complex(p) for p in self.pressure_modes)
        if not modes:
            modes = default_pressure_modes(self.R, self.rho, self.mu, self.alpha)
        object.__setattr__(self, "pressure_modes", modes)
        if self.Re <= 0:
            raise ConfigError("Re must be positive")

    @property
    def N(self) -> int:
        return len(self.pressure_modes) - 1

    @property
    def nu(self) -> float:
        return self.mu / self.rho

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.f

    def to_dict(self) -> dict:
        return {
            "R": self.R, "rho": self.rho, "mu": self.mu, "alpha": self.alpha,
            "f": self.f, "Re": self.Re,
            "pressure_modes": [[p.real, p.imag] for p in self.pressure_modes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WomersleyParams":
        d = dict(d)
        modes = d.pop("pressure_modes", None) or ()
        modes = tuple(complex(m[0], m[1]) if isinstance(m, (list, tuple)) else complex(m)
                      for m in modes)
        f = d.pop("f", None)
        alpha = d.pop("alpha", None)
        if alpha is not None and f is not None:
            f = None  # alpha wins; f is always derivable
        return cls(pressure_modes=modes, alpha=alpha, f=f, **d)

    def digest(self) -> str:
        return sha256_hex(canonical_json(self.to_dict()))[:16]


def _harmonic_shape(alpha: float, n: int, y) -> np.ndarray:
    """``1 - J0(alpha sqrt(n) i^(3/2) y) / J0(alpha sqrt(n) i^(3/2))``."""
    z = alpha * math.sqrt(n) * I32
    y = np.abs(np.asarray(y, dtype=float))  # even in y
    shape = 1.0 - bessel_j0_complex(z * y) / bessel_j0_complex(z)
    return np.where(y == 1.0, 0.0, shape)  # no-slip holds exactly, not to rounding


def default_pressure_modes(R, rho, mu, alpha, steady_centerline=0.15,
                           pulse_centerline=0.15) -> tuple:
    """Steady gradient plus one cosine harmonic.

    Magnitudes give a steady centreline speed of ``steady_centerline`` and a
    centreline oscillation amplitude of ``pulse_centerline`` (m/s), so the
    peak centreline speed is their sum.
    """
    f = alpha ** 2 * mu / (rho * R ** 2)
    p0 = 4.0 * mu * steady_centerline / R ** 2
    gain = abs(_harmonic_shape(alpha, 1, 0.0)) / (rho * f)
    p1 = pulse_centerline / gain
    return (complex(p0), complex(p1))


def womersley_velocity(p: WomersleyParams, y, t):
    """Axial velocity (m/s) at radial fraction ``y`` in [-1, 1] and time ``t``.

    ``y`` and ``t`` broadcast against each other.
    """
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(y) > 1.0):
        raise ConfigError("radial fraction must lie in [-1, 1]")
    y, t = np.broadcast_arrays(y, t)
    u = p.pressure_modes[0].real * p.R ** 2 * (1.0 - y * y) / (4.0 * p.mu)
    for n in range(1, p.N + 1):
        amp = p.pressure_modes[n] / (1j * p.rho * n * p.f)
        u = u + np.real(amp * _harmonic_shape(p.alpha, n, y) * np.exp(1j * n * p.f * t))
    return u if u.ndim else float(u)


@dataclass(frozen=True)
class GridSpec:
    nx: int = 64
    ny: int = 33
    nt: int = 49
    length: float = 0.02

    def __post_init__(self):
        if self.ny < 3 or self.nx < 2 or self.nt < 2:
            raise ConfigError("grid needs nx >= 2, ny >= 3 and nt >= 2")
        if self.length <= 0:
            raise ConfigError("tube length must be positive")

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "nt": self.nt, "length": self.length}


def generate_field(p: WomersleyParams, grid: GridSpec = GridSpec(),
                   period_count: int = 1) -> FlowField:
    """Sample the analytic flow on a ``(t, x, y)`` grid.

    Times run from 0 to ``period_count`` periods inclusive; ``v`` is zero.
    """
    if period_count < 1:
        raise ConfigError("period_count must be >= 1")
    span = period_count * p.period
    times = np.linspace(0.0, span, grid.nt)
    xs = np.linspace(0.0, grid.length, grid.nx)
    yfrac = np.linspace(-1.0, 1.0, grid.ny)
    ys = yfrac * p.R
    prof = womersley_velocity(p, yfrac[None, :], times[:, None])  # (nt, ny)
    u = np.broadcast_to(prof[:, None, :], (grid.nt, grid.nx, grid.ny)).copy()
    region = np.full(u.shape, FLUID, dtype=np.int8)
    region[:, :, 0] = BOUNDARY
    region[:, :, -1] = BOUNDARY
    meta = {
        "period": span / period_count,
        "params_hash": p.digest(),
        "radius": p.R,
        "nu": p.nu,
        "Re": p.Re,
        "centerline": 0.0,
        "source": "womersley",
        "womersley": p.to_dict(),
    }
    return FlowField(times, xs, ys, u, np.zeros_like(u), region, None, meta)


def _dropout_boxes(shape, fluid, fraction, rng):
    """Boolean mask made of random boxes covering ~``fraction`` of fluid points."""
    mask = np.zeros(shape, dtype=bool)
    target = fraction * fluid.sum()
    nt, nx, ny = shape
    bt, bx, by = max(1, nt // 8), max(1, nx // 8), max(1, ny // 4)
    for _ in range(10_000):
        if (mask & fluid).sum() >= target:
            break
        i = rng.integers(0, nt - bt + 1)
        j = rng.integers(0, nx - bx + 1)
        k = rng.integers(0, ny - by + 1)
        mask[i:i + bt, j:j + bx, k:k + by] = True
    return mask


def corrupt(field: FlowField, noise_level: float, seed: int = 0,
            dropout_fraction: float = 0.0, dropout_gain: float = 0.1) -> FlowField:
    """Speckle-style corruption: ``u' = u (1 + eta)``, ``eta ~ N(0, noise_level)``.

    Optionally scales random boxes covering ``dropout_fraction`` of the fluid
    points by ``dropout_gain``.  ``noise_level == 0`` returns an exact copy
    (no speckle means no dropout either).
    """
    if noise_level < 0:
        raise ConfigError("noise_level must be >= 0")
    if not 0.0 <= dropout_fraction <= 1.0:
        raise ConfigError("dropout_fraction must lie in [0, 1]")
    out = field.copy()
    if noise_level == 0:
        return out
    rng = np.random.default_rng(seed)
    eta_u = rng.normal(0.0, noise_level, field.shape)
    eta_v = rng.normal(0.0, noise_level, field.shape)
    out.u = field.u * (1.0 + eta_u)
    out.v = field.v * (1.0 + eta_v)
    if dropout_fraction > 0:
        drop = _dropout_boxes(field.shape, field.fluid, dropout_fraction, rng)
        out.u = np.where(drop, out.u * dropout_gain, out.u)
        out.v = np.where(drop, out.v * dropout_gain, out.v)
    out.meta["noise_level"] = float(noise_level)
    out.meta["dropout_fraction"] = float(dropout_fraction)
    out.meta["noise_seed"] = int(seed)
    return out


def random_bands(field: FlowField, coverage: float, seed: int = 0, n_bands: int = 2):
    """Draw ``n_bands`` (t-range, x-range) bands covering ~``coverage`` of the grid.

    Each band spans the full period-fraction ``sqrt(coverage / n_bands)``
    in both ``t`` and ``x``.
    """
    if not 0 < coverage < 1:
        raise ConfigError("coverage must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    nt, nx, _ = field.shape
    side = math.sqrt(coverage / n_bands)
    wt, wx = max(1, round(side * nt)), max(1, round(side * nx))
    bands = []
    for _ in range(n_bands):
        i = int(rng.integers(0, nt - wt + 1))
        j = int(rng.integers(0, nx - wx + 1))
        bands.append(((float(field.times[i]), float(field.times[i + wt - 1])),
                      (float(field.xs[j]), float(field.xs[j + wx - 1]))))
    return bands


def occlude(field: FlowField, bands=None, attenuation: float = 0.2, seed: int = 0,
            coverage: float = 0.2) -> FlowField:
    """Attenuate velocities inside ``(t-range, x-range)`` bands (all ``y`` rows).

    The returned field records the ground-truth mask in ``lam``: 0 inside a
    band, 1 elsewhere.  With ``bands=None`` bands are drawn from ``seed`` to
    cover about ``coverage`` of the grid.
    """
    if not 0.0 <= attenuation <= 1.0:
        raise ConfigError("attenuation must lie in [0, 1]")
    if bands is None:
        bands = random_bands(field, coverage, seed)
    t0, t1 = field.times[0], field.times[-1]
    x0, x1 = field.xs[0], field.xs[-1]
    inside = np.zeros(field.shape, dtype=bool)
    for (ta, tb), (xa, xb) in bands:
        if ta > tb or xa > xb:
            raise ConfigError(f"band ranges must be ordered: {((ta, tb), (xa, xb))}")
        if ta < t0 or tb > t1 or xa < x0 or xb > x1:
            raise ConfigError(f"band {((ta, tb), (xa, xb))} lies outside the grid")
        tm = (field.times >= ta) & (field.times <= tb)
        xm = (field.xs >= xa) & (field.xs <= xb)
        inside |= tm[:, None, None] & xm[None, :, None]
    out = field.copy()
    out.u = np.where(inside, field.u * attenuation, field.u)
    out.v = np.where(inside, field.v * attenuation, field.v)
    out.lam = np.where(inside, 0.0, 1.0)
    out.meta["occlusion_attenuation"] = float(attenuation)
    out.meta["occlusion_bands"] = [[list(b[0]), list(b[1])] for b in bands]
    return out


@dataclass(frozen=True)
class Preset:
    alpha: float
    noise_level: float
    dropout_fraction: float = 0.05
    params: dict = field(default_factory=dict)


# exp1x: alpha = 2.77, exp2x: alpha = 5; last digit picks the noise level.
PRESETS = {
    "exp10": Preset(2.77, 0.1),
    "exp11": Preset(2.77, 0.6),
    "exp12": Preset(2.77, 0.3),
    "exp20": Preset(5.0, 0.1),
    "exp21": Preset(5.0, 0.6),
    "exp22": Preset(5.0, 0.3),
}


def preset(name: str) -> tuple[WomersleyParams, Preset]:
    try:
        pr = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown dataset preset {name!r}; choose from {sorted(PRESETS)}")
    return WomersleyParams(alpha=pr.alpha), pr
