"""Neural fields mapping ``(t, x, y)`` to ``(u, v)``.

Models are plain numpy containers in float64.  :func:`predict` runs a
vectorised forward pass; the derivative queries (:func:`divergence`,
:func:`vorticity`, :func:`ns_residual`) trace a single point through the
scalar engine in :mod:`pulsefield.autodiff` and differentiate the trace.
That route is exact but slow for full-size networks; batched derivatives
for training live in :mod:`pulsefield.nets`.

Coordinates are physical (s, m, m).  Each model stores an affine map of its
training domain onto the unit cube, applied before the encoding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ModelCorruptError

__all__ = [
    "EncodingSpec",
    "Normalization",
    "MLP",
    "FieldModel",
    "BranchedModel",
    "Scales",
    "make_encoding",
    "make_model",
    "make_branched",
    "encode",
    "predict",
    "predict_branched",
    "divergence",
    "vorticity",
    "ns_residual",
    "field_derivatives",
    "KINDS",
]

KINDS = ("none", "rff", "tff", "msff")
LEAKY_SLOPE = 0.01


@dataclass
class EncodingSpec:
    """Fourier feature encoding.

    ``mode_matrices[i]`` has shape ``(d_i, 3)``; blocks are kept in
    ascending ``sigma`` order and each contributes ``[cos, sin]``.
    """

    kind: str = "none"
    mode_matrices: list = field(default_factory=list)
    sigmas: tuple = ()
    trainable: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown encoding kind {self.kind!r}")
        self.mode_matrices = [np.asarray(b, dtype=float) for b in self.mode_matrices]
        self.sigmas = tuple(float(s) for s in self.sigmas)
        if self.kind == "none" and self.mode_matrices:
            raise ConfigError("kind 'none' takes no mode matrices")
        if self.kind != "none" and not self.mode_matrices:
            raise ConfigError(f"kind {self.kind!r} needs mode matrices")
        if self.kind in ("rff", "tff") and len(self.mode_matrices) != 1:
            raise ConfigError(f"kind {self.kind!r} takes exactly one mode matrix")
        if self.trainable and self.kind != "tff":
            raise ConfigError("only tff encodings are trainable")
        for b in self.mode_matrices:
            if b.ndim != 2 or b.shape[1] != 3:
                raise ConfigError("mode matrices must have shape (d, 3)")

    @property
    def width(self) -> int:
        if self.kind == "none":
            return 3
        return 2 * sum(b.shape[0] for b in self.mode_matrices)


def make_encoding(kind: str = "rff", seed: int = 0, sigmas=None, dims=None,
                  trainable=None) -> EncodingSpec:
    """Draw Gaussian mode matrices.

    Defaults: ``rff``/``tff`` use one ``256 x 3`` matrix with sigma 10;
    ``msff`` uses three ``85 x 3`` matrices with sigmas 10, 20 and 40.
    """
    if kind not in KINDS:
        raise ConfigError(f"unknown encoding kind {kind!r}")
    if kind == "none":
        return EncodingSpec("none", seed=seed)
    if sigmas is None:
        sigmas = (10.0, 20.0, 40.0) if kind == "msff" else (10.0,)
    if dims is None:
        dims = (85,) * len(sigmas) if kind == "msff" else (256,)
    if len(dims) != len(sigmas):
        raise ConfigError("need one dimension per sigma")
    order = np.argsort(sigmas, kind="stable")
    sigmas = tuple(float(sigmas[i]) for i in order)
    dims = tuple(int(dims[i]) for i in order)
    rng = np.random.default_rng(seed)
    mats = [rng.normal(0.0, s, size=(d, 3)) for s, d in zip(sigmas, dims)]
    if trainable is None:
        trainable = kind == "tff"
    return EncodingSpec(kind, mats, sigmas, bool(trainable), seed)


@dataclass
class Normalization:
    """Affine map ``(t, x, y) -> (v - lo) / (hi - lo)``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float).reshape(3)
        self.hi = np.asarray(self.hi, dtype=float).reshape(3)
        if np.any(self.hi <= self.lo):
            raise ConfigError("normalization needs hi > lo on every axis")

    @classmethod
    def identity(cls) -> "Normalization":
        return cls(np.zeros(3), np.ones(3))

    @classmethod
    def from_points(cls, points) -> "Normalization":
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        hi = np.where(hi > lo, hi, lo + 1.0)
        return cls(lo, hi)

    @property
    def span(self) -> np.ndarray:
        return self.hi - self.lo

    def apply(self, v):
        return (np.asarray(v, dtype=float) - self.lo) / self.span


@dataclass
class MLP:
    """Dense network; ``weights[k]`` has shape ``(fan_in, fan_out)``."""

    weights: list
    biases: list
    activation: str = "leaky_relu"
    slope: float = LEAKY_SLOPE

    def __post_init__(self):
        if self.activation not in ("leaky_relu", "tanh"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ConfigError("need matching, non-empty weight and bias lists")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ConfigError(f"layer {k} has inconsistent shapes")
            if k and w.shape[0] != self.weights[k - 1].shape[1]:
                raise ConfigError(f"layer {k} does not chain onto layer {k - 1}")

    @classmethod
    def init(cls, sizes: Sequence[int], rng: np.random.Generator,
             activation="leaky_relu", slope=LEAKY_SLOPE) -> "MLP":
        # uniform fan-in scaling, bound 1/sqrt(fan_in) for weights and biases
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            bs.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(ws, bs, activation, slope)

    def copy(self) -> "MLP":
        return MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                   self.activation, self.slope)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def check_finite(self) -> None:
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ModelCorruptError(f"layer {k} has non-finite parameters")

    def _act(self, z):
        if self.activation == "tanh":
            return np.tanh(z)
        return np.where(z >= 0.0, z, self.slope * z)

    def forward(self, h: np.ndarray) -> np.ndarray:
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < last:
                h = self._act(h)
        return h

    def forward_scalar(self, h: list) -> list:
        """Forward pass over python scalars or autodiff variables."""
        act = ad.tanh if self.activation == "tanh" else (
            lambda z: ad.leaky_relu(z, self.slope))
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out = []
            for j in range(w.shape[1]):
                acc = float(b[j])
                col = w[:, j]
                for i, hi in enumerate(h):
                    if col[i] != 0.0:
                        acc = acc + float(col[i]) * hi
                out.append(act(acc) if k < last else acc)
            h = out
        return h


@dataclass
class FieldModel:
    encoding: EncodingSpec
    net: MLP
    norm: Normalization = field(default_factory=Normalization.identity)

    def __post_init__(self):
        if self.net.sizes[0] != self.encoding.width:
            raise ConfigError(
                f"network input width {self.net.sizes[0]} != encoding width "
                f"{self.encoding.width}")
        if self.net.sizes[-1] != 2:
            raise ConfigError("a field model outputs exactly (u, v)")

    @property
    def activation(self) -> str:
        return self.net.activation

    def check_finite(self) -> None:
        self.net.check_finite()
        for b in self.encoding.mode_matrices:
            if not np.all(np.isfinite(b)):
                raise ModelCorruptError("non-finite Fourier modes")

    def copy(self) -> "FieldModel":
        enc = EncodingSpec(self.encoding.kind, [b.copy() for b in self.encoding.mode_matrices],
                           self.encoding.sigmas, self.encoding.trainable, self.encoding.seed)
        norm = Normalization(self.norm.lo.copy(), self.norm.hi.copy())
        return FieldModel(enc, self.net.copy(), norm)

    def __call__(self, t, x, y):
        """Scalar evaluation ``(u, v)``; accepts autodiff variables."""
        span, lo = self.norm.span, self.norm.lo
        c = [(t - lo[0]) / span[0], (x - lo[1]) / span[1], (y - lo[2]) / span[2]]
        return tuple(self.net.forward_scalar(_encode_scalar(self.encoding, c)))


def make_model(kind: str = "rff", seed: int = 0, hidden=(256, 256, 256),
               activation: str = "leaky_relu", norm: Normalization | None = None,
               **encoding_kw) -> FieldModel:
    """Freshly initialised field model.

    The encoding is drawn from ``seed`` and the weights from ``seed + 1``.
    """
    enc = make_encoding(kind, seed, **encoding_kw)
    rng = np.random.default_rng(seed + 1)
    net = MLP.init([enc.width, *hidden, 2], rng, activation)
    return FieldModel(enc, net, norm or Normalization.identity())


@dataclass
class BranchedModel:
    """MSFF and vanilla branches blended by a small combiner network.

    The combiner sees the normalised coordinates and both branch outputs,
    ``(t, x, y, u_msff, v_msff, u_van, v_van)``.
    """

    msff_branch: FieldModel
    vanilla_branch: FieldModel
    combiner: MLP

    def __post_init__(self):
        if self.combiner.sizes[0] != 7 or self.combiner.sizes[-1] != 2:
            raise ConfigError("combiner maps 7 inputs to 2 outputs")

    @property
    def norm(self) -> Normalization:
        return self.msff_branch.norm

    def check_finite(self) -> None:
        self.msff_branch.check_finite()
        self.vanilla_branch.check_finite()
        self.combiner.check_finite()


def make_branched(seed: int = 0, hidden=(256, 256, 256), combiner_hidden=(64, 64),
                  norm: Normalization | None = None) -> BranchedModel:
    norm = norm or Normalization.identity()
    msff = make_model("msff", seed, hidden, norm=norm)
    van = make_model("none", seed + 10, hidden, norm=norm)
    comb = MLP.init([7, *combiner_hidden, 2], np.random.default_rng(seed + 20))
    return BranchedModel(msff, van, comb)


def _encode_scalar(spec: EncodingSpec, c: list) -> list:
    if spec.kind == "none":
        return list(c)
    feats = []
    for b in spec.mode_matrices:
        phases = [2.0 * math.pi * (float(r[0]) * c[0] + float(r[1]) * c[1] + float(r[2]) * c[2])
                  for r in b]
        feats.extend(ad.cos(p) for p in phases)
        feats.extend(ad.sin(p) for p in phases)
    return feats


def encode(spec: EncodingSpec, v) -> np.ndarray:
    """Fourier features of normalised coordinates ``v`` (shape ``(3,)`` or ``(N, 3)``).

    Returns ``[cos(2 pi B_1 v), sin(2 pi B_1 v), cos(2 pi B_2 v), ...]``;
    kind ``none`` returns ``v`` unchanged.
    """
    v = np.asarray(v, dtype=float)
    if spec.kind == "none":
        return v
    blocks = []
    for b in spec.mode_matrices:
        phase = 2.0 * np.pi * (v @ b.T)
        blocks.append(np.cos(phase))
        blocks.append(np.sin(phase))
    return np.concatenate(blocks, axis=-1)


def predict(model: FieldModel, v) -> np.ndarray:
    """Velocity ``(u, v)`` in m/s at physical coordinates ``v``.

    ``v`` has shape ``(3,)`` or ``(N, 3)``; the output has shape ``(2,)`` or
    ``(N, 2)``.
    """
    model.check_finite()
    pts = np.asarray(v, dtype=float)
    return model.net.forward(encode(model.encoding, model.norm.apply(pts)))


def predict_branched(bm: BranchedModel, v) -> np.ndarray:
    bm.check_finite()
    pts = np.asarray(v, dtype=float)
    a = predict(bm.msff_branch, pts)
    w = predict(bm.vanilla_branch, pts)
    h = np.concatenate([bm.norm.apply(pts), a, w], axis=-1)
    return bm.combiner.forward(h)


@dataclass(frozen=True)
class Scales:
    """Reference length (m), time (s) and velocity (m/s) for nondimensional derivatives."""

    length: float = 1.0
    time: float = 1.0
    velocity: float = 1.0

    @classmethod
    def from_reynolds(cls, radius: float, nu: float, Re: float) -> "Scales":
        """Length ``R`` and velocity ``Re * nu / R`` so that ``Re = U R / nu``."""
        velocity = Re * nu / radius
        return cls(radius, radius / velocity, velocity)


def _as_callable(model) -> Callable:
    if isinstance(model, FieldModel):
        model.check_finite()
    if not callable(model):
        raise TypeError("model must be a FieldModel or a callable (t, x, y) -> (u, v)")
    return model


def field_derivatives(model, v, scales: Scales = Scales()) -> dict:
    """Velocity and the partial derivatives needed by the residual, at one point.

    Derivatives are with respect to nondimensional coordinates
    ``(t / scales.time, x / scales.length, y / scales.length)`` of the
    nondimensional velocity ``u / scales.velocity``.  Keys use subscript
    notation, e.g. ``"u_y"`` or ``"v_xyy"``.
    """
    fn = _as_callable(model)
    L, tau, U = scales.length, scales.time, scales.velocity
    t, x, y = (float(c) for c in v)
    point = [t / tau, x / L, y / L]

    def scaled(tn, xn, yn):
        uu, vv = fn(tn * tau, xn * L, yn * L)
        return uu / U, vv / U

    g = ad.trace(scaled, 3)
    gu, gv = g.select(0), g.select(1)
    uu, vv = ad.evaluate(g, point)
    du = ad.grad(gu, point)
    dv = ad.grad(gv, point)
    out = {"u": uu, "v": vv,
           "u_t": du.get(0, 0.0), "u_x": du.get(1, 0.0), "u_y": du.get(2, 0.0),
           "v_t": dv.get(0, 0.0), "v_x": dv.get(1, 0.0), "v_y": dv.get(2, 0.0)}
    g_vx = ad.gradient_graph(gv, 1)
    g_uy = ad.gradient_graph(gu, 2)
    d_vx = ad.grad(g_vx, point)
    d_uy = ad.grad(g_uy, point)
    out.update({"v_xt": d_vx.get(0, 0.0), "v_xx": d_vx.get(1, 0.0), "v_xy": d_vx.get(2, 0.0),
                "u_yt": d_uy.get(0, 0.0), "u_yx": d_uy.get(1, 0.0), "u_yy": d_uy.get(2, 0.0)})
    out["v_xxx"] = ad.grad(ad.gradient_graph(g_vx, 1), point).get(1, 0.0)
    out["v_xyy"] = ad.grad(ad.gradient_graph(g_vx, 2), point).get(2, 0.0)
    out["u_yxx"] = ad.grad(ad.gradient_graph(g_uy, 1), point).get(1, 0.0)
    out["u_yyy"] = ad.grad(ad.gradient_graph(g_uy, 2), point).get(2, 0.0)
    return out


def divergence(model, v, scales: Scales = Scales()) -> float:
    """``du/dx + dv/dy`` at ``v``; physical units (1/s) with default scales."""
    fn = _as_callable(model)
    L, tau, U = scales.length, scales.time, scales.velocity
    point = [float(v[0]) / tau, float(v[1]) / L, float(v[2]) / L]
    g = ad.trace(lambda tn, xn, yn: tuple(c / U for c in fn(tn * tau, xn * L, yn * L)), 3)
    return ad.grad(g.select(0), point).get(1, 0.0) + ad.grad(g.select(1), point).get(2, 0.0)


def vorticity(model, v, scales: Scales = Scales()) -> float:
    """Out-of-plane vorticity ``dv/dx - du/dy`` at ``v``."""
    fn = _as_callable(model)
    L, tau, U = scales.length, scales.time, scales.velocity
    point = [float(v[0]) / tau, float(v[1]) / L, float(v[2]) / L]
    g = ad.trace(lambda tn, xn, yn: tuple(c / U for c in fn(tn * tau, xn * L, yn * L)), 3)
    return ad.grad(g.select(1), point).get(1, 0.0) - ad.grad(g.select(0), point).get(2, 0.0)


def residual_from_derivatives(d: dict, Re: float) -> float:
    w = d["v_x"] - d["u_y"]
    w_t = d["v_xt"] - d["u_yt"]
    w_x = d["v_xx"] - d["u_yx"]
    w_y = d["v_xy"] - d["u_yy"]
    lap_w = d["v_xxx"] + d["v_xyy"] - d["u_yxx"] - d["u_yyy"]
    adv = (w_x * d["u"] + w * d["u_x"]) + (w_y * d["v"] + w * d["v_y"])
    return w_t + adv - lap_w / Re


def ns_residual(model, v, Re: float, scales: Scales = Scales()) -> float:
    """Vorticity-transport residual at ``v``.

    ``dw/dt + d(w u)/dx + d(w v)/dy - lap(w) / Re`` with ``w`` the
    vorticity, all in the nondimensional variables defined by ``scales``.
    """
    if Re <= 0:
        raise ConfigError("Re must be positive")
    return residual_from_derivatives(field_derivatives(model, v, scales), Re)
