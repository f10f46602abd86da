"""Torch mirrors of the numpy field models, used for batched training.

:class:`TorchField` copies a :class:`~pulsefield.model.FieldModel` into
torch parameters and copies trained values back with :meth:`TorchField.export`.
:func:`residual_terms` evaluates the vorticity-transport residual and the
divergence for a batch of points with nested ``torch.autograd.grad`` calls,
keeping the graph so the result can be back-propagated into the weights.
"""
from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .model import MLP, EncodingSpec, FieldModel, Normalization, Scales

__all__ = ["TorchMLP", "TorchField", "residual_terms", "as_torch_field", "DTYPES"]

DTYPES = {"float32": torch.float32, "float64": torch.float64}


class TorchMLP(nn.Module):
    def __init__(self, mlp: MLP, dtype=torch.float64):
        super().__init__()
        self.weights = nn.ParameterList(
            [nn.Parameter(torch.tensor(w, dtype=dtype)) for w in mlp.weights])
        self.biases = nn.ParameterList(
            [nn.Parameter(torch.tensor(b, dtype=dtype)) for b in mlp.biases])
        self.activation = mlp.activation
        self.slope = mlp.slope

    def forward(self, h):
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < last:
                h = torch.tanh(h) if self.activation == "tanh" else torch.where(
                    h >= 0, h, self.slope * h)
        return h

    def export(self) -> MLP:
        return MLP([w.detach().cpu().double().numpy().copy() for w in self.weights],
                   [b.detach().cpu().double().numpy().copy() for b in self.biases],
                   self.activation, self.slope)


class TorchField(nn.Module):
    """Field model taking physical ``(t, x, y)`` rows and returning ``(u, v)``."""

    def __init__(self, model: FieldModel, dtype=torch.float64):
        super().__init__()
        self.kind = model.encoding.kind
        self.sigmas = model.encoding.sigmas
        self.seed = model.encoding.seed
        self.trainable_modes = model.encoding.trainable
        self.block_sizes = [b.shape[0] for b in model.encoding.mode_matrices]
        self.register_buffer("lo", torch.tensor(model.norm.lo, dtype=dtype))
        self.register_buffer("span", torch.tensor(model.norm.span, dtype=dtype))
        self._norm = model.norm
        if self.kind == "none":
            self.modes = None
        else:
            b = torch.tensor(np.concatenate(model.encoding.mode_matrices, axis=0), dtype=dtype)
            if self.trainable_modes:
                self.modes = nn.Parameter(b)
            else:
                self.register_buffer("modes", b)
        self.net = TorchMLP(model.net, dtype)

    def encode(self, c):
        if self.modes is None:
            return c
        phase = 2.0 * torch.pi * (c @ self.modes.T)
        cos, sin = torch.cos(phase), torch.sin(phase)
        blocks, start = [], 0
        for n in self.block_sizes:
            blocks += [cos[:, start:start + n], sin[:, start:start + n]]
            start += n
        return torch.cat(blocks, dim=1)

    def forward(self, pts):
        return self.net(self.encode((pts - self.lo) / self.span))

    def network_parameters(self):
        return list(self.net.parameters())

    def export(self) -> FieldModel:
        if self.modes is None:
            enc = EncodingSpec("none", seed=self.seed)
        else:
            b = self.modes.detach().cpu().double().numpy()
            mats, start = [], 0
            for n in self.block_sizes:
                mats.append(b[start:start + n].copy())
                start += n
            enc = EncodingSpec(self.kind, mats, self.sigmas, self.trainable_modes, self.seed)
        return FieldModel(enc, self.net.export(),
                          Normalization(self._norm.lo.copy(), self._norm.hi.copy()))


def as_torch_field(model, dtype=torch.float64):
    """Wrap a FieldModel; torch modules and tensor callables pass through."""
    if isinstance(model, FieldModel):
        return TorchField(model, dtype)
    if callable(model):
        return model
    raise TypeError("expected a FieldModel or a callable on (N, 3) tensors")


def _d(y, x):
    """Gradient of ``sum(y)`` w.r.t. ``x``, zeros when ``y`` does not depend on it."""
    if not y.requires_grad:
        return torch.zeros_like(x)
    (g,) = torch.autograd.grad(y.sum(), x, create_graph=True, allow_unused=True)
    return torch.zeros_like(x) if g is None else g


def residual_terms(fn, pts, Re: float, scales: Scales = Scales()):
    """Batched vorticity-transport residual and divergence.

    Parameters
    ----------
    fn : callable
        Maps physical ``(N, 3)`` coordinates to ``(N, 2)`` velocities.
    pts : torch.Tensor
        Physical coordinates, shape ``(N, 3)``.
    Re : float
    scales : Scales
        Nondimensionalisation; derivatives are taken in scaled variables.

    Returns
    -------
    residual, div : torch.Tensor
        Both of shape ``(N,)``, differentiable w.r.t. the parameters of ``fn``.
    """
    s = torch.tensor([scales.time, scales.length, scales.length], dtype=pts.dtype)
    pn = (pts.detach() / s).requires_grad_(True)
    out = fn(pn * s) / scales.velocity
    u, v = out[:, 0], out[:, 1]
    gu, gv = _d(u, pn), _d(v, pn)
    w = gv[:, 1] - gu[:, 2]
    div = gu[:, 1] + gv[:, 2]
    gw = _d(w, pn)
    w_t, w_x, w_y = gw[:, 0], gw[:, 1], gw[:, 2]
    w_xx = _d(w_x, pn)[:, 1]
    w_yy = _d(w_y, pn)[:, 2]
    adv = (w_x * u + w * gu[:, 1]) + (w_y * v + w * gv[:, 2])
    return w_t + adv - (w_xx + w_yy) / Re, div
