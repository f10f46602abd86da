"""Shared oracles for the test suite."""
from __future__ import annotations

import math

import numpy as np

from pulsefield import autodiff as ad

UNARY = ("sin", "cos", "tanh", "exp", "leaky")
BINARY = ("add", "sub", "mul", "div")


def random_program(rng: np.random.Generator, n_inputs: int, n_ops: int, smooth: bool = False):
    """A straight-line program over ``n_inputs`` variables as a list of steps."""
    unary = tuple(u for u in UNARY if not (smooth and u == "leaky"))
    prog = []
    for k in range(n_ops):
        avail = n_inputs + k
        if rng.random() < 0.45:
            op = unary[rng.integers(len(unary))]
            prog.append((op, (int(rng.integers(max(0, avail - 4), avail)),),
                         float(rng.uniform(0.5, 1.5))))
        else:
            op = BINARY[rng.integers(len(BINARY))]
            a = int(rng.integers(max(0, avail - 4), avail))
            b = int(rng.integers(0, avail))
            prog.append((op, (a, b), 0.0))
    return prog


class FloatOps:
    """Plain ``math`` interpreter that records how close the program came to trouble."""

    def __init__(self):
        self.min_kink = math.inf
        self.min_den = math.inf
        self.max_abs = 0.0

    def sin(self, x):
        return math.sin(x)

    def cos(self, x):
        return math.cos(x)

    def tanh(self, x):
        return math.tanh(x)

    def exp(self, x):
        return math.exp(x)

    def leaky(self, x):
        self.min_kink = min(self.min_kink, abs(x))
        return x if x >= 0 else 0.01 * x

    def div(self, a, b):
        self.min_den = min(self.min_den, abs(b))
        return a / b


class TapeOps:
    sin = staticmethod(ad.sin)
    cos = staticmethod(ad.cos)
    tanh = staticmethod(ad.tanh)
    exp = staticmethod(ad.exp)
    leaky = staticmethod(ad.leaky_relu)

    @staticmethod
    def div(a, b):
        return a / b


def run_program(prog, xs, ops):
    vals = list(xs)
    for op, args, scale in prog:
        if op == "add":
            v = vals[args[0]] + vals[args[1]]
        elif op == "sub":
            v = vals[args[0]] - vals[args[1]]
        elif op == "mul":
            v = vals[args[0]] * vals[args[1]]
        elif op == "div":
            v = ops.div(vals[args[0]], vals[args[1]])
        elif op == "exp":
            v = ops.exp(vals[args[0]] * scale)
        else:
            v = getattr(ops, op)(vals[args[0]] * scale)
        if isinstance(ops, FloatOps):
            ops.max_abs = max(ops.max_abs, abs(v))
        vals.append(v)
    return vals[-1]


def program_fn(prog, n_inputs, ops=None):
    ops = ops or FloatOps()
    return lambda *xs: run_program(prog, [float(v) for v in xs[:n_inputs]], ops)


def well_conditioned(prog, point, margin=0.05, limit=1e3):
    """Whether the program stays away from kinks, poles and overflow near ``point``."""
    ops = FloatOps()
    try:
        run_program(prog, [float(v) for v in point], ops)
    except (OverflowError, ZeroDivisionError, ValueError):
        return False
    return ops.min_kink > margin and ops.min_den > 0.2 and ops.max_abs < limit


def central_difference(f, x, wrt, h):
    """Mixed partial of order ``len(wrt)`` by nested central differences."""
    x = list(map(float, x))
    if not wrt:
        return f(*x)
    k, rest = wrt[0], wrt[1:]
    xp, xm = list(x), list(x)
    xp[k] += h
    xm[k] -= h
    return (central_difference(f, xp, rest, h) - central_difference(f, xm, rest, h)) / (2 * h)


def richardson(f, x, wrt, h):
    """Central differences at ``h`` and ``h/2`` combined to cancel the ``h^2`` error."""
    a = central_difference(f, x, wrt, h)
    b = central_difference(f, x, wrt, h / 2)
    return (4 * b - a) / 3


def close(a, b, rtol, floor=1e-2):
    return abs(a - b) <= rtol * max(abs(b), floor)


def fd_vorticity_residual(field, scales, Re):
    """Vorticity-transport residual of a gridded field by central differences.

    Works in the nondimensional variables of ``scales``.  Time is treated as
    periodic when the grid spans exactly one period (first and last slice
    coincide).  Returns the residual on interior points, shape
    ``(nt - 1, nx - 4, ny - 4)``.
    """
    L, tau, U = scales.length, scales.time, scales.velocity
    u, v = field.u / U, field.v / U
    dt = (field.times[1] - field.times[0]) / tau
    dx = (field.xs[1] - field.xs[0]) / L
    dy = (field.ys[1] - field.ys[0]) / L
    # drop the duplicated end slice, then wrap in time
    u, v = u[:-1], v[:-1]

    def ddx(a):
        return (a[:, 2:, :] - a[:, :-2, :]) / (2 * dx)

    def ddy(a):
        return (a[:, :, 2:] - a[:, :, :-2]) / (2 * dy)

    w = ddx(v)[:, :, 1:-1] - ddy(u)[:, 1:-1, :]
    wu, wv = w * u[:, 1:-1, 1:-1], w * v[:, 1:-1, 1:-1]
    w_t = (np.roll(w, -1, axis=0) - np.roll(w, 1, axis=0)) / (2 * dt)
    lap = ((w[:, 2:, 1:-1] - 2 * w[:, 1:-1, 1:-1] + w[:, :-2, 1:-1]) / dx ** 2
           + (w[:, 1:-1, 2:] - 2 * w[:, 1:-1, 1:-1] + w[:, 1:-1, :-2]) / dy ** 2)
    adv = ddx(wu)[:, :, 1:-1] + ddy(wv)[:, 1:-1, :]
    return w_t[:, 1:-1, 1:-1] + adv - lap / Re


def crank_nicolson_centerline(R, rho, mu, p0, p1, f, n_r=200, steps_per_period=2000,
                              periods=12):
    """Centreline velocity at ``t = 0`` of pipe flow driven by ``p0 + p1 cos(f t)``.

    Solves ``u_t = G(t)/rho + nu (u_rr + u_r / r)`` from rest with
    Crank-Nicolson in time and second-order differences in ``r``, until the
    start-up transient has decayed.
    """
    from scipy.linalg import solve_banded

    nu = mu / rho
    h = R / n_r
    r = np.arange(n_r) * h  # unknowns at r_0..r_{n-1}; u(R) = 0
    T = 2 * np.pi / f
    dt = T / steps_per_period
    lo = np.zeros(n_r)
    di = np.zeros(n_r)
    up = np.zeros(n_r)
    di[0], up[0] = -4 / h ** 2, 4 / h ** 2
    j = np.arange(1, n_r)
    lo[j] = 1 / h ** 2 - 1 / (2 * h * r[j])
    di[j] = -2 / h ** 2
    up[j] = 1 / h ** 2 + 1 / (2 * h * r[j])
    up[-1] = 0.0  # wall value is zero

    def apply(u):
        out = di * u
        out[:-1] += up[:-1] * u[1:]
        out[1:] += lo[1:] * u[:-1]
        return nu * out

    ab = np.zeros((3, n_r))
    ab[0, 1:] = -0.5 * dt * nu * up[:-1]
    ab[1] = 1 - 0.5 * dt * nu * di
    ab[2, :-1] = -0.5 * dt * nu * lo[1:]
    u = np.zeros(n_r)
    t = 0.0
    for _ in range(periods * steps_per_period):
        g = (p0 + p1 * np.cos(f * t)) + (p0 + p1 * np.cos(f * (t + dt)))
        rhs = u + 0.5 * dt * apply(u) + 0.5 * dt * g / rho
        u = solve_banded((1, 1), ab, rhs)
        t += dt
    return u[0]
