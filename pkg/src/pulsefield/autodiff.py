"""Scalar reverse-mode automatic differentiation with nested derivatives.

A function of a few real inputs is traced once into an immutable
:class:`Graph` (a topologically ordered list of primitive nodes).  Numeric
gradients come from a single reverse sweep; higher derivatives are obtained
by building the graph of a derivative symbolically (:func:`gradient_graph`)
and differentiating that graph again.

Everything is evaluated in 64-bit floating point.  The leaky rectifier uses
the positive-side slope at exactly zero.

Examples
--------
>>> g = trace(lambda x, y: x * cos(y), 2)
>>> evaluate(g, [2.0, 0.0])
2.0
>>> derive_n(trace(lambda x: x * x * x, 1), [0.7], [0, 0, 0])
6.0
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

__all__ = [
    "AutodiffError",
    "InputShapeError",
    "NonFiniteValueError",
    "UnsupportedOrderError",
    "Graph",
    "Var",
    "trace",
    "evaluate",
    "grad",
    "gradient_graph",
    "derive_n",
    "sin",
    "cos",
    "exp",
    "tanh",
    "leaky_relu",
    "MAX_ORDER",
]

MAX_ORDER = 3

UNARY = ("neg", "sin", "cos", "exp", "tanh", "lrelu", "lstep")
BINARY = ("add", "sub", "mul", "div")


class AutodiffError(Exception):
    """Base class for errors raised by the differentiation engine."""


class InputShapeError(AutodiffError, ValueError):
    pass


class NonFiniteValueError(AutodiffError, ArithmeticError):
    """A node produced NaN or an infinity; ``node`` is its index in the graph."""

    def __init__(self, node: int, op: str):
        super().__init__(f"non-finite value at node {node} ({op})")
        self.node = node
        self.op = op


class UnsupportedOrderError(AutodiffError, ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    """Immutable expression graph.

    ``ops[k]`` names the primitive of node ``k``, ``args[k]`` holds operand
    indices (always smaller than ``k``) and ``params[k]`` a float payload:
    the constant value for ``const`` nodes, the root position for ``root``
    nodes and the negative slope for ``lrelu``/``lstep``.
    """

    ops: tuple[str, ...]
    args: tuple[tuple[int, ...], ...]
    params: tuple[float, ...]
    roots: tuple[int, ...]
    outputs: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ops)

    @property
    def n_roots(self) -> int:
        return len(self.roots)

    @property
    def output(self) -> int:
        return self.outputs[0]

    def select(self, k: int) -> "Graph":
        """Same nodes, with output ``k`` as the (only) output."""
        return Graph(self.ops, self.args, self.params, self.roots, (self.outputs[k],))


class _Builder:
    def __init__(self) -> None:
        self.ops: list[str] = []
        self.args: list[tuple[int, ...]] = []
        self.params: list[float] = []
        self._consts: dict[float, int] = {}

    def push(self, op: str, args: tuple[int, ...] = (), param: float = 0.0) -> int:
        self.ops.append(op)
        self.args.append(args)
        self.params.append(param)
        return len(self.ops) - 1

    def const(self, value: float) -> int:
        value = float(value)
        # -0.0 and 0.0 compare equal; keep them apart so signs survive
        key = (value, math.copysign(1.0, value))
        idx = self._consts.get(key)
        if idx is None:
            idx = self.push("const", (), value)
            self._consts[key] = idx
        return idx

    def freeze(self, roots, outputs) -> Graph:
        return Graph(tuple(self.ops), tuple(self.args), tuple(self.params),
                     tuple(roots), tuple(outputs))


class Var:
    """Symbolic scalar recorded into a graph under construction."""

    __slots__ = ("builder", "index")
    __array_priority__ = 100

    def __init__(self, builder: _Builder, index: int):
        self.builder = builder
        self.index = index

    def _lift(self, other) -> int:
        if isinstance(other, Var):
            if other.builder is not self.builder:
                raise AutodiffError("cannot mix variables from different traces")
            return other.index
        return self.builder.const(other)

    def _bin(self, op: str, a: int, b: int) -> "Var":
        return Var(self.builder, self.builder.push(op, (a, b)))

    def __add__(self, other):
        return self._bin("add", self.index, self._lift(other))

    def __radd__(self, other):
        return self._bin("add", self._lift(other), self.index)

    def __sub__(self, other):
        return self._bin("sub", self.index, self._lift(other))

    def __rsub__(self, other):
        return self._bin("sub", self._lift(other), self.index)

    def __mul__(self, other):
        return self._bin("mul", self.index, self._lift(other))

    def __rmul__(self, other):
        return self._bin("mul", self._lift(other), self.index)

    def __truediv__(self, other):
        return self._bin("div", self.index, self._lift(other))

    def __rtruediv__(self, other):
        return self._bin("div", self._lift(other), self.index)

    def __neg__(self):
        return Var(self.builder, self.builder.push("neg", (self.index,)))

    def __pos__(self):
        return self

    def __pow__(self, n):
        if not isinstance(n, int) or n < 0:
            raise AutodiffError("only non-negative integer powers are supported")
        if n == 0:
            return Var(self.builder, self.builder.const(1.0))
        out = self
        for _ in range(n - 1):
            out = out * self
        return out

    def __repr__(self) -> str:
        return f"Var(node={self.index})"


def _unary(op: str, x, fallback: Callable[[float], float], param: float = 0.0):
    if isinstance(x, Var):
        return Var(x.builder, x.builder.push(op, (x.index,), param))
    return fallback(x)


def sin(x):
    return _unary("sin", x, math.sin)


def cos(x):
    return _unary("cos", x, math.cos)


def exp(x):
    return _unary("exp", x, math.exp)


def tanh(x):
    return _unary("tanh", x, math.tanh)


def leaky_relu(x, slope: float = 0.01):
    """``x`` for ``x >= 0`` and ``slope * x`` otherwise (works on floats too)."""
    return _unary("lrelu", x, lambda v: v if v >= 0.0 else slope * v, slope)


def trace(fn: Callable[..., object], n_inputs: int) -> Graph:
    """Record ``fn(x0, ..., x{n-1})`` into a graph.

    ``fn`` may return a single value or a tuple/list of values; each becomes
    an output of the graph.  Python floats returned by ``fn`` become constant
    outputs.
    """
    b = _Builder()
    roots = [b.push("root", (), float(i)) for i in range(n_inputs)]
    result = fn(*(Var(b, r) for r in roots))
    values = result if isinstance(result, (tuple, list)) else (result,)
    outputs = []
    for v in values:
        if isinstance(v, Var):
            if v.builder is not b:
                raise AutodiffError("output does not belong to this trace")
            outputs.append(v.index)
        else:
            outputs.append(b.const(float(v)))
    return b.freeze(roots, outputs)


def _check_inputs(graph: Graph, inputs: Sequence[float]) -> list[float]:
    values = [float(x) for x in inputs]
    if len(values) != graph.n_roots:
        raise InputShapeError(
            f"graph has {graph.n_roots} roots but {len(values)} inputs were given")
    return values


def _forward(graph: Graph, inputs: Sequence[float]) -> list[float]:
    x = _check_inputs(graph, inputs)
    vals = [0.0] * len(graph.ops)
    for k, (op, a, p) in enumerate(zip(graph.ops, graph.args, graph.params)):
        if op == "root":
            v = x[int(p)]
        elif op == "const":
            v = p
        elif op == "add":
            v = vals[a[0]] + vals[a[1]]
        elif op == "sub":
            v = vals[a[0]] - vals[a[1]]
        elif op == "mul":
            v = vals[a[0]] * vals[a[1]]
        elif op == "div":
            d = vals[a[1]]
            v = vals[a[0]] / d if d != 0.0 else math.nan
        elif op == "neg":
            v = -vals[a[0]]
        elif op == "sin":
            v = math.sin(vals[a[0]])
        elif op == "cos":
            v = math.cos(vals[a[0]])
        elif op == "exp":
            try:
                v = math.exp(vals[a[0]])
            except OverflowError:
                v = math.inf
        elif op == "tanh":
            v = math.tanh(vals[a[0]])
        elif op == "lrelu":
            u = vals[a[0]]
            v = u if u >= 0.0 else p * u
        elif op == "lstep":
            v = 1.0 if vals[a[0]] >= 0.0 else p
        else:  # pragma: no cover - graphs are only built by this module
            raise AutodiffError(f"unknown op {op!r}")
        if not math.isfinite(v):
            raise NonFiniteValueError(k, op)
        vals[k] = v
    return vals


def evaluate(graph: Graph, inputs: Sequence[float]):
    """Primal value of the graph output(s) at ``inputs``.

    Returns a float for single-output graphs and a tuple otherwise.
    """
    vals = _forward(graph, inputs)
    if len(graph.outputs) == 1:
        return vals[graph.outputs[0]]
    return tuple(vals[o] for o in graph.outputs)


def _reachable(graph: Graph, output: int) -> list[bool]:
    live = [False] * len(graph.ops)
    live[output] = True
    for k in range(output, -1, -1):
        if live[k]:
            for a in graph.args[k]:
                live[a] = True
    return live


def grad(graph: Graph, inputs: Sequence[float]) -> dict[int, float]:
    """Partial derivatives of the (first) output w.r.t. every reachable root.

    Keys are root positions (0-based input index).
    """
    vals = _forward(graph, inputs)
    out = graph.outputs[0]
    live = _reachable(graph, out)
    adj = [0.0] * len(graph.ops)
    adj[out] = 1.0
    result: dict[int, float] = {}
    for k in range(out, -1, -1):
        if not live[k]:
            continue
        op = graph.ops[k]
        g = adj[k]
        a = graph.args[k]
        if op == "root":
            result[int(graph.params[k])] = result.get(int(graph.params[k]), 0.0) + g
        elif op == "const" or op == "lstep" or g == 0.0:
            continue
        elif op == "add":
            adj[a[0]] += g
            adj[a[1]] += g
        elif op == "sub":
            adj[a[0]] += g
            adj[a[1]] -= g
        elif op == "mul":
            adj[a[0]] += g * vals[a[1]]
            adj[a[1]] += g * vals[a[0]]
        elif op == "div":
            adj[a[0]] += g / vals[a[1]]
            adj[a[1]] -= g * vals[k] / vals[a[1]]
        elif op == "neg":
            adj[a[0]] -= g
        elif op == "sin":
            adj[a[0]] += g * math.cos(vals[a[0]])
        elif op == "cos":
            adj[a[0]] -= g * math.sin(vals[a[0]])
        elif op == "exp":
            adj[a[0]] += g * vals[k]
        elif op == "tanh":
            adj[a[0]] += g * (1.0 - vals[k] * vals[k])
        elif op == "lrelu":
            adj[a[0]] += g * (1.0 if vals[a[0]] >= 0.0 else graph.params[k])
    # roots that only feed dead branches are still "reachable" if live
    for r in graph.roots:
        if live[r]:
            result.setdefault(int(graph.params[r]), 0.0)
    return result


class _SymbolicSweep:
    """Appends adjoint nodes to a copy of a graph, folding trivial constants."""

    def __init__(self, graph: Graph):
        self.b = _Builder()
        self.b.ops = list(graph.ops)
        self.b.args = list(graph.args)
        self.b.params = list(graph.params)
        for k, op in enumerate(graph.ops):
            if op == "const":
                self.b._consts.setdefault(
                    (graph.params[k], math.copysign(1.0, graph.params[k])), k)

    def value(self, k: int):
        if self.b.ops[k] == "const":
            return self.b.params[k]
        return None

    def add(self, x: int, y: int) -> int:
        if self.value(x) == 0.0:
            return y
        if self.value(y) == 0.0:
            return x
        return self.b.push("add", (x, y))

    def sub(self, x: int, y: int) -> int:
        if self.value(y) == 0.0:
            return x
        if self.value(x) == 0.0:
            return self.neg(y)
        return self.b.push("sub", (x, y))

    def neg(self, x: int) -> int:
        c = self.value(x)
        if c is not None:
            return self.b.const(-c)
        return self.b.push("neg", (x,))

    def mul(self, x: int, y: int) -> int:
        cx, cy = self.value(x), self.value(y)
        if cx == 0.0 or cy == 0.0:
            return self.b.const(0.0)
        if cx == 1.0:
            return y
        if cy == 1.0:
            return x
        if cx == -1.0:
            return self.neg(y)
        if cy == -1.0:
            return self.neg(x)
        return self.b.push("mul", (x, y))

    def div(self, x: int, y: int) -> int:
        if self.value(x) == 0.0:
            return self.b.const(0.0)
        if self.value(y) == 1.0:
            return x
        return self.b.push("div", (x, y))


def _depends_on(graph: Graph, root: int) -> list[bool]:
    dep = [False] * len(graph.ops)
    dep[root] = True
    for k, a in enumerate(graph.args):
        if a and any(dep[i] for i in a):
            dep[k] = graph.ops[k] != "lstep"
    return dep


def gradient_graph(graph: Graph, wrt: int) -> Graph:
    """Graph whose output is d(output)/d(input ``wrt``), built symbolically.

    The returned graph keeps the original roots, so it can be evaluated and
    differentiated again like any traced graph.
    """
    if not 0 <= wrt < graph.n_roots:
        raise InputShapeError(f"no root {wrt} in a graph with {graph.n_roots} roots")
    out = graph.outputs[0]
    root = graph.roots[wrt]
    live = _reachable(graph, out)
    dep = _depends_on(graph, root)
    s = _SymbolicSweep(graph)
    b = s.b
    adj: dict[int, int] = {out: b.const(1.0)}

    def acc(i: int, contrib: int) -> None:
        if not dep[i]:
            return
        adj[i] = s.add(adj[i], contrib) if i in adj else contrib

    for k in range(out, -1, -1):
        if not (live[k] and dep[k]) or k not in adj or k == root:
            continue
        op = graph.ops[k]
        g = adj[k]
        a = graph.args[k]
        if op == "add":
            acc(a[0], g)
            acc(a[1], g)
        elif op == "sub":
            acc(a[0], g)
            acc(a[1], s.neg(g))
        elif op == "mul":
            acc(a[0], s.mul(g, a[1]))
            acc(a[1], s.mul(g, a[0]))
        elif op == "div":
            acc(a[0], s.div(g, a[1]))
            acc(a[1], s.neg(s.div(s.mul(g, k), a[1])))
        elif op == "neg":
            acc(a[0], s.neg(g))
        elif op == "sin":
            acc(a[0], s.mul(g, b.push("cos", (a[0],))))
        elif op == "cos":
            acc(a[0], s.neg(s.mul(g, b.push("sin", (a[0],)))))
        elif op == "exp":
            acc(a[0], s.mul(g, k))
        elif op == "tanh":
            acc(a[0], s.mul(g, s.sub(b.const(1.0), s.mul(k, k))))
        elif op == "lrelu":
            acc(a[0], s.mul(g, b.push("lstep", (a[0],), graph.params[k])))
    result = adj.get(root, b.const(0.0))
    return b.freeze(graph.roots, (result,))


def derive_n(graph: Graph, inputs: Sequence[float], wrt: Sequence[int]) -> float:
    """Mixed partial of order ``len(wrt)`` (1 to 3) at ``inputs``.

    ``wrt`` lists root positions in differentiation order.  All but the last
    derivative are taken symbolically; the last one is a numeric reverse
    sweep of the resulting graph.
    """
    wrt = list(wrt)
    if not 1 <= len(wrt) <= MAX_ORDER:
        raise UnsupportedOrderError(
            f"derivative order {len(wrt)} not in 1..{MAX_ORDER}")
    for w in wrt:
        if not 0 <= w < graph.n_roots:
            raise InputShapeError(f"no root {w} in a graph with {graph.n_roots} roots")
    g = graph.select(0) if len(graph.outputs) > 1 else graph
    for w in wrt[:-1]:
        g = gradient_graph(g, w)
    return grad(g, inputs).get(wrt[-1], 0.0)
