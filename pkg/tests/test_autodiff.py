import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulsefield import autodiff as ad

from helpers import (TapeOps, close, program_fn, random_program, richardson, run_program,
                     well_conditioned)


def test_evaluate_examples():
    assert ad.evaluate(ad.trace(lambda x: x * x, 1), [3.0]) == 9.0
    assert ad.evaluate(ad.trace(lambda x: ad.sin(x), 1), [0.0]) == 0.0
    assert ad.evaluate(ad.trace(lambda x, y: x * ad.cos(y), 2), [2.0, 0.0]) == 2.0


def test_grad_examples():
    assert ad.grad(ad.trace(lambda x: ad.sin(x), 1), [0.0])[0] == 1.0
    assert ad.grad(ad.trace(lambda x: x * x, 1), [3.0])[0] == 6.0
    g = ad.grad(ad.trace(lambda x, y: x * ad.cos(y), 2), [2.0, math.pi / 2])
    assert g[1] == pytest.approx(-2.0, rel=1e-15)


def test_derive_n_examples():
    cube = ad.trace(lambda x: x ** 3, 1)
    for x in (-2.0, 0.0, 0.7, 5.0):
        assert ad.derive_n(cube, [x], [0, 0, 0]) == pytest.approx(6.0, rel=1e-14)
    sine = ad.trace(lambda x: ad.sin(x), 1)
    assert ad.derive_n(sine, [math.pi / 2], [0, 0]) == pytest.approx(-1.0, rel=1e-14)


def test_third_derivative_of_sine_network_matches_fd():
    rng = np.random.default_rng(4)
    w1, b1, w2 = rng.normal(size=8), rng.normal(size=8), rng.normal(size=8)

    def net(x):
        out = 0.0
        for a, b, c in zip(w1, b1, w2):
            out = out + c * ad.sin(a * x + b)
        return out

    got = ad.derive_n(ad.trace(net, 1), [0.3], [0, 0, 0])
    # plain central third difference at step 1e-3, from float evaluations
    h = 1e-3
    fd = (net(0.3 + 2 * h) - 2 * net(0.3 + h) + 2 * net(0.3 - h) - net(0.3 - 2 * h)) / (2 * h ** 3)
    assert abs(got - fd) <= 1e-4 * abs(fd)


def test_arity_mismatch():
    g = ad.trace(lambda x, y: x + y, 2)
    with pytest.raises(ad.InputShapeError):
        ad.evaluate(g, [1.0])


def test_non_finite_reports_node():
    g = ad.trace(lambda x: ad.exp(x) - ad.exp(x) / x, 1)
    with pytest.raises(ad.NonFiniteValueError) as info:
        ad.evaluate(g, [0.0])
    assert info.value.node >= 0


def test_order_above_three_rejected():
    g = ad.trace(lambda x: x ** 5, 1)
    with pytest.raises(ad.UnsupportedOrderError):
        ad.derive_n(g, [1.0], [0, 0, 0, 0])
    with pytest.raises(ad.UnsupportedOrderError):
        ad.derive_n(g, [1.0], [])


def test_leaky_kink_uses_positive_slope():
    g = ad.trace(lambda x: ad.leaky_relu(x), 1)
    assert ad.grad(g, [0.0])[0] == 1.0
    assert ad.grad(g, [-1.0])[0] == 0.01


def test_unreachable_root_absent_from_gradient():
    g = ad.trace(lambda x, y: ad.sin(x), 2)
    assert set(ad.grad(g, [0.1, 0.2])) == {0}


def _graphs(seed, count, smooth):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n_in = int(rng.integers(1, 4))
        prog = random_program(rng, n_in, int(rng.integers(3, 25)), smooth)
        x = rng.uniform(-1.5, 1.5, n_in)
        if well_conditioned(prog, x, margin=0.1):
            out.append((prog, n_in, x))
    return out


def test_grad_matches_fd_on_random_graphs():
    for prog, n_in, x in _graphs(11, 60, smooth=False):
        graph = ad.trace(lambda *v: run_program(prog, v, TapeOps), n_in)
        g = ad.grad(graph, x)
        f = program_fn(prog, n_in)
        for k in range(n_in):
            fd = richardson(f, x, [k], 1e-5)
            assert close(g.get(k, 0.0), fd, 1e-4), (prog, x, k)


def test_linearity_of_grad():
    rng = np.random.default_rng(3)
    for prog_f, n_in, x in _graphs(5, 10, smooth=True):
        prog_g = random_program(rng, n_in, 8, smooth=True)
        if not well_conditioned(prog_g, x):
            continue
        a, b = 0.7, -1.9
        gf = ad.grad(ad.trace(lambda *v: run_program(prog_f, v, TapeOps), n_in), x)
        gg = ad.grad(ad.trace(lambda *v: run_program(prog_g, v, TapeOps), n_in), x)
        gs = ad.grad(ad.trace(lambda *v: a * run_program(prog_f, v, TapeOps)
                              + b * run_program(prog_g, v, TapeOps), n_in), x)
        for k in range(n_in):
            want = a * gf.get(k, 0.0) + b * gg.get(k, 0.0)
            assert abs(gs.get(k, 0.0) - want) <= 1e-12 * max(1.0, abs(want))


def test_derive_n_first_order_equals_grad():
    for prog, n_in, x in _graphs(8, 20, smooth=False):
        graph = ad.trace(lambda *v: run_program(prog, v, TapeOps), n_in)
        g = ad.grad(graph, x)
        for k in range(n_in):
            d = ad.derive_n(graph, x, [k])
            assert abs(d - g.get(k, 0.0)) <= 1e-12 * max(1.0, abs(d))


def test_clairaut_symmetry():
    for prog, n_in, x in _graphs(9, 30, smooth=True):
        if n_in < 2:
            continue
        graph = ad.trace(lambda *v: run_program(prog, v, TapeOps), n_in)
        xy = ad.derive_n(graph, x, [0, 1])
        yx = ad.derive_n(graph, x, [1, 0])
        assert abs(xy - yx) <= 1e-10 * max(1.0, abs(xy))


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_primal_matches_direct_evaluation(x, y):
    def f(a, b):
        return ad.sin(a) * ad.exp(0.3 * b) + a / (2.5 + ad.cos(b)) - ad.tanh(a * b)

    got = ad.evaluate(ad.trace(f, 2), [x, y])
    assert got == pytest.approx(f(x, y), rel=1e-15, abs=1e-15)


def test_graph_is_topologically_ordered():
    g = ad.trace(lambda x, y: ad.sin(x * y) + ad.cos(x) / (1.0 + y * y), 2)
    for i, args in enumerate(g.args):
        assert all(a < i for a in args)
