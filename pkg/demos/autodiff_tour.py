"""The scalar reverse-mode engine: trace once, differentiate up to third order.

Run with ``python demos/autodiff_tour.py``.
"""
import math

from pulsefield import autodiff as ad


def f(x, y):
    return ad.sin(x * y) + x ** 3 / (1 + ad.exp(y))


g = ad.trace(f, 2)
x = [0.7, -0.3]
print("f =", ad.evaluate(g, x))
print("grad =", ad.grad(g, x))

# mixed partials by symbolic gradient graphs plus one numeric sweep
print("d2f/dx2   =", ad.derive_n(g, x, [0, 0]))
print("d3f/dxdy2 =", ad.derive_n(g, x, [0, 1, 1]))

# check one of them by central differences
h = 1e-4
fx = lambda a: math.sin(a * x[1]) + a ** 3 / (1 + math.exp(x[1]))  # noqa: E731
print("fd d2f/dx2 =", (fx(x[0] + h) - 2 * fx(x[0]) + fx(x[0] - h)) / h ** 2)

# the leaky unit takes its positive slope at the kink
print("leaky'(0) =", ad.grad(ad.trace(ad.leaky_relu, 1), [0.0])[0])
