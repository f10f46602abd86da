"""Bessel function of the first kind, order zero, for complex arguments.

Two regimes are used:

* ``|z| <= SWITCH_RADIUS``: the ascending power series
  ``sum_k (-z**2/4)**k / (k!)**2``.
* ``|z| > SWITCH_RADIUS``: Hankel's asymptotic expansion
  ``sqrt(2/(pi z)) * (P(z) cos(z - pi/4) - Q(z) sin(z - pi/4))``,
  evaluated in the right half plane (``J0`` is even).

The switch radius keeps the cancellation in the series below ~1e-11
absolute while the smallest asymptotic term is below 1e-13 relative.
Arguments are intended for ``|z| <= 50``; the only hard failure is overflow
when ``|Im z|`` exceeds ~700.
"""
from __future__ import annotations

import numpy as np

__all__ = ["BesselRangeError", "bessel_j0_complex", "SWITCH_RADIUS"]

SWITCH_RADIUS = 15.0
_MAX_IMAG = 700.0


class BesselRangeError(OverflowError):
    pass


def _series(z: np.ndarray) -> np.ndarray:
    w = -0.25 * z * z
    term = np.ones_like(z)
    total = np.ones_like(z)
    for k in range(1, 200):
        term = term * w / (k * k)
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _hankel(z: np.ndarray) -> np.ndarray:
    # a_k(0) = prod_{j=1..k} (-(2j-1)^2) / (k! 8^k)
    inv = 1.0 / z
    p = np.ones_like(z)
    q = np.zeros_like(z)
    a = 1.0
    power = np.ones_like(z)
    prev = np.full(z.shape, np.inf)
    for k in range(1, 60):
        a *= -((2 * k - 1) ** 2) / (k * 8.0)
        power = power * inv
        sign = (-1) ** (k // 2)
        term = sign * a * power
        mag = np.abs(term)
        # stop at the smallest term of the divergent series
        if np.all((mag >= prev) | (mag < 1e-17)):
            break
        use = mag < prev
        if k % 2 == 0:
            p = np.where(use, p + term, p)
        else:
            q = np.where(use, q + term, q)
        prev = np.where(use, mag, prev)
    chi = z - 0.25 * np.pi
    return np.sqrt(2.0 / (np.pi * z)) * (p * np.cos(chi) - q * np.sin(chi))


def bessel_j0_complex(z):
    """Evaluate ``J0(z)`` for complex scalar or array ``z``.

    Parameters
    ----------
    z : complex or array_like of complex

    Returns
    -------
    complex or ndarray
        Same shape as the input.

    Raises
    ------
    BesselRangeError
        If ``|Im z|`` is large enough for the result to overflow.
    """
    arr = np.asarray(z, dtype=complex)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if not np.all(np.isfinite(arr)):
        raise ValueError("J0 argument must be finite")
    if np.any(np.abs(arr.imag) > _MAX_IMAG):
        raise BesselRangeError("J0 overflows for |Im z| > 700")
    # J0 is even: fold into Re z >= 0 so the asymptotic branch cut is avoided
    arr = np.where(arr.real < 0, -arr, arr)
    out = np.empty_like(arr)
    small = np.abs(arr) <= SWITCH_RADIUS
    if np.any(small):
        out[small] = _series(arr[small])
    if np.any(~small):
        out[~small] = _hankel(arr[~small])
    return complex(out[0]) if scalar else out
