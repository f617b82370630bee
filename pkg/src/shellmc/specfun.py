"""Exponential integral on the negative real axis.

``Ei(x) = -E1(-x)`` for ``x < 0``. Small arguments use the convergent power
series of E1; larger ones use the continued fraction evaluated with the
modified Lentz algorithm. The crossover at ``|x| = 1.5`` keeps both branches
below ``1e-14`` relative error on ``[1e-6, 30]``.
"""
import math

from numba import njit

from .errors import DomainError, NumericalError

EULER_GAMMA = 0.57721566490153286061
SERIES_CUTOFF = 1.5
_TINY = 1e-300


@njit(cache=True, nogil=True)
def _e1_series(z):
    total = 0.0
    term = 1.0
    k = 1
    while k < 200:
        term *= -z / k
        delta = term / k
        total += delta
        if abs(delta) < 1e-17 * abs(total):
            break
        k += 1
    return -EULER_GAMMA - math.log(z) - total


@njit(cache=True, nogil=True)
def _e1_contfrac(z):
    b = z + 1.0
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-z)


@njit(cache=True, nogil=True)
def ei_neg(x):
    """Unchecked Ei(x) for x < 0, for use inside compiled kernels.

    Returns -inf at x == 0 and nan for x > 0.
    """
    if x > 0.0:
        return math.nan
    z = -x
    if z == 0.0:
        return -math.inf
    if z <= SERIES_CUTOFF:
        return -_e1_series(z)
    return -_e1_contfrac(z)


def expint_ei(x):
    """Ei(x) for strictly negative real ``x``.

    Raises DomainError for ``x >= 0`` and NumericalError when ``x`` is so close
    to zero that the logarithmic singularity is hit (``x > -1e-300``).
    """
    x = float(x)
    if not x < 0.0:
        raise DomainError(f"Ei is only implemented for x < 0, got {x!r}")
    if x > -1e-300:
        raise NumericalError(f"Ei({x!r}) overflows towards -inf")
    return ei_neg(x)
