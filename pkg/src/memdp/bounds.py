"""Rational upper bounds on natural logarithms and the constants derived from them."""

from __future__ import annotations

import math
from decimal import ROUND_CEILING, Decimal, localcontext
from fractions import Fraction

LOG_SCALE = 1000
_PRECISION = 60


def _ln(x: Fraction) -> Decimal:
    with localcontext() as ctx:
        ctx.prec = _PRECISION
        return Decimal(x.numerator).ln() - Decimal(x.denominator).ln()


def ln_upper(x) -> Fraction:
    """``ceil(1000 * ln x) / 1000`` for a positive rational ``x``; never below ``ln x``."""
    x = Fraction(x)
    if x <= 0:
        raise ValueError("logarithm of a non-positive number")
    if x == 1:
        return Fraction(0)
    with localcontext() as ctx:
        ctx.prec = _PRECISION
        scaled = (_ln(x) * LOG_SCALE).to_integral_value(rounding=ROUND_CEILING)
    return Fraction(int(scaled), LOG_SCALE)


def ceil_fraction(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def sample_count(eps, eta) -> int:
    """Number of samples of a distinguishing transition: ``ceil(2 ln(1/eps) / eta^2)``."""
    eps, eta = Fraction(eps), Fraction(eta)
    if not 0 < eps < 1 or eta <= 0:
        raise ValueError("need 0 < eps < 1 and eta > 0")
    return max(1, ceil_fraction(2 * ln_upper(1 / eps) / eta**2))


def log10_int(n: int) -> float:
    """Base-10 logarithm of a possibly huge positive integer."""
    if n <= 0:
        raise ValueError("log of non-positive integer")
    bits = n.bit_length()
    if bits < 1000:
        return math.log10(n)
    shift = bits - 64
    return math.log10(n >> shift) + shift * math.log10(2)
