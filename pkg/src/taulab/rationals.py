"""Exact rational scalars used throughout the engine.

Everything on the exact side of the library is computed with arbitrary
precision integer ratios so that martingale properties, partition traces and
rank tests are decided by equality, never by tolerance.  ``Q`` is gmpy2's
``mpq`` when available (roughly an order of magnitude faster) and falls back
to ``fractions.Fraction``; the two are hash- and comparison-compatible.
"""

from __future__ import annotations

from fractions import Fraction

try:
    from gmpy2 import mpq as Q  # type: ignore[import-untyped]

    HAVE_GMPY2 = True
except ImportError:  # pragma: no cover - exercised only without gmpy2
    Q = Fraction
    HAVE_GMPY2 = False

ZERO = Q(0)
ONE = Q(1)

Rational = type(ZERO)


def as_q(value) -> "Q":
    """Coerce ints, strings like ``"3/4"``, Fractions and mpq to ``Q``.

    Floats are rejected: exact-mode inputs must be stated as ratios.
    """
    if type(value) is Rational:
        return value
    if isinstance(value, float):
        raise TypeError(f"exact arithmetic rejects floats: {value!r}")
    if isinstance(value, str):
        return Q(value.strip())
    if isinstance(value, Fraction):
        return Q(value.numerator, value.denominator)
    return Q(value)


def q_str(value) -> str:
    """Canonical text form, ``"n"`` or ``"n/d"`` in lowest terms."""
    v = as_q(value)
    return str(v)
