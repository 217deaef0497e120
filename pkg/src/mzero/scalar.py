"""Precision-aware scalar primitives: m-th roots and root-ratios.

Values flow as plain numeric types -- mpmath ``mpf``/``mpc`` under an explicit
working-precision context for high-precision runs, native ``float``/``complex``
for hardware-speed runs, and ``fractions.Fraction`` for exact runs.  The
functions here are the only places the package takes an m-th root, so branch
and sign conventions live in one spot:

* complex mode uses the principal branch, argument in (-pi, pi] (a negative
  real radicand has argument +pi, so (-8)^(1/3) = 1 + i*sqrt(3));
* real mode preserves sign for odd m and refuses negative radicands for
  even m rather than silently going complex.
"""

from __future__ import annotations

import cmath
import enum
from fractions import Fraction
from math import copysign

import mpmath
from mpmath import mp, mpc, mpf


class DomainMode(enum.Enum):
    """Root-branch policy, fixed for the lifetime of a solve."""

    REAL_SIGN_PRESERVING = "real"
    COMPLEX_PRINCIPAL = "complex"

    @property
    def complex_mode(self) -> bool:
        return self is DomainMode.COMPLEX_PRINCIPAL


class NegativeEvenRadicand(ArithmeticError):
    """Real-mode even root of a negative number."""


class ZeroDenominator(ZeroDivisionError):
    """Denominator of a ratio is exactly zero.

    Solvers treat this as "the previous iterate is already a zero" and stop,
    rather than crashing.
    """


class ExactnessLost(ArithmeticError):
    """An exact (rational) computation hit an irrational result."""


def working_precision(bits: int):
    """Context manager pinning the mpmath working precision in bits."""
    if bits < 8:
        raise ValueError("precision must be at least 8 bits")
    return mp.workprec(bits)


def parse_decimal(text: str, bits: int) -> mpf:
    """Parse a decimal literal correctly rounded at ``bits`` of precision.

    The string goes straight to binary at the target precision; there is no
    intermediate double rounding.
    """
    with mp.workprec(bits):
        return +mpf(text)


def to_mp(x):
    """Convert x to mpf/mpc at the ambient precision (Fractions exactly)."""
    if isinstance(x, (mpf, mpc)):
        return +x
    if isinstance(x, Fraction):
        return mpf(x.numerator) / x.denominator
    if isinstance(x, complex):
        return mpc(x)
    return +mpf(x)


def is_real_kind(x) -> bool:
    return not isinstance(x, (mpc, complex))


def _int_nth_root(n: int, m: int):
    """Largest r with r**m <= n, plus exactness flag.  n >= 0."""
    if n < 0:
        raise ValueError("negative radicand")
    if n in (0, 1) or m == 1:
        return n, True
    r = int(round(n ** (1.0 / m)))
    # float seeding can be off by a couple of ulps; settle by integer Newton
    while r > 0 and r**m > n:
        r -= 1
    while (r + 1) ** m <= n:
        r += 1
    return r, r**m == n


def _fraction_root(q: Fraction, m: int) -> Fraction:
    """Exact m-th root of a nonnegative rational, or ExactnessLost."""
    num, exact_n = _int_nth_root(q.numerator, m)
    den, exact_d = _int_nth_root(q.denominator, m)
    if not (exact_n and exact_d):
        raise ExactnessLost(f"{q} has no exact rational {m}-th root")
    return Fraction(num, den)


def principal_root(z, m: int):
    """Principal m-th root: |z|^(1/m) * (cos(theta/m) + i sin(theta/m)).

    theta is the argument of z in (-pi, pi].  The result's argument lies in
    (-pi/m, pi/m].  principal_root(0, m) = 0.
    """
    if m < 1:
        raise ValueError("m must be a positive integer")
    if z == 0:
        return z
    if m == 1:
        return z
    if isinstance(z, (mpf, mpc)):
        rho = mpmath.root(mpmath.fabs(z), m)
        theta = mpmath.arg(mpc(z)) / m
        return mpc(rho * mpmath.cos(theta), rho * mpmath.sin(theta))
    if isinstance(z, (float, complex)):
        zc = complex(z)
        return cmath.rect(abs(zc) ** (1.0 / m), cmath.phase(zc) / m)
    if isinstance(z, (int, Fraction)):
        q = Fraction(z)
        if q > 0:
            return _fraction_root(q, m)
        raise ExactnessLost("principal root of a negative rational is not rational")
    raise TypeError(f"unsupported scalar type {type(z)!r}")


def real_root(x, m: int, *, allow_negative_odd: bool = True):
    """Real m-th root with sign preservation for odd m.

    x < 0 with even m raises NegativeEvenRadicand: in real mode that root
    does not exist, and silently returning a complex value is never allowed.
    """
    if m < 1:
        raise ValueError("m must be a positive integer")
    if isinstance(x, (mpc, complex)):
        raise TypeError("real_root needs a real input")
    if x == 0 or m == 1:
        return x
    negative = x < 0
    if negative:
        if m % 2 == 0:
            raise NegativeEvenRadicand(f"even ({m}) root of negative {x}")
        if not allow_negative_odd:
            raise NegativeEvenRadicand(f"negative radicand {x} disallowed")
    mag = -x if negative else x
    if isinstance(mag, mpf):
        r = mpmath.root(mag, m)
    elif isinstance(mag, float):
        r = mag ** (1.0 / m)
    elif isinstance(mag, (int, Fraction)):
        r = _fraction_root(Fraction(mag), m)
    else:
        raise TypeError(f"unsupported scalar type {type(x)!r}")
    return -r if negative else r


def nth_root(z, m: int, complex_mode: bool):
    """Mode dispatch: principal branch in complex mode, signed root in real."""
    if complex_mode:
        return principal_root(z, m)
    return real_root(z, m)


def ratio_power(num, den, m: int, complex_mode: bool):
    """(num/den)^(1/m) under the active domain mode.

    A zero denominator raises ZeroDenominator -- for the solver families the
    denominator is f at the previous point, so this signals that the iterate
    is already an exact zero.  A zero numerator short-circuits to exact 0
    regardless of how ugly the quotient would have been.
    """
    if den == 0:
        raise ZeroDenominator("ratio denominator is exactly zero")
    if num == 0:
        return num * 0  # exact zero in the operand's own type
    return nth_root(num / den, m, complex_mode)


# ---------------------------------------------------------------------------
# hardware double precision variants (timing experiments run at native speed)


def real_root_double(r: float, m: int) -> float:
    """Double-precision real-mode root used by the timing harness.

    For odd m this is the sign-preserving root.  For even m it applies the
    root to |r| and re-attaches the sign: a total surrogate with the same
    instruction cost, so negative random radicands do not abort a timing run.
    """
    if m == 1:
        return r
    return copysign(abs(r) ** (1.0 / m), r)


def principal_root_double(z: complex, m: int) -> complex:
    if m == 1:
        return z
    return cmath.rect(abs(z) ** (1.0 / m), cmath.phase(z) / m)
