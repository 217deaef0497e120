"""Exact truncated power-series engine: the convergence-order oracle.

Everything here is exact rational arithmetic over ``fractions.Fraction``.  A
family's iteration error e_{k+1} is expanded symbolically in the current error
eps = x_k - alpha for a generic function

    f(x) = (f^(m)(alpha)/m!) * eps^m * (1 + C1 eps + C2 eps^2 + ... )

with the C_r as free rational symbols.  The expansion replays, term for term,
the classical two-part derivation: the Newton correction f/f' as a series, the
first-step error, the root-ratio

    u = (f(y)/f(x))^(1/m)  =  (e_y/e) * (fyy/fxx)^(1/m)

composed through the declared weight-function Taylor slots, and (for
three-point families) the second ratio v and the final correction.  The first
index with a nonzero coefficient in the resulting error series *is* the
convergence order; annihilating leading coefficients derives the weight
conditions.

Series carry their own valid truncation order; reading past it raises instead
of silently returning zero.  Internally expansions run 3 orders above the
requested target so the divisions by eps and eps^2 in the u/v constructions
land the final series valid through exactly the target order.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence


class SeriesTruncationError(IndexError):
    """Asked for a coefficient beyond the valid truncation order."""


class ZeroConstantTerm(ArithmeticError):
    """Reciprocal of a series whose constant term is exactly zero."""


class NonUnitConstantTerm(ArithmeticError):
    """Rational power of a series needs constant term exactly 1."""


class NonNilpotentInner(ArithmeticError):
    """Polynomial composition needs an inner series with zero constant term."""


class NotDivisible(ArithmeticError):
    """shift_down(k) needs the first k coefficients to vanish exactly."""


class NotAffine(ArithmeticError):
    """Condition derivation found slot dependence beyond quadratic reach."""


class UnderdeterminedSlots(ArithmeticError):
    """A joint condition solve did not pin all slots active at that order."""


class UnknownFamily(KeyError):
    pass


class MultiplicityOne(ValueError):
    """Family needs m >= 2 (its ratio exponent 1/(m-1) is undefined at m=1)."""


_Q = Fraction


def _fr(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass(frozen=True)
class QSeries:
    """Truncated power series in eps with exact rational coefficients.

    ``coeffs[i]`` is the coefficient of eps^i; the series is valid through
    eps^order with order = len(coeffs) - 1.  Binary operations keep the
    minimum of the two valid orders.
    """

    coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(_fr(c) for c in self.coeffs))
        if not self.coeffs:
            raise ValueError("series needs at least the constant coefficient")

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def coeff(self, i: int) -> Fraction:
        if i < 0:
            raise IndexError(i)
        if i > self.order:
            raise SeriesTruncationError(
                f"coefficient eps^{i} requested but series is only valid through eps^{self.order}"
            )
        return self.coeffs[i]

    def leading_index(self) -> Optional[int]:
        """Index of the first nonzero coefficient, or None if all vanish."""
        for i, c in enumerate(self.coeffs):
            if c != 0:
                return i
        return None

    # -- constructors ------------------------------------------------------

    @staticmethod
    def constant(value, order: int) -> "QSeries":
        return QSeries((_fr(value),) + (_Q(0),) * order)

    @staticmethod
    def eps(order: int) -> "QSeries":
        if order < 1:
            raise ValueError("eps needs order >= 1")
        return QSeries((_Q(0), _Q(1)) + (_Q(0),) * (order - 1))

    # -- arithmetic --------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, QSeries):
            return other
        if isinstance(other, (int, Fraction)):
            return QSeries.constant(other, self.order)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        n = min(self.order, other.order)
        return QSeries(tuple(self.coeffs[i] + other.coeffs[i] for i in range(n + 1)))

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        n = min(self.order, other.order)
        return QSeries(tuple(self.coeffs[i] - other.coeffs[i] for i in range(n + 1)))

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other - self

    def __neg__(self):
        return QSeries(tuple(-c for c in self.coeffs))

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            q = _fr(other)
            return QSeries(tuple(c * q for c in self.coeffs))
        if not isinstance(other, QSeries):
            return NotImplemented
        n = min(self.order, other.order)
        a, b = self.coeffs, other.coeffs
        out = []
        for k in range(n + 1):
            acc = _Q(0)
            lo = 0 if k <= other.order else k - other.order
            hi = min(k, self.order)
            for i in range(lo, hi + 1):
                acc += a[i] * b[k - i]
            out.append(acc)
        return QSeries(tuple(out))

    __rmul__ = __mul__

    def reciprocal(self) -> "QSeries":
        c0 = self.coeffs[0]
        if c0 == 0:
            raise ZeroConstantTerm("cannot invert a series with zero constant term")
        inv0 = 1 / c0
        out = [inv0]
        for n in range(1, self.order + 1):
            acc = _Q(0)
            for k in range(1, min(n, self.order) + 1):
                acc += self.coeffs[k] * out[n - k]
            out.append(-inv0 * acc)
        return QSeries(tuple(out))

    def pow_rational(self, r) -> "QSeries":
        """Principal formal power s^r for rational r; needs s(0) = 1."""
        r = _fr(r)
        if self.coeffs[0] != 1:
            raise NonUnitConstantTerm(
                f"rational power needs constant term 1, got {self.coeffs[0]}"
            )
        out = [_Q(1)]
        for n in range(1, self.order + 1):
            acc = _Q(0)
            for j in range(1, n + 1):
                acc += (r * j - (n - j)) * self.coeffs[j] * out[n - j]
            out.append(acc / n)
        return QSeries(tuple(out))

    def int_pow(self, k: int) -> "QSeries":
        if k < 0:
            return self.reciprocal().int_pow(-k)
        acc = QSeries.constant(1, self.order)
        for _ in range(k):
            acc = acc * self
        return acc

    def shift_down(self, k: int) -> "QSeries":
        """Exact division by eps^k."""
        if k == 0:
            return self
        if self.order < k:
            raise SeriesTruncationError(f"series of order {self.order} cannot shift down {k}")
        for i in range(k):
            if self.coeffs[i] != 0:
                raise NotDivisible(
                    f"eps^{i} coefficient {self.coeffs[i]} != 0: not divisible by eps^{k}"
                )
        return QSeries(self.coeffs[k:])

    def shift_up(self, k: int) -> "QSeries":
        return QSeries((_Q(0),) * k + self.coeffs)

    def truncate(self, n: int) -> "QSeries":
        if n > self.order:
            raise SeriesTruncationError(
                f"cannot extend validity: order {self.order} < requested {n}"
            )
        return QSeries(self.coeffs[: n + 1])

    def __repr__(self):
        bits = []
        for i, c in enumerate(self.coeffs):
            if c != 0:
                bits.append(f"{c}*eps^{i}" if i else f"{c}")
        body = " + ".join(bits) if bits else "0"
        return f"QSeries({body} + O(eps^{self.order + 1}))"


def compose_poly(poly: Sequence, inner: QSeries) -> QSeries:
    """Evaluate the polynomial sum(poly[k] * inner^k) by Horner's scheme.

    The inner series must be nilpotent (zero constant term), so the truncated
    composition is exact through inner.order.
    """
    if inner.coeffs[0] != 0:
        raise NonNilpotentInner(f"inner constant term {inner.coeffs[0]} != 0")
    coeffs = [_fr(c) for c in poly]
    acc = QSeries.constant(coeffs[-1], inner.order)
    for c in reversed(coeffs[:-1]):
        acc = acc * inner + c
    return acc


# --------------------------------------------------------------------- bindings


FAMILY_SLOTS = {
    "schroder": (),
    "fam18_twopoint": ("P0", "P1", "P2", "P3", "P4"),
    "fam1_zhou": ("G0", "G1", "G2", "G3", "G4"),
    "fam2_lee": ("W0", "W1", "W2", "W3", "W4"),
    "fam3_liu": ("G0", "G1", "G2", "G3", "G4"),
    "fam12_PQ": (
        "P0", "P1", "P2", "P3", "P4",
        "Q00", "Qu0", "Q0v", "Quu", "Quv", "Qvv",
    ),
    "fam15b_HPGL": (
        "H0", "H1", "H2", "H3", "H4",
        "P0", "P1", "P2", "P3", "P4",
        "G0", "G1", "G2", "G3", "G4",
        "L0", "L1", "L2", "L3", "L4",
    ),
    "fam7b": (
        "H0", "H1", "H2", "H3", "H4",
        "P0", "P1", "P2", "P3", "P4",
        "G0", "G1", "G2", "G3", "G4",
    ),
    "fam22_li": ("Rm",),
    "fam23_zhou": ("phi0", "phi1", "phi2", "phi3", "phi4"),
}

THREE_POINT_FAMILIES = ("fam12_PQ", "fam15b_HPGL", "fam7b")

# extra per-family rational parameters that may ride along in slots
OPTIONAL_SLOTS = {"fam2_lee": ("lam",)}


@dataclass
class SymbolBinding:
    """Concrete rational values for the symbols of one expansion.

    ``c`` maps r -> C_r for r = 1..8 (absent entries are zero: that just
    selects a specific admissible f).  ``slots`` maps weight Taylor slot names
    (derivative values at the expansion point, e.g. P2 = P''(0)) to rationals.
    """

    m: int
    c: dict
    slots: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = {int(k): _fr(v) for k, v in self.c.items()}
        self.slots = {k: _fr(v) for k, v in self.slots.items()}
        if self.m < 1:
            raise ValueError("multiplicity must be >= 1")

    def C(self, r: int) -> Fraction:
        return self.c.get(r, _Q(0))

    def slot(self, name: str) -> Fraction:
        try:
            return self.slots[name]
        except KeyError:
            raise KeyError(f"slot {name!r} has no bound value") from None


def draw_c(rng: random.Random) -> dict:
    """Random rational C_1..C_8, numerators in [-9,9]\\{0}, denominators 1..4."""
    out = {}
    for r in range(1, 9):
        p = 0
        while p == 0:
            p = rng.randint(-9, 9)
        out[r] = Fraction(p, rng.randint(1, 4))
    return out


# ----------------------------------------------------------- expansion plumbing


def _taylor_poly(binding: SymbolBinding, prefix: str) -> list:
    """[w(0), w'(0), w''(0)/2, w'''(0)/6, w''''(0)/24] from slot values."""
    s = binding.slot
    return [
        s(prefix + "0"),
        s(prefix + "1"),
        s(prefix + "2") / 2,
        s(prefix + "3") / 6,
        s(prefix + "4") / 24,
    ]


class _Expansion:
    """Shared intermediate series for one (family, binding, order) expansion."""

    def __init__(self, binding: SymbolBinding, n_internal: int):
        m = binding.m
        self.b = binding
        self.m = m
        N = n_internal
        self.fxx = QSeries(tuple(binding.C(k) if k else _Q(1) for k in range(N + 1)))
        # eps * d/deps of the full f-series, divided by the common eps^(m-1):
        # m*fxx + eps*fxx'
        self.denom = QSeries(tuple((m + k) * self.fxx.coeffs[k] for k in range(N + 1)))
        self.epsq = QSeries.eps(N)

    def newton(self, lam=_Q(0)) -> QSeries:
        """Series of f/(f' + lam*f); lam = 0 is the plain Newton correction."""
        den = self.denom
        if lam:
            den = den + _fr(lam) * self.fxx.shift_up(1)
        return (self.fxx * den.reciprocal()).shift_up(1)

    def first_step(self, a, lam=_Q(0)):
        """Error series after y = x - a*f/(f'+lam f); returns (ey, newt)."""
        newt = self.newton(lam)
        return self.epsq - _fr(a) * newt, newt

    def u_ratio(self, ey: QSeries):
        """u = (f(y)/f(x))^(1/m) as (e_y/e)*(fyy/fxx)^(1/m); returns (u, fyy)."""
        C = self.b.C
        fyy = compose_poly([_Q(1), C(1), C(2), C(3), C(4)], ey)
        yx = fyy * self.fxx.reciprocal()
        u = yx.pow_rational(Fraction(1, self.m)) * ey.shift_down(1)
        return u, fyy

    def v_ratio(self, fyy: QSeries, ey: QSeries, ez: QSeries) -> QSeries:
        """v = (f(z)/f(y))^(1/m) as (e_z/e_y)*(fzz/fyy)^(1/m)."""
        C = self.b.C
        fzz = compose_poly([_Q(1), C(1), C(2)], ez)
        zy = fzz * fyy.reciprocal()
        return zy.pow_rational(Fraction(1, self.m)) * ez.shift_down(2) * ey.shift_down(2).reciprocal()

    def deriv_ratio_t(self, ey: QSeries) -> QSeries:
        """t-ratio f'(y)/f'(x) = (e_y/e)^(m-1) * D(e_y)/D(e)."""
        s = ey.shift_down(1)
        num = compose_poly(self.denom.coeffs, ey)
        return s.int_pow(self.m - 1) * num * self.denom.reciprocal()


def _expand(family: str, binding: SymbolBinding, n_internal: int, target: str) -> QSeries:
    m = binding.m
    X = _Expansion(binding, n_internal)

    if family == "schroder":
        ey, _ = X.first_step(m)
        return ey

    if family == "fam18_twopoint":
        ey, newt = X.first_step(m)
        u, _ = X.u_ratio(ey)
        P = compose_poly(_taylor_poly(binding, "P"), u)
        return ey - m * (u * P) * newt

    if family == "fam1_zhou":
        ey, newt = X.first_step(m)
        u, _ = X.u_ratio(ey)
        G = compose_poly(_taylor_poly(binding, "G"), u)
        return ey - m * G * newt

    if family == "fam2_lee":
        lam = binding.slots.get("lam", _Q(0))
        ey, _ = X.first_step(m, lam)
        u, _ = X.u_ratio(ey)
        W = compose_poly(_taylor_poly(binding, "W"), u)
        newt2 = X.newton(2 * lam)
        return ey - m * W * newt2

    if family == "fam3_liu":
        if m < 2:
            raise MultiplicityOne("the derivative-ratio family needs m >= 2")
        ey, newt = X.first_step(m)
        t = X.deriv_ratio_t(ey)
        # formal (m-1)-th root: ((e_y/e)^(m-1) * D-ratio)^(1/(m-1))
        s = ey.shift_down(1)
        dpart = compose_poly(X.denom.coeffs, ey) * X.denom.reciprocal()
        t_root = s * dpart.pow_rational(Fraction(1, m - 1))
        G = compose_poly(_taylor_poly(binding, "G"), t_root)
        return ey - m * G * newt

    if family == "fam12_PQ":
        ey, newt = X.first_step(m)
        u, fyy = X.u_ratio(ey)
        P = compose_poly(_taylor_poly(binding, "P"), u)
        ez = ey - m * (u * P) * newt
        if target == "z":
            return ez
        v = X.v_ratio(fyy, ey, ez)
        s = binding.slot
        Q = (
            QSeries.constant(s("Q00"), u.order)
            + s("Qu0") * u
            + s("Q0v") * v
            + Fraction(s("Quu"), 2) * (u * u)
            + s("Quv") * (u * v)
            + Fraction(s("Qvv"), 2) * (v * v)
        )
        return ez - m * (u * v * Q) * newt

    if family == "fam15b_HPGL":
        ey, newt = X.first_step(m)
        u, fyy = X.u_ratio(ey)
        H = compose_poly(_taylor_poly(binding, "H"), u)
        ez = ey - m * (u * H) * newt
        if target == "z":
            return ez
        v = X.v_ratio(fyy, ey, ez)
        w = u * v
        P = compose_poly(_taylor_poly(binding, "P"), u)
        G = compose_poly(_taylor_poly(binding, "G"), v)
        L = compose_poly(_taylor_poly(binding, "L"), w)
        return ez - m * (u * P * G * L) * newt

    if family == "fam7b":
        ey, newt = X.first_step(m)
        u, fyy = X.u_ratio(ey)
        H = compose_poly(_taylor_poly(binding, "H"), u)
        ez = ey - m * (u * H) * newt
        if target == "z":
            return ez
        v = X.v_ratio(fyy, ey, ez)
        uv = u * v
        P = compose_poly(_taylor_poly(binding, "P"), u)
        G = compose_poly(_taylor_poly(binding, "G"), v)
        return ez - m * (uv * (1 + 2 * uv) * P * G) * newt

    if family == "fam22_li":
        a = Fraction(2 * m, m + 2)
        ey, newt = X.first_step(a)
        t = X.deriv_ratio_t(ey)
        A = Fraction(m + 2, m) ** m
        num = Fraction(m * (m - 2), 2) * A * t - Fraction(m * m, 2)
        den = 1 - binding.slot("Rm") * t
        phi = num * den.reciprocal()
        return X.epsq - phi * newt

    if family == "fam23_zhou":
        a = Fraction(2 * m, m + 2)
        ey, newt = X.first_step(a)
        t = X.deriv_ratio_t(ey)
        tstar = Fraction(m, m + 2) ** (m - 1)
        dt = t - tstar
        phi = compose_poly(_taylor_poly(binding, "phi"), dt)
        return X.epsq - phi * newt

    raise UnknownFamily(family)


def expand_family(
    family: str,
    binding: SymbolBinding,
    *,
    target: str = "full",
    n_order: int = 8,
    ) -> QSeries:
    """Error series e_{k+1} = sum T_r eps^r + O(eps^{n_order+1}) for a family.

    ``target="z"`` returns the intermediate second-step error of the
    three-point families (used when deriving their first-step conditions).
    """
    if family not in FAMILY_SLOTS:
        raise UnknownFamily(family)
    if target not in ("full", "z"):
        raise ValueError(f"unknown target {target!r}")
    if target == "z" and family not in THREE_POINT_FAMILIES:
        raise ValueError(f"{family} has no intermediate z step")
    if n_order > 9:
        # the quartic f(y)- and quadratic f(z)-compositions are exact only up
        # to eps^9 because e_y = O(eps^2) and e_z = O(eps^4)
        raise ValueError("expansion is exact only through eps^9")
    out = _expand(family, binding, n_order + 3, target)
    return out.truncate(n_order)


# --------------------------------------------------------------- order readout


def observed_order(
    family: str,
    m: int,
    slots: dict,
    *,
    trials: int = 3,
    seed: int = 0,
    n_order: int = 8,
) -> int:
    """Minimum nonzero-coefficient index of the error series over random C's.

    Deterministic for a given seed.  Returns n_order + 1 if every tracked
    coefficient vanished in every trial (order exceeds the truncation).
    """
    rng = random.Random(seed)
    best = n_order + 1
    for _ in range(trials):
        binding = SymbolBinding(m, draw_c(rng), dict(slots))
        series = expand_family(family, binding, n_order=n_order)
        lead = series.leading_index()
        if lead is not None and lead < best:
            best = lead
    return best


# ------------------------------------------------------- reference coefficients


def schroder_eps2(m: int, C1: Fraction) -> Fraction:
    """Leading error coefficient of the one-step method: C1/m."""
    return _fr(C1) / m


def two_point_eps4(m: int, C1, C2, P2) -> Fraction:
    """Published eps^4 coefficient of the two-point root-ratio family."""
    C1, C2, P2 = _fr(C1), _fr(C2), _fr(P2)
    return (-2 * m * C1 * C2 + C1**3 * (9 + m - P2)) / (2 * m**3)


def three_point_eps8(m: int, C1, C2, C3, P2, P4, Qvv) -> Fraction:
    """Published eps^8 coefficient of the three-point family.

    The published display writes Q_tt and P_4 where the program's slots are
    named Qvv and P4 = P''''(0); this evaluates it under that identification.
    """
    C1, C2, C3 = _fr(C1), _fr(C2), _fr(C3)
    P2, P4, Qvv = _fr(P2), _fr(P4), _fr(Qvv)
    k = m - P2 + 9
    inner = (
        C1**4 * (-14 * m**2 + 3 * Qvv * k**2 + 6 * m * P2 - 204 * m + 150 * P2 - P4 - 1054)
        - 12 * m * C1**2 * C2 * (Qvv * k - 4 * m + P2 - 34)
        - 24 * m**2 * C1 * C3
        + 12 * m**2 * C2**2 * (Qvv - 2)
    )
    return Fraction(-1, 48 * m**7) * (C1 * (C1**2 * k - 2 * m * C2) * inner)


def fam22_suggested_rm(m: int) -> Fraction:
    """The pole parameter that restores fourth order: ((m+2)/m)^m.

    Annihilating the leading error coefficient needs the rational weight to
    equal m at t* = (m/(m+2))^(m-1), which solves to this value exactly; the
    order oracle then measures 4.
    """
    return Fraction(m + 2, m) ** m


def fam23_tstar(m: int) -> Fraction:
    """Expansion point of the derivative-ratio weight: (m/(m+2))^(m-1)."""
    return Fraction(m, m + 2) ** (m - 1)


# ------------------------------------------------------- condition derivation


@dataclass
class ConditionReport:
    family: str
    m: int
    solved: dict
    arbitrary: tuple
    annihilated_through: int


def _linear_solve(rows):
    """Solve rows of (coeffs, rhs) exactly.

    Returns ("unique", values) with one value per column, ("inconsistent",
    None), or ("underdetermined", None).
    """
    if not rows:
        return "underdetermined", None
    ncols = len(rows[0][0])
    aug = [[_fr(c) for c in coeffs] + [_fr(rhs)] for coeffs, rhs in rows]
    pivots = []
    row = 0
    for col in range(ncols):
        pivot = next((r for r in range(row, len(aug)) if aug[r][col] != 0), None)
        if pivot is None:
            continue
        aug[row], aug[pivot] = aug[pivot], aug[row]
        scale = aug[row][col]
        aug[row] = [v / scale for v in aug[row]]
        for r in range(len(aug)):
            if r != row and aug[r][col] != 0:
                factor = aug[r][col]
                aug[r] = [a - factor * b for a, b in zip(aug[r], aug[row])]
        pivots.append(col)
        row += 1
    for r in range(row, len(aug)):
        if aug[r][ncols] != 0:
            return "inconsistent", None
    if len(pivots) < ncols:
        return "underdetermined", None
    values = [None] * ncols
    for r, col in enumerate(pivots):
        values[col] = aug[r][ncols]
    return "unique", values


def _quadratic_fit(sample, names, rng):
    """Exact polynomial model of sample(assign) over the named slots.

    Interpolates on the tensor grid {0,1,2}^k (per-variable degree <= 2) and
    verifies against one random rational point.  Returns {exponent tuple:
    coefficient}.  Raises NotAffine when some variable enters with degree > 2.
    """
    import itertools

    k = len(names)
    points = list(itertools.product((_Q(0), _Q(1), _Q(2)), repeat=k))
    rows = []
    for pt in points:
        monos = []
        for expo in itertools.product((0, 1, 2), repeat=k):
            val = _Q(1)
            for x, e in zip(pt, expo):
                val *= x**e
            monos.append(val)
        rows.append((monos, sample(dict(zip(names, pt)))))
    status, values = _linear_solve(rows)
    if status != "unique":
        raise NotAffine(f"interpolation of slot dependence on {names} failed")
    model = {
        expo: coefficient
        for expo, coefficient in zip(itertools.product((0, 1, 2), repeat=k), values)
        if coefficient != 0
    }
    check = {name: Fraction(rng.randint(2, 9), rng.randint(5, 11)) for name in names}
    predicted = _Q(0)
    for expo, coefficient in model.items():
        term = coefficient
        for name, e in zip(names, expo):
            term *= check[name] ** e
        predicted += term
    if sample(check) != predicted:
        raise NotAffine(
            f"slot dependence on {names} has degree > 2 in some slot"
        )
    return model


# -- exact univariate polynomial helpers (coefficient lists, index = power) --


def _poly_trim(p):
    while len(p) > 1 and p[-1] == 0:
        p = p[:-1]
    return p


def _poly_is_zero(p):
    return all(c == 0 for c in p)


def _poly_mul(a, b):
    out = [_Q(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x == 0:
            continue
        for j, y in enumerate(b):
            out[i + j] += x * y
    return _poly_trim(out)

def _poly_sub(a, b):
    n = max(len(a), len(b))
    out = [_Q(0)] * n
    for i, x in enumerate(a):
        out[i] += x
    for i, y in enumerate(b):
        out[i] -= y
    return _poly_trim(out)


def _poly_rem(a, b):
    a = _poly_trim(list(a))
    db, lead = len(b) - 1, b[-1]
    while len(a) - 1 >= db and not _poly_is_zero(a):
        shift = len(a) - 1 - db
        q = a[-1] / lead
        for i in range(len(b)):
            a[shift + i] -= q * b[i]
        a = _poly_trim(a)
    return a


def _poly_gcd(a, b):
    a, b = _poly_trim(list(a)), _poly_trim(list(b))
    if _poly_is_zero(a):
        g = b
    elif _poly_is_zero(b):
        g = a
    else:
        while not _poly_is_zero(b):
            a, b = b, _poly_rem(a, b)
        g = a
    g = _poly_trim(g)
    if not _poly_is_zero(g) and g[-1] != 1:
        lead = g[-1]
        g = [c / lead for c in g]
    return g


def _poly_eval(p, x):
    acc = _Q(0)
    for c in reversed(p):
        acc = acc * x + c
    return acc


def _isqrt_exact(n: int):
    if n < 0:
        return None
    r = math.isqrt(n)
    return r if r * r == n else None


def _poly_rational_roots(p):
    """All rational roots of a degree <= 2 polynomial; None if degree > 2."""
    p = _poly_trim(list(p))
    if _poly_is_zero(p):
        raise ValueError("zero polynomial has every root")
    deg = len(p) - 1
    if deg == 0:
        return []
    if deg == 1:
        return [-p[0] / p[1]]
    if deg == 2:
        a, b, c = p[2], p[1], p[0]
        disc = b * b - 4 * a * c
        if disc < 0:
            return []
        sq_num = _isqrt_exact(disc.numerator)
        sq_den = _isqrt_exact(disc.denominator)
        if sq_num is None or sq_den is None:
            return []  # irrational roots: no rational slot value exists
        root = Fraction(sq_num, sq_den)
        return sorted({(-b + root) / (2 * a), (-b - root) / (2 * a)})
    return None


def derive_conditions(
    family: str,
    m: int,
    unknowns: Sequence[str],
    *,
    fixed: Optional[dict] = None,
    target: str = "full",
    seed: int = 0,
    n_order: int = 8,
    n_bindings: int = 3,
) -> ConditionReport:
    """Derive weight-slot values by annihilating leading error coefficients.

    Proceeds order by order.  At each order the slots that actually appear
    (nonzero secant slope) are solved jointly from ``n_bindings`` independent
    random C-bindings.  Affine dependence is solved directly; a quadratic
    dependence (slot products, as when a first- and second-step slot couple)
    is solved through an exact monomial lift, stacking successive orders until
    the lifted linear system pins every active slot, then checking that the
    lifted products really are products.  An order that cannot be annihilated
    ends the derivation -- that is precisely how a family's finite order shows
    up, and slots never pinned by then are reported arbitrary.

    Unknown slots not yet solved are held at 0 while probing; every other
    slot the family uses must appear in ``fixed``.
    """
    fixed = {k: _fr(v) for k, v in (fixed or {}).items()}
    unknowns = list(unknowns)
    valid = set(FAMILY_SLOTS[family]) | set(OPTIONAL_SLOTS.get(family, ()))
    for name in list(unknowns) + list(fixed):
        if name not in valid:
            raise KeyError(f"{name!r} is not a slot of {family}")
    overlap = set(unknowns) & set(fixed)
    if overlap:
        raise ValueError(f"slots both fixed and unknown: {sorted(overlap)}")

    rng = random.Random(seed)
    cs = [draw_c(rng) for _ in range(n_bindings)]
    # held-out bindings guard against degenerate draws (e.g. a C1 that
    # annihilates the first-step error itself) masquerading as conditions
    check_cs = [draw_c(rng) for _ in range(2)]

    def expand_with(assign: dict, c: dict) -> QSeries:
        slots = dict(fixed)
        for name in unknowns:
            slots[name] = assign.get(name, _Q(0))
        binding = SymbolBinding(m, c, slots)
        return expand_family(family, binding, target=target, n_order=n_order)

    solved: dict = {}
    unsolved: list = list(unknowns)
    last_annihilated = 0

    def coeff_at(r: int, assign: dict, c: dict) -> Fraction:
        return expand_with(assign, c).coeff(r)

    def secant_rows(r: int):
        """(base, per-unsolved secant slopes) for each binding at order r."""
        out = []
        for c in cs:
            base = coeff_at(r, solved, c)
            slopes = []
            for name in unsolved:
                probe = dict(solved)
                probe[name] = _Q(1)
                slopes.append(coeff_at(r, probe, c) - base)
            out.append((base, slopes))
        return out

    def affine_audit(r: int, active, rows_per_binding) -> bool:
        for c, (base, slopes) in zip(cs, rows_per_binding):
            trial = dict(solved)
            expected = base
            for i in active:
                val = Fraction(rng.randint(2, 9), rng.randint(5, 11))
                trial[unsolved[i]] = val
                expected += slopes[i] * val
            try:
                got = coeff_at(r, trial, c)
            except (ZeroConstantTerm, NotDivisible):
                continue  # probe hit a structural pole; this audit is void
            if got != expected:
                return False
        return True

    def model_eval(model, names, point):
        acc = _Q(0)
        for expo, coef in model.items():
            term = coef
            for name, e in zip(names, expo):
                term *= point[name] ** e
            acc += term
        return acc

    def candidates_from(models, names):
        """Common rational zeros of fitted models, or None if not pinnable yet.

        Single slot: common roots of the univariate fits.  Two slots: exact
        elimination of a variable every model is affine in, then rational
        roots of the gcd of the pairwise cross numerators.
        """
        if len(names) == 1:
            g = [_Q(0)]
            for model in models:
                poly = [model.get((i,), _Q(0)) for i in range(3)]
                g = _poly_gcd(g, poly)
            if _poly_is_zero(g):
                return None
            roots = _poly_rational_roots(g)
            if roots is None:
                raise NotAffine(f"{family}: elimination degree too high for {names}")
            return [{names[0]: v} for v in roots]

        # pick the variable every model is affine in
        for flip in (False, True):
            order = (names[1], names[0]) if flip else (names[0], names[1])
            x, y = order
            yi = names.index(y)
            if all(all(expo[yi] < 2 for expo in model) for model in models):
                break
        else:
            raise NotAffine(f"{family}: no slot of {names} enters affinely")
        xi = names.index(x)

        cd = []
        for model in models:
            cpoly = [_Q(0)] * 3
            dpoly = [_Q(0)] * 3
            for expo, coef in model.items():
                if expo[yi] == 0:
                    cpoly[expo[xi]] = coef
                else:
                    dpoly[expo[xi]] = coef
            cd.append((_poly_trim(cpoly), _poly_trim(dpoly)))

        g = [_Q(0)]
        for i in range(len(cd)):
            for j in range(i + 1, len(cd)):
                cross = _poly_sub(_poly_mul(cd[i][0], cd[j][1]),
                                  _poly_mul(cd[j][0], cd[i][1]))
                if not _poly_is_zero(cross):
                    g = _poly_gcd(g, cross)
        if _poly_is_zero(g):
            return None  # every equation describes the same curve so far
        roots = _poly_rational_roots(g)
        if roots is None:
            raise NotAffine(f"{family}: elimination degree too high for {names}")
        out = []
        for xv in roots:
            pinned = None
            free_line = True
            for cpoly, dpoly in cd:
                dv = _poly_eval(dpoly, xv)
                cv = _poly_eval(cpoly, xv)
                if dv != 0:
                    pinned = -cv / dv
                    free_line = False
                    break
                if cv != 0:
                    free_line = False  # inconsistent at this x: not a zero
                    break
            if pinned is not None:
                out.append({x: xv, y: pinned})
            elif free_line:
                return None  # a whole line of zeros: stack more orders
        return [
            pt for pt in out
            if all(model_eval(model, names, pt) == 0 for model in models)
        ]

    def nonlinear_solve(r0: int, names):
        """Pin nonlinearly-coupled slots from orders r0, r0+1, ... jointly."""
        if len(names) > 2:
            raise NotAffine(
                f"{family}: nonlinear joint dependence on {names} at eps^{r0}"
            )
        others = [name for name in unsolved if name not in names]
        models = []
        candidates = None
        for r in range(r0, n_order + 1):
            for c in cs:
                base = coeff_at(r, solved, c)
                for name in others:
                    probe = dict(solved)
                    probe[name] = _Q(1)
                    if coeff_at(r, probe, c) != base:
                        raise UnderdeterminedSlots(
                            f"{family}: slot {name} becomes active at eps^{r} "
                            f"while {names} are still being solved jointly"
                        )

                def sample(assign, c=c, r=r):
                    trial = dict(solved)
                    trial.update(assign)
                    return coeff_at(r, trial, c)

                models.append(_quadratic_fit(sample, names, rng))
            if candidates is None:
                candidates = candidates_from(models, names)
            else:
                fresh = models[-len(cs):]
                candidates = [
                    pt for pt in candidates
                    if all(model_eval(model, names, pt) == 0 for model in fresh)
                ]
            if candidates is None:
                continue
            if not candidates:
                raise UnderdeterminedSlots(
                    f"{family}: orders eps^{r0}..eps^{r} cannot be annihilated "
                    f"jointly in {names}"
                )
            if len(candidates) == 1:
                point = candidates[0]
                trial = dict(solved)
                trial.update(point)
                for rr in range(r0, r + 1):
                    for c in cs:
                        assert coeff_at(rr, trial, c) == 0
                if any(
                    coeff_at(rr, trial, c) != 0
                    for rr in range(r0, r + 1)
                    for c in check_cs
                ):
                    raise UnderdeterminedSlots(
                        f"{family}: candidate for {names} fails held-out "
                        "bindings (degenerate sample; try another seed)"
                    )
                return point, r
        raise UnderdeterminedSlots(
            f"{family}: slots {names} not pinned by eps^{n_order}"
        )

    def holds_at(r: int, assign: dict) -> bool:
        return all(coeff_at(r, assign, c) == 0 for c in check_cs)

    r = 1
    while r <= n_order:
        if not unsolved:
            if all(coeff_at(r, solved, c) == 0 for c in cs) and holds_at(r, solved):
                last_annihilated = r
                r += 1
                continue
            break
        rows_per_binding = secant_rows(r)
        active = [
            i for i in range(len(unsolved))
            if any(slopes[i] != 0 for _, slopes in rows_per_binding)
        ]
        if not active:
            if any(base != 0 for base, _ in rows_per_binding) or not holds_at(r, solved):
                break  # order r cannot be annihilated: family order reached
            last_annihilated = r
            r += 1
            continue

        if affine_audit(r, active, rows_per_binding):
            rows = [
                ([slopes[i] for i in active], -base)
                for base, slopes in rows_per_binding
            ]
            status, values = _linear_solve(rows)
            if status == "inconsistent":
                break  # no slot values can zero this order: derivation complete
            if status == "underdetermined":
                raise UnderdeterminedSlots(
                    f"{family}: slots {[unsolved[i] for i in active]} "
                    f"underdetermined at eps^{r} with {n_bindings} bindings"
                )
            trial = dict(solved)
            for i, value in zip(active, values):
                trial[unsolved[i]] = value
            if not holds_at(r, trial):
                break  # solve was an artifact of degenerate bindings
            solved = trial
            unsolved = [name for name in unsolved if name not in solved]
            last_annihilated = r
            r += 1
            continue

        names = [unsolved[i] for i in active]
        point, r_end = nonlinear_solve(r, names)
        solved.update(point)
        unsolved = [name for name in unsolved if name not in solved]
        last_annihilated = r_end
        r = r_end + 1

    return ConditionReport(
        family=family,
        m=m,
        solved=solved,
        arbitrary=tuple(unsolved),
        annihilated_through=last_annihilated,
    )


def fam23_phi_conditions(m: int, *, seed: int = 0) -> dict:
    """Weight slot values (value, first, second derivative at t*) for the
    derivative-ratio two-point family, derived per multiplicity."""
    report = derive_conditions(
        "fam23_zhou",
        m,
        ["phi0", "phi1", "phi2"],
        fixed={"phi3": 0, "phi4": 0},
        seed=seed,
    )
    if set(report.solved) != {"phi0", "phi1", "phi2"}:
        raise UnderdeterminedSlots(f"weight derivation incomplete: {report}")
    return report.solved
