"""Weight functions with declared Taylor data at the expansion point.

A weight is an evaluator plus the derivative values the convergence theory
constrains: [w(0), w'(0), w''(0), w'''(0)] for univariate weights and the six
partials through second order for the bivariate final-step weights.  The
metadata is declared, not differentiated numerically, so condition checks are
exact algebra; a finite-difference audit (verify_metadata) ties the declared
values back to the evaluator.

Rational builtins carry their exact pole set and refuse to evaluate closer to
a pole than 2^(-precision/4), since an iterate that near a pole produces
garbage correction terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import mpmath
from mpmath import mp

from .scalar import to_mp, working_precision

UNSPECIFIED = None


class UnknownWeight(KeyError):
    pass


class MissingParam(KeyError):
    pass


class UnspecifiedSlot(LookupError):
    """A condition references a derivative the weight never declared."""


class WeightDomainError(ArithmeticError):
    """Evaluation point within the guard distance of a weight pole."""


def _precision_of(x) -> int:
    if isinstance(x, (mpmath.mpf, mpmath.mpc)):
        return mp.prec
    if isinstance(x, Fraction):
        return 0  # exact: only a direct pole hit matters
    return 53


def _abs_any(x):
    if isinstance(x, (mpmath.mpf, mpmath.mpc)):
        return abs(x)
    if isinstance(x, Fraction):
        return abs(x)
    return abs(complex(x)) if isinstance(x, complex) else abs(float(x))


@dataclass(frozen=True)
class Weight1:
    """Univariate weight with declared [w(0), w'(0), w''(0), w'''(0)].

    Entries of ``derivs_at_0`` may be UNSPECIFIED (None) when a builtin or
    user weight makes no claim about that derivative.  ``metadata_exact``
    distinguishes closed-form metadata from finite-difference estimates.
    """

    label: str
    evaluator: Callable
    derivs_at_0: tuple
    poles: tuple = ()
    metadata_exact: bool = True

    def __post_init__(self):
        if len(self.derivs_at_0) != 4:
            raise ValueError("derivs_at_0 must have exactly 4 entries")

    def __call__(self, u):
        self.guard(u)
        return self.evaluator(u)

    def guard(self, u):
        if not self.poles:
            return
        prec = _precision_of(u)
        for pole in self.poles:
            if isinstance(u, Fraction):
                if not isinstance(pole, (int, Fraction)):
                    continue
                if u == pole:
                    raise WeightDomainError(f"{self.label}: argument is a pole")
                continue
            dist = _abs_any(u - to_mp(pole) if isinstance(
                u, (mpmath.mpf, mpmath.mpc)) else u - pole)
            if dist < mpmath.mpf(2) ** (-(prec // 4)):
                raise WeightDomainError(
                    f"{self.label}: argument within 2^-{prec // 4} of pole {pole}"
                )

    def slot(self, k: int):
        v = self.derivs_at_0[k]
        if v is UNSPECIFIED:
            raise UnspecifiedSlot(f"{self.label} declares no derivative {k} at 0")
        return v


@dataclass(frozen=True)
class Weight2:
    """Bivariate weight with declared partials
    [Q(0,0), Q_u(0,0), Q_v(0,0), Q_uu(0,0), Q_uv(0,0), Q_vv(0,0)]."""

    label: str
    evaluator: Callable
    partials_at_00: tuple
    poles: tuple = ()
    metadata_exact: bool = True

    PARTIAL_NAMES = ("00", "u0", "0v", "uu", "uv", "vv")

    def __post_init__(self):
        if len(self.partials_at_00) != 6:
            raise ValueError("partials_at_00 must have exactly 6 entries")

    def __call__(self, u, v):
        return self.evaluator(u, v)

    def slot(self, k: int):
        val = self.partials_at_00[k]
        if val is UNSPECIFIED:
            raise UnspecifiedSlot(
                f"{self.label} declares no partial {self.PARTIAL_NAMES[k]}"
            )
        return val


# ------------------------------------------------------------------- builtins


def _need(params: dict, *names):
    out = []
    for n in names:
        if n not in params:
            raise MissingParam(f"weight parameter {n!r} is required")
        v = params[n]
        out.append(v if isinstance(v, Fraction) else Fraction(v))
    return out


def _f4(a, b, c, d):
    return (Fraction(a), Fraction(b), Fraction(c), Fraction(d))


def polynomial_weight(coeffs: Sequence, label: str) -> Weight1:
    """Weight from Taylor coefficients c0 + c1 u + c2 u^2 + c3 u^3."""
    cs = [Fraction(c) for c in coeffs]
    while len(cs) < 4:
        cs.append(Fraction(0))
    if len(cs) > 4:
        raise ValueError("polynomial weights stop at degree 3")

    def ev(u, cs=tuple(cs)):
        acc = u * 0 + cs[3]
        for c in (cs[2], cs[1], cs[0]):
            acc = acc * u + c
        return acc

    return Weight1(label, ev, _f4(cs[0], cs[1], 2 * cs[2], 6 * cs[3]))


def builtin(name: str, params: Optional[dict] = None) -> Weight1:
    """Named weights from the published two- and three-point families."""
    params = params or {}
    if name == "king":
        (beta,) = _need(params, "beta")

        def ev(u, b=beta):
            return (1 + b * u) / (1 + (b - 2) * u)

        return Weight1(f"king(beta={beta})", ev,
                       _f4(1, 2, 8 - 4 * beta, 12 * (beta - 2) ** 2),
                       poles=() if beta == 2 else (1 / (2 - beta),))
    if name == "binomial":
        (r,) = _need(params, "r")
        if r == 0:
            raise MissingParam("binomial weight needs r != 0")

        def ev(u, r=r):
            base = 1 + 2 * u / r
            fractional = r.denominator != 1
            if not fractional:
                return base ** int(r)
            if isinstance(base, mpmath.mpf) and base < 0 and fractional:
                raise WeightDomainError("binomial: negative base, fractional power")
            if isinstance(base, (mpmath.mpf, mpmath.mpc)):
                return base ** to_mp(r)
            if isinstance(base, complex):
                return base ** complex(r)
            if isinstance(base, float) and base < 0 and fractional:
                raise WeightDomainError("binomial: negative base, fractional power")
            return base ** float(r)

        poles = (-r / 2,) if r < 0 else ()
        return Weight1(f"binomial(r={r})", ev,
                       _f4(1, 2, Fraction(4 * (r - 1), 1) / r,
                           Fraction(8) * (r - 1) * (r - 2) / r**2),
                       poles=poles)
    if name == "rational_gamma":
        (gamma,) = _need(params, "gamma")

        def ev(u, g=gamma):
            return (1 + g * u * u) / (1 - 2 * u)

        return Weight1(f"rational_gamma(gamma={gamma})", ev,
                       _f4(1, 2, 2 * (4 + gamma), 6 * (8 + 2 * gamma)),
                       poles=(Fraction(1, 2),))
    if name == "rational_a":
        (a,) = _need(params, "a")

        def ev(u, a=a):
            return 1 / (1 - 2 * u + a * u * u)

        if a == 0:
            poles = (Fraction(1, 2),)
        else:
            disc = 1 - a
            if disc >= 0:
                root = math.sqrt(float(disc))
                poles = ((1 - root) / float(a), (1 + root) / float(a))
            else:
                root = math.sqrt(float(-disc))
                poles = (complex(1 / float(a), -root / float(a)),
                         complex(1 / float(a), root / float(a)))
        return Weight1(f"rational_a(a={a})", ev,
                       _f4(1, 2, 2 * (4 - a), 6 * (8 - 4 * a)), poles=poles)
    if name == "rational_c":
        (c,) = _need(params, "c")

        def ev(u, c=c):
            return (u * u + (c - 2) * u - 1) / (c * u - 1)

        poles = (1 / c,) if c != 0 else ()
        return Weight1(f"rational_c(c={c})", ev,
                       _f4(1, 2, 2 * (2 * c - 1), 6 * (2 * c * c - c)),
                       poles=poles)
    if name == "truncated_P":
        (beta,) = _need(params, "beta")
        return polynomial_weight([1, 2, beta, 4 - 2 * beta],
                                 f"truncated_P(beta={beta})")
    if name == "linear_B":
        b1, b2 = _need(params, "B1", "B2")
        return polynomial_weight([b1, b2], f"linear_B({b1},{b2})")
    if name == "W_lee":
        c, r = _need(params, "c", "r")

        def ev(u, c=c, r=r):
            return u * (1 + (c + 2) * u + r * u * u) / (1 + c * u)

        poles = (-1 / c,) if c != 0 else ()
        return Weight1(f"W_lee(c={c},r={r})", ev,
                       _f4(0, 1, 4, 6 * (r - 2 * c)), poles=poles)
    raise UnknownWeight(name)


def builtin2(name: str, params: Optional[dict] = None) -> Weight2:
    """Bivariate final-step weights."""
    params = params or {}
    if name == "truncated_Q":
        (beta,) = _need(params, "beta")

        def ev(u, v, b=beta):
            return 1 + 2 * u + v + 4 * u * v + (b + 1) * u * u

        return Weight2(f"truncated_Q(beta={beta})", ev,
                       (Fraction(1), Fraction(2), Fraction(1),
                        2 * (beta + 1), Fraction(4), Fraction(0)))
    raise UnknownWeight(name)


# ---------------------------------------------------------------- conditions


@dataclass(frozen=True)
class Condition:
    slot: str
    formula: str
    value: Callable  # (m, ctx: dict) -> Fraction
    uses: tuple = ()


@dataclass(frozen=True)
class ConditionSet:
    family: str
    conditions: tuple

    def slots(self):
        return tuple(c.slot for c in self.conditions)


def _const(q):
    q = Fraction(q)
    return lambda m, ctx: q


def _suggested_pole_weight_slots(m: int):
    a = Fraction(m + 2, m) ** m
    return (Fraction(m), -a * m**3 / 4, a**2 * m**4 / 4)


CONDITION_SETS = {
    "schroder": ConditionSet("schroder", ()),
    "fam18_twopoint": ConditionSet("fam18_twopoint", (
        Condition("P0", "1", _const(1)),
        Condition("P1", "2", _const(2)),
    )),
    "fam1_zhou": ConditionSet("fam1_zhou", (
        Condition("G0", "0", _const(0)),
        Condition("G1", "1", _const(1)),
        Condition("G2", "4", _const(4)),
    )),
    "fam2_lee": ConditionSet("fam2_lee", (
        Condition("W0", "0", _const(0)),
        Condition("W1", "1", _const(1)),
        Condition("W2", "4", _const(4)),
    )),
    "fam3_liu": ConditionSet("fam3_liu", (
        Condition("G0", "0", _const(0)),
        Condition("G1", "1", _const(1)),
        Condition("G2", "4m/(m-1)", lambda m, ctx: Fraction(4 * m, m - 1)),
    )),
    "fam12_PQ": ConditionSet("fam12_PQ", (
        Condition("P0", "1", _const(1)),
        Condition("P1", "2", _const(2)),
        Condition("P3", "24 - 6*P2", lambda m, ctx: 24 - 6 * ctx["P2"], ("P2",)),
        Condition("Q00", "1", _const(1)),
        Condition("Qu0", "2", _const(2)),
        Condition("Q0v", "1", _const(1)),
        Condition("Quu", "P2 + 2", lambda m, ctx: ctx["P2"] + 2, ("P2",)),
        Condition("Quv", "4", _const(4)),
    )),
    "fam15b_HPGL": ConditionSet("fam15b_HPGL", (
        Condition("H0", "1", _const(1)),
        Condition("H1", "2", _const(2)),
        Condition("P1", "2*P0", lambda m, ctx: 2 * ctx["P0"], ("P0",)),
        Condition("P2", "P0*(2 + H2)",
                  lambda m, ctx: ctx["P0"] * (2 + ctx["H2"]), ("P0", "H2")),
        Condition("P3", "P0*(H3 + 6*H2 - 24)",
                  lambda m, ctx: ctx["P0"] * (ctx["H3"] + 6 * ctx["H2"] - 24),
                  ("P0", "H2", "H3")),
        Condition("L1", "2*L0", lambda m, ctx: 2 * ctx["L0"], ("L0",)),
        Condition("G0", "0", _const(0)),
        Condition("G1", "1/(L0*P0)",
                  lambda m, ctx: 1 / (ctx["L0"] * ctx["P0"]), ("L0", "P0")),
        Condition("G2", "2/(L0*P0)",
                  lambda m, ctx: 2 / (ctx["L0"] * ctx["P0"]), ("L0", "P0")),
    )),
    "fam7b": ConditionSet("fam7b", (
        Condition("H0", "1", _const(1)),
        Condition("H1", "2", _const(2)),
        Condition("H2", "m + 9", lambda m, ctx: Fraction(m + 9)),
        Condition("P0", "1", _const(1)),
        Condition("P1", "2", _const(2)),
        Condition("P2", "m + 11", lambda m, ctx: Fraction(m + 11)),
        Condition("P3", "30 + 6*m + H3",
                  lambda m, ctx: 30 + 6 * m + ctx["H3"], ("H3",)),
        Condition("G0", "1", _const(1)),
        Condition("G1", "1", _const(1)),
    )),
    "fam22_li": ConditionSet("fam22_li", ()),
    "fam23_zhou": ConditionSet("fam23_zhou", (
        Condition("phi0", "m", lambda m, ctx: Fraction(m)),
        Condition("phi1", "-((m+2)/m)^m * m^3/4",
                  lambda m, ctx: _suggested_pole_weight_slots(m)[1]),
        Condition("phi2", "((m+2)/m)^(2m) * m^4/4",
                  lambda m, ctx: _suggested_pole_weight_slots(m)[2]),
    )),
}


_W1_SLOT_INDEX = {"0": 0, "1": 1, "2": 2, "3": 3}
_W2_SLOT_INDEX = {"00": 0, "u0": 1, "0v": 2, "uu": 3, "uv": 4, "vv": 5}


def _declared_slots(w, prefix: str) -> dict:
    out = {}
    if isinstance(w, Weight1):
        for suffix, idx in _W1_SLOT_INDEX.items():
            v = w.derivs_at_0[idx]
            if v is not UNSPECIFIED:
                out[prefix + suffix] = v
    else:
        for suffix, idx in _W2_SLOT_INDEX.items():
            v = w.partials_at_00[idx]
            if v is not UNSPECIFIED:
                out[prefix + suffix] = v
    return out


@dataclass(frozen=True)
class SlotCheck:
    slot: str
    formula: str
    required: object
    declared: object
    ok: bool


@dataclass(frozen=True)
class CheckReport:
    family: str
    m: int
    role: str
    checks: tuple
    approximate: bool

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)


def check_conditions(w, cs: ConditionSet, m: int, *, role: Optional[str] = None,
                     context: Optional[dict] = None) -> CheckReport:
    """Check one weight's declared metadata against a family condition set.

    ``role`` is the slot prefix the weight plays ("P", "H", "Q", ...); it can
    be omitted when the condition set constrains a single prefix.  ``context``
    supplies slot values of the family's other weights for cross-weight
    conditions (e.g. the final-step second partial tracking the first-step
    weight's second derivative).
    """
    if m < 1:
        raise ValueError("multiplicity must be >= 1")
    if role is None:
        roles = sorted({_slot_prefix(c.slot) for c in cs.conditions})
        if len(roles) > 1:
            raise ValueError(
                f"{cs.family} constrains {roles}; pass role= to pick one"
            )
        role = roles[0] if roles else ""
    declared = _declared_slots(w, role)
    ctx = dict(declared)
    if context:
        ctx.update(context)

    checks = []
    approximate = not w.metadata_exact
    for cond in cs.conditions:
        if _slot_prefix(cond.slot) != role:
            continue
        for need in cond.uses:
            if need not in ctx:
                raise UnspecifiedSlot(
                    f"condition {cond.slot} = {cond.formula} needs {need}; "
                    "pass it via context or declare it on the weight"
                )
        if cond.slot not in declared:
            raise UnspecifiedSlot(
                f"{w.label} declares no value for {cond.slot}"
            )
        required = cond.value(m, ctx)
        have = declared[cond.slot]
        if w.metadata_exact and isinstance(have, (int, Fraction)):
            ok = Fraction(have) == required
        else:
            ok = abs(to_mp(have) - to_mp(required)) < mpmath.mpf(2) ** -40
        checks.append(SlotCheck(cond.slot, cond.formula, required, have, ok))
    return CheckReport(cs.family, m, role, tuple(checks), approximate)


def _slot_prefix(slot: str) -> str:
    i = len(slot)
    while i > 0 and slot[i - 1] in "0123456789uv":
        i -= 1
    # phi0 ends with 'i'? no: strip digits/uv suffixes only; phi keeps 'phi'
    return slot[:i] if i else slot


# ----------------------------------------------------- metadata verification


_D1_STENCIL = ((-2, Fraction(1, 12)), (-1, Fraction(-8, 12)),
               (1, Fraction(8, 12)), (2, Fraction(-1, 12)))
_D2_STENCIL = ((-2, Fraction(-1, 12)), (-1, Fraction(16, 12)),
               (0, Fraction(-30, 12)), (1, Fraction(16, 12)),
               (2, Fraction(-1, 12)))
_D3_STENCIL = ((-3, Fraction(1, 8)), (-2, Fraction(-8, 8)),
               (-1, Fraction(13, 8)), (1, Fraction(-13, 8)),
               (2, Fraction(8, 8)), (3, Fraction(-1, 8)))


@dataclass(frozen=True)
class MetadataCheck:
    slot: str
    declared: object
    measured: object
    ok: bool


def verify_metadata(w, *, bits: int = 512, step_exp: int = -48,
                    rel_tol_exp: int = -120):
    """Audit declared Taylor data against 4th-order central differences.

    Returns a list of MetadataCheck, one per declared entry.  The defaults
    (512-bit arithmetic, h = 2^-48, relative tolerance 2^-120) keep stencil
    truncation near 2^-165 even when seventh derivatives reach 2^26, and
    rounding noise near 2^-368, so correct declarations pass with a wide
    margin while a wrong value at any checked order lands far outside it.
    """
    out = []
    with working_precision(bits):
        h = mpmath.mpf(2) ** step_exp
        tol = mpmath.mpf(2) ** rel_tol_exp

        def close(a, b):
            scale = max(abs(a), abs(b), mpmath.mpf(1))
            return abs(a - b) <= tol * scale

        if isinstance(w, Weight1):
            names = ("w(0)", "w'(0)", "w''(0)", "w'''(0)")
            vals = {}
            for off in range(-3, 4):
                vals[off] = w.evaluator(h * off)
            measured = [
                vals[0],
                sum(c * vals[o] for o, c in _D1_STENCIL) / h,
                sum(c * vals[o] for o, c in _D2_STENCIL) / h**2,
                sum(c * vals[o] for o, c in _D3_STENCIL) / h**3,
            ]
            for name, declared, got in zip(names, w.derivs_at_0, measured):
                if declared is UNSPECIFIED:
                    continue
                out.append(MetadataCheck(name, declared, got,
                                         bool(close(to_mp(declared), got))))
        else:
            grid = {}
            for i in range(-2, 3):
                for j in range(-2, 3):
                    grid[(i, j)] = w.evaluator(h * i, h * j)
            measured = [
                grid[(0, 0)],
                sum(c * grid[(o, 0)] for o, c in _D1_STENCIL) / h,
                sum(c * grid[(0, o)] for o, c in _D1_STENCIL) / h,
                sum(c * grid[(o, 0)] for o, c in _D2_STENCIL) / h**2,
                sum(ci * cj * grid[(oi, oj)]
                    for oi, ci in _D1_STENCIL for oj, cj in _D1_STENCIL) / h**2,
                sum(c * grid[(0, o)] for o, c in _D2_STENCIL) / h**2,
            ]
            for name, declared, got in zip(Weight2.PARTIAL_NAMES,
                                           w.partials_at_00, measured):
                if declared is UNSPECIFIED:
                    continue
                out.append(MetadataCheck("Q_" + name, declared, got,
                                         bool(close(to_mp(declared), got))))
    return out


def u_times(p: Weight1, label: Optional[str] = None) -> Weight1:
    """The weight u -> u*P(u), with metadata transformed accordingly.

    This is the bridge between the two equivalent two-step writings: a method
    stated with correction m*u*P(u) and one stated with m*G(u) coincide under
    G(u) = u*P(u).  The evaluator multiplies in exactly that order, so both
    spellings produce bit-identical iterates.
    """
    d = p.derivs_at_0
    derivs = (Fraction(0),
              d[0] if d[0] is not UNSPECIFIED else UNSPECIFIED,
              2 * d[1] if d[1] is not UNSPECIFIED else UNSPECIFIED,
              3 * d[2] if d[2] is not UNSPECIFIED else UNSPECIFIED)

    def ev(u, inner=p.evaluator):
        return u * inner(u)

    return Weight1(label or f"u*{p.label}", ev, derivs, poles=p.poles,
                   metadata_exact=p.metadata_exact)


# ----------------------------------------------------------- user expressions


def from_expression(text: str, *, bits: int = 512, label: Optional[str] = None) -> Weight1:
    """Weight from an expression in x; Taylor data measured, not declared.

    The metadata comes from the same central-difference stencils as
    verify_metadata, so condition checks against such weights are
    approximate and their reports say so.
    """
    from . import exprs

    node = exprs.parse(text)

    def ev(u, node=node):
        return exprs.evaluate(node, u)

    with working_precision(bits):
        h = mpmath.mpf(2) ** -48
        vals = {off: ev(h * off) for off in range(-3, 4)}
        derivs = (
            vals[0],
            sum(c * vals[o] for o, c in _D1_STENCIL) / h,
            sum(c * vals[o] for o, c in _D2_STENCIL) / h**2,
            sum(c * vals[o] for o, c in _D3_STENCIL) / h**3,
        )
    return Weight1(label or f"expr({text})", ev, derivs, metadata_exact=False)
