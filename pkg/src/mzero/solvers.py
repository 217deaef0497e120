"""Iteration families for zeros of known multiplicity, plus the solve driver.

Every family is exposed two ways: a bare one-step map (schroder_step,
step_two_point, ...) that takes explicit weights, and a MethodConfig consumed
by solve(), which validates weight conditions, runs the iteration with full
trace capture, and accounts for oracle evaluations.

All families touch f only through the ratios f(y)/f(x), f(z)/f(y),
f'(y)/f'(x) and the Newton correction f/f', so iterate sequences are
invariant under scaling f -> c*f.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import mpmath
from mpmath import mp

from . import weights as wmod
from .exprs import EvalDomainError, Oracle, derivative_oracle, oracle_for, parse
from .scalar import (DomainMode, NegativeEvenRadicand, ZeroDenominator,
                     ratio_power)
from .series import MultiplicityOne
from .weights import (MissingParam, UnspecifiedSlot, Weight1, Weight2,
                      WeightDomainError)


class ZeroDerivative(ZeroDivisionError):
    """The step's derivative-based denominator vanished away from a zero."""


class PoleHit(ArithmeticError):
    """A rational correction's denominator landed too close to its pole."""


class InadmissibleConfig(ValueError):
    """MethodConfig whose weights fail the family's conditions."""


class UnknownFamilyName(KeyError):
    pass


# --------------------------------------------------------------------- types


@dataclass
class Problem:
    """A zero-finding instance: oracles for f and f', known multiplicity m.

    known_root is for error tracking in traces and benchmarks only; the
    iteration never reads it.
    """

    f: Callable
    fprime: Callable
    m: int
    mode: DomainMode = DomainMode.REAL_SIGN_PRESERVING
    known_root: Optional[object] = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("multiplicity m must be >= 1")
        if isinstance(self.mode, str):
            self.mode = DomainMode(self.mode)
        if not isinstance(self.f, Oracle):
            self.f = Oracle(self.f, label="f")
        if not isinstance(self.fprime, Oracle):
            self.fprime = Oracle(self.fprime, label="f'")


def problem_from_text(text: str, m: int, *, mode="real", known_root=None,
                      fprime=None) -> Problem:
    """Build a Problem from an expression in x; f' is symbolic unless given."""
    node = parse(text)
    return Problem(oracle_for(node, label=text),
                   derivative_oracle(node, user_fn=fprime),
                   m, DomainMode(mode), known_root)


class StopReason(enum.Enum):
    RESIDUAL_TOL = "ResidualTol"
    STEP_TOL = "StepTol"
    MAX_ITER = "MaxIter"
    EXACT_ZERO = "ExactZero"
    DIVERGED = "Diverged"
    DOMAIN_ERROR = "DomainError"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class IterationRecord:
    x: object
    fx: object
    x_next: object
    y: object = None
    z: object = None
    u: object = None
    v: object = None
    w: object = None
    t: object = None
    err: object = None  # |x_next - known_root| when the root is known


@dataclass(frozen=True)
class Trace:
    family: str
    x0: object
    tol: object
    records: tuple
    stop_reason: StopReason
    root: object
    f_evals: int
    fprime_evals: int
    notes: tuple = ()

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def total_evals(self) -> int:
        return self.f_evals + self.fprime_evals

    def errors(self):
        return [r.err for r in self.records if r.err is not None]


@dataclass(frozen=True)
class FamilyInfo:
    name: str
    points: int            # n in the n-point optimality count
    evals_per_iter: int    # n + 1
    order: int             # with the family's conditions satisfied
    roles: tuple           # weight roles the config must bind
    requires: tuple = ()   # required params
    min_m: int = 1

    @property
    def optimal(self) -> bool:
        return self.order == 2 ** self.points


FAMILIES = {
    "schroder": FamilyInfo("schroder", 1, 2, 2, ()),
    "fam18_twopoint": FamilyInfo("fam18_twopoint", 2, 3, 4, ("P",)),
    "fam1_zhou": FamilyInfo("fam1_zhou", 2, 3, 4, ("G",)),
    "fam2_lee": FamilyInfo("fam2_lee", 2, 3, 4, ("W",)),
    "fam3_liu": FamilyInfo("fam3_liu", 2, 3, 4, ("G",), min_m=2),
    "fam12_PQ": FamilyInfo("fam12_PQ", 3, 4, 8, ("P", "Q")),
    "fam15b_HPGL": FamilyInfo("fam15b_HPGL", 3, 4, 8, ("H", "P", "G", "L")),
    "fam7b": FamilyInfo("fam7b", 3, 4, 8, ("H", "P", "G")),
    "fam22_li": FamilyInfo("fam22_li", 2, 3, 4, (), requires=("Rm",)),
    "fam23_zhou": FamilyInfo("fam23_zhou", 2, 3, 4, ("phi",)),
}


@dataclass
class MethodConfig:
    family: str
    weights: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    unverified: bool = False

    def info(self) -> FamilyInfo:
        try:
            return FAMILIES[self.family]
        except KeyError:
            raise UnknownFamilyName(self.family) from None

    def validate(self, m: int):
        """Check bound weights against the family's condition set.

        Returns the list of per-role CheckReports.  Raises InadmissibleConfig
        on a failing check unless the config is flagged unverified; missing
        roles and params raise regardless (there is nothing to run without
        them).
        """
        info = self.info()
        if m < info.min_m:
            raise MultiplicityOne(
                f"{self.family} requires multiplicity >= {info.min_m}")
        for role in info.roles:
            if role not in self.weights:
                raise InadmissibleConfig(
                    f"{self.family} needs a weight for role {role!r}")
        for pname in info.requires:
            if pname not in self.params:
                raise MissingParam(
                    f"{self.family} needs parameter {pname!r}")
        cs = wmod.CONDITION_SETS[self.family]
        ctx = {}
        for role in info.roles:
            ctx.update(wmod._declared_slots(self.weights[role], role))
        reports = []
        for role in info.roles:
            try:
                rep = wmod.check_conditions(self.weights[role], cs, m,
                                            role=role, context=ctx)
            except UnspecifiedSlot:
                if self.unverified:
                    continue
                raise
            reports.append(rep)
            if not rep.passed and not self.unverified:
                failing = [c.slot for c in rep.checks if not c.ok]
                raise InadmissibleConfig(
                    f"{self.family}: weight {self.weights[role].label} fails "
                    f"conditions {failing}; pass unverified=True to run anyway")
        return reports


# --------------------------------------------------------------- step bodies
#
# Core functions take (p, x, fx) with f(x) precomputed so the driver can reuse
# the residual it just tested; per-iteration oracle cost is then exactly the
# family's n+1.  They return (x_next, intermediates-dict).


def _check_den(d, what: str):
    if d == 0:
        raise ZeroDerivative(f"{what} is exactly zero")
    return d


def _core_schroder(p: Problem, x, fx):
    fpx = _check_den(p.fprime(x), "f'(x)")
    return x - p.m * (fx / fpx), {}


def _core_u_weight(p: Problem, x, fx, g: Callable, lam):
    """Shared two-step body: y by a (possibly lambda-shifted) corrected Newton
    step, then x_next = y - m*g(u)*f/(f'+2*lam*f)."""
    m = p.m
    fpx = p.fprime(x)
    d1 = fpx + lam * fx if lam != 0 else fpx
    _check_den(d1, "f'(x) + lam*f(x)" if lam != 0 else "f'(x)")
    newt = fx / d1
    y = x - m * newt
    fy = p.f(y)
    if fy == 0:
        return y, dict(y=y)
    u = ratio_power(fy, fx, m, p.mode.complex_mode)
    d2 = fpx + 2 * lam * fx if lam != 0 else fpx
    _check_den(d2, "f'(x) + 2*lam*f(x)" if lam != 0 else "f'(x)")
    return y - m * g(u) * (fx / d2), dict(y=y, u=u)


def _core_liu(p: Problem, x, fx, g: Callable):
    m = p.m
    fpx = _check_den(p.fprime(x), "f'(x)")
    newt = fx / fpx
    y = x - m * newt
    fpy = p.fprime(y)
    t = ratio_power(fpy, fpx, m - 1, p.mode.complex_mode)
    return y - m * g(t) * newt, dict(y=y, t=t)


def _first_two_points(p: Problem, x, fx):
    fpx = _check_den(p.fprime(x), "f'(x)")
    newt = fx / fpx
    y = x - p.m * newt
    fy = p.f(y)
    return newt, y, fy


def _core_pq(p: Problem, x, fx, P: Callable, Q: Callable, a1, a2):
    m = p.m
    newt, y, fy = _first_two_points(p, x, fx)
    if fy == 0:
        return y, dict(y=y)
    u = ratio_power(fy, fx, m, p.mode.complex_mode)
    h = u if (a1 == 1 and a2 == 0) else u / (a1 + a2 * u)
    z = y - m * (h * P(h)) * newt
    fz = p.f(z)
    if fz == 0:
        return z, dict(y=y, z=z, u=u)
    v = ratio_power(fz, fy, m, p.mode.complex_mode)
    return (z - m * (u * v * Q(u, v)) * newt,
            dict(y=y, z=z, u=u, v=v))


def _core_hpgl(p: Problem, x, fx, H, P, G, L):
    m = p.m
    newt, y, fy = _first_two_points(p, x, fx)
    if fy == 0:
        return y, dict(y=y)
    u = ratio_power(fy, fx, m, p.mode.complex_mode)
    z = y - m * (u * H(u)) * newt
    fz = p.f(z)
    if fz == 0:
        return z, dict(y=y, z=z, u=u)
    v = ratio_power(fz, fy, m, p.mode.complex_mode)
    w = u * v
    return (z - m * (u * P(u) * G(v) * L(w)) * newt,
            dict(y=y, z=z, u=u, v=v, w=w))


def _core_7b(p: Problem, x, fx, H, P, G):
    m = p.m
    newt, y, fy = _first_two_points(p, x, fx)
    if fy == 0:
        return y, dict(y=y)
    u = ratio_power(fy, fx, m, p.mode.complex_mode)
    z = y - m * (u * H(u)) * newt
    fz = p.f(z)
    if fz == 0:
        return z, dict(y=y, z=z, u=u)
    v = ratio_power(fz, fy, m, p.mode.complex_mode)
    uv = u * v
    return (z - m * (uv * (1 + 2 * uv) * P(u) * G(v)) * newt,
            dict(y=y, z=z, u=u, v=v, w=uv))


def _pole_threshold(x):
    if isinstance(x, (mpmath.mpf, mpmath.mpc)):
        return mpmath.mpf(2) ** (-(mp.prec // 4))
    if isinstance(x, Fraction):
        return 0
    return 2.0 ** -13


def _deriv_ratio_first_step(p: Problem, x, fx):
    """y = x - (2m/(m+2)) f/f', t = f'(y)/f'(x): the root-free prelude."""
    m = p.m
    fpx = _check_den(p.fprime(x), "f'(x)")
    newt = fx / fpx
    y = x - Fraction(2 * m, m + 2) * newt
    fpy = p.fprime(y)
    t = fpy / fpx
    return newt, y, t


def _core_li22(p: Problem, x, fx, Rm):
    m = p.m
    newt, y, t = _deriv_ratio_first_step(p, x, fx)
    Am = Fraction(m + 2, m) ** m
    den = 1 - Rm * t
    if abs(den) <= _pole_threshold(t):
        raise PoleHit(f"1 - Rm*t vanished (t = {t})")
    num = Fraction(m * (m - 2), 2) * Am * t - Fraction(m * m, 2)
    return x - (num / den) * newt, dict(y=y, t=t)


def _core_zhou23(p: Problem, x, fx, phi: Callable):
    m = p.m
    newt, y, t = _deriv_ratio_first_step(p, x, fx)
    s = t - Fraction(m, m + 2) ** (m - 1)
    return x - phi(s) * newt, dict(y=y, t=t)


# ----------------------------------------------------------- public step ops


def _one_shot(p: Problem, x, core, *args):
    xn, _ = core(p, x, p.f(x), *args)
    return xn


def schroder_step(p: Problem, x):
    """x - m*f(x)/f'(x); the m-corrected Newton step (Newton itself at m=1)."""
    return _one_shot(p, x, _core_schroder)


def step_two_point(p: Problem, x, P: Weight1, lam=0):
    """Two-point step with correction m*u*P(u); lam shifts the denominators
    to f'+lam*f and f'+2*lam*f."""
    return _one_shot(p, x, _core_u_weight, wmod.u_times(P), lam)


def step_g_weight(p: Problem, x, G: Weight1, lam=0):
    """Two-point step with correction m*G(u) (G(0)=0 shape)."""
    return _one_shot(p, x, _core_u_weight, G, lam)


def step_liu(p: Problem, x, G: Weight1):
    """Derivative-ratio two-point step, t = (f'(y)/f'(x))^(1/(m-1)).

    Hard m >= 2 requirement: the exponent degenerates at m = 1 and the
    construction breaks down for simple zeros.
    """
    if p.m < 2:
        raise MultiplicityOne("derivative-ratio family needs m >= 2")
    return _one_shot(p, x, _core_liu, G)


def step_three_point_PQ(p: Problem, x, P: Weight1, Q: Weight2, a1=1, a2=0):
    """Three-point step: z-line m*u*P(u), final line m*u*v*Q(u,v).

    a1, a2 reparameterize the z-line through h = u/(a1 + a2*u); the defaults
    leave h = u exactly.
    """
    return _one_shot(p, x, _core_pq, P, Q, a1, a2)


def step_three_point_HPGL(p: Problem, x, H: Weight1, P: Weight1,
                          G: Weight1, L: Weight1):
    """Three-point step with z-line m*u*H(u) and final line
    m*u*P(u)*G(v)*L(w), w = u*v."""
    return _one_shot(p, x, _core_hpgl, H, P, G, L)


def step_7b(p: Problem, x, H: Weight1, P: Weight1, G: Weight1):
    """Three-point step whose final correction is m*u*v*(1+2uv)*P(u)*G(v)."""
    return _one_shot(p, x, _core_7b, H, P, G)


def step_li22(p: Problem, x, Rm):
    """Root-free two-point step with the rational correction
    [m(m-2)/2*A_m*t - m^2/2]/(1 - Rm*t), A_m = ((m+2)/m)^m."""
    return _one_shot(p, x, _core_li22, Rm)


def step_zhou23(p: Problem, x, phi: Weight1):
    """Root-free two-point step x - phi(t - t*)*f/f'.

    phi is expressed around the fixed point t* = (m/(m+2))^(m-1) that
    t = f'(y)/f'(x) approaches at the root, so its declared Taylor data sits
    at argument 0 like every other weight.
    """
    return _one_shot(p, x, _core_zhou23, phi)


# -------------------------------------------------------------------- driver


_FALLBACK_P = wmod.builtin("truncated_P", {"beta": 0})


def _guarded(w: Weight1, notes: list, where: str) -> Callable:
    """Weight application with the documented pole fallback.

    A 1-shaped weight (w(0) = 1) that refuses an argument near its pole is
    replaced for that evaluation by truncated_P(0), which satisfies every
    1-shaped condition set in scope; the substitution is recorded in the
    trace notes.  0-shaped weights have no generic stand-in, so their pole
    errors propagate and stop the solve.
    """

    def apply(u):
        try:
            return w(u)
        except WeightDomainError as e:
            if w.derivs_at_0[0] == 1:
                notes.append(f"{where}: {e}; used truncated_P(0) instead")
                return _FALLBACK_P(u)
            raise

    return apply


def _build_step(p: Problem, cfg: MethodConfig, notes: list):
    fam = cfg.family
    ws, ps = cfg.weights, cfg.params
    if fam == "schroder":
        return lambda x, fx: _core_schroder(p, x, fx)
    if fam == "fam18_twopoint":
        inner = _guarded(ws["P"], notes, "P")

        def g(u, inner=inner):
            return u * inner(u)

        return lambda x, fx: _core_u_weight(p, x, fx, g, 0)
    if fam == "fam1_zhou":
        g = _guarded(ws["G"], notes, "G")
        return lambda x, fx: _core_u_weight(p, x, fx, g, 0)
    if fam == "fam2_lee":
        g = _guarded(ws["W"], notes, "W")
        lam = ps.get("lam", 0)
        return lambda x, fx: _core_u_weight(p, x, fx, g, lam)
    if fam == "fam3_liu":
        g = _guarded(ws["G"], notes, "G")
        return lambda x, fx: _core_liu(p, x, fx, g)
    if fam == "fam12_PQ":
        P = _guarded(ws["P"], notes, "P")
        Q = ws["Q"]
        a1, a2 = ps.get("a1", 1), ps.get("a2", 0)
        return lambda x, fx: _core_pq(p, x, fx, P, Q, a1, a2)
    if fam == "fam15b_HPGL":
        H = _guarded(ws["H"], notes, "H")
        P = _guarded(ws["P"], notes, "P")
        G = _guarded(ws["G"], notes, "G")
        L = _guarded(ws["L"], notes, "L")
        return lambda x, fx: _core_hpgl(p, x, fx, H, P, G, L)
    if fam == "fam7b":
        H = _guarded(ws["H"], notes, "H")
        P = _guarded(ws["P"], notes, "P")
        G = _guarded(ws["G"], notes, "G")
        return lambda x, fx: _core_7b(p, x, fx, H, P, G)
    if fam == "fam22_li":
        return lambda x, fx: _core_li22(p, x, fx, ps["Rm"])
    if fam == "fam23_zhou":
        phi = _guarded(ws["phi"], notes, "phi")
        return lambda x, fx: _core_zhou23(p, x, fx, phi)
    raise UnknownFamilyName(fam)


def _precision_bits(x) -> Optional[int]:
    if isinstance(x, (mpmath.mpf, mpmath.mpc)):
        return mp.prec
    if isinstance(x, Fraction):
        return None  # exact arithmetic: tolerances are meaningless
    return 53


def default_tolerance(x0):
    """2^(-4*prec/5) at the iterate's precision; 0 for exact arithmetic.

    Four fifths of the working precision leaves an order-8 method a final
    full step inside the tolerance without demanding the unreachable last
    few bits.
    """
    bits = _precision_bits(x0)
    if bits is None:
        return 0
    t = Fraction(4 * bits, 5)
    if bits == 53:
        return 2.0 ** -float(t)
    return mpmath.mpf(2) ** (-t)


def solve(p: Problem, cfg: MethodConfig, x0, tol=None, max_iter: int = 60) -> Trace:
    """Iterate cfg's family from x0 until residual, step, or safety stop.

    Stops on |f(x)| < tol, |step| < tol, an exact zero of f, max_iter,
    two consecutive iterations with the residual growing a million-fold, or
    a domain error inside a step (recorded in the notes with its location).
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if tol is None:
        tol = default_tolerance(x0)
    elif not (tol >= 0):
        raise ValueError("tol must be nonnegative")
    cfg.validate(p.m)

    notes: list = []
    step = _build_step(p, cfg, notes)
    f0, fp0 = p.f.count, p.fprime.count

    def finish(records, reason, root):
        return Trace(cfg.family, x0, tol, tuple(records), reason, root,
                     p.f.count - f0, p.fprime.count - fp0, tuple(notes))

    x = x0
    fx = p.f(x)
    records: list = []
    if fx == 0:
        return finish(records, StopReason.EXACT_ZERO, x)

    grew = 0
    for k in range(max_iter):
        try:
            xn, inter = step(x, fx)
        except ZeroDenominator:
            # the ratio's denominator is f at the previous point: that point
            # is itself an exact zero, which is a success, not a failure
            return finish(records, StopReason.EXACT_ZERO, x)
        except (ZeroDerivative, NegativeEvenRadicand, PoleHit,
                WeightDomainError, EvalDomainError, MultiplicityOne) as e:
            notes.append(f"iteration {k}: {type(e).__name__}: {e}")
            return finish(records, StopReason.DOMAIN_ERROR, x)
        fxn = p.f(xn)
        err = None if p.known_root is None else abs(xn - p.known_root)
        records.append(IterationRecord(x=x, fx=fx, x_next=xn, err=err, **inter))
        if fxn == 0:
            return finish(records, StopReason.EXACT_ZERO, xn)
        if abs(fxn) < tol:
            return finish(records, StopReason.RESIDUAL_TOL, xn)
        if abs(xn - x) < tol:
            return finish(records, StopReason.STEP_TOL, xn)
        grew = grew + 1 if abs(fxn) > 10**6 * abs(fx) else 0
        if grew >= 2:
            return finish(records, StopReason.DIVERGED, xn)
        x, fx = xn, fxn
    return finish(records, StopReason.MAX_ITER, x)


# ------------------------------------------------------------ default configs


def default_config(family: str, m: int, **params) -> MethodConfig:
    """Simplest admissible weights for the family at multiplicity m.

    Polynomial weights matching the family's condition set with every free
    slot taken as zero (so e.g. the two-step weight is just 1 + 2u).  The
    root-free rational family takes no default Rm; pass it explicitly.
    """
    if family not in FAMILIES:
        raise UnknownFamilyName(family)
    pw = wmod.polynomial_weight
    w: dict = {}
    if family == "fam18_twopoint":
        w["P"] = pw([1, 2], "1+2u")
    elif family == "fam1_zhou":
        w["G"] = pw([0, 1, 2], "u+2u^2")
    elif family == "fam2_lee":
        w["W"] = pw([0, 1, 2], "u+2u^2")
        params.setdefault("lam", 0)
    elif family == "fam3_liu":
        if m < 2:
            raise MultiplicityOne("derivative-ratio family needs m >= 2")
        w["G"] = pw([0, 1, Fraction(2 * m, m - 1)], "t+(2m/(m-1))t^2")
    elif family == "fam12_PQ":
        w["P"] = wmod.builtin("truncated_P", {"beta": 0})
        w["Q"] = wmod.builtin2("truncated_Q", {"beta": 0})
    elif family == "fam15b_HPGL":
        w["H"] = pw([1, 2], "1+2u")
        w["P"] = pw([1, 2, 1, -4], "1+2u+u^2-4u^3")
        w["G"] = pw([0, 1, 1], "v+v^2")
        w["L"] = pw([1, 2], "1+2w")
    elif family == "fam7b":
        w["H"] = pw([1, 2, Fraction(m + 9, 2)], "1+2u+(m+9)/2 u^2")
        w["P"] = pw([1, 2, Fraction(m + 11, 2), 5 + m],
                    "1+2u+(m+11)/2 u^2+(5+m)u^3")
        w["G"] = pw([1, 1], "1+v")
    elif family == "fam23_zhou":
        a = Fraction(m + 2, m) ** m
        w["phi"] = pw([m, -a * m**3 / 4, a**2 * m**4 / 8],
                      "quadratic in t-t*")
    return MethodConfig(family, w, params)
