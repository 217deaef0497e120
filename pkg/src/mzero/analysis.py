"""Empirical convergence-order estimation on a high-precision corpus.

The series engine proves orders exactly; this module closes the loop by
measuring them in floating point.  COC here is the standard three-error
quotient ln(e_{k+1}/e_k) / ln(e_k/e_{k-1}), computed only where all three
errors sit between the precision floor and 1 -- outside that band the
quotient measures rounding, not convergence.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import mpmath
from mpmath import mp

from . import exprs, solvers
from .scalar import DomainMode, working_precision
from .series import MultiplicityOne, fam22_suggested_rm


class InsufficientData(ValueError):
    """Too few usable errors for an order estimate."""


@dataclass(frozen=True)
class CocReport:
    rhos: tuple          # per-step estimates, one per usable error triple
    final: object        # last stable estimate
    steps_used: int

    def __iter__(self):
        return iter(self.rhos)


def _order_quotients(errors, floor=0):
    """COC quotients from an error sequence, skipping floor/overflow zones."""
    usable = []
    for e in errors:
        a = abs(e)
        usable.append(a if floor < a < 1 else None)
    rhos = []
    for i in range(2, len(usable)):
        trio = usable[i - 2], usable[i - 1], usable[i]
        if any(t is None for t in trio):
            continue
        e0, e1, e2 = trio
        if e1 == e0 or e1 >= e0:
            continue
        rhos.append(mpmath.log(e2 / e1) / mpmath.log(e1 / e0))
    return rhos


def coc_from_errors(errors, floor=0) -> CocReport:
    """Order estimate from a raw error sequence.

    ``floor`` drops entries that sit at or below the run's resolution; a
    synthetic sequence has none, a solver trace supplies its own (see
    coc_estimate).
    """
    rhos = _order_quotients(errors, floor)
    if not rhos:
        raise InsufficientData(
            "need three consecutive errors between the resolution floor and 1")
    return CocReport(tuple(rhos), rhos[-1], len(rhos) + 2)


def _trace_floor(t):
    # tol defaults to 2^(-4*prec/5), so tol^(5/4) recovers 2^-prec; a few
    # bits of slack keep the last honest error in play
    if not t.tol:
        return 0
    return t.tol ** 1.25 * 16


def coc_estimate(t: "solvers.Trace", alpha) -> CocReport:
    """Convergence order from a trace and the known root.

    Uses the full iterate chain x0, x1, ... so n iterations give n+1 errors
    and up to n-1 quotients.  Errors at or below the trace's resolution
    (derived from its tolerance) are excluded.
    """
    if not t.records:
        raise InsufficientData("trace holds no iterations")
    errors = [abs(t.records[0].x - alpha)]
    errors += [abs(r.x_next - alpha) for r in t.records]
    return coc_from_errors(errors, _trace_floor(t))


def acoc_estimate(t: "solvers.Trace") -> CocReport:
    """Root-free order estimate from successive step sizes.

    Secondary estimator for functions without a known root; step sizes track
    errors one index behind, so the quotient converges to the same limit.
    """
    if len(t.records) < 3:
        raise InsufficientData("need at least three iterations")
    diffs = [abs(r.x_next - r.x) for r in t.records]
    return coc_from_errors(diffs, _trace_floor(t))


# -------------------------------------------------------------------- corpus


@dataclass(frozen=True)
class CorpusEntry:
    text: str
    root: object
    m: int
    x0: object
    mode: DomainMode = DomainMode.REAL_SIGN_PRESERVING
    label: str = ""

    def problem(self, known_root=True) -> "solvers.Problem":
        return solvers.problem_from_text(
            self.text, self.m, mode=self.mode,
            known_root=self.root if known_root else None)


def corpus_default():
    """Test functions with known roots and stated multiplicities."""
    real = DomainMode.REAL_SIGN_PRESERVING
    cplx = DomainMode.COMPLEX_PRINCIPAL
    entries = []
    for m in (2, 3, 5):
        entries.append(CorpusEntry(f"(x-1)^{m}*exp(x)", Fraction(1), m,
                                   Fraction(11, 10), real,
                                   f"(x-1)^{m} e^x"))
    for m in (2, 4):
        entries.append(CorpusEntry(f"(x-2)^{m}*(x+3)", Fraction(2), m,
                                   Fraction(21, 10), real,
                                   f"(x-2)^{m}(x+3)"))
    for m in (2, 3):
        entries.append(CorpusEntry(f"(x^2+1)^{m}", 1j, m,
                                   complex(0.1, 1.1), cplx,
                                   f"(x^2+1)^{m}"))
    entries.append(CorpusEntry("x^2-4", Fraction(2), 1, Fraction(21, 10),
                               real, "x^2-4"))
    return entries


def multiplicity_check(entry: CorpusEntry, bits: int = 256) -> bool:
    """Verify f and its first m-1 derivatives vanish at the root, f^(m) not.

    Derivatives are symbolic (exact node differentiation); only the
    evaluation is floating point, so the tolerance 2^(-bits/2) is far above
    anything a genuine zero can leave behind.
    """
    node = exprs.parse(entry.text)
    with working_precision(bits):
        if entry.mode.complex_mode:
            alpha = mpmath.mpc(entry.root)
        else:
            alpha = (mpmath.mpf(entry.root.numerator) / entry.root.denominator
                     if isinstance(entry.root, Fraction)
                     else mpmath.mpf(entry.root))
        vals = []
        for k in range(entry.m + 1):
            vals.append(abs(exprs.evaluate(node, alpha)))
            node = exprs.differentiate(node)
        scale = max(vals[entry.m], mpmath.mpf(1))
        tol = scale * mpmath.mpf(2) ** (-(bits // 2))
        return all(v < tol for v in vals[:entry.m]) and vals[entry.m] > tol


# -------------------------------------------------------------- optimality


def optimality_report(cfg: "solvers.MethodConfig") -> dict:
    """Evaluation-count arithmetic for the family: n-point, n+1 evaluations
    per iteration, order 2^n is the optimality bound."""
    info = cfg.info()
    return {
        "family": info.name,
        "points": info.points,
        "evals_per_iter": info.evals_per_iter,
        "order": info.order,
        "kung_traub_bound": 2 ** info.points,
        "optimal": info.optimal,
        "efficiency_index": info.order ** (1.0 / info.evals_per_iter),
    }


# ---------------------------------------------------------------- reporting


def _as_float(x):
    try:
        return float(abs(x))
    except (TypeError, OverflowError):
        return None


def run_corpus_entry(family: str, entry: CorpusEntry, bits: int = 2048,
                     max_iter: int = 60, params: Optional[dict] = None) -> dict:
    """One (family, corpus entry) run, reported as a JSON-able row.

    Families that reject the entry (simple-zero rejection, missing
    parameters) produce a row with the rejection named instead of a crash.
    """
    row = {
        "family": family,
        "entry": entry.label or entry.text,
        "m": entry.m,
        "mode": entry.mode.value,
        "bits": bits,
    }
    params = dict(params or {})
    if family == "fam22_li" and "Rm" not in params:
        params["Rm"] = fam22_suggested_rm(entry.m)
    try:
        cfg = solvers.default_config(family, entry.m, **params)
    except (MultiplicityOne, solvers.InadmissibleConfig) as e:
        row.update(rejected=type(e).__name__, detail=str(e))
        return row
    with working_precision(bits):
        p = entry.problem()
        if entry.mode.complex_mode:
            x0 = mpmath.mpc(entry.x0)
            alpha = mpmath.mpc(entry.root)
        else:
            x0 = (mpmath.mpf(entry.x0.numerator) / entry.x0.denominator
                  if isinstance(entry.x0, Fraction) else mpmath.mpf(entry.x0))
            alpha = (mpmath.mpf(entry.root.numerator) / entry.root.denominator
                     if isinstance(entry.root, Fraction)
                     else mpmath.mpf(entry.root))
        p.known_root = alpha
        try:
            tr = solvers.solve(p, cfg, x0, max_iter=max_iter)
        except MultiplicityOne as e:
            row.update(rejected="MultiplicityOne", detail=str(e))
            return row
        try:
            coc = coc_estimate(tr, alpha)
            row["coc"] = _as_float(coc.final)
        except InsufficientData:
            row["coc"] = None
        final_res = abs(p.f(tr.root))
        row.update(
            stop_reason=str(tr.stop_reason),
            iterations=tr.iterations,
            final_residual=mpmath.nstr(final_res, 4),
            evals=tr.total_evals,
            optimal=optimality_report(cfg)["optimal"],
            notes=list(tr.notes),
        )
    return row


def corpus_report(families=None, bits: int = 2048, entries=None) -> list:
    """Rows for every (family, entry) pair; sequential driver."""
    families = list(families or solvers.FAMILIES)
    entries = list(entries if entries is not None else corpus_default())
    return [run_corpus_entry(f, e, bits) for f in families for e in entries]
