import random
from fractions import Fraction as F

import pytest

from mzero.series import (
    ConditionReport,
    MultiplicityOne,
    NonNilpotentInner,
    NonUnitConstantTerm,
    NotAffine,
    NotDivisible,
    QSeries,
    SeriesTruncationError,
    SymbolBinding,
    ZeroConstantTerm,
    compose_poly,
    derive_conditions,
    draw_c,
    expand_family,
    fam22_suggested_rm,
    fam23_phi_conditions,
    fam23_tstar,
    observed_order,
    schroder_eps2,
    three_point_eps8,
    two_point_eps4,
)


# ---------------------------------------------------------------- arithmetic


class TestQSeries:
    def test_mul_min_order(self):
        a = QSeries((1, 2, 3))
        b = QSeries((1, 1, 1, 1, 1))
        assert (a * b).order == 2
        assert (a * b).coeffs == (F(1), F(3), F(6))

    def test_coeff_beyond_order_raises(self):
        s = QSeries((1, 2))
        with pytest.raises(SeriesTruncationError):
            s.coeff(2)

    def test_reciprocal_roundtrip(self):
        s = QSeries((F(2), F(1, 3), F(-5), F(7, 2)))
        prod = s * s.reciprocal()
        assert prod.coeffs == (F(1), F(0), F(0), F(0))

    def test_reciprocal_zero_constant(self):
        with pytest.raises(ZeroConstantTerm):
            QSeries((0, 1, 2)).reciprocal()

    def test_pow_rational_cube_of_cube_root(self):
        s = QSeries((F(1), F(1, 2), F(-2), F(3), F(1, 5)))
        r = s.pow_rational(F(1, 3))
        assert (r * r * r).coeffs == s.coeffs

    def test_pow_rational_needs_unit(self):
        with pytest.raises(NonUnitConstantTerm):
            QSeries((2, 1)).pow_rational(F(1, 2))

    def test_pow_rational_binomial(self):
        # (1 + x)^(1/2) = 1 + x/2 - x^2/8 + x^3/16 - ...
        s = QSeries((1, 1, 0, 0)).pow_rational(F(1, 2))
        assert s.coeffs == (F(1), F(1, 2), F(-1, 8), F(1, 16))

    def test_shift_down_checks_divisibility(self):
        assert QSeries((0, 0, 3, 4)).shift_down(2).coeffs == (F(3), F(4))
        with pytest.raises(NotDivisible):
            QSeries((0, 1, 3)).shift_down(2)

    def test_compose_poly_needs_nilpotent(self):
        with pytest.raises(NonNilpotentInner):
            compose_poly([1, 2], QSeries((1, 1)))

    def test_compose_poly_geometric(self):
        x = QSeries.eps(5)
        s = compose_poly([1, 1, 1, 1, 1, 1], x)  # 1+x+...+x^5
        inv = (QSeries.constant(1, 5) - x).reciprocal()
        assert s.coeffs == inv.coeffs

    def test_scalar_ops(self):
        s = QSeries((1, 2)) * F(1, 2) + 1
        assert s.coeffs == (F(3, 2), F(1))


# ------------------------------------------------------------ leading errors


def _random_bindings(seed, n):
    rng = random.Random(seed)
    return [draw_c(rng) for _ in range(n)]


class TestLeadingCoefficients:
    @pytest.mark.parametrize("m", [1, 2, 3, 6])
    def test_schroder_quadratic_with_c1_over_m(self, m):
        for c in _random_bindings(m, 2):
            s = expand_family("schroder", SymbolBinding(m, c))
            assert s.leading_index() == 2
            assert s.coeff(2) == schroder_eps2(m, c[1])

    @pytest.mark.parametrize("m", [2, 3, 4, 6])
    def test_two_point_eps4(self, m):
        for c in _random_bindings(10 + m, 2):
            p2 = F(m, 7) - 3
            slots = {"P0": 1, "P1": 2, "P2": p2, "P3": F(5, 7), "P4": F(-3, 2)}
            s = expand_family("fam18_twopoint", SymbolBinding(m, c, slots))
            assert s.coeff(2) == 0 and s.coeff(3) == 0
            assert s.coeff(4) == two_point_eps4(m, c[1], c[2], p2)

    def test_two_point_eps4_spot_value(self):
        assert two_point_eps4(2, 1, 1, 0) == F(7, 16)
        b = SymbolBinding(2, {1: 1, 2: 1}, {"P0": 1, "P1": 2, "P2": 0, "P3": 0, "P4": 0})
        assert expand_family("fam18_twopoint", b).coeff(4) == F(7, 16)

    @pytest.mark.parametrize("m", [2, 3, 5])
    def test_three_point_eps8(self, m):
        rng = random.Random(40 + m)
        for c in _random_bindings(20 + m, 2):
            p2 = F(rng.randint(-9, 9), 4)
            p4 = F(rng.randint(-9, 9), 3)
            qvv = F(rng.randint(-9, 9), 2)
            slots = {"P0": 1, "P1": 2, "P2": p2, "P3": 24 - 6 * p2, "P4": p4,
                     "Q00": 1, "Qu0": 2, "Q0v": 1, "Quu": p2 + 2, "Quv": 4,
                     "Qvv": qvv}
            s = expand_family("fam12_PQ", SymbolBinding(m, c, slots))
            for r in range(1, 8):
                assert s.coeff(r) == 0
            assert s.coeff(8) == three_point_eps8(m, c[1], c[2], c[3], p2, p4, qvv)

    def test_generic_slots_give_low_order(self):
        # without the conditions the two-point error is only quadratic
        slots = {"P0": F(1, 2), "P1": 0, "P2": 0, "P3": 0, "P4": 0}
        assert observed_order("fam18_twopoint", 3, slots) == 2


# -------------------------------------------------------------- family orders


ORDER_CASES = [
    ("schroder", {}, 2),
    ("fam18_twopoint", {"P0": 1, "P1": 2, "P2": F(-1, 3), "P3": 0, "P4": 0}, 4),
    ("fam1_zhou", {"G0": 0, "G1": 1, "G2": 4, "G3": 0, "G4": 0}, 4),
    ("fam2_lee", {"W0": 0, "W1": 1, "W2": 4, "W3": 0, "W4": 0, "lam": F(1, 2)}, 4),
    ("fam12_PQ", {"P0": 1, "P1": 2, "P2": 0, "P3": 24, "P4": 0,
                  "Q00": 1, "Qu0": 2, "Q0v": 1, "Quu": 2, "Quv": 4, "Qvv": 0}, 8),
    ("fam15b_HPGL", {"H0": 1, "H1": 2, "H2": 0, "H3": 0, "H4": 0,
                     "P0": 1, "P1": 2, "P2": 2, "P3": -24, "P4": 0,
                     "G0": 0, "G1": 1, "G2": 2, "G3": 0, "G4": 0,
                     "L0": 1, "L1": 2, "L2": 0, "L3": 0, "L4": 0}, 8),
]


class TestObservedOrder:
    @pytest.mark.parametrize("family,slots,want", ORDER_CASES)
    @pytest.mark.parametrize("m", [2, 3])
    def test_orders(self, family, slots, want, m):
        assert observed_order(family, m, slots, seed=m) == want

    @pytest.mark.parametrize("m", [2, 3, 5])
    def test_fam7b_order_eight(self, m):
        slots = {"H0": 1, "H1": 2, "H2": m + 9, "H3": 0, "H4": 0,
                 "P0": 1, "P1": 2, "P2": m + 11, "P3": 30 + 6 * m, "P4": 0,
                 "G0": 1, "G1": 1, "G2": 0, "G3": 0, "G4": 0}
        assert observed_order("fam7b", m, slots) == 8

    @pytest.mark.parametrize("m", [2, 3, 4, 5])
    def test_fam22_needs_suggested_rm(self, m):
        rm = fam22_suggested_rm(m)
        assert rm == F(m + 2, m) ** m
        assert observed_order("fam22_li", m, {"Rm": rm}) == 4
        assert observed_order("fam22_li", m, {"Rm": rm + 1}) < 4

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_fam23_order_four(self, m):
        slots = {**fam23_phi_conditions(m), "phi3": 0, "phi4": 0}
        assert observed_order("fam23_zhou", m, slots) == 4

    def test_fam3_order_four_and_m1_rejected(self):
        for m in (2, 3, 4):
            slots = {"G0": 0, "G1": 1, "G2": F(4 * m, m - 1), "G3": 0, "G4": 0}
            assert observed_order("fam3_liu", m, slots) == 4
        with pytest.raises(MultiplicityOne):
            expand_family("fam3_liu", SymbolBinding(1, {1: F(1)},
                          {"G0": 0, "G1": 1, "G2": 4, "G3": 0, "G4": 0}))


# --------------------------------------------------------- derived conditions


class TestDeriveConditions:
    def test_two_point(self):
        rep = derive_conditions("fam18_twopoint", 3,
                                ["P0", "P1", "P2", "P3", "P4"], fixed={})
        assert isinstance(rep, ConditionReport)
        assert rep.solved == {"P0": F(1), "P1": F(2)}
        assert set(rep.arbitrary) == {"P2", "P3", "P4"}
        assert rep.annihilated_through == 3

    def test_two_point_via_z_target(self):
        fixedq = {n: 0 for n in
                  ("P2", "P3", "P4", "Q00", "Qu0", "Q0v", "Quu", "Quv", "Qvv")}
        rep = derive_conditions("fam12_PQ", 4, ["P0", "P1"], fixed=fixedq,
                                target="z")
        assert rep.solved == {"P0": F(1), "P1": F(2)}

    @pytest.mark.parametrize("m", [2, 3])
    def test_three_point_q_conditions(self, m):
        p2, p4, qvv = F(1, 3), F(-2, 5), F(3, 7)
        rep = derive_conditions(
            "fam12_PQ", m, ["Q00", "Qu0", "Q0v", "Quv", "Quu", "P3"],
            fixed={"P0": 1, "P1": 2, "P2": p2, "P4": p4, "Qvv": qvv})
        assert rep.solved == {"Q00": F(1), "Qu0": F(2), "Q0v": F(1),
                              "Quv": F(4), "Quu": p2 + 2, "P3": 24 - 6 * p2}
        assert rep.arbitrary == ()
        assert rep.annihilated_through == 7

    @pytest.mark.parametrize("m", [2, 3, 5])
    def test_fam1_conditions(self, m):
        rep = derive_conditions("fam1_zhou", m,
                                ["G0", "G1", "G2", "G3", "G4"], fixed={})
        assert rep.solved == {"G0": F(0), "G1": F(1), "G2": F(4)}
        assert set(rep.arbitrary) == {"G3", "G4"}

    @pytest.mark.parametrize("lam", [F(0), F(1, 2), F(1)])
    def test_fam2_conditions_lambda_independent(self, lam):
        rep = derive_conditions("fam2_lee", 2, ["W0", "W1", "W2", "W3", "W4"],
                                fixed={"lam": lam}, seed=3)
        assert rep.solved == {"W0": F(0), "W1": F(1), "W2": F(4)}
        assert set(rep.arbitrary) == {"W3", "W4"}

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_fam3_conditions(self, m):
        rep = derive_conditions("fam3_liu", m,
                                ["G0", "G1", "G2", "G3", "G4"], fixed={})
        assert rep.solved == {"G0": F(0), "G1": F(1), "G2": F(4 * m, m - 1)}

    @pytest.mark.parametrize("m", [2, 3])
    def test_fam15b_cond_block(self, m):
        # the published block relates slots to free P(0), L(0), H''(0), H'''(0)
        p0, l0 = F(3, 5), F(4, 3)
        h2, h3 = F(-5, 3), F(7, 2)
        rep = derive_conditions(
            "fam15b_HPGL", m, ["G0", "G1", "P1", "L1", "G2", "P2", "P3"],
            fixed={"H0": 1, "H1": 2, "H2": h2, "H3": h3, "H4": F(1, 7),
                   "P0": p0, "P4": F(-2, 9),
                   "L0": l0, "L2": F(3, 4), "L3": F(-1, 6), "L4": F(2, 3),
                   "G3": F(5, 8), "G4": F(-3, 7)},
            seed=m)
        assert rep.solved == {"G0": F(0),
                              "G1": 1 / (l0 * p0),
                              "G2": 2 / (l0 * p0),
                              "P1": 2 * p0,
                              "L1": 2 * l0,
                              "P2": p0 * (2 + h2),
                              "P3": p0 * (h3 + 6 * h2 - 24)}
        assert rep.annihilated_through == 7

    def test_fam15b_first_step_via_z_target(self):
        zfix = {n: 0 for n in
                ("P0", "P1", "P2", "P3", "P4", "G0", "G1", "G2", "G3", "G4",
                 "L0", "L1", "L2", "L3", "L4")}
        rep = derive_conditions("fam15b_HPGL", 3, ["H0", "H1"],
                                fixed={**zfix, "H2": F(1, 2), "H3": F(-2, 3),
                                       "H4": F(1, 5)},
                                target="z")
        assert rep.solved == {"H0": F(1), "H1": F(2)}

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_fam7b_second_derivatives(self, m):
        # needs the quadratic elimination path: the two slots couple bilinearly
        h3 = F(1, 3)
        rep = derive_conditions(
            "fam7b", m, ["H2", "P2"],
            fixed={"H0": 1, "H1": 2, "H3": h3, "H4": F(-1, 4),
                   "P0": 1, "P1": 2, "P3": 30 + 6 * m + h3, "P4": F(2, 5),
                   "G0": 1, "G1": 1, "G2": F(3, 7), "G3": F(-2, 3),
                   "G4": F(1, 6)},
            seed=m)
        assert rep.solved == {"H2": F(m + 9), "P2": F(m + 11)}
        assert rep.annihilated_through == 7

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_fam7b_garbled_condition_resolves_to_g_slots(self, m):
        # the published list ends with an impossible repeat of H'(0); deriving
        # the G slots with everything else bound shows the intended values
        h3 = F(-2, 5)
        rep = derive_conditions(
            "fam7b", m, ["G0", "G1"],
            fixed={"H0": 1, "H1": 2, "H2": m + 9, "H3": h3, "H4": F(1, 2),
                   "P0": 1, "P1": 2, "P2": m + 11, "P3": 30 + 6 * m + h3,
                   "P4": F(3, 4), "G2": F(5, 6), "G3": F(1, 3), "G4": F(-1, 7)},
            seed=m + 10)
        assert rep.solved == {"G0": F(1), "G1": F(1)}

    def test_fam7b_p3_tracks_h3(self):
        m = 3
        for h3 in (F(0), F(7, 3)):
            rep = derive_conditions(
                "fam7b", m, ["P3"],
                fixed={"H0": 1, "H1": 2, "H2": m + 9, "H3": h3, "H4": 0,
                       "P0": 1, "P1": 2, "P2": m + 11, "P4": 0,
                       "G0": 1, "G1": 1, "G2": 0, "G3": 0, "G4": 0},
                seed=2)
            assert rep.solved == {"P3": 30 + 6 * m + h3}

    def test_fam22_rm_not_affine(self):
        with pytest.raises(NotAffine):
            derive_conditions("fam22_li", 3, ["Rm"], fixed={})

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_fam23_matches_rational_weight_derivatives(self, m):
        # independent closed forms from differentiating the rational weight of
        # the pole-parameter family at t*: phi = m, -A m^3/4, A^2 m^4/4
        a = F(m + 2, m) ** m
        cond = fam23_phi_conditions(m)
        assert cond == {"phi0": F(m), "phi1": -a * m**3 / 4,
                        "phi2": a**2 * m**4 / 4}
        assert fam23_tstar(m) == F(m, m + 2) ** (m - 1)

    def test_unknown_slot_rejected(self):
        with pytest.raises(KeyError):
            derive_conditions("fam18_twopoint", 2, ["P9"], fixed={})

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            derive_conditions("fam18_twopoint", 2, ["P0"], fixed={"P0": 1})
