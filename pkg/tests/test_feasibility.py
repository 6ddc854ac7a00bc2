import math

import numpy as np
import pytest

from lockstep.assets import harness_path
from lockstep.engine import VerdictStatus, assert_all
from lockstep.feasibility import (
    NotUnsat,
    ResolutionKind,
    UndeclaredVariable,
    WrongStatus,
    apply_resolution,
    evidence_json,
    evidence_package,
    feasible,
    minimal_unsat_subset,
    resolution_menu,
)
from lockstep.harness import load_registry, load_registry_file

REAR = "REAR_COLLISION_PREVENTION_DECELERATION"
FWD = "FORWARD_COLLISION_PREVENTION_PERCEPTION"


@pytest.fixture(scope="module")
def ad():
    return load_registry_file(harness_path("ad_paradox"))


@pytest.fixture(scope="module")
def ad_pass():
    return load_registry_file(harness_path("ad_pass"))


@pytest.fixture(scope="module")
def pharma():
    return load_registry_file(harness_path("pharma_paradox"))


# ---------------------------------------------------------------------------
# Independent brute-force oracles (hand-written physics, no expression
# pipeline) used to confirm every UNSAT claim on the shipped benchmarks.


def brute_force_ad_sat(perception_limit: float, a_max: float = 2.0) -> list[int]:
    """All integer speeds in [0, 130] passing both closed-form constraints."""
    out = []
    for v in range(0, 131):
        stopping = (v / 3.6) ** 2 / (2 * 0.4 * 9.8)
        decel = (120.0 - v) / (5.0 * 3.6)
        if stopping < perception_limit and decel <= a_max:
            out.append(v)
    return out


def brute_force_pharma_mask(tau_max: float = 120.0):
    """Full-grid pass masks from hand-written Arrhenius formulas (no early
    exit), for the shipped pharma grid: tau in [1, 300] per 0.1, T in
    [20, 150] per 0.1."""
    tau = np.round(1.0 + 0.1 * np.arange(2991), 10)[:, None]
    T = np.round(20.0 + 0.1 * np.arange(1301), 10)[None, :]
    k = 2.5e8 * np.exp(-72000.0 / (8.314 * (T + 273.15)))
    X = 1.0 - np.exp(-k * tau)
    impurity = 0.35 * k**2 * tau
    ok = (
        (X >= 0.95)
        & (impurity <= 0.02)
        & (T <= 150.0)
        & (tau <= tau_max)
        & (8.0 - 0.01 * tau >= 5.0)
        & (200.0 + 10.0 * T <= 2000.0)
        & (18.0 - 0.05 * tau <= 15.0)
    )
    return ok


class TestFeasibleAd:
    def test_ad_paradox_unsat(self, ad):
        result = feasible(ad)
        assert result.verdict == "UNSAT"
        assert result.witness is None
        assert result.scanned_points == 131

    def test_ad_paradox_unsat_matches_brute_force(self, ad):
        assert brute_force_ad_sat(30.0) == []
        assert feasible(ad).verdict == "UNSAT"

    def test_ad_pass_sat_first_witness_is_84(self, ad_pass):
        result = feasible(ad_pass)
        assert result.verdict == "SAT"
        assert result.witness == {"vehicle_speed_kmph_t5": 84.0}
        # brute force agrees on the full window
        window = brute_force_ad_sat(90.0)
        assert window[0] == 84
        assert window[-1] == 95  # closed-form window [84, 95.6): integers 84..95

    def test_sat_witness_reverifies_all_pass(self, ad_pass):
        result = feasible(ad_pass)
        env = dict(ad_pass.constants)
        env.update(result.witness)
        verdicts = assert_all(ad_pass, env)
        assert all(v.status is VerdictStatus.PASS for v in verdicts)

    def test_single_rule_subsets_sat(self, ad):
        assert feasible(ad, [REAR]).sat
        assert feasible(ad, [FWD]).sat

    def test_fixed_values_respected(self, ad_pass):
        result = feasible(ad_pass, fixed={"vehicle_speed_kmph_t5": 120.0})
        assert result.verdict == "UNSAT"
        result = feasible(ad_pass, fixed={"vehicle_speed_kmph_t5": 90.0})
        assert result.verdict == "SAT" and result.witness == {}

    def test_undeclared_variable_raises(self, ad):
        reg = load_registry(
            "rules:\n  - {id: X, target_field: mystery, assertion: 'mystery < 1'}\n"
        )
        with pytest.raises(UndeclaredVariable):
            feasible(reg)


class TestFeasiblePharma:
    def test_full_set_unsat(self, pharma):
        result = feasible(pharma)
        assert result.verdict == "UNSAT"
        assert result.scanned_points == 2991 * 1301

    def test_full_set_unsat_matches_brute_force(self, pharma):
        assert not brute_force_pharma_mask(120.0).any()
        assert feasible(pharma).verdict == "UNSAT"

    def test_c1_c2_sat_near_boundary_operating_point(self, pharma):
        result = feasible(pharma, ["C1", "C2"])
        assert result.verdict == "SAT"
        w = result.witness
        assert w["reactor_temp_c"] == pytest.approx(98.6, abs=0.2)
        assert w["residence_time_s"] == pytest.approx(157.0, abs=1.5)

    def test_c1_c2_witness_matches_brute_force_minimum(self, pharma):
        # First witness in scan order = smallest tau with a feasible T.
        tau = np.round(1.0 + 0.1 * np.arange(2991), 10)[:, None]
        T = np.round(20.0 + 0.1 * np.arange(1301), 10)[None, :]
        k = 2.5e8 * np.exp(-72000.0 / (8.314 * (T + 273.15)))
        ok = ((1.0 - np.exp(-k * tau)) >= 0.95) & ((0.35 * k**2 * tau) <= 0.02)
        ti, Ti = np.argwhere(ok)[0]
        w = feasible(pharma, ["C1", "C2"]).witness
        assert w["residence_time_s"] == pytest.approx(float(tau[ti, 0]), abs=1e-9)
        assert w["reactor_temp_c"] == pytest.approx(float(T[0, Ti]), abs=1e-9)

    def test_analytic_chain_cross_check(self, pharma):
        # Closed-form bounds derived independently of the oracle.
        k_max = (0.02 / 0.35) / (-math.log(1 - 0.95))
        tau_min = (-math.log(1 - 0.95)) / k_max
        assert k_max == pytest.approx(0.01908, rel=0.005)
        assert tau_min == pytest.approx(157.1, rel=0.005)
        # Arrhenius rate at the boundary operating temperature.
        k_at_boundary = 2.5e8 * math.exp(-72000.0 / (8.314 * (98.6 + 273.15)))
        assert k_at_boundary == pytest.approx(0.01908, rel=0.005)
        # Infeasibility gap against the residence cap.
        assert tau_min - 120.0 == pytest.approx(37.1, abs=0.1)
        # Oracle-derived bound agrees with the analytic chain to 0.5%.
        w = feasible(pharma, ["C1", "C2"]).witness
        assert w["residence_time_s"] == pytest.approx(tau_min, rel=0.005 + 0.005)


class TestMinimalUnsatSubset:
    def test_ad_mus_is_both_rules(self, ad):
        assert minimal_unsat_subset(ad) == {REAR, FWD}

    def test_pharma_mus_is_c1_c2_c4(self, pharma):
        assert minimal_unsat_subset(pharma) == {"C1", "C2", "C4"}

    def test_pharma_all_two_subsets_sat(self, pharma):
        import itertools

        for pair in itertools.combinations(["C1", "C2", "C4"], 2):
            assert feasible(pharma, pair).sat, pair

    def test_sat_input_raises(self, ad_pass):
        with pytest.raises(NotUnsat):
            minimal_unsat_subset(ad_pass)


class TestResolutionMenu:
    def test_ad_menu_shape(self, ad):
        menu = resolution_menu(minimal_unsat_subset(ad), ad)
        assert menu[0].label == "A"
        assert menu[0].kind == ResolutionKind.REPORT_DEADLOCK
        kinds = [o.kind for o in menu]
        assert ResolutionKind.RELAX_PARAMETER in kinds
        assert ResolutionKind.STRUCTURAL_CHANGE in kinds

    def test_ad_option_b_relaxes_deceleration_to_3611(self, ad):
        menu = resolution_menu(minimal_unsat_subset(ad), ad)
        relax = next(o for o in menu if o.kind == ResolutionKind.RELAX_PARAMETER)
        assert relax.label == "B"
        assert relax.rule_id == REAR
        assert relax.parameter == "max_deceleration_limit"
        assert relax.minimal_new_value == pytest.approx((120.0 - 55.0) / 18.0, abs=1e-3)
        assert relax.resulting_witness == {"vehicle_speed_kmph_t5": 55.0}

    def test_ad_structural_option_names_perception_limit(self, ad):
        menu = resolution_menu(minimal_unsat_subset(ad), ad)
        structural = next(o for o in menu if o.kind == ResolutionKind.STRUCTURAL_CHANGE)
        assert structural.rule_id == FWD
        assert "perception_range_limit" in structural.impact_note

    def test_minimal_relaxation_property(self, ad):
        # One parameter step below the minimal value keeps the set UNSAT.
        menu = resolution_menu(minimal_unsat_subset(ad), ad)
        relax = next(o for o in menu if o.kind == ResolutionKind.RELAX_PARAMETER)
        smaller = ad.with_constants({relax.parameter: relax.minimal_new_value - 1e-3})
        assert not feasible(smaller, sorted(minimal_unsat_subset(ad))).sat

    def test_pharma_menu_relaxes_residence_cap_near_157(self, pharma):
        menu = resolution_menu(minimal_unsat_subset(pharma), pharma)
        relax = next(o for o in menu if o.kind == ResolutionKind.RELAX_PARAMETER)
        assert relax.rule_id == "C4"
        assert relax.parameter == "residence_time_max_s"
        assert relax.minimal_new_value == pytest.approx(157.1, rel=0.005)

    def test_apply_resolution_round_trip(self, ad):
        menu = resolution_menu(minimal_unsat_subset(ad), ad)
        relax = next(o for o in menu if o.kind == ResolutionKind.RELAX_PARAMETER)
        relaxed, record = apply_resolution(ad, relax, actor="lead-engineer")
        assert feasible(relaxed).sat
        assert record.rule_id == REAR
        assert relaxed.audit_log[-1] == record

    def test_apply_resolution_rejects_report_option(self, ad):
        menu = resolution_menu(minimal_unsat_subset(ad), ad)
        with pytest.raises(ValueError):
            apply_resolution(ad, menu[0], actor="lead-engineer")

    def test_apply_resolution_rejects_empty_actor(self, ad):
        menu = resolution_menu(minimal_unsat_subset(ad), ad)
        relax = next(o for o in menu if o.kind == ResolutionKind.RELAX_PARAMETER)
        with pytest.raises(ValueError):
            apply_resolution(ad, relax, actor="   ")


class _FakeRun:
    def __init__(self, status, artifact):
        self.status = status
        self.artifact = artifact


class TestEvidencePackage:
    def _package(self, ad):
        mus = minimal_unsat_subset(ad)
        menu = resolution_menu(mus, ad)
        run = _FakeRun("FAILED_PARADOX", {"vehicle_speed_kmph_t5": 84.0})
        return evidence_package(run, mus, menu, ad)

    def test_header_and_bound_lines(self, ad):
        text = self._package(ad)
        assert text.startswith("[SYSTEM DEADLOCK] Formal Paradox Report\n")
        assert "Status: FAILED_PARADOX" in text
        assert "target speed must be >= 84 km/h" in text
        assert "must be <= 55 km/h" in text

    def test_evidence_probe_lines(self, ad):
        text = self._package(ad)
        assert "Attempting target speed = 84 km/h: Forward Safety FAIL" in text
        assert "Attempting target speed = 55 km/h: Rear Safety FAIL" in text
        assert "decel=3.61" in text

    def test_byte_stability(self, ad):
        assert self._package(ad) == self._package(ad)

    def test_wrong_status_raises(self, ad):
        mus = minimal_unsat_subset(ad)
        menu = resolution_menu(mus, ad)
        run = _FakeRun("SUCCESS", {})
        with pytest.raises(WrongStatus):
            evidence_package(run, mus, menu, ad)

    def test_json_mirror(self, ad):
        mus = minimal_unsat_subset(ad)
        menu = resolution_menu(mus, ad)
        run = _FakeRun("FAILED_PARADOX", {"vehicle_speed_kmph_t5": 84.0})
        data = evidence_json(run, mus, menu, ad)
        assert data["status"] == "FAILED_PARADOX"
        assert sorted(data["mus"]) == sorted(mus)
        assert len(data["menu"]) == 3
