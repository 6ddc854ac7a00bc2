import pytest

from lockstep.assets import harness_path
from lockstep.expr import free_vars
from lockstep.harness import (
    ExprError,
    HarnessRegistry,
    MetaKind,
    NotNegotiable,
    OverrideRecord,
    SchemaError,
    Severity,
    UnknownParameter,
    UnknownRule,
    apply_override,
    load_registry,
    load_registry_file,
    meta_validate,
    save_registry,
    validate_registry,
)

REAR = "REAR_COLLISION_PREVENTION_DECELERATION"
FWD = "FORWARD_COLLISION_PREVENTION_PERCEPTION"


@pytest.fixture(scope="module")
def ad_paradox() -> HarnessRegistry:
    return load_registry_file(harness_path("ad_paradox"))


@pytest.fixture(scope="module")
def ad_pass() -> HarnessRegistry:
    return load_registry_file(harness_path("ad_pass"))


@pytest.fixture(scope="module")
def pharma() -> HarnessRegistry:
    return load_registry_file(harness_path("pharma_paradox"))


class TestLoad:
    def test_legacy_accessor_file_loads_verbatim(self):
        text = harness_path("ad_legacy").read_text(encoding="utf-8")
        reg = load_registry(text)
        assert set(reg.rule_ids()) == {REAR, FWD}
        assert reg.rule(REAR).severity is Severity.CRITICAL
        assert reg.rule(FWD).severity is Severity.FATAL
        # Accessor calls were rewritten into bare identifiers.
        assert "input.get" not in reg.rule(REAR).assertion_source
        assert "vehicle_speed_kmph_t0" in free_vars(reg.rule(REAR).assertion)

    def test_empty_rules_is_valid(self):
        reg = load_registry("rules: []\n")
        assert reg.rules == ()

    def test_missing_assertion_is_schema_error(self):
        bad = "rules:\n  - id: X\n    target_field: x\n"
        with pytest.raises(SchemaError) as e:
            load_registry(bad)
        assert e.value.path == "rules[0].assertion"

    def test_unparseable_assertion_is_expr_error(self):
        bad = "rules:\n  - id: X\n    target_field: x\n    assertion: 'x + '\n"
        with pytest.raises(ExprError) as e:
            load_registry(bad)
        assert e.value.rule_id == "X"

    def test_top_level_must_have_rules(self):
        with pytest.raises(SchemaError):
            load_registry("constants: {}\n")

    def test_shipped_registries_load(self, ad_paradox, ad_pass, pharma):
        assert len(ad_paradox.rules) == 2
        assert len(pharma.rules) == 7
        assert pharma.rule_ids() == ("C1", "C2", "C3", "C4", "C5", "C6", "C7")
        assert ad_paradox.frozen and pharma.frozen

    def test_save_load_round_trip(self, ad_paradox, pharma):
        for reg in (ad_paradox, pharma):
            again = load_registry(save_registry(reg))
            assert again.rules == reg.rules
            assert dict(again.constants) == dict(reg.constants)
            assert again.variables == reg.variables
            assert again.meta_tests == reg.meta_tests


class TestValidate:
    def test_shipped_registries_validate_clean(self, ad_paradox, ad_pass, pharma):
        assert validate_registry(ad_paradox).ok
        assert validate_registry(ad_pass).ok
        assert validate_registry(pharma).ok

    def test_legacy_file_with_constants_validates_clean(self):
        reg = load_registry_file(harness_path("ad_legacy"))
        reg = reg.with_constants(
            {
                "vehicle_speed_kmph_t0": 120.0,
                "transition_window_seconds": 5.0,
                "m_per_sec_to_km_per_h_factor": 3.6,
                "road_friction_mu": 0.4,
                "g": 9.8,
                "max_deceleration_limit": 2.0,
                "perception_range_limit": 30.0,
            }
        )
        assert validate_registry(reg).ok

    def test_duplicate_ids_reported(self):
        reg = load_registry(
            "rules:\n"
            "  - {id: X, target_field: a, assertion: 'a < 1'}\n"
            "  - {id: X, target_field: a, assertion: 'a > 0'}\n"
            "constants: {}\n"
        )
        report = validate_registry(reg)
        assert "DuplicateId" in report.kinds()

    def test_unbound_variable_reported(self):
        reg = load_registry(
            "rules:\n  - {id: X, target_field: a, assertion: 'a < phantom_var'}\n"
        )
        report = validate_registry(reg)
        assert any(f.kind == "UnboundVariable" and f.detail == "phantom_var" for f in report.findings)

    def test_negotiable_without_parameter_reported(self):
        reg = load_registry(
            "rules:\n  - {id: X, target_field: a, assertion: 'a < 1', negotiable: true}\n"
        )
        assert "NegotiableWithoutParameter" in validate_registry(reg).kinds()

    def test_extra_fields_bind_node_outputs(self):
        reg = load_registry(
            "rules:\n  - {id: X, target_field: a, assertion: 'a < upstream_out'}\n"
        )
        assert not validate_registry(reg).ok
        assert validate_registry(reg, extra_fields=frozenset({"upstream_out"})).ok


class TestMetaValidate:
    def test_shipped_corpora_pass(self, ad_paradox, ad_pass, pharma):
        for reg in (ad_paradox, ad_pass, pharma):
            report = meta_validate(reg)
            assert report.ok, [r for r in report.results if not r.passed]

    def test_pharma_pass_corpus(self):
        reg = load_registry_file(harness_path("pharma_pass"))
        report = meta_validate(reg)
        assert report.ok
        assert any(r.kind is MetaKind.GOLDEN for r in report.results)

    def test_poisoned_high_speed_fails_forward_only(self, ad_paradox):
        report = meta_validate(ad_paradox)
        by_label = {r.label: r for r in report.results}
        r = by_label["cruise speed retained"]
        assert r.passed and r.failing_rules == {FWD}

    def test_golden_pass_variant_90(self, ad_pass):
        by_label = {r.label: r for r in meta_validate(ad_pass).results}
        assert by_label["mid-window speed"].passed

    def test_missed_detection_flagged(self, ad_paradox):
        # Weaken a poisoned expectation so the expected rule actually passes.
        import dataclasses

        broken = dataclasses.replace(
            ad_paradox,
            meta_tests=(
                dataclasses.replace(
                    ad_paradox.meta_tests[0],
                    facts={"vehicle_speed_kmph_t5": 84.0},
                    expected_failing_rules=frozenset({REAR}),
                ),
            ),
        )
        report = meta_validate(broken)
        assert not report.ok
        r = report.results[0]
        assert REAR in r.missed_detection
        assert FWD in r.unexpected_fail


class TestOverride:
    def test_override_moves_constant_and_appends_audit(self, ad_paradox):
        record = OverrideRecord(
            timestamp="2026-01-01T00:00:00+00:00",
            actor="lead-engineer",
            rule_id=REAR,
            parameter="max_deceleration_limit",
            old_value=2.0,
            new_value=3.612,
            justification="authorized comfort trade-off",
        )
        relaxed = apply_override(ad_paradox, record)
        assert relaxed.constants["max_deceleration_limit"] == 3.612
        assert ad_paradox.constants["max_deceleration_limit"] == 2.0  # original untouched
        assert len(relaxed.audit_log) == len(ad_paradox.audit_log) + 1
        assert relaxed.version != ad_paradox.version
        # Assertion ASTs are bit-identical; only the constant moved.
        assert relaxed.rules == ad_paradox.rules

    def test_override_makes_55_satisfy_both(self, ad_paradox):
        from lockstep.engine import VerdictStatus, assert_all

        record = OverrideRecord(
            "2026-01-01T00:00:00+00:00", "lead", REAR,
            "max_deceleration_limit", 2.0, 3.612, "test",
        )
        relaxed = apply_override(ad_paradox, record)
        env = dict(relaxed.constants)
        env["vehicle_speed_kmph_t5"] = 55.0
        verdicts = assert_all(relaxed, env)
        assert all(v.status is VerdictStatus.PASS for v in verdicts)

    def test_non_negotiable_rule_rejected(self, ad_paradox):
        record = OverrideRecord(
            "2026-01-01T00:00:00+00:00", "lead", FWD,
            "perception_range_limit", 30.0, 90.0, "test",
        )
        with pytest.raises(NotNegotiable):
            apply_override(ad_paradox, record)

    def test_unknown_rule_rejected(self, ad_paradox):
        record = OverrideRecord(
            "2026-01-01T00:00:00+00:00", "lead", "NOPE",
            "max_deceleration_limit", 2.0, 3.0, "test",
        )
        with pytest.raises(UnknownRule):
            apply_override(ad_paradox, record)

    def test_wrong_parameter_rejected(self, ad_paradox):
        record = OverrideRecord(
            "2026-01-01T00:00:00+00:00", "lead", REAR, "g", 9.8, 9.9, "test",
        )
        with pytest.raises(UnknownParameter):
            apply_override(ad_paradox, record)

    def test_no_op_override_rejected_at_record_construction(self):
        with pytest.raises(ValueError):
            OverrideRecord(
                "2026-01-01T00:00:00+00:00", "lead", REAR,
                "max_deceleration_limit", 2.0, 2.0, "test",
            )

    def test_empty_actor_rejected(self):
        with pytest.raises(ValueError):
            OverrideRecord(
                "2026-01-01T00:00:00+00:00", "  ", REAR,
                "max_deceleration_limit", 2.0, 3.0, "test",
            )

    def test_audit_log_jsonl_round_trip(self, tmp_path):
        from lockstep.harness import append_audit_record, read_audit_log

        record = OverrideRecord(
            "2026-01-01T00:00:00+00:00", "lead", REAR,
            "max_deceleration_limit", 2.0, 3.612, "test",
        )
        path = tmp_path / "audit.jsonl"
        append_audit_record(path, record)
        append_audit_record(path, record)
        assert read_audit_log(path) == [record, record]
