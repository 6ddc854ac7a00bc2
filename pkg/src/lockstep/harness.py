"""Harness registries: load, validate, meta-validate, freeze and override
the versioned constraint files that are the system's domain asset.

A registry bundles executable rules with the physics constants they are
evaluated against, the decision-variable domains the feasibility oracle
scans, and a golden/poisoned meta-test corpus. Registries are immutable
values; the only mutation path is `apply_override`, which returns a new
registry and appends an auditable record.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional

import yaml

from . import expr as E
from .expr import Expr, FactMap, Value


class Severity(Enum):
    CRITICAL = "CRITICAL"
    FATAL = "FATAL"
    WARNING = "WARNING"


class HarnessError(Exception):
    """Base class for registry loading/override failures."""


class YamlError(HarnessError):
    pass


class SchemaError(HarnessError):
    def __init__(self, path: str, message: str = "missing or invalid"):
        self.path = path
        super().__init__(f"{path}: {message}")


class ExprError(HarnessError):
    def __init__(self, rule_id: str, offset: int, message: str):
        self.rule_id = rule_id
        self.offset = offset
        super().__init__(f"rule {rule_id}: {message}")


class NotNegotiable(HarnessError):
    def __init__(self, rule_id: str):
        self.rule_id = rule_id
        super().__init__(f"rule {rule_id} is not negotiable")


class UnknownRule(HarnessError):
    pass


class UnknownParameter(HarnessError):
    pass


@dataclass(frozen=True)
class HarnessRule:
    id: str
    description: str
    target_field: str
    condition: str
    assertion: Expr
    assertion_source: str  # canonical (accessor-translated) text
    severity: Severity
    negotiable: bool = False
    relaxation_parameter: Optional[str] = None
    scope: Optional[frozenset[str]] = None  # None = in scope everywhere
    title: Optional[str] = None  # short display name for reports
    lhs_label: str = "lhs"
    rhs_label: str = "rhs"

    def in_scope(self, tags: Optional[Iterable[str]]) -> bool:
        if self.scope is None:
            return True
        if tags is None:
            return False
        return bool(self.scope & frozenset(tags))


@dataclass(frozen=True)
class DecisionVariable:
    name: str
    min: float
    max: float
    resolution: float
    integer: bool = False
    unit: str = ""
    label: Optional[str] = None

    def __post_init__(self):
        if self.min > self.max:
            raise SchemaError(f"variables.{self.name}", "min > max")
        if self.resolution <= 0:
            raise SchemaError(f"variables.{self.name}", "resolution must be > 0")

    @property
    def display(self) -> str:
        return self.label or self.name


class MetaKind(Enum):
    GOLDEN = "GOLDEN"
    POISONED = "POISONED"


@dataclass(frozen=True)
class MetaTest:
    label: str
    kind: MetaKind
    facts: dict[str, Value]
    expected_failing_rules: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.kind is MetaKind.POISONED and not self.expected_failing_rules:
            raise SchemaError(f"meta_tests.{self.label}", "POISONED test names no expected rule")


@dataclass(frozen=True)
class OverrideRecord:
    timestamp: str  # UTC instant, ISO-8601
    actor: str
    rule_id: str
    parameter: str
    old_value: float
    new_value: float
    justification: str

    def __post_init__(self):
        if not self.actor.strip():
            raise ValueError("override record requires a non-empty actor")
        if self.new_value == self.old_value:
            raise ValueError("override new_value must differ from old_value")

    @staticmethod
    def now(actor: str, rule_id: str, parameter: str, old_value: float,
            new_value: float, justification: str) -> "OverrideRecord":
        ts = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return OverrideRecord(ts, actor, rule_id, parameter, old_value, new_value, justification)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


@dataclass(frozen=True)
class HarnessRegistry:
    name: str
    version: str
    frozen: bool
    rules: tuple[HarnessRule, ...]
    constants: Mapping[str, Value]
    variables: tuple[DecisionVariable, ...] = ()
    meta_tests: tuple[MetaTest, ...] = ()
    audit_log: tuple[OverrideRecord, ...] = ()
    failure_labels: Mapping[str, str] = field(default_factory=dict)
    dual_label: str = "DUAL"

    def rule(self, rule_id: str) -> HarnessRule:
        for r in self.rules:
            if r.id == rule_id:
                return r
        raise UnknownRule(rule_id)

    def rule_ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.rules)

    def variable(self, name: str) -> DecisionVariable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def variable_names(self) -> frozenset[str]:
        return frozenset(v.name for v in self.variables)

    def with_constants(self, extra: Mapping[str, Value]) -> "HarnessRegistry":
        merged = dict(self.constants)
        merged.update(extra)
        return replace(self, constants=merged)

    def fingerprint(self) -> str:
        """Stable digest of everything that affects rule evaluation."""
        payload = {
            "rules": [(r.id, r.assertion_source, r.severity.value) for r in self.rules],
            "constants": sorted((k, repr(v)) for k, v in self.constants.items()),
            "variables": [
                (v.name, v.min, v.max, v.resolution, v.integer) for v in self.variables
            ],
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# Loading


def _require(mapping: dict, key: str, path: str):
    if not isinstance(mapping, dict) or key not in mapping or mapping[key] is None:
        raise SchemaError(f"{path}.{key}")
    return mapping[key]


def _load_rule(raw: dict, path: str) -> HarnessRule:
    if not isinstance(raw, dict):
        raise SchemaError(path, "rule must be a mapping")
    rule_id = str(_require(raw, "id", path))
    source = str(_require(raw, "assertion", path))
    target = str(_require(raw, "target_field", path))
    try:
        translated = E.translate_legacy(source)
        ast = E.parse(translated)
    except E.MalformedAccessor as exc:
        raise ExprError(rule_id, exc.offset, str(exc)) from exc
    except E.ParseError as exc:
        raise ExprError(rule_id, exc.offset, str(exc)) from exc
    severity_raw = str(raw.get("severity", "CRITICAL")).upper()
    try:
        severity = Severity(severity_raw)
    except ValueError:
        raise SchemaError(f"{path}.severity", f"unknown severity {severity_raw!r}") from None
    scope_raw = raw.get("scope")
    scope = frozenset(str(s) for s in scope_raw) if scope_raw is not None else None
    return HarnessRule(
        id=rule_id,
        description=str(raw.get("description", "")),
        target_field=target,
        condition=str(raw.get("condition", translated)),
        assertion=ast,
        assertion_source=translated,
        severity=severity,
        negotiable=bool(raw.get("negotiable", False)),
        relaxation_parameter=raw.get("relaxation_parameter"),
        scope=scope,
        title=raw.get("title"),
        lhs_label=str(raw.get("lhs_label", "lhs")),
        rhs_label=str(raw.get("rhs_label", "rhs")),
    )


def _load_variable(raw: dict, path: str) -> DecisionVariable:
    name = str(_require(raw, "name", path))
    return DecisionVariable(
        name=name,
        min=float(_require(raw, "min", path)),
        max=float(_require(raw, "max", path)),
        resolution=float(_require(raw, "resolution", path)),
        integer=bool(raw.get("integer", False)),
        unit=str(raw.get("unit", "")),
        label=raw.get("label"),
    )


def _load_meta_test(raw: dict, path: str) -> MetaTest:
    label = str(_require(raw, "label", path))
    kind = MetaKind(str(_require(raw, "kind", path)).upper())
    facts_raw = _require(raw, "facts", path)
    if not isinstance(facts_raw, dict):
        raise SchemaError(f"{path}.facts", "must be a mapping")
    facts = {str(k): (bool(v) if isinstance(v, bool) else float(v)) for k, v in facts_raw.items()}
    expected = frozenset(str(r) for r in raw.get("expected_failing_rules", []))
    return MetaTest(label=label, kind=kind, facts=facts, expected_failing_rules=expected)


def load_registry(yaml_text: str) -> HarnessRegistry:
    """Load a registry from YAML text.

    Assertion strings pass through the legacy-accessor translation before
    parsing, so accessor-style files load unmodified.
    """
    try:
        raw = yaml.safe_load(io.StringIO(yaml_text))
    except yaml.YAMLError as exc:
        raise YamlError(str(exc)) from exc
    if not isinstance(raw, dict):
        raise SchemaError("<root>", "expected a mapping with a top-level 'rules' key")
    rules_raw = raw.get("rules")
    if rules_raw is None:
        raise SchemaError("rules")
    if not isinstance(rules_raw, list):
        raise SchemaError("rules", "must be a list")
    rules = tuple(_load_rule(r, f"rules[{i}]") for i, r in enumerate(rules_raw))

    constants_raw = raw.get("constants") or {}
    if not isinstance(constants_raw, dict):
        raise SchemaError("constants", "must be a mapping")
    constants: dict[str, Value] = {}
    for k, v in constants_raw.items():
        constants[str(k)] = bool(v) if isinstance(v, bool) else float(v)

    variables_raw = raw.get("variables") or []
    variables = tuple(_load_variable(v, f"variables[{i}]") for i, v in enumerate(variables_raw))

    meta_raw = raw.get("meta_tests") or []
    meta_tests = tuple(_load_meta_test(m, f"meta_tests[{i}]") for i, m in enumerate(meta_raw))

    labels_raw = raw.get("failure_labels") or {}
    if not isinstance(labels_raw, dict):
        raise SchemaError("failure_labels", "must be a mapping")

    return HarnessRegistry(
        name=str(raw.get("name", "")),
        version=str(raw.get("version", "0")),
        frozen=bool(raw.get("frozen", False)),
        rules=rules,
        constants=constants,
        variables=variables,
        meta_tests=meta_tests,
        failure_labels={str(k): str(v) for k, v in labels_raw.items()},
        dual_label=str(raw.get("dual_label", "DUAL")),
    )


def load_registry_file(path: str | Path) -> HarnessRegistry:
    return load_registry(Path(path).read_text(encoding="utf-8"))


def save_registry(reg: HarnessRegistry) -> str:
    """Serialize a registry back to YAML in the canonical form."""
    doc: dict = {
        "name": reg.name,
        "version": reg.version,
        "frozen": reg.frozen,
    }
    if reg.constants:
        doc["constants"] = dict(reg.constants)
    if reg.variables:
        doc["variables"] = [
            {
                "name": v.name,
                **({"label": v.label} if v.label else {}),
                **({"unit": v.unit} if v.unit else {}),
                "min": v.min,
                "max": v.max,
                "resolution": v.resolution,
                "integer": v.integer,
            }
            for v in reg.variables
        ]
    doc["rules"] = []
    for r in reg.rules:
        entry: dict = {
            "id": r.id,
            "description": r.description,
            "target_field": r.target_field,
            "condition": r.condition,
            "assertion": r.assertion_source,
            "severity": r.severity.value,
        }
        if r.title:
            entry["title"] = r.title
        if r.negotiable:
            entry["negotiable"] = True
        if r.relaxation_parameter:
            entry["relaxation_parameter"] = r.relaxation_parameter
        if r.scope is not None:
            entry["scope"] = sorted(r.scope)
        if r.lhs_label != "lhs":
            entry["lhs_label"] = r.lhs_label
        if r.rhs_label != "rhs":
            entry["rhs_label"] = r.rhs_label
        doc["rules"].append(entry)
    if reg.meta_tests:
        doc["meta_tests"] = [
            {
                "label": m.label,
                "kind": m.kind.value,
                "facts": dict(m.facts),
                "expected_failing_rules": sorted(m.expected_failing_rules),
            }
            for m in reg.meta_tests
        ]
    if reg.failure_labels:
        doc["failure_labels"] = dict(reg.failure_labels)
        doc["dual_label"] = reg.dual_label
    return yaml.safe_dump(doc, sort_keys=False)


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Finding:
    kind: str
    subject: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.kind}({self.subject}){': ' + self.detail if self.detail else ''}"


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...]

    @property
    def ok(self) -> bool:
        return not self.findings

    def kinds(self) -> frozenset[str]:
        return frozenset(f.kind for f in self.findings)


def validate_registry(
    reg: HarnessRegistry, extra_fields: frozenset[str] = frozenset()
) -> ValidationReport:
    """Static consistency checks. An empty report means the registry is usable.

    `extra_fields` declares node output fields known from a plan; they count
    as bound identifiers alongside constants, variables and target fields.
    """
    findings: list[Finding] = []
    seen: set[str] = set()
    known = (
        frozenset(reg.constants)
        | reg.variable_names()
        | frozenset(r.target_field for r in reg.rules)
        | extra_fields
    )
    for r in reg.rules:
        if r.id in seen:
            findings.append(Finding("DuplicateId", r.id))
        seen.add(r.id)
        fv = E.free_vars(r.assertion)
        for name in sorted(fv - known):
            findings.append(Finding("UnboundVariable", r.id, name))
        if r.target_field not in fv:
            findings.append(
                Finding("TargetFieldNotInAssertion", r.id, r.target_field)
            )
        if r.negotiable:
            if not r.relaxation_parameter:
                findings.append(Finding("NegotiableWithoutParameter", r.id))
            elif r.relaxation_parameter not in fv:
                findings.append(
                    Finding("RelaxationParameterNotInAssertion", r.id, r.relaxation_parameter)
                )
        # Display/evaluable divergence is linted, never enforced.
        if r.condition and r.condition != r.assertion_source:
            try:
                cond_ast = E.parse(r.condition)
            except E.ExprError:
                pass
            else:
                if cond_ast != r.assertion:
                    findings.append(Finding("ConditionDiverges", r.id))
    return ValidationReport(tuple(findings))


# ---------------------------------------------------------------------------
# Meta-validation (golden / poisoned corpus)


@dataclass(frozen=True)
class MetaTestResult:
    label: str
    kind: MetaKind
    passed: bool
    failing_rules: frozenset[str]
    missed_detection: frozenset[str]  # expected to fail but passed
    unexpected_fail: frozenset[str]  # failed but not expected
    errors: frozenset[str]  # rules that ERRORed (harness flag)


@dataclass(frozen=True)
class MetaReport:
    results: tuple[MetaTestResult, ...]

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.results)


def meta_validate(reg: HarnessRegistry) -> MetaReport:
    """Run the registry's golden/poisoned corpus through the assertion engine.

    Golden artifacts must produce zero FAIL verdicts; poisoned artifacts must
    FAIL on exactly their expected rules. Anything else flags the harness
    itself for review.
    """
    from .engine import VerdictStatus, assert_all  # local import avoids a cycle

    results = []
    for test in reg.meta_tests:
        env: dict[str, Value] = dict(reg.constants)
        env.update(test.facts)
        verdicts = assert_all(reg, env)
        failing = frozenset(v.rule_id for v in verdicts if v.status is VerdictStatus.FAIL)
        errors = frozenset(v.rule_id for v in verdicts if v.status is VerdictStatus.ERROR)
        if test.kind is MetaKind.GOLDEN:
            passed = not failing and not errors
            missed: frozenset[str] = frozenset()
            unexpected = failing
        else:
            missed = test.expected_failing_rules - failing
            unexpected = failing - test.expected_failing_rules
            passed = not missed and not unexpected and not errors
        results.append(
            MetaTestResult(
                label=test.label,
                kind=test.kind,
                passed=passed,
                failing_rules=failing,
                missed_detection=missed,
                unexpected_fail=unexpected,
                errors=errors,
            )
        )
    return MetaReport(tuple(results))


# ---------------------------------------------------------------------------
# Override (the only legal mutation path for a frozen registry)


def apply_override(reg: HarnessRegistry, record: OverrideRecord) -> HarnessRegistry:
    """Apply an authorized relaxation, returning a new registry.

    Only a negotiable rule's declared relaxation parameter may move, and only
    through a complete OverrideRecord; everything else is bit-identical. The
    record is appended to the registry's audit log and the version suffixed.
    """
    rule = reg.rule(record.rule_id)  # raises UnknownRule
    if not rule.negotiable:
        raise NotNegotiable(record.rule_id)
    if record.parameter != rule.relaxation_parameter:
        raise UnknownParameter(
            f"{record.parameter!r} is not the relaxation parameter of {record.rule_id}"
        )
    if record.parameter not in reg.constants:
        raise UnknownParameter(f"{record.parameter!r} is not a registry constant")
    current = reg.constants[record.parameter]
    if float(current) != record.old_value:
        raise UnknownParameter(
            f"stale override: {record.parameter} is {current}, record says {record.old_value}"
        )
    constants = dict(reg.constants)
    constants[record.parameter] = record.new_value
    return replace(
        reg,
        constants=constants,
        version=f"{reg.version}+o{len(reg.audit_log) + 1}",
        audit_log=reg.audit_log + (record,),
    )


def append_audit_record(path: str | Path, record: OverrideRecord) -> None:
    """Append one override record to a JSON-lines audit file."""
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(record.to_json() + "\n")


def read_audit_log(path: str | Path) -> list[OverrideRecord]:
    records = []
    p = Path(path)
    if not p.exists():
        return records
    for line in p.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        records.append(OverrideRecord(**raw))
    return records
