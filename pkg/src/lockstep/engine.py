"""Deterministic rule evaluation: PASS/FAIL verdicts with exact traces and
solved boundary magnitudes.

This module is purely a detector. Nothing here mutates facts, registries or
locks; a verdict is a pure function of (rule, facts). Interpretation of
failures and all state decisions live in the convergence controller.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional

from . import expr as E
from .expr import Compare, FactMap, Value
from .harness import DecisionVariable, HarnessRegistry, HarnessRule, Severity


class VerdictStatus(Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    ERROR = "ERROR"


@dataclass(frozen=True)
class Verdict:
    rule_id: str
    status: VerdictStatus
    lhs_value: Optional[float] = None
    rhs_value: Optional[float] = None
    comparison: str = ""
    boundary: Optional[float] = None
    trace: str = ""
    severity: Severity = Severity.CRITICAL
    target_field: str = ""
    target_side: str = ""  # lhs | rhs | both | "" (non-comparison root)

    def to_json_dict(self) -> dict:
        out = {"id": self.rule_id, "status": self.status.value}
        if self.status is not VerdictStatus.PASS:
            out["error"] = self.trace
        if self.lhs_value is not None:
            out["lhs"] = self.lhs_value
        if self.rhs_value is not None:
            out["rhs"] = self.rhs_value
        if self.boundary is not None:
            out["boundary"] = self.boundary
        return out


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _target_side(rule: HarnessRule, root: Compare | None) -> str:
    if root is None:
        return ""
    in_lhs = rule.target_field in E.free_vars(root.left)
    in_rhs = rule.target_field in E.free_vars(root.right)
    if in_lhs and in_rhs:
        return "both"
    if in_lhs:
        return "lhs"
    if in_rhs:
        return "rhs"
    return ""


def assert_rule(rule: HarnessRule, facts: FactMap) -> Verdict:
    """Evaluate one rule against a complete fact map. Never throws: an
    evaluation failure becomes an ERROR verdict carrying the failure class."""
    root = E.comparison_root(rule.assertion)
    side = _target_side(rule, root)
    if root is not None:
        try:
            lhs = E.evaluate(root.left, facts)
            rhs = E.evaluate(root.right, facts)
            result = E.evaluate(rule.assertion, facts)
        except E.EvalError as exc:
            return Verdict(
                rule_id=rule.id,
                status=VerdictStatus.ERROR,
                comparison=root.op,
                trace=f"{rule.id}: {exc} → ERROR",
                severity=rule.severity,
                target_field=rule.target_field,
                target_side=side,
            )
        status = VerdictStatus.PASS if result else VerdictStatus.FAIL
        lhs_f = float(lhs) if not isinstance(lhs, bool) else None
        rhs_f = float(rhs) if not isinstance(rhs, bool) else None
        if lhs_f is not None and rhs_f is not None:
            trace = (
                f"{rule.id}: {rule.lhs_label}={_fmt(lhs_f)} {root.op} "
                f"{rule.rhs_label}={_fmt(rhs_f)} → {status.value}"
            )
        else:
            trace = f"{rule.id}: {lhs} {root.op} {rhs} → {status.value}"
        return Verdict(
            rule_id=rule.id,
            status=status,
            lhs_value=lhs_f,
            rhs_value=rhs_f,
            comparison=root.op,
            trace=trace,
            severity=rule.severity,
            target_field=rule.target_field,
            target_side=side,
        )
    # Non-comparison-rooted assertion: the trace carries the boolean only.
    try:
        result = E.evaluate(rule.assertion, facts)
    except E.EvalError as exc:
        return Verdict(
            rule_id=rule.id,
            status=VerdictStatus.ERROR,
            trace=f"{rule.id}: {exc} → ERROR",
            severity=rule.severity,
            target_field=rule.target_field,
        )
    if not isinstance(result, bool):
        return Verdict(
            rule_id=rule.id,
            status=VerdictStatus.ERROR,
            trace=f"{rule.id}: TypeMismatch(assertion, {result!r}) → ERROR",
            severity=rule.severity,
            target_field=rule.target_field,
        )
    status = VerdictStatus.PASS if result else VerdictStatus.FAIL
    return Verdict(
        rule_id=rule.id,
        status=status,
        trace=f"{rule.id}: {str(result).lower()} → {status.value}",
        severity=rule.severity,
        target_field=rule.target_field,
    )


def assert_all(
    reg: HarnessRegistry,
    facts: FactMap,
    scope_filter: Optional[Iterable[str]] = None,
) -> list[Verdict]:
    """Evaluate every in-scope rule, in registry order.

    With a scope filter, only rules whose scope intersects the filter run;
    rules without a scope are always in scope.
    """
    tags = frozenset(scope_filter) if scope_filter is not None else None
    verdicts = []
    for rule in reg.rules:
        if tags is not None and not rule.in_scope(tags):
            continue
        verdicts.append(assert_rule(rule, facts))
    return verdicts


def render_trace(verdict: Verdict) -> str:
    """Single-line deterministic rendering of a verdict."""
    return verdict.trace


# ---------------------------------------------------------------------------
# Boundary solving


@dataclass(frozen=True)
class BoundaryProbe:
    """Result of probing a rule's truth value along its target variable."""

    value: Optional[float]
    feasible_side: str = ""  # below | above | "" when no boundary
    reason: str = ""  # non-monotone | constant-true | constant-false | error

    @property
    def found(self) -> bool:
        return self.value is not None


def probe_boundary(
    rule: HarnessRule,
    facts: FactMap,
    target: str,
    domain: DecisionVariable,
    tol: float = 1e-9,
) -> BoundaryProbe:
    """Locate the flip point of a rule's truth value across a variable domain.

    The rule is sampled at the domain's declared resolution to establish that
    its truth value is monotone (a single flip); the flip point is then
    located by bisection to `tol`. Non-monotone or constant rules yield no
    boundary, with the reason recorded.
    """
    if target != rule.target_field:
        raise ValueError(f"target {target!r} is not the rule's target field")

    def truth(x: float) -> Optional[bool]:
        env = dict(facts)
        env[target] = x
        try:
            out = E.evaluate(rule.assertion, env)
        except E.EvalError:
            return None
        return bool(out)

    lo, hi = domain.min, domain.max
    if truth(lo) is None or truth(hi) is None:
        return BoundaryProbe(None, reason="error at domain endpoint")

    # Sample grid at declared resolution (integers for integer domains).
    xs: list[float] = []
    x = lo
    while x < hi - 1e-12:
        xs.append(round(x, 12))
        x += domain.resolution
    xs.append(hi)
    states = [truth(x) for x in xs]
    if any(s is None for s in states):
        return BoundaryProbe(None, reason="evaluation error inside domain")
    flips = [i for i in range(1, len(states)) if states[i] != states[i - 1]]
    if not flips:
        reason = "constant-true" if states[0] else "constant-false"
        return BoundaryProbe(None, reason=reason)
    if len(flips) > 1:
        return BoundaryProbe(None, reason="non-monotone")

    i = flips[0]
    a, b = xs[i - 1], xs[i]
    ta = states[i - 1]
    # Bisect the continuous predicate between the bracketing grid points.
    while b - a > tol:
        mid = (a + b) / 2.0
        tm = truth(mid)
        if tm is None:
            return BoundaryProbe(None, reason="evaluation error during bisection")
        if tm == ta:
            a = mid
        else:
            b = mid
    boundary = b  # first point on the flipped side, within tol of the root
    feasible_side = "above" if states[-1] else "below"
    return BoundaryProbe(boundary, feasible_side=feasible_side)


def solve_boundary(
    rule: HarnessRule,
    facts: FactMap,
    target: str,
    domain: DecisionVariable,
    tol: float = 1e-9,
) -> Optional[float]:
    """The value of the target variable at which the rule flips, or None when
    the rule is constant or non-monotone across the domain."""
    return probe_boundary(rule, facts, target, domain, tol).value


def snap_toward_feasible(value: float, feasible_side: str, domain: DecisionVariable) -> float:
    """Snap a continuous boundary onto the domain grid, on the feasible side."""
    import math

    step = 1.0 if domain.integer else domain.resolution
    if feasible_side == "below":
        snapped = math.floor(value / step + 1e-9) * step
    else:
        snapped = math.ceil(value / step - 1e-9) * step
    snapped = min(max(snapped, domain.min), domain.max)
    if domain.integer:
        snapped = float(int(round(snapped)))
    return snapped


def attach_boundary(verdict: Verdict, boundary: Optional[float]) -> Verdict:
    return replace(verdict, boundary=boundary)
