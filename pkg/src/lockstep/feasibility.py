"""Deterministic satisfiability analysis over declared decision variables.

The oracle is an exhaustive grid scan at each variable's declared resolution,
with one level of local refinement around near-miss points before declaring
UNSAT. Witnesses found by the vectorized scan are always re-verified through
the scalar assertion engine, so the fast path can never smuggle in a false
SAT. On top of the oracle sit minimal-unsatisfiable-subset extraction, the
quantified resolution menu, and the deadlock evidence package.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, Iterable, Mapping, Optional

import numpy as np

from . import expr as E
from .engine import (
    VerdictStatus,
    assert_rule,
    probe_boundary,
    snap_toward_feasible,
)
from .harness import (
    DecisionVariable,
    HarnessRegistry,
    HarnessRule,
    OverrideRecord,
    apply_override,
)

if TYPE_CHECKING:  # pragma: no cover
    from .controller import RunState


class FeasibilityError(Exception):
    pass


class UndeclaredVariable(FeasibilityError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"variable {name!r} is not declared and not fixed")


class NotUnsat(FeasibilityError):
    pass


class WrongStatus(FeasibilityError):
    pass


@dataclass(frozen=True)
class FeasibilityResult:
    verdict: str  # SAT | UNSAT
    witness: Optional[dict[str, float]]
    scanned_points: int
    refinement_depth: int

    @property
    def sat(self) -> bool:
        return self.verdict == "SAT"


class ResolutionKind:
    REPORT_DEADLOCK = "REPORT_DEADLOCK"
    RELAX_PARAMETER = "RELAX_PARAMETER"
    STRUCTURAL_CHANGE = "STRUCTURAL_CHANGE"


@dataclass(frozen=True)
class ResolutionOption:
    label: str
    kind: str
    rule_id: Optional[str] = None
    parameter: Optional[str] = None
    minimal_new_value: Optional[float] = None
    resulting_witness: Optional[dict[str, float]] = None
    impact_note: str = ""

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "kind": self.kind,
            "rule_id": self.rule_id,
            "parameter": self.parameter,
            "minimal_new_value": self.minimal_new_value,
            "resulting_witness": self.resulting_witness,
            "impact_note": self.impact_note,
        }


# ---------------------------------------------------------------------------
# Vectorized expression evaluation
#
# The scalar evaluator in expr.py is the reference semantics. This compiler
# maps the same AST onto numpy array operations for grid scans; points where
# evaluation is undefined become non-finite and can never count as passing.

_NP_FUNCS = {
    "exp": np.exp,
    "ln": np.log,
    "log10": np.log10,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
}


def _np_eval(expr: E.Expr, env: Mapping[str, object]):
    if isinstance(expr, E.Num):
        return expr.value
    if isinstance(expr, E.Var):
        return env[expr.name]
    if isinstance(expr, E.Neg):
        return np.negative(_np_eval(expr.operand, env))
    if isinstance(expr, E.BinOp):
        left = _np_eval(expr.left, env)
        right = _np_eval(expr.right, env)
        if expr.op == "+":
            return np.add(left, right)
        if expr.op == "-":
            return np.subtract(left, right)
        if expr.op == "*":
            return np.multiply(left, right)
        if expr.op == "/":
            return np.divide(left, right)
        return np.power(left, right)
    if isinstance(expr, E.Compare):
        left = _np_eval(expr.left, env)
        right = _np_eval(expr.right, env)
        if expr.op == "<":
            out = np.less(left, right)
        elif expr.op == "<=":
            out = np.less_equal(left, right)
        elif expr.op == ">":
            out = np.greater(left, right)
        elif expr.op == ">=":
            out = np.greater_equal(left, right)
        elif expr.op == "==":
            out = np.equal(left, right)
        else:
            out = np.not_equal(left, right)
        # Poisoned (non-finite) operands never satisfy a comparison.
        if not (getattr(left, "dtype", None) == np.bool_ or isinstance(left, bool)):
            out = out & np.isfinite(left) & np.isfinite(right)
        return out
    if isinstance(expr, E.BoolOp):
        left = _np_eval(expr.left, env)
        right = _np_eval(expr.right, env)
        return np.logical_and(left, right) if expr.op == "and" else np.logical_or(left, right)
    if isinstance(expr, E.Not):
        return np.logical_not(_np_eval(expr.operand, env))
    if isinstance(expr, E.Call):
        args = [_np_eval(a, env) for a in expr.args]
        return _NP_FUNCS[expr.func](*args)
    raise AssertionError(f"unknown node {expr!r}")


def _rule_mask(rule: HarnessRule, env: Mapping[str, object]) -> np.ndarray:
    with np.errstate(all="ignore"):
        out = _np_eval(rule.assertion, env)
    return np.asarray(out, dtype=bool)


def _rule_margin(rule: HarnessRule, env: Mapping[str, object]) -> Optional[np.ndarray]:
    """|lhs - rhs| for comparison-rooted rules; distance to the flip surface."""
    root = E.comparison_root(rule.assertion)
    if root is None:
        return None
    with np.errstate(all="ignore"):
        lhs = _np_eval(root.left, env)
        rhs = _np_eval(root.right, env)
        margin = np.abs(np.subtract(lhs, rhs))
    margin = np.asarray(margin, dtype=float)
    margin[~np.isfinite(margin)] = np.inf
    return margin


def _grid_values(var: DecisionVariable) -> np.ndarray:
    if var.integer:
        step = max(1.0, round(var.resolution))
        start = math.ceil(var.min)
        return np.arange(start, math.floor(var.max) + 0.5, step, dtype=float)
    n = int(round((var.max - var.min) / var.resolution)) + 1
    vals = var.min + var.resolution * np.arange(n, dtype=float)
    return np.round(np.minimum(vals, var.max), 10)


# ---------------------------------------------------------------------------
# The feasibility oracle


_REFINE_TOP_K = 512


def _subset_rules(reg: HarnessRegistry, rule_subset: Optional[Iterable[str]]) -> list[HarnessRule]:
    if rule_subset is None:
        return list(reg.rules)
    wanted = frozenset(rule_subset)
    unknown = wanted - frozenset(reg.rule_ids())
    if unknown:
        raise KeyError(f"unknown rule ids: {sorted(unknown)}")
    return [r for r in reg.rules if r.id in wanted]


def _scalar_all_pass(rules: list[HarnessRule], env: Mapping[str, E.Value]) -> bool:
    return all(assert_rule(r, env).status is VerdictStatus.PASS for r in rules)


_feasible_cache: dict[tuple, FeasibilityResult] = {}


def clear_caches() -> None:
    _feasible_cache.clear()
    _mus_cache.clear()
    _menu_cache.clear()


def feasible(
    reg: HarnessRegistry,
    rule_subset: Optional[Iterable[str]] = None,
    fixed: Optional[Mapping[str, E.Value]] = None,
) -> FeasibilityResult:
    """Decide whether any grid point over the declared variable domains
    satisfies every rule in the subset.

    Scan order is deterministic: variables in declaration order, ascending;
    the first passing point is returned as the witness (re-verified through
    the scalar engine). Near-miss points (all but one rule passing) trigger
    one local refinement pass at resolution/10 before UNSAT is declared.
    """
    rules = _subset_rules(reg, rule_subset)
    fixed = dict(fixed or {})
    key = (
        reg.fingerprint(),
        tuple(sorted(r.id for r in rules)),
        tuple(sorted((k, repr(v)) for k, v in fixed.items())),
    )
    if key in _feasible_cache:
        return _feasible_cache[key]
    result = _feasible_uncached(reg, rules, fixed)
    _feasible_cache[key] = result
    return result


def _feasible_uncached(
    reg: HarnessRegistry, rules: list[HarnessRule], fixed: dict[str, E.Value]
) -> FeasibilityResult:
    base_env: dict[str, E.Value] = dict(reg.constants)
    base_env.update(fixed)
    needed: set[str] = set()
    for r in rules:
        needed |= E.free_vars(r.assertion)
    unbound = needed - set(base_env)
    declared = reg.variable_names()
    for name in sorted(unbound):
        if name not in declared:
            raise UndeclaredVariable(name)
    scan_vars = [v for v in reg.variables if v.name in unbound]

    if not scan_vars:
        ok = _scalar_all_pass(rules, base_env)
        return FeasibilityResult("SAT" if ok else "UNSAT", {} if ok else None, 1, 0)

    grids = [_grid_values(v) for v in scan_vars]
    shape = tuple(len(g) for g in grids)
    total = int(np.prod(shape))

    # Pass 1: chunked scan along the first variable for the first witness.
    witness = _scan_for_witness(rules, base_env, scan_vars, grids)
    if witness is not None:
        return FeasibilityResult("SAT", witness, total, 0)

    # Pass 2: no coarse witness. Find near-miss points and refine locally.
    refined = _refine_near_misses(rules, base_env, scan_vars, grids)
    if refined is not None:
        return FeasibilityResult("SAT", refined, total, 1)
    depth = 1 if any(not v.integer for v in scan_vars) else 0
    return FeasibilityResult("UNSAT", None, total, depth)


def _env_for_block(
    base_env: Mapping[str, E.Value],
    scan_vars: list[DecisionVariable],
    axes: list[np.ndarray],
) -> dict[str, object]:
    env: dict[str, object] = dict(base_env)
    ndim = len(axes)
    for i, (var, axis) in enumerate(zip(scan_vars, axes)):
        shape = [1] * ndim
        shape[i] = len(axis)
        env[var.name] = axis.reshape(shape)
    return env


def _scan_for_witness(
    rules: list[HarnessRule],
    base_env: Mapping[str, E.Value],
    scan_vars: list[DecisionVariable],
    grids: list[np.ndarray],
) -> Optional[dict[str, float]]:
    first = grids[0]
    rest = grids[1:]
    chunk = max(1, min(len(first), max(1, 200_000 // max(1, int(np.prod([len(g) for g in rest]))))))
    for start in range(0, len(first), chunk):
        axes = [first[start : start + chunk]] + rest
        env = _env_for_block(base_env, scan_vars, axes)
        mask = np.ones(tuple(len(a) for a in axes), dtype=bool)
        for r in rules:
            mask &= _rule_mask(r, env)
            if not mask.any():
                break
        while mask.any():
            flat = int(np.argmax(mask.reshape(-1)))
            idx = np.unravel_index(flat, mask.shape)
            point = {
                v.name: float(axes[i][idx[i]]) for i, v in enumerate(scan_vars)
            }
            check_env = dict(base_env)
            check_env.update(point)
            if _scalar_all_pass(rules, check_env):
                return point
            # Vector/scalar disagreement (non-finite corner): skip the point.
            mask[idx] = False
    return None


def _refine_near_misses(
    rules: list[HarnessRule],
    base_env: Mapping[str, E.Value],
    scan_vars: list[DecisionVariable],
    grids: list[np.ndarray],
) -> Optional[dict[str, float]]:
    if all(v.integer for v in scan_vars):
        return None  # integer grids are already exact

    env = _env_for_block(base_env, scan_vars, grids)
    shape = tuple(len(g) for g in grids)
    masks = [np.broadcast_to(_rule_mask(r, env), shape) for r in rules]
    counts = np.zeros(shape, dtype=np.int16)
    for m in masks:
        counts += m
    near = counts == (len(rules) - 1) if len(rules) > 1 else counts == 0
    if not near.any():
        return None

    # Score each near-miss by the failing rule's distance to its boundary;
    # refine the closest ones first.
    score = np.full(shape, np.inf)
    for r, m in zip(rules, masks):
        margin = _rule_margin(r, env)
        if margin is None:
            continue
        margin = np.broadcast_to(margin, shape)
        score = np.where(~m, np.minimum(score, margin), score)
    flat_near = np.flatnonzero(near.reshape(-1))
    flat_scores = score.reshape(-1)[flat_near]
    order = np.lexsort((flat_near, flat_scores))
    selected = flat_near[order[:_REFINE_TOP_K]]

    fine_axes_cache: dict[tuple[int, int], np.ndarray] = {}

    def fine_axis(var_idx: int, grid_idx: int) -> np.ndarray:
        key = (var_idx, grid_idx)
        if key not in fine_axes_cache:
            var = scan_vars[var_idx]
            center = grids[var_idx][grid_idx]
            if var.integer:
                fine_axes_cache[key] = np.array([center])
            else:
                step = var.resolution / 10.0
                lo = max(var.min, center - var.resolution)
                hi = min(var.max, center + var.resolution)
                n = int(round((hi - lo) / step)) + 1
                fine_axes_cache[key] = np.round(lo + step * np.arange(n), 10)
        return fine_axes_cache[key]

    best: Optional[tuple[tuple[float, ...], dict[str, float]]] = None
    for flat in selected:
        idx = np.unravel_index(int(flat), shape)
        axes = [fine_axis(i, idx[i]) for i in range(len(scan_vars))]
        local_env = _env_for_block(base_env, scan_vars, axes)
        local_shape = tuple(len(a) for a in axes)
        mask = np.ones(local_shape, dtype=bool)
        for r in rules:
            mask &= np.broadcast_to(_rule_mask(r, local_env), local_shape)
            if not mask.any():
                break
        while mask.any():
            f = int(np.argmax(mask.reshape(-1)))
            lidx = np.unravel_index(f, local_shape)
            point = {v.name: float(axes[i][lidx[i]]) for i, v in enumerate(scan_vars)}
            check_env = dict(base_env)
            check_env.update(point)
            if _scalar_all_pass(rules, check_env):
                ordered = tuple(point[v.name] for v in scan_vars)
                if best is None or ordered < best[0]:
                    best = (ordered, point)
                break
            mask[lidx] = False
    return best[1] if best else None


# ---------------------------------------------------------------------------
# Minimal unsatisfiable subset


_mus_cache: dict[tuple, frozenset[str]] = {}


def minimal_unsat_subset(
    reg: HarnessRegistry, in_scope: Optional[Iterable[str]] = None
) -> frozenset[str]:
    """Smallest-cardinality UNSAT subset of the in-scope rules.

    Found by increasing-cardinality enumeration with `feasible` as the
    oracle; lexicographic rule-id order breaks ties. Every proper subset of
    the returned set is verified SAT before returning (the MUS property).
    """
    ids = sorted(r.id for r in _subset_rules(reg, in_scope))
    key = (reg.fingerprint(), tuple(ids))
    if key in _mus_cache:
        return _mus_cache[key]
    if feasible(reg, ids).sat:
        raise NotUnsat(f"rule set {ids} is satisfiable")
    for k in range(1, len(ids) + 1):
        for combo in itertools.combinations(ids, k):
            if not feasible(reg, combo).sat:
                mus = frozenset(combo)
                for proper in itertools.combinations(combo, k - 1):
                    if not feasible(reg, proper).sat:
                        raise FeasibilityError(
                            f"enumeration invariant broken: {proper} is UNSAT"
                        )
                _mus_cache[key] = mus
                return mus
    raise NotUnsat(f"no UNSAT subset found in {ids}")


# ---------------------------------------------------------------------------
# Resolution menu


_menu_cache: dict[tuple, tuple[ResolutionOption, ...]] = {}

_PARAM_STEP = 1e-3  # resolution step for relaxation parameters


def _with_parameter(reg: HarnessRegistry, parameter: str, value: float) -> HarnessRegistry:
    return reg.with_constants({parameter: value})


def _minimal_relaxation(
    reg: HarnessRegistry, mus: frozenset[str], parameter: str
) -> Optional[float]:
    """Smallest move of `parameter` that renders the MUS satisfiable, located
    by geometric probing then bisection to the parameter resolution step."""
    base = float(reg.constants[parameter])
    ids = sorted(mus)

    def sat(x: float) -> bool:
        return feasible(_with_parameter(reg, parameter, x), ids).sat

    step0 = max(abs(base) * 0.05, 0.5)
    found: Optional[tuple[float, float]] = None  # (|delta|, value)
    for sign in (1.0, -1.0):
        for i in range(0, 16):
            candidate = base + sign * step0 * (2.0**i)
            if sat(candidate):
                delta = abs(candidate - base)
                if found is None or delta < found[0]:
                    found = (delta, candidate)
                break
    if found is None:
        return None
    lo, hi = base, found[1]  # lo UNSAT, hi SAT
    while abs(hi - lo) > _PARAM_STEP / 10.0:
        mid = (lo + hi) / 2.0
        if sat(mid):
            hi = mid
        else:
            lo = mid
    return hi


def resolution_menu(
    mus: frozenset[str] | Iterable[str], reg: HarnessRegistry
) -> list[ResolutionOption]:
    """Quantified conflict-resolution options for an unsatisfiable rule set.

    Option A is always the formal deadlock report. Each negotiable rule in
    the MUS yields a RELAX_PARAMETER option carrying the minimal new value
    and the witness it enables; non-negotiable rules yield STRUCTURAL_CHANGE
    placeholders naming the binding constants.
    """
    mus = frozenset(mus)
    key = (reg.fingerprint(), tuple(sorted(mus)))
    if key in _menu_cache:
        return list(_menu_cache[key])

    options: list[ResolutionOption] = [
        ResolutionOption(
            label="A",
            kind=ResolutionKind.REPORT_DEADLOCK,
            impact_note="Formal deadlock report; preserve all constraints (human handover required)",
        )
    ]
    labels = iter("BCDEFGHIJKLMNOP")
    mus_rules = [r for r in reg.rules if r.id in mus]
    for rule in mus_rules:
        if not (rule.negotiable and rule.relaxation_parameter):
            continue
        parameter = rule.relaxation_parameter
        new_value = _minimal_relaxation(reg, mus, parameter)
        if new_value is None:
            continue
        relaxed = _with_parameter(reg, parameter, new_value)
        witness_result = feasible(relaxed)
        witness = witness_result.witness if witness_result.sat else None
        witness_note = ""
        if witness:
            witness_note = "; enables " + ", ".join(
                f"{k}={v:g}" for k, v in sorted(witness.items())
            )
        options.append(
            ResolutionOption(
                label=next(labels),
                kind=ResolutionKind.RELAX_PARAMETER,
                rule_id=rule.id,
                parameter=parameter,
                minimal_new_value=new_value,
                resulting_witness=witness,
                impact_note=(
                    f"Relax {parameter} on {rule.id} from "
                    f"{float(reg.constants[parameter]):g} to {new_value:.4f}{witness_note}"
                ),
            )
        )
    for rule in mus_rules:
        if rule.negotiable and rule.relaxation_parameter:
            continue
        binding = _binding_constants(rule, reg)
        options.append(
            ResolutionOption(
                label=next(labels),
                kind=ResolutionKind.STRUCTURAL_CHANGE,
                rule_id=rule.id,
                impact_note=(
                    f"Structural change on {rule.id}: requires revisiting "
                    f"{', '.join(binding) if binding else 'the underlying system design'} "
                    "(hardware or architecture decision)"
                ),
            )
        )
    result = tuple(options)
    _menu_cache[key] = result
    return list(result)


def _binding_constants(rule: HarnessRule, reg: HarnessRegistry) -> list[str]:
    root = E.comparison_root(rule.assertion)
    consts = frozenset(reg.constants)
    if root is not None:
        lhs_vars = E.free_vars(root.left)
        rhs_vars = E.free_vars(root.right)
        bound_side = rhs_vars if rule.target_field in lhs_vars else lhs_vars
        named = sorted(bound_side & consts)
        if named:
            return named
    return sorted(E.free_vars(rule.assertion) & consts)


def apply_resolution(
    reg: HarnessRegistry,
    option: ResolutionOption,
    actor: str,
    justification: str = "",
) -> tuple[HarnessRegistry, OverrideRecord]:
    """Apply a RELAX_PARAMETER option through the audited override path and
    confirm the relaxed registry is satisfiable."""
    if option.kind != ResolutionKind.RELAX_PARAMETER:
        raise ValueError(f"option {option.label} is not a parameter relaxation")
    assert option.parameter is not None and option.rule_id is not None
    assert option.minimal_new_value is not None
    record = OverrideRecord.now(
        actor=actor,
        rule_id=option.rule_id,
        parameter=option.parameter,
        old_value=float(reg.constants[option.parameter]),
        new_value=option.minimal_new_value,
        justification=justification or option.impact_note,
    )
    relaxed = apply_override(reg, record)
    if not feasible(relaxed).sat:
        raise FeasibilityError(
            f"override of {option.parameter} to {option.minimal_new_value} "
            "did not render the rule set satisfiable"
        )
    return relaxed, record


# ---------------------------------------------------------------------------
# Evidence package


def _status_name(status) -> str:
    return getattr(status, "value", str(status))


def _bound_sentence(
    index: int,
    rule: HarnessRule,
    reg: HarnessRegistry,
    artifact: Mapping[str, E.Value],
) -> tuple[str, dict]:
    try:
        var = reg.variable(rule.target_field)
    except KeyError:
        line = f"  {index}. {rule.id}: constrains {rule.target_field}."
        return line, {"rule_id": rule.id, "variable": rule.target_field}
    facts: dict[str, E.Value] = dict(reg.constants)
    for name, value in artifact.items():
        if name != rule.target_field:
            facts[name] = value
    probe = probe_boundary(rule, facts, rule.target_field, var)
    if not probe.found:
        side = "no feasible value in domain" if probe.reason == "constant-false" else probe.reason
        line = f"  {index}. {rule.id}: {var.display} has {side}."
        return line, {"rule_id": rule.id, "variable": rule.target_field, "bound": None}
    op = ">=" if probe.feasible_side == "above" else "<="
    bound = snap_toward_feasible(probe.value, probe.feasible_side, var)
    unit = f" {var.unit}" if var.unit else ""
    line = f"  {index}. {rule.id}: {var.display} must be {op} {bound:g}{unit}."
    payload = {
        "rule_id": rule.id,
        "variable": rule.target_field,
        "op": op,
        "bound": bound,
        "unit": var.unit,
    }
    return line, payload


def _evidence_probe(
    rule: HarnessRule,
    others: list[HarnessRule],
    reg: HarnessRegistry,
    artifact: Mapping[str, E.Value],
) -> tuple[list[str], dict]:
    lines: list[str] = []
    payload: dict = {"probe_rule": rule.id}
    try:
        var = reg.variable(rule.target_field)
    except KeyError:
        return lines, payload
    facts: dict[str, E.Value] = dict(reg.constants)
    for name, value in artifact.items():
        if name != rule.target_field:
            facts[name] = value
    probe = probe_boundary(rule, facts, rule.target_field, var)
    if not probe.found:
        return lines, payload
    value = snap_toward_feasible(probe.value, probe.feasible_side, var)
    env = dict(facts)
    env[rule.target_field] = value
    unit = f" {var.unit}" if var.unit else ""
    payload.update({"variable": rule.target_field, "value": value})
    for other in others:
        verdict = assert_rule(other, env)
        if verdict.status is VerdictStatus.FAIL:
            name = other.title or other.id
            lines.append(f"  - Attempting {var.display} = {value:g}{unit}: {name} FAIL")
            lines.append(f"    ({verdict.trace})")
            payload["failing"] = {"rule_id": other.id, "trace": verdict.trace}
            break
    return lines, payload


def evidence_package(
    run: "RunState",
    mus: frozenset[str] | Iterable[str],
    menu: list[ResolutionOption],
    reg: HarnessRegistry,
) -> str:
    """Deterministic plain-text deadlock report: header, conflict summary
    with solved bounds, boundary-probe evidence, and the resolution menu.
    Byte-stable for fixed inputs."""
    if _status_name(run.status) != "FAILED_PARADOX":
        raise WrongStatus(f"run status is {_status_name(run.status)}, not FAILED_PARADOX")
    mus = frozenset(mus)
    mus_rules = [r for r in reg.rules if r.id in mus]
    artifact = dict(run.artifact)

    lines = [
        "[SYSTEM DEADLOCK] Formal Paradox Report",
        "Status: FAILED_PARADOX",
        f"Domain: {reg.name}",
        "",
        "--- Conflict Summary ---",
        f"The system has encountered a mathematical deadlock between {len(mus_rules)}",
        "non-negotiable physical red lines:",
    ]
    for i, rule in enumerate(mus_rules, start=1):
        sentence, _ = _bound_sentence(i, rule, reg, artifact)
        lines.append(sentence)
    lines += ["", "--- Evidence ---"]
    for rule in mus_rules:
        others = [r for r in mus_rules if r.id != rule.id]
        probe_lines, _ = _evidence_probe(rule, others, reg, artifact)
        lines.extend(probe_lines)
    lines += [
        "",
        "--- Resolution ---",
        "Human strategic authorization required.",
        "See Strategic Resolution Menu.",
        "",
        "STRATEGIC RESOLUTION OPTIONS:",
    ]
    for option in menu:
        lines.append(f"[{option.label}] {option.impact_note}")
    return "\n".join(lines) + "\n"


def evidence_json(
    run: "RunState",
    mus: frozenset[str] | Iterable[str],
    menu: list[ResolutionOption],
    reg: HarnessRegistry,
) -> dict:
    """The evidence package as structured data, serialized alongside the text."""
    if _status_name(run.status) != "FAILED_PARADOX":
        raise WrongStatus(f"run status is {_status_name(run.status)}, not FAILED_PARADOX")
    mus = frozenset(mus)
    mus_rules = [r for r in reg.rules if r.id in mus]
    artifact = dict(run.artifact)
    conflict = []
    for i, rule in enumerate(mus_rules, start=1):
        _, payload = _bound_sentence(i, rule, reg, artifact)
        conflict.append(payload)
    evidence = []
    for rule in mus_rules:
        others = [r for r in mus_rules if r.id != rule.id]
        _, payload = _evidence_probe(rule, others, reg, artifact)
        evidence.append(payload)
    return {
        "status": "FAILED_PARADOX",
        "domain": reg.name,
        "mus": sorted(mus),
        "conflict": conflict,
        "evidence": evidence,
        "menu": [o.to_json_dict() for o in menu],
    }
