"""Decomposition plans: validate node graphs, order them deterministically,
and construct per-node firewalled context slices.

A plan is a JSON object with a top-level ``nodes`` mapping (strict: a
top-level list or a missing ``nodes`` key is a schema rejection). Each node
declares its parents, the upstream output fields it may see
(``context_keys``) and the schema of its own output. The context slice built
for a node contains exactly those declared keys and the harness rules whose
scope matches the node's role tags; everything else is invisible. That
invisibility is the firewall.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .expr import FactMap, Value
from .harness import DecisionVariable, HarnessRegistry, HarnessRule

SCHEMA_TYPES = frozenset({"float", "int", "bool", "text"})


class PlanError(Exception):
    pass


class PlanSchemaError(PlanError):
    """The document shape itself is wrong (top-level list, missing nodes key,
    mistyped fields). Distinct from graph-level findings."""


class CycleDetected(PlanError):
    def __init__(self, path: list[str]):
        self.path = path
        super().__init__(" -> ".join(path))


class MissingUpstream(PlanError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"context key {key!r} missing from upstream outputs")


@dataclass(frozen=True)
class RadNode:
    id: str
    parent_id: Optional[str] = None
    parents: tuple[str, ...] = ()
    description: str = ""
    context_keys: tuple[str, ...] = ()
    expected_schema: Mapping[str, str] = field(default_factory=dict)
    role_tags: frozenset[str] = frozenset()

    def all_parents(self) -> tuple[str, ...]:
        out: list[str] = []
        if self.parent_id is not None:
            out.append(self.parent_id)
        for p in self.parents:
            if p not in out:
                out.append(p)
        return tuple(out)


@dataclass(frozen=True)
class RadPlan:
    nodes: Mapping[str, RadNode]

    def node(self, node_id: str) -> RadNode:
        return self.nodes[node_id]

    def roots(self) -> list[str]:
        return [n.id for n in self.nodes.values() if not n.all_parents()]


def plan_from_json(text: str) -> RadPlan:
    """Strict parse of the plan wire format.

    The root must be an object carrying a ``nodes`` object; anything else
    (top-level list, missing key, non-object nodes) is a PlanSchemaError.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PlanSchemaError(f"not valid JSON: {exc}") from exc
    return plan_from_obj(raw)


def plan_from_obj(raw: object) -> RadPlan:
    if isinstance(raw, list):
        raise PlanSchemaError("root object wrapped in a top-level list")
    if not isinstance(raw, dict):
        raise PlanSchemaError("root must be a JSON object")
    if "nodes" not in raw:
        raise PlanSchemaError("missing 'nodes' key")
    nodes_raw = raw["nodes"]
    if not isinstance(nodes_raw, dict):
        raise PlanSchemaError("'nodes' must be an object keyed by node id")
    nodes: dict[str, RadNode] = {}
    for key, body in nodes_raw.items():
        if not isinstance(body, dict):
            raise PlanSchemaError(f"node {key!r} must be an object")
        node_id = str(body.get("id", key))
        parent = body.get("parent_id")
        if parent is not None and not isinstance(parent, str):
            raise PlanSchemaError(f"node {key!r}: parent_id must be a string or null")
        parents_raw = body.get("parents", [])
        if not isinstance(parents_raw, list):
            raise PlanSchemaError(f"node {key!r}: parents must be a list")
        ctx_raw = body.get("context_keys", [])
        if not isinstance(ctx_raw, list):
            raise PlanSchemaError(f"node {key!r}: context_keys must be a list")
        schema_raw = body.get("expected_schema", {})
        if not isinstance(schema_raw, dict):
            raise PlanSchemaError(f"node {key!r}: expected_schema must be an object")
        tags_raw = body.get("role_tags", [])
        if not isinstance(tags_raw, list):
            raise PlanSchemaError(f"node {key!r}: role_tags must be a list")
        nodes[key] = RadNode(
            id=node_id,
            parent_id=parent,
            parents=tuple(str(p) for p in parents_raw),
            description=str(body.get("description", "")),
            context_keys=tuple(str(c) for c in ctx_raw),
            expected_schema={str(k): str(v) for k, v in schema_raw.items()},
            role_tags=frozenset(str(t) for t in tags_raw),
        )
    return RadPlan(nodes=nodes)


def plan_to_obj(plan: RadPlan) -> dict:
    return {
        "nodes": {
            node.id: {
                "id": node.id,
                "parent_id": node.parent_id,
                **({"parents": list(node.parents)} if node.parents else {}),
                "description": node.description,
                "context_keys": list(node.context_keys),
                "expected_schema": dict(node.expected_schema),
                **({"role_tags": sorted(node.role_tags)} if node.role_tags else {}),
            }
            for node in plan.nodes.values()
        }
    }


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class PlanFinding:
    kind: str
    subject: str
    detail: str = ""


@dataclass(frozen=True)
class PlanReport:
    findings: tuple[PlanFinding, ...]

    @property
    def ok(self) -> bool:
        return not self.findings

    def kinds(self) -> frozenset[str]:
        return frozenset(f.kind for f in self.findings)


def ancestors(plan: RadPlan, node_id: str) -> frozenset[str]:
    seen: set[str] = set()
    stack = list(plan.nodes[node_id].all_parents())
    while stack:
        cur = stack.pop()
        if cur in seen or cur not in plan.nodes:
            continue
        seen.add(cur)
        stack.extend(plan.nodes[cur].all_parents())
    return frozenset(seen)


def _find_cycle(plan: RadPlan) -> Optional[list[str]]:
    WHITE, GREY, BLACK = 0, 1, 2
    color = {nid: WHITE for nid in plan.nodes}
    # children adjacency
    children: dict[str, list[str]] = {nid: [] for nid in plan.nodes}
    for node in plan.nodes.values():
        for p in node.all_parents():
            if p in children:
                children[p].append(node.id)

    path: list[str] = []

    def visit(nid: str) -> Optional[list[str]]:
        color[nid] = GREY
        path.append(nid)
        for child in sorted(children[nid]):
            if color[child] == GREY:
                return path[path.index(child):] + [child]
            if color[child] == WHITE:
                found = visit(child)
                if found:
                    return found
        path.pop()
        color[nid] = BLACK
        return None

    for nid in sorted(plan.nodes):
        if color[nid] == WHITE:
            found = visit(nid)
            if found:
                return found
    return None


def validate_plan(plan: RadPlan) -> PlanReport:
    """Structural checks that make the topological sort well-defined."""
    findings: list[PlanFinding] = []
    ids_seen: set[str] = set()
    for key, node in plan.nodes.items():
        if node.id != key:
            findings.append(PlanFinding("NodeIdMismatch", key, node.id))
        if node.id in ids_seen:
            findings.append(PlanFinding("DuplicateNodeId", node.id))
        ids_seen.add(node.id)
        for p in node.all_parents():
            if p not in plan.nodes:
                findings.append(PlanFinding("DanglingParent", node.id, p))
        for fname, ftype in node.expected_schema.items():
            if ftype not in SCHEMA_TYPES:
                findings.append(PlanFinding("UnknownFieldType", node.id, f"{fname}: {ftype}"))

    cycle = _find_cycle(plan)
    if cycle:
        findings.append(PlanFinding("CycleDetected", cycle[0], " -> ".join(cycle)))
    else:
        if plan.nodes and not plan.roots():
            findings.append(PlanFinding("NoRoot", "<plan>"))
        # Context keys must be exported by some ancestor (any ancestor, not
        # just the direct parent).
        for node in plan.nodes.values():
            exported: set[str] = set()
            for anc in ancestors(plan, node.id):
                exported |= set(plan.nodes[anc].expected_schema)
            for key in node.context_keys:
                if key not in exported:
                    findings.append(PlanFinding("UnsatisfiedContextKey", node.id, key))
    return PlanReport(tuple(findings))


def topo_order(plan: RadPlan) -> list[str]:
    """Deterministic topological order: every node after all its parents,
    ties broken by lexicographic node id."""
    import heapq

    indegree: dict[str, int] = {}
    children: dict[str, list[str]] = {nid: [] for nid in plan.nodes}
    for node in plan.nodes.values():
        parents = [p for p in node.all_parents() if p in plan.nodes]
        indegree[node.id] = len(parents)
        for p in parents:
            children[p].append(node.id)
    ready = [nid for nid, deg in indegree.items() if deg == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        nid = heapq.heappop(ready)
        order.append(nid)
        for child in children[nid]:
            indegree[child] -= 1
            if indegree[child] == 0:
                heapq.heappush(ready, child)
    if len(order) != len(plan.nodes):
        cycle = _find_cycle(plan)
        raise CycleDetected(cycle or sorted(set(plan.nodes) - set(order)))
    return order


# ---------------------------------------------------------------------------
# Context slices (the firewall)


@dataclass(frozen=True)
class NodeContext:
    node_id: str
    description: str
    facts: dict[str, Value]
    rules: tuple[HarnessRule, ...]
    expected_schema: Mapping[str, str]
    variables: tuple[DecisionVariable, ...] = ()


def context_slice(
    plan: RadPlan,
    node_id: str,
    upstream_outputs: FactMap,
    reg: HarnessRegistry,
) -> NodeContext:
    """Build the firewalled context for one node.

    The slice contains exactly the node's declared context keys (nothing
    else from upstream), the rules whose scope intersects the node's role
    tags (rules without a scope are global), and the decision-variable
    declarations for the node's own output fields. Registry constants are
    never part of the slice.
    """
    node = plan.nodes[node_id]
    facts: dict[str, Value] = {}
    for key in node.context_keys:
        if key not in upstream_outputs:
            raise MissingUpstream(key)
        facts[key] = upstream_outputs[key]
    rules = tuple(r for r in reg.rules if r.in_scope(node.role_tags))
    variables = tuple(v for v in reg.variables if v.name in node.expected_schema)
    return NodeContext(
        node_id=node_id,
        description=node.description,
        facts=facts,
        rules=rules,
        expected_schema=dict(node.expected_schema),
        variables=variables,
    )
