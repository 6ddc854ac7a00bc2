"""Pluggable executor backends.

Scripted policies reproduce the architectural dynamics of generation agents
(boundary chasing, naive reflection without locks, oracle-guided feasibility)
deterministically, with no model in the loop. A schema-validating
parse-with-retry wrapper guards every proposal, and an HTTP chat-completions
client enables live-model runs (never part of the test suite).
"""

from __future__ import annotations

import json
import math
import random
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Optional

from .harness import DecisionVariable
from .planner import NodeContext
from .stats import LedgerEntry

POLICY_BOUNDARY_CHASER = "BOUNDARY_CHASER"
POLICY_NAIVE_REFLECTION = "NAIVE_REFLECTION"
POLICY_FIRST_FEASIBLE = "FIRST_FEASIBLE"
POLICY_CONSTANT = "CONSTANT"
POLICY_NOISY = "NOISY"


class BackendKind(Enum):
    SCRIPTED = "SCRIPTED"
    HTTP_CHAT = "HTTP_CHAT"
    MOCK = "MOCK"


@dataclass(frozen=True)
class ScriptedPolicy:
    name: str
    value: Optional[float] = None  # CONSTANT payload
    base: Optional["ScriptedPolicy"] = None  # NOISY wraps a base policy

    @staticmethod
    def constant(value: float) -> "ScriptedPolicy":
        return ScriptedPolicy(POLICY_CONSTANT, value=value)

    @staticmethod
    def noisy(base: "ScriptedPolicy") -> "ScriptedPolicy":
        return ScriptedPolicy(POLICY_NOISY, base=base)


@dataclass(frozen=True)
class AgentBackend:
    kind: BackendKind
    policy: Optional[ScriptedPolicy] = None
    fixtures: tuple[str, ...] = ()
    endpoint: str = ""
    model: str = ""
    temperature: float = 0.7
    seed: int = 0
    api_key_env: str = "OPENAI_API_KEY"
    timeout_s: float = 30.0

    @staticmethod
    def scripted(policy: ScriptedPolicy) -> "AgentBackend":
        return AgentBackend(kind=BackendKind.SCRIPTED, policy=policy)

    @staticmethod
    def mock(fixtures: list[str]) -> "AgentBackend":
        return AgentBackend(kind=BackendKind.MOCK, fixtures=tuple(fixtures))


class FixtureExhausted(Exception):
    pass


class NetworkError(Exception):
    pass


class HttpStatus(Exception):
    def __init__(self, status: int, body: str = ""):
        self.status = status
        self.body = body
        super().__init__(f"HTTP {status}")


class Timeout(Exception):
    pass


# ---------------------------------------------------------------------------
# The engine-side oracle handed to scripted policies. It models the idealized
# boundary-aware agent: solved boundaries and feasibility witnesses stand in
# for the magnitude reasoning a model would do from gradient feedback.


@dataclass
class PolicyOracle:
    solve: Callable[[str], Optional[tuple[str, float]]]  # field -> (feasible_side, boundary)
    witness: Callable[[], Optional[Mapping[str, float]]]
    defaults: Mapping[str, object] = field(default_factory=dict)
    variables: Mapping[str, DecisionVariable] = field(default_factory=dict)


_NULL_ORACLE = PolicyOracle(solve=lambda field: None, witness=lambda: None)


def _snap(value: float, direction: str, var: Optional[DecisionVariable]) -> float:
    if var is None:
        return value
    step = 1.0 if var.integer else var.resolution
    if direction == "DECREASE":
        snapped = math.floor(value / step + 1e-9) * step
    elif direction == "INCREASE":
        snapped = math.ceil(value / step - 1e-9) * step
    else:
        snapped = round(value / step) * step
    snapped = min(max(snapped, var.min), var.max)
    return float(int(round(snapped))) if var.integer else round(snapped, 10)


def _coerce(value, ftype: str):
    if ftype == "int":
        return int(round(float(value)))
    if ftype == "float":
        return float(value)
    if ftype == "bool":
        return bool(value)
    return str(value)


_SIDE_TO_DIRECTION = {"below": "DECREASE", "above": "INCREASE"}


def _scripted_field_value(
    policy: ScriptedPolicy,
    fname: str,
    ftype: str,
    ctx: NodeContext,
    audit,
    oracle: PolicyOracle,
    rng: random.Random,
):
    var = oracle.variables.get(fname)

    if policy.name == POLICY_NOISY:
        base = _scripted_field_value(policy.base, fname, ftype, ctx, audit, oracle, rng)
        if ftype in ("int", "float") and var is not None:
            jitter = rng.uniform(-var.resolution, var.resolution)
            return _coerce(_snap(float(base) + jitter, "SET", var), ftype)
        return base

    if policy.name == POLICY_CONSTANT:
        if ftype in ("int", "float") and policy.value is not None:
            return _coerce(policy.value, ftype)
        return _default_for(fname, ftype, oracle)

    if policy.name == POLICY_FIRST_FEASIBLE:
        witness = oracle.witness()
        if witness and fname in witness:
            return _coerce(witness[fname], ftype)
        return _default_for(fname, ftype, oracle)

    if policy.name == POLICY_BOUNDARY_CHASER:
        entry = _audit_entry_for(audit, fname)
        if entry is not None and entry.semantic_gradient is not None:
            grad = entry.semantic_gradient
            if grad.magnitude is not None:
                return _coerce(_snap(grad.magnitude, grad.direction.value, var), ftype)
        solved = oracle.solve(fname)
        if solved is not None:
            side, boundary = solved
            return _coerce(_snap(boundary, _SIDE_TO_DIRECTION.get(side, "SET"), var), ftype)
        return _default_for(fname, ftype, oracle)

    if policy.name == POLICY_NAIVE_REFLECTION:
        # Chase only the most recently failed rule; no locks, no memory.
        entry = _last_fail_entry(audit)
        if entry is not None and entry.dimension == fname and entry.semantic_gradient is not None:
            grad = entry.semantic_gradient
            if grad.magnitude is not None:
                return _coerce(_snap(grad.magnitude, grad.direction.value, var), ftype)
        return _default_for(fname, ftype, oracle)

    raise ValueError(f"unknown policy {policy.name!r}")


def _default_for(fname: str, ftype: str, oracle: PolicyOracle):
    if fname in oracle.defaults:
        return _coerce(oracle.defaults[fname], ftype)
    return {"int": 0, "float": 0.0, "bool": False, "text": ""}[ftype]


def _audit_entry_for(audit, fname: str):
    if audit is None:
        return None
    entry = audit.entries.get(fname)
    if entry is not None and entry.status == "FAIL":
        return entry
    return None


def _last_fail_entry(audit):
    if audit is None:
        return None
    last = None
    for entry in audit.entries.values():
        if entry.status == "FAIL":
            last = entry
    return last


def propose(
    backend: AgentBackend,
    ctx: NodeContext,
    audit,
    seed: int,
    oracle: Optional[PolicyOracle] = None,
    attempt: int = 0,
) -> str:
    """One proposal from a backend: raw text intended to parse as the node's
    schema. Scripted backends are pure functions of (policy, seed, ctx, audit)."""
    oracle = oracle or _NULL_ORACLE
    if backend.kind is BackendKind.SCRIPTED:
        assert backend.policy is not None
        audit_tag = json.dumps(audit.to_json_dict(), sort_keys=True) if audit else ""
        rng = random.Random(repr((seed, ctx.node_id, attempt, audit_tag)))
        out = {
            fname: _scripted_field_value(backend.policy, fname, ftype, ctx, audit, oracle, rng)
            for fname, ftype in ctx.expected_schema.items()
        }
        return json.dumps(out, sort_keys=True)
    if backend.kind is BackendKind.MOCK:
        if attempt >= len(backend.fixtures):
            raise FixtureExhausted(f"mock backend has {len(backend.fixtures)} fixtures")
        return backend.fixtures[attempt]
    return call_llm(backend, _chat_messages(backend, ctx, audit))


# ---------------------------------------------------------------------------
# Parsing proposals against the node schema


class ParseFailure(Exception):
    pass


@dataclass(frozen=True)
class ParseOutcome:
    facts: Optional[dict]
    attempts: tuple[str, ...]
    excluded: bool

    @property
    def ok(self) -> bool:
        return self.facts is not None


def parse_facts(text: str, schema: Mapping[str, str], strict: bool = True) -> dict:
    """Strict JSON parse of an executor proposal against the expected schema:
    exact keys, coercible types, no extra keys in strict mode."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseFailure(f"not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ParseFailure("proposal must be a JSON object")
    missing = set(schema) - set(raw)
    if missing:
        raise ParseFailure(f"missing fields: {sorted(missing)}")
    if strict:
        extra = set(raw) - set(schema)
        if extra:
            raise ParseFailure(f"unexpected fields: {sorted(extra)}")
    out: dict = {}
    for fname, ftype in schema.items():
        v = raw[fname]
        if ftype == "float":
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ParseFailure(f"{fname}: expected float, got {v!r}")
            out[fname] = float(v)
        elif ftype == "int":
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ParseFailure(f"{fname}: expected int, got {v!r}")
            if isinstance(v, float) and v != int(v):
                raise ParseFailure(f"{fname}: expected integral value, got {v!r}")
            out[fname] = int(v)
        elif ftype == "bool":
            if not isinstance(v, bool):
                raise ParseFailure(f"{fname}: expected bool, got {v!r}")
            out[fname] = v
        else:
            if not isinstance(v, str):
                raise ParseFailure(f"{fname}: expected text, got {v!r}")
            out[fname] = v
    return out


def parse_with_retry(
    producer: Callable[[int], str],
    parser: Callable[[str], dict],
    max_attempts: int = 3,
) -> ParseOutcome:
    """First output that parses wins; after max_attempts failures the node is
    excluded from the valid denominator (all raw attempts retained)."""
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    attempts: list[str] = []
    for attempt in range(max_attempts):
        text = producer(attempt)
        attempts.append(text)
        try:
            return ParseOutcome(parser(text), tuple(attempts), excluded=False)
        except ParseFailure:
            continue
    return ParseOutcome(None, tuple(attempts), excluded=True)


# ---------------------------------------------------------------------------
# HTTP chat-completions client (live runs only; quarantined from CI)


def _chat_messages(backend: AgentBackend, ctx: NodeContext, audit) -> list[dict]:
    schema_desc = ", ".join(f'"{k}": {t}' for k, t in ctx.expected_schema.items())
    content = (
        f"Task: {ctx.description}\n"
        f"Known inputs: {json.dumps(ctx.facts, sort_keys=True)}\n"
        f"Applicable constraints:\n"
        + "".join(f"- {r.id}: {r.condition}\n" for r in ctx.rules)
        + f"Respond with a single JSON object with exactly these fields: {{{schema_desc}}}."
    )
    messages = [{"role": "user", "content": content}]
    if audit is not None:
        messages.append(
            {"role": "user", "content": "Review feedback:\n" + json.dumps(audit.to_json_dict())}
        )
    return messages


def call_llm(
    backend: AgentBackend,
    messages: list[dict],
    ledger: Optional[list[LedgerEntry]] = None,
    trace: Optional[Callable[[dict], None]] = None,
) -> str:
    """Single request against a chat-completions endpoint. Usage is recorded
    into the cost ledger; the request is logged with credentials redacted."""
    import os

    key = os.environ.get(backend.api_key_env, "")
    body = {
        "model": backend.model,
        "messages": messages,
        "temperature": backend.temperature,
        "seed": backend.seed,
    }
    payload = json.dumps(body).encode("utf-8")
    req = urllib.request.Request(
        backend.endpoint,
        data=payload,
        headers={
            "Content-Type": "application/json",
            "Authorization": f"Bearer {key}",
        },
        method="POST",
    )
    if trace:
        trace({"request": {"endpoint": backend.endpoint, "model": backend.model,
                           "messages": messages, "authorization": "<redacted>"}})
    try:
        with urllib.request.urlopen(req, timeout=backend.timeout_s) as resp:
            data = json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        raise HttpStatus(exc.code, exc.read().decode("utf-8", errors="replace")) from exc
    except TimeoutError as exc:
        raise Timeout(str(exc)) from exc
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, TimeoutError):
            raise Timeout(str(exc)) from exc
        raise NetworkError(str(exc)) from exc
    usage = data.get("usage", {})
    if ledger is not None:
        ledger.append(
            LedgerEntry(
                model=backend.model,
                input_tokens=int(usage.get("prompt_tokens", 0)),
                output_tokens=int(usage.get("completion_tokens", 0)),
            )
        )
    if trace:
        trace({"response": {"usage": usage}})
    try:
        return data["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise NetworkError(f"malformed chat response: {data!r}") from exc
