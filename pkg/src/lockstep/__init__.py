"""lockstep: deterministic constraint-convergence orchestration.

Decomposes a requirements task into an atomic DAG, drives pluggable executor
agents through a closed loop of deterministic assertion checks, structured
correction gradients and state locking, and either converges to a fully
verified artifact or proves the constraint set irreconcilable and emits a
quantified resolution menu for human authorization.
"""

__version__ = "0.1.0"

from .expr import evaluate, free_vars, parse, translate_legacy  # noqa: F401
from .harness import (  # noqa: F401
    HarnessRegistry,
    HarnessRule,
    OverrideRecord,
    apply_override,
    load_registry,
    load_registry_file,
    meta_validate,
    save_registry,
    validate_registry,
)
from .engine import (  # noqa: F401
    Verdict,
    VerdictStatus,
    assert_all,
    assert_rule,
    render_trace,
    solve_boundary,
)
from .planner import (  # noqa: F401
    RadNode,
    RadPlan,
    context_slice,
    plan_from_json,
    topo_order,
    validate_plan,
)
from .controller import (  # noqa: F401
    AgentSet,
    ProblemSpec,
    RunConfig,
    RunState,
    RunStatus,
    check_monotonic,
    enforce_locks,
    load_problem,
    run_pipeline,
    synthesize_gradient,
)
from .feasibility import (  # noqa: F401
    FeasibilityResult,
    ResolutionOption,
    apply_resolution,
    evidence_package,
    feasible,
    minimal_unsat_subset,
    resolution_menu,
)
from .agents import AgentBackend, ScriptedPolicy, parse_with_retry, propose  # noqa: F401
from .stats import clopper_pearson, cost_rollup, tco  # noqa: F401
from .bench import BenchSpec, classify_failure, resolve_bench, run_benchmark  # noqa: F401
