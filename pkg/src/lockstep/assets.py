"""Access to the data files shipped with the package: harness registries,
decomposition plans and problem specs."""

from __future__ import annotations

from pathlib import Path

DATA_DIR = Path(__file__).parent / "data"

BUILTIN_HARNESSES = {
    "ad_paradox": "ad_paradox.yaml",
    "ad_pass": "ad_pass.yaml",
    "ad_legacy": "ad_degradation_legacy.yaml",
    "pharma_paradox": "pharma_paradox.yaml",
    "pharma_pass": "pharma_pass.yaml",
}


def harness_path(name: str) -> Path:
    """Path of a shipped harness by short name, or a filesystem path as-is."""
    if name in BUILTIN_HARNESSES:
        return DATA_DIR / BUILTIN_HARNESSES[name]
    return Path(name)


def plan_path(name: str) -> Path:
    p = DATA_DIR / "plans" / f"{name}.json"
    return p if p.exists() else Path(name)


def problem_path(name: str) -> Path:
    p = DATA_DIR / "problems" / f"{name}.json"
    return p if p.exists() else Path(name)
