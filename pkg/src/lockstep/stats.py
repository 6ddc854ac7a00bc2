"""Benchmark statistics: exact binomial confidence intervals, the total-cost
formula, and per-trial cost roll-ups from token ledgers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping


class StatsDomainError(ValueError):
    pass


class UnknownModel(KeyError):
    pass


@dataclass(frozen=True)
class LedgerEntry:
    model: str
    input_tokens: int
    output_tokens: int


@dataclass(frozen=True)
class CostModel:
    """Prices per 1e6 input/output tokens, by model id."""

    prices: Mapping[str, tuple[float, float]]

    def cost(self, model: str, input_tokens: int, output_tokens: int) -> float:
        if model not in self.prices:
            raise UnknownModel(model)
        pin, pout = self.prices[model]
        return pin * input_tokens / 1e6 + pout * output_tokens / 1e6


DEFAULT_COST_MODEL = CostModel(
    prices={
        "gpt-4o": (2.50, 10.00),
        "gpt-4o-mini": (0.15, 0.60),
        "scripted": (0.0, 0.0),
    }
)


def _log_binom_pmf(k: int, n: int, p: float) -> float:
    return (
        math.lgamma(n + 1)
        - math.lgamma(k + 1)
        - math.lgamma(n - k + 1)
        + k * math.log(p)
        + (n - k) * math.log1p(-p)
    )


def _binom_cdf(k: int, n: int, p: float) -> float:
    """P(X <= k) for X ~ Binomial(n, p), in log space for stability."""
    if p <= 0.0:
        return 1.0
    if p >= 1.0:
        return 1.0 if k >= n else 0.0
    if k < 0:
        return 0.0
    if k >= n:
        return 1.0
    terms = [_log_binom_pmf(i, n, p) for i in range(0, k + 1)]
    m = max(terms)
    return math.exp(m) * sum(math.exp(t - m) for t in terms)


def clopper_pearson(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval via bisection on the binomial tail.

    k = n pins the upper bound at 1, k = 0 pins the lower bound at 0.
    Bisection runs to 1e-9, comfortably inside the 1e-6 contract.
    """
    if n < 1 or not (0 <= successes <= n):
        raise StatsDomainError(f"invalid (successes={successes}, n={n})")
    if not (0.0 < confidence < 1.0):
        raise StatsDomainError(f"invalid confidence {confidence}")
    alpha = 1.0 - confidence

    def bisect(fn, target: float, increasing: bool) -> float:
        lo, hi = 0.0, 1.0
        for _ in range(64):
            mid = (lo + hi) / 2.0
            if (fn(mid) < target) == increasing:
                hi = mid
            else:
                lo = mid
            if hi - lo < 1e-9:
                break
        return (lo + hi) / 2.0

    if successes == 0:
        low = 0.0
    else:
        # lower bound: P(X >= k | p) = alpha/2, increasing in p
        low = bisect(lambda p: 1.0 - _binom_cdf(successes - 1, n, p), alpha / 2.0, increasing=False)
    if successes == n:
        high = 1.0
    else:
        # upper bound: P(X <= k | p) = alpha/2, decreasing in p
        high = bisect(lambda p: _binom_cdf(successes, n, p), alpha / 2.0, increasing=True)
    return (low, high)


def tco(
    n_loops: float,
    c_inf: float,
    p_fail: float,
    c_cat: float,
    c_hitl: float,
) -> float:
    """Total cost of ownership: inference loops + expected catastrophe cost +
    human-in-the-loop labor."""
    if not (0.0 <= p_fail <= 1.0):
        raise StatsDomainError(f"p_fail must be in [0, 1], got {p_fail}")
    if n_loops < 0 or c_inf < 0 or c_cat < 0 or c_hitl < 0:
        raise StatsDomainError("costs and loop counts must be non-negative")
    return n_loops * c_inf + p_fail * c_cat + c_hitl


def cost_rollup(
    ledger: Iterable[LedgerEntry],
    model: CostModel = DEFAULT_COST_MODEL,
) -> float:
    """Total currency cost of a trial's token ledger. Scripted agents cost 0."""
    return sum(model.cost(e.model, e.input_tokens, e.output_tokens) for e in ledger)
