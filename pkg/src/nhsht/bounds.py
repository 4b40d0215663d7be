"""Theoretical cost and sample-count bounds evaluated on an error-target grid.

All bounds are linear (or affinely dominated) in log2(1/delta):

* a full information-theoretic lower bound on the mean sample count, with
  a free parameter eta and an additive second-moment correction,
* its dominating term (mean samples), and the cost-weighted dominating
  term obtained by dividing each hypothesis's best information rate by the
  mean cost of the distribution achieving it (equivalently, maximizing the
  rate-per-cost ratio), and
* an asymptotic upper bound for guided schemes: mean cost per action times
  (1 + epsilon) times the average of log2(1/delta) over the achieved
  per-hypothesis information rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .fracprog import FractionalProblem, MaximinProblem, solve_fractional, solve_maximin
from .model import KldTensor, ProblemInstance, check_assumptions
from .policies import GuidingPolicy, Scheme, compute_policy

DEFAULT_EPSILON = 3.0
DEFAULT_ETA_RULE = "inv-cbrt-log2"


def log2_inv(delta: float) -> float:
    return math.log2(1.0 / delta)


def parse_eta_rule(rule: str) -> tuple[Callable[[float], float], str]:
    """Map an eta-rule name to (callable, human-readable description).

    ``inv-cbrt-log2`` is the default: eta(delta) = log2(1/delta)^(-1/3),
    clamped below 1.  It vanishes as delta -> 0 while eta^2 * log2(1/delta)
    still diverges, which is what the dominating-term argument needs.
    ``const:<x>`` pins eta to a constant in (0, 1).
    """
    if rule == DEFAULT_ETA_RULE:
        def eta(delta: float) -> float:
            return min(log2_inv(delta) ** (-1.0 / 3.0), 1.0 - 1e-6)

        return eta, "eta(delta) = min(log2(1/delta)^(-1/3), 1 - 1e-6)"
    if rule.startswith("const:"):
        value = float(rule.split(":", 1)[1])
        if not 0.0 < value < 1.0:
            raise ValueError(f"constant eta must lie in (0, 1), got {value}")
        return (lambda _delta: value), f"eta(delta) = {value}"
    raise ValueError(f"unknown eta rule {rule!r}")


def information_rate(tensor: KldTensor, lambda_i, i: int) -> float:
    """Worst-case mean divergence per sample (bits) of lambda_i against hypothesis i's alternatives."""
    lam = np.asarray(lambda_i, dtype=float).ravel()
    return float(np.min(tensor.rows_for(i) @ lam))


def per_hypothesis_maximin_bits(tensor: KldTensor) -> np.ndarray:
    """max over the simplex of the information rate, per hypothesis (bits/sample)."""
    return np.array(
        [solve_maximin(MaximinProblem(tensor.rows_for(i)), lexicographic=False).value
         for i in range(tensor.num_hypotheses)]
    )


def per_hypothesis_ratio_values(tensor: KldTensor, costs) -> np.ndarray:
    """max over the simplex of information rate / mean cost, per hypothesis (bits/cost)."""
    costs = np.asarray(costs, dtype=float).ravel()
    return np.array(
        [solve_fractional(FractionalProblem(tensor.rows_for(i), costs), lexicographic=False).value
         for i in range(tensor.num_hypotheses)]
    )


def lower_bound_full(
    inst: ProblemInstance,
    tensor: KldTensor,
    delta: float,
    eta: float,
    beta: float,
    maximin_bits: Optional[np.ndarray] = None,
) -> float:
    """Full lower bound on the mean sample count (may be negative for large delta).

    The additive correction -(H-1) * beta / eta^2 uses beta exactly as
    supplied; see AssumptionReport for the nats/bits variants of the LLR
    second moment.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    if maximin_bits is None:
        maximin_bits = per_hypothesis_maximin_bits(tensor)
    H = tensor.num_hypotheses
    L = log2_inv(delta)
    main = float(np.mean((1.0 - eta) * L / (maximin_bits + eta)))
    main *= 1.0 - 2.0 * (H - 1) * H * delta**eta
    return main - (H - 1) * beta / (eta * eta)


def lower_bound_dominating(
    tensor: KldTensor, delta: float, maximin_bits: Optional[np.ndarray] = None
) -> float:
    """Dominating term of the lower bound: mean of log2(1/delta) over best rates (samples)."""
    if maximin_bits is None:
        maximin_bits = per_hypothesis_maximin_bits(tensor)
    return float(np.mean(log2_inv(delta) / maximin_bits))


def lower_bound_cost_dominating(
    inst: ProblemInstance,
    tensor: KldTensor,
    costs,
    delta: float,
    ratio_values: Optional[np.ndarray] = None,
) -> float:
    """Cost-weighted dominating lower bound on the mean total paid cost."""
    if ratio_values is None:
        ratio_values = per_hypothesis_ratio_values(tensor, costs)
    return float(np.mean(log2_inv(delta) / ratio_values))


def upper_bound_chernoff(
    inst: ProblemInstance,
    tensor: KldTensor,
    policy: GuidingPolicy,
    costs,
    delta: float,
    epsilon: float = DEFAULT_EPSILON,
) -> float:
    """Asymptotic upper bound on the mean total paid cost of a guided scheme.

    Uses the evaluated policy's own guiding distributions both for the mean
    cost per action (averaged over a uniform hypothesis draw) and for the
    per-hypothesis information rates.
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    costs = np.asarray(costs, dtype=float).ravel()
    rates = np.array(
        [information_rate(tensor, policy.lambdas[i], i) for i in range(policy.num_hypotheses)]
    )
    mean_cost = float(np.mean(policy.lambdas @ costs))
    return mean_cost * (1.0 + epsilon) * float(np.mean(log2_inv(delta) / rates))


@dataclass(frozen=True)
class BoundsReport:
    """All bound curves evaluated on a delta grid.

    ``per_hypothesis_terms[i, g]`` is hypothesis i's addend of the
    cost-weighted dominating bound at grid point g, before the 1/H average.
    ``lower_full`` is reported as-is and may be negative where the additive
    correction dominates.
    """

    delta_grid: tuple[float, ...]
    lower_full: np.ndarray
    lower_dominating: np.ndarray
    lower_dominating_cost: np.ndarray
    upper: np.ndarray
    per_hypothesis_terms: np.ndarray
    eta_rule: str
    epsilon: float
    beta: float
    mean_cost_per_action: float


def compute_bounds_report(
    inst: ProblemInstance,
    tensor: KldTensor,
    costs,
    policy: Optional[GuidingPolicy] = None,
    delta_grid=(1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10),
    epsilon: float = DEFAULT_EPSILON,
    eta_rule: str = DEFAULT_ETA_RULE,
    beta: Optional[float] = None,
) -> BoundsReport:
    """Evaluate every bound on the grid.

    ``policy`` feeds the upper bound; when omitted, the cost-aware policy
    is computed here.  ``beta`` defaults to the instance's analytic LLR
    second moment in nats.  When the supplied policy is cost-aware the
    lower/upper sandwich is verified at every grid point.
    """
    costs = np.asarray(costs, dtype=float).ravel()
    if policy is None:
        policy = compute_policy(tensor, costs, Scheme.COST_AWARE_CHERNOFF)
    if beta is None:
        beta = check_assumptions(inst, tensor).llr_second_moment_nats
    eta_fn, eta_desc = parse_eta_rule(eta_rule)

    maximin_bits = per_hypothesis_maximin_bits(tensor)
    ratio_values = per_hypothesis_ratio_values(tensor, costs)
    grid = tuple(float(d) for d in delta_grid)

    lower_full = np.array(
        [lower_bound_full(inst, tensor, d, eta_fn(d), beta, maximin_bits) for d in grid]
    )
    lower_dom = np.array([lower_bound_dominating(tensor, d, maximin_bits) for d in grid])
    lower_dom_cost = np.array(
        [lower_bound_cost_dominating(inst, tensor, costs, d, ratio_values) for d in grid]
    )
    upper = np.array(
        [upper_bound_chernoff(inst, tensor, policy, costs, d, epsilon) for d in grid]
    )
    terms = np.array([[log2_inv(d) / v for d in grid] for v in ratio_values])

    for arr, name in ((lower_full, "lower_full"), (lower_dom, "lower_dominating"),
                      (lower_dom_cost, "lower_dominating_cost"), (upper, "upper")):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"bound curve {name} is not finite on the grid")
    if policy.scheme is Scheme.COST_AWARE_CHERNOFF and np.any(lower_dom_cost > upper):
        raise ValueError("cost-weighted lower bound exceeds the upper bound on the grid")

    mean_cost = float(np.mean(policy.lambdas @ costs))
    return BoundsReport(
        delta_grid=grid,
        lower_full=lower_full,
        lower_dominating=lower_dom,
        lower_dominating_cost=lower_dom_cost,
        upper=upper,
        per_hypothesis_terms=terms,
        eta_rule=eta_desc,
        epsilon=float(epsilon),
        beta=float(beta),
        mean_cost_per_action=mean_cost,
    )
