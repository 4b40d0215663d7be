"""Guiding action distributions for the three sequential test schemes.

Each scheme fixes, per hypothesis i, one distribution over actions that is
used whenever i leads the posterior:

* classic: maximize the worst-case mean divergence per sample,
* cost-aware: maximize mean divergence per sample divided by mean cost
  per sample (a ratio of expectations),
* bit-per-buck: maximize the worst-case mean of per-action
  divergence-over-cost (the expectation of a ratio; a popular heuristic,
  kept as a baseline).

All distributions are data-independent, so a policy is computed once per
instance and shared across trials.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .fracprog import FractionalProblem, MaximinProblem, solve_fractional, solve_maximin
from .model import InstanceError, KldTensor


class Scheme(enum.Enum):
    CLASSIC_CHERNOFF = "classic"
    COST_AWARE_CHERNOFF = "cost-aware"
    BIT_PER_BUCK = "bit-per-buck"

    @classmethod
    def parse(cls, name: str) -> "Scheme":
        key = name.strip().lower().replace("_", "-")
        for scheme in cls:
            if scheme.value == key:
                return scheme
        raise ValueError(f"unknown scheme {name!r}; expected one of {[s.value for s in cls]}")


#: Stable ordering used for seeding and output layout.
SCHEME_ORDER = (Scheme.CLASSIC_CHERNOFF, Scheme.COST_AWARE_CHERNOFF, Scheme.BIT_PER_BUCK)


@dataclass(frozen=True)
class GuidingPolicy:
    """Per-hypothesis action distributions and their achieved objectives.

    ``objective_values[i]`` is the maximin value (bits/sample) for the
    classic scheme, the cost-scaled maximin value for bit-per-buck, and the
    ratio value (bits per unit cost) for the cost-aware scheme.
    """

    scheme: Scheme
    lambdas: np.ndarray
    objective_values: np.ndarray
    action_cdfs: np.ndarray

    def __init__(self, scheme: Scheme, lambdas, objective_values):
        lambdas = np.asarray(lambdas, dtype=float)
        objective_values = np.asarray(objective_values, dtype=float)
        if lambdas.ndim != 2 or objective_values.shape != (lambdas.shape[0],):
            raise ValueError("lambdas must be (H, A) with one objective value per hypothesis")
        sums = lambdas.sum(axis=1)
        if np.any(lambdas < 0.0) or np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError("each guiding distribution must lie on the action simplex")
        if np.any(objective_values <= 0.0):
            bad = int(np.argmin(objective_values))
            raise InstanceError(
                f"hypothesis {bad}: optimal objective is not strictly positive; "
                "the instance cannot separate it from every alternative"
            )
        cdfs = np.cumsum(lambdas, axis=1)
        for arr in (lambdas, objective_values, cdfs):
            arr.flags.writeable = False
        object.__setattr__(self, "scheme", scheme)
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "objective_values", objective_values)
        object.__setattr__(self, "action_cdfs", cdfs)

    @property
    def num_hypotheses(self) -> int:
        return self.lambdas.shape[0]

    @property
    def num_actions(self) -> int:
        return self.lambdas.shape[1]


def compute_policy(tensor: KldTensor, costs, scheme: Scheme) -> GuidingPolicy:
    """Solve the per-hypothesis program of the given scheme for every hypothesis."""
    costs = np.asarray(costs, dtype=float).ravel()
    H = tensor.num_hypotheses
    if H < 2:
        raise InstanceError("guiding distributions need at least two hypotheses")
    lambdas = np.empty((H, tensor.num_actions))
    values = np.empty(H)
    for i in range(H):
        rows = tensor.rows_for(i)
        dead = np.nonzero(~(rows > 0.0).any(axis=1))[0]
        if dead.size:
            j = dead[0] + (1 if dead[0] >= i else 0)
            raise InstanceError(
                f"hypothesis {i}: no action separates it from hypothesis {j}"
            )
        if scheme is Scheme.CLASSIC_CHERNOFF:
            sol = solve_maximin(MaximinProblem(rows))
        elif scheme is Scheme.BIT_PER_BUCK:
            sol = solve_maximin(MaximinProblem(rows / costs[None, :]))
        elif scheme is Scheme.COST_AWARE_CHERNOFF:
            sol = solve_fractional(FractionalProblem(rows, costs))
        else:
            raise ValueError(f"unhandled scheme {scheme!r}")
        if sol.value <= 0.0:
            raise InstanceError(f"hypothesis {i}: optimal objective value is 0")
        lambdas[i] = sol.lam
        values[i] = sol.value
    return GuidingPolicy(scheme=scheme, lambdas=lambdas, objective_values=values)


def sample_action(policy: GuidingPolicy, leading_hypothesis: int, rng: np.random.Generator) -> int:
    """Draw one action from the leading hypothesis's guiding distribution.

    Inverse-CDF sampling from a single uniform variate, so a given stream
    reproduces the same action sequence bit for bit.
    """
    cdf = policy.action_cdfs[leading_hypothesis]
    idx = int(np.searchsorted(cdf, rng.random(), side="right"))
    return min(idx, policy.num_actions - 1)
