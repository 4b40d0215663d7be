"""One sequential test run: posterior recursion, stopping, cost accounting.

The posterior is kept in the natural-log domain and renormalized with
log-sum-exp after every sample, so trials survive the very small error
targets (posterior thresholds like 1 - 1e-10) without underflow.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import Categorical, Gaussian, ModelError, ProblemInstance


class TerminationReason(enum.Enum):
    POSTERIOR_THRESHOLD = "posterior-threshold"
    SAMPLE_CAP = "sample-cap"


@dataclass(frozen=True)
class PosteriorState:
    """Natural-log posterior over hypotheses after ``step`` samples."""

    log_posteriors: np.ndarray
    step: int

    def __post_init__(self):
        lse = _logsumexp(self.log_posteriors)
        if not -1e-9 < lse < 1e-9:
            raise ValueError(f"posterior is not normalized (logsumexp = {lse!r})")

    @property
    def posteriors(self) -> np.ndarray:
        return np.exp(self.log_posteriors)


@dataclass(frozen=True)
class TrialRecord:
    """Summary of one sequential test: no per-step trace, only totals."""

    true_theta: int
    decision: int
    num_samples: int
    total_cost: float
    action_counts: np.ndarray
    terminated_by: TerminationReason


def _logsumexp(v: np.ndarray) -> float:
    m = v.max()
    return float(m + math.log(np.exp(v - m).sum()))


class LikelihoodTables:
    """Per-action vectorized log-likelihoods and samplers for one instance.

    Building these once per campaign keeps the per-sample work down to a
    handful of small-array operations.
    """

    def __init__(self, inst: ProblemInstance):
        self.num_hypotheses = inst.num_hypotheses
        self.num_actions = inst.num_actions
        self.log_prior = np.log(inst.prior)
        self._gaussian: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}
        self._categorical: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for a in range(inst.num_actions):
            column = [inst.models[i][a] for i in range(inst.num_hypotheses)]
            if isinstance(column[0], Gaussian):
                means = np.array([m.mean for m in column])
                variances = np.array([m.variance for m in column])
                self._gaussian[a] = (
                    means,
                    0.5 / variances,
                    0.5 * np.log(2.0 * math.pi * variances),
                    np.sqrt(variances),
                )
            else:
                probs = np.array([m.probabilities for m in column])
                with np.errstate(divide="ignore"):
                    log_probs = np.log(probs)
                self._categorical[a] = (log_probs, np.cumsum(probs, axis=1))

    def log_likelihoods(self, action: int, sample) -> np.ndarray:
        """ln f_i^a(sample) for every hypothesis i."""
        gauss = self._gaussian.get(action)
        if gauss is not None:
            means, inv_two_var, log_norm, _ = gauss
            diff = sample - means
            return -(diff * diff) * inv_two_var - log_norm
        log_probs, _ = self._categorical[action]
        return log_probs[:, int(sample)]

    def draw(self, action: int, theta: int, rng: np.random.Generator):
        """One sample from hypothesis ``theta``'s model under ``action``."""
        gauss = self._gaussian.get(action)
        if gauss is not None:
            means, _, _, sds = gauss
            return means[theta] + sds[theta] * rng.standard_normal()
        _, cdfs = self._categorical[action]
        cdf = cdfs[theta]
        return min(int(np.searchsorted(cdf, rng.random(), side="right")), cdf.size - 1)


def initial_state(inst: ProblemInstance) -> PosteriorState:
    return PosteriorState(log_posteriors=np.log(inst.prior), step=0)


def update_posterior(
    state: PosteriorState,
    action: int,
    sample,
    inst: ProblemInstance,
    tables: Optional[LikelihoodTables] = None,
) -> PosteriorState:
    """Bayes update of the log posterior with one (action, sample) pair."""
    if tables is None:
        tables = LikelihoodTables(inst)
    unnorm = state.log_posteriors + tables.log_likelihoods(action, sample)
    if not np.isfinite(unnorm.max()):
        raise ModelError(
            f"every hypothesis assigns zero likelihood to sample {sample!r} under action {action}"
        )
    return PosteriorState(log_posteriors=unnorm - _logsumexp(unnorm), step=state.step + 1)


def run_trial(
    inst: ProblemInstance,
    policy,
    true_theta: int,
    delta: float,
    sample_cap: int = 10**6,
    rng: Optional[np.random.Generator] = None,
    tables: Optional[LikelihoodTables] = None,
) -> TrialRecord:
    """Run one sequential test until a posterior exceeds 1 - delta.

    Each step samples an action from the currently leading hypothesis's
    guiding distribution (posterior argmax, smallest index on ties), draws
    an observation from the true model, and updates the posterior.  The
    stopping inequality is strict, and at least one sample is always taken
    even when the prior already clears the threshold.  Hitting
    ``sample_cap`` is recorded, never raised.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if sample_cap < 1:
        raise ValueError(f"sample_cap must be >= 1, got {sample_cap}")
    if rng is None:
        rng = np.random.default_rng()
    if tables is None:
        tables = LikelihoodTables(inst)

    log_threshold = math.log1p(-delta)
    action_cdfs = policy.action_cdfs
    num_actions = tables.num_actions
    log_post = tables.log_prior.copy()
    counts = np.zeros(num_actions, dtype=np.int64)
    n = 0
    reason = TerminationReason.SAMPLE_CAP
    log = math.log

    while n < sample_cap:
        leader = int(np.argmax(log_post))
        cdf = action_cdfs[leader]
        action = int(np.searchsorted(cdf, rng.random(), side="right"))
        if action >= num_actions:
            action = num_actions - 1
        x = tables.draw(action, true_theta, rng)
        log_post += tables.log_likelihoods(action, x)
        m = log_post.max()
        if not np.isfinite(m):
            raise ModelError(
                f"every hypothesis assigns zero likelihood to sample {x!r} under action {action}"
            )
        log_post -= m + log(np.exp(log_post - m).sum())
        counts[action] += 1
        n += 1
        if n % 64 == 0:
            assert -1e-9 < _logsumexp(log_post) < 1e-9
        if log_post.max() > log_threshold:
            reason = TerminationReason.POSTERIOR_THRESHOLD
            break

    counts.flags.writeable = False
    return TrialRecord(
        true_theta=int(true_theta),
        decision=int(np.argmax(log_post)),
        num_samples=n,
        total_cost=float(inst.costs @ counts),
        action_counts=counts,
        terminated_by=reason,
    )
