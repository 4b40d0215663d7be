"""Problem instances for cost-aware sequential hypothesis testing.

A problem instance is a grid of observation distributions (one per
hypothesis/action pair), a strictly positive cost per action, and a prior
over hypotheses.  All information quantities are measured in bits; the
single nats-to-bits conversion happens at the closed-form boundary in
:func:`kld`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np

LN2 = math.log(2.0)

#: Smallest KLD (bits) accepted as "strictly positive" by the separation
#: check.  A true dichotomy between 0 and >0 is not machine-testable.
DEFAULT_SEPARATION_FLOOR = 1e-9


class ModelError(ValueError):
    """An observation model or divergence is invalid (e.g. infinite KLD)."""


class InstanceError(ValueError):
    """A problem instance cannot support the requested computation."""


@dataclass(frozen=True)
class Gaussian:
    """Scalar normal observation model N(mean, variance)."""

    mean: float
    variance: float

    def __post_init__(self):
        if not np.isfinite(self.mean):
            raise ModelError(f"Gaussian mean must be finite, got {self.mean}")
        if not (np.isfinite(self.variance) and self.variance > 0.0):
            raise ModelError(f"Gaussian variance must be positive, got {self.variance}")


@dataclass(frozen=True)
class Categorical:
    """Distribution over a finite alphabet {0, ..., K-1}."""

    probabilities: tuple[float, ...]

    def __init__(self, probabilities):
        probs = tuple(float(p) for p in np.asarray(probabilities, dtype=float).ravel())
        if len(probs) == 0:
            raise ModelError("Categorical needs a nonempty alphabet")
        if any(p < 0.0 or not np.isfinite(p) for p in probs):
            raise ModelError(f"Categorical probabilities must be nonnegative, got {probs}")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ModelError(f"Categorical probabilities sum to {sum(probs)!r}, not 1")
        object.__setattr__(self, "probabilities", probs)

    @property
    def alphabet_size(self) -> int:
        return len(self.probabilities)


ObservationModel = Union[Gaussian, Categorical]


def _same_family(p: ObservationModel, q: ObservationModel) -> bool:
    if isinstance(p, Gaussian) and isinstance(q, Gaussian):
        return True
    if isinstance(p, Categorical) and isinstance(q, Categorical):
        return p.alphabet_size == q.alphabet_size
    return False


def kld(p: ObservationModel, q: ObservationModel) -> float:
    """KL divergence D(p || q) in bits.

    Gaussian pairs use the closed form; categorical pairs use the defining
    sum.  A categorical pair whose divergence is infinite (mass of p outside
    the support of q) is rejected rather than capped, since downstream
    optimization cannot absorb infinities.
    """
    if not _same_family(p, q):
        raise ValueError(f"kld arguments must share family and alphabet: {p!r} vs {q!r}")
    if isinstance(p, Gaussian):
        nats = ((p.mean - q.mean) ** 2 + p.variance - q.variance) / (2.0 * q.variance)
        nats += 0.5 * math.log(q.variance / p.variance)
        bits = nats / LN2
        return bits if bits > 0.0 else 0.0
    bits = 0.0
    for pi, qi in zip(p.probabilities, q.probabilities):
        if pi == 0.0:
            continue
        if qi == 0.0:
            raise ModelError("infinite divergence: support of p not contained in support of q")
        bits += pi * math.log2(pi / qi)
    # Tiny negative values can arise from rounding when p == q termwise.
    return bits if bits > 0.0 else 0.0


@dataclass(frozen=True)
class ProblemInstance:
    """Hypotheses x actions observation grid with per-action costs.

    ``models[i][a]`` is the distribution of a sample obtained by taking
    action ``a`` when hypothesis ``i`` is true.  Within one action all
    hypotheses share a family and alphabet so samples are comparable.
    """

    models: tuple[tuple[ObservationModel, ...], ...]
    costs: np.ndarray
    prior: np.ndarray

    def __init__(self, models, costs, prior=None):
        grid = tuple(tuple(row) for row in models)
        if len(grid) == 0 or len(grid[0]) == 0:
            raise InstanceError("need at least one hypothesis and one action")
        num_actions = len(grid[0])
        if any(len(row) != num_actions for row in grid):
            raise InstanceError("ragged model grid")
        for a in range(num_actions):
            ref = grid[0][a]
            for i, row in enumerate(grid):
                if not _same_family(ref, row[a]):
                    raise InstanceError(
                        f"action {a}: hypothesis {i} model family/alphabet differs from hypothesis 0"
                    )
        costs = np.asarray(costs, dtype=float).ravel()
        if costs.shape != (num_actions,):
            raise InstanceError(f"costs must have length {num_actions}, got {costs.shape}")
        if not np.all(np.isfinite(costs)) or np.any(costs <= 0.0):
            raise InstanceError("every action cost must lie in (0, inf)")
        H = len(grid)
        if prior is None:
            prior = np.full(H, 1.0 / H)
        prior = np.asarray(prior, dtype=float).ravel()
        if prior.shape != (H,) or np.any(prior < 0.0) or abs(prior.sum() - 1.0) > 1e-9:
            raise InstanceError("prior must be a probability vector over the hypotheses")
        costs.flags.writeable = False
        prior.flags.writeable = False
        object.__setattr__(self, "models", grid)
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "prior", prior)

    @property
    def num_hypotheses(self) -> int:
        return len(self.models)

    @property
    def num_actions(self) -> int:
        return len(self.models[0])


@dataclass(frozen=True)
class KldTensor:
    """All pairwise divergences D(f_i^a || f_j^a), in bits.

    ``values[i, j, a]`` is the divergence of hypothesis i's model from
    hypothesis j's model under action a.  Entries are finite and
    nonnegative with an exactly zero diagonal.
    """

    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 3 or v.shape[0] != v.shape[1]:
            raise ValueError(f"expected (H, H, A) tensor, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0.0):
            raise ValueError("divergences must be finite and nonnegative")
        if np.any(v[np.arange(v.shape[0]), np.arange(v.shape[0]), :] != 0.0):
            raise ValueError("diagonal of the divergence tensor must be exactly zero")

    @property
    def num_hypotheses(self) -> int:
        return self.values.shape[0]

    @property
    def num_actions(self) -> int:
        return self.values.shape[2]

    def rows_for(self, i: int) -> np.ndarray:
        """The (H-1) x A matrix of d_ij rows for all j != i."""
        keep = [j for j in range(self.num_hypotheses) if j != i]
        return self.values[i, keep, :]


def build_kld_tensor(inst: ProblemInstance) -> KldTensor:
    """Divergence tensor of a problem instance."""
    H, A = inst.num_hypotheses, inst.num_actions
    values = np.zeros((H, H, A))
    for i in range(H):
        for j in range(H):
            if i == j:
                continue
            for a in range(A):
                try:
                    values[i, j, a] = kld(inst.models[i][a], inst.models[j][a])
                except ModelError as exc:
                    raise ModelError(f"(i={i}, j={j}, a={a}): {exc}") from exc
    values.flags.writeable = False
    return KldTensor(values)


class Violation(NamedTuple):
    i: Optional[int]
    j: Optional[int]
    a: Optional[int]
    reason: str


@dataclass(frozen=True)
class AssumptionReport:
    """Machine-testable verdicts for the separation/validity/LLR-moment assumptions.

    ``llr_second_moment_nats`` is the tightest analytic bound on
    E[|log f_i/f_j|^2] under f_i over all pairs and actions, computed with
    natural logs; the bits variant divides by ln(2)^2.
    """

    separation_ok: bool
    validity_ok: bool
    llr_second_moment_nats: float
    violations: tuple[Violation, ...]
    separation_floor: float = DEFAULT_SEPARATION_FLOOR

    @property
    def llr_second_moment_bits(self) -> float:
        return self.llr_second_moment_nats / (LN2 * LN2)

    @property
    def all_ok(self) -> bool:
        return self.separation_ok and self.validity_ok


def _gaussian_llr_second_moment(p: Gaussian, q: Gaussian) -> float:
    """E[(ln f_p(X)/f_q(X))^2] for X ~ p, in nats^2.

    Write the log-ratio as alpha + gamma*Z + kappa*Z^2 with Z standard
    normal; the moment is alpha^2 + gamma^2 + 3 kappa^2 + 2 alpha kappa.
    """
    delta = p.mean - q.mean
    alpha = 0.5 * math.log(q.variance / p.variance) + delta * delta / (2.0 * q.variance)
    gamma = delta * math.sqrt(p.variance) / q.variance
    kappa = p.variance / (2.0 * q.variance) - 0.5
    return alpha * alpha + gamma * gamma + 3.0 * kappa * kappa + 2.0 * alpha * kappa


def _categorical_llr_second_moment(p: Categorical, q: Categorical) -> float:
    total = 0.0
    for pi, qi in zip(p.probabilities, q.probabilities):
        if pi == 0.0:
            continue
        if qi == 0.0:
            raise ModelError("infinite LLR second moment: support mismatch")
        total += pi * math.log(pi / qi) ** 2
    return total


def check_assumptions(
    inst: ProblemInstance,
    tensor: KldTensor,
    separation_floor: float = DEFAULT_SEPARATION_FLOOR,
) -> AssumptionReport:
    """Validate the instance against the model assumptions.

    Separation: every divergence is exactly 0 or at least ``separation_floor``
    bits.  Validity: every hypothesis pair is separated by some action, and
    no action is uninformative for all pairs.  Violations are collected, not
    raised.
    """
    H, A = tensor.num_hypotheses, tensor.num_actions
    v = tensor.values
    violations: list[Violation] = []

    positive = v > 0.0
    below_floor = positive & (v < separation_floor)
    for i, j, a in zip(*np.nonzero(below_floor)):
        violations.append(
            Violation(int(i), int(j), int(a), f"divergence {v[i, j, a]:.3e} bits below separation floor")
        )
    separation_ok = not below_floor.any()

    validity_ok = True
    separated = positive.any(axis=2)
    for i in range(H):
        for j in range(H):
            if i != j and not separated[i, j]:
                validity_ok = False
                violations.append(Violation(i, j, None, "no action separates this hypothesis pair"))
    informative_action = positive.any(axis=(0, 1))
    for a in range(A):
        if not informative_action[a]:
            validity_ok = False
            violations.append(Violation(None, None, int(a), "action separates no hypothesis pair"))

    beta = 0.0
    for a in range(A):
        for i in range(H):
            for j in range(H):
                if i == j:
                    continue
                p, q = inst.models[i][a], inst.models[j][a]
                if isinstance(p, Gaussian):
                    m2 = _gaussian_llr_second_moment(p, q)
                else:
                    m2 = _categorical_llr_second_moment(p, q)
                beta = max(beta, m2)

    return AssumptionReport(
        separation_ok=separation_ok,
        validity_ok=validity_ok,
        llr_second_moment_nats=beta,
        violations=tuple(violations),
        separation_floor=separation_floor,
    )
