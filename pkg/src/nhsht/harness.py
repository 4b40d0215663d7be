"""Experiment orchestration: benchmark instance, Monte Carlo campaigns, outputs.

A campaign runs a grid of (scheme, delta) cells, each cell being many
independent sequential-test trials with the true hypothesis redrawn per
trial.  Every trial gets its own child random stream keyed by
(master seed, scheme index, delta index, trial index), so results are
bit-identical no matter how trials are chunked across worker processes.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bounds import (
    DEFAULT_EPSILON,
    DEFAULT_ETA_RULE,
    BoundsReport,
    compute_bounds_report,
    parse_eta_rule,
)
from .engine import LikelihoodTables, TerminationReason, run_trial
from .model import (
    Categorical,
    Gaussian,
    InstanceError,
    ProblemInstance,
    build_kld_tensor,
    check_assumptions,
)
from .policies import SCHEME_ORDER, GuidingPolicy, Scheme, compute_policy

logger = logging.getLogger(__name__)

#: Benchmark cost vector: one cheap probe plus fifteen probes at 10..150.
BENCHMARK_COSTS = np.concatenate([[1.0], np.arange(10.0, 151.0, 10.0)])

DEFAULT_DELTA_GRID = tuple(float(10.0**-k) for k in range(1, 11))
DEFAULT_TRIALS = 50000
DEFAULT_SAMPLE_CAP = 10**6

#: Trials per work unit.  Fixed so chunk boundaries (and thus every floating
#: point reduction) do not depend on the worker count.
_CHUNK = 512


def generate_benchmark_instance(seed: int) -> ProblemInstance:
    """Random 32-hypothesis, 16-action Gaussian benchmark instance.

    Per action, an independent random half of the hypotheses get nominal
    mean 2 and the rest mean 8; every (hypothesis, action) mean is then
    perturbed by independent uniform [-0.1, 0.1] noise.  Hypotheses 0 and 31
    are made indistinguishable under all but the last action by copying the
    first 15 means, and the last action pins mean_0 = 10 - mean_31 so they
    remain separable.  Costs are (1, 10, 20, ..., 150).  Draws whose
    perturbed means land two hypotheses within the floating-point separation
    floor are redrawn (in exact arithmetic such ties have probability zero).
    """
    H, A = 32, 16
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        means = np.empty((H, A))
        for a in range(A):
            perm = rng.permutation(H)
            means[perm[: H // 2], a] = 2.0
            means[perm[H // 2 :], a] = 8.0
        means += rng.uniform(-0.1, 0.1, size=(H, A))
        means[H - 1, : A - 1] = means[0, : A - 1]
        means[0, A - 1] = 10.0 - means[H - 1, A - 1]
        inst = ProblemInstance(
            models=[[Gaussian(float(means[i, a]), 1.0) for a in range(A)] for i in range(H)],
            costs=BENCHMARK_COSTS,
        )
        if check_assumptions(inst, build_kld_tensor(inst)).all_ok:
            return inst
    raise InstanceError("could not draw a benchmark instance passing the assumption checks")


def instance_from_spec(spec: dict) -> ProblemInstance:
    """Build an instance from its config mapping.

    Two forms: ``{"type": "benchmark", "seed": <int>}`` or an inline grid
    ``{"type": "inline", "costs": [...], "models": [[{...}, ...], ...],
    "prior": [...]}`` where each model is
    ``{"family": "gaussian", "mean": m, "variance": v}`` or
    ``{"family": "categorical", "probabilities": [...]}``.
    """
    kind = spec.get("type", "benchmark")
    if kind == "benchmark":
        return generate_benchmark_instance(int(spec.get("seed", 0)))
    if kind != "inline":
        raise ValueError(f"unknown instance type {kind!r}")

    def parse_model(m: dict):
        family = m.get("family")
        if family == "gaussian":
            return Gaussian(float(m["mean"]), float(m["variance"]))
        if family == "categorical":
            return Categorical(m["probabilities"])
        raise ValueError(f"unknown model family {family!r}")

    models = [[parse_model(m) for m in row] for row in spec["models"]]
    return ProblemInstance(models=models, costs=spec["costs"], prior=spec.get("prior"))


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved campaign parameters (see ``from_dict`` for the file form)."""

    instance: dict = field(default_factory=lambda: {"type": "benchmark", "seed": 0})
    schemes: tuple[Scheme, ...] = SCHEME_ORDER
    delta_grid: tuple[float, ...] = DEFAULT_DELTA_GRID
    trials_per_point: int = DEFAULT_TRIALS
    master_seed: int = 0
    sample_cap: int = DEFAULT_SAMPLE_CAP
    epsilon: float = DEFAULT_EPSILON
    eta_rule: str = DEFAULT_ETA_RULE
    beta: Optional[float] = None
    workers: int = 1
    output_dir: str = "out"

    def __post_init__(self):
        if len(self.delta_grid) == 0:
            raise ValueError("delta_grid must not be empty")
        if any(not 0.0 < d < 1.0 for d in self.delta_grid):
            raise ValueError("every delta must lie strictly inside (0, 1)")
        if any(a <= b for a, b in zip(self.delta_grid, self.delta_grid[1:])):
            raise ValueError("delta_grid must be sorted strictly descending")
        if self.trials_per_point < 1:
            raise ValueError("trials_per_point must be >= 1")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if self.sample_cap < 1 or self.workers < 1:
            raise ValueError("sample_cap and workers must be >= 1")
        if len(set(self.schemes)) != len(self.schemes) or len(self.schemes) == 0:
            raise ValueError("schemes must be a nonempty set")
        parse_eta_rule(self.eta_rule)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {
            "instance", "schemes", "delta_grid", "trials_per_point", "master_seed",
            "sample_cap", "epsilon", "eta_rule", "beta", "workers", "output_dir",
        }
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(raw)
        if "schemes" in kwargs:
            schemes = tuple(Scheme.parse(s) for s in kwargs["schemes"])
            kwargs["schemes"] = tuple(s for s in SCHEME_ORDER if s in schemes)
        if "delta_grid" in kwargs:
            kwargs["delta_grid"] = tuple(float(d) for d in kwargs["delta_grid"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "instance": self.instance,
            "schemes": [s.value for s in self.schemes],
            "delta_grid": list(self.delta_grid),
            "trials_per_point": self.trials_per_point,
            "master_seed": self.master_seed,
            "sample_cap": self.sample_cap,
            "epsilon": self.epsilon,
            "eta_rule": self.eta_rule,
            "beta": self.beta,
            "workers": self.workers,
            "output_dir": self.output_dir,
        }


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return ExperimentConfig.from_dict(json.load(fh))


@dataclass(frozen=True)
class CellStats:
    """Aggregates for one (scheme, delta) cell.

    The per-hypothesis arrays expose the conditional decomposition: mean
    total cost recombines exactly as the trial-frequency-weighted sum of
    E[N | theta = i] * E[cost per sample | theta = i].
    """

    scheme: Scheme
    delta: float
    trials: int
    mean_total_cost: float
    std_error: float
    mean_samples: float
    error_rate: float
    mean_cost_per_sample: float
    capped_trials: int
    hypothesis_trials: np.ndarray
    mean_samples_by_hypothesis: np.ndarray
    mean_cost_by_hypothesis: np.ndarray
    cost_per_sample_by_hypothesis: np.ndarray
    mean_cost_recombined: float


@dataclass(frozen=True)
class CampaignResult:
    config: ExperimentConfig
    instance: ProblemInstance
    cells: tuple[CellStats, ...]
    bounds: BoundsReport
    policies: dict[Scheme, GuidingPolicy]

    def cell(self, scheme: Scheme, delta: float) -> CellStats:
        for c in self.cells:
            if c.scheme is scheme and c.delta == delta:
                return c
        raise KeyError((scheme, delta))


# ---------------------------------------------------------------------------
# Trial execution
# ---------------------------------------------------------------------------

def _trial_chunk(inst, tables, policy, delta, sample_cap, master_seed, scheme_idx,
                 delta_idx, start, stop):
    """Run trials [start, stop) of one cell; returns per-trial arrays."""
    size = stop - start
    H = inst.num_hypotheses
    prior_cdf = np.cumsum(inst.prior)
    n = np.empty(size, dtype=np.int64)
    cost = np.empty(size, dtype=np.float64)
    theta = np.empty(size, dtype=np.int64)
    correct = np.empty(size, dtype=bool)
    capped = np.empty(size, dtype=bool)
    counts = np.empty((size, inst.num_actions), dtype=np.int64)
    for k, t in enumerate(range(start, stop)):
        rng = np.random.default_rng(
            np.random.SeedSequence((master_seed, scheme_idx, delta_idx, t))
        )
        true_theta = min(int(np.searchsorted(prior_cdf, rng.random(), side="right")), H - 1)
        rec = run_trial(inst, policy, true_theta, delta, sample_cap, rng, tables)
        n[k] = rec.num_samples
        cost[k] = rec.total_cost
        theta[k] = rec.true_theta
        correct[k] = rec.decision == rec.true_theta
        capped[k] = rec.terminated_by is TerminationReason.SAMPLE_CAP
        counts[k] = rec.action_counts
    return n, cost, theta, correct, capped, counts


_WORKER_STATE: dict = {}


def _worker_init(inst, policies, sample_cap, master_seed):
    _WORKER_STATE["inst"] = inst
    _WORKER_STATE["tables"] = LikelihoodTables(inst)
    _WORKER_STATE["policies"] = policies
    _WORKER_STATE["sample_cap"] = sample_cap
    _WORKER_STATE["master_seed"] = master_seed


def _worker_chunk(task):
    scheme, scheme_idx, delta, delta_idx, start, stop = task
    s = _WORKER_STATE
    return _trial_chunk(
        s["inst"], s["tables"], s["policies"][scheme], delta, s["sample_cap"],
        s["master_seed"], scheme_idx, delta_idx, start, stop,
    )


def _aggregate_cell(scheme, delta, inst, n, cost, theta, correct, capped, counts) -> CellStats:
    trials = n.size
    H = inst.num_hypotheses
    mean_cost = float(cost.mean())
    std_error = float(cost.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0

    hyp_trials = np.bincount(theta, minlength=H)
    sum_n = np.bincount(theta, weights=n, minlength=H)
    sum_cost = np.bincount(theta, weights=cost, minlength=H)
    counts_by_hyp = np.zeros((H, inst.num_actions))
    np.add.at(counts_by_hyp, theta, counts)

    # Accounting identity per hypothesis: sum_a c_a * N_a(theta=i) must be
    # the summed paid cost of those trials.
    recon = counts_by_hyp @ inst.costs
    if not np.allclose(recon, sum_cost, rtol=1e-9, atol=1e-6):
        raise RuntimeError(f"cost accounting identity violated for cell {scheme} delta={delta}")

    with np.errstate(invalid="ignore", divide="ignore"):
        mean_n_h = np.where(hyp_trials > 0, sum_n / np.maximum(hyp_trials, 1), np.nan)
        mean_cost_h = np.where(hyp_trials > 0, sum_cost / np.maximum(hyp_trials, 1), np.nan)
        cps_h = np.where(sum_n > 0, sum_cost / np.maximum(sum_n, 1), np.nan)
    present = hyp_trials > 0
    recombined = float(
        np.sum((hyp_trials[present] / trials) * mean_n_h[present] * cps_h[present])
    )

    capped_total = int(capped.sum())
    if capped_total:
        logger.warning(
            "cell %s delta=%g: %d trial(s) hit the sample cap", scheme.value, delta, capped_total
        )
    return CellStats(
        scheme=scheme,
        delta=float(delta),
        trials=trials,
        mean_total_cost=mean_cost,
        std_error=std_error,
        mean_samples=float(n.mean()),
        error_rate=float(1.0 - correct.mean()),
        mean_cost_per_sample=float(cost.sum() / n.sum()),
        capped_trials=capped_total,
        hypothesis_trials=hyp_trials,
        mean_samples_by_hypothesis=mean_n_h,
        mean_cost_by_hypothesis=mean_cost_h,
        cost_per_sample_by_hypothesis=cps_h,
        mean_cost_recombined=recombined,
    )


def run_campaign(config: ExperimentConfig) -> CampaignResult:
    """Run every (scheme, delta) cell of the campaign plus the bound curves.

    Deterministic for a fixed config: trial streams are keyed by indices,
    chunking is fixed, and aggregation order never depends on the worker
    count.
    """
    inst = instance_from_spec(config.instance)
    tensor = build_kld_tensor(inst)
    report = check_assumptions(inst, tensor)
    if not report.all_ok:
        detail = "; ".join(v.reason for v in report.violations[:4])
        raise InstanceError(f"instance fails assumption checks: {detail}")

    policies = {s: compute_policy(tensor, inst.costs, s) for s in config.schemes}
    ca_policy = policies.get(Scheme.COST_AWARE_CHERNOFF)
    if ca_policy is None:
        ca_policy = compute_policy(tensor, inst.costs, Scheme.COST_AWARE_CHERNOFF)
    bounds = compute_bounds_report(
        inst, tensor, inst.costs, ca_policy, config.delta_grid,
        epsilon=config.epsilon, eta_rule=config.eta_rule, beta=config.beta,
    )

    tasks = []
    for scheme in config.schemes:
        scheme_idx = SCHEME_ORDER.index(scheme)
        for delta_idx, delta in enumerate(config.delta_grid):
            for start in range(0, config.trials_per_point, _CHUNK):
                stop = min(start + _CHUNK, config.trials_per_point)
                tasks.append((scheme, scheme_idx, delta, delta_idx, start, stop))

    if config.workers > 1:
        with ProcessPoolExecutor(
            max_workers=config.workers,
            initializer=_worker_init,
            initargs=(inst, policies, config.sample_cap, config.master_seed),
        ) as pool:
            chunk_results = list(pool.map(_worker_chunk, tasks, chunksize=4))
    else:
        tables = LikelihoodTables(inst)
        chunk_results = [
            _trial_chunk(inst, tables, policies[t[0]], t[2], config.sample_cap,
                         config.master_seed, t[1], t[3], t[4], t[5])
            for t in tasks
        ]

    cells = []
    cursor = 0
    for scheme in config.schemes:
        for delta in config.delta_grid:
            parts = []
            while cursor < len(tasks) and tasks[cursor][0] is scheme and tasks[cursor][2] == delta:
                parts.append(chunk_results[cursor])
                cursor += 1
            merged = [np.concatenate([p[k] for p in parts]) for k in range(6)]
            cells.append(_aggregate_cell(scheme, delta, inst, *merged))

    return CampaignResult(
        config=config, instance=inst, cells=tuple(cells), bounds=bounds,
        policies={**policies, Scheme.COST_AWARE_CHERNOFF: ca_policy},
    )


# ---------------------------------------------------------------------------
# Output emission
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_bounds_outputs(bounds: BoundsReport, output_dir: str) -> list[str]:
    """bounds.csv and bounds.json for a report; returns the written paths."""
    os.makedirs(output_dir, exist_ok=True)
    csv_path = os.path.join(output_dir, "bounds.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["delta", "lower_full", "lower_dominating", "lower_dominating_cost", "upper"])
        for g, d in enumerate(bounds.delta_grid):
            writer.writerow([
                _fmt(d), _fmt(float(bounds.lower_full[g])), _fmt(float(bounds.lower_dominating[g])),
                _fmt(float(bounds.lower_dominating_cost[g])), _fmt(float(bounds.upper[g])),
            ])
    json_path = os.path.join(output_dir, "bounds.json")
    payload = {
        "delta_grid": list(bounds.delta_grid),
        "lower_full": bounds.lower_full.tolist(),
        "lower_dominating": bounds.lower_dominating.tolist(),
        "lower_dominating_cost": bounds.lower_dominating_cost.tolist(),
        "upper": bounds.upper.tolist(),
        "per_hypothesis_terms": bounds.per_hypothesis_terms.tolist(),
        "eta_rule": bounds.eta_rule,
        "epsilon": bounds.epsilon,
        "beta": bounds.beta,
        "mean_cost_per_action": bounds.mean_cost_per_action,
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [csv_path, json_path]


def policy_payload(policies: dict[Scheme, GuidingPolicy]) -> dict:
    return {
        scheme.value: {
            "lambdas": policies[scheme].lambdas.tolist(),
            "objective_values": policies[scheme].objective_values.tolist(),
        }
        for scheme in SCHEME_ORDER
        if scheme in policies
    }


def emit_outputs(result: CampaignResult, output_dir: Optional[str] = None) -> list[str]:
    """Write campaign.csv, bounds.csv/json, policy.json, config.echo.json, fig2.dat."""
    out = output_dir if output_dir is not None else result.config.output_dir
    try:
        os.makedirs(out, exist_ok=True)
        paths = []

        campaign_path = os.path.join(out, "campaign.csv")
        with open(campaign_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([
                "scheme", "delta", "mean_total_cost", "std_error", "mean_N",
                "error_rate", "mean_cost_per_sample", "capped_trials",
            ])
            for c in result.cells:
                writer.writerow([
                    c.scheme.value, _fmt(c.delta), _fmt(c.mean_total_cost), _fmt(c.std_error),
                    _fmt(c.mean_samples), _fmt(c.error_rate), _fmt(c.mean_cost_per_sample),
                    c.capped_trials,
                ])
        paths.append(campaign_path)

        paths.extend(write_bounds_outputs(result.bounds, out))

        policy_path = os.path.join(out, "policy.json")
        with open(policy_path, "w", encoding="utf-8") as fh:
            json.dump(policy_payload(result.policies), fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths.append(policy_path)

        echo_path = os.path.join(out, "config.echo.json")
        with open(echo_path, "w", encoding="utf-8") as fh:
            json.dump(result.config.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths.append(echo_path)

        fig_path = os.path.join(out, "fig2.dat")
        scheme_cols = [s for s in SCHEME_ORDER if s in result.config.schemes]
        by_key = {(c.scheme, c.delta): c for c in result.cells}
        with open(fig_path, "w", encoding="utf-8") as fh:
            names = ["log10_inv_delta"] + [f"cost_{s.value}" for s in scheme_cols]
            names += ["lower_dominating_cost", "upper"]
            fh.write("# " + " ".join(names) + "\n")
            for g, d in enumerate(result.config.delta_grid):
                row = [_fmt(math.log10(1.0 / d))]
                row += [_fmt(by_key[(s, d)].mean_total_cost) for s in scheme_cols]
                row += [_fmt(float(result.bounds.lower_dominating_cost[g])),
                        _fmt(float(result.bounds.upper[g]))]
                fh.write(" ".join(row) + "\n")
        paths.append(fig_path)
        return paths
    except OSError as exc:
        raise OSError(f"failed writing outputs under {out!r}: {exc}") from exc
