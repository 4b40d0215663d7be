"""Cost-aware active sequential hypothesis testing.

A decision-maker repeatedly picks probing actions with heterogeneous
positive costs, each yielding a sample whose distribution depends on the
unknown hypothesis, and stops once some posterior clears 1 - delta.  This
package provides the observation models and divergence tensors, the
maximin / maximin-fractional simplex programs behind the guiding action
distributions (classic, cost-aware, and bit-per-buck schemes), the
sequential test engine, theoretical cost bounds, and a deterministic Monte
Carlo harness with a CLI.
"""

from .model import (
    AssumptionReport,
    Categorical,
    Gaussian,
    InstanceError,
    KldTensor,
    ModelError,
    ProblemInstance,
    build_kld_tensor,
    check_assumptions,
    kld,
)
from .fracprog import (
    FractionalProblem,
    MaximinProblem,
    SimplexSolution,
    SolverError,
    Status,
    fractional_objective,
    solve_fractional,
    solve_maximin,
)
from .policies import GuidingPolicy, Scheme, compute_policy, sample_action
from .engine import (
    LikelihoodTables,
    PosteriorState,
    TerminationReason,
    TrialRecord,
    initial_state,
    run_trial,
    update_posterior,
)
from .bounds import (
    BoundsReport,
    compute_bounds_report,
    information_rate,
    lower_bound_cost_dominating,
    lower_bound_dominating,
    lower_bound_full,
    upper_bound_chernoff,
)
from .harness import (
    CampaignResult,
    CellStats,
    ExperimentConfig,
    emit_outputs,
    generate_benchmark_instance,
    instance_from_spec,
    load_config,
    run_campaign,
)

__all__ = [name for name in dir() if not name.startswith("_")]
