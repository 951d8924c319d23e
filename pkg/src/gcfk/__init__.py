"""Quadratic models of metric gaming, sanctions, retention dynamics, coalitions,
identification power and audit allocation."""

__version__ = "0.1.0"

from .audit import (
    AllocationResult,
    AuditInstance,
    coverage_objective,
    exhaustive_opt,
    lagrangian_greedy,
    lazy_greedy,
    local_search,
    marginal_gain,
    naive_greedy,
)
from .coalition import (
    CoalitionSpec,
    CoalitionVerdict,
    alpha_benign,
    classify,
    coalition_delta_u,
    exact_benign_crossing,
    net_surplus,
    price_of_cooperation,
    stability_heatmap,
)
from .errors import GcfkError, InvalidConfig, IoFailure, ParseError, RangeError
from .linalg import QuadraticGame, SanctionOperator, build_sanction
from .manipulation import (
    ManipulationSolution,
    PogReport,
    alpha_min,
    index_upper_bound,
    manip_index,
    pog_report,
    solve_manipulation,
)
from .mechanism import (
    AggregatorSpec,
    ContaminationModel,
    MixPolicy,
    aggregate,
    empirical_sensitivity,
    mixed_index,
    mixing_bound,
    pareto_frontier,
)
from .power import ObservationModel, PowerSpec, mc_power, noncentrality, required_n, required_n_tail
from .retention import RetentionModel, fixed_points, retention_map, simulate, sweep

__all__ = [n for n in dir() if not n.startswith("_")]
