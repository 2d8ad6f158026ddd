"""Mean field games on directed graphs: equilibrium solver, planner-side
reduction, and verification oracles."""

from .graph import (
    Graph,
    TimeGrid,
    build_graph,
    graph_from_json_dict,
    graph_to_json_dict,
    project_to_simplex,
    simplex_point,
    uniform_distribution,
)
from .costs import (
    HamiltonianValue,
    NumericSeparable,
    SeparablePower,
    SeparableQuadratic,
    hamiltonian,
    hamiltonian_batch,
    verify_gradient,
)
from .coupling import (
    Coupling,
    affine_mix,
    builtin_coupling,
    crowd_aversion,
    crowd_seeking,
    potential_gradient_error,
    zero_coupling,
)
from .solver import (
    ComparisonReport,
    ControlField,
    MFGSolution,
    TrajectoryPair,
    check_comparison,
    estimate_apriori_bound,
    extract_control,
    fixed_point_defect,
    mfg_fixed_point,
    solve_hjb_backward,
    solve_transport_forward,
)
from .verification import (
    MonotonicityReport,
    NashGapReport,
    PayoffReport,
    check_monotonicity,
    default_deviations,
    evaluate_payoff,
    nash_gap,
)
from .planning import (
    MasterField,
    MasterResidualReport,
    PlanningReport,
    SimplexField,
    SimplexGrid,
    ValueCheckReport,
    build_simplex_grid,
    characteristics_flow,
    check_value_function,
    extract_master_fields,
    interpolate_field,
    master_residual,
    planning_hamiltonian,
    solve_planning_hj,
)
from .config import ConfigError, RunConfig, build_coupling, build_cost, load_config, parse_config

__version__ = "0.1.0"
