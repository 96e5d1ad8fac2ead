"""Choice modeling on recommendation networks.

Agents either select from a finite choice set directly or adopt another
agent's eventual choice; steady-state choice probabilities, aggregate shares,
and per-agent decision power all follow in closed form from one linear
system.  On top of that sit ambassador targeting with a greedy guarantee,
Monte Carlo samplers, largest-herd statistics, discount pricing, and
polyhedral parameter estimation.
"""

from .ambassador import (
    AmbassadorPlan,
    apply_ambassadors,
    brute_force_select,
    greedy_select,
    make_cache,
    marginal_gain,
    vertex_cover_instance,
)
from .errors import (
    AssumptionError,
    ConvergenceError,
    InfeasibleError,
    ModelFormatError,
    NetchoiceError,
    SimplexBreakdownError,
    StaleCacheError,
    StructureError,
)
from .estimation import (
    EstimationPolyhedron,
    build_polyhedron,
    export_lp,
    interior_point_estimate,
    phase1_min_slack,
)
from .herding import (
    HerdMomentTable,
    expected_max_herd_fraction,
    expected_smooth_function,
    herd_moments,
    simulate_urn,
)
from .model import (
    NetworkModel,
    ValidationReport,
    build_model,
    parse_model,
    serialize_model,
    spectral_radius,
    validate,
    write_model,
)
from .pricing import (
    ParametricModel,
    affine_single_agent_share,
    best_response,
    build_parametric,
    evaluate_model,
    find_equilibrium,
    parse_parametric,
    profit,
    share_sensitivities,
)
from .sampling import (
    JointOutcome,
    estimate_choice_probs_mc,
    joint_second_moment,
    sample_joint_outcome,
    sample_walk_choice,
)
from .shares import (
    ChoiceSolution,
    choice_shares,
    decision_shares,
    hub_asymptotic_ratio,
    linear_learning_limit,
    mixture_choice_share,
    solve_choice_matrix,
)
from .simplex import LinearConstraint, SimplexResult, simplex_solve

__version__ = "0.1.0"
