"""Feedback-capacity bounds for finite-state channels.

Duality-based upper bounds are computed by assembling and solving a
finite average-reward MDP driven by a Q-graph test distribution; lower
bounds come from belief-invariant graph-based encoders. Closed-form
results for the built-in channel families serve as oracles.
"""

from .channel import (
    BuiltinSpec,
    ChannelClass,
    ChannelKernel,
    TransformedChannel,
    builtin,
    classify,
    dump_channel,
    is_strongly_connected,
    load_channel,
    parse_channel,
    transform_to_unifilar,
    validate_kernel,
)
from .qgraph import (
    QGraph,
    count_valid,
    dump_qgraph,
    enumerate_valid,
    load_qgraph,
    markov_qgraph,
    parse_qgraph,
    registry_qgraph,
    validate,
    walk,
)
from .testdist import GraphTestDist, from_params, to_params, uniform
from .mdp import (
    FiniteMdp,
    MdpSolution,
    evaluate_policy,
    policy_iteration,
    value_iteration,
    verify_bellman,
)
from .dualbound import (
    DualState,
    UpperBoundResult,
    belief_update,
    build_finite_dual_mdp,
    build_quantized_belief_mdp,
    disturbance_dist,
    optimize_test_distribution,
    reward,
    upper_bound,
)
from .lowerbound import (
    GraphEncoder,
    SQChain,
    achievable_rate,
    build_sq_chain,
    check_bcjr_invariance,
    search_encoder,
)
from .analytic import (
    nising_ub_markov,
    nising_ub_q4,
    nost_capacity,
    nost_certificate,
    nost_encoder,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
