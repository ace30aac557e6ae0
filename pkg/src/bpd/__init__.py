"""Bad-policy density (BPD): exact, approximate and learning-based tools for finite MDPs."""

from __future__ import annotations

from types import ModuleType as _ModuleType

__version__ = "0.1.0"

from .approx import (
    ApproxResult,
    ControlledPolicyContext,
    SamplingError,
    SmoothnessReport,
    controlled_value,
    count_Ti_bruteforce,
    gpd_additive,
    gpd_multiplicative,
    is_tau_quality,
    restricted_mdp,
    sample_Ti,
    sampled_bpd_curve,
    verify_smoothness,
)
from .exact import BpdCurve, BpdResult, bpd_curve, bpd_decision, bpd_exact, bpd_exact_many, cumulative_bpd
from .learner import LearnerConfig, LearnerReport, policy_sampling, sample_complexity_bound
from .mdp import (
    DeterministicPolicy,
    FiniteMdp,
    InvalidMdpError,
    MdpSchemaError,
    evaluate_policy,
    evaluate_policy_exact,
    load_mdp,
    mdp_from_json,
    mdp_to_json,
    optimal_values,
    pessimal_values,
    save_mdp,
    simulate_episode,
    validate,
    value_range,
)
from .policies import (
    EnumerationCapError,
    count_optimal_policies,
    enumerate_policies,
    index_from_policy,
    policy_count,
    policy_from_index,
    sample_policy_uniform,
    start_values,
)
from .problems import (
    GridSpec,
    SubsetSumInstance,
    easy_chain,
    hard_chain,
    n_chain,
    random_mdp,
    rational_bpd_instance,
    russell_norvig_grid,
    subset_sum_decide,
    subset_sum_mdp,
)

__all__ = [
    n
    for n, obj in list(globals().items())
    if not n.startswith("_") and n != "annotations" and not isinstance(obj, _ModuleType)
]
