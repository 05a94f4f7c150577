"""Learning lab for observable POMDPs: exact tabular models, window MDP
estimation, barycentric-spanner exploration and verification oracles."""

__version__ = "0.1.0"

from .model import (PomdpModel, from_tables, validate_model, extend_with_sinks, strip_sinks,
                    load_model, save_model)
from .beliefs import belief_update, exact_belief, approx_belief, batch_filter
from .observability import observability_margin, emission_margin
from .policies import (ZPolicy, Atom, Mixture, PrefixThenUniform, UniformRandom, uniform_mixture,
                       hat_policy, running_average, tail_average)
from .simulator import Environment, rollout, rollout_batch, empirical_value, SeedSpec
from .zmdp import TabularZMDP, dp_optimal, occupancy, obs_visitation, policy_value, linear_opt
from .estimator import approx_mdp
from .spanner import barycentric_spanner, bary_spanner_policy, verify_spanner
from .basecamp import HyperParams, LearnReport, learn, practical_params, theoretical_params, select_best
from .fixtures import generate, load_fixture
