"""The full learning loop on the noisy-permutation fixture.

Runs six explore/estimate rounds with rollouts only, evaluates the greedy
policy of every estimate, and compares the winner against the exact optimum
computed from the model tables.
"""
from pomdp_lab import load_fixture
from pomdp_lab.basecamp import learn, practical_params
from pomdp_lab.diagnostics import exact_optimal_value, exact_policy_value
from pomdp_lab.policies import Atom, UniformRandom
from pomdp_lab.simulator import Environment

model = load_fixture("perm_g07")
env = Environment(model)            # the learner only sees rollouts
params = practical_params(L=2, K=6, N0=50_000, N1=200)

report = learn(env, params, seed=0, progress=print)
v_star, _ = exact_optimal_value(model)
v_learned = exact_policy_value(model, Atom(report.policy))
v_uniform = exact_policy_value(model, UniformRandom())

print()
for it in report.iterations:
    print(f"round {it.k}: candidate value {it.candidate_value:.4f}, "
          f"rows sent to sink {sum(it.diverted_fraction) / len(it.diverted_fraction):.2f}")
print(f"picked round {report.k_star} after {report.episodes:,} episodes")
print(f"optimal {v_star:.4f}  learned {v_learned:.4f}  uniform {v_uniform:.4f}")
