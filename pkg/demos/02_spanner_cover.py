"""A small policy cover from a barycentric spanner.

Builds the analysis window MDP of a micro fixture, asks the spanner for a
handful of deterministic policies whose observation distributions span all
others with coefficients in [-2, 2], and checks that claim on every
deterministic policy.
"""
import numpy as np

from pomdp_lab import load_fixture
from pomdp_lab.diagnostics import tilde_mdp
from pomdp_lab.policies import Atom, UniformRandom
from pomdp_lab.spanner import CountingOracle, barycentric_spanner, verify_spanner, zmdp_oracle
from pomdp_lab.zmdp import all_zpolicies, obs_visitation

np.set_printoptions(precision=3, suppress=True)
model = load_fixture("micro_b")
L, h = 1, model.H
zm = tilde_mdp(model, [UniformRandom()] * model.H, L)

oracle = CountingOracle(zmdp_oracle(zm, h))
res = barycentric_spanner(oracle, zm.n_obs)
print(f"rank {res.rank} after {oracle.calls} oracle calls")
print("spanner points (rows: observation distributions at step h-L, sink last):")
print(res.points)

# every deterministic policy's distribution, written in the spanner basis
t = h - L
pts = np.array([obs_visitation(zm, Atom(p), t)
                for p in all_zpolicies(L, zm.H, zm.n_actions, zm.n_obs, steps=range(1, t))])
chk = verify_spanner(pts, res, 2.0)
print(f"{len(pts)} policies checked, largest |coefficient| {chk.max_coefficient:.3f}")
