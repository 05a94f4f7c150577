"""How much history does a belief need?

Walks one trajectory of the gamma = 0.5 fixture, filtering it both exactly
and from only the last few steps, then measures the average gap over many
trajectories.
"""
import numpy as np

from pomdp_lab import load_fixture
from pomdp_lab.beliefs import approx_belief, exact_belief
from pomdp_lab.diagnostics import contraction_profile
from pomdp_lab.policies import UniformRandom
from pomdp_lab.simulator import rollout_batch

np.set_printoptions(precision=3, suppress=True)
model = load_fixture("contract_g05")
print(f"S={model.S} A={model.A} O={model.O} H={model.H}")

# one episode under uniform play
ep = rollout_batch(model, UniformRandom(), 1, master=4, tag="demo")
acts, obs = ep.actions[0].tolist(), ep.observations[0].tolist()
print("actions     ", acts)
print("observations", obs)

# posterior at the last step, then the same from a flat prior with short windows
h = model.H
flat = np.full(model.S, 1 / model.S)
print("exact belief      ", exact_belief(model, acts, obs)[: model.S])
for L in (1, 2, 4):
    b = approx_belief(model, flat, acts, obs, h, L)[: model.S]
    print(f"last {L} step(s)    ", b)

# averaged over 10k episodes the gap shrinks fast with the window length
for L, err, se in contraction_profile(model, UniformRandom(), flat, [1, 2, 4, 6], h, n=10_000):
    print(f"L={L}: mean L1 gap {err:.4f} (se {se:.4f})")
