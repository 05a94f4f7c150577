"""Empirical Z-structured MDP from trajectories under the hat policies.

For each step ``h`` a fresh batch of ``N0`` episodes is drawn under the policy
that follows ``pi^h`` for ``max(h-L-1, 0)`` steps and then acts uniformly.
Transitions out of ``(z_h, a_h)`` are the normalised counts of ``o_{h+1}``
when at least ``N1`` episodes share the key; otherwise the row sends all
mass to the sink observation.  Windows are canonical, so at steps ``h <= L``
all histories with the same short suffix share a key.
"""
from __future__ import annotations

import numpy as np

from .policies import hat_policy
from .simulator import Environment, ObservedBatch, read_dump
from .zmdp import TabularZMDP, sink_rows
from .zstate import ZIndexer


def pass_tag(prefix: str, h: int) -> str:
    return f"{prefix}approx/h={h}"


class CountTable:
    """Visit counts ``phi[h][z, a, o']`` and first-seen rewards per ``(h, o)``."""

    def __init__(self, ix: ZIndexer):
        self.ix = ix
        H = ix.H
        self.counts = {h: np.zeros((ix.size(h), ix.n_actions, ix.n_obs), dtype=np.int64)
                       for h in range(1, H)}
        self.reward = np.zeros((H + 1, ix.n_obs))
        self.reward_seen = np.zeros((H + 1, ix.n_obs), dtype=bool)

    def add_rewards(self, batch: ObservedBatch):
        """Record ``R_h(o)`` from the first episode in ``batch`` that shows ``o`` at step ``h``."""
        for j in range(batch.observations.shape[1]):
            h = j + 2
            o = batch.observations[:, j]
            uniq, first = np.unique(o, return_index=True)
            new = ~self.reward_seen[h, uniq]
            self.reward[h, uniq[new]] = batch.rewards[first[new], j]
            self.reward_seen[h, uniq[new]] = True

    def add_pass(self, h: int, batch: ObservedBatch):
        """Count ``(z_h, a_h, o_{h+1})`` keys of one step's batch."""
        ix = self.ix
        n = len(batch)
        z = np.zeros(n, dtype=np.int64)
        for t in range(1, h):
            z = ix.advance(t, z, batch.actions[:, t - 1], batch.observations[:, t - 1])
        a = batch.actions[:, h - 1]
        o = batch.observations[:, h - 1]
        key = (z * ix.n_actions + a) * ix.n_obs + o
        self.counts[h] += np.bincount(key, minlength=self.counts[h].size).reshape(self.counts[h].shape)

    def build(self, N1: int) -> TabularZMDP:
        ix = self.ix
        P, diverted = {}, {}
        for h in range(1, ix.H):
            c = self.counts[h]
            tot = c.sum(axis=2)
            ok = tot >= N1
            ok &= ~ix.contains_obs(h, ix.n_obs - 1)[:, None]
            p = sink_rows(ix, h)
            p[ok] = c[ok] / tot[ok][:, None]
            P[h] = p
            diverted[h] = ~ok
        reward = np.where(self.reward_seen, self.reward, 0.0)
        reward[:, ix.n_obs - 1] = 0.0
        return TabularZMDP(ix.L, ix.H, ix.n_actions, ix.n_obs, P, reward, diverted)


def approx_mdp(env: Environment, L: int, N0: int, N1: int, policies, *, master: int = 0,
               tag_prefix: str = "") -> TabularZMDP:
    """Estimate the window MDP from ``H`` batches of ``N0`` episodes.

    ``policies[h-1]`` is the exploration policy for step ``h``.
    """
    if not isinstance(env, Environment):
        raise TypeError("approx_mdp needs a rollout-only Environment handle")
    if N1 > N0:
        raise ValueError(f"N1={N1} exceeds N0={N0}")
    H = env.horizon
    if not 0 <= L < H:
        raise ValueError(f"need 0 <= L < H (L={L}, H={H})")
    if len(policies) != H:
        raise ValueError(f"need one policy per step ({H}), got {len(policies)}")
    table = CountTable(ZIndexer(env.n_actions, env.n_obs, L, H))
    for h in range(1, H + 1):
        batch = env.rollout_batch(hat_policy(policies[h - 1], h, L), N0, master, pass_tag(tag_prefix, h))
        table.add_rewards(batch)
        if h < H:
            table.add_pass(h, batch)
    return table.build(N1)


def approx_mdp_from_dump(path_or_batches, L: int, N0: int, N1: int, *, H=None, n_actions=None,
                         n_obs=None, tag_prefix: str = "") -> TabularZMDP:
    """Rebuild the estimate from a trajectory dump written by ``simulator.write_dump``.

    Only the first ``N0`` episodes of each step's batch are used; missing
    batches contribute no counts.
    """
    if N1 > N0:
        raise ValueError(f"N1={N1} exceeds N0={N0}")
    if isinstance(path_or_batches, dict):
        batches = path_or_batches
    else:
        header, batches = read_dump(path_or_batches)
        H, n_actions, n_obs = header["horizon"], header["n_actions"], header["n_obs"]
    table = CountTable(ZIndexer(n_actions, n_obs, L, H))
    for h in range(1, H + 1):
        b = batches.get(pass_tag(tag_prefix, h))
        if b is None or len(b) == 0:
            continue
        b = ObservedBatch(b.actions[:N0], b.observations[:N0], b.rewards[:N0], b.master, b.tag, b.start)
        table.add_rewards(b)
        if h < H:
            table.add_pass(h, b)
    return table.build(N1)
