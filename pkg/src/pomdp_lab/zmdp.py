"""Tabular MDPs over observation windows (Z-structured MDPs).

A step-``h`` state is a canonical window (dense index, see ``zstate``).  The
transition out of ``(z, a)`` only chooses the next observation ``o'``; the
successor window is ``advance(z, a, o')``.  Rewards depend on the final
observation of the window: ``reward[h, o]`` is collected on arriving at step
``h`` with observation ``o``.  The last observation symbol is the sink.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .policies import (DEFAULT_EXPANSION_LIMIT, GeneralPolicy, ZPolicy, action_probs, flatten,
                       window_length)
from .zstate import ZIndexer

ROW_TOL = 1e-10
ZMDP_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class TabularZMDP:
    L: int
    H: int
    n_actions: int
    n_obs: int                 # includes the sink observation (last index)
    P: dict                    # h -> (size(h), A, n_obs), h = 1..H-1
    reward: np.ndarray         # (H+1, n_obs)
    diverted: dict = field(default=None)  # h -> (size(h), A) bool, estimator output only

    def __post_init__(self):
        P = {}
        for h in range(1, self.H):
            p = np.array(self.P[h], dtype=float)
            p.setflags(write=False)
            P[h] = p
        object.__setattr__(self, "P", P)
        r = np.array(self.reward, dtype=float)
        r.setflags(write=False)
        object.__setattr__(self, "reward", r)

    @property
    def sink(self) -> int:
        return self.n_obs - 1

    @property
    def indexer(self) -> ZIndexer:
        return ZIndexer(self.n_actions, self.n_obs, self.L, self.H)

    def with_reward(self, reward) -> "TabularZMDP":
        return TabularZMDP(self.L, self.H, self.n_actions, self.n_obs, self.P, reward, self.diverted)


def sink_rows(ix: ZIndexer, h: int) -> np.ndarray:
    """Rows that send all mass to the sink observation, shape ``(size(h), A, n_obs)``."""
    p = np.zeros((ix.size(h), ix.n_actions, ix.n_obs))
    p[:, :, ix.n_obs - 1] = 1.0
    return p


def check_zmdp(m: TabularZMDP) -> list:
    """Return a list of invariant violations (empty when the Z-MDP is well formed)."""
    problems = []
    ix = m.indexer
    if m.reward.shape != (m.H + 1, m.n_obs):
        problems.append(f"reward table shape {m.reward.shape}")
    if np.any(m.reward[:, m.sink] != 0):
        problems.append("sink observation carries reward")
    for h in range(1, m.H):
        p = m.P[h]
        if p.shape != (ix.size(h), m.n_actions, m.n_obs):
            problems.append(f"step {h}: table shape {p.shape}")
            continue
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=2) - 1) > ROW_TOL):
            problems.append(f"step {h}: rows are not distributions")
        has_sink = ix.contains_obs(h, m.sink)
        if np.any(p[has_sink][:, :, m.sink] != 1.0):
            problems.append(f"step {h}: window containing the sink does not stay in the sink")
    return problems


# ---------------------------------------------------------------------------
# planning


def dp_optimal(zmdp: TabularZMDP, reward=None):
    """Backward induction; ties go to the lowest action index.

    Returns ``(ZPolicy, V)`` where ``V[h]`` is the optimal value-to-go over
    step-``h`` windows (``V[1][0]`` is the optimal value).
    """
    R = zmdp.reward if reward is None else np.asarray(reward, dtype=float)
    ix = zmdp.indexer
    H = zmdp.H
    V = {H: np.zeros(ix.size(H))}
    tabs = {H: np.zeros(ix.size(H), dtype=np.int64)}
    for h in range(H - 1, 0, -1):
        succ = ix.successors(h)
        Q = np.einsum("zao,zao->za", zmdp.P[h], R[h + 1][None, None, :] + V[h + 1][succ])
        a = np.argmax(Q, axis=1)
        tabs[h] = a
        V[h] = Q[np.arange(Q.shape[0]), a]
    tables = (np.zeros(0, dtype=np.int64),) + tuple(tabs[h] for h in range(1, H + 1))
    pol = ZPolicy(zmdp.L, H, zmdp.n_actions, zmdp.n_obs, tables)
    return pol, V


# ---------------------------------------------------------------------------
# exact occupancies


def _components(zmdp, policy, limit):
    comps = flatten(policy, limit=limit)
    Lp = window_length(comps)
    if Lp > zmdp.L:
        raise ValueError(f"policy reads {Lp} pairs but the Z-MDP windows hold only {zmdp.L}")
    for c in comps:
        if c.policy is not None and c.cutoff > 1 and (c.policy.n_actions, c.policy.n_obs) != (
                zmdp.n_actions, zmdp.n_obs):
            raise ValueError("policy alphabet does not match the Z-MDP")
    return comps, Lp


def occupancy(zmdp: TabularZMDP, policy: GeneralPolicy, *, limit=DEFAULT_EXPANSION_LIMIT) -> dict:
    """Exact window occupancy ``h -> (size(h),)`` under a general policy."""
    comps, Lp = _components(zmdp, policy, limit)
    ix = zmdp.indexer
    A = zmdp.n_actions
    total = {h: np.zeros(ix.size(h)) for h in range(1, zmdp.H + 1)}
    for c in comps:
        mu = np.ones(1)
        total[1] += c.weight * mu
        for h in range(1, zmdp.H):
            z = np.arange(ix.size(h))
            pa = action_probs(c, h, z, A, suffix_of=lambda zz, j, h=h: ix.suffix(h, zz, j))
            flow = mu[:, None, None] * pa[:, :, None] * zmdp.P[h]
            nxt = np.bincount(ix.successors(h).ravel(), weights=flow.ravel(), minlength=ix.size(h + 1))
            mu = nxt
            total[h + 1] += c.weight * mu
    return total


def obs_visitation(zmdp: TabularZMDP, policy: GeneralPolicy, h: int, *, occ=None,
                   limit=DEFAULT_EXPANSION_LIMIT) -> np.ndarray:
    """Distribution of the step-``h`` observation (``h >= 2``)."""
    if not 2 <= h <= zmdp.H:
        raise ValueError(f"observations exist only at steps 2..{zmdp.H}")
    if zmdp.L == 0:
        raise ValueError("windows of length 0 carry no observation")
    occ = occupancy(zmdp, policy, limit=limit) if occ is None else occ
    return np.bincount(zmdp.indexer.last_obs(h), weights=occ[h], minlength=zmdp.n_obs)


def policy_value(zmdp: TabularZMDP, policy: GeneralPolicy, reward=None, *,
                 limit=DEFAULT_EXPANSION_LIMIT) -> float:
    R = zmdp.reward if reward is None else np.asarray(reward, dtype=float)
    occ = occupancy(zmdp, policy, limit=limit)
    return float(sum(obs_visitation(zmdp, policy, h, occ=occ) @ R[h] for h in range(2, zmdp.H + 1)))


def linear_opt(zmdp: TabularZMDP, r, h: int):
    """Maximise ``<r, d_{O, h-L}>`` over window policies.

    Returns ``(ZPolicy, optimum)``.
    """
    t = h - zmdp.L
    if not 2 <= t <= zmdp.H:
        raise ValueError(f"target step h-L={t} has no observation")
    r = np.asarray(r, dtype=float)
    if r.shape != (zmdp.n_obs,) or not np.all(np.isfinite(r)):
        raise ValueError("direction must be a finite vector over the observations")
    R = np.zeros((zmdp.H + 1, zmdp.n_obs))
    R[t] = r
    pol, V = dp_optimal(zmdp, R)
    return pol, float(V[1][0])


def all_zpolicies(L, H, n_actions, n_obs, steps=None):
    """Every deterministic window policy (steps outside ``steps`` fixed to action 0)."""
    import itertools

    ix = ZIndexer(n_actions, n_obs, L, H)
    steps = list(range(1, H)) if steps is None else list(steps)
    sizes = [ix.size(h) for h in steps]
    for flat in itertools.product(range(n_actions), repeat=sum(sizes)):
        tabs = [np.zeros(0, dtype=np.int64)] + [np.zeros(ix.size(h), dtype=np.int64) for h in range(1, H + 1)]
        pos = 0
        for h, n in zip(steps, sizes):
            tabs[h] = np.array(flat[pos:pos + n], dtype=np.int64)
            pos += n
        yield ZPolicy(L, H, n_actions, n_obs, tuple(tabs))


# ---------------------------------------------------------------------------
# Monte Carlo rollouts of a Z-MDP


def rollout_zmdp(zmdp: TabularZMDP, policy: GeneralPolicy, n: int, rng: np.random.Generator):
    """Sample ``n`` episodes; returns ``(actions, observations, rewards)`` arrays."""
    comps, _ = _components(zmdp, policy, None)
    ix = zmdp.indexer
    A, H = zmdp.n_actions, zmdp.H
    w = np.array([c.weight for c in comps])
    comp = rng.choice(len(comps), size=n, p=w / w.sum())
    z = np.zeros(n, dtype=np.int64)
    acts = np.zeros((n, H - 1), dtype=np.int64)
    obs = np.zeros((n, H - 1), dtype=np.int64)
    for h in range(1, H):
        a = rng.integers(A, size=n)
        for j, c in enumerate(comps):
            sel = comp == j
            if c.policy is not None and h < c.cutoff and sel.any():
                a[sel] = c.policy.tables[h][ix.suffix(h, z[sel], c.policy.L)]
        cdf = np.cumsum(zmdp.P[h][z, a], axis=1)
        o = np.minimum((cdf <= rng.random(n)[:, None]).sum(axis=1), zmdp.n_obs - 1)
        z = ix.advance(h, z, a, o)
        acts[:, h - 1] = a
        obs[:, h - 1] = o
    rewards = np.take_along_axis(zmdp.reward[2:], obs.T, axis=1).T
    return acts, obs, rewards


# ---------------------------------------------------------------------------
# dump format


def zmdp_to_dict(m: TabularZMDP) -> dict:
    d = {"format_version": ZMDP_FORMAT_VERSION, "kind": "zmdp", "L": m.L, "H": m.H,
         "n_actions": m.n_actions, "n_obs": m.n_obs, "reward": m.reward.tolist(),
         "P": {str(h): m.P[h].tolist() for h in range(1, m.H)}}
    if m.diverted is not None:
        d["diverted"] = {str(h): m.diverted[h].astype(int).tolist() for h in range(1, m.H)}
    return d


def zmdp_from_dict(d: dict) -> TabularZMDP:
    if d.get("kind") != "zmdp" or d.get("format_version") != ZMDP_FORMAT_VERSION:
        raise ValueError("not a Z-MDP dump of a supported version")
    P = {int(h): np.array(v, dtype=float) for h, v in d["P"].items()}
    div = None
    if "diverted" in d:
        div = {int(h): np.array(v, dtype=bool) for h, v in d["diverted"].items()}
    return TabularZMDP(d["L"], d["H"], d["n_actions"], d["n_obs"], P, np.array(d["reward"]), div)


def dumps_zmdp(m: TabularZMDP) -> str:
    return json.dumps(zmdp_to_dict(m), sort_keys=True)


def loads_zmdp(s: str) -> TabularZMDP:
    return zmdp_from_dict(json.loads(s))
