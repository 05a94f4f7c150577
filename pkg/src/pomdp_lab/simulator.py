"""Seeded episodic interaction with a tabular POMDP.

Every episode consumes one fixed-width row of uniform numbers: column 0 draws
``s_1``, column 1 resolves the policy mixture, and step ``h`` uses columns
``2 + 3(h-1) .. 4 + 3(h-1)`` for the uniform action, the transition and the
observation.  Rows come in chunks of ``CHUNK`` episodes, each chunk drawn
from a generator seeded by ``(master, hash(tag), chunk number)``.  The
randomness of episode ``i`` is therefore a pure function of
``(master, tag, i)``, whatever subset or order of episodes is simulated.

Categorical draws invert the cumulative sums in index order: the outcome is
the first index whose cumulative probability is strictly greater than the
uniform draw.
"""
from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import PomdpModel, extend_with_sinks
from .policies import GeneralPolicy, flatten, window_length
from .zstate import ZIndexer

CHUNK = 1024
DUMP_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SeedSpec:
    master: int
    tag: str
    index: int


def tag_hash(tag: str) -> int:
    return int.from_bytes(hashlib.blake2b(tag.encode(), digest_size=8).digest(), "little")


def stream_width(H: int) -> int:
    return 2 + 3 * (H - 1)


def _chunk_uniforms(master: int, tag: str, chunk: int, width: int) -> np.ndarray:
    ss = np.random.SeedSequence([int(master) & (2**64 - 1), tag_hash(tag), int(chunk)])
    return np.random.Generator(np.random.PCG64(ss)).random((CHUNK, width))


def episode_uniforms(master: int, tag: str, start: int, n: int, width: int) -> np.ndarray:
    """Rows ``start .. start+n-1`` of the ``(master, tag)`` stream."""
    out = np.empty((n, width))
    i = start
    while i < start + n:
        c, off = divmod(i, CHUNK)
        take = min(CHUNK - off, start + n - i)
        out[i - start:i - start + take] = _chunk_uniforms(master, tag, c, width)[off:off + take]
        i += take
    return out


def inverse_cdf_table(P: np.ndarray, axis: int) -> np.ndarray:
    """Cumulative sums along ``axis`` with everything from the last positive entry set to 1."""
    P = np.moveaxis(np.asarray(P, dtype=float), axis, -1)
    cdf = np.cumsum(P, axis=-1)
    pos = P > 0
    n = P.shape[-1]
    last = n - 1 - np.argmax(pos[..., ::-1], axis=-1)
    mask = np.arange(n) >= last[..., None]
    cdf = np.where(mask, 1.0, cdf)
    return np.moveaxis(cdf, -1, axis)


def sample_rows(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorised categorical draw: ``cdf_rows`` is ``(n, k)``, ``u`` is ``(n,)``."""
    return (cdf_rows <= u[:, None]).sum(axis=1)


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True, eq=False)
class ObservedTrajectory:
    """What the learner sees of one episode: no latent states."""

    actions: np.ndarray       # a_1..a_{H-1}
    observations: np.ndarray  # o_2..o_H
    rewards: np.ndarray       # r_2..r_H
    seed: SeedSpec

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())


@dataclass(frozen=True, eq=False)
class Trajectory(ObservedTrajectory):
    states: np.ndarray = None  # s_1..s_H (simulator-side only)

    def observed(self) -> ObservedTrajectory:
        return ObservedTrajectory(self.actions, self.observations, self.rewards, self.seed)


@dataclass(frozen=True, eq=False)
class ObservedBatch:
    actions: np.ndarray        # (n, H-1)
    observations: np.ndarray   # (n, H-1)
    rewards: np.ndarray        # (n, H-1)
    master: int
    tag: str
    start: int = 0

    def __len__(self):
        return self.actions.shape[0]

    def seed(self, i: int) -> SeedSpec:
        return SeedSpec(self.master, self.tag, self.start + i)

    def __getitem__(self, i) -> ObservedTrajectory:
        return ObservedTrajectory(self.actions[i], self.observations[i], self.rewards[i], self.seed(i))

    def __iter__(self):
        return (self[i] for i in range(len(self)))


@dataclass(frozen=True, eq=False)
class TrajectoryBatch(ObservedBatch):
    states: np.ndarray = None  # (n, H)

    def __getitem__(self, i) -> Trajectory:
        return Trajectory(self.actions[i], self.observations[i], self.rewards[i], self.seed(i),
                          states=self.states[i])

    def observed(self) -> ObservedBatch:
        return ObservedBatch(self.actions, self.observations, self.rewards, self.master,
                             self.tag, self.start)


# ---------------------------------------------------------------------------
# simulation


class _Compiled:
    """Policy and model tables prepared for vectorised rollouts."""

    def __init__(self, model: PomdpModel, policy: GeneralPolicy):
        self.model = model = extend_with_sinks(model)
        comps = flatten(policy, limit=None)
        self.L = window_length(comps)
        for c in comps:
            if c.policy is not None and c.cutoff > 1:
                if (c.policy.n_actions, c.policy.n_obs) != (model.A, model.n_obs):
                    raise ValueError("policy alphabet does not match the model (observations include the sink)")
                if c.policy.H < model.H:
                    raise ValueError("policy horizon shorter than the model horizon")
        self.ix = ZIndexer(model.A, model.n_obs, self.L, model.H)
        w = np.array([c.weight for c in comps])
        self.comp_cdf = inverse_cdf_table(w / w.sum(), axis=0)
        self.cutoff = np.array([c.cutoff for c in comps])
        self.tables = {}
        for h in range(1, model.H):
            tab = np.zeros((len(comps), self.ix.size(h)), dtype=np.int64)
            for j, c in enumerate(comps):
                if c.policy is not None and h < c.cutoff:
                    tab[j] = c.policy.tables[h][self.ix.suffix(h, np.arange(self.ix.size(h)), c.policy.L)]
            self.tables[h] = tab
        self.b1_cdf = inverse_cdf_table(model.b1, axis=0)
        self.T_cdf = inverse_cdf_table(model.T, axis=2)    # (H, A, nS_next, nS)
        self.Ob_cdf = inverse_cdf_table(model.Ob, axis=1)  # (H+1, nO, nS)

    def run(self, U: np.ndarray):
        m = self.model
        n, H, A = U.shape[0], m.H, m.A
        states = np.empty((n, H), dtype=np.int64)
        actions = np.empty((n, H - 1), dtype=np.int64)
        obs = np.empty((n, H - 1), dtype=np.int64)
        s = sample_rows(np.broadcast_to(self.b1_cdf, (n, m.n_states)), U[:, 0])
        comp = sample_rows(np.broadcast_to(self.comp_cdf, (n, self.comp_cdf.size)), U[:, 1])
        z = np.zeros(n, dtype=np.int64)
        states[:, 0] = s
        for h in range(1, H):
            col = 2 + 3 * (h - 1)
            uni = h >= self.cutoff[comp]
            a_uni = np.minimum((U[:, col] * A).astype(np.int64), A - 1)
            a = np.where(uni, a_uni, self.tables[h][comp, z])
            s = sample_rows(self.T_cdf[h][a, :, s], U[:, col + 1])
            o = sample_rows(self.Ob_cdf[h + 1][:, s].T, U[:, col + 2])
            z = self.ix.advance(h, z, a, o)
            actions[:, h - 1] = a
            obs[:, h - 1] = o
            states[:, h] = s
        rewards = np.take_along_axis(m.R[2:], obs.T, axis=1).T if H > 1 else np.zeros((n, 0))
        return actions, obs, rewards, states


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("POMDP_LAB_THREADS", "1")))
    except ValueError:
        return 1


def rollout_batch(model: PomdpModel, policy: GeneralPolicy, n: int, master: int, tag: str,
                  *, start: int = 0, workers: int | None = None) -> TrajectoryBatch:
    """Episodes ``start .. start+n-1`` of stream ``(master, tag)`` under ``policy``."""
    if n < 1:
        raise ValueError("need at least one episode")
    comp = _Compiled(model, policy)
    width = stream_width(comp.model.H)
    workers = default_workers() if workers is None else max(1, workers)
    # split on chunk boundaries so every piece regenerates whole chunks once
    bounds = [start]
    nxt = (start // CHUNK + 1) * CHUNK
    while nxt < start + n:
        bounds.append(nxt)
        nxt += CHUNK
    bounds.append(start + n)
    pieces = list(zip(bounds[:-1], bounds[1:]))

    def work(piece):
        lo, hi = piece
        return comp.run(episode_uniforms(master, tag, lo, hi - lo, width))

    if workers == 1 or len(pieces) == 1:
        parts = [work(p) for p in pieces]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(work, pieces))
    a, o, r, s = (np.concatenate([p[i] for p in parts]) for i in range(4))
    return TrajectoryBatch(a, o, r, int(master), tag, start, states=s)


def rollout(model: PomdpModel, policy: GeneralPolicy, seed: SeedSpec) -> Trajectory:
    return rollout_batch(model, policy, 1, seed.master, seed.tag, start=seed.index, workers=1)[0]


def empirical_value(model: PomdpModel, policy: GeneralPolicy, n: int, master: int,
                    tag: str = "eval", *, workers: int | None = None) -> float:
    """Mean total reward over ``n`` seeded episodes."""
    batch = rollout_batch(model, policy, n, master, tag, workers=workers)
    return float(batch.rewards.sum(axis=1).mean())


class Environment:
    """Rollout-only handle on a model: the learner never sees latent states or tables."""

    def __init__(self, model: PomdpModel, workers: int | None = None):
        self.__model = extend_with_sinks(model)
        self.workers = workers
        self.episodes = 0

    @property
    def horizon(self) -> int:
        return self.__model.H

    @property
    def n_actions(self) -> int:
        return self.__model.A

    @property
    def n_obs(self) -> int:
        """Observation alphabet size including the sink observation."""
        return self.__model.n_obs

    def rollout_batch(self, policy: GeneralPolicy, n: int, master: int, tag: str) -> ObservedBatch:
        self.episodes += n
        return rollout_batch(self.__model, policy, n, master, tag, workers=self.workers).observed()

    def empirical_value(self, policy: GeneralPolicy, n: int, master: int, tag: str) -> float:
        batch = self.rollout_batch(policy, n, master, tag)
        return float(batch.rewards.sum(axis=1).mean())


# ---------------------------------------------------------------------------
# dump format (JSON lines: one header record, then one record per episode)


def write_dump(batches, path, *, horizon: int, n_actions: int, n_obs: int) -> None:
    with open(path, "w") as f:
        f.write(json.dumps({"format_version": DUMP_FORMAT_VERSION, "kind": "trajectory_dump",
                            "horizon": horizon, "n_actions": n_actions, "n_obs": n_obs}) + "\n")
        for b in batches:
            for i in range(len(b)):
                sd = b.seed(i)
                f.write(json.dumps({"seed": [sd.master, sd.tag, sd.index],
                                    "actions": b.actions[i].tolist(),
                                    "observations": b.observations[i].tolist(),
                                    "rewards": b.rewards[i].tolist()}) + "\n")


def read_dump(path):
    """Return ``(header, {tag: ObservedBatch})``; episodes keep their file order per tag."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError("empty dump file (missing header)")
    header = json.loads(lines[0])
    if header.get("kind") != "trajectory_dump" or header.get("format_version") != DUMP_FORMAT_VERSION:
        raise ValueError("not a trajectory dump of a supported version")
    H = header["horizon"]
    groups = {}
    for ln in lines[1:]:
        if not ln.strip():
            continue
        rec = json.loads(ln)
        master, tag, idx = rec["seed"]
        if len(rec["actions"]) != H - 1 or len(rec["observations"]) != H - 1:
            raise ValueError(f"malformed episode record for {tag}#{idx}")
        groups.setdefault(tag, []).append((master, idx, rec))
    out = {}
    for tag, recs in groups.items():
        a = np.array([r["actions"] for _, _, r in recs], dtype=np.int64).reshape(-1, H - 1)
        o = np.array([r["observations"] for _, _, r in recs], dtype=np.int64).reshape(-1, H - 1)
        rw = np.array([r["rewards"] for _, _, r in recs], dtype=float).reshape(-1, H - 1)
        out[tag] = ObservedBatch(a, o, rw, recs[0][0], tag, recs[0][1])
    return header, out
