"""Policy algebra over deterministic window policies.

A general policy is a tree of ``Atom`` (one deterministic window policy),
``Mixture`` (weighted choice, resolved once per episode), ``PrefixThenUniform``
(base actions before a cutoff step, uniform actions from it on) and
``UniformRandom``.  Every tree flattens to a finite list of weighted
``Component``s, each a window policy followed by uniform play from some step;
exact evaluators and the vectorised simulator work on that list.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .zstate import ZIndexer

WEIGHT_TOL = 1e-12
DEFAULT_EXPANSION_LIMIT = 4096


class ExpansionLimitError(RuntimeError):
    """Mixture has more deterministic resolutions than the exact evaluators allow."""


@dataclass(frozen=True, eq=False)
class ZPolicy:
    """Deterministic policy reading only the last ``L`` action/observation pairs.

    ``tables[h]`` maps the dense step-``h`` window index to an action
    (``tables[0]`` is unused).
    """

    L: int
    H: int
    n_actions: int
    n_obs: int
    tables: tuple

    def __post_init__(self):
        tabs = []
        ix = self.indexer
        if len(self.tables) != self.H + 1:
            raise ValueError(f"need H+1={self.H + 1} tables (index 0 unused)")
        for h, t in enumerate(self.tables):
            t = np.asarray(t, dtype=np.int64)
            if h >= 1 and t.shape != (ix.size(h),):
                raise ValueError(f"table at step {h} has shape {t.shape}, expected ({ix.size(h)},)")
            if t.size and (t.min() < 0 or t.max() >= self.n_actions):
                raise ValueError(f"action out of range at step {h}")
            t.setflags(write=False)
            tabs.append(t)
        object.__setattr__(self, "tables", tuple(tabs))

    @property
    def indexer(self) -> ZIndexer:
        return ZIndexer(self.n_actions, self.n_obs, self.L, self.H)

    @classmethod
    def constant(cls, L, H, n_actions, n_obs, action=0):
        ix = ZIndexer(n_actions, n_obs, L, H)
        tabs = [np.zeros(0, dtype=np.int64)] + [np.full(ix.size(h), action) for h in range(1, H + 1)]
        return cls(L, H, n_actions, n_obs, tuple(tabs))

    @classmethod
    def from_function(cls, L, H, n_actions, n_obs, fn):
        """Build from ``fn(h, z_tuple) -> action`` over all canonical windows."""
        ix = ZIndexer(n_actions, n_obs, L, H)
        tabs = [np.zeros(0, dtype=np.int64)]
        for h in range(1, H + 1):
            tabs.append(np.array([fn(h, ix.decode(h, i)) for i in range(ix.size(h))], dtype=np.int64))
        return cls(L, H, n_actions, n_obs, tuple(tabs))

    def action(self, h: int, actions, observations) -> int:
        z = self.indexer.encode_history(list(actions)[: h - 1], list(observations)[: h - 1])
        return int(self.tables[h][z])

    def same_as(self, other) -> bool:
        return (isinstance(other, ZPolicy) and (self.L, self.H, self.n_actions, self.n_obs)
                == (other.L, other.H, other.n_actions, other.n_obs)
                and all(np.array_equal(a, b) for a, b in zip(self.tables[1:], other.tables[1:])))


class GeneralPolicy:
    pass


@dataclass(frozen=True, eq=False)
class Atom(GeneralPolicy):
    policy: ZPolicy


@dataclass(frozen=True, eq=False)
class Mixture(GeneralPolicy):
    components: tuple  # of (weight, GeneralPolicy)

    def __post_init__(self):
        comps = tuple((float(w), p) for w, p in self.components)
        if not comps:
            raise ValueError("empty mixture")
        ws = np.array([w for w, _ in comps])
        if np.any(ws < 0) or abs(ws.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"mixture weights must be nonnegative and sum to 1 (sum={ws.sum()!r})")
        object.__setattr__(self, "components", comps)


@dataclass(frozen=True, eq=False)
class PrefixThenUniform(GeneralPolicy):
    """Play ``base`` at steps ``< cutoff`` and uniform actions at steps ``>= cutoff``."""

    base: GeneralPolicy
    cutoff: int


@dataclass(frozen=True, eq=False)
class UniformRandom(GeneralPolicy):
    pass


def uniform_mixture(policies) -> Mixture:
    policies = list(policies)
    if not policies:
        raise ValueError("cannot mix an empty list of policies")
    w = 1.0 / len(policies)
    return Mixture(tuple((w, p) for p in policies))


def hat_policy(pi: GeneralPolicy, h: int, L: int) -> PrefixThenUniform:
    """Follow ``pi`` for the first ``max(h-L-1, 0)`` steps, then act uniformly."""
    return PrefixThenUniform(pi, max(h - L - 1, 0) + 1)


def tail_average(pis, h: int | None = None) -> Mixture:
    """Uniform mixture of the per-step spanner policies for steps ``h..H``."""
    return uniform_mixture(pis)


def running_average(history) -> Mixture:
    """Uniform mixture over the ``k`` policies gathered so far."""
    return uniform_mixture(history)


# ---------------------------------------------------------------------------
# flattening


@dataclass(frozen=True, eq=False)
class Component:
    weight: float
    policy: ZPolicy | None   # None: uniform from step 1
    cutoff: int              # uniform actions at steps >= cutoff


INF_CUTOFF = 1 << 30


def flatten(policy: GeneralPolicy, limit: int | None = DEFAULT_EXPANSION_LIMIT) -> list:
    """Weighted deterministic resolutions of ``policy`` (zero-weight branches dropped)."""
    out = []

    def rec(p, w, cutoff):
        if w == 0.0:
            return
        if isinstance(p, Atom):
            out.append(Component(w, p.policy, cutoff))
        elif isinstance(p, UniformRandom):
            out.append(Component(w, None, 1))
        elif isinstance(p, PrefixThenUniform):
            rec(p.base, w, min(cutoff, p.cutoff))
        elif isinstance(p, Mixture):
            for cw, c in p.components:
                rec(c, w * cw, cutoff)
        else:
            raise TypeError(f"not a policy node: {p!r}")
        if limit is not None and len(out) > limit:
            raise ExpansionLimitError(
                f"policy has more than {limit} deterministic resolutions; use Monte Carlo evaluation")

    rec(policy, 1.0, INF_CUTOFF)
    return out


def window_length(components) -> int:
    """Longest window read by any atom in ``components`` (0 when all uniform)."""
    return max((c.policy.L for c in components if c.policy is not None and c.cutoff > 1), default=0)


def action_probs(comp: Component, h: int, z_idx, n_actions: int, suffix_of=None) -> np.ndarray:
    """Action distribution of one component over an array of window indices.

    ``suffix_of(z_idx, j)`` maps the caller's window indices to indices of
    their length-``j`` suffixes (needed when the caller tracks longer windows
    than the policy reads).
    Returns shape ``(len(z_idx), n_actions)``.
    """
    z_idx = np.asarray(z_idx)
    if comp.policy is None or h >= comp.cutoff:
        return np.full((z_idx.size, n_actions), 1.0 / n_actions)
    own = z_idx if suffix_of is None else suffix_of(z_idx, comp.policy.L)
    acts = comp.policy.tables[h][own]
    probs = np.zeros((z_idx.size, n_actions))
    probs[np.arange(z_idx.size), acts] = 1.0
    return probs


# ---------------------------------------------------------------------------
# per-episode execution


@dataclass
class PolicyExecution:
    policy: ZPolicy | None
    cutoff: int
    n_actions: int
    rng: np.random.Generator = field(repr=False)

    def act(self, h: int, actions, observations) -> int:
        if self.policy is None or h >= self.cutoff:
            return int(self.rng.integers(self.n_actions))
        return self.policy.action(h, actions, observations)


def begin_episode(policy: GeneralPolicy, rng: np.random.Generator, n_actions: int) -> PolicyExecution:
    """Resolve every mixture node once, returning a single-episode executor."""

    def resolve(p, cutoff):
        if isinstance(p, Atom):
            return p.policy, cutoff
        if isinstance(p, UniformRandom):
            return None, 1
        if isinstance(p, PrefixThenUniform):
            return resolve(p.base, min(cutoff, p.cutoff))
        if isinstance(p, Mixture):
            ws = np.array([w for w, _ in p.components])
            i = int(np.searchsorted(np.cumsum(ws), rng.random() * ws.sum(), side="right"))
            i = min(i, len(ws) - 1)
            return resolve(p.components[i][1], cutoff)
        raise TypeError(f"not a policy node: {p!r}")

    zp, cutoff = resolve(policy, INF_CUTOFF)
    return PolicyExecution(zp, cutoff, n_actions, rng)


def act(execution: PolicyExecution, h: int, actions, observations) -> int:
    return execution.act(h, actions, observations)


# ---------------------------------------------------------------------------
# serialization

POLICY_FORMAT_VERSION = 1


def policy_to_dict(p: GeneralPolicy) -> dict:
    if isinstance(p, Atom):
        zp = p.policy
        return {"kind": "atom", "L": zp.L, "H": zp.H, "n_actions": zp.n_actions,
                "n_obs": zp.n_obs, "tables": [t.tolist() for t in zp.tables[1:]]}
    if isinstance(p, Mixture):
        return {"kind": "mixture", "weights": [w for w, _ in p.components],
                "children": [policy_to_dict(c) for _, c in p.components]}
    if isinstance(p, PrefixThenUniform):
        return {"kind": "prefix_then_uniform", "cutoff": p.cutoff, "base": policy_to_dict(p.base)}
    if isinstance(p, UniformRandom):
        return {"kind": "uniform"}
    if isinstance(p, ZPolicy):
        return policy_to_dict(Atom(p))
    raise TypeError(f"not a policy node: {p!r}")


def policy_from_dict(d: dict) -> GeneralPolicy:
    kind = d["kind"]
    if kind == "atom":
        tabs = (np.zeros(0, dtype=np.int64),) + tuple(np.array(t, dtype=np.int64) for t in d["tables"])
        return Atom(ZPolicy(d["L"], d["H"], d["n_actions"], d["n_obs"], tabs))
    if kind == "mixture":
        return Mixture(tuple(zip(d["weights"], [policy_from_dict(c) for c in d["children"]])))
    if kind == "prefix_then_uniform":
        return PrefixThenUniform(policy_from_dict(d["base"]), int(d["cutoff"]))
    if kind == "uniform":
        return UniformRandom()
    raise ValueError(f"unknown policy node kind {kind!r}")


def dumps_policy(p: GeneralPolicy) -> str:
    return json.dumps({"format_version": POLICY_FORMAT_VERSION, "policy": policy_to_dict(p)})


def loads_policy(s: str) -> GeneralPolicy:
    d = json.loads(s)
    if d.get("format_version") != POLICY_FORMAT_VERSION:
        raise ValueError("unsupported policy format_version")
    return policy_from_dict(d["policy"])
