"""Exact analysis objects for small POMDPs.

Everything here uses the true model tables and is meant for verification on
desk-scale instances, never as input to the learner.  The workhorse is the
joint occupancy of (latent state, observation window) under a general policy,
computed by an exact forward recursion per deterministic resolution.
"""
from __future__ import annotations

import numpy as np

from .beliefs import batch_filter
from .model import PomdpModel, extend_with_sinks
from .observability import DeskScaleError
from .policies import DEFAULT_EXPANSION_LIMIT, GeneralPolicy, action_probs, flatten, window_length
from .simulator import rollout_batch
from .zmdp import TabularZMDP, obs_visitation, sink_rows
from .zstate import ZIndexer

MAX_HISTORIES = 10**6
PINV_RCOND = 1e-10


def decode_windows(ix: ZIndexer, h: int, idx):
    """Vectorised decode: ``(actions, observations)`` arrays of shape ``(n, width(h))``, oldest first."""
    idx = np.asarray(idx, dtype=np.int64)
    m = ix.width(h)
    acts = np.zeros((idx.size, m), dtype=np.int64)
    obs = np.zeros((idx.size, m), dtype=np.int64)
    rest = idx.copy()
    for j in range(m - 1, -1, -1):
        rest, d = np.divmod(rest, ix.base)
        acts[:, j], obs[:, j] = np.divmod(d, ix.n_obs)
    return acts, obs


# ---------------------------------------------------------------------------
# joint occupancy


def joint_occupancy(model: PomdpModel, policy: GeneralPolicy, L: int = 0, *,
                    limit=DEFAULT_EXPANSION_LIMIT):
    """Joint law of ``(s_h, window_h)`` for every step.

    Windows hold ``max(L, policy window)`` pairs.  Returns ``(indexer, occ)``
    with ``occ[h]`` of shape ``(nS, size(h))``.
    """
    model = extend_with_sinks(model)
    comps = flatten(policy, limit=limit)
    Lp = window_length(comps)
    Lw = max(L, Lp)
    ix = ZIndexer(model.A, model.n_obs, Lw, model.H)
    if ix.size(model.H) * model.n_states > 50 * MAX_HISTORIES:
        raise DeskScaleError("joint occupancy table too large")
    occ = {h: np.zeros((model.n_states, ix.size(h))) for h in range(1, model.H + 1)}
    for c in comps:
        mu = model.b1[:, None].copy()
        occ[1] += c.weight * mu
        for h in range(1, model.H):
            nz = ix.size(h)
            pa = action_probs(c, h, np.arange(nz), model.A,
                              suffix_of=lambda zz, j, h=h: ix.suffix(h, zz, j))
            flow = np.einsum("os,asr,rz,za->szao", model.Ob[h + 1], model.T[h], mu, pa)
            succ = ix.successors(h)
            nxt = ix.size(h + 1)
            dest = np.arange(model.n_states)[:, None, None, None] * nxt + succ[None]
            mu = np.bincount(dest.ravel(), weights=flow.ravel(),
                             minlength=model.n_states * nxt).reshape(model.n_states, nxt)
            occ[h + 1] += c.weight * mu
    return ix, occ


def visitation(model: PomdpModel, policy: GeneralPolicy, h: int, kind: str = "state", L: int = 0,
               *, limit=DEFAULT_EXPANSION_LIMIT) -> np.ndarray:
    """State, observation or window visitation at step ``h``.

    ``kind="zstate"`` returns a vector over canonical step-``h`` windows of
    length ``L`` (for ``h <= L`` these are the short suffixes).
    """
    model = extend_with_sinks(model)
    if not 1 <= h <= model.H:
        raise IndexError(f"step {h} outside 1..{model.H}")
    ix, occ = joint_occupancy(model, policy, L if kind == "zstate" else 0, limit=limit)
    d_s = occ[h].sum(axis=1)
    if kind == "state":
        return d_s
    if kind == "observation":
        if h < 2:
            raise ValueError("no observation at step 1")
        return model.Ob[h] @ d_s
    if kind == "zstate":
        target = ZIndexer(model.A, model.n_obs, L, model.H)
        suf = ix.suffix(h, np.arange(ix.size(h)), L)
        return np.bincount(suf, weights=occ[h].sum(axis=0), minlength=target.size(h))
    raise ValueError(f"unknown visitation kind {kind!r}")


def exact_policy_value(model: PomdpModel, policy: GeneralPolicy, *, limit=DEFAULT_EXPANSION_LIMIT) -> float:
    model = extend_with_sinks(model)
    _, occ = joint_occupancy(model, policy, limit=limit)
    return float(sum(model.R[h] @ (model.Ob[h] @ occ[h].sum(axis=1)) for h in range(2, model.H + 1)))


def exact_optimal_value(model: PomdpModel, max_histories: int = MAX_HISTORIES):
    """Optimal value over history-dependent policies by backward induction on beliefs.

    Returns ``(V*, policy)`` where ``policy`` maps ``(actions, observations)``
    history tuples of positive probability to the optimal action.
    """
    model = extend_with_sinks(model)
    H, A, nO = model.H, model.A, model.n_obs
    if (A * model.O) ** H > max_histories:
        raise DeskScaleError(f"(A*O)^H = {(A * model.O) ** H} exceeds {max_histories}")
    policy = {}

    def V(h, b, acts, obs):
        if h == H:
            return 0.0
        best, best_a = -np.inf, 0
        for a in range(A):
            pred = model.T[h, a] @ b
            po = model.Ob[h + 1] @ pred
            q = 0.0
            for o in range(nO):
                if po[o] <= 0:
                    continue
                nb = model.Ob[h + 1, o] * pred / po[o]
                q += po[o] * (model.R[h + 1, o] + V(h + 1, nb, acts + (a,), obs + (o,)))
            if q > best + 1e-15:
                best, best_a = q, a
        policy[(acts, obs)] = best_a
        return best

    v = V(1, model.b1.copy(), (), ())
    return float(v), policy


# ---------------------------------------------------------------------------
# analysis MDPs and truncations


def tilde_mdp(model: PomdpModel, policies, L: int) -> TabularZMDP:
    """Reward-free window MDP whose rows filter from the policies' true state visitation.

    Row ``(z, a)`` at step ``h`` is ``Ob_{h+1} T_h(a) b``, with ``b`` the
    ``L``-step filter of window ``z`` started from the step-``(h-L)`` state
    visitation of ``policies[h-1]``.
    """
    model = extend_with_sinks(model)
    H = model.H
    ix = ZIndexer(model.A, model.n_obs, L, H)
    P = {}
    for h in range(1, H):
        n = ix.size(h)
        acts, obs = decode_windows(ix, h, np.arange(n))
        if h - L > 1:
            prior = visitation(model, policies[h - 1], h - L, "state")
            start, step = np.repeat(prior[None], n, axis=0), h - L
        else:
            start, step = np.repeat(model.b1[None], n, axis=0), 1
        b = batch_filter(model, start, acts, obs, step)               # (n, nS)
        rows = np.einsum("os,asr,nr->nao", model.Ob[h + 1], model.T[h], b)
        sink = ix.contains_obs(h, model.sink_obs)
        p = sink_rows(ix, h)
        p[~sink] = rows[~sink]
        P[h] = p
    return TabularZMDP(L, H, model.A, model.n_obs, P, np.zeros((H + 1, model.n_obs)))


def underexplored_set(model: PomdpModel, policy: GeneralPolicy, phi: float, h: int) -> set:
    """Non-sink states visited at step ``h`` with probability strictly below ``phi``."""
    d = visitation(model, policy, h, "state")
    return {s for s in range(model.S) if d[s] < phi}


def zlow_set(model: PomdpModel, policy: GeneralPolicy, zeta: float, h: int, L: int) -> set:
    """Sink-free canonical windows at step ``h`` visited with probability at most ``zeta``."""
    model = extend_with_sinks(model)
    ix = ZIndexer(model.A, model.n_obs, L, model.H)
    d = visitation(model, policy, h, "zstate", L)
    sink = ix.contains_obs(h, model.sink_obs)
    return {ix.decode(h, i) for i in range(ix.size(h)) if not sink[i] and d[i] <= zeta}


def truncated_pomdp(model: PomdpModel, policies, phi: float, H_prime: int, L: int) -> PomdpModel:
    """Reroute transitions into under-explored states to the sink, one step at a time.

    For ``H'' = L+1 .. H'``: every state visited at step ``H''-L`` with
    probability below ``phi`` under ``policies[H''-1]`` in the previous
    truncation loses its inbound mass at step ``H''-L-1`` to the sink.  When
    ``H''-L-1 = 0`` the initial distribution is rerouted instead.
    """
    model = extend_with_sinks(model)
    if not 1 <= H_prime <= model.H:
        raise ValueError(f"H'={H_prime} outside 1..{model.H}")
    cur = model
    S, sink = model.S, model.sink_state
    for Hpp in range(L + 1, H_prime + 1):
        t = Hpp - L
        und = sorted(underexplored_set(cur, policies[Hpp - 1], phi, t))
        if not und:
            continue
        if t - 1 >= 1:
            T = cur.T.copy()
            for s in und:
                T[t - 1, :, sink, :S] += T[t - 1, :, s, :S]
                T[t - 1, :, s, :S] = 0.0
            cur = cur.replace(T=T)
        else:
            b1 = cur.b1.copy()
            for s in und:
                b1[sink] += b1[s]
                b1[s] = 0.0
            cur = cur.replace(b1=b1)
    return cur


# ---------------------------------------------------------------------------
# pseudoinverse estimates


def pseudoinverse(Ob) -> np.ndarray:
    """Moore-Penrose pseudoinverse; singular values below ``1e-10 * max`` are dropped."""
    return np.linalg.pinv(np.asarray(Ob, dtype=float), rcond=PINV_RCOND)


def latent_estimate(zmdp: TabularZMDP, policy: GeneralPolicy, h: int, Ob) -> np.ndarray:
    """Formal latent distribution ``Ob^+ d_{O,h}`` (entries may be negative)."""
    Ob = np.asarray(Ob, dtype=float)
    pinv = pseudoinverse(Ob)
    if Ob.shape[0] == zmdp.n_obs and Ob[-1, -1] == 1.0 and not Ob[-1, :-1].any():
        assert np.allclose(pinv[-1, :-1], 0, atol=1e-9) and np.allclose(pinv[:-1, -1], 0, atol=1e-9), \
            "sink block of the pseudoinverse is not isolated"
    return pinv @ obs_visitation(zmdp, policy, h)


# ---------------------------------------------------------------------------
# belief contraction


def contraction_profile(model: PomdpModel, policy: GeneralPolicy, prior, Ls, h: int, *,
                        n: int = 10**4, master: int = 0, exact: bool = False):
    """Mean L1 gap between the exact belief and the ``L``-step filter at step ``h``.

    Returns ``[(L, mean_error, standard_error), ...]``.  Monte Carlo mode
    evaluates every ``L`` on the same ``n`` trajectories; exact mode
    enumerates all histories (standard error reported as 0).
    """
    model = extend_with_sinks(model)
    prior = np.asarray(prior, dtype=float)
    if prior.shape[0] == model.S:
        prior = np.append(prior, 0.0)
    if exact:
        ix, occ = joint_occupancy(model, policy, h - 1)
        mass = occ[h].sum(axis=0)
        keep = np.nonzero(mass > 0)[0]
        p = mass[keep]
        b_exact = (occ[h][:, keep] / p).T
        acts, obs = decode_windows(ix, h, keep)
        weights = p
    else:
        batch = rollout_batch(model, policy, n, master, "contraction")
        acts = batch.actions[:, : h - 1]
        obs = batch.observations[:, : h - 1]
        b_exact = batch_filter(model, np.repeat(model.b1[None], len(acts), axis=0), acts, obs, 1)
        weights = np.full(len(acts), 1.0 / len(acts))
    out = []
    for L in Ls:
        if h - L <= 1:
            out.append((L, 0.0, 0.0))
            continue
        start = np.repeat(prior[None], len(acts), axis=0)
        b_hat = batch_filter(model, start, acts[:, h - L - 1:], obs[:, h - L - 1:], h - L)
        err = np.abs(b_exact - b_hat).sum(axis=1)
        mean = float(weights @ err)
        se = 0.0 if exact else float(err.std(ddof=1) / np.sqrt(len(err)))
        out.append((L, mean, se))
    return out
