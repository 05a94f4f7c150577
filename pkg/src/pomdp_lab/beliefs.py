"""Exact and windowed belief states.

Beliefs are plain probability vectors over the sink-extended state set.  When
the normalizer of an update vanishes the belief is undefined; by convention it
then puts all of its mass on the sink state.
"""
from __future__ import annotations

import numpy as np

from .model import PomdpModel, extend_with_sinks

ZERO_NORMALIZER = 1e-300


def sink_belief(model: PomdpModel) -> np.ndarray:
    model = extend_with_sinks(model)
    b = np.zeros(model.n_states)
    b[model.sink_state] = 1.0
    return b


def _as_extended(model, prior):
    prior = np.asarray(prior, dtype=float)
    if prior.shape[0] == model.S:
        prior = np.append(prior, 0.0)
    if prior.shape != (model.n_states,):
        raise ValueError(f"belief has shape {prior.shape}, expected ({model.n_states},)")
    return prior


def belief_update(model: PomdpModel, belief, h: int, a: int, o: int) -> np.ndarray:
    """Posterior over the state at step ``h+1`` after playing ``a`` at ``h`` and seeing ``o``."""
    model = extend_with_sinks(model)
    if not 1 <= h <= model.H - 1:
        raise IndexError(f"belief update step {h} outside 1..{model.H - 1}")
    b = _as_extended(model, belief)
    unnorm = model.Ob[h + 1, o] * (model.T[h, a] @ b)
    z = unnorm.sum()
    if z < ZERO_NORMALIZER:
        return sink_belief(model)
    return unnorm / z


def exact_belief(model: PomdpModel, actions, observations) -> np.ndarray:
    """Belief at step ``h = len(actions) + 1`` given ``a_{1:h-1}`` and ``o_{2:h}``."""
    model = extend_with_sinks(model)
    actions, observations = list(actions), list(observations)
    if len(actions) != len(observations):
        raise ValueError("history needs as many observations (o_2..o_h) as actions (a_1..a_{h-1})")
    if len(actions) > model.H - 1:
        raise IndexError("history longer than the horizon")
    b = model.b1.copy()
    for t, (a, o) in enumerate(zip(actions, observations), start=1):
        b = belief_update(model, b, t, a, o)
    return b


def approx_belief(model: PomdpModel, prior, actions, observations, h: int, L: int) -> np.ndarray:
    """Belief obtained by filtering only the last ``L`` steps, starting from ``prior``.

    ``actions``/``observations`` may be the full history or any suffix of it
    holding at least ``min(L, h-1)`` pairs; only that many trailing pairs are
    read.  When ``h - L <= 1`` the filter starts at step 1 from ``b1`` and the
    result is the exact belief.
    """
    model = extend_with_sinks(model)
    if L < 0:
        raise ValueError("window length must be nonnegative")
    m = min(L, h - 1)
    actions, observations = list(actions), list(observations)
    if len(actions) < m or len(observations) < m:
        raise ValueError(f"window needs {m} action/observation pairs")
    win_a = actions[len(actions) - m:]
    win_o = observations[len(observations) - m:]
    if h - L > 1:
        b = _as_extended(model, prior).copy()
        start = h - L
    else:
        b = model.b1.copy()
        start = 1
    for t, (a, o) in enumerate(zip(win_a, win_o), start=start):
        b = belief_update(model, b, t, a, o)
    return b


def batch_filter(model: PomdpModel, start_beliefs, actions, observations, start_step: int):
    """Vectorised filtering of many histories at once.

    ``start_beliefs`` has shape ``(n, nS)`` and is the belief at ``start_step``;
    ``actions[:, j]`` / ``observations[:, j]`` hold ``a_{start+j}`` and
    ``o_{start+j+1}``.  Returns the beliefs after all columns are consumed.
    """
    model = extend_with_sinks(model)
    b = np.array(start_beliefs, dtype=float)
    n = b.shape[0]
    sink = np.zeros(model.n_states)
    sink[model.sink_state] = 1.0
    for j in range(actions.shape[1]):
        t = start_step + j
        Ta = model.T[t][actions[:, j]]                       # (n, nS, nS)
        pred = np.einsum("nij,nj->ni", Ta, b)
        unnorm = pred * model.Ob[t + 1][observations[:, j]]  # (n, nS)
        z = unnorm.sum(axis=1)
        dead = z < ZERO_NORMALIZER
        z[dead] = 1.0
        b = unnorm / z[:, None]
        if dead.any():
            b[dead] = sink
    assert b.shape[0] == n
    return b
