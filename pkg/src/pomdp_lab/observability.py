"""Observability margin of an emission matrix.

The margin of ``Ob`` is ``min ||Ob x||_1 / ||x||_1`` over nonzero sum-zero
vectors ``x`` on the (non-sink) states.  Any such ``x`` splits into a positive
part on a set ``P`` and a negative part on the complement ``Q`` with equal
mass, so the minimum is found by one linear program per unordered bipartition
``(P, Q)``: minimise ``||Ob (p - q)||_1`` with ``p`` on ``P``, ``q`` on ``Q``,
``p, q >= 0`` and ``sum p = sum q = 1/2`` (hence ``||p - q||_1 = 1``).
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog

from .model import PomdpModel

MAX_EXACT_STATES = 12


class DeskScaleError(ValueError):
    """Raised when an exact computation is requested beyond its size bound."""


def _bipartition_lp(M, P, Q):
    n_o = M.shape[0]
    nP, nQ = len(P), len(Q)
    B = np.hstack([M[:, P], -M[:, Q]])               # Ob (p - q) = B [p; q]
    n = nP + nQ
    # variables [p, q, t]; minimise sum t with -t <= B[p;q] <= t
    c = np.concatenate([np.zeros(n), np.ones(n_o)])
    A_ub = np.block([[B, -np.eye(n_o)], [-B, -np.eye(n_o)]])
    b_ub = np.zeros(2 * n_o)
    A_eq = np.zeros((2, n + n_o))
    A_eq[0, :nP] = 1.0
    A_eq[1, nP:n] = 1.0
    b_eq = np.array([0.5, 0.5])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * (n + n_o), method="highs")
    if not res.success:
        raise RuntimeError(f"margin LP failed: {res.message}")
    x = np.zeros(M.shape[1])
    x[P] = res.x[:nP]
    x[Q] = -res.x[nP:n]
    return float(np.abs(M @ x).sum()), x


def emission_margin(M, return_witness=False):
    """Exact margin of an ``(O, S)`` column-stochastic matrix."""
    M = np.asarray(M, dtype=float)
    S = M.shape[1]
    if S > MAX_EXACT_STATES:
        raise DeskScaleError(f"margin requires desk-scale S (S={S} > {MAX_EXACT_STATES})")
    best, witness = 1.0, None
    if S >= 2:
        best = np.inf
        rest = list(range(1, S))
        # state 0 is pinned to P so each unordered bipartition appears once
        for r in range(0, S - 1):
            for extra in itertools.combinations(rest, r):
                P = [0, *extra]
                Q = [s for s in range(S) if s not in P]
                val, x = _bipartition_lp(M, P, Q)
                if val < best:
                    best, witness = val, x
        best = min(max(best, 0.0), 1.0)
    return (best, witness) if return_witness else best


def margin_lower_bound(M) -> float:
    """Cheap certified lower bound ``sigma_min(M) / sqrt(S)`` usable at any size."""
    M = np.asarray(M, dtype=float)
    S = M.shape[1]
    if S < 2:
        return 1.0
    # restrict to the sum-zero subspace
    U = np.linalg.svd(np.ones((1, S)))[2][1:].T        # orthonormal basis, (S, S-1)
    smin = np.linalg.svd(M @ U, compute_uv=False).min()
    return float(min(1.0, smin / np.sqrt(S)))


def observability_margin(model: PomdpModel, h: int, *, lower_bound=False, return_witness=False):
    """Margin of the step-``h`` emission matrix restricted to the non-sink states.

    With ``lower_bound=True`` a singular-value bound is returned instead of the
    exact value; it works beyond the exact-enumeration size limit.
    """
    if not 2 <= h <= model.H:
        raise IndexError(f"observations exist only at steps 2..{model.H}")
    M = model.Ob[h][:, : model.S]
    if lower_bound:
        return margin_lower_bound(M)
    return emission_margin(M, return_witness=return_witness)
