"""Approximate barycentric spanners from a linear optimisation oracle.

The oracle maps a direction ``r`` to ``(argument, max value, maximising
vector)`` over a finite achievable set ``X``.  The construction runs in
three phases:

0. rank discovery: probe a generic direction in the orthogonal complement
   of the span found so far (both signs); a returned vector outside the
   span is added, otherwise ``X`` lies in the span.  This fixes ``k`` and an
   orthonormal embedding ``Q`` of the span.
1. starting from the identity in ``R^k``, replace each column ``i`` by the
   oracle point maximising ``|det|`` with column ``i`` swapped in.
2. swap while some point multiplies ``|det|`` by more than ``lam``.

Replacing column ``i`` by ``y`` scales the determinant by ``(M^{-1} y)_i``,
so the swap direction is row ``i`` of ``M^{-1}`` and the stopping rule is
exactly the coefficient bound ``|(M^{-1} y)_i| <= lam`` for every ``y``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .policies import UniformRandom, uniform_mixture, Atom
from .zmdp import TabularZMDP, linear_opt, obs_visitation

RANK_TOL = 1e-9


@dataclass
class SpannerResult:
    args: list                   # oracle arguments (e.g. policies), one per spanner point
    points: np.ndarray           # (k, d) spanner vectors in the ambient space
    embedding: np.ndarray        # (d, k) orthonormal basis of the span
    lam: float
    n_calls: int = 0
    log_dets: list = field(default_factory=list)  # log|det| after phase 1 and after every swap

    @property
    def rank(self) -> int:
        return self.points.shape[0]

    def basis_matrix(self) -> np.ndarray:
        """``(k, k)`` matrix whose columns are the embedded spanner points."""
        return self.embedding.T @ self.points.T

    def coefficients(self, x) -> np.ndarray:
        return np.linalg.solve(self.basis_matrix(), self.embedding.T @ np.asarray(x, dtype=float))


class CountingOracle:
    """Wraps an oracle and counts calls."""

    def __init__(self, oracle):
        self.oracle = oracle
        self.calls = 0

    def __call__(self, r):
        self.calls += 1
        arg, val, x = self.oracle(r)
        x = np.asarray(x, dtype=float)
        if not (np.isfinite(val) and np.all(np.isfinite(x))):
            raise FloatingPointError("oracle returned non-finite values")
        return arg, float(val), x


def _residual(x, Q):
    if Q.shape[1] == 0:
        return x
    return x - Q @ (Q.T @ x)


def _outside(x, Q):
    return np.linalg.norm(_residual(x, Q)) > RANK_TOL * (1.0 + np.linalg.norm(x))


def _orth(vectors, d):
    if not vectors:
        return np.zeros((d, 0))
    q, _ = np.linalg.qr(np.array(vectors).T)
    return q


def barycentric_spanner(oracle, dim: int, lam: float = 2.0, *, seed: int = 0) -> SpannerResult:
    if lam <= 1:
        raise ValueError("approximation factor must exceed 1")
    orc = CountingOracle(oracle)
    rng = np.random.default_rng(seed)

    # phase 0: rank discovery
    found, args = [], []
    Q = np.zeros((dim, 0))
    while len(found) < dim:
        # orthonormal complement of the current span
        full = np.linalg.svd(Q.T, full_matrices=True)[2] if Q.shape[1] else np.eye(dim)
        W = full[Q.shape[1]:].T
        w = W @ rng.standard_normal(W.shape[1])
        w /= np.linalg.norm(w)
        added = False
        for sign in (1.0, -1.0):
            arg, _, x = orc(sign * w)
            if _outside(x, Q):
                found.append(x)
                args.append(arg)
                Q = _orth(found, dim)
                added = True
                break
        if not added:
            break
    k = len(found)
    if k == 0:
        return SpannerResult([], np.zeros((0, dim)), np.zeros((dim, 0)), lam, orc.calls)

    def best_for(direction_k):
        r = Q @ direction_k
        cands = [orc(r), orc(-r)]
        vals = [abs(direction_k @ (Q.T @ c[2])) for c in cands]
        j = int(np.argmax(vals))
        return cands[j][0], cands[j][2], vals[j]

    # phase 1
    M = np.eye(k)
    pts = [None] * k
    pargs = [None] * k
    for i in range(k):
        row = np.linalg.inv(M)[i]
        arg, x, _ = best_for(row)
        M[:, i] = Q.T @ x
        pts[i], pargs[i] = x, arg
    log_dets = [np.linalg.slogdet(M)[1]]

    # phase 2
    changed = True
    while changed:
        changed = False
        for i in range(k):
            row = np.linalg.inv(M)[i]
            arg, x, gain = best_for(row)
            if gain > lam:
                M[:, i] = Q.T @ x
                pts[i], pargs[i] = x, arg
                ld = np.linalg.slogdet(M)[1]
                assert ld > log_dets[-1] + np.log(lam) - 1e-9, "swap did not grow |det| by lam"
                log_dets.append(ld)
                changed = True
    return SpannerResult(pargs, np.array(pts), Q, lam, orc.calls, log_dets)


@dataclass
class SpannerCheck:
    max_coefficient: float
    within_bound: bool
    span_violations: int
    coefficients: np.ndarray


def verify_spanner(points, spanner: SpannerResult, B: float, tol: float = 1e-6) -> SpannerCheck:
    """Coefficients of every point against the spanner; flags points outside its span."""
    if spanner.rank == 0:
        raise ValueError("empty spanner")
    X = np.atleast_2d(np.asarray(points, dtype=float))
    Q = spanner.embedding
    Mk = spanner.basis_matrix()
    coefs = np.linalg.solve(Mk, Q.T @ X.T).T
    viol = sum(_outside(x, Q) for x in X)
    mx = float(np.abs(coefs).max()) if coefs.size else 0.0
    return SpannerCheck(mx, mx <= B + tol and viol == 0, int(viol), coefs)


def zmdp_oracle(zmdp: TabularZMDP, h: int):
    """Linear optimisation over achievable step-``(h-L)`` observation distributions."""

    def oracle(r):
        pol, val = linear_opt(zmdp, r, h)
        return pol, val, obs_visitation(zmdp, Atom(pol), h - zmdp.L)

    return oracle


def bary_spanner_policy(zmdp: TabularZMDP, h: int, L: int | None = None, lam: float = 2.0,
                        return_result: bool = False):
    """Uniform mixture over a 2-approximate spanner of step-``(h-L)`` observation distributions.

    Short horizons (``h - L < 2``, where the target step carries no
    observation) and an empty spanner fall back to uniform play.
    """
    L = zmdp.L if L is None else L
    if L != zmdp.L:
        raise ValueError("window length disagrees with the Z-MDP")
    if h - L < 2:
        return (UniformRandom(), None) if return_result else UniformRandom()
    res = barycentric_spanner(zmdp_oracle(zmdp, h), zmdp.n_obs, lam)
    if res.rank == 0:
        pol = UniformRandom()
    else:
        atoms = [Atom(p) for p in res.args]
        atoms += [atoms[0]] * (zmdp.n_obs - len(atoms))
        pol = uniform_mixture(atoms)
    return (pol, res) if return_result else pol
