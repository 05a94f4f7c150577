"""The learning loop: alternate window-MDP estimation with spanner-based exploration.

Each iteration mixes the exploration policies found so far, estimates a
window MDP from fresh rollouts, and computes for every step a uniform mixture
over a barycentric spanner of reachable observation distributions.  After
``K`` iterations the greedy policy of every estimate is evaluated by rollouts
and the best one is returned.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from .estimator import approx_mdp
from .policies import Atom, UniformRandom, ZPolicy, policy_to_dict, running_average, tail_average
from .simulator import Environment
from .spanner import bary_spanner_policy
from .zmdp import dp_optimal

REPORT_FORMAT_VERSION = 1
MAX_EXACT_DIGITS = 100_000  # beyond this many decimal digits N0/N1 are reported as inf


def eval_episode_count(H: int, K: int, alpha: float, beta: float) -> int:
    """Rollouts per candidate: ``ceil(100 H^2 log(K/beta) / alpha^2)``."""
    return math.ceil(100 * H**2 * math.log(K / beta) / alpha**2)


@dataclass
class HyperParams:
    mode: str                  # "theoretical" or "practical"
    alpha: float
    beta: float
    L: int
    N0: int | float
    N1: int | float
    K: int
    eval_episodes: int | None = None   # None: derived from (H, K, alpha, beta) at learn time
    epsilon: float | None = None
    phi: float | None = None
    theta: float | None = None
    zeta: Fraction | None = None
    delta: float | None = None
    delta_prime: float | None = None
    p: float | None = None
    C_star: float = 1.0
    log10_N0: float | None = None
    log10_N1: float | None = None

    def validate(self):
        if self.mode not in ("theoretical", "practical"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not (0 < self.alpha < 1 and 0 < self.beta < 1):
            raise ValueError("alpha and beta must lie in (0, 1)")
        if self.L < 1 or self.K < 1:
            raise ValueError("need L >= 1 and K >= 1")
        if not self.N1 <= self.N0:
            raise ValueError(f"N1={self.N1} exceeds N0={self.N0}")
        if self.N1 < 1:
            raise ValueError("N1 must be positive")
        if self.eval_episodes is not None and self.eval_episodes < 1:
            raise ValueError("eval_episodes must be positive")
        return self

    def episodes_per_candidate(self, H: int) -> int:
        if self.eval_episodes is not None:
            return int(self.eval_episodes)
        return eval_episode_count(H, self.K, self.alpha, self.beta)

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(self.zeta, Fraction):
            d["zeta"] = float(self.zeta)
        for key in ("N0", "N1"):
            if isinstance(d[key], int) and d[key].bit_length() > 63:
                d[key] = str(d[key])
            elif isinstance(d[key], float) and math.isinf(d[key]):
                d[key] = "inf"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        d = dict(d)
        for key in ("N0", "N1"):
            if isinstance(d.get(key), str):
                d[key] = math.inf if d[key] == "inf" else int(d[key])
        return cls(**d).validate()


def practical_params(*, alpha=0.1, beta=0.1, L=2, N0=50_000, N1=200, K=6, eval_episodes=None) -> HyperParams:
    return HyperParams("practical", alpha, beta, int(L), int(N0), int(N1), int(K),
                       None if eval_episodes is None else int(eval_episodes)).validate()


def _ceil_fraction(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def theoretical_params(alpha, beta, gamma, S, A, O, H, C_star=1.0) -> HyperParams:
    """Evaluate the theoretical hyperparameter schedule literally (natural logs).

    ``zeta``, ``N1`` and ``N0`` are computed in exact rational arithmetic
    because they routinely under/overflow floats; when the exact integers
    would exceed ``MAX_EXACT_DIGITS`` digits they are set to ``inf`` and only
    their base-10 logarithms are kept.
    """
    if not (0 < alpha < 1 and 0 < beta < 1):
        raise ValueError("alpha and beta must lie in (0, 1)")
    if min(gamma, S, A, O, H, C_star) <= 0:
        raise ValueError("all inputs must be positive")
    eps = alpha * gamma / (O**2 * H**5 * S**1.5 * C_star**2)
    phi = gamma * eps / (C_star * H**5 * S**3.5 * O**2)
    log_inv = math.log(1 / (eps * phi))
    L = math.ceil(C_star * min(log_inv * math.log(math.log(1 / phi) / eps) / gamma**2,
                               log_inv / gamma**4))
    theta = eps
    delta = C_star * O**2 * H**3 * math.sqrt(S) / gamma * eps
    K = 2 * H * S
    p = beta / (2 * K)

    log10_zeta = math.log10(eps) + math.log10(phi) - L * (2 * math.log10(A) + math.log10(O))
    log10_N1 = (math.log10(C_star * L) + (L + 1) * math.log10(A) + L * math.log10(O)
                + math.log10(math.log(A * O / p)) - 2 * math.log10(theta))
    log10_N0 = (math.log10(C_star) + log10_N1 + math.log10(A * L)
                + math.log10(math.log(O * A / p)) - log10_zeta)
    if log10_N0 < MAX_EXACT_DIGITS and isinstance(A, int) and isinstance(O, int):
        zeta = Fraction(eps) * Fraction(phi) / (A ** (2 * L) * O**L)
        N1 = _ceil_fraction(Fraction(C_star) * L * A ** (L + 1) * O**L
                            * Fraction(math.log(A * O / p)) / Fraction(theta) ** 2)
        N0 = _ceil_fraction(Fraction(C_star) * N1 * A * L * Fraction(math.log(O * A / p)) / zeta)
    else:
        zeta, N1, N0 = Fraction(0), math.inf, math.inf
    return HyperParams("theoretical", alpha, beta, L, N0, N1, K, None, eps, phi, theta, zeta,
                       delta, delta / 2, p, C_star, log10_N0, log10_N1).validate()


# ---------------------------------------------------------------------------


def select_best(values) -> int:
    """Index of the largest value, lowest index on ties.

    Accepts plain numbers or ``(policy, value)`` pairs.
    """
    vals = [v[1] if isinstance(v, tuple) else v for v in values]
    if not vals:
        raise ValueError("no candidates to choose from")
    best = 0
    for i, v in enumerate(vals):
        if v > vals[best]:
            best = i
    return best


@dataclass
class IterationRecord:
    k: int
    spanner_ranks: list          # per step h = 1..H (0 where the step falls back to uniform play)
    diverted_fraction: list      # per step h = 1..H-1: share of (window, action) rows sent to the sink
    candidate_value: float | None = None


@dataclass
class LearnReport:
    params: HyperParams
    seed: int
    horizon: int
    iterations: list
    k_star: int
    policy: ZPolicy
    episodes: int
    eval_episodes: int
    wall_clock: float = field(default=0.0, compare=False)
    history: list = field(default=None, repr=False, compare=False)  # history[k-1][h-1] = pi^{k,h}
    candidates: list = field(default=None, repr=False, compare=False)  # greedy policy of every estimate

    @property
    def candidate_values(self) -> list:
        return [it.candidate_value for it in self.iterations]

    def to_dict(self) -> dict:
        """Serializable report; wall-clock time is left out so reruns match byte for byte."""
        return {"format_version": REPORT_FORMAT_VERSION, "kind": "learn_report",
                "params": self.params.to_dict(), "seed": self.seed, "horizon": self.horizon,
                "iterations": [asdict(it) for it in self.iterations], "k_star": self.k_star,
                "candidate_values": self.candidate_values, "episodes": self.episodes,
                "eval_episodes": self.eval_episodes, "policy": policy_to_dict(Atom(self.policy))}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "h", "spanner_rank", "diverted_fraction", "candidate_value"])
        for it in self.iterations:
            for h in range(1, self.horizon + 1):
                div = it.diverted_fraction[h - 1] if h <= len(it.diverted_fraction) else ""
                w.writerow([it.k, h, it.spanner_ranks[h - 1], "" if div == "" else repr(div),
                            repr(it.candidate_value)])
        return buf.getvalue()


def exploration_policies(history, H):
    """Running averages ``h -> mixture of pi^{1,h} .. pi^{k,h}`` from per-iteration lists."""
    return [running_average([pis[h] for pis in history]) for h in range(H)]


def learn(env: Environment, params: HyperParams, seed: int = 0, *, progress=None) -> LearnReport:
    if not isinstance(env, Environment):
        raise TypeError("learn needs a rollout-only Environment handle")
    params.validate()
    if not (isinstance(params.N0, int) and isinstance(params.N1, int)):
        raise ValueError("sample sizes are not finite integers; use practical parameters")
    H, L, K = env.horizon, params.L, params.K
    if H <= L:
        raise ValueError(f"horizon H={H} must exceed the window length L={L}")
    t0 = time.perf_counter()
    start_episodes = env.episodes

    history = [[UniformRandom()] * H]     # history[k-1][h-1] = pi^{k,h}
    estimates, records = [], []
    for k in range(1, K + 1):
        explore = exploration_policies(history, H)
        zmdp = approx_mdp(env, L, params.N0, params.N1, explore, master=seed, tag_prefix=f"k={k}/")
        estimates.append(zmdp)
        span, ranks = [], []
        for h in range(1, H + 1):
            pol, res = bary_spanner_policy(zmdp, h, L, return_result=True)
            span.append(pol)
            ranks.append(0 if res is None else res.rank)
        history.append([tail_average(span[h - 1:], h) for h in range(1, H + 1)])
        div = [float(zmdp.diverted[h].mean()) for h in range(1, H)]
        records.append(IterationRecord(k, ranks, div))
        if progress:
            progress(f"iteration {k}/{K}: spanner ranks {ranks}")

    n_eval = params.episodes_per_candidate(H)
    candidates = []
    for k, zmdp in enumerate(estimates, start=1):
        pol, _ = dp_optimal(zmdp)
        val = env.empirical_value(Atom(pol), n_eval, seed, f"eval/k={k}")
        records[k - 1].candidate_value = val
        candidates.append((pol, val))
    k_star = select_best(candidates)
    return LearnReport(params, int(seed), H, records, k_star + 1, candidates[k_star][0],
                       env.episodes - start_episodes, n_eval, time.perf_counter() - t0, history,
                       [p for p, _ in candidates])


def expected_episodes(params: HyperParams, H: int) -> int:
    """Total rollouts one call to ``learn`` consumes."""
    return params.K * H * params.N0 + params.K * params.episodes_per_candidate(H)

