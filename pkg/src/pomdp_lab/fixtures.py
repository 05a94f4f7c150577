"""Synthetic model generators and the shipped fixture set.

Two emission structures are available:

* ``noisy-permutation``: ``Ob = (1-eta) E + eta/O``, where ``E`` maps states
  injectively onto observations and ``eta = 1 - gamma``.  Uniform noise
  annihilates sum-zero vectors, so the observability margin is ``gamma``.
* ``random``: Dirichlet emission columns, resampled until every step's
  margin reaches ``gamma``.

Shipped fixtures are plain model files under ``pomdp_lab/data``; run
``python -m pomdp_lab.fixtures`` to regenerate them.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .model import PomdpModel, from_tables, load_model, save_model, validate_model
from .observability import emission_margin

STRUCTURES = ("noisy-permutation", "random")


class RejectionBudgetError(RuntimeError):
    pass


def noisy_permutation(S: int, O: int, gamma: float, rng) -> np.ndarray:
    if O < S:
        raise ValueError("noisy-permutation emissions need O >= S")
    E = np.zeros((O, S))
    E[rng.permutation(O)[:S], np.arange(S)] = 1.0
    eta = 1.0 - gamma
    return (1 - eta) * E + eta / O


def generate(S, A, O, H, gamma, structure="noisy-permutation", seed=0, *, transition_conc=0.5,
             point_start=False, identity_emissions=False, max_tries=2000) -> PomdpModel:
    """Random POMDP with rewards in ``[0, 1]`` per observation and step."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    if structure not in STRUCTURES:
        raise ValueError(f"unknown structure {structure!r}")
    rng = np.random.default_rng(seed)
    if point_start:
        b1 = np.eye(S)[0]
    else:
        b1 = rng.dirichlet(np.ones(S))
    T = rng.dirichlet(np.full(S, transition_conc), size=(H - 1, A, S)).transpose(0, 1, 3, 2)
    R = rng.uniform(size=(H - 1, O))
    Ob = np.zeros((H - 1, O, S))
    for h in range(H - 1):
        if identity_emissions:
            Ob[h] = np.eye(O, S)
        elif structure == "noisy-permutation":
            Ob[h] = noisy_permutation(S, O, gamma, rng)
        else:
            for _ in range(max_tries):
                M = rng.dirichlet(np.full(O, 0.3), size=S).T
                if emission_margin(M) >= gamma:
                    break
            else:
                raise RejectionBudgetError(f"no emission matrix with margin >= {gamma} in {max_tries} draws")
            Ob[h] = M
    model = from_tables(b1, T, Ob, R)
    rep = validate_model(model)
    if not rep.passed:
        raise AssertionError(str(rep))
    return model


# name -> generator arguments
FIXTURES = {
    "micro_a": dict(S=2, A=2, O=2, H=3, gamma=0.4, structure="random", seed=11),
    "micro_b": dict(S=3, A=2, O=3, H=4, gamma=0.6, structure="noisy-permutation", seed=12),
    "micro_c": dict(S=2, A=3, O=3, H=4, gamma=0.3, structure="random", seed=13),
    "two_state": dict(S=2, A=2, O=2, H=4, gamma=0.6, structure="noisy-permutation", seed=21),
    "contract_g05": dict(S=3, A=2, O=3, H=8, gamma=0.5, structure="noisy-permutation", seed=31),
    "identity_mdp": dict(S=3, A=2, O=3, H=5, gamma=1.0, structure="noisy-permutation", seed=41,
                         identity_emissions=True, point_start=True),
    "perm_g07": dict(S=3, A=2, O=3, H=6, gamma=0.7, structure="noisy-permutation", seed=51),
}
MICRO = ("micro_a", "micro_b", "micro_c")


def fixture_path(name: str) -> Path:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}")
    return Path(str(resources.files("pomdp_lab") / "data" / f"{name}.json"))


def load_fixture(name: str) -> PomdpModel:
    return load_model(fixture_path(name))


def write_fixtures(directory=None):
    directory = Path(directory) if directory else Path(__file__).parent / "data"
    directory.mkdir(parents=True, exist_ok=True)
    for name, kw in FIXTURES.items():
        save_model(generate(**kw), directory / f"{name}.json")


if __name__ == "__main__":
    write_fixtures()
