import itertools

import numpy as np
import pytest

from pomdp_lab.diagnostics import exact_policy_value
from pomdp_lab.policies import (Atom, ExpansionLimitError, Mixture, PrefixThenUniform, UniformRandom, ZPolicy,
                                begin_episode, dumps_policy, flatten, hat_policy, loads_policy,
                                running_average, tail_average, uniform_mixture)

from oracles import random_model, random_zpolicy


def const(a, L=1, H=3):
    return ZPolicy.constant(L, H, 2, 3, a)


def test_atom_replays_policy():
    zp = random_zpolicy(np.random.default_rng(0), 1, 4, 2, 3)
    ex = begin_episode(Atom(zp), np.random.default_rng(1), 2)
    for acts, obs in [((), ()), ((1,), (2,)), ((0, 1, 1), (0, 2, 1))]:
        h = len(acts) + 1
        assert ex.act(h, acts, obs) == zp.action(h, acts, obs)


def test_unit_mixture_same_as_child():
    zp = const(1)
    ex = begin_episode(Mixture(((1.0, Atom(zp)),)), np.random.default_rng(0), 2)
    assert ex.policy is zp


def test_mixture_frequencies():
    p, q = Atom(const(0)), Atom(const(1))
    rng = np.random.default_rng(7)
    n = 100_000
    hits = sum(begin_episode(Mixture(((0.5, p), (0.5, q))), rng, 2).policy.tables[1][0] == 1 for _ in range(n))
    assert abs(hits / n - 0.5) < 0.01


def test_prefix_cutoff_one_is_uniform():
    ex = begin_episode(PrefixThenUniform(Atom(const(1)), 1), np.random.default_rng(0), 2)
    acts = [ex.act(1, (), ()) for _ in range(1000)]
    assert 0 < sum(acts) < 1000


def test_uniform_frequencies():
    ex = begin_episode(UniformRandom(), np.random.default_rng(3), 3)
    draws = np.array([ex.act(1, (), ()) for _ in range(100_000)])
    assert np.all(np.abs(np.bincount(draws, minlength=3) / draws.size - 1 / 3) < 0.01)


def test_short_history_reads_padded_window():
    zp = ZPolicy.from_function(2, 4, 2, 3, lambda h, z: int(z[0] == (-1, -1)))
    assert zp.action(2, (0,), (1,)) == 1
    assert zp.action(3, (0, 0), (1, 1)) == 0


def test_hat_policy_cutoffs():
    base = Atom(const(1, L=2, H=6))
    for h in range(1, 4):
        assert hat_policy(base, h, 2).cutoff == 1
    assert hat_policy(base, 5, 2).cutoff == 3   # base plays steps 1..2


def test_hat_policy_uniform_suffix_marginals():
    from pomdp_lab.fixtures import load_fixture
    from pomdp_lab.simulator import rollout_batch
    m = load_fixture("perm_g07")
    pol = hat_policy(Atom(ZPolicy.constant(2, 6, 2, 4, 1)), 5, 2)
    b = rollout_batch(m, pol, 100_000, 0, "hat")
    assert np.all(b.actions[:, :2] == 1)
    for j in range(2, 5):
        assert abs(b.actions[:, j].mean() - 0.5) < 0.01


def test_tail_and_running_average_weights():
    ps = [Atom(const(a)) for a in (0, 1, 0)]
    assert [w for w, _ in tail_average(ps[:1]).components] == [1.0]
    assert [w for w, _ in tail_average(ps[:2]).components] == [0.5, 0.5]
    assert [w for w, _ in running_average(ps[:2]).components] == [0.5, 0.5]
    with pytest.raises(ValueError):
        running_average([])


def test_mixture_component_frequencies_uniform():
    ps = [Atom(const(a)) for a in (0, 1)] + [UniformRandom()]
    mix = tail_average(ps)
    rng = np.random.default_rng(5)
    n = 60_000
    counts = {0: 0, 1: 0, None: 0}
    for _ in range(n):
        ex = begin_episode(mix, rng, 2)
        counts[None if ex.policy is None else int(ex.policy.tables[1][0])] += 1
    assert all(abs(c / n - 1 / 3) < 0.01 for c in counts.values())


def test_bad_weights_rejected():
    with pytest.raises(ValueError):
        Mixture(((0.6, UniformRandom()), (0.6, UniformRandom())))
    with pytest.raises(ValueError):
        Mixture(((1.5, UniformRandom()), (-0.5, UniformRandom())))


def test_flatten_associativity_exact_value():
    rng = np.random.default_rng(11)
    m = random_model(rng, S=2, A=2, O=2, H=3)
    zs = [Atom(random_zpolicy(rng, 1, 3, 2, 3)) for _ in range(3)]
    nested = Mixture(((0.3, zs[0]), (0.7, Mixture(((0.5, zs[1]), (0.5, PrefixThenUniform(zs[2], 2)))))))
    flat = Mixture(tuple((c.weight, Atom(c.policy) if c.cutoff > 2 else PrefixThenUniform(Atom(c.policy), c.cutoff))
                         for c in flatten(nested)))
    assert abs(exact_policy_value(m, nested) - exact_policy_value(m, flat)) < 1e-9


def test_zpolicy_locality_exhaustive():
    zp = random_zpolicy(np.random.default_rng(2), 1, 3, 2, 3)
    for h in (2, 3):
        seen = {}
        for acts in itertools.product(range(2), repeat=h - 1):
            for obs in itertools.product(range(3), repeat=h - 1):
                key = (acts[-1], obs[-1])
                a = zp.action(h, acts, obs)
                assert seen.setdefault(key, a) == a


def test_episode_determinism():
    zp = random_zpolicy(np.random.default_rng(2), 1, 4, 2, 3)
    mix = uniform_mixture([Atom(zp), UniformRandom()])
    runs = []
    for _ in range(2):
        rng = np.random.default_rng(99)
        ex = begin_episode(mix, rng, 2)
        runs.append([ex.act(h, (0,) * (h - 1), (1,) * (h - 1)) for h in range(1, 4)])
    assert runs[0] == runs[1]


def test_expansion_limit():
    leaf = uniform_mixture([Atom(const(0)), Atom(const(1))])
    tree = leaf
    for _ in range(12):
        tree = uniform_mixture([tree, tree])
    with pytest.raises(ExpansionLimitError):
        flatten(tree)


def test_serialization_round_trip():
    rng = np.random.default_rng(4)
    zp = random_zpolicy(rng, 2, 4, 2, 3)
    tree = Mixture(((0.25, Atom(zp)), (0.75, PrefixThenUniform(uniform_mixture([Atom(zp), UniformRandom()]), 3))))
    s = dumps_policy(tree)
    back = loads_policy(s)
    assert dumps_policy(back) == s
    assert back.components[0][1].policy.same_as(zp)
