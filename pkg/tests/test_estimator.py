from collections import Counter

import numpy as np
import pytest

from pomdp_lab.estimator import CountTable, approx_mdp, approx_mdp_from_dump, pass_tag
from pomdp_lab.fixtures import load_fixture
from pomdp_lab.model import from_tables
from pomdp_lab.policies import Atom, UniformRandom, hat_policy
from pomdp_lab.simulator import Environment, write_dump
from pomdp_lab.zmdp import check_zmdp, dumps_zmdp
from pomdp_lab.zstate import ZIndexer, z_canonical

from oracles import random_zpolicy


def env_of(name):
    return Environment(load_fixture(name))


def test_threshold_never_met_diverts_everything():
    env = env_of("micro_b")
    z = approx_mdp(env, 1, 400, 400, [UniformRandom()] * env.horizon)
    for h in range(1, env.horizon):
        assert z.diverted[h].all()
        assert np.all(z.P[h][:, :, -1] == 1.0)


def test_deterministic_identity_model_point_masses():
    shift = np.roll(np.eye(3), 1, axis=0)
    m = from_tables(np.eye(3)[0], np.stack([[shift, np.eye(3)]] * 3), np.stack([np.eye(3)] * 3), np.zeros((3, 3)))
    z = approx_mdp(Environment(m), 1, 2000, 10, [UniformRandom()] * 4)
    ix = z.indexer
    for h in range(1, 4):
        for i in range(ix.size(h)):
            for a in range(2):
                if z.diverted[h][i, a]:
                    continue
                s = 0 if h == 1 else ix.decode(h, i)[-1][1]
                nxt = (s + 1) % 3 if a == 0 else s
                assert z.P[h][i, a, nxt] == 1.0


def test_output_rows_are_counts_or_sink():
    env = env_of("perm_g07")
    N0, N1 = 3000, 40
    rng = np.random.default_rng(0)
    pols = [Atom(random_zpolicy(rng, 2, 6, 2, 4)) for _ in range(6)]
    table = CountTable(ZIndexer(env.n_actions, env.n_obs, 2, env.horizon))
    for h in range(1, env.horizon + 1):
        b = env.rollout_batch(hat_policy(pols[h - 1], h, 2), N0, 0, pass_tag("", h))
        table.add_rewards(b)
        if h < env.horizon:
            table.add_pass(h, b)
    z = table.build(N1)
    assert dumps_zmdp(z) == dumps_zmdp(approx_mdp(Environment(load_fixture("perm_g07")), 2, N0, N1, pols))
    assert check_zmdp(z) == []
    m = load_fixture("perm_g07")
    for h in range(1, env.horizon):
        c = table.counts[h]
        tot = c.sum(axis=2)
        assert tot.sum() == N0
        for i, a in zip(*np.nonzero(~z.diverted[h])):
            assert tot[i, a] >= N1
            np.testing.assert_array_equal(z.P[h][i, a], c[i, a] / tot[i, a])
        for i, a in zip(*np.nonzero(z.diverted[h])):
            assert z.P[h][i, a, -1] == 1.0
    seen = table.reward_seen
    np.testing.assert_array_equal(z.reward[seen[:, :-1].nonzero()[0], seen[:, :-1].nonzero()[1]],
                                  m.R[seen[:, :-1].nonzero()[0], seen[:, :-1].nonzero()[1]])


def test_recount_oracle_and_replay(tmp_path):
    m = load_fixture("micro_b")
    env = Environment(m)
    N0 = 1000
    L = 1
    from pomdp_lab.simulator import rollout_batch
    batches = [rollout_batch(m, hat_policy(UniformRandom(), h, L), N0, 5, pass_tag("", h)).observed()
               for h in range(1, m.H + 1)]
    path = tmp_path / "d.jsonl"
    write_dump(batches, path, horizon=m.H, n_actions=m.A, n_obs=m.n_obs)
    live = approx_mdp(env, L, N0, 50, [UniformRandom()] * m.H, master=5)
    replay = approx_mdp_from_dump(path, L, N0, 50)
    assert dumps_zmdp(live) == dumps_zmdp(replay)

    half = approx_mdp_from_dump(path, L, N0 // 2, 1)
    ix = ZIndexer(m.A, m.n_obs, L, m.H)
    for h in range(1, m.H):
        b = batches[h - 1]
        cnt = Counter()
        for a_row, o_row in zip(b.actions[: N0 // 2].tolist(), b.observations[: N0 // 2].tolist()):
            z = ix.encode(h, z_canonical(a_row[: h - 1], o_row[: h - 1], L))
            cnt[(z, a_row[h - 1], o_row[h - 1])] += 1
        for (z, a, o), c in cnt.items():
            tot = sum(v for (z2, a2, _), v in cnt.items() if (z2, a2) == (z, a))
            assert half.P[h][z, a, o] == c / tot


def test_empty_dump_diverts(tmp_path):
    p = tmp_path / "e.jsonl"
    write_dump([], p, horizon=3, n_actions=2, n_obs=3)
    z = approx_mdp_from_dump(p, 1, 10, 1)
    assert all(z.diverted[h].all() for h in (1, 2))


def test_preconditions():
    env = env_of("micro_b")
    with pytest.raises(ValueError):
        approx_mdp(env, 1, 10, 11, [UniformRandom()] * env.horizon)
    with pytest.raises(ValueError):
        approx_mdp(env, env.horizon, 10, 1, [UniformRandom()] * env.horizon)
    with pytest.raises(TypeError):
        approx_mdp(load_fixture("micro_b"), 1, 10, 1, [UniformRandom()] * 4)


def test_monotone_refinement():
    violations = 0
    for seed in range(20):
        small = approx_mdp(env_of("two_state"), 1, 2000, 300, [UniformRandom()] * 4, master=seed)
        big = approx_mdp(env_of("two_state"), 1, 4000, 300, [UniformRandom()] * 4, master=seed)
        kept = lambda z: sum(int((~z.diverted[h]).sum()) for h in range(1, 4))  # noqa: E731
        violations += kept(big) < kept(small)
    assert violations <= 1


def test_sample_accounting():
    env = env_of("micro_c")
    approx_mdp(env, 1, 123, 5, [UniformRandom()] * env.horizon)
    assert env.episodes == 123 * env.horizon
