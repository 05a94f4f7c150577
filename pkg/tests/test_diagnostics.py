import itertools

import numpy as np
import pytest

from pomdp_lab.beliefs import exact_belief
from pomdp_lab.diagnostics import (contraction_profile, exact_optimal_value, exact_policy_value,
                                   joint_occupancy, latent_estimate, pseudoinverse, tilde_mdp,
                                   truncated_pomdp, underexplored_set, visitation, zlow_set)
from pomdp_lab.fixtures import MICRO, generate, load_fixture
from pomdp_lab.model import from_tables
from pomdp_lab.observability import DeskScaleError, emission_margin
from pomdp_lab.policies import Atom, PrefixThenUniform, UniformRandom, ZPolicy, uniform_mixture
from pomdp_lab.simulator import rollout_batch
from pomdp_lab.zmdp import check_zmdp, obs_visitation
from pomdp_lab.zstate import ZIndexer, z_canonical

from oracles import (enumerate_trajectories, optimal_value_by_histories, random_model, random_zpolicy,
                     state_visitation, tabular_optimum, traj_value, window_visitation)


def policy_suite(m, rng, n=4, L=1):
    out = [UniformRandom()]
    for _ in range(n):
        a = Atom(random_zpolicy(rng, L, m.H, m.A, m.n_obs))
        out += [a, uniform_mixture([a, PrefixThenUniform(Atom(random_zpolicy(rng, L, m.H, m.A, m.n_obs)), 2)])]
    return out


@pytest.mark.parametrize("name", MICRO)
def test_policy_value_and_visitation_match_enumeration(name):
    m = load_fixture(name)
    rng = np.random.default_rng(1)
    for pol in policy_suite(m, rng):
        trajs = enumerate_trajectories(m, pol)
        assert exact_policy_value(m, pol) == pytest.approx(traj_value(m, trajs), abs=1e-10)
        for h in range(1, m.H + 1):
            np.testing.assert_allclose(visitation(m, pol, h, "state"), state_visitation(m, trajs, h), atol=1e-10)
            for L in (1, 2):
                want = window_visitation(trajs, h, L)
                got = visitation(m, pol, h, "zstate", L)
                ix = ZIndexer(m.A, m.n_obs, L, m.H)
                assert abs(got.sum() - 1) < 1e-10
                for z, p in want.items():
                    assert got[ix.encode(h, z)] == pytest.approx(p, abs=1e-10)


def test_zero_reward_values():
    m = random_model(np.random.default_rng(0), S=2, A=2, O=2, H=3, rewards=False)
    assert exact_policy_value(m, UniformRandom()) == 0.0
    assert exact_optimal_value(m)[0] == 0.0


def test_deterministic_chain_value():
    shift = np.roll(np.eye(3), 1, axis=0)
    R = np.array([[0.1, 0.2, 0.3]] * 3)
    m = from_tables(np.eye(3)[0], np.stack([[shift]] * 3), np.stack([np.eye(3)] * 3), R)
    assert exact_policy_value(m, UniformRandom()) == pytest.approx(0.2 + 0.3 + 0.1)


@pytest.mark.parametrize("name", MICRO)
def test_optimal_value_matches_history_oracle(name):
    m = load_fixture(name)
    v, pol = exact_optimal_value(m)
    assert v == pytest.approx(optimal_value_by_histories(m), abs=1e-9)
    for p in policy_suite(m, np.random.default_rng(2)):
        assert exact_policy_value(m, p) <= v + 1e-9


def test_optimal_value_fully_observable():
    m = load_fixture("identity_mdp")
    S = m.S
    R_state = np.zeros((m.H + 1, S))
    R_state[2:] = m.R[2:, :S]
    want = tabular_optimum(m.T[:, :, :S, :S], R_state, m.b1[:S], m.H)
    assert exact_optimal_value(m)[0] == pytest.approx(want, abs=1e-12)


def test_optimal_value_single_action():
    m = random_model(np.random.default_rng(3), S=3, A=1, O=2, H=4)
    assert exact_optimal_value(m)[0] == pytest.approx(exact_policy_value(m, UniformRandom()), abs=1e-12)


def test_optimal_value_bound():
    m = generate(3, 4, 4, 12, 0.5, seed=0)
    with pytest.raises(DeskScaleError):
        exact_optimal_value(m)


def test_visitation_identities():
    m = load_fixture("micro_b")
    pol = policy_suite(m, np.random.default_rng(4))[2]
    np.testing.assert_array_equal(visitation(m, pol, 1), m.b1)
    for h in range(2, m.H + 1):
        np.testing.assert_allclose(visitation(m, pol, h, "observation"),
                                   m.Ob[h] @ visitation(m, pol, h, "state"), atol=1e-10)


def test_visitation_monte_carlo():
    m = load_fixture("micro_c")
    pol = policy_suite(m, np.random.default_rng(5))[3]
    n = 100_000
    b = rollout_batch(m, pol, n, 0, "vis")
    for h in range(1, m.H + 1):
        emp = np.bincount(b.states[:, h - 1], minlength=m.n_states) / n
        assert 0.5 * np.abs(emp - visitation(m, pol, h)).sum() <= 0.02


def test_joint_occupancy_masses():
    m = load_fixture("micro_b")
    _, occ = joint_occupancy(m, UniformRandom(), 2)
    for h in occ:
        assert abs(occ[h].sum() - 1) < 1e-9


# ---------------------------------------------------------------------------


def test_tilde_long_window_is_exact_kernel():
    m = load_fixture("micro_b")
    L = m.H
    z = tilde_mdp(m, [UniformRandom()] * m.H, L)
    assert check_zmdp(z) == []
    ix = z.indexer
    for h in range(1, m.H):
        for acts in itertools.product(range(m.A), repeat=h - 1):
            for obs in itertools.product(range(m.O), repeat=h - 1):
                i = ix.encode(h, z_canonical(acts, obs, L))
                b = exact_belief(m, acts, obs)
                for a in range(m.A):
                    np.testing.assert_allclose(z.P[h][i, a], m.Ob[h + 1] @ m.T[h, a] @ b, atol=1e-12)


def test_tilde_identity_observations():
    m = load_fixture("identity_mdp")
    rng = np.random.default_rng(6)
    pols = [Atom(random_zpolicy(rng, 1, m.H, m.A, m.n_obs)) for _ in range(m.H)]
    z = tilde_mdp(m, pols, 1)
    ix = z.indexer
    for h in range(2, m.H):
        for i in range(ix.size(h)):
            s = ix.decode(h, i)[-1][1]
            if s == m.sink_obs:
                continue
            for a in range(m.A):
                np.testing.assert_allclose(z.P[h][i, a], m.Ob[h + 1] @ m.T[h, a][:, s], atol=1e-12)


def test_tilde_rows_stochastic():
    m = load_fixture("contract_g05")
    z = tilde_mdp(m, policy_suite(m, np.random.default_rng(7), n=4, L=2)[: m.H], 2)
    assert check_zmdp(z) == []


# ---------------------------------------------------------------------------


def test_truncation_phi_zero_identity():
    m = load_fixture("micro_b")
    pols = [UniformRandom()] * m.H
    out = truncated_pomdp(m, pols, 0.0, m.H, 1)
    np.testing.assert_array_equal(out.T, m.T)
    np.testing.assert_array_equal(out.b1, m.b1)


def test_truncation_phi_above_one_reroutes_all():
    m = load_fixture("micro_b")
    L = 1
    out = truncated_pomdp(m, [UniformRandom()] * m.H, 1.5, m.H, L)
    assert out.b1[m.sink_state] == pytest.approx(1.0, abs=1e-15)
    assert np.all(out.b1[: m.S] == 0)
    for t in range(1, m.H - L):
        assert np.all(out.T[t, :, : m.S, : m.S] == 0)


def prefix_probs(m, pol):
    """Probability of every observable prefix (actions, observations) of every length."""
    out = {}
    for (_, a, o), p in enumerate_trajectories(m, pol).items():
        for t in range(len(a) + 1):
            key = (a[:t], o[:t])
            out[key] = out.get(key, 0.0) + p
    return out


@pytest.mark.parametrize("name", ["micro_a", "micro_b"])
def test_truncation_chain_prefix_monotone(name):
    m = load_fixture(name)
    rng = np.random.default_rng(8)
    pols = policy_suite(m, rng, n=2)[: m.H]
    L, phi = 1, 0.2
    models = [truncated_pomdp(m, pols, phi, Hp, L) for Hp in range(1, m.H + 1)]
    probe = policy_suite(m, rng, n=2)
    for pol in probe:
        tables = [prefix_probs(mm, pol) for mm in models]
        for earlier, later in zip(tables, tables[1:]):
            for k, p in later.items():
                if all(o != m.sink_obs for o in k[1]):
                    assert p <= earlier.get(k, 0.0) + 1e-12


def test_truncation_sink_mass_nondecreasing():
    m = load_fixture("micro_b")
    rng = np.random.default_rng(9)
    pols = policy_suite(m, rng, n=2)[: m.H]
    tm = truncated_pomdp(m, pols, 0.3, m.H, 1)
    for pol in policy_suite(m, rng, n=3):
        sink = [visitation(tm, pol, h)[m.sink_state] for h in range(1, m.H + 1)]
        assert np.all(np.diff(sink) >= -1e-12)


def test_truncation_reachability_exhaustive():
    m = load_fixture("micro_a")              # H = 3, A = O = 2
    L, phi = 1, 0.3
    rng = np.random.default_rng(10)
    pols = policy_suite(m, rng, n=1)[: m.H]
    suite = [Atom(p) for p in
             __import__("pomdp_lab.zmdp", fromlist=["all_zpolicies"]).all_zpolicies(1, m.H, m.A, m.n_obs)]
    for h in range(L + 1, m.H + 1):
        tm = truncated_pomdp(m, pols, phi, h, L)
        d_cover = visitation(tm, pols[h - 1], h - L)
        for pol in suite:
            d = visitation(tm, pol, h - L)
            for s in range(m.S):
                if d[s] > 0:
                    assert d_cover[s] >= phi - 1e-12


def test_underexplored_and_zlow_extremes():
    m = load_fixture("micro_b")
    pol = UniformRandom()
    assert underexplored_set(m, pol, 0.0, 3) == set()
    assert underexplored_set(m, pol, 2.0, 3) == set(range(m.S))
    assert zlow_set(m, pol, -0.1, 3, 1) == set()
    ix = ZIndexer(m.A, m.n_obs, 1, m.H)
    allz = {ix.decode(3, i) for i in range(ix.size(3)) if not ix.contains_obs(3, m.sink_obs)[i]}
    assert zlow_set(m, pol, 1.0, 3, 1) == allz


@pytest.mark.parametrize("name", MICRO)
def test_sets_match_enumeration(name):
    m = load_fixture(name)
    pol = policy_suite(m, np.random.default_rng(11))[1]
    trajs = enumerate_trajectories(m, pol)
    for h in range(1, m.H + 1):
        d = state_visitation(m, trajs, h)
        for phi in (0.1, 0.3):
            assert underexplored_set(m, pol, phi, h) == {s for s in range(m.S) if d[s] < phi}
        w = window_visitation(trajs, h, 1)
        ix = ZIndexer(m.A, m.n_obs, 1, m.H)
        for zeta in (0.05, 0.2):
            want = {ix.decode(h, i) for i in range(ix.size(h))
                    if not ix.contains_obs(h, m.sink_obs)[i] and w.get(ix.decode(h, i), 0.0) <= zeta}
            assert zlow_set(m, pol, zeta, h, 1) == want


# ---------------------------------------------------------------------------


def test_latent_estimate_identity():
    m = load_fixture("identity_mdp")
    z = tilde_mdp(m, [UniformRandom()] * m.H, 1)
    np.testing.assert_allclose(latent_estimate(z, UniformRandom(), 3, np.eye(z.n_obs)),
                               obs_visitation(z, UniformRandom(), 3), atol=1e-12)


def test_latent_estimate_exact_case():
    m = load_fixture("micro_b")
    z = tilde_mdp(m, [UniformRandom()] * m.H, m.H - 1)
    for h in range(2, m.H + 1):
        est = latent_estimate(z, UniformRandom(), h, m.Ob[h])
        np.testing.assert_allclose(est, visitation(m, UniformRandom(), h), atol=1e-9)


def test_pseudoinverse_norm_bound():
    m = load_fixture("micro_c")
    rng = np.random.default_rng(12)
    for h in range(2, m.H + 1):
        M = m.Ob[h][: m.O, : m.S]
        g = emission_margin(M)
        P = pseudoinverse(M)
        for _ in range(200):
            x = rng.standard_normal(m.O)
            assert np.abs(P @ x).sum() <= np.sqrt(m.S) / g * np.abs(x).sum() + 1e-9


# ---------------------------------------------------------------------------


def test_contraction_clipping_zero():
    m = load_fixture("contract_g05")
    prof = contraction_profile(m, UniformRandom(), np.ones(3) / 3, [5, 7, 9], 6, n=2000)
    assert all(err == 0.0 for _, err, _ in prof)


def test_contraction_identity_observations_zero():
    m = load_fixture("identity_mdp")
    prof = contraction_profile(m, UniformRandom(), np.ones(3) / 3, [1, 2, 3], 5, n=2000)
    assert all(err < 1e-12 for _, err, _ in prof)


def test_contraction_exact_matches_monte_carlo():
    m = load_fixture("contract_g05")
    Ls = [1, 2, 3]
    ex = contraction_profile(m, UniformRandom(), np.ones(3) / 3, Ls, 5, exact=True)
    mc = contraction_profile(m, UniformRandom(), np.ones(3) / 3, Ls, 5, n=20_000)
    for (_, e, _), (_, mean, se) in zip(ex, mc):
        assert abs(e - mean) <= 4 * se + 1e-12
