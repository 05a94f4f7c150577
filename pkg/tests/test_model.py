import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pomdp_lab.fixtures import FIXTURES, load_fixture
from pomdp_lab.model import (extend_with_sinks, from_tables, load_model, model_from_dict, model_to_dict,
                             save_model, strip_sinks, validate_model)
from pomdp_lab.policies import UniformRandom

from oracles import enumerate_trajectories, random_model


def two_state():
    T = [[[[0.9, 0.2], [0.1, 0.8]]]]
    Ob = [[[0.7, 0.1], [0.3, 0.9]]]
    R = [[1.0, 0.0]]
    return from_tables([0.6, 0.4], T, Ob, R, extend=False)


def test_well_formed_model_passes():
    rep = validate_model(two_state())
    assert rep.passed and rep.issues == []


def test_bad_transition_column_is_named():
    m = two_state()
    T = m.T.copy()
    T[1, 0, 0, 1] -= 0.1
    rep = validate_model(m.replace(T=T))
    assert not rep.passed
    assert any(i.location == "T(h=1,a=0,s=1)" for i in rep.issues)


def test_negative_reward_rejected():
    m = two_state()
    R = m.R.copy()
    R[2, 1] = -0.1
    rep = validate_model(m.replace(R=R))
    assert any("reward outside [0,1]" in i.message for i in rep.issues)


def test_sink_extension_shape_and_absorption():
    m = extend_with_sinks(two_state())
    assert (m.n_states, m.n_obs) == (3, 3)
    assert m.T[1, 0, 2, 2] == 1.0 and m.T[1, 0, :2, 2].sum() == 0
    assert m.Ob[2, 2, 2] == 1.0 and m.R[2, 2] == 0
    assert validate_model(m).passed


def test_sink_extension_idempotent():
    m = extend_with_sinks(two_state())
    m2 = extend_with_sinks(m)
    assert m2 is m


def test_extension_keeps_trajectory_law():
    m = random_model(np.random.default_rng(3), S=2, A=2, O=2, H=3)
    raw = strip_sinks(m)
    a = enumerate_trajectories(m, UniformRandom())
    b = enumerate_trajectories(raw, UniformRandom())
    assert set(a) == set(b)
    for k in a:
        assert abs(a[k] - b[k]) < 1e-15


def test_invalid_model_cannot_be_extended():
    m = two_state()
    b1 = np.array([0.5, 0.4])
    with pytest.raises(ValueError):
        extend_with_sinks(m.replace(b1=b1))


def test_file_round_trip(tmp_path):
    m = load_fixture("micro_b")
    save_model(m, tmp_path / "m.json")
    m2 = load_model(tmp_path / "m.json")
    for name in ("b1", "T", "Ob", "R"):
        np.testing.assert_array_equal(getattr(m, name), getattr(m2, name))
    d = json.loads((tmp_path / "m.json").read_text())
    assert len(d["T"]) == m.H - 1 and len(d["Ob"]) == m.H - 1 and len(d["states"]) == m.S


def test_unsupported_format_version():
    d = model_to_dict(two_state())
    d["format_version"] = 99
    with pytest.raises(ValueError):
        model_from_dict(d)


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_shipped_fixtures_validate(name):
    assert validate_model(load_fixture(name)).passed


@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(2, 4))
def test_random_models_validate(seed, S, A, O, H):
    m = random_model(np.random.default_rng(seed), S, A, O, H)
    assert validate_model(m).passed
    assert np.allclose(m.T[1:].sum(axis=2), 1, atol=1e-12)
