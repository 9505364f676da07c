import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynkinlab.core import (
    AssumptionFlags,
    GameConfig,
    RewardSpec,
    check_assumptions,
    eval_reward,
    grid_steps,
    normalize,
)
from dynkinlab.errors import UnsupportedNormalizationError, ValidationError

GRID = np.linspace(-5, 5, 1001)


def test_affine_values():
    assert eval_reward(RewardSpec.affine(1, 0), 3.0) == 3.0
    assert eval_reward(RewardSpec.affine(2, -1), 0.5) == 0.0


def test_power_tail_value():
    f = RewardSpec.power_tail(gamma=2.0)
    assert eval_reward(f, -3.0) == -9.0


def test_array_evaluation_matches_scalars():
    f = RewardSpec.power_tail(gamma=0.5, m=1.0)
    xs = np.array([-2.0, 0.0, 1.0, 4.0])
    np.testing.assert_array_equal(eval_reward(f, xs), [eval_reward(f, v) for v in xs])


@pytest.mark.parametrize("kwargs", [
    dict(kind="power-tail", gamma=0.0),
    dict(kind="power-tail", gamma=-1.0),
    dict(kind="affine", k=0.0),
    dict(kind="affine", k=-2.0),
    dict(kind="affine", k=float("nan")),
    dict(kind="cubic"),
    dict(kind="piecewise-tabulated", table=((0.0, 1.0),)),
    dict(kind="piecewise-tabulated", table=((1.0, 1.0), (0.0, 0.0))),
])
def test_malformed_specs_rejected(kwargs):
    with pytest.raises(ValidationError):
        RewardSpec(**kwargs)


def test_tabulated_extrapolates_with_end_slopes():
    f = RewardSpec.tabulated([(-1.0, -2.0), (0.0, 0.0), (2.0, 1.0)], k=2.0, b=0.0)
    assert eval_reward(f, -3.0) == pytest.approx(-6.0)
    assert eval_reward(f, 1.0) == pytest.approx(0.5)
    assert eval_reward(f, 4.0) == pytest.approx(2.0)


def test_evaluation_is_deterministic():
    f = RewardSpec.power_tail(gamma=1.7, m=0.3)
    assert eval_reward(f, 2.2) == eval_reward(f, 2.2)


def test_reward_json_roundtrip():
    for f in (RewardSpec.affine(2, 4), RewardSpec.power_tail(0.5, m=1, k=1, b=1),
              RewardSpec.tabulated([(0, 0), (1, 2)], k=2)):
        assert RewardSpec.from_json(f.to_json()) == f


def test_game_config_validation():
    with pytest.raises(ValidationError):
        GameConfig(0, 0, dt=0.0)
    with pytest.raises(ValidationError):
        GameConfig(0, 0, dt=1.0, t_max=0.5)
    with pytest.raises(ValidationError):
        GameConfig(0, 0, n_paths=0)
    g = GameConfig(1, 2, t_max=2.0, dt=0.5)
    assert g.n_steps == 4
    assert GameConfig.from_json(g.to_json()) == g
    assert "T_max" in json.loads(g.to_json())


def test_grid_steps_rounding():
    assert grid_steps(1.0, 0.1) == 10
    assert grid_steps(1.05, 0.1) == 10
    assert grid_steps(0.0, 1.0) == 0


def test_assumptions_identity_reward():
    flags = check_assumptions(RewardSpec.affine(1, 0), GRID)
    assert flags.a1 and flags.a2 and flags.a3 and flags.a4
    assert flags.a1_prime and flags.a4_prime


def test_assumptions_shifted_affine():
    flags = check_assumptions(RewardSpec.affine(1, 2), GRID)
    assert not flags.a4 and flags.a4_prime
    assert not flags.a1 and flags.a1_prime
    assert flags.m == -2.0


def test_assumptions_square_root_tail():
    # grid oracle evaluated independently of the library
    grid = np.linspace(-2.0, 10.0, 1201)
    f = RewardSpec.power_tail(gamma=0.5, k=1.0, b=1.0)
    vals = np.sign(grid) * np.sqrt(np.abs(grid))
    a1 = bool(np.all(vals[grid < 0] < 0) and np.all(vals[grid >= 0] >= 0))
    pos = grid[grid > 0]
    tail = pos[pos >= np.quantile(pos, 0.75)]
    a2 = bool(np.min(np.sqrt(tail) / tail**0.5) > 0)
    a3 = bool(np.all(vals <= grid + 1.0))
    flags = check_assumptions(f, grid)
    assert (flags.a1, flags.a2, flags.a3) == (a1, a2, a3) == (True, True, True)
    assert not flags.a4
    assert flags.gamma == 0.5


def test_assumption_a3_refuted_far_left():
    # -sqrt(u) <= 1 - u fails once u > (3 + sqrt 5) / 2
    f = RewardSpec.power_tail(gamma=0.5, k=1.0, b=1.0)
    assert not check_assumptions(f, np.linspace(-10, 10, 101)).a3


def test_flags_invariant():
    with pytest.raises(ValidationError):
        AssumptionFlags(a1=False, a2=True, a3=True, a4=True, a1_prime=True, a4_prime=True)


@given(st.floats(0.1, 10), st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_affine_normalization_preserves_rewards(k, b, x1, x2):
    f = RewardSpec.affine(k, b)
    g, y1, y2 = normalize(f, x1, x2)
    shift = y1 - x1
    assert g.b == 0.0 and g.k == f.k
    assert y2 - x2 == pytest.approx(shift)
    xs = np.linspace(-5, 5, 21)
    np.testing.assert_allclose(eval_reward(g, xs + shift), eval_reward(f, xs), rtol=1e-12, atol=1e-12)


def test_normalization_examples():
    g, y1, y2 = normalize(RewardSpec.affine(2, 4), 1, -3)
    assert g == RewardSpec.affine(2, 0) and (y1, y2) == (3, -1)
    g, y1, y2 = normalize(RewardSpec.affine(1, -1), 1, 0)
    assert g == RewardSpec.affine(1, 0) and (y1, y2) == (0, -1)
    f = RewardSpec.power_tail(gamma=2.0, m=0.0)
    assert normalize(f, 1.5, -2.0) == (f, 1.5, -2.0)


def test_normalization_of_shifted_power_tail():
    f = RewardSpec.power_tail(gamma=1.5, m=-1.0)
    g, y1, y2 = normalize(f, 0.5, 2.0)
    assert (y1, y2) == (1.5, 3.0) and g.m == 0.0
    for x in (-2.0, 0.0, 3.0):
        assert eval_reward(g, x + 1.0) == pytest.approx(eval_reward(f, x))
    assert check_assumptions(g, GRID).a1


@given(st.floats(0.1, 10), st.floats(-10, 10))
@settings(max_examples=50)
def test_normalize_idempotent(k, b):
    g, y1, y2 = normalize(RewardSpec.affine(k, b), 0.0, 1.0)
    assert normalize(g, y1, y2) == (g, y1, y2)


def test_tabulated_without_single_sign_change_rejected():
    f = RewardSpec.tabulated([(-1, 1), (0, -1), (1, 1)], m=0.0)
    with pytest.raises(UnsupportedNormalizationError):
        normalize(f, 0, 0)


def test_tabulated_normalization_shifts_knots():
    f = RewardSpec.tabulated([(0, -1), (1, 0), (2, 2)], k=2, b=0, m=1.0)
    g, y1, _ = normalize(f, 1.5, 0)
    assert y1 == 0.5
    assert eval_reward(g, 0.5) == pytest.approx(eval_reward(f, 1.5))
    assert math.isclose(g.b, 2.0)
