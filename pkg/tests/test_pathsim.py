import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynkinlab.analytics import hitting_tail
from dynkinlab.errors import CapacityError, ValidationError
from dynkinlab.pathsim import (
    BoundarySpec,
    SeedId,
    StoppingRule,
    first_hitting,
    read_path_dump,
    sample_stop,
    sample_stops,
    simulate_path,
    simulate_paths,
    write_path_dump,
)

RULES = [
    StoppingRule.immediate(),
    StoppingRule.never(),
    StoppingRule.deterministic(0.5),
    StoppingRule.deterministic(0.123),
    StoppingRule.hit(BoundarySpec.constant(0.8)),
    StoppingRule.hit(BoundarySpec.constant(-0.6, "lower")),
    StoppingRule.hit(BoundarySpec.square_root(0.7)),
    StoppingRule.hit(BoundarySpec.square_root(0.5, t0=1.0)),
    StoppingRule.hit(BoundarySpec.lil(3.0)),
    StoppingRule.hit(BoundarySpec.tabulated([(0, 1.0), (2, 0.2), (5, 1.5)])),
    StoppingRule.composite(1.0),
    StoppingRule.hazard(b=1.0),
    StoppingRule.hazard(knots=[(0, 1.0), (1, 0.5), (6, 0.0)]),
]


def test_single_point_path():
    p = simulate_path(SeedId(1, 0), dt=1.0, t_max=0.0)
    assert p.values.tolist() == [0.0] and p.times.tolist() == [0.0]


def test_path_determinism():
    a = simulate_path(SeedId(5, 17), 1e-3, 2.0)
    b = simulate_path(SeedId(5, 17), 1e-3, 2.0)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.values[0] == 0.0


def test_batch_paths_equal_single_paths():
    w = simulate_paths(4, 5, 0.01, 1.0, stream=2)
    for i in range(5):
        np.testing.assert_array_equal(w[i], simulate_path(SeedId(4, i, 2), 0.01, 1.0).values)


def test_variance_of_w1():
    n = 100_000
    w1 = simulate_paths(11, n, 0.25, 1.0)[:, -1]
    var = w1.var(ddof=1)
    # chi-square sampling error of the variance
    assert abs(var - 1.0) < 3 * math.sqrt(2.0 / (n - 1))


def test_capacity_error():
    with pytest.raises(CapacityError):
        simulate_path(SeedId(0, 0), 1e-12, 1e3)
    with pytest.raises(ValidationError):
        simulate_path(SeedId(0, 0), 0.0, 1.0)


def test_hitting_on_barrier_at_start():
    p = simulate_path(SeedId(0, 0), 0.01, 1.0)
    out = first_hitting(p, BoundarySpec.constant(0.0), 0.0)
    assert (out.time, out.position, out.censored) == (0.0, 0.0, False)


def test_hitting_censored_below_barrier():
    p = simulate_path(SeedId(0, 3), 0.01, 1.0)
    level = p.values.max() + 1.0
    assert first_hitting(p, BoundarySpec.constant(level), 0.0).censored


def test_lower_barrier_survival_matches_reflection():
    b = sample_stops(StoppingRule.hit(BoundarySpec.constant(-1.0, "lower")), 0.0, 100_000, 1e-3, 1.0, seed=3)
    p = float(np.mean(b.censored))
    q = hitting_tail(1.0, 1.0)
    assert q == pytest.approx(0.6826894921, abs=1e-9)
    assert abs(p - q) < 3 * math.sqrt(q * (1 - q) / b.n)


@pytest.mark.parametrize("rule", RULES, ids=lambda r: r.describe())
@pytest.mark.parametrize("x", [-0.7, 0.0, 0.4])
@pytest.mark.parametrize("bridge", [False, True])
def test_kernel_matches_reference(rule, x, bridge):
    dt, T, n = 0.02, 6.0, 60
    batch = sample_stops(rule, x, n, dt, T, seed=21, stream=1, bridge_correction=bridge)
    for i in range(n):
        o = sample_stop(rule, simulate_path(SeedId(21, i, 1), dt, T), x, bridge)
        if o.censored:
            assert batch.step[i] == -1
        else:
            assert batch.step[i] == o.step and batch.position[i] == o.position


def test_sample_stop_basic_rules():
    p = simulate_path(SeedId(0, 1), 0.01, 3.0)
    assert sample_stop(StoppingRule.immediate(), p, 5.0).time == 0.0
    assert sample_stop(StoppingRule.immediate(), p, 5.0).position == 5.0
    o = sample_stop(StoppingRule.deterministic(1.0), p, 2.0)
    assert o.time == pytest.approx(1.0) and o.position == 2.0 + p.values[100]
    assert sample_stop(StoppingRule.deterministic(4.0), p, 0.0).censored
    assert sample_stop(StoppingRule.never(), p, 0.0).censored


def test_composite_from_origin_stops_on_boundary():
    a = 1.0
    b = sample_stops(StoppingRule.composite(a), 0.0, 100_000, 0.05, 50.0, seed=1)
    ok = ~b.censored
    assert np.all(b.first_step[ok] == 0)
    np.testing.assert_array_equal(b.position[ok], a * np.sqrt(b.step[ok] * b.dt + 1.0))
    assert np.mean(b.position[ok]) == np.mean(a * np.sqrt(b.times[ok] + 1.0))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(RULES), st.floats(-1.0, 1.0), st.integers(1, 299))
def test_adaptedness(seed, rule, x, k):
    p = simulate_path(SeedId(seed, 0), 0.02, 6.0)
    full = sample_stop(rule, p, x, True)
    part = sample_stop(rule, p.truncate(k), x, True)
    if not full.censored and full.step <= k:
        assert (part.step, part.position) == (full.step, full.position)
    else:
        assert part.censored


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32), st.floats(-2.0, 2.0, allow_nan=False), st.floats(0.2, 3.0))
def test_adaptedness_across_different_futures(seed, x, a):
    # two paths agreeing up to step k, then diverging
    rule = StoppingRule.composite(a)
    p = simulate_path(SeedId(seed, 0), 0.05, 20.0)
    q = simulate_path(SeedId(seed + 1, 0), 0.05, 20.0)
    k = 150
    vals = np.concatenate([p.values[: k + 1], p.values[k] + (q.values[k + 1:] - q.values[k])])
    spliced = type(p)(p.times, vals, np.diff(vals), p.dt, p.seed_id)
    o1 = sample_stop(rule, p, x)
    o2 = sample_stop(rule, spliced, x)
    if not o1.censored and o1.step <= k:
        assert o2.step == o1.step


def test_composite_ordering():
    b = sample_stops(StoppingRule.composite(1.5), -1.0, 20_000, 0.01, 20.0, seed=4)
    ok = ~b.censored
    assert np.all(b.step[ok] >= b.first_step[ok])
    assert np.all(b.first_step[ok] > 0)


@pytest.mark.parametrize("rule", [StoppingRule.hit(BoundarySpec.constant(1.0)),
                                  StoppingRule.hit(BoundarySpec.square_root(1.0)),
                                  StoppingRule.hit(BoundarySpec.constant(-0.5, "lower"))],
                         ids=lambda r: r.describe())
def test_bridge_never_delays(rule):
    kw = dict(n_paths=20_000, dt=0.05, t_max=10.0, seed=8)
    plain = sample_stops(rule, 0.3, bridge_correction=False, **kw)
    bridged = sample_stops(rule, 0.3, bridge_correction=True, **kw)
    big = np.iinfo(np.int64).max
    assert np.all(np.where(bridged.censored, big, bridged.step) <= np.where(plain.censored, big, plain.step))
    assert np.any(bridged.step != plain.step)


def test_bridge_never_delays_composite_first_leg():
    # the second leg restarts at sigma, so only the first leg is monotone
    kw = dict(n_paths=20_000, dt=0.05, t_max=10.0, seed=8)
    rule = StoppingRule.composite(1.0)
    plain = sample_stops(rule, -0.3, bridge_correction=False, **kw)
    bridged = sample_stops(rule, -0.3, bridge_correction=True, **kw)
    big = np.iinfo(np.int64).max
    f_b = np.where(bridged.first_step < 0, big, bridged.first_step)
    f_p = np.where(plain.first_step < 0, big, plain.first_step)
    assert np.all(f_b <= f_p)


def test_grid_bias_shrinks_with_dt():
    q = 1.0 - hitting_tail(1.0, 1.0)
    rule = StoppingRule.hit(BoundarySpec.constant(1.0))
    errs = []
    for dt in (0.01, 0.0025):
        b = sample_stops(rule, 0.0, 100_000, dt, 1.0, seed=5, bridge_correction=False)
        errs.append(abs(np.mean(~b.censored) - q))
    assert errs[1] < errs[0]


def test_hazard_rule_realizes_survival_law():
    rule = StoppingRule.hazard(b=2.0)
    b = sample_stops(rule, 0.0, 200_000, 0.1, 8.0, seed=6)
    for t in (0.5, 2.0, 8.0):
        s = np.mean(b.times > t)
        h = 2.0 / (2.0 + t)
        assert abs(s - h) < 3 * math.sqrt(h * (1 - h) / b.n)


def test_lil_boundary_inactive_before_start():
    bd = BoundarySpec.lil(10.0)
    v = bd.values(np.array([0.0, 5.0, 10.0, 20.0]))
    assert np.isinf(v[:2]).all()
    assert v[2] == pytest.approx(math.sqrt(10 * math.log(math.log(10))))
    with pytest.raises(ValidationError):
        BoundarySpec.lil(2.0)
    with pytest.raises(ValidationError):
        BoundarySpec.square_root(0.0)


def test_rule_serialization_roundtrip():
    for r in RULES:
        assert StoppingRule.from_dict(r.to_dict()) == r
    with pytest.raises(ValidationError):
        StoppingRule("hit")
    with pytest.raises(ValidationError):
        StoppingRule("deterministic", t_star=-1.0)


def test_restart_and_dump(tmp_path):
    p = simulate_path(SeedId(2, 2), 0.1, 5.0)
    r = p.restart(10)
    assert r.values[0] == 0.0 and r.offset == 10
    np.testing.assert_allclose(r.values, p.values[10:] - p.values[10])
    f = tmp_path / "path.bin"
    write_path_dump(p, f)
    dt, T, values = read_path_dump(f)
    assert (dt, T) == (0.1, p.times[-1])
    assert values.tobytes() == p.values.tobytes()
