import numpy as np

from dynkinlab.pathsim import BoundarySpec, StoppingRule, sample_stops
from dynkinlab.rng import philox_block, replicate_bridge_uniforms, replicate_normals


def test_philox_matches_numpy_bit_generator():
    # numpy's generator increments its counter before the first block
    for counter, key in (([0, 0, 0, 0], [0, 0]), ([7, 1, 99, 3], [2**64 - 1, 12345])):
        gen = np.random.Philox(key=np.array(key, dtype=np.uint64), counter=np.array(counter, dtype=np.uint64))
        expected = tuple(int(v) for v in gen.random_raw(4))
        bumped = [counter[0] + 1] + counter[1:]
        assert philox_block(bumped, key) == expected


def test_replicate_streams_are_addressable():
    a = replicate_normals(3, 1, 10, 1000)
    b = replicate_normals(3, 1, 10, 1000)
    np.testing.assert_array_equal(a, b)
    # a prefix does not depend on how many numbers were requested
    np.testing.assert_array_equal(replicate_normals(3, 1, 10, 17), a[:17])
    assert not np.array_equal(replicate_normals(3, 1, 11, 1000), a)
    assert not np.array_equal(replicate_normals(3, 2, 10, 1000), a)
    assert not np.array_equal(replicate_normals(4, 1, 10, 1000), a)


def test_normal_moments():
    z = np.concatenate([replicate_normals(0, 0, r, 1000) for r in range(1000)])
    n = z.size
    assert abs(z.mean()) < 3 / np.sqrt(n)
    assert abs(z.var() - 1) < 3 * np.sqrt(2 / n)
    assert abs(np.mean(z**4) - 3) < 3 * np.sqrt(96 / n)


def test_bridge_uniforms_random_access():
    steps = np.array([5, 1, 900, 5])
    u = replicate_bridge_uniforms(1, 2, 3, steps)
    assert u[0] == u[3]
    assert np.all((u >= 0) & (u < 1))
    np.testing.assert_array_equal(replicate_bridge_uniforms(1, 2, 3, [900]), u[2:3])


def test_results_independent_of_worker_count():
    rule = StoppingRule.hit(BoundarySpec.constant(0.5))
    kw = dict(n_paths=20000, dt=1e-2, t_max=5.0, seed=9)
    a = sample_stops(rule, 0.0, workers=1, **kw)
    b = sample_stops(rule, 0.0, workers=3, **kw)
    np.testing.assert_array_equal(a.step, b.step)
    np.testing.assert_array_equal(a.position, b.position)


def test_replicate_results_independent_of_batch_layout():
    rule = StoppingRule.composite(1.0)
    full = sample_stops(rule, -0.5, 100, 0.01, 3.0, seed=2)
    part = sample_stops(rule, -0.5, 30, 0.01, 3.0, seed=2, first_replicate=50)
    np.testing.assert_array_equal(full.step[50:80], part.step)
