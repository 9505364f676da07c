import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import dynkinlab.solver as solver
from dynkinlab.core import GameConfig, RewardSpec
from dynkinlab.errors import ConfigurationError, DomainError, NumericalInconsistencyError
from dynkinlab.montecarlo import SurvivalCurve
from dynkinlab.pathsim import StoppingRule
from dynkinlab.solver import (
    LatticeParams,
    best_response,
    classify_divergence,
    lil_certificate,
    negative_stop_audit,
    verify_equilibrium,
)

ID = RewardSpec.affine()


def exp_curve(r, T, n=4001):
    return SurvivalCurve.from_function(lambda t: np.exp(-r * t), np.linspace(0, T, n))


def plateau(lat, frac=0.5):
    keep = lat.boundary_t <= frac * lat.t_max
    return float(np.median(lat.boundary[keep]))


def test_zero_discount():
    c = SurvivalCurve(np.array([0.0, 2.0]), np.zeros(2), np.zeros(2))
    lat = best_response(c, ID, LatticeParams(t_max=1.0, dt=0.01, dx=0.05))
    assert np.all(lat.value == 0.0)
    assert np.all(lat.stop_flag[:, lat.x >= 0])
    assert lat.upclosed_violations == 0


def test_exponential_boundary():
    lat = best_response(exp_curve(0.5, 8.0), ID, LatticeParams(t_max=8.0, dt=1e-3, dx=0.01))
    assert abs(plateau(lat) - 1.0) < 0.05
    assert lat.upclosed_violations == 0 and lat.dominance_min >= -1e-12


def test_shepp_discount_stops_above_root():
    b = 1.0
    c = SurvivalCurve.from_function(lambda t: b / (b + t), np.linspace(0, 8, 801))
    lat = best_response(c, ID, LatticeParams(t_max=8.0, dt=0.01, dx=0.01, x_center=1.0))
    xs = lat.x[lat.x >= 0.9]
    assert all(lat.stops_at(0.0, x) for x in xs)
    assert lat.value_at(0.0, 1.0) == pytest.approx(1.0, rel=1e-12)


def test_domain_and_width_errors():
    short = exp_curve(1.0, 1.0)
    with pytest.raises(DomainError):
        best_response(short, ID, LatticeParams(t_max=2.0, dt=0.01, dx=0.05))
    with pytest.raises(ConfigurationError):
        best_response(short, ID, LatticeParams(t_max=1.0, dt=0.01, dx=0.05, x_min=-1.0, x_max=1.0))


@pytest.mark.parametrize("lam", [0.5, 2.0, 3.0])
def test_scale_invariance(lam):
    c = exp_curve(0.5, 2.0)
    p = LatticeParams(t_max=2.0, dt=1e-2, dx=0.02)
    a = best_response(c, ID, p)
    b = best_response(c, RewardSpec.affine(lam), p)
    np.testing.assert_array_equal(a.stop_flag, b.stop_flag)
    np.testing.assert_allclose(b.value, lam * a.value, rtol=1e-12, atol=1e-14)


def test_horizon_monotonicity():
    c = SurvivalCurve.from_function(lambda t: 1 / (1 + t), np.linspace(0, 8, 801))
    vals = [best_response(c, ID, LatticeParams(t_max=T, dt=0.01, dx=0.05)).value_at(0.0, 0.0)
            for T in (1.0, 2.0, 4.0, 8.0)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(0.0, 0.3), min_size=5, max_size=5), st.floats(0.1, 5.0), st.floats(-2.0, 2.0))
def test_stop_region_up_closed(drops, k, b):
    t = np.linspace(0, 1.0, 6)
    s = np.concatenate([[1.0], np.cumprod(1 - np.asarray(drops))])
    c = SurvivalCurve(t, s, np.zeros(6))
    lat = best_response(c, RewardSpec.affine(k, b), LatticeParams(t_max=1.0, dt=0.02, dx=0.05))
    assert lat.upclosed_violations == 0
    assert lat.dominance_min >= -1e-12


def test_lattice_exports(tmp_path):
    lat = best_response(exp_curve(1.0, 1.0), ID, LatticeParams(t_max=1.0, dt=0.01, dx=0.05, store_every=10))
    text = lat.boundary_csv(tmp_path / "b.csv")
    assert text.splitlines()[0] == "t,b"
    assert len(text.splitlines()) == lat.boundary_t.size + 1
    lat.dump_values(tmp_path / "v.bin")
    d = lat.read_values(tmp_path / "v.bin")
    np.testing.assert_array_equal(d["value"], lat.value)
    assert d["x_min"] == lat.x[0] and d["dx"] == lat.dx and d["dt"] == pytest.approx(0.1)


def test_divergence_exponential_finite():
    r = classify_divergence(exp_curve(1.0, 64.0, 6401), ID, [8, 16, 32, 64], dt=0.01, dx=0.05)
    assert r.kind == "finite"
    assert abs(r.values[-1] / r.values[-2] - 1) < 0.01


def test_divergence_power_discount_infinite():
    c = SurvivalCurve.from_function(lambda t: np.minimum(1.0, np.maximum(t, 1e-300) ** -0.25),
                                    np.concatenate([[0.0], np.geomspace(1e-3, 4096.0, 4000)]))
    r = classify_divergence(c, ID, [2.0**k for k in range(6, 13)])
    assert r.kind == "infinite"
    assert all(v > 0 for v in r.values)


def test_divergence_no_discount_and_lil_certificate():
    r = classify_divergence(SurvivalCurve.never(), ID, [64, 128, 256, 512])
    assert r.kind == "infinite"
    assert r.ratios[-1] == pytest.approx(math.sqrt(2), rel=0.05)
    cert = lil_certificate(SurvivalCurve.never(), ID, [16.0, 64.0, 256.0], 20_000, dt=0.05)
    assert cert.increasing
    # payoffs roughly double per fourfold start time, so any fixed M is passed eventually
    assert cert.exceeds(5.0) and not cert.exceeds(50.0)
    assert np.all(cert.means[1:] / cert.means[:-1] > 1.5)


def test_divergence_needs_monotone_values(monkeypatch):
    class Fake:
        def __init__(self, h):
            self.h = h

        def value_at(self, t, x):
            return 1.0 / self.h

    monkeypatch.setattr(solver, "best_response", lambda c, f, p: Fake(p.t_max))
    with pytest.raises(NumericalInconsistencyError):
        classify_divergence(SurvivalCurve.never(), ID, [1, 2, 4, 8])


def test_negative_stop_audit():
    never = SurvivalCurve.never()
    assert negative_stop_audit(StoppingRule.immediate(), never, 3.0, 1000).mean == 0.0
    e = negative_stop_audit(StoppingRule.deterministic(1.0), never, 0.0, 50_000, seed=1)
    assert abs(e.mean - 0.5) < 3 * e.se
    e = negative_stop_audit(StoppingRule.composite(1.0), never, -0.5, 5000, dt=0.01, t_max=20.0)
    assert e.mean == 0.0


def test_trivial_equilibrium():
    cfg = GameConfig(1.0, 2.0, t_max=4.0, dt=1e-3, n_paths=20_000)
    rep = verify_equilibrium(StoppingRule.immediate(), StoppingRule.immediate(), cfg)
    assert rep.verdict == "equilibrium-consistent"
    assert rep.payoffs == (0.5, 1.0)


def test_negative_start_deviates():
    cfg = GameConfig(-1.0, 2.0, t_max=4.0, dt=1e-3, n_paths=20_000)
    rep = verify_equilibrium(StoppingRule.immediate(), StoppingRule.immediate(), cfg)
    assert rep.verdict == "profitable-deviation-found"
    assert rep.players[0].J.mean == -0.5
    assert rep.players[0].V.mean >= 0.0
    assert rep.players[0].gap_se > 3


def test_report_json(tmp_path):
    cfg = GameConfig(1.0, 2.0, t_max=1.0, dt=1e-2, n_paths=500)
    rep = verify_equilibrium(StoppingRule.immediate(), StoppingRule.immediate(), cfg, deviations=False)
    import json
    d = json.loads(rep.to_json(tmp_path / "r.json"))
    assert d["verdict"] == rep.verdict and len(d["players"]) == 2
