"""Best responses, divergence diagnostics and equilibrium verification.

The best response to an opponent with discount function ``c`` is the
optimal stopping problem ``V(x) = sup_tau E[c(tau) f(x + W_tau)]``. It is
solved by backward induction on a space-time lattice:

    V(T, x) = max(c(T) f(x), 0)
    V(t, x) = max(c(t) f(x), E V(t + dt, x + sqrt(dt) Z))

with the expectation taken by a 7-point Gauss-Hermite rule and linear
interpolation on the x-grid. Interpolation weights are non-negative, so the
discrete operator is monotone. For a fixed ``(dt, dx)`` and a grid anchored at
the same point, the value therefore never decreases when the horizon grows,
and a decrease is reported as a numerical inconsistency.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .core import GameConfig, RewardSpec, eval_reward, grid_steps
from .defaults import THRESHOLDS
from .errors import ConfigurationError, DomainError, NumericalInconsistencyError, ValidationError
from .montecarlo import (
    STREAM_PLAYER,
    EstimateWithCI,
    GrowthTrace,
    SurvivalCurve,
    compensated_mean,
    estimate_survival,
    format_double,
    payoff_direct,
    payoff_reduced,
    truncated_payoff_trace,
)
from .pathsim import BoundarySpec, StoppingRule, sample_stops

GH_NODES = 7
TIE_RTOL = 1e-12
MONOTONE_RTOL = 1e-12
MAX_STORED = 4_000_000
MAX_LATTICE_STEPS = 200_000

VERDICTS = ("equilibrium-consistent", "profitable-deviation-found", "infinite-payoff-regime")

__all__ = [
    "LatticeParams",
    "Lattice",
    "best_response",
    "DivergenceResult",
    "classify_divergence",
    "LILCertificate",
    "lil_certificate",
    "negative_stop_audit",
    "Deviation",
    "deviation_search",
    "PlayerReport",
    "EquilibriumReport",
    "verify_equilibrium",
]


@dataclass(frozen=True)
class LatticeParams:
    """Lattice resolution and extent.

    The x-grid is ``x_center + j dx``. By default it spans ``width_sigmas``
    standard deviations of ``W_{t_max}`` plus the stencil reach on each side;
    explicit ``x_min``/``x_max`` must contain that span.
    """

    t_max: float
    dt: float = 1e-3
    dx: float = 0.01
    x_center: float = 0.0
    x_min: float | None = None
    x_max: float | None = None
    width_sigmas: float = THRESHOLDS.width_sigmas
    store_every: int | None = None

    def __post_init__(self):
        if not (self.dt > 0 and self.dx > 0):
            raise ValidationError("lattice dt and dx must be > 0")
        if not self.t_max >= self.dt:
            raise ValidationError("lattice t_max must be >= dt")

    @property
    def n_steps(self) -> int:
        return grid_steps(self.t_max, self.dt)


def _stencil(dt: float, dx: float):
    """Offsets and weights of the one-step expectation on the x-grid."""
    z, w = hermegauss(GH_NODES)
    w = w / w.sum()
    s = math.sqrt(dt) * z / dx
    fl = np.floor(s).astype(int)
    th = s - fl
    lo = int(fl.min())
    hi = int(fl.max()) + 1
    kern = np.zeros(hi - lo + 1)
    for wi, fi, ti in zip(w, fl, th):
        kern[fi - lo] += wi * (1.0 - ti)
        kern[fi + 1 - lo] += wi * ti
    return lo, hi, kern


@dataclass
class Lattice:
    """Backward-induction solution.

    ``value``/``stop_flag`` hold every ``store_every``-th time slice
    (``t``); ``boundary`` holds the smallest stopping ``x`` at every lattice
    time (``boundary_t``), ``+inf`` where nothing stops. ``dominance_min`` is
    ``min_x (V - c f)`` and ``upclosed_violations`` counts continue-nodes above
    a stop-node, both over every node of every slice.
    """

    t: np.ndarray
    x: np.ndarray
    value: np.ndarray
    stop_flag: np.ndarray
    boundary_t: np.ndarray
    boundary: np.ndarray
    c_values: np.ndarray
    dt: float
    dx: float
    store_every: int
    dominance_min: float
    upclosed_violations: int
    stencil_reach: tuple[int, int]
    reward: RewardSpec = field(repr=False)

    @property
    def t_max(self) -> float:
        return float(self.boundary_t[-1])

    def _x_index(self, x: float) -> float:
        return (x - self.x[0]) / self.dx

    def value_at(self, t: float, x: float) -> float:
        """``V(t, x)`` on a stored slice, linearly interpolated in ``x``."""
        i = int(np.argmin(np.abs(self.t - t)))
        if abs(self.t[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"time {t} is not a stored lattice slice")
        return float(np.interp(x, self.x, self.value[i]))

    def stops_at(self, t: float, x: float) -> bool:
        i = int(np.argmin(np.abs(self.t - t)))
        j = int(round(self._x_index(x)))
        return bool(self.stop_flag[i, j])

    def boundary_csv(self, file=None) -> str:
        lines = ["t,b"]
        for t, b in zip(self.boundary_t, self.boundary):
            lines.append(f"{format_double(t)},{format_double(b)}")
        text = "\n".join(lines) + "\n"
        if file is not None:
            with open(file, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        return text

    def dump_values(self, file) -> None:
        """Little-endian doubles: header ``(dt_stored, dx, n_t, n_x, x_min)`` then ``V`` row-major."""
        header = struct.pack("<5d", self.dt * self.store_every, self.dx, float(self.value.shape[0]),
                             float(self.value.shape[1]), float(self.x[0]))
        with open(file, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(self.value, dtype="<f8").tobytes())

    @staticmethod
    def read_values(file):
        with open(file, "rb") as fh:
            data = fh.read()
        dts, dx, nt, nx, x0 = struct.unpack_from("<5d", data)
        v = np.frombuffer(data, dtype="<f8", offset=40, count=int(nt) * int(nx)).reshape(int(nt), int(nx))
        return {"dt": dts, "dx": dx, "x_min": x0, "value": v.copy()}


def _x_grid(params: LatticeParams, reach: int) -> np.ndarray:
    half = params.width_sigmas * math.sqrt(params.t_max)
    need = int(math.ceil(half / params.dx)) + reach
    lo_j, hi_j = -need, need
    if params.x_min is not None:
        j = int(math.floor((params.x_min - params.x_center) / params.dx + 1e-9))
        if j > lo_j:
            raise ConfigurationError(
                f"x_min={params.x_min} violates the width rule: need x_min <= "
                f"{params.x_center - half:.6g} minus the stencil margin"
            )
        lo_j = j
    if params.x_max is not None:
        j = int(math.ceil((params.x_max - params.x_center) / params.dx - 1e-9))
        if j < hi_j:
            raise ConfigurationError(
                f"x_max={params.x_max} violates the width rule: need x_max >= "
                f"{params.x_center + half:.6g} plus the stencil margin"
            )
        hi_j = j
    return params.x_center + params.dx * np.arange(lo_j, hi_j + 1)


def best_response(c: SurvivalCurve, f: RewardSpec, params: LatticeParams) -> Lattice:
    """Optimal stopping against discount ``c`` by backward induction.

    Ties between stopping and continuing are marked stop. Nodes within the
    stencil reach of the x-grid edges are clamped to ``max(c f, 0)``.
    """
    n = params.n_steps
    dt, dx = params.dt, params.dx
    t_max = n * dt
    if not c.covers(t_max):
        raise DomainError(f"discount curve covers [0, {c.horizon:g}] but the lattice needs [0, {t_max:g}]")
    lo, hi, kern = _stencil(dt, dx)
    reach = max(-lo, hi)
    x = _x_grid(params, reach)
    nx = x.size
    # interior nodes whose stencil stays on the grid
    j0, j1 = -lo, nx - 1 - hi
    if j1 < j0:
        raise ConfigurationError("x-grid is narrower than the transition stencil")
    fx = np.asarray(eval_reward(f, x), dtype=float)
    times = dt * np.arange(n + 1)
    cv = np.asarray(c.c(times), dtype=float)

    store_every = params.store_every
    if store_every is None:
        store_every = max(1, int(math.ceil((n + 1) * nx / MAX_STORED)))
    stored_idx = list(range(0, n + 1, store_every))
    if stored_idx[-1] != n:
        stored_idx.append(n)
    slot = {k: i for i, k in enumerate(stored_idx)}
    ns = len(stored_idx)
    values = np.empty((ns, nx))
    flags = np.empty((ns, nx), dtype=bool)
    boundary = np.empty(n + 1)
    dom_min = math.inf
    violations = 0

    def record(k, V, imm, stop):
        nonlocal dom_min, violations
        if k in slot:
            values[slot[k]] = V
            flags[slot[k]] = stop
        hit = np.nonzero(stop)[0]
        boundary[k] = x[hit[0]] if hit.size else math.inf
        dom_min = min(dom_min, float(np.min(V - imm)))
        violations += int(np.count_nonzero(np.logical_or.accumulate(stop) & ~stop))

    imm = cv[n] * fx
    V = np.maximum(imm, 0.0)
    record(n, V, imm, imm >= V - TIE_RTOL * np.maximum(1.0, np.abs(V)))
    for k in range(n - 1, -1, -1):
        imm = cv[k] * fx
        cont = np.empty(nx)
        cont[j0:j1 + 1] = np.correlate(V, kern, mode="valid")[j0 + lo:j1 + lo + 1]
        edge = np.maximum(imm, 0.0)
        cont[:j0] = edge[:j0]
        cont[j1 + 1:] = edge[j1 + 1:]
        stop = imm >= cont - TIE_RTOL * np.maximum(1.0, np.abs(cont))
        V = np.where(stop, np.maximum(imm, cont), cont)
        V[:j0] = edge[:j0]
        V[j1 + 1:] = edge[j1 + 1:]
        stop[:j0] = imm[:j0] >= V[:j0]
        stop[j1 + 1:] = imm[j1 + 1:] >= V[j1 + 1:]
        record(k, V, imm, stop)

    return Lattice(t=times[stored_idx], x=x, value=values, stop_flag=flags, boundary_t=times,
                   boundary=boundary, c_values=cv, dt=dt, dx=dx, store_every=store_every,
                   dominance_min=dom_min, upclosed_violations=violations, stencil_reach=(lo, hi),
                   reward=f)


# ---------------------------------------------------------------------------
# divergence

def lil_proxy(c: SurvivalCurve, t_max: float) -> float:
    """``min`` of ``c(t) sqrt(t log log t)`` over ``[t_max / 10, t_max]`` (``t > e``)."""
    lo = max(t_max / 10.0, math.e * 1.0001)
    if lo >= t_max:
        return math.nan
    t = np.geomspace(lo, t_max, 200)
    return float(np.min(np.asarray(c.c(t)) * np.sqrt(t * np.log(np.log(t)))))


@dataclass(frozen=True)
class DivergenceResult:
    kind: str
    horizons: tuple[float, ...]
    values: tuple[float, ...]
    ratios: tuple[float, ...]
    value: float
    lil_proxy: tuple[float, ...]
    factor: float

    @property
    def infinite(self) -> bool:
        return self.kind == "infinite"

    def to_dict(self):
        return {"kind": self.kind, "horizons": list(self.horizons), "values": list(self.values),
                "ratios": list(self.ratios), "value": self.value, "lil_proxy": list(self.lil_proxy),
                "factor": self.factor}


def classify_divergence(c: SurvivalCurve, f: RewardSpec, horizons, *, x: float = 0.0,
                        dt: float | None = None, dx: float | None = None,
                        factor: float = THRESHOLDS.divergence_growth_factor,
                        doublings: int = THRESHOLDS.divergence_doublings) -> DivergenceResult:
    """Finite or infinite best-response value, judged from doubling horizons.

    ``infinite`` means ``V(0, x)`` grew by at least ``factor`` over each of
    the last ``doublings`` doublings. The same ``(dt, dx)`` and grid anchor are
    used at every horizon.
    """
    horizons = tuple(float(h) for h in horizons)
    if len(horizons) < 4:
        raise ValidationError("classify_divergence needs at least 4 horizons")
    if any(abs(b / a - 2.0) > 1e-9 for a, b in zip(horizons, horizons[1:])):
        raise ValidationError("horizons must double")
    if dt is None:
        dt = max(horizons[-1] / 20000.0, 1e-3)
    if dx is None:
        dx = math.sqrt(dt)
    vals = []
    for h in horizons:
        lat = best_response(c, f, LatticeParams(t_max=h, dt=dt, dx=dx, x_center=x, store_every=grid_steps(h, dt)))
        vals.append(lat.value_at(0.0, x))
    for a, b in zip(vals, vals[1:]):
        if b < a - MONOTONE_RTOL * max(1.0, abs(a)):
            raise NumericalInconsistencyError(f"best-response value decreased with the horizon: {a!r} -> {b!r}")
    ratios = tuple(b / a if a > 0 else (math.inf if b > 0 else 1.0) for a, b in zip(vals, vals[1:]))
    tail = ratios[-doublings:]
    kind = "infinite" if all(r >= factor for r in tail) else "finite"
    return DivergenceResult(kind, horizons, tuple(vals), ratios, float(vals[-1]),
                            tuple(lil_proxy(c, h) for h in horizons), float(factor))


@dataclass(frozen=True)
class LILCertificate:
    """Truncated payoffs of the LIL rule started at ``T`` for growing ``T``."""

    T: tuple[float, ...]
    estimates: tuple[EstimateWithCI, ...]
    sim_horizons: tuple[float, ...]

    @property
    def means(self):
        return np.array([e.mean for e in self.estimates])

    @property
    def increasing(self) -> bool:
        return bool(np.all(np.diff(self.means) > 0))

    def exceeds(self, M: float, k: float = THRESHOLDS.se_multiplier) -> bool:
        """Some horizon's lower confidence bound exceeds ``M``."""
        return any(e.mean - k * e.se > M for e in self.estimates)


def lil_certificate(c: SurvivalCurve, f: RewardSpec, Ts, n_paths: int, *, x: float = 0.0,
                    dt: float = 0.05, horizon_factor: float = 4.0, seed: int = 0,
                    stream: int = 1) -> LILCertificate:
    """Payoff of ``rho_T = inf{t >= T : x + W_t >= sqrt(t log log t)}`` against ``c``.

    Each rule is simulated up to ``horizon_factor * T``; later stops count as
    zero, so every estimate is a lower bound for the value.
    """
    ests, sims = [], []
    for T in Ts:
        rule = StoppingRule.hit(BoundarySpec.lil(T))
        h = horizon_factor * T
        b = sample_stops(rule, x, n_paths, dt, h, seed=seed, stream=stream)
        ests.append(payoff_reduced(rule, x, c, f, n_paths, batch=b))
        sims.append(h)
    return LILCertificate(tuple(float(t) for t in Ts), tuple(ests), tuple(sims))


# ---------------------------------------------------------------------------
# audits and deviations

def negative_stop_audit(rule: StoppingRule, opponent: SurvivalCurve, x: float, n_paths: int, *,
                        dt: float = 1e-3, t_max: float = 10.0, seed: int = 0, stream: int = 1,
                        bridge_correction: bool = True,
                        reward: RewardSpec | None = None) -> EstimateWithCI:
    """Probability of stopping at a negative reward while ``c(tau) > 0``.

    Without ``reward`` the negative region is ``x + W_tau < 0``.
    """
    b = sample_stops(rule, x, n_paths, dt, t_max, seed=seed, stream=stream,
                     bridge_correction=bridge_correction)
    ok = ~b.censored
    pos = b.position[ok]
    neg = (pos < 0) if reward is None else (np.asarray(eval_reward(reward, pos)) < 0)
    live = np.asarray(opponent.c(b.step[ok] * b.dt)) > 0
    ind = np.zeros(b.n)
    ind[ok] = (neg & live).astype(float)
    mean, se = compensated_mean(ind)
    return EstimateWithCI(mean, se, b.n, horizon=b.horizon)


def candidate_rules(x: float, t_max: float) -> list[StoppingRule]:
    rules = [StoppingRule.immediate(), StoppingRule.never()]
    rules += [StoppingRule.hit(BoundarySpec.constant(x + d)) for d in (0.25, 0.5, 1.0, 2.0)]
    rules += [StoppingRule.deterministic(t) for t in (0.5, 1.0, 2.0) if t <= t_max]
    rules += [StoppingRule.composite(a) for a in (1.0, 2.0)]
    if t_max > 3.0:
        rules.append(StoppingRule.hit(BoundarySpec.lil(3.0)))
    return rules


@dataclass(frozen=True)
class Deviation:
    rule: StoppingRule
    estimate: EstimateWithCI

    def to_dict(self):
        return {"rule": self.rule.to_dict(), "description": self.rule.describe(),
                "estimate": self.estimate.to_dict()}


def deviation_search(opponent: SurvivalCurve, f: RewardSpec, x: float, n_paths: int, *,
                     dt: float = 1e-3, t_max: float = 10.0, seed: int = 0, stream: int = 3,
                     candidates=None, bridge_correction: bool = True) -> list[Deviation]:
    """Reduced payoffs of candidate strategies, best first."""
    if candidates is None:
        candidates = candidate_rules(x, t_max)
    # stops after the opponent surely stopped pay nothing
    horizon = t_max if opponent.p_infinite > 0 else min(t_max, opponent.ess_sup + dt)
    out = []
    for rule in candidates:
        est = payoff_reduced(rule, x, opponent, f, n_paths, dt=dt, t_max=horizon, seed=seed, stream=stream,
                             bridge_correction=bridge_correction)
        out.append(Deviation(rule, est))
    out.sort(key=lambda d: -d.estimate.mean)
    return out


# ---------------------------------------------------------------------------
# verification

@dataclass(frozen=True)
class PlayerReport:
    J: EstimateWithCI
    V: EstimateWithCI
    gap_se: float
    best_deviation: Deviation | None
    deviation_gap_se: float
    negative_stop: EstimateWithCI
    divergence: DivergenceResult | None = None
    payoff_trace: GrowthTrace | None = None

    def to_dict(self):
        d = {
            "J": self.J.to_dict(),
            "V": self.V.to_dict(),
            "gap_se": self.gap_se,
            "best_deviation": None if self.best_deviation is None else self.best_deviation.to_dict(),
            "deviation_gap_se": self.deviation_gap_se,
            "negative_stop_probability": self.negative_stop.to_dict(),
        }
        if self.divergence is not None:
            d["divergence"] = self.divergence.to_dict()
        if self.payoff_trace is not None:
            d["payoff_trace"] = [list(r) for r in self.payoff_trace.to_rows()]
        return d


@dataclass(frozen=True)
class EquilibriumReport:
    players: tuple[PlayerReport, PlayerReport]
    verdict: str
    significance: float
    rules: tuple[StoppingRule, StoppingRule]
    config: GameConfig

    @property
    def payoffs(self) -> tuple[float, float]:
        return self.players[0].J.mean, self.players[1].J.mean

    @property
    def max_gap(self) -> float:
        return max(max(p.gap_se, p.deviation_gap_se) for p in self.players)

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "significance": self.significance,
            "rules": [r.to_dict() for r in self.rules],
            "config": self.config.to_dict(),
            "players": [p.to_dict() for p in self.players],
        }

    def to_json(self, file=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)
        if file is not None:
            with open(file, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text + "\n")
        return text


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def _lattice_params(config: GameConfig, x: float) -> LatticeParams:
    dt = max(config.dt, config.t_max / MAX_LATTICE_STEPS)
    return LatticeParams(t_max=config.t_max, dt=dt, dx=math.sqrt(dt), x_center=x)


def verify_equilibrium(rule1: StoppingRule, rule2: StoppingRule, config: GameConfig,
                       significance: float = THRESHOLDS.se_multiplier, *, horizons=None,
                       deviations: bool = True, bridge_correction: bool = True) -> EquilibriumReport:
    """Check both Nash inequalities for ``(rule1, rule2)``.

    ``J_i`` comes from racing the two rules. ``V_i`` is the lattice best
    response against the opponent's survival curve; its uncertainty is the
    lattice tolerance ``lattice_value_rtol * max(|J|, |V|, 1e-3)``. Candidate
    deviations are also priced by Monte Carlo against the same curve. A gap
    counts only when it exceeds ``significance`` combined standard errors.

    With ``horizons`` (doubling list) the divergence of both best responses
    and both truncated payoffs is checked as well; when all four grow, the
    verdict is ``infinite-payoff-regime``.
    """
    f = config.reward
    x = (config.x1, config.x2)
    rules = (rule1, rule2)
    n, dt, T, seed = config.n_paths, config.dt, config.t_max, config.seed
    J = payoff_direct(rule1, rule2, x[0], x[1], f, n, dt=dt, t_max=T, seed=seed,
                      bridge_correction=bridge_correction)
    reports = []
    for i in (0, 1):
        o = 1 - i
        c_opp = estimate_survival(rules[o], x[o], n, dt=dt, t_max=T, seed=seed, stream=STREAM_PLAYER[o + 1],
                                  bridge_correction=bridge_correction)
        lat = best_response(c_opp, f, _lattice_params(config, x[i]))
        v = lat.value_at(0.0, x[i])
        lat_se = THRESHOLDS.lattice_value_rtol * max(abs(J[i].mean), abs(v), 1e-3)
        V = EstimateWithCI(v, lat_se, 0, horizon=T)
        gap = (v - J[i].mean) / math.hypot(J[i].se, lat_se)
        best, dev_gap = None, -math.inf
        if deviations:
            devs = deviation_search(c_opp, f, x[i], n, dt=dt, t_max=T, seed=seed, stream=3 + i,
                                    bridge_correction=bridge_correction)
            best = devs[0]
            den = math.hypot(J[i].se, best.estimate.se)
            diff = best.estimate.mean - J[i].mean
            dev_gap = diff / den if den > 0 else (0.0 if diff == 0 else math.copysign(math.inf, diff))
        neg = negative_stop_audit(rules[i], c_opp, x[i], n, dt=dt, t_max=T, seed=seed,
                                  stream=STREAM_PLAYER[i + 1], bridge_correction=bridge_correction,
                                  reward=f)
        div = trace = None
        if horizons is not None:
            hz = tuple(horizons)
            c_long = estimate_survival(rules[o], x[o], n, dt=dt, t_max=hz[-1], seed=seed,
                                       stream=STREAM_PLAYER[o + 1], bridge_correction=bridge_correction)
            div = classify_divergence(c_long, f, hz, x=x[i], dt=dt)
            trace = truncated_payoff_trace(rules[i], x[i], rules[o], x[o], f, hz, n, dt=dt, seed=seed,
                                           bridge_correction=bridge_correction,
                                           factor=THRESHOLDS.divergence_growth_factor)
        reports.append(PlayerReport(J[i], V, float(gap), best, float(dev_gap), neg, div, trace))

    infinite = horizons is not None and all(
        p.divergence.infinite and p.payoff_trace.grows_each_doubling(last=THRESHOLDS.divergence_doublings)
        for p in reports
    )
    if infinite:
        verdict = "infinite-payoff-regime"
    elif any(max(p.gap_se, p.deviation_gap_se) > significance for p in reports):
        verdict = "profitable-deviation-found"
    else:
        verdict = "equilibrium-consistent"
    return EquilibriumReport(tuple(reports), verdict, float(significance), rules, config)
