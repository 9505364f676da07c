"""Survival/discount curves and payoff estimators.

A player's payoff against an opponent who stops at ``tau'`` can be computed
two ways:

* directly, by racing two independent simulated players and paying
  ``f(x + W_tau)`` to whoever stops strictly first and half of it on a tie;
* through the discount function of the opponent,
  ``J = E[c(tau) f(x + W_tau)]`` with ``c(t) = P(tau' > t) + P(tau' = t) / 2``
  and ``c(inf) = 0``.

Both estimators draw player 1 from stream 1 and player 2 from stream 2 with
shared replicate indices, so they see the same paths.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .core import RewardSpec, eval_reward, grid_steps
from .defaults import THRESHOLDS
from .errors import ValidationError
from .pathsim import StopBatch, StoppingRule, deterministic_step, sample_stops

STREAM_PLAYER = {1: 1, 2: 2}

__all__ = [
    "SurvivalCurve",
    "EstimateWithCI",
    "GrowthTrace",
    "ConsistencyReport",
    "estimate_survival",
    "survival_from_batch",
    "payoff_reduced",
    "payoff_direct",
    "reduction_consistency",
    "truncated_payoff_trace",
    "compensated_mean",
]


def compensated_mean(values) -> tuple[float, float]:
    """Order-independent mean and standard error of a sample."""
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    if n == 0:
        raise ValidationError("empty sample")
    mean = math.fsum(v) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


@dataclass(frozen=True)
class SurvivalCurve:
    """Tabulated law of a stopping time.

    ``survival[j] = P(tau > t[j])`` (right-continuous), ``atoms[j]`` is
    ``P(tau = t[j])``. Between nodes the discount function is interpolated
    linearly from ``S(t[j])`` to the left limit at ``t[j+1]``; beyond the
    last node it stays at ``survival[-1]``.
    """

    t: np.ndarray
    survival: np.ndarray
    atoms: np.ndarray
    p_infinite: float = 0.0
    se: np.ndarray | None = None
    horizon_truncated: bool = False
    n: int | None = None
    mass_beyond_horizon: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        s = np.asarray(self.survival, dtype=float)
        a = np.asarray(self.atoms, dtype=float)
        if t.ndim != 1 or t.size == 0 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValidationError("survival curve grid must be strictly increasing and start at 0")
        if s.shape != t.shape or a.shape != t.shape:
            raise ValidationError("survival and atoms must match the grid")
        tol = 1e-12
        if np.any(s < -tol) or np.any(s > 1 + tol) or np.any(a < -tol):
            raise ValidationError("survival values must lie in [0, 1] and atoms must be >= 0")
        if np.any(np.diff(s) > tol):
            raise ValidationError("survival must be non-increasing")
        if np.any(s < self.p_infinite - tol):
            raise ValidationError("survival must stay above the mass at infinity")
        if np.any(s + a > 1 + tol) or np.any(s[1:] + a[1:] > s[:-1] + tol):
            raise ValidationError("atoms exceed the available survival mass")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "survival", s)
        object.__setattr__(self, "atoms", a)
        if self.se is not None:
            object.__setattr__(self, "se", np.asarray(self.se, dtype=float))

    # -- constructors -------------------------------------------------------
    @classmethod
    def point_mass(cls, t_star: float) -> "SurvivalCurve":
        if t_star == 0:
            return cls(np.array([0.0]), np.array([0.0]), np.array([1.0]))
        return cls(np.array([0.0, t_star]), np.array([1.0, 0.0]), np.array([0.0, 1.0]))

    @classmethod
    def never(cls) -> "SurvivalCurve":
        return cls(np.array([0.0]), np.array([1.0]), np.array([0.0]), p_infinite=1.0)

    @classmethod
    def from_function(cls, fn, t_grid, p_infinite: float = 0.0) -> "SurvivalCurve":
        """Continuous survival law ``fn`` tabulated on ``t_grid``."""
        t_grid = np.asarray(t_grid, dtype=float)
        s = np.asarray(fn(t_grid), dtype=float)
        return cls(t_grid, s, np.zeros_like(s), p_infinite=p_infinite,
                   horizon_truncated=bool(s[-1] > p_infinite))

    # -- evaluation ---------------------------------------------------------
    @property
    def horizon(self) -> float:
        return float(self.t[-1])

    @property
    def ess_sup(self) -> float:
        """Smallest time after which the stopping time has no mass."""
        if self.p_infinite > 0:
            return math.inf
        zero = np.nonzero(self.survival <= 0.0)[0]
        if zero.size == 0:
            return math.inf
        return float(self.t[zero[0]])

    def covers(self, t_max: float) -> bool:
        """True if ``c`` is known on ``[0, t_max]``.

        Past the last node the curve is known only when no mass is left
        between the horizon and infinity.
        """
        if self.horizon >= t_max * (1 - 1e-12):
            return True
        return bool(self.survival[-1] <= self.p_infinite + 1e-12)

    def c(self, t):
        """Discount value ``S(t) + atom(t) / 2``; ``c(inf) = 0``."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        T, S, A = self.t, self.survival, self.atoms
        out = np.empty(tt.shape)
        fin = np.isfinite(tt)
        out[~fin] = 0.0
        tf = tt[fin]
        j = np.clip(np.searchsorted(T, tf, side="right") - 1, 0, T.size - 1)
        jn = np.minimum(j + 1, T.size - 1)
        scale = np.maximum(1.0, np.abs(tf))
        at_left = np.abs(tf - T[j]) <= 1e-9 * scale
        at_right = (jn > j) & (np.abs(T[jn] - tf) <= 1e-9 * scale)
        beyond = tf > T[-1]
        res = np.empty(tf.shape)
        inner = ~(at_left | at_right | beyond)
        if np.any(inner):
            ji, jni = j[inner], jn[inner]
            w = (tf[inner] - T[ji]) / (T[jni] - T[ji])
            res[inner] = S[ji] * (1 - w) + (S[jni] + A[jni]) * w
        res[beyond] = S[-1]
        res[at_right & ~at_left] = (S + 0.5 * A)[jn[at_right & ~at_left]]
        res[at_left] = (S + 0.5 * A)[j[at_left]]
        out[fin] = res
        return float(out[0]) if scalar else out

    def c_values(self) -> np.ndarray:
        return self.survival + 0.5 * self.atoms

    # -- serialization ------------------------------------------------------
    def to_csv(self, file=None) -> str:
        """CSV with columns ``t, survival, atom_mass, c_value`` (17 significant digits)."""
        buf = io.StringIO()
        buf.write("t,survival,atom_mass,c_value\n")
        for row in zip(self.t, self.survival, self.atoms, self.c_values()):
            buf.write(",".join(format_double(v) for v in row) + "\n")
        text = buf.getvalue()
        if file is not None:
            with open(file, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, file) -> "SurvivalCurve":
        data = np.loadtxt(file, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != 4:
            raise ValidationError("survival CSV must have columns t, survival, atom_mass, c_value")
        t, s, a, _ = data.T
        return cls(t, s, a, horizon_truncated=bool(s[-1] > 0))


def format_double(v: float) -> str:
    return "%.17g" % v


@dataclass(frozen=True)
class EstimateWithCI:
    """Monte Carlo mean with its standard error.

    When ``divergence_flag`` is set the mean is only a lower estimate at the
    truncation ``horizon``.
    """

    mean: float
    se: float
    n: int
    divergence_flag: bool | None = None
    horizon: float | None = None
    warning: str | None = None

    def ci(self, k: float = THRESHOLDS.se_multiplier) -> tuple[float, float]:
        return self.mean - k * self.se, self.mean + k * self.se

    def to_dict(self):
        return {"mean": self.mean, "se": self.se, "n": self.n, "divergence_flag": self.divergence_flag,
                "horizon": self.horizon, "warning": self.warning}


def survival_from_batch(batch: StopBatch, t_grid=None) -> SurvivalCurve:
    """Empirical survival with binomial standard errors.

    The default grid is the simulation grid. Censored replicates count as
    surviving to the horizon; their share is reported as
    ``mass_beyond_horizon``.
    """
    if t_grid is None:
        t_grid = batch.dt * np.arange(batch.n_steps + 1)
    t_grid = np.asarray(t_grid, dtype=float)
    times = np.sort(batch.times)
    n = batch.n
    s = (n - np.searchsorted(times, t_grid, side="right")) / n
    se = np.sqrt(s * (1 - s) / n)
    censored = float(np.count_nonzero(batch.censored)) / n
    return SurvivalCurve(t_grid, s, np.zeros_like(s), p_infinite=0.0, se=se,
                         horizon_truncated=censored > 0, n=n, mass_beyond_horizon=censored)


def exact_survival(rule: StoppingRule, dt: float, t_grid) -> SurvivalCurve | None:
    """Closed-form curve for rules whose law does not depend on the path, else ``None``."""
    if rule.kind == "immediate":
        return SurvivalCurve.point_mass(0.0)
    if rule.kind == "never":
        return SurvivalCurve.never()
    if rule.kind == "deterministic":
        return SurvivalCurve.point_mass(deterministic_step(rule.t_star, dt) * dt)
    if rule.kind == "hazard":
        return SurvivalCurve.from_function(rule.survival_law(), t_grid)
    return None


def estimate_survival(rule: StoppingRule, x: float, n_paths: int, t_grid=None, *, dt: float = 1e-3,
                      t_max: float | None = None, seed: int = 0, stream: int = 2,
                      bridge_correction: bool = True) -> SurvivalCurve:
    """Survival curve of ``rule`` started at ``x``; exact where the law is known."""
    if t_grid is None:
        if t_max is None:
            raise ValidationError("estimate_survival needs t_grid or t_max")
        t_grid = dt * np.arange(grid_steps(t_max, dt) + 1)
    t_grid = np.asarray(t_grid, dtype=float)
    exact = exact_survival(rule, dt, t_grid)
    if exact is not None:
        return exact
    horizon = float(t_grid[-1]) if t_max is None else t_max
    batch = sample_stops(rule, x, n_paths, dt, horizon, seed=seed, stream=stream,
                         bridge_correction=bridge_correction)
    return survival_from_batch(batch, t_grid)


def _rewards(batch: StopBatch, f: RewardSpec) -> np.ndarray:
    out = np.zeros(batch.n)
    ok = ~batch.censored
    out[ok] = eval_reward(f, batch.position[ok])
    return out


def reduced_values(batch: StopBatch, opponent: SurvivalCurve, f: RewardSpec) -> np.ndarray:
    """Per-replicate ``c(tau) f(x + W_tau)``, zero when censored."""
    out = np.zeros(batch.n)
    ok = ~batch.censored
    out[ok] = opponent.c(batch.step[ok] * batch.dt) * eval_reward(f, batch.position[ok])
    return out


def payoff_reduced(rule: StoppingRule, x: float, opponent: SurvivalCurve, f: RewardSpec,
                   n_paths: int, *, dt: float = 1e-3, t_max: float = 10.0, seed: int = 0,
                   stream: int = 1, bridge_correction: bool = True,
                   batch: StopBatch | None = None) -> EstimateWithCI:
    """``E[c(tau) f(x + W_tau)]`` with censored replicates paying zero."""
    if batch is None:
        batch = sample_stops(rule, x, n_paths, dt, t_max, seed=seed, stream=stream,
                             bridge_correction=bridge_correction)
    vals = reduced_values(batch, opponent, f)
    mean, se = compensated_mean(vals)
    warning = None
    if opponent.horizon_truncated:
        late = ~batch.censored & (batch.step * batch.dt > opponent.horizon * (1 + 1e-12))
        if np.any(late):
            warning = (f"{int(late.sum())} stops fall beyond the opponent curve horizon "
                       f"{opponent.horizon:g}; payoff may be underestimated")
    return EstimateWithCI(mean, se, batch.n, horizon=batch.horizon, warning=warning)


def direct_values(b1: StopBatch, b2: StopBatch, f: RewardSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-replicate payoffs of the two-player race with half payment on ties."""
    big = np.iinfo(np.int64).max
    s1 = np.where(b1.censored, big, b1.step)
    s2 = np.where(b2.censored, big, b2.step)
    r1 = _rewards(b1, f)
    r2 = _rewards(b2, f)
    tie = (s1 == s2) & (s1 != big)
    w1 = np.where(s1 < s2, 1.0, np.where(tie, 0.5, 0.0))
    w2 = np.where(s2 < s1, 1.0, np.where(tie, 0.5, 0.0))
    return w1 * r1, w2 * r2


def _batches(rule1, rule2, x1, x2, n, dt, t_max, seed, bridge_correction):
    b1 = sample_stops(rule1, x1, n, dt, t_max, seed=seed, stream=STREAM_PLAYER[1],
                      bridge_correction=bridge_correction)
    b2 = sample_stops(rule2, x2, n, dt, t_max, seed=seed, stream=STREAM_PLAYER[2],
                      bridge_correction=bridge_correction)
    return b1, b2


def payoff_direct(rule1: StoppingRule, rule2: StoppingRule, x1: float, x2: float, f: RewardSpec,
                  n_pairs: int, *, dt: float = 1e-3, t_max: float = 10.0, seed: int = 0,
                  bridge_correction: bool = True) -> tuple[EstimateWithCI, EstimateWithCI]:
    """Both players' payoffs estimated from independent path pairs."""
    b1, b2 = _batches(rule1, rule2, x1, x2, n_pairs, dt, t_max, seed, bridge_correction)
    v1, v2 = direct_values(b1, b2, f)
    e1 = EstimateWithCI(*compensated_mean(v1), n_pairs, horizon=b1.horizon)
    e2 = EstimateWithCI(*compensated_mean(v2), n_pairs, horizon=b2.horizon)
    return e1, e2


@dataclass(frozen=True)
class ConsistencyReport:
    """Direct against reduced payoffs; ``discrepancy_se`` is in paired standard errors."""

    direct: tuple[EstimateWithCI, EstimateWithCI]
    reduced: tuple[EstimateWithCI, EstimateWithCI]
    discrepancy: tuple[float, float]
    paired_se: tuple[float, float]
    discrepancy_se: tuple[float, float]

    @property
    def exact(self) -> bool:
        return all(d == 0.0 for d in self.discrepancy)

    def passes(self, k: float = THRESHOLDS.se_multiplier) -> bool:
        return all(abs(z) < k for z in self.discrepancy_se)

    def to_dict(self):
        return {
            "direct": [e.to_dict() for e in self.direct],
            "reduced": [e.to_dict() for e in self.reduced],
            "discrepancy": list(self.discrepancy),
            "paired_se": list(self.paired_se),
            "discrepancy_se": list(self.discrepancy_se),
        }


def _z(diff: float, se: float) -> float:
    if se > 0:
        return diff / se
    return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)


def reduction_consistency(rule1: StoppingRule, rule2: StoppingRule, x1: float, x2: float,
                          f: RewardSpec, n: int, *, dt: float = 1e-3, t_max: float = 10.0,
                          seed: int = 0, bridge_correction: bool = True) -> ConsistencyReport:
    """Compare the race estimator with the discount reduction on the same paths.

    Each player's discount curve is the opponent's survival curve: exact
    when the opponent's law is known, empirical on the simulation grid
    from the opponent's replicates otherwise.
    """
    b1, b2 = _batches(rule1, rule2, x1, x2, n, dt, t_max, seed, bridge_correction)
    grid = dt * np.arange(b1.n_steps + 1)
    c2 = exact_survival(rule2, dt, grid) or survival_from_batch(b2)
    c1 = exact_survival(rule1, dt, grid) or survival_from_batch(b1)
    d1, d2 = direct_values(b1, b2, f)
    r1 = reduced_values(b1, c2, f)
    r2 = reduced_values(b2, c1, f)
    direct, reduced, disc, pse, z = [], [], [], [], []
    for d, r, b in ((d1, r1, b1), (d2, r2, b2)):
        ed = EstimateWithCI(*compensated_mean(d), n, horizon=b.horizon)
        er = EstimateWithCI(*compensated_mean(r), n, horizon=b.horizon)
        diff = ed.mean - er.mean
        _, se = compensated_mean(d - r)
        direct.append(ed)
        reduced.append(er)
        disc.append(diff)
        pse.append(se)
        z.append(_z(diff, se))
    return ConsistencyReport(tuple(direct), tuple(reduced), tuple(disc), tuple(pse), tuple(z))


@dataclass(frozen=True)
class GrowthTrace:
    """Truncated estimates across doubling horizons."""

    horizons: tuple[float, ...]
    estimates: tuple[EstimateWithCI, ...]
    factor: float = THRESHOLDS.e1_growth_factor

    @property
    def means(self) -> np.ndarray:
        return np.array([e.mean for e in self.estimates])

    @property
    def ratios(self) -> np.ndarray:
        m = self.means
        with np.errstate(divide="ignore", invalid="ignore"):
            return m[1:] / m[:-1]

    def grows_each_doubling(self, factor: float | None = None, last: int | None = None) -> bool:
        f = self.factor if factor is None else factor
        r = self.ratios if last is None else self.ratios[-last:]
        return bool(np.all(r >= f))

    def to_rows(self):
        rows = []
        ratios = np.concatenate([[math.nan], self.ratios])
        for h, e, r in zip(self.horizons, self.estimates, ratios):
            rows.append((h, e.mean, e.se, r))
        return rows


def truncated_payoff_trace(rule: StoppingRule, x: float, opponent_rule: StoppingRule, x_opp: float,
                           f: RewardSpec, horizons, n_paths: int, *, dt: float = 0.5, seed: int = 0,
                           bridge_correction: bool = True,
                           factor: float = THRESHOLDS.e1_growth_factor) -> GrowthTrace:
    """Reduced payoff ``E[c(tau) f(x + W_tau); tau <= H]`` for each horizon ``H``.

    Both players are simulated once to the largest horizon; the estimate at
    ``H`` equals a fresh run censored at ``H`` with the same seed, because
    ``c`` on ``[0, H]`` only depends on the opponent up to ``H``.
    """
    horizons = tuple(float(h) for h in horizons)
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ValidationError("horizons must be increasing")
    t_max = horizons[-1]
    b = sample_stops(rule, x, n_paths, dt, t_max, seed=seed, stream=STREAM_PLAYER[1],
                     bridge_correction=bridge_correction)
    grid = dt * np.arange(b.n_steps + 1)
    opp = exact_survival(opponent_rule, dt, grid)
    if opp is None:
        ob = sample_stops(opponent_rule, x_opp, n_paths, dt, t_max, seed=seed, stream=STREAM_PLAYER[2],
                          bridge_correction=bridge_correction)
        opp = survival_from_batch(ob)
    vals = reduced_values(b, opp, f)
    ests = []
    times = b.times
    for h in horizons:
        keep = times <= h * (1 + 1e-12)
        mean, se = compensated_mean(np.where(keep, vals, 0.0))
        ests.append(EstimateWithCI(mean, se, n_paths, horizon=h))
    trace = GrowthTrace(horizons, tuple(ests), factor)
    flag = trace.grows_each_doubling(factor, last=min(3, len(horizons) - 1))
    ests = tuple(EstimateWithCI(e.mean, e.se, e.n, divergence_flag=flag, horizon=e.horizon) for e in ests)
    return GrowthTrace(horizons, ests, factor)
