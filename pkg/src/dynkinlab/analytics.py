"""Closed forms and constants used when checking the game numerically.

* reflection tail of a Brownian first-passage time and its power-law floor,
* Shepp's root ``alpha`` of ``a = (1 - a^2) * int_0^inf exp(l a - l^2/2) dl``,
* Novikov's floor ``sqrt(2/pi) |E M|`` and its finite-horizon liminf proxy,
* empirical tail exponents of square-root boundary hitting times,
* empirical FKG checks on a library of increasing path events.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

from .defaults import THRESHOLDS
from .errors import DomainError, PrecisionError, ValidationError

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)

__all__ = [
    "norm_cdf",
    "hitting_tail",
    "reflection_lower_bound",
    "shepp_F",
    "shepp_alpha",
    "novikov_floor",
    "liminf_proxy",
    "TailEstimate",
    "breiman_exponent",
    "PathEvent",
    "FKGResult",
    "event_library",
    "fkg_check",
    "fkg_suite",
]


def norm_cdf(z):
    """Standard Gaussian CDF, accurate in both tails (erfc based)."""
    return special.ndtr(z)


def hitting_tail(x: float, t: float) -> float:
    """``P(sigma_{-x} > t)`` for Brownian motion started at 0: ``2 Phi(|x|/sqrt t) - 1``.

    ``t = 0`` follows the convention ``1`` for ``x != 0`` and ``0`` for ``x = 0``.
    """
    if t == 0:
        return 0.0 if x == 0 else 1.0
    if not t > 0:
        raise DomainError(f"hitting_tail needs t > 0, got {t}")
    # erf(u / sqrt 2) == 2 Phi(u) - 1 without the cancellation for small u
    return float(special.erf(abs(x) / math.sqrt(2.0 * t)))


def reflection_lower_bound(x: float, t: float) -> float:
    """Power-law floor ``|x| / sqrt(pi t)``; valid below the tail when ``t >= x^2``."""
    if not t > 0:
        raise DomainError(f"reflection bound needs t > 0, got {t}")
    return abs(x) / math.sqrt(math.pi * t)


# ---------------------------------------------------------------------------
# Shepp's root

def _shepp_integral_quad(alpha: float, epsrel: float = 1e-13):
    val, err = integrate.quad(lambda lam: math.exp(lam * alpha - 0.5 * lam * lam), 0.0, math.inf,
                              epsabs=0.0, epsrel=epsrel, limit=200)
    return val, err


def _shepp_integral_mills(alpha: float) -> float:
    return math.sqrt(2.0 * math.pi) * math.exp(0.5 * alpha * alpha) * float(special.ndtr(alpha))


def shepp_F(alpha: float, method: str = "quad") -> float:
    """``F(a) = a - (1 - a^2) * int_0^inf exp(l a - l^2/2) dl``."""
    if method == "quad":
        integral, _ = _shepp_integral_quad(alpha)
    elif method == "mills":
        integral = _shepp_integral_mills(alpha)
    else:
        raise ValidationError(f"unknown method {method!r}")
    return alpha - (1.0 - alpha * alpha) * integral


# smallest |F| tolerance the quadrature can certify near the root
_SHEPP_FLOOR = 1e-13


def shepp_alpha(tolerance: float = 1e-10) -> float:
    """Root of :func:`shepp_F` in ``(0, 1)`` with ``|F(alpha)| < tolerance``.

    The bracket is ``[0, 1]`` (``F(0) = -sqrt(pi/2)``, ``F(1) = 1``). The
    quadrature value at the root is cross-checked against the Mills-ratio
    form.
    """
    if not tolerance > 0:
        raise ValidationError(f"tolerance must be > 0, got {tolerance}")
    if tolerance < _SHEPP_FLOOR:
        raise PrecisionError(
            f"tolerance {tolerance:g} is below the achievable quadrature accuracy {_SHEPP_FLOOR:g}"
        )
    root = optimize.brentq(shepp_F, 0.0, 1.0, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
    integral, err = _shepp_integral_quad(root)
    residual = root - (1.0 - root * root) * integral
    scale = 1.0 - root * root
    if scale * err >= tolerance or abs(residual) >= tolerance:
        raise PrecisionError(f"could not certify |F(alpha)| < {tolerance:g} (residual {residual:.3g})")
    mills = _shepp_integral_mills(root)
    if scale * abs(mills - integral) >= tolerance:
        raise PrecisionError("quadrature and Mills-ratio forms disagree beyond the tolerance")
    return float(root)


# ---------------------------------------------------------------------------
# Novikov floor

def novikov_floor(stopped_values) -> float:
    """``sqrt(2/pi) * |mean|`` of a sample of stopped positions."""
    v = np.asarray(stopped_values, dtype=float).ravel()
    if v.size == 0:
        raise ValidationError("novikov_floor needs a non-empty sample")
    mean = math.fsum(v) / v.size
    if not math.isfinite(mean):
        raise ValidationError("sample mean must be finite")
    return SQRT_2_OVER_PI * abs(mean)


@dataclass(frozen=True)
class LiminfProxy:
    """Minimum of ``P(tau > t) sqrt(t)`` over the last decade of a grid."""

    value: float
    se: float
    t_at_min: float
    window: tuple[float, float]


def liminf_proxy(t, survival, n: int) -> LiminfProxy:
    """``min`` of ``S(t) sqrt(t)`` over ``t`` in ``[t_max / 10, t_max]``.

    ``se`` is the binomial standard error at the minimizing point.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(survival, dtype=float)
    lo = t[-1] / 10.0
    sel = t >= lo
    prod = s[sel] * np.sqrt(t[sel])
    j = int(np.argmin(prod))
    tj = t[sel][j]
    sj = s[sel][j]
    se = math.sqrt(max(sj * (1.0 - sj), 0.0) / n) * math.sqrt(tj)
    return LiminfProxy(float(prod[j]), float(se), float(tj), (float(lo), float(t[-1])))


# ---------------------------------------------------------------------------
# Breiman exponents

@dataclass(frozen=True)
class TailEstimate:
    """Empirical survival of a hitting time and its fitted power-law exponent.

    ``exponent`` is minus the least-squares slope of ``log S(t)`` against
    ``log(t + 1)`` over ``fit_window``.
    """

    a: float
    t: np.ndarray
    survival: np.ndarray
    se: np.ndarray
    exponent: float
    residual: float
    fit_window: tuple[float, float]
    n: int
    survivors: int
    unreliable: bool


def breiman_exponent(a: float, n_paths: int, t_grid, dt: float = 0.05, seed: int = 0,
                     stream: int = 5, fit_from: float | None = None,
                     bridge_correction: bool = True) -> TailEstimate:
    """Fit the tail exponent of ``inf{t : W_t >= a sqrt(t + 1)}``.

    The fit uses grid points ``t >= fit_from`` (default: the last two decades
    of ``t_grid``, or all of it if shorter). The result is flagged unreliable
    when fewer than the configured number of paths survive to the end of the
    window, or when the window holds fewer than three points.
    """
    if not a > 0:
        raise ValidationError(f"a must be > 0, got {a}")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 2 or np.any(np.diff(t_grid) <= 0) or t_grid[0] < 0:
        raise ValidationError("t_grid must be strictly increasing and non-negative")
    if t_grid[0] > 0 and t_grid[-1] / t_grid[0] < 100:
        raise ValidationError("t_grid must span at least two decades")
    # the simulator is imported on demand so the closed forms load quickly
    from .pathsim import BoundarySpec, StoppingRule, sample_stops

    rule = StoppingRule.hit(BoundarySpec.square_root(a))
    batch = sample_stops(rule, 0.0, n_paths, dt, float(t_grid[-1]), seed=seed, stream=stream,
                         bridge_correction=bridge_correction)
    times = np.sort(batch.times)
    alive = n_paths - np.searchsorted(times, t_grid, side="right")
    surv = alive / n_paths
    se = np.sqrt(surv * (1.0 - surv) / n_paths)
    if np.any(np.diff(surv) > 0):  # pragma: no cover - sorting makes this impossible
        raise AssertionError("empirical survival must be non-increasing")

    if fit_from is None:
        fit_from = max(t_grid[-1] / 100.0, t_grid[0])
    sel = (t_grid >= fit_from) & (surv > 0)
    survivors = int(alive[-1])
    unreliable = survivors < THRESHOLDS.breiman_min_survivors or int(sel.sum()) < 3
    if int(sel.sum()) >= 2:
        X = np.log(t_grid[sel] + 1.0)
        Y = np.log(surv[sel])
        slope, intercept = np.polyfit(X, Y, 1)
        res = Y - (slope * X + intercept)
        exponent = float(-slope)
        residual = float(math.sqrt(np.mean(res**2)))
    else:
        exponent, residual = math.nan, math.nan
    sel_t = t_grid[t_grid >= fit_from]
    return TailEstimate(a=float(a), t=t_grid, survival=surv, se=se, exponent=exponent,
                        residual=residual, fit_window=(float(sel_t[0]), float(sel_t[-1])),
                        n=n_paths, survivors=survivors, unreliable=unreliable)


# ---------------------------------------------------------------------------
# FKG

@dataclass(frozen=True)
class PathEvent:
    """An increasing event of a Brownian path on ``[0, horizon]``.

    ``indicator`` maps a ``(n, steps + 1)`` block of ``W`` values to booleans.
    """

    name: str
    indicator: Callable[[np.ndarray, float], np.ndarray] = field(compare=False)
    horizon: float = 1.0


def terminal_above(level: float, t: float = 1.0) -> PathEvent:
    """``{W_t > level}``."""
    def ind(w, dt):
        return w[:, round(t / dt)] > level
    return PathEvent(f"W_{t:g} > {level:g}", ind, t)


def upper_hit_before(level: float, slope: float, t: float) -> PathEvent:
    """``{W_s >= level + slope * s for some s <= t}``."""
    def ind(w, dt):
        k = round(t / dt)
        s = dt * np.arange(k + 1)
        return np.any(w[:, : k + 1] >= level + slope * s, axis=1)
    return PathEvent(f"hit {level:g}+{slope:g}t before {t:g}", ind, t)


def lower_not_hit(level: float, t: float) -> PathEvent:
    """``{sigma_level >= t}``: ``W`` stays above ``level < 0`` up to ``t``."""
    def ind(w, dt):
        k = round(t / dt)
        return np.all(w[:, : k + 1] > level, axis=1)
    return PathEvent(f"sigma_{level:g} >= {t:g}", ind, t)


def event_library() -> list[tuple[PathEvent, PathEvent]]:
    """Five pairs of increasing events (all on ``[0, 1]``)."""
    return [
        (terminal_above(0.0), terminal_above(1.0)),
        (upper_hit_before(1.0, 1.0, 1.0), lower_not_hit(-1.0, 1.0)),
        (upper_hit_before(0.5, 0.0, 1.0), terminal_above(0.0)),
        (terminal_above(0.0, 0.5), terminal_above(0.5, 1.0)),
        (lower_not_hit(-0.5, 1.0), upper_hit_before(0.8, 0.0, 1.0)),
    ]


@dataclass(frozen=True)
class FKGResult:
    name_a: str
    name_b: str
    p_a: float
    p_b: float
    p_ab: float
    product: float
    se_ab: float
    se_product: float
    se_diff: float
    n: int

    @property
    def margin(self) -> float:
        """``P(A n B) - P(A) P(B)`` in units of ``se_diff``."""
        d = self.p_ab - self.product
        return d / self.se_diff if self.se_diff > 0 else (0.0 if d == 0 else math.copysign(math.inf, d))

    def holds(self, k: float = THRESHOLDS.se_multiplier) -> bool:
        return self.p_ab >= self.product - k * self.se_diff


def _fkg_result(event_a, event_b, ia, ib) -> FKGResult:
    a = ia.astype(float)
    b = ib.astype(float)
    n = a.size
    pa, pb = a.mean(), b.mean()
    pab = (a * b).mean()
    prod = pa * pb
    se_ab = math.sqrt(pab * (1 - pab) / n)
    # influence functions of the product and of the covariance
    infl_prod = pb * (a - pa) + pa * (b - pb)
    infl_cov = (a - pa) * (b - pb)
    se_prod = float(np.std(infl_prod) / math.sqrt(n))
    se_diff = float(np.std(infl_cov) / math.sqrt(n))
    return FKGResult(event_a.name, event_b.name, float(pa), float(pb), float(pab), float(prod),
                     float(se_ab), se_prod, se_diff, n)


def fkg_suite(pairs, n_paths: int, dt: float = 2.0**-8, seed: int = 0, stream: int = 4,
              chunk: int = 8192) -> list[FKGResult]:
    """:func:`fkg_check` for several pairs on one shared set of paths."""
    from .pathsim import simulate_paths

    events = [e for pair in pairs for e in pair]
    horizon = max(e.horizon for e in events)
    ind = np.empty((len(events), n_paths), dtype=bool)
    for lo in range(0, n_paths, chunk):
        m = min(chunk, n_paths - lo)
        w = simulate_paths(seed, m, dt, horizon, stream=stream, first_replicate=lo)
        for j, e in enumerate(events):
            ind[j, lo:lo + m] = e.indicator(w, dt)
    return [_fkg_result(a, b, ind[2 * i], ind[2 * i + 1]) for i, (a, b) in enumerate(pairs)]


def fkg_check(event_a: PathEvent, event_b: PathEvent, n_paths: int, dt: float = 2.0**-8,
              seed: int = 0, stream: int = 4, chunk: int = 8192) -> FKGResult:
    """Empirical ``P(A n B)`` against ``P(A) P(B)`` on shared grid paths.

    ``se_diff`` is the delta-method standard error of the covariance
    estimate ``P(A n B) - P(A) P(B)``.
    """
    return fkg_suite([(event_a, event_b)], n_paths, dt=dt, seed=seed, stream=stream, chunk=chunk)[0]
