"""Brownian paths, barriers and first-hitting stopping rules.

Two independent implementations of every rule live here:

* :func:`sample_stop` works on an explicit :class:`PathSample` with plain
  numpy and is meant for inspection and testing;
* :func:`sample_stops` runs the compiled per-replicate loop and never stores
  paths, which is what the estimators use.

Both consume the same counter-based substreams, so for the same replicate
they agree bit for bit.

Stopping times live on the grid ``t_k = k * dt``. With the bridge correction
enabled, a step whose endpoints both lie on the safe side of the barrier
still stops with the Brownian-bridge crossing probability
``exp(-2 d1 d2 / dt)``; ``d1`` and ``d2`` are the endpoint distances to the
barrier, which is exact for a barrier that is linear over the step. Such a
stop is reported at the right end of the step. A stop anywhere after time 0
is reported at the barrier value, the position of a continuous path at its
crossing.
"""
from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import ndtri

from . import _kernels as K
from .core import grid_steps
from .errors import CapacityError, ValidationError
from .rng import replicate_bridge_uniforms, replicate_normals

BOUNDARY_KINDS = ("constant", "square-root", "lil", "tabulated")
RULE_KINDS = ("immediate", "deterministic", "hit", "composite-tau-a", "never", "hazard")
MAX_GRID_POINTS = 200_000_000
CHUNK = 8192

__all__ = [
    "SeedId",
    "BoundarySpec",
    "StoppingRule",
    "PathSample",
    "StopOutcome",
    "StopBatch",
    "simulate_path",
    "simulate_paths",
    "first_hitting",
    "sample_stop",
    "sample_stops",
    "write_path_dump",
    "read_path_dump",
]


class SeedId(NamedTuple):
    """Address of one replicate's random substream."""

    seed: int
    replicate: int
    stream: int = 0


@dataclass(frozen=True)
class BoundarySpec:
    """A time-dependent barrier together with the side it is approached from.

    ``square-root`` is ``a * sqrt(t - t0 + 1)`` for ``t >= t0``; ``lil`` is
    ``sqrt(t log log t)`` for ``t >= max(T, 3)``. Outside its active domain a
    barrier cannot be crossed.
    """

    kind: str
    side: str = "upper"
    level: float = 0.0
    a: float = 1.0
    t0: float = 0.0
    T: float = 3.0
    knots: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.kind not in BOUNDARY_KINDS:
            raise ValidationError(f"unknown boundary kind {self.kind!r}")
        if self.side not in ("upper", "lower"):
            raise ValidationError(f"boundary side must be 'upper' or 'lower', got {self.side!r}")
        if self.kind == "square-root" and not self.a > 0:
            raise ValidationError(f"square-root boundary needs a > 0, got {self.a}")
        if self.kind == "lil" and not self.T >= 3:
            raise ValidationError(f"lil boundary needs T >= 3, got {self.T}")
        if self.kind == "tabulated":
            if not self.knots or len(self.knots) < 1:
                raise ValidationError("tabulated boundary needs knots")
            knots = tuple((float(t), float(v)) for t, v in self.knots)
            ts = [t for t, _ in knots]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValidationError("boundary knots must have strictly increasing times")
            object.__setattr__(self, "knots", knots)

    @classmethod
    def constant(cls, level, side="upper"):
        return cls(kind="constant", level=float(level), side=side)

    @classmethod
    def square_root(cls, a, t0=0.0, side="upper"):
        return cls(kind="square-root", a=float(a), t0=float(t0), side=side)

    @classmethod
    def lil(cls, T=3.0):
        return cls(kind="lil", T=float(T))

    @classmethod
    def tabulated(cls, knots, side="upper"):
        return cls(kind="tabulated", knots=tuple(map(tuple, knots)), side=side)

    @property
    def upper(self) -> bool:
        return self.side == "upper"

    def values(self, t) -> np.ndarray:
        """Barrier on the time points ``t``; ``+inf``/``-inf`` where inactive."""
        t = np.asarray(t, dtype=float)
        inactive = np.inf if self.upper else -np.inf
        if self.kind == "constant":
            return np.full(t.shape, self.level)
        if self.kind == "square-root":
            active = t >= self.t0
            s = np.where(active, t - self.t0, 0.0)
            return np.where(active, self.a * np.sqrt(s + 1.0), inactive)
        if self.kind == "lil":
            start = max(self.T, 3.0)
            active = t >= start
            s = np.where(active, t, math.e * math.e)
            return np.where(active, np.sqrt(s * np.log(np.log(s))), inactive)
        kt = np.array([p[0] for p in self.knots])
        kv = np.array([p[1] for p in self.knots])
        return np.interp(t, kt, kv)

    def to_dict(self):
        d = {"kind": self.kind, "side": self.side}
        if self.kind == "constant":
            d["level"] = self.level
        elif self.kind == "square-root":
            d.update(a=self.a, t0=self.t0)
        elif self.kind == "lil":
            d["T"] = self.T
        else:
            d["knots"] = [list(p) for p in self.knots]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "knots" in d and d["knots"] is not None:
            d["knots"] = tuple(tuple(p) for p in d["knots"])
        return cls(**d)


def hyperbolic_survival(b):
    """Survival law ``b / (b + t)``."""
    return lambda t: b / (b + np.asarray(t, dtype=float))


@dataclass(frozen=True)
class StoppingRule:
    """A stopping rule for one player; the starting point is supplied separately.

    Kinds:

    ``immediate``      stop at time 0.
    ``deterministic``  stop at the first grid time ``>= t_star``.
    ``hit``            first time ``x + W`` reaches ``boundary`` from its side.
    ``composite-tau-a``  first reach level 0, then the first time the
                         increment since then reaches ``a sqrt(s + 1)``, ``s``
                         measured from that hit.
    ``never``          never stop.
    ``hazard``         stop at grid step ``k`` when the normalized increment
                       falls below the Gaussian quantile of the step hazard of
                       the survival law ``b / (b + t)`` (or of ``knots``); the
                       rule is adapted and its grid survival equals the law.
    """

    kind: str
    t_star: float | None = None
    boundary: BoundarySpec | None = None
    a: float | None = None
    b: float | None = None
    knots: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValidationError(f"unknown rule kind {self.kind!r}; expected one of {RULE_KINDS}")
        if self.kind == "deterministic" and (self.t_star is None or not self.t_star >= 0):
            raise ValidationError("deterministic rule needs t_star >= 0")
        if self.kind == "hit" and not isinstance(self.boundary, BoundarySpec):
            raise ValidationError("hit rule needs a BoundarySpec")
        if self.kind == "composite-tau-a" and (self.a is None or not self.a > 0):
            raise ValidationError("composite-tau-a rule needs a > 0")
        if self.kind == "hazard":
            if (self.b is None) == (self.knots is None):
                raise ValidationError("hazard rule needs exactly one of b (hyperbolic law) or knots")
            if self.b is not None and not self.b > 0:
                raise ValidationError("hazard rule needs b > 0")
            if self.knots is not None:
                object.__setattr__(self, "knots", tuple((float(t), float(v)) for t, v in self.knots))

    @classmethod
    def immediate(cls):
        return cls("immediate")

    @classmethod
    def never(cls):
        return cls("never")

    @classmethod
    def deterministic(cls, t_star):
        return cls("deterministic", t_star=float(t_star))

    @classmethod
    def hit(cls, boundary):
        return cls("hit", boundary=boundary)

    @classmethod
    def composite(cls, a):
        return cls("composite-tau-a", a=float(a))

    @classmethod
    def hazard(cls, b=None, knots=None):
        return cls("hazard", b=None if b is None else float(b), knots=knots)

    def survival_law(self):
        """Survival function of a hazard rule, as a vectorized callable."""
        if self.kind != "hazard":
            raise ValidationError("only hazard rules carry a survival law")
        if self.b is not None:
            return hyperbolic_survival(self.b)
        kt = np.array([p[0] for p in self.knots])
        kv = np.array([p[1] for p in self.knots])
        return lambda t: np.interp(np.asarray(t, dtype=float), kt, kv)

    def describe(self) -> str:
        if self.kind == "deterministic":
            return f"deterministic(t*={self.t_star:g})"
        if self.kind == "hit":
            bd = self.boundary
            detail = {"constant": f"level={bd.level:g}", "square-root": f"a={bd.a:g}",
                      "lil": f"T={bd.T:g}", "tabulated": "tabulated"}[bd.kind]
            return f"hit({bd.kind}, {detail}, {bd.side})"
        if self.kind == "composite-tau-a":
            return f"composite-tau-a(a={self.a:g})"
        if self.kind == "hazard":
            return f"hazard(b={self.b:g})" if self.b is not None else "hazard(tabulated)"
        return self.kind

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "deterministic":
            d["t_star"] = self.t_star
        elif self.kind == "hit":
            d["boundary"] = self.boundary.to_dict()
        elif self.kind == "composite-tau-a":
            d["a"] = self.a
        elif self.kind == "hazard":
            if self.b is not None:
                d["b"] = self.b
            else:
                d["knots"] = [list(p) for p in self.knots]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("boundary") is not None:
            d["boundary"] = BoundarySpec.from_dict(d["boundary"])
        if d.get("knots") is not None:
            d["knots"] = tuple(tuple(p) for p in d["knots"])
        return cls(**d)


@dataclass(frozen=True)
class PathSample:
    """``W`` on the uniform grid ``0, dt, ..., T_max``.

    ``offset`` is the absolute grid index of ``times[0]``; it is non-zero for
    paths restarted at a stopping time and keys the bridge uniforms.
    """

    times: np.ndarray
    values: np.ndarray
    increments: np.ndarray
    dt: float
    seed_id: SeedId
    offset: int = 0

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1

    def restart(self, k: int) -> "PathSample":
        """The increment process ``W_{t_k + s} - W_{t_k}``, ``s >= 0``."""
        values = self.values[k:] - self.values[k]
        return PathSample(
            times=self.dt * np.arange(values.shape[0]),
            values=values,
            increments=self.increments[k:],
            dt=self.dt,
            seed_id=self.seed_id,
            offset=self.offset + k,
        )

    def truncate(self, k: int) -> "PathSample":
        """The same path observed only up to grid step ``k``."""
        return PathSample(self.times[: k + 1], self.values[: k + 1], self.increments[:k],
                          self.dt, self.seed_id, self.offset)


@dataclass(frozen=True)
class StopOutcome:
    """Stop time and position; ``censored`` means no stop by the horizon."""

    time: float
    position: float
    censored: bool = False
    step: int = -1

    @classmethod
    def censored_at_horizon(cls):
        return cls(time=math.inf, position=math.nan, censored=True, step=-1)


@dataclass(frozen=True)
class StopBatch:
    """Stop steps and positions of many replicates of one rule.

    ``step`` is ``-1`` for censored replicates; ``first_step`` is the level-0
    hitting step for composite rules and equals ``step`` otherwise.
    """

    step: np.ndarray
    position: np.ndarray
    first_step: np.ndarray
    dt: float
    n_steps: int
    x: float
    rule: StoppingRule = field(compare=False)

    @property
    def n(self) -> int:
        return self.step.shape[0]

    @property
    def censored(self) -> np.ndarray:
        return self.step < 0

    @property
    def times(self) -> np.ndarray:
        return np.where(self.step < 0, np.inf, self.step * self.dt)

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    def outcome(self, i: int) -> StopOutcome:
        if self.step[i] < 0:
            return StopOutcome.censored_at_horizon()
        return StopOutcome(float(self.step[i] * self.dt), float(self.position[i]), False, int(self.step[i]))


def _check_capacity(points: int):
    if points > MAX_GRID_POINTS:
        raise CapacityError(f"grid of {points} points exceeds the capacity limit {MAX_GRID_POINTS}")


def simulate_path(seed_id: SeedId, dt: float, t_max: float) -> PathSample:
    """One replicate's path on the grid; identical inputs give identical paths."""
    if not dt > 0:
        raise ValidationError(f"dt must be > 0, got {dt}")
    n = grid_steps(t_max, dt)
    _check_capacity(n + 1)
    seed_id = SeedId(*seed_id)
    z = replicate_normals(seed_id.seed, seed_id.stream, seed_id.replicate, n)
    inc = math.sqrt(dt) * z
    values = np.empty(n + 1)
    values[0] = 0.0
    np.cumsum(inc, out=values[1:])
    return PathSample(times=dt * np.arange(n + 1), values=values, increments=inc, dt=dt, seed_id=seed_id)


def simulate_paths(seed: int, n_paths: int, dt: float, t_max: float, stream: int = 0,
                   first_replicate: int = 0) -> np.ndarray:
    """``W`` for replicates ``first_replicate ...`` as an ``(n_paths, n_steps + 1)`` array."""
    n = grid_steps(t_max, dt)
    _check_capacity(n_paths * (n + 1))
    out = np.empty((n_paths, n + 1))
    K.fill_paths(np.uint64(seed), np.uint64(stream), first_replicate, n_paths, n, dt, out)
    return out


def _bridge_hits(path: PathSample, d: np.ndarray) -> np.ndarray:
    """Steps ``k >= 1`` at which the bridge correction fires, given distances ``d``."""
    d1, d2 = d[:-1], d[1:]
    ok = (d1 > 0) & (d2 > 0) & np.isfinite(d1) & np.isfinite(d2)
    e = np.full(d1.shape, np.inf)
    e[ok] = 2.0 * d1[ok] * d2[ok] / path.dt
    cand = np.nonzero(e < K._BRIDGE_CUTOFF)[0]
    if cand.size == 0:
        return cand
    sid = path.seed_id
    u = replicate_bridge_uniforms(sid.seed, sid.stream, sid.replicate, path.offset + cand + 1)
    return cand[u < np.exp(-e[cand])] + 1


def first_hitting(path: PathSample, boundary: BoundarySpec, x: float,
                  bridge_correction: bool = False) -> StopOutcome:
    """First grid time at which ``x + W`` reaches ``boundary``; censored if none."""
    b = boundary.values(path.times)
    X = x + path.values
    if boundary.upper:
        cross = X >= b
        d = b - X
    else:
        cross = X <= b
        d = X - b
    if cross[0]:
        return StopOutcome(float(path.times[0]), float(x), False, path.offset)
    hits = np.nonzero(cross)[0]
    k = int(hits[0]) if hits.size else None
    if bridge_correction:
        extra = _bridge_hits(path, d)
        if extra.size and (k is None or extra[0] < k):
            k = int(extra[0])
    if k is None:
        return StopOutcome.censored_at_horizon()
    return StopOutcome(float(path.times[k]), float(b[k]), False, path.offset + k)


def deterministic_step(t_star: float, dt: float) -> int:
    """Index of the first grid time ``>= t_star``."""
    ratio = t_star / dt
    nearest = round(ratio)
    if abs(ratio - nearest) <= 1e-9 * max(1.0, ratio):
        return int(nearest)
    return int(math.ceil(ratio))


def hazard_thresholds(rule: StoppingRule, dt: float, n_steps: int) -> np.ndarray:
    """Per-step quantiles ``z_k`` with ``P(Z < z_k)`` the hazard of step ``k``."""
    h = np.asarray(rule.survival_law()(dt * np.arange(n_steps + 1)), dtype=float)
    if np.any(np.diff(h) > 0) or h[0] > 1 or np.any(h < 0):
        raise ValidationError("hazard survival law must be non-increasing with values in [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(h[:-1] > 0, 1.0 - h[1:] / h[:-1], 1.0)
    z = np.empty(n_steps + 1)
    z[0] = -np.inf
    z[1:] = ndtri(np.clip(q, 0.0, 1.0))
    return z


def sample_stop(rule: StoppingRule, path: PathSample, x: float,
                bridge_correction: bool = False) -> StopOutcome:
    """Apply ``rule`` from start ``x`` to one explicit path."""
    if rule.kind == "immediate":
        return StopOutcome(0.0, float(x), False, 0)
    if rule.kind == "never":
        return StopOutcome.censored_at_horizon()
    if rule.kind == "deterministic":
        k = deterministic_step(rule.t_star, path.dt)
        if k > path.n_steps:
            return StopOutcome.censored_at_horizon()
        return StopOutcome(float(path.times[k]), float(x + path.values[k]), False, k)
    if rule.kind == "hit":
        return first_hitting(path, rule.boundary, x, bridge_correction)
    if rule.kind == "hazard":
        z = hazard_thresholds(rule, path.dt, path.n_steps)
        fire = np.nonzero(path.increments < math.sqrt(path.dt) * z[1:])[0]
        if fire.size == 0:
            return StopOutcome.censored_at_horizon()
        k = int(fire[0]) + 1
        return StopOutcome(float(path.times[k]), float(x + path.values[k]), False, k)
    # composite: reach the origin, then the square-root barrier of the restarted increments
    if x == 0.0:
        sigma = 0
    else:
        leg1 = first_hitting(path, BoundarySpec.constant(0.0, "upper" if x < 0 else "lower"), x,
                             bridge_correction)
        if leg1.censored:
            return leg1
        sigma = leg1.step
    rest = path.restart(sigma)
    leg2 = first_hitting(rest, BoundarySpec.square_root(rule.a), 0.0, bridge_correction)
    if leg2.censored:
        return leg2
    k = leg2.step
    return StopOutcome(float(path.times[k]), leg2.position, False, k)


def _rule_arrays(rule: StoppingRule, x: float, dt: float, n_steps: int):
    empty = np.zeros(1)
    code = {"immediate": K.IMMEDIATE, "deterministic": K.DETERMINISTIC, "hit": K.HIT,
            "composite-tau-a": K.COMPOSITE, "never": K.NEVER, "hazard": K.HAZARD}[rule.kind]
    kstar, bvals, upper, leg2, zthr = 0, empty, True, empty, empty
    t = dt * np.arange(n_steps + 1)
    if rule.kind == "deterministic":
        kstar = deterministic_step(rule.t_star, dt)
    elif rule.kind == "hit":
        bvals = np.ascontiguousarray(rule.boundary.values(t))
        upper = rule.boundary.upper
    elif rule.kind == "composite-tau-a":
        leg2 = rule.a * np.sqrt(t + 1.0)
    elif rule.kind == "hazard":
        zthr = hazard_thresholds(rule, dt, n_steps)
    return code, kstar, bvals, upper, leg2, zthr


def sample_stops(rule: StoppingRule, x: float, n_paths: int, dt: float, t_max: float,
                 seed: int = 0, stream: int = 1, bridge_correction: bool = True,
                 first_replicate: int = 0, workers: int = 1) -> StopBatch:
    """Stop outcomes of replicates ``first_replicate ... + n_paths - 1``.

    Replicates are processed in fixed chunks; ``workers > 1`` runs chunks on
    threads. The result does not depend on ``workers``.
    """
    if not dt > 0:
        raise ValidationError(f"dt must be > 0, got {dt}")
    n_steps = grid_steps(t_max, dt)
    _check_capacity(n_steps + 1)
    code, kstar, bvals, upper, leg2, zthr = _rule_arrays(rule, float(x), dt, n_steps)
    idx = np.empty(n_paths, dtype=np.int64)
    pos = np.empty(n_paths)
    aux = np.empty(n_paths, dtype=np.int64)

    def run(lo):
        hi = min(lo + CHUNK, n_paths)
        K.run_rule(code, float(x), kstar, bvals, upper, leg2, zthr, np.uint64(seed), np.uint64(stream),
                   first_replicate + lo, hi - lo, n_steps, float(dt), bool(bridge_correction),
                   idx[lo:hi], pos[lo:hi], aux[lo:hi])

    starts = range(0, n_paths, CHUNK)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(run, starts))
    else:
        for lo in starts:
            run(lo)
    return StopBatch(step=idx, position=pos, first_step=aux, dt=float(dt), n_steps=n_steps,
                     x=float(x), rule=rule)


_DUMP_HEADER = struct.Struct("<3d")


def write_path_dump(path: PathSample, file) -> None:
    """Little-endian doubles: header ``(dt, T_max, n)`` followed by ``n`` values."""
    values = np.ascontiguousarray(path.values, dtype="<f8")
    header = _DUMP_HEADER.pack(path.dt, float(path.times[-1]), float(values.shape[0]))
    with open(file, "wb") as fh:
        fh.write(header)
        fh.write(values.tobytes())


def read_path_dump(file):
    """Return ``(dt, T_max, values)`` from :func:`write_path_dump` output."""
    with open(file, "rb") as fh:
        data = fh.read()
    dt, t_max, n = _DUMP_HEADER.unpack_from(data)
    values = np.frombuffer(data, dtype="<f8", offset=_DUMP_HEADER.size, count=int(n)).copy()
    return dt, t_max, values
