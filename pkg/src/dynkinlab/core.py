"""Reward functions, game configuration and the reward normalization.

A reward is described by a :class:`RewardSpec`. Three shapes are supported:

``affine``
    ``f(x) = k x + b`` with ``k > 0``.
``power-tail``
    ``f(x) = sign(x - m) |x - m| ** gamma``. Here ``k`` and ``b`` do not enter
    the evaluation; they are the linear majorant ``f(x) <= k x + b`` that the
    third growth assumption refers to.
``piecewise-tabulated``
    linear interpolation between ``table`` knots and affine extrapolation
    with the end-segment slopes outside them (so the linear majorant stays
    checkable).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .errors import UnsupportedNormalizationError, ValidationError

REWARD_KINDS = ("affine", "power-tail", "piecewise-tabulated")

__all__ = [
    "RewardSpec",
    "GameConfig",
    "AssumptionFlags",
    "eval_reward",
    "check_assumptions",
    "normalize",
]


@dataclass(frozen=True)
class RewardSpec:
    kind: str = "affine"
    k: float = 1.0
    b: float = 0.0
    gamma: float = 1.0
    m: float = 0.0
    table: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.kind not in REWARD_KINDS:
            raise ValidationError(f"unknown reward kind {self.kind!r}; expected one of {REWARD_KINDS}")
        for name in ("k", "b", "gamma", "m"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValidationError(f"reward field {name} must be a finite number, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.k <= 0:
            raise ValidationError(f"reward slope k must be > 0, got {self.k}")
        if self.gamma <= 0:
            raise ValidationError(f"tail exponent gamma must be > 0, got {self.gamma}")
        if self.kind == "piecewise-tabulated":
            if not self.table or len(self.table) < 2:
                raise ValidationError("piecewise-tabulated reward needs at least two (x, f(x)) knots")
            knots = tuple((float(x), float(y)) for x, y in self.table)
            xs = [x for x, _ in knots]
            if any(b <= a for a, b in zip(xs, xs[1:])):
                raise ValidationError("table knots must have strictly increasing x")
            if not all(math.isfinite(v) for pair in knots for v in pair):
                raise ValidationError("table knots must be finite")
            object.__setattr__(self, "table", knots)
        elif self.table is not None:
            raise ValidationError(f"table is only meaningful for piecewise-tabulated rewards, not {self.kind}")

    @classmethod
    def affine(cls, k=1.0, b=0.0):
        return cls(kind="affine", k=k, b=b, m=-b / k if k > 0 else 0.0)

    @classmethod
    def power_tail(cls, gamma, m=0.0, k=1.0, b=0.0):
        return cls(kind="power-tail", gamma=gamma, m=m, k=k, b=b)

    @classmethod
    def tabulated(cls, knots, k=1.0, b=0.0, m=0.0):
        return cls(kind="piecewise-tabulated", table=tuple(map(tuple, knots)), k=k, b=b, m=m)

    @property
    def sign_change(self) -> float:
        """Point ``m`` where the reward changes sign (``-b/k`` for affine)."""
        if self.kind == "affine":
            return -self.b / self.k
        return self.m

    def __call__(self, x):
        return eval_reward(self, x)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "k": self.k,
            "b": self.b,
            "gamma": self.gamma,
            "m": self.m,
            "table": None if self.table is None else [list(p) for p in self.table],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RewardSpec":
        d = dict(d)
        table = d.pop("table", None)
        if table is not None:
            table = tuple(tuple(p) for p in table)
        kind = d.get("kind", "affine")
        if kind == "affine" and "m" not in d:
            k = d.get("k", 1.0)
            d["m"] = -d.get("b", 0.0) / k if isinstance(k, (int, float)) and k > 0 else 0.0
        return cls(table=table, **d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RewardSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class GameConfig:
    """Starting positions, reward and simulation settings for one game."""

    x1: float
    x2: float
    reward: RewardSpec = field(default_factory=RewardSpec)
    t_max: float = 10.0
    dt: float = 1e-3
    n_paths: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValidationError(f"dt must be > 0, got {self.dt}")
        if not (self.t_max >= self.dt and math.isfinite(self.t_max)):
            raise ValidationError(f"T_max must be >= dt, got T_max={self.t_max}, dt={self.dt}")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ValidationError(f"n_paths must be a positive integer, got {self.n_paths}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be an integer in [0, 2**64), got {self.seed}")
        if not isinstance(self.reward, RewardSpec):
            raise ValidationError("reward must be a RewardSpec")
        object.__setattr__(self, "n_paths", int(self.n_paths))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n_steps(self) -> int:
        return grid_steps(self.t_max, self.dt)

    def to_dict(self) -> dict[str, Any]:
        return {
            "x1": self.x1,
            "x2": self.x2,
            "reward": self.reward.to_dict(),
            "T_max": self.t_max,
            "dt": self.dt,
            "n_paths": self.n_paths,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GameConfig":
        d = dict(d)
        reward = d.pop("reward", None)
        t_max = d.pop("T_max", 10.0)
        return cls(
            reward=RewardSpec() if reward is None else RewardSpec.from_dict(reward),
            t_max=t_max,
            **d,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GameConfig":
        return cls.from_dict(json.loads(text))


def grid_steps(t_max: float, dt: float) -> int:
    """Number of steps of size ``dt`` in ``[0, t_max]`` (rounding near-integers)."""
    ratio = t_max / dt
    nearest = round(ratio)
    if abs(ratio - nearest) <= 1e-9 * max(1.0, ratio):
        return int(nearest)
    return int(math.floor(ratio))


@dataclass(frozen=True)
class AssumptionFlags:
    a1: bool
    a2: bool
    a3: bool
    a4: bool
    a1_prime: bool
    a4_prime: bool
    m: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.a4 and not (self.a1 and self.a2 and self.a3):
            raise ValidationError("inconsistent flags: a4 must imply a1, a2 and a3")


def eval_reward(f: RewardSpec, x):
    """Evaluate the reward at a scalar or an array of positions."""
    xa = np.asarray(x, dtype=float)
    if f.kind == "affine":
        out = f.k * xa + f.b
    elif f.kind == "power-tail":
        y = xa - f.m
        out = np.sign(y) * np.abs(y) ** f.gamma
    else:
        kx = np.array([p[0] for p in f.table])
        ky = np.array([p[1] for p in f.table])
        out = np.interp(xa, kx, ky)
        lo_slope = (ky[1] - ky[0]) / (kx[1] - kx[0])
        hi_slope = (ky[-1] - ky[-2]) / (kx[-1] - kx[-2])
        out = np.where(xa < kx[0], ky[0] + lo_slope * (xa - kx[0]), out)
        out = np.where(xa > kx[-1], ky[-1] + hi_slope * (xa - kx[-1]), out)
    if np.ndim(x) == 0:
        return float(out)
    return out


def _sign_pattern(values, xs, m):
    neg = xs < m
    return bool(np.all(values[neg] < 0) and np.all(values[~neg] >= 0))


def check_assumptions(f: RewardSpec, samples, floor: float = 1e-9) -> AssumptionFlags:
    """Refute the growth and sign assumptions on a finite grid.

    A flag that comes back ``False`` is a proof that the assumption fails; a
    ``True`` flag only means no counterexample exists among ``samples``. The
    liminf assumption is read as "``f(x) / x**gamma`` stays above ``floor``
    on the upper quarter of the positive grid points".
    """
    xs = np.unique(np.asarray(samples, dtype=float))
    if xs.size == 0:
        raise ValidationError("assumption check needs a non-empty grid")
    vals = np.asarray(eval_reward(f, xs), dtype=float)
    m = f.sign_change
    a1 = _sign_pattern(vals, xs, 0.0)
    a1_prime = _sign_pattern(vals, xs, m)

    gamma = 1.0 if f.kind == "affine" else f.gamma
    pos = xs[xs > 0]
    if pos.size == 0:
        a2 = False
    else:
        tail = pos[pos >= np.quantile(pos, 0.75)]
        ratio = np.asarray(eval_reward(f, tail)) / tail**gamma
        a2 = bool(np.min(ratio) > floor)

    bound = f.k * xs + f.b
    a3 = bool(np.all(vals <= bound + 1e-12 * np.maximum(1.0, np.abs(bound))))
    a4_prime = f.kind == "affine"
    a4 = a4_prime and f.b == 0.0
    return AssumptionFlags(a1=a1, a2=a2, a3=a3, a4=a4, a1_prime=a1_prime, a4_prime=a4_prime, m=m, gamma=gamma)


def normalize(f: RewardSpec, x1: float, x2: float) -> tuple[RewardSpec, float, float]:
    """Shift the reward so that it changes sign at the origin.

    Affine rewards become ``x -> k x`` with starting points moved by ``b/k``;
    other rewards become ``g(x) = f(x + m)`` with starting points moved by
    ``-m``. Expected payoffs of every strategy pair are unchanged.
    """
    if f.kind == "affine":
        shift = f.b / f.k
        return RewardSpec.affine(k=f.k, b=0.0), x1 + shift, x2 + shift
    m = f.m
    if f.kind == "piecewise-tabulated":
        kx = np.array([p[0] for p in f.table])
        ky = np.array([p[1] for p in f.table])
        probe = np.concatenate([kx, [kx[0] - 1.0, kx[-1] + 1.0]])
        if not _sign_pattern(np.asarray(eval_reward(f, probe)), probe, m):
            raise UnsupportedNormalizationError(
                f"tabulated reward does not change sign exactly once at m={m}"
            )
        table = tuple((float(x - m), float(y)) for x, y in zip(kx, ky))
        g = replace(f, table=table, m=0.0, b=f.b + f.k * m)
    else:
        g = replace(f, m=0.0, b=f.b + f.k * m)
    return g, x1 - m, x2 - m
