"""Numerical laboratory for a two-player Dynkin game with private Brownian observations.

Modules:

``core``        rewards, game configuration, normalization
``pathsim``     Brownian paths, barriers and stopping rules
``analytics``   closed forms, Shepp's root, tail exponents, FKG checks
``montecarlo``  survival curves and payoff estimators
``solver``      lattice best responses and equilibrium verification
``scenarios``   canned experiments and strict config parsing
``cli``         the ``dynkinlab`` command

Top-level names are loaded on first use, so importing the package does not
compile the simulation kernels.
"""
from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "core": ("AssumptionFlags", "GameConfig", "RewardSpec", "check_assumptions", "eval_reward", "normalize"),
    "defaults": ("THRESHOLDS",),
    "analytics": ("hitting_tail", "shepp_alpha", "novikov_floor", "breiman_exponent", "fkg_check"),
    "montecarlo": ("EstimateWithCI", "SurvivalCurve", "estimate_survival", "payoff_direct", "payoff_reduced",
                   "reduction_consistency"),
    "pathsim": ("BoundarySpec", "PathSample", "SeedId", "StopOutcome", "StoppingRule", "first_hitting",
                "sample_stop", "sample_stops", "simulate_path"),
    "solver": ("EquilibriumReport", "Lattice", "LatticeParams", "best_response", "classify_divergence",
               "negative_stop_audit", "verify_equilibrium"),
}
_WHERE = {name: mod for mod, names in _EXPORTS.items() for name in names}

__all__ = sorted(_WHERE) + ["__version__"]


def __getattr__(name):
    mod = _WHERE.get(name)
    if mod is None:
        raise AttributeError(f"module 'dynkinlab' has no attribute {name!r}")
    value = getattr(import_module(f".{mod}", __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return __all__
