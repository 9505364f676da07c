"""Command line entry point.

    dynkinlab run <config.json>
    dynkinlab alpha [--tol TOL]
    dynkinlab tail <x> <t>
    dynkinlab best-response <curve.csv> <reward.json> [--x X] [--dt DT] [--dx DX] [--T T]
    dynkinlab verify <rules.json>
    dynkinlab config-reference

Errors are printed to stderr as one JSON object and give a non-zero exit
status. Artifacts go to ``--output-dir``, else ``$DYNKINLAB_OUTPUT_DIR``,
else ``./dynkinlab-out``.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from .analytics import hitting_tail, reflection_lower_bound, shepp_F, shepp_alpha
from .core import GameConfig, RewardSpec
from .defaults import OUTPUT_ENV, THRESHOLDS
from .errors import ConfigError, DynkinLabError

# simulation modules are imported inside the commands that need them

EXIT_FAIL = 1
EXIT_ERROR = 2


def _output_dir(args) -> Path:
    d = args.output_dir or os.environ.get(OUTPUT_ENV) or "dynkinlab-out"
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_json(path: str, pointer: str = "/"):
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"file {path!r} does not exist", pointer)
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path!r}: {exc}", pointer) from exc


def cmd_run(args) -> int:
    from .scenarios import parse_config, run_scenario

    cfg = parse_config(args.config)
    if args.output_dir:
        cfg = replace(cfg, output_dir=args.output_dir)
    if args.workers:
        cfg = replace(cfg, workers=args.workers)
    result = run_scenario(cfg, out=sys.stdout)
    print(f"manifest: {result.manifest}")
    if result.error:
        print(json.dumps(result.error), file=sys.stderr)
    return 0 if result.passed else EXIT_FAIL


def cmd_alpha(args) -> int:
    a = shepp_alpha(args.tol)
    print(json.dumps({"alpha": a, "F": shepp_F(a), "F_mills": shepp_F(a, "mills"), "tolerance": args.tol}))
    return 0


def cmd_tail(args) -> int:
    x, t = args.x, args.t
    p = hitting_tail(x, t)
    out = {"x": x, "t": t, "tail": p}
    if t > 0:
        lb = reflection_lower_bound(x, t)
        out.update(lower_bound=lb, bound_applies=t >= x * x, bound_holds=p >= lb if t >= x * x else None)
    print(json.dumps(out))
    return 0


def cmd_best_response(args) -> int:
    from .montecarlo import SurvivalCurve
    from .solver import LatticeParams, best_response

    curve = SurvivalCurve.from_csv(args.curve)
    doc = _load_json(args.reward)
    try:
        f = RewardSpec.from_dict(doc)
    except (TypeError, DynkinLabError) as exc:
        raise ConfigError(str(exc), "/") from exc
    T = args.T if args.T is not None else curve.horizon
    lat = best_response(curve, f, LatticeParams(t_max=T, dt=args.dt, dx=args.dx, x_center=args.x))
    out = _output_dir(args)
    path = out / "boundary.csv"
    lat.boundary_csv(path)
    print(json.dumps({
        "V0": lat.value_at(0.0, args.x),
        "boundary_t0": lat.boundary[0] if math.isfinite(lat.boundary[0]) else None,
        "upclosed_violations": lat.upclosed_violations,
        "dominance_min": lat.dominance_min,
        "boundary_csv": str(path),
    }))
    return 0


def cmd_verify(args) -> int:
    from .pathsim import StoppingRule
    from .solver import verify_equilibrium

    doc = _load_json(args.rules)
    if not isinstance(doc, dict):
        raise ConfigError("rules file must be a JSON object", "/")
    allowed = {"rule1", "rule2", "game", "significance", "horizons"}
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r}", f"/{key}")
    rules = []
    for key in ("rule1", "rule2"):
        if key not in doc:
            raise ConfigError(f"missing key {key!r}", f"/{key}")
        try:
            rules.append(StoppingRule.from_dict(doc[key]))
        except (TypeError, DynkinLabError) as exc:
            raise ConfigError(str(exc), f"/{key}") from exc
    try:
        game = GameConfig.from_dict(doc.get("game", {"x1": 0.0, "x2": 0.0}))
    except (TypeError, DynkinLabError) as exc:
        raise ConfigError(str(exc), "/game") from exc
    report = verify_equilibrium(rules[0], rules[1], game, doc.get("significance", THRESHOLDS.se_multiplier),
                                horizons=doc.get("horizons"))
    path = _output_dir(args) / "equilibrium_report.json"
    text = report.to_json(path)
    print(text)
    return 0


def cmd_config_reference(args) -> int:
    from .scenarios import config_reference

    text = config_reference()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynkinlab", description="Dynkin game numerical laboratory")
    p.add_argument("--output-dir", default=None, help=f"artifact directory (default ${OUTPUT_ENV} or ./dynkinlab-out)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario config")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=None)
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("alpha", help="Shepp's root")
    a.add_argument("--tol", type=float, default=1e-10)
    a.set_defaults(func=cmd_alpha)

    t = sub.add_parser("tail", help="reflection tail P(sigma_{-x} > t)")
    t.add_argument("x", type=float)
    t.add_argument("t", type=float)
    t.set_defaults(func=cmd_tail)

    b = sub.add_parser("best-response", help="lattice best response to a discount curve")
    b.add_argument("curve")
    b.add_argument("reward")
    b.add_argument("--x", type=float, default=0.0)
    b.add_argument("--dt", type=float, default=1e-3)
    b.add_argument("--dx", type=float, default=0.01)
    b.add_argument("--T", type=float, default=None)
    b.set_defaults(func=cmd_best_response)

    v = sub.add_parser("verify", help="verify a candidate equilibrium")
    v.add_argument("rules")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("config-reference", help="print the config reference page")
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_config_reference)
    return p


def _error_json(exc: BaseException) -> str:
    if isinstance(exc, ConfigError):
        return json.dumps(exc.to_dict())
    return json.dumps({"error": type(exc).__name__, "message": str(exc)})


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DynkinLabError as exc:
        print(_error_json(exc), file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
