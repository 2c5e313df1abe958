"""``multiform`` command-line interface.

Exit codes: 0 all gated tolerances pass, 2 verification failure, 3 solver
failure (Newton or integration), 4 configuration error.  Data go to
``--out`` (or stdout); human-readable summaries go to stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import expr as ex
from .flows import IntegrationError, MultiTimeCurve, action, closure_check, flow_commutation, integrate_curve
from .io import format_records, load_bundle, trajectory_records, write_text
from .legendre import (
    ConvexityWarning,
    LegendreError,
    VelocityField,
    alpha_independence_check,
    convexity_margin,
    lagrangian_coefficients,
    on_shell_velocities,
    roundtrip_check,
    solve_momenta,
)
from .liegroup import ChartError, group_action, integrate_group_flow, mc_compatibility_check, moment_map_check
from .models import MODELS, ModelBundle, get_model
from .phase import PhasePoint, involutivity_matrix
from .pipelines import PIPELINES, run_pipeline

EXIT_OK, EXIT_VERIFY, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3, 4

DEFAULTS = {
    "tol": None,
    "steps": 1000,
    "seed": 42,
    "out": None,
    "format": "csv",
    "points": None,
    "sites": 3,
    "mass": 1.0,
    "a": 1.0,
    "max_iter": 50,
}


class ConfigError(Exception):
    pass


class VerificationFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--model", help="built-in model name or path to a definition file")
    g.add_argument("--sites", type=int, help="Toda lattice size")
    g.add_argument("--mass", type=float, help="conformal model mass")
    g.add_argument("--a", type=float, help="conformal model coupling")
    g.add_argument("--tol", type=float, help="gating tolerance")
    g.add_argument("--steps", type=int, help="RK4 steps per curve")
    g.add_argument("--seed", type=int, help="seed for sampled points (default 42)")
    g.add_argument("--points", type=int, help="number of sampled points")
    g.add_argument("--out", help="output file (default stdout)")
    g.add_argument("--format", choices=("csv", "json-lines"), help="output format")
    g.add_argument("--config", help="JSON file of option values")
    g.add_argument("--p", help="initial momenta, comma separated")
    g.add_argument("--q", help="initial positions, comma separated")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="multiform", description="Phase-space Lagrangian one-form toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pm = sub.add_parser("models", help="list or show built-in models", parents=[common])
    pm.add_argument("action", choices=("list", "show"))
    pm.add_argument("name", nargs="?")

    sub.add_parser("check-involutivity", help="bracket or moment-map residuals", parents=[common])

    pf = sub.add_parser("flow", help="integrate along a multi-time curve", parents=[common])
    pf.add_argument("--curve", help="nodes, e.g. '0,0;1,0;1,1' (entries may use pi)")
    pf.add_argument("--compare", help="second curve with the same endpoints")

    pc = sub.add_parser("closure", help="action and endpoint gaps between two curves", parents=[common])
    pc.add_argument("--curve")
    pc.add_argument("--compare")
    pc.add_argument("--end", help="staircase endpoint (default all ones)")
    pc.add_argument("--stairs", type=int, default=2)

    pk = sub.add_parser("commute", help="compare i-then-j with j-then-i flows", parents=[common])
    pk.add_argument("--i", type=int, default=1)
    pk.add_argument("--j", type=int, default=2)
    pk.add_argument("--ta", type=float, default=1.0, help="time along H_i")
    pk.add_argument("--tb", type=float, default=1.0, help="time along H_j")

    pl = sub.add_parser("legendre", help="inverse Legendre transform", parents=[common])
    pl.add_argument("--alpha", help="direction in multi-time, comma separated")
    pl.add_argument("--beta", type=float, help="shorthand for alpha = (1, beta)")
    pl.add_argument("--alpha2", help="second direction for the independence check")
    pl.add_argument("--qdot", help="velocities, one comma list per time separated by ';'")
    pl.add_argument("--max-iter", type=int, dest="max_iter")

    pg = sub.add_parser("group-flow", help="non-autonomous flow on a group chart", parents=[common])
    pg.add_argument("--curve", help="path in chart coordinates")

    sub.add_parser("mc-check", help="Maurer-Cartan compatibility of the chart", parents=[common])

    pr = sub.add_parser("report", help="summaries of pipelines or saved CSV files", parents=[common])
    pr.add_argument("--pipeline", choices=tuple(PIPELINES), action="append")
    pr.add_argument("inputs", nargs="*")
    return parser


# ---------------------------------------------------------------------------
# helpers


def _resolve(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    opts = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        opts.update({k.replace("-", "_"): v for k, v in cfg.items()})
    opts.update({k: v for k, v in vars(args).items() if v is not None})
    return opts


def _numbers(text: str) -> np.ndarray:
    try:
        return np.array([ex.evaluate(ex.parse(tok), {"pi": math.pi}) for tok in str(text).split(",") if tok.strip()])
    except ex.ExpressionError as exc:
        raise ConfigError(f"bad number list {text!r}: {exc}") from exc


def _curve(text: str) -> MultiTimeCurve:
    text = str(text).strip()
    if text.startswith("t="):
        text = text[2:]
    try:
        return MultiTimeCurve(np.array([_numbers(row) for row in text.split(";") if row.strip()]))
    except ValueError as exc:
        raise ConfigError(f"bad curve {text!r}: {exc}") from exc


def _bundle(opts: dict) -> ModelBundle:
    name = opts.get("model")
    if not name:
        raise ConfigError("--model is required")
    if name in MODELS:
        kwargs = {}
        if name == "toda":
            kwargs["m"] = int(opts["sites"])
        elif name == "conformal":
            kwargs = {"mass": float(opts["mass"]), "a": float(opts["a"])}
        try:
            return get_model(name, **kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if Path(name).is_file():
        try:
            return load_bundle(name, validate=False)
        except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"invalid model file {name}: {exc}") from exc
    raise ConfigError(f"unknown model {name!r}; built-ins: {', '.join(MODELS)}")


def _start_points(bundle: ModelBundle, opts: dict) -> list[PhasePoint]:
    m = bundle.system.m
    if opts.get("p") is not None or opts.get("q") is not None:
        if opts.get("p") is None or opts.get("q") is None:
            raise ConfigError("--p and --q must be given together")
        p, q = _numbers(opts["p"]), _numbers(opts["q"])
        if p.size != m or q.size != m:
            raise ConfigError(f"--p and --q need {m} entries")
        return [PhasePoint(p=p, q=q)]
    rng = np.random.default_rng(int(opts["seed"]))
    return bundle.sample_points(rng, int(opts["points"] or 1))


def _emit(records, opts: dict, header: dict) -> None:
    header = {"seed": opts["seed"], **header}
    write_text(format_records(records, opts["format"], header), opts.get("out"))


def _say(text: str) -> None:
    sys.stderr.write(text.rstrip("\n") + "\n")


def _gate(value: float, tol: float, what: str) -> None:
    status = "PASS" if value <= tol else "FAIL"
    _say(f"{status} {what}: {value:.3e} (tol {tol:.1e})")
    if value > tol:
        raise VerificationFailure(what)


# ---------------------------------------------------------------------------
# commands


def cmd_models(args, opts) -> int:
    if args.action == "list":
        lines = [f"{name}\t{get_model(name).description}" for name in MODELS]
        write_text("\n".join(lines) + "\n", opts.get("out"))
        return EXIT_OK
    if not args.name:
        raise ConfigError("models show needs a model name")
    bundle = _bundle({**opts, "model": args.name})
    write_text(json.dumps(bundle.to_dict(), indent=2) + "\n", opts.get("out"))
    return EXIT_OK


def cmd_check_involutivity(args, opts) -> int:
    bundle = _bundle(opts)
    opts["points"] = opts["points"] or 100
    tol = 1e-9 if opts["tol"] is None else float(opts["tol"])
    records = []
    for k, x in enumerate(_start_points(bundle, opts)):
        if bundle.algebra is not None:
            r = moment_map_check(bundle.system, bundle.algebra, x)
        else:
            r = float(np.max(np.abs(involutivity_matrix(bundle.system, x))))
        records.append({"point": k, "residual": r})
    worst = max(r["residual"] for r in records)
    kind = "moment map" if bundle.algebra is not None else "involutivity"
    _emit(records, opts, {"model": bundle.name, "check": kind})
    _gate(worst, tol, f"{bundle.name} {kind} residual")
    return EXIT_OK


def _trajectory(bundle: ModelBundle, curve: MultiTimeCurve, x0: PhasePoint, N: int):
    if bundle.chart is not None:
        traj = integrate_group_flow(bundle.system, bundle.algebra, bundle.chart, curve, x0, N)
        return traj, group_action(bundle.system, bundle.chart, traj)
    traj = integrate_curve(bundle.system, curve, x0, N)
    return traj, action(bundle.system, traj)


def _default_curve(bundle: ModelBundle) -> MultiTimeCurve:
    return MultiTimeCurve.straight(np.ones(bundle.system.n))


def cmd_flow(args, opts, group: bool = False) -> int:
    bundle = _bundle(opts)
    if group and bundle.chart is None:
        raise ConfigError(f"model {bundle.name} has no group chart")
    curve = _curve(opts["curve"]) if opts.get("curve") else _default_curve(bundle)
    if curve.n != bundle.system.n:
        raise ConfigError(f"curve has {curve.n} coordinates, model has n={bundle.system.n}")
    x0 = _start_points(bundle, {**opts, "points": 1})[0]
    N = int(opts["steps"])
    traj, S = _trajectory(bundle, curve, x0, N)
    records = trajectory_records(bundle.system, traj)
    _emit(records, opts, {"model": bundle.name, "curve": curve.format(), "steps": N, "action": repr(S)})
    _say(f"action {S!r}")
    _say(f"return gap {np.max(np.abs(traj.final.as_array() - x0.as_array())):.3e}")
    if "K" in traj.extras:
        K = traj.extras["K"]
        for i, name in enumerate(bundle.system.names):
            _say(f"K{i + 1} ({name}): start {K[0, i]:.6g} end {K[-1, i]:.6g}")
    if opts.get("compare"):
        other = _curve(opts["compare"])
        tb, Sb = _trajectory(bundle, other, x0, N)
        _say(f"compare {other.format()}: action gap {abs(S - Sb):.3e}, "
             f"endpoint gap {np.max(np.abs(traj.final.as_array() - tb.final.as_array())):.3e}")
    return EXIT_OK


def cmd_closure(args, opts) -> int:
    bundle = _bundle(opts)
    n = bundle.system.n
    tol = 1e-6 if opts["tol"] is None else float(opts["tol"])
    if opts.get("curve"):
        if not opts.get("compare"):
            raise ConfigError("--curve needs --compare")
        A, B = _curve(opts["curve"]), _curve(opts["compare"])
    else:
        end = _numbers(opts["end"]) if opts.get("end") else np.ones(n)
        A = MultiTimeCurve.staircase(end, list(range(n)), int(opts["stairs"]))
        B = MultiTimeCurve.staircase(end, list(range(n))[::-1], int(opts["stairs"]))
    if A.n != n or B.n != n:
        raise ConfigError("curve dimension does not match the model")
    if not (np.allclose(A.start, B.start) and np.allclose(A.end, B.end)):
        raise ConfigError("curves must share their endpoints")
    N = int(opts["steps"])
    records = []
    for k, x in enumerate(_start_points(bundle, opts)):
        if bundle.chart is None:
            rec = closure_check(bundle.system, x, A, B, N).to_record()
        else:
            ta, sa = _trajectory(bundle, A, x, N)
            tb, sb = _trajectory(bundle, B, x, N)
            rec = {"curveA": A.format(), "curveB": B.format(), "action_gap": abs(sa - sb),
                   "endpoint_gap": float(np.max(np.abs(ta.final.as_array() - tb.final.as_array()))), "N": N}
        records.append({"point": k, **rec})
    _emit(records, opts, {"model": bundle.name})
    _gate(max(r["action_gap"] for r in records), tol, "action gap")
    _gate(max(r["endpoint_gap"] for r in records), tol, "endpoint gap")
    return EXIT_OK


def cmd_commute(args, opts) -> int:
    bundle = _bundle(opts)
    tol = 1e-6 if opts["tol"] is None else float(opts["tol"])
    if not (1 <= args.i <= bundle.system.n and 1 <= args.j <= bundle.system.n):
        raise ConfigError(f"Hamiltonian indices must lie in 1..{bundle.system.n}")
    N = int(opts["steps"])
    records = [
        {"point": k, "i": args.i, "j": args.j, "gap": flow_commutation(bundle.system, args.i, args.j, args.ta, args.tb, x, N)}
        for k, x in enumerate(_start_points(bundle, opts))
    ]
    _emit(records, opts, {"model": bundle.name, "steps": N})
    _gate(max(r["gap"] for r in records), tol, f"flow commutation H{args.i}, H{args.j}")
    return EXIT_OK


def _alpha(opts: dict, n: int) -> np.ndarray:
    if opts.get("alpha") is not None:
        alpha = _numbers(opts["alpha"])
    else:
        alpha = np.zeros(n)
        alpha[0] = 1.0
        if n > 1:
            alpha[1] = float(opts.get("beta") or 0.0)
    if alpha.size != n:
        raise ConfigError(f"alpha needs {n} entries")
    if not np.any(alpha != 0):
        raise ConfigError("alpha must be non-zero")
    return alpha


def cmd_legendre(args, opts) -> int:
    bundle = _bundle(opts)
    sys_, m, n = bundle.system, bundle.system.m, bundle.system.n
    alpha = _alpha(opts, n)
    tol = 1e-10 if opts["tol"] is None else float(opts["tol"])
    maxiter = int(opts["max_iter"])
    records = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvexityWarning)
        if opts.get("qdot") is not None:
            if opts.get("q") is None:
                raise ConfigError("--qdot needs --q")
            rows = [_numbers(r) for r in str(opts["qdot"]).split(";") if r.strip()]
            q = _numbers(opts["q"])
            if len(rows) != n or any(r.size != m for r in rows) or q.size != m:
                raise ConfigError(f"--qdot needs {n} lists of {m} velocities and --q {m} entries")
            vf = VelocityField(q=q, qdot=np.array(rows).T)
            p, info = solve_momenta(sys_, alpha, vf, maxiter=maxiter, full_output=True)
            L = lagrangian_coefficients(sys_, alpha, vf, p_guess=p, maxiter=maxiter)
            convexity_margin(sys_, alpha, PhasePoint(p=p, q=q))
            rec = {f"alpha{i + 1}": float(a) for i, a in enumerate(alpha)}
            rec.update({f"q{mu + 1}": float(v) for mu, v in enumerate(q)})
            rec.update({f"qdot{i + 1}_{mu + 1}": float(rows[i][mu]) for i in range(n) for mu in range(m)})
            rec.update({f"p{mu + 1}": float(v) for mu, v in enumerate(p)})
            rec.update({f"L{i + 1}": float(v) for i, v in enumerate(L)})
            rec.update({"iterations": info.iterations, "final_residual": info.residual,
                        "convexity_margin": info.convexity_margin})
            records.append(rec)
        else:
            alpha2 = _numbers(opts["alpha2"]) if opts.get("alpha2") else None
            for k, x in enumerate(_start_points(bundle, opts)):
                vf = on_shell_velocities(sys_, x)
                p, info = solve_momenta(sys_, alpha, vf, p_guess=x.p, maxiter=maxiter, full_output=True)
                L = lagrangian_coefficients(sys_, alpha, vf, p_guess=x.p, maxiter=maxiter)
                convexity_margin(sys_, alpha, x)
                rec = {"point": k}
                rec.update({f"p{mu + 1}": float(v) for mu, v in enumerate(p)})
                rec.update({f"L{i + 1}": float(v) for i, v in enumerate(L)})
                rec.update({"iterations": info.iterations, "convexity_margin": info.convexity_margin})
                rec["momentum_gap"] = float(np.max(np.abs(p - x.p)))
                if alpha2 is not None:
                    rec["alpha_gap"] = alpha_independence_check(sys_, alpha, alpha2, x)
                dp, dH = roundtrip_check(sys_, alpha, x)
                rec.update({"roundtrip_p_gap": dp, "roundtrip_H_gap": dH})
                records.append(rec)
    for w in caught:
        _say(f"warning: {w.message}")
    _emit(records, opts, {"model": bundle.name, "alpha": ",".join(repr(float(a)) for a in alpha)})
    if records and "momentum_gap" in records[0]:
        _gate(max(r["momentum_gap"] for r in records), tol, "on-shell momentum recovery")
        if "alpha_gap" in records[0]:
            _gate(max(r["alpha_gap"] for r in records), tol, "alpha independence")
        _gate(max(r["roundtrip_H_gap"] for r in records), max(tol, 1e-6), "round-trip H recovery")
    else:
        _say("momenta " + " ".join(f"{k}={v!r}" for k, v in records[0].items() if k[0] == "p"))
    return EXIT_OK


def cmd_mc_check(args, opts) -> int:
    bundle = _bundle(opts)
    if bundle.chart is None:
        raise ConfigError(f"model {bundle.name} has no group chart")
    tol = 1e-7 if opts["tol"] is None else float(opts["tol"])
    rng = np.random.default_rng(int(opts["seed"]))
    count = int(opts["points"] or 10)
    records = []
    for k in range(count):
        tau = rng.uniform(-1, 1, bundle.chart.n)
        rec = {"point": k}
        rec.update({f"tau{i + 1}": float(v) for i, v in enumerate(tau)})
        rec["residual"] = mc_compatibility_check(bundle.chart, tau)
        records.append(rec)
    _emit(records, opts, {"model": bundle.name})
    _gate(max(r["residual"] for r in records), tol, "Maurer-Cartan compatibility")
    return EXIT_OK


def _summarise_csv(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(lines))
    if not rows:
        return f"[{path}]\nrows 0\n"
    head, body = rows[0], rows[1:]
    out = [f"[{path}]", f"rows {len(body)}"]
    for j, name in enumerate(head):
        try:
            col = np.array([float(r[j]) for r in body])
        except (ValueError, IndexError):
            continue
        if col.size:
            out.append(f"{name}: min {col.min()!r} max {col.max()!r} last {col[-1]!r}")
    return "\n".join(out) + "\n"


def cmd_report(args, opts) -> int:
    parts = []
    ok = True
    for name in args.pipeline or ():
        res = run_pipeline(name, seed=int(opts["seed"]))
        parts.append(res.summary())
        ok = ok and res.passed
    for path in args.inputs:
        parts.append(_summarise_csv(path))
    write_text("".join(parts), opts.get("out"))
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {
    "models": cmd_models,
    "check-involutivity": cmd_check_involutivity,
    "flow": cmd_flow,
    "closure": cmd_closure,
    "commute": cmd_commute,
    "legendre": cmd_legendre,
    "group-flow": lambda a, o: cmd_flow(a, o, group=True),
    "mc-check": cmd_mc_check,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = _resolve(args)
        return COMMANDS[args.command](args, opts)
    except VerificationFailure:
        return EXIT_VERIFY
    except (LegendreError, IntegrationError) as exc:
        _say(f"solver failure: {exc}")
        return EXIT_SOLVER
    except (ConfigError, ChartError, OSError) as exc:
        _say(f"error: {exc}")
        return EXIT_CONFIG
    except ValueError as exc:
        _say(f"error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
