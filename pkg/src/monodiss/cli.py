"""Batch command line: simulate, elliptic, exponents, verify, attractor, sweep.

Exit codes: 0 PASS / success, 1 verdict FAIL, 2 invalid configuration,
3 solver failure.  Flags fall back to ``MONODISS_<FLAG>`` environment
variables (e.g. ``MONODISS_SEED``) and then to built-in defaults.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ConstructionError, DimensionError, RefusalError, SolverError

ENV_PREFIX = "MONODISS_"


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _finite(obj):
    # JSON has no inf/nan; write them as strings
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def dumps(obj):
    plain = json.loads(json.dumps(obj, default=_jsonable))
    return json.dumps(_finite(plain), sort_keys=True, indent=2) + "\n"


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _csv(header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ commands


def _load_config(args):
    from .config import ExperimentConfig

    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        data = cfg.to_dict()
        data["seed"] = args.seed
        cfg = ExperimentConfig.from_dict(data)
    return cfg


def _simulate_one(payload):
    from .config import ExperimentConfig
    from .diagnostics import energy_report
    from .evolution import evolve

    data, index = payload
    cfg = ExperimentConfig.from_dict(data)
    evo = cfg.build_evolution()
    u0 = cfg.build_field("u0", index)
    traj = evolve(evo, u0, cfg.T, cfg.build_schedule())
    rep = energy_report(traj, evo.spec, cfg.r)
    return {
        "energy_csv": rep.to_csv(),
        "final": traj.final.to_dict(),
        "steps": traj.steps,
        "final_l2": float(np.sqrt(rep["l2_sq"][-1])),
    }


def _pool_map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def cmd_simulate(args, cfg, out):
    if cfg.needs_seed() and cfg.seed is None:
        raise ConfigurationError("seed", "--seed is required for random initial data or forcing")
    data = cfg.to_dict()
    results = _pool_map(_simulate_one, [(data, i) for i in range(cfg.n_traj)], args.workers)
    summary = {"config": data, "trajectories": []}
    for i, res in enumerate(results):
        d = out / f"traj_{i:03d}"
        _write(d / "energy.csv", res["energy_csv"])
        _write(d / "final_state.json", dumps({"config": data, "state": res["final"]}))
        summary["trajectories"].append({"index": i, "steps": res["steps"], "final_l2": res["final_l2"]})
    _write(out / "summary.json", dumps(summary))
    print(dumps(summary["trajectories"]), end="")
    return 0


def cmd_elliptic(args, cfg, out):
    from .elliptic import EllipticProblem, regularity_report, solve

    grid = cfg.build_grid()
    f = cfg.build_nonlinearity()
    e = cfg.elliptic
    if cfg.g.get("profile") == "random" and cfg.seed is None:
        raise ConfigurationError("seed", "--seed is required for random right-hand sides")
    rows = []
    for i in range(int(e.get("n_rhs", 1))):
        g = cfg.build_field("g", i)
        problem = EllipticProblem(np.asarray(cfg.a), f, float(e.get("shift", 0.0)), g)
        u, hist = solve(problem, tol=float(e.get("tol", 1e-10)), return_history=True)
        rep = regularity_report(u, g, f, q=float(e.get("q", 2.2)), kappa=float(e.get("kappa", 1.0)))
        record = {"config": cfg.to_dict(), "index": i, "report": rep.to_dict(), "residual": hist[-1], "solution": u.to_dict()}
        _write(out / f"run_{i:03d}.json", dumps(record))
        rows.append(rep.to_dict() | {"index": i, "residual": hist[-1]})
    cols = ["index", "h2", "fl2", "g_l2", "ratio_2reg", "mixed", "grad_lr", "residual"]
    table = [[("" if r[c] is None else float(r[c])) for c in cols] for r in rows]
    _write(out / "aggregate.csv", _csv(cols, table))
    print(dumps({"runs": len(rows), "max_ratio_2reg": max(r["ratio_2reg"] for r in rows)}), end="")
    return 0


def cmd_exponents(args, cfg, out):
    from .exponents import exponent_table

    def frac(v):
        return None if v is None else Fraction(v)

    table = exponent_table(
        args.d, frac(args.alpha), p1=frac(args.p1), p=frac(args.p), q=frac(args.q), kappa=frac(args.kappa), r=frac(args.r)
    )
    text = dumps(table.to_dict())
    if out is not None:
        _write(out / "exponents.json", text)
    print(text, end="")
    print(table.to_text())
    return 0


def cmd_verify(args, cfg, out):
    from .presets import PRESETS, run_preset

    if args.seed is None:
        raise ConfigurationError("seed", "--seed is required for verify suites")
    names = args.preset.split(",") if args.preset else (cfg.suites or sorted(PRESETS))
    passed = True
    summary = {}
    for name in names:
        res = run_preset(name, seed=args.seed)
        res["seed"] = args.seed
        passed &= res["passed"]
        summary[name] = "PASS" if res["passed"] else "FAIL"
        if out is not None:
            _write(out / f"verify_{name}.json", dumps(res))
        print(dumps(res), end="")
    print(dumps({"summary": summary, "verdict": "PASS" if passed else "FAIL"}), end="")
    return 0 if passed else 1


def cmd_attractor(args, cfg, out):
    from . import attractor as att
    from .rng import random_field, stream

    if cfg.seed is None:
        raise ConfigurationError("seed", "--seed is required for attractor sampling")
    evo = cfg.build_evolution()
    p = cfg.attractor
    amp = float(cfg.u0.get("amplitude", 1.0))
    cloud = att.sample_cloud(evo, float(p["T0"]), cfg.n_traj, int(p["n_snap"]), float(p["spacing"]), cfg.seed, amplitude=amp)
    eps_range = p.get("eps_range")
    min_snap = min(200, len(cloud))
    dim = att.box_counting_dimension(cloud, tuple(eps_range) if eps_range else None, min_snapshots=min_snap)
    probes = [random_field(evo.grid, stream(cfg.seed, 10_000 + i), amplitude=amp) for i in range(int(p.get("n_probes", 4)))]
    try:
        rate = att.attraction_rate(evo, cloud, probes, float(p["T_rate"])).to_dict()
    except RefusalError as exc:
        rate = {"refused": str(exc)}
    _write(out / "cloud.json", cloud.to_json() + "\n")
    _write(out / "dimension.csv", dim.to_csv())
    result = {
        "config": cfg.to_dict(),
        "dimension": dim.dimension,
        "r2": dim.r2,
        "warnings": dim.warnings,
        "rate": rate,
        "snapshots": len(cloud),
    }
    _write(out / "summary.json", dumps(result))
    print(dumps({k: v for k, v in result.items() if k != "config"}), end="")
    return 0


def _sweep_point(payload):
    from .config import ExperimentConfig

    data, task, directory, workers = payload
    cfg = ExperimentConfig.from_dict(data)
    ns = argparse.Namespace(workers=1, seed=cfg.seed)
    out = Path(directory)
    _write(out / "config.json", cfg.to_json() + "\n")
    fn = {"simulate": cmd_simulate, "elliptic": cmd_elliptic, "attractor": cmd_attractor}[task]
    return fn(ns, cfg, out)


def cmd_sweep(args, cfg, out):
    from .config import expand_sweep

    if not cfg.sweep:
        raise ConfigurationError("sweep", "no parameter lists declared")
    points = expand_sweep(cfg)
    index = []
    payloads = []
    for i, (values, point) in enumerate(points):
        d = out / f"point_{i:03d}"
        index.append({"point": i, "values": values, "dir": d.name})
        payloads.append((point.to_dict(), args.task, str(d), 1))
    codes = _pool_map(_sweep_point, payloads, args.workers)
    _write(out / "sweep.json", dumps({"config": cfg.to_dict(), "points": index, "exit_codes": codes}))
    return max(codes) if codes else 0


# ------------------------------------------------------------------- parsing


def _env(name, cast=str):
    v = os.environ.get(ENV_PREFIX + name.upper())
    return None if v is None else cast(v)


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=_env("config"), help="experiment config (JSON)")
    common.add_argument("--seed", type=_u64, default=_env("seed", int), help="64-bit root seed")
    common.add_argument("--out", default=_env("out"), help="output directory")
    common.add_argument("--workers", type=int, default=_env("workers", int) or os.cpu_count() or 1)

    parser = argparse.ArgumentParser(prog="monodiss", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="integrate trajectories, write energy CSVs")
    sub.add_parser("elliptic", parents=[common], help="solve elliptic problems, write regularity reports")
    p = sub.add_parser("exponents", parents=[common], help="print the exponent table")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--alpha", default="1")
    for name in ("p1", "p", "q", "kappa", "r"):
        p.add_argument(f"--{name}", default=None)
    p = sub.add_parser("verify", parents=[common], help="run verification presets")
    p.add_argument("--preset", default=_env("preset"), help="comma-separated preset names (default: all)")
    sub.add_parser("attractor", parents=[common], help="sample an attractor cloud, fit dimension and rate")
    p = sub.add_parser("sweep", parents=[common], help="run a task over the config's parameter grid")
    p.add_argument("--task", choices=("simulate", "elliptic", "attractor"), default="simulate")
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "elliptic": cmd_elliptic,
    "exponents": cmd_exponents,
    "verify": cmd_verify,
    "attractor": cmd_attractor,
    "sweep": cmd_sweep,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = None if args.command == "exponents" else _load_config(args)
        needs_out = args.command in ("simulate", "elliptic", "attractor", "sweep")
        out = Path(args.out) if args.out else (Path("monodiss_out") if needs_out else None)
        return COMMANDS[args.command](args, cfg, out)
    except (ConfigurationError, DimensionError, RefusalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, ConstructionError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        history = getattr(exc, "history", None)
        if history:
            print(f"residual history: {history}", file=sys.stderr)
        return 3
    except (ValueError, ArithmeticError) as exc:
        # bad numeric flag values (e.g. --alpha x) reach here
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
