"""Command line entry point: flatbenard <subcommand> [options]."""
import argparse
import csv
import json
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigError, GeometryDegenerate, SolverDiverged

EXIT_CONFIG, EXIT_SOLVER, EXIT_GEOMETRY = 2, 3, 4


def _load_config(args):
    from .driver import PicardConfig

    d = {}
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from e
        d = PicardConfig.from_json(text).to_dict()
    if args.preset:
        d["preset"] = args.preset
    for key in ("seed", "threads", "T", "dt", "max_sweeps", "min_sweeps"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    return PicardConfig.from_dict(d)


def _out_dir(args):
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    return args.out


def _emit(obj, args, name=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=float)
    print(text)
    out = _out_dir(args)
    if out and name:
        with open(os.path.join(out, name), "w") as fh:
            fh.write(text + "\n")


def _write_csv(rows, header, fh):
    w = csv.writer(fh)
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def cmd_check(args):
    from . import verification as V

    geo = V.geometry_identities(n_samples=args.samples, seed=args.seed or 0)
    ops = V.operator_identity_orders()
    checks = {f"geometry_{k}": v <= 1e-12 for k, v in geo["residuals"].items()}
    checks.update({f"order_{k}": v >= 1.9 for k, v in ops["orders"].items()})
    res = {"passed": all(checks.values()), "checks": checks, "geometry": geo, "operators": ops}
    _emit(res, args, "check.json")
    return 0 if res["passed"] else 1


def cmd_elliptic(args):
    from . import verification as V
    import sympy as sp

    amp = sp.Rational(args.amplitude).limit_denominator(1000)
    res = V.elliptic_orders(amp=amp)
    keys = [k for k in res["rows"][0] if k != "min_J"]
    out = _out_dir(args)
    fh = open(os.path.join(out, "elliptic.csv"), "w", newline="") if out else sys.stdout
    _write_csv([[r[k] for k in keys] for r in res["rows"]] + [["order"] + [res["orders"][k] for k in keys[1:]]],
               keys, fh)
    if out:
        fh.close()
    return 0


def cmd_evolve(args):
    from .evolution import EvolutionState, energy_ledger, run_linear
    from .geometry import Grid, flat_pack, geometry_pack

    g = Grid(8, 4, 16)
    X1, _, X3 = g.mesh()
    shape = np.cos(2 * np.pi * g.surface_mesh()[0])
    th0 = -(1 + X3) / 2 + args.amplitude * np.sin(np.pi * (1 + X3)) * np.cos(2 * np.pi * X1)

    def pack_fn(t):
        if not args.moving:
            return flat_pack(g, with_time=True)
        return geometry_pack(0.5 * t * shape, g, epsilon=0.5, jac_floor=0.1, eta_t=0.5 * shape)

    def forcing(t, pk):
        return {"F5": -pk.Nmag}

    dt, T = args.dt or 1e-3, args.T or 0.1
    if not 0 < dt < T:
        raise ConfigError("need 0 < dt < T")
    pk0 = pack_fn(0.0)
    z = EvolutionState.zeros(pk0)
    traj = run_linear(EvolutionState(0.0, z.u, z.p, th0, pk0), dt, int(round(T / dt)), forcing_fn=forcing,
                      pack_fn=pack_fn)
    led = energy_ledger(traj, forcing)
    s = led["series"]
    cols = ["t", "kinetic", "thermal", "lhs_u", "rhs_u", "lhs_theta", "rhs_theta"]
    out = _out_dir(args)
    fh = open(os.path.join(out, "series.csv"), "w", newline="") if out else sys.stdout
    _write_csv(zip(*[s[c] for c in cols]), cols, fh)
    if out:
        fh.close()
    print(json.dumps({k: v for k, v in led.items() if k != "series"}, sort_keys=True), file=sys.stderr)
    return 0


def cmd_transport(args):
    from . import verification as V

    res = V.transport_checks()
    res["passed"] = bool(res["time_order"] >= 1.0 and res["spatial_refinement_change"] < 1e-6
                         and res["mean_drift_per_time"] < 1e-10)
    _emit(res, args, "transport.json")
    return 0 if res["passed"] else 1


def cmd_init_data(args):
    from .data_compat import build_initial_data
    from .driver import initial_fields

    cfg = _load_config(args)
    u0, theta0, eta0 = initial_fields(cfg)
    data = build_initial_data(u0, theta0, eta0, N_levels=2, epsilon=cfg.epsilon, jac_floor=0.5 * cfg.jac_floor)
    res = {"compatibility": [data.compatibility(j, parts=True) for j in range(2)],
           "max_u_t": [float(np.abs(x).max()) for x in data.u[1:]],
           "max_theta_t": [float(np.abs(x).max()) for x in data.theta[1:]],
           "max_eta_t": [float(np.abs(e.values).max()) for e in data.eta[1:]],
           "max_p": [float(np.abs(x).max()) for x in data.p]}
    _emit(res, args, "init_data.json")
    return 0


def cmd_picard(args):
    from .driver import Checkpoint, run_picard, sweep_diagnostics

    cfg = _load_config(args)
    out = _out_dir(args)
    rec_fh = open(os.path.join(out, "records.jsonl"), "w") if out else None
    if out:
        with open(os.path.join(out, "config.json"), "w") as fh:
            json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)

    def on_record(r):
        line = r.to_json()
        print(line, flush=True)
        if rec_fh:
            rec_fh.write(line + "\n")
            rec_fh.flush()

    try:
        _, last = run_picard(cfg, on_record)
    finally:
        if rec_fh:
            rec_fh.close()
    if out:
        Checkpoint.from_sweep(last, cfg.to_dict()).save(os.path.join(out, "state.ckpt"))
        diag = sweep_diagnostics(last, cfg)
        s = diag["series"]
        with open(os.path.join(out, "series.csv"), "w", newline="") as fh:
            cols = ["t", "kinetic", "thermal", "dissipation_u", "dissipation_theta"]
            _write_csv(zip(*[s[c] for c in cols]), cols, fh)
    return 0


def cmd_report(args):
    from .driver import Checkpoint, PicardConfig, sweep_diagnostics

    path = args.checkpoint or (os.path.join(args.out, "state.ckpt") if args.out else None)
    if not path or not os.path.exists(path):
        raise ConfigError("report needs --checkpoint PATH (or --out DIR holding state.ckpt)")
    try:
        ck = Checkpoint.load(path)
    except (ValueError, KeyError) as e:
        raise ConfigError(f"unreadable checkpoint: {e}") from e
    cfg = PicardConfig.from_dict(ck.header.get("config") or {"T": ck.header["times"][-1],
                                                             "dt": ck.header["times"][1]})
    diag = sweep_diagnostics(ck.to_sweep(), cfg)
    diag.pop("series")
    print(json.dumps(diag, sort_keys=True))
    return 0


COMMANDS = {"check": cmd_check, "elliptic": cmd_elliptic, "evolve": cmd_evolve, "transport": cmd_transport,
            "init-data": cmd_init_data, "picard": cmd_picard, "report": cmd_report}


def build_parser():
    p = argparse.ArgumentParser(prog="flatbenard")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--preset", help="equilibrium | perturbed-equilibrium | zero")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--max-sweeps", dest="max_sweeps", type=int, default=None)
    p.add_argument("--min-sweeps", dest="min_sweeps", type=int, default=None)
    p.add_argument("--samples", type=int, default=20, help="random surfaces for check")
    p.add_argument("--amplitude", type=float, default=0.1)
    p.add_argument("--moving", action="store_true", help="evolve on a prescribed moving surface")
    p.add_argument("--checkpoint", help="checkpoint for report")
    return p


def run_cli(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else 0
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("threads must be >= 1")
        with threadpool_limits(limits=args.threads or 1):
            return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except GeometryDegenerate as e:
        print(f"geometry degenerate: {e}", file=sys.stderr)
        return EXIT_GEOMETRY
    except SolverDiverged as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER


def main():
    sys.exit(run_cli())
