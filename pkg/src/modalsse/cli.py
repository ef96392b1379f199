"""Command line interface: ``modalsse {simulate,ensemble,verify,bell}``.

Exit codes: 0 success, 1 usage or configuration error, 2 physics-validity
failure (norm drift, truncation, node rate), 3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__
from . import config as cfgmod
from .bell import Decomposition, simulate_jump_process
from .conditioning import NodeEncountered
from .dynamics import integrate_trajectory
from .ensemble import EnsembleConfig, run_ensemble
from .linalg import SectorViolation
from .model import DenseHamiltonian, PairingError
from .propagator import OffLatticeError, PropagationError, evolve, evolve_model

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PHYSICS = 2
EXIT_VERIFY = 3

log = logging.getLogger("modalsse")


class CliError(Exception):
    def __init__(self, code, lines):
        self.code = code
        self.lines = [lines] if isinstance(lines, str) else list(lines)
        super().__init__("; ".join(self.lines))


def _fmt(x):
    # repr of a Python float is the shortest string that round-trips
    return repr(float(x))


def _load(path, kind):
    try:
        return cfgmod.load(path, kind)
    except ValidationError as e:
        raise CliError(EXIT_CONFIG, cfgmod.format_errors(e)) from None
    except OSError as e:
        raise CliError(EXIT_CONFIG, f"cannot read {path}: {e.strerror}") from None


def _build(cfg):
    try:
        model = cfg.universe_model()
        integ = cfg.integrator.to_config()
        integ.validate_for(model.bath.detunings)
    except (ValueError, PairingError) as e:
        raise CliError(EXIT_CONFIG, str(e)) from None
    try:
        grid = evolve_model(model, integ)
    except PropagationError as e:
        raise CliError(EXIT_PHYSICS, str(e)) from None
    return model, grid


def _write_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def trajectory_csv(traj, system, observables):
    """CSV text for one trajectory; columns t, z_re, z_im, q_1..q_D, L_re, L_im, observables."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(observables)
    w.writerow(["t", "z_re", "z_im", *traj.coord_names, "L_re", "L_im", *names])
    ops = [np.asarray(observables[n]) for n in names]
    for j, t in enumerate(traj.times):
        ket = traj.kets[j]
        vals = [float(np.vdot(ket, op @ ket).real) for op in ops]
        row = [t, traj.z[j].real, traj.z[j].imag, *traj.coords[j], traj.lexp[j].real,
               traj.lexp[j].imag, *vals]
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def read_trajectory_csv(path):
    """Header and float rows of a trajectory file."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(x) for x in r] for r in rows[1:]])


def cmd_simulate(args):
    cfg = _load(args.config, cfgmod.RunConfig)
    model, grid = _build(cfg)
    seeds = args.seed or ([cfg.ensemble.master_seed] if cfg.ensemble else [0])
    out = args.out or cfg.outputs.trajectory or "trajectory.csv"
    status = EXIT_OK
    for seed in seeds:
        try:
            traj = integrate_trajectory(grid, cfg.unraveling, seed, args.index,
                                        allow_zero_mode=cfg.allow_zero_mode)
        except (PairingError, SectorViolation) as e:
            raise CliError(EXIT_CONFIG, str(e)) from None
        path = out if len(seeds) == 1 else _seeded_path(out, seed)
        _write_atomic(path, trajectory_csv(traj, model.system, cfg.observable_ops()))
        if traj.status != "completed":
            log.error("seed %d: node encountered at t=%s", seed, traj.failure_time)
            status = EXIT_PHYSICS
    return status


def _seeded_path(out, seed):
    p = Path(out)
    return str(p.with_name(f"{p.stem}_seed{seed}{p.suffix}"))


def _pairs(m):
    return cfgmod.from_complex(m)


def ensemble_tree(cfg, result):
    cps = []
    for c in result.checkpoints:
        moments = {}
        for i, name in enumerate(result.coord_names):
            moments[name] = {
                "mean": float(c.coord_mean[i]), "mean_se": float(c.coord_mean_se[i]),
                "var": float(c.coord_var[i]), "var_se": float(c.coord_var_se[i]),
                "exact_mean": float(c.exact_mean[i]), "exact_var": float(c.exact_var[i]),
            }
        cps.append({
            "t": c.time,
            "rho": _pairs(c.rho),
            "rho_se": _pairs(c.rho_se),
            "rho_exact": _pairs(c.rho_exact),
            "trace_distance": c.trace_distance,
            "hidden_moments": moments,
            "observables": {k: {"estimate": v[0], "exact": v[1]} for k, v in c.observables.items()},
        })
    echo = json.loads(cfgmod.dump(cfg))
    # the worker count never changes results; keep it out of the echo so files compare equal
    echo.get("ensemble", {}).pop("workers", None)
    return {
        "code_version": __version__,
        "status": result.status,
        "unraveling": result.unraveling,
        "n_traj": result.n_traj,
        "n_completed": result.n_completed,
        "failures": result.failures,
        "trace_distance": [c.trace_distance for c in result.checkpoints],
        "checkpoints": cps,
        "config": echo,
    }


def cmd_ensemble(args):
    cfg = _load(args.config, cfgmod.RunConfig)
    if cfg.ensemble is None:
        raise CliError(EXIT_CONFIG, "ensemble: section required for this command")
    model, grid = _build(cfg)
    e = cfg.ensemble
    try:
        ecfg = EnsembleConfig(e.n_traj, e.master_seed, tuple(e.checkpoints),
                              workers=args.workers or e.workers,
                              observables=cfg.observable_ops(), allow_zero_mode=cfg.allow_zero_mode)
        result = run_ensemble(model, cfg.unraveling, ecfg, grid=grid)
    except (ValueError, OffLatticeError, PairingError) as err:
        raise CliError(EXIT_CONFIG, str(err)) from None
    out = args.out or cfg.outputs.ensemble or "ensemble.json"
    _write_atomic(out, cfgmod.canonical_json(ensemble_tree(cfg, result)))
    if result.status != "PASS":
        log.error("node failure rate %.4f exceeds 0.005", result.failure_rate)
        return EXIT_PHYSICS
    return EXIT_OK


def cmd_verify(args):
    from .verify import run_suite

    corrupt = args.corrupt_velocity_sign or bool(os.environ.get("MODALSSE_CORRUPT_VELOCITY_SIGN"))
    checks = run_suite(args.suite, corrupt_velocity_sign=corrupt, workers=args.workers)
    report = {
        "suite": args.suite,
        "code_version": __version__,
        "passed": all(c.passed for c in checks),
        "checks": [c.as_dict() for c in checks],
    }
    text = cfgmod.canonical_json(report)
    if args.report:
        _write_atomic(args.report, text)
    else:
        sys.stdout.write(text)
    for c in checks:
        log.info("%s %s value=%.4g threshold=%.4g", "PASS" if c.passed else "FAIL", c.name,
                 c.value, c.threshold)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_bell(args):
    cfg = _load(args.config, cfgmod.BellConfig)
    try:
        H = DenseHamiltonian(cfgmod.to_complex(cfg.hamiltonian))
        psi0 = cfgmod.to_complex(cfg.initial_state)
        dim = psi0.shape[0]
        if cfg.projectors is None:
            dec = Decomposition.computational(dim)
        else:
            dec = Decomposition(tuple(cfgmod.to_complex(p) for p in cfg.projectors))
        grid = evolve(psi0, H, cfg.integrator.to_config())
        idx = [grid.index_of(t) for t in cfg.checkpoints]
    except PropagationError as e:
        raise CliError(EXIT_PHYSICS, str(e)) from None
    except ValueError as e:
        raise CliError(EXIT_CONFIG, str(e)) from None
    try:
        paths = simulate_jump_process(grid, dec, H, cfg.seed, n_runs=cfg.n_runs)
    except (ArithmeticError, ValueError) as e:
        raise CliError(EXIT_PHYSICS, str(e)) from None
    freq = paths.frequencies()
    rows = []
    for j in idx:
        se = np.sqrt(np.maximum(paths.exact[j] * (1 - paths.exact[j]), 0.0) / cfg.n_runs)
        rows.append({"t": float(grid.times[j]), "empirical": freq[j].tolist(),
                     "exact": paths.exact[j].tolist(), "binomial_se": se.tolist()})
    tree = {"code_version": __version__, "n_runs": cfg.n_runs, "seed": cfg.seed,
            "max_deviation": max(float(np.max(np.abs(np.array(r["empirical"]) - r["exact"])))
                                 for r in rows),
            "checkpoints": rows, "config": json.loads(cfgmod.dump(cfg))}
    _write_atomic(args.out or cfg.output or "bell.json", cfgmod.canonical_json(tree))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="modalsse", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="integrate single trajectories to CSV")
    s.add_argument("config")
    s.add_argument("--seed", type=int, action="append", help="master seed (repeatable)")
    s.add_argument("--index", type=int, default=0, help="trajectory index within the seed")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("ensemble", help="reconstruct the reduced state from an ensemble")
    e.add_argument("config")
    e.add_argument("--workers", type=int)
    e.add_argument("--out")
    e.set_defaults(func=cmd_ensemble)

    v = sub.add_parser("verify", help="run an invariant battery")
    v.add_argument("suite", choices=["quick", "acceptance"])
    v.add_argument("--report")
    v.add_argument("--workers", type=int, default=1)
    v.add_argument("--corrupt-velocity-sign", action="store_true", help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bell", help="jump-process occupation statistics")
    b.add_argument("config")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bell)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as e:
        for line in e.lines:
            print(f"error: {line}", file=sys.stderr)
        return e.code
    except NodeEncountered as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PHYSICS


if __name__ == "__main__":
    sys.exit(main())
