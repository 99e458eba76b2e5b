"""Command-line entry point: ``run``, ``verify`` and ``sweep``.

Exit codes: 0 success, 1 runtime failure, 2 configuration or input failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import io
from .config import InitialSection, dump_config, load_config
from .engine import run
from .exceptions import ConfigurationError, StageError
from .verify import (
    TestFunctionSpec,
    WeakResidualAccumulator,
    check_energy_inequality,
    delta_sweep,
    density_translation_mms,
    epsilon_sweep,
    moment_bound_check,
)

log = logging.getLogger("nsvlasov")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
CHECKS = ("energy", "weak-momentum", "weak-vlasov", "moments")

LEDGER_DOC = """ledger.csv columns (one row per step, row 0 is the initial state):
  step, t        step index and time
  E_fluid        integral of rho |u|^2
  E_part         integral over x and v of (1 + |v|^2) f
  D_visc         2 dt mu integral |grad u|^2 for the step
  D_drag         2 dt integral R rho f |u - v|^2 for the step
  defect         (E_fluid + E_part)^{n+1} + D_visc + D_drag - (E_fluid + E_part)^n
  M0f, M3f       particle number and third moment
  overflow_mass  particle mass that left the velocity box during the step
diagnostics.csv: density and particle mass, bounds, divergence, regularizer and substep counts per step
"""


def _setup_logging():
    level = os.environ.get("SIM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _error(msg):
    print(f"error: {msg}", file=sys.stderr)


def cmd_run(config_path, out_dir, seed=None) -> int:
    try:
        cfg, init = load_config(config_path)
        if seed is not None:
            cfg = cfg.replace(seed=seed)
        spec = init.spec(cfg)
        os.makedirs(out_dir, exist_ok=True)
    except ConfigurationError as exc:
        _error(f"{exc} [{exc.key}]" if exc.key else str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _error(f"cannot create output directory: {exc}")
        return EXIT_CONFIG
    with open(os.path.join(out_dir, "config.ini"), "w") as fh:
        fh.write(dump_config(cfg, init))
    t0 = time.perf_counter()
    try:
        traj = run(cfg, spec, raise_errors=False)
    except StageError as exc:  # the initial state failed to build
        _error(f"runtime failure in stage '{exc.stage}': {exc.cause}")
        return EXIT_RUNTIME
    io.write_trajectory(traj, out_dir)
    elapsed = time.perf_counter() - t0
    led = traj.ledger
    lines = [
        f"steps: {len(led) - 1}",
        f"final time: {traj.snapshots[-1].t!r}",
        f"worst cumulative energy defect: {max(led.cumulative_defect.max(), 0.0)!r}",
        f"wall time (s): {elapsed:.2f}",
        "",
        LEDGER_DOC,
    ]
    if traj.error is not None:
        lines.insert(0, f"FAILED in stage '{traj.error.stage}': {traj.error.cause}")
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write("\n".join(lines))
    if traj.error is not None:
        _error(f"runtime failure in stage '{traj.error.stage}': {traj.error.cause}")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_verify(traj_dir, checks=CHECKS, seed=0, n_functions=5) -> int:
    unknown = [c for c in checks if c not in CHECKS]
    if unknown:
        _error(f"unknown check(s) {', '.join(unknown)}; choose from {', '.join(CHECKS)}")
        return EXIT_CONFIG
    try:
        cfg, _ = load_config(os.path.join(traj_dir, "config.ini"))
        states = io.load_snapshots(traj_dir)
        ledger = io.read_ledger(os.path.join(traj_dir, "ledger.csv"))
    except ConfigurationError as exc:
        _error(str(exc))
        return EXIT_CONFIG
    if len(states) < 2 and any(c.startswith("weak") for c in checks):
        _error(f"weak residuals need at least two snapshots in {traj_dir}")
        return EXIT_CONFIG
    rows = []
    if "energy" in checks:
        e0 = ledger.energy[0]
        rep = check_energy_inequality(ledger, cfg.defect_tolerance(e0))
        rows.append({"check": "energy", "passed": rep.passed, "value": max(ledger.cumulative_defect.max(), 0.0), "message": rep.message})
    if any(c.startswith("weak") for c in checks):
        T = states[-1].t
        specs = [TestFunctionSpec.random(seed + i, T, cfg.vmax) for i in range(n_functions)]
        acc = WeakResidualAccumulator(specs, cfg.mu, cfg.epsilon, cfg.delta)
        for s in states:
            acc.add(s)
        for name, vals in (("weak-momentum", acc.momentum), ("weak-vlasov", acc.vlasov)):
            if name in checks:
                ok = bool(np.all(np.isfinite(vals)))
                rows.append({"check": name, "passed": ok, "value": float(np.abs(vals).max()), "message": f"{n_functions} test functions, {len(states)} snapshots"})
    if "moments" in checks:
        rep = moment_bound_check(states, 3)
        rows.append({"check": "moments", "passed": rep.passed, "value": max(r["ratio"] for r in rep.rows), "message": rep.message})
    for r in rows:
        r["value"] = float(r["value"])
    io.write_rows(os.path.join(traj_dir, "report.csv"), ("check", "passed", "value", "message"), rows)
    for r in rows:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['check']}: {r['message']}")
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_RUNTIME


def cmd_sweep(config_path, parameter, values, out_dir, jobs=1, seed=None) -> int:
    try:
        cfg, init = load_config(config_path)
        if seed is not None:
            cfg = cfg.replace(seed=seed)
        if parameter not in ("delta", "epsilon", "resolution"):
            raise ConfigurationError(f"unknown sweep parameter {parameter!r}", key="sweep.parameter")
        vals = [float(v) for v in values]
        os.makedirs(out_dir, exist_ok=True)
    except ConfigurationError as exc:
        _error(f"{exc} [{exc.key}]" if exc.key else str(exc))
        return EXIT_CONFIG
    except ValueError as exc:
        _error(f"bad sweep values: {exc}")
        return EXIT_CONFIG

    def make_spec(c, init=init):
        return InitialSection.spec(init, c)

    try:
        if parameter == "delta":
            rep = delta_sweep(cfg, make_spec, vals, jobs)
        elif parameter == "epsilon":
            rep = epsilon_sweep(cfg, make_spec, vals, jobs)
        else:
            rep = density_translation_mms(tuple(int(v) for v in vals))
    except ConfigurationError as exc:
        _error(f"{exc} [{exc.key}]" if exc.key else str(exc))
        return EXIT_CONFIG
    except StageError as exc:
        _error(f"runtime failure in stage '{exc.stage}': {exc.cause}")
        return EXIT_RUNTIME
    rep.write_csv(os.path.join(out_dir, "sweep.csv"))
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(rep.summary() + "\n")
    print(rep.summary())
    return EXIT_OK if rep.passed else EXIT_RUNTIME


def build_parser():
    p = argparse.ArgumentParser(prog="nsvlasov", description="Navier-Stokes-Vlasov simulator and verification harness")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a simulation")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int)
    v = sub.add_parser("verify", help="check a trajectory directory")
    v.add_argument("trajectory", nargs="?")
    v.add_argument("--out", help="trajectory directory (alternative to the positional argument)")
    v.add_argument("--checks", default=",".join(CHECKS))
    v.add_argument("--seed", type=int, default=0)
    s = sub.add_parser("sweep", help="parameter or resolution sweep")
    s.add_argument("--config", required=True)
    s.add_argument("--param", required=True, choices=["delta", "epsilon", "resolution"])
    s.add_argument("--values", required=True, help="comma-separated list")
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--seed", type=int)
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits with 2 on usage errors
        return int(exc.code or 0)
    if args.command == "run":
        return cmd_run(args.config, args.out, args.seed)
    if args.command == "verify":
        d = args.trajectory or args.out
        if not d:
            _error("verify needs a trajectory directory")
            return EXIT_CONFIG
        return cmd_verify(d, [c.strip() for c in args.checks.split(",") if c.strip()], args.seed)
    return cmd_sweep(args.config, args.param, args.values.split(","), args.out, args.jobs, args.seed)


if __name__ == "__main__":
    sys.exit(main())
