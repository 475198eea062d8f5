"""Command-line front end: ``weakcontact <command> --scenario <path>``.

Every command writes into one output directory with fixed file names and a
``manifest.json`` that can be passed back as ``--scenario``.  Exit codes:
0 success, 1 verification failure, 2 configuration error, 3 numerical
failure.  Errors are reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pydantic
import scipy

from . import __version__
from . import functionals as fn
from . import micro, models, pde, quasipotential as qp, thermo
from .config import Scenario, VerifySpec, dump_scenario, load_scenario
from .errors import (
    ConfigError, ConvergenceError, DomainError, PreconditionError, ResourceError, ShapeError,
    StabilityError, StructureError, UnboundedError,
)

COMMANDS = ("stationary", "evolve", "quasipotential", "work", "quasistatic", "micro", "verify")
EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class VerificationFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    return obj


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_plain(data), indent=2, sort_keys=True) + "\n")


def write_plot(out: Path, name: str, header, rows, using: str, title: str) -> None:
    """Whitespace-separated ``name.dat`` plus a gnuplot script ``name.gp`` that plots it."""
    with open(out / f"{name}.dat", "w") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in rows:
            if row is None:
                fh.write("\n")
            else:
                fh.write(" ".join(_fmt(v) for v in row) + "\n")
    (out / f"{name}.gp").write_text(
        f"set title '{title}'\nset xlabel '{header[0]}'\nset key off\n"
        f"plot '{name}.dat' using {using} with lines\npause -1\n"
    )


# ---------------------------------------------------------------------------
# scenario helpers


def _model(sc: Scenario):
    sc.need("model")
    return sc.model.build()


def _profile(sc: Scenario, model, grid):
    spec = sc.initial
    x = grid.nodes
    if spec.kind == "stationary":
        rho = pde.solve_stationary(model, grid, spec.drive.build(model), probe=False).rho
    elif spec.kind == "constant":
        rho = np.full(grid.n_nodes, spec.value)
    else:
        rho = np.asarray(spec.values, dtype=float)
        if rho.size != grid.n_nodes:
            raise ConfigError(f"initial profile has {rho.size} values, the grid has {grid.n_nodes} nodes")
    rho = rho + spec.amplitude * np.sin(spec.mode * np.pi * x)
    try:
        return model.check_density(rho)
    except DomainError as exc:
        raise ConfigError(f"initial profile: {exc}") from exc


def _schedule(sc: Scenario, model, delta: float = 1.0):
    if sc.protocol is not None:
        return sc.protocol.build(model, delta)
    sc.need("drive")
    return pde.ProtocolSchedule.constant(sc.drive.build(model))


@contextmanager
def _mapper(threads: int):
    if threads <= 1:
        yield map
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            yield pool.map


# ---------------------------------------------------------------------------
# commands


def cmd_stationary(sc: Scenario, out: Path, args) -> dict:
    sc.need("model", "grid", "drive")
    model, grid = _model(sc), sc.grid.build()
    drive = sc.drive.build(model)
    res = pde.solve_stationary(model, grid, drive, opts=sc.run.options())
    write_csv(out / "profile.csv", ["x", "rho"], zip(grid.nodes, res.rho))
    write_plot(out, "profile", ["x", "rho"], zip(grid.nodes, res.rho), "1:2", "stationary profile")
    J = fn.current_of(model, grid, res.rho, drive)
    report = {
        "residual": res.residual, "iterations": res.iterations, "method": res.method,
        "spectral_abscissa": res.spectral_abscissa, "attractor": res.is_attractor,
        "current_left": J.left, "current_right": J.right, "tol": sc.run.tol,
        "passed": res.residual <= sc.run.tol,
    }
    write_json(out / "report.json", report)
    if not report["passed"]:
        raise VerificationFailure(f"stationary residual {res.residual:.3g} exceeds {sc.run.tol:g}")
    return report


def _time_rows(traj):
    for k, t in enumerate(traj.times):
        for x, r in zip(traj.grid.nodes, traj.rho[k]):
            yield t, x, r


def cmd_evolve(sc: Scenario, out: Path, args) -> dict:
    sc.need("model", "grid", "initial")
    if sc.run.T is None:
        raise ConfigError("evolve needs run.T")
    model, grid = _model(sc), sc.grid.build()
    schedule = _schedule(sc, model)
    rho0 = _profile(sc, model, grid)
    traj = pde.evolve_hydro(model, grid, rho0, schedule, sc.run.T, sc.run.options())
    write_csv(out / "trajectory.csv", ["t", "x", "rho"], _time_rows(traj))
    ledger = thermo.work_exchanged(model, traj, schedule)
    series = {k: traj.ledger[k] for k in pde.LEDGER_KEYS}
    write_csv(out / "ledger_series.csv", ["t", *pde.LEDGER_KEYS],
              zip(traj.times, *(series[k] for k in pde.LEDGER_KEYS)))
    report = ledger.as_dict() | {"mass_final": traj.mass()[-1], "n_samples": traj.times.size}
    write_json(out / "ledger.json", report)
    rows = []
    for k in range(traj.times.size):
        rows.extend((traj.times[k], x, r) for x, r in zip(grid.nodes, traj.rho[k]))
        rows.append(None)
    write_plot(out, "trajectory", ["t", "x", "rho"], rows, "2:3", "density profiles")
    return report


def cmd_quasipotential(sc: Scenario, out: Path, args) -> dict:
    sc.need("model", "grid", "drive", "initial")
    model, grid = _model(sc), sc.grid.build()
    drive = sc.drive.build(model)
    opts = sc.run.options()
    rhobar = pde.solve_stationary(model, grid, drive, opts=opts, probe=False).rho
    gamma = _profile(sc, model, grid)
    ev = qp.V_line_integral(model, grid, gamma, drive, sc.run.n_path, sc.run.path, rhobar, opts)
    report = {"V": ev.V, "hj_residual": ev.hj_residual, "hj_residual_per_cell": ev.hj_residual_per_cell,
              "equilibrium": False, "n_path": sc.run.n_path, "path": sc.run.path}
    columns = [grid.nodes, gamma, rhobar, ev.dV]
    header = ["x", "rho", "rhobar", "dV"]
    if not drive.has_field and qp.is_equilibrium(model, grid, drive, rhobar):
        report["equilibrium"] = True
        report["V_closed_form"] = qp.V_closed_form(model, grid, gamma, rhobar)
    elif not drive.has_field and model.reversible:
        F = qp.dV_nonequilibrium(model, grid, gamma, drive, rhobar, opts=opts).F_aux
        columns.append(F)
        header.append("F")
    write_csv(out / "profile.csv", header, zip(*columns))
    write_plot(out, "profile", header, zip(*columns), "1:4", "dV")
    write_json(out / "report.json", report)
    return report


def cmd_work(sc: Scenario, out: Path, args) -> dict:
    sc.need("model", "grid", "initial")
    model, grid = _model(sc), sc.grid.build()
    schedule = _schedule(sc, model)
    rho0 = _profile(sc, model, grid)
    opts = sc.run.options()
    terminal = qp.StationaryCache(model, grid)(schedule.terminal)
    if sc.run.T is not None:
        mode = "fixed_horizon"
        ledger = thermo.renormalized_work(model, grid, schedule, rho0, sc.run.cadence, opts, sc.run.T) \
            if not schedule.terminal.has_field and model.reversible else \
            thermo.work_exchanged(model, pde.evolve_hydro(model, grid, rho0, schedule, sc.run.T, opts), schedule)
    elif qp.is_equilibrium(model, grid, schedule.terminal, terminal):
        mode = "excess"
        ledger = thermo.excess_work(model, grid, schedule, rho0, opts, ledger=True)
    else:
        mode = "renormalized"
        ledger = thermo.renormalized_work(model, grid, schedule, rho0, sc.run.cadence, opts)
    report = ledger.as_dict() | {"mode": mode, "W_ge_dF": ledger.clausius}
    write_json(out / "ledger.json", report)
    return report


def cmd_quasistatic(sc: Scenario, out: Path, args) -> dict:
    sc.need("model", "grid", "protocol")
    if not sc.protocol.deltas:
        raise ConfigError("quasistatic needs protocol.deltas")
    model, grid = _model(sc), sc.grid.build()
    base = _schedule(sc, model)
    with _mapper(args.threads) as map_fn:
        res = thermo.quasistatic_sweep(model, grid, base, sc.protocol.deltas, sc.run.options(), map_fn)
    monotone = [True] + [bool(b < a) for a, b in zip(res.values[:-1], res.values[1:])]
    write_csv(out / "sweep.csv", ["delta", "value", "monotone"], zip(res.deltas, res.values, monotone))
    write_plot(out, "sweep", ["delta", "value"], zip(res.deltas, res.values), "1:2", "excess work")
    report = {"renormalized": res.renormalized, "monotone": res.monotone,
              "ratios": res.ratios, "order": res.order if res.values.size > 1 else None}
    write_json(out / "report.json", report)
    return report


def _micro_config(sc: Scenario, model, seed: int) -> micro.MicroConfig:
    m = sc.micro
    return micro.MicroConfig(
        model, m.N, sc.drive.build(model), seed=seed, n_events=m.n_events, t_end=m.t_end,
        burn_in=m.burn_in, n_batches=m.n_batches, histogram=m.oracle, event_log=m.event_log,
    )


def cmd_micro(sc: Scenario, out: Path, args) -> dict:
    sc.need("model", "drive", "micro")
    model = _model(sc)
    configs = [_micro_config(sc, model, s) for s in sc.micro.seeds]
    with _mapper(args.threads) as map_fn:
        runs = list(map_fn(micro.simulate, configs))
    pooled = runs[0]
    for r in runs[1:]:
        pooled = pooled.merge(r)
    rows = list(zip(pooled.x, pooled.mean, pooled.stderr))
    write_csv(out / "profile.csv", ["x", "mean", "stderr"], rows)
    write_plot(out, "profile", ["x", "mean", "stderr"], rows, "1:2", "empirical profile")
    report = {
        "seeds": sc.micro.seeds, "n_events": [r.n_events for r in runs], "time": [r.time for r in runs],
        "currents": pooled.currents, "currents_stderr": pooled.currents_stderr,
    }
    if sc.micro.event_log:
        for seed, r in zip(sc.micro.seeds, runs):
            micro.write_event_log(out / f"events_{seed}.bin", r.event_log)
    if sc.micro.oracle:
        oracle = micro.exact_generator_oracle(configs[0])
        tv = [micro.total_variation(r.state_law, oracle.pi) for r in runs]
        report |= {"tv": tv, "tv_max": max(tv), "oracle_marginals": oracle.marginals,
                   "oracle_currents": oracle.currents, "oracle_residual": oracle.residual}
    write_json(out / "report.json", report)
    return report


# ---------------------------------------------------------------------------
# verification suite


def _identity_suite(tol):
    out = {}
    for name, model in (("SEP", models.SEP()), ("ZeroRange-linear", models.ZeroRange(rate="linear")),
                        ("ZeroRange-constant", models.ZeroRange(rate="constant")), ("KMP", models.KMP())):
        res = models.identity_residuals(model)
        worst = max(v for k, v in res.items() if k != "sign")
        out[name] = {"residuals": res, "passed": worst <= tol and res["sign"] < 0}
    return {"passed": all(v["passed"] for v in out.values()), "models": out}


def _sign_suite(kappa_sign, n_samples, tol):
    """Boundary convexity remainder is nonnegative and reservoirs pull toward their potential."""
    rng = np.random.default_rng(1)
    out = {}
    for name, model in (("SEP", models.SEP()), ("ZeroRange-linear", models.ZeroRange(rate="linear")),
                        ("KMP", models.KMP())):
        lam, rho, _ = models._sample(model, rng, n_samples)
        kappa = kappa_sign * rng.uniform(0.2, 5.0, n_samples)
        lo, hi = model.momentum_domain(lam, rho)
        p = np.clip(rng.uniform(-2.0, 2.0, n_samples), 0.9 * np.maximum(lo, -2.0), 0.9 * np.minimum(hi, 2.0))
        A = models.boundary_A(model, lam, rho, p, kappa)
        pull = (model.fprime(rho) - lam) * kappa * model.M_p0(lam, rho)
        out[name] = {"min_remainder": float(np.min(A)), "max_pull": float(np.max(pull)),
                     "passed": bool(np.min(A) >= -tol and np.max(pull) <= tol)}
    return {"passed": all(v["passed"] for v in out.values()), "kappa_sign": kappa_sign, "models": out}


def _orthogonality_suite():
    model = models.SEP()
    drive = fn.Drive(float(model.xi(0.3)), float(model.xi(0.7)), 1.0, 2.0, 0.0)
    res = []
    for n in (32, 64):
        grid = fn.Grid1D(n)
        rhobar = pde.solve_stationary(model, grid, drive, probe=False).rho
        rho = rhobar + 0.05 * np.sin(2 * np.pi * grid.nodes)
        ev = qp.dV_nonequilibrium(model, grid, rho, drive, rhobar)
        first, second = fn.orthogonality_residuals(model, grid, rho, drive, ev.dV, ev.F_aux)
        res.append(max(abs(first), abs(second)))
    ratio = res[0] / res[1]
    return {"residuals": res, "ratio": ratio, "passed": bool(res[1] < 1e-4 and ratio > 3.0)}


def _work_suite():
    model, grid = models.SEP(), fn.Grid1D(32)
    a = fn.Drive(float(model.xi(0.3)), float(model.xi(0.5)), 1.0, 1.0, 0.0)
    b = fn.Drive(float(model.xi(0.6)), float(model.xi(0.4)), 2.0, 0.5, 1.0)
    schedule = pde.ProtocolSchedule.ramp(a, b, 1.0)
    rho0 = pde.solve_stationary(model, grid, a, probe=False).rho
    traj = pde.evolve_hydro(model, grid, rho0, schedule, 2.0, pde.SolverOptions(dt=0.05))
    led = thermo.work_exchanged(model, traj, schedule)
    return {"W": led.W, "identity_residual": led.identity_residual,
            "passed": abs(led.identity_residual) <= 1e-6 * (abs(led.W) + 1)}


def _time_reversal_suite():
    model, grid = models.SEP(), fn.Grid1D(32)
    drive = fn.Drive(float(model.xi(0.3)), float(model.xi(0.7)), 1.0, 1.0, 0.0)
    rhobar = pde.solve_stationary(model, grid, drive, probe=False).rho
    rho = rhobar + 0.05 * np.sin(np.pi * grid.nodes)
    rate = fn.hydro_rhs(model, grid, rho, drive) * 0.3 + 0.01 * np.cos(np.pi * grid.nodes)
    err = qp.time_reversal_check(model, grid, rho, rate, drive)
    return {"residual": err, "passed": err <= 1e-8}


def _witness_suite():
    """For the window-dependent boundary the naive equilibrium relation must fail."""
    model = models.NonRevExclusion.example()
    rho, value = model.naive_equilibrium_violation()
    return {"rho": rho, "violation": value, "expected": "violation > 1e-3", "passed": abs(value) > 1e-3}


def cmd_verify(sc: Scenario | None, out: Path, args) -> dict:
    spec = (sc.verify if sc is not None else None) or VerifySpec()
    tol = args.verify_tol if args.verify_tol is not None else 1e-10
    suites = {
        "identities": _identity_suite(tol),
        "boundary_sign": _sign_suite(spec.kappa_sign, spec.n_samples, tol),
        "orthogonality": _orthogonality_suite(),
        "work_identity": _work_suite(),
        "time_reversal": _time_reversal_suite(),
        "nonreversible_witness": _witness_suite(),
    }
    report = {"passed": all(s["passed"] for s in suites.values()), "tol": tol,
              "summary": {k: "PASS" if s["passed"] else "FAIL" for k, s in suites.items()}, "suites": suites}
    write_json(out / "report.json", report)
    if not report["passed"]:
        failed = [k for k, s in suites.items() if not s["passed"]]
        raise VerificationFailure(f"failed suites: {', '.join(failed)}")
    return report


HANDLERS = {
    "stationary": cmd_stationary, "evolve": cmd_evolve, "quasipotential": cmd_quasipotential,
    "work": cmd_work, "quasistatic": cmd_quasistatic, "micro": cmd_micro, "verify": cmd_verify,
}


# ---------------------------------------------------------------------------
# entry point


def _manifest(command, sc: Scenario | None, args) -> dict:
    return {
        "command": command,
        "scenario": dump_scenario(sc if sc is not None else Scenario()),
        "versions": {"weakcontact": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__, "pydantic": pydantic.VERSION},
        "tolerances": {"run_tol": (sc.run.tol if sc is not None else None), "verify_tol": args.verify_tol,
                       "equilibrium": qp.EQUILIBRIUM_TOL, "relaxation": thermo.RELAX_TOL},
        "threads": args.threads,
    }


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weakcontact", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--scenario", help="scenario YAML/JSON file or a manifest.json from an earlier run")
    p.add_argument("--out", help="output directory (default: run.out, else ./out/<command>)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps and replicas")
    p.add_argument("--verify-tol", type=float, default=None, help="tolerance of the identity checks")
    return p


def _fail(code: int, exc: BaseException, out: Path | None) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(payload), file=sys.stderr)
    if out is not None and out.is_dir():
        write_json(out / "error.json", payload)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    out = None
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.scenario is None and args.command != "verify":
            raise ConfigError(f"{args.command} needs --scenario")
        sc = load_scenario(args.scenario) if args.scenario else None
        out = Path(args.out or (sc.run.out if sc is not None and sc.run.out else f"out/{args.command}"))
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "manifest.json", _manifest(args.command, sc, args))
        report = HANDLERS[args.command](sc, out, args)
    except VerificationFailure as exc:
        return _fail(EXIT_VERIFY, exc, out)
    except (ConfigError, pydantic.ValidationError, PreconditionError, DomainError, ShapeError,
            FileNotFoundError, IsADirectoryError) as exc:
        return _fail(EXIT_CONFIG, exc, out)
    except (ConvergenceError, StabilityError, UnboundedError, ResourceError, StructureError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERIC, exc, out)
    summary = {"command": args.command, "out": str(out)}
    if isinstance(report, dict) and "summary" in report:
        summary["summary"] = report["summary"]
    print(json.dumps(summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
