"""Work, dissipation and free-energy accounting along hydrodynamic trajectories."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate

from . import functionals as fn
from .errors import ConvergenceError, PreconditionError, ShapeError
from .functionals import Drive, Grid1D
from .models import Model
from .pde import ProtocolSchedule, SolverOptions, Trajectory, evolve_hydro
from .quasipotential import StationaryCache, dV_nonequilibrium, is_equilibrium

RELAX_TOL = 1e-8


@dataclass
class WorkLedger:
    W: float
    dF: float
    bulk_dissipation: float
    boundary_dissipation: float
    horizon: float
    tail: float = 0.0
    renorm_bulk: float | None = None
    renorm_boundary: float | None = None

    @property
    def excess(self) -> float:
        return self.W - self.dF

    @property
    def identity_residual(self) -> float:
        return self.W - self.dF - self.bulk_dissipation - self.boundary_dissipation

    @property
    def renormalized(self) -> float | None:
        if self.renorm_bulk is None:
            return None
        return self.dF + self.renorm_bulk + self.renorm_boundary

    @property
    def renormalized_excess(self) -> float | None:
        return None if self.renorm_bulk is None else self.renorm_bulk + self.renorm_boundary

    @property
    def clausius(self) -> bool:
        return self.W >= self.dF - 1e-12 * (1.0 + abs(self.W))

    def as_dict(self) -> dict:
        out = asdict(self)
        for key in ("excess", "identity_residual", "renormalized", "renormalized_excess", "clausius"):
            out[key] = getattr(self, key)
        return out


def _as_schedule(schedule) -> ProtocolSchedule:
    return ProtocolSchedule.constant(schedule) if isinstance(schedule, Drive) else schedule


def work_exchanged(model: Model, traj: Trajectory, schedule) -> WorkLedger:
    """Exchanged work and its decomposition over the whole trajectory.

    The running integrals are carried by the integrator; the free energy
    change comes from the end points.
    """
    schedule = _as_schedule(schedule)
    grid = traj.grid
    if traj.rho.shape != (traj.times.size, grid.n_nodes):
        raise ShapeError("trajectory samples do not match its grid")
    J0 = fn.current_of(model, grid, traj.rho[0], schedule(traj.times[0])).as_array()
    if not np.allclose(J0, traj.currents[0], rtol=1e-9, atol=1e-12):
        raise ShapeError("trajectory was not produced under this schedule")
    L = traj.ledger
    dF = fn.free_energy_functional(model, grid, traj.rho[-1]) - fn.free_energy_functional(model, grid, traj.rho[0])
    return WorkLedger(
        float(L["work"][-1]), dF, float(L["bulk_dissipation"][-1]), float(L["boundary_dissipation"][-1]),
        float(traj.times[-1] - traj.times[0]),
    )


def _decay_rate(times, dist) -> float:
    """Exponential rate of the late sup-distance decay by a log-linear fit."""
    keep = dist > 1e-13
    t, d = times[keep], dist[keep]
    half = t >= t[0] + 0.5 * (t[-1] - t[0])
    if half.sum() < 3:
        return np.inf
    slope = np.polyfit(t[half], np.log(d[half]), 1)[0]
    return -slope if slope < 0 else np.inf


def relax(model, grid, schedule, rho0, rhobar1, opts=None, tol=RELAX_TOL, max_time=2000.0):
    """Run the schedule, then hold the terminal drive until ``|u - rhobar1| <= tol``.

    Returns the trajectory and the measured late decay rate.
    """
    opts = opts or SolverOptions()
    traj = evolve_hydro(model, grid, rho0, schedule, max(schedule.end_time, opts.step(grid)), opts)
    chunk = 1.0
    while np.max(np.abs(traj.final - rhobar1)) > tol:
        if traj.times[-1] > max_time:
            raise ConvergenceError(f"no relaxation to {tol:g} within t={max_time:g}")
        more = evolve_hydro(model, grid, traj.final, schedule.terminal, chunk, opts, t0=traj.times[-1])
        traj = traj.extend(more)
        chunk = min(2 * chunk, 50.0)
    window = traj.times >= traj.times[-1] - min(5.0, 0.5 * traj.times[-1])
    mu = _decay_rate(traj.times[window], traj.sup_distance(rhobar1)[window])
    return traj, mu


def excess_work(model: Model, grid: Grid1D, schedule, rho0, opts=None, ledger: bool = False):
    """Work in excess of the free-energy change for a protocol ending in equilibrium.

    The dissipation is accumulated until the density is within ``1e-8`` of
    the terminal stationary profile; the remaining exponential tail is added
    as ``rate / (2 mu)``.  With ``ledger`` the full :class:`WorkLedger` is
    returned instead of the number.
    """
    schedule = _as_schedule(schedule)
    rhobar1 = StationaryCache(model, grid)(schedule.terminal)
    if not is_equilibrium(model, grid, schedule.terminal, rhobar1):
        raise PreconditionError("terminal drive is not an equilibrium state; use renormalized_work")
    traj, mu = relax(model, grid, schedule, rho0, rhobar1, opts)
    out = work_exchanged(model, traj, schedule)
    rate = (traj.ledger["bulk_dissipation"][-1] - traj.ledger["bulk_dissipation"][-2]
            + traj.ledger["boundary_dissipation"][-1] - traj.ledger["boundary_dissipation"][-2])
    rate /= traj.times[-1] - traj.times[-2]
    out.tail = float(rate / (2 * mu)) if np.isfinite(mu) else 0.0
    return out if ledger else out.bulk_dissipation + out.boundary_dissipation + out.tail


def renormalized_rates(model, grid, rho, drive, dV) -> tuple[float, float]:
    """Symmetric-current dissipation and boundary remainder at ``dV``."""
    sig = fn.face_mobility(model, rho)
    gd = grid.grad(dV)
    bulk = grid.h * float(np.sum(sig * gd**2))
    bd = 0.0
    for side, j in zip(fn.SIDES, (0, -1)):
        lam, p = drive.lam(side), dV[j]
        bd += drive.kappa(side) * float(model.M(lam, rho[j], p, side) - p * model.M_p0(lam, rho[j], side))
    return bulk, bd


def _dV_series(model, grid, traj, schedule, cadence):
    """``dV`` at every sample.

    The auxiliary profile is solved every ``cadence`` samples and linearly
    interpolated in between; ``dV`` is then formed with the exact density.
    Where no auxiliary profile exists (a field is present, or the model is
    not reversible) this raises.
    """
    cache = StationaryCache(model, grid)
    n = traj.times.size
    solved = sorted(set(range(0, n, cadence)) | {n - 1})
    aux = {}
    F = None
    for k in solved:
        drive = schedule(traj.times[k])
        try:
            ev = dV_nonequilibrium(model, grid, traj.rho[k], drive, cache(drive), guess=F)
        except ConvergenceError as exc:
            raise ConvergenceError(f"t={traj.times[k]:.6g}: {exc}") from exc
        aux[k] = F = ev.F_aux
    out = np.empty_like(traj.rho)
    for a, b in zip(solved[:-1], solved[1:]):
        for k in range(a, b + 1):
            c = (k - a) / (b - a)
            out[k] = model.fprime(traj.rho[k]) - model.fprime((1 - c) * aux[a] + c * aux[b])
    if n == 1:
        out[0] = model.fprime(traj.rho[0]) - model.fprime(aux[0])
    return out


def renormalized_work(model: Model, grid: Grid1D, schedule, rho0, cadence: int = 10, opts=None, T=None):
    """Renormalized work ledger.

    With ``T`` the protocol is run on ``[0, T]`` only; otherwise until
    relaxation to the terminal stationary profile plus an exponential tail.
    """
    schedule = _as_schedule(schedule)
    if T is None:
        rhobar1 = StationaryCache(model, grid)(schedule.terminal)
        traj, mu = relax(model, grid, schedule, rho0, rhobar1, opts)
    else:
        traj, mu = evolve_hydro(model, grid, rho0, schedule, T, opts), np.inf
    out = work_exchanged(model, traj, schedule)
    dV = _dV_series(model, grid, traj, schedule, cadence)
    rates = np.array([renormalized_rates(model, grid, traj.rho[k], schedule(t), dV[k])
                      for k, t in enumerate(traj.times)])
    totals = integrate.trapezoid(rates, traj.times, axis=0)
    if np.isfinite(mu):
        # both integrands are quadratic in the distance to the terminal profile
        totals = totals + rates[-1] / (2 * mu)
        out.tail = float(rates[-1].sum() / (2 * mu))
    out.renorm_bulk, out.renorm_boundary = float(totals[0]), float(totals[1])
    return out


@dataclass
class SweepResult:
    deltas: np.ndarray
    values: np.ndarray
    renormalized: bool

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.values) < 0))

    @property
    def ratios(self) -> np.ndarray:
        return self.values[:-1] / self.values[1:]

    @property
    def order(self) -> float:
        return float(np.polyfit(np.log(self.deltas), np.log(self.values), 1)[0])


def _sweep_entry(args):
    model, grid, schedule, rho0, opts, renorm = args
    if renorm:
        return renormalized_work(model, grid, schedule, rho0, opts=opts).renormalized_excess
    return excess_work(model, grid, schedule, rho0, opts)


def quasistatic_sweep(model: Model, grid: Grid1D, base: ProtocolSchedule, deltas, opts=None, map_fn=map) -> SweepResult:
    """Excess (or renormalized excess) work of ``base`` slowed by each ``delta``.

    Starts from the stationary profile of the initial drive.  ``map_fn``
    may be a pool's ``map`` to run the entries concurrently.
    """
    deltas = np.asarray(deltas, dtype=float)
    if np.any(np.diff(deltas) >= 0):
        raise ValueError("deltas must be decreasing")
    cache = StationaryCache(model, grid)
    rho0 = cache(base.drives[0])
    renorm = not (is_equilibrium(model, grid, base.drives[0], rho0)
                  and is_equilibrium(model, grid, base.terminal, cache(base.terminal)))
    jobs = [(model, grid, base.slowed(d), rho0, opts, renorm) for d in deltas]
    values = np.array(list(map_fn(_sweep_entry, jobs)), dtype=float)
    return SweepResult(deltas, values, renorm)
