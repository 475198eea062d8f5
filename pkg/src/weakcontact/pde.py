"""Hydrodynamic evolution, stationary profiles and the auxiliary-profile BVP.

All solvers work on the node grid of :mod:`weakcontact.functionals`.  The
semi-discrete hydrodynamic equation is

    w_j d rho_j / dt = J_{j-1/2} - J_{j+1/2},

with ``J_{-1/2} = kappa_L M'_{lam_L, rho_0}(0)`` entering at ``x = 0`` and
``J_{n+1/2} = -kappa_R M'_{lam_R, rho_n}(0)`` leaving at ``x = 1``.

Three time integrators are available:

``radau``
    Method of lines with scipy's Radau IIA integrator at tight tolerances.
    The running integrals of the boundary fluxes, the exchanged work and
    the two dissipations are integrated as extra components, so the work
    balance holds to integrator accuracy.  Default.
``imex``
    Fixed step, diffusion implicit (secant-linearised, tridiagonal solve),
    field and boundary fluxes explicit.
``explicit``
    Forward Euler under a CFL restriction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, linalg, sparse

from . import functionals as fn
from ._numerics import banded_jacobian, newton_banded
from .errors import (
    ConfigError,
    ConvergenceError,
    DomainError,
    PreconditionError,
    StabilityError,
)
from .functionals import Drive, Grid1D
from .models import Model, ZeroRange

LEDGER_KEYS = ("influx_left", "outflux_right", "work", "bulk_dissipation", "boundary_dissipation")


# ---------------------------------------------------------------------------
# protocols


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


@dataclass(frozen=True)
class ProtocolSchedule:
    """Drive as a function of time.

    The drive equals ``drives[i]`` at ``knots[i]`` and is interpolated in
    between (``shape`` is ``"smooth"`` for a C1 smoothstep or ``"linear"``);
    after the last knot it stays constant.  ``delta`` slows the protocol
    down: the drive at time ``t`` is the base drive at ``delta * t``.
    """

    knots: tuple
    drives: tuple
    shape: str = "smooth"
    delta: float = 1.0

    def __post_init__(self):
        if len(self.knots) != len(self.drives) or not self.knots:
            raise ConfigError("knots and drives must have the same nonzero length")
        if np.any(np.diff(self.knots) <= 0):
            raise ConfigError("knots must be strictly increasing")
        if self.shape not in ("smooth", "linear"):
            raise ConfigError(f"unknown interpolation shape {self.shape!r}")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")

    @classmethod
    def constant(cls, drive: Drive) -> "ProtocolSchedule":
        return cls((0.0,), (drive,))

    @classmethod
    def ramp(cls, start: Drive, end: Drive, duration: float, shape: str = "smooth", delta: float = 1.0):
        return cls((0.0, float(duration)), (start, end), shape, delta)

    def slowed(self, delta: float) -> "ProtocolSchedule":
        return ProtocolSchedule(self.knots, self.drives, self.shape, delta)

    @property
    def terminal(self) -> Drive:
        return self.drives[-1]

    @property
    def end_time(self) -> float:
        """Real time after which the drive is constant."""
        return self.knots[-1] / self.delta

    def breakpoints(self) -> np.ndarray:
        return np.asarray(self.knots, dtype=float) / self.delta

    def __call__(self, t: float) -> Drive:
        s = self.delta * t
        knots = self.knots
        if s <= knots[0]:
            return self.drives[0]
        if s >= knots[-1]:
            return self.drives[-1]
        i = int(np.searchsorted(knots, s, side="right")) - 1
        a, b = self.drives[i], self.drives[i + 1]
        u = (s - knots[i]) / (knots[i + 1] - knots[i])
        c = float(_smoothstep(u)) if self.shape == "smooth" else u
        mix = lambda x, y: (1.0 - c) * np.asarray(x, dtype=float) + c * np.asarray(y, dtype=float)
        E = mix(a.E, b.E)
        return Drive(
            float(mix(a.lam_left, b.lam_left)),
            float(mix(a.lam_right, b.lam_right)),
            float(mix(a.kappa_left, b.kappa_left)),
            float(mix(a.kappa_right, b.kappa_right)),
            float(E) if E.ndim == 0 else E,
        )

    def eventually_constant(self, T: float) -> bool:
        return self(T).same_as(self(2.0 * T))


# ---------------------------------------------------------------------------
# options and results


@dataclass
class SolverOptions:
    dt: float | None = None  # sample spacing / fixed step; default h/4
    scheme: str = "radau"
    safety: float = 0.4
    newton_tol: float = 1e-10
    max_iter: int = 50
    rtol: float = 1e-10
    atol: float = 1e-12

    def step(self, grid: Grid1D) -> float:
        return grid.h / 4.0 if self.dt is None else float(self.dt)


@dataclass
class Trajectory:
    """Uniformly sampled solution with running ledgers and currents.

    ``ledger[key][k]`` is the integral over ``[times[0], times[k]]`` of the
    corresponding rate; ``currents[k]`` is ``CurrentField.as_array()`` at
    ``times[k]``.
    """

    grid: Grid1D
    times: np.ndarray
    rho: np.ndarray
    currents: np.ndarray
    ledger: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.rho[-1]

    def mass(self) -> np.ndarray:
        return self.rho @ self.grid.weights

    def sup_distance(self, target) -> np.ndarray:
        return np.max(np.abs(self.rho - target), axis=1)

    def extend(self, other: "Trajectory") -> "Trajectory":
        """Concatenate a continuation that starts at this trajectory's end."""
        ledger = {k: np.concatenate((v, v[-1] + other.ledger[k][1:])) for k, v in self.ledger.items()}
        return Trajectory(
            self.grid,
            np.concatenate((self.times, other.times[1:])),
            np.vstack((self.rho, other.rho[1:])),
            np.vstack((self.currents, other.currents[1:])),
            ledger,
        )


# ---------------------------------------------------------------------------
# rates


def ledger_rates(model: Model, grid: Grid1D, rho, drive: Drive, J: fn.CurrentField, sig) -> np.ndarray:
    """Instantaneous boundary fluxes, work rate and dissipation rates."""
    E = drive.field(grid)
    work = drive.lam_left * J.left - drive.lam_right * J.right + grid.h * float(J.interior @ E)
    bulk = grid.h * float(np.sum(J.interior**2 / sig))
    bd = 0.0
    for side, j in zip(fn.SIDES, (0, -1)):
        lam = drive.lam(side)
        p = float(model.fprime(rho[j])) - lam
        bd += drive.kappa(side) * float(model.M(lam, rho[j], p, side) - p * model.M_p0(lam, rho[j], side))
    return np.array([J.left, J.right, work, bulk, bd])


def _forward_flux(model, grid, rho, drive):
    J, sig = fn._bulk_flux(model, grid, rho, drive)
    left = drive.kappa_left * float(model.M_p0(drive.lam_left, rho[0], "left"))
    right = -drive.kappa_right * float(model.M_p0(drive.lam_right, rho[-1], "right"))
    return fn.CurrentField(J, left, right), sig


def _adjoint_flux(model, grid, rho, drive, dV):
    _, _, adj = fn.current_decomposition(model, grid, rho, drive, dV)
    return adj, fn.face_mobility(model, rho)


def _divergence(grid, J: fn.CurrentField) -> np.ndarray:
    flux = J.as_array()
    return (flux[:-1] - flux[1:]) / grid.weights


# ---------------------------------------------------------------------------
# integrators


def _sample_times(t0: float, T: float, dt: float) -> np.ndarray:
    n = int(np.floor((T - t0) / dt + 1e-9))
    times = t0 + dt * np.arange(n + 1)
    if T - times[-1] > 1e-12 * max(1.0, T):
        times = np.append(times, T)
    return times


def _check_state(model, rho, t):
    inside = model.interval.contains(rho)
    if not np.all(inside):
        j = int(np.argmin(inside))
        raise StabilityError(f"density left the state interval at node {j}, t={t:.6g}")


def _run_radau(model, grid, rho0, schedule, times, opts, flux):
    nn = grid.n_nodes
    nk = len(LEDGER_KEYS)

    def rhs(t, y):
        rho = y[:nn]
        if not np.all(model.interval.contains(rho)):
            return np.full_like(y, np.nan)
        drive = schedule(t)
        J, sig = flux(rho, drive)
        out = np.empty_like(y)
        out[:nn] = _divergence(grid, J)
        out[nn:] = ledger_rates(model, grid, rho, drive, J, sig)
        return out

    pattern = sparse.lil_matrix((nn + nk, nn + nk))
    band = sparse.diags([1, 1, 1], [-1, 0, 1], shape=(nn, nn))
    pattern[:nn, :nn] = band
    y0 = np.concatenate((rho0, np.zeros(nk)))
    breaks = schedule.breakpoints()
    segments = np.unique(np.concatenate(([times[0]], breaks[(breaks > times[0]) & (breaks < times[-1])], [times[-1]])))
    ys = np.empty((times.size, nn + nk))
    ys[0] = y0
    filled = 1
    for a, b in zip(segments[:-1], segments[1:]):
        teval = times[(times > a) & (times <= b)]
        sol = integrate.solve_ivp(
            rhs, (a, b), y0, method="Radau", t_eval=teval, rtol=opts.rtol, atol=opts.atol,
            jac_sparsity=pattern.tocsc(),
        )
        if sol.status != 0:
            raise StabilityError(f"time integration failed near t={sol.t[-1] if sol.t.size else a:.6g}: {sol.message}")
        if teval.size:
            ys[filled:filled + teval.size] = sol.y.T
            filled += teval.size
        if sol.t.size and sol.t[-1] == b:
            y0 = sol.y[:, -1]
        else:
            y0 = integrate.solve_ivp(
                rhs, (a, b), y0, method="Radau", rtol=opts.rtol, atol=opts.atol, jac_sparsity=pattern.tocsc()
            ).y[:, -1]
    return ys[:, :nn], ys[:, nn:]


def _run_fixed(model, grid, rho0, schedule, times, opts, flux, implicit):
    nn = grid.n_nodes
    w = grid.weights
    rho = np.array(rho0, dtype=float)
    rhos = np.empty((times.size, nn))
    acc = np.zeros((times.size, len(LEDGER_KEYS)))
    rhos[0] = rho
    for k in range(1, times.size):
        t, dt = times[k - 1], times[k] - times[k - 1]
        drive = schedule(t)
        J, sig = flux(rho, drive)
        if implicit:
            # split J = -[d] + rest; diffusion is advanced implicitly with the secant slope
            drho = np.diff(rho)
            dd = np.diff(model.d(rho))
            small = np.abs(drho) < 1e-12
            Dbar = np.where(small, model.D(0.5 * (rho[:-1] + rho[1:])), dd / np.where(small, 1.0, drho))
            rest = J.interior + dd / grid.h
            a = Dbar / grid.h
            ab = np.zeros((3, nn))
            ab[1] = w / dt
            ab[1, :-1] += a
            ab[1, 1:] += a
            ab[0, 1:] = -a
            ab[2, :-1] = -a
            b = w / dt * rho
            b[0] += J.left
            b[-1] -= J.right
            b[:-1] -= rest
            b[1:] += rest
            new = linalg.solve_banded((1, 1), ab, b)
            J = fn.CurrentField(-a * np.diff(new) + rest, J.left, J.right)
        else:
            new = rho + dt * _divergence(grid, J)
        acc[k] = acc[k - 1] + dt * ledger_rates(model, grid, rho, drive, J, sig)
        _check_state(model, new, times[k])
        rho = new
        rhos[k] = rho
    return rhos, acc


def _check_cfl(model, grid, rho0, schedule, opts, dt):
    if opts.scheme != "explicit":
        return
    Dmax = float(np.max(model.D(rho0)))
    kmax = max(max(d.kappa_left, d.kappa_right) for d in schedule.drives)
    limit = opts.safety * min(grid.h**2 / Dmax, grid.h / kmax)
    if dt > limit:
        raise ConfigError(f"explicit step {dt:.3e} violates the CFL bound {limit:.3e}")


def _integrate(model, grid, rho0, schedule, T, opts, flux, t0=0.0):
    grid.check(rho0)
    model.check_density(rho0)
    opts = opts or SolverOptions()
    dt = opts.step(grid)
    _check_cfl(model, grid, rho0, schedule, opts, dt)
    times = _sample_times(t0, t0 + T, dt)
    if opts.scheme == "radau":
        rhos, acc = _run_radau(model, grid, np.asarray(rho0, float), schedule, times, opts, flux)
    elif opts.scheme in ("imex", "explicit"):
        rhos, acc = _run_fixed(model, grid, rho0, schedule, times, opts, flux, opts.scheme == "imex")
    else:
        raise ConfigError(f"unknown scheme {opts.scheme!r}")
    for k in range(times.size):
        _check_state(model, rhos[k], times[k])
    currents = np.array([flux(rhos[k], schedule(times[k]))[0].as_array() for k in range(times.size)])
    ledger = {key: acc[:, i] for i, key in enumerate(LEDGER_KEYS)}
    return Trajectory(grid, times, rhos, currents, ledger)


def evolve_hydro(
    model: Model,
    grid: Grid1D,
    rho0,
    schedule: ProtocolSchedule | Drive,
    T: float,
    opts: SolverOptions | None = None,
    t0: float = 0.0,
) -> Trajectory:
    """Solve the hydrodynamic equation with Robin boundary fluxes on ``[t0, t0 + T]``."""
    if isinstance(schedule, Drive):
        schedule = ProtocolSchedule.constant(schedule)
    flux = lambda rho, drive: _forward_flux(model, grid, rho, drive)
    return _integrate(model, grid, rho0, schedule, T, opts, flux, t0)


def evolve_adjoint(
    model: Model,
    grid: Grid1D,
    rho0,
    drive: Drive,
    dv_provider: Callable[[np.ndarray], np.ndarray],
    T: float,
    opts: SolverOptions | None = None,
) -> Trajectory:
    """Solve the adjoint hydrodynamic equation.

    The current is ``J_adj = -J - 2 sigma grad dV`` and the boundary fluxes
    are ``+kappa M'(dV)`` along the outer normal, ``dV = dv_provider(rho)``.
    Only the two flux entries of the ledger are meaningful.
    """
    schedule = ProtocolSchedule.constant(drive)
    flux = lambda rho, d: _adjoint_flux(model, grid, rho, d, dv_provider(rho))
    return _integrate(model, grid, rho0, schedule, T, opts, flux)


# ---------------------------------------------------------------------------
# stationary problem


@dataclass
class StationaryResult:
    rho: np.ndarray
    residual: float
    iterations: int
    method: str
    spectral_abscissa: float

    @property
    def is_attractor(self) -> bool:
        return self.spectral_abscissa < 0


def stationary_residual(model, grid, rho, drive) -> np.ndarray:
    """Net flux into every dual cell; zero at a stationary profile."""
    return fn.hamiltonian_gradient(model, grid, rho, np.zeros(grid.n_nodes), drive)


def _interior_guess(model, grid, drive):
    a, b = float(model.R(drive.lam_left)), float(model.R(drive.lam_right))
    return a + (b - a) * grid.nodes


def solve_stationary(
    model: Model,
    grid: Grid1D,
    drive: Drive,
    guess=None,
    opts: SolverOptions | None = None,
    probe: bool = True,
) -> StationaryResult:
    """Stationary profile of the hydrodynamic equation.

    Newton on the discrete flux balance; when it stalls, pseudo-time
    marching with :func:`evolve_hydro` followed by another Newton solve.
    With ``probe`` the linearised generator is diagonalised and its
    spectral abscissa reported (negative for an attractor).
    """
    opts = opts or SolverOptions()
    rho = _interior_guess(model, grid, drive) if guess is None else np.array(guess, dtype=float)
    grid.check(rho)
    res = lambda r: stationary_residual(model, grid, r, drive)
    ok = lambda r: bool(np.all(model.interval.contains(r)))
    method = "newton"
    try:
        rho, norm, its = newton_banded(res, rho, opts.newton_tol, opts.max_iter, ok)
    except ConvergenceError:
        method = "pseudo-time+newton"
        try:
            marched = evolve_hydro(model, grid, rho, drive, 50.0, SolverOptions(dt=5.0, rtol=1e-8, atol=1e-10))
            rho, norm, its = newton_banded(res, marched.final, opts.newton_tol, opts.max_iter, ok)
        except (ConvergenceError, StabilityError) as exc:
            raise ConvergenceError(f"stationary solve failed: {exc}") from exc
    abscissa = np.nan
    if probe and grid.n_nodes <= 1025:
        ab = banded_jacobian(res, rho)
        dense = np.diag(ab[1]) + np.diag(ab[0, 1:], 1) + np.diag(ab[2, :-1], -1)
        abscissa = float(np.max(np.linalg.eigvals(dense / grid.weights[:, None]).real))
    return StationaryResult(rho, norm, its, method, abscissa)


def attractor_probe(model, grid, drive, rhobar, n_perturb=10, amplitude=0.05, T=2.0, seed=0, opts=None):
    """Relax random smooth perturbations of ``rhobar``; return sup-distance curves."""
    rng = np.random.default_rng(seed)
    x = grid.nodes
    curves = []
    for _ in range(n_perturb):
        modes = rng.normal(size=4)
        bump = sum(c * np.sin((k + 1) * np.pi * x) for k, c in enumerate(modes))
        rho0 = rhobar + amplitude * bump / np.max(np.abs(bump))
        traj = evolve_hydro(model, grid, rho0, drive, T, opts or SolverOptions(dt=T / 50))
        curves.append(traj.sup_distance(rhobar))
    return traj.times, np.array(curves)


# ---------------------------------------------------------------------------
# auxiliary profile of the quasi-potential


@dataclass
class FSolution:
    F: np.ndarray
    residual: float
    iterations: int
    continuation_steps: int
    crossings: np.ndarray  # cell indices where d(rho) - d(F) changes sign


def _guarded_ratio(model, rho, F):
    """``(sigma(rho) - sigma(F)) / (d(rho) - d(F))`` with the coincidence limit."""
    gap = model.d(rho) - model.d(F)
    small = np.abs(gap) < 1e-8
    mid = 0.5 * (rho + F)
    limit = model.sigma_prime(mid) / model.D(mid)
    exact = (model.sigma(rho) - model.sigma(F)) / np.where(small, 1.0, gap)
    return np.where(small, limit, exact)


def F_equation_residual(model: Model, grid: Grid1D, rho, F, drive: Drive) -> np.ndarray:
    """Residual of the discrete auxiliary-profile equation.

    Interior rows are ``h`` times the flux form
    ``lap d(F) + C(rho, F) |grad f'(F)|^2`` with
    ``C = sigma(F) [ (sigma(rho) - sigma(F)) / (d(rho) - d(F)) - sigma'(F) / D(F) ]``,
    the squared gradient averaged over the two adjacent cells.  End rows are
    half-cell balances closed by the boundary condition of the equation.
    At ``F = rho`` every row coincides with the stationarity row, so the
    stationary profile solves the equation exactly.
    """
    h = grid.h
    b = grid.grad(model.fprime(F))
    q = grid.grad(model.d(F))
    C = model.sigma(F) * (_guarded_ratio(model, rho, F) - model.sigma_prime(F) / model.D(F))
    r = np.empty(grid.n_nodes)
    r[1:-1] = q[1:] - q[:-1] + h * C[1:-1] * 0.5 * (b[1:] ** 2 + b[:-1] ** 2)
    bl = drive.kappa_left * model.robin_F_flux(drive.lam_left, rho[0], F[0], "left")
    br = drive.kappa_right * model.robin_F_flux(drive.lam_right, rho[-1], F[-1], "right")
    r[0] = q[0] + bl + 0.5 * h * C[0] * b[0] ** 2
    r[-1] = -q[-1] + br + 0.5 * h * C[-1] * b[-1] ** 2
    return r


def solve_F_equation(
    model: Model,
    grid: Grid1D,
    rho,
    drive: Drive,
    opts: SolverOptions | None = None,
    guess=None,
    rhobar=None,
) -> FSolution:
    """Auxiliary profile ``F`` whose ``f'(rho) - f'(F)`` solves the Hamilton-Jacobi equation.

    Starts from ``guess`` (default: the stationary profile).  If Newton
    fails, continues along ``rho_s = rhobar + s (rho - rhobar)`` from
    ``s = 0`` (where ``F = rhobar``) with adaptive steps.
    """
    if drive.has_field:
        raise PreconditionError("the auxiliary-profile equation requires a vanishing field")
    if not model.reversible:
        raise DomainError(f"{model.kind} has no auxiliary-profile equation")
    opts = opts or SolverOptions()
    rho = model.check_density(np.asarray(rho, dtype=float))
    grid.check(rho)
    if rhobar is None:
        rhobar = solve_stationary(model, grid, drive, probe=False).rho
    if isinstance(model, ZeroRange):
        # the equation does not involve rho and coincides with stationarity
        return FSolution(np.array(rhobar), 0.0, 0, 0, np.array([], dtype=int))
    ok = lambda z: bool(np.all(model.interval.contains(z)))

    def solve(target, start):
        res = lambda z: F_equation_residual(model, grid, target, z, drive)
        return newton_banded(res, start, opts.newton_tol, opts.max_iter, ok)

    steps = 0
    try:
        F, norm, its = solve(rho, rhobar if guess is None else guess)
    except ConvergenceError:
        s, ds, F = 0.0, 0.25, np.array(rhobar)
        while s < 1.0:
            s_new = min(1.0, s + ds)
            try:
                F, norm, its = solve(rhobar + s_new * (rho - rhobar), F)
                s, steps = s_new, steps + 1
                ds = min(2 * ds, 0.5)
            except ConvergenceError:
                ds /= 2
                if ds < 1e-4:
                    raise ConvergenceError(f"continuation stalled at s={s:.4f}") from None
    gap = model.d(rho) - model.d(F)
    crossings = np.nonzero(np.sign(gap[:-1]) * np.sign(gap[1:]) < 0)[0]
    return FSolution(F, norm, its, steps, crossings)
