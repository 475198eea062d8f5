"""The quasi-potential: its functional derivative, its value, and checks.

Out of equilibrium (no field, scalar diffusion) the derivative is
``dV(rho) = f'(rho) - f'(F)`` with ``F`` the auxiliary profile from
:func:`weakcontact.pde.solve_F_equation`.  In equilibrium ``F`` is the
stationary profile and ``V`` has the closed form
``int f(rho) - f(rhobar) - f'(rhobar) (rho - rhobar) dx``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functionals as fn
from .errors import DomainError, PreconditionError
from .functionals import Drive, Grid1D
from .models import Model
from .pde import SolverOptions, solve_F_equation, solve_stationary

EQUILIBRIUM_TOL = 1e-8


@dataclass
class QuasiPotentialEval:
    dV: np.ndarray
    hj_residual: float
    F_aux: np.ndarray | None = None
    V: float | None = None

    @property
    def hj_residual_per_cell(self) -> float:
        return self.hj_residual / (self.dV.size - 1)


class StationaryCache:
    """Memoises stationary profiles by drive."""

    def __init__(self, model: Model, grid: Grid1D):
        self.model, self.grid = model, grid
        self._store = {}

    def __call__(self, drive: Drive) -> np.ndarray:
        key = (drive.lam_left, drive.lam_right, drive.kappa_left, drive.kappa_right,
               np.asarray(drive.E, dtype=float).tobytes())
        if key not in self._store:
            self._store[key] = solve_stationary(self.model, self.grid, drive, probe=False).rho
        return self._store[key]


def is_equilibrium(model: Model, grid: Grid1D, drive: Drive, rhobar=None) -> bool:
    rhobar = solve_stationary(model, grid, drive, probe=False).rho if rhobar is None else rhobar
    J = fn.current_of(model, grid, rhobar, drive)
    return float(np.max(np.abs(J.as_array()))) <= EQUILIBRIUM_TOL


def dV_equilibrium(model: Model, grid: Grid1D, rho, drive: Drive, rhobar=None) -> np.ndarray:
    """``f'(rho) - f'(rhobar)``; the drive must have a current-free stationary state."""
    rhobar = solve_stationary(model, grid, drive, probe=False).rho if rhobar is None else rhobar
    if not is_equilibrium(model, grid, drive, rhobar):
        raise PreconditionError("the stationary state of this drive carries a current")
    rho = model.check_density(np.asarray(rho, dtype=float))
    grid.check(rho)
    return model.fprime(rho) - model.fprime(rhobar)


def V_closed_form(model: Model, grid: Grid1D, rho, rhobar) -> float:
    """Equilibrium quasi-potential, i.e. the relative free energy."""
    rho = np.asarray(rho, dtype=float)
    integrand = model.f(rho) - model.f(rhobar) - model.fprime(rhobar) * (rho - rhobar)
    return grid.integrate(integrand)


def dV_nonequilibrium(
    model: Model,
    grid: Grid1D,
    rho,
    drive: Drive,
    rhobar=None,
    guess=None,
    opts: SolverOptions | None = None,
) -> QuasiPotentialEval:
    rho = model.check_density(np.asarray(rho, dtype=float))
    sol = solve_F_equation(model, grid, rho, drive, opts, guess=guess, rhobar=rhobar)
    dV = model.fprime(rho) - model.fprime(sol.F)
    hj = abs(fn.full_hamiltonian(model, grid, rho, dV, drive))
    return QuasiPotentialEval(dV, hj, sol.F)


def dv_provider(model: Model, grid: Grid1D, drive: Drive, rhobar=None, opts=None):
    """Callable ``rho -> dV(rho)`` that warm-starts every solve from the previous ``F``."""
    if rhobar is None:
        rhobar = solve_stationary(model, grid, drive, probe=False).rho
    if not drive.has_field and is_equilibrium(model, grid, drive, rhobar):
        return lambda rho: model.fprime(rho) - model.fprime(rhobar)
    state = {"F": None}

    def provide(rho):
        ev = dV_nonequilibrium(model, grid, rho, drive, rhobar, state["F"], opts)
        state["F"] = ev.F_aux
        return ev.dV

    return provide


def _path(kind: str, gamma, rhobar):
    delta = gamma - rhobar
    if kind == "segment":
        return lambda s: rhobar + s * delta, lambda s: delta
    if kind == "arc":
        # same endpoints, bent by a multiple of the profile bump s(1-s)
        bump = 0.5 * delta * np.sin(np.pi * np.linspace(0.0, 1.0, delta.size))
        return (lambda s: rhobar + s * delta + s * (1 - s) * bump,
                lambda s: delta + (1 - 2 * s) * bump)
    raise ValueError(f"unknown path {kind!r}")


def V_line_integral(
    model: Model,
    grid: Grid1D,
    gamma,
    drive: Drive,
    n_path: int = 16,
    path: str = "segment",
    rhobar=None,
    opts: SolverOptions | None = None,
) -> QuasiPotentialEval:
    """``V(gamma)`` by Gauss-Legendre quadrature of ``<dV, d rho_s / ds>`` along a path from ``rhobar``."""
    gamma = np.asarray(gamma, dtype=float)
    grid.check(gamma)
    if rhobar is None:
        rhobar = solve_stationary(model, grid, drive, probe=False).rho
    point, tangent = _path(path, gamma, rhobar)
    nodes, weights = np.polynomial.legendre.leggauss(n_path)
    s_values = 0.5 * (nodes + 1.0)
    for s in s_values:
        if not np.all(model.interval.contains(point(s))):
            raise DomainError(f"integration path leaves the state interval at s={s:.4f}")
    provide = dv_provider(model, grid, drive, rhobar, opts)
    total = 0.0
    for s, wt in zip(s_values, weights):
        dV = provide(point(s))
        total += 0.5 * wt * grid.integrate(dV * tangent(s))
    end = provide(gamma)
    hj = abs(fn.full_hamiltonian(model, grid, gamma, end, drive))
    return QuasiPotentialEval(end, hj, None, float(total))


def time_reversal_check(model: Model, grid: Grid1D, rho, gamma_rate, drive: Drive, dV=None, tol=1e-11) -> float:
    """``|L_adj(rho, g) - L(rho, -g) - <dV, g>|`` with both Lagrangians by Legendre transform."""
    rho = np.asarray(rho, dtype=float)
    g = np.asarray(gamma_rate, dtype=float)
    if dV is None:
        dV = dv_provider(model, grid, drive)(rho)
    adj = fn.lagrangian(model, grid, rho, g, drive, tol=tol, reflect=dV)
    fwd = fn.lagrangian(model, grid, rho, -g, drive, tol=tol)
    return abs(adj.value - fwd.value - grid.integrate(dV * g))
