"""Discrete Hamiltonians, currents and the Lagrangian on ``(0, 1)``.

Discretisation
--------------
The interval is divided into ``n_cells`` cells of width ``h``.  Densities
and momenta are stored at the ``n_cells + 1`` nodes ``x_j = j h``; node ``j``
owns the dual cell ``[x_j - h/2, x_j + h/2]`` clipped to ``[0, 1]``, so the
end nodes own half cells.  Consequences:

* boundary traces are node values, and spatial integrals use the
  trapezoid weights ``w``;
* currents live at the ``n_cells`` cell midpoints (the dual-cell
  interfaces) plus the two boundary fluxes;
* ``dH/dF_j (rho, 0) = w_j * (hydrodynamic rate at node j)``, so the
  discrete Lagrangian of the discrete hydrodynamic path is exactly zero.

The midpoint mobility is the discrete-gradient mean
``sigma_k = [d(rho)]_k / [f'(rho)]_k``, for which
``sigma_k [f'(rho)]_k = [d(rho)]_k`` holds exactly.  This grid version of the
Einstein relation makes equilibrium states, the work balance and the
time-reversal symmetry exact at the semi-discrete level.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import integrate, linalg

from .errors import ConvergenceError, PoleError, ShapeError, UnboundedError
from .models import Model


@dataclass(frozen=True)
class Grid1D:
    n_cells: int

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 8:
            raise ShapeError("n_cells must be an integer >= 8")

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_nodes) / self.n_cells

    @cached_property
    def cells(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) / self.n_cells

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(self.n_nodes, self.h)
        w[[0, -1]] = 0.5 * self.h
        return w

    def check(self, *fields) -> None:
        for u in fields:
            if np.shape(u) != (self.n_nodes,):
                raise ShapeError(f"field of shape {np.shape(u)} on a grid with {self.n_nodes} nodes")

    def integrate(self, u) -> float:
        return float(self.weights @ u)

    def grad(self, u) -> np.ndarray:
        return np.diff(u) / self.h


@dataclass(frozen=True)
class Drive:
    """Reservoir chemical potentials, couplings and bulk field.

    ``E`` is a constant or an array of cell-midpoint values.
    """

    lam_left: float
    lam_right: float
    kappa_left: float = 1.0
    kappa_right: float = 1.0
    E: object = 0.0

    def __post_init__(self):
        if not (self.kappa_left > 0 and self.kappa_right > 0):
            raise ValueError("coupling strengths must be positive")

    def field(self, grid: Grid1D) -> np.ndarray:
        E = np.broadcast_to(np.asarray(self.E, dtype=float), (grid.n_cells,))
        return np.array(E)

    @property
    def has_field(self) -> bool:
        return bool(np.any(np.asarray(self.E) != 0))

    def lam(self, side: str) -> float:
        return self.lam_left if side == "left" else self.lam_right

    def kappa(self, side: str) -> float:
        return self.kappa_left if side == "left" else self.kappa_right

    def with_(self, **changes) -> "Drive":
        return replace(self, **changes)

    def same_as(self, other: "Drive") -> bool:
        return (
            self.lam_left == other.lam_left
            and self.lam_right == other.lam_right
            and self.kappa_left == other.kappa_left
            and self.kappa_right == other.kappa_right
            and np.array_equal(np.asarray(self.E), np.asarray(other.E))
        )


@dataclass
class CurrentField:
    """Midpoint currents plus boundary fluxes, all oriented along ``+x``.

    ``left`` is the flux entering through ``x = 0`` and ``right`` the flux
    leaving through ``x = 1``.  The outward normal components are
    ``-left`` and ``+right``.
    """

    interior: np.ndarray
    left: float
    right: float

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.left], self.interior, [self.right]))

    def __add__(self, other):
        return CurrentField(self.interior + other.interior, self.left + other.left, self.right + other.right)

    def __sub__(self, other):
        return CurrentField(self.interior - other.interior, self.left - other.left, self.right - other.right)

    def __neg__(self):
        return CurrentField(-self.interior, -self.left, -self.right)


SIDES = ("left", "right")


def face_mobility(model: Model, rho: np.ndarray) -> np.ndarray:
    """Discrete-gradient mean of the mobility at the cell midpoints."""
    a, b = rho[:-1], rho[1:]
    dfp = model.fprime(b) - model.fprime(a)
    dd = model.d(b) - model.d(a)
    # near-equal neighbours: the quotient equals sigma(midpoint) up to O(dfp^2)
    close = np.abs(dfp) < 1e-6
    exact = dd / np.where(close, 1.0, dfp)
    return np.where(close, model.sigma(0.5 * (a + b)), exact)


def _bulk_flux(model: Model, grid: Grid1D, rho, drive: Drive, sig=None):
    sig = face_mobility(model, rho) if sig is None else sig
    return -grid.grad(model.d(rho)) + sig * drive.field(grid), sig


def current_of(model: Model, grid: Grid1D, rho, drive: Drive) -> CurrentField:
    grid.check(rho)
    model.check_density(rho)
    J, _ = _bulk_flux(model, grid, rho, drive)
    left = drive.kappa_left * float(model.M_p0(drive.lam_left, rho[0], "left"))
    right = -drive.kappa_right * float(model.M_p0(drive.lam_right, rho[-1], "right"))
    return CurrentField(J, left, right)


def bulk_hamiltonian(model: Model, grid: Grid1D, rho, F, drive: Drive) -> float:
    grid.check(rho, F)
    model.check_density(rho)
    J, sig = _bulk_flux(model, grid, rho, drive)
    gF = grid.grad(F)
    return float(grid.h * np.sum(J * gF + sig * gF**2))


def boundary_hamiltonian(model: Model, grid: Grid1D, rho, F, drive: Drive, strict: bool = True) -> float:
    grid.check(rho, F)
    total = 0.0
    for side, j in zip(SIDES, (0, -1)):
        total += drive.kappa(side) * float(model.M(drive.lam(side), rho[j], F[j], side))
    if strict and np.isposinf(total):
        raise PoleError("boundary momentum outside the finite domain of M")
    return total


def full_hamiltonian(model: Model, grid: Grid1D, rho, F, drive: Drive, strict: bool = True) -> float:
    return bulk_hamiltonian(model, grid, rho, F, drive) + boundary_hamiltonian(
        model, grid, rho, F, drive, strict
    )


def hamiltonian_gradient(model: Model, grid: Grid1D, rho, F, drive: Drive) -> np.ndarray:
    """``dH/dF_j``; not divided by the node weights."""
    J, sig = _bulk_flux(model, grid, rho, drive)
    c = J + 2.0 * sig * grid.grad(F)
    g = np.zeros(grid.n_nodes)
    g[1:] += c
    g[:-1] -= c
    g[0] += drive.kappa_left * model.M_p(drive.lam_left, rho[0], F[0], "left")
    g[-1] += drive.kappa_right * model.M_p(drive.lam_right, rho[-1], F[-1], "right")
    return g


def hamiltonian_hessian(model: Model, grid: Grid1D, rho, F, drive: Drive) -> np.ndarray:
    """Tridiagonal Hessian in ``F`` in :func:`scipy.linalg.solve_banded` layout."""
    sig = face_mobility(model, rho)
    a = 2.0 * sig / grid.h
    ab = np.zeros((3, grid.n_nodes))
    ab[1, :-1] += a
    ab[1, 1:] += a
    ab[0, 1:] = -a
    ab[2, :-1] = -a
    ab[1, 0] += drive.kappa_left * model.M_pp(drive.lam_left, rho[0], F[0], "left")
    ab[1, -1] += drive.kappa_right * model.M_pp(drive.lam_right, rho[-1], F[-1], "right")
    return ab


def hydro_rhs(model: Model, grid: Grid1D, rho, drive: Drive) -> np.ndarray:
    """Rate of change of the nodal densities under the hydrodynamic equation."""
    return hamiltonian_gradient(model, grid, rho, np.zeros(grid.n_nodes), drive) / grid.weights


def free_energy_functional(model: Model, grid: Grid1D, rho) -> float:
    grid.check(rho)
    return grid.integrate(model.f(rho))


@dataclass
class LagrangianResult:
    value: float
    F: np.ndarray
    iterations: int
    gradient_norm: float = field(default=0.0)


def lagrangian(
    model: Model,
    grid: Grid1D,
    rho,
    G,
    drive: Drive,
    tol: float = 1e-10,
    maxiter: int = 200,
    F0=None,
    reflect=None,
) -> LagrangianResult:
    """``sup_F <G, F> - H(rho, F)`` by damped Newton.

    With ``reflect = P`` the Hamiltonian is replaced by ``F -> H(rho, P - F)``,
    which is how the adjoint Lagrangian is evaluated.
    """
    grid.check(rho, G)
    model.check_density(rho)
    w = grid.weights
    sign = 1.0 if reflect is None else -1.0
    base = np.zeros(grid.n_nodes) if reflect is None else np.asarray(reflect, dtype=float)

    def arg(F):
        return F if reflect is None else base - F

    def objective(F):
        with np.errstate(invalid="ignore", over="ignore"):
            val = w @ (G * F) - full_hamiltonian(model, grid, rho, arg(F), drive, strict=False)
        return -np.inf if not np.isfinite(val) else float(val)

    if F0 is None:
        F = np.zeros(grid.n_nodes) if reflect is None else base.copy()
    else:
        F = np.array(F0, dtype=float)
    phi = objective(F)
    if not np.isfinite(phi):
        F = np.zeros(grid.n_nodes) if reflect is None else base.copy()
        phi = objective(F)
    scale = 1.0 + np.max(np.abs(w * G))
    for it in range(maxiter + 1):
        g = w * G - sign * hamiltonian_gradient(model, grid, rho, arg(F), drive)
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= tol * scale:
            return LagrangianResult(phi, F, it, gnorm)
        ab = hamiltonian_hessian(model, grid, rho, arg(F), drive)
        try:
            step = linalg.solve_banded((1, 1), ab, g)
        except (linalg.LinAlgError, ValueError) as exc:
            raise UnboundedError("Hessian of H is singular; the supremum is not attained") from exc
        slope = float(g @ step)
        if not np.isfinite(slope) or slope <= 0:
            raise UnboundedError("no ascent direction for the Legendre transform")
        t = 1.0
        while True:
            trial = F + t * step
            val = objective(trial)
            if val >= phi + 1e-4 * t * slope:
                break
            if gnorm <= 1e3 * tol * scale:
                # near the optimum a full Newton step is always accepted in
                # exact arithmetic, so a rejected one means the roundoff floor
                return LagrangianResult(phi, F, it, gnorm)
            if t < 1e-10 and val >= phi - 1e-13 * (1.0 + abs(phi)):
                break  # at the roundoff floor
            t *= 0.5
            if t < 1e-14:
                raise ConvergenceError("line search failed in the Lagrangian maximisation")
        F, phi = trial, val
        if phi > 1e15:
            raise UnboundedError("objective grows without bound")
    raise ConvergenceError(f"Lagrangian maximisation did not converge in {maxiter} iterations")


def action(model: Model, grid: Grid1D, times, rhos, schedule, tol: float = 1e-10) -> float:
    """Trapezoid-in-time integral of the Lagrangian along sampled densities.

    ``schedule(t)`` must return the :class:`Drive` at time ``t``.  Time
    derivatives use second-order differences, one-sided at the ends.
    """
    times = np.asarray(times, dtype=float)
    rhos = np.asarray(rhos, dtype=float)
    if rhos.shape != (times.size, grid.n_nodes):
        raise ShapeError("trajectory samples do not match the grid")
    dt = np.diff(times)
    if times.size < 3 or not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ShapeError("action needs at least three uniformly spaced samples")
    rate = np.gradient(rhos, times, axis=0, edge_order=2)
    values = np.empty(times.size)
    F = None
    for k, t in enumerate(times):
        res = lagrangian(model, grid, rhos[k], rate[k], schedule(t), tol=tol, F0=F)
        values[k], F = res.value, res.F
    return float(integrate.trapezoid(values, times))


def current_decomposition(model: Model, grid: Grid1D, rho, drive: Drive, dV):
    """Symmetric, antisymmetric and adjoint currents for a given ``dV`` field.

    Returns ``(J_s, J_a, J_adj)``.  Boundary fluxes of the adjoint current
    are ``-kappa M'(dV)`` on the left and ``+kappa M'(dV)`` on the right
    (inward and outward orientation as in :class:`CurrentField`);
    ``J_s = (J + J_adj) / 2`` there as in the bulk.
    """
    grid.check(rho, dV)
    J = current_of(model, grid, rho, drive)
    sig = face_mobility(model, rho)
    Js_in = -sig * grid.grad(dV)
    adj = CurrentField(
        -J.interior + 2.0 * Js_in,
        -drive.kappa_left * float(model.M_p(drive.lam_left, rho[0], dV[0], "left")),
        drive.kappa_right * float(model.M_p(drive.lam_right, rho[-1], dV[-1], "right")),
    )
    Js = CurrentField(Js_in, 0.5 * (J.left + adj.left), 0.5 * (J.right + adj.right))
    return Js, J - Js, adj


def orthogonality_residuals(model: Model, grid: Grid1D, rho, drive: Drive, dV, F=None):
    """Residuals of the orthogonality between antisymmetric and symmetric currents.

    The first value is ``int J_a sigma^-1 J_s - H_bd(rho, dV)``.  When the
    auxiliary profile ``F`` is given (no field, scalar diffusion) the second
    value is ``int J_a sigma^-1 J_s + sum_bd (d(rho) - d(F)) / sigma(rho) J_a.n``
    with ``J_a = -sigma(rho) grad f'(F)`` at the boundary, the gradient taken
    by one-sided second-order differences.
    """
    Js, Ja, _ = current_decomposition(model, grid, rho, drive, dV)
    sig = face_mobility(model, rho)
    bulk = float(grid.h * np.sum(Ja.interior * Js.interior / sig))
    first = bulk - boundary_hamiltonian(model, grid, rho, dV, drive)
    if F is None:
        return first, None
    g = model.fprime(F)
    h = grid.h
    slope0 = (-3 * g[0] + 4 * g[1] - g[2]) / (2 * h)
    slope1 = (3 * g[-1] - 4 * g[-2] + g[-3]) / (2 * h)
    psi = model.d(rho[[0, -1]]) - model.d(F[[0, -1]])
    # J_a . n = -sigma grad f'(F) . n, so the boundary term is -psi grad f'(F) . n
    second = bulk - psi[0] * (-slope0) - psi[1] * slope1
    return first, float(second)
