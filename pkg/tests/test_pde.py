import numpy as np
import pytest
from scipy.integrate import solve_bvp

from weakcontact import functionals as fn
from weakcontact import pde
from weakcontact.errors import ConfigError, DomainError, PreconditionError
from weakcontact.functionals import Drive, Grid1D
from weakcontact.models import KMP, SEP, NonRevExclusion, ZeroRange
from weakcontact.pde import ProtocolSchedule, SolverOptions

sep = SEP()


def sep_drive(a, b, kl=1.0, kr=1.0, E=0.0):
    return Drive(float(sep.xi(a)), float(sep.xi(b)), kl, kr, E)


def test_sep_robin_profile_is_affine():
    # hand algebra: rho = a + b x with 0.2 - a = -b and a + b - 0.8 = -b
    grid = Grid1D(64)
    res = pde.solve_stationary(sep, grid, sep_drive(0.2, 0.8))
    assert np.max(np.abs(res.rho - (0.4 + 0.2 * grid.nodes))) < 1e-12
    assert res.is_attractor and res.method == "newton"


def test_kmp_robin_profile_is_affine():
    grid = Grid1D(64)
    res = pde.solve_stationary(KMP(), grid, Drive(-1.0, -0.5))
    assert np.max(np.abs(res.rho - (4 + grid.nodes) / 3)) < 1e-12


def test_zero_range_robin_profile():
    # g(k) = k gives rho_t = rho_xx; inflow kappa (e^lam - rho)
    grid = Grid1D(32)
    res = pde.solve_stationary(ZeroRange(rate="linear"), grid, Drive(np.log(1.0), np.log(3.0), 2.0, 2.0))
    # a - 1 = ... : 2 (1 - a) = -b and 2 (a + b - 3) = -b  =>  b = 1, a = 1.5
    assert np.max(np.abs(res.rho - (1.5 + grid.nodes))) < 1e-12


def test_equilibrium_profile_is_flat():
    grid = Grid1D(32)
    res = pde.solve_stationary(sep, grid, sep_drive(0.35, 0.35, 0.5, 3.0))
    assert np.max(np.abs(res.rho - 0.35)) < 1e-13


def _bvp_oracle(a, b, kl, kr, E, x):
    def rhs(_, y):
        rho, J = y
        return np.vstack((rho * (1 - rho) * E - J, np.zeros_like(J)))

    def bc(y0, y1):
        return np.array([y0[1] - kl * (a - y0[0]), y1[1] - kr * (y1[0] - b)])

    mesh = np.linspace(0, 1, 401)
    guess = np.vstack((a + (b - a) * mesh, np.zeros_like(mesh)))
    sol = solve_bvp(rhs, bc, mesh, guess, tol=1e-10)
    assert sol.success
    return sol.sol(x)[0]


def test_field_driven_profile_against_boundary_value_solver():
    errs = []
    for n in (32, 64):
        grid = Grid1D(n)
        rho = pde.solve_stationary(sep, grid, sep_drive(0.3, 0.6, 2.0, 0.5, 1.5)).rho
        errs.append(np.max(np.abs(rho - _bvp_oracle(0.3, 0.6, 2.0, 0.5, 1.5, grid.nodes))))
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] > 3.5  # second order


def test_schedule_interpolation_and_slowing():
    a, b = sep_drive(0.3, 0.3), sep_drive(0.6, 0.5)
    s = ProtocolSchedule.ramp(a, b, 2.0, shape="linear")
    assert s(0.0).same_as(a) and s(5.0).same_as(b)
    assert s(1.0).lam_left == pytest.approx(0.5 * (a.lam_left + b.lam_left))
    slow = s.slowed(0.5)
    assert slow.end_time == 4.0 and slow(2.0).same_as(s(1.0))
    assert np.allclose(slow.breakpoints(), [0.0, 4.0])
    assert s.eventually_constant(2.0)
    with pytest.raises(ConfigError):
        ProtocolSchedule((0.0, 0.0), (a, b))
    with pytest.raises(ConfigError):
        ProtocolSchedule((0.0,), (a,), shape="cubic")


def test_evolution_relaxes_and_balances_mass():
    grid = Grid1D(32)
    drive = sep_drive(0.2, 0.7, 1.0, 2.0, 0.5)
    rho0 = np.full(grid.n_nodes, 0.5) + 0.1 * np.sin(np.pi * grid.nodes)
    traj = pde.evolve_hydro(sep, grid, rho0, drive, 20.0)
    rhobar = pde.solve_stationary(sep, grid, drive).rho
    assert np.max(np.abs(traj.final - rhobar)) < 1e-8
    exchange = traj.ledger["influx_left"] - traj.ledger["outflux_right"]
    assert np.allclose(traj.mass() - traj.mass()[0], exchange, atol=1e-10)
    work = fn.free_energy_functional(sep, grid, traj.final) - fn.free_energy_functional(sep, grid, rho0)
    L = traj.ledger
    assert L["work"][-1] - work == pytest.approx(L["bulk_dissipation"][-1] + L["boundary_dissipation"][-1], abs=1e-9)


def test_schemes_agree():
    grid = Grid1D(16)
    drive = sep_drive(0.2, 0.7)
    rho0 = np.full(grid.n_nodes, 0.5)
    ref = pde.evolve_hydro(sep, grid, rho0, drive, 0.1, SolverOptions(dt=1e-3))
    imex = pde.evolve_hydro(sep, grid, rho0, drive, 0.1, SolverOptions(dt=1e-4, scheme="imex"))
    expl = pde.evolve_hydro(sep, grid, rho0, drive, 0.1, SolverOptions(dt=5e-4, scheme="explicit"))
    assert np.max(np.abs(imex.final - ref.final)) < 1e-4
    assert np.max(np.abs(expl.final - ref.final)) < 1e-4


def test_explicit_step_beyond_stability_is_rejected():
    grid = Grid1D(64)
    with pytest.raises(ConfigError):
        pde.evolve_hydro(sep, grid, np.full(grid.n_nodes, 0.5), sep_drive(0.2, 0.7), 0.1,
                         SolverOptions(dt=0.01, scheme="explicit"))


def test_attractor_probe_curves_decay():
    grid = Grid1D(32)
    drive = sep_drive(0.2, 0.7)
    rhobar = pde.solve_stationary(sep, grid, drive).rho
    _, curves = pde.attractor_probe(sep, grid, drive, rhobar, n_perturb=3, T=1.0)
    assert np.all(curves[:, -1] < 0.2 * curves[:, 0])


def test_adjoint_equals_forward_in_equilibrium():
    grid = Grid1D(32)
    drive = sep_drive(0.4, 0.4)
    rhobar = np.full(grid.n_nodes, 0.4)
    rho0 = rhobar + 0.1 * np.cos(np.pi * grid.nodes)
    dv = lambda rho: sep.fprime(rho) - sep.fprime(rhobar)
    fwd = pde.evolve_hydro(sep, grid, rho0, drive, 1.0)
    adj = pde.evolve_adjoint(sep, grid, rho0, drive, dv, 1.0)
    assert np.max(np.abs(fwd.rho - adj.rho)) < 1e-8


def test_auxiliary_profile_at_stationarity():
    grid = Grid1D(32)
    drive = sep_drive(0.2, 0.7)
    rhobar = pde.solve_stationary(sep, grid, drive).rho
    sol = pde.solve_F_equation(sep, grid, rhobar, drive, rhobar=rhobar)
    assert np.max(np.abs(sol.F - rhobar)) < 1e-12
    with pytest.raises(PreconditionError):
        pde.solve_F_equation(sep, grid, rhobar, sep_drive(0.2, 0.7, E=1.0))
    with pytest.raises(DomainError):
        pde.solve_F_equation(NonRevExclusion.example(), grid, rhobar, drive)


def test_auxiliary_equation_residual_is_small():
    grid = Grid1D(64)
    drive = sep_drive(0.2, 0.7)
    rho = pde.solve_stationary(sep, grid, drive).rho + 0.05 * np.sin(2 * np.pi * grid.nodes)
    sol = pde.solve_F_equation(sep, grid, rho, drive)
    assert np.max(np.abs(pde.F_equation_residual(sep, grid, rho, sol.F, drive))) < 1e-9
    # F lies between the reservoir densities and differs from rho
    assert np.all((sol.F > 0.2) & (sol.F < 0.7))
    assert np.max(np.abs(sol.F - rho)) > 1e-3
