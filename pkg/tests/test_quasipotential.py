import numpy as np
import pytest
from hypothesis import given, strategies as st

from weakcontact import functionals as fn
from weakcontact import quasipotential as qp
from weakcontact.errors import DomainError, PreconditionError
from weakcontact.functionals import Drive, Grid1D
from weakcontact.models import KMP, SEP
from weakcontact.pde import solve_stationary

sep = SEP()
NONEQ = Drive(float(sep.xi(0.2)), float(sep.xi(0.7)), 1.0, 1.5)


def test_equilibrium_line_integral_matches_closed_form():
    grid = Grid1D(32)
    drive = Drive(float(sep.xi(0.4)), float(sep.xi(0.4)), 1.0, 2.0)
    rhobar = np.full(grid.n_nodes, 0.4)
    gamma = rhobar + 0.2 * np.sin(np.pi * grid.nodes) ** 2 - 0.05
    ev = qp.V_line_integral(sep, grid, gamma, drive, n_path=8)
    assert ev.V == pytest.approx(qp.V_closed_form(sep, grid, gamma, rhobar), rel=1e-12)
    assert np.allclose(ev.dV, qp.dV_equilibrium(sep, grid, gamma, drive))


def test_equilibrium_derivative_needs_equilibrium():
    grid = Grid1D(16)
    with pytest.raises(PreconditionError):
        qp.dV_equilibrium(sep, grid, np.full(grid.n_nodes, 0.5), NONEQ)


@pytest.mark.parametrize("model,drive", [(sep, NONEQ), (KMP(), Drive(-1.0, -0.4, 1.0, 1.0))])
def test_hamilton_jacobi_residual_is_second_order(model, drive):
    res = []
    for n in (32, 64, 128):
        grid = Grid1D(n)
        rhobar = solve_stationary(model, grid, drive, probe=False).rho
        rho = rhobar * (1 + 0.1 * np.sin(2 * np.pi * grid.nodes))
        res.append(qp.dV_nonequilibrium(model, grid, rho, drive, rhobar).hj_residual)
    assert res[1] / res[2] > 3.5 and res[0] / res[1] > 3.5


def test_value_does_not_depend_on_path():
    grid = Grid1D(32)
    rhobar = solve_stationary(sep, grid, NONEQ, probe=False).rho
    gamma = rhobar + 0.08 * np.sin(np.pi * grid.nodes)
    seg = qp.V_line_integral(sep, grid, gamma, NONEQ, n_path=12, path="segment", rhobar=rhobar)
    arc = qp.V_line_integral(sep, grid, gamma, NONEQ, n_path=12, path="arc", rhobar=rhobar)
    assert seg.V == pytest.approx(arc.V, rel=1e-6)
    assert seg.V > 0


def test_value_vanishes_at_the_stationary_profile():
    grid = Grid1D(16)
    rhobar = solve_stationary(sep, grid, NONEQ, probe=False).rho
    ev = qp.V_line_integral(sep, grid, rhobar, NONEQ, rhobar=rhobar)
    assert abs(ev.V) < 1e-14 and np.max(np.abs(ev.dV)) < 1e-12


def test_path_leaving_the_state_space_is_refused():
    grid = Grid1D(16)
    rhobar = solve_stationary(sep, grid, NONEQ, probe=False).rho
    gamma = rhobar + 0.6 * np.sin(np.pi * grid.nodes)
    with pytest.raises(DomainError):
        qp.V_line_integral(sep, grid, gamma, NONEQ, rhobar=rhobar)


@given(seed=st.integers(0, 10**6))
def test_time_reversal_identity(seed):
    r = np.random.default_rng(seed)
    grid = Grid1D(16)
    rhobar = solve_stationary(sep, grid, NONEQ, probe=False).rho
    rho = rhobar + r.uniform(-0.05, 0.05) * np.sin(np.pi * grid.nodes)
    rate = r.normal(scale=0.3, size=grid.n_nodes)
    assert qp.time_reversal_check(sep, grid, rho, rate, NONEQ) < 1e-9


def test_equilibrium_quasipotential_is_positive():
    # in equilibrium V is the relative entropy, which is nonnegative
    grid = Grid1D(16)
    rhobar = np.full(grid.n_nodes, 0.3)
    for k in range(1, 4):
        gamma = 0.3 + 0.2 * np.sin(k * np.pi * grid.nodes)
        assert qp.V_closed_form(sep, grid, gamma, rhobar) > 0


def test_stationary_cache_reuses_profiles():
    grid = Grid1D(16)
    cache = qp.StationaryCache(sep, grid)
    assert cache(NONEQ) is cache(Drive(NONEQ.lam_left, NONEQ.lam_right, 1.0, 1.5))
    assert qp.is_equilibrium(sep, grid, Drive(0.3, 0.3, 1.0, 4.0))
    assert not qp.is_equilibrium(sep, grid, NONEQ)


def test_orthogonality_residual_shrinks():
    res = []
    for n in (32, 64):
        grid = Grid1D(n)
        rhobar = solve_stationary(sep, grid, NONEQ, probe=False).rho
        rho = rhobar + 0.05 * np.sin(2 * np.pi * grid.nodes)
        ev = qp.dV_nonequilibrium(sep, grid, rho, NONEQ, rhobar)
        first, second = fn.orthogonality_residuals(sep, grid, rho, NONEQ, ev.dV, ev.F_aux)
        res.append((abs(first), abs(second)))
    assert res[0][0] / res[1][0] > 3.5 and res[0][1] / res[1][1] > 3.5
