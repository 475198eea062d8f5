import numpy as np
import pytest
from hypothesis import given, strategies as st

from weakcontact import functionals as fn
from weakcontact.errors import PoleError, ShapeError
from weakcontact.functionals import Drive, Grid1D
from weakcontact.models import KMP, SEP, ZeroRange

GRID = Grid1D(24)


def _profile(x, a=0.3, b=0.4, c=0.05):
    return a + b * x + c * np.sin(3 * np.pi * x)


def test_grid_quadrature_and_gradient():
    x = GRID.nodes
    assert GRID.integrate(2 + 3 * x) == pytest.approx(3.5, rel=1e-15)
    assert np.allclose(GRID.grad(x**2), 2 * GRID.cells)
    with pytest.raises(ShapeError):
        GRID.check(np.zeros(5))
    with pytest.raises(ShapeError):
        Grid1D(4)


def test_drive_validation():
    with pytest.raises(ValueError):
        Drive(0.0, 0.0, kappa_left=0.0)
    d = Drive(0.1, 0.2, E=np.zeros(GRID.n_cells))
    assert not d.has_field and d.same_as(d.with_())


def test_discrete_einstein_relation_at_faces():
    for model, rho in ((SEP(), _profile(GRID.nodes)), (KMP(), 1 + _profile(GRID.nodes)),
                       (ZeroRange(rate="constant"), 2 * _profile(GRID.nodes))):
        sig = fn.face_mobility(model, rho)
        assert np.allclose(sig * np.diff(model.fprime(rho)), np.diff(model.d(rho)), atol=1e-15)


def test_face_mobility_for_equal_neighbours():
    rho = np.full(GRID.n_nodes, 0.3)
    assert np.allclose(fn.face_mobility(SEP(), rho), 0.21)


@pytest.mark.parametrize("model,base", [(SEP(), 0.0), (KMP(), 1.0), (ZeroRange(rate="linear"), 0.5)])
def test_hamiltonian_derivatives_by_finite_differences(model, base):
    x = GRID.nodes
    rho = base + _profile(x)
    lam = (-1.0, -0.6) if isinstance(model, KMP) else (-0.4, 0.2)
    drive = Drive(*lam, 1.5, 0.7, E=0.0 if isinstance(model, KMP) else 0.8)
    F = 0.1 * np.cos(2 * np.pi * x)
    H = lambda G: fn.full_hamiltonian(model, GRID, rho, G, drive)
    grad = fn.hamiltonian_gradient(model, GRID, rho, F, drive)
    eye = np.eye(GRID.n_nodes)
    eps = 1e-6
    fd = np.array([(H(F + eps * e) - H(F - eps * e)) / (2 * eps) for e in eye])
    assert np.allclose(grad, fd, atol=1e-8)
    ab = fn.hamiltonian_hessian(model, GRID, rho, F, drive)
    dense = np.diag(ab[1]) + np.diag(ab[0, 1:], 1) + np.diag(ab[2, :-1], -1)
    fd2 = np.array([(fn.hamiltonian_gradient(model, GRID, rho, F + eps * e, drive)
                     - fn.hamiltonian_gradient(model, GRID, rho, F - eps * e, drive)) / (2 * eps) for e in eye])
    assert np.allclose(dense, fd2.T, atol=1e-6)
    assert fn.full_hamiltonian(model, GRID, rho, np.zeros_like(F), drive) == 0.0


def test_boundary_pole_is_reported():
    model = KMP()
    rho = np.ones(GRID.n_nodes)
    F = np.zeros(GRID.n_nodes)
    F[0] = 5.0  # beyond 1/tau
    with pytest.raises(PoleError):
        fn.boundary_hamiltonian(model, GRID, rho, F, Drive(-1.0, -1.0))
    assert np.isinf(fn.boundary_hamiltonian(model, GRID, rho, F, Drive(-1.0, -1.0), strict=False))


def test_currents_and_hydrodynamic_rate_agree():
    model = SEP()
    rho = _profile(GRID.nodes)
    drive = Drive(-0.5, 0.5, 2.0, 1.0, 0.3)
    J = fn.current_of(model, GRID, rho, drive)
    div = np.zeros(GRID.n_nodes)
    full = J.as_array()
    div[:-1] += full[1:-1]
    div[1:] -= full[1:-1]
    div[0] -= J.left
    div[-1] += J.right
    assert np.allclose(fn.hydro_rhs(model, GRID, rho, drive), -div / GRID.weights, atol=1e-12)


@given(seed=st.integers(0, 10**6))
def test_lagrangian_is_nonnegative_and_vanishes_on_hydrodynamics(seed):
    r = np.random.default_rng(seed)
    model = SEP()
    rho = _profile(GRID.nodes, c=r.uniform(-0.08, 0.08))
    drive = Drive(r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(0.5, 2), r.uniform(0.5, 2), r.uniform(-1, 1))
    hydro = fn.hydro_rhs(model, GRID, rho, drive)
    assert abs(fn.lagrangian(model, GRID, rho, hydro, drive).value) < 1e-12
    G = hydro + r.normal(scale=0.5, size=GRID.n_nodes)
    assert fn.lagrangian(model, GRID, rho, G, drive).value >= 0.0


def test_current_decomposition_adds_up():
    model = SEP()
    rho = _profile(GRID.nodes)
    drive = Drive(-0.5, 0.5)
    dV = 0.2 * np.sin(np.pi * GRID.nodes)
    Js, Ja, adj = fn.current_decomposition(model, GRID, rho, drive, dV)
    J = fn.current_of(model, GRID, rho, drive)
    assert np.allclose((Js + Ja).as_array(), J.as_array())
    assert np.allclose((J + adj).as_array(), 2 * Js.as_array())


def test_action_of_hydrodynamic_path_vanishes_with_sampling():
    # the only error is the finite-difference rate, entering quadratically
    from weakcontact.pde import SolverOptions, evolve_hydro

    model = SEP()
    drive = Drive(-0.5, 0.5)
    values = []
    for dt in (0.02, 0.01):
        opts = SolverOptions(dt=dt, rtol=1e-12, atol=1e-14)
        traj = evolve_hydro(model, GRID, _profile(GRID.nodes), drive, 0.2, opts)
        values.append(fn.action(model, GRID, traj.times, traj.rho, lambda t: drive))
    assert values[1] < values[0] / 3


def test_bulk_hamiltonian_on_affine_profile_matches_quadrature():
    from scipy.integrate import quad

    exact = -0.2 + quad(lambda x: (0.4 + 0.2 * x) * (0.6 - 0.2 * x), 0.0, 1.0)[0]
    errors = []
    for n in (32, 64):
        grid = Grid1D(n)
        x = grid.nodes
        errors.append(abs(fn.bulk_hamiltonian(SEP(), grid, 0.4 + 0.2 * x, x, Drive(0.0, 0.0)) - exact))
    assert errors[1] < 1e-4 and (errors[1] < 1e-14 or errors[0] / errors[1] > 3.5)


def test_boundary_hamiltonian_values():
    rho, F = np.full(GRID.n_nodes, 0.5), np.ones(GRID.n_nodes)
    drive = Drive(0.0, 0.0)
    assert fn.boundary_hamiltonian(SEP(), GRID, rho, 0 * F, drive) == 0.0
    assert fn.boundary_hamiltonian(SEP(), GRID, rho, F, drive) == pytest.approx(np.cosh(1.0) - 1.0, rel=1e-14)
    assert fn.full_hamiltonian(SEP(), GRID, rho, F, drive) == pytest.approx(np.cosh(1.0) - 1.0, rel=1e-14)
