"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from weakcontact import functionals as fn
from weakcontact import micro, models, pde, thermo
from weakcontact import quasipotential as qp
from weakcontact.functionals import Drive, Grid1D
from weakcontact.micro import MicroConfig
from weakcontact.models import KMP, SEP, NonRevExclusion, ZeroRange
from weakcontact.pde import ProtocolSchedule, SolverOptions

sep, kmp = SEP(), KMP()


def sep_drive(a, b, kl=1.0, kr=1.0, E=0.0):
    return Drive(float(sep.xi(a)), float(sep.xi(b)), kl, kr, E)


def report(k, ok, detail, started):
    line = f"{detail} [{time.perf_counter() - started:.1f}s]"
    ACCEPTANCE[k] = (bool(ok), line)
    print(f"{'PASS' if ok else 'FAIL'} criterion {k}: {line}")
    assert ok, line


def _order(values):
    """Observed order of a sequence computed on grids halving h."""
    values = np.asarray(values)
    return np.log2(values[:-1] / values[1:])


def test_boundary_and_transport_identities():
    t0 = time.perf_counter()
    worst, worst_sign = 0.0, -np.inf
    for model in (sep, ZeroRange(rate="linear"), ZeroRange(rate="constant"), kmp):
        res = models.identity_residuals(model, n=200, seed=2024)
        worst = max(worst, *(v for key, v in res.items() if key != "sign"))
        worst_sign = max(worst_sign, res["sign"])
    ok = worst <= 1e-10 and worst_sign < 0
    report(1, ok, f"max identity residual {worst:.2e} (tol 1e-10), max sign quantity {worst_sign:.2e} (< 0)", t0)


def test_stationary_robin_profiles():
    t0 = time.perf_counter()
    grid = Grid1D(128)
    x = grid.nodes
    e_sep = np.max(np.abs(pde.solve_stationary(sep, grid, sep_drive(0.2, 0.8)).rho - (0.4 + 0.2 * x)))
    # reservoir temperatures 1 and 2: 1 - a = -b and a + b - 2 = -b
    e_kmp = np.max(np.abs(pde.solve_stationary(kmp, grid, Drive(-1.0, -0.5)).rho - (4 + x) / 3))
    report(2, max(e_sep, e_kmp) <= 1e-8, f"sup error SEP {e_sep:.2e}, KMP {e_kmp:.2e} (tol 1e-8)", t0)


PERTURBATIONS = [
    lambda x: 0.05 * np.sin(np.pi * x),
    lambda x: -0.04 * np.sin(2 * np.pi * x),
    lambda x: 0.03 * np.cos(3 * np.pi * x),
    lambda x: 0.06 * x * (1 - x) * 4,
    lambda x: 0.04 * np.sin(np.pi * x) ** 3 - 0.02 * np.cos(np.pi * x),
]


def test_auxiliary_profile_and_hamilton_jacobi_residual():
    t0 = time.perf_counter()
    cases = {"SEP": (sep, sep_drive(0.2, 0.7, 1.0, 1.5), 1.0), "KMP": (kmp, Drive(-1.0, -0.4, 1.0, 2.0), 2.0)}
    worst_fixed, worst_scaled, min_order = 0.0, 0.0, np.inf
    for model, drive, scale in cases.values():
        per_grid = []
        for n in (64, 128, 256):
            grid = Grid1D(n)
            rhobar = pde.solve_stationary(model, grid, drive, probe=False).rho
            F = pde.solve_F_equation(model, grid, rhobar, drive, rhobar=rhobar).F
            worst_fixed = max(worst_fixed, np.max(np.abs(F - rhobar)))
            res = []
            for bump in PERTURBATIONS:
                rho = rhobar + scale * bump(grid.nodes)
                res.append(qp.dV_nonequilibrium(model, grid, rho, drive, rhobar).hj_residual)
                worst_scaled = max(worst_scaled, res[-1] / (1e-6 * n))
            per_grid.append(res)
        min_order = min(min_order, float(np.min(_order(np.array(per_grid)))))
    ok = worst_fixed <= 1e-8 and worst_scaled <= 1.0 and min_order >= 1.8
    report(3, ok, f"|F(rhobar)-rhobar| {worst_fixed:.1e}, max HJ/(1e-6 n) {worst_scaled:.3f}, "
                  f"min observed order {min_order:.2f} (>= 1.8)", t0)


def test_equilibrium_quasipotential_line_integral():
    t0 = time.perf_counter()
    grid = Grid1D(128)
    drive = sep_drive(0.45, 0.45, 1.0, 2.0)
    rhobar = np.full(grid.n_nodes, 0.45)
    worst = 0.0
    for bump in PERTURBATIONS:
        gamma = rhobar + 3 * bump(grid.nodes)
        V = qp.V_line_integral(sep, grid, gamma, drive, n_path=16, rhobar=rhobar).V
        exact = qp.V_closed_form(sep, grid, gamma, rhobar)
        worst = max(worst, abs(V - exact) / exact)
    report(4, worst <= 1e-6, f"max relative error {worst:.2e} over 5 targets (tol 1e-6)", t0)


def test_work_decomposition_on_random_protocols():
    t0 = time.perf_counter()
    r = np.random.default_rng(77)
    grid = Grid1D(32)
    worst, clausius = 0.0, True
    for _ in range(20):
        n_knots = r.integers(2, 4)
        drives = [sep_drive(*r.uniform(0.1, 0.9, 2), *r.uniform(0.3, 3.0, 2), r.uniform(-2, 2))
                  for _ in range(n_knots)]
        knots = np.cumsum(np.r_[0.0, r.uniform(0.2, 1.0, n_knots - 1)])
        schedule = ProtocolSchedule(tuple(knots), tuple(drives), r.choice(["smooth", "linear"]))
        rho0 = np.clip(r.uniform(0.2, 0.8) + 0.1 * np.sin(np.pi * r.integers(1, 4) * grid.nodes), 0.05, 0.95)
        opts = SolverOptions(dt=0.02, rtol=1e-8, atol=1e-10)
        traj = pde.evolve_hydro(sep, grid, rho0, schedule, knots[-1] + r.uniform(0.2, 1.0), opts)
        led = thermo.work_exchanged(sep, traj, schedule)
        worst = max(worst, abs(led.identity_residual) / (abs(led.W) + 1))
        clausius &= led.W >= led.dF
    report(5, worst <= 1e-6 and clausius,
           f"max |W-dF-dissipation|/(|W|+1) {worst:.2e} (tol 1e-6), W >= dF on all 20: {clausius}", t0)


def test_quasistatic_convergence():
    t0 = time.perf_counter()
    grid = Grid1D(64)
    base = ProtocolSchedule.ramp(sep_drive(0.3, 0.3), sep_drive(0.6, 0.6), 1.0)
    res = thermo.quasistatic_sweep(sep, grid, base, [0.2, 0.1, 0.05, 0.025], SolverOptions(dt=0.05))
    ok = res.monotone and np.all((res.ratios >= 1.5) & (res.ratios <= 2.5)) and not res.renormalized
    report(6, ok, f"excess work {np.array2string(res.values, precision=5)}, "
                  f"ratios {np.array2string(res.ratios, precision=3)} (in [1.5, 2.5])", t0)


def test_excess_work_equals_quasipotential():
    t0 = time.perf_counter()
    grid = Grid1D(128)
    opts = SolverOptions(dt=grid.h / 4)
    rho0 = np.full(grid.n_nodes, 0.3)
    ex = thermo.excess_work(sep, grid, sep_drive(0.6, 0.6), rho0, opts)
    V = qp.V_closed_form(sep, grid, rho0, np.full(grid.n_nodes, 0.6))
    err_eq = abs(ex - V) / V
    drive = sep_drive(0.2, 0.7, 1.0, 1.5)
    rhobar = pde.solve_stationary(sep, grid, drive, probe=False).rho
    start = rhobar + 0.1 * np.sin(np.pi * grid.nodes)
    renorm = thermo.renormalized_work(sep, grid, drive, start, opts=opts).renormalized_excess
    Vne = qp.V_line_integral(sep, grid, start, drive, rhobar=rhobar).V
    err_ne = abs(renorm - Vne) / Vne
    report(7, err_eq <= 0.01 and err_ne <= 0.02,
           f"equilibrium quench rel. error {err_eq:.2e} (tol 1e-2), nonequilibrium {err_ne:.2e} (tol 2e-2)", t0)


def test_renormalized_work_in_a_steady_state():
    t0 = time.perf_counter()
    grid = Grid1D(64)
    drive = sep_drive(0.2, 0.7, 1.0, 1.5)
    rhobar = pde.solve_stationary(sep, grid, drive, probe=False).rho
    led = thermo.renormalized_work(sep, grid, drive, rhobar, T=50.0)
    traj = pde.evolve_hydro(sep, grid, rhobar, drive, 50.0)
    slope = np.polyfit(traj.times, traj.ledger["work"], 1)[0]
    J = fn.current_of(sep, grid, rhobar, drive)
    rates = pde.ledger_rates(sep, grid, rhobar, drive, J, fn.face_mobility(sep, rhobar))
    steady = rates[3] + rates[4]
    rel = abs(slope - steady) / steady
    ok = abs(led.renormalized) <= 1e-6 and rel <= 1e-4 and led.W > 0
    report(8, ok, f"renormalized work {led.renormalized:.2e} (tol 1e-6), W slope {slope:.8f} vs steady "
                  f"dissipation {steady:.8f}, rel. {rel:.1e} (tol 1e-4)", t0)


def test_adjoint_dynamics_in_equilibrium():
    t0 = time.perf_counter()
    grid = Grid1D(64)
    drive = sep_drive(0.4, 0.4, 1.0, 2.0)
    rhobar = np.full(grid.n_nodes, 0.4)
    rho0 = rhobar + 0.15 * np.sin(np.pi * grid.nodes) ** 2
    dv = qp.dv_provider(sep, grid, drive, rhobar)
    fwd = pde.evolve_hydro(sep, grid, rho0, drive, 1.0)
    adj = pde.evolve_adjoint(sep, grid, rho0, drive, dv, 1.0)
    err = float(np.max(np.abs(fwd.rho - adj.rho)))
    report(9, err <= 1e-8, f"sup |adjoint - forward| on [0, 1] {err:.2e} (tol 1e-8)", t0)


def test_orthogonality_decays_second_order():
    t0 = time.perf_counter()
    drive = sep_drive(0.2, 0.7, 1.0, 1.5)
    res = []
    for n in (32, 64, 128):
        grid = Grid1D(n)
        rhobar = pde.solve_stationary(sep, grid, drive, probe=False).rho
        rho = rhobar + 0.05 * np.sin(2 * np.pi * grid.nodes)
        ev = qp.dV_nonequilibrium(sep, grid, rho, drive, rhobar)
        res.append(np.abs(fn.orthogonality_residuals(sep, grid, rho, drive, ev.dV, ev.F_aux)))
    orders = _order(np.array(res))
    ok = np.min(orders) >= 1.8
    report(10, ok, f"residuals {np.array2string(np.array(res)[:, 0], precision=2)} and "
                   f"{np.array2string(np.array(res)[:, 1], precision=2)}, min order {np.min(orders):.2f} (>= 1.8)", t0)


def test_small_exclusion_system_against_exact_generator():
    t0 = time.perf_counter()
    drive = sep_drive(0.3, 0.7, 1.0, 1.0, 0.5)
    oracle = micro.exact_generator_oracle(MicroConfig(sep, 4, drive, n_events=1))
    tvs = []
    for seed in (1, 2, 3, 4, 5):
        run = micro.simulate(MicroConfig(sep, 4, drive, seed=seed, n_events=10**6, histogram=True))
        tvs.append(micro.total_variation(run.state_law, oracle.pi))
    report(11, max(tvs) <= 0.01, f"TV distances {np.array2string(np.array(tvs), precision=4)} (tol 0.01)", t0)


def _macro_at_sites(model, drive, N):
    grid = Grid1D(4 * N)
    rho = pde.solve_stationary(model, grid, drive, probe=False).rho
    return np.interp((np.arange(N) + 0.5) / N, grid.nodes, rho)


def test_microscopic_profiles_against_hydrodynamics():
    t0 = time.perf_counter()
    d_sep = sep_drive(0.2, 0.8)
    run = micro.simulate(MicroConfig(sep, 200, d_sep, seed=2, t_end=120.0))
    e_sep = float(np.max(np.abs(run.mean - _macro_at_sites(sep, d_sep, 200))))
    d_kmp = Drive(-1.0, -0.5)
    run = micro.simulate(MicroConfig(kmp, 100, d_kmp, seed=2, t_end=400.0))
    e_kmp = float(np.max(np.abs(run.mean - _macro_at_sites(kmp, d_kmp, 100))))
    z_max = []
    for rate, lam in (("linear", (0.0, np.log(2.0))), ("constant", (np.log(0.3), np.log(0.6)))):
        model = ZeroRange(rate=rate)
        # independent replicas: batch means under-estimate the error for
        # constant-rate ZR, whose density correlations outlive the batches
        means = np.array([
            micro.simulate(MicroConfig(model, 50, Drive(*lam), seed=s, t_end=50.0, burn_in=0.2)).mean
            for s in range(1, 17)
        ])
        se = means.std(axis=0, ddof=1) / np.sqrt(len(means))
        expected = micro.zr_discrete_phi(50, *lam).means(model)
        z_max.append(float(np.max(np.abs(means.mean(axis=0) - expected) / se)))
    ok = e_sep <= 0.02 and e_kmp <= 0.02 and max(z_max) <= 3.0
    report(12, ok, f"sup error SEP N=200 {e_sep:.4f}, KMP N=100 {e_kmp:.4f} (tol 0.02); "
                   f"ZR max |z| linear {z_max[0]:.2f}, constant {z_max[1]:.2f} (tol 3)", t0)


def test_nonreversible_boundary_witness():
    t0 = time.perf_counter()
    model = NonRevExclusion.example()
    _, violation = model.naive_equilibrium_violation()
    cfg = MicroConfig(model, 4, Drive(0.0, 0.0), seed=3, n_events=10**6, histogram=True)
    run = micro.simulate(cfg)
    cov, se = run.covariance(2, 3)
    exact = micro.exact_generator_oracle(cfg)
    states = np.arange(16)
    a, b = (states >> 2) & 1, (states >> 3) & 1
    cov_exact = exact.pi @ (a * b) - (exact.pi @ a) * (exact.pi @ b)
    ok = abs(violation) > 1e-3 and abs(cov) > 3 * se
    report(13, ok, f"naive equilibrium violation {violation:.3f} (> 1e-3); edge-pair covariance "
                   f"{cov:.4f} = {abs(cov) / se:.0f} SE from 0 (exact {cov_exact:.4f})", t0)
