import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from relaxlimit.constitutive import make_cubic_stress, make_gamma_law
from relaxlimit.grid import FARFIELD, Grid, GridField
from relaxlimit.profiles import make_profile, paired_initial_state
from relaxlimit.solvers import (
    CFLViolation,
    FarFieldContamination,
    NewtonDivergence,
    RelaxationStepper,
    SolverConfig,
    entropy_residual,
    log_mean,
    run_limit,
    run_to,
    step_limit,
    step_relaxation,
)
from relaxlimit.systems import VacuumError, build_system, limit_of

EULER = build_system("euler", make_gamma_law(1, 2))
PSYS = build_system("psystem", make_cubic_stress())
VISCO = build_system("visco", make_cubic_stress(), 1.0)
SCHEMES = [SolverConfig(), SolverConfig(time_scheme="strang"), SolverConfig(flux="rusanov"),
           SolverConfig(flux="hll", time_scheme="strang", source="implicit-euler")]


def _ids(cfg):
    return f"{cfg.flux}-{cfg.time_scheme}"


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(cfl=1.5)
    with pytest.raises(ValueError):
        SolverConfig(flux="roe")
    with pytest.raises(ValueError):
        SolverConfig(balance_every=0)


@pytest.mark.parametrize("cfg", SCHEMES, ids=_ids)
def test_constant_equilibrium_is_fixed(cfg):
    g = Grid(0, 1, 32)
    U0 = np.stack([np.full(32, 1.7), np.zeros(32)])
    st = RelaxationStepper(EULER, 0.05, g, cfg)
    dt = st.stable_dt(U0)
    U = U0
    for _ in range(1000):
        U = st.step(U, dt)
    np.testing.assert_allclose(U, U0, rtol=1e-13, atol=0)


@pytest.mark.parametrize("sysm", [EULER, PSYS, VISCO], ids=lambda s: s.name)
def test_constant_state_damps_exactly(sysm):
    g = Grid(0, 1, 16)
    U0 = np.array([1.2, 0.3, -0.4][: sysm.state_dim])[:, None] * np.ones(16)
    eps = 0.1
    U1 = step_relaxation(GridField(g, U0), sysm, eps, SolverConfig())
    dt = U1.t
    want = U0.copy()
    want[sysm.damped] *= math.exp(-dt / eps ** 2)
    np.testing.assert_allclose(U1.data, want, rtol=1e-13)


@pytest.mark.parametrize("cfg", SCHEMES, ids=_ids)
@pytest.mark.parametrize("sysm", [EULER, PSYS, VISCO], ids=lambda s: s.name)
def test_single_step_conservation(sysm, cfg):
    g = Grid(0, 1, 64)
    s = np.sin(2 * np.pi * g.x)
    W = {"euler": 2 + 0.5 * s, "psystem": 0.5 * s, "visco": np.stack([0.5 * s, np.cos(2 * np.pi * g.x)])}[sysm.name]
    U, _ = paired_initial_state(limit_of(sysm), W, 0.1, g)
    U1 = step_relaxation(U, sysm, 0.1, cfg)
    mi = sysm.mass_index
    m0, m1 = g.integrate(U.data[mi]), g.integrate(U1.data[mi])
    assert abs(m1 - m0) <= 1e-13 * max(1.0, np.sum(np.abs(U.data[mi])) * g.dx)


def test_limit_step_constant_and_mass():
    lim = limit_of(EULER)
    g = Grid(0, 2 * np.pi, 64)
    c = GridField(g, np.full(64, 1.4))
    np.testing.assert_allclose(step_limit(c, lim, SolverConfig(), 1e-2).data, c.data, rtol=1e-15)
    W = GridField(g, 2 + 0.5 * np.sin(g.x))
    W1 = step_limit(W, lim, SolverConfig(), 1e-2)
    np.testing.assert_allclose(g.integrate(W1.data[0]), g.integrate(W.data[0]), rtol=1e-14)


def test_pme_matches_fine_explicit_reference():
    lim = limit_of(EULER)
    T = 0.05
    gf = Grid(0, 2 * np.pi, 512)

    def rhs(t, r):
        p = r * r
        return (np.roll(p, -1) - 2 * p + np.roll(p, 1)) / gf.dx ** 2

    ref = solve_ivp(rhs, (0, T), 2 + 0.5 * np.sin(gf.x), method="BDF", rtol=1e-11, atol=1e-12).y[:, -1]
    errs = []
    for n, dt in ((32, 4e-3), (64, 1e-3), (128, 2.5e-4)):
        g = Grid(0, 2 * np.pi, n)
        out = run_limit(GridField(g, 2 + 0.5 * np.sin(g.x)), lim,
                        SolverConfig(t_end=T, limit_scheme="backward-euler"), dt)
        errs.append(np.max(np.abs(out.data[0] - gf.restrict(ref, n))))
    # O(dt + dx^2) with dt ~ dx^2: quarter per refinement
    np.testing.assert_allclose(np.array(errs[:-1]) / np.array(errs[1:]), 4.0, rtol=0.1)


def test_newton_failure_aborts():
    g = Grid(0, 1, 64)
    W = GridField(g, 2 + 0.5 * np.sin(2 * np.pi * g.x))
    with pytest.raises(NewtonDivergence):
        step_limit(W, limit_of(EULER), SolverConfig(newton_max_iter=1), 1e-2)


def test_cfl_violation_aborts():
    g = Grid(0, 1, 32)
    U = np.stack([np.ones(32), np.zeros(32)])
    st = RelaxationStepper(EULER, 0.1, g, SolverConfig())
    with pytest.raises(CFLViolation):
        st.step(U, 10 * st.stable_dt(U))


def test_vacuum_aborts():
    g = Grid(0, 1, 64)
    U = GridField(g, np.stack([1 + 0.9999 * np.sin(2 * np.pi * g.x), 30 * np.cos(2 * np.pi * g.x)]))
    with pytest.raises(VacuumError):
        run_to(U, EULER, 0.1, SolverConfig(t_end=0.05))


def test_run_without_observers_equals_repeated_steps():
    g = Grid(0, 1, 32)
    U, _ = paired_initial_state(limit_of(EULER), 2 + 0.5 * np.sin(2 * np.pi * g.x), 0.1, g)
    cfg = SolverConfig(t_end=0.02)
    final, ledger = run_to(U, EULER, 0.1, cfg)
    V = U
    for _ in range(ledger.schedule.steps):
        V = step_relaxation(V, EULER, 0.1, cfg, dt=ledger.schedule.dt)
    np.testing.assert_array_equal(final.data, V.data)


def test_observers_count_and_alignment():
    g = Grid(0, 1, 32)
    lim = limit_of(EULER)
    U, W = paired_initial_state(lim, 2 + 0.5 * np.sin(2 * np.pi * g.x), 0.1, g)
    seen = []
    cfg = SolverConfig(t_end=0.02, output_stride=3)
    final, ledger = run_to(U, EULER, 0.1, cfg, observers=[lambda s, b: seen.append((s.t, b.t))], bar=W)
    sched = ledger.schedule
    assert len(seen) == math.ceil(sched.steps / sched.stride)
    assert all(a == b for a, b in seen)
    assert ledger.final_bar.t == final.t
    np.testing.assert_allclose(final.t, 0.02, rtol=1e-14)
    assert len(ledger.t) == len(seen) + 1


def test_entropy_residual_zero_at_constant_equilibrium():
    g = Grid(0, 1, 32)
    U = GridField(g, np.stack([np.full(32, 1.3), np.zeros(32)]))
    cfg = SolverConfig(flux="rusanov")
    U1 = step_relaxation(U, EULER, 0.1, cfg)
    np.testing.assert_array_equal(entropy_residual(U, U1, EULER, 0.1, cfg), 0.0)


def test_entropy_residual_first_order_for_rusanov():
    cfg = SolverConfig(flux="rusanov")
    lim = limit_of(EULER)
    peaks = []
    for n in (256, 512, 1024):
        g = Grid(0, 1, n)
        U, _ = paired_initial_state(lim, 2 + 0.5 * np.sin(2 * np.pi * g.x), 0.1, g)
        U1 = step_relaxation(U, EULER, 0.1, cfg)
        r = entropy_residual(U, U1, EULER, 0.1, cfg)
        peaks.append(np.max(np.abs(r)))
        # entropy is dissipated overall
        assert np.sum(r) * g.dx <= 0
    np.testing.assert_allclose(np.array(peaks[:-1]) / np.array(peaks[1:]), 2.0, rtol=0.05)


def _farfield_pair(cells, x_max):
    g = Grid(-x_max, x_max, cells, FARFIELD)
    lim = limit_of(EULER)
    rho = make_profile("two-state", g, left=1.0, right=2.0, width=1.0)
    return g, lim, paired_initial_state(lim, rho, 0.1, g)


def test_farfield_boundary_cells_stay_frozen():
    g, lim, (U, W) = _farfield_pair(256, 4.0)
    final, ledger = run_to(U, EULER, 0.1, SolverConfig(t_end=0.1), bar=W)
    np.testing.assert_allclose(final.data[:, 0], U.data[:, 0], rtol=0, atol=1e-13)
    np.testing.assert_allclose(final.data[:, -1], U.data[:, -1], rtol=0, atol=1e-13)
    assert np.all(np.isfinite(ledger.phi)) and np.all(ledger.phi >= 0)


def test_farfield_contamination_aborts():
    g, lim, (U, W) = _farfield_pair(64, 1.2)
    with pytest.raises(FarFieldContamination):
        run_to(U, EULER, 0.1, SolverConfig(t_end=0.1, farfield_tol=1e-12), bar=W)


def test_log_mean_exact_for_exponential_decay():
    # int_0^dt R0 exp(-2t/eps^2) dt / dt with kappa = dt/eps^2
    R0, kappa = 3.0, np.array([1e-6, 1e-3, 0.05, 1.0, 20.0])
    R1 = R0 * np.exp(-2 * kappa)
    np.testing.assert_allclose(log_mean(R0, R1), R0 * -np.expm1(-2 * kappa) / (2 * kappa), rtol=1e-14)


def test_log_mean_special_values():
    np.testing.assert_array_equal(log_mean([2.0, 0.0, 1.0, 0.0], [2.0, 1.0, 0.0, 0.0]), [2.0, 0.0, 0.0, 0.0])


@pytest.mark.parametrize("x", [1e-9, 5e-4, 9.99e-4, 1e-3, 0.3, 0.999])
def test_log_mean_against_high_precision(x):
    with mpmath.workdps(40):
        want = float(mpmath.mpf(x) / -mpmath.log1p(-mpmath.mpf(x)))
    np.testing.assert_allclose(log_mean(1.0, 1.0 - x), want, rtol=1e-14)


@settings(max_examples=200, deadline=None)
@given(a=st.floats(1e-300, 1e300), b=st.floats(1e-300, 1e300))
def test_log_mean_between_geometric_and_arithmetic(a, b):
    m = float(log_mean(a, b))
    assert m == pytest.approx(float(log_mean(b, a)), rel=1e-15)
    assert np.sqrt(a) * np.sqrt(b) * (1 - 1e-12) <= m <= (a / 2 + b / 2) * (1 + 1e-12)
