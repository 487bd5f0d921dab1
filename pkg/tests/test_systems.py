import numpy as np
import pytest

from relaxlimit.constitutive import make_cubic_stress, make_gamma_law, make_polynomial_stress
from relaxlimit.entropy import DomainError
from relaxlimit.grid import Grid
from relaxlimit.systems import (
    bar_error_source,
    build_system,
    limit_of,
    reconstruct_bar_state,
    relaxation_residual,
)

EULER = build_system("euler", make_gamma_law(1, 2))
PSYS = build_system("psystem", make_cubic_stress())
VISCO = build_system("visco", make_cubic_stress(), 1.0)


def test_flux_examples():
    np.testing.assert_allclose(EULER.flux(np.array([1.0, 1.0])), [1.0, 2.0])
    cube = build_system("psystem", make_polynomial_stress((0, 0, 0, 1)))
    np.testing.assert_allclose(cube.flux(np.array([2.0, 0.0])), [0.0, -8.0])


def test_state_dimensions_and_unknown_system():
    assert (EULER.state_dim, PSYS.state_dim, VISCO.state_dim) == (2, 2, 3)
    with pytest.raises(ValueError):
        build_system("maxwell", make_cubic_stress())


def test_stiff_source_vanishes_at_equilibrium():
    np.testing.assert_array_equal(EULER.stiff_source(np.array([1.7, 0.0])), [0.0, 0.0])
    np.testing.assert_array_equal(EULER.stiff_source(np.array([1.7, 0.3])), [0.0, -0.3])
    np.testing.assert_array_equal(VISCO.stiff_source(np.array([0.1, 0.2, 0.3])), [0.0, 0.0, -0.3])


def test_euler_jacobian_eigenvalues():
    rho, m, eps = 1.5, 0.6, 0.1
    u, c = m / rho, np.sqrt(2 * rho)
    lam = np.sort(np.linalg.eigvals(EULER.jacobian(np.array([rho, m]), eps)).real)
    np.testing.assert_allclose(lam, [(u - c) / eps, (u + c) / eps], rtol=1e-14)
    lo, hi = EULER.speed_bounds(np.array([rho, m]), eps)
    np.testing.assert_allclose([lo, hi], lam, rtol=1e-14)


def test_total_flux_scaling():
    U = np.array([[1.2], [0.4], [-0.3]])
    eps = 0.2
    # the memory term -mu v has no 1/eps factor relative to the rest of the O(1/eps) flux
    F = VISCO.total_flux(U, eps)
    Fe = EULER.total_flux(U[:2], eps)
    np.testing.assert_allclose(Fe * eps, EULER.flux(U[:2]), rtol=1e-15)
    assert F.shape == (3, 1)


def test_darcy_closure():
    eps = 0.1
    lim = limit_of(EULER)
    g = Grid(0, 1, 16)
    Ub = reconstruct_bar_state(np.full(16, 1.3), lim, eps, g)
    np.testing.assert_array_equal(Ub[1], 0.0)
    errs = []
    for n in (64, 128):
        g = Grid(0, 2 * np.pi, n)
        rho = 2 + 0.5 * np.sin(g.x)
        m = lim.reconstruct(rho, eps, g)[1]
        exact = -eps * 2 * rho * 0.5 * np.cos(g.x)
        errs.append(np.max(np.abs(m - exact)))
    np.testing.assert_allclose(errs[0] / errs[1], 4.0, rtol=0.02)


def test_closures_are_linear_in_eps():
    g = Grid(0, 1, 32)
    u = 0.5 * np.sin(2 * np.pi * g.x)
    for sysm, W in ((PSYS, u), (VISCO, np.stack([u, np.cos(2 * np.pi * g.x)]))):
        lim = limit_of(sysm)
        a = lim.reconstruct(W, 0.1, g)[-1]
        b = lim.reconstruct(W, 0.2, g)[-1]
        np.testing.assert_allclose(b, 2 * a, rtol=1e-15)


def test_bar_vacuum_is_rejected():
    g = Grid(0, 1, 8)
    with pytest.raises(DomainError):
        limit_of(EULER).reconstruct(np.zeros(8), 0.1, g)


# symbolic values of the damped-variable error source on the 2 pi torus, eps = 0.1:
# p-system with u = sin(x)/2, tau = u + u^3; visco with u = sin(x)/2, v = cos x, mu = 1
PSYS_ORACLE = {0.3: -0.0026556277420187045409, 1.7: 0.084981350815280187749, 4.0: 0.17941138628107064501}
VISCO_ORACLE = {0.3: 0.034036577728889891303, 1.7: 0.014247844984164072246, 4.0: -0.045836214690646824577}


def _grid_centred_at(xv, n):
    dx = 2 * np.pi / n
    return Grid(xv - dx / 2, xv - dx / 2 + 2 * np.pi, n)


@pytest.mark.parametrize("xv", [0.3, 1.7, 4.0])
def test_error_sources_match_symbolic_oracle(xv):
    for sysm, oracle in ((PSYS, PSYS_ORACLE), (VISCO, VISCO_ORACLE)):
        lim = limit_of(sysm)
        errs = []
        for n in (64, 128, 256):
            g = _grid_centred_at(xv, n)
            u = 0.5 * np.sin(g.x)
            W = u if sysm is PSYS else np.stack([u, np.cos(g.x)])
            errs.append(abs(bar_error_source(W, lim, 0.1, g)[-1][0] - oracle[xv]))
        np.testing.assert_allclose(np.array(errs[:-1]) / np.array(errs[1:]), 4.0, rtol=0.05)


def test_error_source_vanishes_for_constant_profile():
    g = Grid(0, 1, 16)
    for sysm, W in ((EULER, np.full(16, 1.5)), (PSYS, np.full(16, 0.2)), (VISCO, np.full((2, 16), 0.2))):
        np.testing.assert_array_equal(bar_error_source(W, limit_of(sysm), 0.1, g), 0.0)


@pytest.mark.parametrize("sysm", [EULER, PSYS, VISCO], ids=lambda s: s.name)
def test_error_source_is_the_discrete_residual(sysm):
    """The reconstructed bar state solves the semi-discrete relaxation system up to error_source."""
    g = Grid(0, 1, 64)
    s = np.sin(2 * np.pi * g.x)
    W = {"euler": 2 + 0.5 * s, "psystem": 0.5 * s, "visco": np.stack([0.5 * s, np.cos(2 * np.pi * g.x)])}[sysm.name]
    lim = limit_of(sysm)
    Ub = lim.reconstruct(W, 0.1, g)
    r = relaxation_residual(Ub, lim.bar_time_derivative(W, 0.1, g), sysm, 0.1, g)
    src = lim.error_source(W, 0.1, g)
    np.testing.assert_allclose(r, src, rtol=0, atol=1e-12 * np.max(np.abs(r)))
