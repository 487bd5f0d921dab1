"""Relaxation systems in diffusive scaling and their limit equations.

Each relaxation system is written as

    U_t + F_eps(U)_x = S(U) / eps^2,

with ``F_eps = G0/eps`` (plus an O(1) part ``G1`` for viscoelasticity) and a
linear damping source acting on one component.  The limit system evolves the
equilibrium variables; ``reconstruct`` recovers the damped component from the
closure relation, so that the pair (limit state, closure) can be compared with a
relaxation solution through the relative entropy.

All spatial derivatives in the closure and the limit equations use the centred
operator ``D`` of the grid (and ``D D`` for second derivatives).  With the
centred interface flux this makes the bar state an exact semi-discrete solution
of the relaxation scheme up to the error source returned by ``error_source``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import entropy as ent
from .constitutive import InternalEnergy, PressureLaw, StressLaw
from .grid import Grid


class RelaxationSystem:
    name: str = ""
    components: tuple[str, ...] = ()
    damped: int = -1
    mass_index: int = 0
    conserved: tuple[int, ...] = (0,)
    limit_name: str = ""

    @property
    def state_dim(self) -> int:
        return len(self.components)

    def damping_weights(self) -> np.ndarray:
        w = np.zeros(self.state_dim)
        w[self.damped] = 1.0
        return w

    def stiff_source(self, U):
        """Source ``S(U)``; the equation carries ``S(U)/eps^2``."""
        U = np.asarray(U, dtype=float)
        S = np.zeros_like(U)
        S[self.damped] = -U[self.damped]
        return S

    def total_flux(self, U, eps):
        raise NotImplementedError

    def speed_bounds(self, U, eps):
        s = self.max_speed(U, eps)
        return -s, s

    def check_state(self, U):
        pass


class EulerFriction(RelaxationSystem):
    """Isentropic Euler with friction: rho_t + m_x/eps = 0, m_t + (m^2/rho + p)_x/eps = -m/eps^2."""

    name = "euler"
    components = ("rho", "m")
    damped = 1
    conserved = (0,)
    limit_name = "pme"

    def __init__(self, law: PressureLaw, energy: InternalEnergy, vacuum_floor: float = ent.VACUUM_FLOOR):
        self.law = law
        self.energy = energy
        self.vacuum_floor = vacuum_floor

    def flux(self, U):
        return ent.euler_flux(ent.EulerState(*U), self.law)

    def total_flux(self, U, eps):
        rho, m = U
        return np.stack([m, m * m / rho + self.law.p(rho)]) / eps

    def max_speed(self, U, eps):
        rho, m = U
        return (np.abs(m / rho) + np.sqrt(self.law.dp(rho))) / eps

    def speed_bounds(self, U, eps):
        rho, m = U
        u = m / rho
        c = np.sqrt(self.law.dp(rho))
        return (u - c) / eps, (u + c) / eps

    def jacobian(self, U, eps):
        rho, m = (float(x) for x in U)
        u = m / rho
        return np.array([[0.0, 1.0], [self.law.dp(rho) - u * u, 2.0 * u]]) / eps

    def check_state(self, U):
        if not np.all(U[0] > self.vacuum_floor):
            raise VacuumError(f"density fell below {self.vacuum_floor:g}")

    def entropy(self, U):
        return ent.euler_entropy(ent.EulerState(*U), self.energy)

    def entropy_flux(self, U, eps):
        return ent.euler_entropy_flux(ent.EulerState(*U), self.energy) / eps

    def dissipation(self, U, eps):
        rho, m = U
        return m * m / rho / eps ** 2

    def relative_entropy(self, U, Ub):
        return ent.euler_relative_entropy(ent.EulerState(*U), ent.EulerState(*Ub), self.energy)

    def relative_flux(self, U, Ub, eps):
        return ent.euler_relative_flux(ent.EulerState(*U), ent.EulerState(*Ub), self.law, self.energy) / eps

    def relative_dissipation(self, U, Ub, eps):
        return ent.euler_R(ent.EulerState(*U), ent.EulerState(*Ub)) / eps ** 2

    def conserved_curvature(self, Ub):
        return self.energy.d2h(Ub[0])


class DampedPSystem(RelaxationSystem):
    """p-system with damping: u_t - v_x/eps = 0, v_t - tau(u)_x/eps = -v/eps^2."""

    name = "psystem"
    components = ("u", "v")
    damped = 1
    conserved = (0,)
    limit_name = "tau-diffusion"

    def __init__(self, stress: StressLaw):
        self.stress = stress

    def flux(self, U):
        return ent.psystem_flux(ent.PSystemState(*U), self.stress)

    def total_flux(self, U, eps):
        u, v = U
        return np.stack([-v, -self.stress.tau(u)]) / eps

    def max_speed(self, U, eps):
        return np.sqrt(self.stress.dtau(U[0])) / eps

    def jacobian(self, U, eps):
        u = float(U[0])
        return np.array([[0.0, -1.0], [-float(self.stress.dtau(u)), 0.0]]) / eps

    def entropy(self, U):
        return ent.psystem_energies(ent.PSystemState(*U), self.stress)[0]

    def entropy_flux(self, U, eps):
        return ent.psystem_energies(ent.PSystemState(*U), self.stress)[1] / eps

    def dissipation(self, U, eps):
        return U[1] ** 2 / eps ** 2

    def relative_entropy(self, U, Ub):
        return ent.psystem_relative(ent.PSystemState(*U), ent.PSystemState(*Ub), self.stress)[0]

    def relative_flux(self, U, Ub, eps):
        return ent.psystem_relative(ent.PSystemState(*U), ent.PSystemState(*Ub), self.stress)[1] / eps

    def relative_dissipation(self, U, Ub, eps):
        return (U[1] - Ub[1]) ** 2 / eps ** 2

    def conserved_curvature(self, Ub):
        return self.stress.dtau(Ub[0])


class MemoryViscoelasticity(RelaxationSystem):
    """u_t - v_x = 0, v_t - sigma(u)_x - z_x/eps = 0, z_t - mu v_x/eps = -z/eps^2."""

    name = "visco"
    components = ("u", "v", "z")
    damped = 2
    conserved = (0, 1)
    limit_name = "rate-visco"

    def __init__(self, sigma: StressLaw, mu: float = 1.0):
        if not mu > 0:
            raise ValueError("mu must be positive")
        self.sigma = sigma
        self.mu = float(mu)

    def flux(self, U):
        """The 1/eps-scaled part of the flux."""
        return ent.visco_flux_terms(ent.ViscoState(*U), self.sigma, self.mu)[0]

    def total_flux(self, U, eps):
        u, v, z = U
        return np.stack([-v, -self.sigma.tau(u) - z / eps, -self.mu * v / eps])

    def max_speed(self, U, eps):
        return np.sqrt(self.sigma.dtau(U[0]) + self.mu / eps ** 2)

    def jacobian(self, U, eps):
        u = float(U[0])
        return np.array([[0.0, -1.0, 0.0],
                         [-float(self.sigma.dtau(u)), 0.0, -1.0 / eps],
                         [0.0, -self.mu / eps, 0.0]])

    def entropy(self, U):
        return ent.visco_energies(ent.ViscoState(*U), self.sigma, self.mu, 1.0)[0]

    def entropy_flux(self, U, eps):
        return ent.visco_energies(ent.ViscoState(*U), self.sigma, self.mu, eps)[1] / eps

    def dissipation(self, U, eps):
        return U[2] ** 2 / (self.mu * eps ** 2)

    def relative_entropy(self, U, Ub):
        return ent.visco_relative(ent.ViscoState(*U), ent.ViscoState(*Ub), self.sigma, self.mu, 1.0)[0]

    def relative_flux(self, U, Ub, eps):
        return ent.visco_relative(ent.ViscoState(*U), ent.ViscoState(*Ub), self.sigma, self.mu, eps)[1] / eps

    def relative_dissipation(self, U, Ub, eps):
        return (U[2] - Ub[2]) ** 2 / (self.mu * eps ** 2)

    def conserved_curvature(self, Ub):
        return self.sigma.dtau(Ub[0])


class SolverAbort(RuntimeError):
    """Raised when a run cannot continue; maps to exit code 3."""


class VacuumError(SolverAbort):
    pass


# ---------------------------------------------------------------- limits


@dataclass
class LimitSystem:
    """Equilibrium dynamics of a relaxation system.

    ``rhs`` is the semi-discrete right-hand side, ``reconstruct`` the closure for
    the damped variable and ``error_source`` the leftover term when the
    reconstructed state is inserted into the relaxation equations.
    """

    relaxation: RelaxationSystem

    @property
    def name(self) -> str:
        return self.relaxation.limit_name

    @property
    def components(self) -> tuple[str, ...]:
        return {"pme": ("rho",), "tau-diffusion": ("u",), "rate-visco": ("u", "v")}[self.name]

    @property
    def state_dim(self) -> int:
        return len(self.components)

    # nonlinear function whose wide Laplacian drives the scalar limits
    def potential(self, w):
        r = self.relaxation
        return r.law.p(w) if self.name == "pme" else r.stress.tau(w)

    def dpotential(self, w):
        r = self.relaxation
        return r.law.dp(w) if self.name == "pme" else r.stress.dtau(w)

    def rhs(self, W, grid: Grid):
        W = np.atleast_2d(W)
        if self.name == "rate-visco":
            u, v = W
            r = self.relaxation
            return np.stack([grid.ddx(v), grid.ddx(r.sigma.tau(u)) + r.mu * grid.wide_laplacian(v)])
        return grid.wide_laplacian(self.potential(W[0]))[None, :]

    def reconstruct(self, W, eps: float, grid: Grid):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        if self.name == "pme":
            rho = W[0]
            if np.any(rho <= ent.BAR_FLOOR):
                raise ent.DomainError(f"limit density must exceed {ent.BAR_FLOOR:g}")
            return np.stack([rho, -eps * grid.ddx(self.relaxation.law.p(rho))])
        if self.name == "tau-diffusion":
            u = W[0]
            return np.stack([u, eps * grid.ddx(self.relaxation.stress.tau(u))])
        u, v = W
        return np.stack([u, v, eps * self.relaxation.mu * grid.ddx(v)])

    def bar_time_derivative(self, W, eps: float, grid: Grid):
        """Time derivative of ``reconstruct(W)`` along the limit flow."""
        W = np.atleast_2d(np.asarray(W, dtype=float))
        Wt = self.rhs(W, grid)
        if self.name == "pme":
            pt = self.relaxation.law.dp(W[0]) * Wt[0]
            return np.stack([Wt[0], -eps * grid.ddx(pt)])
        if self.name == "tau-diffusion":
            tt = self.relaxation.stress.dtau(W[0]) * Wt[0]
            return np.stack([Wt[0], eps * grid.ddx(tt)])
        return np.stack([Wt[0], Wt[1], eps * self.relaxation.mu * grid.ddx(Wt[1])])

    def error_source(self, W, eps: float, grid: Grid):
        """Residual of the reconstructed state in the relaxation equations.

        Only the damped component is nonzero: the Darcy-type closure makes the
        equilibrium equations hold exactly at the semi-discrete level.
        """
        W = np.atleast_2d(np.asarray(W, dtype=float))
        out = np.zeros((self.relaxation.state_dim, grid.cells))
        if self.name == "pme":
            out[1] = ent.euler_error_term(W[0], self.relaxation.law, eps, grid)
        else:
            out[-1] = self.bar_time_derivative(W, eps, grid)[-1]
        return out

    def relative_source_terms(self, U, W, eps: float, grid: Grid):
        """Per-cell (Q, E) for the relative entropy balance.

        ``phi_t <= -int R/eps^2 - int Q - int E``; Q collects the terms driven by
        derivatives of the bar state, E the pairing with the error source.
        """
        r = self.relaxation
        Ub = self.reconstruct(W, eps, grid)
        if self.name == "pme":
            sb = ent.EulerState(*Ub)
            s = ent.EulerState(*U)
            hxx = grid.wide_laplacian(r.energy.dh(Ub[0]))
            ebar = ent.euler_error_term(Ub[0], r.law, eps, grid)
            return ent.euler_Q(s, sb, r.law, hxx), ent.euler_E(s, sb, ebar)
        src = self.error_source(W, eps, grid)[-1]
        if self.name == "tau-diffusion":
            txx = grid.wide_laplacian(r.stress.tau(Ub[0]))
            Q = -txx * r.stress.relative(U[0], Ub[0])
            E = src * (U[1] - Ub[1])
            return Q, E
        vx = grid.ddx(Ub[1])
        Q = -vx * r.sigma.relative(U[0], Ub[0])
        E = src * (U[2] - Ub[2]) / r.mu
        return Q, E


def build_system(name: str, constitutive, mu: float = 1.0) -> RelaxationSystem:
    """Descriptor for ``euler`` ((law, energy) pair), ``psystem`` or ``visco`` (stress law)."""
    if name == "euler":
        law, energy = constitutive
        return EulerFriction(law, energy)
    if name == "psystem":
        return DampedPSystem(constitutive)
    if name == "visco":
        return MemoryViscoelasticity(constitutive, mu)
    raise ValueError(f"unknown system {name!r}")


def limit_of(system: RelaxationSystem) -> LimitSystem:
    return LimitSystem(system)


def reconstruct_bar_state(W, limit: LimitSystem, eps: float, grid: Grid):
    return limit.reconstruct(W, eps, grid)


def bar_error_source(W, limit: LimitSystem, eps: float, grid: Grid):
    return limit.error_source(W, eps, grid)


def relaxation_residual(U, Ut, system: RelaxationSystem, eps: float, grid: Grid):
    """U_t + D F_eps(U) - S(U)/eps^2 with the centred operator."""
    U = np.asarray(U, dtype=float)
    return Ut + grid.ddx(system.total_flux(U, eps)) - system.stiff_source(U) / eps ** 2
