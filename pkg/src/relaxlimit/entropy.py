"""Entropy pairs, relative entropies and relative fluxes for the three systems.

Every relative quantity comes in two forms.  The closed form (``euler_relative_entropy``
and friends) is what the solvers and diagnostics use; it is arranged to avoid the
cancellation of the defining Taylor remainder.  The ``*_literal`` variants evaluate
the definition ``F(U) - F(Ubar) - dF(Ubar)(U - Ubar)`` term by term.  They use only
arithmetic and the law callables, so they also run on ``mpmath`` scalars, which is
how the identity checks get a high-precision oracle.

Fluxes are written for ``U_t + (1/eps) G(U)_x = S(U)/eps^2`` (Euler, p-system) and
``U_t + (1/eps) G_eps(U)_x = S(U)/eps^2`` (viscoelasticity, where ``G_eps`` keeps an
O(eps) part).  Entropy fluxes follow the same scaling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .constitutive import InternalEnergy, PressureLaw, StressLaw, _remainder_quotient
from .grid import Grid

VACUUM_FLOOR = 1e-10
BAR_FLOOR = 1e-6


class DomainError(ValueError):
    """State outside the domain where an entropy quantity is defined."""


class EulerState(NamedTuple):
    rho: np.ndarray
    m: np.ndarray


class PSystemState(NamedTuple):
    u: np.ndarray
    v: np.ndarray


class ViscoState(NamedTuple):
    u: np.ndarray
    v: np.ndarray
    z: np.ndarray


def _check_euler(s: EulerState, floor: float = 0.0, what: str = "state"):
    rho = np.asarray(s.rho, dtype=float)
    m = np.asarray(s.m, dtype=float)
    if np.any(rho < 0) or np.any((rho <= floor) & (m != 0)):
        raise DomainError(f"{what}: density below floor {floor:g} with nonzero momentum or negative density")
    return rho, m


def _check_bar(sb: EulerState):
    rb = np.asarray(sb.rho, dtype=float)
    if np.any(rb <= BAR_FLOOR):
        raise DomainError(f"reference density must exceed {BAR_FLOOR:g}")
    return rb, np.asarray(sb.m, dtype=float)


def _velocity(rho, m):
    return np.divide(m, rho, out=np.zeros(np.broadcast(rho, m).shape), where=rho > 0)


_SPLITTER = 134217729.0  # 2^27 + 1


def _two_prod(a, b):
    """a*b as an unevaluated sum p + e, exact barring over/underflow (Dekker)."""
    p = a * b
    c = _SPLITTER * a
    ah = c - (c - a)
    al = a - ah
    c = _SPLITTER * b
    bh = c - (c - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _velocity_difference(rho, m, rb, mb):
    """m/rho - mb/rb, accurate to a few ulps even when the velocities nearly agree."""
    p1, e1 = _two_prod(m, rb)
    p2, e2 = _two_prod(mb, rho)
    num = (p1 - p2) + (e1 - e2)
    shape = np.broadcast(rho, m, rb, mb).shape
    return np.where(rho > 0, num / np.where(rho > 0, rho * rb, 1.0), np.broadcast_to(-mb / rb, shape))


# ---------------------------------------------------------------- Euler


def euler_flux(s: EulerState, law: PressureLaw):
    rho, m = _check_euler(s)
    return np.stack([m, m * _velocity(rho, m) + law.p(rho)])


def euler_entropy(s: EulerState, h: InternalEnergy):
    rho, m = _check_euler(s)
    return 0.5 * m * _velocity(rho, m) + h.h(rho)


def euler_entropy_flux(s: EulerState, h: InternalEnergy):
    rho, m = _check_euler(s)
    u = _velocity(rho, m)
    return 0.5 * m * u * u + m * np.where(rho > 0, h.dh(np.maximum(rho, VACUUM_FLOOR)), 0.0)


def euler_entropy_gradient(s: EulerState, h: InternalEnergy):
    """(d eta/d rho, d eta/d m)."""
    rho, m = _check_euler(s, floor=VACUUM_FLOOR)
    u = m / rho
    return -0.5 * u * u + h.dh(rho), u


def euler_relative_entropy(s: EulerState, sb: EulerState, h: InternalEnergy):
    rho, m = _check_euler(s)
    rb, mb = _check_bar(sb)
    w = _velocity_difference(rho, m, rb, mb)
    return 0.5 * rho * w * w + h.relative(rho, rb)


def euler_relative_flux(s: EulerState, sb: EulerState, law: PressureLaw, h: InternalEnergy):
    rho, m = _check_euler(s)
    rb, mb = _check_bar(sb)
    ub = mb / rb
    w = _velocity_difference(rho, m, rb, mb)
    # rho (h'(rho) - h'(rhobar)) -> 0 at vacuum, where h' itself may diverge
    dh = h.dh_difference(np.maximum(rho, VACUUM_FLOOR), rb)
    return 0.5 * m * w * w + np.where(rho > 0, rho * dh, 0.0) * w + ub * h.relative(rho, rb)


def euler_relative_flux_tensor(s: EulerState, sb: EulerState, law: PressureLaw):
    """Scalar (1x1) relative momentum flux rho (u - ubar)^2 + p(rho|rhobar)."""
    rho, m = _check_euler(s)
    rb, mb = _check_bar(sb)
    w = _velocity_difference(rho, m, rb, mb)
    return rho * w * w + law.relative(rho, rb)


def euler_relative_flux_tensor_nd(rho, m, rho_bar, m_bar, law: PressureLaw):
    """d x d relative momentum flux for a single state with vector momentum."""
    m = np.asarray(m, dtype=float)
    m_bar = np.asarray(m_bar, dtype=float)
    if rho < 0 or rho_bar <= BAR_FLOOR:
        raise DomainError("density out of range")
    w = (m / rho if rho > 0 else 0.0 * m) - m_bar / rho_bar
    return rho * np.outer(w, w) + law.relative(rho, rho_bar) * np.eye(m.size)


def euler_R(s: EulerState, sb: EulerState):
    rho, m = _check_euler(s)
    rb, mb = _check_bar(sb)
    w = _velocity_difference(rho, m, rb, mb)
    return rho * w * w


def euler_Q(s: EulerState, sb: EulerState, law: PressureLaw, dxx_hprime):
    """-(h'(rhobar))_xx times the relative momentum flux."""
    return -np.asarray(dxx_hprime) * euler_relative_flux_tensor(s, sb, law)


def euler_E(s: EulerState, sb: EulerState, ebar):
    rho, m = _check_euler(s)
    rb, mb = _check_bar(sb)
    return np.asarray(ebar) * (rho / rb) * _velocity_difference(rho, m, rb, mb)


def euler_error_term(rho_bar, law: PressureLaw, eps: float, grid: Grid, order: int = 2):
    """Momentum residual left by the Darcy closure m = -eps p(rhobar)_x.

    ``eps [ ((p_x)^2/rhobar)_x - (p'(rhobar) p(rhobar)_xx)_x ]`` with centred
    differences; at order 2 the second derivative is the first applied twice, which
    matches the limit solver exactly.
    """
    rho_bar = np.asarray(rho_bar, dtype=float)
    if np.any(rho_bar <= BAR_FLOOR):
        raise DomainError(f"reference density must exceed {BAR_FLOOR:g}")
    p = law.p(rho_bar)
    px = grid.ddx(p, order)
    pxx = grid.wide_laplacian(p) if order == 2 else grid.ddx(px, order)
    return eps * (grid.ddx(px * px / rho_bar, order) - grid.ddx(law.dp(rho_bar) * pxx, order))


def hessian_R(rho: float, m):
    """Hessian of |m|^2/rho in the variables (rho, m_1..m_d)."""
    m = np.asarray(m, dtype=float).ravel()
    if not rho > 0:
        raise DomainError("Hessian needs rho > 0")
    d = m.size
    H = np.empty((d + 1, d + 1))
    H[0, 0] = 2.0 * (m @ m) / rho ** 3
    H[0, 1:] = H[1:, 0] = -2.0 * m / rho ** 2
    H[1:, 1:] = 2.0 / rho * np.eye(d)
    return H


def hessian_R_eigenvalues(rho: float, m):
    """Closed-form spectrum {0, 2/rho (d-1 times), 2/rho + 2|m|^2/rho^3}, ascending."""
    m = np.asarray(m, dtype=float).ravel()
    if not rho > 0:
        raise DomainError("Hessian needs rho > 0")
    d = m.size
    return np.array([0.0] + [2.0 / rho] * (d - 1) + [2.0 / rho + 2.0 * (m @ m) / rho ** 3])


# -------------------------------------------------- literal Taylor remainders


def euler_relative_entropy_literal(s, sb, h):
    rho, m = s
    rb, mb = sb
    ub = mb / rb
    eta = 0.5 * m * m / rho + h.h(rho)
    eta_b = 0.5 * mb * mb / rb + h.h(rb)
    return eta - eta_b - (-0.5 * ub * ub + h.dh(rb)) * (rho - rb) - ub * (m - mb)


def euler_relative_flux_literal(s, sb, law, h):
    rho, m = s
    rb, mb = sb
    ub = mb / rb
    q = 0.5 * m * m * m / (rho * rho) + m * h.dh(rho)
    q_b = 0.5 * mb * mb * mb / (rb * rb) + mb * h.dh(rb)
    f = m * m / rho + law.p(rho)
    f_b = mb * mb / rb + law.p(rb)
    return q - q_b - (-0.5 * ub * ub + h.dh(rb)) * (m - mb) - ub * (f - f_b)


def euler_relative_flux_tensor_literal(s, sb, law):
    rho, m = s
    rb, mb = sb
    ub = mb / rb
    f = m * m / rho + law.p(rho)
    f_b = mb * mb / rb + law.p(rb)
    return f - f_b - (-ub * ub + law.dp(rb)) * (rho - rb) - 2 * ub * (m - mb)


def euler_R_literal(s, sb):
    rho, m = s
    rb, mb = sb
    ub = mb / rb
    return m * m / rho - mb * mb / rb + ub * ub * (rho - rb) - 2 * ub * (m - mb)


def energy_relative_literal(f, df, a, b):
    """f(a|b) straight from the definition."""
    return f(a) - f(b) - df(b) * (a - b)


# ---------------------------------------------------------------- p-system


def psystem_flux(s: PSystemState, stress: StressLaw):
    return np.stack([-np.asarray(s.v, dtype=float), -stress.tau(s.u)])


def psystem_energies(s: PSystemState, stress: StressLaw):
    """(E, F) = (v^2/2 + W(u), -v tau(u))."""
    u, v = s
    return 0.5 * v * v + stress.W(u), -v * stress.tau(u)


def psystem_relative(s: PSystemState, sb: PSystemState, stress: StressLaw):
    u, v = s
    ub, vb = sb
    dv = v - vb
    return 0.5 * dv * dv + stress.energy_relative(u, ub), -dv * stress.difference(u, ub)


def psystem_relative_literal(s, sb, stress):
    u, v = s
    ub, vb = sb
    E = 0.5 * v * v + stress.W(u)
    E_b = 0.5 * vb * vb + stress.W(ub)
    F = -v * stress.tau(u)
    F_b = -vb * stress.tau(ub)
    tb = stress.tau(ub)
    Erel = E - E_b - tb * (u - ub) - vb * (v - vb)
    # flux G = (-v, -tau(u))
    Frel = F - F_b - tb * (-(v - vb)) - vb * (-(stress.tau(u) - tb))
    return Erel, Frel


# ---------------------------------------------------------------- viscoelasticity


def visco_flux_terms(s: ViscoState, sigma: StressLaw, mu: float):
    """Flux split G_eps = G0 + eps G1 for the eps-scaled form; returns (G0, G1)."""
    u, v, z = (np.asarray(c, dtype=float) for c in s)
    G0 = np.stack([np.zeros_like(v), -z, -mu * v])
    G1 = np.stack([-v, -sigma.tau(u), np.zeros_like(v)])
    return G0, G1


def visco_energies(s: ViscoState, sigma: StressLaw, mu: float, eps: float):
    """(E, F_eps) = (Sigma(u) + v^2/2 + z^2/(2 mu), -(eps sigma(u) v + v z))."""
    u, v, z = s
    return sigma.W(u) + 0.5 * v * v + z * z / (2.0 * mu), -(eps * sigma.tau(u) * v + v * z)


def visco_relative(s: ViscoState, sb: ViscoState, sigma: StressLaw, mu: float, eps: float):
    u, v, z = s
    ub, vb, zb = sb
    dv = v - vb
    dz = z - zb
    E = sigma.energy_relative(u, ub) + 0.5 * dv * dv + dz * dz / (2.0 * mu)
    F = -eps * sigma.difference(u, ub) * dv - dv * dz
    return E, F


def visco_relative_literal(s, sb, sigma, mu, eps):
    u, v, z = s
    ub, vb, zb = sb
    E = sigma.W(u) + 0.5 * v * v + z * z / (2 * mu)
    E_b = sigma.W(ub) + 0.5 * vb * vb + zb * zb / (2 * mu)
    F = -(eps * sigma.tau(u) * v + v * z)
    F_b = -(eps * sigma.tau(ub) * vb + vb * zb)
    sb_ = sigma.tau(ub)
    Erel = E - E_b - sb_ * (u - ub) - vb * (v - vb) - (zb / mu) * (z - zb)
    # flux G_eps = (-eps v, -eps sigma(u) - z, -mu v)
    dG = (-eps * (v - vb), -eps * (sigma.tau(u) - sb_) - (z - zb), -mu * (v - vb))
    Frel = F - F_b - sb_ * dG[0] - vb * dG[1] - (zb / mu) * dG[2]
    return Erel, Frel


# ---------------------------------------------------------------- far-field pair


@dataclass(frozen=True)
class ModifiedPair:
    """Entropy pair shifted by an affine function so it vanishes at both far-field states.

    ``eta~ = eta - s (rho - (rho_+ + rho_-)/2) - (h(rho_+) + h(rho_-))/2``,
    ``q~ = q - s m`` with ``s`` the secant slope of ``h`` between the far-field densities.
    """

    rho_minus: float
    rho_plus: float
    h: InternalEnergy
    slope: float
    offset: float
    flux_sign: float = 1.0  # -1 injects a sign error in the flux shift (used to test the checker)

    def eta(self, s: EulerState):
        return euler_entropy(s, self.h) - self.slope * (np.asarray(s.rho) - 0.5 * (self.rho_plus + self.rho_minus)) - self.offset

    def q(self, s: EulerState):
        return euler_entropy_flux(s, self.h) - self.flux_sign * self.slope * np.asarray(s.m)

    def gradient(self, s: EulerState):
        e_rho, e_m = euler_entropy_gradient(s, self.h)
        return e_rho - self.slope, e_m

    def relative_literal(self, s: EulerState, sb: EulerState):
        g_rho, g_m = self.gradient(sb)
        return (self.eta(s) - self.eta(sb) - g_rho * (np.asarray(s.rho) - sb.rho)
                - g_m * (np.asarray(s.m) - sb.m))


def modified_pair(rho_minus: float, rho_plus: float, h: InternalEnergy, flux_sign: float = 1.0) -> ModifiedPair:
    if rho_minus <= BAR_FLOOR or rho_plus <= BAR_FLOOR:
        raise DomainError("far-field densities must be positive")
    if rho_plus == rho_minus:
        slope = float(h.dh(rho_plus))
    else:
        slope = float((h.h(rho_plus) - h.h(rho_minus)) / (rho_plus - rho_minus))
    offset = 0.5 * float(h.h(rho_plus) + h.h(rho_minus))
    return ModifiedPair(float(rho_minus), float(rho_plus), h, slope, offset, flux_sign)


# ---------------------------------------------------------------- consistency


def euler_consistency_defect(s: EulerState, law: PressureLaw, q_fn, eta_grad_fn, step: float = 1e-5):
    """Relative mismatch between grad q and grad(eta) dG, with grad q by central differences.

    ``q_fn`` and ``eta_grad_fn`` take an EulerState; G = (m, m^2/rho + p).
    """
    rho = np.asarray(s.rho, dtype=float)
    m = np.asarray(s.m, dtype=float)
    hr = step * np.maximum(1.0, np.abs(rho))
    hm = step * np.maximum(1.0, np.abs(m))
    dq_drho = (q_fn(EulerState(rho + hr, m)) - q_fn(EulerState(rho - hr, m))) / (2 * hr)
    dq_dm = (q_fn(EulerState(rho, m + hm)) - q_fn(EulerState(rho, m - hm))) / (2 * hm)
    e_rho, e_m = eta_grad_fn(s)
    u = m / rho
    # dG/drho = (0, -u^2 + p'), dG/dm = (1, 2u)
    want_rho = e_m * (-u * u + law.dp(rho))
    want_m = e_rho + 2.0 * u * e_m
    scale = np.maximum(1.0, np.maximum(np.abs(want_rho), np.abs(want_m)))
    return np.maximum(np.abs(dq_drho - want_rho), np.abs(dq_dm - want_m)) / scale


# ---------------------------------------------------------------- lemma bounds


def _sup(x):
    x = np.asarray(x, dtype=float)
    return float(np.max(np.where(np.isnan(x), np.inf, x)))


@dataclass
class LemmaReport:
    pressure_ratio_sup: float     # sup p(rho|rhobar)/h(rho|rhobar)
    flux_ratio_sup: float         # sup |f(U|Ubar)| / eta(U|Ubar)
    flux_ratio_bound: float       # max(2, pressure_ratio_sup)
    C1: float                     # inf h(rho|rhobar)/(rho-rhobar)^2 for rho <= R0
    C2: float | None              # inf h(rho|rhobar)/|rho-rhobar|^gamma for rho > R0
    R0: float
    diagonal_limit_error: float   # |h(rhobar+d|rhobar)/d^2 - h''(rhobar)/2| at small d
    holds: bool


def lemma_bound_checks(law: PressureLaw, h: InternalEnergy, rng: np.random.Generator,
                       K=(0.5, 4.0), n_pairs: int = 100_000, rho_max: float = 1e3) -> LemmaReport:
    """Sampled constants for the bounds relating p(.|.), f(.|.) and h(.|.)."""
    lo, hi = K
    rb = rng.uniform(lo, hi, n_pairs)
    rho = np.exp(rng.uniform(np.log(1e-8), np.log(rho_max), n_pairs))
    rho[: max(1, n_pairs // 100)] = 0.0
    m = rng.normal(0.0, 3.0, n_pairs) * rho
    mb = rng.normal(0.0, 3.0, n_pairs) * rb

    # overflow (e.g. exponential laws at large rho) reads as an unbounded ratio
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        hq = h.relative_quotient(rho, rb)
        if law.is_gamma_law:
            pq = law.relative(rho, rb) / np.where(rho == rb, 1.0, (rho - rb) ** 2)
        else:
            pq = _remainder_quotient(law.d2p, rho, rb)
        keep = rho != rb
        c = _sup(pq[keep] / hq[keep])

        s = EulerState(rho, m)
        sb = EulerState(rb, mb)
        eta_rel = euler_relative_entropy(s, sb, h)
        f_rel = euler_relative_flux_tensor(s, sb, law)
        pos = eta_rel > 0
        C = _sup(np.abs(f_rel[pos]) / eta_rel[pos])
    bound = max(2.0, c)

    R0 = 2.0 * hi
    inner = rho <= R0
    C1 = float(np.min(hq[inner]))
    C2 = None
    if law.gamma is not None and law.gamma > 1 and np.any(~inner):
        outer = ~inner
        C2 = float(np.min(h.relative(rho[outer], rb[outer]) / np.abs(rho[outer] - rb[outer]) ** law.gamma))

    probe = np.linspace(lo, hi, 17)
    lim = h.relative_quotient(probe + 1e-7 * probe, probe)
    lim_err = float(np.max(np.abs(lim - 0.5 * h.d2h(probe)) / (0.5 * h.d2h(probe))))

    holds = bool(np.isfinite(c) and C <= bound * (1 + 1e-10) and C1 > 0 and (C2 is None or C2 > 0))
    return LemmaReport(c, C, bound, C1, C2, R0, lim_err, holds)


@dataclass
class StressBoundReport:
    sup_ratio: float
    holds: bool


def stress_bound_check(stress: StressLaw, u_max: float = 1e3, n: int = 10_000,
                       ubar_range=(-1.0, 1.0), n_bar: int = 41) -> StressBoundReport:
    """sup |tau(u|ubar)| / W(u|ubar) over |u| <= u_max and ubar in a compact range."""
    u = np.linspace(-u_max, u_max, n)[None, :]
    ub = np.linspace(*ubar_range, n_bar)[:, None]
    num = np.abs(stress.relative_quotient(u, ub))
    den = stress.energy_relative_quotient(u, ub)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, num / den, np.where(num > 0, np.inf, 0.0))
    sup = float(np.max(ratio))
    return StressBoundReport(sup, bool(np.isfinite(sup)))
