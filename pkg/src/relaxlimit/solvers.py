"""Time stepping for relaxation systems and their limits.

Relaxation: two time integrators are available.

* ``exp-rk3`` (default): third-order exponential Runge-Kutta (Cox-Matthews ETDRK3)
  with the linear damping as the exponential part.  For frozen forcing it keeps
  the equilibrium ``w = eps^2 g`` exactly, so the effective diffusion of the
  scheme has no step-size bias in the stiff regime.
* ``strang``: Strang splitting of the damping around an SSP-RK3 flux step, the
  damping solved exactly (``w *= exp(-t/eps^2)``) or by backward Euler.  Its
  equilibrium is off by a relative ``(dt/eps^2)^2/24``, which under diffusive
  grid scaling is of the same order as the relaxation error itself.

Interface fluxes are centred (the default, consistent with the limit
discretisation), Rusanov or HLL.

Limit: the scalar diffusions ``w_t = D D f(w)`` are integrated with backward Euler
or BDF2, each step solved by Newton's method with a sparse LU factorisation.  The
rate-type viscoelastic limit treats ``mu v_xx`` implicitly and the rest explicitly.

``run_to`` advances a relaxation solution together with its limit and records the
relative-entropy ledger at the observation times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .diagnostics import EntropyLedger, LedgerRecorder
from .grid import Grid, GridField
from .systems import LimitSystem, RelaxationSystem, SolverAbort

FLUX_SCHEMES = ("central", "rusanov", "hll")
TIME_SCHEMES = ("exp-rk3", "strang")
SOURCE_SCHEMES = ("exact", "implicit-euler")
LIMIT_SCHEMES = ("backward-euler", "bdf2")


class CFLViolation(SolverAbort):
    pass


class NewtonDivergence(SolverAbort):
    pass


class FarFieldContamination(SolverAbort):
    pass


@dataclass
class SolverConfig:
    cfl: float = 0.5
    flux: str = "central"
    time_scheme: str = "exp-rk3"
    source: str = "exact"              # damping solver inside the Strang scheme
    t_end: float = 0.25
    output_stride: int | None = None   # relaxation steps per observation
    observations: int = 100            # used when output_stride is None
    limit_scheme: str = "bdf2"
    limit_dt: float | None = None      # absolute limit step; default limit_dt_eps * eps
    limit_dt_eps: float = 0.01
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    courant_max: float = 1.0
    residual: bool = True
    farfield_tol: float = 1e-8
    balance_every: int = 1             # steps between samples of the entropy-balance integrands
    max_dt_eps2: float | None = 0.05   # run_to caps dt at this multiple of eps^2

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if self.flux not in FLUX_SCHEMES:
            raise ValueError(f"flux must be one of {FLUX_SCHEMES}")
        if self.time_scheme not in TIME_SCHEMES:
            raise ValueError(f"time scheme must be one of {TIME_SCHEMES}")
        if self.source not in SOURCE_SCHEMES:
            raise ValueError(f"source must be one of {SOURCE_SCHEMES}")
        if self.limit_scheme not in LIMIT_SCHEMES:
            raise ValueError(f"limit scheme must be one of {LIMIT_SCHEMES}")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.balance_every < 1:
            raise ValueError("balance_every must be a positive integer")
        if self.max_dt_eps2 is not None and not self.max_dt_eps2 > 0:
            raise ValueError("max_dt_eps2 must be positive")


# ---------------------------------------------------------------- relaxation


def _phi_functions(z: float):
    """phi_1, phi_2, phi_3 of exponential integrators at a scalar z <= 0."""
    if abs(z) < 1e-2:
        # Taylor series; truncation error below 1e-16 for |z| < 1e-2
        terms = [z ** k for k in range(8)]
        fact = [math.factorial(k) for k in range(11)]
        return tuple(sum(terms[k] / fact[k + j] for k in range(8)) for j in (1, 2, 3))
    e = math.expm1(z)
    return e / z, (e - z) / z ** 2, (e - z - 0.5 * z * z) / z ** 3


class RelaxationStepper:
    """Fixed-step integrator for one relaxation system on one grid."""

    def __init__(self, system: RelaxationSystem, eps: float, grid: Grid, cfg: SolverConfig, far=None):
        self.system = system
        self.eps = float(eps)
        self.grid = grid
        self.cfg = cfg
        self.far = far  # (left, right) frozen states for far-field grids
        self.weights = system.damping_weights()[:, None]
        self._cached = None  # (data, eta, entropy-flux divergence, dissipation)
        self._coef = None

    def _padded(self, U):
        g = self.grid
        if g.periodic:
            return np.concatenate([U[:, -1:], U, U[:, :1]], axis=1)
        left, right = self.far
        return np.concatenate([left[:, None], U, right[:, None]], axis=1)

    def interface_flux(self, U):
        Up = self._padded(U)
        F = self.system.total_flux(Up, self.eps)
        FL, FR = F[:, :-1], F[:, 1:]
        scheme = self.cfg.flux
        if scheme == "central":
            return 0.5 * (FL + FR)
        UL, UR = Up[:, :-1], Up[:, 1:]
        if scheme == "rusanov":
            s = self.system.max_speed(Up, self.eps)
            a = np.maximum(s[:-1], s[1:])
            return 0.5 * (FL + FR) - 0.5 * a * (UR - UL)
        lo, hi = self.system.speed_bounds(Up, self.eps)
        sL = np.minimum(np.minimum(lo[:-1], lo[1:]), 0.0)
        sR = np.maximum(np.maximum(hi[:-1], hi[1:]), 0.0)
        return (sR * FL - sL * FR + sL * sR * (UR - UL)) / (sR - sL)

    def _rhs(self, U):
        Fh = self.interface_flux(U)
        return -(Fh[:, 1:] - Fh[:, :-1]) / self.grid.dx

    def _damp(self, U, tau):
        if self.cfg.source == "exact":
            factor = math.exp(-tau / self.eps ** 2)
        else:
            factor = 1.0 / (1.0 + tau / self.eps ** 2)
        return U * (1.0 - self.weights * (1.0 - factor))

    def stable_dt(self, U) -> float:
        return self.cfg.cfl * self.grid.dx / float(np.max(self.system.max_speed(U, self.eps)))

    def courant(self, U, dt) -> float:
        return dt * float(np.max(self.system.max_speed(U, self.eps))) / self.grid.dx

    def _exp_coefficients(self, dt):
        if self._coef is None or self._coef[0] != dt:
            z = -dt / self.eps ** 2
            w = self.weights

            def pick(damped, free):
                return np.where(w > 0, damped, free)

            e, e_half = math.exp(z), math.exp(0.5 * z)
            p1, p2, p3 = _phi_functions(z)
            h1 = _phi_functions(0.5 * z)[0]
            self._coef = (dt, pick(e, 1.0), pick(e_half, 1.0), pick(h1, 1.0),
                          pick(p1, 1.0), pick(p1 - 3 * p2 + 4 * p3, 1 / 6),
                          pick(4 * p2 - 8 * p3, 2 / 3), pick(4 * p3 - p2, 1 / 6))
        return self._coef[1:]

    def step(self, U, dt):
        c = self.courant(U, dt)
        if not c <= self.cfg.courant_max:
            raise CFLViolation(f"Courant number {c:.3g} exceeds {self.cfg.courant_max:g}")
        if self.cfg.time_scheme == "exp-rk3":
            return self._step_exp_rk3(U, dt)
        return self._step_strang(U, dt)

    def _step_exp_rk3(self, U, dt):
        E, Eh, H1, P1, B0, B1, B2 = self._exp_coefficients(dt)
        N0 = self._rhs(U)
        a = Eh * U + 0.5 * dt * H1 * N0
        self.system.check_state(a)
        Na = self._rhs(a)
        b = E * U + dt * P1 * (2.0 * Na - N0)
        self.system.check_state(b)
        Nb = self._rhs(b)
        U = E * U + dt * (B0 * N0 + B1 * Na + B2 * Nb)
        self.system.check_state(U)
        if not np.all(np.isfinite(U)):
            raise SolverAbort("non-finite state")
        return U

    def _step_strang(self, U, dt):
        U = self._damp(U, 0.5 * dt)
        U1 = U + dt * self._rhs(U)
        self.system.check_state(U1)
        U2 = 0.75 * U + 0.25 * (U1 + dt * self._rhs(U1))
        self.system.check_state(U2)
        U = U / 3.0 + 2.0 / 3.0 * (U2 + dt * self._rhs(U2))
        U = self._damp(U, 0.5 * dt)
        self.system.check_state(U)
        if not np.all(np.isfinite(U)):
            raise SolverAbort("non-finite state")
        return U

    # ---- discrete entropy balance

    def entropy_terms(self, U):
        """(eta, divergence of the numerical entropy flux, dissipation density)."""
        system = self.system
        Up = self._padded(U)
        eta_p = system.entropy(Up)
        q = system.entropy_flux(Up, self.eps)
        Q = 0.5 * (q[:-1] + q[1:])
        if self.cfg.flux == "rusanov":
            s = system.max_speed(Up, self.eps)
            Q = Q - 0.5 * np.maximum(s[:-1], s[1:]) * (eta_p[1:] - eta_p[:-1])
        elif self.cfg.flux == "hll":
            lo, hi = system.speed_bounds(Up, self.eps)
            sL = np.minimum(np.minimum(lo[:-1], lo[1:]), 0.0)
            sR = np.maximum(np.maximum(hi[:-1], hi[1:]), 0.0)
            Q = (sR * q[:-1] - sL * q[1:] + sL * sR * (eta_p[1:] - eta_p[:-1])) / (sR - sL)
        divQ = (Q[1:] - Q[:-1]) / self.grid.dx
        return eta_p[1:-1], divQ, system.dissipation(U, self.eps)

    def residual(self, U_old, U_new, dt):
        """Cell residual of the entropy balance over one step (positive = production)."""
        if self._cached is not None and self._cached[0] is U_old:
            _, e0, d0, r0 = self._cached
        else:
            e0, d0, r0 = self.entropy_terms(U_old)
        e1, d1, r1 = self.entropy_terms(U_new)
        self._cached = (U_new, e1, d1, r1)
        return (e1 - e0) / dt + 0.5 * (d0 + d1) + log_mean(r0, r1)


def log_mean(a, b):
    """Logarithmic mean (a - b) / log(a / b) of nonnegative arrays, 0 if either is 0.

    Averages the stiff dissipation over a step: it is exact when the damped
    variable decays like exp(-t/eps^2), where the arithmetic mean is off by
    O((dt/eps^2)^2) relative and the residual constant would blow up in
    initial layers.
    """
    a = np.maximum(np.asarray(a, dtype=float), 0.0)
    b = np.maximum(np.asarray(b, dtype=float), 0.0)
    hi, lo = np.maximum(a, b), np.minimum(a, b)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        x = (hi - lo) / np.where(hi > 0, hi, 1.0)
        # -log(lo/hi): log1p is exact for close values, the logs for distant ones
        log_ratio = np.where(x < 0.5, -np.log1p(-x), np.log(hi) - np.log(lo))
        f = np.where(x < 1e-4, 1 - x / 2 - x * x / 12 - x ** 3 / 24, x / log_ratio)
    return np.where(lo > 0, hi * f, 0.0)


def step_relaxation(state: GridField, system: RelaxationSystem, eps: float, cfg: SolverConfig,
                    dt: float | None = None, far=None) -> GridField:
    """Advance one step; ``dt`` defaults to the CFL step of the current state."""
    grid = state.grid
    if not grid.periodic and far is None:
        far = (state.data[:, 0].copy(), state.data[:, -1].copy())
    stepper = RelaxationStepper(system, eps, grid, cfg, far)
    if dt is None:
        dt = stepper.stable_dt(state.data)
    return state.with_data(stepper.step(state.data, dt), t=state.t + dt)


def entropy_residual(before: GridField, after: GridField, system: RelaxationSystem, eps: float,
                     cfg: SolverConfig, far=None):
    """Per-cell discrete entropy residual of the step ``before -> after``."""
    grid = before.grid
    if not grid.periodic and far is None:
        far = (before.data[:, 0].copy(), before.data[:, -1].copy())
    dt = after.t - before.t
    if not dt > 0:
        raise ValueError("states must be ordered in time")
    return RelaxationStepper(system, eps, grid, cfg, far).residual(before.data, after.data, dt)


# ---------------------------------------------------------------- limit


class LimitIntegrator:
    """Implicit integrator for a limit system on a fixed grid and step size."""

    def __init__(self, limit: LimitSystem, grid: Grid, cfg: SolverConfig, dt: float, far=None):
        self.limit = limit
        self.grid = grid
        self.cfg = cfg
        self.dt = float(dt)
        self.far = far
        self.L = grid.wide_laplacian_matrix()
        self.I = sp.identity(grid.cells, format="csc")
        self.prev = None  # previous state, for BDF2
        self._visco_lu = {}

    def _ghost(self, row):
        if self.grid.periodic:
            return None, None
        return self.far[0][row], self.far[1][row]

    def _scalar_solve(self, rhs, c, guess):
        """Solve w - c D D f(w) = rhs by Newton's method."""
        limit, grid, cfg = self.limit, self.grid, self.cfg
        left = right = None
        if not grid.periodic:
            left, right = (limit.potential(np.asarray(g)) for g in self._ghost(0))
        w = guess.copy()
        scale = max(1.0, float(np.max(np.abs(rhs))))
        for it in range(cfg.newton_max_iter):
            G = w - c * grid.wide_laplacian(limit.potential(w), left, right) - rhs
            res = float(np.max(np.abs(G)))
            if not np.isfinite(res):
                break
            if res <= cfg.newton_tol * scale:
                return w
            J = self.I - c * (self.L @ sp.diags(limit.dpotential(w)))
            w = w - spla.splu(J.tocsc()).solve(G)
        raise NewtonDivergence(f"Newton did not converge in {cfg.newton_max_iter} iterations")

    def _visco_solve(self, rhs_v, c):
        lu = self._visco_lu.get(c)
        if lu is None:
            lu = spla.splu((self.I - c * self.limit.relaxation.mu * self.L).tocsc())
            self._visco_lu[c] = lu
        b = rhs_v
        if not self.grid.periodic:
            # constant ghost values of v contribute an affine term
            vl, vr = self._ghost(1)
            extra = np.zeros_like(b)
            inv = 1.0 / (4.0 * self.grid.dx ** 2)
            extra[0] += vl * inv
            extra[1] += vl * inv
            extra[-1] += vr * inv
            extra[-2] += vr * inv
            b = b + c * self.limit.relaxation.mu * extra
        return lu.solve(b)

    def _explicit_part(self, W):
        r = self.limit.relaxation
        g = self.grid
        if g.periodic:
            return g.ddx(W[1]), g.ddx(r.sigma.tau(W[0]))
        (ul, vl), (ur, vr) = (self._ghost(0)[0], self._ghost(1)[0]), (self._ghost(0)[1], self._ghost(1)[1])
        return g.ddx(W[1], left=vl, right=vr), g.ddx(r.sigma.tau(W[0]), left=r.sigma.tau(ul), right=r.sigma.tau(ur))

    def step(self, W):
        W = np.atleast_2d(W)
        dt = self.dt
        bdf2 = self.cfg.limit_scheme == "bdf2" and self.prev is not None
        if self.limit.name == "rate-visco":
            Eu, Ev = self._explicit_part(W)
            if bdf2:
                Eu0, Ev0 = self._explicit_part(self.prev)
                c = 2.0 * dt / 3.0
                u = (4.0 * W[0] - self.prev[0]) / 3.0 + c * (2.0 * Eu - Eu0)
                v = self._visco_solve((4.0 * W[1] - self.prev[1]) / 3.0 + c * (2.0 * Ev - Ev0), c)
            else:
                u = W[0] + dt * Eu
                v = self._visco_solve(W[1] + dt * Ev, dt)
            new = np.stack([u, v])
        else:
            if bdf2:
                c = 2.0 * dt / 3.0
                rhs = (4.0 * W[0] - self.prev[0]) / 3.0
                guess = 2.0 * W[0] - self.prev[0]
            else:
                c = dt
                rhs = W[0]
                guess = W[0]
            new = self._scalar_solve(rhs, c, guess)[None, :]
        self.prev = W.copy()
        return new


def step_limit(state: GridField, limit: LimitSystem, cfg: SolverConfig, dt: float) -> GridField:
    """One backward-Euler (or IMEX Euler for the viscoelastic limit) step."""
    far = None
    if not state.grid.periodic:
        far = (state.data[:, 0].copy(), state.data[:, -1].copy())
    one_step = SolverConfig(**{**cfg.__dict__, "limit_scheme": "backward-euler"})
    integ = LimitIntegrator(limit, state.grid, one_step, dt, far)
    return state.with_data(integ.step(state.data), t=state.t + dt)


# ---------------------------------------------------------------- driver


@dataclass
class Schedule:
    dt: float
    steps: int
    stride: int
    limit_substeps: int

    @property
    def observations(self) -> int:
        return self.steps // self.stride


def make_schedule(dt_cfl: float, t_span: float, cfg: SolverConfig, limit_dt: float | None) -> Schedule:
    n = max(1, math.ceil(t_span / dt_cfl * (1 - 1e-12)))
    stride = cfg.output_stride or max(1, math.ceil(n / cfg.observations))
    n_obs = math.ceil(n / stride)
    steps = n_obs * stride
    dt = t_span / steps
    sub = 0
    if limit_dt is not None:
        sub = max(1, math.ceil(stride * dt / limit_dt * (1 - 1e-12)))
    return Schedule(dt, steps, stride, sub)


Observer = Callable[[GridField, GridField | None], None]


def run_to(state: GridField, system: RelaxationSystem, eps: float, cfg: SolverConfig,
           observers: Sequence[Observer] = (), bar: GridField | None = None,
           limit: LimitSystem | None = None) -> tuple[GridField, EntropyLedger]:
    """Advance ``state`` to ``cfg.t_end``, optionally paired with a limit solution.

    When ``bar`` (a limit state at the same time) is given, it is advanced with
    the limit integrator to every observation time and the relative-entropy
    ledger is filled; otherwise the ledger only tracks the entropy residual and
    mass.  Observers are called as ``obs(state, reconstructed_bar)`` after every
    ``stride`` relaxation steps.
    """
    grid = state.grid
    t_span = cfg.t_end - state.t
    if not t_span > 0:
        raise ValueError("t_end must be after the state time")
    far = None
    if not grid.periodic:
        far = (state.data[:, 0].copy(), state.data[:, -1].copy())
    stepper = RelaxationStepper(system, eps, grid, cfg, far)
    if limit is None and bar is not None:
        limit = LimitSystem(system)

    limit_dt = None
    if bar is not None:
        limit_dt = cfg.limit_dt if cfg.limit_dt is not None else cfg.limit_dt_eps * eps
    dt_max = stepper.stable_dt(state.data)
    if cfg.max_dt_eps2 is not None:
        # on coarse grids the damped grid-scale modes oscillate within a few CFL
        # steps; resolving the relaxation time keeps the balance quadrature honest
        dt_max = min(dt_max, cfg.max_dt_eps2 * eps * eps)
    sched = make_schedule(dt_max, t_span, cfg, limit_dt)

    integ = None
    if bar is not None:
        if abs(bar.t - state.t) > 1e-14 * max(1.0, abs(state.t)):
            raise ValueError("limit and relaxation states must start at the same time")
        bar_far = None
        if not grid.periodic:
            bar_far = (bar.data[:, 0].copy(), bar.data[:, -1].copy())
        integ = LimitIntegrator(limit, grid, cfg, sched.stride * sched.dt / sched.limit_substeps, bar_far)

    recorder = LedgerRecorder(system, limit, eps, grid, sched.dt)
    U = state.data.copy()
    W = None if bar is None else bar.data.copy()
    t0 = state.t
    recorder.record(t0, U, W)
    # balance integrals: grid-scale acoustic modes oscillate within a few steps, so
    # sparser sampling aliases them into the time integrals
    every = min(sched.stride, cfg.balance_every)

    res_max = 0.0
    W_next = W
    nodes = None
    for n in range(1, sched.steps + 1):
        if integ is not None and (n - 1) % sched.stride == 0:
            W = W_next
            nodes = [W]
            for _ in range(sched.limit_substeps):
                nodes.append(integ.step(nodes[-1]))
            W_next = nodes[-1]
            slopes = None
        U_new = stepper.step(U, sched.dt)
        if cfg.residual:
            r = stepper.residual(U, U_new, sched.dt)
            res_max = max(res_max, float(np.max(np.abs(r))))
            recorder.note_residual(float(np.sum(r) * grid.dx))
        U = U_new
        t = t0 + n * sched.dt
        k = (n - 1) % sched.stride + 1
        if k == sched.stride:
            if not grid.periodic:
                _check_farfield(U, far, cfg.farfield_tol)
            recorder.record(t, U, W_next, res_max=res_max)
            res_max = 0.0
            if observers:
                cur = GridField(grid, U, t, state.components)
                rec = None
                if W_next is not None:
                    rec = GridField(grid, limit.reconstruct(W_next, eps, grid), t, state.components)
                for obs in observers:
                    obs(cur, rec)
        elif W is not None and k % every == 0:
            if slopes is None:
                slopes = [limit.rhs(w, grid) for w in nodes]
            h = sched.stride * sched.dt / sched.limit_substeps
            recorder.accumulate(t, U, _hermite(nodes, slopes, h, k / sched.stride))
    W = W_next

    final = GridField(grid, U, t0 + sched.steps * sched.dt, state.components)
    ledger = recorder.finish()
    ledger.schedule = sched
    if W is not None:
        ledger.final_bar = GridField(grid, W, final.t, limit.components)
    return final, ledger


def _hermite(nodes, slopes, h, theta):
    """Cubic Hermite interpolation of the limit solution inside one observation interval."""
    S = len(nodes) - 1
    s = theta * S
    j = min(int(s), S - 1)
    a = s - j
    h00 = (1 + 2 * a) * (1 - a) ** 2
    h10 = a * (1 - a) ** 2
    h01 = a * a * (3 - 2 * a)
    h11 = a * a * (a - 1)
    return h00 * nodes[j] + h10 * h * slopes[j] + h01 * nodes[j + 1] + h11 * h * slopes[j + 1]


def _check_farfield(U, far, tol):
    left, right = far
    scale = 1.0 + np.abs(left) + np.abs(right)
    err = np.maximum(np.abs(U[:, 0] - left), np.abs(U[:, -1] - right)) / scale
    if np.any(err > tol):
        raise FarFieldContamination("disturbance reached the far-field boundary; enlarge the domain")


def run_limit(bar: GridField, limit: LimitSystem, cfg: SolverConfig, dt: float,
              observers: Sequence[Callable[[GridField], None]] = ()) -> GridField:
    """Advance a limit solution alone to ``cfg.t_end`` with fixed step close to ``dt``."""
    steps = max(1, math.ceil((cfg.t_end - bar.t) / dt * (1 - 1e-12)))
    dt = (cfg.t_end - bar.t) / steps
    far = None if bar.grid.periodic else (bar.data[:, 0].copy(), bar.data[:, -1].copy())
    integ = LimitIntegrator(limit, bar.grid, cfg, dt, far)
    W = bar.data.copy()
    for n in range(1, steps + 1):
        W = integ.step(W)
        cur = bar.with_data(W, t=bar.t + n * dt)
        for obs in observers:
            obs(cur)
    return bar.with_data(W, t=cfg.t_end)
