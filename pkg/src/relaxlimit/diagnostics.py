"""Relative-entropy bookkeeping, Gronwall audits, rate fits and Hilbert checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid
from .systems import LimitSystem, RelaxationSystem

LEDGER_COLUMNS = ("t", "phi", "diss_cum", "Q_cum", "E_cum", "res_max", "mass_err")


@dataclass
class EntropyLedger:
    """Time series of the relative-entropy balance for one run.

    ``phi`` is the relative entropy, ``diss_cum``, ``Q_cum`` and ``E_cum`` the time
    integrals of the dissipation, quadratic and error terms, ``res_max`` the
    largest cell entropy residual since the previous record and ``mass_err`` the
    difference of total mass between the relaxation and limit solutions.
    """

    t: np.ndarray
    phi: np.ndarray
    diss_cum: np.ndarray
    Q_cum: np.ndarray
    E_cum: np.ndarray
    res_max: np.ndarray
    mass_err: np.ndarray
    eps: float = float("nan")
    dx: float = float("nan")
    dt: float = float("nan")
    residual_int_max: float = 0.0
    phi_floor: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    schedule: object = None
    final_bar: object = None

    def columns(self):
        return {name: getattr(self, name) for name in LEDGER_COLUMNS}

    @property
    def residual_constant(self) -> float:
        """C in  max_n sum_i r_i dx <= C (dx + dt)."""
        return max(0.0, self.residual_int_max) / (self.dx + self.dt)

    @property
    def phi_final(self) -> float:
        return float(self.phi[-1])


class LedgerRecorder:
    def __init__(self, system: RelaxationSystem, limit: LimitSystem | None, eps: float, grid: Grid, dt: float):
        self.system = system
        self.limit = limit
        self.eps = eps
        self.grid = grid
        self.dt = dt
        self.rows = []
        self.floors = []
        self.res_int_max = -np.inf
        self._last = None
        self._mass0 = None
        self._t0 = None

    def note_residual(self, integrated: float):
        self.res_int_max = max(self.res_int_max, integrated)

    def _balance(self, U, W):
        g = self.grid
        Ub = self.limit.reconstruct(W, self.eps, g)
        diss = g.integrate(self.system.relative_dissipation(U, Ub, self.eps))
        Q, E = self.limit.relative_source_terms(U, W, self.eps, g)
        return Ub, (diss, g.integrate(Q), g.integrate(E))

    def accumulate(self, t, U, W):
        """Add a sample to the time integrals without writing a ledger row."""
        _, terms = self._balance(U, W)
        self._advance(t, terms)

    def _advance(self, t, terms):
        if self._last is None:
            self._last = (t, terms, (0.0, 0.0, 0.0))
            return
        t0, prev, cum = self._last
        h = t - t0
        if h > 0:
            cum = tuple(c + 0.5 * h * (a + b) for c, a, b in zip(cum, prev, terms))
        self._last = (t, terms, cum)

    def record(self, t, U, W, res_max: float = 0.0):
        g = self.grid
        mi = self.system.mass_index
        mass = g.integrate(U[mi])
        if self._t0 is None:
            self._t0 = t
        if W is None:
            if self._mass0 is None:
                self._mass0 = mass
            self.rows.append((t, np.nan, np.nan, np.nan, np.nan, res_max, mass - self._mass0))
            self.floors.append(np.nan)
            return
        Ub, terms = self._balance(U, W)
        self._advance(t, terms)
        phi = compute_phi(U, Ub, self.system, g)
        mass_err = mass - g.integrate(Ub[mi])
        self.rows.append((t, phi, *self._last[2], res_max, mass_err))
        steps = int(round((t - self._t0) / self.dt)) if self.dt > 0 else 0
        self.floors.append(resolution_floor(mass_err, Ub, self.system, g, steps, U))

    def finish(self) -> EntropyLedger:
        cols = np.array(self.rows, dtype=float).T
        res_int = self.res_int_max if np.isfinite(self.res_int_max) else 0.0
        return EntropyLedger(*cols, eps=self.eps, dx=self.grid.dx, dt=self.dt,
                             residual_int_max=res_int, phi_floor=np.array(self.floors),
                             meta={"system": self.system.name, "cells": self.grid.cells})


def compute_phi(U, Ub, system: RelaxationSystem, grid: Grid) -> float:
    """Integrated relative entropy (midpoint rule)."""
    return float(grid.integrate(system.relative_entropy(np.asarray(U), np.asarray(Ub))))


def resolution_floor(mass_err: float, Ub, system: RelaxationSystem, grid: Grid, steps: int = 0,
                     U=None) -> float:
    """Level below which ``phi`` is indistinguishable from solver noise.

    Two contributions, the larger wins:

    * by Jensen, a mass difference ``dM`` alone forces
      ``phi >= min(k) dM^2 / (2 |Omega|)`` with ``k`` the curvature of the energy in
      the conserved variable.  Both exact discrete solutions conserve mass, so a
      nonzero ``dM`` is noise;
    * rounding after ``steps`` steps may have moved each cell by up to
      ``steps * u * max|U|`` (``u`` the unit round-off), worth
      ``max(k, 1) (steps u max|U|)^2 |Omega| / 2`` of relative entropy.
    """
    k = system.conserved_curvature(Ub)
    floor = 0.5 * float(np.min(k)) * mass_err ** 2 / grid.length
    if steps and U is not None:
        drift = steps * np.finfo(float).eps * float(np.max(np.abs(U)))
        floor = max(floor, 0.5 * max(float(np.max(k)), 1.0) * drift ** 2 * grid.length)
    return floor


@dataclass
class GronwallResult:
    C: float
    satisfied: bool
    cap: float
    ratios: np.ndarray


def gronwall_audit(ledger: EntropyLedger, eps: float | None = None, cap: float = 1e3) -> GronwallResult:
    """Smallest C with phi(t) <= C (phi(0) + eps^4) over the recorded times."""
    eps = ledger.eps if eps is None else eps
    phi = np.asarray(ledger.phi, dtype=float)
    if phi.size == 0 or not np.all(np.isfinite(phi)):
        return GronwallResult(np.inf, False, cap, phi)
    ratios = phi / (phi[0] + eps ** 4)
    C = float(np.max(ratios))
    return GronwallResult(C, bool(C <= cap), cap, ratios)


def fit_rate(eps, phi) -> tuple[float, float]:
    """Least-squares slope and prefactor of log phi against log eps."""
    eps = np.asarray(eps, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if eps.size < 4 or eps.size != phi.size:
        raise ValueError("need at least four (eps, phi) pairs")
    if np.any(np.diff(eps) >= 0):
        raise ValueError("eps values must be strictly decreasing")
    if np.any(~(phi > 0)) or np.any(~np.isfinite(phi)):
        raise ValueError("phi values must be positive and finite")
    slope, intercept = np.polyfit(np.log(eps), np.log(phi), 1)
    return float(slope), float(np.exp(intercept))


@dataclass
class RateAssessment:
    rate: float
    constant: float
    valid: bool
    reasons: list


def assess_rate(eps, phi, floors, floor_margin: float = 100.0) -> RateAssessment:
    """Fit a rate and say whether the data can support it.

    A fit is only meaningful if every phi(T) sits well above its resolution floor
    and phi decreases monotonically with eps.
    """
    eps = np.asarray(eps, dtype=float)
    phi = np.asarray(phi, dtype=float)
    floors = np.asarray(floors, dtype=float)
    reasons = []
    try:
        rate, const = fit_rate(eps, phi)
    except ValueError as exc:
        return RateAssessment(float("nan"), float("nan"), False, [str(exc)])
    low = phi < floor_margin * floors
    if np.any(low):
        reasons.append("phi(T) within a factor %g of the solver-noise floor at eps=%s"
                       % (floor_margin, ", ".join(f"{e:g}" for e in eps[low])))
    if np.any(np.diff(phi) >= 0):
        reasons.append("phi(T) does not decrease monotonically with eps")
    return RateAssessment(rate, const, not reasons, reasons)


@dataclass
class HilbertResult:
    eps: np.ndarray
    residual: np.ndarray        # ||w/eps - w1||_inf per eps
    relative: np.ndarray        # residual / ||w1||_inf
    decreasing: bool
    regression_relative: float  # through-origin fit on the coarsest grid


def _onto(grid, f, target):
    """Move ``f`` from ``grid`` to the coarser ``target``: cell averages when the
    grids nest, linear interpolation at the target centres otherwise."""
    if grid.cells % target.cells == 0 and (grid.x_min, grid.x_max) == (target.x_min, target.x_max):
        return grid.restrict(f, target.cells)
    period = grid.x_max - grid.x_min if grid.periodic else None
    return np.interp(target.x, grid.x, f, period=period)


def hilbert_check(eps, states, bars, limit: LimitSystem) -> HilbertResult:
    """First-order Hilbert coefficient of the damped variable.

    ``states`` are relaxation fields and ``bars`` the limit solutions (both
    GridFields) at the same time for each eps.  For each run the damped variable
    divided by eps is compared with the closure evaluated at eps = 1 on the run's
    own grid.  A through-origin regression of the damped variable on eps over all
    runs, moved to the coarsest grid, gives a second estimate.
    """
    eps = np.asarray(eps, dtype=float)
    k = limit.relaxation.damped
    res, rel, w1s = [], [], []
    for e, s, b in zip(eps, states, bars):
        w1 = limit.reconstruct(b.data, 1.0, b.grid)[k]
        diff = s.data[k] / e - w1
        res.append(float(np.max(np.abs(diff))))
        rel.append(res[-1] / max(float(np.max(np.abs(w1))), np.finfo(float).tiny))
        w1s.append(w1)
    coarse = min((s.grid for s in states), key=lambda g: g.cells)
    W = np.array([_onto(s.grid, s.data[k], coarse) for s in states])
    w1_hat = (eps @ W) / (eps @ eps)
    ref_state = states[int(np.argmin(eps))]
    ref = _onto(ref_state.grid, w1s[int(np.argmin(eps))], coarse)
    reg = float(np.max(np.abs(w1_hat - ref)) / max(float(np.max(np.abs(ref))), np.finfo(float).tiny))
    order = np.argsort(-eps)
    r_sorted = np.array(rel)[order]
    decreasing = bool(np.all(np.diff(r_sorted) < 0))
    return HilbertResult(eps, np.array(res), np.array(rel), decreasing, reg)


@dataclass
class InequalityResult:
    holds: bool
    max_violation: float
    first_violation_t: float | None


def inequality_audit(ledger: EntropyLedger, rtol: float = 2e-2, atol: float = 0.0) -> InequalityResult:
    """Check phi(t) - phi(0) <= -diss_cum - Q_cum - E_cum at every record.

    The cumulative terms are trapezoid sums over the record times, so the check
    is made up to ``rtol`` times the size of the terms involved.
    """
    lhs = ledger.phi - ledger.phi[0]
    rhs = -ledger.diss_cum - ledger.Q_cum - ledger.E_cum
    scale = np.abs(ledger.phi) + ledger.phi[0] + np.abs(ledger.diss_cum) + np.abs(ledger.Q_cum) + np.abs(ledger.E_cum)
    excess = lhs - rhs - (rtol * scale + atol)
    bad = excess > 0
    worst = float(np.max(lhs - rhs)) if lhs.size else 0.0
    first = float(ledger.t[np.argmax(bad)]) if np.any(bad) else None
    return InequalityResult(not np.any(bad), worst, first)


@dataclass
class SweepReport:
    """Per-eps results of a sweep and the fitted convergence rate."""

    epsilon: np.ndarray
    cells: np.ndarray
    phi_T: np.ndarray
    phi_floor_T: np.ndarray
    C: np.ndarray
    rate: float
    fitted_constant: float
    fit_valid: bool
    notes: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    phi_max: np.ndarray | None = None
    rate_max: float = float("nan")

    @classmethod
    def from_ledgers(cls, ledgers, floor_margin: float = 100.0, meta=None) -> "SweepReport":
        eps = np.array([lg.eps for lg in ledgers])
        order = np.argsort(-eps)
        ledgers = [ledgers[i] for i in order]
        eps = eps[order]
        phi_T = np.array([lg.phi_final for lg in ledgers])
        floors = np.array([lg.phi_floor[-1] for lg in ledgers])
        C = np.array([gronwall_audit(lg).C for lg in ledgers])
        cells = np.array([lg.meta.get("cells", 0) for lg in ledgers])
        fit = assess_rate(eps, phi_T, floors, floor_margin)
        phi_max = np.array([float(np.max(lg.phi)) for lg in ledgers])
        try:
            rate_max = fit_rate(eps, phi_max)[0]
        except ValueError:
            rate_max = float("nan")
        return cls(eps, cells, phi_T, floors, C, fit.rate, fit.constant, fit.valid, fit.reasons,
                   dict(meta or {}), phi_max, rate_max)

    def C_variation(self) -> float:
        """Largest ratio of Gronwall constants between consecutive eps."""
        C = self.C
        if C.size < 2 or np.any(~(C > 0)):
            return float("inf")
        return float(np.max(np.maximum(C[1:] / C[:-1], C[:-1] / C[1:])))
