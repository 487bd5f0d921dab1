"""Randomised identity, consistency and bound checks for the entropy calculus.

Every closed-form relative quantity is compared with its literal definition
(entropy minus its first-order Taylor expansion) evaluated in 40-digit mpmath
arithmetic on the same double-precision inputs.  Sign-definite quantities are
held to a plain relative tolerance.  Quantities that change sign (relative
fluxes, tau(u|ubar)) are measured against the size of their terms, since a
relative error is meaningless at their zeros.

``run_checks`` is what ``relaxlimit check`` executes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import mpmath
import numpy as np

from . import entropy as ent
from .constitutive import (
    InternalEnergy,
    PressureLaw,
    StressLaw,
    check_growth_H,
    check_hypothesis_A,
    check_hypothesis_B,
    make_arctan_stress,
    make_cubic_stress,
    make_exponential_law,
    make_gamma_law,
    make_polynomial_stress,
)
from .systems import build_system

ORACLE_DIGITS = 40
IDENTITY_RTOL = 1e-12
CONSISTENCY_RTOL = 1e-6
HESSIAN_TOL = 1e-8


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""
    asserted: bool = True   # reported-only checks never fail the suite

    def line(self) -> str:
        tag = ("PASS" if self.passed else "FAIL") if self.asserted else ("HOLDS" if self.passed else "VIOLATED")
        extra = f"  {self.detail}" if self.detail else ""
        return f"[{tag}] {self.name}: {self.value:.3e} (tol {self.tolerance:.1e}){extra}"


@dataclass
class CheckSuite:
    results: list = field(default_factory=list)

    def add(self, *args, **kw) -> CheckResult:
        r = CheckResult(*args, **kw)
        self.results.append(r)
        return r

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results if r.asserted)

    def failures(self):
        return [r for r in self.results if r.asserted and not r.passed]

    def __getitem__(self, name) -> CheckResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def lines(self):
        return [r.line() for r in self.results]


# ---------------------------------------------------------------- constitutive specs


@dataclass(frozen=True)
class PressureSpec:
    """Named pressure law: ``gamma`` (k, gamma) or ``exp`` (k)."""

    kind: str = "gamma"
    k: float = 1.0
    gamma: float = 2.0

    def build(self) -> tuple[PressureLaw, InternalEnergy]:
        if self.kind == "gamma":
            return make_gamma_law(self.k, self.gamma)
        if self.kind == "exp":
            return make_exponential_law(self.k)
        raise ValueError(f"unknown pressure law {self.kind!r}")

    def oracle(self):
        """High-precision p, p', h, h' as mpmath callables, written independently of the numpy law."""
        k = mpmath.mpf(self.k)
        if self.kind == "gamma":
            g = mpmath.mpf(self.gamma)
            if self.gamma == 1:
                return _MPLaw(lambda r: k * r, lambda r: k,
                              lambda r: k * r * mpmath.log(r), lambda r: k * (mpmath.log(r) + 1))
            return _MPLaw(lambda r: k * r ** g, lambda r: k * g * r ** (g - 1),
                          lambda r: k / (g - 1) * r ** g, lambda r: k * g / (g - 1) * r ** (g - 1))
        if self.kind == "exp":
            # e(rho) = int_1^rho k e^s / s^2 ds = k (e - e^rho/rho + Ei(rho) - Ei(1))
            def e(r):
                return k * (mpmath.e - mpmath.exp(r) / r + mpmath.ei(r) - mpmath.ei(1))

            return _MPLaw(lambda r: k * mpmath.exp(r), lambda r: k * mpmath.exp(r),
                          lambda r: r * e(r), lambda r: e(r) + k * mpmath.exp(r) / r)
        raise ValueError(f"no oracle for pressure law {self.kind!r}")


@dataclass(frozen=True)
class StressSpec:
    """Named stress law: ``cubic`` (u + u^3), ``poly`` (coefficients) or ``arctan``."""

    kind: str = "cubic"
    coefficients: tuple = ()

    def build(self) -> StressLaw:
        if self.kind == "cubic":
            return make_cubic_stress()
        if self.kind == "poly":
            return make_polynomial_stress(self.coefficients)
        if self.kind == "arctan":
            return make_arctan_stress()
        raise ValueError(f"unknown stress law {self.kind!r}")

    def oracle(self):
        if self.kind in ("cubic", "poly"):
            c = (0.0, 1.0, 0.0, 1.0) if self.kind == "cubic" else tuple(self.coefficients)
            c = [mpmath.mpf(x) for x in c]
            return _MPStress(lambda u: sum(cn * u ** n for n, cn in enumerate(c)),
                             lambda u: sum(cn * u ** (n + 1) / (n + 1) for n, cn in enumerate(c)))
        if self.kind == "arctan":
            return _MPStress(lambda u: u + mpmath.atan(u),
                             lambda u: u * u / 2 + u * mpmath.atan(u) - mpmath.log(1 + u * u) / 2)
        raise ValueError(f"no oracle for stress law {self.kind!r}")

    @property
    def growth(self) -> float:
        return float(self.build().growth or 1.0)


@dataclass(frozen=True)
class _MPLaw:
    p: object
    dp: object
    h: object
    dh: object


@dataclass(frozen=True)
class _MPStress:
    tau: object
    W: object


# ---------------------------------------------------------------- helpers


def _mp_eval(fn, *columns):
    """Evaluate ``fn`` at 40 digits on each row of double columns; returns doubles."""
    out = np.empty(len(columns[0]))
    with mpmath.workdps(ORACLE_DIGITS):
        for i, row in enumerate(zip(*columns)):
            out[i] = float(fn(*(mpmath.mpf(float(x)) for x in row)))
    return out


def _rel_error(closed, oracle, scale=None):
    scale = np.abs(oracle) if scale is None else scale
    err = np.abs(closed - oracle)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(scale > 0, err / scale, np.where(err > 0, np.inf, 0.0))
    return float(np.max(rel)) if rel.size else 0.0


def _fd_gradient(fn, U, step):
    U = np.asarray(U, dtype=float)
    g = np.empty_like(U)
    for j in range(U.size):
        hj = step * max(1.0, abs(U[j]))
        e = np.zeros_like(U)
        e[j] = hj
        g[j] = (fn(U + e) - fn(U - e)) / (2.0 * hj)
    return g


def consistency_defect(eta, q, jacobian, states, step: float = 1e-5) -> float:
    """Largest relative mismatch of grad q against grad(eta) . dG over ``states``.

    ``eta`` and ``q`` map a state vector to a scalar; ``jacobian`` returns dG.
    Both gradients are central differences, the flux Jacobian is analytic.
    """
    worst = 0.0
    for U in states:
        gq = _fd_gradient(q, U, step)
        ge = _fd_gradient(eta, U, step)
        want = ge @ jacobian(U)
        scale = max(1.0, float(np.max(np.abs(want))), float(np.max(np.abs(gq))))
        worst = max(worst, float(np.max(np.abs(gq - want))) / scale)
    return worst


# ---------------------------------------------------------------- check groups


def _euler_identities(suite, law, h, mp, rng, n):
    rho = rng.uniform(0.1, 10.0, n)
    rb = rng.uniform(0.1, 10.0, n)
    m = rho * rng.uniform(-3.0, 3.0, n)
    mb = rb * rng.uniform(-3.0, 3.0, n)
    s = ent.EulerState(rho, m)
    sb = ent.EulerState(rb, mb)

    o_eta = _mp_eval(lambda a, b, c, d: ent.euler_relative_entropy_literal((a, b), (c, d), mp), rho, m, rb, mb)
    o_q = _mp_eval(lambda a, b, c, d: ent.euler_relative_flux_literal((a, b), (c, d), mp, mp), rho, m, rb, mb)
    o_f = _mp_eval(lambda a, b, c, d: ent.euler_relative_flux_tensor_literal((a, b), (c, d), mp), rho, m, rb, mb)
    o_R = _mp_eval(lambda a, b, c, d: ent.euler_R_literal((a, b), (c, d)), rho, m, rb, mb)
    o_h = _mp_eval(lambda a, c: ent.energy_relative_literal(mp.h, mp.dh, a, c), rho, rb)
    o_p = _mp_eval(lambda a, c: ent.energy_relative_literal(mp.p, mp.dp, a, c), rho, rb)

    tol = IDENTITY_RTOL
    v = _rel_error(ent.euler_relative_entropy(s, sb, h), o_eta)
    suite.add("euler eta(U|Ubar) closed form vs literal", v <= tol, v, tol, f"{n} states")
    w = m / rho - mb / rb
    q_terms = np.abs(0.5 * m * w * w) + np.abs(rho * h.dh_difference(rho, rb) * w) + np.abs(mb / rb * h.relative(rho, rb))
    v = _rel_error(ent.euler_relative_flux(s, sb, law, h), o_q, q_terms)
    suite.add("euler q(U|Ubar) closed form vs literal", v <= tol, v, tol, "relative to term sizes")
    v = _rel_error(ent.euler_relative_flux_tensor(s, sb, law), o_f)
    suite.add("euler f(U|Ubar) closed form vs literal", v <= tol, v, tol)
    v = _rel_error(ent.euler_R(s, sb), o_R)
    suite.add("euler R(U|Ubar) closed form vs literal", v <= tol, v, tol)
    v = _rel_error(h.relative(rho, rb), o_h)
    suite.add("h(rho|rhobar) closed form vs literal", v <= tol, v, tol)
    p_closed = law.relative(rho, rb)
    v = _rel_error(p_closed, o_p, np.maximum(np.abs(o_p), 0.0) if law.gamma != 1 else np.abs(law.p(rho)))
    suite.add("p(rho|rhobar) closed form vs literal", v <= tol, v, tol)

    if law.is_gamma_law:
        g = law.gamma
        lhs = p_closed
        rhs = (g - 1.0) * h.relative(rho, rb)
        scale = np.abs(rhs) if g > 1 else np.abs(law.p(rho))
        v = _rel_error(lhs, rhs, scale)
        suite.add("gamma law p(rho|rhobar) = (gamma-1) h(rho|rhobar)", v <= tol, v, tol)


def _stress_identities(suite, stress, mp, rng, n, mu, eps):
    u = rng.uniform(-2.0, 2.0, n)
    ub = rng.uniform(-2.0, 2.0, n)
    v = rng.uniform(-2.0, 2.0, n)
    vb = rng.uniform(-2.0, 2.0, n)
    z = rng.uniform(-2.0, 2.0, n)
    zb = rng.uniform(-2.0, 2.0, n)
    tol = IDENTITY_RTOL

    def dtau_mp(x):
        return mpmath.diff(mp.tau, x)

    o_W = _mp_eval(lambda a, b: ent.energy_relative_literal(mp.W, mp.tau, a, b), u, ub)
    err = _rel_error(stress.energy_relative(u, ub), o_W)
    suite.add("W(u|ubar) closed form vs literal", err <= tol, err, tol, f"{n} states")

    o_tau = _mp_eval(lambda a, b: ent.energy_relative_literal(mp.tau, dtau_mp, a, b), u, ub)
    # |tau(u|ubar)| <= (u-ubar)^2 sup|tau''| / 2: measure against that bound
    seg = ub[:, None] + np.linspace(0.0, 1.0, 5)[None, :] * (u - ub)[:, None]
    bound = 0.5 * (u - ub) ** 2 * np.max(np.abs(stress.d2tau(seg)), axis=1)
    err = _rel_error(stress.relative(u, ub), o_tau, np.maximum(bound, np.abs(o_tau)))
    suite.add("tau(u|ubar) closed form vs literal", err <= tol, err, tol, "relative to remainder bound")

    class _S:  # literal helpers only need tau and W
        tau = staticmethod(mp.tau)
        W = staticmethod(mp.W)

    o_E = _mp_eval(lambda a, b, c, d: ent.psystem_relative_literal((a, b), (c, d), _S)[0], u, v, ub, vb)
    o_F = _mp_eval(lambda a, b, c, d: ent.psystem_relative_literal((a, b), (c, d), _S)[1], u, v, ub, vb)
    E, F = ent.psystem_relative(ent.PSystemState(u, v), ent.PSystemState(ub, vb), stress)
    err = _rel_error(E, o_E)
    suite.add("p-system E(U|Ubar) closed form vs literal", err <= tol, err, tol)
    err = _rel_error(F, o_F)
    suite.add("p-system F(U|Ubar) closed form vs literal", err <= tol, err, tol)

    mu_mp = mpmath.mpf(mu)
    eps_mp = mpmath.mpf(eps)
    oE = _mp_eval(lambda a, b, c, d, e, f: ent.visco_relative_literal((a, b, c), (d, e, f), _S, mu_mp, eps_mp)[0],
                  u, v, z, ub, vb, zb)
    oF = _mp_eval(lambda a, b, c, d, e, f: ent.visco_relative_literal((a, b, c), (d, e, f), _S, mu_mp, eps_mp)[1],
                  u, v, z, ub, vb, zb)
    E, F = ent.visco_relative(ent.ViscoState(u, v, z), ent.ViscoState(ub, vb, zb), stress, mu, eps)
    err = _rel_error(E, oE)
    suite.add("visco E(U|Ubar) closed form vs literal", err <= tol, err, tol)
    dv = v - vb
    F_terms = np.abs(eps * stress.difference(u, ub) * dv) + np.abs(dv * (z - zb))
    err = _rel_error(F, oF, F_terms)
    suite.add("visco F_eps(U|Ubar) closed form vs literal", err <= tol, err, tol, "relative to term sizes")


def _consistency(suite, law, h, stress, mu, rng, n, mutate):
    tol = CONSISTENCY_RTOL
    eps = 1.0
    euler = build_system("euler", (law, h))
    states = np.column_stack([rng.uniform(0.1, 10.0, n), rng.uniform(-10.0, 10.0, n)])
    d = consistency_defect(euler.entropy, lambda U: euler.entropy_flux(U, eps),
                           lambda U: euler.jacobian(U, eps), states)
    suite.add("euler entropy pair consistency (finite differences)", d <= tol, d, tol, f"{n} states")

    rho_minus, rho_plus = 1.0, 2.0
    pair = ent.modified_pair(rho_minus, rho_plus, h, flux_sign=-1.0 if mutate else 1.0)
    d = consistency_defect(lambda U: pair.eta(ent.EulerState(*U)), lambda U: pair.q(ent.EulerState(*U)),
                           lambda U: euler.jacobian(U, eps), states)
    detail = "flux sign flipped" if mutate else ""
    suite.add("modified pair consistency (finite differences)", d <= tol, d, tol, detail)

    zero = max(abs(float(pair.eta(ent.EulerState(rho_minus, 0.0)))), abs(float(pair.eta(ent.EulerState(rho_plus, 0.0)))))
    ztol = 1e-12 * max(1.0, abs(float(h.h(rho_plus))), abs(float(h.h(rho_minus))))
    suite.add("modified pair vanishes at far-field states", zero <= ztol, zero, ztol)

    rho = states[:, 0]
    sb = ent.EulerState(rng.uniform(0.1, 10.0, n), rng.uniform(-10.0, 10.0, n))
    s = ent.EulerState(rho, states[:, 1])
    lit = pair.relative_literal(s, sb)
    closed = ent.euler_relative_entropy(s, sb, h)
    scale = np.abs(pair.eta(s)) + np.abs(pair.eta(sb)) + np.abs(closed)
    v = _rel_error(closed, lit, scale)
    suite.add("modified pair relative entropy equals eta(U|Ubar)", v <= IDENTITY_RTOL, v, IDENTITY_RTOL,
              "relative to term sizes")

    ps = build_system("psystem", stress)
    st = np.column_stack([rng.uniform(-2.0, 2.0, n), rng.uniform(-2.0, 2.0, n)])
    d = consistency_defect(ps.entropy, lambda U: ps.entropy_flux(U, eps), lambda U: ps.jacobian(U, eps), st)
    suite.add("p-system energy pair consistency (finite differences)", d <= tol, d, tol)

    ve = build_system("visco", stress, mu=mu)
    st = np.column_stack([rng.uniform(-2.0, 2.0, n), rng.uniform(-2.0, 2.0, n), rng.uniform(-2.0, 2.0, n)])
    d = consistency_defect(ve.entropy, lambda U: ve.entropy_flux(U, eps), lambda U: ve.jacobian(U, eps), st)
    suite.add("visco energy pair consistency (finite differences)", d <= tol, d, tol)


def _hessian(suite, rng, n):
    worst = 0.0
    neg = 0.0
    for _ in range(n):
        rho = rng.uniform(0.1, 10.0)
        m = rng.uniform(-10.0, 10.0, 3)
        num = np.linalg.eigvalsh(ent.hessian_R(rho, m))
        closed = ent.hessian_R_eigenvalues(rho, m)
        worst = max(worst, float(np.max(np.abs(num - closed)) / max(1.0, float(np.max(closed)))))
        neg = min(neg, float(np.min(num)) / max(1.0, float(np.max(closed))))
    suite.add("Hessian of R: numerical vs closed-form eigenvalues", worst <= HESSIAN_TOL, worst, HESSIAN_TOL,
              f"{n} states, 3-D")
    suite.add("Hessian of R: positive semidefinite", -neg <= HESSIAN_TOL, -neg, HESSIAN_TOL)


def _lemmas(suite, law, h, stress, rng, n_pairs):
    rep = ent.lemma_bound_checks(law, h, rng, n_pairs=n_pairs)
    # the bound is only claimed under hypothesis (A); without it the result is a report
    premise = check_hypothesis_A(law).holds
    suite.add("relative flux bounded by relative entropy", rep.holds, rep.flux_ratio_sup, rep.flux_ratio_bound,
              f"p(.|.)/h(.|.) <= {rep.pressure_ratio_sup:.6g}, C1 = {rep.C1:.3g}, C2 = {rep.C2}",
              asserted=premise)
    if law.is_gamma_law and law.gamma > 1:
        err = abs(rep.pressure_ratio_sup - (law.gamma - 1.0))
        suite.add("gamma law: sup p(.|.)/h(.|.) = gamma - 1", err <= 1e-10, err, 1e-10)
    suite.add("lower bound quotient tends to h''(rhobar)/2", rep.diagonal_limit_error <= 1e-6,
              rep.diagonal_limit_error, 1e-6)
    sb = ent.stress_bound_check(stress)
    suite.add("tau(u|ubar) bounded by W(u|ubar)", sb.holds, sb.sup_ratio, np.inf)


def _hypotheses(suite, law, spec: PressureSpec, stress, sspec: StressSpec):
    a = check_hypothesis_A(law)
    suite.add(f"hypothesis (A) for {law.name}", a.holds, a.constant, a.details.get("cap", np.nan),
              "" if a.holds else f"witness rho = {a.witness:.4g}", asserted=False)
    if spec.kind == "gamma" and spec.gamma > 1:
        b = check_hypothesis_B(law, spec.k, spec.gamma)
        suite.add(f"hypothesis (B) for {law.name}", b.holds, b.constant, b.details["tol"], asserted=False)
    g = check_growth_H(stress, sspec.growth)
    suite.add(f"growth hypothesis for {stress.name}, exponent {sspec.growth:g}", g.holds, g.constant,
              g.details["tol"], asserted=False)


def run_checks(seed: int = 0, pressure: PressureSpec = PressureSpec(), stress: StressSpec = StressSpec(),
               mu: float = 1.0, eps: float = 0.1, n_states: int = 10_000, n_consistency: int = 1_000,
               n_hessian: int = 1_000, n_pairs: int = 100_000, mutate: bool = False) -> CheckSuite:
    """Run the full suite with a fixed seed.

    ``mutate`` flips the sign of the far-field flux shift; the modified-pair
    consistency check must then fail.
    """
    rng = np.random.default_rng(seed)
    law, h = pressure.build()
    tau = stress.build()
    suite = CheckSuite()
    _euler_identities(suite, law, h, pressure.oracle(), rng, n_states)
    _stress_identities(suite, tau, stress.oracle(), rng, n_states, mu, eps)
    _consistency(suite, law, h, tau, mu, rng, n_consistency, mutate)
    _hessian(suite, rng, n_hessian)
    _lemmas(suite, law, h, tau, rng, n_pairs)
    _hypotheses(suite, law, pressure, tau, stress)
    return suite
