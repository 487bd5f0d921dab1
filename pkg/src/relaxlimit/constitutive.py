"""Pressure and stress laws, their potentials, and hypothesis checks.

A pressure law ``p(rho)`` comes paired with an internal energy ``h(rho)``
satisfying ``rho h'(rho) - h(rho) = p(rho)`` and ``h''(rho) = p'(rho)/rho``.
For the gamma-law both are closed form.  For a general law ``h`` is built as
``rho * e(rho)`` with ``e(rho) = int_1^rho p(s)/s^2 ds`` evaluated by adaptive
quadrature, which makes both relations hold exactly in ``h'`` and ``h''``.

Stress laws ``tau(u)`` (p-system) and ``sigma(u)`` (viscoelasticity) share one
type, carrying the antiderivative ``W`` (or ``Sigma``) used as stored energy.

Relative quantities ``f(a|b) = f(a) - f(b) - f'(b)(a - b)`` are computed in a
cancellation-free way: series or factored forms for the closed-form laws and a
Gauss-Legendre rule on ``(a-b)^2 int_0^1 (1-s) f''(b + s(a-b)) ds`` otherwise,
on geometrically graded panels for energies since ``h'' = p'/rho`` has a pole at 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import binom, xlogy

ArrayFn = Callable[[np.ndarray], np.ndarray]

DEFAULT_SAMPLE_GRID = np.geomspace(1e-3, 1e3, 512)
DEFAULT_TAIL_GRID = np.geomspace(1e2, 1e6, 64)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)
_GL_S = 0.5 * (_GL_NODES + 1.0)
_GL_W = 0.5 * _GL_WEIGHTS * (1.0 - _GL_S)  # weights for int_0^1 (1-s) g(s) ds

_SERIES_RADIUS = 0.25
_SERIES_TERMS = 40


class ConstitutiveError(ValueError):
    pass


def _remainder_quotient(d2f: ArrayFn, a, b):
    """int_0^1 (1-s) f''(b + s(a-b)) ds, i.e. f(a|b)/(a-b)^2."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    diff = a - b
    pts = b[..., None] + _GL_S * diff[..., None]
    return np.sum(_GL_W * d2f(pts), axis=-1)


def _mean_slope(df: ArrayFn, a, b):
    """int_0^1 f'(b + s(a-b)) ds, i.e. (f(a) - f(b))/(a - b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pts = b[..., None] + _GL_S * (a - b)[..., None]
    return np.sum(0.5 * _GL_WEIGHTS * df(pts), axis=-1)


_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)


def _graded(fn, a, b, remainder: bool, ratio: float = 1.5, chunk: int = 4096):
    """``_remainder_quotient`` (or ``_mean_slope``) for integrands with a pole at 0.

    For ``a, b > 0`` far apart the segment is cut into panels whose end points
    grow geometrically by ``ratio``, so every panel stays well away from the pole
    and an 8-point rule per panel reaches round-off.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    shape = a.shape
    a, b = a.ravel(), b.ravel()
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    plain = (lo <= 0) | (hi <= ratio * lo)
    out = np.empty(a.shape)
    base = _remainder_quotient if remainder else _mean_slope
    out[plain] = base(fn, a[plain], b[plain])
    idx = np.flatnonzero(~plain)
    for start in range(0, idx.size, chunk):
        c = idx[start:start + chunk]
        aa, bb, l, u = a[c], b[c], lo[c], hi[c]
        n = int(np.ceil(np.log(np.max(u / l)) / np.log(ratio)))
        x = l[:, None] * (u / l)[:, None] ** (np.arange(n + 1) / n)
        sk = np.sort((x - bb[:, None]) / (aa - bb)[:, None], axis=1)
        sk[:, 0], sk[:, -1] = 0.0, 1.0
        half = 0.5 * (sk[:, 1:] - sk[:, :-1])
        s = 0.5 * (sk[:, 1:] + sk[:, :-1])[..., None] + half[..., None] * _GL8_X
        vals = fn(bb[:, None, None] + s * (aa - bb)[:, None, None])
        if remainder:
            vals = (1.0 - s) * vals
        out[c] = np.sum(half[..., None] * _GL8_W * vals, axis=(1, 2))
    return out.reshape(shape)


def _power_remainder(d, gamma):
    """(1+d)^gamma - 1 - gamma d, accurate also for small d."""
    d = np.asarray(d, dtype=float)
    out = np.empty_like(d)
    small = np.abs(d) <= _SERIES_RADIUS
    if np.any(small):
        ds = d[small]
        if float(gamma).is_integer() and gamma >= 0:
            n = np.arange(2, int(gamma) + 1)
        else:
            n = np.arange(2, _SERIES_TERMS + 2)
        coef = binom(gamma, n)
        # Horner from the highest power down, then multiply by d^2
        acc = np.zeros_like(ds)
        for c in coef[::-1]:
            acc = acc * ds + c
        out[small] = acc * ds * ds
    big = ~small
    if np.any(big):
        db = d[big]
        out[big] = np.power(1.0 + db, gamma) - 1.0 - gamma * db
    return out


def _xlogx_remainder(d):
    """(1+d) log(1+d) - d, accurate also for small d."""
    d = np.asarray(d, dtype=float)
    out = np.empty_like(d)
    small = np.abs(d) <= _SERIES_RADIUS
    if np.any(small):
        ds = d[small]
        n = np.arange(2, _SERIES_TERMS + 2)
        coef = (-1.0) ** n / (n * (n - 1.0))
        acc = np.zeros_like(ds)
        for c in coef[::-1]:
            acc = acc * ds + c
        out[small] = acc * ds * ds
    big = ~small
    if np.any(big):
        db = d[big]
        out[big] = xlogy(1.0 + db, 1.0 + db) - db
    return out


@dataclass(frozen=True)
class PressureLaw:
    """Barotropic pressure ``p(rho)`` with its first two derivatives."""

    p: ArrayFn
    dp: ArrayFn
    d2p: ArrayFn
    name: str = "tabulated"
    k: float | None = None
    gamma: float | None = None

    @property
    def is_gamma_law(self) -> bool:
        return self.gamma is not None

    def relative(self, rho, rho_bar):
        """p(rho|rho_bar)."""
        rho = np.asarray(rho, dtype=float)
        rho_bar = np.asarray(rho_bar, dtype=float)
        if self.is_gamma_law:
            if self.gamma == 1.0:
                return np.zeros(np.broadcast(rho, rho_bar).shape)
            d = (rho - rho_bar) / rho_bar
            return self.k * np.power(rho_bar, self.gamma) * _power_remainder(d, self.gamma)
        return (rho - rho_bar) ** 2 * _remainder_quotient(self.d2p, rho, rho_bar)

    def sound_speed(self, rho):
        return np.sqrt(self.dp(rho))


@dataclass(frozen=True)
class InternalEnergy:
    """Internal energy ``h(rho)`` tied to a pressure law."""

    h: ArrayFn
    dh: ArrayFn
    d2h: ArrayFn
    derivation: str = "closed-form"
    tolerance: float = 0.0
    k: float | None = None
    gamma: float | None = None

    def relative(self, rho, rho_bar):
        """h(rho|rho_bar)."""
        rho = np.asarray(rho, dtype=float)
        rho_bar = np.asarray(rho_bar, dtype=float)
        return (rho - rho_bar) ** 2 * self.relative_quotient(rho, rho_bar)

    def dh_difference(self, rho, rho_bar):
        """h'(rho) - h'(rho_bar) without cancellation when rho is close to rho_bar."""
        rho = np.asarray(rho, dtype=float)
        rho_bar = np.asarray(rho_bar, dtype=float)
        if self.gamma is None:
            return (rho - rho_bar) * _graded(self.d2h, rho, rho_bar, remainder=False)
        d = (rho - rho_bar) / rho_bar
        if self.gamma == 1.0:
            return self.k * np.log1p(d)
        g = self.gamma
        return self.k * g / (g - 1.0) * np.power(rho_bar, g - 1.0) * np.expm1((g - 1.0) * np.log1p(d))

    def relative_quotient(self, rho, rho_bar):
        """h(rho|rho_bar) / (rho - rho_bar)^2, continuous at rho = rho_bar."""
        rho = np.asarray(rho, dtype=float)
        rho_bar = np.asarray(rho_bar, dtype=float)
        if self.gamma is None:
            # h'' = p'/rho has a pole at rho = 0
            return _graded(self.d2h, rho, rho_bar, remainder=True)
        shape = np.broadcast(rho, rho_bar).shape
        rb = np.broadcast_to(rho_bar, shape).ravel()
        d = np.broadcast_to((rho - rho_bar) / rho_bar, shape).ravel()
        out = np.empty_like(d)
        zero = d == 0.0
        out[zero] = 0.5 * self.d2h(rb[zero])
        nz = ~zero
        if self.gamma == 1.0:
            g = _xlogx_remainder(d[nz])
            out[nz] = self.k * g / (d[nz] ** 2 * rb[nz])
        else:
            g = _power_remainder(d[nz], self.gamma)
            scale = self.k / (self.gamma - 1.0) * np.power(rb[nz], self.gamma - 2.0)
            out[nz] = scale * g / d[nz] ** 2
        return out.reshape(shape)


def make_gamma_law(k: float, gamma: float) -> tuple[PressureLaw, InternalEnergy]:
    """p = k rho^gamma with h = k rho^gamma/(gamma-1), or k rho log rho when gamma = 1."""
    if not (k > 0):
        raise ConstitutiveError(f"k must be positive, got {k}")
    if not (gamma >= 1):
        raise ConstitutiveError(f"gamma must be >= 1, got {gamma}")
    k = float(k)
    g = float(gamma)

    law = PressureLaw(
        p=lambda r: k * np.power(r, g),
        dp=lambda r: k * g * np.power(r, g - 1.0),
        d2p=lambda r: k * g * (g - 1.0) * np.power(r, g - 2.0),
        name=f"gamma(k={k:g},gamma={g:g})",
        k=k,
        gamma=g,
    )
    if g == 1.0:
        energy = InternalEnergy(
            h=lambda r: k * xlogy(r, r),
            dh=lambda r: k * (np.log(r) + 1.0),
            d2h=lambda r: k / np.asarray(r, dtype=float),
            k=k,
            gamma=g,
        )
    else:
        energy = InternalEnergy(
            h=lambda r: k / (g - 1.0) * np.power(r, g),
            dh=lambda r: k * g / (g - 1.0) * np.power(r, g - 1.0),
            d2h=lambda r: k * g * np.power(r, g - 2.0),
            k=k,
            gamma=g,
        )
    return law, energy


def make_tabulated_law(p: ArrayFn, dp: ArrayFn, d2p: ArrayFn, name: str = "tabulated",
                       rtol: float = 1e-12) -> tuple[PressureLaw, InternalEnergy]:
    """Pair an arbitrary pressure law with an internal energy built by quadrature.

    ``h = rho e(rho)``, ``e(rho) = int_1^rho p(s)/s^2 ds``.  Then ``h' = e + p/rho``
    and ``h'' = p'/rho`` hold by construction; only ``e`` carries quadrature error.
    """
    law = PressureLaw(p=p, dp=dp, d2p=d2p, name=name)

    def _e_scalar(r):
        if r <= 0:
            raise ConstitutiveError("internal energy needs rho > 0")
        val, _ = integrate.quad(lambda s: p(s) / (s * s), 1.0, r, epsabs=0.0, epsrel=rtol, limit=200)
        return val

    e = np.vectorize(_e_scalar, otypes=[float])

    energy = InternalEnergy(
        h=lambda r: np.asarray(r, dtype=float) * e(r),
        dh=lambda r: e(r) + p(r) / np.asarray(r, dtype=float),
        d2h=lambda r: dp(r) / np.asarray(r, dtype=float),
        derivation="quadrature",
        tolerance=rtol,
    )
    return law, energy


def make_exponential_law(k: float = 1.0) -> tuple[PressureLaw, InternalEnergy]:
    """p = k exp(rho); convex but violates the growth bound p'' <= A p'/rho."""
    return make_tabulated_law(
        p=lambda r: k * np.exp(r),
        dp=lambda r: k * np.exp(r),
        d2p=lambda r: k * np.exp(r),
        name=f"exp(k={k:g})",
    )


def _monomial_remainder_factor(u, ubar, n):
    """(u^n - ubar^n - n ubar^(n-1) (u - ubar)) / (u - ubar)^2 for integer n >= 0."""
    out = np.zeros(np.broadcast(u, ubar).shape)
    for j in range(n - 1):
        out = out + (j + 1) * np.power(ubar, j) * np.power(u, n - 2 - j)
    return out


def _close(a, b):
    """Pairs for which quadrature beats the direct difference.

    Far apart the direct formula has no cancellation to speak of, while a single
    Gauss-Legendre rule over a long interval converges slowly when ``f''`` has
    complex singularities near the real axis (``arctan`` has them at +-i).
    """
    return np.abs(a - b) <= 0.25 * (1.0 + np.abs(a) + np.abs(b))


def _split_quotient(d2f, f, df, a, b):
    """f(a|b)/(a-b)^2 by quadrature for close pairs, by the literal remainder otherwise."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    near = _close(a, b)
    out = np.empty(a.shape)
    out[near] = _remainder_quotient(d2f, a[near], b[near])
    fa, fb = a[~near], b[~near]
    out[~near] = (f(fa) - f(fb) - df(fb) * (fa - fb)) / (fa - fb) ** 2
    return out


@dataclass(frozen=True)
class StressLaw:
    """Stress ``tau(u)`` with derivatives and its antiderivative ``W`` (``W(0) = 0``)."""

    tau: ArrayFn
    dtau: ArrayFn
    d2tau: ArrayFn
    W: ArrayFn
    name: str = "stress"
    coefficients: tuple[float, ...] | None = None
    growth: float | None = None

    def relative(self, u, ubar):
        """tau(u|ubar)."""
        u = np.asarray(u, dtype=float)
        ubar = np.asarray(ubar, dtype=float)
        return (u - ubar) ** 2 * self.relative_quotient(u, ubar)

    def energy_relative(self, u, ubar):
        """W(u|ubar) = W(u) - W(ubar) - tau(ubar)(u - ubar)."""
        u = np.asarray(u, dtype=float)
        ubar = np.asarray(ubar, dtype=float)
        return (u - ubar) ** 2 * self.energy_relative_quotient(u, ubar)

    def difference(self, u, ubar):
        """tau(u) - tau(ubar) without cancellation when u is close to ubar."""
        u = np.asarray(u, dtype=float)
        ubar = np.asarray(ubar, dtype=float)
        if self.coefficients is not None:
            q = np.zeros(np.broadcast(u, ubar).shape)
            for n, c in enumerate(self.coefficients):
                if c != 0.0 and n >= 1:
                    q = q + c * sum(np.power(u, j) * np.power(ubar, n - 1 - j) for j in range(n))
            return (u - ubar) * q
        near = _close(u, ubar)
        return np.where(near, (u - ubar) * _mean_slope(self.dtau, u, ubar), self.tau(u) - self.tau(ubar))

    def energy_relative_quotient(self, u, ubar):
        u = np.asarray(u, dtype=float)
        ubar = np.asarray(ubar, dtype=float)
        if self.coefficients is not None:
            q = np.zeros(np.broadcast(u, ubar).shape)
            for n, c in enumerate(self.coefficients):
                if c != 0.0 and n >= 1:
                    q = q + c / (n + 1.0) * _monomial_remainder_factor(u, ubar, n + 1)
            return q
        return _split_quotient(self.dtau, self.W, self.tau, u, ubar)

    def relative_quotient(self, u, ubar):
        """tau(u|ubar)/(u - ubar)^2."""
        u = np.asarray(u, dtype=float)
        ubar = np.asarray(ubar, dtype=float)
        if self.coefficients is not None:
            q = np.zeros(np.broadcast(u, ubar).shape)
            for n, c in enumerate(self.coefficients):
                if c != 0.0 and n >= 2:
                    q = q + c * _monomial_remainder_factor(u, ubar, n)
            return q
        return _split_quotient(self.d2tau, self.tau, self.dtau, u, ubar)

    def wave_speed(self, u):
        return np.sqrt(self.dtau(u))


def make_polynomial_stress(coefficients, name: str | None = None) -> StressLaw:
    """tau(u) = sum_n c_n u^n.  Coefficients are listed from the constant term up."""
    c = tuple(float(x) for x in coefficients)
    if len(c) < 2:
        raise ConstitutiveError("need at least a linear term")
    tau_poly = np.polynomial.Polynomial(c)
    dtau_poly = tau_poly.deriv()
    d2tau_poly = dtau_poly.deriv()
    W_poly = tau_poly.integ()
    deg = len(c) - 1
    while deg > 0 and c[deg] == 0.0:
        deg -= 1
    return StressLaw(
        tau=tau_poly,
        dtau=dtau_poly,
        d2tau=d2tau_poly,
        W=W_poly,
        name=name or "poly(" + ",".join(f"{x:g}" for x in c) + ")",
        coefficients=c,
        growth=float(deg),
    )


def make_cubic_stress() -> StressLaw:
    """tau(u) = u + u^3."""
    return make_polynomial_stress((0.0, 1.0, 0.0, 1.0), name="u+u^3")


def make_arctan_stress() -> StressLaw:
    """tau(u) = u + arctan(u); linear growth with a bounded correction."""
    return StressLaw(
        tau=lambda u: u + np.arctan(u),
        dtau=lambda u: 1.0 + 1.0 / (1.0 + np.asarray(u, dtype=float) ** 2),
        d2tau=lambda u: -2.0 * np.asarray(u, dtype=float) / (1.0 + np.asarray(u, dtype=float) ** 2) ** 2,
        W=lambda u: 0.5 * np.asarray(u, dtype=float) ** 2 + u * np.arctan(u) - 0.5 * np.log1p(np.asarray(u, dtype=float) ** 2),
        name="u+arctan(u)",
        growth=1.0,
    )


@dataclass
class HypothesisReport:
    holds: bool
    constant: float
    witness: float | None = None
    details: dict = field(default_factory=dict)


def check_hypothesis_A(law: PressureLaw, grid=None, cap: float = 10.0) -> HypothesisReport:
    """Smallest A with p'' <= A p'/rho on the sample grid; fails past ``cap``."""
    rho = DEFAULT_SAMPLE_GRID if grid is None else np.asarray(grid, dtype=float)
    if np.any(rho <= 0):
        raise ConstitutiveError("sample grid must be positive")
    with np.errstate(over="ignore"):
        dp = law.dp(rho)
    if np.any(dp <= 0):
        bad = float(rho[np.argmax(dp <= 0)])
        return HypothesisReport(False, np.inf, witness=bad, details={"reason": "p' <= 0"})
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = rho * law.d2p(rho) / dp
    # overflow in p' or p'' means the ratio escapes any cap
    ratio = np.where(np.isfinite(ratio), ratio, np.inf)
    A = max(float(np.max(ratio)), 0.0)
    if A > cap:
        witness = float(rho[np.argmax(ratio > cap)])
        return HypothesisReport(False, A, witness=witness, details={"cap": cap, "max_ratio": A})
    return HypothesisReport(True, A, details={"cap": cap})


def check_hypothesis_B(law: PressureLaw, claimed_k: float, claimed_gamma: float,
                       tail_grid=None, tol: float = 1e-2) -> HypothesisReport:
    """p'(rho) ~ k gamma rho^(gamma-1) as rho -> infinity."""
    if not claimed_gamma > 1:
        raise ConstitutiveError("tail exponent must exceed 1")
    rho = DEFAULT_TAIL_GRID if tail_grid is None else np.asarray(tail_grid, dtype=float)
    ratio = law.dp(rho) / (claimed_k * claimed_gamma * np.power(rho, claimed_gamma - 1.0))
    err = np.abs(ratio - 1.0)
    residual = float(err[-1])
    holds = bool(np.isfinite(residual) and residual <= tol and err[-1] <= err[0] + tol)
    return HypothesisReport(holds, residual, witness=None if holds else float(rho[-1]),
                            details={"ratio_tail": float(ratio[-1]), "tol": tol})


def check_growth_H(stress: StressLaw, exponent: float, tail_grid=None, tol: float = 1e-2) -> HypothesisReport:
    """tau(u) = +-|u|^exponent + o(|u|^exponent) on both tails, with tau' > 0."""
    if not exponent >= 1:
        raise ConstitutiveError("growth exponent must be >= 1")
    u = DEFAULT_TAIL_GRID if tail_grid is None else np.asarray(tail_grid, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        right = stress.tau(u) / np.power(u, exponent)
        left = stress.tau(-u) / (-np.power(u, exponent))
    residual = float(max(abs(right[-1] - 1.0), abs(left[-1] - 1.0)))
    probe = np.concatenate([-u[::-1], np.linspace(-u[0], u[0], 201), u])
    monotone = bool(np.all(stress.dtau(probe) > 0))
    holds = bool(np.isfinite(residual) and residual <= tol and monotone)
    return HypothesisReport(holds, residual, witness=None if holds else float(u[-1]),
                            details={"monotone": monotone, "tol": tol})
