"""Acceptance criteria 1-8.

Each test prints one ``ACCEPTANCE <n> PASS|FAIL`` line with the measured
numbers and then asserts the criterion at its stated tolerance.  The three
rate sweeps (about ten minutes on one core) are run once per module and shared
by criteria 1-5 and 7.  Run directly with ``python tests/test_acceptance.py``
for the summary lines alone.
"""
import functools
from pathlib import Path

import numpy as np
import pytest

from relaxlimit.checks import run_checks
from relaxlimit.constitutive import make_cubic_stress, make_gamma_law
from relaxlimit.diagnostics import gronwall_audit, hilbert_check
from relaxlimit.grid import Grid
from relaxlimit.harness import load_config, parse_config, run_point, run_sweep, sweep_report
from relaxlimit.profiles import paired_initial_state
from relaxlimit.solvers import RelaxationStepper, SolverConfig, entropy_residual, step_relaxation
from relaxlimit.systems import build_system, limit_of

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SWEEPS = {1: "euler_sweep.ini", 2: "psystem_sweep.ini", 3: "visco_sweep.ini"}
MIN_RATE = 3.5
MAX_C_VARIATION = 2.0
HILBERT_TOL = 0.05
HALVING = (1.6, 2.4)
MASS_RTOL = 1e-13
EQUILIBRIUM_RTOL = 1e-13

pytestmark = pytest.mark.acceptance


@functools.lru_cache(maxsize=None)
def sweep(criterion: int):
    cfg = load_config(CONFIGS / SWEEPS[criterion])
    results = run_sweep(cfg)
    report, extra = sweep_report(cfg, results)
    return cfg, results, report, extra


@functools.lru_cache(maxsize=None)
def ill_prepared_runs():
    runs = []
    for name in ("euler", "psystem", "visco"):
        text = (CONFIGS / SWEEPS[{"euler": 1, "psystem": 2, "visco": 3}[name]]).read_text()
        text = text.replace("preparation = well", "preparation = ill\ndamped_profile = sine\ndamped_amplitude = 1")
        cfg = parse_config(text)
        for eps in (0.1, 0.05):
            runs.append((name, eps, run_point(cfg, eps)))
    return runs


def report_line(n: int, passed: bool, detail: str) -> str:
    return f"ACCEPTANCE {n} {'PASS' if passed else 'FAIL'}: {detail}"


def _emit(capsys, line):
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)


# ---------------------------------------------------------------- criteria


def criterion_rate(n: int):
    _, results, rep, _ = sweep(n)
    aborted = [r.error for r in results if r.error is not None]
    if rep is None or aborted:
        return False, f"sweep aborted: {aborted}"
    var = rep.C_variation()
    ok = rep.rate >= MIN_RATE and rep.fit_valid and var < MAX_C_VARIATION and not aborted
    phis = ", ".join(f"{p:.3e}" for p in rep.phi_T)
    detail = (f"{rep.meta['system']} rate={rep.rate:.3f} (need >= {MIN_RATE}, fit_valid={rep.fit_valid}) "
              f"C variation={var:.3f} (need < {MAX_C_VARIATION}) phi(T)=[{phis}] rate on max phi={rep.rate_max:.3f}")
    if rep.notes:
        detail += " notes: " + "; ".join(rep.notes)
    return ok, detail


def criterion_4():
    parts, ok = [], True
    for n in SWEEPS:
        cfg, results, rep, _ = sweep(n)
        for r in results:
            if r.error is not None:
                ok = False
                continue
            g = gronwall_audit(r.ledger, cap=cfg.check.gronwall_cap)
            bound = g.C * (r.ledger.phi[0] + r.eps ** 4)
            ok &= g.satisfied and bool(np.all(r.ledger.phi <= bound * (1 + 1e-12)))
        parts.append(f"{cfg.system} C=[{', '.join(f'{c:.3g}' for c in rep.C)}]")
    ill = []
    for name, eps, r in ill_prepared_runs():
        led = r.ledger
        growth = float(np.max(led.phi) / led.phi[0])
        finite = bool(np.all(np.isfinite(led.phi)))
        ok &= finite and led.phi[0] > 0.01 and growth <= 1 + 0.1 and gronwall_audit(led).satisfied
        ill.append(f"{name}@{eps:g} phi0={led.phi[0]:.3g} max phi/phi0={growth:.4f} phiT/phi0={led.phi[-1] / led.phi[0]:.3g}")
    return ok, "well-prepared " + "; ".join(parts) + f" (cap {cfg.check.gronwall_cap:g}); ill-prepared " + "; ".join(ill)


def criterion_5():
    cfg, results, rep, _ = sweep(1)
    ok_runs = [r for r in results if r.error is None]
    limit = limit_of(build_system(cfg.system, cfg.constitutive(), cfg.mu))
    h = hilbert_check([r.eps for r in ok_runs], [r.final for r in ok_runs], [r.final_bar for r in ok_runs], limit)
    finest = int(np.argmin(h.eps))
    ok = bool(h.relative[finest] <= HILBERT_TOL and h.decreasing)
    rel = ", ".join(f"{x:.3g}" for x in h.relative)
    scale = max(float(np.max(np.abs(limit.reconstruct(r.final_bar.data, 1.0, r.final_bar.grid)[1]))) for r in ok_runs)
    return ok, (f"relative |m/eps - m1| per eps=[{rel}] (need finest <= {HILBERT_TOL} and decreasing, "
                f"decreasing={h.decreasing}) regression estimate={h.regression_relative:.3g} |D p(rho_bar)|_inf={scale:.3g}")


def criterion_6():
    suite = run_checks(seed=0)
    fails = [c.name for c in suite.failures()]
    return suite.passed, f"{len(suite.results)} checks, {len(fails)} failed {fails if fails else ''}".rstrip()


def rusanov_halving():
    cfg = SolverConfig(flux="rusanov")
    sysm = build_system("euler", make_gamma_law(1, 2))
    lim = limit_of(sysm)
    peaks = []
    for n in (256, 512):
        g = Grid(0, 1, n)
        U, _ = paired_initial_state(lim, 2 + 0.5 * np.sin(2 * np.pi * g.x), 0.1, g)
        U1 = step_relaxation(U, sysm, 0.1, cfg)
        peaks.append(float(np.max(np.abs(entropy_residual(U, U1, sysm, 0.1, cfg)))))
    return peaks[0] / peaks[1]


def criterion_7():
    ok, parts = True, []
    for n in SWEEPS:
        cfg, results, _, _ = sweep(n)
        Cs = [r.ledger.residual_constant for r in results if r.error is None]
        ok &= len(Cs) == len(results) and all(c <= cfg.check.residual_constant_max for c in Cs)
        parts.append(f"{cfg.system} C=[{', '.join(f'{c:.3g}' for c in Cs)}]")
    ill = []
    for name, eps, r in ill_prepared_runs():
        ok &= r.ledger.residual_constant <= cfg.check.residual_constant_max
        ill.append(f"{name}@{eps:g} {r.ledger.residual_constant:.3g}")
    parts.append("ill-prepared " + ", ".join(ill))
    ratio = rusanov_halving()
    ok &= HALVING[0] <= ratio <= HALVING[1]
    return ok, (f"integrated residual / (dx + dt): " + "; ".join(parts)
                + f" (limit {cfg.check.residual_constant_max:g}); Rusanov max residual ratio N=256/512 = {ratio:.3f} "
                f"(need 2 +- 20%)")


def criterion_8():
    worst_mass, worst_eq = 0.0, 0.0
    cases = [
        (build_system("euler", make_gamma_law(1, 2)), lambda x: 2 + 0.5 * np.sin(2 * np.pi * x), (1.7, 0.0)),
        (build_system("psystem", make_cubic_stress()), lambda x: 0.5 * np.sin(2 * np.pi * x), (0.3, 0.0)),
        (build_system("visco", make_cubic_stress(), 1.0),
         lambda x: np.stack([0.5 * np.sin(2 * np.pi * x), np.zeros_like(x)]), (0.3, 0.2, 0.0)),
    ]
    cfg = SolverConfig()
    for sysm, prof, const in cases:
        g = Grid(0, 1, 128)
        U, _ = paired_initial_state(limit_of(sysm), prof(g.x), 0.05, g)
        mi = sysm.mass_index
        for _ in range(100):
            U1 = step_relaxation(U, sysm, 0.05, cfg)
            scale = g.dx * np.sum(np.abs(U.data[mi]))
            worst_mass = max(worst_mass, abs(g.integrate(U1.data[mi]) - g.integrate(U.data[mi])) / scale)
            U = U1
        U0 = np.array(const)[:, None] * np.ones(g.cells)
        st = RelaxationStepper(sysm, 0.05, g, cfg)
        dt = st.stable_dt(U0)
        V = U0
        for _ in range(1000):
            V = st.step(V, dt)
        worst_eq = max(worst_eq, float(np.max(np.abs(V - U0)) / np.max(np.abs(U0))))
    ok = worst_mass <= MASS_RTOL and worst_eq <= EQUILIBRIUM_RTOL
    return ok, (f"worst per-step relative mass change {worst_mass:.2e} (need <= {MASS_RTOL:g}); "
                f"worst equilibrium drift over 1000 steps {worst_eq:.2e} (need <= {EQUILIBRIUM_RTOL:g})")


CRITERIA = {
    1: functools.partial(criterion_rate, 1),
    2: functools.partial(criterion_rate, 2),
    3: functools.partial(criterion_rate, 3),
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
}


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_acceptance(n, capsys):
    passed, detail = CRITERIA[n]()
    _emit(capsys, report_line(n, passed, detail))
    assert passed, detail


if __name__ == "__main__":
    for n in sorted(CRITERIA):
        _emit(None, report_line(n, *CRITERIA[n]()))
