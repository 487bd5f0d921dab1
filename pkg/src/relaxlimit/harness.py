"""Run configuration, paired relaxation/limit runs and eps-sweeps.

A configuration is an INI file with sections ``[system]``, ``[constitutive]``,
``[grid]``, ``[initial]``, ``[run]``, ``[solver]`` and ``[check]``; see
``configs/`` for annotated examples.  Everything here is deterministic: a
sweep gives bit-identical files whatever the number of workers, because each
eps-point is an independent pure computation and results are merged in eps
order.
"""

from __future__ import annotations

import configparser
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .checks import PressureSpec, StressSpec
from .diagnostics import (
    EntropyLedger,
    SweepReport,
    gronwall_audit,
    hilbert_check,
    inequality_audit,
)
from .entropy import DomainError
from .grid import Grid, GridField
from .profiles import PROFILES, make_profile, paired_initial_state
from .records import write_checkpoint, write_ledger, write_sweep_report, sweep_report_to_dict
from .solvers import SolverConfig, run_to
from .systems import SolverAbort, build_system, limit_of

SYSTEMS = ("euler", "psystem", "visco")
PRESSURE_LAWS = ("gamma", "exp")
STRESS_LAWS = ("cubic", "poly", "arctan")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3
EXIT_CERTIFICATION = 4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProfileSpec:
    kind: str
    params: tuple = ()

    def build(self, grid: Grid) -> np.ndarray:
        return make_profile(self.kind, grid, **dict(self.params))


@dataclass(frozen=True)
class CheckSettings:
    residual_constant_max: float = 10.0   # certification: int r dx <= C (dx + dt) with C below this
    inequality_rtol: float = 0.02
    gronwall_cap: float = 1e3
    n_states: int = 10_000
    inject_sign_flip: bool = False


@dataclass(frozen=True)
class RunConfig:
    system: str
    pressure: PressureSpec
    stress: StressSpec
    mu: float
    x_min: float
    x_max: float
    cells: int
    boundary: str
    eps_ref: float
    profile: ProfileSpec
    velocity: ProfileSpec | None
    damped: ProfileSpec | None          # None means well prepared
    eps: tuple
    solver: SolverConfig
    check: CheckSettings = field(default_factory=CheckSettings)
    seed: int = 0

    def constitutive(self):
        if self.system == "euler":
            return self.pressure.build()
        return self.stress.build()

    def cells_for(self, eps: float) -> int:
        """N = N_ref (eps_ref/eps)^2, so the spatial error tracks the eps^4 signal."""
        return int(round(self.cells * (self.eps_ref / eps) ** 2))


# ---------------------------------------------------------------- parsing


def _get(cp, section, key, conv, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None


def _bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _floats(raw: str) -> tuple:
    return tuple(float(x) for x in raw.replace(";", ",").split(",") if x.strip())


def _profile(cp, prefix: str, default_kind: str | None) -> ProfileSpec | None:
    sec = "initial"
    key = f"{prefix}profile"
    kind = cp.get(sec, key) if cp.has_option(sec, key) else default_kind
    if kind is None:
        return None
    kind = kind.strip()
    if kind not in PROFILES:
        raise ConfigError(f"[initial] {key}: unknown profile {kind!r}; choose from {PROFILES}")
    params = {}
    if cp.has_section(sec):
        for k, v in cp.items(sec):
            if k.startswith(prefix) and k != key:
                name = k[len(prefix):]
                if prefix == "" and (name.startswith("velocity_") or name.startswith("damped_")
                                     or name == "preparation"):
                    continue
                try:
                    params[name] = float(v)
                except ValueError:
                    raise ConfigError(f"[initial] {k} = {v!r} is not a number") from None
    return ProfileSpec(kind, tuple(sorted(params.items())))


def parse_config(text: str, seed: int | None = None) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for sec in cp.sections():
        if sec not in ("system", "constitutive", "grid", "initial", "run", "solver", "check"):
            raise ConfigError(f"unknown section [{sec}]")

    system = _get(cp, "system", "name", str, "euler").strip()
    if system not in SYSTEMS:
        raise ConfigError(f"[system] name must be one of {SYSTEMS}")
    limit = _get(cp, "system", "limit", str, "auto").strip()
    if limit != "auto":
        raise ConfigError("[system] limit: only 'auto' is supported")
    mu = _get(cp, "system", "mu", float, 1.0)
    if not mu > 0:
        raise ConfigError("[system] mu must be positive")

    default_law = "gamma" if system == "euler" else "cubic"
    law = _get(cp, "constitutive", "law", str, default_law).strip()
    pressure = PressureSpec()
    stress = StressSpec()
    if law in PRESSURE_LAWS:
        pressure = PressureSpec(law, _get(cp, "constitutive", "k", float, 1.0),
                                _get(cp, "constitutive", "gamma", float, 2.0))
        if system != "euler":
            raise ConfigError(f"pressure law {law!r} needs system = euler")
    elif law in STRESS_LAWS:
        stress = StressSpec(law, _get(cp, "constitutive", "coefficients", _floats, ()))
        if system == "euler":
            raise ConfigError(f"stress law {law!r} does not apply to system = euler")
    else:
        raise ConfigError(f"[constitutive] law must be one of {PRESSURE_LAWS + STRESS_LAWS}")
    try:
        pressure.build() if system == "euler" else stress.build()
    except ValueError as exc:
        raise ConfigError(f"[constitutive] {exc}") from None

    x_min = _get(cp, "grid", "x_min", float, 0.0)
    x_max = _get(cp, "grid", "x_max", float, 1.0)
    cells = _get(cp, "grid", "cells", int, 32)
    boundary = _get(cp, "grid", "boundary", str, "periodic").strip()
    eps_ref = _get(cp, "grid", "eps_ref", float, 0.1)
    try:
        Grid(x_min, x_max, cells, boundary)
    except ValueError as exc:
        raise ConfigError(f"[grid] {exc}") from None

    profile = _profile(cp, "", "sine")
    velocity = _profile(cp, "velocity_", None)
    prep = _get(cp, "initial", "preparation", str, "well").strip()
    if prep not in ("well", "ill"):
        raise ConfigError("[initial] preparation must be 'well' or 'ill'")
    damped = None
    if prep == "ill":
        damped = _profile(cp, "damped_", "constant") or ProfileSpec("constant")
        if damped.kind == "constant" and not damped.params:
            damped = ProfileSpec("constant", (("value", 0.0),))

    eps_list = _get(cp, "run", "eps_list", _floats, None)
    eps_one = _get(cp, "run", "eps", float, None)
    eps = eps_list if eps_list is not None else ((eps_one,) if eps_one is not None else (0.1,))
    if any(not e > 0 for e in eps):
        raise ConfigError("[run] eps values must be positive")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("[run] eps_list must be strictly decreasing")

    sk = {}
    conv = {"cfl": float, "flux": str, "time_scheme": str, "source": str, "output_stride": int,
            "observations": int, "limit_scheme": str, "limit_dt": float, "limit_dt_eps": float,
            "newton_tol": float, "newton_max_iter": int, "courant_max": float, "residual": _bool,
            "farfield_tol": float, "balance_every": int, "max_dt_eps2": float}
    if cp.has_section("solver"):
        for k, v in cp.items("solver"):
            if k not in conv:
                raise ConfigError(f"[solver] unknown key {k!r}")
            sk[k] = _get(cp, "solver", k, conv[k], None)
            if isinstance(sk[k], str):
                sk[k] = sk[k].strip()
    sk["t_end"] = _get(cp, "run", "t_end", float, 0.25)
    try:
        solver = SolverConfig(**sk)
    except ValueError as exc:
        raise ConfigError(f"[solver] {exc}") from None

    ck = {}
    conv = {f.name: (_bool if f.type in ("bool", bool) else (int if f.type in ("int", int) else float))
            for f in fields(CheckSettings)}
    if cp.has_section("check"):
        for k, _ in cp.items("check"):
            if k in ("seed", "pressure", "k", "gamma", "stress", "coefficients"):
                continue
            if k not in conv:
                raise ConfigError(f"[check] unknown key {k!r}")
            ck[k] = _get(cp, "check", k, conv[k], None)
    if seed is None:
        seed = _get(cp, "check", "seed", int, 0)
    return RunConfig(system, pressure, stress, mu, x_min, x_max, cells, boundary, eps_ref, profile,
                     velocity, damped, tuple(eps), solver, CheckSettings(**ck), seed)


def load_config(path, seed: int | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, seed)


def check_specs(path=None) -> tuple[PressureSpec, StressSpec, float, CheckSettings, int]:
    """Constitutive laws and settings for ``check``; all optional in the config."""
    if path is None:
        return PressureSpec(), StressSpec(), 1.0, CheckSettings(), 0
    cfg = load_config(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read_string(Path(path).read_text())
    pressure, stress = cfg.pressure, cfg.stress
    if cp.has_option("check", "pressure"):
        pressure = PressureSpec(cp.get("check", "pressure").strip(), _get(cp, "check", "k", float, 1.0),
                                _get(cp, "check", "gamma", float, 2.0))
    if cp.has_option("check", "stress"):
        stress = StressSpec(cp.get("check", "stress").strip(), _get(cp, "check", "coefficients", _floats, ()))
    return pressure, stress, cfg.mu, cfg.check, cfg.seed


# ---------------------------------------------------------------- runs


@dataclass
class RunResult:
    eps: float
    ledger: EntropyLedger
    initial: GridField
    final: GridField
    final_bar: GridField          # limit solution at t_end
    reconstructed: GridField      # bar state at t_end
    error: str | None = None


def run_point(cfg: RunConfig, eps: float, cells: int | None = None) -> RunResult:
    """One paired relaxation/limit run at ``eps``."""
    cells = cfg.cells_for(eps) if cells is None else cells
    grid = Grid(cfg.x_min, cfg.x_max, cells, cfg.boundary)
    system = build_system(cfg.system, cfg.constitutive(), cfg.mu)
    limit = limit_of(system)
    W0 = [cfg.profile.build(grid)]
    if cfg.system == "visco":
        W0.append(cfg.velocity.build(grid) if cfg.velocity is not None else np.zeros(cells))
    damped = None if cfg.damped is None else cfg.damped.build(grid)
    relax, bar = paired_initial_state(limit, W0, eps, grid, damped=damped)
    system.check_state(relax.data)
    final, ledger = run_to(relax, system, eps, cfg.solver, bar=bar, limit=limit)
    ledger.meta.update({"system": cfg.system, "cells": cells})
    rec = GridField(grid, limit.reconstruct(ledger.final_bar.data, eps, grid), final.t, system.components)
    return RunResult(eps, ledger, relax, final, ledger.final_bar, rec)


def _run_point_safe(args):
    cfg, eps = args
    try:
        return run_point(cfg, eps)
    except (SolverAbort, DomainError) as exc:
        return RunResult(eps, None, None, None, None, None, f"{type(exc).__name__}: {exc}")


def run_summary(cfg: RunConfig, res: RunResult) -> dict:
    led = res.ledger
    g = gronwall_audit(led, cap=cfg.check.gronwall_cap)
    ineq = inequality_audit(led, rtol=cfg.check.inequality_rtol)
    C_res = led.residual_constant
    return {
        "system": cfg.system,
        "epsilon": res.eps,
        "cells": int(led.meta["cells"]),
        "dx": led.dx,
        "dt": led.dt,
        "t_end": float(led.t[-1]),
        "phi_0": float(led.phi[0]),
        "phi_T": led.phi_final,
        "phi_floor_T": float(led.phi_floor[-1]),
        "gronwall_C": g.C,
        "gronwall_within_cap": g.satisfied,
        "residual_constant": C_res,
        "residual_certified": bool(C_res <= cfg.check.residual_constant_max),
        "inequality_holds": ineq.holds,
        "inequality_max_excess": ineq.max_violation,
        "mass_error_T": float(led.mass_err[-1]),
    }


def _eps_tag(eps: float) -> str:
    return f"{eps:.6g}".replace(".", "p")


def _write_run_files(out: Path, res: RunResult, suffix: str = ""):
    write_ledger(out / f"ledger{suffix}.csv", res.ledger)
    meta = {"eps": repr(res.eps)}
    write_checkpoint(out / f"relax_initial{suffix}.csv", res.initial, meta)
    write_checkpoint(out / f"relax_final{suffix}.csv", res.final, meta)
    write_checkpoint(out / f"bar_final{suffix}.csv", res.reconstructed, meta)


def cmd_run(cfg: RunConfig, out) -> int:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    eps = cfg.eps[0]
    try:
        res = run_point(cfg, eps)
    except (SolverAbort, DomainError) as exc:
        _write_json(out / "summary.json", {"aborted": f"{type(exc).__name__}: {exc}"})
        print(f"solver abort: {exc}")
        return EXIT_ABORT
    _write_run_files(out, res)
    summary = run_summary(cfg, res)
    _write_json(out / "summary.json", summary)
    print(f"eps={eps:g} cells={summary['cells']} phi(T)={summary['phi_T']:.4e} "
          f"Gronwall C={summary['gronwall_C']:.4g} residual C={summary['residual_constant']:.4g}")
    if not summary["residual_certified"]:
        print("entropy residual certification failed")
        return EXIT_CERTIFICATION
    return EXIT_OK


def run_sweep(cfg: RunConfig, workers: int = 1) -> list[RunResult]:
    jobs = [(cfg, e) for e in cfg.eps]
    if workers <= 1:
        return [_run_point_safe(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_point_safe, jobs))


def sweep_report(cfg: RunConfig, results: list[RunResult]) -> tuple[SweepReport | None, dict]:
    ok = [r for r in results if r.error is None]
    extra = {
        "system": cfg.system,
        "refinement": f"cells = {cfg.cells} * ({cfg.eps_ref:g}/eps)^2",
        "aborted": {f"{r.eps:g}": r.error for r in results if r.error is not None},
        "partial": len(ok) != len(results),
    }
    if len(ok) < 2:
        return None, extra
    report = SweepReport.from_ledgers([r.ledger for r in ok], meta={"system": cfg.system})
    extra["C_variation"] = report.C_variation()
    extra["runs"] = [run_summary(cfg, r) for r in ok]
    if len(ok) >= 3:
        limit = limit_of(build_system(cfg.system, cfg.constitutive(), cfg.mu))
        h = hilbert_check([r.eps for r in ok], [r.final for r in ok], [r.final_bar for r in ok], limit)
        extra["hilbert"] = {"epsilon": h.eps.tolist(), "relative_residual": h.relative.tolist(),
                            "decreasing": h.decreasing, "regression_relative": h.regression_relative}
    return report, extra


def cmd_sweep(cfg: RunConfig, out, workers: int = 1) -> int:
    if len(cfg.eps) < 4:
        print("a sweep needs at least four eps values in [run] eps_list")
        return EXIT_CONFIG
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_sweep(cfg, workers)
    for r in results:
        if r.error is None:
            _write_run_files(out, r, f"_eps{_eps_tag(r.eps)}")
    report, extra = sweep_report(cfg, results)
    doc = sweep_report_to_dict(report) if report is not None else {"rate": None, "points": []}
    doc.update(extra)
    _write_json(out / "report.json", doc)
    if report is not None:
        write_sweep_report(out / "sweep_report.json", report)
        for e, p, c in zip(report.epsilon, report.phi_T, report.C):
            print(f"eps={e:g} phi(T)={p:.4e} C={c:.4g}")
        print(f"rate={report.rate:.4f} fit_valid={report.fit_valid} C_variation={extra['C_variation']:.3g}")
        for note in report.notes:
            print(f"note: {note}")
    if extra["partial"]:
        for e, msg in extra["aborted"].items():
            print(f"eps={e}: {msg}")
        return EXIT_ABORT
    if not all(run["residual_certified"] for run in extra.get("runs", [])):
        print("entropy residual certification failed")
        return EXIT_CERTIFICATION
    return EXIT_OK


def _clean(o):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as null."""
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return [_clean(v) for v in o.tolist()]
    if isinstance(o, np.generic):
        o = o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return None
    return o


def _write_json(path, doc):
    Path(path).write_text(json.dumps(_clean(doc), indent=2, allow_nan=False) + "\n")


def config_to_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    d["solver"] = asdict(cfg.solver)
    return d
