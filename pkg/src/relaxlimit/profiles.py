"""Initial profiles and paired (relaxation, limit) initial states."""

from __future__ import annotations

import numpy as np

from .grid import Grid, GridField
from .systems import LimitSystem

PROFILES = ("constant", "sine", "gauss-bump", "two-state")


def _smooth_step(s):
    """C-infinity step: 0 for s <= -1, 1 for s >= 1."""
    t = np.clip(0.5 * (np.asarray(s, dtype=float) + 1.0), 0.0, 1.0)

    def f(a):
        return np.where(a > 0, np.exp(-1.0 / np.where(a > 0, a, 1.0)), 0.0)

    return f(t) / (f(t) + f(1.0 - t))


def make_profile(kind: str, grid: Grid, **params) -> np.ndarray:
    x = grid.x
    if kind == "constant":
        return np.full(grid.cells, float(params.get("value", params.get("mean", 1.0))))
    if kind == "sine":
        mode = float(params.get("mode", 1))
        phase = 2.0 * np.pi * mode * (x - grid.x_min) / grid.length
        return float(params.get("mean", 0.0)) + float(params.get("amplitude", 1.0)) * np.sin(phase)
    if kind == "gauss-bump":
        c = float(params.get("center", 0.5 * (grid.x_min + grid.x_max)))
        w = float(params.get("width", 0.1 * grid.length))
        return float(params.get("mean", 0.0)) + float(params.get("amplitude", 1.0)) * np.exp(-((x - c) / w) ** 2)
    if kind == "two-state":
        left = float(params["left"])
        right = float(params["right"])
        c = float(params.get("center", 0.5 * (grid.x_min + grid.x_max)))
        w = float(params.get("width", 1.0))
        return left + (right - left) * _smooth_step((x - c) / w)
    raise ValueError(f"unknown profile {kind!r}; choose from {PROFILES}")


def paired_initial_state(limit: LimitSystem, W0, eps: float, grid: Grid, damped=None,
                         t0: float = 0.0) -> tuple[GridField, GridField]:
    """Relaxation state and limit state at ``t0``.

    By default the relaxation state is well prepared: it equals the bar state
    reconstructed from ``W0``.  Passing ``damped`` (an array) replaces the damped
    component, giving ill-prepared data.
    """
    W0 = np.atleast_2d(np.asarray(W0, dtype=float))
    if W0.shape[0] != limit.state_dim:
        raise ValueError(f"limit state for {limit.name} has {limit.state_dim} components")
    U0 = limit.reconstruct(W0, eps, grid)
    if damped is not None:
        U0 = U0.copy()
        U0[limit.relaxation.damped] = damped
    relax = GridField(grid, U0, t0, limit.relaxation.components)
    bar = GridField(grid, W0, t0, limit.components)
    return relax, bar
