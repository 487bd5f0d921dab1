"""Uniform 1-D cell-centred grids, grid fields and centred difference operators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

PERIODIC = "periodic"
FARFIELD = "farfield"


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    cells: int
    boundary: str = PERIODIC

    def __post_init__(self):
        if self.cells < 4:
            raise ValueError("need at least 4 cells")
        if not self.x_max > self.x_min:
            raise ValueError("empty domain")
        if self.boundary not in (PERIODIC, FARFIELD):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return self.length / self.cells

    @property
    def x(self) -> np.ndarray:
        return self.x_min + (np.arange(self.cells) + 0.5) * self.dx

    @property
    def periodic(self) -> bool:
        return self.boundary == PERIODIC

    def refine(self, factor: int) -> "Grid":
        return Grid(self.x_min, self.x_max, self.cells * factor, self.boundary)

    def pad(self, f, width: int, left=None, right=None):
        """Add ``width`` ghost cells on both sides of the last axis.

        Periodic grids wrap.  Far-field grids use the frozen states ``left`` and
        ``right`` (scalars or per-component columns), defaulting to the edge values.
        """
        f = np.asarray(f)
        if self.periodic:
            return np.concatenate([f[..., -width:], f, f[..., :width]], axis=-1)
        lv = f[..., :1] if left is None else np.asarray(left, dtype=f.dtype)[..., None]
        rv = f[..., -1:] if right is None else np.asarray(right, dtype=f.dtype)[..., None]
        lg = np.broadcast_to(lv, f.shape[:-1] + (width,))
        rg = np.broadcast_to(rv, f.shape[:-1] + (width,))
        return np.concatenate([lg, f, rg], axis=-1)

    def ddx(self, f, order: int = 2, left=None, right=None):
        """Centred first derivative, second or fourth order."""
        if order == 2:
            g = self.pad(f, 1, left, right)
            return (g[..., 2:] - g[..., :-2]) / (2.0 * self.dx)
        if order == 4:
            g = self.pad(f, 2, left, right)
            return (-g[..., 4:] + 8.0 * g[..., 3:-1] - 8.0 * g[..., 1:-3] + g[..., :-4]) / (12.0 * self.dx)
        raise ValueError("order must be 2 or 4")

    def wide_laplacian(self, f, left=None, right=None):
        """Centred derivative applied twice: (f[i+2] - 2 f[i] + f[i-2]) / (4 dx^2)."""
        g = self.pad(f, 2, left, right)
        return (g[..., 4:] - 2.0 * g[..., 2:-2] + g[..., :-4]) / (4.0 * self.dx ** 2)

    def wide_laplacian_matrix(self) -> sp.csc_matrix:
        """Sparse matrix of ``wide_laplacian`` acting on the interior unknowns.

        For far-field grids the ghost contributions are affine and omitted here.
        """
        n = self.cells
        off = np.ones(n)
        diags = [off, -2.0 * off, off]
        mat = sp.diags(diags, [-2, 0, 2], shape=(n, n), format="lil")
        if self.periodic:
            mat[0, n - 2] += 1.0
            mat[1, n - 1] += 1.0
            mat[n - 2, 0] += 1.0
            mat[n - 1, 1] += 1.0
        return (mat / (4.0 * self.dx ** 2)).tocsc()

    def integrate(self, f):
        return np.sum(f, axis=-1) * self.dx

    def restrict(self, f, cells: int):
        """Cell-average onto a coarser grid of ``cells`` cells."""
        f = np.asarray(f)
        ratio = self.cells // cells
        if ratio * cells != self.cells:
            raise ValueError("coarse grid must divide the fine grid")
        return f.reshape(f.shape[:-1] + (cells, ratio)).mean(axis=-1)


@dataclass
class GridField:
    """State on a grid: ``data`` has shape (components, cells)."""

    grid: Grid
    data: np.ndarray
    t: float = 0.0
    components: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if self.data.shape[-1] != self.grid.cells:
            raise ValueError("field length does not match grid")
        if not self.components:
            self.components = tuple(f"q{i}" for i in range(self.data.shape[0]))
        if len(self.components) != self.data.shape[0]:
            raise ValueError("component names do not match data")

    def __getitem__(self, name):
        if isinstance(name, str):
            return self.data[self.components.index(name)]
        return self.data[name]

    @property
    def state_dim(self) -> int:
        return self.data.shape[0]

    def copy(self) -> "GridField":
        return GridField(self.grid, self.data.copy(), self.t, self.components)

    def with_data(self, data, t=None) -> "GridField":
        return GridField(self.grid, data, self.t if t is None else t, self.components)
