"""Time grids: strictly increasing partitions of a simulation window."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """A strictly increasing sequence of times t_0 < ... < t_M."""

    points: np.ndarray
    uniform: bool = field(init=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or len(pts) < 2:
            raise ValueError("a time grid needs at least 2 points")
        if not np.all(np.diff(pts) > 0):
            raise ValueError("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)
        dts = np.diff(pts)
        object.__setattr__(self, "uniform", bool(np.allclose(dts, dts[0], rtol=1e-12, atol=0.0)))

    @classmethod
    def regular(cls, t0: float, t1: float, cells: int) -> "TimeGrid":
        return cls(np.linspace(t0, t1, cells + 1))

    @property
    def n_cells(self) -> int:
        return len(self.points) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.points)

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Index of grid point equal to t; raises if t is not on the grid."""
        i = int(np.searchsorted(self.points, t))
        for j in (i - 1, i, i + 1):
            if 0 <= j < len(self.points) and abs(self.points[j] - t) <= tol:
                return j
            # fallthrough: inspect neighbours to absorb float fuzz
        raise ValueError(f"time {t} is not a grid point")

    def subgrid_indices(self, coarse: "TimeGrid", tol: float = 1e-9) -> np.ndarray:
        """Indices embedding a coarser grid into this one; raises if not nested."""
        idx = np.empty(len(coarse.points), dtype=np.int64)
        for k, t in enumerate(coarse.points):
            try:
                idx[k] = self.index_of(float(t), tol)
            except ValueError:
                raise ValueError("coarse grid is not nested in the fine grid") from None
        return idx
