"""Uniform grids and sparse Lagrange projection/interpolation operators.

Grid point n(l, p, q) linearizes as n = l*N_gz*N_gy + p*N_gz + q (C order on
arrays shaped (N_gx, N_gy, N_gz)), so flattened grid arrays and kernel tables
index identically.  A degenerate axis (single plane, zero extent) carries
weight 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np

from .errors import DomainError
from .model import TargetBox

__all__ = [
    "UniformGrid", "SparseInterpOperator", "build_far_grids", "build_near_grid",
    "lagrange_axis_weights", "lagrange_weights", "build_operator",
    "project", "interpolate",
]


@dataclass(frozen=True)
class UniformGrid:
    """Axis-aligned uniform grid; spacing is 0 on single-plane axes."""
    dims: tuple[int, int, int]
    origin: tuple[float, float, float]
    spacing: tuple[float, float, float]
    shift: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "spacing", tuple(float(v) for v in self.spacing))
        object.__setattr__(self, "shift", tuple(float(v) for v in self.shift))
        if any(d < 1 for d in self.dims):
            raise ValueError(f"grid dims must be >= 1, got {self.dims}")

    @property
    def size(self) -> int:
        return prod(self.dims)

    def axis_coords(self, a: int) -> np.ndarray:
        return self.origin[a] + self.spacing[a] * np.arange(self.dims[a])

    def points(self) -> np.ndarray:
        """All grid points, shape (size, 3), flattened in C order."""
        xs, ys, zs = (self.axis_coords(a) for a in range(3))
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    def active_axes(self) -> tuple[int, ...]:
        return tuple(a for a in range(3) if self.dims[a] > 1)


def build_far_grids(box: TargetBox, dims) -> tuple[UniformGrid, UniformGrid]:
    """Shifted source/observer grids for the far engine.

    Source grid spans [0, D - Delta] with spacing Delta = D/N per axis; the
    observer grid sits half a spacing above it, so grid-to-grid difference
    vectors never vanish.  Axes with zero extent collapse to a single plane.
    """
    dims = tuple(int(d) for d in dims)
    sdim, sorg, sspc, oorg, shf = [], [], [], [], []
    for a in range(3):
        d_a = box.D[a]
        if d_a <= 0.0:
            sdim.append(1)
            sorg.append(0.0)
            sspc.append(0.0)
            oorg.append(0.0)
            shf.append(0.0)
            continue
        n = dims[a]
        if n < 2:
            raise ValueError(f"far grid needs >= 2 points on active axis {a}")
        delta = d_a / n
        sdim.append(n)
        sorg.append(0.0)
        sspc.append(delta)
        oorg.append(delta / 2.0)
        shf.append(delta / 2.0)
    src = UniformGrid(tuple(sdim), tuple(sorg), tuple(sspc))
    obs = UniformGrid(tuple(sdim), tuple(oorg), tuple(sspc), shift=tuple(shf))
    return src, obs


def build_near_grid(box: TargetBox, dims) -> UniformGrid:
    """Single coinciding source/observer grid spanning [0, D] per active axis."""
    dims = tuple(int(d) for d in dims)
    gdim, gspc = [], []
    for a in range(3):
        d_a = box.D[a]
        if d_a <= 0.0 or dims[a] == 1:
            if d_a > 0.0:
                raise ValueError(f"near grid needs >= 2 points on active axis {a}")
            gdim.append(1)
            gspc.append(0.0)
            continue
        n = dims[a]
        if n < 2:
            raise ValueError(f"near grid needs >= 2 points on active axis {a}")
        gdim.append(n)
        gspc.append(d_a / (n - 1))
    return UniformGrid(tuple(gdim), (0.0, 0.0, 0.0), tuple(gspc))


def lagrange_axis_weights(coords: np.ndarray, n_planes: int, origin: float,
                          spacing: float, order: int, margin: float):
    """Stencil starts and Lagrange weights along one axis.

    Returns (starts (P,), weights (P, order+1)).  Weights reproduce
    polynomials up to `order` exactly and sum to 1.  Points may sit up to
    `margin` outside the hull (edge stencils extrapolate).
    """
    p = coords.shape[0]
    if n_planes == 1:
        return np.zeros(p, dtype=np.int64), np.ones((p, 1))
    if order + 1 > n_planes:
        raise ValueError(f"order {order} needs {order + 1} planes, grid has {n_planes}")
    t = (coords - origin) / spacing
    m_idx = margin / spacing + 1e-9
    if np.any(t < -m_idx) or np.any(t > n_planes - 1 + m_idx):
        raise DomainError("point outside grid hull (beyond allowed margin)")
    start = np.rint(t - order / 2.0).astype(np.int64)
    np.clip(start, 0, n_planes - 1 - order, out=start)
    rel = t - start                       # in [~-margin, order+margin]
    k = np.arange(order + 1, dtype=float)
    diff = rel[:, None] - k[None, :]      # (P, order+1)
    w = np.empty((p, order + 1))
    for j in range(order + 1):
        denom = np.prod(j - k[k != j])
        num = np.ones(p)
        for i in range(order + 1):
            if i != j:
                num = num * diff[:, i]
        w[:, j] = num / denom
    return start, w


@dataclass(frozen=True)
class SparseInterpOperator:
    """Tensor-product Lagrange stencil map between points and a grid.

    The same stencil data applies both ways: `project` scatters point values
    to the grid (source side), `interpolate` gathers grid values at the
    points (observer side); the two are transposes of each other.
    """
    grid: UniformGrid
    order: int
    role: str                          # "project" or "interpolate"
    axis_starts: np.ndarray            # (P, 3) int64
    axis_weights: tuple[np.ndarray, np.ndarray, np.ndarray]   # (P, q_a+1) each
    flat_index: np.ndarray             # (P, S) int64
    flat_weight: np.ndarray            # (P, S) float64

    @property
    def n_points(self) -> int:
        return self.axis_starts.shape[0]

    @property
    def stencil_size(self) -> int:
        return self.flat_index.shape[1]

    def project(self, values: np.ndarray) -> np.ndarray:
        """Point values -> grid array (flat, C order): q_g = W^T q."""
        values = np.asarray(values)
        if values.shape[0] != self.n_points:
            raise ValueError(f"expected {self.n_points} values, got {values.shape[0]}")
        contrib = self.flat_weight * values[:, None]
        idx = self.flat_index.ravel()
        flat = contrib.ravel()
        size = self.grid.size
        if np.iscomplexobj(flat):
            out = (np.bincount(idx, weights=flat.real, minlength=size)
                   + 1j * np.bincount(idx, weights=flat.imag, minlength=size))
        else:
            out = np.bincount(idx, weights=flat, minlength=size)
        return out

    def interpolate(self, grid_values: np.ndarray) -> np.ndarray:
        """Grid array (flat or shaped) -> point values: u = W u_g."""
        gv = np.asarray(grid_values).ravel()
        if gv.shape[0] != self.grid.size:
            raise ValueError(f"expected grid of size {self.grid.size}, got {gv.shape[0]}")
        return np.einsum("ps,ps->p", self.flat_weight, gv[self.flat_index])


def build_operator(grid: UniformGrid, points: np.ndarray, order: int, role: str,
                   margin=0.0) -> SparseInterpOperator:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    margins = (margin,) * 3 if np.isscalar(margin) else tuple(margin)
    starts = np.empty((points.shape[0], 3), dtype=np.int64)
    axis_w = []
    for a in range(3):
        s, w = lagrange_axis_weights(points[:, a], grid.dims[a], grid.origin[a],
                                     grid.spacing[a], order, margins[a])
        starts[:, a] = s
        axis_w.append(w)
    nx, ny, nz = (w.shape[1] for w in axis_w)
    ox = starts[:, 0][:, None] + np.arange(nx)[None, :]
    oy = starts[:, 1][:, None] + np.arange(ny)[None, :]
    oz = starts[:, 2][:, None] + np.arange(nz)[None, :]
    _, gy, gz = grid.dims
    flat = (ox[:, :, None, None] * (gy * gz)
            + oy[:, None, :, None] * gz
            + oz[:, None, None, :]).astype(np.int32)
    w3 = (axis_w[0][:, :, None, None]
          * axis_w[1][:, None, :, None]
          * axis_w[2][:, None, None, :])
    p = points.shape[0]
    return SparseInterpOperator(
        grid=grid, order=order, role=role,
        axis_starts=starts, axis_weights=tuple(axis_w),
        flat_index=flat.reshape(p, -1), flat_weight=w3.reshape(p, -1))


def lagrange_weights(grid: UniformGrid, point, order: int, margin: float = 0.0):
    """Stencil of (flat grid index, weight) pairs for a single point."""
    op = build_operator(grid, np.asarray(point, dtype=float).reshape(1, 3),
                        order, "interpolate", margin)
    return list(zip(op.flat_index[0].tolist(), op.flat_weight[0].tolist()))


def project(op: SparseInterpOperator, values) -> np.ndarray:
    return op.project(np.asarray(values))


def interpolate(op: SparseInterpOperator, grid_values) -> np.ndarray:
    return op.interpolate(grid_values)
