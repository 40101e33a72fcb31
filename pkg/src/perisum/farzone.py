"""Far-zone engine: sparse shifted grids, a difference-indexed kernel table,
and evaluation by project -> dense grid sum -> interpolate.

The grid-to-grid sum is a direct dense convolution (the far grid is O(1) in
size); the kernel is stored over difference vectors only, exploiting shift
invariance.  Kernel tables can be exported to / imported from a small binary
blob so repeated runs skip the series tabulation.
"""
from __future__ import annotations

import hashlib
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import KernelCacheError, NotConvergedError
from .grids import SparseInterpOperator, UniformGrid, build_far_grids, build_operator
from .model import (ObserverPointSet, PeriodicityConfig, Regime, SolverParams,
                    SourcePointSet, TargetBox)
from .pgf import TruncationPolicy, pgf_far_many

__all__ = ["FarZonePlan", "build_far_plan", "eval_far",
           "save_far_kernel", "load_far_kernel"]

_BLOB_MAGIC = b"PIMF"
_BLOB_VERSION = 1
_REGIME_CODE = {Regime.DYNAMIC: 1, Regime.STATIC_SHIFTED: 2, Regime.NPSP: 3}


@dataclass(frozen=True)
class FarZonePlan:
    cfg: PeriodicityConfig
    box: TargetBox
    i_d: int
    order: int
    source_grid: UniformGrid
    observer_grid: UniformGrid
    proj_op: SparseInterpOperator
    interp_op: SparseInterpOperator
    kernel: np.ndarray          # (2Nx-1, 2Ny-1, 2Nz-1) over difference vectors
    kernel_terms: int           # worst series length seen during tabulation
    series_tol: float

    @property
    def n_sources(self) -> int:
        return self.proj_op.n_points

    @property
    def n_observers(self) -> int:
        return self.interp_op.n_points


def _kernel_signature(cfg: PeriodicityConfig, box: TargetBox, dims, i_d: int,
                      tol: float) -> int:
    txt = (f"{cfg.canonical_key()}|D={box.D!r}|dims={tuple(dims)!r}"
           f"|i_d={int(i_d)}|tol={tol!r}")
    return int.from_bytes(hashlib.sha256(txt.encode()).digest()[:8], "little")


def _difference_points(src: UniformGrid, obs: UniformGrid):
    axes = []
    for a in range(3):
        n = src.dims[a]
        if n == 1:
            axes.append(np.array([obs.origin[a] - src.origin[a]]))
        else:
            dl = np.arange(-(n - 1), n)
            axes.append(dl * src.spacing[a] + (obs.origin[a] - src.origin[a]))
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    return pts, (len(axes[0]), len(axes[1]), len(axes[2]))


def build_far_plan(cfg: PeriodicityConfig, box: TargetBox, src: SourcePointSet,
                   obs: ObserverPointSet, params: SolverParams,
                   cache_path=None) -> FarZonePlan:
    """Build grids, operators and the far-kernel table.

    cache_path, when given, is checked for a previously exported kernel blob
    matching this problem; on miss the freshly tabulated kernel is saved there.
    """
    if params.i_d < 1:
        raise ValueError("far-zone engine requires i_d >= 1")
    dims = tuple(params.far_grid[a] if box.D[a] > 0.0 else 1 for a in range(3))
    sgrid, ogrid = build_far_grids(box, dims)

    if cfg.dim.value == 1 and box.D[1] == 0.0 and box.D[2] == 0.0:
        # cloud exactly on the periodic axis: series kernels need transverse
        # separation, so push the source grid half a spacing off in y
        dy = sgrid.spacing[0] / 2.0
        warnings.warn(
            "source cloud lies exactly on the periodic axis; offsetting the "
            "source grid transversely by half a grid spacing in y (kernel "
            "evaluated at that offset)", stacklevel=2)
        sgrid = UniformGrid(sgrid.dims, (sgrid.origin[0], dy, sgrid.origin[2]),
                            sgrid.spacing, sgrid.shift)

    policy = TruncationPolicy(tol=params.series_tol)
    diff_pts, kshape = _difference_points(sgrid, ogrid)

    kernel = None
    want_sig = _kernel_signature(cfg, box, dims, params.i_d, params.series_tol)
    kernel_terms = 0
    if cache_path is not None:
        try:
            kernel, kernel_terms = load_far_kernel(
                cache_path, expect_dims=dims, expect_regime=cfg.regime,
                expect_signature=want_sig)
        except (FileNotFoundError, KernelCacheError):
            kernel = None
    if kernel is None:
        vals, terms, conv = pgf_far_many(diff_pts, cfg, params.i_d, policy)
        if not conv.all():
            i = int(np.argmin(conv))
            raise NotConvergedError(
                f"far kernel series did not converge at difference vector "
                f"{diff_pts[i].tolist()} (terms used: {int(terms[i])})")
        kernel = vals.reshape(kshape)
        kernel_terms = int(terms.max())
        if cache_path is not None:
            save_blob(cache_path, kernel, dims, cfg.regime, want_sig, kernel_terms)

    margins = tuple(sgrid.spacing[a] if sgrid.dims[a] > 1 else 0.0 for a in range(3))
    proj = build_operator(sgrid, src.positions, params.far_order, "project", margins)
    interp = build_operator(ogrid, obs.positions, params.far_order, "interpolate", margins)
    return FarZonePlan(cfg=cfg, box=box, i_d=params.i_d, order=params.far_order,
                       source_grid=sgrid, observer_grid=ogrid,
                       proj_op=proj, interp_op=interp, kernel=kernel,
                       kernel_terms=kernel_terms, series_tol=params.series_tol)


def _difference_view(kernel: np.ndarray, dims) -> np.ndarray:
    """Zero-copy view V[lo,po,qo,ls,ps,qs] = kernel[lo-ls+Nx-1, ...].

    Keeps the kernel stored over difference vectors while exposing the dense
    grid-to-grid sum as a single contraction.
    """
    nx, ny, nz = dims
    base = kernel[nx - 1 if nx > 1 else 0:,
                  ny - 1 if ny > 1 else 0:,
                  nz - 1 if nz > 1 else 0:]
    s0, s1, s2 = kernel.strides
    return np.lib.stride_tricks.as_strided(
        base, shape=(nx, ny, nz, nx, ny, nz),
        strides=(s0, s1, s2, -s0, -s1, -s2), writeable=False)


def eval_far(plan: FarZonePlan, q) -> np.ndarray:
    """Far potential at the observers: project, dense grid sum, interpolate."""
    q = np.asarray(q, dtype=complex)
    if q.shape[0] != plan.n_sources:
        raise ValueError(f"expected {plan.n_sources} amplitudes, got {q.shape[0]}")
    dims = plan.source_grid.dims
    qg = plan.proj_op.project(q).reshape(dims)
    view = _difference_view(plan.kernel, dims)
    ug = np.einsum("abcdef,def->abc", view, qg)
    return plan.interp_op.interpolate(ug.ravel())


# ---------------------------------------------------------------------------
# kernel blob export/import: 64-byte header + raw complex128 table
# ---------------------------------------------------------------------------

_HEADER_FMT = "<4sI3IIQQ"      # magic, version, table dims, regime, signature, terms


def save_blob(path, kernel: np.ndarray, grid_dims, regime: Regime,
              signature: int, kernel_terms: int) -> None:
    header = struct.pack(_HEADER_FMT, _BLOB_MAGIC, _BLOB_VERSION,
                         *(int(d) for d in kernel.shape),
                         _REGIME_CODE[regime], signature, kernel_terms)
    header = header.ljust(64, b"\0")
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(kernel, dtype=complex).tobytes())


def save_far_kernel(plan: FarZonePlan, path) -> None:
    dims = tuple(plan.source_grid.dims)
    sig = _kernel_signature(plan.cfg, plan.box, dims, plan.i_d, plan.series_tol)
    save_blob(path, plan.kernel, dims, plan.cfg.regime, sig, plan.kernel_terms)


def load_far_kernel(path, expect_dims=None, expect_regime=None,
                    expect_signature=None):
    with open(path, "rb") as f:
        header = f.read(64)
        if len(header) < 64:
            raise KernelCacheError("kernel blob truncated (short header)")
        magic, version, d0, d1, d2, regime_code, signature, terms = \
            struct.unpack(_HEADER_FMT, header[:struct.calcsize(_HEADER_FMT)])
        if magic != _BLOB_MAGIC:
            raise KernelCacheError(f"bad magic {magic!r}")
        if version != _BLOB_VERSION:
            raise KernelCacheError(f"unsupported blob version {version}")
        if expect_regime is not None and regime_code != _REGIME_CODE[expect_regime]:
            raise KernelCacheError("kernel blob regime mismatch")
        if expect_signature is not None and signature != expect_signature:
            raise KernelCacheError("kernel blob signature mismatch")
        shape = (d0, d1, d2)
        if expect_dims is not None:
            want = tuple(2 * d - 1 if d > 1 else 1 for d in expect_dims)
            if shape != want:
                raise KernelCacheError(f"kernel table shape {shape} != expected {want}")
        data = f.read()
    n = shape[0] * shape[1] * shape[2]
    arr = np.frombuffer(data, dtype=complex, count=-1)
    if arr.size != n:
        raise KernelCacheError(f"kernel blob payload has {arr.size} entries, expected {n}")
    return arr.reshape(shape).copy(), int(terms)
