"""Domain types and problem validation.

All types are immutable after construction and safe to share across threads.
Positions live in the zeroth unit cell: a box [0, D_x] x [0, D_y] x [0, D_z].
The periodic axes are fixed as x (1D), x,y (2D), x,y,z (3D).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Periodicity", "Regime", "PeriodicityConfig", "TargetBox",
    "SourcePointSet", "ObserverPointSet", "PotentialField", "SolverParams",
    "ValidationReport", "validate_problem", "auto_near_dims",
]


class Periodicity(enum.Enum):
    P1D = 1
    P2D = 2
    P3D = 3


class Regime(enum.Enum):
    DYNAMIC = "dynamic"
    STATIC_SHIFTED = "static-shifted"
    NPSP = "npsp"  # no-phase static periodic: k0 = kshift = 0


def _as_triple(v, name: str) -> tuple[float, float, float]:
    t = tuple(float(x) for x in v)
    if len(t) != 3:
        raise ValueError(f"{name} must have exactly 3 entries, got {len(t)}")
    return t  # type: ignore[return-value]


@dataclass(frozen=True)
class PeriodicityConfig:
    """Lattice, wavenumbers and phase shifts of the periodic problem.

    L entries beyond the periodic dimension are ignored.  The square-root
    branch used everywhere takes Im <= 0, so every Floquet root derived from
    this config decays (or propagates) instead of blowing up.
    """
    dim: Periodicity
    L: tuple[float, float, float]
    k0: complex = 0j
    kshift: tuple[complex, complex, complex] = (0j, 0j, 0j)
    regime: Regime = Regime.NPSP

    def __post_init__(self):
        object.__setattr__(self, "L", _as_triple(self.L, "L"))
        object.__setattr__(self, "k0", complex(self.k0))
        ks = tuple(complex(k) for k in self.kshift)
        if len(ks) != 3:
            raise ValueError("kshift must have exactly 3 entries")
        object.__setattr__(self, "kshift", ks)

    @property
    def periodic_axes(self) -> tuple[int, ...]:
        return tuple(range(self.dim.value))

    def is_static_nophase(self) -> bool:
        return self.k0 == 0 and all(k == 0 for k in self.kshift)

    def canonical_key(self) -> str:
        """Stable textual identity used for kernel-cache hashing."""
        parts = [f"dim={self.dim.value}", f"regime={self.regime.value}"]
        parts += [f"L{a}={self.L[a]!r}" for a in range(3)]
        parts.append(f"k0={self.k0!r}")
        parts += [f"ks{a}={self.kshift[a]!r}" for a in range(3)]
        return ";".join(parts)


@dataclass(frozen=True)
class TargetBox:
    """Extent (D_x, D_y, D_z) of the source/observer cloud.

    A zero extent is allowed on non-periodic axes (planar or linear clouds).
    """
    D: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "D", _as_triple(self.D, "D"))


def _points_array(positions) -> np.ndarray:
    arr = np.ascontiguousarray(np.atleast_2d(np.asarray(positions, dtype=float)))
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"positions must be (N, 3), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class SourcePointSet:
    positions: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        pos = _points_array(self.positions)
        amp = np.ascontiguousarray(np.asarray(self.amplitudes, dtype=complex)).ravel()
        if amp.shape[0] != pos.shape[0]:
            raise ValueError("amplitudes length must match positions")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "amplitudes", amp)

    def __len__(self) -> int:
        return self.positions.shape[0]

    def net_charge(self) -> complex:
        return complex(self.amplitudes.sum())


@dataclass(frozen=True)
class ObserverPointSet:
    positions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions", _points_array(self.positions))

    def __len__(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class PotentialField:
    """Complex potentials aligned with an ObserverPointSet."""
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values",
            np.ascontiguousarray(np.asarray(self.values, dtype=complex)).ravel())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


NEUTRALITY_RTOL = 1e-12


def auto_near_dims(n_points: int, box: TargetBox) -> tuple[int, int, int]:
    """Smallest grid with about >= 1.15*N points, equal odd count per active axis.

    Matches the published near-grid sizing pairs (3096 -> 17^3, 53601 -> 41^3)
    within one grid step.  Axes with zero extent collapse to a single plane.
    """
    active = [a for a in range(3) if box.D[a] > 0.0]
    if not active:
        raise ValueError("target box has no extent on any axis")
    target = 1.15 * max(int(n_points), 1)
    n = max(2, math.ceil(target ** (1.0 / len(active))))
    if n % 2 == 0:
        n += 1
    dims = [1, 1, 1]
    for a in active:
        dims[a] = n
    return tuple(dims)  # type: ignore[return-value]


@dataclass(frozen=True)
class SolverParams:
    """Tuning knobs of the fast path.

    i_d is the near-image half-width, shared by all periodic axes.  The far
    engine requires i_d >= 1 because its kernel is the total minus the near
    images.  near_grid None means automatic sizing from the point count.
    """
    i_d: int = 1
    far_order: int = 3
    far_grid: tuple[int, int, int] = (10, 10, 10)
    near_order: int = 2
    near_grid: tuple[int, int, int] | None = None
    series_tol: float = 1e-10
    er_range_boxes: int = 1
    neutrality_rtol: float = NEUTRALITY_RTOL

    def __post_init__(self):
        object.__setattr__(self, "far_grid", tuple(int(x) for x in self.far_grid))
        if self.near_grid is not None:
            object.__setattr__(self, "near_grid", tuple(int(x) for x in self.near_grid))

    def resolve_near_grid(self, n_points: int, box: TargetBox) -> tuple[int, int, int]:
        if self.near_grid is not None:
            return self.near_grid
        return auto_near_dims(n_points, box)


@dataclass(frozen=True)
class ValidationReport:
    """List of violated invariants; empty means the problem is solvable."""
    messages: tuple[str, ...] = field(default_factory=tuple)

    def __bool__(self) -> bool:       # truthy when there ARE violations
        return len(self.messages) > 0

    def ok(self) -> bool:
        return not self.messages

    def contains(self, fragment: str) -> bool:
        return any(fragment in m for m in self.messages)


_CONTAINMENT_TOL = 1e-12


def validate_problem(config: PeriodicityConfig, box: TargetBox,
                     src: SourcePointSet, obs: ObserverPointSet,
                     params: SolverParams) -> ValidationReport:
    """Pure validation: collect every violated invariant into one report."""
    msgs: list[str] = []
    pdim = config.dim.value

    for a in config.periodic_axes:
        if not (config.L[a] > 0.0):
            msgs.append(f"lattice period L[{a}] must be positive, got {config.L[a]}")
        if box.D[a] <= 0.0:
            msgs.append(f"target box must have positive extent on periodic axis {a}")
        if box.D[a] > config.L[a] * (1 + _CONTAINMENT_TOL):
            msgs.append(
                f"target box exceeds period on axis {a}: D={box.D[a]} > L={config.L[a]}")
    for a in range(3):
        if box.D[a] < 0.0:
            msgs.append(f"target box extent D[{a}] must be non-negative")

    nophase = config.is_static_nophase()
    if config.regime is Regime.NPSP and not nophase:
        msgs.append("regime NPSP requires k0 = 0 and kshift = (0, 0, 0)")
    if config.regime is not Regime.NPSP and nophase:
        msgs.append("k0 = 0 with zero kshift must use regime NPSP")
    if config.regime is Regime.STATIC_SHIFTED and config.k0 != 0:
        msgs.append("regime static-shifted requires k0 = 0")

    for name, pts in (("source", src.positions), ("observer", obs.positions)):
        if pts.shape[0] == 0:
            msgs.append(f"{name} set is empty")
            continue
        if not np.all(np.isfinite(pts)):
            msgs.append(f"{name} positions contain non-finite values")
            continue
        for a in range(3):
            tol = _CONTAINMENT_TOL * max(box.D[a], 1.0)
            if pts[:, a].min() < -tol or pts[:, a].max() > box.D[a] + tol:
                msgs.append(f"{name} positions leave the target box on axis {a}")

    if len(src) and not np.all(np.isfinite(src.amplitudes.view(float))):
        msgs.append("source amplitudes contain non-finite values")

    if config.regime is Regime.NPSP and len(src):
        total = abs(src.net_charge())
        scale = float(np.abs(src.amplitudes).sum())
        if total > params.neutrality_rtol * max(scale, 1e-300):
            msgs.append(
                f"neutrality violated: |sum q| = {total:.3e} exceeds "
                f"{params.neutrality_rtol:.1e} * sum|q| = {params.neutrality_rtol * scale:.3e}")

    if params.i_d < 1:
        msgs.append("i_d must be >= 1 when the far-zone engine is used")
    if params.er_range_boxes < 1:
        msgs.append("er_range_boxes must be >= 1")
    if params.series_tol <= 0:
        msgs.append("series_tol must be positive")

    active_far = [params.far_grid[a] for a in range(3) if box.D[a] > 0.0]
    if active_far and params.far_order + 1 > min(active_far):
        msgs.append(
            f"far_order + 1 = {params.far_order + 1} exceeds the smallest active "
            f"far grid dimension {min(active_far)}")

    try:
        near_dims = params.resolve_near_grid(max(len(src), len(obs)), box)
    except ValueError as e:
        msgs.append(str(e))
        near_dims = None
    if near_dims is not None:
        active_near = [near_dims[a] for a in range(3) if box.D[a] > 0.0]
        if active_near and params.near_order + 1 > min(active_near):
            msgs.append(
                f"near_order + 1 = {params.near_order + 1} exceeds the smallest "
                f"active near grid dimension {min(active_near)}")
        # wrapped-image corrections assume one extra image per axis at most;
        # the single-wrap condition is per periodic axis
        for a in config.periodic_axes:
            if near_dims[a] <= 1 or config.L[a] <= 0.0:
                continue
            d_er_a = params.er_range_boxes * box.D[a] / (near_dims[a] - 1)
            if 2.0 * d_er_a >= config.L[a]:
                msgs.append(
                    f"error-correction range {d_er_a:.3g} on axis {a} is too "
                    f"large relative to the period L[{a}] = {config.L[a]:.3g} "
                    f"(need 2*D_ER < L)")

    return ValidationReport(tuple(msgs))
