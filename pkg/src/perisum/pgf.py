"""Periodic Green's function evaluators.

Four kernels, all phase-shift aware and branch-disciplined (Im of every
Floquet root <= 0):

  g0               free-space kernel exp(-j k0 |r|) / (4 pi |r|)
  pgf_image_sum    truncated image sum over |i_a| <= half_width (the near part)
  pgf_spectral     Floquet series (dynamic / static-shifted regimes)
  pgf_lattice      log + K0 series for the neutral no-phase static regime
  pgf_far          total minus the near image sum

Series are swept in symmetric outward layers (m = 0, +-1, +-2, ...; expanding
square shells over (m, n)) and stopped once `consecutive_small` layers in a
row contribute less than `tol` relative to the running sum.  `*_many` variants
evaluate arrays of points with per-point adaptive termination; the scalar
operations wrap them.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NotConvergedError, SeparationError, WoodAnomalyError
from .model import PeriodicityConfig, Regime
from .special import _k0_halfplane, hankel2_0, sqrt_nonpos_imag

__all__ = [
    "TruncationPolicy", "PgfSample", "FloquetWavenumbers", "PgfEvaluator",
    "g0", "g0_many", "pgf_image_sum", "pgf_image_sum_many",
    "pgf_spectral", "pgf_spectral_many", "pgf_spectral_trace",
    "pgf_lattice", "pgf_lattice_many", "pgf_lattice_trace",
    "pgf_far", "pgf_far_many",
]

_FOUR_PI = 4.0 * np.pi
_MAX_LAYERS = 200_000


@dataclass(frozen=True)
class TruncationPolicy:
    """Adaptive truncation: stop after `consecutive_small` layers each
    contributing less than `tol` relative to the accumulated sum."""
    tol: float = 1e-10
    max_terms: int = 1_000_000
    consecutive_small: int = 3

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")

    @property
    def inner_cutoff(self) -> float:
        """K0-argument cutoff for exponentially decaying inner sums."""
        return float(np.log(1.0 / self.tol) + 8.0)


@dataclass(frozen=True)
class PgfSample:
    """Series result; a non-converged value is still returned, but flagged."""
    value: complex
    terms_used: int
    converged: bool


@dataclass(frozen=True)
class FloquetWavenumbers:
    """Per-index wavenumbers k_xm, k_yn and the transverse roots, lazily
    computed with the Im <= 0 branch."""
    cfg: PeriodicityConfig

    def kxm(self, m):
        return self.cfg.kshift[0] + 2.0 * np.pi * np.asarray(m) / self.cfg.L[0]

    def kyn(self, n):
        return self.cfg.kshift[1] + 2.0 * np.pi * np.asarray(n) / self.cfg.L[1]

    def krho(self, m):
        return sqrt_nonpos_imag(self.cfg.k0 ** 2 - self.kxm(m) ** 2)

    def kz(self, m, n):
        return sqrt_nonpos_imag(self.cfg.k0 ** 2 - self.kxm(m) ** 2 - self.kyn(n) ** 2)


def _anomaly_threshold(cfg: PeriodicityConfig) -> float:
    lmax = max(cfg.L[a] for a in cfg.periodic_axes)
    return 1e-8 * 2.0 * np.pi / lmax


def _sep_tol(cfg: PeriodicityConfig) -> float:
    return 1e-13 * max(max(cfg.L[a] for a in cfg.periodic_axes), 1.0)


# ---------------------------------------------------------------------------
# free-space kernel and image sums
# ---------------------------------------------------------------------------

def g0_many(points: np.ndarray, k0: complex) -> np.ndarray:
    r = np.sqrt(np.einsum("ij,ij->i", points, points))
    if np.any(r == 0.0):
        raise DomainError("g0 is singular at r = 0")
    with np.errstate(under="ignore"):
        return np.exp(-1j * k0 * r) / (_FOUR_PI * r)


def g0(r, k0: complex) -> complex:
    """Free-space scalar kernel exp(-j k0 |r|) / (4 pi |r|)."""
    return complex(g0_many(np.asarray(r, dtype=float).reshape(1, 3), k0)[0])


def _image_offsets(cfg: PeriodicityConfig, half_width) -> tuple[np.ndarray, np.ndarray]:
    if np.isscalar(half_width):
        hw = [int(half_width) if a in cfg.periodic_axes else 0 for a in range(3)]
    else:
        hw = [int(half_width[a]) if a in cfg.periodic_axes else 0 for a in range(3)]
    ranges = [range(-h, h + 1) for h in hw]
    idx = np.array(list(itertools.product(*ranges)), dtype=float)
    offsets = idx * np.asarray(cfg.L)
    phases = np.exp(-1j * (idx @ (np.asarray(cfg.kshift) * np.asarray(cfg.L))))
    return offsets, phases


def pgf_image_sum_many(points: np.ndarray, cfg: PeriodicityConfig, half_width,
                       *, drop_singular: bool = False,
                       singular_tol: float | None = None) -> np.ndarray:
    """Phase-weighted image sum of g0 over |i_a| <= half_width per periodic axis.

    With drop_singular=True a coincident image term contributes zero instead of
    raising; kernel tabulation uses this for the excluded self entry.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    tol = _sep_tol(cfg) if singular_tol is None else singular_tol
    offsets, phases = _image_offsets(cfg, half_width)
    out = np.zeros(points.shape[0], dtype=complex)
    with np.errstate(under="ignore", divide="ignore", invalid="ignore"):
        for off, ph in zip(offsets, phases):
            d = points - off
            r = np.sqrt(np.einsum("ij,ij->i", d, d))
            sing = r <= tol
            if sing.any():
                if not drop_singular:
                    raise DomainError(
                        f"image point coincides with evaluation point "
                        f"(image offset {off.tolist()})")
                r = np.where(sing, 1.0, r)
                term = ph * np.exp(-1j * cfg.k0 * r) / (_FOUR_PI * r)
                term = np.where(sing, 0.0, term)
            else:
                term = ph * np.exp(-1j * cfg.k0 * r) / (_FOUR_PI * r)
            out += term
    return out


def pgf_image_sum(r, cfg: PeriodicityConfig, half_width) -> complex:
    pts = np.asarray(r, dtype=float).reshape(1, 3)
    return complex(pgf_image_sum_many(pts, cfg, half_width)[0])


# ---------------------------------------------------------------------------
# adaptive layer driver
# ---------------------------------------------------------------------------

def _drive(points: np.ndarray, policy: TruncationPolicy, lead_fn, layer_fn,
           first_layer: int, record: list | None = None):
    n = points.shape[0]
    total = np.zeros(n, dtype=complex)
    terms = np.zeros(n, dtype=np.int64)
    small = np.zeros(n, dtype=np.int32)
    converged = np.zeros(n, dtype=bool)
    if lead_fn is not None:
        total += lead_fn(points)
        terms += 1
        if record is not None:
            record.append((int(terms[0]), complex(total[0])))
    active = np.arange(n)
    layer = first_layer
    while active.size and layer < _MAX_LAYERS:
        vals, cnt = layer_fn(points[active], layer)
        total[active] += vals
        terms[active] += cnt
        if record is not None:
            record.append((int(terms[0]), complex(total[0])))
        rel_ok = np.abs(vals) <= policy.tol * np.maximum(np.abs(total[active]), 1e-300)
        small[active] = np.where(rel_ok, small[active] + 1, 0)
        done = small[active] >= policy.consecutive_small
        converged[active[done]] = True
        keep = ~done
        over = terms[active] >= policy.max_terms
        keep &= ~over
        active = active[keep]
        layer += 1
    return total, terms, converged


# ---------------------------------------------------------------------------
# spectral series (dynamic / static-shifted)
# ---------------------------------------------------------------------------

def _shell_indices(s: int) -> tuple[np.ndarray, np.ndarray]:
    if s == 0:
        return np.zeros(1, dtype=int), np.zeros(1, dtype=int)
    ms, ns = [], []
    for m in range(-s, s + 1):
        ms += (m, m)
        ns += (s, -s)
    for nn in range(-s + 1, s):
        ms += (s, -s)
        ns += (nn, nn)
    return np.asarray(ms), np.asarray(ns)


def pgf_spectral_many(points: np.ndarray, cfg: PeriodicityConfig,
                      policy: TruncationPolicy | None = None,
                      record: list | None = None):
    """Floquet series at an array of points -> (values, terms, converged)."""
    if cfg.regime is Regime.NPSP:
        raise DomainError("spectral series diverges in the no-phase static regime")
    policy = policy or TruncationPolicy()
    points = np.atleast_2d(np.asarray(points, dtype=float))
    thresh = _anomaly_threshold(cfg)
    fl = FloquetWavenumbers(cfg)
    if cfg.dim.value == 1:
        rho = np.hypot(points[:, 1], points[:, 2])
        if np.any(rho <= _sep_tol(cfg)):
            raise SeparationError(
                "1D spectral series requires transverse separation sqrt(y^2+z^2) > 0")

        def layer(pts, s):
            ms = (0,) if s == 0 else (s, -s)
            rr = np.hypot(pts[:, 1], pts[:, 2])
            acc = np.zeros(pts.shape[0], dtype=complex)
            for m in ms:
                kxm = complex(fl.kxm(m))
                krm = complex(fl.krho(m))
                assert krm.imag <= 0.0
                if abs(krm) < thresh:
                    raise WoodAnomalyError(f"|k_rho(m={m})| = {abs(krm):.3e} below threshold")
                acc += np.exp(-1j * kxm * pts[:, 0]) * hankel2_0(krm * rr) \
                    / (4j * cfg.L[0])
            return acc, len(ms)

        return _drive(points, policy, None, layer, 0, record)

    lx, ly, lz = cfg.L
    kz0 = cfg.kshift[2]
    three_d = cfg.dim.value == 3

    def layer(pts, s):
        ms, ns = _shell_indices(s)
        kx = fl.kxm(ms)
        ky = fl.kyn(ns)
        kz = sqrt_nonpos_imag(cfg.k0 ** 2 - kx ** 2 - ky ** 2)
        assert np.all(kz.imag <= 0.0)
        bad = np.abs(kz) < thresh
        if bad.any():
            i = int(np.argmax(bad))
            raise WoodAnomalyError(
                f"|k_z(m={ms[i]}, n={ns[i]})| = {abs(kz[i]):.3e} below threshold")
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        az = np.abs(z)
        if three_d:
            ea = np.exp(-1j * (kz - kz0) * lz)
            eb = np.exp(-1j * (kz + kz0) * lz)
            grow = np.maximum(np.abs(ea), np.abs(eb))
            if np.any(grow > 1.0 + 1e-12):
                raise NotConvergedError(
                    "z image stack diverges: |exp(-j(k_z -+ k_z0) L_z)| > 1")
            res = np.minimum(np.abs(1.0 - ea), np.abs(1.0 - eb))
            if np.any(res < 1e-8):
                i = int(np.argmin(res))
                raise WoodAnomalyError(
                    f"resonant z stack at (m={ms[i]}, n={ns[i]}): |1 - e| = {res[i]:.3e}")
            ca = ea / (1.0 - ea)
            cb = eb / (1.0 - eb)
        acc = np.zeros(pts.shape[0], dtype=complex)
        with np.errstate(under="ignore"):
            for i0 in range(0, kx.size, 64):
                sl = slice(i0, min(i0 + 64, kx.size))
                kxc = kx[sl][:, None]
                kyc = ky[sl][:, None]
                kzc = kz[sl][:, None]
                phase = np.exp(-1j * (kxc * x + kyc * y))
                if three_d:
                    fac = (np.exp(-1j * kzc * az)
                           + ca[sl][:, None] * np.exp(-1j * kzc * z)
                           + cb[sl][:, None] * np.exp(1j * kzc * z))
                else:
                    fac = np.exp(-1j * kzc * az)
                acc += (phase * fac / (2j * kzc * lx * ly)).sum(axis=0)
        return acc, kx.size

    return _drive(points, policy, None, layer, 0, record)


def pgf_spectral(r, cfg: PeriodicityConfig,
                 policy: TruncationPolicy | None = None) -> PgfSample:
    """Spectral (Floquet) series of the periodic kernel at one point."""
    vals, terms, conv = pgf_spectral_many(
        np.asarray(r, dtype=float).reshape(1, 3), cfg, policy)
    return PgfSample(complex(vals[0]), int(terms[0]), bool(conv[0]))


def pgf_spectral_trace(r, cfg: PeriodicityConfig, policy: TruncationPolicy):
    """Per-layer partial sums [(terms, value), ...] for convergence studies."""
    rec: list = []
    pgf_spectral_many(np.asarray(r, dtype=float).reshape(1, 3), cfg, policy, record=rec)
    return rec


# ---------------------------------------------------------------------------
# lattice series (neutral no-phase static regime)
# ---------------------------------------------------------------------------

def _log_trig_term(y: np.ndarray, a: np.ndarray, ly: float) -> np.ndarray:
    """ln(1 - 2 e^{-2 pi a / ly} cos(2 pi y / ly) + e^{-4 pi a / ly}), a = |z|-like."""
    with np.errstate(under="ignore"):
        e = np.exp(-2.0 * np.pi * a / ly)
    t = 1.0 - 2.0 * e * np.cos(2.0 * np.pi * y / ly) + e * e
    if np.any(t <= 0.0):
        raise DomainError("lattice series log argument vanished: transverse "
                          "position lies on the source lattice line")
    return np.log(t)


def pgf_lattice_many(points: np.ndarray, cfg: PeriodicityConfig,
                     policy: TruncationPolicy | None = None,
                     record: list | None = None):
    """Lattice (no-phase static) series at an array of points."""
    if cfg.regime is not Regime.NPSP:
        raise DomainError("lattice series applies to the no-phase static regime only")
    policy = policy or TruncationPolicy()
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lx = cfg.L[0]
    cutoff = policy.inner_cutoff
    sep = _sep_tol(cfg)

    if cfg.dim.value == 1:
        def lead(pts):
            rho = np.hypot(pts[:, 1], pts[:, 2])
            if np.any(rho <= sep):
                raise SeparationError("1D lattice series requires sqrt(y^2+z^2) > 0")
            return -np.log(rho) / (2.0 * np.pi * lx)

        def layer(pts, m):
            rho = np.hypot(pts[:, 1], pts[:, 2])
            arg = 2.0 * m * np.pi * rho / lx
            vals = np.zeros(pts.shape[0])
            mask = arg <= cutoff
            if mask.any():
                vals[mask] = _k0_halfplane(arg[mask])
            vals *= np.cos(2.0 * m * np.pi * pts[:, 0] / lx) / (np.pi * lx)
            return vals.astype(complex), 1

        return _drive(points, policy, lead, layer, 1, record)

    ly = cfg.L[1]
    lz = cfg.L[2]

    if cfg.dim.value == 2:
        def lead(pts):
            y, z = pts[:, 1], pts[:, 2]
            az = np.abs(z)
            return (-az / (2.0 * lx * ly)
                    - _log_trig_term(y, az, ly) / (4.0 * np.pi * lx)).astype(complex)

        def layer(pts, m):
            y, z = pts[:, 1], pts[:, 2]
            smax = cutoff * lx / (2.0 * np.pi * m)
            n_lo = int(np.floor((-smax - y.max()) / ly))
            n_hi = int(np.ceil((smax - y.min()) / ly))
            acc = np.zeros(pts.shape[0])
            count = np.zeros(pts.shape[0], dtype=np.int64)
            for n in range(n_lo, n_hi + 1):
                s2 = (n * ly + y) ** 2 + z * z
                if np.any(s2 <= sep * sep):
                    raise DomainError("lattice K0 argument vanished")
                arg = 2.0 * m * np.pi * np.sqrt(s2) / lx
                mask = arg <= cutoff
                if mask.any():
                    acc[mask] += _k0_halfplane(arg[mask])
                    count[mask] += 1
            acc *= np.cos(2.0 * m * np.pi * pts[:, 0] / lx) / (np.pi * lx)
            return acc.astype(complex), np.maximum(count, 1)

        return _drive(points, policy, lead, layer, 1, record)

    def lead(pts):
        y, z = pts[:, 1], pts[:, 2]
        az = np.abs(z)
        out = (z * z - az * lz) / (2.0 * lx * ly * lz)
        reach = cutoff * ly / (2.0 * np.pi)
        k_lo = int(np.floor((-reach - z.max()) / lz))
        k_hi = int(np.ceil((reach - z.min()) / lz))
        for k in range(k_lo, k_hi + 1):
            a = np.abs(k * lz + z)
            out = out - _log_trig_term(y, a, ly) / (4.0 * np.pi * lx)
        return out.astype(complex)

    def layer(pts, m):
        y, z = pts[:, 1], pts[:, 2]
        smax = cutoff * lx / (2.0 * np.pi * m)
        n_lo = int(np.floor((-smax - y.max()) / ly))
        n_hi = int(np.ceil((smax - y.min()) / ly))
        k_lo = int(np.floor((-smax - z.max()) / lz))
        k_hi = int(np.ceil((smax - z.min()) / lz))
        acc = np.zeros(pts.shape[0])
        count = np.zeros(pts.shape[0], dtype=np.int64)
        for n in range(n_lo, n_hi + 1):
            u2 = (n * ly + y) ** 2
            for k in range(k_lo, k_hi + 1):
                s2 = u2 + (k * lz + z) ** 2
                if np.any(s2 <= sep * sep):
                    raise DomainError("lattice K0 argument vanished")
                arg = 2.0 * m * np.pi * np.sqrt(s2) / lx
                mask = arg <= cutoff
                if mask.any():
                    acc[mask] += _k0_halfplane(arg[mask])
                    count[mask] += 1
        acc *= np.cos(2.0 * m * np.pi * pts[:, 0] / lx) / (np.pi * lx)
        return acc.astype(complex), np.maximum(count, 1)

    return _drive(points, policy, lead, layer, 1, record)


def pgf_lattice(r, cfg: PeriodicityConfig,
                policy: TruncationPolicy | None = None) -> PgfSample:
    """Lattice (no-phase static) kernel at one point.

    The value is the canonical representative of a kernel defined only up to
    an additive constant; neutral-source potentials are gauge-independent.
    """
    vals, terms, conv = pgf_lattice_many(
        np.asarray(r, dtype=float).reshape(1, 3), cfg, policy)
    return PgfSample(complex(vals[0]), int(terms[0]), bool(conv[0]))


def pgf_lattice_trace(r, cfg: PeriodicityConfig, policy: TruncationPolicy):
    rec: list = []
    pgf_lattice_many(np.asarray(r, dtype=float).reshape(1, 3), cfg, policy, record=rec)
    return rec


# ---------------------------------------------------------------------------
# total and far kernels
# ---------------------------------------------------------------------------

def pgf_total_many(points: np.ndarray, cfg: PeriodicityConfig,
                   policy: TruncationPolicy | None = None):
    if cfg.regime is Regime.NPSP:
        return pgf_lattice_many(points, cfg, policy)
    return pgf_spectral_many(points, cfg, policy)


def pgf_far_many(points: np.ndarray, cfg: PeriodicityConfig, i_d: int,
                 policy: TruncationPolicy | None = None):
    """Far kernel (total minus |i| <= i_d images) at an array of points."""
    vals, terms, conv = pgf_total_many(points, cfg, policy)
    near = pgf_image_sum_many(points, cfg, i_d)
    return vals - near, terms, conv


def pgf_far(r, cfg: PeriodicityConfig, i_d: int,
            policy: TruncationPolicy | None = None) -> PgfSample:
    vals, terms, conv = pgf_far_many(
        np.asarray(r, dtype=float).reshape(1, 3), cfg, i_d, policy)
    return PgfSample(complex(vals[0]), int(terms[0]), bool(conv[0]))


@dataclass(frozen=True)
class PgfEvaluator:
    """Regime-dispatched kernel evaluator bound to one config and policy."""
    cfg: PeriodicityConfig
    policy: TruncationPolicy = TruncationPolicy()

    def g0(self, r) -> complex:
        return g0(r, self.cfg.k0)

    def total(self, r) -> PgfSample:
        if self.cfg.regime is Regime.NPSP:
            return pgf_lattice(r, self.cfg, self.policy)
        return pgf_spectral(r, self.cfg, self.policy)

    def total_many(self, points):
        return pgf_total_many(points, self.cfg, self.policy)

    def near_many(self, points, i_d: int, **kw) -> np.ndarray:
        return pgf_image_sum_many(points, self.cfg, i_d, **kw)

    def far(self, r, i_d: int) -> PgfSample:
        return pgf_far(r, self.cfg, i_d, self.policy)

    def far_many(self, points, i_d: int):
        return pgf_far_many(points, self.cfg, i_d, self.policy)
