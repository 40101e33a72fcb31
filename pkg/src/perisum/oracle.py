"""Brute-force reference evaluation of the periodic superposition sum.

Ground truth for every accuracy test: each source-observer pair gets its own
converged series evaluation, O(N*M) cost.  The oracle refuses (reports
failures) rather than silently degrading when a pair violates the separation
the series needs or fails to converge.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ObserverPointSet, PeriodicityConfig, Regime, SourcePointSet
from .pgf import TruncationPolicy, pgf_image_sum_many, pgf_total_many

__all__ = ["OracleReport", "eval_direct", "eval_direct_farzone", "eval_free_space"]

_OBS_CHUNK = 64


@dataclass(frozen=True)
class OracleReport:
    values: np.ndarray
    worst_terms: int
    failures: tuple          # tuples (observer index, source index, reason)

    def ok(self) -> bool:
        return not self.failures


def _transverse_floor(cfg: PeriodicityConfig) -> float:
    return 1e-12 * max(cfg.L[a] for a in cfg.periodic_axes)


def _pair_failures(cfg, diffs, m_index, conv=None):
    """Separation / convergence failures for one observer chunk."""
    fails = []
    if cfg.dim.value == 1:
        t = np.hypot(diffs[:, :, 1], diffs[:, :, 2])
        bad = t <= _transverse_floor(cfg)
    elif cfg.regime is Regime.NPSP:
        # lattice series needs (y, z) off the transverse source lattice
        ly, lz = cfg.L[1], cfg.L[2]
        ry = np.abs(np.remainder(diffs[:, :, 1] + ly / 2, ly) - ly / 2)
        if cfg.dim.value == 2:
            rz = np.abs(diffs[:, :, 2])
        else:
            rz = np.abs(np.remainder(diffs[:, :, 2] + lz / 2, lz) - lz / 2)
        bad = np.hypot(ry, rz) <= _transverse_floor(cfg)
    else:
        bad = np.zeros(diffs.shape[:2], dtype=bool)
    for i, j in zip(*np.nonzero(bad)):
        fails.append((int(m_index[i]), int(j), "separation"))
    if conv is not None:
        nc = ~conv & ~bad
        for i, j in zip(*np.nonzero(nc)):
            fails.append((int(m_index[i]), int(j), "not converged"))
    return fails, bad


def _direct_sum(cfg, src, obs, policy, kernel_many):
    n = len(src)
    m = len(obs)
    values = np.zeros(m, dtype=complex)
    worst = 0
    failures: list = []
    q = src.amplitudes
    for i0 in range(0, m, _OBS_CHUNK):
        sl = slice(i0, min(i0 + _OBS_CHUNK, m))
        mc = sl.stop - sl.start
        diffs = obs.positions[sl, None, :] - src.positions[None, :, :]
        fails, bad = _pair_failures(cfg, diffs, np.arange(sl.start, sl.stop))
        if fails:
            failures.extend(fails)
            continue
        flat = diffs.reshape(mc * n, 3)
        vals, terms, conv = kernel_many(flat, cfg, policy)
        conv = conv.reshape(mc, n)
        fails, _ = _pair_failures(cfg, diffs, np.arange(sl.start, sl.stop), conv)
        failures.extend(fails)
        worst = max(worst, int(terms.max()) if terms.size else 0)
        values[sl] = vals.reshape(mc, n) @ q
    return values, worst, failures


def eval_direct(cfg: PeriodicityConfig, src: SourcePointSet, obs: ObserverPointSet,
                policy: TruncationPolicy | None = None) -> OracleReport:
    """u(r_m) = sum_n G_p(r_m - r_n) q_n with per-pair converged series."""
    policy = policy or TruncationPolicy()
    values, worst, failures = _direct_sum(cfg, src, obs, policy, pgf_total_many)
    return OracleReport(values=values, worst_terms=worst, failures=tuple(failures))


def eval_direct_farzone(cfg: PeriodicityConfig, src: SourcePointSet,
                        obs: ObserverPointSet, i_d: int,
                        policy: TruncationPolicy | None = None) -> OracleReport:
    """Same sum with the far kernel (total minus |i| <= i_d images)."""
    policy = policy or TruncationPolicy()

    def far_many(points, cfg_, policy_):
        vals, terms, conv = pgf_total_many(points, cfg_, policy_)
        return vals - pgf_image_sum_many(points, cfg_, i_d), terms, conv

    values, worst, failures = _direct_sum(cfg, src, obs, policy, far_many)
    return OracleReport(values=values, worst_terms=worst, failures=tuple(failures))


def eval_free_space(k0: complex, src: SourcePointSet, obs: ObserverPointSet
                    ) -> np.ndarray:
    """Plain free-space superposition (no periodicity); the non-periodic
    baseline for edge-effect comparisons."""
    m = len(obs)
    out = np.zeros(m, dtype=complex)
    q = src.amplitudes
    for i0 in range(0, m, _OBS_CHUNK):
        sl = slice(i0, min(i0 + _OBS_CHUNK, m))
        d = obs.positions[sl, None, :] - src.positions[None, :, :]
        r = np.sqrt(np.einsum("mnk,mnk->mn", d, d))
        if np.any(r == 0.0):
            raise ZeroDivisionError("observer coincides with a source")
        out[sl] = (np.exp(-1j * k0 * r) / (4.0 * np.pi * r)) @ q
    return out
