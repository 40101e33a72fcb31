import numpy as np
import pytest

from perisum.model import (ObserverPointSet, Periodicity, PeriodicityConfig,
                           Regime, SourcePointSet, TargetBox)


def make_config(dim=1, L=(1.0, 1.0, 1.0), k0=0j, kshift=(0j, 0j, 0j), regime=None):
    if regime is None:
        if k0 == 0 and all(k == 0 for k in kshift):
            regime = Regime.NPSP
        elif k0 == 0:
            regime = Regime.STATIC_SHIFTED
        else:
            regime = Regime.DYNAMIC
    return PeriodicityConfig(dim=Periodicity(dim), L=L, k0=k0, kshift=kshift,
                             regime=regime)


def neutral_cloud(rng, n, box_d, lo_frac=0.0, hi_frac=1.0):
    d = np.asarray(box_d, dtype=float)
    pos = rng.uniform(lo_frac, hi_frac, (n, 3)) * d
    q = rng.uniform(-1.0, 1.0, n)
    q -= q.mean()
    return SourcePointSet(pos, q)


def separated_observers(rng, m, src_pos, box_d, min_dist=0.0, min_transverse=0.0,
                        margin=0.02):
    """Observers inside the box, kept away from every source."""
    d = np.asarray(box_d, dtype=float)
    out = []
    while len(out) < m:
        cand = rng.uniform(margin, 1.0 - margin, (6 * m, 3)) * d
        diff = cand[:, None, :] - src_pos[None, :, :]
        r = np.sqrt(np.einsum("mnk,mnk->mn", diff, diff))
        ok = np.ones(cand.shape[0], dtype=bool)
        if min_dist > 0:
            ok &= r.min(axis=1) > min_dist
        if min_transverse > 0:
            t = np.hypot(diff[:, :, 1], diff[:, :, 2])
            ok &= t.min(axis=1) > min_transverse
        out.extend(cand[ok][: m - len(out)])
    return ObserverPointSet(np.asarray(out))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


__all__ = ["make_config", "neutral_cloud", "separated_observers",
           "ObserverPointSet", "SourcePointSet", "TargetBox", "Regime",
           "Periodicity", "PeriodicityConfig"]
