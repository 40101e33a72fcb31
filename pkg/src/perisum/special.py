"""Complex-argument special functions with explicit branch control.

Everything here is implemented in-repo (no external math library) because the
series kernels need H0^(2) and K0 at complex arguments with a disciplined
Im <= 0 square-root branch, and those are not universally available.

Evaluation scheme for K0 on Re(w) >= 0 (three regimes, all verified to
<= ~1e-13 relative against an arbitrary-precision oracle):

  |w| <= 2   ascending power series
  2 < |w| <= 16   generalized Gauss-Laguerre quadrature on the exact
                  representation K0(w) = e^-w Int_0^inf e^-v v^-1/2 (v+2w)^-1/2 dv,
                  valid (by contour rotation) up to the imaginary axis
  |w| > 16   asymptotic expansion sqrt(pi/(2w)) e^-w (1 - 1/(8w) + ...)

H0^(2)(z) uses the J0/Y0 power series for |z| <= 4 and, in the closed lower
half-plane where every solver argument lives, the connection
H0^(2)(z) = (2j/pi) K0(jz) beyond.  For Im(z) > 0 and |z| > 8 the raw
asymptotic expansion is used; accuracy there bottoms out near 1e-8 around
|z| ~ 8-10 (outside the solver's domain, documented rather than fixed).
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import DomainError

__all__ = ["sqrt_nonpos_imag", "hankel2_0", "bessel_k0"]

_EULER_GAMMA = 0.5772156649015328606065121
_K0_SERIES_RADIUS = 2.0
_K0_ASYM_RADIUS = 16.0
_H0_SERIES_RADIUS = 4.0
_H0_UPPER_SERIES_RADIUS = 8.0
_GL_NODES = 64


def sqrt_nonpos_imag(z):
    """Square root w with w**2 = z and Im(w) <= 0 (Re(w) >= 0 when Im(w) = 0).

    Accepts scalars or arrays.
    """
    z = np.asarray(z, dtype=complex)
    w = np.sqrt(z)
    w = np.where(w.imag > 0.0, -w, w)
    if w.ndim == 0:
        return complex(w)
    return w


@lru_cache(maxsize=4)
def _gauss_laguerre_half(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for weight v^(-1/2) e^(-v) on [0, inf) via Golub-Welsch."""
    alpha = -0.5
    k = np.arange(n, dtype=float)
    diag = 2.0 * k + alpha + 1.0
    off = np.sqrt(k[1:] * (k[1:] + alpha))
    jac = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    x, vec = np.linalg.eigh(jac)
    w = np.sqrt(np.pi) * vec[0, :] ** 2
    return x, w


def _k0_series(w: np.ndarray) -> np.ndarray:
    # K0 = -(ln(w/2)+gamma) I0(w) + sum_{k>=1} H_k (w^2/4)^k / (k!)^2
    q = w * w * 0.25
    term = np.ones_like(w)
    i0 = np.ones_like(w)
    s = np.zeros_like(w)
    h = 0.0
    for k in range(1, 20):
        term = term * q / (k * k)
        i0 = i0 + term
        h += 1.0 / k
        s = s + h * term
    return -(np.log(w * 0.5) + _EULER_GAMMA) * i0 + s


def _k0_quad(w: np.ndarray) -> np.ndarray:
    v, wt = _gauss_laguerre_half(_GL_NODES)
    # sum_i wt_i / sqrt(v_i + 2w); argument never crosses the negative real
    # axis for Re(w) >= 0, so the principal square root is safe.
    acc = np.zeros_like(w)
    for vi, wi in zip(v, wt):
        acc = acc + wi / np.sqrt(vi + 2.0 * w)
    return np.exp(-w) * acc


def _k0_asym(w: np.ndarray) -> np.ndarray:
    term = np.ones_like(w)
    s = np.ones_like(w)
    for k in range(30):
        term = term * (-((2 * k + 1) ** 2) / (8.0 * (k + 1))) / w
        s = s + term
        if np.max(np.abs(term)) < 1e-18:
            break
    out = np.sqrt(np.pi / (2.0 * w)) * s
    # e^-w applied last; underflows cleanly to 0 for huge Re(w)
    with np.errstate(under="ignore"):
        return np.exp(-w) * out


def _k0_halfplane(w: np.ndarray) -> np.ndarray:
    """K0 on Re(w) >= 0, w != 0, vectorized with regime dispatch.

    Preserves dtype: real positive input stays on the (faster) real path.
    """
    w = np.asarray(w)
    if not np.issubdtype(w.dtype, np.floating):
        w = np.asarray(w, dtype=complex)
    out = np.empty_like(w)
    mag = np.abs(w)
    small = mag <= _K0_SERIES_RADIUS
    large = mag > _K0_ASYM_RADIUS
    mid = ~(small | large)
    if small.any():
        out[small] = _k0_series(w[small])
    if mid.any():
        out[mid] = _k0_quad(w[mid])
    if large.any():
        out[large] = _k0_asym(w[large])
    return out


def bessel_k0(z):
    """Modified Bessel function K0(z) for Re(z) > 0; scalars or arrays."""
    arr = np.asarray(z, dtype=complex)
    if arr.size and not np.all(np.isfinite(arr)):
        raise DomainError("bessel_k0: non-finite argument")
    if arr.size and np.any(arr.real <= 0.0):
        raise DomainError("bessel_k0 requires Re(z) > 0")
    out = _k0_halfplane(arr)
    if out.ndim == 0:
        return complex(out)
    return out


def _h0_series(z: np.ndarray) -> np.ndarray:
    # H0^(2) = J0 - j Y0 from the ascending series; fine for |z| <= ~8 with
    # accuracy degrading toward the negative imaginary axis (callers restrict
    # the radius accordingly).
    q = -(z * z) * 0.25
    term = np.ones_like(z)
    j0 = np.ones_like(z)
    s = np.zeros_like(z)
    h = 0.0
    for k in range(1, 40):
        term = term * q / (k * k)
        j0 = j0 + term
        h += 1.0 / k
        s = s - h * term
    y0 = (2.0 / np.pi) * ((np.log(z * 0.5) + _EULER_GAMMA) * j0 + s)
    return j0 - 1j * y0


def _h0_asym(z: np.ndarray) -> np.ndarray:
    # DLMF 10.17.6 with nu = 0; truncated at the (fixed) smallest-term order.
    term = np.ones_like(z)
    s = np.ones_like(z)
    prev = np.full(z.shape, np.inf)
    alive = np.ones(z.shape, dtype=bool)
    for k in range(40):
        term = term * (1j * (2 * k + 1) ** 2 / (8.0 * (k + 1))) / z
        mag = np.abs(term)
        alive &= mag < prev
        if not alive.any():
            break
        s = s + np.where(alive, term, 0.0)
        prev = mag
    with np.errstate(under="ignore"):
        return np.sqrt(2.0 / (np.pi * z)) * np.exp(-1j * (z - 0.25 * np.pi)) * s


def hankel2_0(z):
    """Hankel function of the second kind, order zero; scalars or arrays.

    Full accuracy (~1e-13 relative) holds on Im(z) <= 0, the branch-disciplined
    domain every series kernel uses.
    """
    arr = np.asarray(z, dtype=complex)
    if arr.size and not np.all(np.isfinite(arr)):
        raise DomainError("hankel2_0: non-finite argument")
    if arr.size and np.any(arr == 0.0):
        raise DomainError("hankel2_0 has a logarithmic singularity at z = 0")
    out = np.empty_like(arr)
    mag = np.abs(arr)
    lower = arr.imag <= 0.0
    small = mag <= _H0_SERIES_RADIUS
    ser_up = (~lower) & (mag <= _H0_UPPER_SERIES_RADIUS)
    series = small | ser_up
    conn = lower & ~series
    asym = ~(series | conn)
    if series.any():
        out[series] = _h0_series(arr[series])
    if conn.any():
        out[conn] = (2j / np.pi) * _k0_halfplane(1j * arr[conn])
    if asym.any():
        out[asym] = _h0_asym(arr[asym])
    if out.ndim == 0:
        return complex(out)
    return out
