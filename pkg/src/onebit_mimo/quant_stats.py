"""Second-order statistics of 1-bit quantized Gaussian vectors.

Covers the Bussgang gain, the arcsin law, the received pilot covariance and
the Gaussian helpers (``Q`` function, bivariate orthant probabilities) used by
the information bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, ndtr

from .waveform import FilterBank

__all__ = [
    "BussgangStats",
    "qfunc",
    "bvn_cdf",
    "orthant_prob",
    "orthant_prob_batch",
    "bussgang_gain",
    "arcsin_covariance",
    "pilot_received_covariance",
    "bussgang_stats",
]

_CLAMP_TOL = 1e-12

# 10-point Gauss-Legendre half rule on [-1, 0] (the mirrored nodes are added in the loop)
_GL_X = np.array([
    -0.9931285991850949, -0.9639719272779138, -0.9122344282513259,
    -0.8391169718222188, -0.7463319064601508, -0.6360536807265150,
    -0.5108670019508271, -0.3737060887154196, -0.2277858511416451,
    -0.07652652113349733,
])
_GL_W = np.array([
    0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
    0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
    0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
    0.1527533871307259,
])
_TWOPI = 2.0 * np.pi


def qfunc(x):
    """Gaussian tail probability ``Q(x) = P(N(0, 1) > x)``."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def bvn_cdf(h, k, r):
    """Standard bivariate normal CDF ``P(X < h, Y < k)`` with correlation ``r``.

    Vectorized Drezner-Wesolowsky / Genz scheme: Gauss-Legendre quadrature of
    the Plackett integral for ``|r| < 0.925`` and an asymptotic expansion with a
    quadrature correction otherwise.  Absolute error is below ``1e-14`` for
    finite arguments.
    """
    h, k, r = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (h, k, r)))
    shape = h.shape
    h, k, r = h.ravel(), k.ravel(), r.ravel()
    if np.any(np.abs(r) > 1):
        raise ValueError("correlation must lie in [-1, 1]")
    out = np.empty_like(h)

    # the reference algorithm works with the negated limits
    H, K = -h, -k
    low = np.abs(r) < 0.925
    if np.any(low):
        hh, kk, rr = H[low], K[low], r[low]
        hk = hh * kk
        hs = (hh * hh + kk * kk) / 2
        asr = np.arcsin(rr)[:, None]
        acc = np.zeros_like(hh)
        for sgn in (1.0, -1.0):
            sn = np.sin(asr * (sgn * _GL_X + 1) / 2)
            acc += np.sum(_GL_W * np.exp((sn * hk[:, None] - hs[:, None]) / (1 - sn * sn)), axis=1)
        out[low] = acc * asr[:, 0] / (2 * _TWOPI) + ndtr(-hh) * ndtr(-kk)

    high = ~low
    if np.any(high):
        hh, kk, rr = H[high], K[high], r[high]
        kk = np.where(rr < 0, -kk, kk)
        hk = hh * kk
        bvn = np.zeros_like(hh)
        inner = np.abs(rr) < 1
        if np.any(inner):
            hi, ki, ri, hki = hh[inner], kk[inner], rr[inner], hk[inner]
            as_ = (1 - ri) * (1 + ri)
            a = np.sqrt(as_)
            bs = (hi - ki) ** 2
            c = (4 - hki) / 8
            d = (12 - hki) / 16
            val = a * np.exp(-(bs / as_ + hki) / 2) * (
                1 - c * (bs - as_) * (1 - d * bs / 5) / 3 + c * d * as_ * as_ / 5
            )
            b = np.sqrt(bs)
            tail = np.exp(-hki / 2) * np.sqrt(_TWOPI) * ndtr(-b / a) * b * (1 - c * bs * (1 - d * bs / 5) / 3)
            val = val - np.where(hki > -160, tail, 0.0)
            a2 = (a / 2)[:, None]
            hk2, bs2, c2, d2 = hki[:, None], bs[:, None], c[:, None], d[:, None]
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                xs = (a2 * (_GL_X + 1)) ** 2
                rs = np.sqrt(1 - xs)
                t1 = a2 * _GL_W * (
                    np.exp(-bs2 / (2 * xs) - hk2 / (1 + rs)) / rs
                    - np.exp(-(bs2 / xs + hk2) / 2) * (1 + c2 * xs * (1 + d2 * xs))
                )
                xs = (as_[:, None]) * (-_GL_X + 1) ** 2 / 4
                rs = np.sqrt(1 - xs)
                t2 = a2 * _GL_W * np.exp(-(bs2 / xs + hk2) / 2) * (
                    np.exp(-hk2 * (1 - rs) / (2 * (1 + rs))) / rs - (1 + c2 * xs * (1 + d2 * xs))
                )
            val = val + np.nansum(t1, axis=1) + np.nansum(t2, axis=1)
            bvn[inner] = -val / _TWOPI
        pos = rr > 0
        bvn = np.where(pos, bvn + ndtr(-np.maximum(hh, kk)), -bvn + np.maximum(0.0, ndtr(-hh) - ndtr(-kk)))
        out[high] = bvn
    out = np.clip(out, 0.0, 1.0).reshape(shape)
    return out[()] if out.ndim == 0 else out


def orthant_prob(mean2, cov2) -> float:
    """``P(z_1 > 0, z_2 > 0)`` for ``z ~ N(mean2, cov2)``.

    Parameters
    ----------
    mean2 : array_like, shape (2,)
    cov2 : array_like, shape (2, 2)
        Symmetric PSD with positive diagonal.
    """
    m = np.asarray(mean2, dtype=float)
    c = np.asarray(cov2, dtype=float)
    if m.shape != (2,) or c.shape != (2, 2):
        raise ValueError("expected a length-2 mean and a 2x2 covariance")
    if not np.allclose(c, c.T, atol=1e-12) or c[0, 0] <= 0 or c[1, 1] <= 0:
        raise ValueError("covariance must be symmetric with positive diagonal")
    if np.linalg.eigvalsh(c)[0] < -1e-12 * max(c[0, 0], c[1, 1]):
        raise ValueError("covariance is not positive semidefinite")
    s = np.sqrt(np.diag(c))
    r = np.clip(c[0, 1] / (s[0] * s[1]), -1.0, 1.0)
    return float(orthant_prob_batch(m[0] / s[0], m[1] / s[1], r))


def orthant_prob_batch(u1, u2, r):
    """Positive-orthant probability for standardized means ``u`` and correlation ``r``.

    ``P(z_1 > 0, z_2 > 0)`` where ``z_i`` has mean ``u_i`` and unit variance; this
    equals ``bvn_cdf(u1, u2, r)`` by symmetry.
    """
    return bvn_cdf(u1, u2, r)


def _check_hermitian_diag(c_y: np.ndarray) -> np.ndarray:
    c_y = np.asarray(c_y)
    if c_y.ndim != 2 or c_y.shape[0] != c_y.shape[1]:
        raise ValueError("covariance must be a square matrix")
    d = np.real(np.diag(c_y))
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise ValueError("covariance diagonal must be positive and finite")
    return d


def bussgang_gain(c_y) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(K, A_p)`` as 1-D diagonals: ``K = diag(C_y)^{-1/2}``, ``A_p = sqrt(2/pi) K``."""
    d = _check_hermitian_diag(c_y)
    k = 1.0 / np.sqrt(d)
    return k, np.sqrt(2.0 / np.pi) * k


def _safe_arcsin(x: np.ndarray) -> np.ndarray:
    mag = np.abs(x)
    if np.any(mag > 1 + _CLAMP_TOL):
        raise ValueError(f"normalized correlation {mag.max():.17g} exceeds 1")
    return np.arcsin(np.clip(x, -1.0, 1.0))


def arcsin_covariance(c_y) -> np.ndarray:
    """Covariance of ``quantize_1bit(y)`` for ``y ~ CN(0, c_y)``.

    Normalized correlations that overshoot 1 by at most ``1e-12`` are clamped;
    larger violations raise ``ValueError``.
    """
    c_y = np.asarray(c_y)
    k, _ = bussgang_gain(c_y)
    n = k[:, None] * c_y * k[None, :]
    out = (2.0 / np.pi) * (_safe_arcsin(n.real) + 1j * _safe_arcsin(n.imag))
    return (out + out.conj().T) / 2


def pilot_received_covariance(phi_p, r_h, fb: FilterBank, sigma2: float, white_noise: bool = False) -> np.ndarray:
    """``C_yp = Phi_p R_h Phi_p^H + sigma2 (I kron G G^T)``.

    With ``white_noise=True`` the filtered-noise correlation is replaced by the
    identity (the approximation behind the simplified LMMSE baseline).
    """
    phi_p = np.asarray(phi_p)
    r_h = np.asarray(r_h)
    if r_h.shape != (phi_p.shape[1], phi_p.shape[1]):
        raise ValueError(f"R_h shape {r_h.shape} does not match Phi_p with {phi_p.shape[1]} columns")
    rows = fb.gram.shape[0]
    if phi_p.shape[0] % rows:
        raise ValueError(f"Phi_p has {phi_p.shape[0]} rows, not a multiple of M*tau = {rows}")
    n_r = phi_p.shape[0] // rows
    block = np.eye(rows) if white_noise else fb.gram
    c_n = np.kron(np.eye(n_r), block) * sigma2
    c = phi_p @ r_h @ phi_p.conj().T + c_n
    return (c + c.conj().T) / 2


@dataclass(frozen=True)
class BussgangStats:
    """Bussgang decomposition of the quantized pilot observation.

    Attributes
    ----------
    c_yp : ndarray
        Covariance of the unquantized received pilots.
    k_diag, a_p : ndarray
        Diagonals of ``K`` and ``A_p = sqrt(2/pi) K``.
    phi_tilde : ndarray
        ``A_p Phi_p``.
    c_yq : ndarray
        Covariance of the quantized pilots (arcsin law).
    c_nq : ndarray
        ``C_yQ - A_p C_yp A_p``, the quantization-noise covariance.
    """

    c_yp: np.ndarray
    k_diag: np.ndarray
    a_p: np.ndarray
    phi_tilde: np.ndarray
    c_yq: np.ndarray
    c_nq: np.ndarray


def bussgang_stats(phi_p, r_h, fb: FilterBank, sigma2: float, white_noise: bool = False) -> BussgangStats:
    """Assemble every field of :class:`BussgangStats` for a pilot matrix and prior."""
    phi_p = np.asarray(phi_p)
    c_yp = pilot_received_covariance(phi_p, r_h, fb, sigma2, white_noise=white_noise)
    k, a = bussgang_gain(c_yp)
    c_yq = arcsin_covariance(c_yp)
    c_nq = c_yq - a[:, None] * c_yp * a[None, :]
    c_nq = (c_nq + c_nq.conj().T) / 2
    return BussgangStats(c_yp, k, a, a[:, None] * phi_p, c_yq, c_nq)
