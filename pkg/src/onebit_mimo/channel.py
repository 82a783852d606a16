"""Correlated Rayleigh channels and recursive estimation of their covariance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .config import SystemConfig
from .quantizer import quantize_1bit
from .waveform import FilterBank, PulseSpec, build_z, random_qpsk_pilots, synthesize_noise

__all__ = [
    "ChannelRealization",
    "BiasReport",
    "receive_correlation",
    "psd_sqrt",
    "draw_channel",
    "symbol_response",
    "instantaneous_estimates",
    "estimate_rh_adaptive",
    "empirical_bias_check",
    "simulate_quantized_pilots",
]


def receive_correlation(rho: complex, n_r: int) -> np.ndarray:
    """Hermitian Toeplitz matrix with entry ``(i, j) = rho**(j - i)`` for ``j >= i``."""
    if abs(rho) > 1 + 1e-15:
        raise ValueError(f"|rho| must be <= 1, got {abs(rho)}")
    if n_r < 1:
        raise ValueError("n_r must be >= 1")
    lag = np.arange(n_r)
    d = lag[None, :] - lag[:, None]
    up = np.power(complex(rho), np.abs(d))
    return np.where(d >= 0, up, np.conj(up))


def psd_sqrt(r: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Hermitian square root; eigenvalues below ``tol`` (relative) are clipped to zero."""
    w, v = np.linalg.eigh(r)
    w = np.where(w < tol * max(w.max(), 1.0), 0.0, w)
    return (v * np.sqrt(w)) @ v.conj().T


@dataclass(frozen=True)
class ChannelRealization:
    """One channel draw.

    Attributes
    ----------
    h_matrix : ndarray, shape (n_r, n_t)
        ``H'``; column ``j`` is terminal ``j``.
    r_h : ndarray, shape (n_t*n_r, n_t*n_r)
        Covariance of ``vec(H')``; block diagonal with one receive
        correlation block per terminal.
    rho_mags, rho_phases : ndarray
        Per-terminal correlation magnitude and phase.
    """

    h_matrix: np.ndarray
    r_h: np.ndarray
    rho_mags: np.ndarray
    rho_phases: np.ndarray

    @property
    def h_vec(self) -> np.ndarray:
        """``vec(H')`` (index ``j*n_r + r``)."""
        return self.h_matrix.T.reshape(-1)

    @property
    def blocks(self) -> list[np.ndarray]:
        n_r = self.h_matrix.shape[0]
        return [self.r_h[j * n_r:(j + 1) * n_r, j * n_r:(j + 1) * n_r] for j in range(self.h_matrix.shape[1])]

    @property
    def is_white(self) -> bool:
        return bool(np.all(self.rho_mags == 0))


def draw_channel(cfg: SystemConfig, rng: np.random.Generator) -> ChannelRealization:
    """Rayleigh channel with per-terminal receive correlation ``|rho| e^{j phi}``.

    The phase of every terminal is uniform on ``[0, 2 pi)``; the magnitude is
    ``cfg.rho_mag`` for all terminals.
    """
    n_t, n_r = cfg.n_t, cfg.n_r
    phases = rng.uniform(0.0, 2 * np.pi, size=n_t)
    w = (rng.standard_normal((n_r, n_t)) + 1j * rng.standard_normal((n_r, n_t))) / np.sqrt(2)
    mags = np.full(n_t, float(cfg.rho_mag))
    if cfg.rho_mag == 0:
        return ChannelRealization(w, np.eye(n_t * n_r, dtype=complex), mags, phases)
    blocks = [receive_correlation(cfg.rho_mag * np.exp(1j * p), n_r) for p in phases]
    h = np.column_stack([psd_sqrt(b) @ w[:, j] for j, b in enumerate(blocks)])
    return ChannelRealization(h, block_diag(*blocks), mags, phases)


def symbol_response(spec: PulseSpec) -> np.ndarray:
    """``Z' u``: the ``M`` samples of one symbol period (single-symbol block)."""
    z1 = build_z(spec, 1)
    return z1[:, -1].copy()


def instantaneous_estimates(y_q: np.ndarray, pilots: np.ndarray, spec: PulseSpec, n_steps: int | None = None) -> np.ndarray:
    """Per-symbol minimum-norm channel estimates.

    Parameters
    ----------
    y_q : ndarray, shape (n_r, M*tau)
        Quantized received samples, one row per antenna.
    pilots : ndarray, shape (tau, n_t)

    Returns
    -------
    ndarray, shape (n_steps, n_t*n_r)
        Row ``n`` solves ``(x'(n)^T kron I kron Z'u) h = y_Q(n)`` in the
        least-squares minimum-norm sense.
    """
    y_q = np.asarray(y_q)
    pilots = np.asarray(pilots)
    m = spec.oversampling
    tau, n_t = pilots.shape
    n_r = y_q.shape[0]
    if y_q.shape[1] != m * tau:
        raise ValueError(f"expected {m * tau} samples per antenna, got {y_q.shape[1]}")
    n_steps = tau if n_steps is None else int(n_steps)
    if not 1 <= n_steps <= tau:
        raise ValueError(f"n_steps must lie in [1, {tau}]")
    v = symbol_response(spec)
    out = np.empty((n_steps, n_t * n_r), dtype=complex)
    for n in range(n_steps):
        a = np.outer(v, pilots[n])  # M x n_t, identical for every antenna
        rhs = y_q[:, m * n:m * (n + 1)].T  # M x n_r
        sol, *_ = np.linalg.lstsq(a, rhs, rcond=None)
        out[n] = sol.reshape(-1)  # n_t x n_r -> index j*n_r + r
    return out


def estimate_rh_adaptive(
    y_q: np.ndarray,
    pilots: np.ndarray,
    fb: FilterBank | PulseSpec,
    lam: float,
    n_steps: int | None = None,
) -> np.ndarray:
    """Exponentially weighted channel covariance ``R(n+1) = lam R(n) + (1 - lam) h h^H``.

    Starts from the identity.  ``lam = 0`` keeps only the last outer product.
    """
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"forgetting factor must lie in [0, 1), got {lam}")
    spec = fb.spec if isinstance(fb, FilterBank) else fb
    hs = instantaneous_estimates(y_q, pilots, spec, n_steps)
    r = np.eye(hs.shape[1], dtype=complex)
    for h in hs:
        r = lam * r + (1.0 - lam) * np.outer(h, h.conj())
    return (r + r.conj().T) / 2


@dataclass(frozen=True)
class BiasReport:
    """Monte Carlo estimate of ``E{Phi'^+ A' Phi'}`` for one antenna.

    The full matrix is ``matrix kron I_{n_r}`` because every antenna sees the
    same gain when the channel covariance has a unit diagonal.
    """

    matrix: np.ndarray
    stderr: np.ndarray
    deviation: float
    n_trials: int


def empirical_bias_check(cfg: SystemConfig, n_trials: int, rng: np.random.Generator | None = None) -> BiasReport:
    """Estimate the expected gain of the instantaneous estimator and its distance to ``I``."""
    if n_trials < 2:
        raise ValueError("need at least two trials for a standard error")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    spec = PulseSpec(cfg.rolloff, cfg.m, cfg.filter_span(cfg.tau))
    v = symbol_response(spec)
    s2 = cfg.sigma2
    acc = np.zeros((n_trials, cfg.n_t, cfg.n_t), dtype=complex)
    for t in range(n_trials):
        x = random_qpsk_pilots(1, cfg.n_t, rng)[0]
        phi = np.outer(v, x)
        # diag(Phi' R Phi'^H) with unit-diagonal R: |v_m|^2 * sum_j |x_j|^2
        c_diag = np.abs(v) ** 2 * np.sum(np.abs(x) ** 2) + s2
        a = np.sqrt(2 / np.pi) / np.sqrt(c_diag)
        acc[t] = np.linalg.pinv(phi) @ (a[:, None] * phi)
    mean = acc.mean(axis=0)
    err = np.sqrt(acc.real.var(axis=0, ddof=1) + acc.imag.var(axis=0, ddof=1)) / np.sqrt(n_trials)
    dev = float(np.max(np.abs(mean - np.eye(cfg.n_t))))
    return BiasReport(mean, err, dev, n_trials)


def simulate_quantized_pilots(
    h_matrix: np.ndarray,
    pilots: np.ndarray,
    fb: FilterBank,
    sigma2: float,
    rng: np.random.Generator,
    quantize: bool = True,
) -> np.ndarray:
    """Received pilot block per antenna, shape ``(n_r, M*tau)``.

    ``Y = (Z(I kron u) X H'^T)^T + noise``; ``quantize=False`` returns the
    unquantized samples.
    """
    b = fb.z_sel @ pilots  # (M*tau, n_t)
    n_r = h_matrix.shape[0]
    noise = synthesize_noise(fb, sigma2, rng, n_r=n_r).reshape(n_r, -1)
    y = h_matrix @ b.T + noise
    return quantize_1bit(y) if quantize else y
