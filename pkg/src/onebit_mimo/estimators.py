"""Channel estimators for 1-bit oversampled pilots.

Two layers are provided.

* Plain functions operating on the stacked model ``y = Phi_p h + n``
  (``standard_ls``, ``lra_ls``, ``lra_lmmse``, ...).  They are literal and
  therefore used as references in the tests.
* scikit-learn style estimators (``fit`` on the pilot matrix, ``predict`` on
  quantized frames).  When the channel prior is white they exploit the fact
  that every antenna sees the same ``M tau x N_t`` system and reuse one filter.

Shapes used throughout: pilots ``(tau, n_t)``, frames ``(n_frames, n_r, M*tau)``
and estimates ``(n_frames, n_t*n_r)`` with index ``j*n_r + r``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from .channel import psd_sqrt
from .config import SystemConfig
from .quant_stats import arcsin_covariance, bussgang_gain, bussgang_stats, BussgangStats
from .waveform import FilterBank, build_pilot_matrix, filter_bank, pilots_to_vector, random_qpsk_pilots

__all__ = [
    "EstimateResult",
    "nmse",
    "nmse_db",
    "standard_ls",
    "lra_ls",
    "lra_lmmse",
    "simplified_lmmse",
    "unquantized_lmmse",
    "lra_lms",
    "estimate_step_bound",
    "StandardLS",
    "LraLS",
    "LraLMMSE",
    "SimplifiedLMMSE",
    "UnquantizedLMMSE",
    "LraLMS",
    "make_estimator",
]

_JITTER = 1e-10


class RankDeficientError(LinAlgError):
    """The pilot system does not have full column rank."""


@dataclass(frozen=True)
class EstimateResult:
    """Channel estimate with its error metric."""

    h_hat: np.ndarray
    nmse: float
    wall_time: float


def nmse(h_hat, h) -> np.ndarray:
    """Per-row ``||h_hat - h||^2 / ||h||^2`` (linear scale)."""
    h_hat, h = np.atleast_2d(h_hat), np.atleast_2d(h)
    return np.sum(np.abs(h_hat - h) ** 2, axis=-1) / np.sum(np.abs(h) ** 2, axis=-1)


def nmse_db(h_hat, h) -> float:
    """Mean NMSE over rows, in dB (``-inf`` for an exact estimate)."""
    with np.errstate(divide="ignore"):
        return float(10 * np.log10(np.mean(nmse(h_hat, h))))


def _regularized(c: np.ndarray) -> np.ndarray:
    n = c.shape[0]
    return c + (_JITTER * np.real(np.trace(c)) / n) * np.eye(n)


def _hpd_solve(c: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve with a Hermitian PD matrix after Tikhonov jitter."""
    try:
        return cho_solve(cho_factor(_regularized(c)), rhs)
    except LinAlgError:
        try:
            return solve(_regularized(c), rhs)
        except LinAlgError as exc:
            raise LinAlgError(f"covariance is singular after regularization: {exc}") from None


def _full_rank_lstsq(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    sol, _, rank, _ = np.linalg.lstsq(a, y, rcond=None)
    if rank < a.shape[1]:
        raise RankDeficientError(f"system matrix has rank {rank} < {a.shape[1]} columns")
    return sol


# ----------------------------------------------------------------------------
# literal forms


def standard_ls(y_q, phi_p) -> np.ndarray:
    """``(Phi^H Phi)^{-1} Phi^H y`` ignoring the quantizer."""
    return _full_rank_lstsq(np.asarray(phi_p), np.asarray(y_q))


def lra_ls(y_q, stats: BussgangStats) -> np.ndarray:
    """Least squares on the Bussgang-scaled pilots ``A_p Phi_p``."""
    return _full_rank_lstsq(stats.phi_tilde, np.asarray(y_q))


def lra_lmmse(y_q, stats: BussgangStats, r_h) -> np.ndarray:
    """``R_h Phi~^H C_yQ^{-1} y_Q``."""
    r_h = np.asarray(r_h)
    return r_h @ (stats.phi_tilde.conj().T @ _hpd_solve(stats.c_yq, np.asarray(y_q)))


def simplified_lmmse(y_q, pilots, r_h, cfg: SystemConfig) -> np.ndarray:
    """LRA-LMMSE built as if the filtered noise were white (``C_n = sigma2 I``)."""
    pilots = np.asarray(pilots)
    fb = filter_bank(cfg.rolloff, cfg.m, cfg.filter_span(cfg.tau), cfg.tau)
    x_p = pilots_to_vector(pilots) if pilots.ndim == 2 else pilots
    phi = build_pilot_matrix(x_p, fb, cfg.n_t, cfg.n_r, cfg.tau)
    stats = bussgang_stats(phi, r_h, fb, cfg.sigma2, white_noise=True)
    return lra_lmmse(y_q, stats, r_h)


def unquantized_lmmse(y, phi_p, r_h, c_n) -> np.ndarray:
    """``R_h Phi^H (Phi R_h Phi^H + C_n)^{-1} y`` on unquantized samples."""
    phi_p, r_h = np.asarray(phi_p), np.asarray(r_h)
    c = phi_p @ r_h @ phi_p.conj().T + np.asarray(c_n)
    return r_h @ (phi_p.conj().T @ _hpd_solve((c + c.conj().T) / 2, np.asarray(y)))


# ----------------------------------------------------------------------------
# LMS


def _window_filter(cfg: SystemConfig, m: int | None = None) -> FilterBank:
    m = cfg.m if m is None else m
    return filter_bank(cfg.rolloff, m, cfg.filter_span(cfg.tau), cfg.l_win)


def _window_operators(pilots: np.ndarray, fbw: FilterBank, sigma2: float) -> np.ndarray:
    """Bussgang-scaled window matrices ``Phi~(n)``, shape ``(n_win, M*l_win, n_t)``.

    The window covariance assumes an identity channel prior.
    """
    l_win = fbw.block_len
    tau = pilots.shape[0]
    n_win = tau - l_win + 1
    if n_win < 1:
        raise ValueError(f"pilot length {tau} shorter than window {l_win}")
    idx = np.arange(n_win)[:, None] + np.arange(l_win)[None, :]
    b = np.einsum("kl,nlj->nkj", fbw.z_sel, pilots[idx])
    c_diag = np.sum(np.abs(b) ** 2, axis=2) + sigma2 * np.diag(fbw.gram)[None, :]
    a = np.sqrt(2 / np.pi) / np.sqrt(c_diag)
    return a[:, :, None] * b


def _lms_recursion(phis: np.ndarray, frames: np.ndarray, mu: float, m: int, h0=None, trace=None) -> np.ndarray:
    """Run the windowed LMS update on ``frames`` of shape ``(F, n_r, M*tau)``.

    Returns ``H`` estimates of shape ``(F, n_t, n_r)``.  If ``trace`` is a list,
    the estimate after every window is appended to it.
    """
    n_win, ml, n_t = phis.shape
    f, n_r, _ = frames.shape
    h = np.zeros((f, n_t, n_r), dtype=complex) if h0 is None else np.array(h0, dtype=complex)
    yt = np.swapaxes(frames, 1, 2)  # (F, M*tau, n_r)
    for n in range(n_win):
        phi = phis[n]
        e = yt[:, m * n:m * n + ml, :] - phi @ h
        h = h + mu * (phi.conj().T @ e)
        if trace is not None:
            trace.append(h.copy())
    return h


def _correlate_users(h: np.ndarray, r_h: np.ndarray | None) -> np.ndarray:
    """Apply ``R_{r,j}^{1/2}`` to the antenna vector of every terminal; ``h`` is ``(F, n_t, n_r)``."""
    if r_h is None:
        return h
    n_t, n_r = h.shape[1:]
    out = h.copy()
    for j in range(n_t):
        blk = r_h[j * n_r:(j + 1) * n_r, j * n_r:(j + 1) * n_r]
        if np.allclose(blk, np.eye(n_r)):
            continue
        out[:, j, :] = h[:, j, :] @ psd_sqrt(blk).T
    return out


def lra_lms(y_q_stream, pilots, cfg: SystemConfig, r_h=None, mu: float | None = None) -> np.ndarray:
    """Windowed LRA-LMS estimate of ``vec(H')`` from one pilot block.

    Parameters
    ----------
    y_q_stream : ndarray, shape (n_r, M*tau)
    pilots : ndarray, shape (tau, n_t)
    cfg : SystemConfig
        Supplies ``m``, ``l_win``, ``rolloff``, ``sigma2`` and the step size.
    r_h : ndarray, optional
        Channel covariance whose per-terminal blocks correlate the result.
    """
    y = np.asarray(y_q_stream)
    pilots = np.asarray(pilots)
    mu = cfg.step_size() if mu is None else mu
    phis = _window_operators(pilots, _window_filter(cfg), cfg.sigma2)
    h = _lms_recursion(phis, y[None], mu, cfg.m)
    h = _correlate_users(h, None if r_h is None else np.asarray(r_h))
    return h[0].reshape(-1)


def estimate_step_bound(cfg: SystemConfig, n_samples: int = 2000, rng: np.random.Generator | None = None,
                        form: str | None = None) -> tuple[float, float]:
    """Largest eigenvalue of the mean window Gram matrix and the step bound ``2 / gamma``.

    ``form='phi_h_phi'`` averages ``Phi~^H Phi~`` (``n_t x n_t``);
    ``form='phi_phi_h'`` averages ``Phi~ Phi~^H`` (``M l_win`` square).
    """
    form = cfg.step_bound_form if form is None else form
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    fbw = _window_filter(cfg)
    x = random_qpsk_pilots(n_samples * cfg.l_win, cfg.n_t, rng).reshape(n_samples, cfg.l_win, cfg.n_t)
    b = np.einsum("kl,nlj->nkj", fbw.z_sel, x)
    c_diag = np.sum(np.abs(b) ** 2, axis=2) + cfg.sigma2 * np.diag(fbw.gram)[None, :]
    phis = (np.sqrt(2 / np.pi) / np.sqrt(c_diag))[:, :, None] * b
    if form == "phi_h_phi":
        gram = np.einsum("nkj,nki->ji", phis.conj(), phis) / n_samples
    elif form == "phi_phi_h":
        gram = np.einsum("nkj,nlj->kl", phis, phis.conj()) / n_samples
    else:
        raise ValueError(f"unknown form {form!r}")
    gamma = float(np.linalg.eigvalsh((gram + gram.conj().T) / 2)[-1])
    return gamma, 2.0 / gamma


# ----------------------------------------------------------------------------
# estimator classes


def _as_frames(y, n_r: int | None, samples: int) -> tuple[np.ndarray, bool]:
    y = np.asarray(y)
    single = y.ndim == 2
    if single:
        y = y[None]
    if y.ndim != 3 or y.shape[2] != samples or (n_r is not None and y.shape[1] != n_r):
        raise ValueError(f"frames must have shape (n_frames, n_r, {samples}), got {y.shape}")
    return y, single


def _is_identity(r_h) -> bool:
    return r_h is None or (np.allclose(np.diag(r_h), 1.0) and np.count_nonzero(r_h - np.diag(np.diag(r_h))) == 0)


def _antenna_blocks(r_h: np.ndarray, n_t: int, n_r: int) -> np.ndarray:
    """Per-antenna ``n_t x n_t`` sub-blocks ``R[(j, r), (j', r)]``, shape ``(n_r, n_t, n_t)``."""
    r4 = r_h.reshape(n_t, n_r, n_t, n_r)
    return np.einsum("irjr->rij", r4)


def _structured_cov(b: np.ndarray, r_h: np.ndarray, gram: np.ndarray, sigma2: float, n_r: int) -> np.ndarray:
    """``Phi R Phi^H + sigma2 (I kron GG)`` without building ``Phi``.

    Row/column index is ``r*M*tau + k``.
    """
    ml, n_t = b.shape
    r4 = r_h.reshape(n_t, n_r, n_t, n_r)
    t = np.tensordot(b, r4, axes=([1], [0]))  # (k, r, j', r')
    c = np.tensordot(t, b.conj(), axes=([2], [1]))  # (k, r, r', l)
    c = c.transpose(1, 0, 2, 3).reshape(n_r * ml, n_r * ml)
    c += sigma2 * np.kron(np.eye(n_r), gram)
    return (c + c.conj().T) / 2


class _PilotEstimator(BaseEstimator):
    """Shared plumbing: ``fit`` stores the pilots and filter matrices."""

    quantized_input = True

    def __init__(self, oversampling=1, rolloff=0.8, span=None, sigma2=1.0):
        self.oversampling = oversampling
        self.rolloff = rolloff
        self.span = span
        self.sigma2 = sigma2

    def fit(self, X, y=None):
        """Store pilots ``X`` of shape ``(tau, n_t)`` and precompute filters."""
        x = np.asarray(X)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError(f"pilots must be a (tau, n_t) matrix, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("pilots contain non-finite values")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        tau, n_t = x.shape
        self.pilots_ = x
        self.n_t_ = n_t
        self.tau_ = tau
        self.fb_ = filter_bank(float(self.rolloff), int(self.oversampling), int(self.span or tau), tau)
        self.block_ = self.fb_.z_sel @ x
        self._fit_white()
        return self

    def _fit_white(self):
        """Precompute the per-antenna filter for a white unit-variance prior."""
        self.filter_ = None

    def _frames(self, y):
        check_is_fitted(self, "pilots_")
        return _as_frames(y, None, self.block_.shape[0])

    def predict(self, Y, r_h=None):
        """Estimate ``vec(H')`` for each frame.

        Parameters
        ----------
        Y : ndarray, shape (n_frames, n_r, M*tau) or (n_r, M*tau)
        r_h : ndarray, optional
            Channel covariance; ``None`` means identity.
        """
        frames, single = self._frames(Y)
        n_r = frames.shape[1]
        if _is_identity(r_h) and self.filter_ is not None:
            h = np.einsum("jk,frk->fjr", self.filter_, frames)
            out = h.reshape(h.shape[0], -1)
        else:
            out = self._predict_general(frames, np.eye(self.n_t_ * n_r) if r_h is None else np.asarray(r_h))
        return out[0] if single else out

    def _predict_general(self, frames, r_h):
        raise NotImplementedError

    def _stacked(self, n_r):
        return build_pilot_matrix(pilots_to_vector(self.pilots_), self.fb_, self.n_t_, n_r, self.tau_)


class StandardLS(_PilotEstimator):
    """Least squares that treats quantized samples as unquantized."""

    def _fit_white(self):
        q, r = np.linalg.qr(self.block_)
        if np.min(np.abs(np.diag(r))) < 1e-12 * np.max(np.abs(np.diag(r))):
            raise RankDeficientError("pilot block is rank deficient")
        self.filter_ = np.linalg.pinv(self.block_)

    def _predict_general(self, frames, r_h):
        h = np.einsum("jk,frk->fjr", self.filter_, frames)
        return h.reshape(h.shape[0], -1)


class LraLS(_PilotEstimator):
    """Least squares on the Bussgang-scaled pilots."""

    def _gains(self, r_blocks: np.ndarray) -> np.ndarray:
        # diag(C_yp) per antenna: b_k^T R_r b_k^* + sigma2
        c = np.einsum("kj,rji,ki->rk", self.block_, r_blocks, self.block_.conj()).real
        c += self.sigma2 * np.diag(self.fb_.gram)[None, :]
        return np.sqrt(2 / np.pi) / np.sqrt(c)

    def _fit_white(self):
        a = self._gains(np.eye(self.n_t_)[None])[0]
        self.gain_ = a
        self.filter_ = np.linalg.pinv(a[:, None] * self.block_)

    def _predict_general(self, frames, r_h):
        n_r = frames.shape[1]
        a = self._gains(_antenna_blocks(r_h, self.n_t_, n_r))
        h = np.empty((frames.shape[0], self.n_t_, n_r), dtype=complex)
        for r in range(n_r):
            w = np.linalg.pinv(a[r][:, None] * self.block_)
            h[:, :, r] = frames[:, r, :] @ w.T
        return h.reshape(h.shape[0], -1)


class LraLMMSE(_PilotEstimator):
    """Bussgang LMMSE ``R_h Phi~^H C_yQ^{-1} y_Q`` with the filtered-noise covariance."""

    white_noise = False

    def _noise_block(self):
        return np.eye(self.block_.shape[0]) if self.white_noise else self.fb_.gram

    def _fit_white(self):
        b = self.block_
        c = b @ b.conj().T + self.sigma2 * self._noise_block()
        _, a = bussgang_gain(c)
        c_yq = arcsin_covariance(c)
        bt = a[:, None] * b
        self.filter_ = _hpd_solve(c_yq, bt).conj().T  # Phi~^H C_yQ^{-1}

    def _predict_general(self, frames, r_h):
        n_r = frames.shape[1]
        c = _structured_cov(self.block_, r_h, self._noise_block(), self.sigma2, n_r)
        _, a = bussgang_gain(c)
        c_yq = arcsin_covariance(c)
        y = frames.reshape(frames.shape[0], -1).T  # (n_r*M*tau, F)
        z = _hpd_solve(c_yq, y) * a[:, None]
        # Phi^H z, then R_h
        zb = z.reshape(n_r, -1, z.shape[1])
        ph = np.einsum("kj,rkf->jrf", self.block_.conj(), zb).reshape(-1, z.shape[1])
        return (r_h @ ph).T


class SimplifiedLMMSE(LraLMMSE):
    """LRA-LMMSE with the noise correlation replaced by ``sigma2 I``."""

    white_noise = True


class UnquantizedLMMSE(_PilotEstimator):
    """Linear MMSE on unquantized samples (performance reference)."""

    quantized_input = False

    def _fit_white(self):
        b = self.block_
        c = b @ b.conj().T + self.sigma2 * self.fb_.gram
        self.filter_ = _hpd_solve(c, b).conj().T

    def _predict_general(self, frames, r_h):
        n_r = frames.shape[1]
        c = _structured_cov(self.block_, r_h, self.fb_.gram, self.sigma2, n_r)
        y = frames.reshape(frames.shape[0], -1).T
        zb = _hpd_solve(c, y).reshape(n_r, -1, y.shape[1])
        ph = np.einsum("kj,rkf->jrf", self.block_.conj(), zb).reshape(-1, y.shape[1])
        return (r_h @ ph).T


class LraLMS(_PilotEstimator):
    """Sliding-window LMS on Bussgang-scaled window matrices.

    Parameters
    ----------
    mu : float
        Step size.
    l_win : int
        Window length in symbols.
    mu_max : float, optional
        If given, ``mu`` must lie in ``(0, mu_max)``.
    """

    def __init__(self, oversampling=1, rolloff=0.8, span=None, sigma2=1.0, mu=0.3, l_win=3, mu_max=None):
        super().__init__(oversampling, rolloff, span, sigma2)
        self.mu = mu
        self.l_win = l_win
        self.mu_max = mu_max

    def fit(self, X, y=None):
        if self.mu <= 0 or (self.mu_max is not None and self.mu >= self.mu_max):
            raise ValueError(f"step size {self.mu} outside (0, {self.mu_max})")
        if self.l_win < 1:
            raise ValueError("l_win must be >= 1")
        super().fit(X)
        span = int(self.span or self.tau_)
        self.window_fb_ = filter_bank(float(self.rolloff), int(self.oversampling), span, int(self.l_win))
        self.windows_ = _window_operators(self.pilots_, self.window_fb_, self.sigma2)
        return self

    def predict(self, Y, r_h=None, trace=None):
        frames, single = self._frames(Y)
        h = _lms_recursion(self.windows_, frames, self.mu, int(self.oversampling), trace=trace)
        if r_h is not None and not _is_identity(r_h):
            h = _correlate_users(h, np.asarray(r_h))
        out = h.reshape(h.shape[0], -1)
        return out[0] if single else out


_CLASSES = {
    "standard_ls": StandardLS,
    "lra_ls": LraLS,
    "lra_lmmse": LraLMMSE,
    "simplified_lmmse": SimplifiedLMMSE,
    "unquantized_lmmse": UnquantizedLMMSE,
    "lra_lms": LraLMS,
}


def make_estimator(name: str, cfg: SystemConfig, m: int | None = None, sigma2: float | None = None):
    """Unfitted estimator for operating point ``(m, sigma2)`` of ``cfg``."""
    if name not in _CLASSES:
        raise ValueError(f"unknown estimator {name!r}")
    m = cfg.m if m is None else m
    kw = dict(oversampling=m, rolloff=cfg.rolloff, span=cfg.span or None,
              sigma2=cfg.sigma2 if sigma2 is None else sigma2)
    if name == "lra_lms":
        kw.update(mu=cfg.step_size(m), l_win=cfg.l_win)
    return _CLASSES[name](**kw)


def timed(fn, *args, **kwargs):
    """Call ``fn`` and return ``(result, seconds)``."""
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


__all__ += ["RankDeficientError", "NotFittedError", "timed"]
