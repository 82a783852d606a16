"""Sliding-window Bussgang LMMSE detection of QPSK payloads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import draw_channel, simulate_quantized_pilots
from .config import SystemConfig
from .estimators import _hpd_solve, make_estimator
from .quant_stats import arcsin_covariance, bussgang_gain
from .quantizer import QPSK_ALPHABET, qpsk_indices, quantize_1bit
from .waveform import FilterBank, filter_bank, orthogonal_pilots, synthesize_noise

__all__ = ["WindowDetector", "detect_window_lmmse", "ser_block", "ser_run", "SerResult"]


def _window_filter(h_hat: np.ndarray, fbw: FilterBank, sigma2: float, quantized: bool = True) -> np.ndarray:
    """Linear filter mapping a window of samples to all in-window symbols.

    The windowed system is ``Phi_w = H' kron Z_w(I kron u)`` with unit-power
    symbols.  Returns ``W`` of shape ``(n_t*l, n_r*M*l)`` (terminal-major rows).
    """
    phi = np.kron(h_hat, fbw.z_sel)
    n_r = h_hat.shape[0]
    c = phi @ phi.conj().T + sigma2 * np.kron(np.eye(n_r), fbw.gram)
    c = (c + c.conj().T) / 2
    if not quantized:
        return _hpd_solve(c, phi).conj().T
    _, a = bussgang_gain(c)
    return _hpd_solve(arcsin_covariance(c), a[:, None] * phi).conj().T


def detect_window_lmmse(y_q_window, h_hat, cfg: SystemConfig, fbw: FilterBank | None = None,
                        quantized: bool = True) -> np.ndarray:
    """Soft estimate of the center symbol of every terminal from one window.

    Parameters
    ----------
    y_q_window : ndarray, shape (n_r, M*l_win)
        Samples of ``l_win`` consecutive symbol periods on every antenna.
    h_hat : ndarray, shape (n_r, n_t)
        Channel used to build the window model.
    cfg : SystemConfig
    quantized : bool
        ``False`` treats the input as unquantized (plain LMMSE).

    Returns
    -------
    ndarray, shape (n_t,)
    """
    y = np.asarray(y_q_window)
    h_hat = np.asarray(h_hat)
    l = y.shape[1] // cfg.m
    if y.shape[1] != cfg.m * l or y.shape[0] != h_hat.shape[0]:
        raise ValueError("window shape does not match the channel and oversampling")
    fbw = fbw or filter_bank(cfg.rolloff, cfg.m, cfg.filter_span(cfg.tau), l)
    w = _window_filter(h_hat, fbw, cfg.sigma2, quantized)
    x = w @ y.reshape(-1)
    return x.reshape(h_hat.shape[1], l)[:, (l - 1) // 2]


class WindowDetector:
    """Detector for a whole payload block, reusing one filter for interior windows.

    Symbol ``i`` is detected from the window of symbols ``i - c .. i + l - 1 - c``
    with ``c = (l - 1) // 2``; windows that would leave the block are truncated.
    """

    def __init__(self, h_hat: np.ndarray, cfg: SystemConfig, quantized: bool = True):
        self.h_hat = np.asarray(h_hat)
        self.cfg = cfg
        self.quantized = quantized
        self._filters: dict[tuple[int, int], np.ndarray] = {}

    def _filter(self, length: int, center: int) -> np.ndarray:
        key = (length, center)
        if key not in self._filters:
            cfg = self.cfg
            fbw = filter_bank(cfg.rolloff, cfg.m, cfg.filter_span(cfg.tau), length)
            w = _window_filter(self.h_hat, fbw, cfg.sigma2, self.quantized)
            n_t = self.h_hat.shape[1]
            self._filters[key] = w.reshape(n_t, length, -1)[:, center, :]
        return self._filters[key]

    def soft(self, y_block: np.ndarray) -> np.ndarray:
        """Soft symbols ``(n_t, n_sym)`` for samples ``(n_r, M*n_sym)``."""
        m, l_win = self.cfg.m, self.cfg.l_win
        n_r, n_samp = y_block.shape
        n_sym = n_samp // m
        c = (l_win - 1) // 2
        out = np.empty((self.h_hat.shape[1], n_sym), dtype=complex)
        interior = []
        for i in range(n_sym):
            lo, hi = max(0, i - c), min(n_sym, i - c + l_win)
            if hi - lo == l_win:
                interior.append(i)
                continue
            w = self._filter(hi - lo, i - lo)
            out[:, i] = w @ y_block[:, m * lo:m * hi].reshape(-1)
        if interior:
            idx = np.asarray(interior)
            w = self._filter(l_win, c)
            starts = m * (idx - c)
            cols = starts[:, None] + np.arange(m * l_win)[None, :]
            win = y_block[:, cols]  # (n_r, n_int, M*l)
            win = np.transpose(win, (1, 0, 2)).reshape(len(idx), -1)
            out[:, idx] = w @ win.T
        return out


@dataclass(frozen=True)
class SerResult:
    """Symbol error rate with its binomial standard error."""

    ser: float
    stderr: float
    errors: int
    symbols: int


def ser_block(cfg: SystemConfig, estimator_choice: str | None, rng: np.random.Generator,
              rng_pilot: np.random.Generator | None = None, rng_data: np.random.Generator | None = None,
              estimator=None, quantized: bool = True) -> tuple[int, int]:
    """Symbol errors and symbols of one payload block.

    Draws a channel from ``rng``, estimates it from pilots (noise from
    ``rng_pilot``) unless ``estimator_choice`` is ``None`` or ``"perfect"``,
    then sends ``cfg.data_len`` QPSK symbols per terminal (symbols and noise
    from ``rng_data``).  Separate streams let perfect and estimated CSI share
    channel and payload.  ``estimator`` is an already fitted estimator.
    """
    rng_pilot = rng if rng_pilot is None else rng_pilot
    rng_data = rng if rng_data is None else rng_data
    span = cfg.filter_span(cfg.tau)
    ch = draw_channel(cfg, rng)
    if estimator_choice in (None, "perfect"):
        h_hat = ch.h_matrix
    else:
        pilots = orthogonal_pilots(cfg.tau, cfg.n_t)
        est = estimator if estimator is not None else make_estimator(estimator_choice, cfg).fit(pilots)
        fb_pilot = filter_bank(cfg.rolloff, cfg.m, span, cfg.tau)
        y_p = simulate_quantized_pilots(ch.h_matrix, est.pilots_, fb_pilot, cfg.sigma2, rng_pilot,
                                        quantize=est.quantized_input)
        h_hat = est.predict(y_p, r_h=None if ch.is_white else ch.r_h).reshape(cfg.n_t, cfg.n_r).T
    fb_data = filter_bank(cfg.rolloff, cfg.m, span, cfg.data_len)
    sym = rng_data.integers(0, 4, size=(cfg.n_t, cfg.data_len))
    y = ch.h_matrix @ (fb_data.z_sel @ QPSK_ALPHABET[sym].T).T
    y = y + synthesize_noise(fb_data, cfg.sigma2, rng_data, n_r=cfg.n_r).reshape(cfg.n_r, -1)
    if quantized:
        y = quantize_1bit(y)
    soft = WindowDetector(h_hat, cfg, quantized).soft(y)
    return int(np.count_nonzero(qpsk_indices(soft) != sym)), int(sym.size)


def ser_run(cfg: SystemConfig, estimator_choice: str | None, n_symbols: int, rng: np.random.Generator,
            quantized: bool = True) -> SerResult:
    """Monte Carlo SER of the windowed detector.

    Sends blocks of ``cfg.data_len`` symbols per terminal (see :func:`ser_block`)
    until at least ``n_symbols`` symbols per terminal were sent.
    """
    est = None
    if estimator_choice not in (None, "perfect"):
        est = make_estimator(estimator_choice, cfg).fit(orthogonal_pilots(cfg.tau, cfg.n_t))
    n_blocks = max(1, -(-int(n_symbols) // cfg.data_len))
    errors = total = 0
    for _ in range(n_blocks):
        e, n = ser_block(cfg, estimator_choice, rng, estimator=est, quantized=quantized)
        errors += e
        total += n
    p = errors / total
    return SerResult(p, float(np.sqrt(max(p * (1 - p), 0.0) / total)), errors, total)
