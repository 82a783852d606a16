"""Bayesian and bias-aware Cramer-Rao bounds for 1-bit pilot observations.

The channel is handled in the real parameterization ``h~ = [Re h; Im h]``.
For a real/imaginary receive component the mean of the noiseless signal is

* real part: ``m^R = Phi^R h^R - Phi^I h^I`` with gradient rows ``[Phi^R, -Phi^I]``
* imaginary part: ``m^I = Phi^I h^R + Phi^R h^I`` with gradient rows ``[Phi^I, Phi^R]``
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import log_ndtr

from .channel import draw_channel, estimate_rh_adaptive
from .config import SystemConfig
from .estimators import LraLS, make_estimator
from .quant_stats import bvn_cdf, qfunc
from .quantizer import quantize_1bit
from .waveform import filter_bank, orthogonal_pilots, dft_pilots, random_qpsk_pilots, synthesize_noise

__all__ = [
    "BimResult",
    "bim_prior",
    "bim_data_exact_m1",
    "bim_data_moment_bound",
    "complex_bim",
    "bayesian_crb",
    "numerical_bias_gradient",
    "general_crb",
    "GeneralCrbResult",
    "BIAS_ESTIMATORS",
    "BiasEstimator",
]


def _real_parts(phi: np.ndarray, h: np.ndarray):
    """Means and gradient rows of the real and imaginary receive components."""
    pr, pi = phi.real, phi.imag
    hr, hi = h.real, h.imag
    d_re = np.hstack([pr, -pi])
    d_im = np.hstack([pi, pr])
    return pr @ hr - pi @ hi, d_re, pi @ hr + pr @ hi, d_im


def bim_prior(r_h) -> np.ndarray:
    """Prior information ``2 C_h~^{-1}`` with ``C_h~ = 1/2 I_2 kron R_h`` (real part of ``R_h``).

    For a complex prior the real-valued covariance is
    ``1/2 [[Re R, -Im R], [Im R, Re R]]``, which reduces to the block form above
    for real ``R_h``.
    """
    r_h = np.asarray(r_h)
    c = 0.5 * np.block([[r_h.real, -r_h.imag], [r_h.imag, r_h.real]])
    try:
        inv = np.linalg.inv(c)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("prior covariance is singular") from None
    if not np.all(np.isfinite(inv)):
        raise np.linalg.LinAlgError("prior covariance is singular")
    return 2.0 * (inv + inv.T) / 2


def _log_qq(x: np.ndarray) -> np.ndarray:
    """``log(Q(x) Q(-x))`` evaluated without underflow."""
    return log_ndtr(-x) + log_ndtr(x)


def _exact_weights(m: np.ndarray, sigma2: float) -> np.ndarray:
    """Per-sample information weight ``exp(-2 m^2 / s2) / (pi s2 Q(x) Q(-x))``, ``x = m / sqrt(s2/2)``."""
    x = m / np.sqrt(sigma2 / 2.0)
    return np.exp(-x**2 - _log_qq(x)) / (np.pi * sigma2)


def bim_data_exact_m1(phi, h_tilde, sigma2: float) -> np.ndarray:
    """Data information ``J^D`` for white noise (``C_n = sigma2 I``).

    Parameters
    ----------
    phi : ndarray, complex (K, P)
    h_tilde : ndarray, real (2P,) or complex (P,)
        Channel at which the information is evaluated.
    sigma2 : float
        Noise variance per complex sample.
    """
    phi = np.asarray(phi)
    h = _complex_h(h_tilde, phi.shape[1])
    m_re, d_re, m_im, d_im = _real_parts(phi, h)
    w_re = _exact_weights(m_re, sigma2)
    w_im = _exact_weights(m_im, sigma2)
    j = d_re.T @ (w_re[:, None] * d_re) + d_im.T @ (w_im[:, None] * d_im)
    return (j + j.T) / 2


def _complex_h(h_tilde, p: int) -> np.ndarray:
    h_tilde = np.asarray(h_tilde)
    if np.iscomplexobj(h_tilde):
        if h_tilde.shape != (p,):
            raise ValueError(f"channel must have {p} entries")
        return h_tilde
    if h_tilde.shape != (2 * p,):
        raise ValueError(f"real channel vector must have {2 * p} entries")
    return h_tilde[:p] + 1j * h_tilde[p:]


def _moment_part(m: np.ndarray, d: np.ndarray, c_n: np.ndarray) -> np.ndarray:
    """Moment-based information of one real component (mean ``m``, noise cov ``c_n / 2``)."""
    ckk = np.diag(c_n)
    s = np.sqrt(ckk / 2.0)
    u = m / s
    mu = (1.0 - 2.0 * qfunc(u)) / np.sqrt(2.0)
    dmu = (2.0 * np.exp(-m**2 / ckk) / np.sqrt(2.0 * np.pi * ckk))[:, None] * d

    k = m.size
    cov = np.diag(0.5 - mu**2)
    iu, ju = np.triu_indices(k, 1)
    rho = c_n[iu, ju] / np.sqrt(ckk[iu] * ckk[ju])
    nz = rho != 0
    if np.any(nz):
        a, b, r = u[iu[nz]], u[ju[nz]], np.clip(rho[nz], -1.0, 1.0)
        p_same = bvn_cdf(a, b, r) + bvn_cdf(-a, -b, r)
        off = p_same - 0.5 - mu[iu[nz]] * mu[ju[nz]]
        cov[iu[nz], ju[nz]] = off
        cov[ju[nz], iu[nz]] = off
    # uncorrelated pairs are independent: covariance zero.  Outputs that are
    # deterministic to working precision carry no information and are dropped.
    keep = np.diag(cov) > 1e-13
    cov, dmu = cov[np.ix_(keep, keep)], dmu[keep]
    try:
        sol = np.linalg.solve(cov, dmu)
    except np.linalg.LinAlgError:
        sol = np.linalg.pinv(cov, hermitian=True) @ dmu
    j = dmu.T @ sol
    return (j + j.T) / 2


def bim_data_moment_bound(phi, h_tilde, c_n) -> np.ndarray:
    """Lower bound on ``J^D`` from the first two moments of the quantized output.

    ``c_n`` is the (real) covariance of the complex noise; each real component
    has covariance ``c_n / 2``.  For diagonal ``c_n`` the bound is tight.
    """
    phi = np.asarray(phi)
    c_n = np.asarray(c_n)
    if np.iscomplexobj(c_n):
        if np.max(np.abs(c_n.imag)) > 1e-12 * np.max(np.abs(c_n)):
            raise ValueError("noise covariance must be real")
        c_n = c_n.real
    if c_n.shape != (phi.shape[0],) * 2:
        raise ValueError("noise covariance does not match Phi")
    h = _complex_h(h_tilde, phi.shape[1])
    m_re, d_re, m_im, d_im = _real_parts(phi, h)
    return _moment_part(m_re, d_re, c_n) + _moment_part(m_im, d_im, c_n)


def complex_bim(j_real: np.ndarray) -> np.ndarray:
    """Complex-domain information from the real ``2P x 2P`` matrix.

    ``J = (J_RR + J_II)/4 + j (J_RI - J_IR)/4``.
    """
    p = j_real.shape[0] // 2
    rr, ri = j_real[:p, :p], j_real[:p, p:]
    ir, ii = j_real[p:, :p], j_real[p:, p:]
    jc = (rr + ii) / 4 + 1j * (ri - ir) / 4
    return (jc + jc.conj().T) / 2


@dataclass(frozen=True)
class BimResult:
    """Bayesian information and the resulting per-coefficient bound.

    ``j_real`` and ``j_complex`` are reported for one receive antenna when the
    problem decouples across antennas (white prior); ``crb_diag`` always covers
    all ``n_t * n_r`` coefficients.
    """

    j_real: np.ndarray
    j_complex: np.ndarray
    crb_diag: np.ndarray
    is_upper_bound: bool
    nmse_db: float


def _crb_pilots(cfg: SystemConfig, rng) -> np.ndarray:
    if cfg.pilot_design == "orthogonal":
        return orthogonal_pilots(cfg.tau, cfg.n_t)
    if cfg.pilot_design == "dft":
        return dft_pilots(cfg.tau, cfg.n_t)
    return random_qpsk_pilots(cfg.tau, cfg.n_t, rng)


def _antenna_data_info(b: np.ndarray, h_rows: np.ndarray, fb, sigma2: float, m: int) -> np.ndarray:
    """Average per-antenna ``J^D`` over channel vectors ``h_rows`` (shape ``(n, n_t)``)."""
    if m == 1:
        # gradient rows do not depend on h, so only the weights need averaging
        pr, pi = b.real, b.imag
        d_re = np.hstack([pr, -pi])
        d_im = np.hstack([pi, pr])
        hr, hi = h_rows.real.T, h_rows.imag.T
        w_re = _exact_weights(pr @ hr - pi @ hi, sigma2).mean(axis=1)
        w_im = _exact_weights(pi @ hr + pr @ hi, sigma2).mean(axis=1)
        j = d_re.T @ (w_re[:, None] * d_re) + d_im.T @ (w_im[:, None] * d_im)
    else:
        c_n = sigma2 * np.asarray(fb.gram)
        j = sum(bim_data_moment_bound(b, h, c_n) for h in h_rows) / len(h_rows)
    return (j + j.T) / 2


def _normalize(crb: np.ndarray, trace_r: float, mode: str) -> float:
    norm = np.sum(crb) / trace_r if mode == "trace" else float(np.mean(crb))
    return float(10 * np.log10(norm))


def bayesian_crb(cfg: SystemConfig, n_channel_draws: int | None = None, rng: np.random.Generator | None = None) -> BimResult:
    """Bayesian CRB of ``vec(H')`` for the configured operating point.

    The data information is averaged over channel draws from the prior.  The
    data model is block diagonal across antennas and every antenna sees the
    same marginal channel distribution, so ``J^D`` is averaged per antenna and
    reused for all antennas.  For ``M >= 2`` the moment bound is used, which
    makes the result an upper bound on the true Bayesian CRB.

    With receive correlation the prior differs per draw (random phases); the
    bound is then averaged over the drawn priors.
    """
    n_draws = cfg.n_channel_draws if n_channel_draws is None else int(n_channel_draws)
    if n_draws < 1:
        raise ValueError("need at least one channel draw")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    fb = filter_bank(cfg.rolloff, cfg.m, cfg.filter_span(cfg.tau), cfg.tau)
    b = fb.z_sel @ _crb_pilots(cfg, rng)
    n_t, n_r = cfg.n_t, cfg.n_r

    draws = [draw_channel(cfg, rng) for _ in range(n_draws)]
    h_rows = np.concatenate([d.h_matrix for d in draws])  # rows are per-antenna channels
    j_ant = _antenna_data_info(b, h_rows, fb, cfg.sigma2, cfg.m)

    if cfg.rho_mag == 0:
        j_tot = j_ant + bim_prior(np.eye(n_t))
        jc = complex_bim(j_tot)
        if cfg.crb_average == "bound":
            # per-draw bounds averaged afterwards (no longer a Bayesian bound)
            prior = bim_prior(np.eye(n_t))
            per_ant = np.zeros(n_t)
            for h in h_rows:
                jd = _antenna_data_info(b, h[None, :], fb, cfg.sigma2, cfg.m)
                per_ant += np.real(np.diag(np.linalg.inv(complex_bim(jd + prior))))
            per_ant /= len(h_rows)
        else:
            per_ant = np.real(np.diag(np.linalg.inv(jc)))
        crb = np.repeat(per_ant, n_r)  # index j*n_r + r
        j_out, jc_out, trace_r = j_tot, jc, float(n_t * n_r)
    else:
        p = n_t * n_r
        j_data = np.zeros((2 * p, 2 * p))
        for r in range(n_r):
            sel = np.concatenate([np.arange(n_t) * n_r + r, np.arange(n_t) * n_r + r + p])
            j_data[np.ix_(sel, sel)] = j_ant
        crb = np.zeros(p)
        for d in draws:
            j_out = j_data + bim_prior(d.r_h)
            jc_out = complex_bim(j_out)
            crb += np.real(np.diag(np.linalg.inv(jc_out)))
        crb /= n_draws
        trace_r = float(np.mean([np.real(np.trace(d.r_h)) for d in draws]))
    if np.any(crb <= 0) or not np.all(np.isfinite(crb)):
        raise FloatingPointError("bound diagonal is not positive and finite")
    return BimResult(j_out, jc_out, crb, cfg.m >= 2, _normalize(crb, trace_r, cfg.crb_norm))


# ----------------------------------------------------------------------------
# bias-aware bound


def _lra_ls_adaptive(y_q, y_u, pilots, fb, cfg):
    r_hat = estimate_rh_adaptive(y_q, pilots, fb, cfg.lam)
    est = LraLS(cfg.m, cfg.rolloff, cfg.span or None, cfg.sigma2).fit(pilots)
    return est.predict(y_q, r_h=r_hat)


def _lra_ls_known(y_q, y_u, pilots, fb, cfg):
    return LraLS(cfg.m, cfg.rolloff, cfg.span or None, cfg.sigma2).fit(pilots).predict(y_q)


def _unquantized_ls(y_q, y_u, pilots, fb, cfg):
    return make_estimator("standard_ls", cfg).fit(pilots).predict(y_u)


@dataclass(frozen=True)
class BiasEstimator:
    """Estimator under test ``fn(y_q, y_u, pilots, fb, cfg) -> vec(H')``.

    ``antenna_local`` declares that the estimate on antenna ``r`` depends only
    on the samples of antenna ``r``; ``quantized_only`` declares that ``y_u``
    is ignored.  Both allow exact shortcuts in the finite differences.
    """

    fn: Callable
    antenna_local: bool = False
    quantized_only: bool = False


BIAS_ESTIMATORS: dict[str, BiasEstimator] = {
    "lra_ls_adaptive": BiasEstimator(_lra_ls_adaptive, True, True),
    "lra_ls": BiasEstimator(_lra_ls_known, True, True),
    "unquantized_ls": BiasEstimator(_unquantized_ls, True, False),
}


@dataclass(frozen=True)
class BiasGradient:
    """Finite-difference gradient ``d E{Re h_hat} / d Re h`` on selected coefficients."""

    real: np.ndarray
    real_stderr: np.ndarray
    imag: np.ndarray
    imag_stderr: np.ndarray
    coeffs: np.ndarray
    h: np.ndarray


def numerical_bias_gradient(estimator, cfg: SystemConfig, delta: float | None = None,
                            n_realizations: int | None = None, rng: np.random.Generator | None = None,
                            coeffs=None, h=None) -> BiasGradient:
    """Finite-difference Jacobian of the estimator mean.

    Column ``i`` is ``(E{h_hat(h + delta e_i)} - E{h_hat(h)}) / delta``, with
    the same noise and pilot draws used for the base and perturbed channels
    (common random numbers).  Real and imaginary perturbations are handled
    separately; only the coefficients in ``coeffs`` (default: the first
    ``n_r``) are perturbed and read out.
    """
    delta = cfg.bias_delta if delta is None else float(delta)
    n_real = cfg.bias_realizations if n_realizations is None else int(n_realizations)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if n_real < 2:
        raise ValueError("need at least two realizations")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    est = BIAS_ESTIMATORS[estimator] if isinstance(estimator, str) else estimator
    if not isinstance(est, BiasEstimator):
        est = BiasEstimator(est)
    n_t, n_r = cfg.n_t, cfg.n_r
    coeffs = np.arange(cfg.bias_coeffs or n_r) if coeffs is None else np.asarray(coeffs)
    fb = filter_bank(cfg.rolloff, cfg.m, cfg.filter_span(cfg.tau), cfg.tau)
    if h is None:
        h = draw_channel(cfg, rng).h_vec
    h = np.asarray(h, dtype=complex)
    hm = h.reshape(n_t, n_r).T
    k = len(coeffs)
    ant = coeffs % n_r
    perts = [(c, part) for part in (delta, 1j * delta) for c in coeffs]

    diffs = np.zeros((n_real, 2, k, k))
    for t in range(n_real):
        x = _crb_pilots(cfg, rng)
        noise = synthesize_noise(fb, cfg.sigma2, rng, n_r=n_r).reshape(n_r, -1)
        b = fb.z_sel @ x
        y_u = hm @ b.T + noise
        y_q = quantize_1bit(y_u)
        base = np.asarray(est.fn(y_q, y_u, x, fb, cfg))
        for p_idx, (c, step) in enumerate(perts):
            col, part = p_idx % k, p_idx // k
            j, r = divmod(int(c), n_r)
            if est.antenna_local:
                y_u_r = y_u[r:r + 1] + step * b[:, j][None, :]
                y_q_r = quantize_1bit(y_u_r)
                if est.quantized_only and np.array_equal(y_q_r, y_q[r:r + 1]):
                    continue
                sub = np.asarray(est.fn(y_q_r, y_u_r, x, fb, cfg))
                rows = np.flatnonzero(ant == r)
                d = sub[coeffs[rows] // n_r] - base[coeffs[rows]]
            else:
                y_u_p = y_u.copy()
                y_u_p[r] += step * b[:, j]
                rows = slice(None)
                d = np.asarray(est.fn(quantize_1bit(y_u_p), y_u_p, x, fb, cfg))[coeffs] - base[coeffs]
            diffs[t, part, rows, col] = (d.real if part == 0 else d.imag) / delta
    diffs_re, diffs_im = diffs[:, 0], diffs[:, 1]
    se = lambda a: a.std(axis=0, ddof=1) / np.sqrt(n_real)  # noqa: E731
    return BiasGradient(diffs_re.mean(0), se(diffs_re), diffs_im.mean(0), se(diffs_im), coeffs, h)


@dataclass(frozen=True)
class GeneralCrbResult:
    """Bias-aware bound on the selected coefficients."""

    bound_diag: np.ndarray
    nmse_db: float
    gradient: BiasGradient
    regularized: bool


def general_crb(estimator, cfg: SystemConfig, rng: np.random.Generator | None = None,
                gradient: BiasGradient | None = None) -> GeneralCrbResult:
    """``B (J^{D,RR})^{-1} B^T`` plus the imaginary analogue on the first ``n_r`` coefficients.

    ``J^D`` is evaluated at the channel used for the gradient; the exact form
    is used for ``M = 1`` and the moment bound otherwise.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    g = numerical_bias_gradient(estimator, cfg, rng=rng) if gradient is None else gradient
    fb = filter_bank(cfg.rolloff, cfg.m, cfg.filter_span(cfg.tau), cfg.tau)
    x = _crb_pilots(cfg, np.random.default_rng(cfg.seed))
    b = fb.z_sel @ x
    n_t, n_r = cfg.n_t, cfg.n_r
    p = n_t
    hm = g.h.reshape(n_t, n_r)
    inv_rr = np.zeros((n_t * n_r, n_t * n_r))
    inv_ii = np.zeros((n_t * n_r, n_t * n_r))
    regularized = False
    c_n = cfg.sigma2 * np.asarray(fb.gram)
    for r in range(n_r):
        if cfg.m == 1:
            j = bim_data_exact_m1(b, hm[:, r], cfg.sigma2)
        else:
            j = bim_data_moment_bound(b, hm[:, r], c_n)
        idx = np.arange(n_t) * n_r + r
        for blk, out in ((j[:p, :p], inv_rr), (j[p:, p:], inv_ii)):
            try:
                inv = np.linalg.inv(blk)
            except np.linalg.LinAlgError:
                inv = np.linalg.pinv(blk)
                regularized = True
            out[np.ix_(idx, idx)] = inv
    # J^D is block diagonal across antennas, so the inverse restricted to the
    # selected coefficients is the matching sub-block of the per-antenna inverses
    sel = np.ix_(g.coeffs, g.coeffs)
    bound = (np.einsum("ik,kl,il->i", g.real, inv_rr[sel], g.real)
             + np.einsum("ik,kl,il->i", g.imag, inv_ii[sel], g.imag))
    return GeneralCrbResult(bound, float(10 * np.log10(np.mean(bound))), g, regularized)
