import numpy as np
import pytest
from scipy.stats import norm

from onebit_mimo.bounds import (
    BIAS_ESTIMATORS,
    BiasGradient,
    BiasEstimator,
    bayesian_crb,
    bim_data_exact_m1,
    bim_data_moment_bound,
    bim_prior,
    complex_bim,
    general_crb,
    numerical_bias_gradient,
)
from onebit_mimo.channel import receive_correlation
from onebit_mimo.config import SystemConfig
from onebit_mimo.quantizer import quantize_1bit
from onebit_mimo.waveform import filter_bank, orthogonal_pilots

from conftest import crandn


def test_prior_information():
    np.testing.assert_allclose(bim_prior(np.eye(3)), 4 * np.eye(6))
    r = receive_correlation(0.75 * np.exp(0.3j), 4)
    jp = bim_prior(r)
    np.testing.assert_allclose(jp[:4, 4:], -jp[4:, :4], atol=1e-12)  # real/imag block pattern
    want = np.sort(np.repeat(4 / np.linalg.eigvalsh(r), 2))
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(jp)), want, rtol=1e-10)
    r_real = receive_correlation(0.5, 3)
    jp = bim_prior(r_real)
    np.testing.assert_allclose(jp[:3, 3:], 0, atol=1e-12)


def test_exact_scalar_case():
    j = bim_data_exact_m1(np.array([[1.0 + 0j]]), np.zeros(2), 1.0)
    np.testing.assert_allclose(j, 4 / np.pi * np.eye(2), atol=1e-14)


def test_exact_vanishes_with_noise():
    rng = np.random.default_rng(0)
    phi, h = crandn(rng, 6, 2), crandn(rng, 2)
    traces = [np.trace(bim_data_exact_m1(phi, h, s2)) for s2 in (1e2, 1e4, 1e6)]
    assert traces[0] > traces[1] > traces[2]
    assert traces[2] * 1e6 == pytest.approx(traces[1] * 1e4, rel=1e-2)


def test_exact_large_argument_is_finite():
    j = bim_data_exact_m1(np.array([[50.0 + 0j]]), np.array([1.0 + 1.0j]), 1e-4)
    assert np.all(np.isfinite(j))


def _score(phi, h, s2, y_q):
    """Per-draw score of ln p(y_Q | h) in the real parameterization, white noise; ``y_q`` is (n, K)."""
    s = np.sqrt(s2 / 2)
    m = phi @ h
    d_re = np.hstack([phi.real, -phi.imag])
    d_im = np.hstack([phi.imag, phi.real])
    out = 0
    for mean, d, q in ((m.real, d_re, np.sign(y_q.real)), (m.imag, d_im, np.sign(y_q.imag))):
        u = q * mean / s
        out = out + (q * norm.pdf(u) / norm.cdf(u) / s) @ d
    return out


def test_score_covariance_matches_information():
    rng = np.random.default_rng(1)
    phi, h, s2 = crandn(rng, 4, 2), crandn(rng, 2), 0.8
    n = 100_000
    y = phi @ h + np.sqrt(s2) * crandn(rng, n, 4)
    y_q = quantize_1bit(y)
    scores = _score(phi, h, s2, y_q)
    mean = scores.mean(axis=0)
    assert np.all(np.abs(mean) < 3 * scores.std(axis=0) / np.sqrt(n) + 1e-12)
    outer = scores[:, :, None] * scores[:, None, :]
    emp = outer.mean(axis=0)
    se = outer.std(axis=0) / np.sqrt(n)
    j = bim_data_exact_m1(phi, h, s2)
    assert np.all(np.abs(emp - j) < 3.5 * se + 1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_moment_bound_equals_exact_for_white_noise(seed):
    rng = np.random.default_rng(seed)
    k, p = rng.integers(1, 9), rng.integers(1, 5)
    phi, h, s2 = crandn(rng, k, p), crandn(rng, p), rng.uniform(0.05, 5)
    exact = bim_data_exact_m1(phi, h, s2)
    moment = bim_data_moment_bound(phi, h, s2 * np.eye(k))
    np.testing.assert_allclose(moment, exact, atol=1e-6 * max(1.0, np.abs(exact).max()))


def test_zero_mean_closed_form():
    rng = np.random.default_rng(3)
    phi, s2 = crandn(rng, 5, 2), 0.7
    d_re = np.hstack([phi.real, -phi.imag])
    d_im = np.hstack([phi.imag, phi.real])
    want = 2 / np.pi * 2 / s2 * (d_re.T @ d_re + d_im.T @ d_im)
    np.testing.assert_allclose(bim_data_moment_bound(phi, np.zeros(2, complex), s2 * np.eye(5)), want, atol=1e-12)


def test_moment_bound_psd_with_correlated_noise():
    rng = np.random.default_rng(4)
    fb = filter_bank(0.8, 3, 4, 4)
    phi = fb.z_sel @ crandn(rng, 4, 2)
    for s2 in (0.1, 1.0, 10.0):
        j = bim_data_moment_bound(phi, crandn(rng, 2), s2 * fb.gram)
        np.testing.assert_allclose(j, j.T, atol=1e-12)
        assert np.linalg.eigvalsh(j)[0] >= -1e-8
    with pytest.raises(ValueError):
        bim_data_moment_bound(phi, crandn(rng, 2), np.eye(3))


def test_information_grows_with_snr():
    rng = np.random.default_rng(5)
    phi, h = crandn(rng, 12, 2), crandn(rng, 2)
    tr = [np.trace(bim_data_exact_m1(phi, h, 2 / 10 ** (s / 10))) for s in (-5, 0, 5, 10, 15, 20)]
    assert np.all(np.diff(tr) > 0)


def test_complex_bim_hermitian():
    rng = np.random.default_rng(6)
    a = rng.standard_normal((6, 6))
    jc = complex_bim(a @ a.T)
    np.testing.assert_allclose(jc, jc.conj().T, atol=1e-10)
    np.testing.assert_allclose(complex_bim(4 * np.eye(6)), 2 * np.eye(3))


@pytest.mark.parametrize("m,rho", [(1, 0.0), (2, 0.0), (1, 0.5)])
def test_bayesian_crb_positive(m, rho):
    cfg = SystemConfig(n_t=2, n_r=3, m=m, tau=4, snr_db=5.0, rho_mag=rho, n_channel_draws=4)
    res = bayesian_crb(cfg, rng=np.random.default_rng(0))
    assert np.all(res.crb_diag > 0) and res.crb_diag.size == 6
    assert res.is_upper_bound == (m >= 2)
    assert np.isfinite(res.nmse_db)
    np.testing.assert_allclose(res.j_real, res.j_real.T, atol=1e-8)


def test_bayesian_crb_lower_with_more_snr():
    cfg = SystemConfig(n_t=2, n_r=2, m=1, tau=4, n_channel_draws=20)
    lo = bayesian_crb(cfg.at(snr_db=0.0), rng=np.random.default_rng(0)).nmse_db
    hi = bayesian_crb(cfg.at(snr_db=10.0), rng=np.random.default_rng(0)).nmse_db
    assert hi < lo < 0


def test_bias_gradient_antenna_shortcut_matches_generic():
    cfg = SystemConfig(n_t=2, n_r=3, m=2, tau=4, snr_db=0.0)
    est = BIAS_ESTIMATORS["lra_ls_adaptive"]
    h = crandn(np.random.default_rng(7), 6)
    a = numerical_bias_gradient(est, cfg, n_realizations=10, rng=np.random.default_rng(1), h=h)
    b = numerical_bias_gradient(BiasEstimator(est.fn), cfg, n_realizations=10, rng=np.random.default_rng(1), h=h)
    np.testing.assert_allclose(a.real, b.real, atol=1e-12)
    np.testing.assert_allclose(a.imag, b.imag, atol=1e-12)


def test_unquantized_gradient_is_identity():
    cfg = SystemConfig(n_t=2, n_r=3, m=2, tau=4, snr_db=0.0)
    g = numerical_bias_gradient("unquantized_ls", cfg, n_realizations=20, rng=np.random.default_rng(2))
    np.testing.assert_allclose(g.real, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(g.imag, np.eye(3), atol=1e-10)


def test_bias_gradient_step_halving():
    cfg = SystemConfig(n_t=2, n_r=2, m=1, tau=8, snr_db=0.0)
    h = crandn(np.random.default_rng(9), 4)
    a = numerical_bias_gradient("lra_ls", cfg, delta=0.1, n_realizations=4000, rng=np.random.default_rng(3), h=h)
    b = numerical_bias_gradient("lra_ls", cfg, delta=0.05, n_realizations=4000, rng=np.random.default_rng(4), h=h)
    tol = 4 * np.hypot(a.real_stderr, b.real_stderr) + 0.05
    assert np.all(np.abs(a.real - b.real) < tol)


def test_general_crb_identity_gradient():
    cfg = SystemConfig(n_t=2, n_r=3, m=1, tau=4, snr_db=5.0)
    h = crandn(np.random.default_rng(10), 6)
    coeffs = np.arange(6)
    eye = np.eye(6)
    g = BiasGradient(eye, np.zeros((6, 6)), eye, np.zeros((6, 6)), coeffs, h)
    res = general_crb("unquantized_ls", cfg, gradient=g)
    fb = filter_bank(cfg.rolloff, 1, cfg.tau, cfg.tau)
    b = fb.z_sel @ orthogonal_pilots(cfg.tau, cfg.n_t)
    hm = h.reshape(2, 3)
    want = np.zeros(6)
    for r in range(3):
        j = bim_data_exact_m1(b, hm[:, r], cfg.sigma2)
        d = np.diag(np.linalg.inv(j[:2, :2])) + np.diag(np.linalg.inv(j[2:, 2:]))
        want[np.arange(2) * 3 + r] = d
    np.testing.assert_allclose(res.bound_diag, want, rtol=1e-10)
