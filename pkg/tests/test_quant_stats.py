import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate
from scipy.stats import multivariate_normal

from onebit_mimo.quant_stats import (
    arcsin_covariance,
    bussgang_gain,
    bussgang_stats,
    bvn_cdf,
    orthant_prob,
    pilot_received_covariance,
    qfunc,
)
from onebit_mimo.quantizer import quantize_1bit
from onebit_mimo.waveform import build_pilot_matrix, filter_bank, orthogonal_pilots, pilots_to_vector, synthesize_noise

from conftest import crandn, random_psd


def test_qfunc_values():
    assert qfunc(0.0) == 0.5
    assert qfunc(-8.0) == pytest.approx(1.0, abs=1e-14)
    x = np.linspace(-6, 6, 41)
    np.testing.assert_allclose(qfunc(x) + qfunc(-x), 1.0, atol=1e-14)
    ref, _ = integrate.quad(lambda t: np.exp(-t * t / 2) / np.sqrt(2 * np.pi), 1.0, np.inf, epsabs=1e-14)
    assert qfunc(1.0) == pytest.approx(ref, abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(h=st.floats(-6, 6), k=st.floats(-6, 6), r=st.floats(-0.999, 0.999))
def test_bvn_cdf_matches_scipy(h, k, r):
    ref = multivariate_normal(mean=[0, 0], cov=[[1, r], [r, 1]]).cdf([h, k])
    assert bvn_cdf(h, k, r) == pytest.approx(ref, abs=2e-7)


def test_bvn_cdf_high_accuracy_points():
    from scipy.special import owens_t
    from scipy.stats import norm
    # closed form through Owen's T for h = k
    for h, r in [(0.3, 0.5), (-1.2, 0.95), (2.0, -0.97), (0.0, 0.99), (1.0, -0.5)]:
        a = np.sqrt((1 - r) / (1 + r))
        ref = norm.cdf(h) - 2 * owens_t(h, a)
        assert bvn_cdf(h, h, r) == pytest.approx(ref, abs=1e-12)
    # degenerate correlations: Y = X and Y = -X
    assert bvn_cdf(0.5, -0.3, 1.0) == pytest.approx(norm.cdf(-0.3), abs=1e-14)
    assert bvn_cdf(0.5, 0.2, -1.0) == pytest.approx(norm.cdf(0.5) - norm.cdf(-0.2), abs=1e-14)


@pytest.mark.parametrize("rho", [0.0, 0.5, -0.5])
def test_orthant_zero_mean(rho):
    assert orthant_prob([0, 0], [[1, rho], [rho, 1]]) == pytest.approx(0.25 + np.arcsin(rho) / (2 * np.pi), abs=1e-14)


def test_orthant_independent_factorizes():
    mu, s = np.array([0.4, -1.1]), np.array([2.0, 0.5])
    p = orthant_prob(mu, np.diag(s**2))
    assert p == pytest.approx(qfunc(-mu[0] / s[0]) * qfunc(-mu[1] / s[1]), abs=1e-14)


def test_orthant_monte_carlo():
    rng = np.random.default_rng(5)
    mean, cov = np.array([0.3, -0.2]), np.array([[1.0, 0.6], [0.6, 1.0]])
    n = 10_000_000
    z = rng.multivariate_normal(mean, cov, size=n)
    hits = np.mean((z[:, 0] > 0) & (z[:, 1] > 0))
    p = orthant_prob(mean, cov)
    assert abs(hits - p) < 3 * np.sqrt(p * (1 - p) / n)


def test_orthant_rejects_bad_covariance():
    with pytest.raises(ValueError):
        orthant_prob([0, 0], [[1, 2], [2, 1]])
    with pytest.raises(ValueError):
        orthant_prob([0, 0], [[1, 0.1], [0.2, 1]])


def test_bussgang_gain_examples():
    k, a = bussgang_gain(np.eye(3))
    np.testing.assert_allclose(a, np.sqrt(2 / np.pi))
    k, a = bussgang_gain(4 * np.eye(3))
    np.testing.assert_allclose(a, np.sqrt(2 / np.pi) / 2)
    np.testing.assert_allclose(k, 0.5)


def test_arcsin_examples():
    np.testing.assert_allclose(arcsin_covariance(np.eye(4)), np.eye(4), atol=1e-15)
    c = np.array([[1.0, 0.5], [0.5, 1.0]])
    assert arcsin_covariance(c)[0, 1] == pytest.approx(1 / 3, abs=1e-15)


def test_arcsin_clamp_rule():
    c = np.array([[1.0, 1.0 + 5e-13], [1.0 + 5e-13, 1.0]])
    out = arcsin_covariance(c)
    assert out[0, 1].real == pytest.approx(1.0)
    with pytest.raises(ValueError):
        arcsin_covariance(np.array([[1.0, 1.0 + 1e-9], [1.0 + 1e-9, 1.0]]))


def test_arcsin_monotone_in_correlation():
    rs = np.linspace(-1, 1, 101)
    vals = [arcsin_covariance(np.array([[1, r], [r, 1]]))[0, 1].real for r in rs]
    assert np.all(np.diff(vals) > 0)


@pytest.mark.parametrize("seed", range(3))
def test_arcsin_and_bussgang_sampling(seed):
    rng = np.random.default_rng(seed)
    n_dim, n = 4, 1_000_000
    c = random_psd(rng, n_dim) * rng.uniform(0.5, 3.0)
    y = crandn(rng, n, n_dim) @ np.linalg.cholesky(c).T
    q = quantize_1bit(y)
    emp_q = q.T @ q.conj() / n
    # |q_i q_j^*| = 1, so the std error of each entry is at most 1/sqrt(n)
    assert np.max(np.abs(emp_q - arcsin_covariance(c))) < 4 / np.sqrt(n)
    _, a = bussgang_gain(c)
    cross = q.T @ y.conj() / n
    prod = q[:, :, None] * y.conj()[:, None, :]
    se = np.sqrt(prod.real.var(axis=0) + prod.imag.var(axis=0)) / np.sqrt(n)
    assert np.all(np.abs(cross - a[:, None] * c) < 4 * se)


def test_pilot_covariance_identities(rng):
    fb = filter_bank(0.8, 2, 4, 4)
    phi = build_pilot_matrix(np.zeros(8), fb, 2, 3, 4)
    c = pilot_received_covariance(phi, np.eye(6), fb, 0.3)
    np.testing.assert_allclose(c, 0.3 * np.kron(np.eye(3), fb.gram))
    fb1 = filter_bank(0.8, 1, 4, 4)
    phi1 = build_pilot_matrix(np.zeros(8), fb1, 2, 3, 4)
    np.testing.assert_allclose(pilot_received_covariance(phi1, np.eye(6), fb1, 0.3), 0.3 * np.eye(12), atol=1e-12)


def test_pilot_covariance_sampling():
    rng = np.random.default_rng(9)
    n_t, n_r, tau, m, s2 = 2, 2, 4, 2, 0.5
    fb = filter_bank(0.8, m, tau, tau)
    phi = build_pilot_matrix(pilots_to_vector(orthogonal_pilots(tau, n_t)), fb, n_t, n_r, tau)
    r_h = random_psd(rng, n_t * n_r)
    n = 100_000
    h = crandn(rng, n, n_t * n_r) @ np.linalg.cholesky(r_h).T
    y = h @ phi.T + synthesize_noise(fb, s2, rng, n_r=n_r, size=n)
    emp = y.T @ y.conj() / n
    c = pilot_received_covariance(phi, r_h, fb, s2)
    se = np.sqrt(np.outer(np.diag(c).real, np.diag(c).real)) / np.sqrt(n)
    assert np.all(np.abs(emp - c) < 4 * se)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 3), snr=st.floats(-10, 30))
def test_bussgang_stats_invariants(seed, m, snr):
    rng = np.random.default_rng(seed)
    n_t, n_r, tau = 2, 2, 4
    fb = filter_bank(0.8, m, tau, tau)
    phi = build_pilot_matrix(pilots_to_vector(crandn(rng, tau, n_t)), fb, n_t, n_r, tau)
    st_ = bussgang_stats(phi, random_psd(rng, n_t * n_r), fb, n_t / 10 ** (snr / 10))
    for mat in (st_.c_yp, st_.c_yq, st_.c_nq):
        np.testing.assert_allclose(mat, mat.conj().T, atol=1e-12)
    w = np.linalg.eigvalsh(st_.c_yp)
    assert w[0] >= -1e-8 * w[-1]
    np.testing.assert_allclose(np.diag(st_.c_yq), 1.0, atol=1e-12)
    assert np.linalg.eigvalsh(st_.c_yq)[0] >= -1e-8
    assert np.linalg.eigvalsh(st_.c_nq)[0] >= -1e-8
    np.testing.assert_allclose(st_.a_p, np.sqrt(2 / np.pi) * st_.k_diag)
    assert np.all(st_.a_p > 0)
    np.testing.assert_allclose(st_.phi_tilde, st_.a_p[:, None] * phi)
