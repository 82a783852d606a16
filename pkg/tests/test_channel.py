import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from onebit_mimo.channel import (
    draw_channel,
    empirical_bias_check,
    estimate_rh_adaptive,
    instantaneous_estimates,
    psd_sqrt,
    receive_correlation,
    simulate_quantized_pilots,
)
from onebit_mimo.config import SystemConfig
from onebit_mimo.waveform import PulseSpec, filter_bank, random_qpsk_pilots


def test_receive_correlation_examples():
    np.testing.assert_array_equal(receive_correlation(0.0, 4), np.eye(4))
    np.testing.assert_allclose(receive_correlation(1.0, 4), np.ones((4, 4)))
    rho = 0.75 * np.exp(0.4j)
    r = receive_correlation(rho, 5)
    assert r[1, 3] == pytest.approx(rho**2)
    assert r[3, 1] == pytest.approx(np.conj(rho) ** 2)
    with pytest.raises(ValueError):
        receive_correlation(1.5, 3)


@settings(max_examples=50, deadline=None)
@given(mag=st.floats(0, 0.999), phase=st.floats(0, 2 * np.pi), n=st.integers(1, 16))
def test_receive_correlation_hermitian_psd(mag, phase, n):
    r = receive_correlation(mag * np.exp(1j * phase), n)
    np.testing.assert_allclose(r, r.conj().T, atol=1e-15)
    np.testing.assert_allclose(np.diag(r), 1.0)
    assert np.linalg.eigvalsh(r)[0] >= -1e-10
    s = psd_sqrt(r)
    np.testing.assert_allclose(s @ s, r, atol=1e-8)


def test_draw_channel_structure():
    cfg = SystemConfig(n_t=3, n_r=5, rho_mag=0.75)
    ch = draw_channel(cfg, np.random.default_rng(0))
    assert ch.h_matrix.shape == (5, 3)
    for j, blk in enumerate(ch.blocks):
        np.testing.assert_allclose(blk, receive_correlation(0.75 * np.exp(1j * ch.rho_phases[j]), 5))
    off = ch.r_h.copy()
    for j in range(3):
        off[j * 5:(j + 1) * 5, j * 5:(j + 1) * 5] = 0
    assert np.count_nonzero(off) == 0
    np.testing.assert_allclose(ch.h_vec, ch.h_matrix.T.reshape(-1))


def test_white_channel_covariance():
    cfg = SystemConfig(n_t=2, n_r=3)
    rng = np.random.default_rng(1)
    n = 10_000
    h = np.array([draw_channel(cfg, rng).h_vec for _ in range(n)])
    emp = h.T @ h.conj() / n
    assert np.max(np.abs(emp - np.eye(6))) < 4 / np.sqrt(n)


def test_correlated_channel_covariance():
    cfg = SystemConfig(n_t=1, n_r=4, rho_mag=0.75)
    rng = np.random.default_rng(2)
    n = 10_000
    acc = np.zeros((4, 4), dtype=complex)
    for _ in range(n):
        ch = draw_channel(cfg, rng)
        # R(phi) = D R(0) D^H with D = diag(e^{-j k phi}); undo D to compare with R(0)
        h = np.exp(1j * np.arange(4) * ch.rho_phases[0]) * ch.h_matrix[:, 0]
        acc += np.outer(h, h.conj())
    emp = acc / n
    target = receive_correlation(0.75, 4)
    se = 1 / np.sqrt(n)
    assert np.max(np.abs(emp - target)) < 4 * se


def test_adaptive_covariance_limits():
    spec = PulseSpec(0.8, 2, 6)
    fb = filter_bank(0.8, 2, 6, 6)
    rng = np.random.default_rng(4)
    pilots = random_qpsk_pilots(6, 2, rng)
    h = (rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))) / np.sqrt(2)
    y_q = simulate_quantized_pilots(h, pilots, fb, 0.1, rng)
    np.testing.assert_allclose(estimate_rh_adaptive(y_q, pilots, fb, 1 - 1e-15), np.eye(6), atol=1e-12)
    h1 = instantaneous_estimates(y_q, pilots, spec, 1)[0]
    np.testing.assert_allclose(estimate_rh_adaptive(y_q, pilots, spec, 0.0, n_steps=1), np.outer(h1, h1.conj()), atol=1e-12)
    r = estimate_rh_adaptive(y_q, pilots, fb, 0.9)
    np.testing.assert_allclose(r, r.conj().T, atol=1e-14)
    assert np.linalg.eigvalsh(r)[0] >= -1e-10
    with pytest.raises(ValueError):
        estimate_rh_adaptive(y_q, pilots, fb, 1.0)


def test_instantaneous_estimates_noiseless_unquantized():
    spec = PulseSpec(0.8, 3, 4)
    fb = filter_bank(0.8, 3, 4, 4)
    rng = np.random.default_rng(8)
    pilots = random_qpsk_pilots(4, 1, rng)
    h = np.array([[0.3 - 0.2j], [1.1 + 0.4j]])
    # single symbol blocks have no inter-symbol interference
    y = simulate_quantized_pilots(h, pilots[:1], filter_bank(0.8, 3, 4, 1), 0.0, rng, quantize=False)
    est = instantaneous_estimates(y, pilots[:1], spec)
    np.testing.assert_allclose(est[0], h[:, 0], atol=1e-12)
    assert fb.block_len == 4


def test_empirical_bias_shrinks_at_low_snr():
    cfg = SystemConfig(n_t=2, n_r=2, m=2, snr_db=-30.0)
    rep = empirical_bias_check(cfg, 2000, np.random.default_rng(0))
    assert np.all(np.isfinite(rep.matrix))
    d = np.real(np.diag(rep.matrix))
    assert np.all(d < 1) and rep.deviation > 0
    hi = empirical_bias_check(cfg.at(snr_db=40.0), 2000, np.random.default_rng(0))
    assert np.all(np.isfinite(hi.matrix))


def test_empirical_bias_seed_stability():
    cfg = SystemConfig(n_t=2, n_r=2, m=2, snr_db=0.0)
    a = empirical_bias_check(cfg, 10_000, np.random.default_rng(1)).deviation
    b = empirical_bias_check(cfg, 10_000, np.random.default_rng(2)).deviation
    assert abs(a - b) <= 0.2 * max(a, b)
