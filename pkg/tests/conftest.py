import numpy as np
import pytest

from onebit_mimo.config import SystemConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_cfg():
    """Small white-channel scenario that runs in milliseconds."""
    return SystemConfig(n_t=2, n_r=4, m=2, m_grid=(1, 2), tau=8, tau_grid=(8, 16), snr_db=10.0,
                        snr_db_grid=(0.0, 10.0), trials=20, n_channel_draws=5, bias_realizations=50,
                        data_len=20, ser_blocks=2, n_r_grid=(4, 8))


def random_psd(rng, n, complex_=True):
    a = rng.standard_normal((n, n)) + (1j * rng.standard_normal((n, n)) if complex_ else 0)
    c = a @ a.conj().T / n + 0.1 * np.eye(n)
    return (c + c.conj().T) / 2


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
