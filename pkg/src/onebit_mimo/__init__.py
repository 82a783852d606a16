"""1-bit oversampled massive MIMO channel estimation toolkit.

Modules
-------
waveform      pulse shaping, filter matrices, pilot matrices, filtered noise
quantizer     1-bit quantization and QPSK mapping
quant_stats   Bussgang gain, arcsin law, orthant probabilities
channel       correlated Rayleigh channels, recursive covariance estimate
estimators    LS, LRA-LS, LRA-LMMSE, LRA-LMS and reference estimators
detector      sliding-window Bussgang LMMSE detection and SER
bounds        Bayesian and bias-aware Cramer-Rao bounds
costs         operation counts and receiver power
harness       Monte Carlo experiments and result files
"""

from .config import ConfigError, SystemConfig, resolve_config
from .estimators import (
    LraLMMSE,
    LraLMS,
    LraLS,
    SimplifiedLMMSE,
    StandardLS,
    UnquantizedLMMSE,
    make_estimator,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "SystemConfig",
    "resolve_config",
    "StandardLS",
    "LraLS",
    "LraLMMSE",
    "SimplifiedLMMSE",
    "UnquantizedLMMSE",
    "LraLMS",
    "make_estimator",
]
