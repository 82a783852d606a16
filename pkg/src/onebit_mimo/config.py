"""Scenario configuration, presets and the flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "ConfigError",
    "SystemConfig",
    "ESTIMATORS",
    "PRESETS",
    "load_config_file",
    "parse_config_text",
    "resolve_config",
]

ESTIMATORS = ("lra_lmmse", "lra_ls", "standard_ls", "lra_lms", "simplified_lmmse", "unquantized_lmmse")

# LMS step size per oversampling factor (convergence-figure values)
DEFAULT_MU = {1: 0.3, 2: 0.18, 3: 0.12}


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def _tuple_of(kind):
    def conv(value):
        if isinstance(value, str):
            parts = [p for p in value.replace(";", ",").split(",") if p.strip()]
            return tuple(kind(p.strip()) for p in parts)
        if np.isscalar(value):
            return (kind(value),)
        return tuple(kind(v) for v in value)

    return conv


def _bool(value):
    if isinstance(value, str):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    return bool(value)


def _mu_table(value):
    """Accept ``0.2`` (all M) or ``1:0.3,2:0.18``."""
    if isinstance(value, dict):
        return {int(k): float(v) for k, v in value.items()}
    if isinstance(value, (int, float)):
        return {0: float(value)}
    text = str(value).strip()
    if ":" not in text:
        return {0: float(text)}
    out = {}
    for item in text.split(","):
        k, v = item.split(":")
        out[int(k)] = float(v)
    return out


@dataclass(frozen=True)
class SystemConfig:
    """All scenario parameters of one experiment.

    ``m`` and ``snr_db`` describe the current operating point; the ``*_grid``
    fields describe sweeps.  ``SNR = 10 log10(n_t / sigma2)``.
    """

    n_t: int = 8
    n_r: int = 64
    m: int = 1
    m_grid: tuple = (1, 2, 3)
    tau: int = 20
    tau_grid: tuple = (10, 20, 30, 40, 50, 60, 70, 80)
    rolloff: float = 0.8
    span: int = 0  # one-sided filter support in symbols; 0 means "equal to the block length"
    snr_db: float = 20.0
    snr_db_grid: tuple = (-5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    rho_mag: float = 0.0
    l_win: int = 3
    mu: dict = field(default_factory=lambda: dict(DEFAULT_MU))
    lam: float = 0.99
    trials: int = 300
    seed: int = 0
    estimators: tuple = ("lra_lmmse", "lra_ls", "standard_ls", "lra_lms", "unquantized_lmmse")
    rh_mode: str = "known"
    pilot_design: str = "orthogonal"
    lms_pilot_design: str = "random"
    step_bound_form: str = "phi_h_phi"
    data_len: int = 100
    ser_blocks: int = 20
    perfect_csi: bool = False
    n_channel_draws: int = 100
    bias_delta: float = 0.1
    bias_realizations: int = 1000
    bias_coeffs: int = 0  # 0 means "first n_r coefficients"
    crb_norm: str = "trace"
    crb_average: str = "information"
    n_r_grid: tuple = (20, 30, 40, 50, 60, 70, 80, 90, 100)
    b_grid: tuple = (1, 2, 3, 4, 5)
    workers: int = 1

    _converters = {
        "n_t": int, "n_r": int, "m": int, "m_grid": _tuple_of(int), "tau": int,
        "tau_grid": _tuple_of(int), "rolloff": float, "span": int, "snr_db": float,
        "snr_db_grid": _tuple_of(float), "rho_mag": float, "l_win": int, "mu": _mu_table,
        "lam": float, "trials": int, "seed": int, "estimators": _tuple_of(str),
        "rh_mode": str, "pilot_design": str, "lms_pilot_design": str, "step_bound_form": str,
        "data_len": int, "ser_blocks": int, "perfect_csi": _bool, "n_channel_draws": int,
        "bias_delta": float, "bias_realizations": int, "bias_coeffs": int, "crb_norm": str,
        "crb_average": str, "n_r_grid": _tuple_of(int), "b_grid": _tuple_of(int), "workers": int,
    }

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_mapping(cls, values: dict[str, Any], base: "SystemConfig | None" = None) -> "SystemConfig":
        base = base or cls()
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - names)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        conv = {}
        for k, v in values.items():
            try:
                conv[k] = cls._converters[k](v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {k!r}: {v!r} ({exc})") from None
        try:
            return replace(base, **conv)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.n_t >= 1, "n_t must be >= 1")
        need(self.n_r >= self.n_t, "n_r must be >= n_t")
        need(self.m >= 1 and all(m >= 1 for m in self.m_grid), "oversampling factors must be >= 1")
        need(self.tau >= self.n_t, "tau must be >= n_t for orthogonal pilots")
        need(all(t >= self.l_win for t in self.tau_grid), "every tau in tau_grid must be >= l_win")
        need(0.0 <= self.rolloff <= 1.0, "rolloff must lie in [0, 1]")
        need(self.span >= 0, "span must be >= 0")
        need(0.0 <= self.rho_mag <= 1.0, "rho_mag must lie in [0, 1]")
        need(self.l_win >= 1 and self.l_win <= self.tau, "need 1 <= l_win <= tau")
        need(0.0 < self.lam < 1.0, "lam must lie in (0, 1)")
        need(self.trials >= 1, "trials must be >= 1")
        need(0 <= self.seed < 2**64, "seed must be an unsigned 64-bit integer")
        need(all(mu > 0 for mu in self.mu.values()), "step sizes must be positive")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        need(not bad, f"unknown estimator(s): {bad}; choose from {ESTIMATORS}")
        need(self.rh_mode in ("known", "adaptive"), "rh_mode must be 'known' or 'adaptive'")
        need(self.pilot_design in ("orthogonal", "dft", "random"), "pilot_design must be orthogonal, dft or random")
        need(self.lms_pilot_design in ("orthogonal", "dft", "random"), "lms_pilot_design must be orthogonal, dft or random")
        need(self.step_bound_form in ("phi_h_phi", "phi_phi_h"), "step_bound_form must be phi_h_phi or phi_phi_h")
        need(self.data_len >= 1 and self.ser_blocks >= 1, "data_len and ser_blocks must be >= 1")
        need(self.n_channel_draws >= 1, "n_channel_draws must be >= 1")
        need(self.bias_delta > 0 and self.bias_realizations >= 1, "bias_delta > 0 and bias_realizations >= 1")
        need(self.crb_norm in ("trace", "mean"), "crb_norm must be 'trace' or 'mean'")
        need(self.crb_average in ("information", "bound"), "crb_average must be 'information' or 'bound'")
        need(all(n >= self.n_t for n in self.n_r_grid), "every n_r in n_r_grid must be >= n_t")
        need(all(b >= 1 for b in self.b_grid), "ADC resolutions must be >= 1 bit")
        need(self.workers >= 1, "workers must be >= 1")

    @property
    def sigma2(self) -> float:
        """Noise variance at ``snr_db``."""
        return self.n_t / 10.0 ** (self.snr_db / 10.0)

    def step_size(self, m: int | None = None) -> float:
        m = self.m if m is None else m
        if m in self.mu:
            return self.mu[m]
        if 0 in self.mu:
            return self.mu[0]
        # beyond the tabulated factors, shrink roughly like 1/M
        return 0.3 / m

    def filter_span(self, block_len: int) -> int:
        return self.span or block_len

    def at(self, **kw) -> "SystemConfig":
        """Copy with some fields replaced (operating point changes)."""
        return replace(self, **kw)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["mu"] = {str(k): v for k, v in sorted(self.mu.items())}
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out


PRESETS = {
    "paper": {"n_r": 64, "trials": 300},
    "quick": {"n_r": 32, "trials": 50, "n_channel_draws": 20, "bias_realizations": 200, "ser_blocks": 5},
}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config_file(path: str | Path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text)


def resolve_config(preset: str | None = None, path: str | Path | None = None, overrides: dict | None = None) -> SystemConfig:
    """Defaults, then preset, then config file, then explicit overrides."""
    cfg = SystemConfig()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        cfg = SystemConfig.from_mapping(PRESETS[preset], cfg)
    if path is not None:
        cfg = SystemConfig.from_mapping(load_config_file(path), cfg)
    if overrides:
        cfg = SystemConfig.from_mapping({k: v for k, v in overrides.items() if v is not None}, cfg)
    return cfg
