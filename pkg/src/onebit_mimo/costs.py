"""Operation counts of the channel estimators and receiver power consumption."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

__all__ = [
    "CostEstimator",
    "CostReport",
    "PowerParams",
    "PowerReport",
    "complexity",
    "receiver_power",
]


class CostEstimator(str, Enum):
    STANDARD_LS = "StandardLS"
    LRA_LS = "LraLS"
    LRA_LMMSE = "LraLMMSE"
    LRA_LMS = "LraLMS"


_ALIASES = {
    "standard_ls": CostEstimator.STANDARD_LS,
    "lra_ls": CostEstimator.LRA_LS,
    "lra_lmmse": CostEstimator.LRA_LMMSE,
    "lra_lms": CostEstimator.LRA_LMS,
}


@dataclass(frozen=True)
class CostReport:
    """Real additions and multiplications of one channel estimate."""

    estimator: CostEstimator
    additions: int
    multiplications: int

    @property
    def total(self) -> int:
        return self.additions + self.multiplications


def _counts(est: CostEstimator, nr: int, nt: int, m: int, tau: int, l: int) -> tuple[int, int]:
    t = tau
    if est is CostEstimator.STANDARD_LS:
        add = nr**3 * nt**2 * (nt + m * t**3 + 2 * m * t) - nr**2 * nt * (m * t + nt) - 2 * nr * nt + m * t**2 * (m * t - 1)
        mul = (nr**3 * nt**2 * (nt + 2 * m * t + t**3 * m)
               + nr**2 * t * (t * nt**2 + (t**2 + 1) * m * nt + t**2 + (1 + m) * t)
               + 2 * nr * nt + m * t**2 * (1 + t))
    elif est is CostEstimator.LRA_LS:
        cubic = nr**3 * nt * (nt**2 + (m * t**3 + 2 * m * t) * nt + 2 * m**2 * t**2)
        add = cubic - nr**2 * nt * (2 * m * t + nt) - 2 * nr * nt + m * t**2 * (m * t - m - 1 + 3 * m**2 * t)
        mul = (cubic
               + nr**2 * t * (t * nt**2 + (t**2 + 1) * m * nt + t**2 + (1 + m + 2 * m**2) * t)
               + 2 * nr * (m * t + nt) + 3 * m**3 * t**3 + m * t**2 * (1 + t))
    elif est is CostEstimator.LRA_LMMSE:
        cubic = nr**3 * (m * t**3 * nt**2 + 3 * m**2 * t**2 * nt + m**3 * t**3)
        add = cubic - 2 * nr**2 * m * t * nt - nr * (m * t + nt) + m * t**2 * (m * t - 1 + 3 * m**2 * t - m)
        mul = (cubic
               + nr**2 * t * (t * nt**2 + (t**2 + 1) * m * nt + t**2 + (1 + t + m + 5 * m**2) * t)
               + 3 * m * t * nr + 3 * m**3 * t**3 + m * t**2 * (1 + t))
    else:
        windows = nr * (t - l + 1)
        add = windows * (l**2 * m * (2 * m * nt - m - 1) + l**3 * m * (3 * m**2 + m + nt**2))
        mul = windows * (nt + 2 * l * m * (1 + nt)
                         + l**2 * (1 + nt**2 + 2 * m + 2 * m**2 * nt + 2 * m**2)
                         + l**3 * (nt**2 * m + 1 + m * nt + m + 3 * m**3))
    return add, mul


def complexity(estimator, n_r: int, n_t: int, m: int, tau: int, l_win: int = 3) -> CostReport:
    """Closed-form operation counts of one channel estimate.

    Parameters
    ----------
    estimator : CostEstimator or str
        Enum member, its value, or one of ``standard_ls``, ``lra_ls``,
        ``lra_lmmse``, ``lra_lms``.
    n_r, n_t, m, tau, l_win : int
        Positive integers; ``l_win`` only affects the LMS count and must not
        exceed ``tau``.

    Returns
    -------
    CostReport
        Exact integer counts.
    """
    if isinstance(estimator, str) and estimator in _ALIASES:
        est = _ALIASES[estimator]
    else:
        try:
            est = CostEstimator(estimator)
        except ValueError:
            raise ValueError(f"unknown estimator {estimator!r}") from None
    args = {"n_r": n_r, "n_t": n_t, "m": m, "tau": tau, "l_win": l_win}
    for k, v in args.items():
        if isinstance(v, bool) or int(v) != v or v < 1:
            raise ValueError(f"{k} must be a positive integer, got {v!r}")
    if est is CostEstimator.LRA_LMS and l_win > tau:
        raise ValueError("l_win must not exceed tau")
    add, mul = _counts(est, int(n_r), int(n_t), int(m), int(tau), int(l_win))
    return CostReport(est, add, mul)


@dataclass(frozen=True)
class PowerParams:
    """Component powers in mW, ADC figure of merit in J per conversion step, Nyquist rate in Hz."""

    p_bb: float = 200.0
    p_lo: float = 22.5
    p_lna: float = 5.4
    p_h: float = 3.0
    p_agc: float = 2.0
    p_m: float = 0.3
    fom_w: float = 200e-15
    f_n: float = 100e6


@dataclass(frozen=True)
class PowerReport:
    """Receiver power in mW broken down by component."""

    components: dict = field(default_factory=dict)

    @property
    def total_mw(self) -> float:
        return float(sum(self.components.values()))


def receiver_power(b: int, m: int, n_r: int, params: PowerParams | None = None) -> PowerReport:
    """Power of an ``n_r``-antenna receiver with ``b``-bit ADCs sampling at ``m`` times Nyquist.

    Each antenna has an I and a Q branch with one ADC each; AGC is omitted
    for one-bit converters.
    """
    if isinstance(b, bool) or int(b) != b or b < 1:
        raise ValueError(f"b must be an integer >= 1, got {b!r}")
    if m < 1 or n_r < 1:
        raise ValueError("m and n_r must be positive")
    p = params or PowerParams()
    c = 0 if b == 1 else 1
    p_adc = p.fom_w * m * p.f_n * 2**b * 1e3  # W -> mW
    comps = {
        "BB": p.p_bb,
        "LO": p.p_lo,
        "LNA": n_r * p.p_lna,
        "H": n_r * p.p_h,
        "M": 2 * n_r * p.p_m,
        "AGC": 2 * n_r * c * p.p_agc,
        "ADC": 2 * n_r * p_adc,
    }
    return PowerReport(comps)
