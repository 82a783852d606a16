"""Pulse shaping and the structured matrices of the oversampled receiver.

All time quantities are normalized to the symbol period ``T = 1``.  A block of
``L`` symbols sampled ``M`` times per symbol is described by

* ``Z`` (``ML x ML``): Toeplitz matrix of the combined transmit/receive pulse
  ``z = p * m`` sampled at ``T/M``,
* ``G`` (``ML x ML + 2MN``): banded Toeplitz matrix mapping white noise to
  matched-filter output samples,
* ``u`` (length ``M``): selector of the sampling phase that carries the symbol.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.linalg import hadamard, toeplitz

__all__ = [
    "PulseSpec",
    "FilterBank",
    "filter_bank",
    "rrc_taps",
    "filter_taps",
    "combined_pulse",
    "build_g",
    "build_z",
    "noise_gram",
    "build_effective_channel",
    "pilot_block",
    "build_pilot_matrix",
    "synthesize_noise",
    "hadamard_matrix",
    "orthogonal_pilots",
    "dft_pilots",
    "random_qpsk_pilots",
    "pilots_to_vector",
]


@dataclass(frozen=True)
class PulseSpec:
    """Root-raised-cosine pulse description.

    Parameters
    ----------
    rolloff : float
        Excess bandwidth ``beta`` in ``[0, 1]``.
    oversampling : int
        Samples per symbol ``M``.
    span_symbols : int
        One-sided filter support ``N`` in symbols (taps cover ``[-NT, NT]``).
    symbol_period : float
        Kept for completeness; everything assumes ``T = 1``.
    """

    rolloff: float = 0.8
    oversampling: int = 1
    span_symbols: int = 20
    symbol_period: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.rolloff <= 1.0:
            raise ValueError(f"rolloff must lie in [0, 1], got {self.rolloff}")
        if int(self.oversampling) != self.oversampling or self.oversampling < 1:
            raise ValueError(f"oversampling must be an integer >= 1, got {self.oversampling}")
        if int(self.span_symbols) != self.span_symbols or self.span_symbols < 1:
            raise ValueError(f"span_symbols must be an integer >= 1, got {self.span_symbols}")
        if self.symbol_period != 1.0:
            raise ValueError("only the normalized symbol period T = 1 is supported")


def _rrc(t: np.ndarray, beta: float) -> np.ndarray:
    """Unnormalized RRC impulse response with analytic values at the singular points."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    at_zero = np.isclose(t, 0.0, atol=1e-12)
    if beta > 0:
        at_pole = np.isclose(np.abs(t), 1.0 / (4.0 * beta), atol=1e-12) & ~at_zero
    else:
        at_pole = np.zeros_like(at_zero)
    regular = ~(at_zero | at_pole)

    tr = t[regular]
    num = np.sin(np.pi * tr * (1 - beta)) + 4 * beta * tr * np.cos(np.pi * tr * (1 + beta))
    den = np.pi * tr * (1 - (4 * beta * tr) ** 2)
    out[regular] = num / den
    out[at_zero] = 1 - beta + 4 * beta / np.pi
    if np.any(at_pole):
        a = np.pi / (4 * beta)
        out[at_pole] = beta / np.sqrt(2) * ((1 + 2 / np.pi) * np.sin(a) + (1 - 2 / np.pi) * np.cos(a))
    return out


def rrc_taps(spec: PulseSpec) -> np.ndarray:
    """RRC samples at ``t = k/M`` for ``k = -MN..MN``.

    The taps are scaled so that ``sum(taps**2) == M``, which gives ``z(0) = 1``
    for the combined pulse.
    """
    m, n = spec.oversampling, spec.span_symbols
    k = np.arange(-m * n, m * n + 1)
    taps = _rrc(k / m, spec.rolloff)
    return taps * np.sqrt(m / np.sum(taps**2))


def filter_taps(spec: PulseSpec) -> np.ndarray:
    """Discrete-time matched filter at ``M`` samples per symbol, ``k = -MN..MN``.

    Its power response is the raised-cosine spectrum folded at rate ``M``.
    For ``M >= 2`` the RRC band ``(1 + beta)/2`` fits below ``M/2`` and the taps
    are the RRC samples scaled by ``1/sqrt(M)``.  For ``M = 1`` the folded
    raised cosine is flat (Nyquist), so the equivalent filter is a unit impulse;
    sampling the RRC at the symbol rate would alias it.
    """
    m, n = spec.oversampling, spec.span_symbols
    if m == 1:
        taps = np.zeros(2 * n + 1)
        taps[n] = 1.0
        return taps
    return rrc_taps(spec) / np.sqrt(m)


def combined_pulse(spec: PulseSpec) -> np.ndarray:
    """Samples of ``z = p * m`` at ``t = k/M``, ``k = -2MN..2MN`` (center at index ``2MN``)."""
    taps = filter_taps(spec)
    return np.convolve(taps, taps)


def _padded(seq: np.ndarray, length: int) -> np.ndarray:
    out = np.zeros(length)
    n = min(length, seq.size)
    out[:n] = seq[:n]
    return out


def build_z(spec: PulseSpec, block_len: int) -> np.ndarray:
    """Toeplitz matrix with entry ``(i, j) = z((j - i) / M)``."""
    if block_len < 1:
        raise ValueError("block_len must be >= 1")
    m = spec.oversampling
    z = combined_pulse(spec)
    center = 2 * m * spec.span_symbols
    # z is symmetric, so the first row equals the first column
    return toeplitz(_padded(z[center:], m * block_len))


def build_g(spec: PulseSpec, block_len: int) -> np.ndarray:
    """Banded noise-filter matrix.

    Row ``r`` holds :func:`filter_taps` starting at
    column ``r + M*(max(N, L) - N)``.  With ``N = L`` this is the ``ML x 3ML``
    layout, and every output sample of white noise with variance ``s2`` has
    variance ``s2``.
    """
    if block_len < 1:
        raise ValueError("block_len must be >= 1")
    m, n = spec.oversampling, spec.span_symbols
    rows = m * block_len
    reach = max(n, block_len)
    cols = rows + 2 * m * reach
    taps = filter_taps(spec)
    g = np.zeros((rows, cols))
    offset = m * (reach - n)
    idx = np.arange(taps.size)
    for r in range(rows):
        g[r, r + offset + idx] = taps
    return g


def noise_gram(spec: PulseSpec, block_len: int) -> np.ndarray:
    """``G G^T`` computed from the tap autocorrelation (no ``G`` materialized)."""
    taps = filter_taps(spec)
    acf = np.convolve(taps, taps[::-1])[taps.size - 1:]
    return toeplitz(_padded(acf, spec.oversampling * block_len))


@dataclass(frozen=True)
class FilterBank:
    """Filter matrices for one block length.

    Build with :meth:`FilterBank.build`; all arrays are read-only.
    """

    spec: PulseSpec
    block_len: int
    g_matrix: np.ndarray = field(repr=False)
    z_matrix: np.ndarray = field(repr=False)
    u_vector: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, spec: PulseSpec, block_len: int) -> "FilterBank":
        u = np.zeros(spec.oversampling)
        u[-1] = 1.0
        arrays = (build_g(spec, block_len), build_z(spec, block_len), u)
        for a in arrays:
            a.setflags(write=False)
        return cls(spec, int(block_len), *arrays)

    @property
    def oversampling(self) -> int:
        return self.spec.oversampling

    @cached_property
    def gram(self) -> np.ndarray:
        """Filtered-noise correlation ``G G^T`` (unit diagonal)."""
        out = noise_gram(self.spec, self.block_len)
        out.setflags(write=False)
        return out

    @cached_property
    def z_sel(self) -> np.ndarray:
        """``Z (I_L kron u)``: the columns of ``Z`` at symbol sampling instants."""
        m = self.oversampling
        out = np.ascontiguousarray(self.z_matrix[:, m - 1::m])
        out.setflags(write=False)
        return out


@lru_cache(maxsize=64)
def filter_bank(rolloff: float, oversampling: int, span_symbols: int, block_len: int) -> FilterBank:
    """Cached :class:`FilterBank` (its arrays are read-only, so sharing is safe)."""
    return FilterBank.build(PulseSpec(rolloff, oversampling, span_symbols), block_len)


def build_effective_channel(h_prime: np.ndarray, fb: FilterBank, block_len: int | None = None) -> np.ndarray:
    """Equivalent oversampled channel ``[I kron Z(I kron u)](H' kron I_L)``.

    By the mixed-product rule this equals ``H' kron (Z (I kron u))``.
    """
    if block_len is not None and block_len != fb.block_len:
        raise ValueError(f"block_len={block_len} does not match filter block length {fb.block_len}")
    h_prime = np.atleast_2d(np.asarray(h_prime))
    if h_prime.ndim != 2:
        raise ValueError("h_prime must be an (N_r, N_t) matrix")
    return np.kron(h_prime, fb.z_sel)


def _pilot_matrix_from_vector(x_p: np.ndarray, n_t: int, tau: int) -> np.ndarray:
    x_p = np.asarray(x_p)
    if x_p.shape != (n_t * tau,):
        raise ValueError(f"pilot vector must have length N_t*tau = {n_t * tau}, got {x_p.shape}")
    # terminal-major layout: x_p[j*tau + i] is symbol i of terminal j
    return x_p.reshape(n_t, tau).T


def pilot_block(pilots: np.ndarray, fb: FilterBank) -> np.ndarray:
    """Per-antenna pilot response ``B = Z (I kron u) X`` for a ``tau x N_t`` pilot matrix."""
    pilots = np.asarray(pilots)
    if pilots.ndim != 2 or pilots.shape[0] != fb.block_len:
        raise ValueError(f"pilot matrix must be (tau={fb.block_len}, N_t), got {pilots.shape}")
    return fb.z_sel @ pilots


def build_pilot_matrix(x_p: np.ndarray, fb: FilterBank, n_t: int, n_r: int, tau: int) -> np.ndarray:
    """Equivalent pilot matrix ``Phi_p`` with ``Phi_p vec(H') = H x_p``.

    Column ``j*N_r + r`` is nonzero only on the ``M*tau`` rows of antenna ``r``,
    where it equals column ``j`` of :func:`pilot_block`.
    """
    if tau != fb.block_len:
        raise ValueError(f"tau={tau} does not match filter block length {fb.block_len}")
    b = pilot_block(_pilot_matrix_from_vector(x_p, n_t, tau), fb)
    rows = b.shape[0]
    phi = np.zeros((rows * n_r, n_t * n_r), dtype=np.result_type(b, np.complex128))
    for r in range(n_r):
        phi[r * rows:(r + 1) * rows, r::n_r] = b
    return phi


def synthesize_noise(
    fb: FilterBank,
    sigma2: float,
    rng: np.random.Generator,
    n_r: int = 1,
    size: int | None = None,
) -> np.ndarray:
    """Filtered noise ``(I_{N_r} kron G) w`` with ``w ~ CN(0, sigma2 I)``.

    Returns shape ``(M*L*N_r,)`` or ``(size, M*L*N_r)``.
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    g = fb.g_matrix
    batch = 1 if size is None else int(size)
    w = rng.standard_normal((batch, n_r, g.shape[1], 2)).view(np.complex128)[..., 0]
    w *= np.sqrt(sigma2 / 2.0)
    out = (w.reshape(-1, g.shape[1]) @ g.T.astype(complex)).reshape(batch, -1)
    return out[0] if size is None else out


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    return all(n % p for p in range(2, int(n**0.5) + 1))


def _paley(q: int) -> np.ndarray:
    """Paley type-I Hadamard matrix of order ``q + 1`` (``q`` prime, ``q = 3 mod 4``)."""
    residues = {(i * i) % q for i in range(1, q)}
    chi = np.array([0] + [1 if i in residues else -1 for i in range(1, q)])
    idx = np.arange(q)
    s = np.zeros((q + 1, q + 1))
    s[0, 1:] = 1
    s[1:, 0] = -1
    s[1:, 1:] = chi[(idx[None, :] - idx[:, None]) % q]
    return s + np.eye(q + 1)


def hadamard_matrix(n: int) -> np.ndarray | None:
    """A real Hadamard matrix of order ``n``, or ``None`` if none is constructible here.

    Orders ``2^k (q + 1)`` with ``q`` prime and ``q = 3 mod 4`` are covered
    (Sylvester doubling of a Paley core), which includes every power of two.
    """
    if n < 1:
        return None
    if n & (n - 1) == 0:
        return hadamard(n).astype(float)
    core, doublings = n, 0
    while core % 2 == 0:
        q = core - 1
        if _is_prime(q) and q % 4 == 3:
            out = _paley(q)
            for _ in range(doublings):
                out = np.block([[out, out], [out, -out]])
            return out
        core //= 2
        doublings += 1
    return None


def dft_pilots(tau: int, n_t: int) -> np.ndarray:
    """First ``n_t`` columns of the unit-modulus ``tau``-point DFT matrix."""
    k = np.arange(tau)
    return np.exp(-2j * np.pi * np.outer(k, np.arange(n_t)) / tau)


def orthogonal_pilots(tau: int, n_t: int) -> np.ndarray:
    """Column-orthogonal unit-power pilots of shape ``(tau, n_t)``.

    QPSK symbols ``(1 + j) h / sqrt(2)`` from Hadamard columns ``1..n_t`` when a
    Hadamard matrix of order ``tau`` exists, DFT columns otherwise.
    """
    if n_t > tau:
        raise ValueError(f"cannot build {n_t} orthogonal pilots of length {tau}")
    h = hadamard_matrix(tau)
    if h is None or n_t + 1 > tau:
        return dft_pilots(tau, n_t)
    return h[:, 1:n_t + 1] * (1 + 1j) / np.sqrt(2)


def random_qpsk_pilots(tau: int, n_t: int, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. uniform QPSK pilots of shape ``(tau, n_t)``."""
    re = rng.integers(0, 2, size=(tau, n_t)) * 2 - 1
    im = rng.integers(0, 2, size=(tau, n_t)) * 2 - 1
    return (re + 1j * im) / np.sqrt(2)


def pilots_to_vector(pilots: np.ndarray) -> np.ndarray:
    """``(tau, n_t)`` pilot matrix to the terminal-major vector ``x_p``."""
    return np.asarray(pilots).T.reshape(-1)
