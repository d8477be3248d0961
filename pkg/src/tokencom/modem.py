"""Square-QAM constellations with Gray mapping and per-token likelihood tables.

A token of B = ceil(log2 V) bits is zero-padded to K*m bits (pads at the end)
and mapped to K = ceil(B/m) symbols, each carrying m consecutive bits
big-endian. The per-token log-likelihood of a received vector y is

    log P(y | token v) = -K*log(pi*sigma^2) - (1/sigma^2) * ||y - h*sqrt(p)*s(v)||^2

and is evaluated for all V tokens at once through a (K x 2^m) per-symbol grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .vocab import Vocabulary, bit_matrix, token_to_bits

__all__ = [
    "Constellation",
    "make_constellation",
    "TokenModulator",
    "modulate",
    "token_log_likelihoods",
    "ml_detect",
]


def _gray_decode(codes: np.ndarray) -> np.ndarray:
    """Inverse of the reflected Gray code g = k ^ (k >> 1), vectorized."""
    out = np.array(codes, dtype=np.int64)
    shift = 1
    while (out >> shift).any():
        out ^= out >> shift
        shift <<= 1
    return out


@dataclass(frozen=True)
class Constellation:
    """Unit-average-energy square QAM grid plus the Gray bit-group -> point map."""

    bits_per_symbol: int
    points: np.ndarray  # (2^m,) complex, row-major over (I, Q) amplitude levels
    gray_map: np.ndarray  # (2^m,) int, m-bit group value -> point index

    @property
    def order(self) -> int:
        return 1 << self.bits_per_symbol

    def symbols_by_group(self) -> np.ndarray:
        """(2^m,) complex points indexed directly by m-bit group value."""
        return self.points[self.gray_map]


def make_constellation(bits_per_symbol: int) -> Constellation:
    m = bits_per_symbol
    if m < 2 or m % 2 != 0:
        raise ValueError("square QAM requires an even number of bits per symbol >= 2")
    half = m // 2
    levels = 1 << half
    amps = 2 * np.arange(levels) - (levels - 1)
    grid = (amps[:, None] + 1j * amps[None, :]).ravel()  # index = i_level*levels + q_level
    grid = grid / np.sqrt(np.mean(np.abs(grid) ** 2))

    groups = np.arange(1 << m)
    i_code = groups >> half
    q_code = groups & (levels - 1)
    gray_map = _gray_decode(i_code) * levels + _gray_decode(q_code)

    points = grid.copy()
    points.flags.writeable = False
    gray_map = gray_map.astype(np.int64)
    gray_map.flags.writeable = False
    return Constellation(bits_per_symbol=m, points=points, gray_map=gray_map)


class TokenModulator:
    """Precomputed token -> symbol mapping for one (vocabulary, constellation) pair.

    Builds a (V, K) table of m-bit group values once, so both modulation and
    whole-vocabulary likelihood tables are plain gathers.
    """

    def __init__(self, vocab: Vocabulary, constellation: Constellation):
        self.vocab = vocab
        self.constellation = constellation
        m = constellation.bits_per_symbol
        width = vocab.bits_per_token
        self.n_symbols = -(-width // m)  # K = ceil(B/m)

        bits = bit_matrix(vocab)
        pad = self.n_symbols * m - width
        if pad:
            bits = np.concatenate([bits, np.zeros((vocab.size, pad), dtype=np.uint8)], axis=1)
        weights = np.int64(1) << np.arange(m - 1, -1, -1)
        self.group_values = bits.reshape(vocab.size, self.n_symbols, m) @ weights  # (V, K)
        self.group_values.flags.writeable = False
        self._symbols_by_group = constellation.symbols_by_group()

    def modulate(self, token_id: int) -> np.ndarray:
        if not 0 <= token_id < self.vocab.size:
            if token_id == self.vocab.mask_sentinel:
                raise ValueError("mask sentinel cannot be modulated")
            raise ValueError(f"token id {token_id} outside [0, {self.vocab.size})")
        return self._symbols_by_group[self.group_values[token_id]]

    def log_likelihood_table(
        self, y: np.ndarray, h: complex, power_per_symbol: float, noise_variance: float
    ) -> np.ndarray:
        """log P(y | token v) for every v, via the per-symbol grid factorization."""
        y = np.asarray(y, dtype=np.complex128)
        if y.shape != (self.n_symbols,):
            raise ValueError(f"expected {self.n_symbols} received symbols, got shape {y.shape}")
        if noise_variance <= 0:
            raise ValueError("noise variance must be positive")
        if power_per_symbol < 0:
            raise ValueError("power must be non-negative")
        scaled = h * np.sqrt(power_per_symbol) * self._symbols_by_group
        grid = -np.abs(y[:, None] - scaled[None, :]) ** 2 / noise_variance  # (K, 2^m)
        table = grid[np.arange(self.n_symbols)[None, :], self.group_values].sum(axis=1)
        table -= self.n_symbols * np.log(np.pi * noise_variance)
        return table


def modulate(token_id: int, constellation: Constellation, vocab: Vocabulary) -> np.ndarray:
    """Gray-mapped symbol vector for one token (pad bits fixed to 0)."""
    m = constellation.bits_per_symbol
    width = vocab.bits_per_token
    n_symbols = -(-width // m)
    if token_id == vocab.mask_sentinel:
        raise ValueError("mask sentinel cannot be modulated")
    bits = token_to_bits(token_id, vocab)
    padded = np.zeros(n_symbols * m, dtype=np.uint8)
    padded[:width] = bits
    weights = np.int64(1) << np.arange(m - 1, -1, -1)
    groups = padded.reshape(n_symbols, m) @ weights
    return constellation.symbols_by_group()[groups]


def token_log_likelihoods(
    y: np.ndarray,
    h: complex,
    power_per_symbol: float,
    noise_variance: float,
    constellation: Constellation,
    vocab: Vocabulary,
) -> np.ndarray:
    """One-shot likelihood table; use TokenModulator when calling in a loop."""
    return TokenModulator(vocab, constellation).log_likelihood_table(
        y, h, power_per_symbol, noise_variance
    )


def ml_detect(table: np.ndarray) -> int:
    """Argmax over the likelihood table; lowest token id wins exact ties."""
    return int(np.argmax(table))
