"""Rayleigh block-fading channel with masking-aware power allocation.

One complex fading coefficient h ~ CN(0, 1) is drawn per length-T block and
held constant across it. With N masked tokens the total budget P_tot is spread
over the T-N transmitted tokens, so each symbol carries power P_tot/(T-N).
Noise is CN(0, sigma^2) per complex sample: each real component has variance
sigma^2/2. All randomness is derived from integer key paths so independently
scheduled trials reproduce bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .modem import TokenModulator
from .vocab import MaskedSequence

__all__ = [
    "ChannelConfig",
    "ChannelRealization",
    "ReceivedBlock",
    "derived_rng",
    "draw_realization",
    "transmit",
]

_FADING_TAG = 0
_NOISE_TAG = 1


def derived_rng(*key: int) -> np.random.Generator:
    """Independent, reproducible generator for an integer key path."""
    return np.random.default_rng(np.random.SeedSequence(tuple(int(k) for k in key)))


@dataclass(frozen=True)
class ChannelConfig:
    snr_db: float
    p_tot: float
    block_len: int  # T
    bits_per_symbol: int  # m

    def __post_init__(self):
        if self.p_tot <= 0:
            raise ValueError("total power must be positive")
        if self.block_len < 1:
            raise ValueError("block length must be positive")

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    @property
    def noise_variance(self) -> float:
        # SNR = P_tot * E[|h|^2] / (T * sigma^2) with E[|h|^2] = 1
        return self.p_tot / (self.block_len * self.snr_linear)


@dataclass(frozen=True)
class ChannelRealization:
    """Per-block fading draw plus the key from which noise streams derive."""

    h: complex
    noise_variance: float
    noise_key: tuple[int, ...]

    @property
    def gain_to_noise(self) -> float:
        """gamma = |h|^2 / sigma^2, the quantity the transmitter plans against."""
        return abs(self.h) ** 2 / self.noise_variance


@dataclass(frozen=True)
class ReceivedBlock:
    """Per-token received vectors; rows for masked tokens are NaN-poisoned."""

    y: np.ndarray  # (T, K) complex
    mask_set: tuple[int, ...]
    power_per_symbol: float

    @property
    def block_len(self) -> int:
        return self.y.shape[0]

    def vector(self, position: int) -> np.ndarray:
        if position in self.mask_set:
            raise KeyError(f"position {position} was masked; no signal received")
        return self.y[position]

    def unmasked_indices(self) -> np.ndarray:
        masked = np.zeros(self.block_len, dtype=bool)
        masked[list(self.mask_set)] = True
        return np.flatnonzero(~masked)


def draw_realization(cfg: ChannelConfig, seed: int | tuple[int, ...]) -> ChannelRealization:
    """h ~ CN(0, 1), reproducible per seed; noise streams derive from the same seed.

    ``seed`` may be a single integer or a key path of integers.
    """
    key = (int(seed),) if isinstance(seed, int) else tuple(int(k) for k in seed)
    rng = derived_rng(*key, _FADING_TAG)
    re, im = rng.standard_normal(2)
    h = complex(re, im) / np.sqrt(2.0)
    return ChannelRealization(h=h, noise_variance=cfg.noise_variance, noise_key=(*key, _NOISE_TAG))


def transmit(
    seq: MaskedSequence,
    realization: ChannelRealization,
    cfg: ChannelConfig,
    modulator: TokenModulator,
) -> ReceivedBlock:
    """y_i = h * sqrt(P_tot/(T-N)) * s(w_i) + n_i for every unmasked i.

    Pure given the realization: per-token noise generators are re-derived from
    the realization's key, so repeated calls give bit-identical blocks.
    """
    t = seq.length
    if t != cfg.block_len:
        raise ValueError(f"sequence length {t} != configured block length {cfg.block_len}")
    n_masked = seq.n_masked
    power = cfg.p_tot / (t - n_masked)
    amp = np.sqrt(power)
    component_std = np.sqrt(realization.noise_variance / 2.0)
    k = modulator.n_symbols

    y = np.full((t, k), np.nan + 1j * np.nan, dtype=np.complex128)
    for i in seq.unmasked_indices():
        rng = derived_rng(*realization.noise_key, int(i))
        z = rng.standard_normal((2, k))
        noise = (z[0] + 1j * z[1]) * component_std
        y[i] = realization.h * amp * modulator.modulate(int(seq.ids[i])) + noise
    return ReceivedBlock(y=y, mask_set=seq.mask_set, power_per_symbol=power)
