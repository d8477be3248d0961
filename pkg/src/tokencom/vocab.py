"""Vocabulary tables, token sequences, masking, and the token<->bit mapping.

Token ids live in [0, V). The mask sentinel is the id one past the end of the
vocabulary (id == V), so it never collides with a real token. Bit blocks use a
fixed big-endian order so test vectors are stable across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

__all__ = [
    "Vocabulary",
    "TokenSequence",
    "MaskedSequence",
    "mask",
    "blank_position",
    "token_to_bits",
    "bits_to_token",
    "bit_matrix",
    "hamming_clamp",
]


@dataclass(frozen=True)
class Vocabulary:
    """Immutable token table; id = position in ``entries``."""

    entries: tuple[str, ...]

    def __post_init__(self):
        if len(self.entries) < 2:
            raise ValueError("vocabulary needs at least 2 tokens")

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def mask_sentinel(self) -> int:
        return len(self.entries)

    @property
    def bits_per_token(self) -> int:
        # ceil(log2 V), exact in integer arithmetic
        return (self.size - 1).bit_length()

    def token(self, token_id: int) -> str:
        return self.entries[token_id]

    @classmethod
    def synthetic(cls, size: int) -> "Vocabulary":
        """Placeholder vocabulary of ``size`` distinct token strings."""
        return cls(tuple(f"tok{i:05d}" for i in range(size)))

    @classmethod
    def from_file(cls, path: str | Path) -> "Vocabulary":
        """Load a vocabulary file: UTF-8 text, one token per line, LF-terminated."""
        text = Path(path).read_text(encoding="utf-8")
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines = lines[:-1]
        return cls(tuple(lines))

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.entries) + "\n", encoding="utf-8")


def _as_id_array(ids) -> np.ndarray:
    arr = np.ascontiguousarray(ids, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError(f"token ids must be one-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class TokenSequence:
    """Length-T sequence of valid token ids (no sentinels)."""

    ids: np.ndarray

    def __post_init__(self):
        arr = _as_id_array(self.ids)
        if arr.size == 0:
            raise ValueError("empty token sequence")
        if (arr < 0).any():
            raise ValueError("negative token id")
        arr.flags.writeable = False
        object.__setattr__(self, "ids", arr)

    @property
    def length(self) -> int:
        return int(self.ids.size)

    def validate_against(self, vocab: Vocabulary) -> None:
        if (self.ids >= vocab.size).any():
            bad = int(self.ids[self.ids >= vocab.size][0])
            raise ValueError(f"token id {bad} outside vocabulary of size {vocab.size}")


@dataclass(frozen=True)
class MaskedSequence:
    """Sequence with the positions in ``mask_set`` replaced by the sentinel.

    Keeps at least one unmasked position (|mask_set| <= T-1) so the sequence
    stays transmittable; query-time contexts that blank everything are plain
    arrays, not this type.
    """

    ids: np.ndarray
    mask_set: tuple[int, ...]
    mask_sentinel: int

    def __post_init__(self):
        arr = _as_id_array(self.ids)
        mset = tuple(sorted(int(i) for i in self.mask_set))
        if len(set(mset)) != len(mset):
            raise ValueError("duplicate indices in mask set")
        if mset and (mset[0] < 0 or mset[-1] >= arr.size):
            raise ValueError("mask index out of range")
        if len(mset) > arr.size - 1:
            raise ValueError("mask set must leave at least one token unmasked")
        is_sentinel = arr == self.mask_sentinel
        expected = np.zeros(arr.size, dtype=bool)
        expected[list(mset)] = True
        if not np.array_equal(is_sentinel, expected):
            raise ValueError("sentinel placement inconsistent with mask set")
        arr.flags.writeable = False
        object.__setattr__(self, "ids", arr)
        object.__setattr__(self, "mask_set", mset)

    @property
    def length(self) -> int:
        return int(self.ids.size)

    @property
    def n_masked(self) -> int:
        return len(self.mask_set)

    def is_masked(self, position: int) -> bool:
        return self.ids[position] == self.mask_sentinel

    def unmasked_indices(self) -> np.ndarray:
        out = np.setdiff1d(np.arange(self.length), np.asarray(self.mask_set, dtype=np.int64))
        return out


def mask(seq: TokenSequence, mask_set: Iterable[int], vocab: Vocabulary) -> MaskedSequence:
    """Replace the positions in ``mask_set`` with the sentinel; others unchanged."""
    seq.validate_against(vocab)
    mset = sorted(int(i) for i in mask_set)
    if mset and (mset[0] < 0 or mset[-1] >= seq.length):
        raise ValueError(f"mask index outside [0, {seq.length})")
    ids = np.array(seq.ids, dtype=np.int64)
    ids[mset] = vocab.mask_sentinel
    return MaskedSequence(ids=ids, mask_set=tuple(mset), mask_sentinel=vocab.mask_sentinel)


def blank_position(ids: np.ndarray, position: int, sentinel: int) -> np.ndarray:
    """Copy of ``ids`` with one position replaced by the sentinel (query context)."""
    out = np.array(ids, dtype=np.int64)
    out[position] = sentinel
    return out


def token_to_bits(token_id: int, vocab: Vocabulary) -> np.ndarray:
    """Fixed-width big-endian bit expansion of a token id."""
    if not 0 <= token_id < vocab.size:
        if token_id == vocab.mask_sentinel:
            raise ValueError("mask sentinel has no bit representation")
        raise ValueError(f"token id {token_id} outside [0, {vocab.size})")
    width = vocab.bits_per_token
    shifts = np.arange(width - 1, -1, -1)
    return ((token_id >> shifts) & 1).astype(np.uint8)


def bit_matrix(vocab: Vocabulary) -> np.ndarray:
    """(V, bits_per_token) matrix of big-endian bit expansions for all ids."""
    width = vocab.bits_per_token
    ids = np.arange(vocab.size, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1)
    return ((ids[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


def hamming_clamp(value: int, vocab: Vocabulary) -> int:
    """Nearest valid id by Hamming distance on the bit patterns; lowest id on ties.

    Only the hard-decision diagnostic path can produce values >= V; detection
    searches over valid ids and never lands here.
    """
    if 0 <= value < vocab.size:
        return int(value)
    ids = np.arange(vocab.size, dtype=np.uint64)
    distances = np.bitwise_count(ids ^ np.uint64(value))
    return int(np.argmin(distances))


def bits_to_token(bits: Sequence[int] | np.ndarray, vocab: Vocabulary) -> int:
    """Integer value of a big-endian bit block; invalid values are Hamming-clamped."""
    arr = np.asarray(bits, dtype=np.int64)
    width = vocab.bits_per_token
    if arr.shape != (width,):
        raise ValueError(f"expected {width} bits, got shape {arr.shape}")
    if ((arr != 0) & (arr != 1)).any():
        raise ValueError("bit block entries must be 0 or 1")
    weights = np.int64(1) << np.arange(width - 1, -1, -1)
    value = int(arr @ weights)
    return hamming_clamp(value, vocab)
