"""Token-id corpus files and a synthetic Markov text source.

Corpus file format: UTF-8 text, one token-id sequence per line, ids separated
by single spaces. Long streams are cut into consecutive non-overlapping
fixed-length blocks, each processed independently downstream.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .channel import derived_rng
from .vocab import Vocabulary

__all__ = [
    "read_id_sequences",
    "write_id_sequences",
    "segment_blocks",
    "MarkovSource",
]


def read_id_sequences(path: str | Path) -> list[np.ndarray]:
    sequences = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        sequences.append(np.array([int(tok) for tok in line.split()], dtype=np.int64))
    return sequences


def write_id_sequences(path: str | Path, sequences) -> None:
    lines = [" ".join(str(int(t)) for t in np.asarray(seq)) for seq in sequences]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def segment_blocks(stream: np.ndarray, block_len: int) -> list[np.ndarray]:
    """Consecutive non-overlapping length-``block_len`` blocks; the tail is dropped."""
    stream = np.asarray(stream, dtype=np.int64)
    n_blocks = stream.size // block_len
    return [stream[i * block_len : (i + 1) * block_len] for i in range(n_blocks)]


class MarkovSource:
    """First-order Markov chain over a synthetic vocabulary.

    Per-state successor sets are small and skewed (some states are fully
    deterministic), so a bigram model trained on its output produces sharp,
    heterogeneous contextual priors -- the regime where predictability-driven
    masking has something to work with.
    """

    def __init__(
        self,
        vocab_size: int,
        seed: int,
        *,
        branching=(1, 2, 4, 8),
        concentration: float = 0.35,
    ):
        self.vocab = Vocabulary.synthetic(vocab_size)
        rng = derived_rng(seed, 7001)
        v = vocab_size
        self._successors: list[np.ndarray] = []
        self._weights: list[np.ndarray] = []
        for state in range(v):
            k = int(rng.choice(branching))
            succ = rng.choice(v, size=k, replace=False)
            w = rng.dirichlet(np.full(k, concentration)) if k > 1 else np.ones(1)
            order = np.argsort(-w)
            self._successors.append(succ[order].astype(np.int64))
            self._weights.append(w[order])

    def sample_stream(self, length: int, seed: int) -> np.ndarray:
        rng = derived_rng(seed, 7002)
        out = np.empty(length, dtype=np.int64)
        state = int(rng.integers(len(self._successors)))
        for i in range(length):
            out[i] = state
            succ = self._successors[state]
            if succ.size == 1:
                state = int(succ[0])
            else:
                state = int(rng.choice(succ, p=self._weights[state]))
        return out
