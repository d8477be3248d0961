"""Contextual prior models: the distributions, the query contract, and backends.

Every backend answers the same question: given a context with one position
blanked, what is the categorical distribution of the token at that position?
Callers must blank a position before querying it, and the answer may depend
only on the other positions. Three in-process backends are provided (uniform,
interpolated bidirectional bigram, exact enumerable joint) plus an HTTP client
for a remote fill-mask service.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import requests
from scipy import sparse as sp
from scipy.special import logsumexp

from .vocab import MaskedSequence, Vocabulary, blank_position

__all__ = [
    "log_normalize",
    "entropy_bits",
    "PriorDistribution",
    "PriorModel",
    "UniformPrior",
    "NGramPrior",
    "ExactJointPrior",
    "RemotePrior",
    "RemoteEmbedder",
    "query_prior",
    "exact_conditional",
    "SidecarError",
    "SidecarTransportError",
    "SidecarProtocolError",
    "OutOfRangeTokenError",
]

_LOG2 = np.log(2.0)


class SidecarError(Exception):
    """Base class for remote prior/embedding failures."""


class SidecarTransportError(SidecarError):
    """Endpoint unreachable, connection dropped, or request timed out."""


class SidecarProtocolError(SidecarError):
    """Response violates the wire format (bad status, schema, or payload)."""


class OutOfRangeTokenError(SidecarProtocolError):
    """Response contains a token id outside [0, V)."""


def log_normalize(log_weights: np.ndarray) -> np.ndarray:
    """Shift log weights so they describe a normalized distribution."""
    log_weights = np.asarray(log_weights, dtype=np.float64)
    return log_weights - logsumexp(log_weights)


def entropy_bits(log_probs: np.ndarray) -> float:
    """Shannon entropy (base 2) of normalized log probabilities."""
    logp = np.asarray(log_probs, dtype=np.float64)
    p = np.exp(logp)
    terms = np.where(p > 0.0, p * logp, 0.0)
    return float(-terms.sum() / _LOG2)


class PriorDistribution:
    """Per-position categorical distribution over the vocabulary, log domain.

    Always materialized densely; ``top_k`` records whether it arrived as a
    sparse top-k + uniform-tail payload. Instances are shared and treated as
    immutable.
    """

    def __init__(self, log_probs: np.ndarray, *, top_k: int | None = None):
        logp = np.ascontiguousarray(log_probs, dtype=np.float64)
        if logp.ndim != 1:
            raise ValueError("log_probs must be one-dimensional")
        if not np.isfinite(logp).all():
            raise ValueError("prior distribution has non-finite entries")
        total = logsumexp(logp)
        if abs(np.expm1(total)) > 1e-6:
            raise ValueError(f"prior distribution not normalized (sum = {np.exp(total)!r})")
        logp = logp - total
        logp.flags.writeable = False
        self._logp = logp
        self.top_k = top_k
        self._entropy: float | None = None

    @property
    def vocab_size(self) -> int:
        return self._logp.size

    @property
    def is_sparse(self) -> bool:
        return self.top_k is not None and self.top_k < self.vocab_size

    def dense_logp(self) -> np.ndarray:
        return self._logp

    def probs(self) -> np.ndarray:
        return np.exp(self._logp)

    def logp(self, token_id: int) -> float:
        return float(self._logp[token_id])

    def argmax(self) -> int:
        return int(np.argmax(self._logp))

    def entropy_bits(self) -> float:
        if self._entropy is None:
            self._entropy = entropy_bits(self._logp)
        return self._entropy

    @classmethod
    def from_log_weights(cls, log_weights: np.ndarray) -> "PriorDistribution":
        return cls(log_normalize(log_weights))

    @classmethod
    def from_probs(cls, probs: np.ndarray) -> "PriorDistribution":
        p = np.asarray(probs, dtype=np.float64)
        if (p < 0).any():
            raise ValueError("negative probability")
        if (p == 0).any():
            raise ValueError("prior distributions must be strictly positive")
        return cls(log_normalize(np.log(p)))

    @classmethod
    def uniform(cls, vocab_size: int) -> "PriorDistribution":
        return cls(np.full(vocab_size, -np.log(vocab_size)))

    @classmethod
    def from_sparse(
        cls,
        vocab_size: int,
        ids: np.ndarray,
        log_probs: np.ndarray,
        tail_logp: float | None,
    ) -> "PriorDistribution":
        """Expand a top-k + tail payload: the tail mass is spread uniformly
        over the ids outside the top-k, then the whole thing is renormalized.
        A null or vanishing tail is floored so every token keeps positive mass.
        """
        ids = np.asarray(ids, dtype=np.int64)
        logps = np.asarray(log_probs, dtype=np.float64)
        if ids.shape != logps.shape or ids.ndim != 1:
            raise ValueError("ids and log_probs must be matching 1-d arrays")
        if len(np.unique(ids)) != ids.size:
            raise ValueError("duplicate ids in sparse distribution")
        if (ids < 0).any() or (ids >= vocab_size).any():
            raise OutOfRangeTokenError("sparse distribution id outside vocabulary")
        k = ids.size
        n_tail = vocab_size - k
        if n_tail == 0:
            dense = np.full(vocab_size, -np.inf)
            dense[ids] = logps
            if not np.isfinite(dense).all():
                raise ValueError("dense payload with non-finite entries")
            return cls(log_normalize(dense), top_k=k)
        # keep the tail strictly positive even when the top-k soaks up all mass
        # (servers report that case as a null tail)
        tail_logp = np.log(1e-12) if tail_logp is None else max(float(tail_logp), np.log(1e-12))
        dense = np.full(vocab_size, tail_logp - np.log(n_tail))
        dense[ids] = logps
        return cls(log_normalize(dense), top_k=k)


def _context_ids(ctx) -> np.ndarray:
    if isinstance(ctx, MaskedSequence):
        return ctx.ids
    arr = np.asarray(ctx, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError("context must be a one-dimensional id array")
    return arr


class PriorModel:
    """Query contract shared by all backends."""

    vocab: Vocabulary

    def query(self, ctx, positions) -> dict[int, PriorDistribution]:
        raise NotImplementedError

    def _checked_context(self, ctx, positions) -> tuple[np.ndarray, list[int]]:
        ids = _context_ids(ctx)
        sentinel = self.vocab.mask_sentinel
        pos = [int(p) for p in positions]
        for p in pos:
            if not 0 <= p < ids.size:
                raise IndexError(f"query position {p} out of range")
            if ids[p] != sentinel:
                raise ValueError(f"query position {p} is not blanked in the context")
        return ids, pos


def query_prior(model: PriorModel, ctx, positions) -> dict[int, PriorDistribution]:
    """One strictly-positive normalized distribution per queried position."""
    return model.query(ctx, positions)


class UniformPrior(PriorModel):
    """Contextless 1/V prior; also the remote-failure fallback."""

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab
        self._dist = PriorDistribution.uniform(vocab.size)

    def query(self, ctx, positions):
        _, pos = self._checked_context(ctx, positions)
        return {p: self._dist for p in pos}


class NGramPrior(PriorModel):
    """Interpolated forward-bigram / backward-bigram / unigram prior.

    Each component is Laplace-smoothed. When a neighbor is unavailable
    (sequence boundary, or the neighbor is itself masked) that component drops
    out and its weight is redistributed proportionally over the survivors.
    Deterministic given corpus and hyperparameters; distributions and their
    entropies are memoized by (left, right) context pair.
    """

    FORMAT_VERSION = 1

    def __init__(
        self,
        vocab: Vocabulary,
        forward_counts: sp.csr_matrix,
        unigram_counts: np.ndarray,
        *,
        lambda_forward: float = 0.4,
        lambda_backward: float = 0.4,
        lambda_unigram: float = 0.2,
        alpha: float = 0.1,
    ):
        lambdas = (lambda_forward, lambda_backward, lambda_unigram)
        if any(l < 0 for l in lambdas) or abs(sum(lambdas) - 1.0) > 1e-9:
            raise ValueError("interpolation weights must be non-negative and sum to 1")
        if alpha <= 0:
            raise ValueError("Laplace constant must be positive")
        self.vocab = vocab
        self.lambda_forward = float(lambda_forward)
        self.lambda_backward = float(lambda_backward)
        self.lambda_unigram = float(lambda_unigram)
        self.alpha = float(alpha)

        v = vocab.size
        if forward_counts.shape != (v, v):
            raise ValueError("forward count matrix must be V x V")
        self._forward = forward_counts.tocsr().astype(np.float64)
        self._backward = self._forward.T.tocsr()  # rows indexed by the right neighbor
        self._unigram = np.asarray(unigram_counts, dtype=np.float64)
        if self._unigram.shape != (v,):
            raise ValueError("unigram counts must have length V")

        denom = self._unigram.sum() + self.alpha * v
        self._unigram_probs = (self._unigram + self.alpha) / denom
        self._forward_row_totals = np.asarray(self._forward.sum(axis=1)).ravel()
        self._backward_row_totals = np.asarray(self._backward.sum(axis=1)).ravel()

        self._dist_cache: dict[tuple[int | None, int | None], PriorDistribution] = {}
        self._entropy_cache: dict[tuple[int | None, int | None], float] = {}
        # bound the dense-vector cache, not the per-key entropy floats
        self._dist_cache_cap = max(256, (1 << 22) // max(v, 1))

    @classmethod
    def from_corpus(cls, vocab: Vocabulary, sequences, **hyper) -> "NGramPrior":
        """Count bigrams within each sequence (no counting across boundaries)."""
        v = vocab.size
        prev_ids: list[np.ndarray] = []
        next_ids: list[np.ndarray] = []
        unigram = np.zeros(v, dtype=np.float64)
        for seq in sequences:
            arr = np.asarray(seq, dtype=np.int64)
            if arr.size == 0:
                continue
            if (arr < 0).any() or (arr >= v).any():
                raise ValueError("corpus token id outside vocabulary")
            unigram += np.bincount(arr, minlength=v)
            if arr.size >= 2:
                prev_ids.append(arr[:-1])
                next_ids.append(arr[1:])
        if prev_ids:
            rows = np.concatenate(prev_ids)
            cols = np.concatenate(next_ids)
            data = np.ones(rows.size, dtype=np.float64)
            forward = sp.coo_matrix((data, (rows, cols)), shape=(v, v)).tocsr()
        else:
            forward = sp.csr_matrix((v, v), dtype=np.float64)
        forward.sum_duplicates()
        return cls(vocab, forward, unigram, **hyper)

    def _neighbor(self, ids: np.ndarray, position: int, step: int) -> int | None:
        j = position + step
        if j < 0 or j >= ids.size:
            return None
        value = int(ids[j])
        if value == self.vocab.mask_sentinel:
            return None
        if not 0 <= value < self.vocab.size:
            raise ValueError(f"context token id {value} outside vocabulary")
        return value

    def _smoothed_forward(self, left: int) -> np.ndarray:
        row = self._forward.getrow(left).toarray().ravel()
        denom = self._forward_row_totals[left] + self.alpha * self.vocab.size
        return (row + self.alpha) / denom

    def _smoothed_backward(self, right: int) -> np.ndarray:
        row = self._backward.getrow(right).toarray().ravel()
        denom = self._backward_row_totals[right] + self.alpha * self.vocab.size
        return (row + self.alpha) / denom

    def _distribution(self, left: int | None, right: int | None) -> PriorDistribution:
        key = (left, right)
        cached = self._dist_cache.get(key)
        if cached is not None:
            return cached
        parts: list[tuple[float, np.ndarray]] = [(self.lambda_unigram, self._unigram_probs)]
        if left is not None:
            parts.append((self.lambda_forward, self._smoothed_forward(left)))
        if right is not None:
            parts.append((self.lambda_backward, self._smoothed_backward(right)))
        weight_total = sum(w for w, _ in parts)
        if weight_total <= 0:
            # every weighted component dropped out; the unigram is all that's left
            probs = self._unigram_probs.copy()
        else:
            probs = np.zeros(self.vocab.size, dtype=np.float64)
            for w, component in parts:
                if w > 0:
                    probs += (w / weight_total) * component
        dist = PriorDistribution.from_probs(probs)
        if len(self._dist_cache) >= self._dist_cache_cap:
            self._dist_cache.clear()
        self._dist_cache[key] = dist
        return dist

    def query(self, ctx, positions):
        ids, pos = self._checked_context(ctx, positions)
        out: dict[int, PriorDistribution] = {}
        for p in pos:
            left = self._neighbor(ids, p, -1)
            right = self._neighbor(ids, p, +1)
            out[p] = self._distribution(left, right)
        return out

    def prior_entropy_bits(self, ctx, position: int) -> float:
        """Entropy of the prior at one position; the position itself is ignored."""
        ids = _context_ids(ctx)
        left = self._neighbor(ids, position, -1)
        right = self._neighbor(ids, position, +1)
        key = (left, right)
        cached = self._entropy_cache.get(key)
        if cached is None:
            cached = self._distribution(left, right).entropy_bits()
            self._entropy_cache[key] = cached
        return cached

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            format_version=np.int64(self.FORMAT_VERSION),
            lambdas=np.array([self.lambda_forward, self.lambda_backward, self.lambda_unigram]),
            alpha=np.float64(self.alpha),
            vocab=np.array(self.vocab.entries, dtype=np.str_),
            unigram=self._unigram,
            forward_data=self._forward.data,
            forward_indices=self._forward.indices,
            forward_indptr=self._forward.indptr,
        )

    @classmethod
    def load(cls, path) -> "NGramPrior":
        with np.load(path, allow_pickle=False) as blob:
            version = int(blob["format_version"])
            if version != cls.FORMAT_VERSION:
                raise ValueError(f"unsupported model file version {version}")
            vocab = Vocabulary(tuple(str(t) for t in blob["vocab"]))
            v = vocab.size
            forward = sp.csr_matrix(
                (blob["forward_data"], blob["forward_indices"], blob["forward_indptr"]),
                shape=(v, v),
            )
            lf, lb, lu = (float(x) for x in blob["lambdas"])
            return cls(
                vocab,
                forward,
                blob["unigram"],
                lambda_forward=lf,
                lambda_backward=lb,
                lambda_unigram=lu,
                alpha=float(blob["alpha"]),
            )


class ExactJointPrior(PriorModel):
    """Exact conditionals from a full joint table over V^T sequences.

    Usable only at toy scale (V^T <= 1e6); exists so the iterative detector can
    be checked against genuine conditionals and brute-force posteriors.
    """

    MAX_CELLS = 1_000_000

    def __init__(self, vocab: Vocabulary, joint: np.ndarray, *, floor: float = 1e-9):
        table = np.asarray(joint, dtype=np.float64)
        v = vocab.size
        if table.ndim < 1 or any(dim != v for dim in table.shape):
            raise ValueError("joint table axes must all have length V")
        if table.size > self.MAX_CELLS:
            raise ValueError(f"joint table with {table.size} cells exceeds the toy-scale guard")
        if (table < 0).any():
            raise ValueError("joint table has negative mass")
        if abs(table.sum() - 1.0) > 1e-9:
            raise ValueError("joint table must sum to 1 within 1e-9")
        if not 0 < floor < 1:
            raise ValueError("smoothing floor must lie in (0, 1)")
        self.vocab = vocab
        self.block_len = table.ndim
        self.floor = float(floor)
        self._table = table

    def conditional(self, ids, position: int) -> PriorDistribution:
        """P(token at ``position`` | non-sentinel tokens elsewhere).

        Sentinel positions (including ``position`` itself) are marginalized out.
        The result is floor-mixed with the uniform distribution so it is
        strictly positive even for deterministic joints.
        """
        ids = _context_ids(ids)
        if ids.size != self.block_len:
            raise ValueError(f"expected context of length {self.block_len}")
        v = self.vocab.size
        index: list[object] = []
        axis_of_position = 0
        for j in range(self.block_len):
            known = j != position and ids[j] != self.vocab.mask_sentinel
            if known:
                value = int(ids[j])
                if not 0 <= value < v:
                    raise ValueError(f"context token id {value} outside vocabulary")
                index.append(value)
            else:
                if j < position:
                    axis_of_position += 1
                index.append(slice(None))
        sub = self._table[tuple(index)]
        other_axes = tuple(a for a in range(sub.ndim) if a != axis_of_position)
        vec = sub.sum(axis=other_axes) if other_axes else sub
        total = vec.sum()
        base = vec / total if total > 0 else np.full(v, 1.0 / v)
        mixed = (1.0 - self.floor) * base + self.floor / v
        return PriorDistribution.from_probs(mixed)

    def query(self, ctx, positions):
        ids, pos = self._checked_context(ctx, positions)
        return {p: self.conditional(ids, p) for p in pos}


def exact_conditional(model: ExactJointPrior, ids, position: int) -> PriorDistribution:
    """True conditional of one position given all the others (value at
    ``position`` is ignored, per the blanking contract)."""
    blanked = blank_position(_context_ids(ids), position, model.vocab.mask_sentinel)
    return model.conditional(blanked, position)


class RemotePrior(PriorModel):
    """Client for the fill-mask wire protocol (POST /v1/priors).

    Sends one request per query; the sentinel travels as -1. Sparse responses
    are expanded and renormalized locally. With ``fallback_uniform`` set, any
    sidecar failure degrades to the uniform prior instead of raising.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        endpoint: str,
        *,
        top_k: int | None = None,
        timeout_s: float = 30.0,
        fallback_uniform: bool = False,
        session: requests.Session | None = None,
    ):
        if top_k is None:
            top_k = min(64, vocab.size)
        if not 1 <= top_k <= vocab.size:
            raise ValueError("top_k must lie in [1, V]")
        self.vocab = vocab
        self.endpoint = endpoint.rstrip("/")
        self.top_k = top_k
        self.timeout_s = timeout_s
        self.fallback_uniform = fallback_uniform
        self._session = session or requests.Session()

    def _post(self, route: str, payload: dict) -> dict:
        try:
            resp = self._session.post(
                self.endpoint + route, json=payload, timeout=self.timeout_s
            )
        except (requests.Timeout, requests.ConnectionError) as exc:
            raise SidecarTransportError(f"sidecar unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise SidecarProtocolError(
                f"sidecar returned HTTP {resp.status_code}: {resp.text[:200]}"
            )
        try:
            return resp.json()
        except (json.JSONDecodeError, ValueError) as exc:
            raise SidecarProtocolError(f"malformed sidecar response: {exc}") from exc

    def _parse_positions(self, body: dict, wanted: list[int]) -> dict[int, PriorDistribution]:
        try:
            blocks = body["positions"]
            parsed: dict[int, PriorDistribution] = {}
            for block in blocks:
                idx = int(block["index"])
                entries = block["entries"]
                ids = np.array([int(e["id"]) for e in entries], dtype=np.int64)
                logps = np.array([float(e["logp"]) for e in entries], dtype=np.float64)
                tail = block.get("tail_logp")
                tail_value = None if tail is None else float(tail)
                parsed[idx] = PriorDistribution.from_sparse(
                    self.vocab.size, ids, logps, tail_value
                )
        except OutOfRangeTokenError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise SidecarProtocolError(f"malformed priors payload: {exc}") from exc
        missing = [p for p in wanted if p not in parsed]
        if missing:
            raise SidecarProtocolError(f"sidecar response missing positions {missing}")
        return parsed

    def query(self, ctx, positions):
        ids, pos = self._checked_context(ctx, positions)
        wire_tokens = np.where(ids == self.vocab.mask_sentinel, -1, ids).tolist()
        try:
            body = self._post(
                "/v1/priors",
                {"tokens": wire_tokens, "positions": pos, "top_k": self.top_k},
            )
            parsed = self._parse_positions(body, pos)
        except SidecarError:
            if not self.fallback_uniform:
                raise
            uniform = PriorDistribution.uniform(self.vocab.size)
            return {p: uniform for p in pos}
        return {p: parsed[p] for p in pos}


class RemoteEmbedder:
    """Client for the sentence-embedding route (POST /v1/embed)."""

    def __init__(
        self,
        endpoint: str,
        *,
        timeout_s: float = 30.0,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.timeout_s = timeout_s
        self._session = session or requests.Session()

    def embed(self, token_ids) -> np.ndarray:
        tokens = [int(t) for t in np.asarray(token_ids, dtype=np.int64)]
        try:
            resp = self._session.post(
                self.endpoint + "/v1/embed", json={"tokens": tokens}, timeout=self.timeout_s
            )
        except (requests.Timeout, requests.ConnectionError) as exc:
            raise SidecarTransportError(f"sidecar unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise SidecarProtocolError(
                f"sidecar returned HTTP {resp.status_code}: {resp.text[:200]}"
            )
        try:
            vec = np.asarray(resp.json()["embedding"], dtype=np.float64)
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise SidecarProtocolError(f"malformed embedding payload: {exc}") from exc
        if vec.ndim != 1 or vec.size == 0:
            raise SidecarProtocolError("embedding must be a non-empty vector")
        return vec
