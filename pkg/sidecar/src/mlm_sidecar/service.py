"""Model plumbing behind the HTTP routes, framework-free and unit-testable.

The service owns tokenizer-id alignment: clients must use the id space dumped
by the vocabulary route. Internally every request sequence is wrapped in the
model's [CLS]/[SEP] pair before the forward pass (positions are shifted
accordingly), which is invisible on the wire.

One forward pass serves each priors request, with every requested position
blanked simultaneously; this differs from querying the model once per
position (each with only that position blanked) and is a documented deviation.
"""

from __future__ import annotations

import math

import torch
from transformers import AutoModel, AutoModelForMaskedLM, AutoTokenizer

from .config import SidecarConfig


class InvalidRequest(Exception):
    """Malformed request payload (HTTP 400)."""


class PositionNotBlanked(InvalidRequest):
    """A queried position does not carry the blank marker (HTTP 422)."""


class MaskedLMService:
    def __init__(self, cfg: SidecarConfig):
        self.cfg = cfg
        self.tokenizer = AutoTokenizer.from_pretrained(cfg.model)
        self.mlm = AutoModelForMaskedLM.from_pretrained(cfg.model)
        self.mlm.eval()
        self.vocab_size = len(self.tokenizer)
        model_vocab = int(self.mlm.config.vocab_size)
        if model_vocab != self.vocab_size:
            raise ValueError(
                f"tokenizer ({self.vocab_size}) and model ({model_vocab}) vocabulary sizes differ"
            )
        if cfg.embed_model and cfg.embed_model != cfg.model:
            self.encoder = AutoModel.from_pretrained(cfg.embed_model)
        else:
            # the MLM's own encoder: same checkpoint, no freshly initialized heads
            self.encoder = self.mlm.base_model
        self.encoder.eval()
        positions_budget = int(self.mlm.config.max_position_embeddings) - 2
        self.max_sequence_length = min(cfg.max_sequence_length, positions_budget)

    # -- request validation ---------------------------------------------------

    def _check_tokens(self, tokens: list[int]) -> None:
        if not tokens:
            raise InvalidRequest("tokens must be non-empty")
        if len(tokens) > self.max_sequence_length:
            raise InvalidRequest(
                f"sequence length {len(tokens)} exceeds the limit {self.max_sequence_length}"
            )
        for value in tokens:
            if value != -1 and not 0 <= value < self.vocab_size:
                raise InvalidRequest(f"token id {value} outside [0, {self.vocab_size}) and not -1")

    def _input_ids(self, tokens: list[int]) -> torch.Tensor:
        mask_id = self.tokenizer.mask_token_id
        body = [mask_id if value == -1 else value for value in tokens]
        ids = [self.tokenizer.cls_token_id, *body, self.tokenizer.sep_token_id]
        return torch.tensor([ids], dtype=torch.long)

    # -- routes ----------------------------------------------------------------

    def vocab_payload(self) -> dict:
        tokens = self.tokenizer.convert_ids_to_tokens(list(range(self.vocab_size)))
        return {"tokens": tokens, "mask_string": self.tokenizer.mask_token}

    def fill_positions(self, tokens: list[int], positions: list[int], top_k: int | None) -> dict:
        self._check_tokens(tokens)
        if not positions:
            raise InvalidRequest("positions must be non-empty")
        for p in positions:
            if not 0 <= p < len(tokens):
                raise InvalidRequest(f"position {p} outside the sequence")
            if tokens[p] != -1:
                raise PositionNotBlanked(f"position {p} is not blanked")
        if top_k is None:
            top_k = min(self.cfg.default_top_k, self.vocab_size)
        if not 1 <= top_k <= self.vocab_size:
            raise InvalidRequest(f"top_k must lie in [1, {self.vocab_size}]")

        with torch.no_grad():
            logits = self.mlm(input_ids=self._input_ids(tokens)).logits[0]
        blocks = []
        for p in positions:
            logp = torch.log_softmax(logits[p + 1], dim=-1)  # +1 for [CLS]
            top = torch.topk(logp, top_k)  # sorted by descending probability
            entries = [
                {"id": int(i), "logp": float(v)} for i, v in zip(top.indices, top.values)
            ]
            if top_k == self.vocab_size:
                tail_logp = None
            else:
                tail_mass = -torch.expm1(torch.logsumexp(top.values, dim=0))
                tail_logp = float(math.log(tail_mass)) if tail_mass > 0 else None
            blocks.append({"index": p, "entries": entries, "tail_logp": tail_logp})
        return {"positions": blocks}

    def embed(self, tokens: list[int]) -> dict:
        self._check_tokens(tokens)
        with torch.no_grad():
            hidden = self.encoder(input_ids=self._input_ids(tokens)).last_hidden_state[0]
        pooled = hidden[1:-1].mean(dim=0)  # mean over the real tokens, specials excluded
        norm = pooled.norm()
        if norm > 0:
            pooled = pooled / norm
        return {"embedding": [float(x) for x in pooled]}
