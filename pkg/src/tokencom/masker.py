"""Transmitter-side masking: entropy-scored greedy selection and ratio control.

At step n (n tokens already masked) the transmitter scores every remaining
position by the entropy of its contextual prior, picks the most predictable
one, and asks whether masking it beats transmitting it. Both branches are
scored with a closed-form lower bound built from the Gray-QAM bit error rate:

    mask branch:     (1 - Pb(P/(T-n-1)))^((T-n-1)*B) * prior(true token)
    transmit branch: (1 - Pb(P/(T-n)))^((T-n)*B)

with B = ceil(log2 V) bits per token. The instantaneous criterion compares the
step's pair directly; the average criterion compares running geometric means
(the step-0 pair seeds the means, so the first comparison happens at n = 0).
Masking stops before the breaking step's token is masked, or at the hard cap
of T-1 masked tokens. All of it runs in the log domain: at low SNR the bounds
underflow any linear representation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .priors import PriorModel
from .vocab import MaskedSequence, TokenSequence, Vocabulary, blank_position, mask

__all__ = [
    "StoppingConfig",
    "SelectedCandidate",
    "MaskingStep",
    "MaskingPlan",
    "RunningGeometricMean",
    "geometric_mean_update",
    "tx_prior_entropy",
    "select_next",
    "ber",
    "detection_prob_log_bounds",
    "detection_prob_bounds",
    "plan_masking",
]

CRITERIA = ("instantaneous", "average")


@dataclass(frozen=True)
class StoppingConfig:
    criterion: str = "average"
    n_cap: int | None = None  # defaults to T-1 at planning time

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}")


def ber(power: float, gamma: float, bits_per_symbol: int) -> float:
    """Two-term erfc approximation of the Gray-coded square-QAM bit error rate.

    ``gamma`` is |h|^2/sigma^2. Implemented exactly as the closed form is
    written; for bits_per_symbol > 2 it can exceed 1/2 at very low SNR.
    """
    m = bits_per_symbol
    if m < 2 or m % 2 != 0:
        raise ValueError("square QAM requires an even number of bits per symbol >= 2")
    if power < 0 or gamma < 0:
        raise ValueError("power and gamma must be non-negative")
    root_order = 2.0 ** (m / 2)  # sqrt(2^m)
    denom = root_order * (m / 2)  # sqrt(2^m) * log2(sqrt(2^m))
    arg = math.sqrt(3.0 * power * gamma / (2.0 * (2**m - 1)))
    return ((root_order - 1) / denom) * erfc(arg) + ((root_order - 2) / denom) * erfc(3.0 * arg)


def detection_prob_log_bounds(
    n: int,
    block_len: int,
    p_tot: float,
    gamma: float,
    bits_per_symbol: int,
    bits_per_token: int,
    prior_true: float,
) -> tuple[float, float]:
    """Log of the (mask branch, transmit branch) detection-probability bounds."""
    t = block_len
    if not 0 <= n <= t - 2:
        raise ValueError(f"step index {n} outside [0, {t - 2}]")
    if not 0.0 < prior_true <= 1.0:
        raise ValueError("prior probability of the true token must lie in (0, 1]")
    pb_mask = ber(p_tot / (t - n - 1), gamma, bits_per_symbol)
    pb_tx = ber(p_tot / (t - n), gamma, bits_per_symbol)
    log_mask = (t - n - 1) * bits_per_token * math.log1p(-pb_mask) + math.log(prior_true)
    log_tx = (t - n) * bits_per_token * math.log1p(-pb_tx)
    return log_mask, log_tx


def detection_prob_bounds(
    n: int,
    block_len: int,
    p_tot: float,
    gamma: float,
    bits_per_symbol: int,
    vocab_size: int,
    prior_true: float,
) -> tuple[float, float]:
    """Linear-domain bound pair; underflows at low SNR, prefer the log variant."""
    bits_per_token = (vocab_size - 1).bit_length()
    log_mask, log_tx = detection_prob_log_bounds(
        n, block_len, p_tot, gamma, bits_per_symbol, bits_per_token, prior_true
    )
    return math.exp(log_mask), math.exp(log_tx)


class RunningGeometricMean:
    """Geometric mean of everything pushed so far, kept as a running log-sum."""

    def __init__(self):
        self._log_sum = 0.0
        self._count = 0

    def push_log(self, log_value: float) -> None:
        self._log_sum += float(log_value)
        self._count += 1

    def push(self, value: float) -> None:
        if value <= 0:
            raise ValueError("geometric mean requires positive values")
        self.push_log(math.log(value))

    @property
    def count(self) -> int:
        return self._count

    @property
    def mean_log(self) -> float:
        if self._count == 0:
            raise ValueError("no values pushed yet")
        return self._log_sum / self._count

    @property
    def mean(self) -> float:
        return math.exp(self.mean_log)


@dataclass
class StoppingState:
    mask_branch: RunningGeometricMean = field(default_factory=RunningGeometricMean)
    transmit_branch: RunningGeometricMean = field(default_factory=RunningGeometricMean)


def geometric_mean_update(
    state: StoppingState, prob_mask_branch: float, prob_transmit_branch: float
) -> tuple[float, float]:
    """Push one bound pair and return the current geometric means."""
    state.mask_branch.push(prob_mask_branch)
    state.transmit_branch.push(prob_transmit_branch)
    return state.mask_branch.mean, state.transmit_branch.mean


def tx_prior_entropy(position: int, ctx, model: PriorModel) -> float:
    """Entropy (bits) of the prior at ``position``, queried with it blanked."""
    if isinstance(ctx, MaskedSequence):
        ids = ctx.ids
    else:
        ids = np.asarray(ctx, dtype=np.int64)
    fast = getattr(model, "prior_entropy_bits", None)
    if fast is not None:
        return float(fast(ids, position))
    blanked = blank_position(ids, position, model.vocab.mask_sentinel)
    return model.query(blanked, [position])[position].entropy_bits()


@dataclass(frozen=True)
class SelectedCandidate:
    index: int
    entropy_bits: float
    prior_true: float  # prior probability of the candidate's actual token


def select_next(masked: MaskedSequence, model: PriorModel) -> SelectedCandidate:
    """Most predictable unmasked position (smallest prior entropy, lowest index
    on ties) plus the prior probability of the token actually sitting there."""
    candidates = masked.unmasked_indices()
    if candidates.size == 0:
        raise ValueError("no unmasked positions left to select")
    best_index = -1
    best_entropy = np.inf
    for i in candidates:
        i = int(i)
        h = tx_prior_entropy(i, masked.ids, model)
        if h < best_entropy:
            best_entropy = h
            best_index = i
    true_token = int(masked.ids[best_index])
    ctx = blank_position(masked.ids, best_index, model.vocab.mask_sentinel)
    dist = model.query(ctx, [best_index])[best_index]
    return SelectedCandidate(
        index=best_index, entropy_bits=float(best_entropy), prior_true=dist.probs()[true_token]
    )


@dataclass(frozen=True)
class MaskingStep:
    step: int  # n = tokens already masked when this candidate was scored
    index: int
    entropy_bits: float
    prior_true: float
    log_mask_branch: float
    log_transmit_branch: float
    log_mask_mean: float
    log_transmit_mean: float
    masked: bool  # False exactly for the breaking step


@dataclass
class MaskingPlan:
    mask_set: tuple[int, ...]
    steps: list[MaskingStep]
    stop_reason: str  # "criterion" or "cap"

    @property
    def n_masked(self) -> int:
        return len(self.mask_set)

    def masking_ratio(self, block_len: int) -> float:
        return self.n_masked / block_len

    @property
    def assumption_violation_fraction(self) -> float:
        """Fraction of consecutive masked steps where the selected token's
        prior probability increased (the bound derivation assumes it does not).
        Measured, never asserted.
        """
        truths = [s.prior_true for s in self.steps if s.masked]
        if len(truths) < 2:
            return 0.0
        diffs = np.diff(np.asarray(truths))
        return float(np.mean(diffs > 0))


def plan_masking(
    seq: TokenSequence,
    model: PriorModel,
    *,
    gamma: float,
    p_tot: float,
    bits_per_symbol: int,
    vocab: Vocabulary,
    stopping: StoppingConfig = StoppingConfig(),
) -> MaskingPlan:
    """Greedy entropy-ordered masking until the stopping criterion fires.

    Requires the channel gain-to-noise ratio ``gamma`` (perfect CSI at the
    transmitter). The step that trips the criterion is transmitted, so the
    returned mask holds exactly the tokens masked before it.
    """
    t = seq.length
    cap = t - 1 if stopping.n_cap is None else min(int(stopping.n_cap), t - 1)
    bits_per_token = vocab.bits_per_token
    instantaneous = stopping.criterion == "instantaneous"

    current = mask(seq, (), vocab)
    state = StoppingState()
    steps: list[MaskingStep] = []
    stop_reason = "cap"

    for n in range(cap):
        candidate = select_next(current, model)
        log_mask, log_tx = detection_prob_log_bounds(
            n, t, p_tot, gamma, bits_per_symbol, bits_per_token, candidate.prior_true
        )
        state.mask_branch.push_log(log_mask)
        state.transmit_branch.push_log(log_tx)
        mean_mask = state.mask_branch.mean_log
        mean_tx = state.transmit_branch.mean_log
        if instantaneous:
            fired = log_tx > log_mask
        else:
            fired = mean_tx > mean_mask
        steps.append(
            MaskingStep(
                step=n,
                index=candidate.index,
                entropy_bits=candidate.entropy_bits,
                prior_true=candidate.prior_true,
                log_mask_branch=log_mask,
                log_transmit_branch=log_tx,
                log_mask_mean=mean_mask,
                log_transmit_mean=mean_tx,
                masked=not fired,
            )
        )
        if fired:
            stop_reason = "criterion"
            break
        current = mask(seq, current.mask_set + (candidate.index,), vocab)

    return MaskingPlan(mask_set=current.mask_set, steps=steps, stop_reason=stop_reason)
