"""Brute-force reference implementations for tiny instances.

Everything here recomputes a result the library obtains another way: exact
per-token posteriors by full enumeration, the masking stopping index by a
direct closed-form scan, bit clamping by exhaustive search. The point is
independence: none of these call into the code paths they are used to check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, logsumexp

from .channel import ChannelConfig, derived_rng, draw_realization, transmit
from .detector import DetectionConfig, detect, initial_estimate
from .modem import TokenModulator, make_constellation
from .priors import ExactJointPrior, PriorDistribution, PriorModel
from .vocab import TokenSequence, Vocabulary, mask

__all__ = [
    "exact_map_estimates",
    "ConstantTruthPrior",
    "stopping_scan",
    "hamming_clamp_reference",
    "run_map_oracle",
    "run_oracle_suite",
]


def exact_map_estimates(joint: np.ndarray, tables: dict[int, np.ndarray]) -> np.ndarray:
    """Per-token argmax of the true posterior, by summing over every sequence.

    ``tables`` maps transmitted positions to their log-likelihood vectors;
    positions without a table contribute no observation.
    """
    block_len = joint.ndim
    v = joint.shape[0]
    with np.errstate(divide="ignore"):
        log_post = np.log(np.asarray(joint, dtype=np.float64))
    for i, table in tables.items():
        shape = [1] * block_len
        shape[i] = v
        log_post = log_post + np.asarray(table).reshape(shape)
    estimates = np.empty(block_len, dtype=np.int64)
    for i in range(block_len):
        others = tuple(a for a in range(block_len) if a != i)
        marginal = logsumexp(log_post, axis=others)
        estimates[i] = int(np.argmax(marginal))
    return estimates


class ConstantTruthPrior(PriorModel):
    """Synthetic prior that always puts probability q on the true token.

    Every position has the same entropy, so greedy selection walks the indices
    in order and the masking controller sees a constant prior-probability
    series -- exactly the setting the closed-form stopping scan assumes.
    """

    def __init__(self, vocab: Vocabulary, truth: np.ndarray, q: float):
        if not 0.0 < q < 1.0:
            raise ValueError("q must lie strictly between 0 and 1")
        self.vocab = vocab
        self.truth = np.asarray(truth, dtype=np.int64)
        self.q = float(q)
        tail = (1.0 - q) / (vocab.size - 1)
        self._entropy = float(-q * math.log2(q) - (1.0 - q) * math.log2(tail))

    def prior_entropy_bits(self, ctx, position: int) -> float:
        # constant by construction; lets greedy selection skip dense expansions
        return self._entropy

    def _dist_for(self, position: int) -> PriorDistribution:
        v = self.vocab.size
        probs = np.full(v, (1.0 - self.q) / (v - 1))
        probs[self.truth[position]] = self.q
        return PriorDistribution.from_probs(probs)

    def query(self, ctx, positions):
        _, pos = self._checked_context(ctx, positions)
        return {p: self._dist_for(p) for p in pos}


def _ber_closed_form(power: float, gamma: float, bits_per_symbol: int) -> float:
    # written out independently of the library's ber()
    m = bits_per_symbol
    root = math.sqrt(2.0**m)
    scale = root * math.log2(root)
    x = math.sqrt(3.0 * power * gamma / (2.0 * (2.0**m - 1.0)))
    return ((root - 1.0) / scale) * float(erfc(x)) + ((root - 2.0) / scale) * float(erfc(3.0 * x))


def stopping_scan(
    prior_true: float,
    block_len: int,
    p_tot: float,
    gamma: float,
    bits_per_symbol: int,
    bits_per_token: int,
    criterion: str,
) -> int:
    """First step where the transmit branch beats the mask branch.

    Evaluates the two closed forms directly for n = 0, 1, ... and returns the
    crossing index; the geometric means accumulate every step from n = 0 on.
    Returns T-1 (the cap) when no crossing occurs.
    """
    t = block_len
    log_q = math.log(prior_true)
    sum_mask = 0.0
    sum_tx = 0.0
    for n in range(t - 1):
        pb_mask = _ber_closed_form(p_tot / (t - n - 1), gamma, bits_per_symbol)
        pb_tx = _ber_closed_form(p_tot / (t - n), gamma, bits_per_symbol)
        log_mask = (t - n - 1) * bits_per_token * math.log1p(-pb_mask) + log_q
        log_tx = (t - n) * bits_per_token * math.log1p(-pb_tx)
        if criterion == "instantaneous":
            crossed = log_tx > log_mask
        else:
            sum_mask += log_mask
            sum_tx += log_tx
            crossed = sum_tx / (n + 1) > sum_mask / (n + 1)
        if crossed:
            return n
    return t - 1


def hamming_clamp_reference(value: int, vocab: Vocabulary) -> int:
    """Exhaustive nearest-valid-id search on bit patterns, lowest id on ties."""
    width = vocab.bits_per_token
    best_id, best_dist = 0, width + 1
    for cand in range(vocab.size):
        dist = bin(cand ^ value).count("1")
        if dist < best_dist:
            best_id, best_dist = cand, dist
    return best_id


@dataclass
class MapOracleResult:
    trials: int
    exact_accuracy: float
    iterative_accuracy: float
    ml_accuracy: float


def chain_joint(rng: np.random.Generator, vocab_size: int, block_len: int, concentration: float) -> np.ndarray:
    """Random first-order chain joint: informative local structure, so a partly
    wrong context still carries signal (the regime token sequences live in)."""
    v = vocab_size
    start = rng.dirichlet(np.ones(v))
    transition = np.stack([rng.dirichlet(np.full(v, concentration)) for _ in range(v)])
    joint = start
    for _ in range(block_len - 1):
        joint = joint[..., None] * transition
    return joint


def run_map_oracle(
    n_trials: int,
    seed: int,
    *,
    snr_db: float = 10.0,
    vocab_size: int = 8,
    block_len: int = 4,
    transition_concentration: float = 0.3,
    detection: DetectionConfig | None = None,
) -> MapOracleResult:
    """Exact MAP (full enumeration) vs the iterative detector vs plain ML.

    Each trial draws a chain-structured joint, samples the truth from it,
    transmits every token, and detects three ways on the same received block.
    """
    vocab = Vocabulary.synthetic(vocab_size)
    cfg = ChannelConfig(snr_db=snr_db, p_tot=float(block_len), block_len=block_len, bits_per_symbol=2)
    modulator = TokenModulator(vocab, make_constellation(2))
    det_cfg = detection or DetectionConfig()
    v, t = vocab_size, block_len

    counts = np.zeros(3, dtype=np.int64)  # exact, iterative, ml token hits
    for trial in range(n_trials):
        rng = derived_rng(seed, trial, 100)
        joint = chain_joint(rng, v, t, transition_concentration)
        flat_index = rng.choice(v**t, p=joint.ravel())
        truth = np.array(np.unravel_index(flat_index, joint.shape), dtype=np.int64)

        seq = TokenSequence(truth)
        realization = draw_realization(cfg, seed=seed * 1_000_003 + trial)
        block = transmit(mask(seq, (), vocab), realization, cfg, modulator)
        tables = {
            int(i): modulator.log_likelihood_table(
                block.y[i], realization.h, block.power_per_symbol, realization.noise_variance
            )
            for i in block.unmasked_indices()
        }

        exact = exact_map_estimates(joint, tables)
        ml = initial_estimate(block, tables, vocab)
        prior = ExactJointPrior(vocab, joint)
        iterative = detect(block, tables, prior, det_cfg, vocab).final

        counts[0] += int((exact == truth).sum())
        counts[1] += int((iterative == truth).sum())
        counts[2] += int((ml == truth).sum())

    total = n_trials * t
    return MapOracleResult(
        trials=n_trials,
        exact_accuracy=counts[0] / total,
        iterative_accuracy=counts[1] / total,
        ml_accuracy=counts[2] / total,
    )


def run_oracle_suite(seed: int = 0, map_trials: int = 200) -> list[tuple[str, bool, str]]:
    """Tiny-instance brute-force checks; returns (name, passed, detail) rows."""
    from . import masker
    from .priors import exact_conditional
    from .vocab import bits_to_token, token_to_bits

    results: list[tuple[str, bool, str]] = []

    # 1) bit clamping against exhaustive search
    vocab = Vocabulary.synthetic(21)  # 5-bit width, 11 invalid patterns
    ok = all(
        bits_to_token(
            ((value >> np.arange(vocab.bits_per_token - 1, -1, -1)) & 1), vocab
        )
        == hamming_clamp_reference(value, vocab)
        for value in range(1 << vocab.bits_per_token)
    )
    results.append(("hamming-clamp", ok, "all 5-bit patterns against exhaustive search"))

    # 2) exact-joint conditionals against direct enumeration
    rng = derived_rng(seed, 1)
    v, t = 3, 3
    joint = rng.dirichlet(np.ones(v**t)).reshape((v,) * t)
    prior = ExactJointPrior(Vocabulary.synthetic(v), joint, floor=1e-12)
    worst = 0.0
    for _ in range(20):
        ids = rng.integers(0, v, size=t)
        position = int(rng.integers(t))
        got = exact_conditional(prior, ids, position).probs()
        want = np.zeros(v)
        for cand in range(v):
            full = ids.copy()
            full[position] = cand
            want[cand] = joint[tuple(full)]
        want = want / want.sum()
        want = (1 - 1e-12) * want + 1e-12 / v
        worst = max(worst, float(np.max(np.abs(got - want))))
    results.append(("exact-conditional", worst < 1e-12 + 1e-15, f"max deviation {worst:.2e}"))

    # 3) stopping index against the direct closed-form scan
    vocab128 = Vocabulary.synthetic(30522)
    mismatches = []
    for q in (0.5, 0.9, 0.99):
        for snr_db in (0.0, 10.0):
            t_len = 128
            gamma = 10.0 ** (snr_db / 10.0)
            truth = derived_rng(seed, 2).integers(0, vocab128.size, size=t_len)
            model = ConstantTruthPrior(vocab128, truth, q)
            for criterion in ("instantaneous", "average"):
                plan = masker.plan_masking(
                    TokenSequence(truth),
                    model,
                    gamma=gamma,
                    p_tot=float(t_len),
                    bits_per_symbol=2,
                    vocab=vocab128,
                    stopping=masker.StoppingConfig(criterion=criterion),
                )
                want = stopping_scan(
                    q, t_len, float(t_len), gamma, 2, vocab128.bits_per_token, criterion
                )
                if plan.n_masked != want:
                    mismatches.append((q, snr_db, criterion, plan.n_masked, want))
    results.append(
        ("stopping-scan", not mismatches, f"{len(mismatches)} mismatches" if mismatches else "all crossings match")
    )

    # 4) exact MAP vs iterative vs ML at toy scale
    res = run_map_oracle(map_trials, seed)
    ok = res.iterative_accuracy >= 0.95 * res.exact_accuracy and res.iterative_accuracy >= res.ml_accuracy
    results.append(
        (
            "map-detection",
            ok,
            f"exact {res.exact_accuracy:.3f}, iterative {res.iterative_accuracy:.3f}, ml {res.ml_accuracy:.3f}",
        )
    )
    return results
