import math

import numpy as np
import pytest
from scipy.special import erfc

from tokencom.masker import (
    RunningGeometricMean,
    StoppingConfig,
    StoppingState,
    ber,
    detection_prob_bounds,
    detection_prob_log_bounds,
    geometric_mean_update,
    plan_masking,
    select_next,
    tx_prior_entropy,
)
from tokencom.oracle import ConstantTruthPrior, stopping_scan
from tokencom.priors import NGramPrior, PriorDistribution, PriorModel, UniformPrior
from tokencom.vocab import TokenSequence, Vocabulary, mask


class SpikedPrior(PriorModel):
    """One designated position gets a near-one-hot prior, the rest are uniform."""

    def __init__(self, vocab, hot_position, hot_token):
        self.vocab = vocab
        self.hot_position = hot_position
        self.hot_token = hot_token

    def query(self, ctx, positions):
        _, pos = self._checked_context(ctx, positions)
        out = {}
        for p in pos:
            if p == self.hot_position:
                probs = np.full(self.vocab.size, 1e-9)
                probs[self.hot_token] = 1.0 - 1e-9 * (self.vocab.size - 1)
                out[p] = PriorDistribution.from_probs(probs)
            else:
                out[p] = PriorDistribution.uniform(self.vocab.size)
        return out


class TestTxPriorEntropy:
    def test_uniform_is_log2_v(self, vocab8):
        model = UniformPrior(vocab8)
        ids = np.array([0, 1, 2, 3])
        assert tx_prior_entropy(1, ids, model) == pytest.approx(3.0, abs=1e-12)

    def test_one_hot_is_zero(self, vocab8):
        model = SpikedPrior(vocab8, 2, 5)
        ids = np.array([0, 1, 2, 3])
        assert tx_prior_entropy(2, ids, model) == pytest.approx(0.0, abs=1e-6)

    def test_hand_computed(self, vocab4):
        class Fixed(PriorModel):
            def __init__(self, vocab):
                self.vocab = vocab

            def query(self, ctx, positions):
                _, pos = self._checked_context(ctx, positions)
                d = PriorDistribution.from_probs(np.array([0.7, 0.1, 0.1, 0.1]))
                return {p: d for p in pos}

        assert tx_prior_entropy(0, np.array([1, 2]), Fixed(vocab4)) == pytest.approx(
            1.3568, abs=5e-5
        )


class TestSelectNext:
    def test_one_hot_position_wins(self, vocab8):
        model = SpikedPrior(vocab8, 3, 6)
        seq = TokenSequence(np.array([0, 1, 2, 6, 4]))
        picked = select_next(mask(seq, (), vocab8), model)
        assert picked.index == 3
        assert picked.prior_true == pytest.approx(1.0, abs=1e-6)

    def test_all_equal_breaks_to_lowest_index(self, vocab8):
        model = UniformPrior(vocab8)
        seq = TokenSequence(np.array([0, 1, 2, 3]))
        assert select_next(mask(seq, (), vocab8), model).index == 0
        assert select_next(mask(seq, (0, 2), vocab8), model).index == 1

    def test_matches_exhaustive_enumeration(self):
        vocab = Vocabulary(("a", "b"))
        model = NGramPrior.from_corpus(vocab, [[0, 1, 0, 1, 0, 1]])
        seq = TokenSequence(np.array([0, 1, 0, 1]))
        for mask_set in [(), (0,), (3,), (0, 3)]:
            masked = mask(seq, mask_set, vocab)
            candidates = [i for i in range(4) if i not in mask_set]
            entropies = []
            for i in candidates:
                ctx = np.array(masked.ids)
                ctx[i] = vocab.mask_sentinel
                entropies.append(model.query(ctx, [i])[i].entropy_bits())
            want = candidates[int(np.argmin(entropies))]
            assert select_next(masked, model).index == want

    def test_exhausted_candidates_rejected_at_type_level(self, vocab8):
        # a fully-masked sequence cannot even be constructed
        seq = TokenSequence(np.array([0, 1]))
        with pytest.raises(ValueError):
            mask(seq, (0, 1), vocab8)


class TestBer:
    def test_4qam_reduces_to_half_erfc(self):
        for pg in (0.25, 1.0, 4.0):
            assert ber(pg, 1.0, 2) == pytest.approx(0.5 * erfc(math.sqrt(pg / 2)), rel=1e-12)

    def test_known_value(self):
        assert ber(1.0, 1.0, 2) == pytest.approx(0.15865525393145707, abs=1e-12)

    def test_vanishes_at_high_snr(self):
        assert ber(1e6, 1.0, 2) == 0.0

    def test_4qam_second_term_coefficient_zero(self):
        # sqrt(4) - 2 = 0: value must equal the first term alone even at p = 0
        assert ber(0.0, 1.0, 2) == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("m", [2, 4, 6])
    def test_strictly_decreasing(self, m):
        grid = np.linspace(0.05, 40.0, 200)
        values = [ber(p, 1.0, m) for p in grid]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_odd_m_rejected(self):
        with pytest.raises(ValueError):
            ber(1.0, 1.0, 3)


class TestDetectionProbBounds:
    def test_frozen_spreadsheet_values(self):
        # T=128, 4-QAM, V=30522, gamma=10, n=10, prior_true=0.9, P_tot=128
        pd0, pd1 = detection_prob_bounds(10, 128, 128.0, 10.0, 2, 30522, 0.9)
        assert pd0 == pytest.approx(0.3940429425378038, abs=1e-10)
        assert pd1 == pytest.approx(0.41654519441797444, abs=1e-10)

    def test_perfect_channel_and_prior(self):
        pd0, pd1 = detection_prob_bounds(5, 64, 64.0, 1e9, 2, 256, 1.0)
        assert pd0 == pytest.approx(1.0, abs=1e-12)
        assert pd1 == pytest.approx(1.0, abs=1e-12)

    def test_boundary_step_uses_full_power(self):
        t, p_tot, gamma, bits = 16, 16.0, 2.0, 4
        log_mask, _ = detection_prob_log_bounds(t - 2, t, p_tot, gamma, 2, bits, 0.5)
        want = 1 * bits * math.log1p(-ber(p_tot / 1, gamma, 2)) + math.log(0.5)
        assert log_mask == pytest.approx(want, rel=1e-12)

    def test_transmit_branch_nondecreasing_in_n(self):
        t = 64
        logs = [
            detection_prob_log_bounds(n, t, 64.0, 0.7, 2, 512, 0.5)[1] for n in range(t - 1)
        ]
        assert all(b >= a for a, b in zip(logs, logs[1:]))

    def test_step_range_validated(self):
        with pytest.raises(ValueError):
            detection_prob_log_bounds(127, 128, 128.0, 1.0, 2, 15, 0.9)
        with pytest.raises(ValueError):
            detection_prob_log_bounds(0, 128, 128.0, 1.0, 2, 15, 0.0)


class TestGeometricMean:
    def test_constant_series(self):
        state = StoppingState()
        for _ in range(5):
            m0, m1 = geometric_mean_update(state, 0.3, 0.7)
        assert m0 == pytest.approx(0.3, rel=1e-12)
        assert m1 == pytest.approx(0.7, rel=1e-12)

    def test_two_value_example(self):
        state = StoppingState()
        geometric_mean_update(state, 0.5, 0.5)
        m0, m1 = geometric_mean_update(state, 0.125, 0.125)
        assert m0 == pytest.approx(0.25, rel=1e-12)  # sqrt(1/16)
        assert m1 == pytest.approx(0.25, rel=1e-12)

    def test_log_identity(self, rng):
        values = rng.uniform(0.01, 1.0, size=20)
        acc = RunningGeometricMean()
        for v in values:
            acc.push(v)
        assert acc.mean_log == pytest.approx(np.mean(np.log(values)), abs=1e-12)

    def test_empty_state_rejected(self):
        with pytest.raises(ValueError):
            RunningGeometricMean().mean


class TestPlanMasking:
    def _plan(self, q, t, gamma, criterion, seed=0, v=30522):
        vocab = Vocabulary.synthetic(v)
        truth = np.random.default_rng(seed).integers(0, v, size=t)
        model = ConstantTruthPrior(vocab, truth, q)
        plan = plan_masking(
            TokenSequence(truth),
            model,
            gamma=gamma,
            p_tot=float(t),
            bits_per_symbol=2,
            vocab=vocab,
            stopping=StoppingConfig(criterion=criterion),
        )
        return plan, vocab

    def test_error_free_channel_masks_nothing(self):
        plan, _ = self._plan(q=0.9, t=32, gamma=1e9, criterion="average", v=256)
        assert plan.n_masked == 0
        assert plan.stop_reason == "criterion"
        assert plan.steps[-1].masked is False

    def test_uniform_prior_masks_nothing_at_moderate_snr(self):
        vocab = Vocabulary.synthetic(256)
        truth = np.arange(32) % 256
        plan = plan_masking(
            TokenSequence(truth),
            UniformPrior(vocab),
            gamma=1.0,
            p_tot=32.0,
            bits_per_symbol=2,
            vocab=vocab,
        )
        assert plan.n_masked == 0

    @pytest.mark.parametrize("criterion", ["instantaneous", "average"])
    @pytest.mark.parametrize("q", [0.5, 0.9, 0.99])
    @pytest.mark.parametrize("snr_db", [0.0, 10.0])
    def test_matches_brute_force_scan(self, q, snr_db, criterion):
        t = 128
        gamma = 10.0 ** (snr_db / 10.0)
        plan, vocab = self._plan(q=q, t=t, gamma=gamma, criterion=criterion)
        want = stopping_scan(q, t, float(t), gamma, 2, vocab.bits_per_token, criterion)
        assert plan.n_masked == want

    def test_mask_grows_by_one_per_step(self):
        plan, _ = self._plan(q=0.99, t=32, gamma=0.2, criterion="average", v=256)
        masked_steps = [s for s in plan.steps if s.masked]
        assert len(masked_steps) == plan.n_masked
        assert len(set(s.index for s in masked_steps)) == len(masked_steps)
        for n, step in enumerate(plan.steps):
            assert step.step == n

    def test_cap_leaves_one_token(self):
        plan, _ = self._plan(q=0.999999, t=16, gamma=1e-6, criterion="average", v=4)
        assert plan.n_masked == 15
        assert plan.stop_reason == "cap"

    def test_deterministic(self):
        a, _ = self._plan(q=0.9, t=64, gamma=0.5, criterion="average", v=1024, seed=3)
        b, _ = self._plan(q=0.9, t=64, gamma=0.5, criterion="average", v=1024, seed=3)
        assert a.mask_set == b.mask_set

    def test_assumption_diagnostic_recorded(self):
        plan, _ = self._plan(q=0.9, t=32, gamma=0.2, criterion="average", v=256)
        assert 0.0 <= plan.assumption_violation_fraction <= 1.0
