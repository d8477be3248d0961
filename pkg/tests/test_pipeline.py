import numpy as np
import pytest
import yaml

from tokencom.corpus import MarkovSource, read_id_sequences, segment_blocks, write_id_sequences
from tokencom.pipeline import (
    AGGREGATE_COLUMNS,
    TRIAL_COLUMNS,
    ExperimentConfig,
    ExperimentContext,
    bag_cosine,
    load_config,
    run_experiment,
    run_trial,
    sim_metric,
)
from tokencom.priors import NGramPrior
from tokencom.vocab import Vocabulary


V, T = 64, 16


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("exp")
    source = MarkovSource(V, seed=5)
    train = source.sample_stream(4000, seed=6)
    evaluation = source.sample_stream(800, seed=7)
    vocab_path = root / "vocab.txt"
    source.vocab.to_file(vocab_path)
    corpus_path = root / "train.txt"
    write_id_sequences(corpus_path, [train])
    dataset_path = root / "eval.txt"
    write_id_sequences(dataset_path, [evaluation])
    model = NGramPrior.from_corpus(source.vocab, [train], alpha=0.05)
    model_path = root / "prior.npz"
    model.save(model_path)
    return {
        "root": root,
        "vocab": str(vocab_path),
        "corpus": str(corpus_path),
        "dataset": str(dataset_path),
        "model": str(model_path),
    }


def base_config(ws, **overrides):
    kwargs = dict(
        dataset=ws["dataset"],
        vocab=ws["vocab"],
        block_len=T,
        modulation_bits=2,
        snr_grid_db=(10.0,),
        trials=4,
        seed=77,
        strategy="joint",
        prior_backend="ngram",
        prior_model=ws["model"],
        record_timing=False,
        out_dir=str(ws["root"] / "results"),
    )
    kwargs.update(overrides)
    return ExperimentConfig(**kwargs)


class TestCorpusIO:
    def test_sequence_file_roundtrip(self, tmp_path):
        seqs = [np.array([1, 2, 3]), np.array([9, 8])]
        path = tmp_path / "seqs.txt"
        write_id_sequences(path, seqs)
        back = read_id_sequences(path)
        assert len(back) == 2
        assert np.array_equal(back[0], seqs[0]) and np.array_equal(back[1], seqs[1])

    def test_segment_blocks_drops_tail(self):
        blocks = segment_blocks(np.arange(10), 4)
        assert len(blocks) == 2
        assert np.array_equal(blocks[0], [0, 1, 2, 3])
        assert np.array_equal(blocks[1], [4, 5, 6, 7])

    def test_markov_stream_in_range(self):
        source = MarkovSource(32, seed=1)
        stream = source.sample_stream(500, seed=2)
        assert stream.min() >= 0 and stream.max() < 32


class TestBagCosine:
    def test_identical(self):
        assert bag_cosine([1, 2, 3], [1, 2, 3], 8) == pytest.approx(1.0)

    def test_disjoint(self):
        assert bag_cosine([0, 0], [1, 2], 8) == pytest.approx(0.0)

    def test_hand_computed(self):
        # count vectors (2,1) and (1,2): cos = 4/5
        assert bag_cosine([1, 1, 2], [1, 2, 2], 4) == pytest.approx(0.8, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            bag_cosine([1], [1, 2], 4)


class FakeEmbedder:
    def __init__(self, table):
        self.table = table

    def embed(self, ids):
        return self.table[tuple(int(t) for t in ids)]


class TestSimMetric:
    def test_identical_sequences(self):
        emb = FakeEmbedder({(1, 2): np.array([0.5, 0.5])})
        assert sim_metric([1, 2], [1, 2], emb) == pytest.approx(1.0, abs=1e-6)

    def test_zero_vector_rejected(self):
        emb = FakeEmbedder({(1,): np.zeros(3), (2,): np.ones(3)})
        with pytest.raises(ValueError):
            sim_metric([1], [2], emb)

    def test_dimension_mismatch_rejected(self):
        emb = FakeEmbedder({(1,): np.ones(3), (2,): np.ones(4)})
        with pytest.raises(ValueError):
            sim_metric([1], [2], emb)


class TestConfigValidation:
    def test_fixed_ratio_requires_mask_ratio(self, workspace):
        with pytest.raises(ValueError):
            base_config(workspace, strategy="random-mask")

    def test_joint_rejects_mask_ratio(self, workspace):
        with pytest.raises(ValueError):
            base_config(workspace, mask_ratio=0.25)

    def test_ratio_cap(self, workspace):
        with pytest.raises(ValueError):
            base_config(workspace, strategy="random-mask", mask_ratio=0.99)

    def test_backend_fields(self, workspace):
        with pytest.raises(ValueError):
            base_config(workspace, prior_backend="ngram", prior_model=None)
        with pytest.raises(ValueError):
            base_config(workspace, prior_backend="remote", prior_model=None)

    def test_yaml_roundtrip(self, workspace, tmp_path):
        cfg_dict = {
            "dataset": workspace["dataset"],
            "vocab": workspace["vocab"],
            "block_len": T,
            "snr_grid_db": [0, 10],
            "trials": 2,
            "seed": 9,
            "strategy": "rx-only",
            "detection": {"max_refinements": 3, "entropy_threshold_bits": 5e-4},
            "prior": {"backend": "ngram", "model": workspace["model"]},
            "record_timing": False,
        }
        path = tmp_path / "cfg.yaml"
        path.write_text(yaml.safe_dump(cfg_dict))
        cfg = load_config(path)
        assert cfg.strategy == "rx-only"
        assert cfg.detection.max_refinements == 3
        assert cfg.snr_grid_db == (0.0, 10.0)

    def test_env_var_overrides_endpoint(self, workspace, tmp_path, monkeypatch):
        cfg_dict = {
            "dataset": workspace["dataset"],
            "vocab": workspace["vocab"],
            "block_len": T,
            "snr_grid_db": [10],
            "trials": 1,
            "seed": 9,
            "strategy": "rx-only",
            "prior": {"backend": "remote", "endpoint": "http://configured:1"},
        }
        path = tmp_path / "cfg.yaml"
        path.write_text(yaml.safe_dump(cfg_dict))
        monkeypatch.setenv("TOKENCOM_SIDECAR_URL", "http://overridden:2")
        cfg = load_config(path)
        assert cfg.prior_endpoint == "http://overridden:2"


class TestStrategies:
    @pytest.mark.parametrize(
        "strategy,ratio",
        [
            ("ml-only", None),
            ("rx-only", None),
            ("joint", None),
            ("random-mask", 0.25),
            ("parallel-mask", 0.25),
            ("sequential-mask", 0.25),
        ],
    )
    def test_run_trial_smoke(self, workspace, strategy, ratio):
        cfg = base_config(workspace, strategy=strategy, mask_ratio=ratio, trials=1)
        ctx = ExperimentContext(cfg)
        result = run_trial(ctx, 10.0, 0)
        assert 0.0 <= result.token_accuracy <= 1.0
        assert result.masking_ratio == result.n_masked / T
        if strategy in ("random-mask", "parallel-mask", "sequential-mask"):
            assert result.n_masked == int(np.floor(T * ratio))
        if strategy in ("ml-only", "rx-only"):
            assert result.n_masked == 0
        if strategy == "ml-only":
            assert result.mean_iterations == 0.0

    def test_ml_only_perfect_at_extreme_snr(self, workspace):
        cfg = base_config(workspace, strategy="ml-only", snr_grid_db=(200.0,), trials=3)
        ctx = ExperimentContext(cfg)
        for trial in range(3):
            assert run_trial(ctx, 200.0, trial).token_accuracy == 1.0

    def test_fixed_ratio_strategies_share_seeded_channel(self, workspace):
        # the random-mask draw must not depend on the SNR point
        cfg = base_config(workspace, strategy="random-mask", mask_ratio=0.25, trials=1)
        ctx = ExperimentContext(cfg)
        a = run_trial(ctx, 0.0, 0)
        b = run_trial(ctx, 15.0, 0)
        assert a.n_masked == b.n_masked

    def test_mean_iterations_bounded(self, workspace):
        cfg = base_config(workspace, strategy="rx-only", trials=3)
        ctx = ExperimentContext(cfg)
        for trial in range(3):
            res = run_trial(ctx, 5.0, trial)
            assert res.mean_iterations <= cfg.detection.max_refinements


class TestRunExperiment:
    def test_row_counts_and_columns(self, workspace):
        cfg = base_config(workspace, trials=2, snr_grid_db=(0.0, 10.0))
        trials_path, agg_path, results = run_experiment(cfg)
        assert len(results) == 4
        header = trials_path.read_text().splitlines()[0].split(",")
        assert header == TRIAL_COLUMNS
        agg_lines = agg_path.read_text().splitlines()
        assert agg_lines[0].split(",") == AGGREGATE_COLUMNS
        assert len(agg_lines) == 3  # header + one row per snr

    def test_byte_identical_reruns(self, workspace):
        cfg = base_config(workspace, trials=3, snr_grid_db=(5.0,), record_timing=False)
        a_path, a_agg, _ = run_experiment(cfg)
        first = a_path.read_bytes()
        first_agg = a_agg.read_bytes()
        b_path, b_agg, _ = run_experiment(cfg)
        assert b_path.read_bytes() == first
        assert b_agg.read_bytes() == first_agg

    def test_workers_do_not_change_rows(self, workspace):
        cfg1 = base_config(workspace, trials=4, snr_grid_db=(5.0, 10.0))
        serial, _, _ = run_experiment(cfg1)
        serial_bytes = serial.read_bytes()
        cfg4 = base_config(workspace, trials=4, snr_grid_db=(5.0, 10.0), workers=4)
        parallel, _, _ = run_experiment(cfg4)
        assert parallel.read_bytes() == serial_bytes

    def test_aggregates_recompute_from_trials(self, workspace):
        cfg = base_config(workspace, trials=5, snr_grid_db=(0.0, 10.0))
        trials_path, agg_path, results = run_experiment(cfg)
        lines = [l.split(",") for l in trials_path.read_text().splitlines()[1:]]
        agg = [l.split(",") for l in agg_path.read_text().splitlines()[1:]]
        for row in agg:
            snr = float(row[1])
            accs = np.array([float(l[6]) for l in lines if float(l[1]) == snr])
            assert abs(float(row[3]) - accs.mean()) < 1e-9
            want_se = accs.std(ddof=1) / np.sqrt(len(accs)) if len(accs) > 1 else 0.0
            assert abs(float(row[4]) - want_se) < 1e-9
            ratios = np.array([float(l[5]) for l in lines if float(l[1]) == snr])
            assert abs(float(row[5]) - ratios.mean()) < 1e-9
