#!/usr/bin/env python3
"""The whole framework head-to-head: strategies across an SNR grid.

Builds a synthetic corpus, trains the prior, and runs a compact Monte Carlo
comparison of ml-only / rx-only / joint plus the fixed-ratio masking
baselines. Writes CSVs and charts through the same pipeline the CLI uses.
"""

from pathlib import Path

import numpy as np

from tokencom import DetectionConfig, ExperimentConfig, run_experiment
from tokencom.corpus import MarkovSource, write_id_sequences
from tokencom.plots import render_all
from tokencom.priors import NGramPrior

HERE = Path(__file__).parent
OUT = HERE / "out" / "experiment"
OUT.mkdir(parents=True, exist_ok=True)

T, V, TRIALS = 128, 512, 60
GRID = (0.0, 5.0, 10.0, 15.0)

source = MarkovSource(V, seed=41)
vocab_path = OUT / "vocab.txt"
source.vocab.to_file(vocab_path)
write_id_sequences(OUT / "eval.txt", [source.sample_stream(TRIALS * T, seed=43)])
model = NGramPrior.from_corpus(
    source.vocab,
    [source.sample_stream(120_000, seed=42)],
    lambda_forward=0.45,
    lambda_backward=0.45,
    lambda_unigram=0.10,
    alpha=0.01,
)
model_path = OUT / "prior.npz"
model.save(model_path)
print(f"corpus + prior ready under {OUT}")

agg_paths = []
for strategy, ratio, det in [
    ("ml-only", None, None),
    ("rx-only", None, DetectionConfig(entropy_threshold_bits=5e-4)),
    ("joint", None, None),
    ("random-mask", 0.3, None),
    ("parallel-mask", 0.3, None),
    ("sequential-mask", 0.3, None),
]:
    cfg = ExperimentConfig(
        dataset=str(OUT / "eval.txt"),
        vocab=str(vocab_path),
        block_len=T,
        modulation_bits=2,
        snr_grid_db=GRID,
        trials=TRIALS,
        seed=7,
        strategy=strategy,
        mask_ratio=ratio,
        detection=det or DetectionConfig(),
        prior_backend="ngram",
        prior_model=str(model_path),
        record_timing=True,
        out_dir=str(OUT),
    )
    _, agg_path, results = run_experiment(cfg)
    agg_paths.append(agg_path)
    by_snr = {
        snr: np.mean([r.token_accuracy for r in results if r.snr_db == snr]) for snr in GRID
    }
    r_mean = np.mean([r.masking_ratio for r in results])
    print(
        f"{strategy:16s} acc " + " ".join(f"{by_snr[s]:.3f}" for s in GRID) + f"   mean r {r_mean:.3f}"
    )

for path in render_all(agg_paths, OUT / "plots"):
    print(f"wrote {path}")
