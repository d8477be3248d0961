"""End-to-end trials, the Monte Carlo experiment runner, and result files.

A trial is: choose a mask (per strategy) -> transmit over one fading block ->
detect -> score. Trials are paired across SNR points and strategies: the
fading draw, noise normals, random-mask indices, and data block depend only on
(root seed, trial index), never on the SNR or the strategy, so curves can be
compared point by point.

Per-trial rows and per-(strategy, SNR) aggregates are written as CSV with a
fixed column set (see TRIAL_COLUMNS / AGGREGATE_COLUMNS).
"""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .channel import ChannelConfig, ChannelRealization, derived_rng, draw_realization, transmit
from .corpus import read_id_sequences, segment_blocks
from .detector import DetectionConfig, detect, initial_estimate
from .masker import MaskingPlan, StoppingConfig, plan_masking, select_next, tx_prior_entropy
from .modem import TokenModulator, make_constellation
from .priors import (
    ExactJointPrior,
    NGramPrior,
    PriorModel,
    RemoteEmbedder,
    RemotePrior,
    UniformPrior,
)
from .vocab import TokenSequence, Vocabulary, mask

__all__ = [
    "STRATEGIES",
    "FIXED_RATIO_STRATEGIES",
    "ExperimentConfig",
    "TrialResult",
    "load_config",
    "bag_cosine",
    "sim_metric",
    "likelihood_tables",
    "run_trial",
    "run_experiment",
    "TRIAL_COLUMNS",
    "AGGREGATE_COLUMNS",
]

STRATEGIES = ("ml-only", "rx-only", "joint", "random-mask", "parallel-mask", "sequential-mask")
FIXED_RATIO_STRATEGIES = ("random-mask", "parallel-mask", "sequential-mask")
PRIOR_BACKENDS = ("ngram", "exact", "remote", "uniform")

SIDECAR_URL_ENV = "TOKENCOM_SIDECAR_URL"

_RANDOM_MASK_TAG = 3

TRIAL_COLUMNS = [
    "strategy",
    "snr_db",
    "seed",
    "trial",
    "N",
    "r",
    "token_acc",
    "exact_seq",
    "bag_cos",
    "sim",
    "mean_iters",
    "ms_elapsed",
]

AGGREGATE_COLUMNS = [
    "strategy",
    "snr_db",
    "n_trials",
    "token_acc_mean",
    "token_acc_se",
    "r_mean",
    "r_se",
    "bag_cos_mean",
    "bag_cos_se",
    "sim_mean",
    "sim_se",
    "mean_iters_mean",
    "mean_iters_se",
    "exact_rate",
]


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    vocab: str
    block_len: int
    modulation_bits: int
    snr_grid_db: tuple[float, ...]
    trials: int
    seed: int
    strategy: str
    p_tot: float | None = None  # defaults to block_len
    mask_ratio: float | None = None  # fixed-ratio strategies only
    detection: DetectionConfig = DetectionConfig()
    stopping: StoppingConfig = StoppingConfig()
    prior_backend: str = "ngram"
    prior_model: str | None = None  # ngram backend: model file
    prior_joint: str | None = None  # exact backend: .npy joint table
    prior_endpoint: str | None = None  # remote backend
    prior_top_k: int = 64
    prior_fallback_uniform: bool = False
    embed_endpoint: str | None = None  # enables the sim column
    workers: int = 1
    record_timing: bool = True
    out_dir: str = "results"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.prior_backend not in PRIOR_BACKENDS:
            raise ValueError(f"unknown prior backend {self.prior_backend!r}")
        fixed = self.strategy in FIXED_RATIO_STRATEGIES
        if fixed and self.mask_ratio is None:
            raise ValueError(f"strategy {self.strategy!r} requires mask_ratio")
        if not fixed and self.mask_ratio is not None:
            raise ValueError(f"strategy {self.strategy!r} does not take mask_ratio")
        if self.mask_ratio is not None:
            cap = (self.block_len - 1) / self.block_len
            if not 0.0 <= self.mask_ratio <= cap:
                raise ValueError(f"mask_ratio must lie in [0, {cap}]")
        if self.prior_backend == "ngram" and not self.prior_model:
            raise ValueError("ngram backend requires prior_model")
        if self.prior_backend == "exact" and not self.prior_joint:
            raise ValueError("exact backend requires prior_joint")
        if self.prior_backend == "remote" and not self.prior_endpoint:
            raise ValueError("remote backend requires prior_endpoint")
        if self.trials < 1 or self.workers < 1:
            raise ValueError("trials and workers must be positive")

    @property
    def total_power(self) -> float:
        return float(self.block_len) if self.p_tot is None else float(self.p_tot)


def load_config(path: str | Path) -> ExperimentConfig:
    """Build an ExperimentConfig from the YAML schema documented in the README."""
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    det = raw.get("detection", {})
    stop = raw.get("stopping", {})
    prior = raw.get("prior", {})
    metrics = raw.get("metrics", {})

    sidecar_override = os.environ.get(SIDECAR_URL_ENV)
    prior_endpoint = prior.get("endpoint")
    embed_endpoint = metrics.get("embed_endpoint")
    if sidecar_override:
        if prior.get("backend") == "remote":
            prior_endpoint = sidecar_override
        if embed_endpoint is not None:
            embed_endpoint = sidecar_override

    return ExperimentConfig(
        dataset=raw["dataset"],
        vocab=raw["vocab"],
        block_len=int(raw["block_len"]),
        modulation_bits=int(raw.get("modulation_bits", 2)),
        snr_grid_db=tuple(float(s) for s in raw["snr_grid_db"]),
        trials=int(raw["trials"]),
        seed=int(raw["seed"]),
        strategy=raw["strategy"],
        p_tot=None if raw.get("p_tot") is None else float(raw["p_tot"]),
        mask_ratio=None if raw.get("mask_ratio") is None else float(raw["mask_ratio"]),
        detection=DetectionConfig(
            max_refinements=int(det.get("max_refinements", 5)),
            entropy_threshold_bits=float(det.get("entropy_threshold_bits", 2e-3)),
            force_max_refinements=bool(det.get("force_max_refinements", False)),
        ),
        stopping=StoppingConfig(criterion=stop.get("criterion", "average")),
        prior_backend=prior.get("backend", "ngram"),
        prior_model=prior.get("model"),
        prior_joint=prior.get("joint"),
        prior_endpoint=prior_endpoint,
        prior_top_k=int(prior.get("top_k", 64)),
        prior_fallback_uniform=bool(prior.get("fallback_uniform", False)),
        embed_endpoint=embed_endpoint,
        workers=int(raw.get("workers", 1)),
        record_timing=bool(raw.get("record_timing", True)),
        out_dir=raw.get("out_dir", "results"),
    )


def bag_cosine(a, b, vocab_size: int) -> float:
    """Cosine similarity of the two token-count vectors (order-insensitive)."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape:
        raise ValueError("sequences must have equal length")
    # one extra bin tolerates a stray sentinel in degenerate detections
    ca = np.bincount(a, minlength=vocab_size + 1).astype(np.float64)
    cb = np.bincount(b, minlength=vocab_size + 1).astype(np.float64)
    cos = ca @ cb / (np.linalg.norm(ca) * np.linalg.norm(cb))
    return float(np.clip(cos, 0.0, 1.0))


def sim_metric(a, b, embedder: RemoteEmbedder) -> float:
    """Cosine similarity between remote sentence embeddings of two sequences."""
    va = embedder.embed(a)
    vb = embedder.embed(b)
    if va.shape != vb.shape:
        raise ValueError("embedding backends returned mismatched dimensions")
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for a zero embedding")
    return float(np.clip(va @ vb / (na * nb), -1.0, 1.0))


def likelihood_tables(
    block, realization: ChannelRealization, modulator: TokenModulator
) -> dict[int, np.ndarray]:
    """Per-token log-likelihood tables for every transmitted position."""
    return {
        int(i): modulator.log_likelihood_table(
            block.y[i], realization.h, block.power_per_symbol, realization.noise_variance
        )
        for i in block.unmasked_indices()
    }


@dataclass
class TrialResult:
    strategy: str
    snr_db: float
    seed: int
    trial: int
    n_masked: int
    masking_ratio: float
    token_accuracy: float
    exact_sequence: bool
    bag_cos: float
    sim: float | None
    mean_iterations: float
    ms_elapsed: float
    plan: MaskingPlan | None = None

    def row(self) -> list:
        return [
            self.strategy,
            self.snr_db,
            self.seed,
            self.trial,
            self.n_masked,
            self.masking_ratio,
            self.token_accuracy,
            int(self.exact_sequence),
            self.bag_cos,
            "" if self.sim is None else self.sim,
            self.mean_iterations,
            self.ms_elapsed,
        ]


class ExperimentContext:
    """Everything shared across the trials of one experiment."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.vocab = Vocabulary.from_file(cfg.vocab)
        self.modulator = TokenModulator(self.vocab, make_constellation(cfg.modulation_bits))
        self.blocks = self._load_blocks(cfg.dataset, cfg.block_len)
        self.prior = self._build_prior()
        self.embedder = (
            RemoteEmbedder(cfg.embed_endpoint) if cfg.embed_endpoint else None
        )

    def _load_blocks(self, path: str, block_len: int) -> list[np.ndarray]:
        blocks: list[np.ndarray] = []
        for seq in read_id_sequences(path):
            blocks.extend(segment_blocks(seq, block_len))
        if not blocks:
            raise ValueError(f"dataset {path!r} holds no full {block_len}-token block")
        for b in blocks:
            TokenSequence(b).validate_against(self.vocab)
        return blocks

    def _build_prior(self) -> PriorModel:
        cfg = self.cfg
        if cfg.prior_backend == "uniform":
            return UniformPrior(self.vocab)
        if cfg.prior_backend == "ngram":
            model = NGramPrior.load(cfg.prior_model)
            if model.vocab.entries != self.vocab.entries:
                raise ValueError("n-gram model vocabulary differs from the experiment vocabulary")
            return model
        if cfg.prior_backend == "exact":
            joint = np.load(cfg.prior_joint)
            return ExactJointPrior(self.vocab, joint)
        return RemotePrior(
            self.vocab,
            cfg.prior_endpoint,
            top_k=cfg.prior_top_k,
            fallback_uniform=cfg.prior_fallback_uniform,
        )


def _fixed_count(block_len: int, ratio: float) -> int:
    return int(np.floor(block_len * ratio))


def _choose_mask(
    ctx: ExperimentContext,
    seq: TokenSequence,
    realization: ChannelRealization,
    trial: int,
) -> tuple[tuple[int, ...], MaskingPlan | None]:
    cfg = ctx.cfg
    strategy = cfg.strategy
    if strategy in ("ml-only", "rx-only"):
        return (), None
    if strategy == "joint":
        plan = plan_masking(
            seq,
            ctx.prior,
            gamma=realization.gain_to_noise,
            p_tot=cfg.total_power,
            bits_per_symbol=cfg.modulation_bits,
            vocab=ctx.vocab,
            stopping=cfg.stopping,
        )
        return plan.mask_set, plan
    count = _fixed_count(cfg.block_len, cfg.mask_ratio)
    if count == 0:
        return (), None
    if strategy == "random-mask":
        rng = derived_rng(cfg.seed, trial, _RANDOM_MASK_TAG)
        picks = rng.choice(cfg.block_len, size=count, replace=False)
        return tuple(sorted(int(i) for i in picks)), None
    if strategy == "parallel-mask":
        entropies = np.array(
            [tx_prior_entropy(i, seq.ids, ctx.prior) for i in range(cfg.block_len)]
        )
        order = np.argsort(entropies, kind="stable")  # ties -> lowest index first
        return tuple(sorted(int(i) for i in order[:count])), None
    # sequential-mask: greedy selection with the ratio fixed in advance
    current = mask(seq, (), ctx.vocab)
    for _ in range(count):
        picked = select_next(current, ctx.prior)
        current = mask(seq, current.mask_set + (picked.index,), ctx.vocab)
    return current.mask_set, None


def run_trial(ctx: ExperimentContext, snr_db: float, trial: int) -> TrialResult:
    cfg = ctx.cfg
    t0 = time.perf_counter()
    seq = TokenSequence(ctx.blocks[trial % len(ctx.blocks)])
    channel_cfg = ChannelConfig(
        snr_db=snr_db,
        p_tot=cfg.total_power,
        block_len=cfg.block_len,
        bits_per_symbol=cfg.modulation_bits,
    )
    realization = draw_realization(channel_cfg, (cfg.seed, trial))

    mask_set, plan = _choose_mask(ctx, seq, realization, trial)
    masked_seq = mask(seq, mask_set, ctx.vocab)
    block = transmit(masked_seq, realization, channel_cfg, ctx.modulator)
    tables = likelihood_tables(block, realization, ctx.modulator)

    if cfg.strategy == "ml-only":
        final = initial_estimate(block, tables, ctx.vocab)
        mean_iters = 0.0
    else:
        trace = detect(block, tables, ctx.prior, cfg.detection, ctx.vocab)
        final = trace.final
        mean_iters = trace.mean_iterations

    truth = seq.ids
    token_acc = float(np.mean(final == truth))
    sim = None
    if ctx.embedder is not None:
        sim = sim_metric(truth, final, ctx.embedder)
    elapsed_ms = (time.perf_counter() - t0) * 1e3 if cfg.record_timing else 0.0

    return TrialResult(
        strategy=cfg.strategy,
        snr_db=snr_db,
        seed=cfg.seed,
        trial=trial,
        n_masked=len(mask_set),
        masking_ratio=len(mask_set) / cfg.block_len,
        token_accuracy=token_acc,
        exact_sequence=bool((final == truth).all()),
        bag_cos=bag_cosine(truth, final, ctx.vocab.size),
        sim=sim,
        mean_iterations=mean_iters,
        ms_elapsed=elapsed_ms,
        plan=plan,
    )


def _mean_se(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return mean, se


def aggregate_results(results: list[TrialResult]) -> list[list]:
    """One row per (strategy, snr), recomputable from the per-trial rows."""
    rows = []
    keys = sorted({(r.strategy, r.snr_db) for r in results}, key=lambda k: (k[0], k[1]))
    for strategy, snr_db in keys:
        group = [r for r in results if r.strategy == strategy and r.snr_db == snr_db]
        acc_m, acc_se = _mean_se([r.token_accuracy for r in group])
        r_m, r_se = _mean_se([r.masking_ratio for r in group])
        bag_m, bag_se = _mean_se([r.bag_cos for r in group])
        iters_m, iters_se = _mean_se([r.mean_iterations for r in group])
        sims = [r.sim for r in group if r.sim is not None]
        sim_m, sim_se = _mean_se(sims) if sims else (None, None)
        rows.append(
            [
                strategy,
                snr_db,
                len(group),
                acc_m,
                acc_se,
                r_m,
                r_se,
                bag_m,
                bag_se,
                "" if sim_m is None else sim_m,
                "" if sim_se is None else sim_se,
                iters_m,
                iters_se,
                float(np.mean([r.exact_sequence for r in group])),
            ]
        )
    return rows


def run_experiment(
    cfg: ExperimentConfig, *, ctx: ExperimentContext | None = None
) -> tuple[Path, Path, list[TrialResult]]:
    """Run the SNR grid x trials matrix and write trial + aggregate CSV files.

    Deterministic given the config seed when using in-process prior backends;
    rows are canonically ordered by (strategy, snr, trial) no matter how the
    workers were scheduled.
    """
    ctx = ctx or ExperimentContext(cfg)
    jobs = [(snr, trial) for snr in cfg.snr_grid_db for trial in range(cfg.trials)]
    if cfg.workers == 1:
        results = [run_trial(ctx, snr, trial) for snr, trial in jobs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda j: run_trial(ctx, *j), jobs))
    results.sort(key=lambda r: (r.strategy, r.snr_db, r.trial))

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trials_path = out_dir / f"{cfg.strategy}_trials.csv"
    agg_path = out_dir / f"{cfg.strategy}_aggregate.csv"

    with trials_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRIAL_COLUMNS)
        for res in results:
            writer.writerow(res.row())
    with agg_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGGREGATE_COLUMNS)
        for row in aggregate_results(results):
            writer.writerow(row)
    return trials_path, agg_path, results
