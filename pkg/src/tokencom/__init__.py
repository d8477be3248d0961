"""Context-aware wireless token communication.

Library for simulating token transmission over a Rayleigh block-fading QAM
link where a shared contextual prior model drives both sides: the transmitter
masks predictable tokens (concentrating power on the rest) and the receiver
fuses channel likelihoods with the same priors in an iterative per-token
detector.
"""

from .channel import (
    ChannelConfig,
    ChannelRealization,
    ReceivedBlock,
    derived_rng,
    draw_realization,
    transmit,
)
from .detector import DetectionConfig, DetectionTrace, detect, initial_estimate, posterior_entropy
from .masker import (
    MaskingPlan,
    StoppingConfig,
    ber,
    detection_prob_bounds,
    plan_masking,
    select_next,
    tx_prior_entropy,
)
from .modem import Constellation, TokenModulator, make_constellation, ml_detect, modulate, token_log_likelihoods
from .pipeline import ExperimentConfig, bag_cosine, load_config, run_experiment, run_trial, sim_metric
from .priors import (
    ExactJointPrior,
    NGramPrior,
    PriorDistribution,
    PriorModel,
    RemoteEmbedder,
    RemotePrior,
    UniformPrior,
    entropy_bits,
    exact_conditional,
    query_prior,
)
from .vocab import MaskedSequence, TokenSequence, Vocabulary, bits_to_token, mask, token_to_bits

__version__ = "0.1.0"
