"""HTTP sidecar serving fill-mask distributions and sentence embeddings.

Wire protocol (JSON over HTTP):

    POST /v1/priors  {"tokens": [int], "positions": [int], "top_k": int}
                     -> {"positions": [{"index", "entries": [{"id", "logp"}], "tail_logp"}]}
    POST /v1/embed   {"tokens": [int]} -> {"embedding": [float]}
    GET  /v1/vocab   -> {"tokens": [str], "mask_string": str}
    GET  /healthz    -> 200

Blanked positions travel as token id -1. Errors come back as
{"error": str} with 400 for malformed input, 422 for a queried position that
is not blanked, and 500 for model failures.
"""

from .config import SidecarConfig
from .service import InvalidRequest, MaskedLMService, PositionNotBlanked

__version__ = "0.1.0"
