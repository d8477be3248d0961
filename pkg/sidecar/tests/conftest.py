import threading
import time

import pytest
import torch
import uvicorn
from transformers import BertConfig, BertForMaskedLM, BertTokenizer

from mlm_sidecar.app import create_app
from mlm_sidecar.config import SidecarConfig

N_WORDS = 60  # plus the five special tokens


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """Small randomly initialized masked LM with a word-level vocabulary.

    Random weights are fine: the protocol tests check shapes, normalization,
    and determinism, not linguistic quality.
    """
    root = tmp_path_factory.mktemp("tiny_mlm")
    words = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    words += [f"word{i:03d}" for i in range(N_WORDS)]
    vocab_file = root / "vocab.txt"
    vocab_file.write_text("\n".join(words) + "\n", encoding="utf-8")
    tokenizer = BertTokenizer(vocab=str(vocab_file))

    torch.manual_seed(1234)
    config = BertConfig(
        vocab_size=len(tokenizer),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=64,
    )
    model = BertForMaskedLM(config)
    model.eval()
    out = root / "model"
    model.save_pretrained(out)
    tokenizer.save_pretrained(out)
    return out


@pytest.fixture(scope="session")
def sidecar_url(tiny_model_dir):
    """A live sidecar on an ephemeral port."""
    cfg = SidecarConfig(model=str(tiny_model_dir), max_sequence_length=48)
    app = create_app(cfg)
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 30
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("sidecar did not start")
        time.sleep(0.05)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=10)
