import argparse

import uvicorn

from .app import create_app
from .config import SidecarConfig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mlm-sidecar", description="fill-mask + embedding HTTP service")
    parser.add_argument("--model", required=True, help="masked-LM checkpoint (HF id or local path)")
    parser.add_argument("--embed-model", default=None, help="embedding checkpoint; defaults to the MLM encoder")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8801)
    parser.add_argument("--top-k", type=int, default=64, help="default top_k when a request omits it")
    parser.add_argument("--max-len", type=int, default=128, help="maximum request sequence length")
    args = parser.parse_args(argv)

    cfg = SidecarConfig(
        model=args.model,
        embed_model=args.embed_model,
        host=args.host,
        port=args.port,
        default_top_k=args.top_k,
        max_sequence_length=args.max_len,
    )
    uvicorn.run(create_app(cfg), host=cfg.host, port=cfg.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
