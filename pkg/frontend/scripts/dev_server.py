"""Tiny model service for UI development and integration tests.

Initializes an untrained micro model over the synthetic grammar (fast and
fully deterministic) and serves the playground API on an ephemeral port.
Prints the chosen port and two sample sentences, then blocks.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "src"))

from textvae.model import ModelConfig, init_params
from textvae.rng import RngState
from textvae.service import PlaygroundService, make_server
from textvae.tokenizer import build_vocab, synth_corpus


def main():
    lines = synth_corpus(7, 200)
    vocab = build_vocab(lines, 256)
    cfg = ModelConfig(L=1, H=16, A=2, P=4, V_enc=len(vocab), V_dec=len(vocab),
                      max_len=16)
    params = init_params(cfg, RngState(seed=0, stream_id=0))
    service = PlaygroundService(params, cfg, vocab)
    server = make_server(service, "127.0.0.1:0")
    print(f"PORT {server.server_address[1]}", flush=True)
    print(f"SAMPLE {lines[0]}", flush=True)
    print(f"SAMPLE {lines[1]}", flush=True)
    server.serve_forever()


if __name__ == "__main__":
    main()
