import numpy as np
import pytest

from textvae import model as M
from textvae.model import MICRO_CONFIG, ModelConfig, init_params
from textvae.rng import RngState
from textvae.tokenizer import build_vocab, encode_lines, synth_corpus


def micro_cfg(**overrides):
    return ModelConfig(**{**MICRO_CONFIG, **overrides})


def micro_model(seed=0, **overrides):
    cfg = micro_cfg(**overrides)
    return cfg, init_params(cfg, RngState(seed=seed, stream_id=0))


def zero_model(cfg):
    """All-zero parameters except unit layer-norm gains."""
    params = init_params(cfg, RngState(seed=0))
    for name, t in params.items():
        if name.endswith(("ln1.g", "ln2.g", "lnf.g")):
            t.values = np.ones_like(t.values)
        else:
            t.values = np.zeros_like(t.values)
    return params


@pytest.fixture(scope="session")
def toy_vocab_corpus():
    lines = synth_corpus(7, 600)
    vocab = build_vocab(lines, 256)
    corpus, _ = encode_lines(lines, vocab, 16)
    return vocab, corpus


@pytest.fixture(scope="session")
def toy_trained(toy_vocab_corpus):
    """Small VAE trained enough to be non-degenerate (shared across tests)."""
    from textvae.objective import TrainConfig, train

    vocab, corpus = toy_vocab_corpus
    cfg = ModelConfig(L=2, H=32, A=4, P=8, V_enc=len(vocab), V_dec=len(vocab),
                      max_len=16)
    params = init_params(cfg, RngState(seed=1, stream_id=0))
    tc = TrainConfig(objective="vae", lam=0.5, total_steps=3000, n_cycles=6,
                     batch_size=32, lr=1e-3, seed=1, log_every=100)
    train(tc, corpus, params, cfg)
    return vocab, corpus, cfg, params
