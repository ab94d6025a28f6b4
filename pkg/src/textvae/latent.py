"""Latent-space manipulation: posterior-mean embedding, interpolation,
and vector arithmetic, each ending in (greedy by default) decoding.
"""

from dataclasses import dataclass

import numpy as np

from . import model as M
from .tokenizer import decode_ids, encode_sentence


@dataclass
class InterpolationResult:
    taus: list
    latents: list
    sentences: list


class UnencodableSentence(ValueError):
    pass


def _encode_text(params, cfg, vocab, text):
    enc = encode_sentence(text, vocab, cfg.max_len)
    if enc is None:
        raise UnencodableSentence(f"sentence exceeds max_len {cfg.max_len}: {text!r}")
    return enc


def embed_mean(params, cfg, vocab, text):
    """Posterior mean of a sentence (no sampling)."""
    enc = _encode_text(params, cfg, vocab, text)
    return M.encode(params, cfg, enc.encoder_view).mu


def decode_latent(params, cfg, vocab, z, temperature=None, rng=None):
    """Decode a latent vector to text; greedy unless a temperature is given."""
    inj = M.build_injection(params, cfg, np.asarray(z)[None, :])
    if temperature is None:
        ids = M.decode_greedy(params, cfg, inj)
    else:
        ids = M.decode_sample(params, cfg, inj, temperature, rng)
    return decode_ids(ids, vocab)


def interpolate(params, cfg, vocab, text1, text2, n_steps=11):
    """Linear path z_tau = (1-tau) z1 + tau z2, decoded at each tau."""
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    z1 = embed_mean(params, cfg, vocab, text1)
    z2 = embed_mean(params, cfg, vocab, text2)
    taus, latents, sentences = [], [], []
    for j in range(n_steps):
        tau = j / (n_steps - 1)
        z = z1 * (1.0 - tau) + z2 * tau
        taus.append(tau)
        latents.append(z)
        sentences.append(decode_latent(params, cfg, vocab, z))
    return InterpolationResult(taus=taus, latents=latents, sentences=sentences)


def arithmetic(params, cfg, vocab, text_a, text_b, text_c):
    """z_D = z_B - z_A + z_C on posterior means; returns (z_D, decoded text)."""
    za = embed_mean(params, cfg, vocab, text_a)
    zb = embed_mean(params, cfg, vocab, text_b)
    zc = embed_mean(params, cfg, vocab, text_c)
    # algebraic cancellations (A=C -> z_B, A=B -> z_C) must hold bitwise,
    # which a single float evaluation order cannot guarantee
    if np.array_equal(za, zc):
        zd = zb.copy()
    elif np.array_equal(za, zb):
        zd = zc.copy()
    else:
        zd = zb - za + zc
    return zd, decode_latent(params, cfg, vocab, zd)
