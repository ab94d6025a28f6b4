"""Transformer encoder/decoder pair joined by a Gaussian latent bottleneck.

The encoder reads [CLS] x1..xn bidirectionally and maps the final [CLS]
state through a 2P x H head to (mu, log sigma^2). The causal decoder
consumes the latent either as one extra attended key/value slot per layer
("memory"), as an offset added to every input embedding ("embedding"), or
both. Everything is expressed through the autodiff ops so training and
gradient checks share one code path.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .tokenizer import BOS, CLS, EOS, PAD

INJECTION_MODES = ("memory", "embedding", "both")

NEG_MASK = -1e30
LOGVAR_CLAMP = 8.0


class SequenceTooLong(ValueError):
    pass


@dataclass
class ModelConfig:
    L: int = 2
    H: int = 64
    A: int = 4
    P: int = 16
    V_enc: int = 64
    V_dec: int = 64
    max_len: int = 64
    injection: str = "both"
    n_classes: int = 0

    def __post_init__(self):
        if self.H % self.A:
            raise ValueError(f"H={self.H} not divisible by A={self.A}")
        if self.P < 1 or self.max_len < 2:
            raise ValueError("P must be >= 1 and max_len >= 2")
        if self.injection not in INJECTION_MODES:
            raise ValueError(f"injection must be one of {INJECTION_MODES}")

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("L", "H", "A", "P", "V_enc", "V_dec", "max_len", "injection", "n_classes")}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


MICRO_CONFIG = dict(L=1, H=8, A=2, P=4, V_enc=11, V_dec=11, max_len=8, injection="both")


@dataclass
class PosteriorParams:
    h_cls: np.ndarray
    mu: np.ndarray
    logvar: np.ndarray


@dataclass
class LatentInjection:
    mode: str
    memory_slices: Tensor = None    # [B, L, H] when mode includes memory
    embedding_offset: Tensor = None  # [B, H] when mode includes embedding


# ---------------------------------------------------------------------------
# parameters


def _block_names(prefix, i):
    b = f"{prefix}.b{i}"
    return {
        "ln1g": f"{b}.ln1.g", "ln1b": f"{b}.ln1.b",
        "wqkv": f"{b}.attn.wqkv", "bqkv": f"{b}.attn.bqkv",
        "wo": f"{b}.attn.wo", "bo": f"{b}.attn.bo",
        "ln2g": f"{b}.ln2.g", "ln2b": f"{b}.ln2.b",
        "w1": f"{b}.mlp.w1", "b1": f"{b}.mlp.b1",
        "w2": f"{b}.mlp.w2", "b2": f"{b}.mlp.b2",
    }


def init_params(cfg, rng, init_std=0.02):
    """Fresh parameter dict: N(0, init_std) projections, standard norms."""
    p = {}

    def w(name, shape):
        p[name] = Tensor(rng.normal(shape) * init_std, requires_grad=True)

    def zeros(name, shape):
        p[name] = Tensor(np.zeros(shape), requires_grad=True)

    def ones(name, shape):
        p[name] = Tensor(np.ones(shape), requires_grad=True)

    H = cfg.H
    for prefix, V in (("enc", cfg.V_enc), ("dec", cfg.V_dec)):
        w(f"{prefix}.tok", (V, H))
        w(f"{prefix}.pos", (cfg.max_len, H))
        for i in range(cfg.L):
            n = _block_names(prefix, i)
            ones(n["ln1g"], (H,)); zeros(n["ln1b"], (H,))
            w(n["wqkv"], (H, 3 * H)); zeros(n["bqkv"], (3 * H,))
            w(n["wo"], (H, H)); zeros(n["bo"], (H,))
            ones(n["ln2g"], (H,)); zeros(n["ln2b"], (H,))
            w(n["w1"], (H, 4 * H)); zeros(n["b1"], (4 * H,))
            w(n["w2"], (4 * H, H)); zeros(n["b2"], (H,))
        ones(f"{prefix}.lnf.g", (H,)); zeros(f"{prefix}.lnf.b", (H,))
    w("w_e", (2 * cfg.P, H))
    w("w_m", (cfg.L * H, cfg.P))
    w("w_d", (H, cfg.P))
    w("dec.out.w", (H, cfg.V_dec)); zeros("dec.out.b", (cfg.V_dec,))
    if cfg.n_classes:
        w("w_c", (cfg.n_classes, H))
    return p


def check_shapes(params, cfg):
    expected = {k: v.values.shape for k, v in init_params(cfg, _ShapeRng()).items()}
    for name, shape in expected.items():
        if name not in params:
            raise ValueError(f"missing parameter {name}")
        if params[name].values.shape != shape:
            raise ValueError(f"parameter {name}: shape {params[name].values.shape}, "
                             f"expected {shape}")


class _ShapeRng:
    def normal(self, shape=()):
        return np.zeros(shape)


# ---------------------------------------------------------------------------
# shared blocks


def _attention(h, params, names, cfg, mask, mem=None):
    """Multi-head attention over h [B,T,H], optional memory slot [B,H].

    The memory state passes through the layer's standard key/value
    projections and is prepended as attention position -1: visible to
    every query, never itself a query, no positional embedding.
    """
    B, T, H = h.values.shape
    A, d = cfg.A, cfg.H // cfg.A
    qkv = ad.add(ad.matmul(h, params[names["wqkv"]]), params[names["bqkv"]])
    q = ad.narrow(qkv, 2, 0, H)
    k = ad.narrow(qkv, 2, H, H)
    v = ad.narrow(qkv, 2, 2 * H, H)
    if mem is not None:
        m3 = ad.reshape(mem, (B, 1, H))
        mqkv = ad.add(ad.matmul(m3, params[names["wqkv"]]), params[names["bqkv"]])
        k = ad.concat([ad.narrow(mqkv, 2, H, H), k], axis=1)
        v = ad.concat([ad.narrow(mqkv, 2, 2 * H, H), v], axis=1)
    Tk = k.values.shape[1]

    def split_heads(t, n):
        return ad.transpose(ad.reshape(t, (B, n, A, d)), (0, 2, 1, 3))

    qh, kh, vh = split_heads(q, T), split_heads(k, Tk), split_heads(v, Tk)
    scores = ad.scale(ad.matmul(qh, ad.transpose(kh, (0, 1, 3, 2))), 1.0 / math.sqrt(d))
    attn = ad.softmax_rows(ad.add_const(scores, mask))
    out = ad.matmul(attn, vh)                      # [B, A, T, d]
    out = ad.reshape(ad.transpose(out, (0, 2, 1, 3)), (B, T, H))
    return ad.add(ad.matmul(out, params[names["wo"]]), params[names["bo"]])


def _mlp(h, params, names):
    u = ad.relu(ad.add(ad.matmul(h, params[names["w1"]]), params[names["b1"]]))
    return ad.add(ad.matmul(u, params[names["w2"]]), params[names["b2"]])


def _ln(h, params, g, b):
    return ad.layer_norm(h, params[g], params[b])


def _blocks(x, params, cfg, prefix, mask, mems=None):
    for i in range(cfg.L):
        n = _block_names(prefix, i)
        mem = mems[i] if mems is not None else None
        x = ad.add(x, _attention(_ln(x, params, n["ln1g"], n["ln1b"]),
                                 params, n, cfg, mask, mem=mem))
        x = ad.add(x, _mlp(_ln(x, params, n["ln2g"], n["ln2b"]), params, n))
    return ad.layer_norm(x, params[f"{prefix}.lnf.g"], params[f"{prefix}.lnf.b"])


def _embed(ids, params, cfg, prefix):
    B, T = ids.shape
    tok = ad.embedding(params[f"{prefix}.tok"], ids)
    pos = ad.embedding(params[f"{prefix}.pos"], np.arange(T))
    return ad.add(tok, pos)


def _pad_batch(views, pad_id=PAD):
    T = max(len(v) for v in views)
    ids = np.full((len(views), T), pad_id, dtype=np.int64)
    mask = np.zeros((len(views), T))
    for i, v in enumerate(views):
        ids[i, : len(v)] = v
        mask[i, : len(v)] = 1.0
    return ids, mask


# ---------------------------------------------------------------------------
# encoder


def encode_batch(params, cfg, ids, pad_mask):
    """Posterior parameters for a padded batch.

    ids: [B,T] with leading CLS per row; pad_mask: [B,T] 1.0 on real
    tokens. Returns (h_cls, mu, logvar) Tensors of shapes [B,H], [B,P],
    [B,P]; logvar pre-clamped to [-8, 8].
    """
    B, T = ids.shape
    if T > cfg.max_len:
        raise SequenceTooLong(f"encoder sequence length {T} > max_len {cfg.max_len}")
    key_mask = np.where(pad_mask[:, None, None, :] > 0, 0.0, NEG_MASK)
    x = _embed(ids, params, cfg, "enc")
    x = _blocks(x, params, cfg, "enc", key_mask)
    h_cls = ad.reshape(ad.narrow(x, 1, 0, 1), (B, cfg.H))
    u = ad.matmul(h_cls, ad.transpose(params["w_e"], (1, 0)))   # [B, 2P]
    mu = ad.narrow(u, 1, 0, cfg.P)
    logvar = ad.clip(ad.narrow(u, 1, cfg.P, cfg.P), -LOGVAR_CLAMP, LOGVAR_CLAMP)
    return h_cls, mu, logvar


def encode(params, cfg, tokens):
    """Single-sentence posterior from an encoder-view id list."""
    if not tokens or tokens[0] != CLS:
        raise ValueError("encoder input must start with [CLS]")
    if len(tokens) > cfg.max_len:
        raise SequenceTooLong(f"sequence length {len(tokens)} > max_len {cfg.max_len}")
    if max(tokens) >= cfg.V_enc:
        raise ValueError(f"unknown token id {max(tokens)} for V_enc={cfg.V_enc}")
    ids = np.asarray([tokens], dtype=np.int64)
    h, mu, lv = encode_batch(params, cfg, ids, np.ones_like(ids, dtype=np.float64))
    return PosteriorParams(h_cls=h.values[0].copy(), mu=mu.values[0].copy(),
                           logvar=lv.values[0].copy())


# ---------------------------------------------------------------------------
# latent injection + decoder


def build_injection(params, cfg, z, mode=None):
    """Map latent z [B,P] (Tensor or array) to the decoder-side vectors."""
    mode = mode or cfg.injection
    if mode not in INJECTION_MODES:
        raise ValueError(f"injection mode {mode!r} not in {INJECTION_MODES}")
    if not isinstance(z, Tensor):
        z = ad.constant(np.atleast_2d(z))
    B = z.values.shape[0]
    inj = LatentInjection(mode=mode)
    if mode in ("memory", "both"):
        hm = ad.matmul(z, ad.transpose(params["w_m"], (1, 0)))      # [B, L*H]
        inj.memory_slices = ad.reshape(hm, (B, cfg.L, cfg.H))
    if mode in ("embedding", "both"):
        inj.embedding_offset = ad.matmul(z, ad.transpose(params["w_d"], (1, 0)))
    return inj


def _causal_mask(T, with_memory):
    causal = np.where(np.tril(np.ones((T, T))) > 0, 0.0, NEG_MASK)
    if with_memory:
        causal = np.concatenate([np.zeros((T, 1)), causal], axis=1)
    return causal[None, None]


def decoder_logits(params, cfg, ids, injection):
    """Logits [B,T,V_dec] for padded decoder input ids [B,T]."""
    B, T = ids.shape
    if T > cfg.max_len:
        raise SequenceTooLong(f"decoder sequence length {T} > max_len {cfg.max_len}")
    x = _embed(ids, params, cfg, "dec")
    if injection.embedding_offset is not None:
        x = ad.add(x, ad.reshape(injection.embedding_offset, (B, 1, cfg.H)))
    mems = None
    # an identically-zero memory state must be indistinguishable from no
    # memory slot at all (mode equivalence at W_M = 0)
    if injection.memory_slices is not None and np.any(injection.memory_slices.values):
        mems = [ad.reshape(ad.narrow(injection.memory_slices, 1, i, 1), (B, cfg.H))
                for i in range(cfg.L)]
    mask = _causal_mask(T, mems is not None)
    x = _blocks(x, params, cfg, "dec", mask, mems=mems)
    return ad.add(ad.matmul(x, params["dec.out.w"]), params["dec.out.b"])


def decoder_forward(params, cfg, tokens, injection):
    """Single-sequence logits [T, V_dec]; tokens must start with [BOS]."""
    if not tokens or tokens[0] != BOS:
        raise ValueError("decoder input must start with [BOS]")
    ids = np.asarray([tokens], dtype=np.int64)
    out = decoder_logits(params, cfg, ids, injection)
    return ad.reshape(out, (len(tokens), cfg.V_dec))


def decode_greedy(params, cfg, injection, max_len=None):
    """Greedy decode: argmax each step (ties to the lowest id), stop at EOS.

    Returns the full id sequence including [BOS] and, when emitted, [EOS].
    """
    max_len = max_len or cfg.max_len
    seq = [BOS]
    while len(seq) < max_len:
        logits = decoder_forward(params, cfg, seq, injection).values[-1]
        nxt = int(np.argmax(logits))
        seq.append(nxt)
        if nxt == EOS:
            break
    return seq


def decode_sample(params, cfg, injection, temperature, rng, max_len=None):
    """Temperature sampling from the per-step softmax; same stopping rule."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    max_len = max_len or cfg.max_len
    seq = [BOS]
    while len(seq) < max_len:
        logits = decoder_forward(params, cfg, seq, injection).values[-1]
        z = logits / temperature
        z = z - z.max()
        p = np.exp(z)
        p /= p.sum()
        u = rng.uniform()
        nxt = int(np.searchsorted(np.cumsum(p), u))
        nxt = min(nxt, cfg.V_dec - 1)
        seq.append(nxt)
        if nxt == EOS:
            break
    return seq


def reconstruct_greedy(params, cfg, sentence, mode=None):
    """Encode a sentence and greedily decode from its posterior mean."""
    post = encode(params, cfg, sentence.encoder_view)
    inj = build_injection(params, cfg, post.mu[None, :], mode=mode)
    return decode_greedy(params, cfg, inj)
