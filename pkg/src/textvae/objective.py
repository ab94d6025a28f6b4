"""Training objectives: beta-weighted ELBO, free-bits hinge, cyclical beta.

The loss for one batch is  total = recon + beta * kl_hinged  where recon
is the per-sentence token NLL (teacher forcing, one sampled z per
sentence) and kl_hinged applies a per-dimension floor of lam before
summing. With beta = 0 (the AE objective or the first schedule stage) the
total is exactly the reconstruction term; Gaussian sampling still happens.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import model as M
from .autodiff import AdamHyper, AdamState, Tape, adam_step, backward, zero_grads
from .rng import RngState
from .tokenizer import PAD


class DivergenceError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# closed forms (numpy; the graph versions live inside compute_loss)


def gaussian_kl(mu, logvar):
    """Per-dimension KL(N(mu, e^logvar) || N(0, 1))."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(logvar))):
        raise ad.NumericError("gaussian_kl: non-finite input")
    return 0.5 * (mu ** 2 + np.exp(logvar) - 1.0 - logvar)


def hinged_kl(kl_per_dim, lam):
    """Free-bits sum: each dimension contributes at least lam."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    return float(np.maximum(np.asarray(kl_per_dim), lam).sum())


def reparameterize(mu, logvar, rng):
    """z = mu + exp(logvar/2) * eps with eps ~ N(0, I)."""
    mu = np.asarray(mu, dtype=np.float64)
    eps = rng.normal(mu.shape)
    return mu + np.exp(0.5 * np.asarray(logvar)) * eps, eps


# ---------------------------------------------------------------------------
# beta schedule


@dataclass
class BetaSchedule:
    total_steps: int
    n_cycles: int = 10
    beta_max: float = 1.0
    # stage proportions within one cycle: beta=0, linear ramp, hold at max
    p_ae: float = 0.5
    p_ramp: float = 0.25
    p_hold: float = 0.25

    def __post_init__(self):
        if abs(self.p_ae + self.p_ramp + self.p_hold - 1.0) > 1e-12:
            raise ValueError("stage proportions must sum to 1")
        if self.total_steps < self.n_cycles:
            raise ValueError("total_steps must be >= n_cycles")

    @property
    def cycle_len(self):
        return self.total_steps // self.n_cycles


def beta_at(step, schedule):
    """Beta at a training step: 0 / linear ramp / hold, repeated per cycle.

    Remainder steps past n_cycles * cycle_len hold beta_max.
    """
    if step < 0 or step >= schedule.total_steps:
        raise ValueError(f"step {step} out of range [0, {schedule.total_steps})")
    C = schedule.cycle_len
    if step >= schedule.n_cycles * C:
        return schedule.beta_max
    o = step % C
    ae_end = schedule.p_ae * C
    ramp_end = (schedule.p_ae + schedule.p_ramp) * C
    if o < ae_end:
        return 0.0
    if o < ramp_end:
        return (o - ae_end) / (ramp_end - ae_end) * schedule.beta_max
    return schedule.beta_max


# ---------------------------------------------------------------------------
# loss


@dataclass
class LossBreakdown:
    recon: float
    kl_per_dim: np.ndarray
    kl_raw: float
    kl_hinged: float
    beta: float
    total: float
    recon_per_token: float = 0.0


def compute_loss(batch, params, cfg, beta, lam, rng):
    """(total Tensor, LossBreakdown) for a batch of EncodedSentence.

    Per-sentence averaging for both terms; the hinge enters the graph only
    when beta > 0, but raw KL is always reported.
    """
    if not batch:
        raise ValueError("compute_loss: empty batch")
    B = len(batch)
    enc_ids, enc_mask = M._pad_batch([s.encoder_view for s in batch])
    dec_in, _ = M._pad_batch([s.decoder_view[:-1] for s in batch])
    targets, _ = M._pad_batch([s.decoder_view[1:] for s in batch])
    n_tokens = int(np.sum(targets != PAD))

    _, mu, logvar = M.encode_batch(params, cfg, enc_ids, enc_mask)
    eps = rng.normal((B, cfg.P))
    z = ad.add(mu, ad.mul(ad.exp(ad.scale(logvar, 0.5)), ad.constant(eps)))
    inj = M.build_injection(params, cfg, z)
    logits = M.decoder_logits(params, cfg, dec_in, inj)

    ce = ad.cross_entropy(logits, targets, ignore_id=PAD)    # mean per token
    recon = ad.scale(ce, n_tokens / B)                        # mean per sentence

    # per-dim KL on the graph: 0.5 * (mu^2 + e^logvar - 1 - logvar)
    kl_t = ad.scale(ad.add_const(ad.sub(ad.add(ad.mul(mu, mu), ad.exp(logvar)),
                                        logvar), -1.0), 0.5)  # [B, P]
    kl_raw_t = ad.mean_axis(ad.sum_axis(kl_t, 1), 0)
    if beta > 0:
        kl_hinged_t = ad.mean_axis(ad.sum_axis(ad.maximum_const(kl_t, lam), 1), 0)
        total = ad.add(recon, ad.scale(kl_hinged_t, beta))
        kl_hinged = kl_hinged_t.item()
    else:
        total = recon
        kl_hinged = float(np.maximum(kl_t.values, lam).sum(axis=1).mean())
    bd = LossBreakdown(
        recon=recon.item(),
        kl_per_dim=kl_t.values.mean(axis=0),
        kl_raw=kl_raw_t.item(),
        kl_hinged=kl_hinged,
        beta=float(beta),
        total=total.item(),
        recon_per_token=ce.item(),
    )
    return total, bd


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainConfig:
    objective: str = "vae"          # "ae" forces beta = 0 throughout
    lam: float = 0.5
    total_steps: int = 1000
    n_cycles: int = 10
    beta_max: float = 1.0
    constant_beta: float = None     # fixed beta instead of the cyclical schedule
    batch_size: int = 32
    lr: float = 5e-4
    seed: int = 0
    injection: str = "both"
    strict: bool = True
    log_every: int = 1

    def schedule(self):
        if self.objective == "ae" or self.constant_beta is not None:
            return None
        return BetaSchedule(total_steps=self.total_steps, n_cycles=self.n_cycles,
                            beta_max=self.beta_max)

    def beta(self, step):
        if self.objective == "ae":
            return 0.0
        if self.constant_beta is not None:
            return float(self.constant_beta)
        return beta_at(step, self.schedule())


def train(config, corpus, params, cfg, adam=None, log_path=None, on_step=None):
    """Optimize params in place for config.total_steps; returns the log.

    Batches are drawn with replacement from a dedicated rng stream, so the
    whole trajectory is a pure function of (config, corpus, params init).
    """
    if not corpus:
        raise ValueError("train: empty corpus")
    if cfg.injection != config.injection:
        cfg.injection = config.injection
    adam = adam or AdamState(hyper=AdamHyper(lr=config.lr))
    batch_rng = RngState(seed=config.seed, stream_id=1)
    eps_rng = RngState(seed=config.seed, stream_id=2)
    log = []
    sink = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for step in range(config.total_steps):
            beta = config.beta(step)
            idx = batch_rng.choice(len(corpus), size=min(config.batch_size, len(corpus)),
                                   replace=True)
            batch = [corpus[i] for i in idx]
            zero_grads(params)
            try:
                with Tape() as tape:
                    total, bd = compute_loss(batch, params, cfg, beta, config.lam, eps_rng)
                backward(tape, total)
            except ad.NumericError as e:
                raise DivergenceError(f"non-finite loss at step {step}: {e}") from e
            adam_step(params, adam)
            if step % config.log_every == 0 or step == config.total_steps - 1:
                rec = {"step": step, "beta": bd.beta, "recon": bd.recon,
                       "kl_raw": bd.kl_raw, "kl_hinged": bd.kl_hinged,
                       "total": bd.total, "recon_per_token": bd.recon_per_token}
                log.append(rec)
                if sink:
                    sink.write(json.dumps(rec) + "\n")
            if on_step:
                on_step(step, bd)
    finally:
        if sink:
            sink.close()
    return log
