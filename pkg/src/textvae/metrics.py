"""Evaluation suite: importance-weighted NLL/PPL, mutual information,
active units, ELBO reporting, and the KL-decomposition consistency check.

Everything here is forward-only (no tape) and computed in log space.
"""

import json
from dataclasses import dataclass
from itertools import combinations
from math import comb, log, pi

import numpy as np
from scipy.special import logsumexp

from . import model as M
from .objective import gaussian_kl
from .tokenizer import PAD

_LOG_2PI = log(2.0 * pi)


@dataclass
class MetricsReport:
    iw_nll: float
    ppl: float
    mi: float
    au: int
    neg_elbo: float
    kl: float
    rec: float
    k_used: int
    n_sentences: int

    def to_json(self):
        d = {k: (int(v) if k in ("au", "k_used", "n_sentences") else float(v))
             for k, v in self.__dict__.items()}
        return json.dumps(d, sort_keys=True)

    def table(self):
        head = f"{'PPL':>10} {'MI':>8} {'AU':>4} {'-ELBO':>10} {'KL':>8} {'Rec':>10}"
        row = (f"{self.ppl:>10.3f} {self.mi:>8.3f} {self.au:>4d} "
               f"{self.neg_elbo:>10.3f} {self.kl:>8.3f} {self.rec:>10.3f}")
        return head + "\n" + row


# ---------------------------------------------------------------------------
# log-density helpers


def _log_normal(z, mu, logvar):
    """log N(z; mu, diag e^logvar), summed over the last axis."""
    var = np.exp(logvar)
    return -0.5 * np.sum((z - mu) ** 2 / var + logvar + _LOG_2PI, axis=-1)


def _log_prior(z):
    return -0.5 * np.sum(z ** 2 + _LOG_2PI, axis=-1)


def _posterior_batch(params, cfg, sentences, chunk=256):
    """Posterior (mu, logvar) arrays [N,P] for a sentence list."""
    mus, lvs = [], []
    for i in range(0, len(sentences), chunk):
        part = sentences[i:i + chunk]
        ids, mask = M._pad_batch([s.encoder_view for s in part])
        _, mu, lv = M.encode_batch(params, cfg, ids, mask)
        mus.append(mu.values)
        lvs.append(lv.values)
    return np.concatenate(mus), np.concatenate(lvs)


def log_px_given_z(params, cfg, sentence, zs):
    """log p(x|z) for each row of zs [k,P], one decoder pass."""
    zs = np.atleast_2d(zs)
    k = zs.shape[0]
    dec_in = np.asarray([sentence.decoder_view[:-1]] * k, dtype=np.int64)
    targets = np.asarray(sentence.decoder_view[1:], dtype=np.int64)
    inj = M.build_injection(params, cfg, zs)
    logits = M.decoder_logits(params, cfg, dec_in, inj).values   # [k,T,V]
    logp = logits - logsumexp(logits, axis=-1, keepdims=True)
    return logp[:, np.arange(len(targets)), targets].sum(axis=-1)


# ---------------------------------------------------------------------------
# importance-weighted likelihood


def iw_log_weights(params, cfg, sentence, k, rng):
    """k log importance weights log p(x,z_i) - log q(z_i|x), z_i ~ q."""
    if k < 1:
        raise ValueError("k must be >= 1")
    post = M.encode(params, cfg, sentence.encoder_view)
    eps = rng.normal((k, cfg.P))
    zs = post.mu + np.exp(0.5 * post.logvar) * eps
    return (log_px_given_z(params, cfg, sentence, zs)
            + _log_prior(zs) - _log_normal(zs, post.mu, post.logvar))


def iw_log_likelihood(params, cfg, sentence, k, rng):
    """Importance-weighted estimate of log p(x): logsumexp(w)/k in log space."""
    return float(logsumexp(iw_log_weights(params, cfg, sentence, k, rng)) - log(k))


def iw_subset_average(log_w, k):
    """Deterministic k-sample bound from a fixed weight set.

    Averages log(1/k sum w) over all size-k subsets when that count is
    small, else over disjoint blocks. Nondecreasing in k over all-subset
    averaging (Burda et al. monotonicity).
    """
    log_w = np.asarray(log_w)
    K = log_w.size
    if k > K:
        raise ValueError("k exceeds the number of stored weights")
    if comb(K, k) <= 20000:
        vals = [logsumexp(log_w[list(c)]) - log(k) for c in combinations(range(K), k)]
    else:
        vals = [logsumexp(log_w[i:i + k]) - log(k) for i in range(0, K - k + 1, k)]
    return float(np.mean(vals))


def word_count(sentence):
    """Tokens counted for PPL: decoder view minus [BOS] (EOS included)."""
    return len(sentence.decoder_view) - 1


def perplexity(params, cfg, corpus, k, rng):
    """exp(-sum log p(x) / total words) over the corpus."""
    if not corpus:
        raise ValueError("perplexity: empty corpus")
    total_ll = sum(iw_log_likelihood(params, cfg, s, k, rng) for s in corpus)
    words = sum(word_count(s) for s in corpus)
    return float(np.exp(-total_ll / words))


# ---------------------------------------------------------------------------
# representation metrics


def mutual_information(params, cfg, sentences, rng, max_m=1000):
    """Monte Carlo MI between sentence and latent, one z per sentence.

    mi = mean_n[ log q(z_n|x_n) - log q(z_n) ], with the aggregate
    posterior q(z) estimated by logsumexp over all M posteriors minus
    log M. Returns (mi, parts) where parts carries the decomposition.
    """
    if len(sentences) < 2:
        raise ValueError("mutual_information needs at least 2 sentences")
    sentences = sentences[:max_m]
    mu, lv = _posterior_batch(params, cfg, sentences)
    return mi_from_posteriors(mu, lv, rng)


def mi_from_posteriors(mu, lv, rng):
    Mn = mu.shape[0]
    eps = rng.normal(mu.shape)
    z = mu + np.exp(0.5 * lv) * eps
    # log q(z_n | x_m) for all pairs: [M (z), M (posteriors)]
    pair = _log_normal(z[:, None, :], mu[None, :, :], lv[None, :, :])
    log_qz = logsumexp(pair, axis=1) - log(Mn)
    log_qz_given_x = np.diag(pair)
    log_pz = _log_prior(z)
    aggregate_kl = float(np.mean(log_qz_given_x - log_pz))
    mi = float(np.mean(log_qz_given_x - log_qz))
    marginal_kl = float(np.mean(log_qz - log_pz))
    parts = {"aggregate_kl": aggregate_kl, "marginal_kl": marginal_kl,
             "residual": aggregate_kl - mi - marginal_kl}
    return mi, parts


def posterior_means(params, cfg, corpus):
    mu, _ = _posterior_batch(params, cfg, corpus)
    return mu


def active_units_from_means(means, threshold=0.01):
    """(count, per-dimension variance) of posterior means across sentences."""
    means = np.asarray(means)
    if means.shape[0] < 2:
        raise ValueError("active_units needs at least 2 sentences")
    var = means.var(axis=0, ddof=1)
    return int(np.sum(var > threshold)), var


def active_units(params, cfg, corpus, threshold=0.01):
    return active_units_from_means(posterior_means(params, cfg, corpus), threshold)


def elbo_report(params, cfg, corpus, rng):
    """(neg_elbo, kl, rec) as per-sentence averages; neg_elbo = rec + kl."""
    if not corpus:
        raise ValueError("elbo_report: empty corpus")
    recs, kls = [], []
    for s in corpus:
        post = M.encode(params, cfg, s.encoder_view)
        z = post.mu + np.exp(0.5 * post.logvar) * rng.normal(cfg.P)
        recs.append(-log_px_given_z(params, cfg, s, z[None, :])[0])
        kls.append(gaussian_kl(post.mu, post.logvar).sum())
    rec = float(np.mean(recs))
    kl = float(np.mean(kls))
    return rec + kl, kl, rec


def kl_decomposition_check(params, cfg, sentences, rng):
    """Numerical check of KL = MI + marginal KL (identical by construction)
    plus the reconstruction-side MI lower-bound proxy.

    `mi_minus_recon` is mi - E[log p(x|z)]; the data-entropy constant in
    the reconstruction bound cancels when comparing this across models on
    the same corpus.
    """
    if len(sentences) < 2:
        raise ValueError("kl_decomposition_check needs at least 2 sentences")
    mi, parts = mutual_information(params, cfg, sentences, rng)
    rec_terms = []
    for s in sentences[:64]:
        post = M.encode(params, cfg, s.encoder_view)
        z = post.mu + np.exp(0.5 * post.logvar) * rng.normal(cfg.P)
        rec_terms.append(log_px_given_z(params, cfg, s, z[None, :])[0])
    recon_term = float(np.mean(rec_terms))
    return {"mi": mi, "recon_term": recon_term,
            "mi_minus_recon": mi - recon_term, **parts}


def evaluate(params, cfg, corpus, k, rng, mi_sample=500):
    """Full MetricsReport over a corpus."""
    total_ll = sum(iw_log_likelihood(params, cfg, s, k, rng) for s in corpus)
    words = sum(word_count(s) for s in corpus)
    iw_nll = -total_ll / len(corpus)
    ppl = float(np.exp(-total_ll / words))
    mi, _ = mutual_information(params, cfg, corpus[:mi_sample], rng)
    au, _ = active_units(params, cfg, corpus)
    neg_elbo, kl, rec = elbo_report(params, cfg, corpus, rng)
    return MetricsReport(iw_nll=float(iw_nll), ppl=ppl, mi=mi, au=au,
                         neg_elbo=float(neg_elbo), kl=float(kl), rec=float(rec),
                         k_used=k, n_sentences=len(corpus))
