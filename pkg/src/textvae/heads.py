"""Downstream heads on a trained backbone: a linear classifier over the
[CLS] state (feature-based or fine-tuned), the few-shot evaluation
protocol, and a label-conditional GAN over the frozen latent space.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import model as M
from .autodiff import AdamHyper, AdamState, Tape, Tensor, adam_step, backward, zero_grads
from .objective import DivergenceError
from .rng import RngState
from .tokenizer import decode_ids


@dataclass
class ClassifierHead:
    w_c: Tensor          # [K, H]
    n_classes: int
    mode: str = "feature_based"   # or "fine_tune"


def init_classifier(cfg, n_classes, rng):
    if n_classes < 2:
        raise ValueError("n_classes must be >= 2")
    return ClassifierHead(w_c=Tensor(rng.normal((n_classes, cfg.H)) * 0.02,
                                     requires_grad=True),
                          n_classes=n_classes)


def extract_h_cls(params, cfg, sentences, chunk=256):
    """Frozen-backbone [CLS] features, [N, H]."""
    feats = []
    for i in range(0, len(sentences), chunk):
        part = sentences[i:i + chunk]
        ids, mask = M._pad_batch([s.encoder_view for s in part])
        h, _, _ = M.encode_batch(params, cfg, ids, mask)
        feats.append(h.values)
    return np.concatenate(feats)


def _class_logits(h, head):
    return ad.matmul(h, ad.transpose(head.w_c, (1, 0)))


def classifier_accuracy(feats, labels, head):
    logits = feats @ head.w_c.values.T
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(labels)))


def classifier_train(labeled, params, cfg, head, mode="feature_based",
                     epochs=100, rng=None, lr=1e-2, batch_size=64):
    """Train the linear head; fine_tune mode also updates the encoder.

    labeled: list of (EncodedSentence, label). feature_based leaves the
    backbone untouched (enforced, not just promised).
    """
    if not labeled:
        raise ValueError("classifier_train: empty labeled set")
    labels = np.asarray([y for _, y in labeled])
    if labels.min() < 0 or labels.max() >= head.n_classes:
        raise ValueError(f"label out of range [0, {head.n_classes})")
    head.mode = mode
    sents = [s for s, _ in labeled]
    rng = rng or RngState(seed=0, stream_id=7)
    adam = AdamState(hyper=AdamHyper(lr=lr))
    if mode == "feature_based":
        feats = ad.constant(extract_h_cls(params, cfg, sents))
        train_params = {"w_c": head.w_c}
        for _ in range(epochs):
            zero_grads(train_params)
            with Tape() as tape:
                loss = ad.cross_entropy(_class_logits(feats, head), labels)
            backward(tape, loss)
            adam_step(train_params, adam)
    elif mode == "fine_tune":
        train_params = dict(params)
        train_params["w_c"] = head.w_c
        n = len(sents)
        for _ in range(epochs):
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                idx = order[start:start + batch_size]
                ids, mask = M._pad_batch([sents[i].encoder_view for i in idx])
                zero_grads(train_params)
                with Tape() as tape:
                    h, _, _ = M.encode_batch(params, cfg, ids, mask)
                    loss = ad.cross_entropy(_class_logits(h, head), labels[idx])
                backward(tape, loss)
                adam_step(train_params, adam)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return head


def few_shot_protocol(params, cfg, labeled, sizes=(1, 10, 100, 1000),
                      trials=10, rng=None, epochs=100, test_fraction=0.3, lr=1e-2):
    """Feature-based accuracy at several train-set sizes per class.

    Returns {size: (mean_acc, std_acc)} over `trials` resampled subsets,
    evaluated on a held-out split. Deterministic under the rng seed.
    """
    rng = rng or RngState(seed=0, stream_id=8)
    labels = np.asarray([y for _, y in labeled])
    classes = np.unique(labels)
    n_test = max(1, int(len(labeled) * test_fraction))
    perm = rng.permutation(len(labeled))
    test_idx, pool_idx = perm[:n_test], perm[n_test:]
    feats = extract_h_cls(params, cfg, [s for s, _ in labeled])
    pool_by_class = {c: pool_idx[labels[pool_idx] == c] for c in classes}
    results = {}
    for size in sizes:
        for c in classes:
            if len(pool_by_class[c]) < size:
                raise ValueError(f"not enough examples of class {c} for size {size}")
        accs = []
        for _ in range(trials):
            train_idx = np.concatenate(
                [pool_by_class[c][rng.choice(len(pool_by_class[c]), size=size,
                                             replace=False)] for c in classes])
            head = init_classifier(cfg, len(classes), rng)
            train_feats = ad.constant(feats[train_idx])
            adam = AdamState(hyper=AdamHyper(lr=lr))
            hp = {"w_c": head.w_c}
            for _ in range(epochs):
                zero_grads(hp)
                with Tape() as tape:
                    loss = ad.cross_entropy(_class_logits(train_feats, head),
                                            labels[train_idx])
                backward(tape, loss)
                adam_step(hp, adam)
            accs.append(classifier_accuracy(feats[test_idx], labels[test_idx], head))
        results[size] = (float(np.mean(accs)), float(np.std(accs)))
    return results


# ---------------------------------------------------------------------------
# conditional GAN on the frozen latent space


@dataclass
class LatentGan:
    g_params: dict
    d_params: dict
    P: int
    n_classes: int
    noise_dim: int
    log: list = field(default_factory=list)


def _mlp_params(sizes, rng, prefix):
    p = {}
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        p[f"{prefix}.w{i}"] = Tensor(rng.normal((a, b)) * (1.0 / np.sqrt(a)),
                                     requires_grad=True)
        p[f"{prefix}.b{i}"] = Tensor(np.zeros(b), requires_grad=True)
    return p


def _mlp_forward(p, prefix, x, n_layers):
    h = x
    for i in range(n_layers):
        h = ad.add(ad.matmul(h, p[f"{prefix}.w{i}"]), p[f"{prefix}.b{i}"])
        if i < n_layers - 1:
            h = ad.tanh(h)
    return h


def init_latent_gan(P, n_classes, rng, hidden=None, noise_dim=None):
    hidden = hidden or 4 * P
    noise_dim = noise_dim or P
    g = _mlp_params([noise_dim + n_classes, hidden, hidden, P], rng, "g")
    d = _mlp_params([P + n_classes, hidden, hidden, 1], rng, "d")
    return LatentGan(g_params=g, d_params=d, P=P, n_classes=n_classes,
                     noise_dim=noise_dim)


def _one_hot(labels, k):
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def gan_sample_z(gan, labels, rng):
    """Latents G(eps, y) for an int label array (numpy output)."""
    eps = rng.normal((len(labels), gan.noise_dim))
    x = ad.constant(np.concatenate([eps, _one_hot(labels, gan.n_classes)], axis=1))
    return _mlp_forward(gan.g_params, "g", x, 3).values


def cgan_train(latents, labels, rng, steps=2000, batch_size=64,
               lr_g=1e-3, lr_d=1e-3, gan=None):
    """Alternate discriminator/generator steps on the latent cGAN objective.

    The discriminator scores (z, one-hot label) pairs; without the label it
    could only match the latent marginal and the conditionals would stay
    unidentified. The generator uses the non-saturating loss. Real latents
    are the frozen backbone's posterior means. Logs (d_loss, g_loss,
    minimax value) per step.
    """
    latents = np.asarray(latents)
    labels = np.asarray(labels)
    n, P = latents.shape
    n_classes = int(labels.max()) + 1
    gan = gan or init_latent_gan(P, n_classes, rng)
    adam_d = AdamState(hyper=AdamHyper(lr=lr_d))
    adam_g = AdamState(hyper=AdamHyper(lr=lr_g))
    for step in range(steps):
        idx = rng.choice(n, size=min(batch_size, n))
        real = ad.constant(np.concatenate(
            [latents[idx], _one_hot(labels[idx], gan.n_classes)], axis=1))
        fake_labels = labels[rng.choice(n, size=min(batch_size, n))]
        fake_hot = _one_hot(fake_labels, gan.n_classes)
        eps = rng.normal((len(fake_labels), gan.noise_dim))
        gin = np.concatenate([eps, fake_hot], axis=1)

        # discriminator step (generator output detached)
        zero_grads(gan.d_params)
        fake_z = _mlp_forward(gan.g_params, "g", ad.constant(gin), 3).values
        with Tape() as tape:
            d_real = _mlp_forward(gan.d_params, "d", real, 3)
            d_fake = _mlp_forward(
                gan.d_params, "d",
                ad.constant(np.concatenate([fake_z, fake_hot], axis=1)), 3)
            d_loss = ad.add(ad.mean_all(ad.softplus(ad.neg(d_real))),
                            ad.mean_all(ad.softplus(d_fake)))
        if not np.isfinite(d_loss.values):
            raise DivergenceError(f"cGAN discriminator loss diverged at step {step}")
        backward(tape, d_loss)
        adam_step(gan.d_params, adam_d)

        # generator step (non-saturating)
        zero_grads(gan.g_params)
        zero_grads(gan.d_params)
        with Tape() as tape:
            gz = _mlp_forward(gan.g_params, "g", ad.constant(gin), 3)
            d_on_fake = _mlp_forward(
                gan.d_params, "d",
                ad.concat([gz, ad.constant(fake_hot)], axis=1), 3)
            g_loss = ad.mean_all(ad.softplus(ad.neg(d_on_fake)))
        if not np.isfinite(g_loss.values):
            raise DivergenceError(f"cGAN generator loss diverged at step {step}")
        backward(tape, g_loss)
        adam_step(gan.g_params, adam_g)
        zero_grads(gan.d_params)
        gan.log.append({"step": step, "d_loss": float(d_loss.values),
                        "g_loss": float(g_loss.values),
                        "minimax": -float(d_loss.values)})
    return gan


def cgan_generate(gan, params, cfg, vocab, label, n, rng):
    """n sentences decoded greedily from G(eps, label)."""
    if not 0 <= label < gan.n_classes:
        raise ValueError(f"label {label} out of range [0, {gan.n_classes})")
    if n == 0:
        return [], np.zeros((0, gan.P))
    zs = gan_sample_z(gan, np.full(n, label), rng)
    texts = []
    for z in zs:
        inj = M.build_injection(params, cfg, z[None, :])
        texts.append(decode_ids(M.decode_greedy(params, cfg, inj), vocab))
    return texts, zs


# ---------------------------------------------------------------------------
# feature export


def export_features(params, cfg, labeled, which, path):
    """Tab-separated label + feature rows at 17 significant digits."""
    if which not in ("h_cls", "mu"):
        raise ValueError("which must be 'h_cls' or 'mu'")
    sents = [s for s, _ in labeled]
    labels = [y for _, y in labeled]
    if sents:
        if which == "h_cls":
            feats = extract_h_cls(params, cfg, sents)
        else:
            from .metrics import posterior_means
            feats = posterior_means(params, cfg, sents)
        dim = feats.shape[1]
    else:
        feats = np.zeros((0, 0))
        dim = cfg.H if which == "h_cls" else cfg.P
    with open(path, "w", encoding="utf-8") as f:
        f.write("label\t" + "\t".join(f"f{i}" for i in range(dim)) + "\n")
        for y, row in zip(labels, feats):
            f.write(str(int(y)) + "\t" + "\t".join(f"{v:.17g}" for v in row) + "\n")
    return path


def load_features(path):
    labels, rows = [], []
    with open(path, encoding="utf-8") as f:
        next(f)
        for line in f:
            parts = line.rstrip("\n").split("\t")
            labels.append(int(parts[0]))
            rows.append([float(v) for v in parts[1:]])
    return np.asarray(labels), np.asarray(rows)
