"""Command-line entry points.

Corpus arguments accept either a file path (newline-delimited sentences;
labelled variants use "label<TAB>sentence") or a synthetic spec
"synth:GRAMMAR:N[:SEED]" rendered on the fly.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import checkpoint as ckpt
from . import heads, latent, metrics, report, service
from .model import ModelConfig, init_params
from .objective import DivergenceError, TrainConfig, train
from .rng import RngState
from .tokenizer import (CorpusError, Vocabulary, build_vocab, encode_lines,
                        synth_labeled_corpus)


class ConfigError(ValueError):
    pass


_MODEL_KEYS = {"L", "H", "A", "P", "V_enc", "V_dec", "max_len", "injection", "n_classes"}
_TRAIN_KEYS = {"objective", "lam", "total_steps", "n_cycles", "beta_max",
               "constant_beta", "batch_size", "lr", "seed", "injection",
               "strict", "log_every"}
_TOP_KEYS = {"model", "train", "corpus", "vocab_size", "out", "eval_every", "seed",
             "strict"}


def _check_keys(d, allowed, where):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} config keys: {sorted(unknown)}")


def load_run_config(path):
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    _check_keys(raw, _TOP_KEYS, "top-level")
    _check_keys(raw.get("model", {}), _MODEL_KEYS, "model")
    _check_keys(raw.get("train", {}), _TRAIN_KEYS, "train")
    if "corpus" not in raw:
        raise ConfigError("config must name a corpus")
    return raw


def resolve_corpus(spec):
    """(lines, labels-or-None) from a path or a synth:grammar:n[:seed] spec."""
    if spec.startswith("synth:"):
        parts = spec.split(":")
        if len(parts) not in (3, 4):
            raise ConfigError(f"bad synth corpus spec: {spec!r}")
        grammar, n = parts[1], int(parts[2])
        seed = int(parts[3]) if len(parts) == 4 else 0
        try:
            return synth_labeled_corpus(seed, n, grammar)
        except CorpusError as e:
            raise ConfigError(str(e))
    if not os.path.exists(spec):
        raise ConfigError(f"corpus file not found: {spec}")
    lines, labels = [], []
    labelled = None
    with open(spec, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            if labelled is None:
                labelled = "\t" in line and line.split("\t", 1)[0].isdigit()
            if labelled:
                lab, text = line.split("\t", 1)
                labels.append(int(lab))
                lines.append(text)
            else:
                lines.append(line)
    return lines, (labels if labelled else None)


def _load_model(args):
    params, cfg, manifest = ckpt.load(args.checkpoint)
    vocab = Vocabulary.load(args.vocab)
    return params, cfg, vocab, manifest


def cmd_train(args):
    raw = load_run_config(args.config)
    if args.seed is not None:
        raw.setdefault("train", {})["seed"] = args.seed
    if args.strict:
        raw.setdefault("train", {})["strict"] = True
    out = args.out or raw.get("out", "run_out")
    os.makedirs(out, exist_ok=True)
    lines, _ = resolve_corpus(raw["corpus"])
    vocab = build_vocab(lines, raw.get("vocab_size", 256))
    mc = dict(raw.get("model", {}))
    mc.setdefault("V_enc", len(vocab))
    mc.setdefault("V_dec", len(vocab))
    cfg = ModelConfig.from_dict({**ModelConfig().to_dict(), **mc})
    tc = TrainConfig(**raw.get("train", {}))
    cfg.injection = tc.injection
    corpus, stats = encode_lines(lines, vocab, cfg.max_len)
    if not corpus:
        raise ConfigError("corpus is empty after length filtering")
    params = init_params(cfg, RngState(seed=tc.seed, stream_id=0))
    log = train(tc, corpus, params, cfg, log_path=os.path.join(out, "metrics.ndjson"))
    vocab.save(os.path.join(out, "vocab.txt"))
    ckpt.save(os.path.join(out, "model.ckpt"), params, cfg,
              vhash=ckpt.vocab_hash(vocab), step=tc.total_steps, seed=tc.seed)
    report.training_curves(log, os.path.join(out, "loss_curve.png"))
    last = log[-1]
    print(f"{'step':>6} {'beta':>6} {'recon':>10} {'kl_raw':>8} {'total':>10}")
    print(f"{last['step']:>6} {last['beta']:>6.2f} {last['recon']:>10.4f} "
          f"{last['kl_raw']:>8.4f} {last['total']:>10.4f}")
    print(f"corpus: {stats.n_sentences} sentences, {stats.n_tokens} tokens, "
          f"{stats.n_dropped} dropped")
    print(f"wrote {out}/model.ckpt, vocab.txt, metrics.ndjson, loss_curve.png")
    return 0


def cmd_eval(args):
    params, cfg, vocab, _ = _load_model(args)
    lines, _ = resolve_corpus(args.corpus)
    corpus, _ = encode_lines(lines, vocab, cfg.max_len)
    rng = RngState(seed=args.seed or 0, stream_id=40)
    rep = metrics.evaluate(params, cfg, corpus, k=args.k, rng=rng)
    print(rep.table())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "metrics.json"), "w") as f:
            f.write(rep.to_json() + "\n")
    return 0


def cmd_interpolate(args):
    params, cfg, vocab, _ = _load_model(args)
    res = latent.interpolate(params, cfg, vocab, args.a, args.b, args.steps)
    print(f"{'tau':>5}  text")
    for tau, text in zip(res.taus, res.sentences):
        print(f"{tau:>5.2f}  {text}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "interpolation.json"), "w") as f:
            json.dump({"rows": [{"tau": t, "text": s}
                                for t, s in zip(res.taus, res.sentences)]}, f)
    return 0


def cmd_arith(args):
    params, cfg, vocab, _ = _load_model(args)
    zd, text = latent.arithmetic(params, cfg, vocab, args.a, args.b, args.c)
    print(f"z_D = z_B - z_A + z_C -> {text}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "arith.json"), "w") as f:
            json.dump({"z_d": [float(x) for x in zd], "text": text}, f)
    return 0


def _labelled_corpus(spec, vocab, max_len):
    lines, labels = resolve_corpus(spec)
    if labels is None:
        raise ConfigError("this command needs a labelled corpus "
                          "(synth:... or label<TAB>sentence lines)")
    labeled = []
    for line, lab in zip(lines, labels):
        enc_list, _ = encode_lines([line], vocab, max_len)
        if enc_list:
            labeled.append((enc_list[0], lab))
    return labeled


def cmd_classify(args):
    params, cfg, vocab, _ = _load_model(args)
    labeled = _labelled_corpus(args.corpus, vocab, cfg.max_len)
    rng = RngState(seed=args.seed or 0, stream_id=50)
    sizes = tuple(int(s) for s in args.sizes.split(","))
    results = heads.few_shot_protocol(params, cfg, labeled, sizes=sizes,
                                      trials=args.trials, rng=rng)
    print(f"{'n/class':>8} {'mean acc':>9} {'std':>7}")
    for size in sorted(results):
        m, s = results[size]
        print(f"{size:>8} {m:>9.3f} {s:>7.3f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "fewshot.tsv"), "w") as f:
            f.write("size\tmean\tstd\n")
            for size in sorted(results):
                m, s = results[size]
                f.write(f"{size}\t{m:.6f}\t{s:.6f}\n")
        report.fewshot_curve({"backbone": results},
                             os.path.join(args.out, "fewshot.png"))
    return 0


def cmd_cgan(args):
    params, cfg, vocab, _ = _load_model(args)
    labeled = _labelled_corpus(args.corpus, vocab, cfg.max_len)
    rng = RngState(seed=args.seed or 0, stream_id=60)
    mus = metrics.posterior_means(params, cfg, [s for s, _ in labeled])
    labels = np.asarray([y for _, y in labeled])
    gan = heads.cgan_train(mus, labels, rng, steps=args.steps)
    out = args.out or "cgan_out"
    os.makedirs(out, exist_ok=True)
    report.gan_curves(gan.log, os.path.join(out, "gan_curves.png"))
    with open(os.path.join(out, "samples.txt"), "w", encoding="utf-8") as f:
        for label in range(gan.n_classes):
            texts, _ = heads.cgan_generate(gan, params, cfg, vocab, label,
                                           args.n_samples, rng)
            for t in texts:
                f.write(f"{label}\t{t}\n")
                print(f"[label {label}] {t}")
    print(f"wrote {out}/gan_curves.png, samples.txt")
    return 0


def cmd_export(args):
    params, cfg, vocab, _ = _load_model(args)
    labeled = _labelled_corpus(args.corpus, vocab, cfg.max_len)
    heads.export_features(params, cfg, labeled, args.which, args.path)
    print(f"wrote {args.path} ({len(labeled)} rows)")
    return 0


def cmd_serve(args):
    service.serve(args.checkpoint, args.vocab, addr=args.addr)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="textvae",
                                description="Latent-variable transformer language "
                                            "model: training, evaluation, latent "
                                            "manipulation, playground service.")
    sub = p.add_subparsers(dest="cmd", required=True)

    def add_model_args(sp):
        sp.add_argument("--checkpoint", required=True)
        sp.add_argument("--vocab", required=True)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)

    sp = sub.add_parser("train", help="train a model from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--strict", action="store_true")
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="metrics report over a corpus")
    add_model_args(sp)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--k", type=int, default=50)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("interpolate", help="latent interpolation between two sentences")
    add_model_args(sp)
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--steps", type=int, default=11)
    sp.set_defaults(fn=cmd_interpolate)

    sp = sub.add_parser("arith", help="latent arithmetic z_B - z_A + z_C")
    add_model_args(sp)
    for flag in ("--a", "--b", "--c"):
        sp.add_argument(flag, required=True)
    sp.set_defaults(fn=cmd_arith)

    sp = sub.add_parser("classify", help="few-shot linear classification protocol")
    add_model_args(sp)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--sizes", default="1,10,100")
    sp.add_argument("--trials", type=int, default=10)
    sp.set_defaults(fn=cmd_classify)

    sp = sub.add_parser("cgan", help="label-conditional GAN on the latent space")
    add_model_args(sp)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--steps", type=int, default=2000)
    sp.add_argument("--n-samples", type=int, default=10)
    sp.set_defaults(fn=cmd_cgan)

    sp = sub.add_parser("export", help="export features for external projection")
    add_model_args(sp)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--which", choices=("h_cls", "mu"), default="h_cls")
    sp.add_argument("--path", required=True)
    sp.set_defaults(fn=cmd_export)

    sp = sub.add_parser("serve", help="run the HTTP playground service")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--vocab", required=True)
    sp.add_argument("--addr", default="127.0.0.1:8080")
    sp.set_defaults(fn=cmd_serve)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, CorpusError, ckpt.CheckpointError, FileNotFoundError,
            ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DivergenceError as e:
        print(f"numeric divergence: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
