"""Small-vocabulary tokenization, corpus IO, and synthetic template corpora.

A single vocabulary backs two views of every sentence: the encoder view
([CLS] x1..xn) and the decoder view ([BOS] x1..xn [EOS]). Distinct encoder
and decoder vocabularies stay legal at the model level; at this scale one
shared table is used for both.
"""

from collections import Counter
from dataclasses import dataclass, field

from .rng import RngState

CLS, BOS, EOS, PAD, UNK = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ("[CLS]", "[BOS]", "[EOS]", "[PAD]", "[UNK]")


class CorpusError(ValueError):
    pass


@dataclass
class Vocabulary:
    id_to_token: list
    kind: str = "whitespace"   # or "character"
    token_to_id: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.token_to_id:
            self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}

    def __len__(self):
        return len(self.id_to_token)

    def split(self, text):
        return text.split() if self.kind == "whitespace" else list(text)

    def join(self, tokens):
        return (" " if self.kind == "whitespace" else "").join(tokens)

    def lookup(self, token):
        return self.token_to_id.get(token, UNK)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"#kind={self.kind}\n")
            for t in self.id_to_token:
                f.write(t + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
        kind = "whitespace"
        if lines and lines[0].startswith("#kind="):
            kind = lines[0].split("=", 1)[1]
            lines = lines[1:]
        return cls(id_to_token=lines, kind=kind)


@dataclass
class EncodedSentence:
    encoder_view: list
    decoder_view: list
    raw: str


@dataclass
class CorpusStats:
    n_sentences: int = 0
    n_tokens: int = 0
    n_dropped: int = 0
    coverage: float = 1.0


def build_vocab(lines, max_size, kind="whitespace"):
    """Frequency-ranked vocabulary; ties broken lexicographically.

    Specials always occupy ids 0-4; max_size bounds the total size.
    """
    if max_size < len(SPECIAL_TOKENS) + 1:
        raise ValueError(f"max_size must be at least {len(SPECIAL_TOKENS) + 1}")
    counts = Counter()
    seen_any = False
    for line in lines:
        seen_any = True
        toks = line.split() if kind == "whitespace" else list(line)
        counts.update(toks)
    if not seen_any:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = [t for t, _ in ranked[: max_size - len(SPECIAL_TOKENS)]]
    return Vocabulary(id_to_token=list(SPECIAL_TOKENS) + keep, kind=kind)


def encode_sentence(text, vocab, max_len=64):
    """Both views of one sentence, or None when it exceeds the length cap.

    Over-length sentences are dropped, not truncated.
    """
    tokens = vocab.split(text)
    if len(tokens) > max_len - 2:
        return None
    ids = [vocab.lookup(t) for t in tokens]
    return EncodedSentence(encoder_view=[CLS] + ids,
                           decoder_view=[BOS] + ids + [EOS],
                           raw=text)


def decode_ids(ids, vocab):
    """Text of an id sequence, skipping special ids."""
    toks = [vocab.id_to_token[i] for i in ids if i >= len(SPECIAL_TOKENS)]
    return vocab.join(toks)


def encode_lines(lines, vocab, max_len=64):
    sentences = []
    stats = CorpusStats()
    unk = 0
    for line in lines:
        line = line.rstrip("\n")
        if not line:
            continue
        enc = encode_sentence(line, vocab, max_len)
        if enc is None:
            stats.n_dropped += 1
            continue
        sentences.append(enc)
        body = enc.decoder_view[1:-1]
        stats.n_sentences += 1
        stats.n_tokens += len(body)
        unk += sum(1 for i in body if i == UNK)
    stats.coverage = 1.0 - unk / stats.n_tokens if stats.n_tokens else 1.0
    return sentences, stats


def load_corpus(path, vocab, max_len=64):
    """Newline-delimited UTF-8 sentences -> encoded sentences + stats."""
    with open(path, encoding="utf-8") as f:
        return encode_lines(f, vocab, max_len)


# ---------------------------------------------------------------------------
# synthetic template grammar
#
# Subject-verb-object sentences with two attribute slots: grammatical
# number (singular/plural, verb agrees) and a binary topic label carried
# by the verb+object field. Every slot is recoverable from surface text,
# which gives the tests an exact oracle classifier.

_NOUNS = [("cat", "cats"), ("dog", "dogs"), ("bird", "birds"),
          ("child", "children"), ("robot", "robots"), ("farmer", "farmers")]
_VERBS = [
    # label 0: food
    [("eats", "eat"), ("likes", "like"), ("wants", "want"), ("cooks", "cook")],
    # label 1: motion
    [("chases", "chase"), ("follows", "follow"), ("watches", "watch"), ("finds", "find")],
]
_OBJECTS = [
    ["apple", "bread", "rice", "soup", "cake"],
    ["ball", "car", "train", "kite", "drum"],
]
_ADVERBS = ["today", "often", "never", "quietly"]

GRAMMARS = ("svo",)
N_LABELS = 2


def _render(noun_i, plural, label, verb_i, obj_i, adv_i):
    noun = _NOUNS[noun_i][1 if plural else 0]
    verb = _VERBS[label][verb_i][1 if plural else 0]
    obj = _OBJECTS[label][obj_i]
    words = ["the", noun, verb, "the", obj]
    if adv_i >= 0:
        words.append(_ADVERBS[adv_i])
    return " ".join(words)


def _sample_sentence(rng, label=None):
    if label is None:
        label = int(rng.integers(0, N_LABELS))
    noun_i = int(rng.integers(0, len(_NOUNS)))
    plural = bool(rng.integers(0, 2))
    verb_i = int(rng.integers(0, len(_VERBS[label])))
    obj_i = int(rng.integers(0, len(_OBJECTS[label])))
    adv_i = int(rng.integers(-1, len(_ADVERBS)))
    return _render(noun_i, plural, label, verb_i, obj_i, adv_i), label


def synth_corpus(seed, n_sentences, grammar_id="svo"):
    """Deterministic synthetic corpus, one sentence per line."""
    lines, _ = synth_labeled_corpus(seed, n_sentences, grammar_id)
    return lines


def synth_labeled_corpus(seed, n_sentences, grammar_id="svo"):
    """(lines, labels) with uniformly sampled topic labels."""
    if grammar_id not in GRAMMARS:
        raise CorpusError(f"unknown grammar id: {grammar_id!r}")
    rng = RngState(seed=seed, stream_id=101)
    lines, labels = [], []
    for _ in range(n_sentences):
        line, label = _sample_sentence(rng)
        lines.append(line)
        labels.append(label)
    return lines, labels


def parse_sentence(text):
    """Oracle parse of a grammar sentence.

    Returns {noun, plural, label, verb, obj, adverb} or None when the text
    is not a well-formed grammar sentence.
    """
    words = text.split()
    if len(words) not in (5, 6) or words[0] != "the" or words[3] != "the":
        return None
    noun_i = plural = None
    for i, (sg, pl) in enumerate(_NOUNS):
        if words[1] == sg:
            noun_i, plural = i, False
        elif words[1] == pl:
            noun_i, plural = i, True
    if noun_i is None:
        return None
    label = verb_i = None
    for lb in range(N_LABELS):
        for vi, forms in enumerate(_VERBS[lb]):
            if words[2] == forms[1 if plural else 0]:
                label, verb_i = lb, vi
    if label is None:
        return None
    if words[4] not in _OBJECTS[label]:
        return None
    adverb = words[5] if len(words) == 6 else None
    if len(words) == 6 and adverb not in _ADVERBS:
        return None
    return {"noun": noun_i, "plural": plural, "label": label,
            "verb": verb_i, "obj": words[4], "adverb": adverb}


def oracle_label(text):
    """Topic label recovered from surface text, or None if unparseable."""
    p = parse_sentence(text)
    return None if p is None else p["label"]


def arithmetic_triples(seed, n_triples):
    """(A, B, C, expected) quadruples for the number-flip analogy test.

    A and B share noun/verb/object and differ only in number; C is a
    fresh singular sentence; `expected` is C with B's number applied.
    """
    rng = RngState(seed=seed, stream_id=102)
    out = []
    for _ in range(n_triples):
        label = int(rng.integers(0, N_LABELS))
        noun_a = int(rng.integers(0, len(_NOUNS)))
        verb_a = int(rng.integers(0, len(_VERBS[label])))
        obj_a = int(rng.integers(0, len(_OBJECTS[label])))
        adv_a = int(rng.integers(-1, len(_ADVERBS)))
        label_c = int(rng.integers(0, N_LABELS))
        noun_c = int(rng.integers(0, len(_NOUNS)))
        verb_c = int(rng.integers(0, len(_VERBS[label_c])))
        obj_c = int(rng.integers(0, len(_OBJECTS[label_c])))
        adv_c = int(rng.integers(-1, len(_ADVERBS)))
        a = _render(noun_a, False, label, verb_a, obj_a, adv_a)
        b = _render(noun_a, True, label, verb_a, obj_a, adv_a)
        c = _render(noun_c, False, label_c, verb_c, obj_c, adv_c)
        expected = _render(noun_c, True, label_c, verb_c, obj_c, adv_c)
        out.append((a, b, c, expected))
    return out
