"""Deterministic synthetic multi-parallel corpora built from cipher
languages.

A cipher language renders a base sentence (a sequence of abstract token
ids) by permuting the token ids and spelling each id as a short word;
optionally it also reverses word order. Renderings of one base sentence in
different languages are exact translations of each other, which gives a
desk-scale test bed with a perfect translation oracle: no real data, no
ambiguity, held-out spoke-spoke pairs that are genuinely zero-shot.
"""

import os
from dataclasses import dataclass, field

import numpy as np

MIN_LEN, MAX_LEN = 3, 12


def spell(token_id):
    """Two-letter word for a token id (aa, ab, ..., zz)."""
    return chr(97 + token_id // 26) + chr(97 + token_id % 26)


@dataclass
class CipherLanguage:
    name: str
    permutation: np.ndarray          # bijection over 0..V-1
    word_order: str = "identity"     # "identity" | "reverse"

    def __post_init__(self):
        perm = np.asarray(self.permutation)
        if sorted(perm.tolist()) != list(range(len(perm))):
            raise ValueError(f"{self.name}: permutation is not a bijection")
        if self.word_order not in ("identity", "reverse"):
            raise ValueError(f"unknown word order {self.word_order!r}")
        self.inverse = np.argsort(perm)

    def render(self, base_sentence):
        words = [spell(int(self.permutation[t])) for t in base_sentence]
        if self.word_order == "reverse":
            words.reverse()
        return " ".join(words)

    def read(self, text):
        """Inverse of render: surface text back to base token ids."""
        words = text.split()
        if self.word_order == "reverse":
            words = words[::-1]
        ids = []
        for w in words:
            tok = (ord(w[0]) - 97) * 26 + (ord(w[1]) - 97)
            ids.append(int(self.inverse[tok]))
        return ids


@dataclass
class SynthCorpus:
    seed: int
    vocab_size: int
    languages: list                  # CipherLanguage, hub first
    base_train: list                 # list of base sentences (lists of ids)
    base_test: list

    @property
    def hub(self):
        return self.languages[0]

    def render_all(self, base_sentences, lang):
        return [lang.render(s) for s in base_sentences]

    def language(self, name):
        for lang in self.languages:
            if lang.name == name:
                return lang
        raise KeyError(name)


def generate(seed, vocab_size, n_sentences, language_names,
             word_orders=None, test_fraction=0.1):
    """Deterministic corpus: random base sentences plus one cipher per
    language. The first language is the hub and uses the identity cipher.
    """
    if vocab_size < 10:
        raise ValueError("vocab_size must be >= 10")
    if len(language_names) < 2:
        raise ValueError("need at least 2 languages")
    if n_sentences < 10:
        raise ValueError("need at least 10 sentences")
    rng = np.random.default_rng(seed)
    word_orders = word_orders or {}

    languages = []
    for i, name in enumerate(language_names):
        if i == 0:
            perm = np.arange(vocab_size)
        else:
            perm = rng.permutation(vocab_size)
        languages.append(CipherLanguage(
            name=name, permutation=perm,
            word_order=word_orders.get(name, "identity")))

    seen = set()
    base = []
    while len(base) < n_sentences:
        length = int(rng.integers(MIN_LEN, MAX_LEN + 1))
        sent = tuple(int(t) for t in rng.integers(0, vocab_size,
                                                  size=length))
        if sent in seen:
            continue
        seen.add(sent)
        base.append(list(sent))

    n_test = max(1, int(round(n_sentences * test_fraction)))
    return SynthCorpus(seed=seed, vocab_size=vocab_size, languages=languages,
                       base_train=base[n_test:], base_test=base[:n_test])


def label_rule_contains(positive_tokens):
    """Label 1 iff the base sentence contains any of the given base ids."""
    positive = set(int(t) for t in positive_tokens)

    def rule(base_sentence):
        return int(any(t in positive for t in base_sentence))

    return rule


def label_rule_variety(threshold):
    """Label 1 iff the base sentence uses at least `threshold` distinct
    tokens.

    A global property of the whole sentence (like sentiment polarity) rather
    than a single-token trigger, which makes it a good probe for what a
    pooled sentence vector retains."""

    def rule(base_sentence):
        return int(len(set(base_sentence)) >= threshold)

    return rule


def default_label_rule(vocab_size):
    # 5-of-60-style membership rule lands near 50/50 for lengths 3..12
    k = max(1, round(vocab_size * 5 / 60))
    return label_rule_contains(range(k))


def label_synthetic(corpus, rule=None, split="train"):
    """Labels per base sentence; identical across all language renderings
    by construction (the rule sees only the base sentence)."""
    rule = rule or default_label_rule(corpus.vocab_size)
    base = corpus.base_train if split == "train" else corpus.base_test
    return [rule(s) for s in base]


def write_corpus(corpus, out_dir):
    """Emit hub-and-spoke training files plus test files for every ordered
    pair (spoke-spoke pairs appear only in the test set: zero-shot).

    Files are plain text, one sentence per line, aligned by line number:
    train.<hub>-<spoke>.<lang>, mono.<lang>, test.<src>-<tgt>.<lang>,
    labels.train / labels.test.
    """
    os.makedirs(out_dir, exist_ok=True)
    hub = corpus.hub
    names = [l.name for l in corpus.languages]

    def dump(path, lines):
        with open(os.path.join(out_dir, path), "w", encoding="utf-8") as f:
            for line in lines:
                f.write(line + "\n")

    for lang in corpus.languages[1:]:
        dump(f"train.{hub.name}-{lang.name}.{hub.name}",
             corpus.render_all(corpus.base_train, hub))
        dump(f"train.{hub.name}-{lang.name}.{lang.name}",
             corpus.render_all(corpus.base_train, lang))
    for lang in corpus.languages:
        dump(f"mono.{lang.name}", corpus.render_all(corpus.base_train, lang))
    for src in corpus.languages:
        for tgt in corpus.languages:
            if src.name == tgt.name:
                continue
            dump(f"test.{src.name}-{tgt.name}.{src.name}",
                 corpus.render_all(corpus.base_test, src))
            dump(f"test.{src.name}-{tgt.name}.{tgt.name}",
                 corpus.render_all(corpus.base_test, tgt))
    labels_train = label_synthetic(corpus, split="train")
    labels_test = label_synthetic(corpus, split="test")
    dump("labels.train", [str(x) for x in labels_train])
    dump("labels.test", [str(x) for x in labels_test])
    dump("manifest.txt",
         [f"seed\t{corpus.seed}", f"vocab_size\t{corpus.vocab_size}",
          f"languages\t{' '.join(names)}", f"hub\t{hub.name}",
          f"train_sentences\t{len(corpus.base_train)}",
          f"test_sentences\t{len(corpus.base_test)}"])
