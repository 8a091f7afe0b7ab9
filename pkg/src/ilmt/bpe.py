"""Byte-pair-encoding subword models with per-language vocabularies.

Words are pre-split on whitespace and get an explicit end-of-word marker
symbol; merges never cross word boundaries. Training is fully deterministic:
ties on pair frequency go to the lexicographically smallest pair.
"""

import collections

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ["<pad>", "<bos>", "<eos>", "<unk>"]
END_OF_WORD = "</w>"


class Vocabulary:
    """Bijective token <-> id map with reserved ids 0..3."""

    def __init__(self, tokens=()):
        self.token_to_id = {}
        self.id_to_token = []
        for tok in SPECIALS:
            self._add(tok)
        for tok in tokens:
            self.add(tok)

    def _add(self, tok):
        self.token_to_id[tok] = len(self.id_to_token)
        self.id_to_token.append(tok)

    def add(self, tok):
        if tok in SPECIALS:
            raise ValueError(f"reserved token {tok!r} cannot be re-added")
        if tok not in self.token_to_id:
            self._add(tok)
        return self.token_to_id[tok]

    def id_of(self, tok):
        return self.token_to_id.get(tok, UNK)

    def token_of(self, idx):
        if not 0 <= idx < len(self.id_to_token):
            raise IndexError(f"token id {idx} out of range")
        return self.id_to_token[idx]

    def __len__(self):
        return len(self.id_to_token)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for idx, tok in enumerate(self.id_to_token):
                f.write(f"{tok}\t{idx}\n")

    @classmethod
    def load(cls, path):
        vocab = cls()
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                tok, idx = line.rsplit("\t", 1)
                if tok in SPECIALS:
                    if vocab.token_to_id[tok] != int(idx):
                        raise ValueError(f"special token {tok!r} moved")
                    continue
                got = vocab.add(tok)
                if got != int(idx):
                    raise ValueError(f"non-contiguous vocab at {tok!r}")
        return vocab


class BpeModel:
    """Ordered merge rules learned from a training corpus."""

    def __init__(self, merges, target_vocab_size):
        self.merges = list(merges)
        self.target_vocab_size = target_vocab_size
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}

    def segment_word(self, word):
        """Apply merges in training order to one whitespace token."""
        symbols = list(word) + [END_OF_WORD]
        while len(symbols) > 1:
            best = None
            for i in range(len(symbols) - 1):
                rank = self._ranks.get((symbols[i], symbols[i + 1]))
                if rank is not None and (best is None or rank < best[0]):
                    best = (rank, i)
            if best is None:
                break
            _, i = best
            merged = symbols[i] + symbols[i + 1]
            symbols[i:i + 2] = [merged]
        return symbols

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for left, right in self.merges:
                f.write(f"{left} {right}\n")

    @classmethod
    def load(cls, path, target_vocab_size=0):
        merges = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                left, right = line.split(" ", 1)
                merges.append((left, right))
        return cls(merges, target_vocab_size)


def train_bpe(corpus, target_vocab_size):
    """Learn merges by greedy most-frequent-pair counting.

    ``corpus`` is an iterable of text lines. Stops when the vocabulary
    reaches the target size or no symbol pair occurs at least twice.
    """
    word_freq = collections.Counter()
    for line in corpus:
        for word in line.split():
            word_freq[word] += 1
    if not word_freq:
        raise ValueError("empty corpus")

    words = {w: tuple(w) + (END_OF_WORD,) for w in word_freq}
    symbols = set()
    for sym_seq in words.values():
        symbols.update(sym_seq)

    merges = []
    while len(SPECIALS) + len(symbols) < target_vocab_size:
        pairs = collections.Counter()
        for w, seq in words.items():
            freq = word_freq[w]
            for i in range(len(seq) - 1):
                pairs[(seq[i], seq[i + 1])] += freq
        if not pairs:
            break
        best_freq = max(pairs.values())
        if best_freq < 2:
            break
        best = min(p for p, c in pairs.items() if c == best_freq)
        merges.append(best)
        merged = best[0] + best[1]
        symbols.add(merged)
        new_words = {}
        for w, seq in words.items():
            out = []
            i = 0
            while i < len(seq):
                if i + 1 < len(seq) and (seq[i], seq[i + 1]) == best:
                    out.append(merged)
                    i += 2
                else:
                    out.append(seq[i])
                    i += 1
            new_words[w] = tuple(out)
        words = new_words

    model = BpeModel(merges, target_vocab_size)
    vocab = Vocabulary()
    for sym in sorted(symbols):
        vocab.add(sym)
    return model, vocab


def encode(model, vocab, text):
    """Text -> BOS ... EOS framed token ids; unknown symbols become UNK."""
    ids = [BOS]
    for word in text.split():
        for sym in model.segment_word(word):
            ids.append(vocab.id_of(sym))
    ids.append(EOS)
    return ids


def decode(vocab, ids):
    """Token ids -> text; specials stripped, UNK rendered as its token."""
    pieces = []
    for idx in ids:
        tok = vocab.token_of(idx)
        if idx in (PAD, BOS, EOS):
            continue
        pieces.append(tok)
    text = "".join(pieces)
    return text.replace(END_OF_WORD, " ").strip()
