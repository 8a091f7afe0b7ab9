"""Language-rotation training: schedule construction, batching, losses,
Adam with gradient clipping, and the main loop.

Each minibatch holds exactly one (source, target) language pair, so a
training step only ever touches the source encoder, the interlingua, and
the target decoder. Identity pairs (L, L) are auto-encoding batches drawn
from monolingual text.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import bpe
from . import tensor as T

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
CLIP_NORM = 5.0


class ScheduleError(ValueError):
    pass


class CorpusConfigError(ValueError):
    pass


@dataclass
class Schedule:
    """Ordered cycle of (source, target) language pairs, identity included."""
    entries: list
    cursor: int = 0

    def __len__(self):
        return len(self.entries)

    def next_pair(self):
        pair = self.entries[self.cursor % len(self.entries)]
        self.cursor += 1
        return pair


def build_schedule(languages, hub, dedup=False):
    """Hub-and-spoke rotation: for every language S, append (hub, L) and
    (L, hub) for each non-hub L, then the identity pair (S, S).

    The literal trace keeps the duplicated translation blocks; ``dedup``
    collapses repeats while preserving first-occurrence order.
    """
    languages = list(languages)
    if hub not in languages:
        raise ScheduleError(f"hub {hub!r} not in languages")
    if len(languages) < 2:
        raise ScheduleError("need at least 2 languages")
    spokes = [l for l in languages if l != hub]
    entries = []
    for s in languages:
        for l in spokes:
            entries.append((hub, l))
            entries.append((l, hub))
        entries.append((s, s))
    if dedup:
        seen = set()
        uniq = []
        for e in entries:
            if e not in seen:
                seen.add(e)
                uniq.append(e)
        entries = uniq
    return Schedule(entries=entries)


@dataclass
class Batch:
    source: np.ndarray        # (B, L) int64, PAD padded
    source_lengths: np.ndarray
    target: np.ndarray        # (B, T) int64, PAD padded
    target_lengths: np.ndarray
    src_lang: str = ""
    tgt_lang: str = ""


class CorpusStore:
    """Registry of tokenized parallel and monolingual corpora.

    Sentences are BOS/EOS-framed id lists. Identity pairs draw monolingual
    lines with target = source.
    """

    def __init__(self, max_source_length):
        self.max_source_length = max_source_length
        self._parallel = {}
        self._mono = {}

    def add_parallel(self, src_lang, tgt_lang, pairs):
        kept = [(list(x), list(y)) for x, y in pairs
                if len(x) <= self.max_source_length]
        self._parallel[(src_lang, tgt_lang)] = kept

    def add_monolingual(self, lang, sentences):
        self._mono[lang] = [list(x) for x in sentences
                            if len(x) <= self.max_source_length]

    def pairs_for(self, src_lang, tgt_lang):
        if src_lang == tgt_lang:
            mono = self._mono.get(src_lang)
            if mono is None:
                raise CorpusConfigError(
                    f"no monolingual data for identity pair "
                    f"({src_lang}, {tgt_lang})")
            return [(x, x) for x in mono]
        data = self._parallel.get((src_lang, tgt_lang))
        if data is None:
            rev = self._parallel.get((tgt_lang, src_lang))
            if rev is not None:
                data = [(y, x) for x, y in rev]
                self._parallel[(src_lang, tgt_lang)] = data
        if not data:
            raise CorpusConfigError(
                f"no parallel data for pair ({src_lang}, {tgt_lang})")
        return data

    def check_schedule(self, schedule):
        """Fail at startup, not mid-training, if any pair lacks data."""
        for pair in set(schedule.entries):
            self.pairs_for(*pair)


def _pad_block(seqs):
    width = max(len(s) for s in seqs)
    block = np.full((len(seqs), width), bpe.PAD, dtype=np.int64)
    lengths = np.zeros(len(seqs), dtype=np.int64)
    for i, s in enumerate(seqs):
        block[i, :len(s)] = s
        lengths[i] = len(s)
    return block, lengths


def _epoch_seed(base_seed, pair, epoch):
    key = f"{base_seed}:{pair[0]}:{pair[1]}:{epoch}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


class BatchIterator:
    """Endless shuffled batches for one language pair; reshuffles per epoch
    with a seed derived from (base seed, pair, epoch)."""

    def __init__(self, store, pair, batch_size, seed):
        self.data = store.pairs_for(*pair)
        self.pair = pair
        self.batch_size = batch_size
        self.seed = seed
        self.epoch = 0
        self._cursor = 0
        self._order = self._shuffle()

    def _shuffle(self):
        rng = np.random.default_rng(_epoch_seed(self.seed, self.pair,
                                                self.epoch))
        order = np.arange(len(self.data))
        rng.shuffle(order)
        return order

    def next_batch(self):
        rows = []
        while len(rows) < self.batch_size:
            if self._cursor >= len(self._order):
                self.epoch += 1
                self._order = self._shuffle()
                self._cursor = 0
            rows.append(self.data[self._order[self._cursor]])
            self._cursor += 1
        src, src_len = _pad_block([x for x, _ in rows])
        tgt, tgt_len = _pad_block([y for _, y in rows])
        return Batch(source=src, source_lengths=src_len,
                     target=tgt, target_lengths=tgt_len,
                     src_lang=self.pair[0], tgt_lang=self.pair[1])


def make_batches(store, pair, batch_size, seed=0):
    """Endless Batch stream for one pair (generator form of BatchIterator)."""
    it = BatchIterator(store, pair, batch_size, seed)
    while True:
        yield it.next_batch()


def _source_mask(batch):
    L = batch.source.shape[1]
    return (np.arange(L)[None, :] < batch.source_lengths[:, None])


def _forward_step_logits(model, batch):
    E = model.encode_source(batch.src_lang, batch.source,
                            batch.source_lengths)
    inter = model.interlingua_encode(E, mask=_source_mask(batch))
    steps = [batch.target[:, t] for t in range(batch.target.shape[1] - 1)]
    return model.step_logits(batch.tgt_lang, inter, steps)


def _target_weights(batch):
    Tlen = batch.target.shape[1]
    # position t+1 is a real prediction iff t+1 < length of the row
    cols = np.arange(1, Tlen)[None, :]
    return (cols < batch.target_lengths[:, None]).astype(np.float64)


def cross_entropy_loss(model, batch):
    """Mean negative log-likelihood per non-PAD target token."""
    logits = _forward_step_logits(model, batch)
    weights = _target_weights(batch)
    total_tokens = weights.sum()
    total = None
    for t, step_logits in enumerate(logits):
        nll = T.cross_entropy_logits(step_logits, batch.target[:, t + 1],
                                     weights[:, t])
        total = nll if total is None else T.add(total, nll)
    return T.scale(total, 1.0 / total_tokens)


def sampled_softmax_loss(model, batch, sample_count, rng):
    """Sampled-softmax estimate of the cross-entropy loss.

    Negatives come from a log-uniform proposal over the target vocabulary;
    candidate logits are corrected by the (approximate) inclusion
    probability. When the deduplicated candidate set covers the whole
    vocabulary the inclusion probability is exactly 1 everywhere and the
    estimate coincides with the exact loss.
    """
    V = model.config.vocab_sizes[batch.tgt_lang]
    if sample_count >= V:
        raise ValueError(f"sample_count {sample_count} >= vocab size {V}")
    log_q = np.log(np.log((np.arange(V) + 2.0) / (np.arange(V) + 1.0))
                   / np.log(V + 1.0))
    q = np.exp(log_q)

    logits = _forward_step_logits(model, batch)
    weights = _target_weights(batch)
    total_tokens = weights.sum()

    # one shared candidate set per batch: true labels + sampled negatives
    true_ids = np.unique(batch.target[:, 1:][weights.astype(bool)])
    negatives = []
    seen = set(int(i) for i in true_ids)
    draws = 0
    while len(negatives) < sample_count and len(seen) < V:
        cand = int(np.exp(rng.random() * np.log(V + 1.0)) - 1.0)
        draws += 1
        cand = min(cand, V - 1)
        if cand not in seen:
            seen.add(cand)
            negatives.append(cand)
    candidates = np.concatenate([true_ids,
                                 np.asarray(sorted(negatives),
                                            dtype=np.int64)])
    if len(candidates) == V:
        correction = np.zeros(V, dtype=np.float32)
        candidates = np.arange(V, dtype=np.int64)
    else:
        incl = -np.expm1(sample_count * np.log1p(-q[candidates]))
        correction = np.log(np.clip(incl, 1e-30, 1.0)).astype(np.float32)

    col_of = {int(c): j for j, c in enumerate(candidates)}
    corr = T.tensor(-correction)
    total = None
    for t, step_logits in enumerate(logits):
        sub = _gather_cols(step_logits, candidates)
        adj = T.bias_add(sub, corr)
        targets = np.asarray([col_of[int(y)]
                              for y in batch.target[:, t + 1]])
        nll = T.cross_entropy_logits(adj, targets, weights[:, t])
        total = nll if total is None else T.add(total, nll)
    return T.scale(total, 1.0 / total_tokens)


def _gather_cols(x, cols):
    """Column gather (N, V) -> (N, len(cols)) as a taped op."""
    cols = np.asarray(cols, dtype=np.int64)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx.T, cols, g.T)
        return (gx,)

    return T._make_output(np.ascontiguousarray(x.data[:, cols]), (x,),
                          backward, "gather_cols")


class NanGradientError(FloatingPointError):
    pass


class AdamState:
    """Per-parameter first/second moments with bias correction."""

    def __init__(self, params, learning_rate=0.0002):
        self.learning_rate = learning_rate
        self.step_count = 0
        self.m = {n: np.zeros_like(p.data) for n, p in params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in params.items()}


def clip_gradients(params, names, max_norm=CLIP_NORM):
    """Scale the joint gradient of ``names`` down to max_norm; returns the
    pre-clip norm."""
    sq = 0.0
    for n in names:
        g = params[n].grad
        sq += float(np.sum(g.astype(np.float64) ** 2))
    norm = float(np.sqrt(sq))
    if norm > max_norm:
        factor = np.float32(max_norm / norm)
        for n in names:
            params[n].grad *= factor
    return norm


def adam_update(params, state, names=None):
    """Standard bias-corrected Adam step over ``names`` (default: all)."""
    names = list(params) if names is None else names
    for n in names:
        if not np.all(np.isfinite(params[n].grad)):
            raise NanGradientError(f"non-finite gradient in {n}")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - ADAM_BETA1 ** t
    bc2 = 1.0 - ADAM_BETA2 ** t
    for n in names:
        p = params[n]
        g = p.grad
        state.m[n] = ADAM_BETA1 * state.m[n] + (1 - ADAM_BETA1) * g
        state.v[n] = ADAM_BETA2 * state.v[n] + (1 - ADAM_BETA2) * g * g
        m_hat = state.m[n] / bc1
        v_hat = state.v[n] / bc2
        p.data -= (state.learning_rate * m_hat
                   / (np.sqrt(v_hat) + ADAM_EPS)).astype(np.float32)


@dataclass
class TrainConfig:
    steps: int = 1000
    batch_size: int = 32
    learning_rate: float = 0.0002
    seed: int = 0
    checkpoint_interval: int = 0    # 0 -> only report at the end
    clip_norm: float = CLIP_NORM
    sampled_softmax: int = 0        # 0 -> exact loss; else sample count
    log_every: int = 50


@dataclass
class StepMetrics:
    step: int
    src_lang: str
    tgt_lang: str
    loss: float

    def line(self):
        return f"{self.step}\t{self.src_lang}\t{self.tgt_lang}\t{self.loss:.6f}"


def train_loop(model, schedule, store, cfg, on_metrics=None,
               on_checkpoint=None):
    """Run cfg.steps training steps, rotating through the schedule.

    ``on_metrics`` receives a StepMetrics every cfg.log_every steps;
    ``on_checkpoint`` receives (step, model) every checkpoint interval and
    once at the end. Returns the list of all StepMetrics emitted.
    """
    store.check_schedule(schedule)
    params = model.parameters()
    state = AdamState(params, cfg.learning_rate)
    iterators = {pair: BatchIterator(store, pair, cfg.batch_size, cfg.seed)
                 for pair in dict.fromkeys(schedule.entries)}
    rng = np.random.default_rng(cfg.seed + 1)
    emitted = []
    for step in range(1, cfg.steps + 1):
        pair = schedule.next_pair()
        batch = iterators[pair].next_batch()
        names = model.pair_parameter_names(*pair)
        T.active_graph().clear()
        for n in names:
            params[n].zero_grad()
        if cfg.sampled_softmax:
            loss = sampled_softmax_loss(model, batch, cfg.sampled_softmax,
                                        rng)
        else:
            loss = cross_entropy_loss(model, batch)
        T.backward(loss)
        clip_gradients(params, names, cfg.clip_norm)
        adam_update(params, state, names)
        if step % cfg.log_every == 0 or step == cfg.steps:
            m = StepMetrics(step, pair[0], pair[1], loss.item())
            emitted.append(m)
            if on_metrics:
                on_metrics(m)
        if on_checkpoint and cfg.checkpoint_interval \
                and step % cfg.checkpoint_interval == 0:
            on_checkpoint(step, model)
    T.active_graph().clear()
    if on_checkpoint:
        on_checkpoint(cfg.steps, model)
    return emitted
