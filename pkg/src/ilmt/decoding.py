"""Inference: greedy and beam search, the full translate pipeline, and
two-hop pivot translation.

All search runs under ``no_grad`` over a read-only model snapshot. Any
(source, target) combination is decodable, trained on or not; translating
an untrained pair directly is exactly zero-shot translation.
"""

from dataclasses import dataclass, field

import numpy as np

from . import bpe
from . import tensor as T


@dataclass
class DecodeConfig:
    beam_width: int = 4
    max_length: int = 0          # 0 -> 2 * source length + 5
    length_norm_alpha: float = 0.6

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam width must be >= 1")
        if not 0.0 <= self.length_norm_alpha <= 1.0:
            raise ValueError("length-normalization exponent must be in [0,1]")

    def resolve_max_length(self, source_length):
        return self.max_length if self.max_length else 2 * source_length + 5


@dataclass
class BeamHypothesis:
    ids: list                  # generated ids, BOS excluded
    logprob: float
    state: tuple               # decoder (h, c)
    finished: bool = False
    finish_step: int = -1

    def score(self, alpha):
        length = max(len(self.ids), 1)
        return self.logprob / (length ** alpha)


def _log_softmax_row(logits):
    z = logits - logits.max()
    return z - np.log(np.exp(z).sum(dtype=np.float64))


def greedy_decode(model, tgt_lang, inter, cfg=DecodeConfig(), max_length=None):
    """Argmax decoding from BOS until EOS or the length limit.

    Returns generated ids without BOS; EOS, when produced, is stripped.
    """
    limit = max_length if max_length is not None \
        else cfg.resolve_max_length(model.config.max_source_length)
    with T.no_grad():
        state = model.init_decoder_state(tgt_lang, 1)
        prev = bpe.BOS
        out = []
        for _ in range(limit):
            logits, state = model.decode_step(tgt_lang, inter,
                                              np.asarray([prev]), state)
            prev = int(np.argmax(logits.data[0]))
            if prev == bpe.EOS:
                break
            out.append(prev)
        return out


def beam_search(model, tgt_lang, inter, cfg=DecodeConfig(), max_length=None):
    """Beam search; returns (ids, score) of the best finished hypothesis.

    Finished hypotheses are scored by logprob / length^alpha. Ties break by
    earlier finish step, then lexicographically smaller id sequence.
    """
    limit = max_length if max_length is not None \
        else cfg.resolve_max_length(model.config.max_source_length)
    alpha = cfg.length_norm_alpha
    with T.no_grad():
        beam = [BeamHypothesis(ids=[], logprob=0.0,
                               state=model.init_decoder_state(tgt_lang, 1))]
        finished = []
        for step in range(limit):
            candidates = []
            for hyp in beam:
                prev = hyp.ids[-1] if hyp.ids else bpe.BOS
                logits, state = model.decode_step(tgt_lang, inter,
                                                  np.asarray([prev]),
                                                  hyp.state)
                logp = _log_softmax_row(logits.data[0].astype(np.float64))
                top = np.argsort(-logp)[:cfg.beam_width]
                for tok in top:
                    candidates.append(BeamHypothesis(
                        ids=hyp.ids + [int(tok)],
                        logprob=hyp.logprob + float(logp[tok]),
                        state=state))
            candidates.sort(key=lambda h: (-h.logprob, h.ids))
            beam = []
            for hyp in candidates:
                if hyp.ids[-1] == bpe.EOS:
                    finished.append(BeamHypothesis(
                        ids=hyp.ids[:-1], logprob=hyp.logprob,
                        state=hyp.state, finished=True, finish_step=step))
                else:
                    beam.append(hyp)
                if len(beam) >= cfg.beam_width:
                    break
            if not beam:
                break
        for hyp in beam:   # length limit reached without EOS
            finished.append(BeamHypothesis(
                ids=hyp.ids, logprob=hyp.logprob, state=hyp.state,
                finished=True, finish_step=limit))
        best = min(finished,
                   key=lambda h: (-h.score(alpha), h.finish_step, h.ids))
        return best.ids, best.score(alpha)


@dataclass
class TranslationResult:
    text: str
    token_ids: list
    score: float
    truncated: bool = False
    decode_passes: int = 1


def _encode_text(model, tokenizers, lang, text):
    tok, vocab = tokenizers[lang]
    ids = bpe.encode(tok, vocab, text)
    truncated = False
    limit = model.config.max_source_length
    if len(ids) > limit:
        ids = ids[:limit - 1] + [bpe.EOS]
        truncated = True
    return ids, truncated


def translate(model, tokenizers, src_lang, tgt_lang, text,
              cfg=DecodeConfig()):
    """encode -> interlingua -> beam search -> detokenize.

    ``tokenizers`` maps language -> (BpeModel, Vocabulary). Overlong input
    is truncated to the model maximum and flagged on the result.
    """
    ids, truncated = _encode_text(model, tokenizers, src_lang, text)
    with T.no_grad():
        E = model.encode_source(src_lang, np.asarray([ids]))
        inter = model.interlingua_encode(E)
    out_ids, score = beam_search(model, tgt_lang, inter, cfg,
                                 max_length=cfg.resolve_max_length(len(ids)))
    _, tgt_vocab = tokenizers[tgt_lang]
    return TranslationResult(text=bpe.decode(tgt_vocab, out_ids),
                             token_ids=out_ids, score=score,
                             truncated=truncated)


def pivot_translate(model, tokenizers, src_lang, pivot_lang, tgt_lang, text,
                    cfg=DecodeConfig()):
    """Two-hop translation source -> pivot -> target (two decode passes)."""
    first = translate(model, tokenizers, src_lang, pivot_lang, text, cfg)
    second = translate(model, tokenizers, pivot_lang, tgt_lang, first.text,
                       cfg)
    return TranslationResult(text=second.text, token_ids=second.token_ids,
                             score=second.score,
                             truncated=first.truncated or second.truncated,
                             decode_passes=first.decode_passes
                             + second.decode_passes)
