"""Corpus-level BLEU and zero-shot experiment scoring."""

import collections
import math
from dataclasses import dataclass

from . import decoding

MAX_ORDER = 4


@dataclass
class BleuReport:
    bleu: float                    # percentage, 0..100
    precisions: list               # p1..p4
    brevity_penalty: float
    hypothesis_tokens: int
    reference_tokens: int

    def line(self, pair="", mode=""):
        ps = ",".join(f"{p:.4f}" for p in self.precisions)
        return (f"{pair}\t{mode}\t{self.bleu:.2f}\t{ps}"
                f"\t{self.brevity_penalty:.4f}")


def _ngrams(tokens, n):
    return collections.Counter(
        tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses, references, smooth=False):
    """BLEU-4: geometric mean of clipped n-gram precisions times the
    brevity penalty exp(1 - r/c) for c < r.

    Inputs are parallel lists of token lists. Without smoothing, any zero
    precision zeroes the score; ``smooth`` adds 1 to numerator and
    denominator of the higher-order (n >= 2) precisions for tiny test sets.
    """
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses vs "
                         f"{len(references)} references")
    if not hypotheses:
        raise ValueError("empty corpus")
    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp = list(hyp)
        ref = list(ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, MAX_ORDER + 1):
            hyp_ngrams = _ngrams(hyp, n)
            ref_ngrams = _ngrams(ref, n)
            totals[n - 1] += max(len(hyp) - n + 1, 0)
            for gram, count in hyp_ngrams.items():
                matches[n - 1] += min(count, ref_ngrams.get(gram, 0))

    precisions = []
    for n in range(MAX_ORDER):
        num, den = matches[n], totals[n]
        if smooth and n >= 1:
            num, den = num + 1, den + 1
        precisions.append(num / den if den > 0 else 0.0)

    bp = 1.0
    if hyp_len == 0:
        bp = 0.0
    elif hyp_len < ref_len:
        bp = math.exp(1.0 - ref_len / hyp_len)

    if min(precisions) > 0.0:
        log_mean = sum(math.log(p) for p in precisions) / MAX_ORDER
        bleu = bp * math.exp(log_mean) * 100.0
    else:
        bleu = 0.0
    return BleuReport(bleu=bleu, precisions=precisions, brevity_penalty=bp,
                      hypothesis_tokens=hyp_len, reference_tokens=ref_len)


@dataclass
class ZeroShotEntry:
    src_lang: str
    tgt_lang: str
    direct: BleuReport
    pivot: BleuReport


def zero_shot_report(model, tokenizers, pivot_lang, testsets,
                     cfg=decoding.DecodeConfig(), smooth=False):
    """Direct vs pivot BLEU for each held-out pair.

    ``testsets`` maps (src, tgt) -> list of (source text, reference text).
    Returns (entries, report_lines); lines follow
    "pair<TAB>mode<TAB>bleu<TAB>p1,p2,p3,p4<TAB>bp".
    """
    entries = []
    lines = []
    for (src, tgt), pairs in testsets.items():
        direct_hyps, pivot_hyps, refs = [], [], []
        for source_text, reference_text in pairs:
            direct_hyps.append(decoding.translate(
                model, tokenizers, src, tgt, source_text, cfg).text.split())
            pivot_hyps.append(decoding.pivot_translate(
                model, tokenizers, src, pivot_lang, tgt, source_text,
                cfg).text.split())
            refs.append(reference_text.split())
        direct = corpus_bleu(direct_hyps, refs, smooth=smooth)
        pivot = corpus_bleu(pivot_hyps, refs, smooth=smooth)
        entries.append(ZeroShotEntry(src, tgt, direct, pivot))
        pair = f"{src}-{tgt}"
        lines.append(direct.line(pair, "direct"))
        lines.append(pivot.line(pair, "pivot"))
    return entries, lines


def format_zero_shot_table(entries):
    """Aligned text table with direct and pivot columns per pair."""
    rows = [("pair", "direct", "pivot")]
    for e in entries:
        rows.append((f"{e.src_lang}-{e.tgt_lang}",
                     f"{e.direct.bleu:.2f}", f"{e.pivot.bleu:.2f}"))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths))
                     for r in rows)
