"""Shared sentence space: embed, classify across languages, visualize.

Mean-pooling the fixed number of interlingua columns gives every sentence
in every language a vector of the same width. A classifier trained on one
language's embeddings can then label sentences in the others without ever
seeing a language tag -- transfer happens (or fails) purely through the
shared representation.

This demo trains briefly, so absolute numbers are modest; the point is the
pipeline, not the score.
"""

import os

import numpy as np

from ilmt import analysis, bpe, synth, trainer
from ilmt.model import ModelConfig, MultilingualModel

STEPS = 1200

corpus = synth.generate(11, vocab_size=60, n_sentences=2000,
                        language_names=["A", "B", "C"])
tokenizers = {}
for lang in corpus.languages:
    m, v = bpe.train_bpe(corpus.render_all(corpus.base_train, lang), 200)
    tokenizers[lang.name] = (m, v)


def encode_all(name, lines):
    tok, vocab = tokenizers[name]
    return [bpe.encode(tok, vocab, line) for line in lines]


store = trainer.CorpusStore(16)
hub = corpus.hub
for spoke in corpus.languages[1:]:
    store.add_parallel(
        hub.name, spoke.name,
        list(zip(encode_all(hub.name,
                            corpus.render_all(corpus.base_train, hub)),
                 encode_all(spoke.name,
                            corpus.render_all(corpus.base_train, spoke)))))
for lang in corpus.languages:
    store.add_monolingual(
        lang.name,
        encode_all(lang.name, corpus.render_all(corpus.base_train, lang)))

cfg = ModelConfig(
    languages=["A", "B", "C"], hub_language="A",
    vocab_sizes={n: len(tokenizers[n][1]) for n in "ABC"},
    source_embedding_size=64, target_embedding_size=64,
    encoder_hidden_size=128, interlingua_hidden_size=128,
    interlingua_length=16, decoder_hidden_size=128,
    max_source_length=16, seed=0)
model = MultilingualModel(cfg)
print(f"training {STEPS} steps ...")
trainer.train_loop(model, trainer.build_schedule(["A", "B", "C"], "A"),
                   store, trainer.TrainConfig(steps=STEPS, batch_size=32,
                                              learning_rate=0.002, seed=0,
                                              log_every=300),
                   on_metrics=lambda m: print("  " + m.line()))


def embeddings_for(lang_name, base_sentences):
    lang = corpus.language(lang_name)
    vecs = []
    for b in base_sentences:
        e = analysis.embed_sentence(model, tokenizers, lang_name,
                                    lang.render(b))
        vecs.append(e.vector)
    return np.asarray(vecs)


print("\n== crosslingual classification ==")
rule = synth.default_label_rule(corpus.vocab_size)
train_base = corpus.base_train[:800]
test_base = corpus.base_test
clf = analysis.train_logistic(embeddings_for("A", train_base),
                              [rule(b) for b in train_base])
per_language = {}
test_labels = [rule(b) for b in test_base]
for name in "ABC":
    per_language[name] = analysis.accuracy(
        clf, embeddings_for(name, test_base), test_labels)
print("classifier trained on A embeddings only:")
print(analysis.format_accuracy_table(per_language))

print("\n== PCA scatter of parallel sentences ==")
points = []
for i, b in enumerate(test_base[:12]):
    for name in "ABC":
        vec = embeddings_for(name, [b])[0]
        points.append((f"s{i:02d}", name, vec))
proj = analysis.pca_fit(np.asarray([v for _, _, v in points]), 2)
plot_points = []
for group, name, vec in points:
    x, y = analysis.pca_apply(proj, vec)
    plot_points.append(analysis.PlotPoint(group=group, language=name,
                                          x=float(x), y=float(y)))
out_dir = os.path.dirname(os.path.abspath(__file__))
svg = os.path.join(out_dir, "embedding_scatter.svg")
tsv = os.path.join(out_dir, "embedding_scatter.tsv")
analysis.emit_plot(plot_points, svg, tsv)
print(f"wrote {svg}\n      {tsv}")
print("(same color = same sentence, same marker = same language; after "
      "enough training the colors should cluster)")
