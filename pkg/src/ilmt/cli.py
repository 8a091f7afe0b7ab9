"""Command-line entry points tying the library into reproducible runs.

Commands: train, translate, evaluate, embed, classify, visualize, synth.
Every command validates inputs up front and exits nonzero with a single
"error: <code>: <detail>" line on stderr; success is silent on stderr.

The training config is one human-editable key-value file; model keys use
the conventional hyperparameter row names ("interlingua hidden size",
"learning rate", ...). See README for a worked example.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import analysis, bpe, checkpoint, decoding, evaluation, synth, trainer
from .model import ModelConfig, MultilingualModel


class CliError(Exception):
    def __init__(self, code, detail):
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


# ---------------------------------------------------------------------------
# run configuration


class RunConfig:
    INT_KEYS = {
        "vocabulary size": "vocab_target",
        "source embedding size": "source_embedding_size",
        "target embedding size": "target_embedding_size",
        "encoder hidden size": "encoder_hidden_size",
        "decoder hidden size": "decoder_hidden_size",
        "interlingua hidden size": "interlingua_hidden_size",
        "interlingua output size": "interlingua_output_size",
        "interlingua length": "interlingua_length",
        "encoder depth": "encoder_depth",
        "max source length": "max_source_length",
        "batch size": "batch_size",
        "steps": "steps",
        "seed": "seed",
        "checkpoint interval": "checkpoint_interval",
        "sampled softmax": "sampled_softmax",
        "log every": "log_every",
    }
    FLOAT_KEYS = {"learning rate": "learning_rate"}
    FLAG_KEYS = {"identity pairs": "identity_pairs",
                 "dedup schedule": "dedup_schedule"}

    def __init__(self):
        self.languages = []
        self.hub = None
        self.run_dir = "run"
        self.vocab_target = 200
        self.source_embedding_size = 64
        self.target_embedding_size = 64
        self.encoder_hidden_size = 128
        self.decoder_hidden_size = 128
        self.interlingua_hidden_size = 128
        self.interlingua_output_size = 0
        self.interlingua_length = 16
        self.encoder_depth = 1
        self.max_source_length = 16
        self.batch_size = 32
        self.steps = 1000
        self.seed = 0
        self.checkpoint_interval = 0
        self.sampled_softmax = 0
        self.log_every = 50
        self.learning_rate = 0.0002
        self.identity_pairs = True
        self.dedup_schedule = False
        self.parallel_files = {}     # (s, t) -> (src path, tgt path)
        self.mono_files = {}         # lang -> path

    @classmethod
    def parse(cls, path):
        cfg = cls()
        if not os.path.exists(path):
            raise CliError("config-missing", path)
        with open(path, encoding="utf-8") as f:
            for lineno, raw in enumerate(f, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CliError("config-syntax",
                                   f"{path}:{lineno}: expected key = value")
                key, value = (part.strip() for part in line.split("=", 1))
                cfg._apply(key, value, f"{path}:{lineno}")
        cfg._validate()
        return cfg

    def _apply(self, key, value, where):
        try:
            if key == "languages":
                self.languages = value.split()
            elif key == "hub language":
                self.hub = value
            elif key == "run dir":
                self.run_dir = value
            elif key in self.INT_KEYS:
                setattr(self, self.INT_KEYS[key], int(value))
            elif key in self.FLOAT_KEYS:
                setattr(self, self.FLOAT_KEYS[key], float(value))
            elif key in self.FLAG_KEYS:
                if value not in ("on", "off"):
                    raise ValueError("expected on/off")
                setattr(self, self.FLAG_KEYS[key], value == "on")
            elif key.startswith("corpus "):
                _, s, t = key.split()
                src_path, tgt_path = value.split()
                self.parallel_files[(s, t)] = (src_path, tgt_path)
            elif key.startswith("mono "):
                _, lang = key.split()
                self.mono_files[lang] = value
            else:
                raise ValueError(f"unknown key {key!r}")
        except CliError:
            raise
        except ValueError as e:
            raise CliError("config-value", f"{where}: {key}: {e}")

    def _validate(self):
        if len(self.languages) < 2:
            raise CliError("config-value", "need at least 2 languages")
        if self.hub is None:
            self.hub = self.languages[0]
        if self.hub not in self.languages:
            raise CliError("config-value",
                           f"hub language {self.hub!r} not in languages")
        for (s, t), (a, b) in self.parallel_files.items():
            for p in (a, b):
                if not os.path.exists(p):
                    raise CliError("corpus-missing", f"{s}-{t}: {p}")
        for lang, p in self.mono_files.items():
            if not os.path.exists(p):
                raise CliError("corpus-missing", f"mono {lang}: {p}")


def _read_lines(path):
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def _train_tokenizers(cfg, run_dir):
    """Train per-language BPE over all registered text for that language."""
    texts = {lang: [] for lang in cfg.languages}
    for (s, t), (src_path, tgt_path) in cfg.parallel_files.items():
        texts[s].extend(_read_lines(src_path))
        texts[t].extend(_read_lines(tgt_path))
    for lang, path in cfg.mono_files.items():
        texts[lang].extend(_read_lines(path))
    tokenizers = {}
    paths = {}
    for lang in cfg.languages:
        if not texts[lang]:
            raise CliError("corpus-missing", f"no text for language {lang}")
        model, vocab = bpe.train_bpe(texts[lang], cfg.vocab_target)
        prefix = os.path.join(run_dir, f"bpe.{lang}")
        model.save(prefix + ".merges")
        vocab.save(prefix + ".vocab")
        tokenizers[lang] = (model, vocab)
        paths[lang] = prefix
    return tokenizers, paths


def load_tokenizers(paths):
    out = {}
    for lang, prefix in paths.items():
        model = bpe.BpeModel.load(prefix + ".merges")
        vocab = bpe.Vocabulary.load(prefix + ".vocab")
        out[lang] = (model, vocab)
    return out


def _encode_file(tokenizers, lang, path):
    tok, vocab = tokenizers[lang]
    return [bpe.encode(tok, vocab, line) for line in _read_lines(path)]


# ---------------------------------------------------------------------------
# commands


def cmd_train(args):
    cfg = RunConfig.parse(args.config)
    os.makedirs(cfg.run_dir, exist_ok=True)
    lock_path = os.path.join(cfg.run_dir, ".lock")
    try:
        lock_fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise CliError("run-locked",
                       f"{cfg.run_dir} already has a training process "
                       f"(remove {lock_path} if stale)")
    try:
        tokenizers, tok_paths = _train_tokenizers(cfg, cfg.run_dir)
        vocab_sizes = {lang: len(vocab)
                       for lang, (_m, vocab) in tokenizers.items()}
        model_cfg = ModelConfig(
            languages=cfg.languages, hub_language=cfg.hub,
            vocab_sizes=vocab_sizes,
            source_embedding_size=cfg.source_embedding_size,
            target_embedding_size=cfg.target_embedding_size,
            encoder_hidden_size=cfg.encoder_hidden_size,
            interlingua_hidden_size=cfg.interlingua_hidden_size,
            interlingua_output_size=cfg.interlingua_output_size,
            interlingua_length=cfg.interlingua_length,
            decoder_hidden_size=cfg.decoder_hidden_size,
            encoder_depth=cfg.encoder_depth,
            max_source_length=cfg.max_source_length, seed=cfg.seed)
        model = MultilingualModel(model_cfg)

        store = trainer.CorpusStore(cfg.max_source_length)
        for (s, t), (src_path, tgt_path) in cfg.parallel_files.items():
            pairs = list(zip(_encode_file(tokenizers, s, src_path),
                             _encode_file(tokenizers, t, tgt_path)))
            store.add_parallel(s, t, pairs)
        for lang in cfg.languages:
            path = cfg.mono_files.get(lang)
            if path:
                store.add_monolingual(lang, _encode_file(tokenizers, lang,
                                                         path))
        schedule = trainer.build_schedule(cfg.languages, cfg.hub,
                                          dedup=cfg.dedup_schedule)
        if not cfg.identity_pairs:
            schedule.entries = [(s, t) for s, t in schedule.entries
                                if s != t]
        try:
            store.check_schedule(schedule)
        except trainer.CorpusConfigError as e:
            raise CliError("corpus-missing", str(e))

        train_cfg = trainer.TrainConfig(
            steps=cfg.steps, batch_size=cfg.batch_size,
            learning_rate=cfg.learning_rate, seed=cfg.seed,
            checkpoint_interval=cfg.checkpoint_interval,
            sampled_softmax=cfg.sampled_softmax, log_every=cfg.log_every)

        metrics_path = os.path.join(cfg.run_dir, "metrics.tsv")
        ckpt_path = os.path.join(cfg.run_dir, "checkpoint.ilmt")
        extra = {"tokenizers": tok_paths}
        with open(metrics_path, "a", encoding="utf-8") as metrics_file:
            def on_metrics(m):
                metrics_file.write(m.line() + "\n")
                print(m.line())

            def on_checkpoint(step, mdl):
                checkpoint.save(mdl, ckpt_path, extra=extra)

            trainer.train_loop(model, schedule, store, train_cfg,
                               on_metrics=on_metrics,
                               on_checkpoint=on_checkpoint)
        print(f"checkpoint\t{ckpt_path}")
    finally:
        os.close(lock_fd)
        os.unlink(lock_path)


def _load_model(path):
    if not os.path.exists(path):
        raise CliError("checkpoint-missing", path)
    try:
        model, header = checkpoint.load(path)
    except checkpoint.CheckpointError as e:
        raise CliError("checkpoint-invalid", str(e))
    tok_paths = header.get("tokenizers")
    if not tok_paths:
        raise CliError("checkpoint-invalid", "no tokenizer paths in header")
    return model, load_tokenizers(tok_paths)


def _decode_config(args):
    return decoding.DecodeConfig(
        beam_width=args.beam, length_norm_alpha=args.alpha,
        max_length=args.max_length)


def cmd_translate(args):
    model, tokenizers = _load_model(args.checkpoint)
    for lang in (args.src, args.tgt) + ((args.pivot,) if args.pivot else ()):
        if lang not in model.config.languages:
            raise CliError("unknown-language", lang)
    cfg = _decode_config(args)
    lines = _read_lines(args.input) if args.input else sys.stdin.read() \
        .splitlines()
    out = open(args.output, "w", encoding="utf-8") if args.output \
        else sys.stdout
    try:
        for line in lines:
            if args.pivot:
                result = decoding.pivot_translate(
                    model, tokenizers, args.src, args.pivot, args.tgt,
                    line, cfg)
            else:
                result = decoding.translate(model, tokenizers, args.src,
                                            args.tgt, line, cfg)
            out.write(result.text + "\n")
    finally:
        if args.output:
            out.close()


def cmd_evaluate(args):
    model, tokenizers = _load_model(args.checkpoint)
    if not os.path.exists(args.manifest):
        raise CliError("manifest-missing", args.manifest)
    cfg = _decode_config(args)
    for raw in _read_lines(args.manifest):
        if not raw.strip():
            continue
        fields = raw.split("\t")
        if len(fields) != 5:
            raise CliError("manifest-syntax",
                           "expected src<TAB>tgt<TAB>srcfile<TAB>reffile"
                           "<TAB>mode")
        src, tgt, src_file, ref_file, mode = fields
        sources = _read_lines(src_file)
        refs = [line.split() for line in _read_lines(ref_file)]
        hyps = []
        for line in sources:
            if mode.startswith("pivot:"):
                result = decoding.pivot_translate(
                    model, tokenizers, src, mode.split(":", 1)[1], tgt,
                    line, cfg)
            elif mode == "direct":
                result = decoding.translate(model, tokenizers, src, tgt,
                                            line, cfg)
            else:
                raise CliError("manifest-syntax", f"unknown mode {mode!r}")
            hyps.append(result.text.split())
        report = evaluation.corpus_bleu(hyps, refs, smooth=args.smooth)
        print(report.line(f"{src}-{tgt}", mode))


def cmd_embed(args):
    model, tokenizers = _load_model(args.checkpoint)
    if args.lang not in model.config.languages:
        raise CliError("unknown-language", args.lang)
    out = open(args.output, "w", encoding="utf-8") if args.output \
        else sys.stdout
    try:
        for line in _read_lines(args.input):
            emb = analysis.embed_sentence(model, tokenizers, args.lang, line)
            vec = ",".join(f"{x:.6g}" for x in emb.vector)
            out.write(f"{args.lang}\t{vec}\n")
    finally:
        if args.output:
            out.close()


def _read_embedding_dump(path):
    langs, vecs = [], []
    for line in _read_lines(path):
        if not line.strip():
            continue
        lang, vec = line.split("\t", 1)
        langs.append(lang)
        vecs.append([float(x) for x in vec.split(",")])
    return langs, np.asarray(vecs, dtype=np.float64)


def _read_labels(path):
    return [int(line) for line in _read_lines(path) if line.strip()]


def cmd_classify(args):
    if args.train_embeddings:
        langs, X = _read_embedding_dump(args.train_embeddings)
        y = _read_labels(args.train_labels)
        if len(y) != len(X):
            raise CliError("label-mismatch",
                           f"{len(X)} embeddings vs {len(y)} labels")
        try:
            model = analysis.train_logistic(X, y, l2=args.l2)
        except ValueError as e:
            raise CliError("bad-labels", str(e))
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump({"weights": model.weights.tolist(),
                       "bias": model.bias}, f)
        return
    with open(args.model, encoding="utf-8") as f:
        payload = json.load(f)
    model = analysis.LogisticModel(
        weights=np.asarray(payload["weights"]), bias=payload["bias"])
    langs, X = _read_embedding_dump(args.embeddings)
    if args.labels:
        y = _read_labels(args.labels)
        if len(y) != len(X):
            raise CliError("label-mismatch",
                           f"{len(X)} embeddings vs {len(y)} labels")
        per_language = {}
        for lang in dict.fromkeys(langs):
            rows = [i for i, l in enumerate(langs) if l == lang]
            per_language[lang] = analysis.accuracy(
                model, X[rows], [y[i] for i in rows])
        print(analysis.format_accuracy_table(per_language))
    else:
        for lang, row in zip(langs, X):
            print(f"{lang}\t{analysis.classify(model, row):.6f}")


def cmd_visualize(args):
    langs, X = _read_embedding_dump(args.embeddings)
    groups = [line.strip() for line in _read_lines(args.groups)
              if line.strip()]
    if len(groups) != len(X):
        raise CliError("group-mismatch",
                       f"{len(X)} embeddings vs {len(groups)} groups")
    proj = analysis.pca_fit(X, 2)
    points = []
    for lang, group, row in zip(langs, groups, X):
        x, y = analysis.pca_apply(proj, row)
        points.append(analysis.PlotPoint(group=group, language=lang,
                                         x=float(x), y=float(y)))
    analysis.emit_plot(points, args.out_svg, args.out_tsv)


def cmd_synth(args):
    word_orders = {lang: "reverse" for lang in (args.reverse or [])}
    try:
        corpus = synth.generate(args.seed, args.vocab, args.sentences,
                                args.languages, word_orders=word_orders,
                                test_fraction=args.test_fraction)
    except ValueError as e:
        raise CliError("bad-params", str(e))
    synth.write_corpus(corpus, args.out)
    print(f"corpus\t{args.out}")


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ilmt",
        description="Multilingual NMT with an explicit neural interlingua")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train from a run config file")
    p.add_argument("config")
    p.set_defaults(func=cmd_train)

    def add_decode_args(p):
        p.add_argument("--beam", type=int, default=4)
        p.add_argument("--alpha", type=float, default=0.6)
        p.add_argument("--max-length", type=int, default=0)

    p = sub.add_parser("translate", help="translate text")
    p.add_argument("checkpoint")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--pivot")
    p.add_argument("-i", "--input")
    p.add_argument("-o", "--output")
    add_decode_args(p)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("evaluate", help="BLEU over a testset manifest")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--smooth", action="store_true")
    add_decode_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("embed", help="dump sentence embeddings")
    p.add_argument("checkpoint")
    p.add_argument("--lang", required=True)
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("classify",
                       help="train or apply a logistic classifier")
    p.add_argument("--train-embeddings")
    p.add_argument("--train-labels")
    p.add_argument("--out")
    p.add_argument("--l2", type=float, default=1e-3)
    p.add_argument("--model")
    p.add_argument("--embeddings")
    p.add_argument("--labels")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("visualize", help="PCA scatter of an embedding dump")
    p.add_argument("embeddings")
    p.add_argument("groups")
    p.add_argument("--out-svg", required=True)
    p.add_argument("--out-tsv", required=True)
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("synth", help="generate a synthetic cipher corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab", type=int, default=60)
    p.add_argument("--sentences", type=int, default=4000)
    p.add_argument("--languages", nargs="+", required=True)
    p.add_argument("--reverse", nargs="*")
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "classify":
        training = bool(args.train_embeddings)
        if training and not (args.train_labels and args.out):
            print("error: bad-args: classify --train-embeddings needs "
                  "--train-labels and --out", file=sys.stderr)
            return 2
        if not training and not (args.model and args.embeddings):
            print("error: bad-args: classify predict needs --model and "
                  "--embeddings", file=sys.stderr)
            return 2
    try:
        args.func(args)
    except CliError as e:
        print(f"error: {e.code}: {e.detail}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: file-missing: {e.filename}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
