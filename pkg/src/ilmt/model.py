"""The multilingual encoder/interlingua/decoder architecture.

Every language owns an encoder stack (source embedding + bidirectional LSTM
layers) and a decoder (target embedding, attentional LSTM, output
projection). One attentional LSTM layer is shared by all languages: the
interlingua. It reads a variable-length encoding and always emits exactly
``interlingua_length`` columns, so decoders see a representation whose shape
carries no information about the source language or length. There are no
language-indicator tokens anywhere.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from . import bpe
from . import tensor as T
from .layers import (AdditiveAttention, AffineProjection, BiLstmEncoder,
                     EmbeddingTable, LstmCell)


class UnknownLanguageError(KeyError):
    pass


@dataclass
class ModelConfig:
    languages: list
    hub_language: str
    vocab_sizes: dict
    source_embedding_size: int = 64
    target_embedding_size: int = 64
    encoder_hidden_size: int = 128   # width of the concatenated BiLSTM output
    interlingua_hidden_size: int = 128
    interlingua_output_size: int = 0  # 0 -> same as interlingua hidden
    interlingua_length: int = 16
    decoder_hidden_size: int = 128
    encoder_depth: int = 1
    max_source_length: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.interlingua_output_size == 0:
            self.interlingua_output_size = self.interlingua_hidden_size
        self.validate()

    def validate(self):
        if self.hub_language not in self.languages:
            raise ValueError(f"hub {self.hub_language!r} not in languages")
        if len(self.languages) != len(set(self.languages)):
            raise ValueError("duplicate languages")
        if self.interlingua_length < 1:
            raise ValueError("interlingua_length must be >= 1")
        if self.max_source_length > self.interlingua_length:
            raise ValueError("max_source_length must not exceed "
                             "interlingua_length")
        if self.encoder_hidden_size % 2 != 0:
            raise ValueError("encoder_hidden_size must be even")
        if self.encoder_depth < 1:
            raise ValueError("encoder_depth must be >= 1")
        for lang in self.languages:
            if lang not in self.vocab_sizes:
                raise ValueError(f"no vocab size for language {lang!r}")

    @classmethod
    def paper_scale(cls, languages, hub_language, vocab_sizes=None):
        """Published hyperparameters (30k vocabularies, 512-wide stacks)."""
        vocab_sizes = vocab_sizes or {l: 30000 for l in languages}
        return cls(languages=languages, hub_language=hub_language,
                   vocab_sizes=vocab_sizes,
                   source_embedding_size=256, target_embedding_size=256,
                   encoder_hidden_size=512, interlingua_hidden_size=512,
                   interlingua_length=50, decoder_hidden_size=512,
                   max_source_length=50)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class InterlinguaOutput:
    """Fixed-length interlingual representation (B, L_i, e_i)."""
    values: T.Tensor
    keys_cache: dict = field(default_factory=dict)


class _Encoder:
    def __init__(self, cfg, lang, rng):
        self.embedding = EmbeddingTable(cfg.vocab_sizes[lang],
                                        cfg.source_embedding_size, rng)
        self.layers = []
        in_dim = cfg.source_embedding_size
        for _ in range(cfg.encoder_depth):
            self.layers.append(BiLstmEncoder(in_dim, cfg.encoder_hidden_size,
                                             rng))
            in_dim = cfg.encoder_hidden_size

    def parameters(self, prefix):
        out = self.embedding.parameters(prefix + ".emb")
        for i, layer in enumerate(self.layers):
            out.update(layer.parameters(f"{prefix}.bilstm{i}"))
        return out


class _Decoder:
    def __init__(self, cfg, lang, rng):
        e_i = cfg.interlingua_output_size
        self.embedding = EmbeddingTable(cfg.vocab_sizes[lang],
                                        cfg.target_embedding_size, rng)
        self.cell = LstmCell(cfg.target_embedding_size + e_i,
                             cfg.decoder_hidden_size, rng)
        self.attention = AdditiveAttention(cfg.decoder_hidden_size, e_i,
                                           cfg.decoder_hidden_size, rng)
        self.output = AffineProjection(cfg.decoder_hidden_size + e_i,
                                       cfg.vocab_sizes[lang], rng)

    def parameters(self, prefix):
        out = self.embedding.parameters(prefix + ".emb")
        out.update(self.cell.parameters(prefix + ".lstm"))
        out.update(self.attention.parameters(prefix + ".att"))
        out.update(self.output.parameters(prefix + ".proj"))
        return out


class MultilingualModel:
    """S encoders, one shared interlingua, T decoders.

    No parameter depends on a (source, target) pair jointly, so the
    parameter count grows linearly in the number of languages and any
    source/target combination is decodable, trained or not.
    """

    def __init__(self, config):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.encoders = {}
        self.decoders = {}
        for lang in config.languages:
            self.encoders[lang] = _Encoder(config, lang, rng)
        self.inter_cell = LstmCell(config.encoder_hidden_size,
                                   config.interlingua_hidden_size, rng)
        self.inter_attention = AdditiveAttention(
            config.interlingua_hidden_size, config.encoder_hidden_size,
            config.interlingua_hidden_size, rng)
        self.inter_projection = AffineProjection(
            config.interlingua_hidden_size + config.encoder_hidden_size,
            config.interlingua_output_size, rng)
        for lang in config.languages:
            self.decoders[lang] = _Decoder(config, lang, rng)

    # -- parameter bookkeeping ------------------------------------------

    def parameters(self):
        """name -> Tensor, in a stable order."""
        out = {}
        for lang in self.config.languages:
            out.update(self.encoders[lang].parameters(f"src.{lang}"))
        out.update(self.inter_cell.parameters("inter.lstm"))
        out.update(self.inter_attention.parameters("inter.att"))
        out.update(self.inter_projection.parameters("inter.proj"))
        for lang in self.config.languages:
            out.update(self.decoders[lang].parameters(f"tgt.{lang}"))
        return out

    def pair_parameter_names(self, src, tgt):
        """Names touched when training on (src, tgt): Enc_src, Inter, Dec_tgt."""
        params = self.parameters()
        return [n for n in params
                if n.startswith((f"src.{src}.", "inter.", f"tgt.{tgt}."))]

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()

    def _encoder(self, lang):
        try:
            return self.encoders[lang]
        except KeyError:
            raise UnknownLanguageError(f"no encoder for language {lang!r}")

    def _decoder(self, lang):
        try:
            return self.decoders[lang]
        except KeyError:
            raise UnknownLanguageError(f"no decoder for language {lang!r}")

    # -- forward computation --------------------------------------------

    def encode_source(self, lang, ids, lengths=None):
        """ids (B, L) -> language-specific encoding (B, L, e_s)."""
        enc = self._encoder(lang)
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim == 1:
            ids = ids[None, :]
        L = ids.shape[1]
        if L < 1:
            raise T.DimensionError("empty source sequence")
        if L > self.config.max_source_length:
            raise ValueError(
                f"source length {L} exceeds maximum "
                f"{self.config.max_source_length}; truncate the input first")
        x = enc.embedding.lookup_batch(ids)
        for layer in enc.layers:
            x = layer.encode(x, lengths)
        return x

    def interlingua_encode(self, encoded, mask=None):
        """(B, L_x, e_s) -> InterlinguaOutput with exactly L_i columns."""
        B = encoded.shape[0]
        L_i = self.config.interlingua_length
        keys = self.inter_attention.keys(encoded)
        h, c = self.inter_cell.zero_state(B)
        cols = []
        for _ in range(L_i):
            ctx, _w = self.inter_attention.attend(h, encoded, keys=keys,
                                                  mask=mask)
            h, c = self.inter_cell.step(ctx, (h, c))
            cols.append(self.inter_projection.apply(T.concat(h, ctx, axis=1)))
        return InterlinguaOutput(values=T.stack_steps(cols))

    def init_decoder_state(self, lang, batch):
        return self._decoder(lang).cell.zero_state(batch)

    def decode_step(self, lang, inter, prev_ids, state):
        """One decoder step: (logits (B, V_t), new state).

        The decoder reads the source sentence only through ``inter``.
        """
        dec = self._decoder(lang)
        I = inter.values
        keys = inter.keys_cache.get(lang)
        if keys is None:
            keys = dec.attention.keys(I)
            inter.keys_cache[lang] = keys
        h, c = state
        ctx, _w = dec.attention.attend(h, I, keys=keys)
        emb = dec.embedding.lookup(np.asarray(prev_ids, dtype=np.int64))
        h, c = dec.cell.step(T.concat(emb, ctx, axis=1), (h, c))
        logits = dec.output.apply(T.concat(h, ctx, axis=1))
        return logits, (h, c)

    def step_logits(self, lang, inter, prev_ids_per_step):
        """Teacher-forced logits for each step; returns a list of (B, V_t)."""
        B = inter.values.shape[0]
        state = self.init_decoder_state(lang, B)
        out = []
        for prev_ids in prev_ids_per_step:
            logits, state = self.decode_step(lang, inter, prev_ids, state)
            out.append(logits)
        return out

    def sentence_logprob(self, src, tgt, x_ids, y_ids):
        """Teacher-forced log p(y | x) for one BOS/EOS-framed pair."""
        x_ids = list(x_ids)
        y_ids = list(y_ids)
        if x_ids[0] != bpe.BOS or x_ids[-1] != bpe.EOS \
                or y_ids[0] != bpe.BOS or y_ids[-1] != bpe.EOS:
            raise ValueError("sequences must be BOS/EOS framed")
        E = self.encode_source(src, np.asarray([x_ids]))
        inter = self.interlingua_encode(E)
        steps = [np.asarray([y]) for y in y_ids[:-1]]
        logits = self.step_logits(tgt, inter, steps)
        total = None
        for step_logits, target in zip(logits, y_ids[1:]):
            nll = T.cross_entropy_logits(step_logits, np.asarray([target]))
            total = nll if total is None else T.add(total, nll)
        return T.scale(total, -1.0)
