"""Multilingual NMT with an explicit fixed-length neural interlingua.

Library layout:

- ``tensor``: float32 tensors with taped reverse-mode differentiation
- ``layers``: embeddings, LSTM cells, BiLSTM encoder, additive attention
- ``bpe``: per-language byte-pair-encoding tokenizers
- ``model``: per-language encoders/decoders around one shared interlingua
- ``trainer``: language-rotation schedule, losses, Adam, training loop
- ``decoding``: greedy/beam search, direct zero-shot and pivot translation
- ``evaluation``: corpus BLEU and zero-shot comparison reports
- ``analysis``: mean-pooled sentence embeddings, logistic regression, PCA
- ``synth``: deterministic cipher-language corpora for experiments
- ``checkpoint``: versioned binary parameter persistence
- ``cli``: the ``ilmt`` command
"""

from .model import ModelConfig, MultilingualModel

__version__ = "0.1.0"

__all__ = ["ModelConfig", "MultilingualModel", "__version__"]
