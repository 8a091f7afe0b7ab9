"""Reusable neural layers: embeddings, LSTM cells, bidirectional encoding,
additive attention, and affine projection.

All layers work on minibatches: per-step activations are (B, dim) matrices,
sequences are (B, L, dim). Parameters are requires_grad tensors registered
by name so the optimizer and checkpoint code can enumerate them.
"""

import numpy as np

from . import tensor as T

INIT_RANGE = 0.08  # uniform init bound for all weights except forget bias


def _uniform(rng, shape):
    return T.tensor(rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)
                    .astype(np.float32), requires_grad=True)


class EmbeddingTable:
    """Token-id to vector lookup table."""

    def __init__(self, vocab_size, dim, rng):
        if vocab_size < 1 or dim < 1:
            raise ValueError("vocab_size and dim must be positive")
        self.vocab_size = vocab_size
        self.dim = dim
        self.weights = _uniform(rng, (vocab_size, dim))

    def lookup(self, ids):
        """ids: flat int sequence -> (len(ids), dim)."""
        return T.rows(self.weights, ids)

    def lookup_batch(self, ids):
        """ids: (B, L) int array -> (B, L, dim)."""
        ids = np.asarray(ids, dtype=np.int64)
        B, L = ids.shape
        flat = T.rows(self.weights, ids.reshape(-1))
        return T.reshape(flat, (B, L, self.dim))

    def parameters(self, prefix):
        return {prefix + ".weights": self.weights}


class LstmCell:
    """Single LSTM cell with the standard gate equations.

    Gate weights are stored as one (input_dim + hidden_dim, 4*hidden_dim)
    matrix in i, f, g, o column order; the forget-gate bias section is
    initialized to 1.0.
    """

    def __init__(self, input_dim, hidden_dim, rng):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.w = _uniform(rng, (input_dim + hidden_dim, 4 * hidden_dim))
        b = np.zeros(4 * hidden_dim, dtype=np.float32)
        b[hidden_dim:2 * hidden_dim] = 1.0
        self.b = T.tensor(b, requires_grad=True)

    def zero_state(self, batch):
        return (T.zeros((batch, self.hidden_dim)),
                T.zeros((batch, self.hidden_dim)))

    def step(self, x, state):
        """x: (B, input_dim), state: (h, c) pair of (B, hidden_dim)."""
        h_prev, c_prev = state
        if x.shape[1] != self.input_dim:
            raise T.DimensionError(
                f"lstm input width {x.shape[1]} != {self.input_dim}")
        H = self.hidden_dim
        z = T.bias_add(T.matmul(T.concat(x, h_prev, axis=1), self.w), self.b)
        i = T.sigmoid(T.slice_cols(z, 0, H))
        f = T.sigmoid(T.slice_cols(z, H, 2 * H))
        g = T.tanh(T.slice_cols(z, 2 * H, 3 * H))
        o = T.sigmoid(T.slice_cols(z, 3 * H, 4 * H))
        c = T.add(T.mul(f, c_prev), T.mul(i, g))
        h = T.mul(o, T.tanh(c))
        return h, c

    def parameters(self, prefix):
        return {prefix + ".w": self.w, prefix + ".b": self.b}


class BiLstmEncoder:
    """Bidirectional LSTM over an embedded sequence.

    Each direction has hidden width out_dim // 2 so the concatenated output
    column width is out_dim (which must therefore be even).
    """

    def __init__(self, input_dim, out_dim, rng):
        if out_dim % 2 != 0:
            raise ValueError(f"bilstm output width {out_dim} must be even")
        self.input_dim = input_dim
        self.out_dim = out_dim
        half = out_dim // 2
        self.fwd = LstmCell(input_dim, half, rng)
        self.bwd = LstmCell(input_dim, half, rng)

    def encode(self, x, lengths=None):
        """x: (B, L, input_dim) -> (B, L, out_dim).

        Column i concatenates the forward state after consuming steps 1..i
        and the backward state after consuming steps L..i. ``lengths`` marks
        the valid prefix per row; positions beyond it are padding whose
        states are meaningless (mask them downstream).
        """
        if x.data.ndim != 3:
            raise T.DimensionError(f"encode rank {x.data.ndim}")
        B, L, _ = x.shape
        if L < 1:
            raise T.DimensionError("encode of empty sequence")
        if lengths is None:
            lengths = np.full(B, L, dtype=np.int64)

        hf, cf = self.fwd.zero_state(B)
        fwd_states = []
        for t in range(L):
            hf, cf = self.fwd.step(T.select_step(x, t), (hf, cf))
            fwd_states.append(hf)

        xr = T.reverse_sequence(x, lengths)
        hb, cb = self.bwd.zero_state(B)
        bwd_states = []
        for t in range(L):
            hb, cb = self.bwd.step(T.select_step(xr, t), (hb, cb))
            bwd_states.append(hb)

        F = T.stack_steps(fwd_states)
        Br = T.reverse_sequence(T.stack_steps(bwd_states), lengths)
        return T.concat(F, Br, axis=2)

    def parameters(self, prefix):
        out = {}
        out.update(self.fwd.parameters(prefix + ".fwd"))
        out.update(self.bwd.parameters(prefix + ".bwd"))
        return out


class AdditiveAttention:
    """Additive (MLP) attention: score = v . tanh(Wq q + Wk k)."""

    def __init__(self, query_dim, key_dim, att_dim, rng):
        self.query_dim = query_dim
        self.key_dim = key_dim
        self.att_dim = att_dim
        self.wq = _uniform(rng, (query_dim, att_dim))
        self.wk = _uniform(rng, (key_dim, att_dim))
        self.v = _uniform(rng, (att_dim, 1))

    def keys(self, memory):
        """Precompute Wk-projected keys for a fixed memory (B, L, key_dim)."""
        B, L, D = memory.shape
        flat = T.reshape(memory, (B * L, D))
        return T.reshape(T.matmul(flat, self.wk), (B, L, self.att_dim))

    def attend(self, query, memory, keys=None, mask=None):
        """query (B, q), memory (B, L, k) -> (context (B, k), weights (B, L))."""
        if memory.data.ndim != 3 or memory.shape[1] < 1:
            raise T.DimensionError(f"attend over memory shape {memory.shape}")
        B, L, D = memory.shape
        if keys is None:
            keys = self.keys(memory)
        q = T.matmul(query, self.wq)
        act = T.tanh(T.broadcast_add_mid(keys, q))
        scores = T.reshape(
            T.matmul(T.reshape(act, (B * L, self.att_dim)), self.v), (B, L))
        if mask is None:
            weights = T.softmax(scores)
        else:
            weights = T.masked_softmax(scores, mask)
        context = T.weighted_sum(weights, memory)
        return context, weights

    def parameters(self, prefix):
        return {prefix + ".wq": self.wq, prefix + ".wk": self.wk,
                prefix + ".v": self.v}


class AffineProjection:
    """y = x W + b for row-vector batches."""

    def __init__(self, in_dim, out_dim, rng):
        if in_dim < 1 or out_dim < 1:
            raise ValueError("affine dims must be positive")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.w = _uniform(rng, (in_dim, out_dim))
        self.b = T.tensor(np.zeros(out_dim, dtype=np.float32),
                          requires_grad=True)

    def apply(self, x):
        if x.shape[1] != self.in_dim:
            raise T.DimensionError(
                f"affine input width {x.shape[1]} != {self.in_dim}")
        return T.bias_add(T.matmul(x, self.w), self.b)

    def parameters(self, prefix):
        return {prefix + ".w": self.w, prefix + ".b": self.b}
