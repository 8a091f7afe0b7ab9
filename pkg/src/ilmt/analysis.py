"""Sentence embeddings, crosslingual logistic-regression classification,
and PCA visualization.

A sentence embedding is the mean over the fixed number of interlingua
columns, so every sentence in every language maps to one vector of the same
width. The classifier never sees a language tag; crosslingual transfer
works (or fails) purely through the shared representation.
"""

from dataclasses import dataclass

import numpy as np

from . import bpe
from . import tensor as T


@dataclass
class SentenceEmbedding:
    vector: np.ndarray
    language: str
    text: str = ""


def embed_ids(model, lang, ids):
    """Mean-pooled interlingua vector for a BOS/EOS-framed id sequence."""
    limit = model.config.max_source_length
    truncated = False
    ids = list(ids)
    if len(ids) > limit:
        ids = ids[:limit - 1] + [bpe.EOS]
        truncated = True
    with T.no_grad():
        E = model.encode_source(lang, np.asarray([ids]))
        inter = model.interlingua_encode(E)
    vec = inter.values.data[0].mean(axis=0, dtype=np.float64)
    return vec.astype(np.float32), truncated


def embed_sentence(model, tokenizers, lang, text):
    """Whole text as one sequence (no sentence segmentation), truncated to
    the model maximum if needed; empty text embeds the bare BOS/EOS frame."""
    tok, vocab = tokenizers[lang]
    ids = bpe.encode(tok, vocab, text)
    vec, _ = embed_ids(model, lang, ids)
    return SentenceEmbedding(vector=vec, language=lang, text=text)


# ---------------------------------------------------------------------------
# logistic regression


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float

    def decision(self, x):
        return x @ self.weights + self.bias


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def train_logistic(features, labels, l2=1e-3, max_iters=10000, tol=1e-5,
                   init=None):
    """L2-regularized logistic regression by full-batch gradient descent.

    Runs until the gradient norm drops below ``tol`` or ``max_iters``. The
    step size comes from the Lipschitz bound of the logistic loss, so the
    descent is monotone and deterministic.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError(f"features {X.shape} vs labels {y.shape}")
    classes = set(np.unique(y))
    if not classes <= {0.0, 1.0} or len(classes) < 2:
        raise ValueError("need binary labels with at least one of each class")
    n, d = X.shape
    Xb = np.concatenate([X, np.ones((n, 1))], axis=1)
    # loss Hessian is bounded by 0.25 * Xb'Xb / n + l2 I
    lip = 0.25 * np.linalg.norm(Xb, ord=2) ** 2 / n + l2
    lr = 1.0 / lip
    w = np.zeros(d + 1) if init is None else np.asarray(init, dtype=np.float64)
    for _ in range(max_iters):
        p = _sigmoid(Xb @ w)
        grad = Xb.T @ (p - y) / n
        grad[:d] += l2 * w[:d]      # bias is not regularized
        if np.linalg.norm(grad) < tol:
            break
        w = w - lr * grad
    return LogisticModel(weights=w[:d].astype(np.float64), bias=float(w[d]))


def logistic_loss(model, features, labels, l2=1e-3):
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    z = model.decision(X)
    # stable log(1 + exp(-|z|)) formulation
    nll = np.logaddexp(0.0, z) - y * z
    return float(nll.mean() + 0.5 * l2 * np.dot(model.weights, model.weights))


def classify(model, embedding):
    """Probability of the positive class; language tag is never consulted."""
    vec = embedding.vector if isinstance(embedding, SentenceEmbedding) \
        else np.asarray(embedding)
    if vec.shape != model.weights.shape:
        raise ValueError(f"dimension {vec.shape} vs model "
                         f"{model.weights.shape}")
    return float(_sigmoid(float(vec @ model.weights + model.bias)))


def accuracy(model, features, labels):
    X = np.asarray(features, dtype=np.float64)
    pred = (model.decision(X) > 0.0).astype(np.float64)
    return float((pred == np.asarray(labels, dtype=np.float64)).mean())


def format_accuracy_table(per_language):
    """Accuracy per input language as an aligned table (one classifier,
    many languages)."""
    langs = list(per_language)
    header = "language  " + "  ".join(f"{l:>8}" for l in langs)
    row = "accuracy  " + "  ".join(f"{per_language[l] * 100:7.1f}%"
                                   for l in langs)
    return header + "\n" + row


# ---------------------------------------------------------------------------
# PCA


@dataclass
class PcaProjection:
    mean: np.ndarray
    axes: np.ndarray               # (k, d), orthonormal rows
    variance_ratios: np.ndarray    # non-increasing


def pca_fit(features, k, tol=1e-8, max_iters=10000):
    """Top-k principal axes by power iteration with deflation."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"features rank {X.ndim}")
    n, d = X.shape
    if k > d or k > n:
        raise ValueError(f"k={k} too large for {n} samples of dim {d}")
    mean = X.mean(axis=0)
    C = np.cov(X - mean, rowvar=False, bias=False)
    C = np.atleast_2d(C)
    total_var = float(np.trace(C))
    axes = []
    eigvals = []
    work = C.copy()
    for j in range(k):
        v = np.full(d, 1.0 / np.sqrt(d))
        v[j % d] += 1e-3          # break symmetry deterministically
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(max_iters):
            nv = work @ v
            norm = np.linalg.norm(nv)
            if norm == 0.0:
                break
            nv /= norm
            new_lam = float(nv @ work @ nv)
            if abs(new_lam - lam) < tol * max(abs(new_lam), 1.0):
                v = nv
                lam = new_lam
                break
            v, lam = nv, new_lam
        # re-orthogonalize against previous axes for numerical safety
        for a in axes:
            v -= (v @ a) * a
        nrm = np.linalg.norm(v)
        if nrm > 0:
            v /= nrm
        axes.append(v)
        eigvals.append(max(lam, 0.0))
        work = work - lam * np.outer(v, v)
    ratios = (np.asarray(eigvals) / total_var if total_var > 0
              else np.zeros(k))
    return PcaProjection(mean=mean, axes=np.asarray(axes),
                         variance_ratios=ratios)


def pca_apply(projection, vec):
    x = np.asarray(vec, dtype=np.float64)
    return projection.axes @ (x - projection.mean)


def pca_invert(projection, coords):
    return projection.mean + np.asarray(coords) @ projection.axes


# ---------------------------------------------------------------------------
# plotting


_COLORS = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e",
           "#e6ab02", "#a6761d", "#666666"]
_MARKERS = ["circle", "square", "triangle"]


@dataclass
class PlotPoint:
    group: str
    language: str
    x: float
    y: float


def _marker_svg(shape, cx, cy, color):
    if shape == "circle":
        return (f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="4" '
                f'fill="{color}"/>')
    if shape == "square":
        return (f'<rect x="{cx - 3.5:.2f}" y="{cy - 3.5:.2f}" width="7" '
                f'height="7" fill="{color}"/>')
    pts = f"{cx:.2f},{cy - 4.5:.2f} {cx - 4:.2f},{cy + 3.5:.2f} " \
          f"{cx + 4:.2f},{cy + 3.5:.2f}"
    return f'<polygon points="{pts}" fill="{color}"/>'


def emit_plot(points, svg_path, tsv_path, width=480, height=360):
    """Write a deterministic SVG scatter (color = group, marker = language)
    and a side-car "group<TAB>lang<TAB>x<TAB>y" table."""
    if not points:
        raise ValueError("no points to plot")
    groups = list(dict.fromkeys(p.group for p in points))
    langs = list(dict.fromkeys(p.language for p in points))
    xs = [p.x for p in points]
    ys = [p.y for p in points]
    xmin, xmax = min(xs), max(xs)
    ymin, ymax = min(ys), max(ys)
    xspan = (xmax - xmin) or 1.0
    yspan = (ymax - ymin) or 1.0
    pad = 30

    def sx(x):
        return pad + (x - xmin) / xspan * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - ymin) / yspan * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    for p in points:
        color = _COLORS[groups.index(p.group) % len(_COLORS)]
        shape = _MARKERS[langs.index(p.language) % len(_MARKERS)]
        parts.append(_marker_svg(shape, sx(p.x), sy(p.y), color))
    parts.append("</svg>")
    with open(svg_path, "w", encoding="utf-8") as f:
        f.write("\n".join(parts) + "\n")
    with open(tsv_path, "w", encoding="utf-8") as f:
        for p in points:
            f.write(f"{p.group}\t{p.language}\t{p.x:.6f}\t{p.y:.6f}\n")
