"""Embedding-based LID: layer aggregation, attentive statistics pooling, LDA and logistic regression.

Only the forward pass of the pooler is implemented; its parameters are loaded
from file or drawn from a seeded generator.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np
import scipy.linalg

from .errors import DataError
from .lid_gen import LidDistribution

logger = logging.getLogger(__name__)

N_LAYERS = 24
MODEL_DIM = 1024
N_HEADS = 4
ATT_HIDDEN = 256
EMB_DIM = 512
LDA_DIM = 100
HEAD_TEMPERATURES = (0.5, 1.0, 2.0, 4.0)
VAR_FLOOR = 1e-8
LDA_SHRINKAGE = 0.1


def _softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


# ---------------------------------------------------------------------------
# pooler


@dataclass(frozen=True, eq=False)
class PoolerParams:
    """Pooler weights. ``layer_logits`` is D x L; each row is softmax-normalized on use."""

    layer_logits: np.ndarray  # (D, L)
    att_w1: np.ndarray  # (H, D, A)
    att_b1: np.ndarray  # (H, A)
    att_w2: np.ndarray  # (H, A)
    att_b2: np.ndarray  # (H,)
    temperatures: np.ndarray  # (H,)
    hid1_w: np.ndarray  # (E, 2*H*D)
    hid1_b: np.ndarray  # (E,)
    hid2_w: np.ndarray  # (E, E)
    hid2_b: np.ndarray  # (E,)
    cls_w: np.ndarray  # (C, E)
    cls_b: np.ndarray  # (C,)

    def __post_init__(self) -> None:
        d, _ = self.layer_logits.shape
        h, _, a = self.att_w1.shape
        e = self.hid1_w.shape[0]
        expect = {
            "att_w1": (h, d, a),
            "att_b1": (h, a),
            "att_w2": (h, a),
            "att_b2": (h,),
            "temperatures": (h,),
            "hid1_w": (e, 2 * h * d),
            "hid1_b": (e,),
            "hid2_w": (e, e),
            "hid2_b": (e,),
            "cls_w": (self.cls_w.shape[0], e),
            "cls_b": (self.cls_w.shape[0],),
        }
        for name, shape in expect.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise DataError(f"pooler parameter {name} has shape {arr.shape}, expected {shape}")
        for name in PARAM_NAMES:
            if not np.all(np.isfinite(getattr(self, name))):
                raise DataError(f"pooler parameter {name} has non-finite entries")
        if np.any(self.temperatures <= 0):
            raise DataError("head temperatures must be positive")

    @property
    def layer_weights(self) -> np.ndarray:
        return _softmax(self.layer_logits, axis=1)

    @property
    def n_layers(self) -> int:
        return self.layer_logits.shape[1]

    @property
    def dim(self) -> int:
        return self.layer_logits.shape[0]

    @property
    def n_heads(self) -> int:
        return self.att_w1.shape[0]

    @property
    def pooled_dim(self) -> int:
        return 2 * self.n_heads * self.dim

    @property
    def emb_dim(self) -> int:
        return self.hid1_w.shape[0]


PARAM_NAMES = (
    "layer_logits", "att_w1", "att_b1", "att_w2", "att_b2", "temperatures",
    "hid1_w", "hid1_b", "hid2_w", "hid2_b", "cls_w", "cls_b",
)


def init_pooler(
    seed: int,
    n_classes: int,
    n_layers: int = N_LAYERS,
    dim: int = MODEL_DIM,
    n_heads: int = N_HEADS,
    att_hidden: int = ATT_HIDDEN,
    emb_dim: int = EMB_DIM,
    temperatures: Sequence[float] = HEAD_TEMPERATURES,
) -> PoolerParams:
    """Seeded random parameters with fan-in scaled Gaussian weights."""
    if len(temperatures) != n_heads:
        raise ValueError("need one temperature per head")
    rng = np.random.default_rng(seed)

    def w(*shape: int) -> np.ndarray:
        return rng.normal(0.0, 1.0 / math.sqrt(shape[-2] if len(shape) > 1 else 1), size=shape)

    pooled = 2 * n_heads * dim
    return PoolerParams(
        layer_logits=rng.normal(0.0, 0.1, size=(dim, n_layers)),
        att_w1=w(n_heads, dim, att_hidden),
        att_b1=np.zeros((n_heads, att_hidden)),
        att_w2=rng.normal(0.0, 1.0 / math.sqrt(att_hidden), size=(n_heads, att_hidden)),
        att_b2=np.zeros(n_heads),
        temperatures=np.asarray(temperatures, dtype=float),
        hid1_w=rng.normal(0.0, 1.0 / math.sqrt(pooled), size=(emb_dim, pooled)),
        hid1_b=np.zeros(emb_dim),
        hid2_w=rng.normal(0.0, 1.0 / math.sqrt(emb_dim), size=(emb_dim, emb_dim)),
        hid2_b=np.zeros(emb_dim),
        cls_w=rng.normal(0.0, 1.0 / math.sqrt(emb_dim), size=(n_classes, emb_dim)),
        cls_b=np.zeros(n_classes),
    )


def aggregate_layers(layer_outputs: np.ndarray | Sequence[np.ndarray], params: PoolerParams) -> np.ndarray:
    """Dimension-specific convex combination of the encoder layers: (L, T, D) -> (T, D)."""
    if not isinstance(layer_outputs, np.ndarray):
        lengths = {np.shape(x)[0] for x in layer_outputs}
        if len(lengths) > 1:
            raise DataError(f"layer outputs differ in length: {sorted(lengths)}")
    x = np.asarray(layer_outputs, dtype=float)
    if x.ndim != 3 or x.shape[0] != params.n_layers or x.shape[2] != params.dim or x.shape[1] < 1:
        raise DataError(f"layer outputs have shape {x.shape}, expected ({params.n_layers}, T>=1, {params.dim})")
    return np.einsum("ltd,dl->td", x, params.layer_weights)


def attention_weights(seq: np.ndarray, params: PoolerParams) -> np.ndarray:
    """Per-head attention over frames, shape (H, T); each row sums to 1."""
    hidden = np.tanh(np.einsum("td,hda->hta", seq, params.att_w1) + params.att_b1[:, None, :])
    scores = np.einsum("hta,ha->ht", hidden, params.att_w2) + params.att_b2[:, None]
    return _softmax(scores / params.temperatures[:, None], axis=1)


def attentive_pool(seq: np.ndarray, params: PoolerParams) -> np.ndarray:
    """Concatenated per-head weighted mean and standard deviation: (T, D) -> 2*H*D."""
    seq = np.asarray(seq, dtype=float)
    if seq.ndim != 2 or seq.shape[0] < 1 or seq.shape[1] != params.dim:
        raise DataError(f"sequence has shape {seq.shape}, expected (T>=1, {params.dim})")
    alpha = attention_weights(seq, params)
    parts = []
    for a in alpha:
        mu = a @ seq
        var = a @ (seq - mu) ** 2
        # variances at or below the floor are rounding noise; a constant sequence gives exactly 0
        sigma = np.sqrt(np.where(var > VAR_FLOOR, var, 0.0))
        parts += [mu, sigma]
    return np.concatenate(parts)


@dataclass(frozen=True, eq=False)
class Embedding:
    vector: np.ndarray
    utt_id: str = ""

    def __post_init__(self) -> None:
        v = np.asarray(self.vector, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise DataError(f"embedding {self.utt_id!r} must be a non-empty vector")
        if not np.all(np.isfinite(v)):
            raise DataError(f"embedding {self.utt_id!r} has non-finite entries")
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        return self.vector.size


def extract_embedding(pooled: np.ndarray, params: PoolerParams, utt_id: str = "") -> Embedding:
    """First post-pooling affine layer, taken before its ReLU."""
    pooled = np.asarray(pooled, dtype=float)
    if pooled.shape != (params.pooled_dim,):
        raise DataError(f"pooled vector has shape {pooled.shape}, expected ({params.pooled_dim},)")
    return Embedding(params.hid1_w @ pooled + params.hid1_b, utt_id)


def pooler_logits(pooled: np.ndarray, params: PoolerParams) -> np.ndarray:
    """The pooler's own classification head (ReLU after both hidden layers)."""
    h1 = np.maximum(params.hid1_w @ pooled + params.hid1_b, 0.0)
    h2 = np.maximum(params.hid2_w @ h1 + params.hid2_b, 0.0)
    return params.cls_w @ h2 + params.cls_b


def embed_utterance(layer_outputs: np.ndarray, params: PoolerParams, utt_id: str = "") -> Embedding:
    return extract_embedding(attentive_pool(aggregate_layers(layer_outputs, params), params), params, utt_id)


def length_normalize(v: Embedding | np.ndarray) -> Embedding:
    emb = v if isinstance(v, Embedding) else Embedding(np.asarray(v, dtype=float))
    norm = float(np.linalg.norm(emb.vector))
    if norm == 0.0:
        raise DataError(f"cannot length-normalize the zero vector {emb.utt_id!r}")
    return Embedding(emb.vector / norm, emb.utt_id)


# ---------------------------------------------------------------------------
# LDA


@dataclass(frozen=True, eq=False)
class LdaModel:
    projection: np.ndarray  # (d_in, k)
    global_mean: np.ndarray  # (d_in,)
    class_means: np.ndarray  # (C, d_in)
    classes: tuple[str, ...]
    shrinkage: float

    @property
    def out_dim(self) -> int:
        return self.projection.shape[1]

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.global_mean) @ self.projection


def _check_features(x: np.ndarray, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError(f"{what}: expected a non-empty 2-D feature matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{what}: features contain non-finite values")
    return x


def _class_index(labels: Sequence[str]) -> tuple[tuple[str, ...], np.ndarray]:
    classes = tuple(sorted(set(labels)))
    index = {c: i for i, c in enumerate(classes)}
    return classes, np.array([index[c] for c in labels], dtype=int)


def fit_lda(
    x: np.ndarray,
    labels: Sequence[str],
    out_dim: int = LDA_DIM,
    shrinkage: float = LDA_SHRINKAGE,
) -> LdaModel:
    """Project onto the leading generalized eigenvectors of (between, shrunk within) scatter.

    Scatters are normalized by the sample count; shrinkage blends the within-class
    scatter toward ``trace/d * I``. Each direction's first nonzero component is positive.
    """
    x = _check_features(x, "fit_lda")
    if len(labels) != x.shape[0]:
        raise DataError("fit_lda: label count does not match sample count")
    if not 0.0 <= shrinkage <= 1.0:
        raise ValueError("shrinkage must lie in [0, 1]")
    classes, y = _class_index(labels)
    n, d = x.shape
    c = len(classes)
    if c < 2:
        raise DataError("fit_lda needs at least two classes")
    counts = np.bincount(y, minlength=c)
    if counts.min() < 2:
        raise DataError(f"fit_lda needs >= 2 samples per class; {classes[int(counts.argmin())]!r} has {counts.min()}")
    if not 1 <= out_dim <= min(d, c - 1):
        raise DataError(f"out_dim={out_dim} must be in [1, min(d={d}, C-1={c - 1})]")

    mu = x.mean(axis=0)
    means = np.stack([x[y == k].mean(axis=0) for k in range(c)])
    dm = means - mu
    sb = (dm * counts[:, None]).T @ dm / n
    centered = x - means[y]
    sw = centered.T @ centered / n
    sw = (1.0 - shrinkage) * sw + shrinkage * (np.trace(sw) / d) * np.eye(d)
    sw = (sw + sw.T) / 2
    sb = (sb + sb.T) / 2

    ev = np.linalg.eigvalsh(sw)
    if ev[0] <= 1e-10 * max(ev[-1], 1e-300):
        raise DataError("within-class scatter is singular; raise the LDA shrinkage above 0")
    vals, vecs = scipy.linalg.eigh(sb, sw)
    order = np.argsort(-vals, kind="stable")[:out_dim]
    proj = vecs[:, order]
    for j in range(out_dim):
        col = proj[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        if nz.size and col[nz[0]] < 0:
            proj[:, j] = -col
    return LdaModel(proj, mu, means, classes, shrinkage)


# ---------------------------------------------------------------------------
# multinomial logistic regression


@dataclass(frozen=True, eq=False)
class LogRegModel:
    weights: np.ndarray  # (k, C)
    bias: np.ndarray  # (C,)
    classes: tuple[str, ...]
    l2: float = 0.0

    def __post_init__(self) -> None:
        if len(self.classes) < 2:
            raise DataError("logistic regression needs at least two classes")
        if self.weights.shape[1] != len(self.classes) or self.bias.shape != (len(self.classes),):
            raise DataError("logistic regression parameter shapes do not match the class list")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise DataError("logistic regression parameters must be finite")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")

    def proba(self, x: np.ndarray) -> np.ndarray:
        return _softmax(np.asarray(x, dtype=float) @ self.weights + self.bias, axis=-1)


def logreg_loss_and_grad(
    weights: np.ndarray, bias: np.ndarray, x: np.ndarray, y: np.ndarray, l2: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy plus ``l2/2 * ||W||^2`` (bias unregularized), with gradients."""
    n = x.shape[0]
    z = x @ weights + bias
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), y].mean() + 0.5 * l2 * float(np.sum(weights * weights))
    p = np.exp(logp)
    p[np.arange(n), y] -= 1.0
    p /= n
    return float(loss), x.T @ p + l2 * weights, p.sum(axis=0)


def fit_logreg(
    x: np.ndarray,
    labels: Sequence[str],
    l2: float = 1e-4,
    step: float = 0.1,
    max_iter: int = 5000,
    tol: float = 1e-6,
) -> LogRegModel:
    """Deterministic full-batch gradient descent; the step is halved whenever the loss fails to decrease."""
    x = _check_features(x, "fit_logreg")
    if len(labels) != x.shape[0]:
        raise DataError("fit_logreg: label count does not match sample count")
    classes, y = _class_index(labels)
    if len(classes) < 2:
        raise DataError("fit_logreg needs at least two classes")
    w = np.zeros((x.shape[1], len(classes)))
    b = np.zeros(len(classes))
    loss, gw, gb = logreg_loss_and_grad(w, b, x, y, l2)
    it = 0
    for it in range(max_iter):
        gnorm = math.sqrt(float(np.sum(gw * gw) + np.sum(gb * gb)))
        if gnorm < tol:
            break
        while step > 1e-12:
            w2, b2 = w - step * gw, b - step * gb
            loss2, gw2, gb2 = logreg_loss_and_grad(w2, b2, x, y, l2)
            if loss2 < loss:
                break
            step /= 2
        else:
            break
        w, b, loss, gw, gb = w2, b2, loss2, gw2, gb2
    logger.debug("logreg stopped after %d iterations at loss %.6g", it, loss)
    return LogRegModel(w, b, classes, l2)


# ---------------------------------------------------------------------------
# full back-end


@dataclass(frozen=True, eq=False)
class EmbeddingClassifier:
    """Length normalization, LDA and logistic regression, fitted on labelled embeddings."""

    lda: LdaModel
    logreg: LogRegModel

    def __post_init__(self) -> None:
        if self.lda.classes != self.logreg.classes:
            raise DataError("LDA and logistic regression were fitted on different classes")


def _normalized_matrix(embeddings: Sequence[Embedding] | np.ndarray) -> np.ndarray:
    if isinstance(embeddings, np.ndarray):
        rows = [length_normalize(Embedding(r)).vector for r in embeddings]
    else:
        rows = [length_normalize(e).vector for e in embeddings]
    return np.stack(rows)


def fit_classifier(
    embeddings: Sequence[Embedding] | np.ndarray,
    labels: Sequence[str],
    out_dim: int = LDA_DIM,
    shrinkage: float = LDA_SHRINKAGE,
    l2: float = 1e-4,
) -> EmbeddingClassifier:
    x = _normalized_matrix(embeddings)
    lda = fit_lda(x, labels, out_dim, shrinkage)
    return EmbeddingClassifier(lda, fit_logreg(lda.transform(x), labels, l2))


def predict_proba(v: Embedding | np.ndarray, lda: LdaModel, logreg: LogRegModel) -> LidDistribution:
    vec = length_normalize(v).vector
    p = logreg.proba(lda.transform(vec))
    p = p / math.fsum(p)
    return LidDistribution(dict(zip(logreg.classes, (float(q) for q in p))))


def classify_embedding(v: Embedding | np.ndarray, model: EmbeddingClassifier) -> LidDistribution:
    return predict_proba(v, model.lda, model.logreg)


# ---------------------------------------------------------------------------
# file formats


def _write_matrix(out: TextIO, name: str, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=float)
    out.write(f"matrix {name} {' '.join(str(s) for s in arr.shape) or 'scalar'}\n")
    flat = arr.reshape(-1, arr.shape[-1]) if arr.ndim > 1 else arr.reshape(1, -1)
    for row in flat:
        out.write(" ".join(repr(float(v)) for v in row) + "\n")


def _read_blocks(path: str | Path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    meta: dict[str, str] = {}
    mats: dict[str, np.ndarray] = {}
    i = 0
    while i < len(lines):
        line = lines[i]
        i += 1
        if not line.strip() or line.startswith("#"):
            continue
        if line.startswith("matrix "):
            parts = line.split()
            if len(parts) < 3:
                raise DataError(f"{path}: malformed matrix header at line {i}")
            name = parts[1]
            try:
                shape = tuple(int(s) for s in parts[2:])
            except ValueError:
                raise DataError(f"{path}: malformed matrix shape at line {i}") from None
            n_rows = int(np.prod(shape[:-1])) if len(shape) > 1 else 1
            block = lines[i : i + n_rows]
            if len(block) != n_rows:
                raise DataError(f"{path}: matrix {name} is truncated")
            try:
                data = np.array([[float(v) for v in row.split()] for row in block], dtype=float)
            except ValueError:
                raise DataError(f"{path}: non-numeric value in matrix {name}") from None
            if data.size != int(np.prod(shape)):
                raise DataError(f"{path}: matrix {name} has {data.size} values, expected shape {shape}")
            mats[name] = data.reshape(shape)
            i += n_rows
        elif "=" in line:
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
        else:
            raise DataError(f"{path}: line {i} is neither key=value nor a matrix block")
    return meta, mats


def write_pooler(params: PoolerParams, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as out:
        out.write("format=pooler1\n")
        for name in PARAM_NAMES:
            _write_matrix(out, name, getattr(params, name))


def read_pooler(path: str | Path) -> PoolerParams:
    meta, mats = _read_blocks(path)
    if meta.get("format") != "pooler1":
        raise DataError(f"{path}: not a pooler parameter file")
    missing = [n for n in PARAM_NAMES if n not in mats]
    if missing:
        raise DataError(f"{path}: missing parameters {missing}")
    return PoolerParams(**{n: mats[n] for n in PARAM_NAMES})


def write_classifier(model: EmbeddingClassifier, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as out:
        out.write("format=embclf1\n")
        out.write(f"classes={' '.join(model.lda.classes)}\n")
        out.write(f"shrinkage={model.lda.shrinkage!r}\n")
        out.write(f"l2={model.logreg.l2!r}\n")
        _write_matrix(out, "projection", model.lda.projection)
        _write_matrix(out, "global_mean", model.lda.global_mean)
        _write_matrix(out, "class_means", model.lda.class_means)
        _write_matrix(out, "weights", model.logreg.weights)
        _write_matrix(out, "bias", model.logreg.bias)


def read_classifier(path: str | Path) -> EmbeddingClassifier:
    meta, mats = _read_blocks(path)
    if meta.get("format") != "embclf1":
        raise DataError(f"{path}: not an embedding classifier file")
    try:
        classes = tuple(meta["classes"].split())
        lda = LdaModel(
            mats["projection"], mats["global_mean"], mats["class_means"], classes, float(meta["shrinkage"])
        )
        logreg = LogRegModel(mats["weights"], mats["bias"], classes, float(meta["l2"]))
    except KeyError as exc:
        raise DataError(f"{path}: missing field {exc.args[0]}") from None
    return EmbeddingClassifier(lda, logreg)


def read_encoder_activations(path: str | Path) -> np.ndarray:
    """Parse ``ENCACT1 T L D`` followed by T*L rows (frame-major, layer-minor); returns (L, T, D)."""
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 4 or header[0] != "ENCACT1":
            raise DataError(f"{path}: expected header 'ENCACT1 <T> <L> <D>'")
        try:
            t, n_layers, d = (int(v) for v in header[1:])
        except ValueError:
            raise DataError(f"{path}: non-integer dimensions in header") from None
        if min(t, n_layers, d) < 1:
            raise DataError(f"{path}: dimensions must be >= 1")
        rows = []
        for lineno, line in enumerate(f, 2):
            if not line.strip():
                continue
            vals = line.split()
            if len(vals) != d:
                raise DataError(f"{path}: line {lineno} has {len(vals)} values, expected D={d}")
            rows.append([float(v) for v in vals])
    if len(rows) != t * n_layers:
        raise DataError(f"{path}: found {len(rows)} rows, header declares T*L={t * n_layers}")
    arr = np.array(rows, dtype=float).reshape(t, n_layers, d)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path}: non-finite activations")
    return arr.transpose(1, 0, 2)


def write_encoder_activations(layers: np.ndarray, path: str | Path) -> None:
    n_layers, t, d = layers.shape
    with open(path, "w", encoding="utf-8") as out:
        out.write(f"ENCACT1 {t} {n_layers} {d}\n")
        for frame in layers.transpose(1, 0, 2).reshape(-1, d):
            out.write(" ".join(repr(float(v)) for v in frame) + "\n")


def write_embeddings(embeddings: Iterable[Embedding], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as out:
        for e in embeddings:
            out.write(f"{e.utt_id}\t{' '.join(repr(float(v)) for v in e.vector)}\n")


def read_embeddings(path: str | Path, dim: int | None = None) -> dict[str, Embedding]:
    out: dict[str, Embedding] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}: line {lineno} is not 'utt_id<TAB>values'")
        try:
            vec = np.array([float(v) for v in parts[1].split()])
        except ValueError:
            raise DataError(f"{path}: non-numeric value at line {lineno}") from None
        if dim is not None and vec.size != dim:
            raise DataError(f"{path}: line {lineno} has dimension {vec.size}, expected {dim}")
        if parts[0] in out:
            raise DataError(f"{path}: duplicate utterance {parts[0]!r}")
        out[parts[0]] = Embedding(vec, parts[0])
    return out
