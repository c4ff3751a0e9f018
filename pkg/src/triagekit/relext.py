"""Trainable CNN classifier for distant located_in / not_located_in relations.

Per-token features concatenate word, positional (relative distance to each
entity) and tag embeddings; convolution filters over several window sizes
feed ReLU + max-pooling, a dense layer with dropout and a softmax pair.
Everything is plain numpy with hand-written backprop so the analytic
gradients can be checked against central finite differences, and training is
bit-deterministic under a seed (fixed accumulation order, no threading).
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, SnapshotError, TrainingError
from .textproc import CONNECTIVES, Mention, Sentence

logger = logging.getLogger(__name__)

CLASSES = ("not_located_in", "located_in")  # index 0, 1
PAD, UNK = 0, 1

MAX_LEN = 45  # maximum sentence length l
WORD_DIM = 50  # w
POS_DIM = 20  # p per entity
TAG_DIM = 10  # d

CHECKPOINT_MAGIC = b"TKRX"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class CnnConfig:
    max_len: int = MAX_LEN
    word_dim: int = WORD_DIM
    pos_dim: int = POS_DIM
    tag_dim: int = TAG_DIM
    windows: tuple[int, ...] = (2, 3, 4)
    filters: int = 64
    dense_dim: int = 128
    dropout: float = 0.5
    batch_size: int = 32
    learning_rate: float = 1e-3
    epochs: int = 5
    seed: int = 0
    init_scale: float = 0.05

    @property
    def feature_dim(self) -> int:
        return self.word_dim + 2 * self.pos_dim + self.tag_dim


class Vocab:
    """Token and tag id maps; id 0 is PAD, id 1 is UNK for words."""

    def __init__(self, words: Iterable[str], tags: Iterable[str]):
        self.word_ids = {"<pad>": PAD, "<unk>": UNK}
        for w in sorted(set(words)):
            self.word_ids.setdefault(w, len(self.word_ids))
        self.tag_ids = {"<pad>": 0}
        for t in sorted(set(tags)):
            self.tag_ids.setdefault(t, len(self.tag_ids))

    @classmethod
    def from_sentences(cls, sentences: Iterable["RelationSentence"]) -> "Vocab":
        words, tags = [], []
        for s in sentences:
            words.extend(s.words)
            tags.extend(s.tags)
        return cls(words, tags)

    def word_id(self, word: str) -> int:
        return self.word_ids.get(word, UNK)

    def tag_id(self, tag: str) -> int:
        return self.tag_ids.get(tag, 0)

    def to_dict(self) -> dict:
        return {"words": self.word_ids, "tags": self.tag_ids}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        v = cls([], [])
        v.word_ids = dict(d["words"])
        v.tag_ids = dict(d["tags"])
        return v

    def __len__(self) -> int:
        return len(self.word_ids)


@dataclass(frozen=True)
class RelationSentence:
    """A labeled (E1, R, E2) triple in its sentence context."""

    words: tuple[str, ...]
    tags: tuple[str, ...]
    e1: tuple[int, int]  # token span [start, end)
    e2: tuple[int, int]
    label: str


@dataclass(frozen=True)
class RelationExample:
    word_ids: np.ndarray  # (l,) int
    dist1: np.ndarray  # (l,) int in [0, 2l]
    dist2: np.ndarray
    tag_ids: np.ndarray
    e1: tuple[int, int]  # spans in window coordinates
    e2: tuple[int, int]
    label: int  # index into CLASSES

    def __post_init__(self):
        if self.e1 == self.e2:
            raise DataError("E1 and E2 must be distinct spans")


def featurize_tokens(
    words: Sequence[str],
    tags: Sequence[str],
    e1: tuple[int, int],
    e2: tuple[int, int],
    label: str | None,
    vocab: Vocab,
    max_len: int = MAX_LEN,
) -> RelationExample:
    """Pad or truncate to max_len keeping the window centered on the stretch
    between the entities; both entity spans must survive."""
    if e1 == e2:
        raise DataError("E1 and E2 must be distinct spans")
    n = len(words)
    span_lo = min(e1[0], e2[0])
    span_hi = max(e1[1], e2[1])
    if span_hi - span_lo > max_len:
        raise DataError(
            f"entity stretch {span_hi - span_lo} exceeds the {max_len}-token window"
        )
    offset = 0
    if n > max_len:
        center = (span_lo + span_hi) // 2
        offset = min(max(center - max_len // 2, 0), n - max_len)
        offset = min(offset, span_lo)
        offset = max(offset, span_hi - max_len)
    kept = list(words[offset : offset + max_len])
    kept_tags = list(tags[offset : offset + max_len])
    e1_w = (e1[0] - offset, e1[1] - offset)
    e2_w = (e2[0] - offset, e2[1] - offset)

    word_ids = np.full(max_len, PAD, dtype=np.int64)
    tag_ids = np.zeros(max_len, dtype=np.int64)
    for i, (w, t) in enumerate(zip(kept, kept_tags)):
        word_ids[i] = vocab.word_id(w)
        tag_ids[i] = vocab.tag_id(t)
    positions = np.arange(max_len)
    dist1 = np.clip(positions - e1_w[0], -max_len, max_len) + max_len
    dist2 = np.clip(positions - e2_w[0], -max_len, max_len) + max_len
    return RelationExample(
        word_ids=word_ids,
        dist1=dist1.astype(np.int64),
        dist2=dist2.astype(np.int64),
        tag_ids=tag_ids,
        e1=e1_w,
        e2=e2_w,
        label=CLASSES.index(label) if label is not None else -1,
    )


def featurize(
    sentence: Sentence, e1: Mention, e2: Mention, vocab: Vocab, max_len: int = MAX_LEN
) -> RelationExample:
    words = sentence.normalized()
    tags = [t.tag for t in sentence]
    return featurize_tokens(
        words, tags, (e1.start, e1.end), (e2.start, e2.end), None, vocab, max_len
    )


def featurize_sentence(s: RelationSentence, vocab: Vocab, max_len: int = MAX_LEN) -> RelationExample:
    return featurize_tokens(s.words, s.tags, s.e1, s.e2, s.label, vocab, max_len)


# --------------------------------------------------------------------------
# parameters
# --------------------------------------------------------------------------


@dataclass
class CnnParams:
    config: CnnConfig
    tensors: dict[str, np.ndarray]
    history: list[dict] = field(default_factory=list)

    @classmethod
    def init(cls, config: CnnConfig, vocab_size: int, tag_count: int, seed: int | None = None) -> "CnnParams":
        rng = np.random.default_rng(config.seed if seed is None else seed)
        s = config.init_scale
        k = config.feature_dim
        pos_rows = 2 * config.max_len + 1

        def uniform(*shape):
            return rng.uniform(-s, s, size=shape).astype(np.float64)

        tensors = {
            "word_emb": uniform(vocab_size, config.word_dim),
            "pos1_emb": uniform(pos_rows, config.pos_dim),
            "pos2_emb": uniform(pos_rows, config.pos_dim),
            "tag_emb": uniform(tag_count, config.tag_dim),
        }
        tensors["word_emb"][PAD] = 0.0
        for m in config.windows:
            tensors[f"conv_w_{m}"] = uniform(m * k, config.filters)
            tensors[f"conv_b_{m}"] = np.zeros(config.filters, dtype=np.float64)
        total_filters = config.filters * len(config.windows)
        tensors["dense_w"] = uniform(total_filters, config.dense_dim)
        tensors["dense_b"] = np.zeros(config.dense_dim, dtype=np.float64)
        tensors["out_w"] = uniform(config.dense_dim, len(CLASSES))
        tensors["out_b"] = np.zeros(len(CLASSES), dtype=np.float64)
        return cls(config=config, tensors=tensors)

    def copy(self) -> "CnnParams":
        return CnnParams(self.config, {k: v.copy() for k, v in self.tensors.items()}, list(self.history))


def _stack(examples: Sequence[RelationExample]) -> dict[str, np.ndarray]:
    return {
        "word": np.stack([e.word_ids for e in examples]),
        "d1": np.stack([e.dist1 for e in examples]),
        "d2": np.stack([e.dist2 for e in examples]),
        "tag": np.stack([e.tag_ids for e in examples]),
        "label": np.array([e.label for e in examples], dtype=np.int64),
    }


def _forward_batch(
    batch: dict[str, np.ndarray],
    params: CnnParams,
    *,
    train: bool = False,
    dropout_rng: np.random.Generator | None = None,
):
    """Forward pass; returns (probabilities, cache for backprop)."""
    cfg = params.config
    t = params.tensors
    x = np.concatenate(
        [
            t["word_emb"][batch["word"]],
            t["pos1_emb"][batch["d1"]],
            t["pos2_emb"][batch["d2"]],
            t["tag_emb"][batch["tag"]],
        ],
        axis=2,
    )  # (B, l, k)
    b_sz, length, k = x.shape
    cache: dict = {"x": x, "batch": batch}
    pooled_parts = []
    for m in cfg.windows:
        n_windows = length - m + 1
        # im2col: (B, n_windows, m*k)
        windows = np.stack([x[:, i : i + m, :].reshape(b_sz, -1) for i in range(n_windows)], axis=1)
        z = windows @ t[f"conv_w_{m}"] + t[f"conv_b_{m}"]  # (B, n, f)
        a = np.maximum(z, 0.0)
        arg = np.argmax(a, axis=1)  # (B, f) position of max per filter
        pooled = np.take_along_axis(a, arg[:, None, :], axis=1)[:, 0, :]
        cache[f"win_{m}"] = windows
        cache[f"z_{m}"] = z
        cache[f"arg_{m}"] = arg
        pooled_parts.append(pooled)
    h0 = np.concatenate(pooled_parts, axis=1)
    z1 = h0 @ t["dense_w"] + t["dense_b"]
    h1 = np.maximum(z1, 0.0)
    if train and cfg.dropout > 0.0:
        if dropout_rng is None:
            raise ConfigurationError("training forward pass needs a dropout rng")
        mask = (dropout_rng.random(h1.shape) >= cfg.dropout) / (1.0 - cfg.dropout)
        h1d = h1 * mask
        cache["drop_mask"] = mask
    else:
        h1d = h1
        cache["drop_mask"] = None
    logits = h1d @ t["out_w"] + t["out_b"]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    cache.update(h0=h0, z1=z1, h1=h1, h1d=h1d, probs=probs)
    return probs, cache


def forward(example: RelationExample, params: CnnParams) -> tuple[float, float]:
    """Inference on one example: (p_not_located, p_located); dropout off."""
    probs, _ = _forward_batch(_stack([example]), params, train=False)
    return float(probs[0, 0]), float(probs[0, 1])


def _loss_and_grads(
    batch: dict[str, np.ndarray],
    params: CnnParams,
    *,
    train: bool,
    dropout_rng: np.random.Generator | None = None,
):
    cfg = params.config
    t = params.tensors
    probs, cache = _forward_batch(batch, params, train=train, dropout_rng=dropout_rng)
    labels = batch["label"]
    b_sz = probs.shape[0]
    eps = 1e-12
    loss = -float(np.mean(np.log(probs[np.arange(b_sz), labels] + eps)))

    grads = {name: np.zeros_like(tensor) for name, tensor in t.items()}
    dlogits = probs.copy()
    dlogits[np.arange(b_sz), labels] -= 1.0
    dlogits /= b_sz

    grads["out_w"] = cache["h1d"].T @ dlogits
    grads["out_b"] = dlogits.sum(axis=0)
    dh1d = dlogits @ t["out_w"].T
    if cache["drop_mask"] is not None:
        dh1 = dh1d * cache["drop_mask"]
    else:
        dh1 = dh1d
    dz1 = dh1 * (cache["z1"] > 0.0)
    grads["dense_w"] = cache["h0"].T @ dz1
    grads["dense_b"] = dz1.sum(axis=0)
    dh0 = dz1 @ t["dense_w"].T

    dx = np.zeros_like(cache["x"])
    col = 0
    for m in cfg.windows:
        f = cfg.filters
        dpooled = dh0[:, col : col + f]
        col += f
        z = cache[f"z_{m}"]
        arg = cache[f"arg_{m}"]
        da = np.zeros_like(z)
        np.put_along_axis(da, arg[:, None, :], dpooled[:, None, :], axis=1)
        dz = da * (z > 0.0)
        windows = cache[f"win_{m}"]
        b_sz2, n_windows, mk = windows.shape
        grads[f"conv_w_{m}"] = windows.reshape(-1, mk).T @ dz.reshape(-1, f)
        grads[f"conv_b_{m}"] = dz.sum(axis=(0, 1))
        dwin = dz @ t[f"conv_w_{m}"].T  # (B, n, m*k)
        k = cfg.feature_dim
        dwin = dwin.reshape(b_sz2, n_windows, m, k)
        for i in range(n_windows):
            dx[:, i : i + m, :] += dwin[:, i, :, :]

    w_dim, p_dim, d_dim = cfg.word_dim, cfg.pos_dim, cfg.tag_dim
    slices = {
        "word_emb": (batch["word"], dx[:, :, :w_dim]),
        "pos1_emb": (batch["d1"], dx[:, :, w_dim : w_dim + p_dim]),
        "pos2_emb": (batch["d2"], dx[:, :, w_dim + p_dim : w_dim + 2 * p_dim]),
        "tag_emb": (batch["tag"], dx[:, :, w_dim + 2 * p_dim :]),
    }
    for name, (ids, grad_part) in slices.items():
        np.add.at(grads[name], ids.reshape(-1), grad_part.reshape(-1, grad_part.shape[2]))
    return loss, grads


class _Adam:
    def __init__(self, params: CnnParams, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.t = 0

    def step(self, params: CnnParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, tensor in params.tensors.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / b1c
            v_hat = self.v[name] / b2c
            tensor -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def balance_dataset(
    sentences: Sequence[RelationSentence], seed: int = 0
) -> list[RelationSentence]:
    """Equal label counts by seeded down-sampling of the majority class;
    output is a deterministically shuffled sub-multiset of the input."""
    by_label: dict[str, list[RelationSentence]] = {c: [] for c in CLASSES}
    for s in sentences:
        if s.label not in by_label:
            raise DataError(f"unknown label {s.label!r}")
        by_label[s.label].append(s)
    missing = [c for c, items in by_label.items() if not items]
    if missing:
        raise DataError(f"labels absent from dataset: {missing}")
    rng = np.random.default_rng(seed)
    target = min(len(items) for items in by_label.values())
    kept: list[RelationSentence] = []
    for c in CLASSES:
        items = by_label[c]
        if len(items) > target:
            idx = rng.choice(len(items), size=target, replace=False)
            items = [items[i] for i in sorted(idx)]
        kept.extend(items)
    order = rng.permutation(len(kept))
    return [kept[i] for i in order]


def train(
    train_set: Sequence[RelationSentence],
    validation_set: Sequence[RelationSentence],
    config: CnnConfig,
    vocab: Vocab | None = None,
) -> tuple[CnnParams, Vocab]:
    """Adam on cross-entropy for config.epochs; returns the parameters with
    the best validation loss. Deterministic under config.seed."""
    if not train_set or not validation_set:
        raise DataError("train and validation sets must be non-empty")
    if vocab is None:
        vocab = Vocab.from_sentences(train_set)
    train_batchable = _stack([featurize_sentence(s, vocab, config.max_len) for s in train_set])
    val_batch = _stack([featurize_sentence(s, vocab, config.max_len) for s in validation_set])

    params = CnnParams.init(config, vocab_size=len(vocab), tag_count=len(vocab.tag_ids))
    optimizer = _Adam(params, lr=config.learning_rate)
    shuffle_rng = np.random.default_rng(config.seed + 1)
    dropout_rng = np.random.default_rng(config.seed + 2)

    n = len(train_set)
    best: tuple[float, CnnParams] | None = None
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = {k: v[idx] for k, v in train_batchable.items()}
            loss, grads = _loss_and_grads(batch, params, train=True, dropout_rng=dropout_rng)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch} batch {batches}")
            optimizer.step(params, grads)
            epoch_loss += loss
            batches += 1
        val_probs, _ = _forward_batch(val_batch, params, train=False)
        val_loss = -float(
            np.mean(np.log(val_probs[np.arange(len(val_probs)), val_batch["label"]] + 1e-12))
        )
        entry = {
            "epoch": epoch,
            "train_loss": epoch_loss / max(batches, 1),
            "val_loss": val_loss,
        }
        params.history.append(entry)
        logger.info("relext epoch %d train_loss=%.4f val_loss=%.4f", epoch, entry["train_loss"], val_loss)
        if best is None or val_loss < best[0]:
            best = (val_loss, params.copy())
    assert best is not None
    result = best[1]
    result.history = list(params.history)
    return result, vocab


def predict(params: CnnParams, examples: Sequence[RelationExample]) -> np.ndarray:
    probs, _ = _forward_batch(_stack(examples), params, train=False)
    return probs


def evaluate(
    params: CnnParams, test_set: Sequence[RelationSentence], vocab: Vocab
) -> dict[str, dict[str, float]]:
    """Per-class precision, recall and f-score; zero predicted positives
    report precision 0.0 with a divide-by-zero flag."""
    if not test_set:
        raise DataError("empty test set")
    examples = [featurize_sentence(s, vocab, params.config.max_len) for s in test_set]
    probs = predict(params, examples)
    predicted = probs.argmax(axis=1)
    actual = np.array([e.label for e in examples])
    return classification_report(predicted, actual)


def classification_report(predicted: np.ndarray, actual: np.ndarray) -> dict[str, dict[str, float]]:
    report: dict[str, dict[str, float]] = {}
    for ci, cls in enumerate(CLASSES):
        tp = int(np.sum((predicted == ci) & (actual == ci)))
        fp = int(np.sum((predicted == ci) & (actual != ci)))
        fn = int(np.sum((predicted != ci) & (actual == ci)))
        zero_div = (tp + fp) == 0
        precision = 0.0 if zero_div else tp / (tp + fp)
        recall = 0.0 if (tp + fn) == 0 else tp / (tp + fn)
        f_score = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
        report[cls] = {
            "precision": precision,
            "recall": recall,
            "f_score": f_score,
            "support": int(np.sum(actual == ci)),
            "zero_division": zero_div,
        }
    return report


def gradient_check(
    params: CnnParams,
    examples: Sequence[RelationExample],
    epsilon: float = 1e-4,
) -> dict[str, float]:
    """Relative error between analytic gradients and central finite
    differences per parameter tensor (dropout off so the loss is smooth)."""
    batch = _stack(examples)
    _, grads = _loss_and_grads(batch, params, train=False)

    def loss_only() -> float:
        probs, _ = _forward_batch(batch, params, train=False)
        labels = batch["label"]
        return -float(np.mean(np.log(probs[np.arange(len(labels)), labels] + 1e-12)))

    errors = {}
    for name, tensor in params.tensors.items():
        numeric = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        numeric_flat = numeric.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + epsilon
            plus = loss_only()
            flat[i] = original - epsilon
            minus = loss_only()
            flat[i] = original
            numeric_flat[i] = (plus - minus) / (2 * epsilon)
        analytic = grads[name]
        denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
        errors[name] = float(np.linalg.norm(analytic - numeric) / denom)
    return errors


# --------------------------------------------------------------------------
# checkpoint format: magic, version, shape header, little-endian f32 tensors
# --------------------------------------------------------------------------


def save_checkpoint(params: CnnParams, path: str | Path) -> None:
    names = sorted(params.tensors)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            encoded = name.encode("utf-8")
            tensor = params.tensors[name]
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", tensor.ndim))
            for dim in tensor.shape:
                fh.write(struct.pack("<I", dim))
        meta = {
            "max_len": params.config.max_len,
            "word_dim": params.config.word_dim,
            "pos_dim": params.config.pos_dim,
            "tag_dim": params.config.tag_dim,
            "windows": params.config.windows,
            "filters": params.config.filters,
            "dense_dim": params.config.dense_dim,
        }
        blob = repr(meta).encode("utf-8")
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(params.tensors[name].astype("<f4").tobytes(order="C"))


def load_checkpoint(path: str | Path) -> CnnParams:
    import ast

    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise SnapshotError(f"{path}: not a relation-model checkpoint")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise SnapshotError(f"{path}: unsupported checkpoint version {version}")
        (count,) = struct.unpack("<I", fh.read(4))
        shapes: list[tuple[str, tuple[int, ...]]] = []
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            dims = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            shapes.append((name, dims))
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = ast.literal_eval(fh.read(meta_len).decode("utf-8"))
        tensors = {}
        for name, dims in shapes:
            size = int(np.prod(dims)) if dims else 1
            data = np.frombuffer(fh.read(4 * size), dtype="<f4").astype(np.float64)
            tensors[name] = data.reshape(dims)
    config = CnnConfig(
        max_len=meta["max_len"],
        word_dim=meta["word_dim"],
        pos_dim=meta["pos_dim"],
        tag_dim=meta["tag_dim"],
        windows=tuple(meta["windows"]),
        filters=meta["filters"],
        dense_dim=meta["dense_dim"],
    )
    return CnnParams(config=config, tensors=tensors)


# --------------------------------------------------------------------------
# synthetic triple corpus: the located_in signal is a connective token
# directly before E2, so the task is separable and distances often exceed
# the short-distance rule window
# --------------------------------------------------------------------------

_SUBJECT_WORDS = (
    "schmerz", "schwellung", "ausschlag", "juckreiz", "abszess", "krampf",
    "brennen", "stechen", "ziehen", "druckschmerz", "entzuendung", "roetung",
)
_ANATOMY_WORDS = (
    "arm", "bein", "knie", "fuss", "hand", "kopf", "bauch", "ruecken",
    "brust", "hals", "ohr", "auge", "finger", "haut",
)
_FILLER_WORDS = (
    "seit", "gestern", "leicht", "stark", "zunehmend", "wieder", "abends",
    "morgens", "dauerhaft", "gelegentlich", "deutlich", "spuerbar", "etwas",
    "beim", "gehen", "liegen", "druck", "bewegung", "belastung", "beruehrung",
)


def generate_relation_corpus(n: int, seed: int) -> list[RelationSentence]:
    """Seeded synthetic (E1, R, E2) triples with planted separable structure."""
    if n < 0:
        raise ConfigurationError("n must be >= 0")
    rng = np.random.default_rng(seed)
    connectives = sorted(CONNECTIVES)
    out = []
    for _ in range(n):
        positive = bool(rng.random() < 0.5)
        subject = _SUBJECT_WORDS[rng.integers(len(_SUBJECT_WORDS))]
        anatomy = _ANATOMY_WORDS[rng.integers(len(_ANATOMY_WORDS))]

        def fillers(lo, hi):
            count = int(rng.integers(lo, hi + 1))
            return [_FILLER_WORDS[rng.integers(len(_FILLER_WORDS))] for _ in range(count)]

        words = fillers(0, 3) + [subject]
        e1 = (len(words) - 1, len(words))
        words += fillers(0 if positive else 1, 6)
        if positive:
            words.append(connectives[rng.integers(len(connectives))])
        words.append(anatomy)
        e2 = (len(words) - 1, len(words))
        words += fillers(0, 3)
        tags = ["term"] * len(words)
        tags[e1[0]] = "symptom"
        tags[e2[0]] = "anatomy"
        out.append(
            RelationSentence(
                words=tuple(words),
                tags=tuple(tags),
                e1=e1,
                e2=e2,
                label="located_in" if positive else "not_located_in",
            )
        )
    return out
