"""Encoder stack, task heads, training loop, and the two analysis procedures.

Checkpoints are a JSON manifest plus a raw little-endian float64 blob holding
every parameter in canonical order: token_embedding, position_embedding,
segment_embedding, then per layer w_q, w_k, w_v, w_o, w_gate, b_gate, w_ff1,
w_ff2, ln1_scale, ln1_shift, ln2_scale, ln2_shift, and finally head.weight,
head.bias.
"""

from __future__ import annotations

import csv
import json
import os
import zlib
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .attention import LayerParams, TraceCollector, sla_layer_forward
from .autodiff import Tensor
from .conllu import DependencySentence, all_pairs_distance, parse_conllu
from .errors import DataError, NumericError
from .masks import (
    build_padding_mask,
    build_pair_mask,
    build_sla_mask,
    build_window_mask,
    neighbor_min_distance,
)
from .wordpiece import KIND_WORD, SubwordAlignment, Vocabulary, build_alignment, pad_alignment

MODES = ("sla", "window", "global-only")
TASKS = ("sequence-classification", "token-labeling")

LAYER_FIELDS = (
    "w_q", "w_k", "w_v", "w_o", "w_gate", "b_gate",
    "w_ff1", "w_ff2", "ln1_scale", "ln1_shift", "ln2_scale", "ln2_shift",
)


def make_rng(seed: int, label: str) -> np.random.Generator:
    """Counter-based generator keyed by (seed, purpose), so every consumer of
    the run seed draws an independent, reproducible stream."""
    key = np.random.SeedSequence([int(seed), zlib.crc32(label.encode("utf-8"))])
    return np.random.Generator(np.random.Philox(key))


@dataclass
class SLAConfig:
    """Model and training knobs.

    Defaults are desk scale (CPU test budget); learning_rate suits training
    from scratch at this size rather than fine-tuning.
    """

    n_layers: int = 2
    hidden: int = 64
    n_heads: int = 4
    m: int = 3
    k: int = 3
    mode: str = "sla"
    max_len: int = 64
    seed: int = 0
    learning_rate: float = 1e-3
    epochs: int = 5
    batch_size: int = 32
    task: str = "token-labeling"
    eval_every: int = 100
    lowercase: bool = False
    n_classes: int | None = None
    transpose_d: bool = False

    def __post_init__(self):
        if self.hidden % self.n_heads != 0:
            raise DataError(f"hidden {self.hidden} not divisible by n_heads {self.n_heads}")
        if self.m < 0 or self.k < 0:
            raise DataError("m and k must be non-negative")
        if self.max_len < 3:
            raise DataError("max_len must be at least 3")
        if self.mode not in MODES:
            raise DataError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.task not in TASKS:
            raise DataError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.batch_size < 1 or self.eval_every < 1 or self.epochs < 0:
            raise DataError("batch_size and eval_every must be >= 1, epochs >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SLAConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(data) - known
        if unknown:
            raise DataError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class LabeledExample:
    """One or two parsed sentences plus a class id or per-word label ids."""

    sentences: tuple[DependencySentence, ...]
    label: int | tuple[int, ...]

    def __post_init__(self):
        if not 1 <= len(self.sentences) <= 2:
            raise DataError("an example carries 1 or 2 sentences")
        if isinstance(self.label, (list, tuple)):
            self.label = tuple(int(x) for x in self.label)
            if len(self.label) != self.sentences[0].n:
                raise DataError(
                    f"token-task label count {len(self.label)} != word count "
                    f"{self.sentences[0].n} of sentence 1"
                )
        else:
            self.label = int(self.label)


@dataclass
class ModelParams:
    token_embedding: Tensor  # (vocab, hidden)
    position_embedding: Tensor  # (max_len, hidden)
    segment_embedding: Tensor  # (2, hidden)
    layers: list[LayerParams]
    head_w: Tensor  # (hidden, n_classes)
    head_b: Tensor  # (n_classes,)

    def named(self) -> list[tuple[str, Tensor]]:
        out = [
            ("token_embedding", self.token_embedding),
            ("position_embedding", self.position_embedding),
            ("segment_embedding", self.segment_embedding),
        ]
        for i, layer in enumerate(self.layers):
            out.extend((f"layer{i}.{name}", t) for name, t in layer.named())
        out.append(("head.weight", self.head_w))
        out.append(("head.bias", self.head_b))
        return out

    def clone(self) -> "ModelParams":
        def c(t: Tensor) -> Tensor:
            return Tensor(t.data.copy(), requires_grad=t.requires_grad)

        return ModelParams(
            token_embedding=c(self.token_embedding),
            position_embedding=c(self.position_embedding),
            segment_embedding=c(self.segment_embedding),
            layers=[
                LayerParams(**{name: c(t) for name, t in layer.named()})
                for layer in self.layers
            ],
            head_w=c(self.head_w),
            head_b=c(self.head_b),
        )


def truncated_normal(rng, shape, std: float = 0.02) -> np.ndarray:
    """Normal draws rejected outside two standard deviations."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out


def init_params(config: SLAConfig, vocab_size: int, n_classes: int, rng=None) -> ModelParams:
    """Fresh parameters: truncated normal (std 0.02) projections and
    embeddings, zero biases (gates start at 0.5), unit layer-norm scales."""
    if rng is None:
        rng = make_rng(config.seed, "init")
    H = config.hidden

    def p(*shape):
        return Tensor(truncated_normal(rng, shape), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    def ones(*shape):
        return Tensor(np.ones(shape), requires_grad=True)

    layers = []
    for _ in range(config.n_layers):
        layers.append(
            LayerParams(
                w_q=p(H, H), w_k=p(H, H), w_v=p(H, H), w_o=p(H, H),
                w_gate=p(H, 1), b_gate=zeros(1),
                w_ff1=p(H, 4 * H), w_ff2=p(4 * H, H),
                ln1_scale=ones(H), ln1_shift=zeros(H),
                ln2_scale=ones(H), ln2_shift=zeros(H),
            )
        )
    return ModelParams(
        token_embedding=p(vocab_size, H),
        position_embedding=p(config.max_len, H),
        segment_embedding=p(2, H),
        layers=layers,
        head_w=p(H, n_classes),
        head_b=zeros(n_classes),
    )


# ---------------------------------------------------------------------------
# Forward passes


@dataclass
class TraceBatch:
    """Scores and gates captured for one forward call over a batch."""

    s_glb: np.ndarray  # (n_layers, B, n_heads, L, L)
    s_loc: np.ndarray
    gates: np.ndarray  # (n_layers, B, L)
    kinds: np.ndarray  # (B, L)


class AttentionTrace:
    """Per-layer, per-head score matrices and gate values across forwards."""

    def __init__(self):
        self.batches: list[TraceBatch] = []

    def add(self, batch: TraceBatch):
        self.batches.append(batch)

    @property
    def n_layers(self) -> int:
        if not self.batches:
            raise DataError("empty attention trace")
        return self.batches[0].s_glb.shape[0]


def embed(params: ModelParams, ids: np.ndarray, segments: np.ndarray) -> Tensor:
    """Token + learned position (+ segment) embeddings for (B, L) id arrays."""
    B, L = ids.shape
    tok = ad.gather(params.token_embedding, ids)
    pos = ad.getitem(params.position_embedding, slice(0, L))
    seg = ad.gather(params.segment_embedding, segments)
    return ad.add(ad.add(tok, pos), seg)


def encode(
    params: ModelParams,
    config: SLAConfig,
    h0,
    m_glb,
    m_loc,
    trace: AttentionTrace | None = None,
    kinds: np.ndarray | None = None,
) -> Tensor:
    """Run the layer stack over initial hidden states (B, L, hidden)."""
    h = ad.as_tensor(h0)
    collector = TraceCollector() if trace is not None else None
    for layer in params.layers:
        h = sla_layer_forward(h, layer, m_glb, m_loc, config.n_heads, trace=collector)
    if trace is not None:
        B, L = h.shape[0], h.shape[1]
        if kinds is None:
            kinds = np.full((B, L), KIND_WORD, dtype=np.int64)
        if params.layers:
            trace.add(
                TraceBatch(
                    s_glb=np.stack(collector.s_glb),
                    s_loc=np.stack(collector.s_loc),
                    gates=np.stack(collector.gates),
                    kinds=np.asarray(kinds),
                )
            )
        else:
            n_heads = config.n_heads
            trace.add(
                TraceBatch(
                    s_glb=np.zeros((0, B, n_heads, L, L)),
                    s_loc=np.zeros((0, B, n_heads, L, L)),
                    gates=np.zeros((0, B, L)),
                    kinds=np.asarray(kinds),
                )
            )
    return h


# ---------------------------------------------------------------------------
# Dataset plumbing


@dataclass
class Prepped:
    """Model-ready arrays for a dataset, padded to a common length."""

    ids: np.ndarray  # (N, L) int
    segments: np.ndarray  # (N, L) int
    kinds: np.ndarray  # (N, L) int
    m_glb: np.ndarray  # (N, L, L) float64
    m_loc: np.ndarray  # (N, L, L) float64
    task: str
    seq_labels: np.ndarray | None = None  # (N,)
    first_subword: np.ndarray | None = None  # (N, W) int
    word_weight: np.ndarray | None = None  # (N, W) float64
    token_labels: np.ndarray | None = None  # (N, W) int
    alignments: list[SubwordAlignment] = field(default_factory=list)

    def __len__(self) -> int:
        return self.ids.shape[0]


def load_dataset_jsonl(path) -> list[LabeledExample]:
    """Read a JSON-lines dataset of {"conllu": str, "label": int | [int]}."""
    examples = []
    try:
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
                if "conllu" not in row or "label" not in row:
                    raise DataError(f"{path}:{line_no}: expected conllu and label fields")
                sentences = parse_conllu(row["conllu"])
                if not sentences:
                    raise DataError(f"{path}:{line_no}: no sentences in conllu field")
                examples.append(
                    LabeledExample(sentences=tuple(sentences), label=row["label"])
                )
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return examples


def local_mask_for(
    alignment: SubwordAlignment,
    sentences,
    config: SLAConfig,
):
    """Build the local-branch mask for an example under the configured mode."""
    if config.mode == "global-only":
        return build_padding_mask(alignment)
    if config.mode == "window":
        return build_window_mask(alignment, config.k)
    distances = [neighbor_min_distance(all_pairs_distance(s)) for s in sentences]
    if len(sentences) == 2:
        return build_pair_mask(
            distances[0], distances[1], config.m, alignment, config.transpose_d
        )
    return build_sla_mask(distances[0], config.m, alignment, config.transpose_d)


def preprocess(examples, vocab: Vocabulary, config: SLAConfig) -> Prepped:
    """Tokenize, align, and build masks once; pad everything to a common L."""
    if not examples:
        raise DataError("empty dataset")
    alignments = [
        build_alignment(ex.sentences, vocab, config.max_len, config.lowercase)
        for ex in examples
    ]
    L = max(a.seq_len for a in alignments)
    N = len(examples)

    ids = np.zeros((N, L), dtype=np.int64)
    segments = np.zeros((N, L), dtype=np.int64)
    kinds = np.zeros((N, L), dtype=np.int64)
    m_glb = np.zeros((N, L, L))
    m_loc = np.zeros((N, L, L))
    padded_alignments = []

    token_task = config.task == "token-labeling"
    if token_task:
        for ex in examples:
            if not isinstance(ex.label, tuple):
                raise DataError("token-labeling task requires per-word label lists")
        W = max(len(a.word_spans[0]) for a in alignments)
        first_subword = np.zeros((N, W), dtype=np.int64)
        word_weight = np.zeros((N, W))
        token_labels = np.zeros((N, W), dtype=np.int64)
        seq_labels = None
    else:
        for ex in examples:
            if isinstance(ex.label, tuple):
                raise DataError("sequence-classification task requires integer labels")
        first_subword = word_weight = token_labels = None
        seq_labels = np.array([ex.label for ex in examples], dtype=np.int64)

    for i, (ex, alignment) in enumerate(zip(examples, alignments)):
        padded = pad_alignment(alignment, L)
        padded_alignments.append(padded)
        ids[i] = vocab.ids(padded.subwords)
        segments[i] = [1 if s == 1 else 0 for s in padded.sentence_of]
        kinds[i] = padded.kinds()
        m_glb[i] = build_padding_mask(padded).m_vals
        m_loc[i] = local_mask_for(padded, ex.sentences, config).m_vals
        if token_task:
            positions = padded.first_subword_positions(0)
            first_subword[i, : len(positions)] = positions
            word_weight[i, : len(positions)] = 1.0
            token_labels[i, : len(positions)] = ex.label[: len(positions)]

    return Prepped(
        ids=ids,
        segments=segments,
        kinds=kinds,
        m_glb=m_glb,
        m_loc=m_loc,
        task=config.task,
        seq_labels=seq_labels,
        first_subword=first_subword,
        word_weight=word_weight,
        token_labels=token_labels,
        alignments=padded_alignments,
    )


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    return np.eye(n_classes)[labels]


def batch_logits(
    params: ModelParams,
    config: SLAConfig,
    prepped: Prepped,
    index: np.ndarray,
    trace: AttentionTrace | None = None,
) -> Tensor:
    """Task-head logits for the examples selected by ``index``."""
    ids = prepped.ids[index]
    h0 = embed(params, ids, prepped.segments[index])
    h = encode(
        params,
        config,
        h0,
        prepped.m_glb[index],
        prepped.m_loc[index],
        trace=trace,
        kinds=prepped.kinds[index],
    )
    if prepped.task == "token-labeling":
        picked = ad.gather_positions(h, prepped.first_subword[index])
    else:
        picked = ad.getitem(h, (slice(None), 0))
    return ad.add(ad.matmul(picked, params.head_w), params.head_b)


def batch_loss(logits: Tensor, labels: np.ndarray, weights: np.ndarray | None) -> Tensor:
    """Mean cross-entropy; ``weights`` zero out padded word slots."""
    n_classes = logits.shape[-1]
    onehot = _one_hot(labels, n_classes)
    log_probs = ad.log_softmax_lastaxis(logits)
    picked = ad.tsum(ad.mul(log_probs, Tensor(onehot)), axis=-1)
    if weights is None:
        total = picked.data.size
        return ad.mul(ad.tsum(picked), -1.0 / total)
    total = float(weights.sum())
    if total == 0:
        raise DataError("batch has no labeled positions")
    return ad.mul(ad.tsum(ad.mul(picked, Tensor(weights))), -1.0 / total)


# ---------------------------------------------------------------------------
# Metrics


def f1_positive(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Binary F1 for label 1 with the 0/0 := 0 convention."""
    tp = float(np.sum((y_pred == 1) & (y_true == 1)))
    fp = float(np.sum((y_pred == 1) & (y_true != 1)))
    fn = float(np.sum((y_pred != 1) & (y_true == 1)))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def evaluate(
    params: ModelParams,
    config: SLAConfig,
    prepped: Prepped,
    trace: AttentionTrace | None = None,
) -> float:
    """Dev metric: accuracy for sequence tasks, word-level positive-class F1
    (first-subword predictions) for token labeling."""
    preds, golds = [], []
    with ad.no_grad():
        for start in range(0, len(prepped), config.batch_size):
            index = np.arange(start, min(start + config.batch_size, len(prepped)))
            logits = batch_logits(params, config, prepped, index, trace=trace)
            pred = np.argmax(logits.data, axis=-1)
            if prepped.task == "token-labeling":
                w = prepped.word_weight[index] > 0
                preds.append(pred[w])
                golds.append(prepped.token_labels[index][w])
            else:
                preds.append(pred)
                golds.append(prepped.seq_labels[index])
    y_pred = np.concatenate(preds)
    y_true = np.concatenate(golds)
    if prepped.task == "token-labeling":
        return f1_positive(y_true, y_pred)
    return float(np.mean(y_pred == y_true))


# ---------------------------------------------------------------------------
# Training


class Adam:
    """Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8)."""

    def __init__(self, named_params, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(named_params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(t.data) for _, t in self.params]
        self.v = [np.zeros_like(t.data) for _, t in self.params]

    def zero_grad(self):
        for _, t in self.params:
            t.zero_grad()

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for i, (_, t) in enumerate(self.params):
            g = t.grad if t.grad is not None else np.zeros_like(t.data)
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * (g * g)
            m_hat = self.m[i] / b1t
            v_hat = self.v[i] / b2t
            t.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class HistoryRow:
    step: int
    loss: float
    dev_metric: float | None


@dataclass
class TrainResult:
    params: ModelParams  # best-dev parameters
    final_params: ModelParams
    history: list[HistoryRow]
    best_metric: float
    best_step: int


def infer_n_classes(examples) -> int:
    top = 0
    for ex in examples:
        if isinstance(ex.label, tuple):
            top = max(top, max(ex.label, default=0))
        else:
            top = max(top, ex.label)
    return max(2, top + 1)


def train(
    config: SLAConfig,
    train_examples,
    dev_examples,
    vocab: Vocabulary,
    max_steps: int | None = None,
) -> TrainResult:
    """Adam over cross-entropy; evaluates every ``eval_every`` steps and at
    the end, keeping the best-dev parameters. Aborts on non-finite loss."""
    if not train_examples:
        raise DataError("empty training set")
    n_classes = config.n_classes or infer_n_classes(list(train_examples) + list(dev_examples))
    config = replace(config, n_classes=n_classes)
    train_prepped = preprocess(train_examples, vocab, config)
    dev_prepped = preprocess(dev_examples, vocab, config) if dev_examples else None

    params = init_params(config, len(vocab), n_classes, make_rng(config.seed, "init"))
    optimizer = Adam(params.named(), lr=config.learning_rate)
    shuffle_rng = make_rng(config.seed, "shuffle")

    history: list[HistoryRow] = []
    best_metric = -np.inf
    best_step = 0
    best_params = params.clone()
    step = 0
    done = False

    for _ in range(config.epochs):
        if done:
            break
        order = shuffle_rng.permutation(len(train_prepped))
        for start in range(0, len(order), config.batch_size):
            index = order[start : start + config.batch_size]
            step += 1
            logits = batch_logits(params, config, train_prepped, index)
            if train_prepped.task == "token-labeling":
                loss = batch_loss(
                    logits,
                    train_prepped.token_labels[index],
                    train_prepped.word_weight[index],
                )
            else:
                loss = batch_loss(logits, train_prepped.seq_labels[index], None)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise NumericError(f"training diverged: non-finite loss at step {step}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            dev_metric = None
            if dev_prepped is not None and step % config.eval_every == 0:
                dev_metric = evaluate(params, config, dev_prepped)
                if dev_metric > best_metric:
                    best_metric, best_step = dev_metric, step
                    best_params = params.clone()
            history.append(HistoryRow(step=step, loss=loss_value, dev_metric=dev_metric))
            if max_steps is not None and step >= max_steps:
                done = True
                break

    if dev_prepped is not None and (not history or history[-1].dev_metric is None):
        dev_metric = evaluate(params, config, dev_prepped)
        if dev_metric > best_metric:
            best_metric, best_step = dev_metric, step
            best_params = params.clone()
        if history:
            history[-1] = replace(history[-1], dev_metric=dev_metric)
    if dev_prepped is None:
        best_params = params.clone()
        best_metric, best_step = np.nan, step

    return TrainResult(
        params=best_params,
        final_params=params,
        history=history,
        best_metric=float(best_metric),
        best_step=best_step,
    )


# ---------------------------------------------------------------------------
# Analysis


def gate_statistics(trace: AttentionTrace) -> np.ndarray:
    """Mean gate value per layer over every non-special, non-pad position."""
    if not trace.batches:
        raise DataError("empty attention trace")
    n_layers = trace.n_layers
    out = np.zeros(n_layers)
    for layer in range(n_layers):
        values = [
            batch.gates[layer][batch.kinds == KIND_WORD] for batch in trace.batches
        ]
        merged = np.concatenate(values)
        if merged.size == 0:
            raise DataError("trace contains no word positions")
        out[layer] = merged.mean()
    return out


def mixed_scores(batch: TraceBatch, example: int) -> np.ndarray:
    """Gate-weighted mixture g*S_loc + (1-g)*S_glb, shape (layers, heads, L, L)."""
    g = batch.gates[:, example][:, None, :, None]  # (layers, 1, L, 1)
    return g * batch.s_loc[:, example] + (1.0 - g) * batch.s_glb[:, example]


def attention_heatmap(trace: AttentionTrace, batch: int = 0, example: int = 0) -> np.ndarray:
    """Mixture scores averaged over all layers and heads, with [CLS]/[SEP]
    and padding rows and columns removed (no renormalization afterwards)."""
    if not trace.batches:
        raise DataError("empty attention trace")
    tb = trace.batches[batch]
    if tb.s_glb.shape[0] == 0:
        raise DataError("trace has no layers to average")
    mixed = mixed_scores(tb, example).mean(axis=(0, 1))
    keep = np.flatnonzero(tb.kinds[example] == KIND_WORD)
    return mixed[np.ix_(keep, keep)]


# ---------------------------------------------------------------------------
# Artifact I/O


CHECKPOINT_MANIFEST = "checkpoint.json"
CHECKPOINT_BLOB = "checkpoint.bin"


def save_checkpoint(out_dir, params: ModelParams, config: SLAConfig) -> None:
    os.makedirs(out_dir, exist_ok=True)
    named = params.named()
    manifest = {
        "format": "synatt-checkpoint-v1",
        "config": config.to_dict(),
        "parameters": [{"name": n, "shape": list(t.shape)} for n, t in named],
    }
    with open(os.path.join(out_dir, CHECKPOINT_MANIFEST), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(out_dir, CHECKPOINT_BLOB), "wb") as f:
        for _, t in named:
            f.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(out_dir) -> tuple[ModelParams, SLAConfig]:
    try:
        with open(os.path.join(out_dir, CHECKPOINT_MANIFEST), encoding="utf-8") as f:
            manifest = json.load(f)
        blob = open(os.path.join(out_dir, CHECKPOINT_BLOB), "rb").read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint in {out_dir}: {exc}") from exc
    config = SLAConfig.from_dict(manifest["config"])
    arrays = {}
    offset = 0
    for entry in manifest["parameters"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        chunk = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        arrays[entry["name"]] = Tensor(
            chunk.reshape(shape).astype(np.float64), requires_grad=True
        )
    if offset != len(blob):
        raise DataError("checkpoint blob size does not match the manifest")

    layers = []
    for i in range(config.n_layers):
        layers.append(
            LayerParams(**{name: arrays[f"layer{i}.{name}"] for name in LAYER_FIELDS})
        )
    params = ModelParams(
        token_embedding=arrays["token_embedding"],
        position_embedding=arrays["position_embedding"],
        segment_embedding=arrays["segment_embedding"],
        layers=layers,
        head_w=arrays["head.weight"],
        head_b=arrays["head.bias"],
    )
    return params, config


def write_metrics_csv(path, history) -> None:
    """CSV rows (step, loss, dev_metric); dev_metric empty between evals."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["step", "loss", "dev_metric"])
        for row in history:
            writer.writerow(
                [
                    row.step,
                    repr(row.loss),
                    "" if row.dev_metric is None else repr(row.dev_metric),
                ]
            )
