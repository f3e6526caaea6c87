"""Additive attention masks: syntax-aware, window baseline, and sentence-pair.

All masks share the same conventions. Entry [q][k] gates whether the query at
position q may attend to the key at position k: 0 allows, MASK_NEG forbids.
[CLS] and [SEP] rows and columns stay open, padding columns are always
masked, padding rows are left open (their outputs are ignored downstream),
and a word-level decision is replicated across the cross product of the two
words' subword spans so that every subword of a word shares one masking value.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .conllu import UNREACHABLE, DistanceMatrix
from .errors import DataError
from .wordpiece import SubwordAlignment

# Large negative but finite: after softmax the masked probability underflows
# to exactly zero, and an accidentally all-masked row still cannot produce
# NaN the way a literal -inf would.
MASK_NEG = -1e9


@dataclass(frozen=True)
class AdditiveMask:
    """L x L matrix over {0, MASK_NEG} added to attention logits."""

    L: int
    m_vals: np.ndarray = field(repr=False)  # (L, L) float64

    def allow_bits(self) -> np.ndarray:
        """1 where attention is allowed, 0 where masked."""
        return (self.m_vals == 0.0).astype(np.int64)


@dataclass(frozen=True)
class NeighborDistance:
    """Minimum tree distance from a token's linear neighborhood to each token.

    D[i, j] = min(dis(k, j) for k in {i-1, i, i+1} clipped to the sentence),
    0-based. Not symmetric in general.
    """

    n: int
    D: np.ndarray = field(repr=False)  # (n, n) int64


def neighbor_min_distance(dist: DistanceMatrix) -> NeighborDistance:
    """Soften tree distances by taking the minimum over {i-1, i, i+1}."""
    d = dist.d
    n = dist.n
    stacked = [d]
    if n > 1:
        up = np.full_like(d, UNREACHABLE)
        up[1:] = d[:-1]  # row i sees row i-1
        down = np.full_like(d, UNREACHABLE)
        down[:-1] = d[1:]  # row i sees row i+1
        stacked += [up, down]
    return NeighborDistance(n=n, D=np.minimum.reduce(stacked))


def _word_level_to_mask(allow_per_sentence, alignment):
    """Replicate word-level allow matrices over subword spans.

    allow_per_sentence[s] is a boolean (n_kept_s, n_kept_s) matrix for the
    kept words of sentence s. Cross-sentence word pairs stay fully open;
    special-token and padding rules are applied unconditionally.
    """
    L = alignment.seq_len
    m = np.zeros((L, L), dtype=np.float64)
    for s, allow in enumerate(allow_per_sentence):
        spans = alignment.word_spans[s]
        for i, (qs, qe) in enumerate(spans):
            for j, (ks, ke) in enumerate(spans):
                if not allow[i, j]:
                    m[qs:qe, ks:ke] = MASK_NEG
    m[:, alignment.pad_from :] = MASK_NEG
    return AdditiveMask(L=L, m_vals=m)


def _check_words(D_n: int, alignment: SubwordAlignment, sentence: int):
    if D_n != alignment.n_words[sentence]:
        raise DataError(
            f"distance matrix covers {D_n} words but alignment sentence "
            f"{sentence} has {alignment.n_words[sentence]}"
        )


def _threshold(D: NeighborDistance, m: int, n_kept: int, transpose_d: bool):
    block = D.D[:n_kept, :n_kept]
    if transpose_d:
        block = block.T
    return block <= m


def build_sla_mask(
    D: NeighborDistance,
    m: int,
    alignment: SubwordAlignment,
    transpose_d: bool = False,
) -> AdditiveMask:
    """Syntax-aware local mask: word pair (i, j) is open iff D[i, j] <= m.

    The distance matrix must cover the full (pre-truncation) sentence; only
    the kept prefix of words participates in the mask. ``transpose_d`` is a
    debug switch that thresholds D[j, i] instead, for comparing the two
    possible query/key readings of the distance index pair.
    """
    if m < 0:
        raise DataError(f"threshold m must be non-negative, got {m}")
    if alignment.n_sentences != 1:
        raise DataError("build_sla_mask expects a single-sentence alignment")
    _check_words(D.n, alignment, 0)
    allow = _threshold(D, m, len(alignment.word_spans[0]), transpose_d)
    return _word_level_to_mask([allow], alignment)


def build_window_mask(alignment: SubwordAlignment, k: int) -> AdditiveMask:
    """Window baseline: word pair (i, j) is open iff |i - j| <= k.

    For a two-sentence alignment the window applies within each sentence and
    cross-sentence pairs stay open, mirroring the pair policy of the
    syntax-aware mask.
    """
    if k < 0:
        raise DataError(f"window radius k must be non-negative, got {k}")
    allows = []
    for spans in alignment.word_spans:
        idx = np.arange(len(spans))
        allows.append(np.abs(idx[:, None] - idx[None, :]) <= k)
    return _word_level_to_mask(allows, alignment)


def build_pair_mask(
    D1: NeighborDistance,
    D2: NeighborDistance,
    m: int,
    alignment: SubwordAlignment,
    transpose_d: bool = False,
) -> AdditiveMask:
    """Sentence-pair mask: each sentence masked by its own distances, every
    cross-sentence word pair open."""
    if alignment.n_sentences != 2:
        raise DataError("build_pair_mask expects a two-sentence alignment")
    if m < 0:
        raise DataError(f"threshold m must be non-negative, got {m}")
    _check_words(D1.n, alignment, 0)
    _check_words(D2.n, alignment, 1)
    allows = [
        _threshold(D, m, len(alignment.word_spans[s]), transpose_d)
        for s, D in enumerate((D1, D2))
    ]
    return _word_level_to_mask(allows, alignment)


def build_padding_mask(alignment: SubwordAlignment) -> AdditiveMask:
    """Padding-only mask used for the global attention branch."""
    L = alignment.seq_len
    m = np.zeros((L, L), dtype=np.float64)
    m[:, alignment.pad_from :] = MASK_NEG
    return AdditiveMask(L=L, m_vals=m)


def write_mask_csv(mask: AdditiveMask, path) -> None:
    """CSV of 0/1 allow bits, one row per query position."""
    bits = mask.allow_bits()
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        for row in bits:
            writer.writerow(row.tolist())


def read_mask_csv(path) -> AdditiveMask:
    with open(path, encoding="utf-8", newline="") as f:
        rows = [[int(cell) for cell in row] for row in csv.reader(f) if row]
    bits = np.asarray(rows, dtype=np.int64)
    if bits.ndim != 2 or bits.shape[0] != bits.shape[1]:
        raise DataError(f"mask CSV at {path} is not square")
    m = np.where(bits == 1, 0.0, MASK_NEG)
    return AdditiveMask(L=bits.shape[0], m_vals=m)


def write_mask_sidecar(path, L: int, mode: str, sentence_id: str, **extra) -> None:
    """JSON sidecar describing a mask CSV: {L, mode, sentence_id, m or k}."""
    payload = {"L": L, "mode": mode, "sentence_id": sentence_id}
    payload.update(extra)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
