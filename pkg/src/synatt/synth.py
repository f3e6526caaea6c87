"""Seeded synthetic "syntactic neighborhood" task.

Each example is a random dependency tree whose words are filler tokens plus
one hidden marker word; a word's label is 1 iff the marker lies within a
given tree distance of it. The tree structure reaches the model only through
the attention masks, so local syntax-aware attention carries direct signal
while a purely global model sees an unordered bag of fillers.
"""

from __future__ import annotations

import heapq
import json
from collections import deque

import numpy as np

from .conllu import render_conllu
from .errors import DataError
from .model import make_rng
from .wordpiece import CLS, PAD, SEP, UNK, Vocabulary

MARKER = "mark"

# A few filler words tokenize into two pieces to keep the word/subword
# alignment path exercised during training.
SINGLE_PIECE_FILLERS = tuple(f"tok{i:02d}" for i in range(24))
MULTI_PIECE_FILLERS = ("glimmer", "sparkle", "crackle")
MULTI_PIECES = ("gli", "##mmer", "spar", "##kle", "crac")
FILLERS = SINGLE_PIECE_FILLERS + MULTI_PIECE_FILLERS


def synth_vocab_entries() -> list[str]:
    return [PAD, UNK, CLS, SEP, MARKER, *SINGLE_PIECE_FILLERS, *MULTI_PIECES]


def synth_vocabulary() -> Vocabulary:
    return Vocabulary.from_entries(synth_vocab_entries())


def random_tree_heads(n: int, rng: np.random.Generator) -> list[int]:
    """Uniform random labeled tree (decoded Pruefer sequence) oriented away
    from a uniformly chosen root; returns 1-based heads, 0 for the root."""
    if n < 1:
        raise DataError("tree needs at least one node")
    if n == 1:
        return [0]
    if n == 2:
        edges = [(1, 2)]
    else:
        seq = [int(v) for v in rng.integers(1, n + 1, size=n - 2)]
        degree = [1] * (n + 1)
        for v in seq:
            degree[v] += 1
        heap = [v for v in range(1, n + 1) if degree[v] == 1]
        heapq.heapify(heap)
        edges = []
        for v in seq:
            leaf = heapq.heappop(heap)
            edges.append((leaf, v))
            degree[leaf] -= 1
            degree[v] -= 1
            if degree[v] == 1:
                heapq.heappush(heap, v)
        edges.append((heapq.heappop(heap), heapq.heappop(heap)))

    adjacency = {v: [] for v in range(1, n + 1)}
    for a, b in edges:
        adjacency[a].append(b)
        adjacency[b].append(a)
    root = int(rng.integers(1, n + 1))
    heads = [0] * (n + 1)
    seen = {root}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if v not in seen:
                seen.add(v)
                heads[v] = u
                queue.append(v)
    return heads[1:]


def _distances_from(pos: int, heads: list[int]) -> np.ndarray:
    """Edge counts from 1-based position ``pos`` to every node."""
    n = len(heads)
    adjacency = {v: [] for v in range(1, n + 1)}
    for child, head in enumerate(heads, start=1):
        if head:
            adjacency[child].append(head)
            adjacency[head].append(child)
    dist = np.full(n + 1, -1, dtype=np.int64)
    dist[pos] = 0
    queue = deque([pos])
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist[1:]


def make_example(rng: np.random.Generator, index: int, radius: int,
                 n_min: int, n_max: int) -> dict:
    """One JSONL row: a rendered tree plus per-word neighborhood labels."""
    n = int(rng.integers(n_min, n_max + 1))
    heads = random_tree_heads(n, rng)
    words = [FILLERS[i] for i in rng.integers(0, len(FILLERS), size=n)]
    marker_pos = int(rng.integers(1, n + 1))
    words[marker_pos - 1] = MARKER
    dist = _distances_from(marker_pos, heads)
    labels = ((dist >= 0) & (dist <= radius)).astype(int).tolist()
    return {
        "conllu": render_conllu(words, heads, sentence_id=f"synth{index}"),
        "label": labels,
    }


def generate_dataset(
    seed: int,
    n_train: int = 2000,
    n_dev: int = 500,
    radius: int = 3,
    n_min: int = 10,
    n_max: int = 16,
) -> tuple[list[dict], list[dict]]:
    train_rng = make_rng(seed, "synth-train")
    dev_rng = make_rng(seed, "synth-dev")
    train = [make_example(train_rng, i, radius, n_min, n_max) for i in range(n_train)]
    dev = [make_example(dev_rng, i, radius, n_min, n_max) for i in range(n_dev)]
    return train, dev


def write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True))
            f.write("\n")


def write_vocab(path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for entry in synth_vocab_entries():
            f.write(entry)
            f.write("\n")
