"""CoNLL-U ingestion and tree distances over dependency graphs.

Word positions follow the file format and are 1-based. Distance matrices are
plain numpy arrays indexed 0-based: ``d[i, j]`` is the distance between the
words at positions ``i + 1`` and ``j + 1``.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConlluParseError, DataError

# Ordered above every finite path length so that threshold comparisons
# (d <= m) exclude cross-component pairs without special casing.
UNREACHABLE = 2**31


@dataclass(frozen=True)
class DependencySentence:
    """Surface forms plus the undirected edges derived from the HEAD column."""

    words: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]  # sorted (a, b) pairs, 1-based, a < b
    sentence_id: str = ""

    def __post_init__(self):
        n = len(self.words)
        seen = set()
        for a, b in self.edges:
            if a == b:
                raise DataError(f"self-loop edge ({a},{b}) in {self.sentence_id!r}")
            if not (1 <= a <= n and 1 <= b <= n):
                raise DataError(f"edge ({a},{b}) out of range 1..{n}")
            if a > b:
                raise DataError(f"edge ({a},{b}) not normalized")
            if (a, b) in seen:
                raise DataError(f"duplicate edge ({a},{b})")
            seen.add((a, b))

    @property
    def n(self) -> int:
        return len(self.words)


@dataclass(frozen=True)
class DistanceMatrix:
    """All-pairs shortest path lengths; UNREACHABLE marks cross-component pairs."""

    n: int
    d: np.ndarray = field(repr=False)  # (n, n) int64


def _finish_sentence(words, head_entries, sentence_id):
    n = len(words)
    edge_set = set()
    for tid, (head, line_no) in enumerate(head_entries, start=1):
        if head < 0 or head > n:
            raise ConlluParseError(f"HEAD {head} out of range 0..{n}", line_no)
        if head == 0:
            continue
        if head == tid:
            warnings.warn(
                f"sentence {sentence_id!r}: token {tid} is its own head; edge dropped"
            )
            continue
        edge_set.add((min(tid, head), max(tid, head)))
    edges = tuple(sorted(edge_set))
    sent = DependencySentence(words=tuple(words), edges=edges, sentence_id=sentence_id)
    if n > 1 and not _is_tree(n, edges):
        warnings.warn(
            f"sentence {sentence_id!r}: dependency graph is not a single tree "
            f"({len(edges)} edges over {n} tokens); treating it as a forest"
        )
    return sent


def _is_tree(n, edges):
    if len(edges) != n - 1:
        return False
    adj = _adjacency(n, edges)
    seen = {1}
    queue = deque([1])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == n


def _adjacency(n, edges):
    adj = {i: [] for i in range(1, n + 1)}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    return adj


def parse_conllu(source) -> list[DependencySentence]:
    """Parse CoNLL-U text (a string or a readable file object) into sentences.

    Token lines must carry 10 tab-separated columns. Multiword-token ranges
    ("3-4") and empty nodes ("5.1") are skipped. Comment lines start with '#';
    a blank line ends a sentence. FORM becomes the word, HEAD the edge set
    (HEAD=0 contributes no edge). Malformed IDs or HEADs raise
    ConlluParseError naming the offending line.
    """
    text = source.read() if hasattr(source, "read") else source
    sentences: list[DependencySentence] = []
    words: list[str] = []
    heads: list[tuple[int, int]] = []
    sent_id: str | None = None
    expected_id = 1

    def flush():
        nonlocal words, heads, sent_id, expected_id
        if words:
            sid = sent_id if sent_id is not None else f"s{len(sentences)}"
            sentences.append(_finish_sentence(words, heads, sid))
        words, heads, sent_id, expected_id = [], [], None, 1

    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            if line[1:].split("=", 1)[0].strip() == "sent_id" and "=" in line:
                sent_id = line.split("=", 1)[1].strip()
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluParseError(
                f"expected 10 tab-separated columns, found {len(cols)}", line_no
            )
        tid = cols[0]
        if "-" in tid or "." in tid:
            continue
        if not tid.isdigit():
            raise ConlluParseError(f"non-integer token ID {tid!r}", line_no)
        if int(tid) != expected_id:
            raise ConlluParseError(
                f"non-monotone token ID {tid} (expected {expected_id})", line_no
            )
        expected_id += 1
        try:
            head = int(cols[6])
        except ValueError:
            raise ConlluParseError(f"non-integer HEAD {cols[6]!r}", line_no) from None
        words.append(cols[1])
        heads.append((head, line_no))
    flush()
    return sentences


def read_conllu_file(path) -> list[DependencySentence]:
    try:
        with open(path, encoding="utf-8") as f:
            return parse_conllu(f)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def render_conllu(words, heads, sentence_id="s0") -> str:
    """Minimal writer used by the synthetic generator and round-trip tests.

    ``heads`` are 1-based head positions, 0 for the root.
    """
    lines = [f"# sent_id = {sentence_id}"]
    for i, (form, head) in enumerate(zip(words, heads), start=1):
        lines.append("\t".join([str(i), form, "_", "_", "_", "_", str(head), "dep", "_", "_"]))
    lines.append("")
    return "\n".join(lines)


def all_pairs_distance(sentence: DependencySentence) -> DistanceMatrix:
    """Shortest-path length between every pair of words (breadth-first search).

    Pairs in different components of a forest get UNREACHABLE.
    """
    n = sentence.n
    adj = _adjacency(n, sentence.edges)
    d = np.full((n, n), UNREACHABLE, dtype=np.int64)
    for start in range(1, n + 1):
        d[start - 1, start - 1] = 0
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if d[start - 1, v - 1] == UNREACHABLE:
                    d[start - 1, v - 1] = d[start - 1, u - 1] + 1
                    queue.append(v)
    return DistanceMatrix(n=n, d=d)
