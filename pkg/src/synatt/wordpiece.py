"""WordPiece tokenization and the word-to-subword alignment consumed by masking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conllu import DependencySentence
from .errors import DataError

CLS = "[CLS]"
SEP = "[SEP]"
UNK = "[UNK]"
PAD = "[PAD]"

# Position kinds used by masks, traces and loss weighting.
KIND_SPECIAL = 0
KIND_WORD = 1
KIND_PAD = 2


@dataclass(frozen=True)
class Vocabulary:
    """Ordered subword inventory; line index in the vocab file is the token id."""

    entries: tuple[str, ...]
    index: dict[str, int] = field(repr=False)

    REQUIRED = (PAD, UNK, CLS, SEP)

    @classmethod
    def from_entries(cls, entries) -> "Vocabulary":
        entries = tuple(entries)
        index = {}
        for i, token in enumerate(entries):
            if token in index:
                raise DataError(f"duplicate vocabulary entry {token!r}")
            index[token] = i
        missing = [t for t in cls.REQUIRED if t not in index]
        if missing:
            raise DataError(f"vocabulary is missing special tokens: {missing}")
        return cls(entries=entries, index=index)

    @classmethod
    def from_file(cls, path) -> "Vocabulary":
        try:
            with open(path, encoding="utf-8") as f:
                lines = [line.rstrip("\n") for line in f]
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
        while lines and lines[-1] == "":
            lines.pop()
        return cls.from_entries(lines)

    def __len__(self) -> int:
        return len(self.entries)

    def id(self, token: str) -> int:
        return self.index[token]

    def ids(self, tokens) -> list[int]:
        return [self.index[t] for t in tokens]


def wordpiece_tokenize(word: str, vocab: Vocabulary) -> list[str]:
    """Greedy longest-match-first segmentation; unknown material yields [UNK].

    Continuation pieces are matched with the "##" prefix. The function is
    total: any word that cannot be segmented becomes a single [UNK].
    """
    if not word:
        raise DataError("cannot tokenize an empty word")
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        piece = None
        while start < end:
            candidate = word[start:end]
            if start > 0:
                candidate = "##" + candidate
            if candidate in vocab.index:
                piece = candidate
                break
            end -= 1
        if piece is None:
            return [UNK]
        pieces.append(piece)
        start = end
    return pieces


@dataclass(frozen=True)
class SubwordAlignment:
    """Layout of one or two tokenized sentences inside the model input.

    ``word_spans[s][w]`` is the half-open subword range of kept word ``w``
    (0-based) of sentence ``s``; truncation drops whole words from the right,
    so kept words are always a prefix of the sentence. ``n_words`` records the
    pre-truncation word count per sentence. ``sentence_of[p]`` is 0 or 1 for
    word-subword positions and -1 for specials and padding.
    """

    seq_len: int
    subwords: tuple[str, ...]
    cls_pos: int
    sep_pos: tuple[int, ...]
    word_spans: tuple[tuple[tuple[int, int], ...], ...]
    n_words: tuple[int, ...]
    sentence_of: tuple[int, ...]
    pad_from: int

    @property
    def n_sentences(self) -> int:
        return len(self.word_spans)

    def kinds(self) -> np.ndarray:
        """Per-position classification: KIND_SPECIAL / KIND_WORD / KIND_PAD."""
        out = np.full(self.seq_len, KIND_WORD, dtype=np.int64)
        out[self.cls_pos] = KIND_SPECIAL
        for p in self.sep_pos:
            out[p] = KIND_SPECIAL
        out[self.pad_from :] = KIND_PAD
        return out

    def first_subword_positions(self, sentence: int = 0) -> list[int]:
        return [span[0] for span in self.word_spans[sentence]]


def _tokenize_sentence(sentence: DependencySentence, vocab, lowercase):
    pieces = []
    for word in sentence.words:
        if lowercase:
            word = word.lower()
        pieces.append(wordpiece_tokenize(word, vocab))
    return pieces


def build_alignment(
    sentences,
    vocab: Vocabulary,
    max_len: int = 128,
    lowercase: bool = False,
) -> SubwordAlignment:
    """Tokenize one or two sentences into [CLS] s1 [SEP] (s2 [SEP]) layout.

    Words are dropped whole from the right until the sequence fits max_len;
    for pairs the second sentence is truncated first, and each sentence keeps
    at least one word. No padding is appended here (pad_from == seq_len);
    batching pads later via pad_alignment.
    """
    if isinstance(sentences, DependencySentence):
        sentences = [sentences]
    sentences = list(sentences)
    if not 1 <= len(sentences) <= 2:
        raise DataError(f"expected 1 or 2 sentences, got {len(sentences)}")
    if max_len < 3:
        raise DataError(f"max_len must be at least 3, got {max_len}")

    pieces = [_tokenize_sentence(s, vocab, lowercase) for s in sentences]
    n_specials = 1 + len(sentences)  # [CLS] plus one [SEP] per sentence
    budget = max_len - n_specials

    kept = [len(p) for p in pieces]
    total = sum(sum(len(w) for w in p[: kept[i]]) for i, p in enumerate(pieces))
    # Drop from the right: last sentence first, each sentence keeps >= 1 word.
    while total > budget:
        for s in reversed(range(len(pieces))):
            if kept[s] > 1:
                kept[s] -= 1
                total -= len(pieces[s][kept[s]])
                break
        else:
            raise DataError(
                f"cannot fit any content in max_len={max_len}: first word(s) "
                f"alone occupy {total} subwords"
            )

    subwords = [CLS]
    sep_pos = []
    word_spans = []
    sentence_of = [-1]
    for s, sentence_pieces in enumerate(pieces):
        spans = []
        for w in range(kept[s]):
            start = len(subwords)
            subwords.extend(sentence_pieces[w])
            spans.append((start, len(subwords)))
            sentence_of.extend([s] * (spans[-1][1] - start))
        word_spans.append(tuple(spans))
        sep_pos.append(len(subwords))
        subwords.append(SEP)
        sentence_of.append(-1)

    return SubwordAlignment(
        seq_len=len(subwords),
        subwords=tuple(subwords),
        cls_pos=0,
        sep_pos=tuple(sep_pos),
        word_spans=tuple(word_spans),
        n_words=tuple(len(s.words) for s in sentences),
        sentence_of=tuple(sentence_of),
        pad_from=len(subwords),
    )


def pad_alignment(alignment: SubwordAlignment, new_len: int) -> SubwordAlignment:
    """Extend an alignment with [PAD] positions up to new_len."""
    if new_len < alignment.seq_len:
        raise DataError(
            f"cannot pad to {new_len}: alignment already spans {alignment.seq_len}"
        )
    if new_len == alignment.seq_len:
        return alignment
    extra = new_len - alignment.seq_len
    return SubwordAlignment(
        seq_len=new_len,
        subwords=alignment.subwords + (PAD,) * extra,
        cls_pos=alignment.cls_pos,
        sep_pos=alignment.sep_pos,
        word_spans=alignment.word_spans,
        n_words=alignment.n_words,
        sentence_of=alignment.sentence_of + (-1,) * extra,
        pad_from=min(alignment.pad_from, alignment.seq_len),
    )
