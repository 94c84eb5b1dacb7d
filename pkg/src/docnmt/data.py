"""Corpus ingestion, BPE segmentation, vocabularies and doc-contiguous batching.

File formats
------------
corpus
    UTF-8, one pre-tokenized sentence per line, tokens separated by spaces.
boundaries
    one document per line: ``doc_id<TAB>start_line<TAB>sentence_count``.
    Spans must tile ``[0, line_count)`` in file order.
merges
    one space-separated symbol pair per line; a leading ``#version`` line is
    skipped.
vocabulary dump
    ``token<TAB>id`` per line, ids ascending.
"""

from __future__ import annotations

import hashlib
import json
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import CorpusError, EmptyDocumentError, MissingFileError, OversizeSentenceError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<s>", "</s>", "<unk>")
BPE_MARKER = "@@"


def _read_lines(path: str) -> list[str]:
    if not os.path.exists(path):
        raise MissingFileError(f"no such file: {path}")
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n").rstrip("\r") for line in fh]


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# corpus


@dataclass
class Document:
    doc_id: str
    src: list[list]
    tgt: list[list]

    def __len__(self) -> int:
        return len(self.src)

    @property
    def pairs(self) -> list[tuple[list, list]]:
        return list(zip(self.src, self.tgt))


@dataclass
class ParallelDocCorpus:
    """Ordered documents of aligned sentences.

    Sentences hold word strings straight after :func:`load_corpus` and
    integer ids after :func:`encode_corpus`.
    """

    documents: list[Document]

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def n_sentences(self) -> int:
        return sum(len(d) for d in self.documents)

    def sentence_ids(self) -> list[tuple[int, int]]:
        return [(k, j) for k, d in enumerate(self.documents) for j in range(len(d))]

    def get(self, doc_id: str) -> Document:
        for d in self.documents:
            if d.doc_id == doc_id:
                return d
        raise KeyError(doc_id)

    def to_json(self) -> str:
        docs = [{"doc_id": d.doc_id, "src": d.src, "tgt": d.tgt} for d in self.documents]
        return json.dumps({"documents": docs}, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ParallelDocCorpus":
        obj = json.loads(text)
        return cls([Document(d["doc_id"], d["src"], d["tgt"]) for d in obj["documents"]])


def read_boundaries(path: str, line_count: int) -> list[tuple[str, int, int]]:
    spans = []
    for lineno, line in enumerate(_read_lines(path), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise CorpusError(f"{path}:{lineno}: expected doc_id<TAB>start<TAB>count")
        try:
            start, count = int(parts[1]), int(parts[2])
        except ValueError:
            raise CorpusError(f"{path}:{lineno}: start/count must be integers") from None
        if count <= 0:
            raise EmptyDocumentError(f"{path}:{lineno}: document {parts[0]!r} has no sentences")
        spans.append((parts[0], start, count))
    expected = 0
    for doc_id, start, count in spans:
        if start > expected:
            raise CorpusError(f"boundary gap: lines [{expected}, {start}) belong to no document")
        if start < expected:
            raise CorpusError(f"boundary overlap: document {doc_id!r} starts at {start}, "
                              f"previous ends at {expected}")
        expected = start + count
    if expected != line_count:
        kind = "gap" if expected < line_count else "overrun"
        raise CorpusError(f"boundary {kind}: spans cover [0, {expected}) of {line_count} lines")
    return spans


def load_corpus(src_path: str, tgt_path: Optional[str], boundaries_path: str) -> ParallelDocCorpus:
    """Read a document-annotated parallel corpus.

    ``tgt_path`` may be None for source-only input (translation); targets are
    then empty lists.
    """
    src_lines = _read_lines(src_path)
    if tgt_path is not None:
        tgt_lines = _read_lines(tgt_path)
        if len(src_lines) != len(tgt_lines):
            raise CorpusError(f"line-count mismatch: {src_path} has {len(src_lines)} lines, "
                              f"{tgt_path} has {len(tgt_lines)}")
    else:
        tgt_lines = [""] * len(src_lines)
    spans = read_boundaries(boundaries_path, len(src_lines))
    docs = []
    for doc_id, start, count in spans:
        src = [src_lines[i].split() for i in range(start, start + count)]
        tgt = [tgt_lines[i].split() for i in range(start, start + count)]
        for i in range(start, start + count):
            if not src[i - start] or (tgt_path is not None and not tgt[i - start]):
                raise CorpusError(f"empty sentence at line {i + 1} (document {doc_id!r})")
        docs.append(Document(doc_id, src, tgt))
    return ParallelDocCorpus(docs)


def write_boundaries(path: str, corpus: ParallelDocCorpus) -> None:
    start = 0
    with open(path, "w", encoding="utf-8") as fh:
        for d in corpus:
            fh.write(f"{d.doc_id}\t{start}\t{len(d)}\n")
            start += len(d)


# ---------------------------------------------------------------------------
# BPE


class BpeModel:
    """Ordered merge list applied greedily, lowest rank first."""

    def __init__(self, merges: Sequence[tuple[str, str]] = ()):
        self.merges = [tuple(m) for m in merges]
        self.ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._cache: dict[str, list[str]] = {}

    @classmethod
    def load(cls, path: str) -> "BpeModel":
        merges = []
        for lineno, line in enumerate(_read_lines(path), 1):
            if lineno == 1 and line.startswith("#version"):
                continue
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise CorpusError(f"{path}:{lineno}: merge line needs exactly two symbols")
            merges.append((parts[0], parts[1]))
        return cls(merges)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("#version: 0.2\n")
            for a, b in self.merges:
                fh.write(f"{a} {b}\n")

    def segment_word(self, word: str) -> list[str]:
        hit = self._cache.get(word)
        if hit is not None:
            return hit
        symbols = list(word)
        while len(symbols) > 1:
            best = None
            for i in range(len(symbols) - 1):
                r = self.ranks.get((symbols[i], symbols[i + 1]))
                if r is not None and (best is None or r < best):
                    best = r
            if best is None:
                break
            left, right = self.merges[best]
            merged, i = [], 0
            while i < len(symbols):
                if i < len(symbols) - 1 and symbols[i] == left and symbols[i + 1] == right:
                    merged.append(left + right)
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            symbols = merged
        out = [s + BPE_MARKER for s in symbols[:-1]] + symbols[-1:]
        self._cache[word] = out
        return out

    def apply(self, sentence: Iterable[str]) -> list[str]:
        out: list[str] = []
        for word in sentence:
            out.extend(self.segment_word(word))
        return out


def apply_bpe(model: Optional[BpeModel], sentence: Sequence[str]) -> list[str]:
    if model is None:
        return list(sentence)
    return model.apply(sentence)


def remove_bpe(line: str) -> str:
    """Join subwords: inverse of :func:`apply_bpe` on a space-joined line."""
    text = line.replace(BPE_MARKER + " ", "")
    if text.endswith(BPE_MARKER):
        text = text[: -len(BPE_MARKER)]
    return text


# ---------------------------------------------------------------------------
# vocabulary


class Vocabulary:
    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[:4]) != RESERVED:
            raise CorpusError("vocabulary must start with the reserved tokens " + " ".join(RESERVED))
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise CorpusError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]], max_size: int = 32000) -> "Vocabulary":
        counts = Counter(tok for sent in sentences for tok in sent)
        for r in RESERVED:
            counts.pop(r, None)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        keep = max(0, max_size - len(RESERVED))
        return cls(list(RESERVED) + [t for t, _ in ranked[:keep]])

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.index.get(t, UNK) for t in tokens]

    def decode(self, ids: Sequence[int], strip: bool = True) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if strip and i == EOS:
                break
            if strip and i in (PAD, BOS):
                continue
            out.append(self.tokens[i])
        return out

    def dumps(self) -> str:
        return "".join(f"{t}\t{i}\n" for i, t in enumerate(self.tokens))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        rows = []
        for lineno, line in enumerate(_read_lines(path), 1):
            if not line:
                continue
            tok, _, idx = line.rpartition("\t")
            if int(idx) != len(rows):
                raise CorpusError(f"{path}:{lineno}: ids must be consecutive from 0")
            rows.append(tok)
        return cls(rows)

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()


def encode_corpus(corpus: ParallelDocCorpus, src_bpe: Optional[BpeModel], tgt_bpe: Optional[BpeModel],
                  src_vocab: Vocabulary, tgt_vocab: Optional[Vocabulary],
                  max_len: int = 256) -> ParallelDocCorpus:
    """Segment and map words to ids, rejecting sentences longer than ``max_len``."""
    docs = []
    line = 0
    for d in corpus:
        src, tgt = [], []
        for s_words, t_words in zip(d.src, d.tgt):
            line += 1
            s = src_vocab.encode(apply_bpe(src_bpe, s_words))
            t = tgt_vocab.encode(apply_bpe(tgt_bpe, t_words)) if tgt_vocab is not None else []
            for side, seq in (("source", s), ("target", t)):
                if len(seq) > max_len:
                    raise OversizeSentenceError(
                        f"line {line} (document {d.doc_id!r}): {side} has {len(seq)} subwords, "
                        f"max_len is {max_len}")
            src.append(s)
            tgt.append(t)
        docs.append(Document(d.doc_id, src, tgt))
    return ParallelDocCorpus(docs)


# ---------------------------------------------------------------------------
# batching


@dataclass
class Batch:
    doc_id: str
    doc_index: int
    sent_indices: list[int]
    src: np.ndarray            # [B, S_max] int, PAD-filled
    tgt_in: np.ndarray         # [B, T_max + 1]  BOS + target
    tgt_out: np.ndarray        # [B, T_max + 1]  target + EOS
    src_lengths: np.ndarray
    tgt_lengths: np.ndarray
    src_sentences: list[list[int]] = field(repr=False, default_factory=list)

    @property
    def size(self) -> int:
        return len(self.sent_indices)

    @property
    def src_pad_mask(self) -> np.ndarray:
        return self.src == PAD

    @property
    def tgt_pad_mask(self) -> np.ndarray:
        return self.tgt_out == PAD

    @property
    def n_src_tokens(self) -> int:
        return int(self.src_lengths.sum())

    @property
    def n_tgt_tokens(self) -> int:
        return int((self.tgt_lengths + 1).sum())


def pad_matrix(seqs: Sequence[Sequence[int]], prefix: Sequence[int] = (),
               suffix: Sequence[int] = ()) -> np.ndarray:
    rows = [list(prefix) + list(s) + list(suffix) for s in seqs]
    width = max(len(r) for r in rows)
    out = np.full((len(rows), width), PAD, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out


def make_batch(corpus: ParallelDocCorpus, doc_index: int, sent_indices: Sequence[int]) -> Batch:
    d = corpus.documents[doc_index]
    src = [d.src[j] for j in sent_indices]
    tgt = [d.tgt[j] for j in sent_indices]
    return Batch(
        doc_id=d.doc_id,
        doc_index=doc_index,
        sent_indices=list(sent_indices),
        src=pad_matrix(src),
        tgt_in=pad_matrix(tgt, prefix=[BOS]),
        tgt_out=pad_matrix(tgt, suffix=[EOS]),
        src_lengths=np.array([len(s) for s in src], dtype=np.int64),
        tgt_lengths=np.array([len(t) for t in tgt], dtype=np.int64),
        src_sentences=[list(s) for s in src],
    )


def pack_document(lengths: Sequence[int], token_budget: int, where: str = "") -> list[list[int]]:
    """Greedy in-order packing of sentence indices under a source-token budget."""
    groups: list[list[int]] = []
    cur: list[int] = []
    used = 0
    for j, n in enumerate(lengths):
        if n > token_budget:
            raise OversizeSentenceError(
                f"sentence {j}{where} has {n} tokens, token budget is {token_budget}")
        if cur and used + n > token_budget:
            groups.append(cur)
            cur, used = [], 0
        cur.append(j)
        used += n
    if cur:
        groups.append(cur)
    return groups


def make_batches(corpus: ParallelDocCorpus, token_budget: int,
                 shuffle_seed: Optional[int] = None, epoch: int = 0) -> list[Batch]:
    """All batches of one epoch.

    Every batch is a contiguous run of one document's sentences.  With a seed,
    the order of documents is permuted per epoch; batches inside a document
    keep document order.
    """
    order = list(range(len(corpus)))
    if shuffle_seed is not None:
        order = [int(i) for i in np.random.default_rng([shuffle_seed, epoch]).permutation(len(corpus))]
    batches = []
    for k in order:
        d = corpus.documents[k]
        groups = pack_document([len(s) for s in d.src], token_budget, f" of document {d.doc_id!r}")
        batches.extend(make_batch(corpus, k, g) for g in groups)
    return batches


def context_window(n_sentences: int, j: int, mode: str = "symmetric",
                   before: int = 2, after: int = 1) -> list[int]:
    """Sentence indices forming the local context of sentence ``j``.

    ``symmetric`` takes ``before`` previous sentences, the sentence itself and
    ``after`` following ones; ``past`` drops the following ones.  Windows are
    clipped at the document boundary.
    """
    if mode == "past":
        after = 0
    elif mode != "symmetric":
        raise ValueError(f"unknown window mode {mode!r}")
    return list(range(max(0, j - before), min(n_sentences, j + after + 1)))
