"""Document embeddings: word average, sentence/document GRUs, attention pooling.

A *global* embedding summarises a whole document and is only ever produced by
averaging frozen word vectors, once, before training.  A *local* embedding
summarises a window of neighbouring sentences (the mini-batch during training)
with any of the three methods; several methods are mixed by a learned
convex combination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .data import PAD, ParallelDocCorpus, pad_matrix
from .errors import CorpusError, EmptyDocumentError, UnsupportedMethodError
from .tensor import Tensor
from .transformer import (ModelConfig, _attn_params, _ffn_params, feed_forward,
                          multi_head_attention, xavier_uniform)

GRU_GATES = ("z", "r", "n")


@dataclass
class DocEmbedding:
    vector: np.ndarray
    scope: str                # "global" | "local"
    method: str               # "avg" | "rnn" | "attn" | "ensemble"
    doc_id: Optional[str] = None
    span: Optional[tuple[int, int]] = None


# ---------------------------------------------------------------------------
# parameters


def _gru_params(rng: np.random.Generator, prefix: str, d_in: int, d_h: int) -> dict[str, np.ndarray]:
    p = {}
    for g in GRU_GATES:
        p[f"{prefix}.w{g}"] = xavier_uniform(rng, d_in, d_h)
        p[f"{prefix}.u{g}"] = xavier_uniform(rng, d_h, d_h)
        p[f"{prefix}.b{g}"] = np.zeros(d_h)
    return p


def init_doc_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Parameters needed by the configured local methods (none for avg)."""
    d = cfg.d_model
    p: dict[str, np.ndarray] = {}
    methods = cfg.local_methods if cfg.use_local else ()
    if "rnn" in methods:
        p.update(_gru_params(rng, "doc.sent_rnn", d, d))
        p.update(_gru_params(rng, "doc.doc_rnn", d, d))
    if "attn" in methods:
        for i in range(cfg.attn_pool_layers):
            p.update(_attn_params(rng, f"doc.attn.{i}.self", d))
            p.update(_ffn_params(rng, f"doc.attn.{i}.ffn", d, cfg.d_ff))
        p["doc.attn.score_w"] = rng.normal(0.0, d ** -0.5, size=d)
    if len(methods) > 1:
        p["doc.beta"] = np.zeros(len(methods))
    return p


# ---------------------------------------------------------------------------
# word embedding average


def doc_embed_avg(word_vectors: Tensor) -> Tensor:
    """Mean of the rows of ``word_vectors`` [N, d]."""
    if word_vectors.ndim != 2 or word_vectors.shape[0] == 0:
        raise EmptyDocumentError("cannot average an empty document")
    return T.mean(word_vectors, axis=0)


# ---------------------------------------------------------------------------
# GRU recurrences


def gru_cell(params: dict[str, Tensor], prefix: str, x_proj: dict[str, Tensor], h: Tensor) -> Tensor:
    """One GRU step given precomputed input projections ``x W + b`` per gate.

    z = sigmoid(xWz + hUz + bz), r = sigmoid(xWr + hUr + br),
    n = tanh(xWn + (r*h)Un + bn), h' = (1 - z)*n + z*h.
    """
    z = T.sigmoid(T.add(x_proj["z"], T.linear(h, params[prefix + ".uz"])))
    r = T.sigmoid(T.add(x_proj["r"], T.linear(h, params[prefix + ".ur"])))
    n = T.tanh(T.add(x_proj["n"], T.linear(T.mul(r, h), params[prefix + ".un"])))
    return T.add(n, T.mul(z, T.sub(h, n)))


def run_gru(params: dict[str, Tensor], prefix: str, x: Tensor,
            lengths: Optional[Sequence[int]] = None) -> Tensor:
    """Final hidden states [B, d] of a GRU over ``x`` [B, S, d_in] from a zero state.

    Rows shorter than S (per ``lengths``) keep their state once exhausted, so
    each row's output is the state after its own last token.
    """
    B, S, _ = x.shape
    d_h = params[prefix + ".uz"].shape[0]
    lengths = np.full(B, S) if lengths is None else np.asarray(lengths)
    if (lengths <= 0).any():
        raise CorpusError("GRU over an empty sequence")
    proj = {g: T.linear(x, params[f"{prefix}.w{g}"], params[f"{prefix}.b{g}"]) for g in GRU_GATES}
    h = Tensor(np.zeros((B, d_h)))
    for t in range(S):
        step = {g: T.index(proj[g], (slice(None), t, slice(None))) for g in GRU_GATES}
        h_new = gru_cell(params, prefix, step, h)
        alive = t < lengths
        if alive.all():
            h = h_new
        else:
            h = T.where(np.broadcast_to(alive[:, None], (B, d_h)), h_new, h)
    return h


def sentence_rnn(params: dict[str, Tensor], sentence: Tensor) -> Tensor:
    """Sentence summary: last GRU state over word vectors [n, d]."""
    if sentence.shape[0] == 0:
        raise CorpusError("empty sentence")
    n, d = sentence.shape
    return T.reshape(run_gru(params, "doc.sent_rnn", T.reshape(sentence, (1, n, d))), (-1,))


def document_rnn(params: dict[str, Tensor], sentence_embeddings: Tensor) -> Tensor:
    """Document summary: last GRU state over sentence summaries [m, d] in order."""
    if sentence_embeddings.shape[0] == 0:
        raise EmptyDocumentError("document RNN over zero sentences")
    m, d = sentence_embeddings.shape
    h = run_gru(params, "doc.doc_rnn", T.reshape(sentence_embeddings, (1, m, d)))
    return T.reshape(h, (-1,))


# ---------------------------------------------------------------------------
# self-attention pooling


def sentence_self_attn_batch(params: dict[str, Tensor], x: Tensor, pad_mask: np.ndarray,
                             cfg: ModelConfig, records: Optional[list] = None) -> Tensor:
    """Per-sentence vectors [B, d] from padded word vectors [B, S, d].

    Each layer is multi-head self-attention followed by the position-wise
    FFN; the last layer's word representations are mean-pooled over the
    non-pad positions.
    """
    B, S, d = x.shape
    pad_mask = np.asarray(pad_mask, dtype=bool)
    attn_mask = np.broadcast_to(pad_mask[:, None, :], (B, S, S))
    for i in range(cfg.attn_pool_layers):
        rec = {} if records is not None else None
        x = multi_head_attention(params, f"doc.attn.{i}.self", x, x, attn_mask, cfg.n_heads, rec)
        if records is not None:
            records.append(rec)
        x = feed_forward(params, f"doc.attn.{i}.ffn", x)
    live = (~pad_mask).astype(np.float64)
    counts = live.sum(axis=1)
    if (counts == 0).any():
        raise CorpusError("self-attention pooling over an empty sentence")
    pooled = T.sum(T.mul(x, np.broadcast_to(live[:, :, None], (B, S, d)).copy()), axis=1)
    return T.mul(pooled, np.broadcast_to((1.0 / counts)[:, None], (B, d)).copy())


def sentence_self_attn(params: dict[str, Tensor], sentence: Tensor, cfg: ModelConfig) -> Tensor:
    n, d = sentence.shape
    if n == 0:
        raise CorpusError("empty sentence")
    out = sentence_self_attn_batch(params, T.reshape(sentence, (1, n, d)), np.zeros((1, n), bool), cfg)
    return T.reshape(out, (-1,))


def attention_weights(params: dict[str, Tensor], sentence_embeddings: Tensor) -> Tensor:
    """alpha_j = softmax_j(w . Sent_j / sqrt(d))."""
    m, d = sentence_embeddings.shape
    w = T.reshape(params["doc.attn.score_w"], (d, 1))
    scores = T.reshape(T.linear(sentence_embeddings, w), (m,))
    return T.softmax(T.scale(scores, 1.0 / math.sqrt(d)), axis=0)


def doc_embed_attn(params: dict[str, Tensor], sentence_embeddings: Tensor,
                   record: Optional[dict] = None) -> Tensor:
    """Weighted sum of sentence embeddings [m, d] under learned weights alpha."""
    m, d = sentence_embeddings.shape
    if m == 0:
        raise EmptyDocumentError("attention pooling over zero sentences")
    alpha = attention_weights(params, sentence_embeddings)
    if record is not None:
        record["alpha"] = alpha.data
    return T.reshape(T.matmul(T.reshape(alpha, (1, m)), sentence_embeddings), (d,))


# ---------------------------------------------------------------------------
# ensemble


def ensemble_weights(beta_logits: Tensor, normalize: bool = True) -> Tensor:
    return T.softmax(beta_logits, axis=0) if normalize else beta_logits


def ensemble(beta_logits: Optional[Tensor], docs: Sequence[Tensor], normalize: bool = True) -> Tensor:
    """sum_i beta_i Doc_i with beta = softmax(beta_logits)."""
    docs = list(docs)
    if len(docs) == 1:
        return docs[0]
    d = docs[0].shape[0]
    if beta_logits is None or beta_logits.shape != (len(docs),):
        raise UnsupportedMethodError(f"ensemble of {len(docs)} embeddings needs {len(docs)} weights")
    beta = ensemble_weights(beta_logits, normalize)
    stacked = T.concat([T.reshape(x, (1, d)) for x in docs], axis=0)
    return T.reshape(T.matmul(T.reshape(beta, (1, len(docs))), stacked), (d,))


# ---------------------------------------------------------------------------
# local and global embeddings


def local_doc_embed(params: dict[str, Tensor], cfg: ModelConfig,
                    sentences: Sequence[Sequence[int]], embed_table: Tensor,
                    methods: Optional[Sequence[str]] = None) -> Tensor:
    """Local document embedding [d] of a window of source sentences (id lists)."""
    methods = tuple(cfg.local_methods if methods is None else methods)
    if not sentences or any(len(s) == 0 for s in sentences):
        raise EmptyDocumentError("local context window is empty")
    outs = []
    padded = None
    for method in methods:
        if method == "avg":
            flat = np.concatenate([np.asarray(s, dtype=np.int64) for s in sentences])
            outs.append(doc_embed_avg(T.embedding_lookup(embed_table, flat)))
            continue
        if padded is None:
            padded = pad_matrix(sentences)
            lengths = np.array([len(s) for s in sentences])
            words = T.embedding_lookup(embed_table, padded)
        if method == "rnn":
            sents = run_gru(params, "doc.sent_rnn", words, lengths)
            outs.append(document_rnn(params, sents))
        elif method == "attn":
            sents = sentence_self_attn_batch(params, words, padded == PAD, cfg)
            outs.append(doc_embed_attn(params, sents))
        else:
            raise UnsupportedMethodError(f"unknown local method {method!r}")
    return ensemble(params.get("doc.beta"), outs, cfg.normalize_ensemble)


def build_global_cache(corpus: ParallelDocCorpus, embed_table: np.ndarray,
                       method: str = "avg") -> dict[str, np.ndarray]:
    """Average-of-word-vectors embedding for every document, keyed by doc_id."""
    if method != "avg":
        raise UnsupportedMethodError(
            f"global document embeddings are computed by 'avg' only, got {method!r}")
    table = Tensor(embed_table)
    cache = {}
    for d in corpus:
        ids = np.concatenate([np.asarray(s, dtype=np.int64) for s in d.src])
        cache[d.doc_id] = doc_embed_avg(T.embedding_lookup(table, ids)).data.copy()
    return cache


def global_doc_embed(embed_table: np.ndarray, sentences: Sequence[Sequence[int]]) -> np.ndarray:
    ids = np.concatenate([np.asarray(s, dtype=np.int64) for s in sentences])
    return doc_embed_avg(T.embedding_lookup(Tensor(embed_table), ids)).data.copy()


def save_cache(path: str, cache: dict[str, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id, vec in cache.items():
            fh.write(format_cache_line(doc_id, vec))


def format_cache_line(doc_id: str, vec: np.ndarray) -> str:
    return doc_id + "\t" + " ".join(repr(float(v)) for v in vec) + "\n"


def load_cache(path: str) -> dict[str, np.ndarray]:
    from .data import _read_lines

    cache = {}
    for lineno, line in enumerate(_read_lines(path), 1):
        if not line:
            continue
        doc_id, sep, rest = line.partition("\t")
        if not sep:
            raise CorpusError(f"{path}:{lineno}: expected doc_id<TAB>floats")
        cache[doc_id] = np.array([float(v) for v in rest.split()])
    return cache
