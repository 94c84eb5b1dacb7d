"""Beam-search translation with document context, corpus BLEU, paired bootstrap."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import BOS, EOS, ParallelDocCorpus, Vocabulary, context_window, pack_document, remove_bpe
from .docembed import global_doc_embed
from .errors import ContractError, CorpusError, MissingContextError
from .model import NmtModel
from .tensor import Tensor


# ---------------------------------------------------------------------------
# beam search


@dataclass
class Hypothesis:
    tokens: list[int]          # generated ids, EOS included when finished
    logprob: float

    @property
    def score(self) -> float:
        return self.logprob / max(len(self.tokens), 1)

    @property
    def finished(self) -> bool:
        return bool(self.tokens) and self.tokens[-1] == EOS


def _log_softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def beam_search(model: NmtModel, encoder_out: Tensor, src_pad_mask: np.ndarray,
                beam_width: int = 4, max_len: int = 50) -> Hypothesis:
    """Best hypothesis by length-normalised log-probability (log p / length).

    Shrinking beam: each step keeps the best ``beam_width - finished``
    continuations of the live hypotheses by log-prob; those ending in EOS
    are finished and give up their slot for good.  Search ends when every
    slot is finished or at ``max_len``, where the hypotheses still alive are
    finished as they stand.  Width 1 is greedy decoding.
    """
    if beam_width < 1:
        raise ContractError("beam width must be >= 1")
    live = [Hypothesis([], 0.0)]
    done: list[Hypothesis] = []
    enc_data, L, d = encoder_out.data, encoder_out.shape[1], encoder_out.shape[2]
    for _ in range(max_len):
        k = len(live)
        prefix = np.array([[BOS] + h.tokens for h in live], dtype=np.int64)
        enc = Tensor(np.broadcast_to(enc_data, (k, L, d)))
        mask = np.broadcast_to(src_pad_mask, (k, L))
        logits = model.logits(prefix, enc, mask).data[:, -1, :]
        cand = np.array([h.logprob for h in live])[:, None] + _log_softmax(logits)
        flat = cand.reshape(-1)
        V = cand.shape[1]
        nxt = []
        for idx in np.argsort(-flat, kind="stable")[:beam_width - len(done)]:
            i, tok = divmod(int(idx), V)
            h = Hypothesis(live[i].tokens + [tok], float(flat[idx]))
            (done if tok == EOS else nxt).append(h)
        live = nxt
        if not live:
            break
    else:
        done = done + live
    return max(done, key=lambda h: (h.score, -len(h.tokens)))


def greedy_decode(model: NmtModel, encoder_out: Tensor, src_pad_mask: np.ndarray,
                  max_len: int = 50) -> Hypothesis:
    tokens: list[int] = []
    logprob = 0.0
    for _ in range(max_len):
        prefix = np.array([[BOS] + tokens], dtype=np.int64)
        lp = _log_softmax(model.logits(prefix, encoder_out, src_pad_mask).data[0, -1])
        tok = int(np.argmax(lp))
        tokens.append(tok)
        logprob += float(lp[tok])
        if tok == EOS:
            break
    return Hypothesis(tokens, logprob)


# ---------------------------------------------------------------------------
# documents


def window_for(n_sentences: int, j: int, model: NmtModel, sentences: Sequence[Sequence[int]],
               token_budget: Optional[int] = None) -> list[int]:
    cfg = model.cfg
    if cfg.window_mode == "batch":
        if token_budget is None:
            raise ContractError("window_mode 'batch' needs the training token budget")
        for group in pack_document([len(s) for s in sentences], token_budget):
            if j in group:
                return group
    return context_window(n_sentences, j, cfg.window_mode, cfg.window_before, cfg.window_after)


def translate_document(model: NmtModel, sentences: Sequence[Sequence[int]], doc_id: Optional[str] = None,
                       global_cache: Optional[dict[str, np.ndarray]] = None, beam_width: int = 4,
                       compute_missing: bool = True, token_budget: Optional[int] = None
                       ) -> list[list[int]]:
    """Translate every source sentence (id lists) of one document, in order.

    The global embedding comes from ``global_cache[doc_id]`` or, failing that,
    from averaging the document's own words under the model's frozen source
    embeddings.  Each sentence's local embedding is computed over its context
    window, clipped at the document boundary.
    """
    if not sentences:
        raise CorpusError("cannot translate an empty document")
    cfg = model.cfg
    doc_global = None
    if cfg.use_global:
        if global_cache is not None and doc_id in global_cache:
            doc_global = global_cache[doc_id]
        elif compute_missing:
            doc_global = global_doc_embed(model.params["src_embed"].data, sentences)
        else:
            raise MissingContextError(f"document {doc_id!r} is not in the global cache")
    out = []
    n = len(sentences)
    for j, sent in enumerate(sentences):
        doc_local = None
        if cfg.use_local:
            win = window_for(n, j, model, sentences, token_budget)
            doc_local = model.local_embedding([sentences[i] for i in win])
        enc, mask = model.encode_sentences([sent], doc_global, doc_local)
        hyp = beam_search(model, enc, mask, beam_width, max_len=min(2 * len(sent) + 10, cfg.max_len))
        out.append([t for t in hyp.tokens if t != EOS])
    return out


def translate_corpus(model: NmtModel, corpus: ParallelDocCorpus, tgt_vocab: Vocabulary,
                     global_cache: Optional[dict[str, np.ndarray]] = None, beam_width: int = 4,
                     token_budget: Optional[int] = None) -> list[str]:
    """Detokenized-BPE output lines in document order for an id-encoded corpus."""
    lines = []
    for d in corpus:
        for ids in translate_document(model, d.src, d.doc_id, global_cache, beam_width,
                                      token_budget=token_budget):
            lines.append(remove_bpe(" ".join(tgt_vocab.decode(ids))))
    return lines


# ---------------------------------------------------------------------------
# BLEU


@dataclass
class BleuReport:
    bleu: float
    precisions: list[float]    # percentages p1..p4
    bp: float
    ratio: float
    hyp_len: int
    ref_len: int

    def __str__(self) -> str:
        p = "/".join(f"{x:.1f}" for x in self.precisions)
        return (f"BLEU = {self.bleu:.2f}, {p} (BP={self.bp:.3f}, ratio={self.ratio:.3f}, "
                f"hyp_len={self.hyp_len}, ref_len={self.ref_len})")


def _ngrams(tokens: Sequence[str], n: int) -> dict[tuple, int]:
    counts: dict[tuple, int] = {}
    for i in range(len(tokens) - n + 1):
        g = tuple(tokens[i: i + n])
        counts[g] = counts.get(g, 0) + 1
    return counts


def sentence_stats(hyp: str, ref: str, max_n: int = 4) -> np.ndarray:
    """[correct_1..n, total_1..n, hyp_len, ref_len] for one sentence pair."""
    h, r = hyp.split(), ref.split()
    correct, total = [], []
    for n in range(1, max_n + 1):
        hc, rc = _ngrams(h, n), _ngrams(r, n)
        correct.append(sum(min(c, rc.get(g, 0)) for g, c in hc.items()))
        total.append(max(0, len(h) - n + 1))
    return np.array(correct + total + [len(h), len(r)], dtype=np.float64)


def corpus_stats(hyps: Sequence[str], refs: Sequence[str]) -> np.ndarray:
    if len(hyps) != len(refs):
        raise CorpusError(f"{len(hyps)} hypotheses but {len(refs)} references")
    if not hyps:
        return np.zeros((0, 10))
    return np.stack([sentence_stats(h, r) for h, r in zip(hyps, refs)])


def bleu_from_stats(stats: np.ndarray, smooth: bool = False) -> np.ndarray:
    """Corpus BLEU (0..100) from summed statistics; vectorised over leading axes."""
    correct, total = stats[..., 0:4], stats[..., 4:8]
    hyp_len, ref_len = stats[..., 8], stats[..., 9]
    if smooth:
        add = np.array([0.0, 1.0, 1.0, 1.0])
        correct, total = correct + add, total + add
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(total > 0, correct / np.where(total > 0, total, 1.0), 0.0)
        logp = np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), -np.inf).mean(axis=-1)
        bp = np.where(hyp_len < ref_len, np.exp(1.0 - ref_len / np.where(hyp_len > 0, hyp_len, 1.0)), 1.0)
    out = np.where(np.isfinite(logp) & (hyp_len > 0), 100.0 * bp * np.exp(np.where(np.isfinite(logp), logp, 0.0)), 0.0)
    return out


def bleu(hypotheses: Sequence[str], references: Sequence[str], smooth: bool = False) -> BleuReport:
    """Case-sensitive corpus BLEU-4 against a single tokenized reference.

    Any zero n-gram precision makes the score 0 unless ``smooth`` adds one to
    the higher-order counts.
    """
    stats = corpus_stats(hypotheses, references).sum(axis=0) if hypotheses else np.zeros(10)
    hyp_len, ref_len = int(stats[8]), int(stats[9])
    prec = [100.0 * stats[i] / stats[4 + i] if stats[4 + i] > 0 else 0.0 for i in range(4)]
    bp = 1.0 if hyp_len >= ref_len else (math.exp(1.0 - ref_len / hyp_len) if hyp_len > 0 else 0.0)
    ratio = hyp_len / ref_len if ref_len else 0.0
    return BleuReport(float(bleu_from_stats(stats, smooth)), prec, bp, ratio, hyp_len, ref_len)


# ---------------------------------------------------------------------------
# significance


@dataclass
class BootstrapResult:
    p_value: float
    bleu_a: float
    bleu_b: float
    b_better: int
    a_better: int
    ties: int
    n_resamples: int


def paired_bootstrap_detail(hyps_a: Sequence[str], hyps_b: Sequence[str], refs: Sequence[str],
                            n_resamples: int = 1000, seed: int = 0) -> BootstrapResult:
    if n_resamples < 1000:
        raise ContractError(f"paired bootstrap needs >= 1000 resamples, got {n_resamples}")
    if not (len(hyps_a) == len(hyps_b) == len(refs)) or not refs:
        raise CorpusError("paired bootstrap needs equal, nonzero numbers of hypotheses and references")
    sa, sb = corpus_stats(hyps_a, refs), corpus_stats(hyps_b, refs)
    rng = np.random.default_rng(seed)
    n = len(refs)
    idx = rng.integers(0, n, size=(n_resamples, n))
    ba = bleu_from_stats(sa[idx].sum(axis=1))
    bb = bleu_from_stats(sb[idx].sum(axis=1))
    b_better = int((bb > ba).sum())
    a_better = int((bb < ba).sum())
    ties = n_resamples - b_better - a_better
    p = (a_better + 0.5 * ties) / n_resamples
    return BootstrapResult(p, float(bleu_from_stats(sa.sum(axis=0))), float(bleu_from_stats(sb.sum(axis=0))),
                           b_better, a_better, ties, n_resamples)


def paired_bootstrap(hyps_a: Sequence[str], hyps_b: Sequence[str], refs: Sequence[str],
                     n_resamples: int = 1000, seed: int = 0) -> float:
    """p-value that system b is *not* better than system a.

    Counts resamples where b scores below a, with ties counted as half, so
    identical systems give exactly 0.5.
    """
    return paired_bootstrap_detail(hyps_a, hyps_b, refs, n_resamples, seed).p_value
