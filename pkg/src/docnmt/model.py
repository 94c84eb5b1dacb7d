"""The document-aware translation model: transformer weights plus doc generators."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .data import Batch, PAD, pad_matrix
from .docembed import init_doc_params, local_doc_embed
from .errors import MissingContextError
from .tensor import Tensor
from .transformer import (ComposedSourceSequence, ModelConfig, compose_source_sequence,
                          decode_step, encode, init_transformer_params)

EMBEDDING_TABLES = ("src_embed", "tgt_embed")


class NmtModel:
    """Named parameters, a config, and the set of frozen parameter names."""

    def __init__(self, cfg: ModelConfig, params: dict[str, np.ndarray],
                 frozen: Sequence[str] = ()):
        self.cfg = cfg
        self.frozen = set(frozen)
        self.params: dict[str, Tensor] = {}
        for name in sorted(params):
            self.params[name] = Tensor(np.array(params[name], dtype=np.float64),
                                       requires_grad=name not in self.frozen, name=name)

    @classmethod
    def initialize(cls, cfg: ModelConfig, seed: int, frozen: Sequence[str] = (),
                   embeddings: Optional[dict[str, np.ndarray]] = None) -> "NmtModel":
        rng = np.random.default_rng(seed)
        params = init_transformer_params(cfg, rng)
        params.update(init_doc_params(cfg, rng))
        if embeddings is not None:
            for name, table in embeddings.items():
                if params[name].shape != table.shape:
                    raise MissingContextError(
                        f"{name}: pretrained table {table.shape} vs model {params[name].shape}")
                params[name] = table
        return cls(cfg, params, frozen)

    def trainable(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if k not in self.frozen}

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    # -- forward pieces ----------------------------------------------------

    def local_embedding(self, sentences: Sequence[Sequence[int]]) -> Tensor:
        return local_doc_embed(self.params, self.cfg, sentences, self.params["src_embed"])

    def compose(self, src: np.ndarray, doc_global: Optional[np.ndarray],
                doc_local: Optional[Tensor]) -> ComposedSourceSequence:
        """Encoder input for padded source ids ``src`` [B, S].

        ``doc_global`` is a constant [d] or [B, d] array; ``doc_local`` a
        tensor [d] or [B, d].  Slots are included only when the config asks for
        them.
        """
        cfg = self.cfg
        g = l = None
        if cfg.use_global:
            if doc_global is None:
                raise MissingContextError("model uses a global document embedding but none was given")
            g = Tensor(doc_global)
        if cfg.use_local:
            if doc_local is None:
                raise MissingContextError("model uses a local document embedding but none was given")
            l = doc_local
        tokens = T.embedding_lookup(self.params["src_embed"], src)
        return compose_source_sequence(tokens, src == PAD, g, l, cfg)

    def encode(self, composed: ComposedSourceSequence, train: bool = False, rng=None,
               records: Optional[list] = None) -> Tensor:
        return encode(self.params, composed, self.cfg, train, rng, records)

    def logits(self, tgt_prefix: np.ndarray, encoder_out: Tensor, src_pad_mask: np.ndarray,
               train: bool = False, rng=None) -> Tensor:
        return decode_step(self.params, tgt_prefix, encoder_out, src_pad_mask, self.cfg, train, rng)

    def batch_loss(self, batch: Batch, global_cache: Optional[dict[str, np.ndarray]] = None,
                   train: bool = False, rng=None) -> Tensor:
        """Teacher-forced label-smoothed cross-entropy for one batch.

        The batch's own sentences form the local context window.
        """
        doc_global = None
        if self.cfg.use_global:
            if global_cache is None or batch.doc_id not in global_cache:
                raise MissingContextError(f"no global embedding cached for document {batch.doc_id!r}")
            doc_global = global_cache[batch.doc_id]
        doc_local = self.local_embedding(batch.src_sentences) if self.cfg.use_local else None
        composed = self.compose(batch.src, doc_global, doc_local)
        enc = self.encode(composed, train, rng)
        logits = self.logits(batch.tgt_in, enc, composed.pad_mask, train, rng)
        V = logits.shape[-1]
        return T.cross_entropy_label_smoothed(T.reshape(logits, (-1, V)), batch.tgt_out.reshape(-1),
                                              self.cfg.label_smoothing, PAD)

    def encode_sentences(self, sentences: Sequence[Sequence[int]], doc_global: Optional[np.ndarray],
                         doc_local: Optional[Tensor]) -> tuple[Tensor, np.ndarray]:
        src = pad_matrix(sentences)
        composed = self.compose(src, doc_global, doc_local)
        return self.encode(composed), composed.pad_mask
