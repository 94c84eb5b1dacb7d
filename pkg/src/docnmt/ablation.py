"""The {global} x {local} document-mode grid, run in-process on one prepared corpus."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .checkpoint import Checkpoint
from .data import remove_bpe
from .decode import bleu, translate_corpus
from .pipeline import PreparedData
from .plotting import GLOBAL_AXIS, LOCAL_AXIS
from .training import TrainConfig, train_enhanced
from .transformer import ModelConfig


@dataclass
class CellResult:
    global_mode: str
    local_mode: str
    bleu: float
    steps: int
    seconds: float
    history: list[dict] = field(default_factory=list, repr=False)

    def row(self) -> dict:
        return {"global": self.global_mode, "local": self.local_mode, "bleu": self.bleu,
                "steps": self.steps, "seconds": self.seconds}


def training_references(data: PreparedData) -> list[str]:
    """Target side of the prepared corpus as plain text, one line per sentence."""
    return [remove_bpe(" ".join(data.tgt_vocab.decode(t))) for d in data.corpus for t in d.tgt]


def grid_cells(global_modes: Sequence[str] = GLOBAL_AXIS,
               local_modes: Sequence[str] = LOCAL_AXIS) -> list[tuple[str, str]]:
    return list(itertools.product(global_modes, local_modes))


def run_cell(data: PreparedData, embeddings: Checkpoint, global_mode: str, local_mode: str,
             model_cfg: ModelConfig, tcfg: TrainConfig, beam_width: int = 4,
             references: Optional[list[str]] = None) -> CellResult:
    """Train one enhanced model and score its translation of the training sources."""
    t0 = time.perf_counter()
    cfg = model_cfg.with_doc_mode(global_mode, local_mode)
    tr = train_enhanced(data.corpus, embeddings, cfg, tcfg, data.vocab_hashes, n_steps=0)
    history = tr.train(tcfg.max_steps)
    hyps = translate_corpus(tr.model, data.corpus, data.tgt_vocab, tr.global_cache, beam_width,
                            tcfg.token_budget)
    refs = references if references is not None else training_references(data)
    return CellResult(global_mode, local_mode, bleu(hyps, refs).bleu, tr.step,
                      time.perf_counter() - t0, history)


def run_grid(data: PreparedData, embeddings: Checkpoint, model_cfg: ModelConfig, tcfg: TrainConfig,
             cells: Optional[Sequence[tuple[str, str]]] = None, beam_width: int = 4,
             on_cell: Optional[Callable[[CellResult], None]] = None) -> list[CellResult]:
    refs = training_references(data)
    out = []
    for g, l in cells or grid_cells():
        res = run_cell(data, embeddings, g, l, model_cfg, tcfg, beam_width, refs)
        if on_cell is not None:
            on_cell(res)
        out.append(res)
    return out
