"""Preprocessed data directories and run manifests shared by the CLI and tests.

A data directory written by :func:`preprocess` contains::

    src.vocab, tgt.vocab      token<TAB>id dumps
    src.merges, tgt.merges    copies of the merges files (absent = no BPE)
    corpus.json               id-encoded documents
    manifest.json             run manifest
"""

from __future__ import annotations

import json
import os
import shutil
from dataclasses import dataclass
from typing import Optional

from . import __version__
from .data import (BpeModel, ParallelDocCorpus, Vocabulary, apply_bpe, encode_corpus, load_corpus,
                   sha256_file)
from .errors import IncompatibilityError, MissingFileError


@dataclass
class PreparedData:
    directory: str
    corpus: ParallelDocCorpus
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    src_bpe: Optional[BpeModel]
    tgt_bpe: Optional[BpeModel]

    @property
    def vocab_hashes(self) -> dict[str, str]:
        return {"src": self.src_vocab.content_hash, "tgt": self.tgt_vocab.content_hash}

    def encode_source(self, src_path: str, boundaries_path: str, max_len: int = 256) -> ParallelDocCorpus:
        raw = load_corpus(src_path, None, boundaries_path)
        return encode_corpus(raw, self.src_bpe, None, self.src_vocab, None, max_len)

    def encode_parallel(self, src_path: str, tgt_path: str, boundaries_path: str,
                        max_len: int = 256) -> ParallelDocCorpus:
        """Encode held-out parallel text with this directory's segmentation and vocabularies."""
        raw = load_corpus(src_path, tgt_path, boundaries_path)
        return encode_corpus(raw, self.src_bpe, self.tgt_bpe, self.src_vocab, self.tgt_vocab, max_len)


def preprocess(src: str, tgt: str, boundaries: str, out_dir: str, src_merges: Optional[str] = None,
               tgt_merges: Optional[str] = None, vocab_size: int = 32000, max_len: int = 256,
               config: Optional[dict] = None) -> PreparedData:
    raw = load_corpus(src, tgt, boundaries)
    src_bpe = BpeModel.load(src_merges) if src_merges else None
    tgt_bpe = BpeModel.load(tgt_merges) if tgt_merges else None
    src_vocab = Vocabulary.build((apply_bpe(src_bpe, s) for d in raw for s in d.src), vocab_size)
    tgt_vocab = Vocabulary.build((apply_bpe(tgt_bpe, t) for d in raw for t in d.tgt), vocab_size)
    corpus = encode_corpus(raw, src_bpe, tgt_bpe, src_vocab, tgt_vocab, max_len)

    os.makedirs(out_dir, exist_ok=True)
    src_vocab.save(os.path.join(out_dir, "src.vocab"))
    tgt_vocab.save(os.path.join(out_dir, "tgt.vocab"))
    for side, path in (("src", src_merges), ("tgt", tgt_merges)):
        dest = os.path.join(out_dir, f"{side}.merges")
        if path:
            shutil.copyfile(path, dest)
        elif os.path.exists(dest):
            os.remove(dest)
    with open(os.path.join(out_dir, "corpus.json"), "w", encoding="utf-8") as fh:
        fh.write(corpus.to_json())
    inputs = {"src": src, "tgt": tgt, "boundaries": boundaries}
    if src_merges:
        inputs["src_merges"] = src_merges
    if tgt_merges:
        inputs["tgt_merges"] = tgt_merges
    data = PreparedData(out_dir, corpus, src_vocab, tgt_vocab, src_bpe, tgt_bpe)
    write_manifest(os.path.join(out_dir, "manifest.json"), "preprocess",
                   dict(config or {}, vocab_size=vocab_size, max_len=max_len), inputs,
                   {"vocab_hashes": data.vocab_hashes})
    return data


def load_prepared(directory: str) -> PreparedData:
    path = os.path.join(directory, "corpus.json")
    if not os.path.exists(path):
        raise MissingFileError(f"{directory} is not a preprocessed data directory (no corpus.json)")
    with open(path, encoding="utf-8") as fh:
        corpus = ParallelDocCorpus.from_json(fh.read())
    bpe = {}
    for side in ("src", "tgt"):
        mp = os.path.join(directory, f"{side}.merges")
        bpe[side] = BpeModel.load(mp) if os.path.exists(mp) else None
    return PreparedData(directory, corpus, Vocabulary.load(os.path.join(directory, "src.vocab")),
                        Vocabulary.load(os.path.join(directory, "tgt.vocab")), bpe["src"], bpe["tgt"])


def write_manifest(path: str, command: str, config: dict, inputs: dict[str, str],
                   lineage: Optional[dict] = None) -> dict:
    """RunManifest: config snapshot, input hashes, lineage, tool version."""
    manifest = {
        "tool": "docnmt",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {k: {"path": os.path.basename(v), "sha256": sha256_file(v)}
                   for k, v in sorted(inputs.items()) if v and os.path.isfile(v)},
        "lineage": lineage or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def manifest_path(output: str) -> str:
    return output + ".manifest.json"


def read_manifest(path: str) -> dict:
    if not os.path.exists(path):
        raise MissingFileError(f"no manifest at {path}")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def require_same_hashes(expected: dict[str, str], found: dict[str, str], what: str) -> None:
    for side in ("src", "tgt"):
        if expected.get(side) != found.get(side):
            raise IncompatibilityError(f"{what}: {side} vocabulary hash mismatch")
