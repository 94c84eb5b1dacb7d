"""Self-describing checkpoint container.

Layout (all integers ASCII, data little-endian float64)::

    DOCNMT-CKPT <version>\\n
    <header byte length>\\n
    <header: UTF-8 JSON, keys sorted>
    <tensor payload: concatenated row-major float64 arrays>

The header holds ``kind`` ("model" or "embeddings"), the model config, the
training config, vocabulary content hashes, seed, step, the serialized dropout
PRNG state, optimizer step count, the frozen parameter names, free-form
``lineage`` metadata, and a ``tensors`` index of ``{name, group, shape,
offset}`` entries.  ``group`` is ``param``, ``adam_m`` or ``adam_v``; offsets
count bytes from the start of the payload.  Nothing time- or host-dependent
is written, so identical runs give identical files.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CorpusError, MissingFileError
from .transformer import ModelConfig

MAGIC = b"DOCNMT-CKPT"
VERSION = 1
_LE = np.dtype("<f8")


@dataclass
class Checkpoint:
    kind: str
    config: Optional[ModelConfig]
    params: dict[str, np.ndarray]
    vocab_hashes: dict[str, str]
    train_config: dict = field(default_factory=dict)
    frozen: list[str] = field(default_factory=list)
    seed: int = 0
    step: int = 0
    rng_state: Optional[dict] = None
    adam_t: int = 0
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    lineage: dict = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        index, chunks, offset = [], [], 0
        for group, arrays in (("param", self.params), ("adam_m", self.adam_m), ("adam_v", self.adam_v)):
            for name in sorted(arrays):
                arr = np.ascontiguousarray(arrays[name], dtype=_LE)
                index.append({"name": name, "group": group, "shape": list(arr.shape), "offset": offset})
                raw = arr.tobytes(order="C")
                chunks.append(raw)
                offset += len(raw)
        header = {
            "format": "docnmt-checkpoint",
            "kind": self.kind,
            "config": None if self.config is None else self.config.to_dict(),
            "train_config": self.train_config,
            "vocab_hashes": self.vocab_hashes,
            "frozen": sorted(self.frozen),
            "seed": self.seed,
            "step": self.step,
            "rng_state": self.rng_state,
            "adam_t": self.adam_t,
            "lineage": self.lineage,
            "tensors": index,
        }
        hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return b"".join([MAGIC, b" ", str(VERSION).encode(), b"\n", str(len(hbytes)).encode(), b"\n",
                         hbytes] + chunks)

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob: bytes, source: str = "<bytes>") -> "Checkpoint":
        try:
            first, rest = blob.split(b"\n", 1)
            magic, version = first.split(b" ")
            hlen, rest = rest.split(b"\n", 1)
            hlen = int(hlen)
        except ValueError:
            raise CorpusError(f"{source}: not a checkpoint file") from None
        if magic != MAGIC:
            raise CorpusError(f"{source}: bad magic {magic!r}")
        if int(version) != VERSION:
            raise CorpusError(f"{source}: unsupported checkpoint version {int(version)}")
        header = json.loads(rest[:hlen].decode("utf-8"))
        payload = memoryview(rest[hlen:])
        groups: dict[str, dict[str, np.ndarray]] = {"param": {}, "adam_m": {}, "adam_v": {}}
        for entry in header["tensors"]:
            n = int(np.prod(entry["shape"])) if entry["shape"] else 1
            start = entry["offset"]
            arr = np.frombuffer(payload[start: start + 8 * n], dtype=_LE).astype(np.float64)
            groups[entry["group"]][entry["name"]] = arr.reshape(entry["shape"])
        cfg = header.get("config")
        return cls(
            kind=header["kind"],
            config=None if cfg is None else ModelConfig.from_dict(cfg),
            params=groups["param"],
            vocab_hashes=header.get("vocab_hashes", {}),
            train_config=header.get("train_config", {}),
            frozen=list(header.get("frozen", [])),
            seed=header.get("seed", 0),
            step=header.get("step", 0),
            rng_state=header.get("rng_state"),
            adam_t=header.get("adam_t", 0),
            adam_m=groups["adam_m"],
            adam_v=groups["adam_v"],
            lineage=header.get("lineage", {}),
        )

    @classmethod
    def load(cls, path: str) -> "Checkpoint":
        if not os.path.exists(path):
            raise MissingFileError(f"no such checkpoint: {path}")
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), path)
