"""Seeded generator for the bundled toy document corpus.

The "language pair" is a word-for-word lexicon between two invented
languages built from consonant-vowel syllables.  One source word is
ambiguous and its translation depends on the document it occurs in, which
gives document context something to do.  Merges files segment every word
into syllables and then join a subset of two-syllable words back into
single symbols, so BPE output mixes whole words and ``@@`` pieces.
"""

from __future__ import annotations

import os
import random
from importlib import resources

TOY_SEED = 13
N_DOCS = 10
SENTS_PER_DOC = 5

_SRC_SYLL = [c + v for c in "ptkmnsl" for v in "aiou"]
_TGT_SYLL = [c + v for c in "bdgrvzh" for v in "eya"]


def _lexicon(rng: random.Random, syllables: list[str], n: int) -> list[tuple[str, ...]]:
    words: list[tuple[str, ...]] = []
    seen = set()
    while len(words) < n:
        k = 1 if rng.random() < 0.3 else 2
        w = tuple(rng.choice(syllables) for _ in range(k))
        if "".join(w) not in seen:
            seen.add("".join(w))
            words.append(w)
    return words


def _merges(words: list[tuple[str, ...]], rng: random.Random) -> list[tuple[str, str]]:
    merges: list[tuple[str, str]] = []
    used_syll = sorted({s for w in words for s in w})
    for s in used_syll:
        merges.append((s[0], s[1]))
    two = sorted(w for w in words if len(w) == 2)
    for w in two:
        if rng.random() < 0.5:
            merges.append((w[0], w[1]))
    return merges


def generate(seed: int = TOY_SEED) -> dict[str, list[str]]:
    """Return the toy corpus as ``{filename: lines}``."""
    rng = random.Random(seed)
    n_words = 30
    src_words = _lexicon(rng, _SRC_SYLL, n_words + 1)
    tgt_words = _lexicon(rng, _TGT_SYLL, n_words + 2)
    ambiguous = src_words[n_words]
    sense = (tgt_words[n_words], tgt_words[n_words + 1])
    table = {"".join(s): "".join(t) for s, t in zip(src_words[:n_words], tgt_words[:n_words])}

    src_lines, tgt_lines, bnd_lines = [], [], []
    seen = set()
    for k in range(N_DOCS):
        doc_id = f"talk{k + 1:02d}"
        topic = k % 2
        bnd_lines.append(f"{doc_id}\t{len(src_lines)}\t{SENTS_PER_DOC}")
        # each document draws mostly from its own slice of the lexicon
        pool = [src_words[(3 * k + i) % n_words] for i in range(12)]
        for _ in range(SENTS_PER_DOC):
            while True:
                length = rng.randint(3, 6)
                sent = [rng.choice(pool) for _ in range(length)]
                if rng.random() < 0.4:
                    sent[rng.randrange(length)] = ambiguous
                key = tuple("".join(w) for w in sent)
                if key not in seen:
                    seen.add(key)
                    break
            src = ["".join(w) for w in sent]
            tgt = ["".join(sense[topic]) if w == ambiguous else table["".join(w)] for w in sent]
            src_lines.append(" ".join(src))
            tgt_lines.append(" ".join(tgt))

    src_merges = _merges(src_words, rng)
    tgt_merges = _merges(tgt_words, rng)
    return {
        "train.src": src_lines,
        "train.tgt": tgt_lines,
        "train.bnd": bnd_lines,
        "src.merges": ["#version: 0.2"] + [f"{a} {b}" for a, b in src_merges],
        "tgt.merges": ["#version: 0.2"] + [f"{a} {b}" for a, b in tgt_merges],
    }


def write(directory: str, seed: int = TOY_SEED) -> dict[str, str]:
    os.makedirs(directory, exist_ok=True)
    paths = {}
    for name, lines in generate(seed).items():
        path = os.path.join(directory, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        paths[name] = path
    return paths


def bundled_dir() -> str:
    """Directory of the toy corpus shipped inside the package."""
    return str(resources.files("docnmt") / "toydata")


def bundled_paths() -> dict[str, str]:
    root = bundled_dir()
    return {name: os.path.join(root, name)
            for name in ("train.src", "train.tgt", "train.bnd", "src.merges", "tgt.merges")}
