"""Command-line entry point: ``docnmt <subcommand> [options]``.

Pipeline order::

    preprocess -> train-baseline -> export-embeddings -> build-doc-cache
               -> train-enhanced -> translate -> score / bootstrap

Every subcommand accepts ``--config FILE`` (flat ``key = value`` lines,
``#`` comments) and per-key flags that override the file.  Artifacts get a
JSON run manifest at ``<output>.manifest.json``.  Failures print one line
``error: category=<tag> message=<text>`` to stderr and exit with the code of
the error class (usage errors exit 2).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from typing import Optional, Sequence

from . import __version__
from .ablation import grid_cells, run_grid, training_references
from .checkpoint import Checkpoint
from .data import _read_lines, sha256_file
from .decode import bleu, paired_bootstrap_detail, translate_corpus
from .docembed import build_global_cache, format_cache_line, load_cache, save_cache
from .errors import (ConfigError, DocNmtError, IncompatibilityError, MissingContextError,
                     MissingFileError)
from .model import NmtModel
from .pipeline import (PreparedData, load_prepared, manifest_path, preprocess, write_manifest)
from .plotting import (GLOBAL_AXIS, LOCAL_AXIS, plot_ablation, plot_training_curves, read_tsv,
                       write_tsv)
from .training import (TrainConfig, Trainer, check_vocab_hashes, evaluate, extract_embeddings,
                       train_baseline, train_enhanced)
from .transformer import ModelConfig

log = logging.getLogger("docnmt")

USAGE_EXIT = 2
LOG_COLUMNS = ("step", "lr", "loss", "tok_per_s")


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (type, default, help); ``max_positions`` is the model's max_len
MODEL_KEYS = {
    "d_model": (int, 64, "model width"),
    "n_heads": (int, 2, "attention heads"),
    "n_layers": (int, 2, "encoder and decoder layers"),
    "d_ff": (int, 256, "feed-forward width"),
    "max_positions": (int, 512, "longest encoder/decoder sequence (positional table size)"),
    "attn_pool_layers": (int, 1, "self-attention layers in the attn document generator"),
    "normalize_ensemble": (_bool, True, "softmax-normalise the ensemble weights"),
    "scale_doc_slots": (_bool, False, "scale document slots by sqrt(d_model) like word embeddings"),
    "tie_output": (_bool, False, "tie output projection to the target embeddings"),
    "window_mode": (str, "symmetric", "local context window at inference: symmetric, past or batch"),
    "window_before": (int, 2, "sentences before the current one in the local window"),
    "window_after": (int, 1, "sentences after the current one in the local window"),
}
_TRAIN_DEFAULTS = TrainConfig()


def _key_type(default):
    return _bool if isinstance(default, bool) else type(default)


TRAIN_KEYS = {f.name: (_key_type(getattr(_TRAIN_DEFAULTS, f.name)), getattr(_TRAIN_DEFAULTS, f.name),
                       f.name.replace("_", " "))
              for f in dataclasses.fields(TrainConfig) if f.name != "phase"}
DATA_KEYS = {
    "vocab_size": (int, 32000, "vocabulary cap per side"),
    "max_len": (int, 256, "longest sentence in subwords"),
}
DOC_KEYS = {
    "global": (str, "off", "global document embedding: off or avg"),
    "local": (str, "off", "local document embedding: off, avg, rnn, attn or rnn+attn"),
}
DECODE_KEYS = {"beam": (int, 4, "beam width")}
BOOT_KEYS = {"resamples": (int, 1000, "bootstrap resamples (>= 1000)")}
ALL_KEYS = {**MODEL_KEYS, **TRAIN_KEYS, **DATA_KEYS, **DOC_KEYS, **DECODE_KEYS, **BOOT_KEYS}


def read_config_file(path: str) -> dict:
    """Parse ``key = value`` lines; unknown keys and bad values are ConfigErrors."""
    out = {}
    for lineno, line in enumerate(_read_lines(path), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        if key not in ALL_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = ALL_KEYS[key][0](value.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return out


def resolve(args: argparse.Namespace, keys: dict) -> dict:
    """Defaults, then the config file, then explicit flags."""
    values = {k: spec[1] for k, spec in keys.items()}
    if args.config:
        values.update({k: v for k, v in read_config_file(args.config).items() if k in keys})
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    return values


def model_config(values: dict, data: PreparedData) -> ModelConfig:
    kw = {k: values[k] for k in MODEL_KEYS if k != "max_positions"}
    return ModelConfig(len(data.src_vocab), len(data.tgt_vocab), max_len=values["max_positions"],
                       dropout=values["dropout"], label_smoothing=values["label_smoothing"], **kw)


def train_config(values: dict) -> TrainConfig:
    return TrainConfig(**{k: values[k] for k in TRAIN_KEYS})


def _file_ref(path: str) -> dict:
    return {"path": os.path.basename(path), "sha256": sha256_file(path)}


def _data_inputs(data: PreparedData) -> dict:
    d = data.directory
    return {"corpus": os.path.join(d, "corpus.json"), "src_vocab": os.path.join(d, "src.vocab"),
            "tgt_vocab": os.path.join(d, "tgt.vocab")}


def _write_lines(path: Optional[str], lines: Sequence[str]) -> None:
    text = "".join(line + "\n" for line in lines)
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# training helpers shared by both phases


class _Progress:
    """Streams progress rows to a TSV file as training runs."""

    def __init__(self, path: str):
        self.fh = open(path, "w", encoding="utf-8")
        self.fh.write("\t".join(LOG_COLUMNS) + "\n")

    def __call__(self, row: dict) -> None:
        self.fh.write(f"{row['step']}\t{row['lr']:.6e}\t{row['loss']:.6f}\t{row['tok_per_s']:.1f}\n")
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()


class _DevSelector:
    """Keeps the checkpoint with the lowest dev-set perplexity."""

    def __init__(self, dev, cache_for):
        self.dev = dev
        self.cache_for = cache_for
        self.best: Optional[tuple[float, int, bytes]] = None

    def __call__(self, tr: Trainer) -> None:
        ppl = evaluate(tr.model, self.dev, tr.tcfg.token_budget, self.cache_for(tr))["perplexity"]
        log.info("step %d dev perplexity %.4f", tr.step, ppl)
        if self.best is None or ppl < self.best[0]:
            self.best = (ppl, tr.step, tr.checkpoint().to_bytes())


def _dev_corpus(args, data: PreparedData, max_len: int):
    given = [args.dev_src, args.dev_tgt, args.dev_boundaries]
    if not any(given):
        return None
    if not all(given):
        raise ConfigError("dev selection needs --dev-src, --dev-tgt and --dev-boundaries")
    return data.encode_parallel(args.dev_src, args.dev_tgt, args.dev_boundaries, max_len)


def _run_training(args, start, selector: Optional[_DevSelector]) -> tuple[bytes, dict]:
    """Run ``start(on_log, on_checkpoint)`` and return the chosen checkpoint bytes."""
    progress = _Progress(args.log or args.out + ".log.tsv")
    try:
        tr = start(progress, selector)
    finally:
        progress.close()
    final = tr.checkpoint().to_bytes()
    if selector is None:
        return final, {"criterion": "last", "step": tr.step}
    every = tr.tcfg.checkpoint_every
    if not every or tr.step % every:
        selector(tr)  # the final weights are always a candidate
    ppl, step, blob = selector.best
    return blob, {"criterion": "dev_perplexity", "step": step, "perplexity": ppl}


# ---------------------------------------------------------------------------
# subcommands


def cmd_preprocess(args) -> None:
    v = resolve(args, DATA_KEYS)
    data = preprocess(args.src, args.tgt, args.boundaries, args.out, args.src_merges, args.tgt_merges,
                      v["vocab_size"], v["max_len"], v)
    print(f"documents={len(data.corpus)} sentences={data.corpus.n_sentences()} "
          f"src_vocab={len(data.src_vocab)} tgt_vocab={len(data.tgt_vocab)}")


def cmd_train_baseline(args) -> None:
    v = resolve(args, {**MODEL_KEYS, **TRAIN_KEYS, **DATA_KEYS})
    data = load_prepared(args.data)
    cfg, tc = model_config(v, data), train_config(v)
    dev = _dev_corpus(args, data, v["max_len"])
    selector = _DevSelector(dev, lambda tr: None) if dev is not None else None
    blob, selection = _run_training(
        args, lambda on_log, on_ck: train_baseline(data.corpus, cfg, tc, data.vocab_hashes, on_log, on_ck),
        selector)
    with open(args.out, "wb") as fh:
        fh.write(blob)
    inputs = _data_inputs(data)
    if dev is not None:
        inputs.update(dev_src=args.dev_src, dev_tgt=args.dev_tgt, dev_boundaries=args.dev_boundaries)
    write_manifest(manifest_path(args.out), "train-baseline", v, inputs,
                   {"phase": "baseline", "vocab_hashes": data.vocab_hashes, "selection": selection})


def cmd_export_embeddings(args) -> None:
    ckpt = Checkpoint.load(args.checkpoint)
    emb = extract_embeddings(ckpt)
    emb.lineage["source_checkpoint"] = _file_ref(args.checkpoint)
    emb.save(args.out)
    write_manifest(manifest_path(args.out), "export-embeddings", {}, {"checkpoint": args.checkpoint},
                   {"source": emb.lineage, "vocab_hashes": emb.vocab_hashes})


def _load_embeddings(path: str) -> Checkpoint:
    emb = Checkpoint.load(path)
    if emb.kind != "embeddings":
        raise ConfigError(f"{path} holds a {emb.kind!r} checkpoint; run export-embeddings first")
    return emb


def cmd_build_doc_cache(args) -> None:
    data = load_prepared(args.data)
    emb = _load_embeddings(args.embeddings)
    check_vocab_hashes(data.vocab_hashes, emb.vocab_hashes, args.embeddings)
    save_cache(args.out, build_global_cache(data.corpus, emb.params["src_embed"]))
    write_manifest(manifest_path(args.out), "build-doc-cache", {"method": "avg"},
                   dict(_data_inputs(data), embeddings=args.embeddings),
                   {"embeddings": _file_ref(args.embeddings), "vocab_hashes": data.vocab_hashes})


def _verify_cache(path: str, data: PreparedData, emb: Checkpoint) -> None:
    """The cache file must be exactly what the frozen embeddings give for this corpus."""
    fresh = build_global_cache(data.corpus, emb.params["src_embed"])
    with open(path, encoding="utf-8") as fh:
        given = fh.read()
    if given != "".join(format_cache_line(k, vec) for k, vec in fresh.items()):
        raise IncompatibilityError(f"{path}: document cache does not match the embeddings and corpus")


def cmd_train_enhanced(args) -> None:
    v = resolve(args, {**MODEL_KEYS, **TRAIN_KEYS, **DATA_KEYS, **DOC_KEYS})
    data = load_prepared(args.data)
    emb = _load_embeddings(args.embeddings)
    check_vocab_hashes(data.vocab_hashes, emb.vocab_hashes, args.embeddings)
    cfg = model_config(v, data).with_doc_mode(v["global"], v["local"])
    if args.cache is not None:
        if not os.path.exists(args.cache):
            raise MissingFileError(f"no such file: {args.cache}")
        _verify_cache(args.cache, data, emb)
    elif cfg.use_global:
        raise MissingContextError("--global avg needs --cache from build-doc-cache")
    baseline = Checkpoint.load(args.baseline) if args.baseline else None
    tc = train_config(v)
    emb.lineage["file"] = _file_ref(args.embeddings)
    dev = _dev_corpus(args, data, v["max_len"])
    selector = None
    if dev is not None:
        table = emb.params["src_embed"]
        dev_cache = build_global_cache(dev, table) if cfg.use_global else None
        selector = _DevSelector(dev, lambda tr: dev_cache)
    blob, selection = _run_training(
        args, lambda on_log, on_ck: train_enhanced(data.corpus, emb, cfg, tc, data.vocab_hashes, baseline,
                                                      on_log, on_checkpoint=on_ck),
        selector)
    with open(args.out, "wb") as fh:
        fh.write(blob)
    inputs = dict(_data_inputs(data), embeddings=args.embeddings)
    if args.cache:
        inputs["cache"] = args.cache
    if args.baseline:
        inputs["baseline"] = args.baseline
    write_manifest(manifest_path(args.out), "train-enhanced", v, inputs,
                   {"phase": "enhanced", "embeddings": {**_file_ref(args.embeddings), "source": emb.lineage},
                    "global": v["global"], "local": v["local"], "vocab_hashes": data.vocab_hashes,
                    "selection": selection})


def cmd_translate(args) -> None:
    v = resolve(args, {**DECODE_KEYS, **DATA_KEYS})
    ckpt = Checkpoint.load(args.checkpoint)
    if ckpt.kind != "model":
        raise ConfigError(f"{args.checkpoint} is not a model checkpoint")
    data = load_prepared(args.data)
    check_vocab_hashes(data.vocab_hashes, ckpt.vocab_hashes, args.checkpoint)
    if (args.src is None) != (args.boundaries is None):
        raise ConfigError("--src and --boundaries go together")
    corpus = data.corpus if args.src is None else data.encode_source(args.src, args.boundaries, v["max_len"])
    model = NmtModel(ckpt.config, ckpt.params, ckpt.frozen)
    cache = None
    if args.cache is not None and model.cfg.use_global:
        cache = load_cache(args.cache)
        fresh = build_global_cache(corpus, model.params["src_embed"].data)
        stale = [k for k in fresh if k in cache and cache[k].tobytes() != fresh[k].tobytes()]
        if stale:
            raise IncompatibilityError(f"{args.cache}: cached vectors for {stale[:3]} do not match the "
                                       "checkpoint's embeddings")
    lines = translate_corpus(model, corpus, data.tgt_vocab, cache, v["beam"],
                             ckpt.train_config.get("token_budget"))
    _write_lines(args.out, lines)
    if args.out is not None:
        inputs = {"checkpoint": args.checkpoint, **_data_inputs(data)}
        if args.src:
            inputs.update(src=args.src, boundaries=args.boundaries)
        if args.cache:
            inputs["cache"] = args.cache
        write_manifest(manifest_path(args.out), "translate", v, inputs,
                       {"checkpoint": {**_file_ref(args.checkpoint), "lineage": ckpt.lineage}})


def cmd_score(args) -> None:
    hyps, refs = _read_lines(args.hyp), _read_lines(args.ref)
    print(bleu(hyps, refs, smooth=args.smooth))


def cmd_bootstrap(args) -> None:
    v = resolve(args, {**BOOT_KEYS, "seed": TRAIN_KEYS["seed"]})
    r = paired_bootstrap_detail(_read_lines(args.hyp_a), _read_lines(args.hyp_b), _read_lines(args.ref),
                                v["resamples"], v["seed"])
    print(f"p_value={r.p_value:.4f} bleu_a={r.bleu_a:.2f} bleu_b={r.bleu_b:.2f} b_better={r.b_better} "
          f"a_better={r.a_better} ties={r.ties} resamples={r.n_resamples}")


def cmd_embed_doc(args) -> None:
    if args.cache is not None:
        cache = load_cache(args.cache)
    elif args.data is not None and args.embeddings is not None:
        data = load_prepared(args.data)
        emb = _load_embeddings(args.embeddings)
        check_vocab_hashes(data.vocab_hashes, emb.vocab_hashes, args.embeddings)
        cache = build_global_cache(data.corpus, emb.params["src_embed"])
    else:
        raise ConfigError("embed-doc needs --cache, or --data with --embeddings")
    ids = args.doc or list(cache)
    missing = [d for d in ids if d not in cache]
    if missing:
        raise MissingContextError(f"no document embedding for {missing}")
    sys.stdout.write("".join(format_cache_line(d, cache[d]) for d in ids))


def cmd_ablation(args) -> None:
    v = resolve(args, {**MODEL_KEYS, **TRAIN_KEYS, **DATA_KEYS, **DECODE_KEYS})
    data = load_prepared(args.data)
    cfg, tc = model_config(v, data), train_config(v)
    os.makedirs(args.out, exist_ok=True)
    base = train_baseline(data.corpus, cfg, tc, data.vocab_hashes)
    base_ckpt = os.path.join(args.out, "baseline.ckpt")
    base.checkpoint().save(base_ckpt)
    emb = extract_embeddings(base.checkpoint())
    emb.lineage["source_checkpoint"] = _file_ref(base_ckpt)
    refs = training_references(data)
    base_bleu = bleu(translate_corpus(base.model, data.corpus, data.tgt_vocab, None, v["beam"]), refs).bleu
    print(f"baseline\tbleu={base_bleu:.2f}", flush=True)
    cells = grid_cells(args.global_modes or GLOBAL_AXIS, args.local_modes or LOCAL_AXIS)
    curves = {"baseline": base.history}

    def report_cell(res):
        curves[f"{res.global_mode}/{res.local_mode}"] = res.history
        print(f"{res.global_mode}\t{res.local_mode}\tbleu={res.bleu:.2f}\tseconds={res.seconds:.1f}", flush=True)

    results = run_grid(data, emb, cfg, tc, cells, v["beam"], report_cell)
    rows = [r.row() for r in results]
    tsv = os.path.join(args.out, "ablation.tsv")
    write_tsv(tsv, rows, ("global", "local", "bleu", "steps"))
    plot_ablation(rows, os.path.join(args.out, "ablation.png"))
    plot_training_curves({k: _smooth(h) for k, h in curves.items() if h},
                         os.path.join(args.out, "training_curves.png"))
    write_manifest(manifest_path(tsv), "ablation", v, _data_inputs(data),
                   {"baseline_bleu": base_bleu, "baseline": _file_ref(base_ckpt)})


def _smooth(rows: list[dict], points: int = 100) -> list[dict]:
    """Mean loss over consecutive windows, about ``points`` of them, so curves stay readable."""
    every = max(1, len(rows) // points)
    out = []
    for i in range(0, len(rows) - every + 1, every):
        chunk = rows[i:i + every]
        out.append({"step": chunk[-1]["step"], "loss": sum(r["loss"] for r in chunk) / every})
    return out or rows


def cmd_report(args) -> None:
    os.makedirs(args.out, exist_ok=True)
    if args.ablation:
        rows = read_tsv(args.ablation)
        plot_ablation(rows, os.path.join(args.out, "ablation.png"))
        print("global\tlocal\tbleu")
        for r in rows:
            print(f"{r['global']}\t{r['local']}\t{float(r['bleu']):.2f}")
    if args.logs:
        logs = {os.path.basename(p).split(".")[0]: read_tsv(p) for p in args.logs}
        plot_training_curves(logs, os.path.join(args.out, "training_curves.png"))
        print("run\tsteps\tfinal_loss")
        for name, rows in logs.items():
            last = rows[-1] if rows else {"step": 0, "loss": "nan"}
            print(f"{name}\t{last['step']}\t{float(last['loss']):.4f}")
    if not args.ablation and not args.logs:
        raise ConfigError("report needs --ablation and/or --logs")


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(USAGE_EXIT, f"error: category=usage message={message} (see {self.prog} --help)\n")


def _add_keys(p: argparse.ArgumentParser, keys: dict, title: str) -> None:
    g = p.add_argument_group(title, "override --config values")
    for k, (typ, default, help_) in keys.items():
        g.add_argument("--" + k.replace("_", "-"), dest=k, type=typ, default=None, metavar=k.upper(),
                       help=f"{help_} (default {default})")


def _add_dev(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("checkpoint selection",
                             "keep the checkpoint with the lowest dev perplexity, scored every "
                             "checkpoint_every steps")
    g.add_argument("--dev-src")
    g.add_argument("--dev-tgt")
    g.add_argument("--dev-boundaries")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="flat key = value settings file")
    common.add_argument("-q", "--quiet", action="store_true", help="no progress logging")

    ap = _Parser(prog="docnmt", description="Document-aware NMT with global and local document embeddings.")
    ap.add_argument("--version", action="version", version=f"docnmt {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_)
        p.set_defaults(func=func)
        return p

    p = add("preprocess", cmd_preprocess, "segment, build vocabularies and id-encode a document corpus")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--boundaries", required=True, help="one doc_id per sentence line")
    p.add_argument("--src-merges")
    p.add_argument("--tgt-merges")
    p.add_argument("--out", required=True, metavar="DIR")
    _add_keys(p, DATA_KEYS, "data")

    p = add("train-baseline", cmd_train_baseline, "train the sentence-level Transformer")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="CKPT")
    p.add_argument("--log", metavar="TSV", help="progress log (default CKPT.log.tsv)")
    _add_dev(p)
    _add_keys(p, MODEL_KEYS, "model")
    _add_keys(p, TRAIN_KEYS, "training")

    p = add("export-embeddings", cmd_export_embeddings, "copy word-embedding tables out of a baseline")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)

    p = add("build-doc-cache", cmd_build_doc_cache, "average-of-words global embedding per document")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)

    p = add("train-enhanced", cmd_train_enhanced, "train the document-aware model on frozen embeddings")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--cache", help="global cache from build-doc-cache (checked against the embeddings)")
    p.add_argument("--baseline", help="baseline checkpoint, used when warm_start is set")
    p.add_argument("--out", required=True, metavar="CKPT")
    p.add_argument("--log", metavar="TSV", help="progress log (default CKPT.log.tsv)")
    g = p.add_argument_group("document modes")
    g.add_argument("--global", dest="global", choices=("off", "avg"), default=None)
    g.add_argument("--local", dest="local", choices=LOCAL_AXIS, default=None)
    _add_dev(p)
    _add_keys(p, MODEL_KEYS, "model")
    _add_keys(p, TRAIN_KEYS, "training")

    p = add("translate", cmd_translate, "beam-search translation, one output line per source sentence")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, metavar="DIR", help="prepared directory (vocabularies, BPE)")
    p.add_argument("--src", help="raw source to translate (default: the prepared corpus)")
    p.add_argument("--boundaries")
    p.add_argument("--cache")
    p.add_argument("--out", help="output file (default stdout)")
    _add_keys(p, DECODE_KEYS, "decoding")

    p = add("score", cmd_score, "corpus BLEU on whitespace tokens")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--smooth", action="store_true", help="add-one smoothing for n > 1")

    p = add("bootstrap", cmd_bootstrap, "paired bootstrap significance of system b over system a")
    p.add_argument("--hyp-a", required=True)
    p.add_argument("--hyp-b", required=True)
    p.add_argument("--ref", required=True)
    _add_keys(p, {**BOOT_KEYS, "seed": TRAIN_KEYS["seed"]}, "resampling")

    p = add("embed-doc", cmd_embed_doc, "print global document embeddings")
    p.add_argument("--cache")
    p.add_argument("--data", metavar="DIR")
    p.add_argument("--embeddings")
    p.add_argument("--doc", action="append", help="document id (repeatable; default all)")

    p = add("ablation", cmd_ablation, "train and score every global x local cell on one corpus")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--global-modes", nargs="+", choices=GLOBAL_AXIS)
    p.add_argument("--local-modes", nargs="+", choices=LOCAL_AXIS)
    _add_keys(p, MODEL_KEYS, "model")
    _add_keys(p, TRAIN_KEYS, "training")
    _add_keys(p, DECODE_KEYS, "decoding")

    p = add("report", cmd_report, "render figures and a summary table from ablation/training logs")
    p.add_argument("--ablation", metavar="TSV")
    p.add_argument("--logs", nargs="+", metavar="TSV")
    p.add_argument("--out", required=True, metavar="DIR")
    return ap


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split()) or type(exc).__name__


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except DocNmtError as exc:
        print(f"error: category={exc.category} message={_one_line(exc)}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: category={MissingFileError.category} message={_one_line(exc)}", file=sys.stderr)
        return MissingFileError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
