import numpy as np
import pytest

from docnmt import pipeline, toy
from docnmt.data import Document, ParallelDocCorpus
from docnmt.training import TrainConfig, train_baseline
from docnmt.transformer import ModelConfig


@pytest.fixture(scope="session")
def toy_data(tmp_path_factory):
    """The bundled toy corpus, BPE-segmented and id-encoded."""
    p = toy.bundled_paths()
    out = tmp_path_factory.mktemp("toyprep")
    return pipeline.preprocess(p["train.src"], p["train.tgt"], p["train.bnd"], str(out),
                               p["src.merges"], p["tgt.merges"])


def copy_corpus(n_docs=10, per_doc=5, seed=0):
    """50 random id sentences whose target is the source itself."""
    rng = np.random.default_rng(seed)
    docs = []
    for k in range(n_docs):
        sents = [[int(t) for t in rng.integers(4, 20, size=rng.integers(3, 7))] for _ in range(per_doc)]
        docs.append(Document(f"c{k}", sents, [list(s) for s in sents]))
    return ParallelDocCorpus(docs)


@pytest.fixture(scope="session")
def copy_model():
    """Baseline trained on the copy task at the desk-scale settings (about 30 s)."""
    corpus = copy_corpus()
    cfg = ModelConfig(20, 20, d_model=64, n_heads=2, n_layers=2, d_ff=256)
    tc = TrainConfig(max_steps=2000, warmup_steps=400, lr_factor=0.3, log_every=0, seed=1)
    return corpus, tc, train_baseline(corpus, cfg, tc).model


# ---------------------------------------------------------------------------
# acceptance reporting: tests marked ``criterion(n, name)`` get one PASS/FAIL
# line each in the terminal summary, with any ``detail`` user property.

_CRITERIA: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    n, name = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if rep.failed:
        msg = str(rep.longrepr.reprcrash.message).splitlines()[0] if hasattr(rep.longrepr, "reprcrash") else ""
        _CRITERIA[n] = ("FAIL", name, "; ".join(x for x in (detail, msg) if x))
    elif rep.when == "call":
        _CRITERIA[n] = ("SKIP" if rep.skipped else "PASS", name, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, name, detail = _CRITERIA[n]
        terminalreporter.write_line(f"{status} [{n}] {name}" + (f": {detail}" if detail else ""))
