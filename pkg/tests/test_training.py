import dataclasses
import math

import numpy as np
import pytest

from docnmt.checkpoint import Checkpoint
from docnmt.docembed import build_global_cache
from docnmt.errors import ConfigError, CorpusError, DivergenceError, IncompatibilityError
from docnmt.model import NmtModel
from docnmt.tensor import Tensor
from docnmt.training import (Adam, TrainConfig, Trainer, adam_step, clip_by_global_norm, evaluate,
                             extract_embeddings, noam_lr, train_baseline, train_enhanced)
from docnmt.transformer import ModelConfig

SMALL = dict(d_model=16, n_heads=2, n_layers=1, d_ff=32)


def small_cfg(data, **kw):
    return ModelConfig(len(data.src_vocab), len(data.tgt_vocab), **dict(SMALL, **kw))


def tcfg(**kw):
    base = dict(max_steps=20, warmup_steps=50, lr_factor=1.0, log_every=0, token_budget=64, seed=3)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def baseline(toy_data):
    return train_baseline(toy_data.corpus, small_cfg(toy_data), tcfg(), toy_data.vocab_hashes)


@pytest.fixture(scope="module")
def embeddings(baseline):
    return extract_embeddings(baseline.checkpoint())


class TestNoam:
    def test_first_step_base_config(self):
        assert noam_lr(1, 512, 4000) == pytest.approx(512 ** -0.5 * 4000 ** -1.5, rel=1e-12)
        assert noam_lr(1, 512, 4000) == pytest.approx(1.746e-7, rel=1e-3)

    def test_kink_at_warmup(self):
        assert noam_lr(400, 64, 400) == pytest.approx(64 ** -0.5 * 400 ** -0.5, rel=1e-12)

    def test_shape(self):
        lrs = [noam_lr(s, 64, 100) for s in range(1, 400)]
        assert all(a < b for a, b in zip(lrs[:99], lrs[1:100]))
        assert all(a > b for a, b in zip(lrs[99:], lrs[100:]))

    def test_factor_scales(self):
        assert noam_lr(10, 64, 100, factor=0.3) == pytest.approx(0.3 * noam_lr(10, 64, 100))


class TestAdam:
    def test_two_steps_by_hand(self):
        p = {"w": Tensor(np.array([1.0, -2.0]))}
        opt = Adam(0.9, 0.98, 1e-9)
        g1, g2 = np.array([0.5, -1.0]), np.array([0.1, 0.3])
        opt.step(p, {"w": g1}, 0.1)
        # first bias-corrected step is lr * sign(g)
        np.testing.assert_allclose(p["w"].data, [0.9, -1.9], atol=1e-8)
        opt.step(p, {"w": g2}, 0.1)
        m = 0.9 * 0.1 * g1 + 0.1 * g2
        v = 0.98 * 0.02 * g1 ** 2 + 0.02 * g2 ** 2
        step = 0.1 * (m / (1 - 0.9 ** 2)) / (np.sqrt(v / (1 - 0.98 ** 2)) + 1e-9)
        np.testing.assert_allclose(p["w"].data, np.array([0.9, -1.9]) - step, atol=1e-12)

    def test_frozen_names_get_no_state(self):
        p = {"a": Tensor(np.ones(2)), "b": Tensor(np.ones(2))}
        opt = Adam()
        adam_step(p, {"a": np.ones(2), "b": np.ones(2)}, opt, 0.1, frozen=frozenset({"b"}))
        assert set(opt.m) == {"a"} and p["b"].data.tolist() == [1.0, 1.0]

    def test_clip_by_global_norm(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        assert clip_by_global_norm(grads, 1.0) == pytest.approx(5.0)
        assert grads["a"][0] == pytest.approx(0.6) and grads["b"][0] == pytest.approx(0.8)
        small = {"a": np.array([0.1])}
        clip_by_global_norm(small, 1.0)
        assert small["a"][0] == 0.1


class TestTrainConfig:
    @pytest.mark.parametrize("kw", [dict(warmup_steps=0), dict(label_smoothing=1.0), dict(phase="x"),
                                    dict(token_budget=0)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)


class TestBaseline:
    def test_initial_loss_is_uniform(self, toy_data):
        cfg = small_cfg(toy_data, zero_init_output=True)
        model = NmtModel.initialize(cfg, 1)
        tr = Trainer(model, toy_data.corpus, tcfg())
        row = tr.train_step()
        expected = math.log(cfg.tgt_vocab_size)
        assert abs(row["loss"] - expected) / expected < 0.05

    def test_two_runs_bit_identical(self, toy_data, baseline):
        again = train_baseline(toy_data.corpus, small_cfg(toy_data), tcfg(), toy_data.vocab_hashes)
        assert again.checkpoint().to_bytes() == baseline.checkpoint().to_bytes()

    def test_resume_matches_uninterrupted(self, toy_data):
        cfg = small_cfg(toy_data, dropout=0.2)
        full = Trainer(NmtModel.initialize(cfg, 2), toy_data.corpus, tcfg(), None, toy_data.vocab_hashes)
        full.train(15)
        part = Trainer(NmtModel.initialize(cfg, 2), toy_data.corpus, tcfg(), None, toy_data.vocab_hashes)
        part.train(9)
        blob = part.checkpoint().to_bytes()
        resumed = Trainer.resume(Checkpoint.from_bytes(blob), toy_data.corpus)
        resumed.train(6)
        assert resumed.checkpoint().to_bytes() == full.checkpoint().to_bytes()

    def test_batches_cover_epochs(self, toy_data):
        tr = Trainer(NmtModel.initialize(small_cfg(toy_data), 0), toy_data.corpus, tcfg(seed=4))
        first = [tr.batch_at(s).doc_id for s in range(tr.n_batches)]
        second = [tr.batch_at(s).doc_id for s in range(tr.n_batches, 2 * tr.n_batches)]
        assert sorted(first) == sorted(second) and first != second

    def test_divergence_is_reported_with_step(self, toy_data):
        model = NmtModel.initialize(small_cfg(toy_data), 0)
        model.params["out.b"].data = np.full(model.params["out.b"].shape, np.nan)
        with pytest.raises(DivergenceError, match="step 1"):
            Trainer(model, toy_data.corpus, tcfg()).train_step()

    def test_log_rows(self, toy_data):
        rows = []
        tr = Trainer(NmtModel.initialize(small_cfg(toy_data), 0), toy_data.corpus, tcfg(log_every=5))
        tr.train(10, on_log=rows.append)
        assert [r["step"] for r in rows] == [5, 10]
        assert {"step", "lr", "loss", "tok_per_s"} <= set(rows[0])


class TestEnhanced:
    def test_frozen_tables_and_cache_unchanged(self, toy_data, embeddings):
        before = build_global_cache(toy_data.corpus, embeddings.params["src_embed"])
        cfg = small_cfg(toy_data).with_doc_mode("avg", "rnn+attn")
        tr = train_enhanced(toy_data.corpus, embeddings, cfg, tcfg(max_steps=25), toy_data.vocab_hashes)
        for name in ("src_embed", "tgt_embed"):
            assert tr.model.params[name].data.tobytes() == embeddings.params[name].tobytes()
            assert name not in tr.adam.m and name not in tr.adam.v
        after = build_global_cache(toy_data.corpus, tr.model.params["src_embed"].data)
        assert all(before[k].tobytes() == after[k].tobytes() for k in before)
        assert tr.lineage["embeddings"]["source_phase"] == "baseline"

    def test_doc_off_matches_plain_run_on_frozen_embeddings(self, toy_data, embeddings):
        cfg = small_cfg(toy_data)
        tc = tcfg(max_steps=12)
        enh = train_enhanced(toy_data.corpus, embeddings, cfg.with_doc_mode("off", "off"), tc,
                             toy_data.vocab_hashes, n_steps=0)
        losses_enh = [enh.train_step()["loss"] for _ in range(12)]
        plain_cfg = dataclasses.replace(cfg, dropout=tc.dropout, label_smoothing=tc.label_smoothing)
        tables = {k: embeddings.params[k] for k in ("src_embed", "tgt_embed")}
        plain = Trainer(NmtModel.initialize(plain_cfg, tc.seed, ("src_embed", "tgt_embed"), tables),
                        toy_data.corpus, tc)
        losses_plain = [plain.train_step()["loss"] for _ in range(12)]
        assert losses_enh == losses_plain

    def test_beta_gets_gradient_on_first_step(self, toy_data, embeddings):
        cfg = small_cfg(toy_data).with_doc_mode("off", "rnn+attn")
        tr = train_enhanced(toy_data.corpus, embeddings, cfg, tcfg(), toy_data.vocab_hashes, n_steps=0)
        tr.train_step()
        assert np.abs(tr.model.params["doc.beta"].grad).max() > 0

    def test_vocab_hash_mismatch(self, toy_data, embeddings):
        bad = dict(toy_data.vocab_hashes, tgt="0" * 64)
        with pytest.raises(IncompatibilityError):
            train_enhanced(toy_data.corpus, embeddings, small_cfg(toy_data), tcfg(), bad, n_steps=0)

    def test_warm_start_copies_transformer_weights(self, toy_data, embeddings, baseline):
        cfg = small_cfg(toy_data).with_doc_mode("avg", "avg")
        tr = train_enhanced(toy_data.corpus, embeddings, cfg, tcfg(warm_start=True), toy_data.vocab_hashes,
                            baseline=baseline.checkpoint(), n_steps=0)
        assert tr.model.params["enc.0.ffn.w1"].data.tobytes() == baseline.model.params["enc.0.ffn.w1"].data.tobytes()
        with pytest.raises(ConfigError):
            train_enhanced(toy_data.corpus, embeddings, cfg, tcfg(warm_start=True), toy_data.vocab_hashes,
                           n_steps=0)


class TestCheckpoint:
    def test_round_trip(self, baseline):
        ck = baseline.checkpoint()
        back = Checkpoint.from_bytes(ck.to_bytes())
        assert back.to_bytes() == ck.to_bytes()
        assert back.config == ck.config and back.step == ck.step and back.rng_state == ck.rng_state
        assert set(back.adam_m) == set(ck.adam_m)

    def test_embedding_export_only_has_tables(self, embeddings, baseline):
        assert embeddings.kind == "embeddings"
        assert sorted(embeddings.params) == ["src_embed", "tgt_embed"]
        assert embeddings.vocab_hashes == baseline.vocab_hashes

    def test_bad_header(self):
        with pytest.raises(CorpusError):
            Checkpoint.from_bytes(b"NOT-A-CHECKPOINT\n3\n{}")

    def test_save_load(self, baseline, tmp_path):
        path = str(tmp_path / "m.ckpt")
        baseline.checkpoint().save(path)
        assert Checkpoint.load(path).to_bytes() == baseline.checkpoint().to_bytes()


@pytest.mark.slow
def test_loss_falls_in_both_phases(toy_data):
    cfg = small_cfg(toy_data)
    tc = tcfg(max_steps=500, warmup_steps=100)
    hist = Trainer(NmtModel.initialize(cfg, 0), toy_data.corpus, tc).train(500)
    assert np.mean([r["loss"] for r in hist[490:]]) < np.mean([r["loss"] for r in hist[40:50]])
    untrained = Trainer(NmtModel.initialize(cfg, 0), toy_data.corpus, tc, None, toy_data.vocab_hashes)
    emb = extract_embeddings(untrained.checkpoint())
    enh = train_enhanced(toy_data.corpus, emb, cfg.with_doc_mode("avg", "attn"), tc, toy_data.vocab_hashes,
                         n_steps=0)
    hist = enh.train(500)
    assert np.mean([r["loss"] for r in hist[490:]]) < np.mean([r["loss"] for r in hist[40:50]])


@pytest.mark.slow
def test_copy_task_memorised(copy_model):
    corpus, tc, model = copy_model
    assert evaluate(model, corpus, tc.token_budget)["perplexity"] < 1.1
