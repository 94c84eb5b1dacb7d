
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from docnmt import toy
from docnmt.data import (BOS, EOS, PAD, UNK, BpeModel, Document, ParallelDocCorpus, Vocabulary,
                         context_window, encode_corpus, load_corpus, make_batches,
                         pack_document, remove_bpe)
from docnmt.errors import CorpusError, EmptyDocumentError, MissingFileError, OversizeSentenceError


def write(path, lines):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("".join(line + "\n" for line in lines))
    return str(path)


@pytest.fixture
def two_doc_files(tmp_path):
    src = write(tmp_path / "a.src", ["a b", "c d e", "f", "g h", "i"])
    tgt = write(tmp_path / "a.tgt", ["A B", "C D E", "F", "G H", "I"])
    bnd = write(tmp_path / "a.bnd", ["d1\t0\t3", "d2\t3\t2"])
    return src, tgt, bnd, tmp_path


class TestLoadCorpus:
    def test_two_documents(self, two_doc_files):
        src, tgt, bnd, _ = two_doc_files
        corpus = load_corpus(src, tgt, bnd)
        assert [len(d) for d in corpus] == [3, 2]
        assert [d.doc_id for d in corpus] == ["d1", "d2"]
        assert corpus.documents[0].pairs[1] == (["c", "d", "e"], ["C", "D", "E"])

    def test_gap_is_an_error(self, two_doc_files):
        src, tgt, _, tmp = two_doc_files
        bnd = write(tmp / "gap.bnd", ["d1\t0\t4"])
        with pytest.raises(CorpusError, match="gap"):
            load_corpus(src, tgt, bnd)

    def test_internal_gap_and_overlap(self, two_doc_files):
        src, tgt, _, tmp = two_doc_files
        with pytest.raises(CorpusError, match="gap"):
            load_corpus(src, tgt, write(tmp / "g.bnd", ["d1\t0\t2", "d2\t3\t2"]))
        with pytest.raises(CorpusError, match="overlap"):
            load_corpus(src, tgt, write(tmp / "o.bnd", ["d1\t0\t3", "d2\t2\t3"]))

    def test_single_document(self, two_doc_files):
        src, tgt, _, tmp = two_doc_files
        corpus = load_corpus(src, tgt, write(tmp / "one.bnd", ["all\t0\t5"]))
        assert len(corpus) == 1 and len(corpus.documents[0]) == 5

    def test_line_count_mismatch(self, two_doc_files):
        src, _, bnd, tmp = two_doc_files
        tgt = write(tmp / "short.tgt", ["x"] * 4)
        with pytest.raises(CorpusError, match="line-count"):
            load_corpus(src, tgt, bnd)

    def test_empty_document(self, two_doc_files):
        src, tgt, _, tmp = two_doc_files
        with pytest.raises(EmptyDocumentError):
            load_corpus(src, tgt, write(tmp / "e.bnd", ["d1\t0\t5", "d2\t5\t0"]))

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFileError):
            load_corpus(str(tmp_path / "nope"), None, str(tmp_path / "nope.bnd"))


class TestBpe:
    def test_merge_order_trace(self):
        assert BpeModel([("l", "o"), ("lo", "w")]).apply(["low"]) == ["low"]

    def test_rank_decides_not_position(self):
        # ("o","w") outranks ("l","o") so "l" is left alone
        assert BpeModel([("o", "w"), ("l", "o")]).apply(["low"]) == ["l@@", "ow"]

    def test_no_merges_is_character_split(self):
        assert BpeModel([]).apply(["low"]) == ["l@@", "o@@", "w"]

    def test_unseen_characters_pass_through(self):
        assert BpeModel([("a", "b")]).apply(["xab"]) == ["x@@", "ab"]

    def test_merges_file_skips_version_header(self, tmp_path):
        path = write(tmp_path / "m", ["#version: 0.2", "l o", "lo w"])
        assert BpeModel.load(path).merges == [("l", "o"), ("lo", "w")]

    def test_bad_merge_line(self, tmp_path):
        with pytest.raises(CorpusError):
            BpeModel.load(write(tmp_path / "m", ["l o w"]))

    def test_round_trip_on_toy_lines(self):
        paths = toy.bundled_paths()
        bpe = BpeModel.load(paths["src.merges"])
        with open(paths["train.src"], encoding="utf-8") as fh:
            lines = [line.split() for line in fh]
        rng = np.random.default_rng(0)
        for i in rng.integers(0, len(lines), size=100):
            words = lines[i]
            assert remove_bpe(" ".join(bpe.apply(words))) == " ".join(words)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.text(alphabet="abcdelo", min_size=1, max_size=8), min_size=1, max_size=6),
           st.lists(st.tuples(st.sampled_from(["a", "b", "l", "o", "lo", "ab", "e"]),
                              st.sampled_from(["a", "b", "o", "w", "d", "lo", "c"])), max_size=8))
    def test_round_trip_and_determinism(self, words, merges):
        bpe = BpeModel(merges)
        seg = bpe.apply(words)
        assert remove_bpe(" ".join(seg)) == " ".join(words)
        assert BpeModel(merges).apply(words) == seg


class TestVocabulary:
    def test_reserved_ids_and_ordering(self):
        v = Vocabulary.build([["b", "a", "b"], ["c", "a", "b"]])
        assert v.tokens[:4] == ["<pad>", "<s>", "</s>", "<unk>"]
        assert (PAD, BOS, EOS, UNK) == (0, 1, 2, 3)
        # frequency desc, then lexicographic
        assert v.tokens[4:] == ["b", "a", "c"]

    def test_cap_and_unk(self):
        v = Vocabulary.build([["x", "x", "y", "z"]], max_size=5)
        assert len(v) == 5
        assert v.encode(["x", "z"]) == [4, UNK]

    def test_dump_round_trip(self, tmp_path):
        v = Vocabulary.build([["b", "a", "b"]])
        v.save(tmp_path / "v")
        w = Vocabulary.load(str(tmp_path / "v"))
        assert w.tokens == v.tokens and w.content_hash == v.content_hash
        assert (tmp_path / "v").read_text().splitlines()[4] == "b\t4"


def id_corpus(lengths_per_doc):
    docs = []
    for k, lengths in enumerate(lengths_per_doc):
        src = [[4 + (j % 5)] * n for j, n in enumerate(lengths)]
        tgt = [[5] * (n + 1) for n in lengths]
        docs.append(Document(f"d{k}", src, tgt))
    return ParallelDocCorpus(docs)


class TestBatching:
    def test_greedy_packing_trace(self):
        assert pack_document([3, 3, 3, 3, 3], 9) == [[0, 1, 2], [3, 4]]

    def test_budget_equal_to_document(self):
        corpus = id_corpus([[2, 3, 4], [1, 1]])
        batches = make_batches(corpus, token_budget=9, shuffle_seed=None)
        assert [(b.doc_id, b.size) for b in batches] == [("d0", 3), ("d1", 2)]

    def test_oversize_sentence(self):
        corpus = id_corpus([[2, 7, 4]])
        with pytest.raises(OversizeSentenceError, match="sentence 1"):
            make_batches(corpus, token_budget=6)

    def test_padding_and_masks(self):
        corpus = id_corpus([[2, 4]])
        (b,) = make_batches(corpus, 100)
        assert b.src.shape == (2, 4)
        np.testing.assert_array_equal(b.src_pad_mask, b.src == PAD)
        assert b.src_pad_mask.tolist() == [[False, False, True, True], [False] * 4]
        assert b.tgt_in[:, 0].tolist() == [BOS, BOS]
        assert b.tgt_out[0, 3] == EOS and b.tgt_out[0, 4] == PAD

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.lists(st.integers(1, 6), min_size=1, max_size=6), min_size=1, max_size=6),
           st.integers(6, 20), st.integers(0, 1000), st.integers(0, 3))
    def test_coverage_contiguity_and_budget(self, lengths, budget, seed, epoch):
        corpus = id_corpus(lengths)
        batches = make_batches(corpus, budget, seed, epoch)
        seen = []
        for b in batches:
            assert b.sent_indices == list(range(b.sent_indices[0], b.sent_indices[-1] + 1))
            assert b.n_src_tokens <= budget
            assert b.doc_id == corpus.documents[b.doc_index].doc_id
            np.testing.assert_array_equal(b.src == PAD, b.src_pad_mask)
            seen.extend((b.doc_index, j) for j in b.sent_indices)
        assert sorted(seen) == sorted(corpus.sentence_ids())
        # batches of one document stay adjacent and in order
        doc_seq = [b.doc_index for b in batches]
        assert all(doc_seq.index(d) + doc_seq.count(d) - 1 == len(doc_seq) - 1 - doc_seq[::-1].index(d)
                   for d in set(doc_seq))

    def test_shuffle_is_seeded(self):
        corpus = id_corpus([[1]] * 8)
        a = [b.doc_id for b in make_batches(corpus, 5, 7, 0)]
        assert a == [b.doc_id for b in make_batches(corpus, 5, 7, 0)]
        assert a != [b.doc_id for b in make_batches(corpus, 5, 7, 1)]


class TestEncodeCorpus:
    def test_max_len_enforced(self):
        raw = ParallelDocCorpus([Document("d", [["a"] * 5], [["b"]])])
        v = Vocabulary.build([["a", "b"]])
        with pytest.raises(OversizeSentenceError, match="line 1"):
            encode_corpus(raw, None, None, v, v, max_len=4)


class TestWindow:
    def test_symmetric_default(self):
        assert context_window(10, 5) == [3, 4, 5, 6]

    def test_clipped_at_boundaries(self):
        assert context_window(5, 0) == [0, 1]
        assert context_window(5, 4) == [2, 3, 4]
        assert context_window(1, 0) == [0]

    def test_past_only(self):
        assert context_window(10, 5, "past") == [3, 4, 5]


def test_bundled_toy_corpus_matches_generator(tmp_path):
    fresh = toy.write(str(tmp_path))
    for name, path in toy.bundled_paths().items():
        with open(path, encoding="utf-8") as a, open(fresh[name], encoding="utf-8") as b:
            assert a.read() == b.read(), name


def test_toy_corpus_shape():
    p = toy.bundled_paths()
    corpus = load_corpus(p["train.src"], p["train.tgt"], p["train.bnd"])
    assert corpus.n_sentences() == 50
    assert len({" ".join(s) for d in corpus for s in d.src}) == 50
