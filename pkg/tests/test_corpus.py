import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vsec_lda.corpus import (
    CONDITIONED,
    PRIMARY,
    Corpus,
    CorpusFormatError,
    CorpusValidationError,
    Document,
    Vocabulary,
    apply_mask,
    build_counts,
    load_corpus,
    make_corpus,
    save_corpus,
)
from vsec_lda.synth import SynthConfig, generate_corpus


def write_dir(path, vp, vc, docs):
    path.mkdir(parents=True, exist_ok=True)
    (path / "vocab_primary.tsv").write_text("".join(f"{i}\t{t}\n" for i, t in enumerate(vp)))
    (path / "vocab_conditioned.tsv").write_text("".join(f"{i}\t{t}\n" for i, t in enumerate(vc)))
    (path / "documents.jsonl").write_text("".join(json.dumps(d) + "\n" for d in docs))


def test_load_two_docs(tmp_path):
    write_dir(
        tmp_path, ["a", "b", "c"], ["x", "y"],
        [{"id": "d0", "primary": [0, 2], "conditioned": [1]},
         {"id": "d1", "primary": [1], "conditioned": [0, 0], "split": "test"}],
    )
    corpus = load_corpus(tmp_path)
    assert len(corpus) == 2
    assert len(corpus.vocab_primary) == 3 and len(corpus.vocab_conditioned) == 2
    assert corpus.split == ("train", "test")
    assert corpus.documents[1].conditioned == (0, 0)


def test_out_of_range_word_id(tmp_path):
    write_dir(tmp_path, list("abcde"), ["x"], [{"id": "d0", "primary": [7], "conditioned": [0]}])
    with pytest.raises(CorpusValidationError, match="word-id 7"):
        load_corpus(tmp_path)


def test_malformed_line_names_file_and_line(tmp_path):
    write_dir(tmp_path, ["a"], ["x"], [{"id": "d0", "primary": [0], "conditioned": [0]}])
    with open(tmp_path / "documents.jsonl", "a") as fh:
        fh.write("{not json\n")
    with pytest.raises(CorpusFormatError, match="documents.jsonl:2"):
        load_corpus(tmp_path)


def test_noncontiguous_vocab(tmp_path):
    write_dir(tmp_path, ["a"], ["x"], [{"id": "d0", "primary": [0], "conditioned": [0]}])
    (tmp_path / "vocab_primary.tsv").write_text("0\ta\n2\tb\n")
    with pytest.raises(CorpusFormatError, match="contiguous"):
        load_corpus(tmp_path)


def test_missing_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_corpus(tmp_path / "nope")


def test_synthetic_round_trip(tmp_path):
    corpus, _ = generate_corpus(SynthConfig(K=3, C_rel=20, T_rel=5, C_irr=4, T_irr=2, D=30))
    save_corpus(corpus, tmp_path)
    assert load_corpus(tmp_path) == corpus


def test_masked_round_trip(tmp_path):
    corpus = make_corpus([([0, 1], [0]), ([2], [1])], 3, 2).with_masks(primary=[True, False, True])
    save_corpus(corpus, tmp_path)
    back = load_corpus(tmp_path)
    assert back == corpus
    assert back.vocab_primary.active == (True, False, True)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(
        st.tuples(st.lists(st.integers(0, 4), max_size=6), st.lists(st.integers(0, 2), max_size=4)),
        min_size=1,
        max_size=6,
    )
)
def test_round_trip_property(tmp_path_factory, docs):
    corpus = make_corpus(docs, 5, 3)
    path = tmp_path_factory.mktemp("rt")
    save_corpus(corpus, path)
    assert load_corpus(path) == corpus


def test_save_to_unwritable_location(tmp_path):
    corpus = make_corpus([([0], [0])], 1, 1)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        save_corpus(corpus, blocker / "sub")


def test_empty_corpus_rejected_before_writing(tmp_path):
    with pytest.raises(CorpusValidationError):
        Corpus((), Vocabulary(PRIMARY, ["a"]), Vocabulary(CONDITIONED, ["x"]))
    assert not any(tmp_path.iterdir())


def test_duplicate_ids_rejected():
    with pytest.raises(CorpusValidationError, match="unique"):
        Corpus(
            (Document("a", [0], [0]), Document("a", [0], [0])),
            Vocabulary(PRIMARY, ["v"]),
            Vocabulary(CONDITIONED, ["w"]),
        )


def test_counts_of_one_document():
    corpus = make_corpus([([0, 0, 1], [2])], 4, 3)
    counts = build_counts(corpus)
    assert counts.primary.toarray()[0].tolist() == [2, 1, 0, 0]
    assert counts.conditioned.toarray()[0].tolist() == [0, 0, 1]


def test_counts_match_generator_totals():
    config = SynthConfig(K=3, C_rel=30, T_rel=6, C_irr=5, T_irr=2, D=200, length_dist="poisson", seed=2)
    corpus, truth = generate_corpus(config)
    counts = build_counts(corpus, None)
    assert counts.primary.sum() == truth.M.sum() + truth.IM.sum()
    assert counts.conditioned.sum() == truth.N.sum() + truth.IN.sum()


def test_counts_empty_split():
    corpus = make_corpus([([0], [0])], 1, 1)
    with pytest.raises(CorpusValidationError):
        build_counts(corpus, "test")


def test_apply_mask_identity():
    corpus = make_corpus([([0, 1], [0])], 2, 1)
    assert apply_mask(corpus) is corpus


def test_apply_mask_drops_tokens():
    corpus = make_corpus([([0, 1, 1, 2], [0])], 3, 1).with_masks(primary=[True, False, True])
    assert apply_mask(corpus).documents[0].primary == (0, 2)


def test_mask_planted_irrelevant():
    config = SynthConfig(K=3, C_rel=30, T_rel=6, C_irr=5, T_irr=2, D=100, seed=4)
    corpus, truth = generate_corpus(config)
    masked = apply_mask(corpus.with_masks(truth.relevant_primary, truth.relevant_conditioned))
    before = np.array([len(d.primary) for d in corpus.documents])
    after = np.array([len(d.primary) for d in masked.documents])
    assert np.array_equal(before - after, truth.IM)
    before = np.array([len(d.conditioned) for d in corpus.documents])
    after = np.array([len(d.conditioned) for d in masked.documents])
    assert np.array_equal(before - after, truth.IN)


def test_restrict_zeroes_inactive_columns():
    counts = build_counts(make_corpus([([0, 1, 1], [0, 1])], 2, 2))
    r = counts.restrict([True, False], [False, True])
    assert r.primary.toarray().tolist() == [[1, 0]]
    assert r.conditioned.toarray().tolist() == [[0, 1]]
