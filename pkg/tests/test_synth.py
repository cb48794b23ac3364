import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from vsec_lda.synth import (
    GroundTruth,
    SynthConfig,
    generate_corpus,
    generate_document,
    load_truth,
    sample_dirichlet,
    save_truth,
)


def test_dirichlet_huge_concentration():
    rng = np.random.default_rng(0)
    draws = np.stack([sample_dirichlet([1e9, 1e9], rng) for _ in range(1000)])
    assert np.all(np.abs(draws - 0.5) < 1e-3)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(1e-3, 50), min_size=1, max_size=8), st.integers(0, 2**32 - 1))
def test_dirichlet_simplex(conc, seed):
    x = sample_dirichlet(conc, np.random.default_rng(seed))
    assert np.all(x >= 0)
    assert abs(x.sum() - 1) < 1e-12


def test_dirichlet_tiny_concentration_stays_on_simplex():
    x = sample_dirichlet([1e-4] * 5, np.random.default_rng(1))
    assert abs(x.sum() - 1) < 1e-12


def test_dirichlet_mean():
    rng = np.random.default_rng(3)
    draws = np.stack([sample_dirichlet([2, 1, 1], rng) for _ in range(10000)])
    assert np.allclose(draws.mean(axis=0), [0.5, 0.25, 0.25], atol=0.02)


@pytest.mark.parametrize("bad", [[], [1, 0], [-1, 2]])
def test_dirichlet_rejects(bad):
    with pytest.raises(ValueError):
        sample_dirichlet(bad, np.random.default_rng(0))


def test_no_noise_only_relevant_ids():
    config = SynthConfig(K=3, C_rel=20, T_rel=5, C_irr=7, T_irr=3, D=50, irr_fraction=0)
    corpus, _ = generate_corpus(config)
    assert all(w < 20 for d in corpus.documents for w in d.primary)
    assert all(w < 5 for d in corpus.documents for w in d.conditioned)


def test_single_topic():
    config = SynthConfig(K=1, C_rel=10, T_rel=4, D=20, irr_fraction=0, C_irr=0, T_irr=0)
    corpus, truth = generate_corpus(config)
    assert np.all(truth.theta == 1.0)
    rng = np.random.default_rng(0)
    # every relevant token must come from the one topic's support
    doc, _ = generate_document(config, truth, 0, rng)
    assert all(truth.phi[0, w] > 0 for w in doc.primary)
    assert all(truth.psi[0, w] > 0 for w in doc.conditioned)


def test_irrelevant_tokens_uniform():
    config = SynthConfig(K=4, C_rel=50, T_rel=10, C_irr=40, T_irr=5, D=1000, seed=11)
    corpus, _ = generate_corpus(config)
    noise = np.array([w - 50 for d in corpus.documents for w in d.primary if w >= 50])
    observed = np.bincount(noise, minlength=40)
    assert stats.chisquare(observed).pvalue > 0.01


def test_irrelevant_share():
    config = SynthConfig(K=2, C_rel=10, T_rel=4, C_irr=3, T_irr=2, D=10)
    assert config.irr_primary_count == 12
    assert config.irr_conditioned_count == 1
    corpus, truth = generate_corpus(config)
    assert all(len(d.primary) == 62 and len(d.conditioned) == 6 for d in corpus.documents)
    assert np.all(truth.IM == 12) and np.all(truth.IN == 1)


def test_default_scale_split_sizes():
    config = SynthConfig(K=20, C_rel=800, T_rel=80, D=8000, alpha=0.2, beta=0.1, gamma=0.1)
    corpus, _ = generate_corpus(config)
    assert len(corpus.indices("train")) == 7200
    assert len(corpus.indices("test")) == 800


def test_determinism(tmp_path):
    from vsec_lda.corpus import save_corpus

    config = SynthConfig(K=3, C_rel=20, T_rel=5, C_irr=4, T_irr=2, D=40, seed=9)
    for name in ("a", "b"):
        corpus, truth = generate_corpus(config)
        save_corpus(corpus, tmp_path / name)
        save_truth(truth, tmp_path / name / "truth.json", config)
    for f in ("documents.jsonl", "vocab_primary.tsv", "vocab_conditioned.tsv", "truth.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_truth_round_trip(tmp_path):
    config = SynthConfig(K=3, C_rel=20, T_rel=5, C_irr=4, T_irr=2, D=10)
    _, truth = generate_corpus(config)
    save_truth(truth, tmp_path / "t.json")
    back = load_truth(tmp_path / "t.json")
    assert isinstance(back, GroundTruth)
    assert np.array_equal(back.phi, truth.phi)
    assert np.array_equal(back.relevant_primary, truth.relevant_primary)
    assert np.array_equal(back.IM, truth.IM)


def test_topic_word_frequencies_follow_planted_mixture():
    config = SynthConfig(K=20, C_rel=800, T_rel=80, D=8000, irr_fraction=0.2, seed=1)
    corpus, truth = generate_corpus(config)
    counts = np.zeros(800)
    for d in corpus.documents:
        np.add.at(counts, [w for w in d.primary if w < 800], 1)
    empirical = counts / counts.sum()
    expected = truth.theta.mean(axis=0) @ truth.phi
    assert 0.5 * np.abs(empirical - expected).sum() < 0.02


@pytest.mark.parametrize(
    "kw",
    [dict(K=0), dict(alpha=0), dict(D=0), dict(irr_fraction=1.0), dict(test_fraction=0),
     dict(length_dist="zipf"), dict(C_irr=0)],
)
def test_invalid_config(kw):
    with pytest.raises(ValueError):
        SynthConfig(**kw)
