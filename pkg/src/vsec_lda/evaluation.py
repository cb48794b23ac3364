"""Held-out evaluation: likelihood scores, caption perplexity, annotation,
text-based retrieval and vocabulary-selection scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .corpus import CONDITIONED, PRIMARY, Corpus, Document, DocWordCounts, build_counts
from .sampler import Hyperparams, ModelParams, likelihood_score
from .synth import GroundTruth

INFER_BURN_IN = 10
INFER_SWEEPS = 50


def _doc_rng(seed: int, task: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(task)])


def infer_doc_topics(
    params: ModelParams,
    hyper: Hyperparams,
    doc: Document,
    seed: int = 0,
    task: int = 0,
    burn_in: int = INFER_BURN_IN,
    sweeps: int = INFER_SWEEPS,
) -> np.ndarray:
    """Topic proportions of an unseen document from its primary tokens alone.

    Topic-word distributions stay fixed at ``params.phi``. The returned
    proportions use the sampled conditionals averaged over the post-burn-in
    sweeps, smoothed by alpha.
    """
    words = np.asarray([w for w in doc.primary if params.active_primary[w]], dtype=np.int64)
    if words.size == 0:
        raise ValueError(f"document {doc.id!r} has no active primary tokens")
    K = params.theta.shape[1]
    if K == 1:
        return np.ones(1)
    rng = _doc_rng(seed, task)
    z = rng.integers(0, K, size=words.size)
    m_k = np.bincount(z, minlength=K).astype(float)
    log_phi_cols = np.ascontiguousarray(np.log(params.phi[:, words].T))
    u = rng.random((burn_in + sweeps, words.size))
    acc = np.zeros(K)
    _kernels.infer_sweeps(words, z, m_k, log_phi_cols, float(hyper.alpha), u, burn_in, acc)
    expected = acc / sweeps
    return (expected + hyper.alpha) / (words.size + K * hyper.alpha)


def infer_topics(params, hyper, docs, seed: int = 0, **kw) -> tuple[np.ndarray, np.ndarray]:
    """θ̂ for every document with an active primary token.

    Returns (theta_hat rows for the usable documents, boolean usable mask).
    """
    K = params.theta.shape[1]
    usable = np.array([any(params.active_primary[w] for w in d.primary) for d in docs], dtype=bool)
    theta = np.empty((int(usable.sum()), K))
    row = 0
    for task, (doc, ok) in enumerate(zip(docs, usable)):
        if ok:
            theta[row] = infer_doc_topics(params, hyper, doc, seed=seed, task=task, **kw)
            row += 1
    return theta, usable


def _test_docs(corpus: Corpus):
    idx = corpus.indices("test")
    if not idx:
        raise ValueError("corpus has no test documents")
    return [corpus.documents[i] for i in idx]


def excluded_tokens(params: ModelParams, corpus: Corpus) -> dict:
    """Test tokens of filtered words, which scoring leaves out."""
    docs = _test_docs(corpus)
    return {
        PRIMARY: sum(not params.active_primary[w] for d in docs for w in d.primary),
        CONDITIONED: sum(not params.active_conditioned[w] for d in docs for w in d.conditioned),
    }


def held_out_score(params: ModelParams, hyper: Hyperparams, corpus: Corpus, seed: int = 0, **kw):
    """(score_primary, score_conditioned) on the test split; lower is better."""
    docs = _test_docs(corpus)
    theta, usable = infer_topics(params, hyper, docs, seed=seed, **kw)
    if not usable.any():
        raise ValueError("no test document has active primary tokens")
    counts = build_counts(corpus, "test")
    keep = np.flatnonzero(usable)
    sub = DocWordCounts(counts.primary[keep], counts.conditioned[keep])
    test_params = ModelParams(
        theta, params.phi, params.psi, params.active_primary, params.active_conditioned
    )
    return likelihood_score(test_params, sub)


def predict_conditioned(params: ModelParams, theta_hat) -> np.ndarray:
    """p(w | document) = Σ_k ψ[k, w] θ̂[k] over conditioned words (0 on filtered ones)."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    return theta_hat @ params.psi


def annotate(params, hyper, doc: Document, top_n: int = 5, seed: int = 0, task: int = 0) -> list[int]:
    """Top-n conditioned word-ids for a document; ties go to the smaller id."""
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    p = predict_conditioned(params, infer_doc_topics(params, hyper, doc, seed=seed, task=task))
    ids = np.flatnonzero(params.active_conditioned)
    order = np.lexsort((ids, -p[ids]))
    return ids[order][:top_n].tolist()


def _perplexity(params, docs, theta, usable):
    pred = predict_conditioned(params, theta)
    total, n, excluded = 0.0, 0, 0
    row = 0
    for doc, ok in zip(docs, usable):
        if not ok:
            excluded += len(doc.conditioned)
            continue
        for w in doc.conditioned:
            if params.active_conditioned[w]:
                total += math.log(pred[row, w])
                n += 1
            else:
                excluded += 1
        row += 1
    if n == 0:
        raise ValueError("no scorable conditioned test tokens")
    return math.exp(-total / n), excluded


def perplexity(params, hyper, corpus: Corpus, seed: int = 0, return_excluded: bool = False, **kw):
    """exp(-mean log p(w | v_d)) over the test split's conditioned tokens.

    Tokens of filtered conditioned words and documents with no active
    primary token are left out; ``return_excluded`` also returns that count.
    """
    docs = _test_docs(corpus)
    theta, usable = infer_topics(params, hyper, docs, seed=seed, **kw)
    value, excluded = _perplexity(params, docs, theta, usable)
    return (value, excluded) if return_excluded else value


def retrieval_scores(params: ModelParams, theta_hat, query) -> np.ndarray:
    """Log relevance of each document for a multiset of conditioned word-ids.

    ``log score_i = Σ_q log Σ_k ψ[k, q] θ̂_i[k]``; ranking by it equals
    ranking by the product of per-word probabilities.
    """
    query = np.asarray(list(query), dtype=np.int64)
    if query.size == 0:
        raise ValueError("query must be nonempty")
    inactive = [int(q) for q in query if not params.active_conditioned[q]]
    if inactive:
        raise ValueError(f"query word {inactive[0]} is not in the active vocabulary")
    probs = np.asarray(theta_hat, dtype=float) @ params.psi[:, query]
    return np.log(probs).sum(axis=1)


def rank_of(scores: np.ndarray, target: int) -> int:
    """1-based rank of ``target`` under descending score, ties by ascending index."""
    s = scores[target]
    return int(1 + np.sum(scores > s) + np.sum(scores[:target] == s))


def ranking(scores: np.ndarray) -> np.ndarray:
    idx = np.arange(len(scores))
    return np.lexsort((idx, -np.asarray(scores)))


def retrieval_ranks(params: ModelParams, theta_hat, queries) -> np.ndarray:
    """Rank of document i when querying with ``queries[i]``; empty queries give 0."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    T = params.psi.shape[1]
    rows, cols = [], []
    for i, q in enumerate(queries):
        for w in q:
            if not params.active_conditioned[w]:
                raise ValueError(f"query word {w} is not in the active vocabulary")
            rows.append(i)
            cols.append(w)
    qmat = sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(len(queries), T)
    )
    logp = np.full((theta_hat.shape[0], T), -np.inf)
    act = params.active_conditioned
    logp[:, act] = np.log(theta_hat @ params.psi[:, act])
    logp[:, ~act] = 0.0
    scores = np.asarray(qmat @ logp.T)  # queries x documents
    ranks = np.zeros(len(queries), dtype=np.int64)
    for i, q in enumerate(queries):
        if len(q):
            ranks[i] = rank_of(scores[i], i)
    return ranks


def err_rate(ranks, e: float, D_test: int) -> float:
    """Fraction of queries whose document is not within the top ``e`` of the list."""
    if not 0 <= e <= 1:
        raise ValueError("e must lie in [0, 1]")
    ranks = np.asarray(ranks, dtype=float)
    if ranks.size == 0:
        raise ValueError("no ranks")
    hit = ranks <= e * D_test + 1e-9
    return float(1.0 - hit.mean())


def recall_at(ranks, fraction: float, D_test: int) -> float:
    """Fraction of queries whose document ranks within ceil(fraction * D_test)."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    ranks = np.asarray(ranks)
    cutoff = math.ceil(fraction * D_test - 1e-9)
    return float((ranks <= cutoff).mean())


def err_curve(ranks, D_test: int) -> list[tuple[float, float]]:
    return [(e / 100, err_rate(ranks, e / 100, D_test)) for e in range(1, 101)]


@dataclass
class SelectionScore:
    irrelevant_removed: int
    irrelevant_total: int
    relevant_removed: int
    relevant_total: int

    @property
    def precision(self) -> float | None:
        removed = self.irrelevant_removed + self.relevant_removed
        return self.irrelevant_removed / removed if removed else None

    @property
    def recall(self) -> float:
        return self.irrelevant_removed / self.irrelevant_total if self.irrelevant_total else 0.0

    def to_json(self) -> dict:
        return {
            "irrelevant_removed": self.irrelevant_removed,
            "irrelevant_total": self.irrelevant_total,
            "relevant_removed": self.relevant_removed,
            "relevant_total": self.relevant_total,
            "precision": self.precision,
            "recall": self.recall,
        }


def selection_score(truth: GroundTruth, final_masks: dict) -> dict[str, SelectionScore]:
    out = {}
    for role in (PRIMARY, CONDITIONED):
        rel = truth.relevant_mask(role)
        active = np.asarray(final_masks[role], dtype=bool)
        if active.shape != rel.shape:
            raise ValueError(f"{role}: mask and ground truth cover different vocabularies")
        out[role] = SelectionScore(
            irrelevant_removed=int(np.sum(~active & ~rel)),
            irrelevant_total=int(np.sum(~rel)),
            relevant_removed=int(np.sum(~active & rel)),
            relevant_total=int(np.sum(rel)),
        )
    return out


def evaluate(params, hyper, corpus: Corpus, seed: int = 0, truth: GroundTruth | None = None, **kw):
    """Every metric on the test split.

    Returns (metrics dict, per-query rank rows, D_test).
    """
    docs = _test_docs(corpus)
    theta, usable = infer_topics(params, hyper, docs, seed=seed, **kw)
    counts = build_counts(corpus, "test")
    keep = np.flatnonzero(usable)
    test_params = ModelParams(
        theta, params.phi, params.psi, params.active_primary, params.active_conditioned
    )
    sp_, sc_ = likelihood_score(
        test_params, DocWordCounts(counts.primary[keep], counts.conditioned[keep])
    )
    ppl, ppl_excluded = _perplexity(params, docs, theta, usable)

    usable_docs = [d for d, ok in zip(docs, usable) if ok]
    queries = [[w for w in d.conditioned if params.active_conditioned[w]] for d in usable_docs]
    ranks = retrieval_ranks(params, theta, queries)
    D_test = len(usable_docs)
    answered = ranks > 0
    rank_rows = [
        (d.id, int(r), D_test) for d, r, ok in zip(usable_docs, ranks, answered) if ok
    ]
    good = ranks[answered]
    metrics = {
        "score_primary": sp_,
        "score_conditioned": sc_,
        "perplexity": ppl,
        "recall_at_10pct": recall_at(good, 0.1, D_test) if good.size else None,
        "err_rate_at_10pct": err_rate(good, 0.1, D_test) if good.size else None,
        "n_test_docs": len(docs),
        "n_scored_docs": D_test,
        "n_queries": int(answered.sum()),
        "excluded_tokens": excluded_tokens(params, corpus),
        "perplexity_excluded_tokens": ppl_excluded,
        "active_primary_words": int(params.active_primary.sum()),
        "active_conditioned_words": int(params.active_conditioned.sum()),
    }
    if truth is not None:
        masks = {PRIMARY: params.active_primary, CONDITIONED: params.active_conditioned}
        metrics["selection"] = {r: s.to_json() for r, s in selection_score(truth, masks).items()}
    return metrics, rank_rows, D_test
