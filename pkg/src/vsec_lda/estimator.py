"""scikit-learn style wrappers around the samplers.

Inputs are either a :class:`~vsec_lda.corpus.Corpus` or a sequence of
``(primary_ids, conditioned_ids)`` pairs.
"""

from __future__ import annotations

from numbers import Integral

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import CONDITIONED, PRIMARY, ROLES, Corpus, make_corpus
from .evaluation import _perplexity, infer_topics, predict_conditioned
from .sampler import Hyperparams, train_baseline
from .selection import ScheduleConfig, ThresholdState, train_vsec


def _as_ids(seq, what):
    out = []
    for w in seq:
        if isinstance(w, (bool, np.bool_)) or not isinstance(w, (Integral, np.integer)):
            raise TypeError(f"{what}: word ids must be integers, got {w!r}")
        if w < 0:
            raise ValueError(f"{what}: negative word id {w}")
        out.append(int(w))
    return out


def check_documents(X, n_primary: int | None = None, n_conditioned: int | None = None) -> Corpus:
    """Coerce ``X`` to a Corpus.

    A Corpus passes through unchanged. Otherwise ``X`` must be a nonempty
    sequence of (primary, conditioned) id sequences; vocabulary sizes default
    to one past the largest id seen.
    """
    if isinstance(X, Corpus):
        if n_primary is not None and len(X.vocab_primary) != n_primary:
            raise ValueError(
                f"corpus has {len(X.vocab_primary)} primary words, model expects {n_primary}"
            )
        if n_conditioned is not None and len(X.vocab_conditioned) != n_conditioned:
            raise ValueError(
                f"corpus has {len(X.vocab_conditioned)} conditioned words, "
                f"model expects {n_conditioned}"
            )
        return X
    if isinstance(X, (str, bytes)) or not hasattr(X, "__len__"):
        raise TypeError("X must be a Corpus or a sequence of (primary, conditioned) pairs")
    if len(X) == 0:
        raise ValueError("X has no documents")
    docs = []
    for i, pair in enumerate(X):
        try:
            p, c = pair
        except (TypeError, ValueError):
            raise ValueError(f"document {i}: expected a (primary, conditioned) pair") from None
        docs.append((_as_ids(p, f"document {i}"), _as_ids(c, f"document {i}")))
    C = 1 + max((w for p, _ in docs for w in p), default=-1)
    T = 1 + max((w for _, c in docs for w in c), default=-1)
    if n_primary is not None:
        if C > n_primary:
            raise ValueError(f"primary word id {C - 1} exceeds vocabulary size {n_primary}")
        C = n_primary
    if n_conditioned is not None:
        if T > n_conditioned:
            raise ValueError(
                f"conditioned word id {T - 1} exceeds vocabulary size {n_conditioned}"
            )
        T = n_conditioned
    if C == 0 or T == 0:
        raise ValueError("both modalities need at least one token")
    return make_corpus(docs, C, T)


class CorrLDA(BaseEstimator, TransformerMixin):
    """Correspondence topic model fit by collapsed Gibbs sampling.

    ``transform`` gives held-out topic proportions inferred from the primary
    tokens; ``predict_proba`` gives the predictive distribution over
    conditioned words and ``score`` the negative conditioned perplexity.
    Training uses the ``train`` split of a Corpus and every document of a
    plain pair list.
    """

    def __init__(
        self,
        n_topics=20,
        alpha=0.2,
        beta=0.1,
        gamma=0.1,
        zeta=0.5,
        max_iter=150,
        epsilon=1e-6,
        random_state=0,
        check=False,
    ):
        self.n_topics = n_topics
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.zeta = zeta
        self.max_iter = max_iter
        self.epsilon = epsilon
        self.random_state = random_state
        self.check = check

    def _hyper(self) -> Hyperparams:
        seed = self.random_state
        if seed is None:
            seed = 0
        elif not isinstance(seed, (Integral, np.integer)):
            raise TypeError("random_state must be an int or None")
        return Hyperparams(
            K=self.n_topics,
            alpha=self.alpha,
            beta=self.beta,
            gamma=self.gamma,
            zeta=self.zeta,
            max_iters=self.max_iter,
            epsilon=self.epsilon,
            seed=int(seed),
        )

    def _train(self, corpus, hyper):
        state, params, trajectory = train_baseline(corpus, hyper, check=self.check)
        return state, params, trajectory

    def fit(self, X, y=None):
        corpus = check_documents(X)
        hyper = self._hyper()
        self.hyper_ = hyper
        out = self._train(corpus, hyper)
        self.state_, self.params_, self.trajectory_ = out[:3]
        self.n_primary_ = len(corpus.vocab_primary)
        self.n_conditioned_ = len(corpus.vocab_conditioned)
        self.n_iter_ = self.state_.iteration
        return self

    @property
    def components_(self):
        check_is_fitted(self, "params_")
        return self.params_.phi

    def _corpus(self, X) -> Corpus:
        check_is_fitted(self, "params_")
        return check_documents(X, self.n_primary_, self.n_conditioned_)

    def transform(self, X):
        """θ̂ per document; documents with no active primary token get the uniform prior mean."""
        corpus = self._corpus(X)
        theta, usable = infer_topics(
            self.params_, self.hyper_, corpus.documents, seed=self.hyper_.seed
        )
        out = np.full((len(corpus), self.hyper_.K), 1.0 / self.hyper_.K)
        out[usable] = theta
        return out

    def predict_proba(self, X):
        return predict_conditioned(self.params_, self.transform(X))

    def predict(self, X):
        """Most probable conditioned word per document (smallest id on ties)."""
        return np.argmax(self.predict_proba(X), axis=1)

    def perplexity(self, X) -> float:
        corpus = self._corpus(X)
        theta, usable = infer_topics(
            self.params_, self.hyper_, corpus.documents, seed=self.hyper_.seed
        )
        return _perplexity(self.params_, corpus.documents, theta, usable)[0]

    def score(self, X, y=None):
        return -self.perplexity(X)


class VSECLDA(CorrLDA):
    """CorrLDA with entropy-based vocabulary selection during training.

    ``filter_modalities`` empty gives exactly the CorrLDA chain.
    """

    def __init__(
        self,
        n_topics=20,
        alpha=0.2,
        beta=0.1,
        gamma=0.1,
        zeta=0.5,
        max_iter=150,
        epsilon=1e-6,
        random_state=0,
        check=False,
        threshold="fixed",
        cap_fraction=0.30,
        cap_scope="cumulative",
        knee="min_error",
        burn_in=20,
        filter_modalities=ROLES,
        reestimate=True,
        reestimate_iter=50,
        min_words=None,
    ):
        super().__init__(
            n_topics=n_topics, alpha=alpha, beta=beta, gamma=gamma, zeta=zeta,
            max_iter=max_iter, epsilon=epsilon, random_state=random_state, check=check,
        )
        self.threshold = threshold
        self.cap_fraction = cap_fraction
        self.cap_scope = cap_scope
        self.knee = knee
        self.burn_in = burn_in
        self.filter_modalities = filter_modalities
        self.reestimate = reestimate
        self.reestimate_iter = reestimate_iter
        self.min_words = min_words

    def _train(self, corpus, hyper):
        ts = ThresholdState(
            mode=self.threshold,
            cap_fraction=self.cap_fraction,
            cap_scope=self.cap_scope,
            knee=self.knee,
        )
        schedule = ScheduleConfig(
            burn_in=self.burn_in,
            max_iters=self.max_iter,
            filter_modalities=tuple(self.filter_modalities),
            reestimate=self.reestimate,
            reestimate_iters=self.reestimate_iter,
            min_words=self.min_words,
        )
        state, params, report, trajectory, ts = train_vsec(
            corpus, hyper, ts, schedule, check=self.check
        )
        self.selection_report_ = report
        self.threshold_state_ = ts
        return state, params, trajectory

    @property
    def removed_words_(self) -> dict:
        check_is_fitted(self, "selection_report_")
        return {r: self.selection_report_.removed_ids(r) for r in (PRIMARY, CONDITIONED)}
