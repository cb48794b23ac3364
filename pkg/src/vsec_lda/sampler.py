"""Collapsed Gibbs inference for the correspondence topic model.

Topics are 0-based internally. Token assignments live in flat arrays with
per-document offsets (CSR layout) so the compiled sweep can walk them; only
tokens of active words are stored.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .corpus import Corpus, DocWordCounts, apply_mask

logger = logging.getLogger(__name__)


class InvariantViolation(RuntimeError):
    """Count matrices disagree with the topic assignments."""


@dataclass
class Hyperparams:
    K: int = 20
    alpha: float = 0.2
    beta: float = 0.1
    gamma: float = 0.1
    zeta: float = 0.5
    max_iters: int = 150
    epsilon: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.K < 2:
            raise ValueError("K must be >= 2")
        for name in ("alpha", "beta", "gamma", "zeta", "epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class ModelState:
    K: int
    doc_ids: tuple[str, ...]
    ptr_p: np.ndarray
    wp: np.ndarray
    z: np.ndarray
    ptr_c: np.ndarray
    wc: np.ndarray
    y: np.ndarray
    M_dk: np.ndarray
    N_dk: np.ndarray
    M_kc: np.ndarray
    N_kt: np.ndarray
    M_k: np.ndarray
    N_k: np.ndarray
    M_d: np.ndarray
    N_d: np.ndarray
    active_primary: np.ndarray
    active_conditioned: np.ndarray
    rng: np.random.Generator = field(repr=False, default=None)
    iteration: int = 0

    @property
    def D(self) -> int:
        return len(self.doc_ids)

    @property
    def C(self) -> int:
        """Number of active primary words."""
        return int(self.active_primary.sum())

    @property
    def T(self) -> int:
        return int(self.active_conditioned.sum())

    def counts(self) -> DocWordCounts:
        """Doc x word frequencies of the tokens currently held by the state."""
        D = self.D
        p = sp.csr_matrix(
            (np.ones(len(self.wp), dtype=np.int64), self.wp.copy(), self.ptr_p.copy()),
            shape=(D, len(self.active_primary)),
        )
        c = sp.csr_matrix(
            (np.ones(len(self.wc), dtype=np.int64), self.wc.copy(), self.ptr_c.copy()),
            shape=(D, len(self.active_conditioned)),
        )
        p.sum_duplicates()
        c.sum_duplicates()
        return DocWordCounts(p, c, self.doc_ids)

    def copy(self) -> "ModelState":
        kw = {}
        for f in self.__dataclass_fields__:
            v = getattr(self, f)
            kw[f] = v.copy() if isinstance(v, np.ndarray) else v
        if self.rng is not None:
            kw["rng"] = np.random.Generator(type(self.rng.bit_generator)())
            kw["rng"].bit_generator.state = self.rng.bit_generator.state
        return ModelState(**kw)


@dataclass(frozen=True)
class ModelParams:
    theta: np.ndarray  # D x K
    phi: np.ndarray  # K x C, zero on inactive columns
    psi: np.ndarray  # K x T
    active_primary: np.ndarray
    active_conditioned: np.ndarray


# -- construction -------------------------------------------------------------


def _flatten(docs):
    lp = np.fromiter((len(d) for d in docs), dtype=np.int64, count=len(docs))
    ptr = np.zeros(len(docs) + 1, dtype=np.int64)
    np.cumsum(lp, out=ptr[1:])
    words = np.fromiter((w for d in docs for w in d), dtype=np.int64, count=int(ptr[-1]))
    return ptr, words


def recount(state: ModelState) -> dict[str, np.ndarray]:
    """Rebuild every count matrix from the assignments."""
    D, K = state.D, state.K
    C, T = len(state.active_primary), len(state.active_conditioned)
    doc_p = np.repeat(np.arange(D), np.diff(state.ptr_p))
    doc_c = np.repeat(np.arange(D), np.diff(state.ptr_c))
    M_dk = np.zeros((D, K), dtype=np.int64)
    N_dk = np.zeros((D, K), dtype=np.int64)
    M_kc = np.zeros((K, C), dtype=np.int64)
    N_kt = np.zeros((K, T), dtype=np.int64)
    np.add.at(M_dk, (doc_p, state.z), 1)
    np.add.at(N_dk, (doc_c, state.y), 1)
    np.add.at(M_kc, (state.z, state.wp), 1)
    np.add.at(N_kt, (state.y, state.wc), 1)
    return dict(
        M_dk=M_dk,
        N_dk=N_dk,
        M_kc=M_kc,
        N_kt=N_kt,
        M_k=M_kc.sum(axis=1),
        N_k=N_kt.sum(axis=1),
        M_d=np.diff(state.ptr_p),
        N_d=np.diff(state.ptr_c),
    )


def audit(state: ModelState) -> None:
    """Raise InvariantViolation unless the counts match the assignments exactly."""
    fresh = recount(state)
    for name, ref in fresh.items():
        if not np.array_equal(getattr(state, name), ref):
            raise InvariantViolation(f"count matrix {name} is inconsistent with assignments")
    if np.any(~state.active_primary[state.wp]) or np.any(~state.active_conditioned[state.wc]):
        raise InvariantViolation("state holds tokens of inactive words")
    if state.z.size and (state.z.min() < 0 or state.z.max() >= state.K):
        raise InvariantViolation("primary assignment out of topic range")
    if state.y.size and (state.y.min() < 0 or state.y.max() >= state.K):
        raise InvariantViolation("conditioned assignment out of topic range")


def init_state(corpus: Corpus, hyper: Hyperparams, subset: str | None = "train") -> ModelState:
    """Uniform random topic for every active token of the chosen split."""
    hyper.validate()
    view = apply_mask(corpus.subset(subset) if subset else corpus)
    docs = view.documents
    ptr_p, wp = _flatten([d.primary for d in docs])
    ptr_c, wc = _flatten([d.conditioned for d in docs])
    if len(wp) == 0:
        raise ValueError("primary modality has no active tokens")
    if len(wc) == 0:
        raise ValueError("conditioned modality has no active tokens")
    rng = np.random.default_rng(hyper.seed)
    z = rng.integers(0, hyper.K, size=len(wp))
    y = rng.integers(0, hyper.K, size=len(wc))
    state = ModelState(
        K=hyper.K,
        doc_ids=tuple(d.id for d in docs),
        ptr_p=ptr_p,
        wp=wp,
        z=z,
        ptr_c=ptr_c,
        wc=wc,
        y=y,
        M_dk=None, N_dk=None, M_kc=None, N_kt=None,
        M_k=None, N_k=None, M_d=None, N_d=None,
        active_primary=view.vocab_primary.mask.copy(),
        active_conditioned=view.vocab_conditioned.mask.copy(),
        rng=rng,
    )
    for name, arr in recount(state).items():
        setattr(state, name, arr)
    return state


# -- conditionals ---------------------------------------------------------------


def conditional_primary(state: ModelState, hyper: Hyperparams, d: int, m: int) -> np.ndarray:
    """Unnormalised topic weights for the ``m``-th primary token of document ``d``."""
    i = state.ptr_p[d] + m
    if not state.ptr_p[d] <= i < state.ptr_p[d + 1]:
        raise IndexError(f"document {d} has no primary token {m}")
    c, old = state.wp[i], state.z[i]
    m_dk = state.M_dk[d].astype(float)
    m_kc = state.M_kc[:, c].astype(float)
    m_k = state.M_k.astype(float)
    m_dk[old] -= 1
    m_kc[old] -= 1
    m_k[old] -= 1
    lw = np.empty(state.K)
    _kernels.primary_logweights(
        lw, m_dk, m_kc, m_k, state.N_dk[d].astype(float),
        hyper.alpha, hyper.beta, float(state.C), hyper.epsilon,
    )
    return np.exp(lw) / (state.M_d[d] + state.K * hyper.alpha - 1)


def conditional_conditioned(state: ModelState, hyper: Hyperparams, d: int, n: int) -> np.ndarray:
    """Unnormalised topic weights for the ``n``-th conditioned token of document ``d``."""
    j = state.ptr_c[d] + n
    if not state.ptr_c[d] <= j < state.ptr_c[d + 1]:
        raise IndexError(f"document {d} has no conditioned token {n}")
    if state.M_d[d] == 0:
        raise ValueError(f"document {d} has no primary tokens; conditional undefined")
    t, old = state.wc[j], state.y[j]
    n_kt = state.N_kt[:, t].astype(float)
    n_k = state.N_k.astype(float)
    n_kt[old] -= 1
    n_k[old] -= 1
    lw = np.empty(state.K)
    _kernels.conditioned_logweights(
        lw, state.M_dk[d].astype(float), float(state.M_d[d]), n_kt, n_k,
        hyper.gamma, float(state.T), hyper.epsilon,
    )
    return np.exp(lw)


def gibbs_sweep(state: ModelState, hyper: Hyperparams, rng: np.random.Generator | None = None):
    """Resample every token once, in place; returns the state."""
    rng = state.rng if rng is None else rng
    u_p = rng.random(len(state.wp))
    u_c = rng.random(len(state.wc))
    _kernels.sweep(
        state.ptr_p, state.wp, state.z, state.ptr_c, state.wc, state.y,
        state.M_dk, state.N_dk, state.M_kc, state.N_kt, state.M_k, state.N_k, state.M_d,
        float(hyper.alpha), float(hyper.beta), float(hyper.gamma), float(hyper.epsilon),
        float(state.C), float(state.T),
        u_p, u_c,
    )
    state.iteration += 1
    return state


# -- estimates and scores -------------------------------------------------------


def estimate_params(state: ModelState, hyper: Hyperparams) -> ModelParams:
    K = state.K
    theta = (state.M_dk + hyper.alpha) / (state.M_d[:, None] + K * hyper.alpha)
    ap, ac = state.active_primary, state.active_conditioned
    phi = (state.M_kc + hyper.beta) / (state.M_k[:, None] + state.C * hyper.beta)
    psi = (state.N_kt + hyper.gamma) / (state.N_k[:, None] + state.T * hyper.gamma)
    phi[:, ~ap] = 0.0
    psi[:, ~ac] = 0.0
    return ModelParams(theta, phi, psi, ap.copy(), ac.copy())


def likelihood_score(params: ModelParams, counts: DocWordCounts, literal: bool = False):
    """Per-token predictive scores (score_primary, score_conditioned); lower is better.

    Default is the geometric-mean form exp(-Σ log p / n). ``literal=True``
    exponentiates the mean raw mixture probability instead. Conditioned
    tokens of documents without primary tokens are left out.
    """
    cp = counts.restrict(params.active_primary, params.active_conditioned)
    has_primary = cp.primary_lengths > 0
    theta = np.ascontiguousarray(params.theta, dtype=float)
    out = []
    for tw, mat, rows_ok in (
        (params.phi, cp.primary, np.ones(len(has_primary), dtype=bool)),
        (params.psi, cp.conditioned, has_primary),
    ):
        total, n = _kernels.mixture_sums(
            mat.indptr, mat.indices, mat.data.astype(float), theta,
            np.ascontiguousarray(tw, dtype=float), rows_ok, literal,
        )
        if n == 0:
            raise ValueError("no active tokens to score")
        out.append(math.exp(-total / n))
    return out[0], out[1]


# -- training -------------------------------------------------------------------


def trace_row(state: ModelState, scores) -> dict:
    return {
        "iter": state.iteration,
        "score_primary": scores[0],
        "score_conditioned": scores[1],
        "active_primary_words": state.C,
        "active_conditioned_words": state.T,
    }


def run_to_convergence(state, hyper, max_sweeps, trajectory, prev=None, check=False):
    """Sweep until |Δ(score_p + score_c)| < zeta or ``max_sweeps`` elapse.

    Returns (converged, last total score, params).
    """
    counts = state.counts()
    if prev is None:
        prev = sum(likelihood_score(estimate_params(state, hyper), counts))
    params = None
    for _ in range(max_sweeps):
        gibbs_sweep(state, hyper)
        if check:
            audit(state)
        params = estimate_params(state, hyper)
        scores = likelihood_score(params, counts)
        trajectory.append(trace_row(state, scores))
        logger.info(
            "iter %d primary %.4f conditioned %.4f", state.iteration, scores[0], scores[1]
        )
        total = scores[0] + scores[1]
        if abs(total - prev) < hyper.zeta:
            return True, total, params
        prev = total
    return False, prev, params


def train_baseline(corpus: Corpus, hyper: Hyperparams, check: bool = False):
    """Corr-LDA-style training with no vocabulary selection.

    Returns (state, params, trajectory); trajectory rows are dicts with the
    ``trace.csv`` columns.
    """
    state = init_state(corpus, hyper)
    trajectory: list[dict] = []
    _, _, params = run_to_convergence(state, hyper, hyper.max_iters, trajectory, check=check)
    return state, params, trajectory


# -- persistence ------------------------------------------------------------------

TRACE_COLUMNS = (
    "iter", "score_primary", "score_conditioned",
    "active_primary_words", "active_conditioned_words",
)

_ARRAYS = (
    "ptr_p", "wp", "z", "ptr_c", "wc", "y",
    "M_dk", "N_dk", "M_kc", "N_kt", "M_k", "N_k", "M_d", "N_d",
)


def save_checkpoint(state: ModelState, hyper: Hyperparams, path: str | os.PathLike, extra=None):
    obj = {
        "hyperparams": asdict(hyper),
        "K": state.K,
        "iteration": state.iteration,
        "doc_ids": list(state.doc_ids),
        "active_primary": state.active_primary.tolist(),
        "active_conditioned": state.active_conditioned.tolist(),
        "rng_state": state.rng.bit_generator.state if state.rng is not None else None,
    }
    for name in _ARRAYS:
        obj[name] = getattr(state, name).tolist()
    if extra:
        obj.update(extra)
    Path(path).write_text(json.dumps(obj, separators=(",", ":")) + "\n", encoding="utf-8")


def load_checkpoint(path: str | os.PathLike):
    """Returns (state, hyper, raw json object)."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    hyper = Hyperparams(**obj["hyperparams"])
    rng = None
    if obj.get("rng_state"):
        rng = np.random.default_rng()
        rng.bit_generator.state = obj["rng_state"]
    arrays = {name: np.asarray(obj[name], dtype=np.int64) for name in _ARRAYS}
    for name in ("M_dk", "N_dk"):
        arrays[name] = arrays[name].reshape(len(obj["doc_ids"]), obj["K"])
    for name, key in (("M_kc", "active_primary"), ("N_kt", "active_conditioned")):
        arrays[name] = arrays[name].reshape(obj["K"], len(obj[key]))
    state = ModelState(
        K=obj["K"],
        doc_ids=tuple(obj["doc_ids"]),
        active_primary=np.asarray(obj["active_primary"], dtype=bool),
        active_conditioned=np.asarray(obj["active_conditioned"], dtype=bool),
        rng=rng,
        iteration=obj["iteration"],
        **arrays,
    )
    return state, hyper, obj


def write_trace(trajectory, path: str | os.PathLike):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in trajectory:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
