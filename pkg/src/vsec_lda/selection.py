"""Entropy-based vocabulary selection interleaved with Gibbs inference."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus import CONDITIONED, PRIMARY, ROLES, Corpus
from .sampler import (
    Hyperparams,
    ModelState,
    audit,
    estimate_params,
    init_state,
    likelihood_score,
    run_to_convergence,
    trace_row,
    gibbs_sweep,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ThresholdState:
    mode: str = "fixed"  # or "dynamic"
    cap_fraction: float = 0.30
    # "round": each filtering round removes at most cap_fraction of the words
    # active at that round; "cumulative": at most cap_fraction of the
    # initial vocabulary over the whole run.
    cap_scope: str = "cumulative"
    # cut rule on the ranked entropies: "min_error" two-class split or "gap"
    # (largest adjacent drop)
    knee: str = "min_error"
    value_primary: float | None = None
    value_conditioned: float | None = None
    frozen_primary: bool = False
    frozen_conditioned: bool = False

    def __post_init__(self):
        if self.mode not in ("fixed", "dynamic"):
            raise ValueError("threshold mode must be 'fixed' or 'dynamic'")
        if not 0 < self.cap_fraction < 1:
            raise ValueError("cap_fraction must lie in (0, 1)")
        if self.cap_scope not in ("round", "cumulative"):
            raise ValueError("cap_scope must be 'round' or 'cumulative'")
        if self.knee not in ("min_error", "gap"):
            raise ValueError("knee must be 'min_error' or 'gap'")

    def value(self, role: str) -> float | None:
        return self.value_primary if role == PRIMARY else self.value_conditioned

    def frozen(self, role: str) -> bool:
        return self.frozen_primary if role == PRIMARY else self.frozen_conditioned


@dataclass
class ScheduleConfig:
    burn_in: int = 20
    max_iters: int = 150
    filter_modalities: tuple[str, ...] = (PRIMARY, CONDITIONED)
    reestimate: bool = True
    reestimate_iters: int = 50
    min_words: int | None = None  # defaults to 2K

    def __post_init__(self):
        self.filter_modalities = tuple(self.filter_modalities)
        bad = set(self.filter_modalities) - set(ROLES)
        if bad:
            raise ValueError(f"unknown modalities {sorted(bad)}")
        if not 0 <= self.burn_in < self.max_iters:
            raise ValueError("burn_in must be smaller than max_iters")
        if self.reestimate_iters < 0:
            raise ValueError("reestimate_iters must be >= 0")

    def floor(self, K: int) -> int:
        m = 2 * K if self.min_words is None else self.min_words
        if m < K:
            raise ValueError("min_words must be >= K")
        return m


@dataclass
class SelectionReport:
    initial_active: dict = field(default_factory=dict)
    rounds: list = field(default_factory=list)
    halted: dict = field(default_factory=dict)

    def removed_ids(self, role: str) -> list[int]:
        return [w for r in self.rounds if r["modality"] == role for w in r["removed"]]

    def removed_entropies(self, role: str) -> tuple[np.ndarray, np.ndarray]:
        ids = [w for r in self.rounds if r["modality"] == role for w in r["removed"]]
        ent = [e for r in self.rounds if r["modality"] == role for e in r["entropies"]]
        return np.asarray(ids, dtype=np.int64), np.asarray(ent, dtype=float)

    def cumulative_fraction(self, role: str) -> float:
        total = self.initial_active.get(role)
        return len(self.removed_ids(role)) / total if total else 0.0

    def to_json(self) -> dict:
        return {
            "initial_active": self.initial_active,
            "rounds": self.rounds,
            "halted": self.halted,
            "cumulative_removed_fraction": {
                r: self.cumulative_fraction(r) for r in self.initial_active
            },
        }

    def save(self, path: str | os.PathLike):
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n", encoding="utf-8")


def _topic_word(state: ModelState, role: str):
    if role == PRIMARY:
        return state.M_kc, state.active_primary
    return state.N_kt, state.active_conditioned


def word_entropy(state: ModelState, modality: str) -> np.ndarray:
    """Entropy (nats) of each word's distribution over topics.

    Full-length array; inactive words are NaN. Words with no tokens get log K.
    """
    counts, active = _topic_word(state, modality)
    counts = counts.astype(float)
    totals = counts.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = counts / totals
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    ent = -plogp.sum(axis=0)
    # equal counts over n topics: exactly log n rather than a rounded sum
    used = (counts > 0).sum(axis=0)
    flat = (totals > 0) & (counts.max(axis=0) * used == totals)
    ent[flat] = np.log(used[flat])
    ent[totals == 0] = math.log(state.K)
    ent = np.clip(ent, 0.0, math.log(state.K))
    ent[~active] = np.nan
    return ent


def _min_error_cut(s: np.ndarray, window: int) -> int | None:
    """Minimum-error (Kittler-Illingworth) split of descending-sorted values.

    Models the words above and below each cut as two Gaussian classes; the
    cut index ``i`` removes the top ``i + 1`` words. Only splits whose upper
    class is the tighter one and where each class holds at least 1% of the
    words (and two words) are eligible, which rules out peeling a few tail
    points off a unimodal profile. Returns None when no eligible split beats
    a single class. An optimum past the window is clamped to the window's
    last position.
    """
    n = s.size
    a = np.arange(1, n, dtype=float)
    b = n - a
    cs = np.cumsum(s)[:-1]
    cs2 = np.cumsum(s * s)[:-1]
    m1, m2 = cs / a, (s.sum() - cs) / b
    v1 = np.maximum(cs2 / a - m1**2, 0.0)
    v2 = np.maximum((np.dot(s, s) - cs2) / b - m2**2, 0.0)
    p1, p2 = a / n, b / n
    with np.errstate(divide="ignore", invalid="ignore"):
        J = 0.5 * (p1 * np.log(v1) + p2 * np.log(v2)) - p1 * np.log(p1) - p2 * np.log(p2)
    least = max(2, math.ceil(0.01 * n))
    ok = (a >= least) & (b >= least) & (v1 <= v2) & np.isfinite(J)
    if window < 1 or not ok.any():
        return None
    J = np.where(ok, J, np.inf)
    best = int(np.argmin(J))
    if J[best] >= 0.5 * math.log(max(s.var(), 1e-300)):
        return None
    if best < window:
        return best
    cut = window - 1
    # ties at the clamped position would make the midpoint meaningless
    while cut >= 0 and s[cut] == s[cut + 1]:
        cut -= 1
    return cut if cut >= 0 else None


def select_threshold(entropies, threshold_state: ThresholdState, modality: str) -> ThresholdState:
    """Place the entropy cut-off at the sharpest change among top-ranked words.

    Only the first ``floor(cap_fraction * n_active)`` sorted positions are
    eligible cut points. In fixed mode the first value is frozen.
    """
    ts = threshold_state
    if ts.mode == "fixed" and ts.frozen(modality):
        return ts
    ent = np.asarray(entropies, dtype=float)
    ent = ent[~np.isnan(ent)]
    if ent.size < 2:
        raise ValueError("need at least two active words to place a threshold")
    s = np.sort(ent)[::-1]
    window = int(math.floor(ts.cap_fraction * s.size))
    if ts.knee == "gap":
        gaps = s[:window] - s[1 : window + 1]
        cut = int(np.argmax(gaps)) if window > 0 and np.any(gaps > 0) else None
    else:
        cut = _min_error_cut(s, window)
    if cut is None:
        logger.info("%s: no cut-off inside the cap window; nothing will be removed", modality)
        value = float(np.nextafter(s[0], np.inf))
    else:
        value = float((s[cut] + s[cut + 1]) / 2)
    key = "primary" if modality == PRIMARY else "conditioned"
    return replace(ts, **{f"value_{key}": value, f"frozen_{key}": ts.mode == "fixed"})


def _drop_tokens(state: ModelState, role: str, removed_word: np.ndarray) -> int:
    """Delete tokens of removed words and deduct them from every count."""
    if role == PRIMARY:
        ptr, words, topics = state.ptr_p, state.wp, state.z
        doc_topic, topic_word, topic_tot, doc_tot = state.M_dk, state.M_kc, state.M_k, state.M_d
    else:
        ptr, words, topics = state.ptr_c, state.wc, state.y
        doc_topic, topic_word, topic_tot, doc_tot = state.N_dk, state.N_kt, state.N_k, state.N_d
    gone = removed_word[words]
    n_gone = int(gone.sum())
    if n_gone == 0:
        return 0
    docs = np.repeat(np.arange(state.D), np.diff(ptr))
    d, k, w = docs[gone], topics[gone], words[gone]
    np.subtract.at(doc_topic, (d, k), 1)
    np.subtract.at(topic_word, (k, w), 1)
    np.subtract.at(topic_tot, k, 1)
    np.subtract.at(doc_tot, d, 1)
    keep = ~gone
    new_ptr = np.zeros_like(ptr)
    np.cumsum(np.bincount(docs[keep], minlength=state.D), out=new_ptr[1:])
    if role == PRIMARY:
        state.ptr_p, state.wp, state.z = new_ptr, words[keep], topics[keep]
    else:
        state.ptr_c, state.wc, state.y = new_ptr, words[keep], topics[keep]
    return n_gone


def filter_words(
    state: ModelState,
    corpus: Corpus,
    threshold_state: ThresholdState,
    modality: str,
    report: SelectionReport | None = None,
    min_words: int = 0,
    entropies: np.ndarray | None = None,
):
    """Deactivate every word whose entropy exceeds the threshold.

    Mutates ``state`` in place; returns (state, corpus with updated masks,
    report). Removal is limited by the cap and by ``min_words``; when limited,
    the highest-entropy candidates go first.
    """
    ts = threshold_state
    thr = ts.value(modality)
    if thr is None:
        raise ValueError(f"no threshold available for {modality}")
    report = SelectionReport() if report is None else report
    _, active = _topic_word(state, modality)
    report.initial_active.setdefault(modality, int(active.sum()))
    ent = word_entropy(state, modality) if entropies is None else entropies
    n_active = int(active.sum())
    cand = np.flatnonzero(active & (np.nan_to_num(ent, nan=-np.inf) > thr))
    cand = cand[np.lexsort((cand, -ent[cand]))]
    if ts.cap_scope == "round":
        limit = int(math.floor(ts.cap_fraction * n_active))
    else:
        already = len(report.removed_ids(modality))
        limit = int(math.floor(ts.cap_fraction * report.initial_active[modality])) - already
    limit = max(0, min(limit, n_active - min_words))
    truncated = len(cand) > limit
    if truncated:
        logger.info("%s: %d candidates above threshold, removing %d", modality, len(cand), limit)
        cand = cand[:limit]
    if len(cand) == 0:
        return state, corpus, report
    removed_word = np.zeros(len(active), dtype=bool)
    removed_word[cand] = True
    n_tokens = _drop_tokens(state, modality, removed_word)
    active[cand] = False
    report.rounds.append(
        {
            "iteration": state.iteration,
            "modality": modality,
            "threshold": thr,
            "removed": cand.tolist(),
            "entropies": ent[cand].tolist(),
            "tokens_removed": n_tokens,
            "active_before": n_active,
            "active_after": n_active - len(cand),
            "truncated": bool(truncated),
        }
    )
    if modality == PRIMARY:
        corpus = corpus.with_masks(primary=active)
        empty = int(np.sum(state.M_d == 0))
        if empty:
            logger.warning("%d document(s) have no primary tokens left", empty)
    else:
        corpus = corpus.with_masks(conditioned=active)
    return state, corpus, report


def train_vsec(
    corpus: Corpus,
    hyper: Hyperparams,
    threshold_state: ThresholdState | None = None,
    schedule: ScheduleConfig | None = None,
    check: bool = False,
):
    """Gibbs inference with vocabulary selection at each likelihood plateau.

    Returns (state, params, report, trajectory, threshold_state).
    """
    from .sampler import train_baseline

    ts = ThresholdState() if threshold_state is None else threshold_state
    schedule = ScheduleConfig() if schedule is None else schedule
    report = SelectionReport()
    if not schedule.filter_modalities:
        base = replace(hyper, max_iters=schedule.max_iters)
        state, params, trajectory = train_baseline(corpus, base, check=check)
        return state, params, report, trajectory, ts

    floor = schedule.floor(hyper.K)
    state = init_state(corpus, hyper)
    counts = state.counts()
    trajectory: list[dict] = []
    prev = None
    for _ in range(schedule.burn_in):
        gibbs_sweep(state, hyper)
        if check:
            audit(state)
        scores = likelihood_score(estimate_params(state, hyper), counts)
        trajectory.append(trace_row(state, scores))
        prev = sum(scores)

    enabled = [r for r in ROLES if r in schedule.filter_modalities]
    for role in enabled:
        report.initial_active[role] = int(_topic_word(state, role)[1].sum())
    while state.iteration < schedule.max_iters:
        converged, prev, _ = run_to_convergence(
            state, hyper, schedule.max_iters - state.iteration, trajectory, prev, check=check
        )
        if not converged:
            break
        removed = 0
        for role in enabled:
            if role in report.halted:
                continue
            ent = word_entropy(state, role)
            # removed words stay in the ranking at their entropy when removed
            ranked = ent.copy()
            ids, past = report.removed_entropies(role)
            ranked[ids] = past
            ts = select_threshold(ranked, ts, role)
            before = len(report.rounds)
            state, corpus, report = filter_words(
                state, corpus, ts, role, report, min_words=floor, entropies=ent
            )
            if len(report.rounds) > before:
                removed += len(report.rounds[-1]["removed"])
            if check:
                audit(state)
            n_left = int(_topic_word(state, role)[1].sum())
            if n_left <= floor:
                report.halted[role] = {"iteration": state.iteration, "active": n_left}
                logger.info("%s: reached the %d-word floor; filtering halted", role, floor)
        logger.info("filtering round at iter %d removed %d words", state.iteration, removed)
        if removed == 0:
            break
        prev = None

    if schedule.reestimate and report.rounds:
        run_to_convergence(state, hyper, schedule.reestimate_iters, trajectory, check=check)
    params = estimate_params(state, hyper)
    return state, params, report, trajectory, ts
