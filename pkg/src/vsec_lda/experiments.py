"""Seeded batch runs on synthetic corpora.

Each helper regenerates its corpus from the seed, so a run is reproducible
from its arguments alone.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .corpus import CONDITIONED, PRIMARY
from .evaluation import evaluate, selection_score
from .sampler import Hyperparams, train_baseline
from .selection import ScheduleConfig, ThresholdState, train_vsec
from .synth import SynthConfig, generate_corpus

# (irrelevant conditioned, irrelevant primary) word counts
IRRELEVANT_GRID = ((40, 400), (60, 600), (80, 800), (100, 1000), (120, 1200), (140, 1400))


def selection_run(
    T_irr: int,
    C_irr: int,
    seed: int,
    mode: str = "fixed",
    cap_fraction: float = 0.5,
    synth: SynthConfig | None = None,
    hyper: Hyperparams | None = None,
    schedule: ScheduleConfig | None = None,
    check: bool = False,
) -> dict:
    """Train VSEC on a corpus with the given planted noise; returns removal counts."""
    base = SynthConfig() if synth is None else synth
    config = replace(base, C_irr=C_irr, T_irr=T_irr, seed=seed)
    corpus, truth = generate_corpus(config)
    hp = replace(Hyperparams(K=config.K) if hyper is None else hyper, seed=seed)
    ts = ThresholdState(mode=mode, cap_fraction=cap_fraction)
    state, params, report, trajectory, ts = train_vsec(corpus, hp, ts, schedule, check=check)
    masks = {PRIMARY: params.active_primary, CONDITIONED: params.active_conditioned}
    score = selection_score(truth, masks)
    return {
        "seed": seed,
        "mode": mode,
        "iterations": state.iteration,
        "rounds": len(report.rounds),
        **{f"{r}_{k}": v for r, s in score.items() for k, v in s.to_json().items()},
    }


def paired_run(seed: int, synth: SynthConfig | None = None, hyper: Hyperparams | None = None,
               threshold_state: ThresholdState | None = None,
               schedule: ScheduleConfig | None = None) -> dict:
    """Baseline and VSEC trained on the same corpus and seed, both evaluated."""
    config = replace(SynthConfig() if synth is None else synth, seed=seed)
    corpus, truth = generate_corpus(config)
    hp = replace(Hyperparams(K=config.K) if hyper is None else hyper, seed=seed)
    _, base_params, _ = train_baseline(corpus, hp)
    _, vsec_params, *_ = train_vsec(corpus, hp, threshold_state, schedule)
    out = {}
    for name, params in (("baseline", base_params), ("vsec", vsec_params)):
        metrics, _, _ = evaluate(params, hp, corpus, seed=seed, truth=truth)
        out[name] = metrics
    return out


def mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0
