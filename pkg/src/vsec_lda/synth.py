"""Synthetic corpora drawn from the correspondence generative process.

Relevant words occupy ids ``[0, C_rel)`` / ``[0, T_rel)``; planted noise
words occupy the rest of each vocabulary and are drawn uniformly.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import CONDITIONED, PRIMARY, Corpus, Document, Vocabulary


@dataclass
class SynthConfig:
    K: int = 20
    C_rel: int = 800
    T_rel: int = 80
    C_irr: int = 200
    T_irr: int = 20
    D: int = 8000
    alpha: float = 0.2
    beta: float = 0.1
    gamma: float = 0.1
    len_primary: int = 50
    len_conditioned: int = 5
    length_dist: str = "fixed"  # or "poisson"
    irr_fraction: float = 0.2
    seed: int = 0
    test_fraction: float = 0.1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        for name in ("C_rel", "T_rel", "D", "len_primary", "len_conditioned"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("C_irr", "T_irr"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("alpha", "beta", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not 0 <= self.irr_fraction < 1:
            raise ValueError("irr_fraction must lie in [0, 1)")
        if self.irr_fraction > 0 and (self.C_irr < 1 or self.T_irr < 1):
            raise ValueError("irr_fraction > 0 needs C_irr, T_irr >= 1")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.length_dist not in ("fixed", "poisson"):
            raise ValueError("length_dist must be 'fixed' or 'poisson'")

    @property
    def irr_primary_count(self) -> int:
        return round(self.irr_fraction * self.len_primary / (1 - self.irr_fraction))

    @property
    def irr_conditioned_count(self) -> int:
        return round(self.irr_fraction * self.len_conditioned / (1 - self.irr_fraction))


@dataclass
class GroundTruth:
    theta: np.ndarray  # D x K
    phi: np.ndarray  # K x C_rel
    psi: np.ndarray  # K x T_rel
    relevant_primary: np.ndarray  # bool, C_rel + C_irr
    relevant_conditioned: np.ndarray
    # per-document planted counts: relevant primary, irrelevant primary, ...
    M: np.ndarray = field(default=None)
    IM: np.ndarray = field(default=None)
    N: np.ndarray = field(default=None)
    IN: np.ndarray = field(default=None)

    def to_json(self) -> dict:
        return {
            "relevant_primary": self.relevant_primary.tolist(),
            "relevant_conditioned": self.relevant_conditioned.tolist(),
            "theta": self.theta.tolist(),
            "phi": self.phi.tolist(),
            "psi": self.psi.tolist(),
            "M": self.M.tolist(),
            "IM": self.IM.tolist(),
            "N": self.N.tolist(),
            "IN": self.IN.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        return cls(
            theta=np.asarray(obj["theta"], dtype=float),
            phi=np.asarray(obj["phi"], dtype=float),
            psi=np.asarray(obj["psi"], dtype=float),
            relevant_primary=np.asarray(obj["relevant_primary"], dtype=bool),
            relevant_conditioned=np.asarray(obj["relevant_conditioned"], dtype=bool),
            M=np.asarray(obj["M"], dtype=np.int64),
            IM=np.asarray(obj["IM"], dtype=np.int64),
            N=np.asarray(obj["N"], dtype=np.int64),
            IN=np.asarray(obj["IN"], dtype=np.int64),
        )

    def relevant_mask(self, role: str) -> np.ndarray:
        return self.relevant_primary if role == PRIMARY else self.relevant_conditioned


def sample_dirichlet(concentration, rng: np.random.Generator) -> np.ndarray:
    conc = np.asarray(concentration, dtype=float)
    if conc.ndim != 1 or conc.size == 0 or not np.all(conc > 0):
        raise ValueError("Dirichlet concentrations must be a nonempty vector of positive reals")
    # Gamma normalisation; renormalise once more so tiny concentrations still
    # land on the simplex to machine precision.
    draw = rng.dirichlet(conc)
    if not np.all(np.isfinite(draw)) or draw.sum() == 0:
        draw = np.zeros_like(conc)
        draw[rng.choice(len(conc), p=conc / conc.sum())] = 1.0
    return draw / draw.sum()


def _categorical(cdf_rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(len(cdf_rows))
    out = (cdf_rows < u[:, None] * cdf_rows[:, -1:]).sum(axis=1)
    return np.minimum(out, cdf_rows.shape[1] - 1)


def _lengths(config: SynthConfig, rng: np.random.Generator) -> tuple[int, int]:
    if config.length_dist == "fixed":
        return config.len_primary, config.len_conditioned
    m = 0
    while m == 0:
        m = int(rng.poisson(config.len_primary))
    n = int(rng.poisson(config.len_conditioned))
    return m, n


def generate_document(
    config: SynthConfig,
    truth: GroundTruth,
    d: int,
    rng: np.random.Generator,
    doc_id: str | None = None,
):
    """Draw document ``d``; returns the Document plus its planted counts."""
    theta = truth.theta[d]
    K = len(theta)
    M, N = _lengths(config, rng)
    z = rng.choice(K, size=M, p=theta)
    v = _categorical(np.cumsum(truth.phi, axis=1)[z], rng)
    # conditioned topics follow the empirical topic frequencies of this
    # document's primary draws
    y = z[rng.integers(0, M, size=N)]
    w = _categorical(np.cumsum(truth.psi, axis=1)[y], rng)
    IM = config.irr_primary_count if config.irr_fraction > 0 else 0
    IN = config.irr_conditioned_count if config.irr_fraction > 0 else 0
    if IM:
        v = np.concatenate([v, config.C_rel + rng.integers(0, config.C_irr, size=IM)])
    if IN:
        w = np.concatenate([w, config.T_rel + rng.integers(0, config.T_irr, size=IN)])
    v = rng.permutation(v)
    w = rng.permutation(w)
    doc = Document(doc_id if doc_id is not None else f"doc{d:05d}", v.tolist(), w.tolist())
    return doc, (M, IM, N, IN)


def generate_corpus(config: SynthConfig) -> tuple[Corpus, GroundTruth]:
    config.validate()
    rng = np.random.default_rng(config.seed)
    K, D = config.K, config.D
    theta = np.stack([sample_dirichlet(np.full(K, config.alpha), rng) for _ in range(D)])
    phi = np.stack([sample_dirichlet(np.full(config.C_rel, config.beta), rng) for _ in range(K)])
    psi = np.stack([sample_dirichlet(np.full(config.T_rel, config.gamma), rng) for _ in range(K)])
    C = config.C_rel + config.C_irr
    T = config.T_rel + config.T_irr
    truth = GroundTruth(
        theta,
        phi,
        psi,
        np.arange(C) < config.C_rel,
        np.arange(T) < config.T_rel,
    )
    docs, planted = [], []
    for d in range(D):
        doc, counts = generate_document(config, truth, d, rng)
        docs.append(doc)
        planted.append(counts)
    planted = np.asarray(planted, dtype=np.int64)
    truth.M, truth.IM, truth.N, truth.IN = planted.T.copy()

    n_test = int(round(config.test_fraction * D))
    n_test = min(max(n_test, 1), D - 1) if D > 1 else 0
    split = np.full(D, "train", dtype=object)
    split[rng.permutation(D)[:n_test]] = "test"

    vp = Vocabulary(
        PRIMARY,
        [f"v{i}" for i in range(config.C_rel)] + [f"vx{i}" for i in range(config.C_irr)],
    )
    vc = Vocabulary(
        CONDITIONED,
        [f"w{i}" for i in range(config.T_rel)] + [f"wx{i}" for i in range(config.T_irr)],
    )
    corpus = Corpus(tuple(docs), vp, vc, tuple(split.tolist()))
    return corpus, truth


def save_truth(truth: GroundTruth, path: str | os.PathLike, config: SynthConfig | None = None):
    obj = truth.to_json()
    if config is not None:
        obj["config"] = asdict(config)
    Path(path).write_text(json.dumps(obj, separators=(",", ":")) + "\n", encoding="utf-8")


def load_truth(path: str | os.PathLike) -> GroundTruth:
    return GroundTruth.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
