"""Dual-modality corpora: vocabularies, documents, on-disk format and counts.

A corpus directory holds::

    vocab_primary.tsv       id <TAB> token, ids contiguous from 0
    vocab_conditioned.tsv
    documents.jsonl         {"id", "primary", "conditioned", "split"} per line
    mask.json               optional {"primary": [bool], "conditioned": [bool]}
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

PRIMARY = "primary"
CONDITIONED = "conditioned"
ROLES = (PRIMARY, CONDITIONED)
SPLITS = ("train", "test")


class CorpusFormatError(ValueError):
    """A corpus file could not be parsed."""


class CorpusValidationError(ValueError):
    """A corpus violates a structural invariant."""


@dataclass(frozen=True)
class Vocabulary:
    role: str
    tokens: tuple[str, ...]
    active: tuple[bool, ...] = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise CorpusValidationError(f"unknown modality role {self.role!r}")
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.active is None:
            object.__setattr__(self, "active", (True,) * len(self.tokens))
        else:
            object.__setattr__(self, "active", tuple(bool(a) for a in self.active))
        if len(self.active) != len(self.tokens):
            raise CorpusValidationError(
                f"{self.role} vocabulary: mask length {len(self.active)} "
                f"!= {len(self.tokens)} tokens"
            )
        if len(set(self.tokens)) != len(self.tokens):
            raise CorpusValidationError(f"{self.role} vocabulary has duplicate tokens")

    def __len__(self):
        return len(self.tokens)

    @property
    def mask(self) -> np.ndarray:
        return np.asarray(self.active, dtype=bool)

    @property
    def n_active(self) -> int:
        return int(sum(self.active))

    def with_mask(self, mask: Sequence[bool]) -> "Vocabulary":
        return replace(self, active=tuple(bool(a) for a in mask))


@dataclass(frozen=True)
class Document:
    id: str
    primary: tuple[int, ...]
    conditioned: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "primary", tuple(int(i) for i in self.primary))
        object.__setattr__(self, "conditioned", tuple(int(i) for i in self.conditioned))

    def tokens(self, role: str) -> tuple[int, ...]:
        return self.primary if role == PRIMARY else self.conditioned


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]
    vocab_primary: Vocabulary
    vocab_conditioned: Vocabulary
    split: tuple[str, ...] = None

    def __post_init__(self):
        object.__setattr__(self, "documents", tuple(self.documents))
        if self.split is None:
            object.__setattr__(self, "split", ("train",) * len(self.documents))
        else:
            object.__setattr__(self, "split", tuple(self.split))
        self.validate()

    def validate(self):
        if len(self.documents) < 1:
            raise CorpusValidationError("corpus must contain at least one document")
        if len(self.split) != len(self.documents):
            raise CorpusValidationError("split tags must cover every document")
        bad = set(self.split) - set(SPLITS)
        if bad:
            raise CorpusValidationError(f"unknown split tags {sorted(bad)}")
        ids = [doc.id for doc in self.documents]
        if len(set(ids)) != len(ids):
            raise CorpusValidationError("document ids must be unique")
        C, T = len(self.vocab_primary), len(self.vocab_conditioned)
        for doc in self.documents:
            for role, size in ((PRIMARY, C), (CONDITIONED, T)):
                for w in doc.tokens(role):
                    if w < 0 or w >= size:
                        raise CorpusValidationError(
                            f"document {doc.id!r}: {role} word-id {w} out of range "
                            f"for vocabulary of size {size}"
                        )

    def __len__(self):
        return len(self.documents)

    def vocab(self, role: str) -> Vocabulary:
        return self.vocab_primary if role == PRIMARY else self.vocab_conditioned

    def indices(self, subset: str | None = None) -> list[int]:
        if subset is None:
            return list(range(len(self.documents)))
        return [i for i, s in enumerate(self.split) if s == subset]

    def subset(self, subset: str) -> "Corpus":
        idx = self.indices(subset)
        if not idx:
            raise CorpusValidationError(f"split {subset!r} selects no documents")
        return replace(
            self,
            documents=tuple(self.documents[i] for i in idx),
            split=tuple(self.split[i] for i in idx),
        )

    def with_masks(self, primary=None, conditioned=None) -> "Corpus":
        vp, vc = self.vocab_primary, self.vocab_conditioned
        if primary is not None:
            vp = vp.with_mask(primary)
        if conditioned is not None:
            vc = vc.with_mask(conditioned)
        return replace(self, vocab_primary=vp, vocab_conditioned=vc)

    @property
    def empty_documents(self) -> list[str]:
        """Ids of documents with no tokens in at least one modality."""
        return [d.id for d in self.documents if not d.primary or not d.conditioned]


@dataclass(frozen=True)
class DocWordCounts:
    """Per-document word frequencies, one sparse (docs x vocab) matrix per modality."""

    primary: sp.csr_matrix
    conditioned: sp.csr_matrix
    doc_ids: tuple[str, ...] = field(default=())

    @property
    def primary_lengths(self) -> np.ndarray:
        return np.asarray(self.primary.sum(axis=1)).ravel()

    @property
    def conditioned_lengths(self) -> np.ndarray:
        return np.asarray(self.conditioned.sum(axis=1)).ravel()

    def restrict(self, primary_mask, conditioned_mask) -> "DocWordCounts":
        """Zero out columns of inactive words."""
        dp = sp.diags(np.asarray(primary_mask, dtype=np.int64))
        dc = sp.diags(np.asarray(conditioned_mask, dtype=np.int64))
        p = (self.primary @ dp).tocsr()
        c = (self.conditioned @ dc).tocsr()
        p.eliminate_zeros()
        c.eliminate_zeros()
        return DocWordCounts(p, c, self.doc_ids)


def _count_matrix(docs: Sequence[Sequence[int]], size: int) -> sp.csr_matrix:
    lengths = np.fromiter((len(d) for d in docs), dtype=np.int64, count=len(docs))
    cols = np.fromiter((w for d in docs for w in d), dtype=np.int64, count=int(lengths.sum()))
    rows = np.repeat(np.arange(len(docs)), lengths)
    data = np.ones(len(cols), dtype=np.int64)
    m = sp.csr_matrix((data, (rows, cols)), shape=(len(docs), size), dtype=np.int64)
    m.sum_duplicates()
    return m


def build_counts(corpus: Corpus, subset: str | None = "train") -> DocWordCounts:
    """Word frequencies per document; inactive words are still counted."""
    idx = corpus.indices(subset)
    if not idx:
        raise CorpusValidationError(f"split {subset!r} selects no documents")
    docs = [corpus.documents[i] for i in idx]
    return DocWordCounts(
        _count_matrix([d.primary for d in docs], len(corpus.vocab_primary)),
        _count_matrix([d.conditioned for d in docs], len(corpus.vocab_conditioned)),
        tuple(d.id for d in docs),
    )


def apply_mask(corpus: Corpus) -> Corpus:
    """Drop every token whose word-id is inactive. Ids are never renumbered."""
    mp = corpus.vocab_primary.active
    mc = corpus.vocab_conditioned.active
    if all(mp) and all(mc):
        return corpus
    docs = tuple(
        Document(
            d.id,
            tuple(w for w in d.primary if mp[w]),
            tuple(w for w in d.conditioned if mc[w]),
        )
        for d in corpus.documents
    )
    out = replace(corpus, documents=docs)
    empty = out.empty_documents
    if empty:
        logger.warning("%d document(s) left with an empty modality after masking", len(empty))
    return out


# -- persistence ------------------------------------------------------------


def _read_vocab(path: Path, role: str) -> list[str]:
    tokens = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusFormatError(f"{path}:{lineno}: expected 'id<TAB>token'")
            try:
                wid = int(parts[0])
            except ValueError:
                raise CorpusFormatError(f"{path}:{lineno}: non-integer id {parts[0]!r}") from None
            if wid != len(tokens):
                raise CorpusFormatError(
                    f"{path}:{lineno}: ids must be contiguous from 0, got {wid}"
                )
            tokens.append(parts[1])
    return tokens


def _read_documents(path: Path):
    docs, split = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                doc = Document(str(obj["id"]), obj["primary"], obj["conditioned"])
                tag = obj.get("split", "train")
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from None
            docs.append(doc)
            split.append(tag)
    return docs, split


def load_corpus(path: str | os.PathLike) -> Corpus:
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {path}")
    vp = _read_vocab(path / "vocab_primary.tsv", PRIMARY)
    vc = _read_vocab(path / "vocab_conditioned.tsv", CONDITIONED)
    docs, split = _read_documents(path / "documents.jsonl")
    mp = mc = None
    mask_path = path / "mask.json"
    if mask_path.exists():
        try:
            masks = json.loads(mask_path.read_text(encoding="utf-8"))
            mp, mc = masks[PRIMARY], masks[CONDITIONED]
        except (json.JSONDecodeError, KeyError) as exc:
            raise CorpusFormatError(f"{mask_path}: {exc}") from None
    return Corpus(
        tuple(docs),
        Vocabulary(PRIMARY, vp, mp),
        Vocabulary(CONDITIONED, vc, mc),
        tuple(split),
    )


def _write_vocab(path: Path, vocab: Vocabulary):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, tok in enumerate(vocab.tokens):
            fh.write(f"{i}\t{tok}\n")


def save_corpus(corpus: Corpus, path: str | os.PathLike) -> None:
    corpus.validate()
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    _write_vocab(path / "vocab_primary.tsv", corpus.vocab_primary)
    _write_vocab(path / "vocab_conditioned.tsv", corpus.vocab_conditioned)
    with open(path / "documents.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for doc, tag in zip(corpus.documents, corpus.split):
            rec = {
                "id": doc.id,
                "primary": list(doc.primary),
                "conditioned": list(doc.conditioned),
                "split": tag,
            }
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
    mask_path = path / "mask.json"
    if all(corpus.vocab_primary.active) and all(corpus.vocab_conditioned.active):
        if mask_path.exists():
            mask_path.unlink()
    else:
        masks = {
            PRIMARY: list(corpus.vocab_primary.active),
            CONDITIONED: list(corpus.vocab_conditioned.active),
        }
        mask_path.write_text(json.dumps(masks) + "\n", encoding="utf-8")


def make_corpus(
    docs: Iterable[tuple[Sequence[int], Sequence[int]]],
    n_primary: int,
    n_conditioned: int,
    split: Sequence[str] | None = None,
) -> Corpus:
    """Build a corpus from bare (primary, conditioned) id lists with placeholder tokens."""
    documents = tuple(Document(f"d{i}", p, c) for i, (p, c) in enumerate(docs))
    return Corpus(
        documents,
        Vocabulary(PRIMARY, [f"v{i}" for i in range(n_primary)]),
        Vocabulary(CONDITIONED, [f"w{i}" for i in range(n_conditioned)]),
        None if split is None else tuple(split),
    )
