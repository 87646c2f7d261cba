"""Vocabularies, encoded corpora, embeddings and rule expectations."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import ConfigurationError, DataError, FormatError, VocabError
from ..pr import CompiledRules
from ..transitions import Sentence, validate_heads
from .conllu import ConllSentence

UNK = "<unk>"


@dataclass
class Vocab:
    itos: list[str]
    counts: dict[str, int] = field(default_factory=dict)
    unk: int | None = None

    def __post_init__(self):
        self.stoi = {s: i for i, s in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, sym: str) -> bool:
        return sym in self.stoi

    def index(self, sym: str) -> int:
        i = self.stoi.get(sym)
        if i is None:
            if self.unk is None:
                raise VocabError(f"unknown symbol {sym!r}")
            return self.unk
        return i

    def encode(self, syms: Iterable[str]) -> list[int]:
        return [self.index(s) for s in syms]

    def missing(self, syms: Iterable[str]) -> list[str]:
        return sorted({s for s in syms if s not in self.stoi})

    def to_dict(self) -> dict:
        return {"itos": self.itos, "unk": self.unk}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        return cls(list(d["itos"]), unk=d.get("unk"))


@dataclass
class Vocabularies:
    words: Vocab
    pos: Vocab
    clusters: Vocab | None = None
    word_clusters: list[int] | None = None  # cluster id per word id
    column: str = "upos"

    def encode(self, s: ConllSentence) -> Sentence:
        missing = self.pos.missing(s.tags(self.column))
        if missing:
            raise VocabError(f"POS tags not in the model vocabulary: {', '.join(missing)}")
        words = self.words.encode(s.forms)
        clusters = None
        if self.word_clusters is not None:
            clusters = [self.word_clusters[w] for w in words]
        return Sentence(words, self.pos.encode(s.tags(self.column)), clusters)

    def to_dict(self) -> dict:
        return {"words": self.words.to_dict(), "pos": self.pos.to_dict(), "column": self.column,
                "clusters": self.clusters.to_dict() if self.clusters else None,
                "word_clusters": self.word_clusters}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabularies":
        return cls(Vocab.from_dict(d["words"]), Vocab.from_dict(d["pos"]),
                   Vocab.from_dict(d["clusters"]) if d.get("clusters") else None,
                   d.get("word_clusters"), d.get("column", "upos"))


def build_vocab(sentences: Sequence[ConllSentence], min_count: int = 2, column: str = "upos") -> Vocabularies:
    """Rare words share the UNK id (0); every POS tag keeps its own id."""
    wc = Counter(w for s in sentences for w in s.forms)
    pc = Counter(t for s in sentences for t in s.tags(column))
    words = [UNK] + sorted(w for w, c in wc.items() if c >= min_count)
    return Vocabularies(Vocab(words, dict(wc), unk=0), Vocab(sorted(pc), dict(pc)), column=column)


@dataclass
class Corpus:
    """Raw sentences plus their encoded form under fixed vocabularies."""

    raw: list[ConllSentence]
    vocab: Vocabularies
    split: str = "train"

    def __post_init__(self):
        self.sentences = [self.vocab.encode(s) for s in self.raw]

    def __len__(self) -> int:
        return len(self.raw)

    @property
    def annotated(self) -> bool:
        return all(s.heads is not None for s in self.raw)

    @property
    def heads(self) -> list[list[int]]:
        if not self.annotated:
            raise ConfigurationError(f"{self.split} corpus has no gold heads")
        return [list(s.heads) for s in self.raw]

    def validate(self) -> None:
        for s in self.raw:
            if s.heads is not None:
                try:
                    validate_heads(s.heads)
                except Exception as e:
                    raise DataError(f"invalid tree: {e}", s.line) from None


def estimate_rule_expectations(heads: Sequence[Sequence[int]], pos: Sequence[Sequence[int]],
                               rules: CompiledRules, factor: float = 0.9) -> np.ndarray:
    """``b_k = -factor * (mean count of rule k per gold tree)``."""
    if heads is None or any(h is None for h in heads):
        raise ConfigurationError("rule expectations need gold heads")
    if not heads:
        return np.zeros(rules.size)
    total = np.zeros(rules.size)
    for h, p in zip(heads, pos):
        total += rules.features(p, h)
    return factor * total / len(heads) + 0.0


def load_clusters(path, words: Vocab) -> tuple[Vocab, list[int]]:
    """``token<TAB>bitstring`` lines; words without a cluster share one id."""
    table: dict[str, str] = {}
    for i, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) < 2 or not parts[1]:
            raise FormatError("expected token<TAB>bitstring", i)
        table[parts[0]] = parts[1]
    names = [UNK] + sorted(set(table.values()))
    vocab = Vocab(names, unk=0)
    return vocab, [vocab.index(table[w]) if w in table else 0 for w in words.itos]


def load_embeddings(path, words: Vocab, rng: np.random.Generator | None = None) -> tuple[np.ndarray, int]:
    """Rows of a word2vec/GloVe text file for the vocabulary.

    Returns the table and the number of vocabulary words found.  Missing
    words get Gaussian rows scaled to the file's spread.  The projection to
    the model dimension is a learned parameter of the encoder.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    found: dict[int, np.ndarray] = {}
    dim = None
    for i, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        parts = raw.rstrip().split(" ")
        if i == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
            continue  # word2vec header
        if not raw.strip():
            continue
        try:
            vec = np.array([float(x) for x in parts[1:]])
        except ValueError:
            raise FormatError("non-numeric embedding value", i) from None
        if dim is None:
            dim = vec.size
        if vec.size != dim or dim == 0:
            raise FormatError(f"expected {dim} values, found {vec.size}", i)
        if parts[0] in words.stoi:
            found[words.stoi[parts[0]]] = vec
    if dim is None:
        raise FormatError("embedding file is empty")
    scale = float(np.std(np.stack(list(found.values())))) if found else 0.1
    table = rng.normal(0.0, scale or 0.1, size=(len(words), dim))
    for k, v in found.items():
        table[k] = v
    return table, len(found)
