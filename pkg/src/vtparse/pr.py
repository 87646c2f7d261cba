"""Posterior regularization with head/dependent POS rules.

Constraint features count rule arcs in a derivation's tree (negated, so
that a constraint ``E_q[phi] <= b`` asks for *at least* ``-b`` rule arcs).
Samples are reweighted by ``gamma = exp(-lam . phi) / Z`` where ``Z`` is
the Monte-Carlo average over the same samples, and ``lam >= 0`` follows
projected gradient ascent on the dual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError, FormatError, VocabError

ROOT = "ROOT"
MODES = ("per_rule", "aggregate")

_WSJ = """
ROOT -> Auxiliary
ROOT -> Verb
Verb -> Noun
Verb -> Pronoun
Verb -> Adverb
Verb -> Verb
Auxiliary -> Verb
Noun -> Adjective
Noun -> Article
Noun -> Noun
Noun -> Numeral
Preposition -> Noun
Adjective -> Adverb
"""

_UD = """
ROOT -> VERB
ROOT -> NOUN
VERB -> NOUN
VERB -> ADV
VERB -> VERB
VERB -> AUX
ADJ -> ADV
NOUN -> ADJ
NOUN -> DET
NOUN -> NOUN
NOUN -> NUM
NOUN -> CONJ
NOUN -> ADP
"""

# coarse classes over Penn Treebank tags
_PTB = """
Verb: VB,VBD,VBG,VBN,VBP,VBZ
Auxiliary: MD
Noun: NN,NNS,NNP,NNPS
Pronoun: PRP,PRP$,WP,WP$
Adverb: RB,RBR,RBS,WRB
Adjective: JJ,JJR,JJS
Article: DT,PDT,WDT
Numeral: CD
Preposition: IN
"""

# the rules the synthetic grammar is built around
_SYNTHETIC = """
ROOT -> VERB
VERB -> NOUN
VERB -> PRON
VERB -> ADV
NOUN -> ADJ
NOUN -> DET
NOUN -> NUM
NOUN -> ADP
ADJ -> ADV
"""


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[tuple[str, str], ...]
    source: str = "custom"

    def __post_init__(self):
        rules = tuple((str(h), str(d)) for h, d in self.rules)
        object.__setattr__(self, "rules", rules)
        seen = set()
        for r in rules:
            if r in seen:
                raise ConfigurationError(f"duplicate rule {r[0]} -> {r[1]}")
            if r[1] == ROOT:
                raise ConfigurationError("ROOT cannot be a dependent")
            seen.add(r)

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def symbols(self) -> set[str]:
        return {s for r in self.rules for s in r} - {ROOT}

    def to_text(self) -> str:
        return "".join(f"{h} -> {d}\n" for h, d in self.rules)

    def compile(self, tags: Sequence[str], expansions: Mapping[str, Sequence[str]] | None = None,
                mode: str = "aggregate", strict: bool = True) -> "CompiledRules":
        return CompiledRules.build(self, tags, expansions, mode, strict)


def parse_rules(text: str, source: str = "custom") -> RuleSet:
    rules = []
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split("->")]
        if len(parts) != 2 or not all(parts) or any(" " in p for p in parts):
            raise FormatError(f"expected 'HEAD -> DEP', got {raw.strip()!r}", i)
        rules.append((parts[0], parts[1]))
    try:
        return RuleSet(tuple(rules), source)
    except ConfigurationError as e:
        raise FormatError(str(e)) from None


def parse_expansions(text: str) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        coarse, sep, rest = line.partition(":")
        fine = [t.strip() for t in rest.split(",") if t.strip()]
        if not sep or not coarse.strip() or not fine:
            raise FormatError(f"expected 'COARSE: FINE1,FINE2,...', got {raw.strip()!r}", i)
        out[coarse.strip()] = fine
    return out


def load_rules(path) -> RuleSet:
    return parse_rules(Path(path).read_text(encoding="utf-8"), source=Path(path).stem)


def load_expansions(path) -> dict[str, list[str]]:
    return parse_expansions(Path(path).read_text(encoding="utf-8"))


BUILTIN_RULES = {
    "wsj": parse_rules(_WSJ, "wsj"),
    "ud": parse_rules(_UD, "ud"),
    "synthetic": parse_rules(_SYNTHETIC, "synthetic"),
}
PTB_EXPANSIONS = parse_expansions(_PTB)


def builtin_rules(name: str) -> RuleSet:
    try:
        return BUILTIN_RULES[name]
    except KeyError:
        raise ConfigurationError(f"unknown rule set {name!r}; choose from {sorted(BUILTIN_RULES)}") from None


@dataclass
class CompiledRules:
    """Rules resolved against a tag vocabulary.

    ``table[h, d, k]`` is 1 when an arc from tag ``h`` (``h == len(tags)`` is
    ROOT) to tag ``d`` matches rule ``k``.
    """

    rules: RuleSet
    tags: tuple[str, ...]
    table: np.ndarray
    mode: str
    dropped: tuple[tuple[str, str], ...] = ()

    @classmethod
    def build(cls, rules: RuleSet, tags, expansions=None, mode="aggregate", strict=True):
        if mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {mode!r}")
        tags = tuple(tags)
        index = {t: i for i, t in enumerate(tags)}
        expansions = expansions or {}

        def resolve(sym):
            names = expansions.get(sym, [sym])
            return [index[t] for t in names if t in index]

        kept, dropped, missing = [], [], set()
        for h, d in rules:
            hs = [len(tags)] if h == ROOT else resolve(h)
            ds = resolve(d)
            for s, ids in ((h, hs), (d, ds)):
                if not ids:
                    missing.add(s)
            if hs and ds:
                kept.append((h, d, hs, ds))
            else:
                dropped.append((h, d))
        if missing and strict:
            raise VocabError(f"rule symbols not in the tag set: {', '.join(sorted(missing))}")
        table = np.zeros((len(tags) + 1, len(tags), len(kept)))
        for k, (_, _, hs, ds) in enumerate(kept):
            table[np.ix_(hs, ds, [k])] = 1.0
        active = RuleSet(tuple((h, d) for h, d, _, _ in kept), rules.source)
        return cls(active, tags, table, mode, tuple(dropped))

    @property
    def size(self) -> int:
        """Length of the feature vector."""
        return len(self.rules) if self.mode == "per_rule" else 1

    def arc_matches(self, pos: np.ndarray, heads: np.ndarray) -> np.ndarray:
        """``(..., n, K)`` indicators of which rules each arc matches."""
        pos = np.asarray(pos, dtype=np.intp)
        heads = np.asarray(heads, dtype=np.intp)
        pos = np.broadcast_to(pos, heads.shape)
        head_pos = np.where(heads == 0, len(self.tags),
                            np.take_along_axis(pos, np.maximum(heads - 1, 0), axis=-1))
        return self.table[head_pos, pos]

    def features(self, pos, heads) -> np.ndarray:
        """phi for one tree ``(K,)`` or a batch of trees ``(R, K)``."""
        m = self.arc_matches(pos, heads)
        if self.mode == "per_rule":
            return -m.sum(axis=-2)
        return -(m.max(axis=-1, initial=0.0)).sum(axis=-1, keepdims=True)

    def rule_arc_fraction(self, pos_seqs, head_seqs) -> float:
        """Share of arcs matching any rule, pooled over a corpus."""
        hit = total = 0
        for p, h in zip(pos_seqs, head_seqs):
            m = self.arc_matches(p, h)
            hit += int(m.max(axis=-1, initial=0.0).sum())
            total += len(h)
        return hit / total if total else 0.0


def count_rule_features(tags: Sequence[str], heads: Sequence[int], rules: RuleSet,
                        mode: str = "per_rule", expansions=None) -> np.ndarray:
    """phi for a tree over tag names (convenience form of :meth:`CompiledRules.features`)."""
    vocab = sorted(set(tags))
    compiled = rules.compile(vocab, expansions, mode, strict=False)
    idx = {t: i for i, t in enumerate(vocab)}
    phi = compiled.features([idx[t] for t in tags], heads)
    if mode == "per_rule" and len(compiled.rules) < len(rules):
        # keep one slot per rule, including rules absent from this sentence
        full = np.zeros(len(rules))
        pos = {r: k for k, r in enumerate(rules)}
        for k, r in enumerate(compiled.rules):
            full[pos[r]] = phi[k]
        return full
    return phi


# Monte-Carlo partition function and multipliers ------------------------------

def _exponents(lam, phis) -> np.ndarray:
    phis = np.atleast_2d(np.asarray(phis, dtype=np.float64))
    lam = np.asarray(lam, dtype=np.float64)
    if phis.shape[0] < 1:
        raise ContractError("at least one sample is required")
    if (lam < 0).any():
        raise ContractError("lambda must be non-negative")
    return -(phis @ lam)


def log_estimate_Z(lam, phis) -> float:
    s = _exponents(lam, phis)
    top = s.max()
    return float(top + np.log(math.fsum(np.exp(s - top))) - np.log(len(s)))


def estimate_Z(lam, phis) -> float:
    """``(1/M) sum_m exp(-lam . phi_m)``, computed with a max shift."""
    return float(np.exp(log_estimate_Z(lam, phis)))


def gamma(lam, phis, Z=None) -> np.ndarray:
    """Multipliers for each sample.

    Without ``Z`` the normaliser comes from the same samples and the
    result has sample mean 1 up to rounding of the final division.
    """
    s = _exponents(lam, phis)
    if Z is not None:
        if not Z > 0:
            raise ContractError("Z must be positive")
        return np.exp(s) / Z
    w = np.exp(s - s.max())
    M = len(w)
    g = w * (M / math.fsum(w))
    # fold the leftover rounding into the smallest entry able to absorb it,
    # so the exactly rounded sum is M
    for _ in range(4):
        r = math.fsum([*g.tolist(), -float(M)])
        if r == 0.0:
            break
        ok = np.flatnonzero(g > 4 * abs(r))
        j = ok[np.argmin(g[ok])] if ok.size else int(np.argmax(g))
        g[j] -= r
    return g


def exact_posterior(log_q, phis, lam) -> np.ndarray:
    """PR-projected distribution over an enumerated support."""
    log_q = np.asarray(log_q, dtype=np.float64)
    t = log_q + _exponents(lam, phis)
    t = t - t.max()
    p = np.exp(t)
    return p / math.fsum(p)


def exact_log_Z(lam, log_q, phis) -> float:
    t = np.asarray(log_q, dtype=np.float64) + _exponents(lam, phis)
    top = t.max()
    return float(top + np.log(math.fsum(np.exp(t - top))))


# dual variables ---------------------------------------------------------------

@dataclass
class PRState:
    """Global multipliers and the constraint specification.

    In aggregate mode the threshold scales with the sentence,
    ``b = -sigma * n``; in per-rule mode ``b`` is a fixed vector.
    """

    lam: np.ndarray
    b: np.ndarray | None = None
    mode: str = "aggregate"
    sigma: float = 0.8
    epsilon: float = 0.1
    step: float = 0.05
    frozen: bool = False
    updates: int = field(default=0)

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=np.float64).copy()
        if self.b is not None:
            self.b = np.asarray(self.b, dtype=np.float64)
            if self.b.shape != self.lam.shape:
                raise ConfigurationError("b and lambda must have the same length")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown PR mode {self.mode!r}")
        if self.mode == "per_rule" and self.b is None:
            raise ConfigurationError("per-rule mode needs an explicit b vector")
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if self.step < 0:
            raise ConfigurationError("dual step must be non-negative")
        if (self.lam < 0).any():
            raise ConfigurationError("lambda must be non-negative")

    @classmethod
    def create(cls, size: int, mode: str = "aggregate", b=None, **kw) -> "PRState":
        return cls(np.zeros(size), b, mode, **kw)

    def threshold(self, n: int) -> np.ndarray:
        if self.b is not None:
            return self.b
        return np.full(self.lam.shape, -self.sigma * n)


def dual_gradient(state: PRState, phis, gammas, n: int) -> np.ndarray:
    """MC gradient of the dual for one sentence."""
    phis = np.atleast_2d(np.asarray(phis, dtype=np.float64))
    expect = np.asarray(gammas, dtype=np.float64) @ phis / phis.shape[0]
    g = -state.threshold(n) + expect
    norm = np.linalg.norm(state.lam)
    if norm > 0:
        g = g - state.epsilon * state.lam / norm
    return g


def dual_update(state: PRState, stats: Iterable[tuple[np.ndarray, np.ndarray, int]]) -> PRState:
    """One projected ascent step from ``(phis, gammas, n)`` per sentence, averaged."""
    stats = list(stats)
    if state.frozen or not stats:
        return state
    g = np.mean([dual_gradient(state, p, w, n) for p, w, n in stats], axis=0)
    lam = np.maximum(state.lam + state.step * g, 0.0)
    return replace(state, lam=lam, updates=state.updates + 1)


def dual_objective(lam, b, epsilon, log_q, phis) -> float:
    """``-b.lam - log Z(lam) - eps ||lam||`` with exact Z over an enumerated support."""
    lam = np.asarray(lam, dtype=np.float64)
    return float(-np.dot(b, lam) - exact_log_Z(lam, log_q, phis) - epsilon * np.linalg.norm(lam))


@dataclass
class ConstraintReport:
    slack: np.ndarray
    norm: float
    satisfied: bool


def constraint_report(expected_phi, b, epsilon) -> ConstraintReport:
    xi = np.maximum(0.0, np.asarray(expected_phi, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    norm = float(np.linalg.norm(xi))
    return ConstraintReport(xi, norm, norm <= epsilon)
