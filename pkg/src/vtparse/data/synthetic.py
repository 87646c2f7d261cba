"""A head-outward generative grammar over eight coarse tags.

Most attachments follow the built-in ``synthetic`` rule set; a small share
of noise attachments (compounds, clausal verbs, stray attachments) breaks
them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from ..pr import RuleSet, builtin_rules
from .conllu import ConllSentence

TAGS = ("VERB", "NOUN", "ADJ", "DET", "ADV", "ADP", "NUM", "PRON")

# head -> side -> [(dependent, weight)]; "L" children precede the head
_DEPS = {
    "VERB": {"L": [("NOUN", 0.55), ("PRON", 0.35), ("ADV", 0.10)],
             "R": [("NOUN", 0.75), ("ADV", 0.20), ("PRON", 0.05)]},
    "NOUN": {"L": [("DET", 0.45), ("ADJ", 0.35), ("NUM", 0.10), ("ADP", 0.10)],
             "R": [("ADP", 1.0)]},
    "ADJ": {"L": [("ADV", 1.0)], "R": []},
    "ADP": {"L": [], "R": []},
}
# probability of generating at least one child on each side, and of each further one
_CONTINUE = {
    "VERB": {"L": (0.85, 0.15), "R": (0.8, 0.35)},
    "NOUN": {"L": (0.75, 0.35), "R": (0.12, 0.0)},
    "ADJ": {"L": (0.15, 0.0), "R": (0.0, 0.0)},
}
# attachments outside the rule set
_NOISE = {"VERB": [("VERB", "R", 0.6), ("ADP", "R", 0.4)],
          "NOUN": [("NOUN", "L", 0.7), ("PRON", "R", 0.3)]}


@dataclass
class SyntheticGrammar:
    tags: tuple[str, ...] = TAGS
    root: dict = field(default_factory=lambda: {"VERB": 0.97, "NOUN": 0.03})
    deps: dict = field(default_factory=lambda: _DEPS)
    cont: dict = field(default_factory=lambda: _CONTINUE)
    noise_deps: dict = field(default_factory=lambda: _NOISE)
    noise: float = 0.03
    # scales every continuation probability, capped at 0.95
    stop_scale: float = 1.0
    max_depth: int = 6
    rules: RuleSet = field(default_factory=lambda: builtin_rules("synthetic"))

    def _p(self, head: str, side: str, k: int, depth: int) -> float:
        first, more = self.cont.get(head, {}).get(side, (0.0, 0.0))
        p = first if k == 0 else more
        if depth >= self.max_depth:
            return 0.0
        return min(0.95, p * self.stop_scale)

    def _children(self, head: str, depth: int, rng: np.random.Generator):
        out = {"L": [], "R": []}
        for side in ("L", "R"):
            k = 0
            while rng.random() < self._p(head, side, k, depth):
                opts = self.deps.get(head, {}).get(side, [])
                if opts:
                    tags, w = zip(*opts)
                    out[side].append(tags[rng.choice(len(tags), p=np.array(w) / sum(w))])
                k += 1
        noisy = self.noise_deps.get(head, [])
        if noisy and depth < self.max_depth - 1 and rng.random() < self.noise * len(out["L"] + out["R"]) + self.noise:
            tags, sides, w = zip(*noisy)
            j = rng.choice(len(tags), p=np.array(w) / sum(w))
            out[sides[j]].append(tags[j])
        return out

    def _expand(self, tag: str, depth: int, rng) -> list:
        """Nested ``[tag, left subtrees, right subtrees]``."""
        kids = self._children(tag, depth, rng)
        left = [self._expand(t, depth + 1, rng) for t in kids["L"]]
        right = [self._expand(t, depth + 1, rng) for t in kids["R"]]
        return [tag, left, right]

    def sample_tree(self, rng: np.random.Generator) -> tuple[list[str], list[int]]:
        tags, p = zip(*self.root.items())
        root = tags[rng.choice(len(tags), p=np.array(p) / sum(p))]
        tree = self._expand(root, 0, rng)
        words: list[str] = []
        heads: list[int] = []

        def emit(node) -> int:
            tag, left, right = node
            # left children were generated nearest-first
            kids = [emit(c) for c in reversed(left)]
            me = len(words) + 1
            words.append(tag)
            heads.append(0)
            kids += [emit(c) for c in right]
            for k in kids:
                heads[k - 1] = me
            return me

        emit(tree)
        return words, heads


def generate_synthetic(grammar: SyntheticGrammar | None = None, count: int = 1000, max_len: int = 10,
                       seed: int = 0, min_len: int = 2, check: bool = True) -> list[ConllSentence]:
    """``count`` sentences with gold trees whose length lies in ``[min_len, max_len]``."""
    grammar = grammar or SyntheticGrammar()
    if count < 0 or min_len < 1 or max_len < min_len:
        raise ConfigurationError("invalid synthetic corpus size or length bounds")
    rng = np.random.default_rng(seed)
    out: list[ConllSentence] = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 1000 * (count + 10):
            raise ConfigurationError("grammar rarely produces sentences in the requested length range")
        tags, heads = grammar.sample_tree(rng)
        if not min_len <= len(tags) <= max_len:
            continue
        forms = [f"{t.lower()}{int(rng.integers(5))}" for t in tags]
        out.append(ConllSentence(forms, list(tags), list(tags), heads,
                                 ["root" if h == 0 else "dep" for h in heads], [], 0))
    if check and out:
        frac = rule_match_fraction(out, grammar.rules)
        if frac < 0.9:
            raise ConfigurationError(f"rule-match fraction {frac:.3f} below 0.9")
    return out


def rule_match_fraction(sentences, rules: RuleSet) -> float:
    compiled = rules.compile(TAGS, strict=False)
    idx = {t: i for i, t in enumerate(TAGS)}
    return compiled.rule_arc_fraction([[idx[t] for t in s.upos] for s in sentences],
                                      [s.heads for s in sentences])
