"""Arc-standard transition system for projective dependency trees.

Token positions inside a :class:`ParserState` are 0-based.  Head arrays
(:class:`DepTree`) are 1-based with ``0`` denoting the artificial root,
matching the CoNLL-U HEAD column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence

from .errors import (
    DerivationError,
    GuardError,
    InvalidInputError,
    ProjectivityError,
    TransitionError,
)

MAX_ENUM_LENGTH = 8


class Action(IntEnum):
    """Transition kinds.  The integer value doubles as the canonical tie-break
    order, so ``SHIFT``/``GEN`` < ``LEFT_REDUCE`` < ``RIGHT_REDUCE``."""

    SHIFT = 0
    LEFT_REDUCE = 1
    RIGHT_REDUCE = 2
    # the generative model emits a word where the parser consumes one
    GEN = 0

    @property
    def short(self) -> str:
        return ("S", "LR", "RR")[self.value]


S, LR, RR = Action.SHIFT, Action.LEFT_REDUCE, Action.RIGHT_REDUCE
NUM_ACTIONS = 3


@dataclass(frozen=True)
class Sentence:
    """Token stream given to the models: vocabulary ids per position."""

    word_ids: tuple[int, ...]
    pos_ids: tuple[int, ...]
    cluster_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "word_ids", tuple(int(i) for i in self.word_ids))
        object.__setattr__(self, "pos_ids", tuple(int(i) for i in self.pos_ids))
        if len(self.word_ids) != len(self.pos_ids):
            raise InvalidInputError("word_ids and pos_ids differ in length")
        if self.cluster_ids is not None:
            object.__setattr__(self, "cluster_ids", tuple(int(i) for i in self.cluster_ids))
            if len(self.cluster_ids) != len(self.pos_ids):
                raise InvalidInputError("cluster_ids length mismatch")
        if min(self.pos_ids, default=0) < 0 or min(self.word_ids, default=0) < 0:
            raise InvalidInputError("negative vocabulary id")

    @classmethod
    def from_pos(cls, pos_ids: Sequence[int], placeholder: int = 0) -> "Sentence":
        return cls((placeholder,) * len(pos_ids), tuple(pos_ids))

    def __len__(self) -> int:
        return len(self.pos_ids)


@dataclass(frozen=True)
class ParserState:
    stack: tuple[int, ...] = ()
    buffer_pos: int = 0
    arcs: dict = field(default_factory=dict)
    step: int = 0

    def __hash__(self):
        return hash((self.stack, self.buffer_pos, tuple(sorted(self.arcs.items())), self.step))


def _length(sentence_or_n) -> int:
    return sentence_or_n if isinstance(sentence_or_n, int) else len(sentence_or_n)


def initial_state(sentence) -> ParserState:
    n = _length(sentence)
    if n < 1:
        raise InvalidInputError("cannot parse an empty sentence")
    return ParserState()


def valid_mask(stack_size: int, buffer_pos: int, n: int) -> tuple[bool, bool, bool]:
    can_shift = buffer_pos < n
    can_reduce = stack_size >= 2
    return (can_shift, can_reduce, can_reduce)


def valid_actions(state: ParserState, n: int) -> set[Action]:
    mask = valid_mask(len(state.stack), state.buffer_pos, n)
    return {Action(i) for i, ok in enumerate(mask) if ok}


def is_terminal(state: ParserState, n: int) -> bool:
    return state.buffer_pos == n and len(state.stack) == 1


def apply_action(state: ParserState, action: Action, n: int | None = None) -> ParserState:
    """Return the successor state.  ``n`` enables the buffer check for SHIFT."""
    action = Action(action)
    stack = state.stack
    if action == S:
        if n is not None and state.buffer_pos >= n:
            raise TransitionError("SHIFT requires a non-empty buffer")
        return ParserState(stack + (state.buffer_pos,), state.buffer_pos + 1, state.arcs, state.step + 1)
    if len(stack) < 2:
        raise TransitionError(f"{action.name} requires at least two stack items (have {len(stack)})")
    s1, s0 = stack[-2], stack[-1]
    arcs = dict(state.arcs)
    if action == LR:
        arcs[s1] = s0
        top = s0
    else:
        arcs[s0] = s1
        top = s1
    return ParserState(stack[:-2] + (top,), state.buffer_pos, arcs, state.step + 1)


def actions_to_tree(sentence, actions: Iterable[Action]) -> list[int]:
    """Replay a complete derivation and return the 1-based head array."""
    n = _length(sentence)
    if n < 1:
        raise InvalidInputError("empty sentence")
    heads = [-1] * n
    stack: list[int] = []
    pos = 0
    t = -1
    for t, a in enumerate(actions):
        if a == S:
            if pos >= n:
                raise DerivationError(f"step {t}: SHIFT with empty buffer", step=t)
            stack.append(pos)
            pos += 1
        elif a in (LR, RR):
            if len(stack) < 2:
                raise DerivationError(f"step {t}: reduce with fewer than two stack items", step=t)
            s0 = stack.pop()
            s1 = stack.pop()
            if a == LR:
                heads[s1] = s0 + 1
                stack.append(s0)
            else:
                heads[s0] = s1 + 1
                stack.append(s1)
        else:
            raise DerivationError(f"step {t}: unknown action {a!r}", step=t)
    if pos != n or len(stack) != 1:
        raise DerivationError(f"derivation incomplete after {t + 1} steps", step=t + 1)
    heads[stack[0]] = 0
    return heads


def validate_heads(heads: Sequence[int]) -> None:
    """Raise InvalidInputError unless ``heads`` is a single-rooted tree."""
    n = len(heads)
    if n < 1:
        raise InvalidInputError("empty tree")
    roots = [i for i, h in enumerate(heads) if h == 0]
    if len(roots) != 1:
        raise InvalidInputError(f"expected exactly one root, found {len(roots)}")
    for i, h in enumerate(heads):
        if not 0 <= h <= n or h == i + 1:
            raise InvalidInputError(f"token {i + 1}: invalid head {h}")
    for i in range(n):
        seen = set()
        j = i + 1
        while j != 0:
            if j in seen:
                raise InvalidInputError(f"cycle through token {j}")
            seen.add(j)
            j = heads[j - 1]


def crossing_arcs(heads: Sequence[int]) -> tuple[tuple[int, int], tuple[int, int]] | None:
    """Return one pair of crossing (head, dependent) arcs, ignoring root arcs."""
    arcs = [(h, d + 1) for d, h in enumerate(heads) if h != 0]
    spans = [(min(a), max(a), a) for a in arcs]
    for i, (l1, r1, a1) in enumerate(spans):
        for l2, r2, a2 in spans[i + 1:]:
            if l1 < l2 < r1 < r2 or l2 < l1 < r2 < r1:
                return a1, a2
    return None


def is_projective(heads: Sequence[int]) -> bool:
    """Every arc h->d dominates all tokens strictly between h and d."""
    n = len(heads)

    def dominated(h, k):
        while k != 0:
            if k == h:
                return True
            k = heads[k - 1]
        return False

    for d in range(1, n + 1):
        h = heads[d - 1]
        if h == 0:
            continue
        for k in range(min(h, d) + 1, max(h, d)):
            if not dominated(h, k):
                return False
    return True


def tree_to_actions(heads: Sequence[int]) -> list[Action]:
    """Canonical derivation: left dependents are reduced as soon as possible,
    right dependents once their own subtree is complete."""
    validate_heads(heads)
    pair = crossing_arcs(heads)
    if pair is not None:
        raise ProjectivityError(f"non-projective tree: arcs {pair[0]} and {pair[1]} cross", arcs=pair)
    n = len(heads)
    missing = [0] * (n + 1)
    for h in heads:
        missing[h] += 1
    stack: list[int] = []  # 1-based token ids
    pos = 1
    out: list[Action] = []
    while pos <= n or len(stack) > 1:
        if len(stack) >= 2:
            s1, s0 = stack[-2], stack[-1]
            if heads[s1 - 1] == s0:
                stack.pop(-2)
                missing[s0] -= 1
                out.append(LR)
                continue
            if heads[s0 - 1] == s1 and missing[s0] == 0:
                stack.pop()
                missing[s1] -= 1
                out.append(RR)
                continue
        if pos > n:
            raise ProjectivityError("oracle stuck: tree is not projective")
        stack.append(pos)
        pos += 1
        out.append(S)
    return out


def catalan(k: int) -> int:
    c = 1
    for i in range(k):
        c = c * 2 * (2 * i + 1) // (i + 2)
    return c


def count_action_sequences(n: int) -> int:
    return catalan(n - 1) * 2 ** (n - 1)


def enumerate_action_sequences(n: int) -> list[tuple[Action, ...]]:
    """All complete valid derivations for a sentence of length ``n``."""
    if not 1 <= n <= MAX_ENUM_LENGTH:
        raise GuardError(f"enumeration supports 1 <= n <= {MAX_ENUM_LENGTH}, got {n}")
    out: list[tuple[Action, ...]] = []
    prefix: list[Action] = []

    def rec(depth: int, pos: int):
        if pos == n and depth == 1:
            out.append(tuple(prefix))
            return
        if pos < n:
            prefix.append(S)
            rec(depth + 1, pos + 1)
            prefix.pop()
        if depth >= 2:
            for a in (LR, RR):
                prefix.append(a)
                rec(depth - 1, pos)
                prefix.pop()

    rec(0, 0)
    return out


def format_actions(actions: Iterable[Action]) -> str:
    return " ".join(Action(a).short for a in actions)


def parse_actions(text: str) -> list[Action]:
    table = {"S": S, "SHIFT": S, "GEN": S, "LR": LR, "RR": RR}
    return [table[tok.upper()] for tok in text.split()]
