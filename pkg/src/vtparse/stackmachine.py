"""Batched lockstep execution of the arc-standard automaton over stack LSTMs.

Both the parser (encoder) and the generator (decoder) are a
:class:`TransitionNet`: token inputs feed a stack LSTM whose entries are
composed on every reduce, and a per-sentence context LSTM summarises the
tokens not on the stack.  The encoder reads the unconsumed buffer right to
left; the decoder reads the tokens generated so far left to right.  The step
state is ``concat(stack summary, context at buffer position)``.

A :class:`Machine` advances ``R`` rows in lockstep, all rows sharing one
sentence length ``n``, so every derivation takes exactly ``2n - 1`` steps and
each step pushes exactly one stack entry per row.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, InvalidInputError, TransitionError
from .nn import tensor as T
from .nn.cells import LSTM, StackRNN
from .nn.params import ParamStore
from .nn.tensor import Tensor
from .transitions import NUM_ACTIONS, Sentence

SHIFT, LEFT, RIGHT = 0, 1, 2


class TransitionNet:
    """Parameters and feature functions shared by encoder and decoder."""

    lookahead = True
    n_words = 0

    def __init__(self, store: ParamStore, prefix: str, input_dim: int, hidden: int,
                 layers: int, dropout: float, rng: np.random.Generator):
        self.store = store
        self.prefix = prefix
        self.input_dim = input_dim
        self.hidden = hidden
        self.dropout = dropout
        self.context_lstm = LSTM(store, f"{prefix}.context", input_dim, hidden, layers, rng)
        self.stack_lstm = LSTM(store, f"{prefix}.stack", input_dim, hidden, layers, rng)
        self.direction = store.matrix(f"{prefix}.direction", (NUM_ACTIONS, input_dim), rng)
        self.comp_W = store.matrix(f"{prefix}.compose.W", (3 * input_dim, input_dim), rng)
        self.comp_b = store.bias(f"{prefix}.compose.b", input_dim)
        self.state_W = store.matrix(f"{prefix}.state.W", (2 * hidden, hidden), rng)
        self.state_b = store.bias(f"{prefix}.state.b", hidden)
        self.action_W = store.matrix(f"{prefix}.action.W", (hidden, NUM_ACTIONS), rng)
        self.action_b = store.bias(f"{prefix}.action.b", NUM_ACTIONS)

    # subclasses -------------------------------------------------------------

    def embed(self, sentences: Sequence[Sentence]) -> list[Tensor]:
        """Input vectors per position, each of shape ``(S, input_dim)``."""
        raise NotImplementedError

    def word_targets(self, sentences: Sequence[Sentence]) -> np.ndarray | None:
        return None

    # shared -----------------------------------------------------------------

    def contexts(self, xs: list[Tensor], batch: int) -> list[Tensor]:
        """``ctx[k]`` is the context seen when the buffer position is ``k``."""
        lstm = self.context_lstm
        if self.lookahead:
            states = lstm.run(xs[::-1], batch)
            states = states[::-1]  # states[k] summarises tokens k..n-1
        else:
            states = lstm.run(xs, batch)  # states[k] summarises tokens 0..k-1
        return [lstm.output(s) for s in states]

    def word_logits(self, hidden: Tensor) -> Tensor:
        raise ContractError("this network does not emit words")

    def parameters(self) -> ParamStore:
        return self.store


@dataclass
class RunResult:
    actions: np.ndarray          # (R, 2n-1) int
    log_prob: Tensor             # (R,) total log-probability
    action_log_prob: np.ndarray  # (R,) action part only
    heads: np.ndarray            # (R, n) 1-based heads


class Machine:
    """Lockstep state of ``R`` derivations over same-length sentences."""

    def __init__(self, net: TransitionNet, sentences: Sequence[Sentence], rows=None,
                 rng: np.random.Generator | None = None):
        if not sentences:
            raise InvalidInputError("no sentences")
        n = len(sentences[0])
        if n < 1:
            raise InvalidInputError("cannot parse an empty sentence")
        if any(len(s) != n for s in sentences):
            raise InvalidInputError("sentences in one machine must share a length")
        S = len(sentences)
        rows = np.arange(S) if rows is None else np.asarray(rows, dtype=np.intp)
        R = rows.shape[0]
        self.net = net
        self.n = n
        self.R = R
        self.rows = rows
        self.rng = rng
        xs = net.embed(sentences)
        if rng is not None and net.dropout > 0:
            xs = [T.dropout(x, net.dropout, rng) for x in xs]
        self.xs = xs
        self.ctx = net.contexts(xs, S)
        targets = net.word_targets(sentences)
        self.targets = None if targets is None else targets[rows]
        self.stack = StackRNN(net.stack_lstm, R, capacity=n + 2)
        self.entries: list[Tensor] = []
        self.entry_token = np.zeros((R, 2 * n), dtype=np.intp)
        self.pos = np.zeros(R, dtype=np.intp)
        self.heads = np.full((R, n), -1, dtype=np.intp)
        self.t = 0
        self._arange = np.arange(R)

    def clone(self) -> "Machine":
        other = Machine.__new__(Machine)
        other.__dict__.update(self.__dict__)
        other.stack = self.stack.clone()
        other.entries = list(self.entries)
        other.entry_token = self.entry_token.copy()
        other.pos = self.pos.copy()
        other.heads = self.heads.copy()
        return other

    @property
    def depth(self) -> np.ndarray:
        return self.stack.size - 1

    @property
    def terminal(self) -> bool:
        return self.t == 2 * self.n - 1

    def mask(self) -> np.ndarray:
        shift = self.pos < self.n
        red = self.depth >= 2
        return np.stack([shift, red, red], axis=1)

    def state_vector(self) -> Tensor:
        """The transitional state embedding, ``(R, 2H)``."""
        ctx = T.gather_rows(self.ctx, self.pos, self.rows)
        return T.concat([self.stack.top(), ctx])

    def hidden(self) -> Tensor:
        v = self.state_vector()
        if self.rng is not None and self.net.dropout > 0:
            v = T.dropout(v, self.net.dropout, self.rng)
        return T.tanh(T.affine(v, self.net.state_W, self.net.state_b))

    def action_log_probs(self, hidden: Tensor) -> Tensor:
        if self.terminal:
            raise ContractError("no action distribution in a terminal state")
        logits = T.affine(hidden, self.net.action_W, self.net.action_b)
        return T.masked_log_softmax(logits, self.mask())

    def word_log_prob(self, hidden: Tensor, actions: np.ndarray) -> Tensor | None:
        """Log-probability of the teacher-forced token on GEN rows, 0 elsewhere."""
        gen = actions == SHIFT
        if not gen.any():
            return None
        logp = T.log_softmax(self.net.word_logits(hidden))
        idx = np.minimum(self.pos, self.n - 1)
        tgt = self.targets[self._arange, idx]
        return T.mul(T.pick(logp, tgt), gen.astype(np.float64))

    def step(self, actions) -> None:
        actions = np.asarray(actions, dtype=np.intp)
        mask = self.mask()
        if not mask[self._arange, actions].all():
            r = int(np.argmin(mask[self._arange, actions]))
            raise TransitionError(
                f"row {r}, step {self.t}: action {actions[r]} violates mask {mask[r].tolist()}")
        shift = actions == SHIFT
        size = self.stack.size
        tok = T.gather_rows(self.xs, np.minimum(self.pos, self.n - 1), self.rows)
        new_token = self.pos.copy()
        if shift.all():
            entry = tok
        else:
            ptr = self.stack.pointers
            # stack element at slot j was pushed at step ptr[r, j] - 1
            k0 = ptr[self._arange, np.maximum(size - 1, 1)] - 1
            k1 = ptr[self._arange, np.maximum(size - 2, 1)] - 1
            left = actions == LEFT
            head_k = np.where(left, k0, k1)
            dep_k = np.where(left, k1, k0)
            head = T.gather_rows(self.entries, head_k)
            dep = T.gather_rows(self.entries, dep_k)
            comp = T.tanh(T.affine(T.concat([head, dep, T.take_rows(self.net.direction, actions)]),
                                   self.net.comp_W, self.net.comp_b))
            entry = T.where_rows(shift, tok, comp)
            red = ~shift
            head_tok = self.entry_token[self._arange, head_k]
            dep_tok = self.entry_token[self._arange, dep_k]
            self.heads[self._arange[red], dep_tok[red]] = head_tok[red] + 1
            new_token = np.where(shift, self.pos, head_tok)
            self.stack.pop(np.where(red, 2, 0))
        self.stack.push(entry)
        self.entries.append(entry)
        self.entry_token[:, self.t] = new_token
        self.pos = self.pos + shift
        self.t += 1
        if self.terminal:
            top = self.entry_token[self._arange, self.stack.pointers[self._arange, self.stack.size - 1] - 1]
            self.heads[self._arange, top] = 0


def choose(logp: np.ndarray, mode: str, rng: np.random.Generator | None) -> np.ndarray:
    """Pick an action per row from masked log-probabilities."""
    if mode == "greedy":
        return np.argmax(logp, axis=1)
    if mode == "sample":
        p = np.exp(logp)
        c = np.cumsum(p, axis=1)
        c /= c[:, -1:]
        u = rng.random(p.shape[0])
        return np.argmax(u[:, None] < c, axis=1)
    raise ValueError(mode)


def run(net: TransitionNet, sentences: Sequence[Sentence], rows=None, actions=None,
        mode: str = "forced", rng: np.random.Generator | None = None,
        dropout_rng: np.random.Generator | None = None) -> RunResult:
    """Drive a machine to completion.

    ``mode`` is ``"forced"`` (score the given ``actions``), ``"sample"``
    (ancestral sampling with ``rng``) or ``"greedy"``.
    """
    m = Machine(net, sentences, rows, dropout_rng)
    steps = 2 * m.n - 1
    if mode == "forced":
        actions = np.asarray(actions, dtype=np.intp).reshape(m.R, -1)
        if actions.shape[1] != steps:
            raise TransitionError(f"expected {steps} actions, got {actions.shape[1]}")
        chosen = actions
    else:
        chosen = np.zeros((m.R, steps), dtype=np.intp)
    terms: list[Tensor] = []
    act_total = np.zeros(m.R)
    for t in range(steps):
        h = m.hidden()
        lp = m.action_log_probs(h)
        if mode != "forced":
            chosen[:, t] = choose(lp.data, mode, rng)
        a = chosen[:, t]
        picked = T.pick(lp, a)
        act_total += picked.data
        terms.append(picked)
        if m.targets is not None:
            w = m.word_log_prob(h, a)
            if w is not None:
                terms.append(w)
        m.step(a)
    return RunResult(chosen, T.add_n(terms), act_total, m.heads.copy())
