"""Recurrent building blocks: (stacked) LSTM cells and the stack RNN."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import tensor as T
from .params import ParamStore
from .tensor import Tensor


class LSTM:
    """A stack of ``layers`` LSTM cells operating on packed states.

    A packed state has width ``2 * hidden * layers`` and stores ``[h; c]`` for
    each layer in order.  :meth:`output` returns the top layer's ``h``.
    """

    def __init__(self, store: ParamStore, prefix: str, input_dim: int, hidden: int,
                 layers: int, rng: np.random.Generator):
        self.hidden = hidden
        self.layers = layers
        self.W = []
        self.b = []
        d = input_dim
        for k in range(layers):
            self.W.append(store.matrix(f"{prefix}.W{k}", (d + hidden, 4 * hidden), rng))
            self.b.append(store.bias(f"{prefix}.b{k}", 4 * hidden))
            d = hidden
        self.init = store.add(f"{prefix}.init", np.zeros((1, 2 * hidden * layers)))

    @property
    def state_dim(self) -> int:
        return 2 * self.hidden * self.layers

    def initial(self, batch: int) -> Tensor:
        return T.take_rows(self.init, np.zeros(batch, dtype=np.intp))

    def step(self, x: Tensor, state: Tensor) -> Tensor:
        if self.layers == 1:
            return T.lstm_cell(x, state, self.W[0], self.b[0])
        w = 2 * self.hidden
        outs = []
        inp = x
        for k in range(self.layers):
            hc = T.lstm_cell(inp, T.slice_cols(state, k * w, (k + 1) * w), self.W[k], self.b[k])
            outs.append(hc)
            inp = T.slice_cols(hc, 0, self.hidden)
        return T.concat(outs)

    def output(self, state: Tensor) -> Tensor:
        top = (self.layers - 1) * 2 * self.hidden
        return T.slice_cols(state, top, top + self.hidden)

    def run(self, xs: Sequence[Tensor], batch: int) -> list[Tensor]:
        """States after each input, preceded by the initial state."""
        states = [self.initial(batch)]
        for x in xs:
            states.append(self.step(x, states[-1]))
        return states


class StackRNN:
    """Batched stack LSTM with persistent history.

    Each row owns a stack of pointers into ``history``; a push computes one
    new state per row from the row's current top, a pop only moves pointers,
    so the state underneath is restored exactly.
    """

    def __init__(self, lstm: LSTM, batch: int, capacity: int = 16):
        self.lstm = lstm
        self.batch = batch
        self.history: list[Tensor] = [lstm.initial(batch)]
        # pointers[r, :size[r]] indexes history; slot 0 is the empty-stack state
        self.pointers = np.zeros((batch, capacity), dtype=np.intp)
        self.size = np.ones(batch, dtype=np.intp)
        self._rows = np.arange(batch)
        self._top_cache: Tensor | None = self.history[0]

    def clone(self) -> "StackRNN":
        other = StackRNN.__new__(StackRNN)
        other.lstm = self.lstm
        other.batch = self.batch
        other.history = list(self.history)
        other.pointers = self.pointers.copy()
        other.size = self.size.copy()
        other._rows = self._rows
        other._top_cache = self._top_cache
        return other

    def depth(self, row: int) -> int:
        return int(self.size[row]) - 1

    def top_state(self) -> Tensor:
        if self._top_cache is None:
            which = self.pointers[self._rows, self.size - 1]
            self._top_cache = T.gather_rows(self.history, which)
        return self._top_cache

    def top(self) -> Tensor:
        """Summary ``h`` of the current stack contents, shape ``(B, H)``."""
        return self.lstm.output(self.top_state())

    def pop(self, counts) -> None:
        counts = np.broadcast_to(np.asarray(counts, dtype=np.intp), (self.batch,))
        if counts.any():
            if (counts > self.size - 1).any():
                r = int(np.argmax(counts > self.size - 1))
                raise IndexError(f"row {r}: pop {counts[r]} from depth {self.size[r] - 1}")
            self.size = self.size - counts
            self._top_cache = None

    def push(self, x: Tensor) -> None:
        new = self.lstm.step(x, self.top_state())
        self.history.append(new)
        if int(self.size.max()) >= self.pointers.shape[1]:
            grown = np.zeros((self.batch, 2 * self.pointers.shape[1]), dtype=np.intp)
            grown[:, : self.pointers.shape[1]] = self.pointers
            self.pointers = grown
        self.pointers[self._rows, self.size] = len(self.history) - 1
        self.size = self.size + 1
        self._top_cache = new
