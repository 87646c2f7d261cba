"""Recurrent language model and the affine baseline used by the RL-BL score."""

from __future__ import annotations

from collections import deque
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .nn import tensor as T
from .nn.cells import LSTM
from .nn.optim import adagrad_step
from .nn.params import ParamStore
from .nn.tensor import Tensor, no_grad


class LanguageModel:
    """LSTM LM over token ids with input and output embeddings tied.

    Id ``vocab_size`` is the sentence boundary, used both as the first
    input and as the final prediction target.
    """

    def __init__(self, vocab_size: int, hidden: int = 100, layers: int = 2,
                 rng: np.random.Generator | None = None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.vocab_size = vocab_size
        self.boundary = vocab_size
        self.store = ParamStore()
        self.emb = self.store.matrix("lm.emb", (vocab_size + 1, hidden), rng)
        self.out_b = self.store.bias("lm.out.b", vocab_size + 1)
        self.lstm = LSTM(self.store, "lm.lstm", hidden, hidden, layers, rng)

    def _log_probs(self, ids: np.ndarray) -> Tensor:
        """Per-sentence log p(x) for a same-length batch ``ids`` of shape (B, n)."""
        B, n = ids.shape
        inputs = np.concatenate([np.full((B, 1), self.boundary), ids], axis=1)
        targets = np.concatenate([ids, np.full((B, 1), self.boundary)], axis=1)
        state = self.lstm.initial(B)
        out_W = T.transpose(self.emb)
        terms = []
        for k in range(n + 1):
            state = self.lstm.step(T.take_rows(self.emb, inputs[:, k]), state)
            logits = T.add(T.matmul(self.lstm.output(state), out_W), self.out_b)
            terms.append(T.pick(T.log_softmax(logits), targets[:, k]))
        return T.add_n(terms)

    def log_prob(self, ids: Sequence[int]) -> float:
        with no_grad():
            return float(self._log_probs(np.asarray([ids], dtype=np.intp)).data[0])

    def log_prob_batch(self, seqs: Sequence[Sequence[int]]) -> np.ndarray:
        out = np.zeros(len(seqs))
        by_len: dict[int, list[int]] = {}
        for i, s in enumerate(seqs):
            by_len.setdefault(len(s), []).append(i)
        with no_grad():
            for idx in by_len.values():
                out[idx] = self._log_probs(np.asarray([seqs[i] for i in idx], dtype=np.intp)).data
        return out

    def fit(self, seqs: Sequence[Sequence[int]], epochs: int = 3, batch_size: int = 32,
            lr: float = 0.05, clip: float = 5.0, seed: int = 0) -> list[float]:
        """Maximum likelihood with AdaGrad; returns per-epoch mean negative log-likelihood per token."""
        rng = np.random.default_rng(seed)
        by_len: dict[int, list[int]] = {}
        for i, s in enumerate(seqs):
            by_len.setdefault(len(s), []).append(i)
        batches = [idx[k:k + batch_size] for idx in by_len.values() for k in range(0, len(idx), batch_size)]
        history = []
        for _ in range(epochs):
            total, tokens = 0.0, 0
            for b in rng.permutation(len(batches)):
                idx = batches[b]
                ids = np.asarray([seqs[i] for i in idx], dtype=np.intp)
                self.store.zero_grad()
                lp = self._log_probs(ids)
                loss = T.mul(T.sum_all(lp), -1.0 / len(idx))
                loss.backward()
                adagrad_step(self.store, lr=lr, clip=clip)
                total -= float(lp.data.sum())
                tokens += ids.size + len(idx)
            history.append(total / max(tokens, 1))
        return history


class BaselineFit:
    """Least-squares fit ``l_bar ~ alpha * log p_LM(x) + tau`` over recent minibatches."""

    def __init__(self, window: int = 50, refit_every: int = 10):
        self.window: deque[tuple[np.ndarray, np.ndarray]] = deque(maxlen=window)
        self.refit_every = refit_every
        self.alpha: float | None = None
        self.tau: float | None = None
        self.batches = 0

    @property
    def fitted(self) -> bool:
        return self.alpha is not None

    def observe(self, lm_log_probs, mean_scores) -> None:
        """Record one minibatch and refit on schedule (always on the first batch)."""
        self.window.append((np.asarray(lm_log_probs, float), np.asarray(mean_scores, float)))
        if not self.fitted or self.batches % self.refit_every == 0:
            self.refit()
        self.batches += 1

    def refit(self) -> None:
        if not self.window:
            raise ConfigurationError("no data to fit the baseline")
        x = np.concatenate([w[0] for w in self.window])
        y = np.concatenate([w[1] for w in self.window])
        self.alpha, self.tau = ols(x, y)

    def baseline(self, lm_log_probs) -> np.ndarray:
        if not self.fitted:
            raise ConfigurationError("baseline used before it was fitted")
        return self.alpha * np.asarray(lm_log_probs, float) + self.tau


def ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Slope and intercept; the slope is 0 when ``x`` is constant."""
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        return 0.0, float(y.mean())
    alpha = float(xc @ (y - y.mean())) / sxx
    return alpha, float(y.mean() - alpha * x.mean())
