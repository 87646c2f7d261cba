"""Generative transition model p(x, a) emitting the token stream on GEN."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import stackmachine as sm
from .errors import ContractError, VocabError
from .nn import tensor as T
from .nn.params import ModelConfig, ParamStore
from .nn.tensor import Tensor, no_grad
from .transitions import Action, Sentence


@dataclass
class DecoderStepState:
    machine: sm.Machine

    @property
    def u(self) -> np.ndarray:
        with no_grad():
            return self.machine.state_vector().data[0].copy()

    @property
    def generated(self) -> int:
        return int(self.machine.pos[0])

    @property
    def terminal(self) -> bool:
        return self.machine.terminal


class Decoder(sm.TransitionNet):
    """p(x, a).  Regenerates POS tags (unlexicalized) or words (lexicalized)."""

    lookahead = False

    def __init__(self, config: ModelConfig, n_tokens: int, rng: np.random.Generator | None = None):
        rng = np.random.default_rng(1) if rng is None else rng
        self.config = config
        self.n_words = n_tokens
        self.lexicalized = config.lexicalized
        dim = config.word_dim if config.lexicalized else config.pos_dim
        store = ParamStore()
        store.matrix("dec.token_emb", (n_tokens, dim), rng)
        super().__init__(store, "dec", dim, config.decoder_hidden, config.layers, config.dropout, rng)
        store.matrix("dec.word.W", (config.decoder_hidden, n_tokens), rng)
        store.bias("dec.word.b", n_tokens)

    def tokens(self, sentences) -> np.ndarray:
        attr = "word_ids" if self.lexicalized else "pos_ids"
        ids = np.array([getattr(s, attr) for s in sentences], dtype=np.intp)
        if ids.max() >= self.n_words:
            raise VocabError(f"token id {ids.max()} outside vocabulary of size {self.n_words}")
        return ids

    def embed(self, sentences):
        ids = self.tokens(sentences)
        return [T.take_rows(self.store["dec.token_emb"], ids[:, k]) for k in range(ids.shape[1])]

    def word_targets(self, sentences):
        return self.tokens(sentences)

    def word_logits(self, hidden: Tensor) -> Tensor:
        return T.affine(hidden, self.store["dec.word.W"], self.store["dec.word.b"])

    # step-level interface ---------------------------------------------------

    def start(self, sentence: Sentence) -> DecoderStepState:
        return DecoderStepState(sm.Machine(self, [sentence]))

    def advance(self, state: DecoderStepState, action: Action) -> DecoderStepState:
        with no_grad():
            m = state.machine.clone()
            m.step([int(action)])
        return DecoderStepState(m)

    def action_and_word_distributions(self, state: DecoderStepState):
        """(probabilities of GEN/LEFT_REDUCE/RIGHT_REDUCE, next-token probabilities)."""
        if state.terminal:
            raise ContractError("terminal state has no action distribution")
        with no_grad():
            m = state.machine
            h = m.hidden()
            act = np.exp(m.action_log_probs(h).data[0])
            words = np.exp(T.log_softmax(self.word_logits(h)).data[0])
        return act, words

    # sequence-level interface -----------------------------------------------

    def log_probs(self, sentence: Sentence, sequences, dropout_rng=None) -> Tensor:
        seqs = np.asarray(sequences, dtype=np.intp)
        rows = np.zeros(seqs.shape[0], dtype=np.intp)
        return sm.run(self, [sentence], rows, seqs, "forced", dropout_rng=dropout_rng).log_prob

    def joint_log_prob(self, sentence: Sentence, actions) -> float:
        with no_grad():
            return float(self.log_probs(sentence, [list(actions)]).data[0])

    def action_log_prob(self, sentence: Sentence, actions) -> float:
        """Only the action factors of the joint (the word terms left out)."""
        with no_grad():
            res = sm.run(self, [sentence], [0], np.asarray([list(actions)]), "forced")
        return float(res.action_log_prob[0])
