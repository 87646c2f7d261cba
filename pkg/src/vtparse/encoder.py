"""Discriminative transition model: the runtime parser and variational posterior."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import stackmachine as sm
from .errors import ContractError, VocabError
from .nn import tensor as T
from .nn.params import ModelConfig, ParamStore
from .nn.tensor import Tensor, no_grad
from .transitions import Action, ParserState, Sentence


@dataclass
class EncoderStepState:
    """One derivation in progress (a single-row machine)."""

    machine: sm.Machine

    @property
    def v(self) -> np.ndarray:
        """Transitional state embedding, length ``2 * encoder_hidden``."""
        with no_grad():
            return self.machine.state_vector().data[0].copy()

    @property
    def parser_state(self) -> ParserState:
        m = self.machine
        ptr = m.stack.pointers[0, 1:m.stack.size[0]] - 1
        stack = tuple(int(m.entry_token[0, k]) for k in ptr)
        arcs = {d: int(h) - 1 for d, h in enumerate(m.heads[0]) if h > 0}
        return ParserState(stack, int(m.pos[0]), arcs, m.t)

    @property
    def terminal(self) -> bool:
        return self.machine.terminal


def _ids(sentences: Sequence[Sentence], attr: str) -> np.ndarray:
    return np.array([getattr(s, attr) for s in sentences], dtype=np.intp)


class Encoder(sm.TransitionNet):
    """q(a | x): distribution over derivations given the sentence."""

    lookahead = True

    def __init__(self, config: ModelConfig, n_pos: int, n_words: int = 1, n_clusters: int = 0,
                 rng: np.random.Generator | None = None, pretrained: np.ndarray | None = None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.config = config
        self.n_pos = n_pos
        self.n_vocab_words = n_words
        self.n_clusters = n_clusters
        self.lexicalized = config.lexicalized
        store = ParamStore()
        store.matrix("enc.pos_emb", (n_pos, config.pos_dim), rng)
        dim = config.pos_dim
        self.pretrained = pretrained is not None
        if self.lexicalized:
            if pretrained is not None:
                if pretrained.shape[0] != n_words:
                    raise VocabError("pretrained table does not match the word vocabulary")
                store.add("enc.word_table", pretrained, frozen=True)
                src = pretrained.shape[1]
                proj = np.eye(src) if src == config.word_dim else None
                if proj is None:
                    store.matrix("enc.word_proj", (src, config.word_dim), rng)
                else:
                    store.add("enc.word_proj", proj)
            else:
                store.matrix("enc.word_emb", (n_words, config.word_dim), rng)
            dim += config.word_dim
            if n_clusters:
                store.matrix("enc.cluster_emb", (n_clusters, config.cluster_dim), rng)
                dim += config.cluster_dim
        super().__init__(store, "enc", dim, config.encoder_hidden, config.layers, config.dropout, rng)

    def embed(self, sentences):
        s = self.store
        pos = _ids(sentences, "pos_ids")
        if pos.max() >= self.n_pos:
            raise VocabError(f"POS id {pos.max()} outside vocabulary of size {self.n_pos}")
        if not self.lexicalized:
            return [T.take_rows(s["enc.pos_emb"], pos[:, k]) for k in range(pos.shape[1])]
        words = _ids(sentences, "word_ids")
        if words.max() >= self.n_vocab_words:
            raise VocabError(f"word id {words.max()} outside vocabulary of size {self.n_vocab_words}")
        clusters = _ids(sentences, "cluster_ids") if self.n_clusters else None
        out = []
        for k in range(pos.shape[1]):
            if self.pretrained:
                w = T.matmul(T.take_rows(s["enc.word_table"], words[:, k]), s["enc.word_proj"])
            else:
                w = T.take_rows(s["enc.word_emb"], words[:, k])
            parts = [T.take_rows(s["enc.pos_emb"], pos[:, k]), w]
            if clusters is not None:
                parts.append(T.take_rows(s["enc.cluster_emb"], clusters[:, k]))
            out.append(T.concat(parts))
        return out

    # step-level interface ---------------------------------------------------

    def start(self, sentence: Sentence) -> EncoderStepState:
        return EncoderStepState(sm.Machine(self, [sentence]))

    def advance(self, state: EncoderStepState, action: Action) -> EncoderStepState:
        with no_grad():
            m = state.machine.clone()
            m.step([int(action)])
        return EncoderStepState(m)

    def action_distribution(self, state: EncoderStepState) -> np.ndarray:
        """Probabilities of (SHIFT, LEFT_REDUCE, RIGHT_REDUCE); invalid ones are 0."""
        if state.terminal:
            raise ContractError("terminal state has no action distribution")
        with no_grad():
            m = state.machine
            lp = m.action_log_probs(m.hidden()).data[0]
        return np.exp(lp)

    # sequence-level interface -----------------------------------------------

    def log_probs(self, sentence: Sentence, sequences, dropout_rng=None) -> Tensor:
        """Differentiable log q(a|x) for several derivations of one sentence."""
        seqs = np.asarray(sequences, dtype=np.intp)
        rows = np.zeros(seqs.shape[0], dtype=np.intp)
        return sm.run(self, [sentence], rows, seqs, "forced", dropout_rng=dropout_rng).log_prob

    def sequence_log_prob(self, sentence: Sentence, actions) -> float:
        with no_grad():
            return float(self.log_probs(sentence, [list(actions)]).data[0])

    def sample_sequences(self, sentence: Sentence, M: int, rng_seed=None):
        """``M`` ancestral samples as ``(actions, log q)`` pairs."""
        if M < 1:
            raise ContractError("M must be at least 1")
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        with no_grad():
            res = sm.run(self, [sentence], np.zeros(M, dtype=np.intp), mode="sample", rng=rng)
        return [(tuple(Action(int(a)) for a in row), float(lp))
                for row, lp in zip(res.actions, res.log_prob.data)]

    def greedy_parse(self, sentence: Sentence) -> list[int]:
        return self.greedy_parse_batch([sentence])[0]

    def greedy_parse_batch(self, sentences: Sequence[Sentence]) -> list[list[int]]:
        """Greedy parses; sentences may have mixed lengths."""
        out: list[list[int] | None] = [None] * len(sentences)
        by_len: dict[int, list[int]] = {}
        for i, s in enumerate(sentences):
            by_len.setdefault(len(s), []).append(i)
        with no_grad():
            for idx in by_len.values():
                res = sm.run(self, [sentences[i] for i in idx], mode="greedy")
                for i, h in zip(idx, res.heads):
                    out[i] = [int(x) for x in h]
        return out  # type: ignore[return-value]
