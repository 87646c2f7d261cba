"""Self-check suites behind ``vtparse check``.

Each check returns ``(name, passed, detail)``.  The model-dependent checks
run on a loaded checkpoint when one is given and on fresh random models
otherwise; gradient checks always use a tiny fresh model.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import pr
from .decoder import Decoder
from .encoder import Encoder
from .errors import NumericError
from .nn import check_params
from .nn import tensor as T
from .nn.params import ModelConfig
from .trainer import exact_elbo, exact_log_px
from .transitions import Sentence, actions_to_tree, enumerate_action_sequences, tree_to_actions

Check = tuple[str, bool, str]


def _round_trips(max_n: int) -> Check:
    count = 0
    for n in range(1, min(max_n, 6) + 1):
        trees = {tuple(actions_to_tree(n, a)) for a in enumerate_action_sequences(n)}
        for h in trees:
            if tuple(actions_to_tree(n, tree_to_actions(list(h)))) != h:
                return ("transition round trip", False, f"tree {list(h)} not reproduced")
            count += 1
    return ("transition round trip", True, f"{count} trees")


def _sentences(rng, n_pos: int, max_n: int, per_length: int = 2):
    return [Sentence.from_pos(rng.integers(0, n_pos, n)) for n in range(1, max_n + 1) for _ in range(per_length)]


def _normalisation(enc: Encoder, dec: Decoder, sents) -> list[Check]:
    worst_q = worst_gap = 0.0
    for s in sents:
        seqs = enumerate_action_sequences(len(s))
        with T.no_grad():
            lq = enc.log_probs(s, seqs).data
        worst_q = max(worst_q, abs(math.fsum(np.exp(lq)) - 1.0))
        gap = exact_log_px(s, dec) - exact_elbo(s, enc, dec)
        worst_gap = min(worst_gap, gap)
    return [("encoder normalisation", worst_q <= 1e-10, f"max |sum q - 1| = {worst_q:.2e}"),
            ("ELBO below log p(x)", worst_gap >= -1e-10, f"min gap = {worst_gap:.2e}")]


def _step_distributions(dec: Decoder, sents) -> Check:
    worst = 0.0
    for s in sents:
        st = dec.start(s)
        seq = enumerate_action_sequences(len(s))[0]
        for a in seq:
            act, words = dec.action_and_word_distributions(st)
            worst = max(worst, abs(act.sum() - 1), abs(words.sum() - 1))
            st = dec.advance(st, a)
    return ("decoder step distributions", worst <= 1e-10, f"max deviation = {worst:.2e}")


def _gradients(seed: int) -> Check:
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(pos_dim=3, word_dim=3, encoder_hidden=4, decoder_hidden=4, dropout=0.0)
    enc, dec = Encoder(cfg, 3, rng=rng), Decoder(cfg, 3, rng=rng)
    s = Sentence.from_pos([0, 2, 1])
    seqs = enumerate_action_sequences(3)
    w = rng.standard_normal(len(seqs))
    errs = check_params(lambda: T.weighted_sum(enc.log_probs(s, seqs), w), [enc.store])
    errs.update(check_params(lambda: T.weighted_sum(dec.log_probs(s, seqs), w), [dec.store]))
    worst = max(errs.values())
    return ("finite-difference gradients", worst <= 1e-4, f"max relative error = {worst:.2e}")


def _gamma_mean(seed: int) -> Check:
    rng = np.random.default_rng(seed)
    for _ in range(200):
        M, K = int(rng.integers(1, 40)), int(rng.integers(1, 4))
        g = pr.gamma(rng.random(K) * 5, -rng.integers(0, 10, (M, K)).astype(float))
        a = np.array([math.fsum(g) / M, 1.0]).view(np.int64)
        if abs(int(a[0]) - int(a[1])) > 1 or (g < 0).any():
            return ("gamma sample mean", False, f"mean {math.fsum(g) / M!r}")
    return ("gamma sample mean", True, "mean is 1 within one ulp")


def _finite(enc: Encoder, dec: Decoder) -> Check:
    try:
        enc.store.check_finite()
        dec.store.check_finite()
    except NumericError as e:
        return ("finite parameters", False, str(e))
    return ("finite parameters", True, "all parameters finite")


def run_checks(max_n: int = 3, seed: int = 0, encoder: Encoder | None = None,
               decoder: Decoder | None = None, log: Callable[[str], None] | None = None) -> list[Check]:
    rng = np.random.default_rng(seed)
    if encoder is None or decoder is None:
        cfg = ModelConfig(pos_dim=8, word_dim=8, encoder_hidden=8, decoder_hidden=8, dropout=0.0)
        encoder, decoder = Encoder(cfg, 5, rng=rng), Decoder(cfg, 5, rng=rng)
    results = [_round_trips(max_n), _finite(encoder, decoder)]
    if results[-1][1]:
        sents = _sentences(rng, encoder.n_pos, max_n)
        if decoder.lexicalized:
            # lexicalized decoders need word ids within their vocabulary
            sents = [Sentence(rng.integers(0, decoder.n_words, len(s)), s.pos_ids) for s in sents]
        results += _normalisation(encoder, decoder, sents)
        results.append(_step_distributions(decoder, sents))
    results += [_gradients(seed), _gamma_mean(seed)]
    if log:
        for name, ok, detail in results:
            log(f"{'PASS' if ok else 'FAIL'}\t{name}\t{detail}")
    return results
