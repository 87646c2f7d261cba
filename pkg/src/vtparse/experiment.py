"""Desk-scale induction experiment on a generated treebank.

Used by the acceptance suite and handy for quick ablations::

    from vtparse.experiment import run_synthetic
    run_synthetic(seed=1, pretrain_epochs=5).test_dda
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import Corpus, baseline_parse, build_vocab, dda, generate_synthetic
from .decoder import Decoder
from .encoder import Encoder
from .nn.params import ModelConfig
from .pr import builtin_rules
from .trainer import TrainConfig, Trainer, dev_dda, train

# small enough for a 1-CPU desk run; the larger defaults behave the same way
DESK_MODEL = dict(pos_dim=32, word_dim=32, encoder_hidden=32, decoder_hidden=32, dropout=0.0,
                  mc_samples=10, learning_rate=0.01)


@dataclass
class SyntheticResult:
    seed: int
    test_dda: float
    dev_dda: float
    best_epoch: int
    baselines: dict[str, float]
    seconds: float
    metrics: list[dict] = field(repr=False, default_factory=list)

    @property
    def best_branching(self) -> float:
        return max(self.baselines["left_branching"], self.baselines["right_branching"])


def synthetic_splits(seed: int, count: int = 2000, max_len: int = 10):
    """80/10/10 train/dev/test split of one generated corpus."""
    raw = generate_synthetic(count=count, seed=seed, max_len=max_len)
    a, b = int(0.8 * count), int(0.9 * count)
    return raw[:a], raw[a:b], raw[b:]


def run_synthetic(seed: int, pretrain_epochs: int = 5, epochs: int = 10, use_pr: bool = True,
                  variant: str = "rl-pc", count: int = 2000, model: dict | None = None,
                  **train_kw) -> SyntheticResult:
    train_raw, dev_raw, test_raw = synthetic_splits(seed, count)
    vocab = build_vocab(train_raw)
    tr, dv, te = (Corpus(x, vocab, name) for x, name in ((train_raw, "train"), (dev_raw, "dev"), (test_raw, "test")))
    cfg = ModelConfig(**{**DESK_MODEL, **(model or {})})
    rng = np.random.default_rng(seed)
    enc = Encoder(cfg, len(vocab.pos), rng=rng)
    dec = Decoder(cfg, len(vocab.pos), rng=rng)
    rules = builtin_rules("synthetic").compile(vocab.pos.itos)
    tc = TrainConfig(variant=variant, epochs=epochs, pretrain_epochs=pretrain_epochs, seed=seed,
                     use_pr=use_pr, patience=max(epochs, 1), **train_kw)
    trainer = Trainer(enc, dec, rules, tc)
    t0 = time.perf_counter()
    res = train(trainer, tr.sentences, dv.sentences, dv.heads)
    seconds = time.perf_counter() - t0
    trainer.restore(res.best)
    gold = te.heads
    lengths = [len(h) for h in gold]
    base = {k: dda(gold, baseline_parse(lengths, k, seed)) for k in ("left_branching", "right_branching", "random")}
    return SyntheticResult(seed, dev_dda(enc, te.sentences, gold), res.best_dev, res.best_epoch, base,
                           seconds, res.metrics)
