"""Variational EM with posterior regularization.

Each minibatch holds sentences of one length.  The E-step draws ``M``
derivations per sentence from the encoder, scores them under the decoder,
and reweights them with the PR multipliers ``gamma``.  The M-step follows
the REINFORCE surrogate ``-sum_m w_m * (log q(a_m|x) + log p(x, a_m))``
with per-sample weights ``w_m`` built from ``gamma`` and the score.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from . import scores as sc
from . import stackmachine as sm
from .decoder import Decoder
from .encoder import Encoder
from .errors import ConfigurationError, NumericError
from .lm import BaselineFit, LanguageModel
from .nn import tensor as T
from .nn.optim import adagrad_step
from .nn.tensor import Tensor, no_grad
from .pr import CompiledRules, PRState, constraint_report, dual_update
from .pr import gamma as pr_gamma
from .transitions import Sentence, enumerate_action_sequences

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("epoch", "elbo_estimate", "mean_gamma_var", "slack_norm", "dev_dda", "tokens_per_sec")


@dataclass
class TrainConfig:
    variant: str = "rl-pc"
    batch_size: int = 16
    epochs: int = 20
    pretrain_epochs: int = 5
    patience: int = 5
    seed: int = 0
    pr_mode: str = "aggregate"
    sigma: float = 0.8
    dual_step: float = 0.05
    use_pr: bool = True
    # "score": decoder weighted like the encoder; "ml": decoder weighted by gamma only
    decoder_weighting: str = "score"
    bl_window: int = 50
    bl_refit: int = 10
    lm_epochs: int = 3

    def __post_init__(self):
        if self.variant not in sc.VARIANTS:
            raise ConfigurationError(f"variant must be one of {sc.VARIANTS}, got {self.variant!r}")
        if self.decoder_weighting not in ("score", "ml"):
            raise ConfigurationError("decoder_weighting must be 'score' or 'ml'")
        for name in ("batch_size", "bl_window", "bl_refit"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be at least 1")
        for name in ("epochs", "pretrain_epochs", "patience", "lm_epochs"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class ScoreBatch:
    """E-step statistics for one sentence."""

    actions: np.ndarray   # (M, 2n-1)
    heads: np.ndarray     # (M, n)
    log_q: np.ndarray     # encoder log q(a|x)
    log_p: np.ndarray     # decoder log p(x, a)
    weights: np.ndarray   # 1/M for samples, q(a|x) in exact mode
    phi: np.ndarray       # (M, K)
    gamma: np.ndarray
    variant: str = "raw"
    baseline: float | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.heads.shape[1]

    @property
    def l(self) -> np.ndarray:
        return sc.raw_score(self.log_p, self.log_q)

    @property
    def s(self) -> np.ndarray:
        """Rule count per sample."""
        return -self.phi.sum(axis=1)

    @property
    def s_hat(self) -> np.ndarray:
        return sc.standardize(self.s, self.weights)

    @property
    def log_q_pr(self) -> np.ndarray:
        """log of the PR-projected q(a) = q(a|x) * gamma."""
        with np.errstate(divide="ignore"):
            return self.log_q + np.log(self.gamma)

    def score(self, variant: str | None = None) -> np.ndarray:
        variant = variant or self.variant
        if variant not in self._cache:
            w = self.weights
            if variant == "raw":
                out = self.l
            elif variant == "rl-sn":
                out = sc.score_rl_sn(self.l, w)
            elif variant == "rl-pc":
                out = sc.score_rl_pc(sc.score_rl_sn(self.l, w), self.s, w)
            elif variant == "rl-c":
                out = sc.score_rl_c(self.s, w)
            elif variant == "rl-bl":
                if self.baseline is None:
                    raise ConfigurationError("rl-bl needs a fitted baseline")
                out = sc.score_rl_bl(self.l, self.baseline)
            else:
                raise ConfigurationError(f"unknown variant {variant!r}")
            if not np.isfinite(out).all():
                raise NumericError("non-finite score")
            self._cache[variant] = out
        return self._cache[variant]

    def elbo(self) -> float:
        return float(self.weights @ self.l)

    def expected_phi(self) -> np.ndarray:
        return (self.weights * self.gamma) @ self.phi

    def gamma_var(self) -> float:
        return sc.mean_std(self.gamma, self.weights)[1] ** 2


def build_score_batches(sentences: Sequence[Sentence], actions: np.ndarray, heads: np.ndarray,
                        log_q: np.ndarray, log_p: np.ndarray, rules: CompiledRules, pr: PRState,
                        variant: str, exact: bool = False) -> list[ScoreBatch]:
    """Split row-major ``(S*M)`` arrays into per-sentence batches."""
    S = len(sentences)
    M = actions.shape[0] // S
    out = []
    for i, sent in enumerate(sentences):
        sl = slice(i * M, (i + 1) * M)
        phi = rules.features(sent.pos_ids, heads[sl])
        lq = log_q[sl]
        if exact:
            w = np.exp(lq)
            t = -(phi @ pr.lam)
            e = np.exp(t - t.max())
            g = e / (w @ e)
        else:
            w = np.full(M, 1.0 / M)
            g = pr_gamma(pr.lam, phi)
        out.append(ScoreBatch(actions[sl], heads[sl], lq, log_p[sl], w, phi, g, variant))
    return out


def dual_stats(batches: Sequence[ScoreBatch]):
    return [(b.phi, b.gamma * b.weights * len(b.weights), b.n) for b in batches]


# exact objectives -------------------------------------------------------------

def exact_elbo_tensor(sentence: Sentence, encoder: Encoder, decoder: Decoder) -> Tensor:
    """Differentiable sum_a q(a|x) [log p(x,a) - log q(a|x)] over every derivation."""
    seqs = enumerate_action_sequences(len(sentence))
    lq = encoder.log_probs(sentence, seqs)
    lp = decoder.log_probs(sentence, seqs)
    q = T.exp(lq)
    return T.sum_all(T.mul(q, T.sub(lp, lq)))


def exact_elbo(sentence: Sentence, encoder: Encoder, decoder: Decoder) -> float:
    with no_grad():
        return float(exact_elbo_tensor(sentence, encoder, decoder).data)


def exact_log_px(sentence: Sentence, decoder: Decoder) -> float:
    seqs = enumerate_action_sequences(len(sentence))
    with no_grad():
        lp = decoder.log_probs(sentence, seqs).data
    top = lp.max()
    return float(top + np.log(math.fsum(np.exp(lp - top))))


# training -------------------------------------------------------------------

@dataclass
class StepResult:
    batches: list[ScoreBatch]
    applied: bool


def _batches_by_length(sentences: Sequence[Sentence], size: int, rng: np.random.Generator):
    by_len: dict[int, list[int]] = {}
    for i, s in enumerate(sentences):
        by_len.setdefault(len(s), []).append(i)
    out = []
    for n in sorted(by_len):
        idx = np.array(by_len[n])[rng.permutation(len(by_len[n]))]
        out.extend(idx[k:k + size].tolist() for k in range(0, len(idx), size))
    return [out[k] for k in rng.permutation(len(out))]


class Trainer:
    """Owns the models, the dual variables and all random streams."""

    def __init__(self, encoder: Encoder, decoder: Decoder, rules: CompiledRules,
                 config: TrainConfig | None = None, pr: PRState | None = None,
                 lm: LanguageModel | None = None):
        self.encoder = encoder
        self.decoder = decoder
        self.rules = rules
        self.config = config or TrainConfig()
        self.model_config = encoder.config
        c = self.config
        mc = self.model_config
        if pr is None:
            pr = PRState.create(rules.size, mode=c.pr_mode, sigma=c.sigma, epsilon=mc.epsilon,
                                step=c.dual_step, frozen=not c.use_pr)
        self.pr = pr
        seeds = np.random.SeedSequence(c.seed).spawn(3)
        self.sample_rng = np.random.default_rng(seeds[0])
        self.dropout_rng = np.random.default_rng(seeds[1])
        self.order_rng = np.random.default_rng(seeds[2])
        self.lm = lm
        self.baseline = BaselineFit(c.bl_window, c.bl_refit) if c.variant == "rl-bl" else None
        if self.baseline is not None and lm is None:
            raise ConfigurationError("rl-bl needs a language model")
        self.skipped = 0
        self.steps = 0

    # E-step -----------------------------------------------------------------

    @property
    def variant(self) -> str:
        v = self.config.variant
        # without rules in play the polarity signal is meaningless
        if not self.config.use_pr and v == "rl-pc":
            return "rl-sn"
        return v

    def _rows(self, S: int, M: int) -> np.ndarray:
        return np.repeat(np.arange(S), M)

    def _forward(self, sentences: Sequence[Sentence], M: int, exact: bool, dropout: bool):
        """Sample (or enumerate) derivations and score them.

        Returns the score batches plus differentiable ``log q`` and ``log p``
        tensors for the same rows.
        """
        S = len(sentences)
        n = len(sentences[0])
        use_dropout = dropout and self.model_config.dropout > 0
        drng = self.dropout_rng if use_dropout else None
        if exact:
            seqs = np.asarray(enumerate_action_sequences(n), dtype=np.intp)
            M = seqs.shape[0]
            rows = self._rows(S, M)
            actions = np.tile(seqs, (S, 1))
            enc = sm.run(self.encoder, sentences, rows, actions, "forced", dropout_rng=drng)
        else:
            rows = self._rows(S, M)
            if use_dropout:
                with no_grad():
                    smp = sm.run(self.encoder, sentences, rows, mode="sample", rng=self.sample_rng)
                enc = sm.run(self.encoder, sentences, rows, smp.actions, "forced", dropout_rng=drng)
            else:
                enc = smp = sm.run(self.encoder, sentences, rows, mode="sample", rng=self.sample_rng)
            actions = smp.actions
        dec = sm.run(self.decoder, sentences, rows, actions, "forced", dropout_rng=drng)
        if use_dropout:
            with no_grad():
                log_q = (smp.log_prob.data if not exact else
                         sm.run(self.encoder, sentences, rows, actions, "forced").log_prob.data)
                log_p = sm.run(self.decoder, sentences, rows, actions, "forced").log_prob.data
        else:
            log_q, log_p = enc.log_prob.data, dec.log_prob.data
        batches = build_score_batches(sentences, actions, enc.heads, log_q.copy(), log_p.copy(),
                                      self.rules, self.pr, self.variant, exact)
        if self.baseline is not None:
            lm_lp = self.lm.log_prob_batch(self.decoder.tokens(sentences).tolist())
            self.baseline.observe(lm_lp, [b.elbo() for b in batches])
            for b, base in zip(batches, self.baseline.baseline(lm_lp)):
                b.baseline = float(base)
        return batches, enc.log_prob, dec.log_prob

    def e_step(self, sentences: Sequence[Sentence], M: int | None = None, exact: bool = False):
        M = self.model_config.mc_samples if M is None else M
        with no_grad():
            return self._forward(sentences, M, exact, dropout=False)[0]

    # M-step -----------------------------------------------------------------

    def sample_weights(self, batches: Sequence[ScoreBatch], pretrain: bool):
        """Per-row weights for the encoder and decoder surrogates."""
        enc_w, dec_w = [], []
        for b in batches:
            base = b.weights * b.gamma
            if pretrain:
                enc_w.append(base)
                dec_w.append(base)
            else:
                scored = base * b.score()
                enc_w.append(scored)
                dec_w.append(scored if self.config.decoder_weighting == "score" else base)
        S = len(batches)
        return np.concatenate(enc_w) / S, np.concatenate(dec_w) / S

    def surrogate(self, batches, log_q: Tensor, log_p: Tensor, pretrain: bool):
        enc_w, dec_w = self.sample_weights(batches, pretrain)
        enc_loss = T.mul(T.weighted_sum(log_q, enc_w), -1.0)
        dec_loss = T.mul(T.weighted_sum(log_p, dec_w), -1.0)
        return enc_loss, dec_loss, enc_w, dec_w

    def _apply(self, batches, log_q, log_p, pretrain: bool) -> bool:
        mc = self.model_config
        clip = mc.pretrain_grad_clip if pretrain else mc.grad_clip
        enc_loss, dec_loss, enc_w, dec_w = self.surrogate(batches, log_q, log_p, pretrain)
        stores = [self.encoder.store, self.decoder.store]
        for s in stores:
            s.zero_grad()
        try:
            T.add(enc_loss, dec_loss).backward()
            grads = [s.grads() for s in stores]
            finite = all(np.isfinite(g).all() for gs in grads for g in gs.values())
        except NumericError:
            finite = False
        if not finite:
            self.skipped += 1
            log.warning("non-finite gradient, batch skipped (%d so far)", self.skipped)
            return False
        for store, g, w in zip(stores, grads, (enc_w, dec_w)):
            if np.any(w != 0):
                adagrad_step(store, g, lr=mc.learning_rate, clip=clip, l2=mc.l2)
        self.pr = dual_update(self.pr, dual_stats(batches))
        self.steps += 1
        return True

    def m_step(self, sentences: Sequence[Sentence], batches: Sequence[ScoreBatch],
               pretrain: bool = False) -> bool:
        """Update from E-step batches already computed for ``sentences``."""
        S = len(sentences)
        M = batches[0].actions.shape[0]
        rows = self._rows(S, M)
        actions = np.concatenate([b.actions for b in batches])
        drng = self.dropout_rng if self.model_config.dropout > 0 else None
        lq = sm.run(self.encoder, sentences, rows, actions, "forced", dropout_rng=drng).log_prob
        lp = sm.run(self.decoder, sentences, rows, actions, "forced", dropout_rng=drng).log_prob
        return self._apply(batches, lq, lp, pretrain)

    def train_batch(self, sentences: Sequence[Sentence], pretrain: bool = False,
                    M: int | None = None, exact: bool = False) -> StepResult:
        M = self.model_config.mc_samples if M is None else M
        batches, lq, lp = self._forward(sentences, M, exact, dropout=True)
        return StepResult(batches, self._apply(batches, lq, lp, pretrain))

    def run_epoch(self, sentences: Sequence[Sentence], pretrain: bool = False) -> dict:
        t0 = time.perf_counter()
        stats = []
        tokens = 0
        for idx in _batches_by_length(sentences, self.config.batch_size, self.order_rng):
            batch = [sentences[i] for i in idx]
            res = self.train_batch(batch, pretrain=pretrain)
            tokens += sum(len(s) for s in batch)
            for b in res.batches:
                xi = constraint_report(b.expected_phi(), self.pr.threshold(b.n), self.pr.epsilon)
                stats.append((b.elbo(), b.gamma_var(), xi.norm))
        dt = time.perf_counter() - t0
        arr = np.array(stats) if stats else np.zeros((1, 3))
        return {"elbo_estimate": float(arr[:, 0].mean()), "mean_gamma_var": float(arr[:, 1].mean()),
                "slack_norm": float(arr[:, 2].mean()), "tokens_per_sec": tokens / dt if dt > 0 else 0.0}

    def pretrain_epoch(self, sentences: Sequence[Sentence]) -> dict:
        return self.run_epoch(sentences, pretrain=True)

    # snapshots --------------------------------------------------------------

    def snapshot(self) -> dict:
        return {"enc": {k: v.copy() for k, v in self.encoder.store.arrays().items()},
                "dec": {k: v.copy() for k, v in self.decoder.store.arrays().items()},
                "lam": self.pr.lam.copy()}

    def restore(self, snap: dict) -> None:
        self.encoder.store.load_arrays(snap["enc"])
        self.decoder.store.load_arrays(snap["dec"])
        self.pr.lam = snap["lam"].copy()


@dataclass
class TrainResult:
    metrics: list[dict]
    best_epoch: int
    best_dev: float
    best: dict
    final: dict


def dev_dda(encoder: Encoder, sentences: Sequence[Sentence], gold: Sequence[Sequence[int]]) -> float:
    if not sentences:
        return float("nan")
    pred = encoder.greedy_parse_batch(sentences)
    hit = sum(int(p == g) for ps, gs in zip(pred, gold) for p, g in zip(ps, gs))
    return hit / sum(len(g) for g in gold)


def train(trainer: Trainer, sentences: Sequence[Sentence], dev: Sequence[Sentence] = (),
          dev_heads: Sequence[Sequence[int]] = (),
          on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Pretraining for ``pretrain_epochs`` then EM with early stopping on dev DDA.

    Epochs are numbered continuously, so rows up to ``pretrain_epochs``
    belong to pretraining.
    """
    c = trainer.config
    metrics: list[dict] = []
    best = trainer.snapshot()
    best_dev = dev_dda(trainer.encoder, dev, dev_heads) if dev else float("nan")
    best_epoch = 0
    stale = 0
    total = c.pretrain_epochs + c.epochs
    for epoch in range(1, total + 1):
        pretrain = epoch <= c.pretrain_epochs
        row = {"epoch": epoch, **trainer.run_epoch(sentences, pretrain=pretrain)}
        row["dev_dda"] = dev_dda(trainer.encoder, dev, dev_heads) if dev else float("nan")
        row = {k: row[k] for k in METRIC_COLUMNS}
        metrics.append(row)
        if on_epoch:
            on_epoch(row)
        if dev and row["dev_dda"] > best_dev or (not dev):
            best, best_dev, best_epoch, stale = trainer.snapshot(), row["dev_dda"], epoch, 0
        elif not pretrain:
            stale += 1
            if stale >= c.patience:
                break
    return TrainResult(metrics, best_epoch, best_dev, best, trainer.snapshot())
