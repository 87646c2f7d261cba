import math

import numpy as np
import pytest

from conftest import random_models, sentence
from vtparse import trainer as tr_mod
from vtparse.errors import ConfigurationError
from vtparse.lm import LanguageModel
from vtparse.nn import check_params
from vtparse.nn import tensor as T
from vtparse.pr import PRState, count_rule_features, parse_rules
from vtparse.trainer import (METRIC_COLUMNS, TrainConfig, Trainer, exact_elbo, exact_elbo_tensor,
                             exact_log_px, train)
from vtparse.transitions import actions_to_tree, enumerate_action_sequences

TAGS = ("A", "B", "C", "D")
RULES = parse_rules("ROOT -> A\nA -> B\nB -> C\n")


def compiled(mode="aggregate"):
    return RULES.compile(TAGS, mode=mode)


def make(seed=0, variant="raw", mode="aggregate", b=None, lam=None, scale=1.0, **kw):
    enc, dec = random_models(seed, scale=scale)
    rules = compiled(mode)
    cfg = TrainConfig(variant=variant, pr_mode=mode, seed=seed, **kw)
    pr = None
    if mode == "per_rule" or lam is not None:
        pr = PRState.create(rules.size, mode=mode, b=b if b is not None else np.zeros(rules.size),
                            epsilon=0.1, step=0.05, frozen=not cfg.use_pr)
        if lam is not None:
            pr.lam = np.asarray(lam, float)
    return Trainer(enc, dec, rules, cfg, pr)


def grads_of(loss, stores):
    for s in stores:
        s.zero_grad()
    loss.backward()
    return [s.grads() for s in stores]


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)


SENTS = [sentence([0, 1, 2]), sentence([3, 0, 1])]


class TestExactObjectives:
    def test_expected_score_is_elbo(self):
        t = make(1)
        for b, s in zip(t.e_step(SENTS, exact=True), SENTS):
            assert b.elbo() == pytest.approx(exact_elbo(s, t.encoder, t.decoder), abs=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_jensen(self, seed):
        enc, dec = random_models(seed)
        for n in (2, 3, 4):
            s = sentence(list(np.random.default_rng(seed).integers(0, 4, n)))
            assert exact_log_px(s, dec) - exact_elbo(s, enc, dec) >= -1e-10

    def test_zero_kl_on_degenerate_models(self):
        enc, dec = random_models(0, n_pos=1)
        for store in (enc.store, dec.store):
            for _, p in store.trainable():
                p.data[...] = 0.0
        s = sentence([0, 0, 0, 0])
        assert exact_elbo(s, enc, dec) == pytest.approx(exact_log_px(s, dec), abs=1e-12)

    def test_monte_carlo_elbo(self):
        t = make(2, scale=0.5)
        s = SENTS[0]
        (b,) = t.e_step([s], M=20000)
        se = b.l.std() / math.sqrt(len(b.l))
        assert abs(b.elbo() - exact_elbo(s, t.encoder, t.decoder)) <= 3 * se

    def test_elbo_gradient_matches_finite_differences(self):
        enc, dec = random_models(4, scale=0.5)
        errs = check_params(lambda: exact_elbo_tensor(SENTS[0], enc, dec), [enc.store, dec.store])
        assert max(errs.values()) <= 1e-5


class TestReinforce:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_exact_expectation_equals_elbo_gradient(self, seed):
        t = make(seed, variant="raw", use_pr=False, decoder_weighting="ml")
        stores = [t.encoder.store, t.decoder.store]
        batches, lq, lp = t._forward(SENTS, None, exact=True, dropout=False)
        assert all(np.allclose(b.gamma, 1.0, atol=1e-14) for b in batches)
        enc_loss, dec_loss, _, _ = t.surrogate(batches, lq, lp, pretrain=False)
        est = grads_of(T.add(enc_loss, dec_loss), stores)
        elbo = T.mul(T.add_n([exact_elbo_tensor(s, t.encoder, t.decoder) for s in SENTS]), 1 / len(SENTS))
        ref = grads_of(elbo, stores)
        for g_est, g_ref in zip(est, ref):
            for k in g_ref:
                assert rel_err(-g_est[k], g_ref[k]) <= 1e-6, k

    def test_score_weighting_of_decoder(self):
        t = make(0, variant="raw", use_pr=False)
        batches = t.e_step(SENTS[:1], M=6)
        enc_w, dec_w = t.sample_weights(batches, pretrain=False)
        np.testing.assert_array_equal(enc_w, dec_w)
        np.testing.assert_allclose(enc_w, batches[0].l / 6, rtol=1e-15)

    def test_pretraining_matches_self_training_bitwise(self):
        t = make(3, use_pr=True)
        M = 7
        s = SENTS[0]
        batches, lq, lp = t._forward([s], M, exact=False, dropout=False)
        assert np.all(batches[0].gamma == 1.0)
        stores = [t.encoder.store, t.decoder.store]
        enc_loss, dec_loss, _, _ = t.surrogate(batches, lq, lp, pretrain=True)
        got = grads_of(T.add(enc_loss, dec_loss), stores)
        acts = batches[0].actions
        w = np.full(M, 1.0 / M)
        ref_q = grads_of(T.mul(T.weighted_sum(t.encoder.log_probs(s, acts), w), -1.0), [stores[0]])[0]
        ref_p = grads_of(T.mul(T.weighted_sum(t.decoder.log_probs(s, acts), w), -1.0), [stores[1]])[0]
        for k in ref_q:
            np.testing.assert_array_equal(got[0][k], ref_q[k])
        for k in ref_p:
            np.testing.assert_array_equal(got[1][k], ref_p[k])


class TestEStep:
    def test_zero_lambda_gives_unit_gamma(self):
        t = make(0)
        for b in t.e_step(SENTS, M=9):
            np.testing.assert_array_equal(b.gamma, np.ones(9))

    def test_gamma_sample_mean(self):
        t = make(0, mode="per_rule", lam=[0.7, 1.3, 2.1])
        for b in t.e_step(SENTS, M=13):
            assert abs(math.fsum(b.gamma) / 13 - 1.0) <= np.spacing(1.0)

    def test_reproducible(self):
        a = make(5, variant="rl-pc").e_step(SENTS, M=8)
        b = make(5, variant="rl-pc").e_step(SENTS, M=8)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.actions, y.actions)
            np.testing.assert_array_equal(x.log_q, y.log_q)
            np.testing.assert_array_equal(x.score(), y.score())

    def test_exact_expected_features(self):
        lam = np.array([0.4, 1.1, 0.3])
        t = make(6, mode="per_rule", lam=lam)
        for s, b in zip(SENTS, t.e_step(SENTS, exact=True)):
            tags = [TAGS[i] for i in s.pos_ids]
            num = np.zeros(3)
            Z = 0.0
            for seq in enumerate_action_sequences(len(s)):
                q = math.exp(t.encoder.sequence_log_prob(s, seq))
                phi = count_rule_features(tags, actions_to_tree(len(s), seq), RULES, "per_rule")
                f = math.exp(-lam @ phi)
                Z += q * f
                num += q * f * phi
            np.testing.assert_allclose(b.expected_phi(), num / Z, atol=1e-10)

    def test_large_lambda_favours_rule_samples(self):
        t = make(7, mode="per_rule", lam=[5.0, 0.0, 0.0])
        (b,) = t.e_step([sentence([0, 1, 2])], M=40)
        hit = b.phi[:, 0] < 0  # ROOT -> A present
        assert hit.any() and (~hit).any()
        assert np.all(b.gamma[hit] > 1) and np.all(b.gamma[~hit] < 1)

    def test_polarity_needs_rules(self):
        assert make(0, variant="rl-pc", use_pr=False).variant == "rl-sn"
        assert make(0, variant="rl-pc").variant == "rl-pc"

    def test_baseline_variant(self):
        enc, dec = random_models(0)
        with pytest.raises(ConfigurationError):
            Trainer(enc, dec, compiled(), TrainConfig(variant="rl-bl"))
        lm = LanguageModel(4, hidden=4, layers=1)
        t = Trainer(enc, dec, compiled(), TrainConfig(variant="rl-bl"), lm=lm)
        batches = t.e_step(SENTS, M=5)
        assert t.baseline.fitted
        # one batch fitted on itself: residual mean over the window vanishes
        resid = [b.score().mean() for b in batches]
        assert abs(np.mean(resid)) <= 1e-8


class TestMStep:
    def test_zero_scores_leave_parameters(self):
        t = make(0, variant="rl-c", lam=[0.0])
        before = [{k: v.copy() for k, v in s.arrays().items()} for s in (t.encoder.store, t.decoder.store)]
        accum = [{k: v.copy() for k, v in s.accum.items()} for s in (t.encoder.store, t.decoder.store)]
        one = [sentence([1]), sentence([0])]  # single derivation: every score is zero
        res = t.train_batch(one, M=4)
        assert res.applied
        for b in res.batches:
            np.testing.assert_array_equal(b.score(), 0.0)
        for store, ref, acc in zip((t.encoder.store, t.decoder.store), before, accum):
            for k, v in store.arrays().items():
                np.testing.assert_array_equal(v, ref[k])
            assert {k: v.tolist() for k, v in store.accum.items()} == {k: v.tolist() for k, v in acc.items()}
        assert t.pr.updates == 1

    def test_non_finite_gradient_skipped(self, monkeypatch):
        t = make(0)
        before = {k: v.copy() for k, v in t.encoder.store.arrays().items()}
        real = t.sample_weights

        def poisoned(batches, pretrain):
            e, d = real(batches, pretrain)
            return e * np.inf, d
        monkeypatch.setattr(t, "sample_weights", poisoned)
        res = t.train_batch(SENTS, M=3)
        assert not res.applied and t.skipped == 1
        for k, v in t.encoder.store.arrays().items():
            np.testing.assert_array_equal(v, before[k])

    def test_dual_variables_move_under_violation(self):
        t = make(0, sigma=0.99, dual_step=0.5)
        t.train_batch(SENTS, M=6)
        assert t.pr.lam[0] > 0

    def test_frozen_dual(self):
        t = make(0, use_pr=False)
        t.train_batch(SENTS, M=6)
        assert t.pr.lam[0] == 0.0


CORPUS = [sentence(list(np.random.default_rng(k).integers(0, 4, 1 + k % 4))) for k in range(24)]


class TestLoop:
    def test_zero_epochs(self):
        t = make(0, epochs=0, pretrain_epochs=0)
        before = {k: v.copy() for k, v in t.encoder.store.arrays().items()}
        res = train(t, CORPUS)
        assert res.metrics == []
        for k, v in t.encoder.store.arrays().items():
            np.testing.assert_array_equal(v, before[k])

    def test_epoch_numbering_and_columns(self):
        t = make(0, variant="rl-pc", epochs=2, pretrain_epochs=1, batch_size=8)
        t.model_config.mc_samples = 3
        res = train(t, CORPUS)
        assert [r["epoch"] for r in res.metrics] == [1, 2, 3]
        assert all(tuple(r) == METRIC_COLUMNS for r in res.metrics)

    def test_early_stopping(self):
        t = make(0, epochs=10, pretrain_epochs=1, patience=2, batch_size=8)
        t.model_config.mc_samples = 3
        dev = [sentence([0]), sentence([2])]  # accuracy stays 1.0, never improves
        res = train(t, CORPUS, dev, [[0], [0]])
        assert len(res.metrics) == 3 and res.best_epoch == 0 and res.best_dev == 1.0

    def test_deterministic(self):
        rows = []
        for _ in range(2):
            t = make(9, variant="rl-pc", epochs=2, pretrain_epochs=1, batch_size=8)
            t.model_config.mc_samples = 4
            res = train(t, CORPUS, CORPUS[:4], [actions_to_tree(len(s), [0] * len(s) + [1] * (len(s) - 1))
                                                for s in CORPUS[:4]])
            rows.append([{k: v for k, v in r.items() if k != "tokens_per_sec"} for r in res.metrics])
        assert rows[0] == rows[1]

    def test_snapshot_round_trip(self):
        t = make(0)
        snap = t.snapshot()
        t.train_batch(SENTS, M=3)
        t.restore(snap)
        for k, v in t.encoder.store.arrays().items():
            np.testing.assert_array_equal(v, snap["enc"][k])


def test_dual_stats_weights():
    t = make(0)
    (b,) = t.e_step(SENTS[:1], M=5)
    (phi, g, n), = tr_mod.dual_stats([b])
    np.testing.assert_allclose(g, b.gamma)
    assert n == 3
