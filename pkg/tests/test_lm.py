import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vtparse.errors import ConfigurationError
from vtparse.lm import BaselineFit, LanguageModel, ols
from vtparse.nn import check_params
from vtparse.nn import tensor as T
from vtparse.scores import score_rl_bl


class TestOLS:
    def test_constant_scores(self):
        fit = BaselineFit()
        fit.observe([-3.0, -5.0, -9.0], [2.5, 2.5, 2.5])
        assert fit.alpha == pytest.approx(0.0, abs=1e-15) and fit.tau == pytest.approx(2.5)
        l = np.full(3, 2.5)
        np.testing.assert_allclose(score_rl_bl(l, fit.baseline([-3.0, -5.0, -9.0])), 0.0, atol=1e-12)

    def test_constant_regressor(self):
        assert ols(np.ones(4), np.array([1.0, 2.0, 3.0, 6.0])) == (0.0, 3.0)

    def test_exact_line(self):
        x = np.array([-1.0, 0.0, 2.0])
        a, t = ols(x, 3 * x - 1)
        assert a == pytest.approx(3.0) and t == pytest.approx(-1.0)

    @given(st.lists(st.floats(-30, 0), min_size=3, max_size=40), st.integers(0, 2**31))
    @settings(max_examples=100, deadline=None)
    def test_residual_mean_zero(self, xs, seed):
        x = np.array(xs)
        y = np.random.default_rng(seed).normal(size=x.size) * 5
        a, t = ols(x, y)
        assert abs(np.mean(y - (a * x + t))) <= 1e-8

    def test_unfitted(self):
        with pytest.raises(ConfigurationError):
            BaselineFit().baseline([1.0])
        with pytest.raises(ConfigurationError):
            BaselineFit().refit()

    def test_window_and_schedule(self):
        fit = BaselineFit(window=2, refit_every=3)
        fit.observe([0.0, 1.0], [0.0, 1.0])  # first batch always fits
        assert fit.alpha == pytest.approx(1.0)
        fit.observe([0.0, 1.0], [0.0, 5.0])  # not a refit step
        assert fit.alpha == pytest.approx(1.0)
        fit.observe([0.0, 1.0], [0.0, 5.0])
        assert fit.alpha == pytest.approx(1.0)
        fit.observe([0.0, 1.0], [0.0, 5.0])  # batch index 3: refit on the last two batches only
        assert fit.alpha == pytest.approx(5.0)


class TestLanguageModel:
    def test_tied_embeddings(self):
        lm = LanguageModel(4, hidden=6, layers=2)
        names = [n for n, _ in lm.store.trainable()]
        assert "lm.emb" in names and not any("out.W" in n for n in names)

    def test_batch_matches_single(self):
        lm = LanguageModel(3, hidden=5, rng=np.random.default_rng(1))
        seqs = [[0, 1], [2, 2, 1], [1], [2, 0]]
        np.testing.assert_allclose(lm.log_prob_batch(seqs), [lm.log_prob(s) for s in seqs], atol=1e-12)

    def test_next_token_distribution_normalised(self):
        lm = LanguageModel(3, hidden=4, rng=np.random.default_rng(2))
        # one-token sentences leave mass for longer ones
        assert 0 < sum(np.exp(lm.log_prob([v])) for v in range(3)) < 1
        with T.no_grad():
            state = lm.lstm.step(T.take_rows(lm.emb, np.array([lm.boundary])), lm.lstm.initial(1))
            lp = T.log_softmax(T.add(T.matmul(lm.lstm.output(state), T.transpose(lm.emb)), lm.out_b))
        assert np.exp(lp.data[0]).sum() == pytest.approx(1.0, abs=1e-12)

    def test_gradients(self):
        lm = LanguageModel(3, hidden=3, layers=2, rng=np.random.default_rng(3))
        ids = np.array([[0, 2, 1], [1, 1, 0]])
        errs = check_params(lambda: T.sum_all(lm._log_probs(ids)), [lm.store])
        assert max(errs.values()) <= 1e-5

    def test_fit_lowers_nll(self):
        rng = np.random.default_rng(0)
        seqs = [[0, 1, 0, 1][: int(k)] for k in rng.integers(1, 5, 60)]
        lm = LanguageModel(2, hidden=8, layers=1, rng=rng)
        hist = lm.fit(seqs, epochs=6, lr=0.1, seed=0)
        assert hist[-1] < hist[0]
