import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vtparse.errors import ConfigurationError
from vtparse.scores import (mean_std, raw_score, score_rl_bl, score_rl_c, score_rl_pc, score_rl_sn,
                            standardize)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
batch = arrays(np.float64, st.integers(2, 30), elements=finite)


class TestExamples:
    def test_raw(self):
        assert raw_score(-2.0, -2.0) == 0.0
        assert raw_score(-5.0, -2.0) == -3.0

    def test_rl_sn(self):
        np.testing.assert_array_equal(score_rl_sn([1, 1, 1, 1]), np.zeros(4))
        np.testing.assert_allclose(score_rl_sn([0, 2]), [-1, 1], atol=1e-15)
        np.testing.assert_allclose(score_rl_sn([0, 0.2]), [-0.1, 0.1], atol=1e-15)

    def test_rl_pc(self):
        np.testing.assert_allclose(score_rl_pc([-1, 1], [3, 1]), [1, -1])
        # zero variance in s: every sample gets the positive magnitude
        np.testing.assert_allclose(score_rl_pc([-0.5, 0.5, 2.0], [4, 4, 4]), [0.5, 0.5, 2.0])

    def test_rl_c(self):
        np.testing.assert_allclose(score_rl_c([3, 1]), [1, -1])
        np.testing.assert_array_equal(score_rl_c([2, 2, 2]), np.zeros(3))

    def test_rl_bl(self):
        l = np.array([-3.0, 1.5])
        np.testing.assert_array_equal(score_rl_bl(l, 0.0), l)
        np.testing.assert_array_equal(score_rl_bl(l, np.array([1.0, 2.0])), [-4.0, -0.5])

    @pytest.mark.parametrize("fn", [score_rl_sn, score_rl_c])
    def test_single_sample_rejected(self, fn):
        with pytest.raises(ConfigurationError):
            fn([1.0])

    def test_rl_pc_single_sample_rejected(self):
        with pytest.raises(ConfigurationError):
            score_rl_pc([1.0], [1.0])

    @pytest.mark.parametrize("v", [7.0, 0.1, -3.3])
    def test_constant_input_has_zero_spread(self, v):
        assert mean_std([v] * 3) == (v, 0.0)
        np.testing.assert_array_equal(score_rl_c([v] * 3), np.zeros(3))
        np.testing.assert_array_equal(score_rl_sn([v] * 5), np.zeros(5))

    def test_population_statistics(self):
        mu, sd = mean_std([1.0, 3.0])
        assert (mu, sd) == (2.0, 1.0)  # population, not sample, deviation

    def test_weighted_statistics_match_repetition(self):
        mu, sd = mean_std([1.0, 4.0], [2, 1])
        ref = np.array([1.0, 1.0, 4.0])
        assert mu == pytest.approx(ref.mean())
        assert sd == pytest.approx(ref.std())


class TestProperties:
    @given(batch)
    @settings(max_examples=200, deadline=None)
    def test_rl_sn_moments(self, l):
        out = score_rl_sn(l)
        assert abs(out.mean()) <= 1e-10 * max(1.0, np.abs(l).max())
        np.testing.assert_allclose(out.std(), min(l.std(), 1.0), atol=1e-10)

    @given(batch, st.data())
    @settings(max_examples=200, deadline=None)
    def test_rl_pc_polarity(self, l, data):
        s = data.draw(arrays(np.float64, l.shape, elements=st.integers(0, 6).map(float)))
        sn = score_rl_sn(l)
        out = score_rl_pc(sn, s)
        np.testing.assert_array_equal(np.abs(out), np.abs(sn))
        s_hat = standardize(s)
        assert np.all((out >= 0) == (s_hat >= 0) | (out == 0))
        assert np.all(out[s_hat < 0] <= 0)

    @given(arrays(np.float64, st.integers(2, 30), elements=st.integers(-10, 10).map(float)))
    @settings(max_examples=200, deadline=None)
    def test_rl_c_standardised(self, s):
        out = score_rl_c(s)
        assert abs(out.mean()) <= 1e-10
        sd = out.std()
        assert min(abs(sd), abs(sd - 1)) <= 1e-10
