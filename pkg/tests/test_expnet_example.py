import math

import numpy as np
import pytest
from scipy import stats

from uclab.expnet_example import (
    ExpNetModel,
    ExpTaskConfig,
    exp_dimension_conditions,
    margin_at_least_one,
    min_dimension_exp,
    negate_all_but_noise,
    predict_log_domain,
    run_trial_exp,
    sample_condition_holds,
    sample_dataset_exp,
)
from uclab.losses import Dataset
from uclab.numerics import RngStream


def one_point(x, y=1):
    return ExpNetModel.fit(Dataset(np.atleast_2d(np.asarray(x, dtype=float)), np.array([y])))


class TestMinDimension:
    def test_m50(self):
        # k = max(1/sqrt(15/16), 16^2 * (17/16) * 2) = 544; 1088 ln(3000) = 8710.9
        assert min_dimension_exp(50, 0.1, 0.1) == math.ceil(1088 * math.log(3000)) == 8711

    def test_m32_theorem_dimension(self):
        assert min_dimension_exp(32, 0.05, 0.05, enforce_sample_condition=False) == \
            math.ceil(1088 * math.log(6 * 32 / 0.05))

    def test_d6_alone(self):
        assert math.ceil(exp_dimension_conditions(1, 0.1, 0.1)[2]) == 5

    def test_logarithmic_growth(self):
        a = min_dimension_exp(100, 0.1, 0.1)
        b = min_dimension_exp(1000, 0.1, 0.1)
        assert b - a == pytest.approx(1088 * math.log(10), abs=1.0)

    def test_sample_condition(self):
        assert not sample_condition_holds(32, 0.05)
        assert sample_condition_holds(39, 0.05)
        with pytest.raises(ValueError):
            min_dimension_exp(32, 0.05, 0.05)

    def test_bad_delta(self):
        with pytest.raises(ValueError):
            min_dimension_exp(100, 0.1, 0.3)


class TestConfig:
    def test_u_norm(self):
        cfg = ExpTaskConfig.create(50, 0.1, 0.1)
        assert np.linalg.norm(cfg.u) == pytest.approx(math.sqrt(cfg.D) / 2, abs=1e-9)
        assert cfg.dim == 2 * cfg.D
        assert not cfg.empirical_mode

    def test_flags(self):
        assert ExpTaskConfig.create(32, 0.05, 0.05).empirical_mode
        assert ExpTaskConfig.create(50, 0.1, 0.1, D=100).empirical_mode

    def test_rejects_bad_u(self):
        with pytest.raises(ValueError):
            ExpTaskConfig(4, 3, np.ones(4))


class TestSampling:
    def test_signal_half(self):
        cfg = ExpTaskConfig.create(50, 0.1, 0.1, D=64)
        data = sample_dataset_exp(cfg, RngStream(1))
        assert np.array_equal(data.X[:, :64], data.y[:, None] * cfg.u[None, :])

    def test_noise_energy(self):
        cfg = ExpTaskConfig.create(1000, 0.1, 0.1, D=200)
        data = sample_dataset_exp(cfg, RngStream(2))
        assert np.mean(np.sum(data.X[:, 200:] ** 2, axis=1)) == pytest.approx(200, rel=0.05)

    def test_label_balance(self):
        cfg = ExpTaskConfig.create(2000, 0.1, 0.1, D=4)
        data = sample_dataset_exp(cfg, RngStream(3))
        assert stats.binomtest(int(np.sum(data.y > 0)), 2000).pvalue > 0.001


class TestPrediction:
    def test_single_point_self(self):
        x = np.array([0.5, -1.0, 2.0, 0.25])
        s, mag = predict_log_domain(one_point(x), x)
        assert s == 1 and mag == pytest.approx(x @ x, rel=1e-15)

    def test_origin(self):
        assert predict_log_domain(one_point(np.zeros(4)), np.zeros(4)) == (1, 0.0)

    def test_symmetric_cancellation(self):
        model = ExpNetModel.fit(Dataset(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([1, -1])))
        assert predict_log_domain(model, [0.0, 0.0])[0] == 0

    def test_two_terms(self):
        X = np.array([[1.0, 0.0], [0.0, 0.5]])
        model = ExpNetModel.fit(Dataset(X, np.array([1, -1])))
        z = np.array([0.3, -0.2])
        h = math.exp(np.sum(((z + X[0]) / 2) ** 2)) - math.exp(np.sum(((z + X[1]) / 2) ** 2))
        s, mag = predict_log_domain(model, z)
        assert s == np.sign(h) and mag == pytest.approx(math.log(abs(h)), rel=1e-12)

    def test_huge_exponents_finite(self):
        cfg = ExpTaskConfig.create(20, 0.1, 0.1, D=10_000)
        data = sample_dataset_exp(cfg, RngStream(4))
        s, mag = ExpNetModel.fit(data).predict_log(data.X)
        assert np.all(np.isfinite(mag)) and np.min(mag) > 1000

    def test_margin_threshold(self):
        s = np.array([1, 1, -1, 0])
        mag = np.array([0.0, -1e-300, 5.0, -np.inf])
        assert list(margin_at_least_one(s, mag, np.array([1, 1, -1, 1]))) == [True, False, True, False]


class TestNegation:
    def test_involution_and_noise(self):
        cfg = ExpTaskConfig.create(50, 0.1, 0.1, D=32)
        data = sample_dataset_exp(cfg, RngStream(5))
        neg = negate_all_but_noise(data, cfg.D)
        assert np.array_equal(neg.X[:, 32:], data.X[:, 32:])
        assert np.array_equal(neg.y, -data.y)
        back = negate_all_but_noise(neg, cfg.D)
        assert np.array_equal(back.X, data.X) and np.array_equal(back.y, data.y)

    def test_layout_preserved(self):
        # negated points still satisfy x1 = y*u
        cfg = ExpTaskConfig.create(50, 0.1, 0.1, D=32)
        neg = negate_all_but_noise(sample_dataset_exp(cfg, RngStream(5)), cfg.D)
        assert np.array_equal(neg.X[:, :32], neg.y[:, None] * cfg.u[None, :])


class TestTrial:
    def test_theorem_regime(self):
        cfg = ExpTaskConfig.create(50, 0.1, 0.1)
        r = run_trial_exp(cfg, 1000, RngStream(6))
        assert r["train_margin_fraction"] == 1.0
        assert r["bad_set_error"] == 1.0
        assert r["test_error"] <= 0.1 + 3 * r.std_errs["test_error"]
        assert not r.flags["empirical_mode"]
        assert r["unif_alg_witness"] >= 1 - r["test_error"] - 3 * r.std_errs["test_error"]

    def test_single_point(self):
        cfg = ExpTaskConfig.create(1, 0.1, 0.1, D=16)
        r = run_trial_exp(cfg, 100, RngStream(7))
        assert r["train_error"] == 0.0 and r["train_margin_fraction"] == 1.0
