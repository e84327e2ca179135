import numpy as np
import pytest
from hypothesis import given, strategies as st

from uclab.losses import (
    Dataset,
    LabeledExample,
    LossKind,
    empirical_loss,
    margin,
    margins,
    mc_expected_loss,
    ramp_loss,
    strict_loss,
    uniform_sampler,
    zero_one_loss,
)
from uclab.numerics import RngStream

reals = st.floats(-1e3, 1e3, allow_nan=False)
labels = st.sampled_from([-1, 1])
gammas = st.floats(1e-3, 10.0)


class TestMargin:
    def test_correct(self):
        assert margin([3.0, 1.0], 0) == 2.0

    def test_tie(self):
        assert margin([1.0, 1.0], 0) == 0.0

    def test_three_logits(self):
        assert margin([0.2, 5.0, -1.0], 1) == pytest.approx(4.8)

    def test_bad_index(self):
        with pytest.raises(IndexError):
            margin([1.0, 2.0], 2)
        with pytest.raises(ValueError):
            margin([1.0], 0)

    def test_vectorized_matches_scalar(self):
        gen = np.random.default_rng(0)
        Z = gen.standard_normal((50, 3))
        t = gen.integers(0, 3, 50)
        ref = [margin(Z[i], t[i]) for i in range(50)]
        assert np.allclose(margins(Z, t), ref)


class TestRampLoss:
    def test_linear_branch(self):
        assert ramp_loss(0.5, 1, 1.0) == 0.5

    def test_wrong_side(self):
        assert ramp_loss(-0.3, 1, 1.0) == 1.0

    def test_beyond_margin(self):
        assert ramp_loss(2.0, 1, 1.0) == 0.0

    def test_gamma_zero_is_zero_one(self):
        assert ramp_loss(0.0, 1, 0.0) == 1.0
        assert ramp_loss(1e-9, 1, 0.0) == 0.0

    @given(reals, reals, gammas)
    def test_monotone(self, a, b, gamma):
        lo, hi = min(a, b), max(a, b)
        assert ramp_loss(hi, 1, gamma) <= ramp_loss(lo, 1, gamma)

    @given(reals, gammas)
    def test_continuous(self, a, gamma):
        # Lipschitz with constant 1/gamma away from the jump at 0
        if abs(a) < 1e-6:
            return
        h = 1e-9
        assert abs(ramp_loss(a + h, 1, gamma) - ramp_loss(a, 1, gamma)) <= h / gamma + 1e-12


class TestStrictLoss:
    def test_values(self):
        assert strict_loss(2.0, 1, 1.0) == 0.0
        assert strict_loss(0.5, 1, 1.0) == 1.0
        assert strict_loss(0.0, 1, 0.0) == 0.0


@given(reals, labels, gammas)
def test_loss_ordering(y_out, y, gamma):
    z = zero_one_loss(y_out, y)
    r = ramp_loss(y_out, y, gamma)
    s = strict_loss(y_out, y, gamma)
    assert z <= r <= s


class TestEmpiricalLoss:
    def test_constant_zero_predictor(self):
        data = Dataset(np.ones((4, 2)), np.array([1, -1, 1, -1]))
        assert empirical_loss(lambda X: np.zeros(len(X)), data, LossKind.ramp(0.5)) == 1.0

    def test_perfect_predictor(self):
        data = Dataset(np.array([[1.0], [-2.0]]), np.array([1, -1]))
        assert empirical_loss(lambda X: 3 * X[:, 0], data, LossKind.ramp(1.0)) == 0.0

    def test_mixed(self):
        data = Dataset(np.array([[-1.0], [2.0], [0.5]]), np.array([1, 1, 1]))
        # per-example losses 1, 0, 0.5
        assert empirical_loss(lambda X: X[:, 0], data, LossKind.ramp(1.0)) == pytest.approx(0.5)

    def test_empty(self):
        with pytest.raises(ValueError):
            empirical_loss(lambda X: X[:, 0], Dataset(np.zeros((0, 1)), np.zeros(0)), LossKind.zero_one())


def _fixed_sampler(value):
    def draw(stream, n):
        y = 2 * stream.generator().integers(0, 2, n) - 1
        return Dataset(np.full((n, 1), value) * y[:, None], y)
    return draw


class TestMonteCarlo:
    def test_always_right(self):
        est, se = mc_expected_loss(lambda X: X[:, 0], _fixed_sampler(2.0), 500, LossKind.ramp(1.0), RngStream(1))
        assert (est, se) == (0.0, 0.0)

    def test_always_wrong(self):
        est, se = mc_expected_loss(lambda X: -X[:, 0], _fixed_sampler(2.0), 500, LossKind.ramp(1.0), RngStream(1))
        assert (est, se) == (1.0, 0.0)

    def test_fair_coin(self):
        def coin(stream, n):
            gen = stream.generator()
            return Dataset(gen.standard_normal((n, 1)), 2 * gen.integers(0, 2, n) - 1)
        est, se = mc_expected_loss(lambda X: X[:, 0], coin, 10_000, LossKind.zero_one(), RngStream(4))
        assert abs(est - 0.5) <= 0.02
        assert se == pytest.approx(0.005, rel=0.01)

    def test_reproducible(self):
        a = mc_expected_loss(lambda X: X[:, 0], _fixed_sampler(0.3), 9000, LossKind.ramp(1.0), RngStream(2))
        b = mc_expected_loss(lambda X: X[:, 0], _fixed_sampler(0.3), 9000, LossKind.ramp(1.0), RngStream(2))
        assert a == b

    def test_uniform_sampler_matches_empirical(self):
        gen = np.random.default_rng(7)
        data = Dataset(gen.standard_normal((200, 3)), 2 * gen.integers(0, 2, 200) - 1)
        predict = lambda X: X @ np.array([1.0, -0.5, 0.2])
        loss = LossKind.ramp(0.7)
        exact = empirical_loss(predict, data, loss)
        est, se = mc_expected_loss(predict, uniform_sampler(data), 100_000, loss, RngStream(3))
        assert abs(est - exact) <= 3 * se

    def test_needs_samples(self):
        with pytest.raises(ValueError):
            mc_expected_loss(lambda X: X[:, 0], _fixed_sampler(1.0), 0, LossKind.zero_one(), RngStream(0))


def test_dataset_roundtrip():
    ex = [LabeledExample(np.array([1.0, 2.0]), 1), LabeledExample(np.array([0.0, -1.0]), -1)]
    data = Dataset.from_examples(ex)
    assert data.dim == 2 and data.m == 2
    assert data[1].y == -1 and np.array_equal(data[1].x, [0.0, -1.0])
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), np.zeros(3))


def test_loss_kind_validation():
    with pytest.raises(ValueError):
        LossKind("hinge")
    with pytest.raises(ValueError):
        LossKind.ramp(-1.0)
