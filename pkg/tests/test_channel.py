"""Straight-through Gumbel-Softmax channel contracts."""

import numpy as np
import pytest

from refgame import channel
from refgame import diffcore as dc
from refgame.diffcore import ParameterError, Tape, Tensor, make_rng


class TestGumbelNoise:
    def test_fixed_points(self):
        # g = -log(-log u): u = 1/e -> 0, u = 0.5 -> -log(log 2)
        u = np.array([1.0 / np.e, 0.5])
        g = -np.log(-np.log(u))
        np.testing.assert_allclose(g[0], 0.0, atol=1e-12)
        np.testing.assert_allclose(g[1], -np.log(np.log(2.0)), atol=1e-12)
        np.testing.assert_allclose(g[1], 0.3665, atol=1e-4)

    def test_mean_matches_euler_mascheroni(self):
        rng = make_rng(40)
        g = channel.gumbel_noise((10 ** 6,), rng)
        assert abs(g.data.mean() - 0.5772156649) < 0.01

    def test_always_finite(self):
        class ZeroOneRng:
            def random(self, shape):
                out = np.zeros(shape)
                out.reshape(-1)[0] = 0.0
                out.reshape(-1)[-1] = 1.0 - 1e-30
                return out

        g = channel.gumbel_noise((4,), ZeroOneRng())
        assert np.isfinite(g.data).all()


class TestRelax:
    def test_rows_sum_to_one(self):
        rng = make_rng(41)
        logits = Tensor(rng.standard_normal((6, 5)))
        tau = Tensor(np.full(6, 0.7))
        soft = channel.gumbel_softmax_relax(logits, tau, rng=rng)
        np.testing.assert_allclose(soft.data.sum(axis=1), 1.0, atol=1e-9)

    def test_dominant_logit_wins(self):
        rng = make_rng(42)
        logits = Tensor(np.tile([50.0, 0.0, 0.0], (10 ** 4, 1)))
        tau = Tensor(np.full(10 ** 4, 0.8))
        soft = channel.gumbel_softmax_relax(logits, tau, rng=rng)
        assert (np.argmax(soft.data, axis=1) == 0).mean() >= 1.0 - 1e-6

    def test_high_temperature_flattens(self):
        rng = make_rng(43)
        logits = Tensor(rng.standard_normal((2000, 4)))
        tau = Tensor(np.full(2000, 1e3))
        soft = channel.gumbel_softmax_relax(logits, tau, rng=rng)
        assert np.abs(soft.data - 0.25).max() < 0.02

    def test_gumbel_max_frequencies(self):
        rng = make_rng(44)
        logits_row = rng.uniform(-1.5, 1.5, size=5)
        n = 10 ** 5
        logits = Tensor(np.tile(logits_row, (n, 1)))
        tau = Tensor(np.full(n, 0.37))
        soft = channel.gumbel_softmax_relax(logits, tau, rng=rng)
        freqs = np.bincount(np.argmax(soft.data, axis=1), minlength=5) / n
        expect = np.exp(logits_row - logits_row.max())
        expect /= expect.sum()
        assert np.abs(freqs - expect).max() < 0.01

    def test_nonpositive_temperature_rejected(self):
        with pytest.raises(ParameterError):
            channel.gumbel_softmax_relax(Tensor(np.zeros((1, 3))),
                                         Tensor([0.0]), rng=make_rng(0))

    def test_differentiable_wrt_logits_and_tau(self):
        rng = make_rng(45)
        logits = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        pre_tau = Tensor(rng.uniform(0.5, 1.5, size=3), requires_grad=True)
        w = Tensor(rng.standard_normal((3, 4)))
        noise = channel.gumbel_noise((3, 4), make_rng(46))

        def f(logits, pre_tau):
            soft = channel.gumbel_softmax_relax(logits, pre_tau, noise=noise)
            return dc.sum_all(dc.mul(soft, w))

        assert dc.grad_check(f, [logits, pre_tau]) < 1e-6


class TestStraightThrough:
    def test_argmax_one_hot(self):
        soft = Tensor([[0.2, 0.5, 0.3]])
        np.testing.assert_array_equal(
            channel.straight_through_discretize(soft).data, [[0.0, 1.0, 0.0]])

    def test_tie_break_lowest_index(self):
        soft = Tensor([[0.5, 0.5]])
        np.testing.assert_array_equal(
            channel.straight_through_discretize(soft).data, [[1.0, 0.0]])

    def test_forward_always_exactly_one_hot(self):
        rng = make_rng(47)
        soft = dc.softmax(Tensor(rng.standard_normal((64, 9))))
        hard = channel.straight_through_discretize(soft)
        assert np.all(hard.data.sum(axis=1) == 1.0)
        assert np.all((hard.data == 0.0) | (hard.data == 1.0))

    def test_gradient_equals_soft_path_exactly(self):
        # downstream linear loss; the ST backward is the identity, so the
        # hard-path gradient must equal the soft-path gradient bit for bit
        rng = make_rng(48)
        for _ in range(25):
            logits = Tensor(rng.standard_normal((4, 6)), requires_grad=True)
            tau = Tensor(rng.uniform(0.3, 2.0, size=4))
            w = Tensor(rng.standard_normal((4, 6)))
            noise = channel.gumbel_noise((4, 6), make_rng(int(rng.integers(1 << 30))))

            grads = []
            for use_hard in (True, False):
                logits.grad = None
                with Tape() as tape:
                    soft = channel.gumbel_softmax_relax(logits, tau, noise=noise)
                    out = channel.straight_through_discretize(soft) if use_hard else soft
                    loss = dc.sum_all(dc.mul(out, w))
                tape.backward(loss)
                grads.append(logits.grad.copy())
            np.testing.assert_array_equal(grads[0], grads[1])


class TestLearnedTemperature:
    def test_zero_preactivation_closed_form(self):
        head = channel.TemperatureHead(
            w=dc.Parameter(np.zeros((1, 8))), b=dc.Parameter(np.zeros(1)), tau0=0.2)
        h = Tensor(np.ones((3, 8)))
        tau = channel.learned_temperature(h, head)
        np.testing.assert_allclose(tau.data, 1.0 / (0.2 + np.log(2.0)), atol=1e-12)
        np.testing.assert_allclose(tau.data, 1.1200, atol=1e-3)

    def test_large_negative_preactivation_hits_cap(self):
        head = channel.TemperatureHead(
            w=dc.Parameter(np.zeros((1, 4))), b=dc.Parameter(np.full(1, -200.0)), tau0=0.2)
        tau = channel.learned_temperature(Tensor(np.zeros((2, 4))), head)
        np.testing.assert_allclose(tau.data, 5.0, atol=1e-9)

    def test_preactivation_ten(self):
        head = channel.TemperatureHead(
            w=dc.Parameter(np.zeros((1, 4))), b=dc.Parameter(np.full(1, 10.0)), tau0=0.2)
        tau = channel.learned_temperature(Tensor(np.zeros((1, 4))), head)
        expect = 1.0 / (0.2 + np.log1p(np.exp(10.0)))
        np.testing.assert_allclose(tau.data, expect, atol=1e-12)
        np.testing.assert_allclose(tau.data, 0.09804, atol=1e-5)

    def test_bounded_for_wild_inputs(self):
        rng = make_rng(49)
        head = channel.TemperatureHead.create(16, rng, tau0=0.2)
        h = Tensor(rng.standard_normal((100, 16)) * 100)
        tau = channel.learned_temperature(h, head)
        assert np.all(tau.data > 0) and np.all(tau.data <= 5.0 + 1e-12)

    def test_differentiable_wrt_hidden_and_head(self):
        rng = make_rng(50)
        head = channel.TemperatureHead.create(8, rng)
        h = Tensor(rng.standard_normal((4, 8)), requires_grad=True)

        def f(h, w, b):
            head_ = channel.TemperatureHead(w=w, b=b, tau0=0.2)
            tau = channel.learned_temperature(h, head_)
            return dc.sum_all(dc.mul(tau, tau))

        assert dc.grad_check(f, [h, head.w, head.b]) < 1e-7


def test_relaxed_symbol_validates():
    rng = make_rng(51)
    logits = Tensor(rng.standard_normal((5, 4)))
    tau = Tensor(np.full(5, 0.9))
    sym = channel.sample_symbol(logits, tau, rng=rng)
    sym.validate()


def test_forward_identical_train_and_eval():
    # the discretisation has no mode switch: verify the sampling path gives
    # one-hots from the same seed regardless of any surrounding mode
    rng1, rng2 = make_rng(52), make_rng(52)
    logits = Tensor(np.random.default_rng(0).standard_normal((8, 5)))
    tau = Tensor(np.full(8, 0.8))
    a = channel.sample_symbol(logits, tau, rng=rng1).hard.data
    b = channel.sample_symbol(logits, tau, rng=rng2).hard.data
    np.testing.assert_array_equal(a, b)
