"""Dense-core tests: forward math, gradients vs finite differences, Adam,
timestep embeddings."""

import numpy as np
import pytest

from disco import nn
from disco.errors import ConfigError, NumericError, ShapeError


def tiny_net(rng, sizes=(5, 8, 3), activation="relu"):
    return nn.init_mlp(list(sizes), rng, activation=activation, embed_dim=2)


def flatten_params(params):
    return np.concatenate([a.ravel() for w, b in zip(params.weights, params.biases)
                           for a in (w, b)])


def unflatten_like(params, flat):
    weights, biases, off = [], [], 0
    for w, b in zip(params.weights, params.biases):
        weights.append(flat[off:off + w.size].reshape(w.shape))
        off += w.size
        biases.append(flat[off:off + b.size])
        off += b.size
    from dataclasses import replace
    return replace(params, weights=tuple(weights), biases=tuple(biases))


def numeric_gradient(params, xs, loss_fn, h=1e-6):
    """Central finite differences on the flattened parameter vector.

    Runs in extended precision: with float64 the FD roundoff floor
    (~1e-11) would swamp the relative comparison for coordinates below
    ~1e-7, while longdouble pushes the floor under 1e-12 so the 1e-4
    relative criterion is meaningful all the way down to the 1e-8
    absolute-comparison carve-out.
    """
    theta = flatten_params(params).astype(np.longdouble)
    xs = np.atleast_2d(xs).astype(np.longdouble)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        for sign in (+1, -1):
            t = theta.copy()
            t[i] += sign * h
            p = unflatten_like(params, t)
            pred = nn.mlp_forward(p, xs)
            per_item, _ = loss_fn(pred)
            grad[i] += sign * per_item.mean()
        grad[i] /= 2 * h
    return grad.astype(np.float64)


def assert_gradcheck(analytic, numeric, rel_tol=1e-4, small=1e-8, note=""):
    tiny = np.abs(numeric) < small
    rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), small)
    assert np.all(rel[~tiny] <= rel_tol), \
        f"{note}: worst relative error {rel[~tiny].max():.2e}"
    assert np.all(np.abs(analytic[tiny] - numeric[tiny]) <= 1e-10), note


def kink_free_inputs(params, rng, n, margin=1e-3):
    """Draw inputs whose pre-activations stay clear of the relu kink.

    Finite differences straddling a kink measure a one-sided slope and
    disagree with the (well-defined) analytic subgradient; the oracle is
    only valid away from the kink, so probe there.
    """
    for _ in range(200):
        xs = rng.standard_normal((n, params.input_dim))
        _, (pre, _) = nn.mlp_forward_cached(params, xs)
        if all(np.min(np.abs(z)) > margin for z in pre[:-1]) or \
                params.activation != "relu":
            return xs
    raise AssertionError("could not find kink-free probe inputs")


def mse_to(targets):
    def loss_fn(pred):
        d = pred - targets
        return (d * d).mean(axis=1), (2.0 / targets.shape[1]) * d
    return loss_fn


class TestForward:
    def test_zero_final_layer_gives_zero_output(self):
        rng = np.random.default_rng(0)
        params = tiny_net(rng)
        zeroed = unflatten_like(params, np.zeros(flatten_params(params).size))
        out = nn.mlp_forward(zeroed, rng.standard_normal(5))
        assert np.array_equal(out, np.zeros(3))

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        params = tiny_net(rng)
        x = rng.standard_normal((4, 5))
        a = nn.mlp_forward(params, x)
        b = nn.mlp_forward(params, x)
        assert np.array_equal(a, b)

    def test_hand_computed_single_hidden_layer(self):
        # y = W2^T relu(W1^T x + b1) + b2 on a 2-dim toy, checked by hand
        w1 = np.array([[1.0, -2.0], [0.5, 1.0]])   # (in=2, hidden=2)
        b1 = np.array([0.0, 1.0])
        w2 = np.array([[2.0], [-1.0]])              # (hidden=2, out=1)
        b2 = np.array([0.5])
        params = nn.DenoiserParams((w1, w2), (b1, b2), "relu", 2, 100.0, "toy")
        x = np.array([1.0, 2.0])
        # pre-activation: [1*1+2*0.5, 1*(-2)+2*1+1] = [2, 1]; relu same
        # output: 2*2 + 1*(-1) + 0.5 = 3.5
        out = nn.mlp_forward(params, x)
        assert out.shape == (1,)
        assert abs(out[0] - 3.5) < 1e-12

    def test_shape_error(self):
        params = tiny_net(np.random.default_rng(2))
        with pytest.raises(ShapeError):
            nn.mlp_forward(params, np.zeros(7))


class TestGradient:
    @pytest.mark.parametrize("activation", ["relu", "gelu"])
    def test_matches_finite_differences(self, activation):
        rng = np.random.default_rng(3)
        params = tiny_net(rng, (4, 6, 2), activation)
        xs = rng.standard_normal((3, 4))
        targets = rng.standard_normal((3, 2))
        loss_fn = mse_to(targets)
        _, grads = nn.gradient(params, xs, loss_fn)
        analytic = np.concatenate([a.ravel() for gw, gb in grads for a in (gw, gb)])
        numeric = numeric_gradient(params, xs, loss_fn)
        assert_gradcheck(analytic, numeric, note=activation)

    def test_constant_loss_zero_gradient(self):
        rng = np.random.default_rng(4)
        params = tiny_net(rng)
        zeroed = unflatten_like(params, np.zeros(flatten_params(params).size))
        loss, grads = nn.gradient(zeroed, rng.standard_normal((2, 5)),
                                  mse_to(np.zeros((2, 3))))
        assert loss == 0.0
        assert all(np.all(gw == 0) and np.all(gb == 0) for gw, gb in grads)

    def test_duplicating_batch_preserves_mean_gradient(self):
        rng = np.random.default_rng(5)
        params = tiny_net(rng)
        xs = rng.standard_normal((3, 5))
        targets = rng.standard_normal((3, 3))
        _, g1 = nn.gradient(params, xs, mse_to(targets))
        _, g2 = nn.gradient(params, np.vstack([xs, xs]),
                            mse_to(np.vstack([targets, targets])))
        for (a, b), (c, d) in zip(g1, g2):
            assert np.allclose(a, c, atol=1e-12)
            assert np.allclose(b, d, atol=1e-12)

    def test_nonfinite_loss_reports_batch_index(self):
        rng = np.random.default_rng(6)
        params = tiny_net(rng)
        xs = rng.standard_normal((3, 5))

        def loss_fn(pred):
            per = np.array([1.0, np.nan, 2.0])
            return per, np.zeros_like(pred)

        with pytest.raises(NumericError, match="index 1"):
            nn.gradient(params, xs, loss_fn)

    def test_empty_batch_rejected(self):
        params = tiny_net(np.random.default_rng(7))
        with pytest.raises(ConfigError):
            nn.gradient(params, np.zeros((0, 5)), mse_to(np.zeros((0, 3))))


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        rng = np.random.default_rng(8)
        params = tiny_net(rng)
        state = nn.AdamState.init(params)
        zeros = [(np.zeros_like(w), np.zeros_like(b))
                 for w, b in zip(params.weights, params.biases)]
        new_params, new_state = nn.adam_step(params, zeros, state)
        assert new_state.step == 1
        for (w0, b0), (w1, b1) in zip(zip(params.weights, params.biases),
                                      zip(new_params.weights, new_params.biases)):
            assert np.array_equal(w0, w1)
            assert np.array_equal(b0, b1)

    def test_first_step_is_signed_lr(self):
        # bias-corrected first step: delta = -lr * g / (|g| + eps) ~ -lr*sign(g)
        rng = np.random.default_rng(9)
        params = tiny_net(rng)
        state = nn.AdamState.init(params, lr=1e-3)
        grads = [(rng.standard_normal(w.shape), rng.standard_normal(b.shape))
                 for w, b in zip(params.weights, params.biases)]
        new_params, _ = nn.adam_step(params, grads, state)
        for (w0, _), (w1, _), (gw, _) in zip(
                zip(params.weights, params.biases),
                zip(new_params.weights, new_params.biases), grads):
            delta = w1 - w0
            assert np.allclose(delta, -1e-3 * np.sign(gw), atol=1e-6)

    def test_deterministic_replay(self):
        rng = np.random.default_rng(10)
        params = tiny_net(rng)
        grads = [(rng.standard_normal(w.shape), rng.standard_normal(b.shape))
                 for w, b in zip(params.weights, params.biases)]
        # replaying the same two steps gives bit-identical results
        def two_steps():
            p, s = nn.adam_step(params, grads, nn.AdamState.init(params))
            return nn.adam_step(p, grads, s)
        p1, s1 = two_steps()
        p2, s2 = two_steps()
        assert all(np.array_equal(a, b) for a, b in zip(p1.weights, p2.weights))
        assert s1.step == s2.step == 2

    def test_training_sanity_1d_regression(self):
        # a couple thousand steps on a fixed toy cut the loss by >= 100x
        rng = np.random.default_rng(11)
        params = nn.init_mlp([1, 16, 16, 1], rng, embed_dim=2)
        xs = np.linspace(-1, 1, 64)[:, None]
        ys = np.sin(3 * xs)
        state = nn.AdamState.init(params, lr=3e-3)
        first = None
        for _ in range(2000):
            loss, grads = nn.gradient(params, xs, mse_to(ys))
            if first is None:
                first = loss
            params, state = nn.adam_step(params, grads, state)
        final, _ = nn.gradient(params, xs, mse_to(ys))
        assert final <= first / 100


class TestTimestepEmbed:
    def test_k0_alternates_zero_one(self):
        emb = nn.timestep_embed(0, 8)
        assert np.array_equal(emb[0::2], np.zeros(4))
        assert np.array_equal(emb[1::2], np.ones(4))

    def test_range_bounded(self):
        for k in range(0, 101, 7):
            emb = nn.timestep_embed(k, 64)
            assert np.all(emb >= -1.0) and np.all(emb <= 1.0)

    def test_low_period_pairs_distinguish_adjacent_levels(self):
        e1 = nn.timestep_embed(1, 64)
        e2 = nn.timestep_embed(2, 64)
        # first few (fastest) pairs must differ in both sin and cos entries
        for pair in range(4):
            assert abs(e1[2 * pair] - e2[2 * pair]) > 1e-3
            assert abs(e1[2 * pair + 1] - e2[2 * pair + 1]) > 1e-3

    def test_geometric_periods_span_bounds(self):
        emb = nn.timestep_embed(1.0, 4, max_period=100.0)
        # two periods: 1 and 100 -> angles 1 and 0.01
        assert abs(emb[0] - np.sin(1.0)) < 1e-12
        assert abs(emb[2] - np.sin(0.01)) < 1e-12

    def test_odd_dim_rejected(self):
        with pytest.raises(ConfigError):
            nn.timestep_embed(1, 7)

    def test_vectorized_matches_scalar(self):
        ks = np.array([0, 1, 5, 99])
        batch = nn.timestep_embed(ks, 16)
        for i, k in enumerate(ks):
            assert np.array_equal(batch[i], nn.timestep_embed(int(k), 16))


class TestDenoise:
    def test_assembles_and_reshapes(self):
        rng = np.random.default_rng(12)
        obs = rng.standard_normal((3, 4))
        seq = rng.standard_normal((5, 2))
        in_dim = 12 + 10 + 8
        params = nn.init_mlp([in_dim, 16, 10], rng, embed_dim=8)
        out = nn.denoise(params, obs, seq, 3)
        assert out.shape == seq.shape
        assert np.array_equal(out, nn.denoise(params, obs, seq, 3))

    def test_wrong_output_dim_rejected(self):
        rng = np.random.default_rng(13)
        params = nn.init_mlp([30, 16, 9], rng, embed_dim=8)
        with pytest.raises(ShapeError):
            nn.denoise(params, rng.standard_normal((3, 4)),
                       rng.standard_normal((5, 2)), 1)

    def test_gradcheck_sweep_many_random_nets(self):
        # 20 random small nets, <= 3 hidden layers, <= 16 units
        rng = np.random.default_rng(14)
        for trial in range(20):
            n_hidden = int(rng.integers(1, 4))
            sizes = [int(rng.integers(2, 6))] + \
                    [int(rng.integers(2, 17)) for _ in range(n_hidden)] + \
                    [int(rng.integers(1, 4))]
            activation = "relu" if trial % 2 == 0 else "gelu"
            params = nn.init_mlp(sizes, rng, activation=activation, embed_dim=2)
            xs = kink_free_inputs(params, rng, 2)
            targets = rng.standard_normal((2, sizes[-1]))
            loss_fn = mse_to(targets)
            _, grads = nn.gradient(params, xs, loss_fn)
            analytic = np.concatenate([a.ravel() for gw, gb in grads
                                       for a in (gw, gb)])
            numeric = numeric_gradient(params, xs, loss_fn)
            assert_gradcheck(analytic, numeric, note=f"net {trial} ({sizes})")
