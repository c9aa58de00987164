import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from driftlab import nnet


def small_spec(head="linear", rates=(0.2, 0.2, 0.1)):
    out = 1 if head == "linear" else 3
    return nnet.NetworkSpec((4, 8, 8, 6, out), rates, head)


def test_init_shapes_follow_layer_sizes():
    spec = nnet.NetworkSpec((10, 128, 64, 32, 16, 1), (0.2, 0.2, 0.1, 0.1), "linear")
    net = nnet.init_network(spec, 7)
    assert [w.shape for w in net.weights] == [(10, 128), (128, 64), (64, 32), (32, 16), (16, 1)]
    assert all(np.all(b == 0) for b in net.biases)


def test_init_is_deterministic():
    a = nnet.init_network(small_spec(), 3)
    b = nnet.init_network(small_spec(), 3)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))


def test_init_uses_fan_in_scale():
    net = nnet.init_network(nnet.NetworkSpec((400, 300, 300, 300, 1), (0.0,) * 3, "linear"), 0)
    w = net.weights[1]
    assert np.abs(w).max() <= np.sqrt(6 / 300)
    # uniform(-l, l) has variance l^2 / 3 = 2 / fan_in
    assert abs(w.var() - 2 / 300) < 0.05 * 2 / 300


@pytest.mark.parametrize("sizes", [(10, 1), (10, 5, 1), (10, 5, 5, 5, 5, 5, 5, 1)])
def test_depth_outside_three_to_five_hidden_layers_is_rejected(sizes):
    with pytest.raises(ValueError):
        nnet.init_network(nnet.NetworkSpec(sizes, (0.1,) * (len(sizes) - 2), "linear"), 0)


@pytest.mark.parametrize("rates", [(0.1, 0.1), (0.1, 0.1, 1.0), (0.1, -0.1, 0.1)])
def test_bad_dropout_rates_are_rejected(rates):
    with pytest.raises(ValueError):
        nnet.NetworkSpec((4, 8, 8, 6, 1), rates, "linear")


def test_forward_rejects_bad_input():
    net = nnet.init_network(small_spec(), 0)
    with pytest.raises(ValueError):
        nnet.forward(net, np.zeros(3))
    with pytest.raises(ValueError):
        nnet.forward(net, np.array([0.0, np.nan, 0.0, 0.0]))


def test_zero_rate_dropout_is_identity():
    net = nnet.init_network(small_spec(rates=(0.0, 0.0, 0.0)), 1)
    x = np.array([0.3, -1.0, 2.0, 0.5])
    np.testing.assert_array_equal(nnet.forward(net, x, True, 5), nnet.forward(net, x, False))


def test_softmax_output_is_a_distribution():
    net = nnet.init_network(small_spec("softmax"), 2)
    rng = np.random.default_rng(0)
    for _ in range(20):
        p = nnet.forward(net, rng.normal(size=4) * 5, True, int(rng.integers(1 << 30)))
        assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-9


def test_mask_seed_changes_output():
    net = nnet.init_network(small_spec(), 4)
    x = np.ones(4)
    outs = [nnet.forward(net, x, True, s) for s in range(1, 21)]
    assert any(not np.array_equal(a, b) for a, b in zip(outs[::2], outs[1::2]))


def test_inverted_dropout_on_two_unit_layer_matches_mask_enumeration():
    # 1 -> 2 -> 1 -> 1 -> 1 net with identity-like weights; only the 2-unit layer drops
    W = [np.array([[1.0, 2.0]]), np.array([[1.0], [1.0]]), np.array([[1.0]]), np.array([[1.0]])]
    b = [np.zeros(2), np.zeros(1), np.zeros(1), np.zeros(1)]
    net = nnet.network_from_arrays(W, b, "linear", (0.5, 0.0, 0.0))
    # survivors scaled by 2: masks (1,1)->6, (1,0)->2, (0,1)->4, (0,0)->0
    allowed = {0.0, 2.0, 4.0, 6.0}
    seen = {float(nnet.forward(net, np.array([1.0]), True, s)[0]) for s in range(200)}
    assert seen == allowed


def test_mc_predict_single_pass_matches_forward():
    net = nnet.init_network(small_spec(), 5)
    x = np.array([0.1, 0.2, -0.3, 1.0])
    for seed in (0, 9, 12345):
        s = nnet.mc_predict(net, x, 1, seed)
        np.testing.assert_allclose(s.passes[0], nnet.forward(net, x, True, seed), rtol=0, atol=1e-12)


def test_mc_predict_is_deterministic_in_seed():
    net = nnet.init_network(small_spec("softmax"), 5)
    x = np.ones(4)
    a = nnet.mc_predict(net, x, 50, 11).passes
    b = nnet.mc_predict(net, x, 50, 11).passes
    assert a.shape == (50, 3) and np.array_equal(a, b)


def test_train_fits_linear_target():
    rng = np.random.default_rng(0)
    x = rng.random((200, 1))
    y = 2 * x[:, 0]
    spec = nnet.NetworkSpec((1, 16, 16, 16, 1), (0.0, 0.0, 0.0), "linear")
    net = nnet.train(nnet.init_network(spec, 0), x, y, nnet.TrainConfig(epochs=200, seed=1))
    xh = rng.random((200, 1))
    assert np.mean((nnet.predict(net, xh)[:, 0] - 2 * xh[:, 0]) ** 2) < 1e-2


def test_train_separates_blobs_like_nearest_centroid():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(100, 2)) * 0.3
    b = rng.normal(size=(100, 2)) * 0.3 + np.array([2.0, 0.0])
    X = np.vstack([a, b])
    y = np.r_[np.zeros(100, int), np.ones(100, int)]
    centroids = np.array([a.mean(0), b.mean(0)])
    oracle = np.argmin(((X[:, None, :] - centroids) ** 2).sum(-1), axis=1)
    assert np.mean(oracle == y) >= 0.99
    spec = nnet.NetworkSpec((2, 16, 16, 8, 2), (0.1, 0.1, 0.1), "softmax")
    net = nnet.train(nnet.init_network(spec, 0), X, y, nnet.TrainConfig(epochs=60, seed=2))
    assert np.mean(np.argmax(nnet.predict(net, X), axis=1) == y) >= 0.99


def test_train_lowers_loss_and_is_deterministic():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(64, 4))
    y = X @ np.array([1.0, -2.0, 0.5, 0.0])
    net0 = nnet.init_network(small_spec(), 0)
    cfg = nnet.TrainConfig(epochs=100, seed=3)
    a = nnet.train(net0, X, y, cfg)
    b = nnet.train(net0, X, y, cfg)
    assert nnet.loss(a, X, y) < nnet.loss(net0, X, y)
    assert all(np.array_equal(p, q) for p, q in zip(a.weights, b.weights))


@pytest.mark.parametrize("bad", [dict(epochs=0), dict(learning_rate=0.0), dict(batch_size=0)])
def test_train_config_validation(bad):
    with pytest.raises(ValueError):
        nnet.TrainConfig(**bad)


def test_train_rejects_empty_and_nan():
    net = nnet.init_network(small_spec(), 0)
    with pytest.raises(ValueError):
        nnet.train(net, np.zeros((0, 4)), np.zeros(0))
    X = np.zeros((40, 4))
    y = np.zeros(40)
    y[3] = np.nan
    with pytest.raises(ValueError):
        nnet.train(net, X, y)


def test_group_lasso_drops_irrelevant_inputs():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(800, 6))
    y = np.sin(X[:, 0]) + X[:, 1]
    spec = nnet.NetworkSpec((6, 32, 16, 8, 1), (0.1, 0.1, 0.1), "linear")
    cfg = nnet.TrainConfig(epochs=100, seed=0, input_group_l1=3.0, input_group_reweight=True)
    net = nnet.train(nnet.init_network(spec, 0), X, y, cfg)
    norms = np.linalg.norm(net.weights[0], axis=1)
    assert np.all(norms[:2] > 0)
    assert np.all(norms[2:] == 0)


def test_gradient_check_hand_cases():
    # y = w x, squared error against 0 at x = 1: dL/dw = 2 w
    for w in (0.5, -1.5):
        net = nnet.network_from_arrays([np.array([[w]])], [np.zeros(1)])
        assert nnet.gradient_check(net, np.array([1.0]), 0.0) < 1e-6
    net = nnet.network_from_arrays([np.zeros((3, 2)), np.zeros((2, 2))], [np.zeros(2), np.zeros(2)], "softmax",
                                   (0.0,))
    assert nnet.gradient_check(net, np.zeros(3), 1) < 1e-6


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), head=st.sampled_from(["linear", "softmax"]))
def test_gradient_check_random_small_nets(seed, head):
    rng = np.random.default_rng(seed)
    out = 1 if head == "linear" else 3
    net = nnet.random_network((4, 5, 4, 3, out), head, seed)
    x = rng.normal(size=4)
    target = rng.normal() if head == "linear" else int(rng.integers(out))
    assert nnet.gradient_check(net, x, target) < 1e-4
