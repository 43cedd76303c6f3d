import numpy as np
import pytest

from orderpick.marl.nets import Adam, Mlp, NonFiniteLoss, forward, loss_and_grads, masked_log_softmax

FD_STEP = 1e-6
EPS = np.finfo(np.float64).eps


def _problem(rng, hidden, n_actions, n_heads, batch=6, n_in=12):
    net = Mlp(n_in, hidden, n_actions, n_heads, rng)
    # move off the tiny-head initialisation so every block carries real gradient
    for k in net.params:
        net.params[k] = net.params[k] + rng.normal(0, 0.1, net.params[k].shape)
    x = rng.normal(size=(batch, n_in))
    mask = rng.random((batch, n_actions)) < 0.6
    mask[:, 0] = True
    acts = np.array([rng.choice(np.flatnonzero(m)) for m in mask])
    adv = rng.normal(size=batch)
    ret = rng.normal(size=batch)
    heads = rng.integers(0, n_heads, batch)
    return net, (x, acts, adv, ret, mask, heads)


def fd_check(net, args):
    """Central differences on every parameter; returns the worst excess over tolerance."""
    def loss():
        return loss_and_grads(net, *args, with_grads=False)[0]["loss"]

    _, grads = loss_and_grads(net, *args)
    scale = max(abs(loss()), 1.0)
    # rounding in the two loss evaluations bounds what the oracle can resolve
    floor = 10 * EPS * scale / FD_STEP
    worst = 0.0
    checked = 0
    for k, p in net.params.items():
        flat = p.reshape(-1)
        g = grads[k].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + FD_STEP
            up = loss()
            flat[i] = orig - FD_STEP
            down = loss()
            flat[i] = orig
            num = (up - down) / (2 * FD_STEP)
            tol = 1e-4 * max(abs(num), abs(g[i])) + floor
            worst = max(worst, abs(num - g[i]) / tol)
            checked += 1
    return worst, checked


def test_gradients_two_by_64_single_head():
    net, args = _problem(np.random.default_rng(1), (64, 64), 15, 1)
    worst, n = fd_check(net, args)
    assert n == sum(p.size for p in net.params.values())
    assert worst <= 1.0


def test_gradients_three_by_128_multi_head():
    net, args = _problem(np.random.default_rng(2), (128, 128, 128), 4, 3)
    worst, _ = fd_check(net, args)
    assert worst <= 1.0


def test_policy_gradient_sign():
    """A step against the gradient raises the log-probability of a positively advantaged action."""
    rng = np.random.default_rng(0)
    net = Mlp(4, (8,), 3, 1, rng)
    x = rng.normal(size=(1, 4))
    before = forward(net, x)[0][0, 1]
    _, g = loss_and_grads(net, x, [1], [1.0], [0.0], value_coef=0.0, entropy_coef=0.0)
    for k in net.params:
        net.params[k] -= 0.5 * g[k]
    assert forward(net, x)[0][0, 1] > before


def test_uniform_zero_weights_give_uniform_probs():
    net = Mlp(3, (5,), 6, 1)
    for k in net.params:
        net.params[k][...] = 0.0
    mask = np.array([True, False, True, True, False, False])
    probs, v = forward(net, np.ones(3), mask)
    np.testing.assert_allclose(probs, mask / 3)
    assert v == 0.0


def test_single_legal_action():
    net = Mlp(3, (5,), 4, 1)
    probs, _ = forward(net, np.ones(3), np.array([False, False, True, False]))
    assert probs.tolist() == [0.0, 0.0, 1.0, 0.0]


def test_all_masked_row_rejected():
    with pytest.raises(ValueError):
        masked_log_softmax(np.zeros((1, 3)), np.zeros((1, 3), dtype=bool))


def test_forward_shape_check():
    net = Mlp(3, (5,), 4, 1)
    with pytest.raises(ValueError):
        forward(net, np.ones(4))


def test_forward_deterministic_and_normalised():
    net = Mlp(6, (16, 16), 7, 2, np.random.default_rng(3))
    x = np.random.default_rng(4).normal(size=(5, 6))
    a = forward(net, x, heads=[0, 1, 0, 1, 1])
    b = forward(net, x, heads=[0, 1, 0, 1, 1])
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_allclose(a[0].sum(axis=1), 1.0)
    assert np.all(np.isfinite(a[1]))


def test_heads_are_independent():
    net = Mlp(4, (8,), 3, 2, np.random.default_rng(5))
    x = np.ones((1, 4))
    p0 = forward(net, x, heads=[0])[0]
    net.params["Wpi"][1] += 5.0
    np.testing.assert_array_equal(forward(net, x, heads=[0])[0], p0)


def test_masked_chosen_action_raises():
    net = Mlp(3, (4,), 3, 1)
    mask = np.array([[True, False, True]])
    with pytest.raises(NonFiniteLoss):
        loss_and_grads(net, np.ones((1, 3)), [1], [1.0], [0.0], mask)


def test_adam_clips_and_descends():
    params = {"w": np.array([3.0, -2.0])}
    opt = Adam(params, lr=0.1, max_grad_norm=0.5)
    for _ in range(200):
        norm = opt.step(params, {"w": 2 * params["w"]})
    assert np.abs(params["w"]).max() < 0.2
    assert norm >= 0


def test_adam_state_roundtrip():
    params = {"w": np.ones(3)}
    a = Adam(params)
    a.step(params, {"w": np.ones(3)})
    b = Adam(params)
    b.load_arrays("o", a.state_arrays("o"))
    assert b.t == 1
    np.testing.assert_array_equal(b.m["w"], a.m["w"])
