import numpy as np
import pytest

from fgts.io import load_network, save_network
from fgts.neural import (MLP, AdamW, MLPSpec, OptimizerState, PairCritic, Tensor, concat, grad,
                         init_network, optimizer_step)

from .conftest import random_net


def numeric_grad(f, arr, h=1e-5):
    out = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), out.reshape(-1)
    for j in range(flat.size):
        old = flat[j]
        flat[j] = old + h
        up = f()
        flat[j] = old - h
        down = f()
        flat[j] = old
        gflat[j] = (up - down) / (2 * h)
    return out


def max_rel_err(analytic, fd):
    small = np.abs(fd) < 1e-8
    rel = np.abs(analytic - fd) / np.maximum(np.abs(fd), 1e-300)
    rel[small] = np.abs(analytic - fd)[small]
    return float(rel.max())


def zero_net(dims):
    spec = MLPSpec(dims)
    params = {}
    for i in range(spec.n_layers):
        params[f"W{i}"] = np.zeros((dims[i], dims[i + 1]))
        params[f"b{i}"] = np.zeros(dims[i + 1])
    return MLP(spec, params)


def test_zero_network_outputs_zero(rng):
    net = zero_net((5, 7, 3))
    assert np.array_equal(net.predict(rng.normal(size=(4, 5))), np.zeros((4, 3)))


def test_identity_layer(rng):
    net = MLP(MLPSpec((4, 4)), {"W0": np.eye(4), "b0": np.zeros(4)})
    v = rng.normal(size=(3, 4))
    assert np.array_equal(net.predict(v), v)
    assert np.array_equal(net(v).data, v)


def test_hand_computed_forward():
    W0 = np.array([[1.0, -1.0], [2.0, 0.5]])
    b0 = np.array([0.0, 0.25])
    W1 = np.array([[1.0], [-2.0]])
    b1 = np.array([0.5])
    net = MLP(MLPSpec((2, 2, 1)), {"W0": W0, "b0": b0, "W1": W1, "b1": b1})
    x = np.array([[1.0, 1.0], [-1.0, 0.5]])
    # row 1: pre = (3, -0.25) -> relu (3, 0) -> 3 + 0.5 = 3.5
    # row 2: pre = (0, 1.5) -> relu (0, 1.5) -> -3 + 0.5 = -2.5
    assert np.allclose(net.predict(x), [[3.5], [-2.5]], atol=0)
    assert np.allclose(net(x).data, [[3.5], [-2.5]], atol=0)


def test_noise_concat_dims():
    spec = MLPSpec((1024, 256, 128, 1024), noise_dim=20, concat_noise_at=2)
    assert spec.fan_in(2) == 148
    net = init_network(spec, 0)
    assert net.params["W2"].shape == (148, 1024)


def test_shape_errors_report_dims(rng):
    net = init_network(MLPSpec((4, 3, 2), noise_dim=2, concat_noise_at=1), 0)
    with pytest.raises(ValueError, match="expected 4"):
        net.predict(rng.normal(size=(2, 5)), rng.normal(size=(2, 2)))
    with pytest.raises(ValueError, match="required"):
        net.predict(rng.normal(size=(2, 4)))
    with pytest.raises(ValueError, match="expected 2"):
        net.predict(rng.normal(size=(2, 4)), rng.normal(size=(2, 3)))
    with pytest.raises(ValueError):
        MLP(net.spec, {**net.arrays(), "W0": np.zeros((3, 3))})
    with pytest.raises(ValueError):
        MLPSpec((4,))
    with pytest.raises(ValueError):
        MLPSpec((4, 3), noise_dim=2, concat_noise_at=5)


def test_bias_gradient_of_identity_layer_sum(rng):
    net = MLP(MLPSpec((3, 3)), {"W0": np.eye(3), "b0": np.zeros(3)})
    g = grad(net(rng.normal(size=(1, 3))).sum(), net.parameters())
    assert np.array_equal(g["b0"], np.ones(3))


def test_relu_subgradient_at_zero():
    x = Tensor(np.array([-1.0, 0.0, 2.0]), requires_grad=True)
    x.relu().sum().backward()
    assert np.array_equal(x.grad, [0.0, 0.0, 1.0])


def test_elementwise_ops_gradients(rng):
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4,)), requires_grad=True)
    w = rng.normal(size=(3, 1))

    def build():
        z = (a * b - b).exp() + (a + 1.0).tanh() * 2.0 - a.square() + a.clamp_min(0.1)
        return (z @ Tensor(np.ones((4, 1)))).weighted_mean(w.ravel())

    def val():
        return float(build().data)

    for t in (a, b):
        t.grad = None
    loss = build()
    loss.backward()
    for t in (a, b):
        fd = numeric_grad(val, t.data)
        assert max_rel_err(t.grad, fd) <= 1e-6


def test_matmul_concat_gradients(rng):
    a = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(5, 2)), requires_grad=True)
    W = Tensor(rng.normal(size=(5, 4)), requires_grad=True)

    def build():
        return (concat([a, b]) @ W).mean()

    build().backward()
    for t in (a, b, W):
        assert max_rel_err(t.grad, numeric_grad(lambda: float(build().data), t.data)) <= 1e-6


def test_backward_needs_scalar(rng):
    with pytest.raises(ValueError):
        Tensor(rng.normal(size=3), requires_grad=True).exp().backward()


@pytest.mark.parametrize("seed", range(5))
def test_network_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    spec = MLPSpec((6, 8, 5, 4), noise_dim=3, concat_noise_at=1)
    net = random_net(spec, seed, rng)
    x, z, w = rng.normal(size=(7, 6)), rng.normal(size=(7, 3)), rng.normal(size=(7, 4))
    g = grad((net(x, noise=z) * w).sum(), net.parameters())
    for name, p in net.parameters().items():
        fd = numeric_grad(lambda: float(np.sum(net.predict(x, z) * w)), p.data)
        assert max_rel_err(g[name], fd) <= 1e-4, name


def test_critic_gradients_match_finite_differences(rng):
    critic = PairCritic.build(6, 4, seed=3, width=5)
    for net in critic.branches().values():
        for k, p in net.params.items():
            if k.startswith("b"):
                p.data[:] = 0.5 * rng.standard_normal(p.data.shape)
    h, y = rng.normal(size=(6, 6)), rng.normal(size=(6, 4))
    g = grad(critic(h, y).exp().mean(), critic.parameters())
    for name, p in critic.parameters().items():
        fd = numeric_grad(lambda: float(np.mean(np.exp(critic.predict(h, y)))), p.data)
        assert max_rel_err(g[name], fd) <= 1e-4, name


def test_predict_matches_forward(rng):
    spec = MLPSpec((5, 6, 3), noise_dim=2, concat_noise_at=1, lag_dim=1, concat_lag_at=0)
    net = random_net(spec, 1, rng)
    x, z, c = rng.normal(size=(4, 5)), rng.normal(size=(4, 2)), rng.normal(size=(4, 1))
    assert np.array_equal(net.predict(x, z, c), net(x, noise=z, lag_code=c).data)


def test_last_layer_homogeneity(rng):
    net = init_network(MLPSpec((4, 6, 3)), 2)
    x = rng.normal(size=(5, 4))
    scaled = MLP(net.spec, {**net.arrays(), "W1": 3.0 * net.arrays()["W1"]})
    assert np.allclose(scaled.predict(x), 3.0 * net.predict(x), rtol=1e-14, atol=1e-14)


def test_init_is_deterministic_and_bounded():
    spec = MLPSpec((40, 30, 10))
    a, b, c = init_network(spec, 7), init_network(spec, 7), init_network(spec, 8)
    for k in a.arrays():
        assert np.array_equal(a.arrays()[k], b.arrays()[k])
    assert not np.array_equal(a.arrays()["W0"], c.arrays()["W0"])
    assert np.abs(a.arrays()["W0"]).max() <= np.sqrt(6 / 40)
    assert np.abs(a.arrays()["W1"]).max() <= np.sqrt(1 / 30)
    assert not np.any(a.arrays()["b0"])


def test_network_round_trip(tmp_path, rng):
    net = random_net(MLPSpec((5, 4, 2), noise_dim=3, concat_noise_at=1), 4, rng)
    save_network(tmp_path / "n.npz", net)
    back = load_network(tmp_path / "n.npz")
    x, z = rng.normal(size=(3, 5)), rng.normal(size=(3, 3))
    assert back.spec == net.spec and back.rng_seed_used == net.rng_seed_used
    assert np.array_equal(back.predict(x, z), net.predict(x, z))


def test_optimizer_examples():
    w = np.array([2.0, -1.0])
    optimizer_step(OptimizerState(0.1, 0.0), {"w": w}, {"w": np.zeros(2)})
    assert np.array_equal(w, [2.0, -1.0])

    w = np.array([1.0])
    optimizer_step(OptimizerState(0.1, 0.0, beta1=0.0, beta2=0.0), {"w": w}, {"w": np.ones(1)})
    assert w[0] == pytest.approx(1.0 - 0.1 / (1.0 + 1e-8), abs=1e-15)

    w = np.array([4.0])
    optimizer_step(OptimizerState(0.1, 0.5), {"w": w}, {"w": np.zeros(1)})
    assert w[0] == pytest.approx(0.95 * 4.0, abs=1e-15)


def test_optimizer_rejects_nan_and_shape():
    with pytest.raises(FloatingPointError, match="blk"):
        optimizer_step(OptimizerState(), {"blk": np.ones(2)}, {"blk": np.array([1.0, np.nan])})
    with pytest.raises(ValueError):
        optimizer_step(OptimizerState(), {"w": np.ones(2)}, {"w": np.ones(3)})


def test_adamw_maximize_ascends():
    t = Tensor(np.array([0.0]), requires_grad=True)
    opt = AdamW({"t": t}, lr=0.1, weight_decay=0.0)
    for _ in range(60):
        loss = -(t - 3.0).square().sum()
        opt.step(grad(loss, {"t": t}), maximize=True)
    assert abs(t.data[0] - 3.0) < 0.2
