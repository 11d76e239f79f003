import numpy as np
import pytest

from fgts.forecast import draw_noise, generate_iterative, generate_sstep, rolling_forecast
from fgts.gan import TrainConfig, TrainedGenerator, train
from fgts.metrics import nrmse
from fgts.neural import MLP, MLPSpec
from fgts.simgen import make_coefficients, simulate


def linear_generator(Wx, Wz, horizon=1, lag=1, frame_shape=None, bias=None):
    """TrainedGenerator whose every head is ``x @ Wx + eta @ Wz + bias``."""
    d_out = Wx.shape[1]
    m = Wz.shape[0]
    spec = MLPSpec((Wx.shape[0], d_out), noise_dim=m, concat_noise_at=0)
    b = np.zeros(d_out) if bias is None else bias
    heads = {s: MLP(spec, {"W0": np.vstack([Wx, Wz]), "b0": b}) for s in range(1, horizon + 1)}
    cfg = TrainConfig(noise_dim=m, horizon=horizon, lag=lag)
    shape = frame_shape or (int(np.sqrt(d_out)),) * 2
    return TrainedGenerator(heads, {}, cfg, shape)


@pytest.fixture
def trained():
    X = simulate(make_coefficients(1, p=3, seed=0), 80, seed=1).frames
    return train(X, TrainConfig(noise_dim=2, gen_hidden=(6,), disc_width=4, batch_size=16, epochs=2)), X


def test_noise_streams_are_keyed_per_draw():
    a = draw_noise(3, 7, 5, 2, 4)
    b = draw_noise(3, 7, 8, 2, 4)
    assert a.shape == (5, 2, 4)
    assert np.array_equal(a, b[:5])
    assert not np.array_equal(a, draw_noise(3, 8, 5, 2, 4))


def test_iterative_and_sstep_agree_at_s1(trained):
    gen, X = trained
    h = X[10:11]
    assert np.array_equal(generate_iterative(gen, h, 1, 9, seed=4, key=2), generate_sstep(gen, h, 1, 9, seed=4, key=2))
    assert np.array_equal(generate_sstep(gen, h, 2, 1, seed=4), generate_sstep(gen, h, 2, 1, seed=4))
    # iteration only needs head 1, so it runs past the trained horizon; s-step does not
    assert generate_iterative(gen, h, gen.horizon + 2, 5).shape == (5,) + tuple(gen.frame_shape)
    with pytest.raises(ValueError):
        generate_sstep(gen, h, gen.horizon + 1, 5)
    with pytest.raises(ValueError):
        generate_iterative(gen, h, 0, 5)
    with pytest.raises(ValueError):
        generate_iterative(gen, h, 1, 0)


def test_iterative_composition_by_hand(rng):
    d = 4
    Wx = rng.normal(size=(d, d)) / 2
    gen = linear_generator(Wx, np.zeros((2, d)), horizon=2)
    x = rng.normal(size=(1, 2, 2))
    out = generate_iterative(gen, x, 2, 3, seed=0)
    expected = (x.reshape(1, -1) @ Wx @ Wx).reshape(2, 2)
    for j in range(3):
        assert np.allclose(out[j], expected, atol=1e-14)


def test_lag_window_slides(rng):
    # lag-2 generator returning the older frame: X_hat_{T+1} = X_{T-1}, X_hat_{T+2} = X_T
    d = 4
    Wx = np.vstack([np.eye(d), np.zeros((d, d))])
    gen = linear_generator(Wx, np.zeros((1, d)), horizon=2, lag=2)
    h = rng.normal(size=(2, 2, 2))
    assert np.allclose(generate_iterative(gen, h, 1, 1)[0], h[0])
    assert np.allclose(generate_iterative(gen, h, 2, 1)[0], h[1])


def test_zero_weight_head_gives_bias(rng):
    bias = rng.normal(size=4)
    gen = linear_generator(np.zeros((4, 4)), np.zeros((3, 4)), horizon=2, bias=bias)
    out = generate_sstep(gen, rng.normal(size=(1, 2, 2)), 2, 6, seed=1)
    assert np.array_equal(out, np.broadcast_to(bias.reshape(2, 2), out.shape))


def test_rolling_identity_and_single_draw(trained, rng):
    X = rng.normal(size=(30, 2, 2))
    ident = linear_generator(np.eye(4), np.zeros((1, 4)), horizon=2)
    means = rolling_forecast(ident, X, 5, 2, mode="sstep", draws=4)
    T = 30 - 1 - 5
    for i, t_new in enumerate(range(1, 6)):
        assert np.array_equal(means[i], X[T + t_new - 2])
    gen, Y = trained
    m = rolling_forecast(gen, Y, 3, 1, mode="sstep", draws=1, seed=2)
    T = Y.shape[0] - 1 - 3
    assert np.array_equal(m[0], generate_sstep(gen, Y[T:T + 1], 1, 1, seed=2, key=1)[0])
    with pytest.raises(ValueError):
        rolling_forecast(gen, Y, 3, 1, mode="free")
    with pytest.raises(ValueError):
        rolling_forecast(gen, Y, 3, 1, train_end=Y.shape[0])


def test_no_look_ahead(trained):
    gen, X = trained
    base = rolling_forecast(gen, X, 10, 2, mode="iter", draws=5, seed=1)
    T = X.shape[0] - 1 - 10
    for t_new in (1, 6, 10):
        Y = X.copy()
        Y[T + t_new - 2 + 1:] = 1e3
        out = rolling_forecast(gen, Y, 10, 2, mode="iter", draws=5, seed=1)
        assert np.array_equal(out[t_new - 1], base[t_new - 1])


def oracle_generator(c):
    # row-major vec(phi X) = (phi kron I) vec(X); noise enters as phi_e E
    p = c.phi1.shape[0]
    return linear_generator(np.kron(c.phi1, np.eye(p)).T, np.kron(c.phi_e, np.eye(p)).T, horizon=2,
                            frame_shape=(p, p))


def test_mean_of_draws_stabilises():
    c = make_coefficients(1, p=6, seed=2)
    X = simulate(c, 60, seed=3).frames
    gen = oracle_generator(c)
    h = X[-1:]
    a = generate_iterative(gen, h, 2, 500, seed=3).mean(axis=0)
    b = generate_iterative(gen, h, 2, 1000, seed=3).mean(axis=0)
    assert np.linalg.norm(a - b) <= 0.05 * np.linalg.norm(b)


def test_oracle_generator_recovers_conditional_mean():
    p = 6
    c = make_coefficients(1, p=p, seed=2)
    X = simulate(c, 60, seed=3).frames
    gen = oracle_generator(c)
    means = rolling_forecast(gen, X, 10, 1, draws=400, seed=0)
    T = 60 - 10
    scores = [nrmse(means[i], c.phi1 @ X[T + i]) for i in range(10)]
    assert np.mean(scores) <= 0.1
