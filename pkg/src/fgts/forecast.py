"""Sampling future frames from a trained generator.

Iterative generation composes the one-step head ``G_1`` s times, sliding the
lag window over its own outputs; s-step generation applies head ``G_s`` once.
Draw ``j`` at forecast origin ``key`` always uses the noise stream
``(seed, key, j)``, so changing the mode or the number of draws leaves the
other draws untouched, and both modes coincide at ``s = 1``.
"""

import numpy as np

from ._rng import rng_for
from ._validation import check_frames, check_history


def draw_noise(seed, key, draws, n_vectors, dim):
    """Noise of shape (draws, n_vectors, dim); row ``j`` comes from stream ``(seed, key, j)``."""
    return np.stack([rng_for(seed, key, j).standard_normal((n_vectors, dim)) for j in range(draws)])


def _prepare(gen, history, s, draws, max_s=None):
    if draws < 1:
        raise ValueError("draws must be >= 1")
    max_s = gen.horizon if max_s is None else max_s
    if not 1 <= s <= max_s:
        raise ValueError(f"horizon s={s} was not trained (trained 1..{gen.horizon})")
    return check_history(history, gen.lag, gen.frame_shape)


def generate_iterative(gen, history, s, draws=100, seed=0, key=0):
    """``draws`` samples of X_{T+s} by s applications of the one-step head.

    ``history`` holds the last ``lag`` frames, oldest first.  Any ``s >= 1``
    works since only head 1 is used.  Returns (draws, p1, p2).
    """
    h = _prepare(gen, history, s, draws, max_s=np.inf)
    noise = draw_noise(seed, key, draws, s, gen.noise_dim)
    window = np.broadcast_to(h.reshape(1, gen.lag, -1), (draws, gen.lag, h[0].size)).copy()
    for i in range(s):
        nxt = gen.sample(window.reshape(draws, -1), noise[:, i], 1)
        window = np.concatenate([window[:, 1:], nxt[:, None]], axis=1)
    return window[:, -1].reshape((draws,) + tuple(gen.frame_shape))


def generate_sstep(gen, history, s, draws=100, seed=0, key=0):
    """``draws`` samples of X_{T+s} from a single application of head ``s``."""
    h = _prepare(gen, history, s, draws)
    noise = draw_noise(seed, key, draws, 1, gen.noise_dim)[:, 0]
    flat = np.broadcast_to(h.reshape(1, -1), (draws, h.size))
    return gen.sample(flat, noise, s).reshape((draws,) + tuple(gen.frame_shape))


_GENERATORS = {"iter": generate_iterative, "sstep": generate_sstep}


def rolling_forecast(gen, series, t_new_count, s, mode="iter", draws=100, seed=0, train_end=None):
    """Mean-of-draws forecasts of X_{T+t_new}, t_new = 1..t_new_count.

    Each forecast conditions on the observed frames ending at T + t_new - s,
    where ``T = train_end`` (default: the last index leaving ``t_new_count``
    future frames).  Returns (t_new_count, p1, p2).
    """
    frames = check_frames(getattr(series, "frames", series))
    T = frames.shape[0] - 1 - t_new_count if train_end is None else int(train_end)
    if T + t_new_count > frames.shape[0] - 1:
        raise ValueError(f"series ends at {frames.shape[0] - 1}, needs frames up to {T + t_new_count}")
    try:
        sampler = _GENERATORS[mode]
    except KeyError:
        raise ValueError(f"mode must be 'iter' or 'sstep', got {mode!r}") from None
    k = gen.lag
    out = np.empty((t_new_count,) + frames.shape[1:])
    for i, t_new in enumerate(range(1, t_new_count + 1)):
        origin = T + t_new - s
        if origin - k + 1 < 0:
            raise ValueError(f"not enough history before index {origin}")
        hist = frames[origin - k + 1: origin + 1]
        out[i] = sampler(gen, hist, s, draws, seed, key=t_new).mean(axis=0)
    return out
