"""scikit-learn style wrappers around the functional API."""

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import forecast
from ._validation import check_frames, check_history, check_panel
from .baselines import naive_predict, ols_fit, ols_predict
from .gan import TrainConfig, train


class GenerativeForecaster(BaseEstimator):
    """Adversarially trained conditional generator for matrix time series.

    ``fit`` accepts one series of shape (T+1, p1, p2) or a list of such
    series (panel).  After fitting, ``sample`` draws future frames and
    ``predict`` returns their mean, using either iterative composition of the
    one-step head (``mode="iter"``) or the direct lag-``s`` head
    (``mode="sstep"``).

    Parameters mirror :class:`fgts.gan.TrainConfig`; ``n_draws`` is the
    number of samples averaged by ``predict``.
    """

    def __init__(self, divergence="kl", noise_dim=20, horizon=3, lag=1, epochs=200,
                 batch_size=64, disc_steps_per_gen_step=2, pair_budget=10_000,
                 gen_lr=1e-3, gen_wd=1e-4, disc_lr=2e-4, disc_wd=1e-4, gen_hidden=(256, 128),
                 disc_width=64, standardize=True, instance_noise=1.0, shared_heads=False, n_draws=100,
                 random_state=0):
        self.divergence = divergence
        self.noise_dim = noise_dim
        self.horizon = horizon
        self.lag = lag
        self.epochs = epochs
        self.batch_size = batch_size
        self.disc_steps_per_gen_step = disc_steps_per_gen_step
        self.pair_budget = pair_budget
        self.gen_lr = gen_lr
        self.gen_wd = gen_wd
        self.disc_lr = disc_lr
        self.disc_wd = disc_wd
        self.gen_hidden = gen_hidden
        self.disc_width = disc_width
        self.standardize = standardize
        self.instance_noise = instance_noise
        self.shared_heads = shared_heads
        self.n_draws = n_draws
        self.random_state = random_state

    def _config(self):
        names = TrainConfig.__dataclass_fields__
        params = {k: v for k, v in self.get_params().items() if k in names}
        return TrainConfig(**params, seed=int(self.random_state or 0))

    def fit(self, X, y=None):
        subjects = check_panel(X, min_frames=self.lag + 1)
        data = subjects if len(subjects) > 1 else subjects[0]
        self.generator_ = train(data, self._config())
        self.frame_shape_ = self.generator_.frame_shape
        return self

    def sample(self, history, s=1, mode="iter", n_draws=None, seed=0):
        check_is_fitted(self, "generator_")
        fn = forecast.generate_iterative if mode == "iter" else forecast.generate_sstep
        if mode not in ("iter", "sstep"):
            raise ValueError(f"mode must be 'iter' or 'sstep', got {mode!r}")
        return fn(self.generator_, history, s, n_draws or self.n_draws, seed)

    def predict(self, history, s=1, mode="iter", seed=0):
        return self.sample(history, s, mode, seed=seed).mean(axis=0)


class OLSMatrixAR(BaseEstimator):
    """Least-squares matrix autoregression ``X_{t+1} = sum_j phi_j X_{t-j} + noise``."""

    def __init__(self, lag=1, ridge=False):
        self.lag = lag
        self.ridge = ridge

    def fit(self, X, y=None):
        self.coef_ = ols_fit(X, self.lag, ridge=self.ridge)
        return self

    def predict(self, history, s=1):
        check_is_fitted(self, "coef_")
        return ols_predict(self.coef_, check_history(history, self.lag), s)


class NaiveForecaster(BaseEstimator):
    """Repeat the last observation: X_{t+s} is predicted by X_t."""

    def fit(self, X=None, y=None):
        self.fitted_ = True
        return self

    def predict(self, series, t_target, s=1):
        return naive_predict(check_frames(getattr(series, "frames", series)), t_target, s)


__all__ = ["GenerativeForecaster", "OLSMatrixAR", "NaiveForecaster"]

