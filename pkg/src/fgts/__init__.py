"""Generative forecasting of matrix-valued time series with f-divergence GANs."""

from .baselines import OLSCoefficients, SingularGramError, naive_predict, ols_fit, ols_predict
from .estimators import GenerativeForecaster, NaiveForecaster, OLSMatrixAR
from .fdiv import CHI2, KL, FDivergenceSpec, divergence_discrete, eval_conjugate, eval_f, get_divergence
from .forecast import generate_iterative, generate_sstep, rolling_forecast
from .gan import TrainConfig, TrainedGenerator, TrainingError, build_pair_set, enumerate_omega, train
from .harness import ExperimentConfig, reproduce_table, run_experiment
from .metrics import MetricsReport, aggregate, nrmse, psnr, ssim
from .neural import MLP, AdamW, MLPSpec, PairCritic, Tensor, init_network
from .simgen import (CoefficientSet, MatrixSeries, PanelDataset, conditional_mean_oracle,
                     make_coefficients, simulate, simulate_panel, stationary_covariance)

__version__ = "0.1.0"
