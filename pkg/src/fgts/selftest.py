"""Fast property checks of the numerical core, used by the ``selftest`` command."""

import time

import numpy as np
from scipy.optimize import minimize_scalar

from .fdiv import CHI2, KL, check_lower_bound, eval_conjugate, eval_f
from .neural import MLP, MLPSpec, grad, init_network
from .simgen import spectral_radius, stationary_covariance


def check_conjugates(n_points=200):
    """Closed-form conjugates against bounded numerical maximization of ``x y - f(x)``."""
    worst = 0.0
    for spec in (KL, CHI2):
        for y in np.linspace(-3.0, 2.0, n_points):
            hi = max(10.0, 2.0 * np.exp(y))
            res = minimize_scalar(lambda x: -(x * y - eval_f(spec, x)), bounds=(0.0, hi),
                                  method="bounded", options={"xatol": 1e-10})
            worst = max(worst, abs(-res.fun - eval_conjugate(spec, y)))
    return worst <= 1e-6, f"max_abs_err={worst:.3g}"


def check_lower_bounds(n_pairs=2000, seed=0):
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_pairs):
        k = rng.integers(2, 20)
        p, q = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
        bad += sum(not check_lower_bound(spec, p, q)["holds"] for spec in (KL, CHI2))
    return bad == 0, f"violations={bad}"


def check_lyapunov(n_systems=10, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_systems):
        p = int(rng.integers(8, 33))
        A = rng.standard_normal((p, p))
        A *= 0.9 / spectral_radius(A)
        E = rng.standard_normal((p, p))
        S = stationary_covariance(A, E)
        worst = max(worst, np.linalg.norm(S - A @ S @ A.T - E @ E.T))
    return worst <= 1e-10, f"max_residual={worst:.3g}"


def check_gradients(n_nets=5, seed=0, h=1e-6):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_nets):
        spec = MLPSpec((4, 6, 5, 3), noise_dim=2, concat_noise_at=1)
        net = init_network(spec, seed + i)
        # random biases keep pre-activations away from the ReLU kink
        net = MLP(spec, {k: (v if k.startswith("W") else rng.normal(size=v.shape))
                         for k, v in net.arrays().items()})
        x, z, w = rng.normal(size=(7, 4)), rng.normal(size=(7, 2)), rng.normal(size=(7, 3))

        def value():
            return float(np.sum(net.predict(x, z) * w))

        g = grad((net(x, noise=z) * w).sum(), net.parameters())
        for name, p in net.parameters().items():
            flat = p.data.reshape(-1)
            for j in range(flat.size):
                old = flat[j]
                flat[j] = old + h
                up = value()
                flat[j] = old - h
                down = value()
                flat[j] = old
                fd = (up - down) / (2 * h)
                worst = max(worst, abs(fd - g[name].reshape(-1)[j]) / max(1.0, abs(fd)))
    return worst <= 1e-4, f"max_rel_err={worst:.3g}"


CHECKS = {"conjugate": check_conjugates, "lower_bound": check_lower_bounds,
          "lyapunov": check_lyapunov, "gradients": check_gradients}


def run_all():
    """Run every check; returns a list of ``(name, passed, detail, seconds)``."""
    out = []
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        ok, detail = fn()
        out.append((name, bool(ok), detail, time.perf_counter() - t0))
    return out
