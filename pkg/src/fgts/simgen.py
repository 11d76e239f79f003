"""Synthetic matrix time series (simulation Cases 1-3) and their exact moments.

Case 1 (lag-1 linear):     X_{t+1} = phi1 X_t + phi_e E_{t+1}
Case 2 (lag-1 nonlinear):  X_{t+1} = phi1 sin(X_t^T) + phi_e E_{t+1}
Case 3 (lag-3 nonlinear):  X_{t+1} = phi1 cos(X_t^T X_{t-2} X_t^T)
                                     + phi2 sqrt(max(0, X_{t-1}^T)) + phi_e E_{t+1}

sin, cos, sqrt and max act elementwise; products are matrix products.
Frames are indexed X_0..X_T, so a series of length ``T`` holds ``T + 1`` frames.
"""

from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_seed
from ._validation import check_history

CASES = ("linear1", "nonlinear1", "nonlinear3")
_CASE_ALIASES = {"1": "linear1", "2": "nonlinear1", "3": "nonlinear3",
                 "case1": "linear1", "case2": "nonlinear1", "case3": "nonlinear3"}
CASE_LAGS = {"linear1": 1, "nonlinear1": 1, "nonlinear3": 3}


def normalize_case(case_id):
    key = str(case_id).lower().replace(" ", "").replace("_", "")
    key = _CASE_ALIASES.get(key, key)
    if key not in CASES:
        raise ValueError(f"unknown case {case_id!r}; expected one of {CASES} or 1/2/3")
    return key


def case_number(case_id):
    return CASES.index(normalize_case(case_id)) + 1


def spectral_radius(A):
    return float(np.max(np.abs(np.linalg.eigvals(A))))


@dataclass
class CoefficientSet:
    phi1: np.ndarray
    phi_e: np.ndarray
    case_id: str = "linear1"
    phi2: np.ndarray = None

    def __post_init__(self):
        self.case_id = normalize_case(self.case_id)
        self.phi1 = np.asarray(self.phi1, dtype=np.float64)
        self.phi_e = np.asarray(self.phi_e, dtype=np.float64)
        if (self.phi2 is not None) != (self.case_id == "nonlinear3"):
            raise ValueError("phi2 must be given exactly for the lag-3 case")
        if self.phi2 is not None:
            self.phi2 = np.asarray(self.phi2, dtype=np.float64)
        if not (np.all(np.isfinite(self.phi1)) and np.all(np.isfinite(self.phi_e))):
            raise ValueError("coefficients must be finite")

    @property
    def lag(self):
        return CASE_LAGS[self.case_id]

    @property
    def p(self):
        return self.phi1.shape[0]

    def mean_map(self, window):
        """Conditional mean of the next frame given ``window`` (..., lag, p1, p2), oldest first."""
        w = np.asarray(window, dtype=np.float64)
        x_t = w[..., -1, :, :]
        if self.case_id == "linear1":
            return self.phi1 @ x_t
        if self.case_id == "nonlinear1":
            return self.phi1 @ np.sin(np.swapaxes(x_t, -1, -2))
        x_t1, x_t2 = w[..., -2, :, :], w[..., -3, :, :]
        x_tT = np.swapaxes(x_t, -1, -2)
        inner = np.cos(x_tT @ x_t2 @ x_tT)
        return self.phi1 @ inner + self.phi2 @ np.sqrt(np.maximum(0.0, np.swapaxes(x_t1, -1, -2)))


def block_pattern(p, n_blocks=4, value=0.5):
    """Block-diagonal matrix: ``n_blocks`` constant blocks of ``value``, zero elsewhere."""
    out = np.zeros((p, p))
    for idx in np.array_split(np.arange(p), n_blocks):
        if idx.size:
            out[np.ix_(idx, idx)] = value
    return out


def make_coefficients(case_id, p=32, seed=0, target_spectral_radius=0.9):
    """Draw Gaussian transition matrices rescaled to a given spectral radius.

    ``phi_e`` is the fixed block pattern of :func:`block_pattern`.
    """
    case_id = normalize_case(case_id)
    if not 0 < target_spectral_radius < 1:
        raise ValueError("target_spectral_radius must lie in (0, 1)")
    rng = np.random.default_rng(int(seed))

    def draw():
        G = rng.standard_normal((p, p))
        return G * (target_spectral_radius / spectral_radius(G))

    phi1 = draw()
    phi2 = draw() if case_id == "nonlinear3" else None
    return CoefficientSet(phi1=phi1, phi_e=block_pattern(p), case_id=case_id, phi2=phi2)


@dataclass
class MatrixSeries:
    frames: np.ndarray
    lag: int = 1
    case_id: str = None
    seed: int = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3:
            raise ValueError(f"frames must be (T+1, p1, p2), got {self.frames.shape}")
        if self.frames.shape[0] < self.lag + 1:
            raise ValueError(f"a lag-{self.lag} series needs at least {self.lag + 1} frames")

    @property
    def T(self):
        return self.frames.shape[0] - 1

    @property
    def p1(self):
        return self.frames.shape[1]

    @property
    def p2(self):
        return self.frames.shape[2]

    def __len__(self):
        return self.frames.shape[0]

    def head(self, T):
        """The prefix X_0..X_T."""
        return MatrixSeries(self.frames[: T + 1], self.lag, self.case_id, self.seed)


@dataclass
class PanelDataset:
    subjects: list = field(default_factory=list)

    def __post_init__(self):
        if not self.subjects:
            raise ValueError("a panel needs at least one subject")
        shape = self.subjects[0].frames.shape[1:]
        if any(s.frames.shape[1:] != shape for s in self.subjects):
            raise ValueError("all subjects must share one frame shape")

    @property
    def lengths(self):
        return [s.T for s in self.subjects]

    @property
    def n(self):
        return len(self.subjects)

    def __len__(self):
        return len(self.subjects)

    def __getitem__(self, i):
        return self.subjects[i]


def simulate(coeffs, T, seed, p2=None):
    """Simulate X_0..X_T; initial frames and noise are i.i.d. standard normal."""
    k = coeffs.lag
    p1 = coeffs.p
    p2 = p1 if p2 is None else int(p2)
    if coeffs.case_id != "linear1" and p2 != p1:
        raise ValueError("the nonlinear cases use transposes and need square frames")
    if T < k:
        raise ValueError(f"T={T} is shorter than the lag {k}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(int(seed))
    X = np.empty((T + 1, p1, p2))
    X[:k] = rng.standard_normal((k, p1, p2))
    for t in range(k - 1, T):
        X[t + 1] = coeffs.mean_map(X[t - k + 1: t + 1]) + coeffs.phi_e @ rng.standard_normal((p1, p2))
    return MatrixSeries(X, lag=k, case_id=coeffs.case_id,
                        seed=None if isinstance(seed, np.random.Generator) else int(seed))


def simulate_panel(coeffs, n, T, seed):
    """``n`` independent subjects; subject ``i`` uses the stream ``derive_seed(seed, i)``.

    ``T`` is a common length or a per-subject sequence of lengths.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    lengths = [int(T)] * n if np.ndim(T) == 0 else [int(t) for t in T]
    if len(lengths) != n:
        raise ValueError("need one length per subject")
    return PanelDataset([simulate(coeffs, lengths[i], derive_seed(seed, i)) for i in range(n)])


def stationary_covariance(phi1, phi_e, tol=1e-12, max_iter=1_000_000):
    """Fixed point of ``S = phi1 S phi1^T + phi_e phi_e^T`` by iteration from ``S = 0``."""
    phi1 = np.asarray(phi1, dtype=np.float64)
    Q = np.asarray(phi_e, dtype=np.float64) @ np.asarray(phi_e, dtype=np.float64).T
    rho = spectral_radius(phi1)
    if rho >= 1:
        raise ValueError(f"spectral radius {rho:.6g} >= 1: the recursion has no stationary covariance")
    S = np.zeros_like(Q)
    best = np.inf
    stalled = 0
    for _ in range(max_iter):
        S_new = phi1 @ S @ phi1.T + Q
        S_new = 0.5 * (S_new + S_new.T)
        change = np.linalg.norm(S_new - S)
        S = S_new
        if change <= tol:
            break
        # rounding floor reached above tol: stop once the change no longer shrinks
        if change < best or change > 1e-8 * max(1.0, np.linalg.norm(S)):
            best, stalled = min(best, change), 0
        else:
            stalled += 1
            if stalled > 50:
                break
    return S


def covariance_convergence_profile(phi2, sigma0, phi1, t_max):
    """Deviations ``||S_t - S||_F`` for ``t = 0..t_max`` of ``S_{t+1} = phi2 S_t phi2^T + phi1 phi1^T``.

    ``phi2`` must be symmetric; the deviations then decay like ``sigma_max(phi2)^(2t)``.
    """
    phi2 = np.asarray(phi2, dtype=np.float64)
    if not np.allclose(phi2, phi2.T, rtol=0, atol=1e-12):
        raise ValueError("phi2 must be symmetric")
    target = stationary_covariance(phi2, phi1)
    Q = np.asarray(phi1) @ np.asarray(phi1).T
    S = np.asarray(sigma0, dtype=np.float64).copy()
    out = []
    for _ in range(int(t_max) + 1):
        out.append(float(np.linalg.norm(S - target)))
        S = phi2 @ S @ phi2.T + Q
    return out


def conditional_mean_oracle(coeffs, history, s, M=10_000, seed=0, method="auto", chunk=1000):
    """E[X_{t+s} | history] for the true recursion.

    ``method="exact"`` (Case 1 only) returns ``phi1^s X_t``.  ``method="mc"``
    averages ``M`` simulated continuations; the last step uses the exact
    one-step mean, so ``s = 1`` is exact for every case and any ``M``.
    ``"auto"`` picks exact for Case 1 and Monte Carlo otherwise.
    """
    if s < 1 or M < 1:
        raise ValueError("need s >= 1 and M >= 1")
    h = check_history(history, coeffs.lag)
    if method == "auto":
        method = "exact" if coeffs.case_id == "linear1" else "mc"
    if method == "exact":
        if coeffs.case_id != "linear1":
            raise ValueError("the closed-form conditional mean exists only for the linear case")
        return np.linalg.matrix_power(coeffs.phi1, s) @ h[-1]
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    if s == 1:
        return coeffs.mean_map(h)
    rng = np.random.default_rng(int(seed))
    total = np.zeros(h.shape[1:])
    done = 0
    while done < M:
        b = min(chunk, M - done)
        win = np.broadcast_to(h, (b,) + h.shape).copy()
        for _ in range(s - 1):
            nxt = coeffs.mean_map(win) + coeffs.phi_e @ rng.standard_normal((b,) + h.shape[1:])
            win = np.concatenate([win[:, 1:], nxt[:, None]], axis=1)
        total += coeffs.mean_map(win).sum(axis=0)
        done += b
    return total / M
