"""Linear and naive forecasting baselines for matrix time series."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._validation import check_frames, check_history, check_panel

RIDGE_LAMBDA = 1e-8


class SingularGramError(np.linalg.LinAlgError):
    """The normal equations of the least-squares fit are rank deficient."""


@dataclass
class OLSCoefficients:
    """Fitted ``X_{t+1} = sum_j phis[j] X_{t-j}`` (phis[0] multiplies the newest frame)."""

    phis: list

    @property
    def lag(self):
        return len(self.phis)

    def arrays(self):
        return {f"phi{j + 1}": phi for j, phi in enumerate(self.phis)}


def _stacked(frames, t, lag):
    # newest frame first, matching phis ordering
    return np.concatenate([frames[t - j] for j in range(lag)], axis=0)


def ols_fit(series, lag=1, ridge=False):
    """Least squares ``min sum_t ||X_{t+1} - sum_j phi_j X_{t-j}||_F^2``.

    Solved from the normal equations ``Phi G = A`` with ``G = sum Z_t Z_t^T``,
    ``A = sum X_{t+1} Z_t^T`` by column-pivoted QR.  A rank-deficient ``G``
    raises :class:`SingularGramError` unless ``ridge=True`` (adds 1e-8 I).
    Accepts one series or a panel (equations pooled over subjects).
    """
    if lag < 1:
        raise ValueError("lag must be >= 1")
    subjects = check_panel(series, min_frames=lag + 1)
    p1 = subjects[0].shape[1]
    G = np.zeros((lag * p1, lag * p1))
    A = np.zeros((p1, lag * p1))
    for frames in subjects:
        for t in range(lag - 1, frames.shape[0] - 1):
            Z = _stacked(frames, t, lag)
            G += Z @ Z.T
            A += frames[t + 1] @ Z.T
    if ridge:
        G += RIDGE_LAMBDA * np.eye(G.shape[0])
    Q, R, perm = scipy.linalg.qr(G, pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[0] == 0 or diag[-1] <= diag[0] * G.shape[0] * np.finfo(float).eps * 10:
        raise SingularGramError(f"Gram matrix is rank deficient (|R| ratio {diag[-1] / max(diag[0], 1e-300):.3g})")
    # G symmetric: Phi G = A  <=>  G Phi^T = A^T
    y = scipy.linalg.solve_triangular(R, Q.T @ A.T)
    PhiT = np.empty_like(y)
    PhiT[perm] = y
    Phi = PhiT.T
    backward_err = np.linalg.norm(Phi @ G - A) / (np.linalg.norm(G) * np.linalg.norm(Phi) + np.linalg.norm(A))
    if backward_err > 1e-10:
        raise SingularGramError(f"normal equations solved inaccurately (backward error {backward_err:.3g})")
    return OLSCoefficients([Phi[:, j * p1:(j + 1) * p1] for j in range(lag)])


def ols_predict(coeffs, history, s=1):
    """Iterate the fitted recursion ``s`` times without noise (oldest-first ``history``)."""
    if s < 1:
        raise ValueError("s must be >= 1")
    window = list(check_history(history, coeffs.lag))
    for _ in range(s):
        nxt = sum(phi @ window[-1 - j] for j, phi in enumerate(coeffs.phis))
        window = window[1:] + [nxt]
    return window[-1]


def naive_predict(series, t_target, s):
    """Predict X_{t_target} by the observed frame X_{t_target - s}."""
    if s < 1:
        raise ValueError("s must be >= 1")
    frames = check_frames(getattr(series, "frames", series))
    src = t_target - s
    if not 0 <= src < frames.shape[0]:
        raise IndexError(f"frame {src} is outside the series (0..{frames.shape[0] - 1})")
    return frames[src]
