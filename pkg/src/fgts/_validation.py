"""Input validation helpers shared by estimators and functional APIs."""

import numpy as np


def check_frames(X, name="X", min_frames=1):
    """Validate a single series of matrix frames, returned as float64 (T+1, p1, p2)."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2:
        # a sequence of already-flattened frames
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"{name} must have shape (n_frames, p1, p2), got {arr.shape}")
    if arr.shape[0] < min_frames:
        raise ValueError(f"{name} needs at least {min_frames} frames, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_panel(data, name="X", min_frames=1):
    """Normalise a single series or a list of series into a list of (T_i+1, p1, p2) arrays."""
    if hasattr(data, "subjects"):
        data = [s.frames for s in data.subjects]
    elif hasattr(data, "frames"):
        data = [data.frames]
    elif isinstance(data, np.ndarray) and data.ndim == 3:
        data = [data]
    elif isinstance(data, np.ndarray) and data.ndim == 4:
        data = list(data)
    subjects = [check_frames(x, name=name, min_frames=min_frames) for x in data]
    if not subjects:
        raise ValueError(f"{name} is empty")
    shape = subjects[0].shape[1:]
    for i, x in enumerate(subjects):
        if x.shape[1:] != shape:
            raise ValueError(f"{name}[{i}] frame shape {x.shape[1:]} differs from {shape}")
    return subjects


def check_history(history, lag, frame_shape=None):
    """Validate a lag window ordered oldest to newest; returns (lag, p1, p2)."""
    h = np.asarray(history, dtype=np.float64)
    if h.ndim == 2:
        h = h[None]
    if h.ndim != 3 or h.shape[0] != lag:
        raise ValueError(f"history must hold {lag} frame(s), got shape {h.shape}")
    if frame_shape is not None and tuple(h.shape[1:]) != tuple(frame_shape):
        raise ValueError(f"history frames have shape {h.shape[1:]}, expected {tuple(frame_shape)}")
    return h


def check_prob_vector(p, name="p", atol=1e-9):
    v = np.asarray(p, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError(f"{name} is empty")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must have finite non-negative entries")
    if abs(v.sum() - 1.0) > atol:
        raise ValueError(f"{name} must sum to 1 (got {v.sum():.12g})")
    return v
