"""Constant-velocity Kalman filter over box state, SORT/ByteTrack style.

State is an 8-vector (cx, cy, aspect, height, and their velocities) with
noise scales proportional to the box height: position std height/20,
velocity std height/160.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor

STD_POSITION = 1.0 / 20
STD_VELOCITY = 1.0 / 160

_TRANSITION = np.eye(8)
for _i in range(4):
    _TRANSITION[_i, _i + 4] = 1.0
_MEASURE = np.eye(4, 8)


@dataclass
class KalmanState:
    mean: Tensor        # (cx, cy, aspect, height, vcx, vcy, va, vh)
    covariance: Tensor  # 8x8 symmetric PSD


def _box_to_meas(box) -> np.ndarray:
    x, y, w, h = box
    return np.array([x + w / 2, y + h / 2, w / h, h], dtype=np.float64)


def state_box(state: KalmanState) -> tuple[float, float, float, float]:
    """Current state as an (x_left, y_top, w, h) box."""
    cx, cy, a, h = state.mean[:4]
    w = a * h
    return (float(cx - w / 2), float(cy - h / 2), float(w), float(h))


def kf_init(box) -> KalmanState:
    """Fresh state from a measured box: zero velocity, height-scaled stds."""
    x, y, w, h = box
    if w <= 0 or h <= 0:
        raise ValueError(f"box must have positive extent, got {box}")
    mean = np.zeros(8)
    mean[:4] = _box_to_meas(box)
    # wide initial velocity band (h/4): the first updates then pin the
    # velocity from the measurements instead of the zero prior
    std = np.array([
        2 * STD_POSITION * h, 2 * STD_POSITION * h, 1e-2, 2 * STD_POSITION * h,
        40 * STD_VELOCITY * h, 40 * STD_VELOCITY * h, 1e-5, 40 * STD_VELOCITY * h,
    ])
    return KalmanState(mean, np.diag(std ** 2))


def kf_predict(state: KalmanState) -> KalmanState:
    """Advance one timestep under constant velocity; inflates covariance."""
    h = state.mean[3]
    std = np.array([
        STD_POSITION * h, STD_POSITION * h, 1e-2, STD_POSITION * h,
        STD_VELOCITY * h, STD_VELOCITY * h, 1e-5, STD_VELOCITY * h,
    ])
    mean = _TRANSITION @ state.mean
    cov = _TRANSITION @ state.covariance @ _TRANSITION.T + np.diag(std ** 2)
    state.mean = mean
    state.covariance = (cov + cov.T) / 2
    return state


def kf_update(state: KalmanState, box) -> KalmanState:
    """Standard Kalman correction on the four measured box components."""
    x, y, w, h = box
    if w <= 0 or h <= 0:
        raise ValueError(f"box must have positive extent, got {box}")
    z = _box_to_meas(box)
    hh = state.mean[3]
    std = np.array([STD_POSITION * hh, STD_POSITION * hh, 1e-1, STD_POSITION * hh])
    innovation_cov = _MEASURE @ state.covariance @ _MEASURE.T + np.diag(std ** 2)
    try:
        gain = np.linalg.solve(innovation_cov, _MEASURE @ state.covariance).T
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular innovation covariance") from exc
    innovation = z - _MEASURE @ state.mean
    state.mean = state.mean + gain @ innovation
    cov = state.covariance - gain @ innovation_cov @ gain.T
    state.covariance = (cov + cov.T) / 2
    # measured boxes are strictly positive, so the posterior height stays above
    # zero except for pathological gains; clamp as a safety floor
    state.mean[3] = max(state.mean[3], 1e-6)
    state.mean[2] = max(state.mean[2], 1e-6)
    return state
