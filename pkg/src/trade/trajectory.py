"""Damped constant-acceleration Kalman filter over the target's 3D state.

State order is ``[p (3), v (3), a (3)]``. Velocity and acceleration decay by
per-second factors raised to ``dt``, so without measurements the predicted
position converges instead of drifting away.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PointBehindCamera, PredictionBehindCamera
from .geometry import Intrinsics, Pose, project


@dataclass
class NoiseConfig:
    process_sigma: tuple[float, float, float] = (0.0, 0.0, 2.0)  # p, v, a random-walk std per sqrt(s)
    meas_sigma: float = 0.3  # floor on the measurement std (m)
    damping_v: float = 0.9
    damping_a: float = 0.9

    def __post_init__(self):
        if min(self.process_sigma) < 0 or self.meas_sigma <= 0:
            raise ValueError("noise standard deviations must be non-negative")
        for lam in (self.damping_v, self.damping_a):
            if not 0 < lam <= 1:
                raise ValueError("damping factors must lie in (0, 1]")


@dataclass
class KalmanState:
    x: np.ndarray = field(default_factory=lambda: np.zeros(9))
    P: np.ndarray = field(default_factory=lambda: np.eye(9))
    timestamp: float = 0.0

    @property
    def p(self) -> np.ndarray:
        return self.x[0:3]

    @property
    def v(self) -> np.ndarray:
        return self.x[3:6]

    @property
    def a(self) -> np.ndarray:
        return self.x[6:9]

    def copy(self) -> "KalmanState":
        return KalmanState(self.x.copy(), self.P.copy(), self.timestamp)

    @classmethod
    def initial(cls, position, timestamp: float = 0.0, pos_sigma: float = 1.0,
                vel_sigma: float = 5.0, acc_sigma: float = 2.0) -> "KalmanState":
        x = np.zeros(9)
        x[:3] = position
        P = np.diag([pos_sigma**2] * 3 + [vel_sigma**2] * 3 + [acc_sigma**2] * 3)
        return cls(x, P, timestamp)


def transition(dt: float, cfg: NoiseConfig) -> np.ndarray:
    I = np.eye(3)
    lv = cfg.damping_v**dt
    la = cfg.damping_a**dt
    F = np.zeros((9, 9))
    F[0:3, 0:3] = I
    F[0:3, 3:6] = dt * I
    F[0:3, 6:9] = 0.5 * dt**2 * I
    F[3:6, 3:6] = lv * I
    F[3:6, 6:9] = lv * dt * I
    F[6:9, 6:9] = la * I
    return F


def process_noise(dt: float, cfg: NoiseConfig) -> np.ndarray:
    sp, sv, sa = cfg.process_sigma
    return np.diag([sp**2 * dt] * 3 + [sv**2 * dt] * 3 + [sa**2 * dt] * 3)


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def predict(state: KalmanState, dt: float, cfg: NoiseConfig) -> KalmanState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    F = transition(dt, cfg)
    P = _symmetrize(F @ state.P @ F.T + process_noise(dt, cfg))
    return KalmanState(F @ state.x, P, state.timestamp + dt)


H = np.hstack([np.eye(3), np.zeros((3, 6))])


def update(state: KalmanState, z, sigma: float) -> KalmanState:
    """Position-only update with isotropic measurement std ``sigma``."""
    z = np.asarray(z, dtype=float)
    R = sigma**2 * np.eye(3)
    S = H @ state.P @ H.T + R
    K = np.linalg.solve(S, H @ state.P).T
    x = state.x + K @ (z - H @ state.x)
    IKH = np.eye(9) - K @ H
    # Joseph form keeps P symmetric positive semi-definite
    P = _symmetrize(IKH @ state.P @ IKH.T + K @ R @ K.T)
    return KalmanState(x, P, state.timestamp)


def measurement_sigma(fix_sigma: float | None, cfg: NoiseConfig) -> float:
    if fix_sigma is None or not np.isfinite(fix_sigma):
        return cfg.meas_sigma
    return max(float(fix_sigma), cfg.meas_sigma)


def predict_pixel(state: KalmanState, dt: float, pose: Pose, intr: Intrinsics, cfg: NoiseConfig) -> np.ndarray:
    pred = predict(state, dt, cfg) if dt > 0 else state
    try:
        return project(pred.p, pose, intr)
    except PointBehindCamera as exc:
        raise PredictionBehindCamera(str(exc)) from exc


def free_run_bound(v0: float, a0: float, dt: float, damping_v: float, damping_a: float) -> float:
    """Upper bound on total free-run displacement from speed ``v0`` and acceleration ``a0``.

    Sums the geometric series of the damped per-step displacements.
    """
    beta = damping_v**dt
    alpha = damping_a**dt
    if beta >= 1 or (a0 > 0 and alpha >= 1):
        return np.inf
    bound = dt * v0 / (1 - beta)
    if a0 > 0:
        bound += dt**2 * a0 * beta / ((1 - beta) * (1 - alpha)) + 0.5 * dt**2 * a0 / (1 - alpha)
    return bound
