"""Uniform Catmull-Rom splines parameterized by arclength."""

from __future__ import annotations

import numpy as np

from .errors import OutOfDomain

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


class CatmullRom:
    """Interpolating C1 spline through all control points.

    End segments use reflected phantom points, so equally spaced collinear
    controls give constant-speed straight motion.
    """

    def __init__(self, control_points):
        P = np.asarray(control_points, dtype=float)
        if P.ndim != 2 or len(P) < 4:
            raise ValueError("a spline needs at least 4 control points")
        self.control_points = P
        self._P = np.vstack([2 * P[0] - P[1], P, 2 * P[-1] - P[-2]])
        self.n_segments = len(P) - 1
        seg_len = np.array([self._seg_length(i, 1.0) for i in range(self.n_segments)])
        self.knots = np.concatenate([[0.0], np.cumsum(seg_len)])

    @property
    def length(self) -> float:
        return float(self.knots[-1])

    def _coeffs(self, i):
        p0, p1, p2, p3 = self._P[i : i + 4]
        return (
            2 * p1,
            -p0 + p2,
            2 * p0 - 5 * p1 + 4 * p2 - p3,
            -p0 + 3 * p1 - 3 * p2 + p3,
        )

    def _point(self, i, u):
        c0, c1, c2, c3 = self._coeffs(i)
        return 0.5 * (c0 + u * (c1 + u * (c2 + u * c3)))

    def _deriv(self, i, u):
        _, c1, c2, c3 = self._coeffs(i)
        u = np.asarray(u, dtype=float)[..., None]
        return 0.5 * (c1 + u * (2 * c2 + 3 * u * c3))

    def _seg_length(self, i, u):
        if u <= 0:
            return 0.0
        x = 0.5 * u * (_GL_X + 1)
        return float(0.5 * u * (_GL_W @ np.linalg.norm(self._deriv(i, x), axis=-1)))

    def _locate(self, s):
        if s < -1e-9 or s > self.length + 1e-9:
            raise OutOfDomain(f"arclength {s} outside [0, {self.length}]")
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.knots, s, side="right") - 1)
        i = min(i, self.n_segments - 1)
        target = s - self.knots[i]
        seg = self.knots[i + 1] - self.knots[i]
        if target <= 0:
            return i, 0.0
        if target >= seg:
            return i, 1.0
        lo, hi = 0.0, 1.0
        u = target / seg
        for _ in range(50):
            f = self._seg_length(i, u) - target
            if abs(f) < 1e-12:
                break
            if f > 0:
                hi = u
            else:
                lo = u
            speed = float(np.linalg.norm(self._deriv(i, u)))
            step = u - f / speed if speed > 0 else 0.5 * (lo + hi)
            u = step if lo < step < hi else 0.5 * (lo + hi)
        return i, u

    def __call__(self, s: float) -> np.ndarray:
        i, u = self._locate(s)
        return self._point(i, u)

    def tangent(self, s: float) -> np.ndarray:
        i, u = self._locate(s)
        d = self._deriv(i, u)
        return d / np.linalg.norm(d)


def eval_spline(control_points, s: float) -> np.ndarray:
    return CatmullRom(control_points)(s)
