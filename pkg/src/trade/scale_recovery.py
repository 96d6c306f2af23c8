"""Metric scale recovery for relative inverse-depth maps.

A single-image depth network returns inverse depth only up to an affine map,
``rho = theta0 + theta1 * rho_rel``. The two parameters are fitted from ROI
features whose metric inverse depth is known from motion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSamples, NoValidSample


@dataclass(frozen=True)
class AffineParams:
    theta0: float
    theta1: float

    def apply(self, rho_prime):
        return self.theta0 + self.theta1 * np.asarray(rho_prime, dtype=float)


@dataclass(frozen=True)
class DepthCorrespondence:
    rho_prime: float
    rho: float
    pixel: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("metric inverse depth must be positive")


@dataclass
class RelativeInvDepthMap:
    values: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.valid is None:
            self.valid = np.isfinite(self.values)
        else:
            self.valid = np.asarray(self.valid, dtype=bool) & np.isfinite(self.values)

    @property
    def shape(self):
        return self.values.shape

    def sample(self, pixels) -> tuple[np.ndarray, np.ndarray]:
        """Nearest-pixel lookup; returns (values, valid flags)."""
        p = np.atleast_2d(np.asarray(pixels, dtype=float))
        h, w = self.values.shape
        u = np.floor(p[:, 0]).astype(int)
        v = np.floor(p[:, 1]).astype(int)
        inside = (u >= 0) & (u < w) & (v >= 0) & (v < h)
        vals = np.full(len(p), np.nan)
        ok = np.zeros(len(p), dtype=bool)
        vals[inside] = self.values[v[inside], u[inside]]
        ok[inside] = self.valid[v[inside], u[inside]]
        return vals, ok


def _as_arrays(pairs_or_rho_prime, rho=None):
    if rho is None:
        pairs = list(pairs_or_rho_prime)
        x = np.array([p.rho_prime for p in pairs], dtype=float)
        y = np.array([p.rho for p in pairs], dtype=float)
        return x, y
    return np.asarray(pairs_or_rho_prime, dtype=float), np.asarray(rho, dtype=float)


def fit_affine_lsq(rho_prime, rho=None, spread_eps: float = 1e-9) -> AffineParams:
    """Least-squares ``(theta0, theta1)``; accepts a correspondence list or two arrays."""
    x, y = _as_arrays(rho_prime, rho)
    if len(x) < 2:
        raise DegenerateSamples("need at least two correspondences")
    scale = max(1.0, float(np.abs(x).max()))
    if np.ptp(x) < spread_eps * scale:
        raise DegenerateSamples("relative inverse depths are (nearly) constant")
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    theta1 = float(dx @ (y - ym) / (dx @ dx))
    return AffineParams(float(ym - theta1 * xm), theta1)


def default_inlier_thresh(rho) -> float:
    return 0.05 * float(np.median(rho))


def default_min_gap(rho_prime) -> float:
    q1, q3 = np.percentile(rho_prime, [25, 75])
    return 0.1 * float(q3 - q1)


def fit_affine_ransac(
    rho_prime,
    rho=None,
    inlier_thresh: float | None = None,
    min_rho_prime_gap: float | None = None,
    iters: int = 200,
    rng: np.random.Generator | int | None = 0,
) -> tuple[AffineParams, np.ndarray]:
    """RANSAC over 2-point minimal sets; returns params and inlier indices.

    Minimal sets closer than ``min_rho_prime_gap`` in relative inverse depth
    are skipped (they are ill-conditioned, e.g. fronto-parallel ground).
    Hypotheses with non-positive scale are skipped as well.
    """
    x, y = _as_arrays(rho_prime, rho)
    n = len(x)
    if n < 2:
        raise NoValidSample("need at least two correspondences")
    if inlier_thresh is None:
        inlier_thresh = default_inlier_thresh(y)
    if min_rho_prime_gap is None:
        min_rho_prime_gap = default_min_gap(x)
    rng = np.random.default_rng(rng)

    i = rng.integers(0, n, size=iters)
    j = rng.integers(0, n, size=iters)
    dxp = x[j] - x[i]
    usable = (i != j) & (np.abs(dxp) >= min_rho_prime_gap) & (np.abs(dxp) > 0)
    if not usable.any():
        raise NoValidSample("no minimal sample satisfies the relative-depth gap")
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (y[j] - y[i]) / dxp
    t0 = y[i] - t1 * x[i]
    usable &= t1 > 0
    if not usable.any():
        raise NoValidSample("no minimal sample yields a positive scale")
    t0, t1 = t0[usable], t1[usable]
    resid = np.abs(t0[:, None] + t1[:, None] * x[None, :] - y[None, :])
    counts = (resid < inlier_thresh).sum(axis=1)
    best = int(np.argmax(counts))  # first maximum == lowest sample index
    inliers = np.flatnonzero(resid[best] < inlier_thresh)

    params = AffineParams(float(t0[best]), float(t1[best]))
    for _ in range(10):
        if len(inliers) < 2:
            break
        try:
            refit = fit_affine_lsq(x[inliers], y[inliers])
        except DegenerateSamples:
            break
        if refit.theta1 <= 0:
            break
        new_inliers = np.flatnonzero(np.abs(refit.apply(x) - y) < inlier_thresh)
        params = refit
        if np.array_equal(new_inliers, inliers):
            break
        inliers = new_inliers
    inliers = np.flatnonzero(np.abs(params.apply(x) - y) < inlier_thresh)
    return params, inliers


def apply_affine(depth_map: RelativeInvDepthMap, params: AffineParams) -> tuple[np.ndarray, np.ndarray]:
    """Metric inverse-depth map and validity; non-positive outputs are invalid."""
    metric = params.apply(depth_map.values)
    valid = depth_map.valid & np.isfinite(metric) & (metric > 0)
    return metric, valid
