"""Camera and plane geometry.

Conventions: right-handed frames, the camera looks along its +z axis with x to
the right and y down in the image, world up is +z. ``Pose`` holds the
world-from-camera transform, so ``x_world = R @ x_cam + t`` and ``t`` is the
camera centre in the world frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateBaseline,
    NegativeRange,
    NonPositiveInverseDepth,
    PointBehindCamera,
    RayParallel,
)

WORLD_UP = np.array([0.0, 0.0, 1.0])

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if np.abs(R.T @ R - np.eye(3)).max() > _ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """``self * other``: apply ``other`` first, then ``self``."""
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def to_camera(self, points_world: np.ndarray) -> np.ndarray:
        points_world = np.asarray(points_world, dtype=float)
        return (points_world - self.translation) @ self.rotation

    def to_world(self, points_cam: np.ndarray) -> np.ndarray:
        points_cam = np.asarray(points_cam, dtype=float)
        return points_cam @ self.rotation.T + self.translation

    @property
    def optical_axis(self) -> np.ndarray:
        return self.rotation[:, 2].copy()


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def from_fov(cls, width: int, height: int, fov_deg: float) -> "Intrinsics":
        """Square pixels, horizontal field of view ``fov_deg``."""
        f = 0.5 * width / np.tan(np.radians(fov_deg) / 2.0)
        return cls(f, f, width / 2.0, height / 2.0, int(width), int(height))

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def normalized(self, pixels: np.ndarray) -> np.ndarray:
        """Pixel(s) -> camera-frame ray(s) with unit z component."""
        pixels = np.asarray(pixels, dtype=float)
        x = (pixels[..., 0] - self.cx) / self.fx
        y = (pixels[..., 1] - self.cy) / self.fy
        return np.stack([x, y, np.ones_like(x)], axis=-1)

    def contains(self, pixels: np.ndarray) -> np.ndarray:
        pixels = np.asarray(pixels, dtype=float)
        return (
            (pixels[..., 0] >= 0)
            & (pixels[..., 0] < self.width)
            & (pixels[..., 1] >= 0)
            & (pixels[..., 1] < self.height)
        )


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if n == 0:
            raise ValueError("ray direction must be non-zero")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))
        object.__setattr__(self, "direction", d / n)


@dataclass(frozen=True)
class Plane:
    """The set ``{x : normal . x + offset = 0}`` with ``normal . up >= 0``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ValueError("plane normal must be non-zero")
        n = n / norm
        offset = float(self.offset) / norm
        if n @ WORLD_UP < 0:
            n, offset = -n, -offset
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", offset)

    @classmethod
    def from_point_normal(cls, point, normal) -> "Plane":
        normal = np.asarray(normal, dtype=float)
        normal = normal / np.linalg.norm(normal)
        return cls(normal, -float(normal @ np.asarray(point, dtype=float)))

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.normal + self.offset

    def translated(self, distance: float) -> "Plane":
        """Shift the plane by ``distance`` along its (up-facing) normal."""
        return Plane(self.normal, self.offset - distance)


def project(point, pose: Pose, intr: Intrinsics) -> np.ndarray:
    p = pose.to_camera(point)
    if p[2] <= 0:
        raise PointBehindCamera(f"camera-frame depth {p[2]:.6g} <= 0")
    return np.array([intr.fx * p[0] / p[2] + intr.cx, intr.fy * p[1] / p[2] + intr.cy])


def project_many(points: np.ndarray, pose: Pose, intr: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised projection; returns (pixels, camera-frame depths). No depth check."""
    p = pose.to_camera(points)
    z = p[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.fx * p[:, 0] / z + intr.cx
        v = intr.fy * p[:, 1] / z + intr.cy
    return np.stack([u, v], axis=1), z


def backproject(pixel, inv_depth: float, pose: Pose, intr: Intrinsics) -> np.ndarray:
    if not inv_depth > 0:
        raise NonPositiveInverseDepth(f"inverse depth {inv_depth!r} must be positive")
    return pose.to_world(intr.normalized(pixel) / inv_depth)


def pixel_ray(pixel, pose: Pose, intr: Intrinsics) -> Ray:
    return Ray(pose.translation.copy(), pose.rotation @ intr.normalized(pixel))


def _linear_inverse_depth(f0, R0, C0, R1, C1, a, b, fx, fy, reweight=2, gauss_newton=4):
    """Batched linear two-view solve for inverse depth in the first view.

    With X = C0 + R0 f0 / rho, the second-view point times rho is ``t rho + r``
    (t = R1^T (C0 - C1), r = R1^T R0 f0) which is linear in rho. Each image
    axis gives one equation; rows are reweighted by the inverse second-view
    depth so the residual approximates the pixel reprojection error.
    A few Gauss-Newton steps then polish the estimate against that error.
    """
    t = np.einsum("nji,nj->ni", R1, C0 - C1)
    r = np.einsum("nji,njk,nk->ni", R1, R0, f0)
    Ax = t[:, 0] - a * t[:, 2]
    Bx = a * r[:, 2] - r[:, 0]
    Ay = t[:, 1] - b * t[:, 2]
    By = b * r[:, 2] - r[:, 1]
    wx = np.full_like(a, fx)
    wy = np.full_like(a, fy)
    rho = None
    for _ in range(reweight + 1):
        num = wx**2 * Ax * Bx + wy**2 * Ay * By
        den = wx**2 * Ax**2 + wy**2 * Ay**2
        rho = num / den
        z1 = t[:, 2] * rho + r[:, 2]
        z1 = np.where(np.abs(z1) < 1e-12, 1e-12, z1)
        wx = fx / z1
        wy = fy / z1
    # Gauss-Newton on the exact pixel residuals; the reweighted solve is a close start
    for _ in range(gauss_newton):
        z1 = t[:, 2] * rho + r[:, 2]
        z1 = np.where(np.abs(z1) < 1e-12, 1e-12, z1)
        x1 = t[:, 0] * rho + r[:, 0]
        y1 = t[:, 1] * rho + r[:, 1]
        ex = fx * (x1 / z1 - a)
        ey = fy * (y1 / z1 - b)
        jx = fx * (t[:, 0] * r[:, 2] - r[:, 0] * t[:, 2]) / z1**2
        jy = fy * (t[:, 1] * r[:, 2] - r[:, 1] * t[:, 2]) / z1**2
        jj = jx**2 + jy**2
        step = np.where(jj > 0, (jx * ex + jy * ey) / np.where(jj > 0, jj, 1.0), 0.0)
        rho = rho - step
    return rho


def perpendicular_baseline(pix0, pose0: Pose, pose1: Pose, intr: Intrinsics) -> np.ndarray:
    """Length of the baseline component perpendicular to the first viewing ray."""
    pix0 = np.atleast_2d(np.asarray(pix0, dtype=float))
    d = intr.normalized(pix0) @ pose0.rotation.T
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    base = pose1.translation - pose0.translation
    along = d @ base
    return np.linalg.norm(base[None, :] - along[:, None] * d, axis=1)


def triangulate_batch(
    pix0: np.ndarray,
    R0: np.ndarray,
    C0: np.ndarray,
    pix1: np.ndarray,
    pose1: Pose,
    intr: Intrinsics,
    pixel_sigma: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Inverse depth mean/variance for N tracks with per-track anchor poses.

    No degeneracy check here; callers screen with :func:`perpendicular_baseline`.
    Variance propagates isotropic ``pixel_sigma`` noise on all four pixel
    coordinates through the solve by central differences.
    """
    pix0 = np.asarray(pix0, dtype=float).reshape(-1, 2)
    pix1 = np.asarray(pix1, dtype=float).reshape(-1, 2)
    n = len(pix0)
    R1 = np.broadcast_to(pose1.rotation, (n, 3, 3))
    C1 = np.broadcast_to(pose1.translation, (n, 3))

    def solve(p0, p1):
        f0 = intr.normalized(p0)
        a = (p1[:, 0] - intr.cx) / intr.fx
        b = (p1[:, 1] - intr.cy) / intr.fy
        return _linear_inverse_depth(f0, R0, C0, R1, C1, a, b, intr.fx, intr.fy)

    rho = solve(pix0, pix1)
    h = 1e-3
    var = np.zeros(n)
    for which in range(4):
        d0 = np.zeros_like(pix0)
        d1 = np.zeros_like(pix1)
        if which < 2:
            d0[:, which] = h
        else:
            d1[:, which - 2] = h
        deriv = (solve(pix0 + d0, pix1 + d1) - solve(pix0 - d0, pix1 - d1)) / (2 * h)
        var += deriv**2
    return rho, pixel_sigma**2 * var


def triangulate_inverse_depth(
    pix0,
    pose0: Pose,
    pix1,
    pose1: Pose,
    intr: Intrinsics,
    min_baseline: float = 1e-3,
    pixel_sigma: float = 1.0,
) -> tuple[float, float]:
    """Two-view inverse depth of ``pix0`` (anchored in ``pose0``) and its variance."""
    if perpendicular_baseline(pix0, pose0, pose1, intr)[0] < min_baseline:
        raise DegenerateBaseline("baseline perpendicular to the viewing ray is below threshold")
    rho, var = triangulate_batch(
        np.atleast_2d(pix0),
        pose0.rotation[None],
        pose0.translation[None],
        np.atleast_2d(pix1),
        pose1,
        intr,
        pixel_sigma=pixel_sigma,
    )
    return float(rho[0]), float(var[0])


def rotation_between(a, b) -> np.ndarray:
    """Smallest rotation taking unit vector ``a`` onto unit vector ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    v = np.cross(a, b)
    c = float(a @ b)
    s = np.linalg.norm(v)
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        # antiparallel: half turn about any axis orthogonal to a
        axis = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        axis /= np.linalg.norm(axis)
        return 2.0 * np.outer(axis, axis) - np.eye(3)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx * ((1 - c) / s**2)


def gravity_align(points, world_up=WORLD_UP) -> np.ndarray:
    """Rotate points so that ``world_up`` becomes +z. Heights are then the z values."""
    R = rotation_between(world_up, [0.0, 0.0, 1.0])
    return np.asarray(points, dtype=float) @ R.T


def raycast_plane(ray: Ray, plane: Plane) -> tuple[np.ndarray, float]:
    denom = float(plane.normal @ ray.direction)
    if abs(denom) < 1e-9:
        raise RayParallel("ray is parallel to the plane")
    rng = -(float(plane.normal @ ray.origin) + plane.offset) / denom
    if rng <= 0:
        raise NegativeRange(f"intersection lies behind the ray origin (range {rng:.6g})")
    return ray.origin + rng * ray.direction, rng
