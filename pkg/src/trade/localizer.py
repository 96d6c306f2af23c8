"""Target 3D localization by raycasting the bounding-box centre.

The ray through the box centre is intersected with the ground plane lifted by
half the object height; for a box-shaped target seen off-nadir this removes
the lateral error a ground-level intersection would have.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import LocalizationFailed, NegativeRange, NoIntersection, RayParallel
from .geometry import Intrinsics, Plane, Pose, pixel_ray, raycast_plane
from .plane_fitting import FusedPlaneModel, PlaneHypothesis, raycast_uncertainty, select_flattest
from .roi_tracker import BoundingBox


class FixSource(enum.Enum):
    FRESH_PLANE = "fresh"
    FUSED_FALLBACK = "fused_fallback"


@dataclass(frozen=True)
class TargetFix:
    position: np.ndarray
    depth_sigma: float
    source: FixSource
    frame: int
    plane: Plane  # the lifted plane the fix lies on
    range: float


def lift_plane(plane: Plane, object_height: float) -> Plane:
    if object_height < 0:
        raise ValueError("object height must be non-negative")
    return plane.translated(object_height / 2.0)


def localize(
    bbox: BoundingBox,
    model: FusedPlaneModel | None,
    hypotheses,
    object_height: float,
    pose: Pose,
    intr: Intrinsics,
    frame: int = 0,
    fresh_failed: bool = False,
    lift: bool = True,
    prefer_fused: bool = True,
) -> TargetFix:
    """Raycast the box centre onto the lifted plane.

    The fused model is used when valid and preferred; otherwise the flattest
    fresh hypothesis. The range sigma comes from the spread over the lifted
    hypotheses that the ray hits.
    """
    hyps = list(hypotheses or ())
    if model is not None and model.valid and (prefer_fused or not hyps):
        plane = model.plane
        spread = list(model.hypotheses) or hyps
    elif hyps:
        plane = select_flattest(hyps).plane
        spread = hyps
    else:
        raise LocalizationFailed("no valid plane")

    h = max(object_height, 0.0) if lift else 0.0
    ray = pixel_ray(bbox.center, pose, intr)
    lifted = lift_plane(plane, h)
    try:
        point, rng = raycast_plane(ray, lifted)
    except (RayParallel, NegativeRange) as exc:
        raise LocalizationFailed(str(exc)) from exc
    try:
        _, sigma = raycast_uncertainty(
            [lift_plane(p.plane if isinstance(p, PlaneHypothesis) else p, h) for p in spread], ray
        )
    except NoIntersection:
        sigma = 0.0
    source = FixSource.FUSED_FALLBACK if fresh_failed else FixSource.FRESH_PLANE
    return TargetFix(point, sigma, source, frame, lifted, rng)


def lateral_error(height: float, off_nadir: float) -> float:
    """Horizontal displacement of a ground intersection for a point ``height`` above it."""
    return height * np.tan(off_nadir)
