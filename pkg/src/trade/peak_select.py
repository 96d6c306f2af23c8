"""Trajectory-guided peak selection on a tracker score map.

The search window is centred on the predicted target pixel; among the
normalized response peaks close in strength to the strongest one, the one
nearest the window centre wins. Plain argmax selection is kept for
comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter

from .errors import NoCandidates


@dataclass(frozen=True)
class ScoreMap:
    scores: np.ndarray  # (h, w) raw tracker scores
    window_origin: tuple[float, float]  # image pixel of the map centre
    stride: float = 1.0

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float)
        if s.ndim != 2 or min(s.shape) < 1:
            raise ValueError("score map must be a non-empty 2D grid")
        if not np.isfinite(s).all():
            raise ValueError("score map must be finite")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "window_origin", (float(self.window_origin[0]), float(self.window_origin[1])))

    def cell_to_pixel(self, i, j) -> np.ndarray:
        h, w = self.scores.shape
        return np.array([
            self.window_origin[0] + (j - (w - 1) / 2) * self.stride,
            self.window_origin[1] + (i - (h - 1) / 2) * self.stride,
        ])


@dataclass(frozen=True)
class PeakCandidate:
    cell: tuple[int, int]
    pixel: np.ndarray
    score: float


def center_window(predicted_pixel, prev_center, image_size, window_size) -> np.ndarray:
    """Window origin at the prediction (or previous centre), clamped inside the image."""
    c = np.asarray(prev_center if predicted_pixel is None else predicted_pixel, dtype=float)
    w, h = image_size
    half_w, half_h = window_size[0] / 2, window_size[1] / 2
    lo = np.array([half_w, half_h])
    hi = np.array([w - half_w, h - half_h])
    # window larger than the image: centre it
    hi = np.maximum(hi, lo)
    return np.clip(c, lo, hi)


def softmax_normalize(score_map: ScoreMap | np.ndarray) -> np.ndarray:
    s = score_map.scores if isinstance(score_map, ScoreMap) else np.asarray(score_map, dtype=float)
    e = np.exp(s - s.max())
    return e / e.sum()


def _parabolic(p_minus, p0, p_plus) -> float:
    den = p_minus - 2 * p0 + p_plus
    return 0.0 if den == 0 else 0.5 * (p_minus - p_plus) / den


def find_peaks(prob: np.ndarray, score_map: ScoreMap | None = None, nms_radius: int = 2,
               fraction: float = 0.8, subcell: bool = False) -> list[PeakCandidate]:
    """Local maxima (radius ``nms_radius``) with ``prob >= fraction * max``, strongest first."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    prob = np.asarray(prob, dtype=float)
    size = 2 * nms_radius + 1
    local = maximum_filter(prob, size=size, mode="constant", cval=-np.inf)
    is_peak = (prob == local) & (prob >= fraction * prob.max())
    cells = np.argwhere(is_peak)
    order = np.lexsort((cells[:, 1], cells[:, 0], -prob[cells[:, 0], cells[:, 1]]))
    kept: list[tuple[int, int]] = []
    for i, j in cells[order]:
        # plateaus give several equal maxima; keep one per neighbourhood
        if any(max(abs(i - a), abs(j - b)) <= nms_radius for a, b in kept):
            continue
        kept.append((int(i), int(j)))
    out = []
    for i, j in kept:
        if score_map is not None:
            di = dj = 0.0
            if subcell:
                h, w = prob.shape
                if 0 < i < h - 1:
                    di = _parabolic(prob[i - 1, j], prob[i, j], prob[i + 1, j])
                if 0 < j < w - 1:
                    dj = _parabolic(prob[i, j - 1], prob[i, j], prob[i, j + 1])
            pix = score_map.cell_to_pixel(i + di, j + dj)
        else:
            pix = np.array([float(j), float(i)])
        out.append(PeakCandidate((i, j), pix, float(prob[i, j])))
    return out


def select_peak(candidates, window_origin) -> PeakCandidate:
    """Candidate nearest the window origin; ties go to the higher score."""
    cands = list(candidates)
    if not cands:
        raise NoCandidates("no peak candidates")
    o = np.asarray(window_origin, dtype=float)
    return min(cands, key=lambda c: (round(float(np.linalg.norm(c.pixel - o)), 9), -c.score))


def argmax_peak(score_map: ScoreMap) -> PeakCandidate:
    """Plain tracker behaviour: the single highest raw score."""
    s = score_map.scores
    i, j = np.unravel_index(int(np.argmax(s)), s.shape)
    return PeakCandidate((int(i), int(j)), score_map.cell_to_pixel(i, j), float(s[i, j]))


def guided_peak(score_map: ScoreMap, nms_radius: int = 2, fraction: float = 0.8,
                min_score: float = 0.0, subcell: bool = False) -> PeakCandidate:
    """Full guided selection; ``min_score`` rejects maps whose raw maximum is too weak."""
    if score_map.scores.max() < min_score:
        raise NoCandidates("score map maximum below confidence threshold")
    prob = softmax_normalize(score_map)
    cands = find_peaks(prob, score_map, nms_radius, fraction, subcell)
    return select_peak(cands, score_map.window_origin)
