"""Format, dense point, sparse, and combined response rewards.

The dense reward measures the normalized distance between the predicted
click point and the box center, scaled by the distance from the center to
the farthest image corner, so the decay term stays in [0, 1] on any screen.

Scalar kernels are written with an explicit operation order (plain float
multiplies, no fused expressions) so native re-implementations can match
them bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BBox, Point, ScreenSize, point_in_bbox


@dataclass(frozen=True)
class RewardConfig:
    """Weights for the combined response reward alpha*R_f + beta*R_point."""

    alpha: float = 1.0
    beta: float = 2.0
    mode: str = "dense"

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ValueError(f"invalid reward weights alpha={self.alpha}, beta={self.beta}")
        if self.mode not in ("dense", "sparse"):
            raise ValueError(f"reward mode must be 'dense' or 'sparse', got {self.mode!r}")


def normalized_distance(p: Point, b: BBox, s: ScreenSize) -> float:
    """Distance from the point to the box center, each axis normalized by the screen."""
    w = float(s.width)
    h = float(s.height)
    cx = (b.x1 + b.x2) / 2.0
    cy = (b.y1 + b.y2) / 2.0
    dx = p.x / w - cx / w
    dy = p.y / h - cy / h
    return math.sqrt(dx * dx + dy * dy)


def d_max(b: BBox, s: ScreenSize) -> float:
    """Normalized distance from the box center to the farthest screen corner.

    Computed in the same per-axis-normalized metric as
    :func:`normalized_distance`, which keeps d/d_max <= 1 for on-screen boxes.
    """
    w = float(s.width)
    h = float(s.height)
    cx = (b.x1 + b.x2) / 2.0
    cy = (b.y1 + b.y2) / 2.0
    best = 0.0
    for corner_x, corner_y in ((0.0, 0.0), (w, 0.0), (0.0, h), (w, h)):
        dx = corner_x / w - cx / w
        dy = corner_y / h - cy / h
        dist = math.sqrt(dx * dx + dy * dy)
        if dist > best:
            best = dist
    return best


def point_reward(p: Point | None, b: BBox, s: ScreenSize) -> float:
    """Dense point reward in [0, 2].

    Inside the box (boundary included) the reward is 1 plus a squared decay
    toward the center; outside it is the decay term alone. A missing point
    (unparseable response) earns 0.
    """
    if p is None:
        return 0.0
    d = normalized_distance(p, b, s)
    ratio = d / d_max(b, s)
    # Points beyond the farthest corner (possible only off-screen) saturate at
    # zero decay; without the clamp the squared term would grow again and
    # break both the [0, 2] bound and monotonicity along rays.
    if ratio > 1.0:
        ratio = 1.0
    decay = 1.0 - ratio
    decay = decay * decay
    if point_in_bbox(p, b):
        return 1.0 + decay
    return decay


def sparse_point_reward(p: Point | None, b: BBox) -> float:
    """Binary hit/miss baseline reward."""
    if p is None:
        return 0.0
    return 1.0 if point_in_bbox(p, b) else 0.0


def format_reward(format_valid: bool) -> float:
    """1 when the response carried the expected tool-call structure, else 0."""
    return 1.0 if format_valid else 0.0


def combined_reward(rf: float, rp: float, cfg: RewardConfig) -> float:
    return cfg.alpha * rf + cfg.beta * rp


def rollout_reward(point: Point | None, format_valid: bool, b: BBox, s: ScreenSize, cfg: RewardConfig) -> float:
    """Combined reward of one rollout under the configured reward mode."""
    rf = format_reward(format_valid)
    if cfg.mode == "sparse":
        rp = sparse_point_reward(point, b)
    else:
        rp = point_reward(point, b, s)
    return combined_reward(rf, rp, cfg)


def point_reward_batch(px: np.ndarray, py: np.ndarray, boxes: np.ndarray, screens: np.ndarray) -> np.ndarray:
    """Vectorized dense point reward.

    ``boxes`` is (n, 4) as [x1, y1, x2, y2] and ``screens`` is (n, 2) as
    [w, h]. Element i equals ``point_reward`` on the corresponding scalar
    inputs bit for bit (the expression order matches the scalar kernel).
    """
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    boxes = np.asarray(boxes, dtype=np.float64)
    screens = np.asarray(screens, dtype=np.float64)
    w = screens[:, 0]
    h = screens[:, 1]
    cx = (boxes[:, 0] + boxes[:, 2]) / 2.0
    cy = (boxes[:, 1] + boxes[:, 3]) / 2.0
    dx = px / w - cx / w
    dy = py / h - cy / h
    d = np.sqrt(dx * dx + dy * dy)
    best = np.zeros_like(d)
    for corner_x, corner_y in ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)):
        ex = (corner_x * w) / w - cx / w
        ey = (corner_y * h) / h - cy / h
        dist = np.sqrt(ex * ex + ey * ey)
        best = np.maximum(best, dist)
    ratio = np.minimum(d / best, 1.0)
    decay = 1.0 - ratio
    decay = decay * decay
    inside = (
        (boxes[:, 0] <= px) & (px <= boxes[:, 2]) & (boxes[:, 1] <= py) & (py <= boxes[:, 3])
    )
    return np.where(inside, 1.0 + decay, decay)
