"""Planar lane paths and the heading rotation that ties lane acceleration to 2-D control.

Lanes are polylines parameterized by arc length. The heading is constant on each
segment, so a scalar acceleration ``a`` along the lane maps to ``R(theta) @ (a, 0)``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

_ON_PATH_TOL = 1e-6


class PathRangeError(ValueError):
    """Arc length outside ``[0, path.length]``."""


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class HeadingRotation:
    theta: float

    @property
    def matrix(self) -> np.ndarray:
        return rotation_matrix(self.theta)

    @property
    def direction(self) -> np.ndarray:
        """Unit tangent ``R(theta) @ (1, 0)``."""
        return np.array([math.cos(self.theta), math.sin(self.theta)])


@dataclass(frozen=True)
class LanePath:
    """Piecewise-linear lane.

    Parameters
    ----------
    waypoints : array_like, shape (n, 2)
        Ordered points in meters, ``n >= 2``, consecutive points distinct.
    merge_point : array_like, shape (2,)
        Point where this lane meets the other one. Must lie on the polyline.
    """

    waypoints: np.ndarray
    merge_point: np.ndarray
    _cum: np.ndarray = field(init=False, repr=False, compare=False)
    # (x0, y0, dx, dy, length, s0) per segment as plain floats
    _segs: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.waypoints, dtype=float)
        mp = np.asarray(self.merge_point, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError(f"waypoints must have shape (n>=2, 2), got {pts.shape}")
        if mp.shape != (2,):
            raise ValueError(f"merge_point must have shape (2,), got {mp.shape}")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(mp))):
            raise ValueError("waypoints and merge_point must be finite")
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg <= 0.0):
            raise ValueError("consecutive waypoints must be distinct")
        object.__setattr__(self, "waypoints", pts)
        object.__setattr__(self, "merge_point", mp)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        object.__setattr__(self, "_cum", cum)
        segs = tuple(
            (float(pts[i, 0]), float(pts[i, 1]), float(pts[i + 1, 0] - pts[i, 0]),
             float(pts[i + 1, 1] - pts[i, 1]), float(seg[i]), float(cum[i]))
            for i in range(len(seg))
        )
        object.__setattr__(self, "_segs", segs)
        s, dist = _closest(self, mp)
        if dist > _ON_PATH_TOL:
            raise ValueError(f"merge_point {mp.tolist()} is {dist:.3g} m off the path")

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    @property
    def cumulative(self) -> np.ndarray:
        return self._cum.copy()

    @property
    def merge_s(self) -> float:
        """Arc length of the merge point."""
        return _closest(self, self.merge_point)[0]

    @property
    def n_segments(self) -> int:
        return len(self.waypoints) - 1

    def segment_heading(self, i: int) -> float:
        seg = self._segs[i]
        return math.atan2(seg[3], seg[2])


def _segment_index(path: LanePath, s: float) -> int:
    starts = [seg[5] for seg in path._segs]
    i = bisect.bisect_right(starts, s) - 1
    return min(max(i, 0), len(starts) - 1)


def pose_at(path: LanePath, s: float, extrapolate: bool = False) -> tuple[np.ndarray, float]:
    """Position and tangent heading at arc length ``s``.

    With ``extrapolate=True`` arc lengths outside the path continue along the
    first or last segment instead of raising.
    """
    s = float(s)
    if not extrapolate and not (0.0 <= s <= path.length):
        raise PathRangeError(f"arc length {s} outside valid interval [0, {path.length}]")
    i = _segment_index(path, s)
    p0 = path.waypoints[i]
    theta = path.segment_heading(i)
    pos = p0 + (s - path._cum[i]) * np.array([math.cos(theta), math.sin(theta)])
    return pos, theta


def heading_at(path: LanePath, s: float) -> float:
    return path.segment_heading(_segment_index(path, s))


def _closest(path: LanePath, point) -> tuple[float, float]:
    # extends the first and last segments to infinity
    px, py = float(point[0]), float(point[1])
    best_s, best_d = 0.0, math.inf
    last = len(path._segs) - 1
    for i, (x0, y0, dx, dy, L, s0) in enumerate(path._segs):
        t = ((px - x0) * dx + (py - y0) * dy) / (L * L)
        if i > 0 and t < 0.0:
            t = 0.0
        if i < last and t > 1.0:
            t = 1.0
        dist = math.hypot(x0 + t * dx - px, y0 + t * dy - py)
        if dist < best_d - 1e-12:
            best_s, best_d = s0 + t * L, dist
    return best_s, best_d


def project_to_path(path: LanePath, point) -> float:
    """Arc length of the closest point on the (end-extended) path."""
    return _closest(path, point)[0]


def project_control(theta: float, a: float) -> np.ndarray:
    return np.array([a * math.cos(theta), a * math.sin(theta)])


def reduce_constraint(A2, theta: float) -> float:
    """Scalar coefficient of ``a`` in ``A2 @ R(theta) @ (a, 0)``."""
    A2 = np.asarray(A2, dtype=float).reshape(2)
    return float(A2[0] * math.cos(theta) + A2[1] * math.sin(theta))


def ramp_layout(
    merge_point=(0.0, 0.0),
    main_heading_deg: float = 0.0,
    main_before_m: float = 300.0,
    main_after_m: float = 500.0,
    ramp_length_m: float = 200.0,
    merge_angle_deg: float = 10.0,
) -> tuple[LanePath, LanePath]:
    """Straight main road plus a straight ramp joining it at ``merge_point``.

    The ramp approaches from the right of the main direction at
    ``merge_angle_deg`` and continues along the main road after the merge
    point. Returns ``(main, ramp)``.
    """
    if not 0.0 < merge_angle_deg < 90.0:
        raise ValueError("merge_angle_deg must be in (0, 90)")
    mp = np.asarray(merge_point, dtype=float)
    th = math.radians(main_heading_deg)
    fwd = np.array([math.cos(th), math.sin(th)])
    ramp_th = th + math.radians(merge_angle_deg)
    ramp_dir = np.array([math.cos(ramp_th), math.sin(ramp_th)])
    main = LanePath(np.array([mp - main_before_m * fwd, mp + main_after_m * fwd]), mp)
    ramp = LanePath(
        np.array([mp - ramp_length_m * ramp_dir, mp, mp + main_after_m * fwd]), mp
    )
    return main, ramp
