import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from safemerge.geometry import (
    LanePath,
    PathRangeError,
    heading_at,
    pose_at,
    project_control,
    project_to_path,
    ramp_layout,
    reduce_constraint,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
angles = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False)


def path(*pts):
    pts = np.asarray(pts, dtype=float)
    return LanePath(pts, pts[0])


@pytest.mark.parametrize(
    "pts, s, pos, theta",
    [
        ([(0, 0), (100, 0)], 10, (10, 0), 0.0),
        ([(0, 0), (0, 50)], 5, (0, 5), math.pi / 2),
        ([(0, 0), (10, 0), (10, 10)], 15, (10, 5), math.pi / 2),
    ],
)
def test_pose_at_examples(pts, s, pos, theta):
    p, th = pose_at(path(*pts), s)
    np.testing.assert_allclose(p, pos, atol=1e-12)
    assert th == pytest.approx(theta, abs=1e-12)


@pytest.mark.parametrize("s", [-0.1, 100.5])
def test_pose_at_out_of_range_names_interval(s):
    with pytest.raises(PathRangeError, match=r"\[0, 100"):
        pose_at(path((0, 0), (100, 0)), s)


def test_pose_at_extrapolates_along_end_segments():
    p = path((0, 0), (10, 0), (10, 10))
    np.testing.assert_allclose(pose_at(p, 25, extrapolate=True)[0], (10, 15))
    np.testing.assert_allclose(pose_at(p, -5, extrapolate=True)[0], (-5, 0))


@pytest.mark.parametrize(
    "theta, a, expected",
    [(0.0, 2.0, (2, 0)), (math.pi / 2, 3.0, (0, 3)), (math.pi / 4, math.sqrt(2), (1, 1))],
)
def test_project_control_examples(theta, a, expected):
    np.testing.assert_allclose(project_control(theta, a), expected, atol=1e-12)


@pytest.mark.parametrize(
    "A2, theta, expected",
    [((-2, 0), 0.0, -2.0), ((0, -2), math.pi / 2, -2.0), ((1, 1), math.pi / 4, math.sqrt(2))],
)
def test_reduce_constraint_examples(A2, theta, expected):
    assert reduce_constraint(A2, theta) == pytest.approx(expected, abs=1e-12)


@given(angles, finite)
def test_project_control_preserves_magnitude(theta, a):
    assert np.linalg.norm(project_control(theta, a)) == pytest.approx(abs(a), abs=1e-12, rel=1e-12)


@given(finite, finite, angles, finite)
def test_reduce_constraint_matches_matrix_product(a1, a2, theta, a):
    A2 = np.array([a1, a2])
    lhs = reduce_constraint(A2, theta) * a
    rhs = A2 @ project_control(theta, a)
    assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(a) * np.abs(A2).sum()))


@given(st.floats(0, 20), st.floats(0, 1))
def test_pose_at_is_lipschitz(s, frac):
    p = path((0, 0), (10, 0), (10, 10), (20, 20))
    i = int(np.searchsorted(p.cumulative, s, side="right")) - 1
    seg_end = p.cumulative[min(i + 1, p.n_segments)]
    d = frac * (seg_end - s)
    a, _ = pose_at(p, s)
    b, _ = pose_at(p, s + d)
    assert np.linalg.norm(b - a) <= d + 1e-9


def test_lane_path_rejects_bad_input():
    with pytest.raises(ValueError, match="distinct"):
        path((0, 0), (0, 0), (1, 0))
    with pytest.raises(ValueError, match="off the path"):
        LanePath(np.array([[0.0, 0.0], [10.0, 0.0]]), np.array([5.0, 1.0]))


def test_project_to_path_round_trip():
    p = path((0, 0), (10, 0), (10, 10))
    for s in (0.0, 3.5, 10.0, 14.2, 20.0):
        assert project_to_path(p, pose_at(p, s)[0]) == pytest.approx(s, abs=1e-9)


@pytest.mark.parametrize("angle", [5.0, 10.0, 30.0])
def test_ramp_layout_meets_main_at_merge_point(angle):
    main, ramp = ramp_layout(merge_point=(3.0, -1.0), merge_angle_deg=angle)
    np.testing.assert_allclose(pose_at(main, main.merge_s)[0], (3, -1), atol=1e-9)
    np.testing.assert_allclose(pose_at(ramp, ramp.merge_s)[0], (3, -1), atol=1e-9)
    assert heading_at(ramp, ramp.merge_s - 1) == pytest.approx(math.radians(angle))
    # after the merge point the ramp runs along the main road
    assert heading_at(ramp, ramp.merge_s + 1) == pytest.approx(0.0)
