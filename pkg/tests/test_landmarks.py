import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rcnn_fer.landmarks import (PROFILE_LENGTH, LandmarkError, LandmarkSet, flat_profile, normalize_face,
                                profile_features, read_sidecar, template_face, write_sidecar)


def similarity(points, angle, scale, shift):
    c, s = np.cos(angle), np.sin(angle)
    return points @ np.array([[c, -s], [s, c]]).T * scale + shift


def canonical():
    return normalize_face(template_face())


def test_canonical_is_fixed_point():
    c = canonical()
    np.testing.assert_allclose(normalize_face(c).points, c.points, atol=1e-12)


def test_rotation_translation_recovered():
    c = canonical()
    moved = LandmarkSet(similarity(c.points, np.deg2rad(30), 1.0, np.array([40.0, -17.0])))
    np.testing.assert_allclose(normalize_face(moved).points, c.points, atol=1e-6)


def test_scale_recovered():
    c = canonical()
    np.testing.assert_allclose(normalize_face(LandmarkSet(c.points * 3)).points, c.points, atol=1e-6)


def test_normalized_frame():
    p = canonical().points
    np.testing.assert_allclose(p[27:36].mean(axis=0), 0, atol=1e-12)
    bridge = p[30] - p[27]
    assert abs(bridge[0]) < 1e-12 and bridge[1] < 0
    assert abs(np.linalg.norm(p[45] - p[36]) - 1) < 1e-12


def test_degenerate_bridge():
    p = template_face().points.copy()
    p[30] = p[27]
    with pytest.raises(LandmarkError, match="28 and 31"):
        normalize_face(LandmarkSet(p))


def test_invalid_sets():
    with pytest.raises(LandmarkError):
        LandmarkSet(np.zeros((67, 2)))
    p = template_face().points.copy()
    p[45] = p[36]
    with pytest.raises(LandmarkError):
        LandmarkSet(p)


def _profile_of(point):
    p = template_face().points.copy()
    p[0] = point
    return profile_features(LandmarkSet(p))[0]


@pytest.mark.parametrize("point,row", [((0, 0), (0, 0, 0, 0)), ((1, 0), (1, 0, 1, 0)),
                                       ((0, 1), (0, 1, 1, np.pi / 2))])
def test_profile_rows(point, row):
    np.testing.assert_allclose(_profile_of(point), row, atol=1e-15)


def test_profile_shape_and_radius():
    prof = profile_features(canonical())
    assert prof.shape == (68, 4)
    np.testing.assert_allclose(prof[:, 2], np.hypot(prof[:, 0], prof[:, 1]), atol=1e-12)
    assert np.all(prof[:, 3] > -np.pi) and np.all(prof[:, 3] <= np.pi)
    assert flat_profile(template_face()).shape == (PROFILE_LENGTH,) == (272,)


@settings(max_examples=50, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(0.05, 20), st.floats(-500, 500), st.floats(-500, 500))
def test_profile_similarity_invariant(angle, scale, dx, dy):
    base = flat_profile(template_face())
    moved = LandmarkSet(similarity(template_face().points, angle, scale, np.array([dx, dy])))
    diff = np.abs(flat_profile(moved) - base)
    # angles near +-pi may wrap; compare them on the circle
    ang = diff.reshape(68, 4)[:, 3]
    diff.reshape(68, 4)[:, 3] = np.minimum(ang, 2 * np.pi - ang)
    assert diff.max() <= 1e-6


def test_sidecar_round_trip(tmp_path):
    face = template_face()
    write_sidecar(face, tmp_path / "f.lm")
    np.testing.assert_allclose(read_sidecar(tmp_path / "f.lm").points, face.points, atol=1e-6)


def test_sidecar_errors(tmp_path):
    path = tmp_path / "bad.lm"
    path.write_text("1 2.0 3.0\n")
    with pytest.raises(LandmarkError, match="expected 68"):
        read_sidecar(path)
    path.write_text("1 2.0\n")
    with pytest.raises(LandmarkError, match=":1:"):
        read_sidecar(path)
