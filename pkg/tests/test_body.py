import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import sparse

from avatarforge.body import (
    BodyModel,
    Pose,
    apply_pose,
    apply_shape,
    kinematic_order,
    load_beta,
    load_body_model,
    load_pose,
    regress_joints,
    save_body_model,
    skin_vertices,
)
from avatarforge.errors import DimensionMismatchError, MissingJointError, ModelFormatError
from avatarforge.mesh import Mesh


def cube_model(regressor=None):
    """8-vertex cube, two shape modes, one root joint and one child."""
    v = np.array([[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)])
    f = np.array([[0, 1, 3], [0, 3, 2]])
    rng = np.random.default_rng(3)
    basis = rng.normal(size=(2, 8, 3))
    if regressor is None:
        regressor = np.zeros((2, 8))
        regressor[0, 0] = 1.0
        regressor[1, [4, 5, 6, 7]] = 0.25
    weights = np.zeros((8, 2))
    weights[:4, 0] = 1.0
    weights[4:, 1] = 1.0
    return BodyModel(Mesh(v, f), basis, sparse.csr_matrix(regressor), [-1, 0], weights, ("root", "child"))


def test_zero_beta_is_template(body_model):
    out = apply_shape(body_model, np.zeros(body_model.n_betas))
    np.testing.assert_array_equal(out.vertices, body_model.template.vertices)


def test_unit_beta_adds_first_basis(body_model):
    beta = np.zeros(body_model.n_betas)
    beta[0] = 1.0
    out = apply_shape(body_model, beta)
    np.testing.assert_allclose(out.vertices, body_model.template.vertices + body_model.shape_basis[0], atol=1e-15)


def test_shape_matches_vertex_loop():
    model = cube_model()
    beta = [0.5, -0.5]
    expected = np.zeros((8, 3))
    for v in range(8):
        for k in range(2):
            for c in range(3):
                expected[v, c] += beta[k] * model.shape_basis[k, v, c]
        expected[v] += model.template.vertices[v]
    np.testing.assert_allclose(apply_shape(model, beta).vertices, expected, atol=1e-14)


def test_wrong_beta_length(body_model):
    with pytest.raises(DimensionMismatchError):
        apply_shape(body_model, np.zeros(body_model.n_betas + 1))


def test_regressor_examples():
    model = cube_model()
    joints = regress_joints(model, model.template)
    np.testing.assert_array_equal(joints[0], model.template.vertices[0])
    np.testing.assert_allclose(joints[1], model.template.vertices[4:].mean(axis=0))


def test_regressor_matches_dense_multiply():
    rng = np.random.default_rng(11)
    dense = np.where(rng.random((2, 8)) < 0.4, rng.random((2, 8)), 0.0)
    model = cube_model(dense)
    shaped = apply_shape(model, [0.3, 0.7])
    expected = np.array([[sum(dense[j, v] * shaped.vertices[v, c] for v in range(8)) for c in range(3)]
                         for j in range(2)])
    np.testing.assert_allclose(regress_joints(model, shaped), expected, atol=1e-13)


def test_pose_identity_and_translation(body_model):
    shaped = apply_shape(body_model, [0.4, -0.2])
    rest = apply_pose(body_model, shaped, Pose.rest(body_model.n_joints))
    np.testing.assert_allclose(rest.vertices, shaped.vertices, atol=1e-9)
    moved = apply_pose(body_model, shaped, Pose(np.zeros((body_model.n_joints, 3)), [0, 0, 1]))
    np.testing.assert_allclose(moved.vertices - shaped.vertices, np.tile([0, 0, 1.0], (shaped.n_vertices, 1)), atol=1e-12)


def test_single_joint_quarter_turn():
    out = skin_vertices([[1.0, 0.0, 0.0]], [[0.0, 0.0, 0.0]], [-1], [[1.0]], Pose([[0, 0, np.pi / 2]]))
    np.testing.assert_allclose(out, [[0.0, 1.0, 0.0]], atol=1e-9)


def test_child_rotation_composes_with_parent():
    joints = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    theta = np.array([[0, 0, np.pi / 2], [0, 0, np.pi / 2]])
    out = skin_vertices([[2.0, 0.0, 0.0]], joints, [-1, 0], [[0.0, 1.0]], Pose(theta))
    # Parent turns the arm to +y, child folds it back to -x.
    np.testing.assert_allclose(out, [[-1.0, 1.0, 0.0]], atol=1e-12)


def test_pose_joint_count_mismatch(body_model):
    with pytest.raises(DimensionMismatchError):
        apply_pose(body_model, body_model.template, Pose.rest(body_model.n_joints + 1))


@given(arrays(np.float64, (4, 3), elements=st.floats(-np.pi, np.pi)))
@settings(max_examples=30, deadline=None)
def test_rigid_regions_keep_distances(body_model, theta):
    shaped = body_model.template
    posed = apply_pose(body_model, shaped, Pose(theta))
    for j in range(body_model.n_joints):
        idx = np.flatnonzero(body_model.weights[:, j] == 1.0)[:40]
        if len(idx) < 2:
            continue
        a = shaped.vertices[idx]
        b = posed.vertices[idx]
        da = np.linalg.norm(a[:, None] - a[None], axis=-1)
        db = np.linalg.norm(b[:, None] - b[None], axis=-1)
        np.testing.assert_allclose(db, da, atol=1e-6)


def test_kinematic_order_rejects_bad_trees():
    assert kinematic_order([-1, 0, 0, 1]) == [0, 1, 3, 2]
    with pytest.raises(ModelFormatError):
        kinematic_order([-1, -1])
    with pytest.raises(ModelFormatError):
        kinematic_order([-1, 2, 1])


def test_weights_must_sum_to_one():
    model = cube_model()
    with pytest.raises(ModelFormatError):
        BodyModel(model.template, model.shape_basis, model.joint_regressor, [-1, 0], model.weights * 0.5)


def test_head_joint_lookup(body_model):
    assert body_model.joint_names[body_model.head_joint_index] == "head"
    with pytest.raises(MissingJointError):
        body_model.joint_index("tail")


def test_model_round_trip(tmp_path, full_model):
    save_body_model(full_model, tmp_path / "m.json")
    back = load_body_model(tmp_path / "m.json")
    np.testing.assert_allclose(back.template.vertices, full_model.template.vertices, atol=1e-9)
    np.testing.assert_allclose(back.shape_basis, full_model.shape_basis, atol=1e-9)
    np.testing.assert_allclose(back.weights, full_model.weights, atol=1e-12)
    assert (back.joint_regressor != full_model.joint_regressor).nnz == 0
    assert back.landmarks == full_model.landmarks
    assert set(back.template.groups) == {"neck_seam", "neck_top_ring"}


def test_corrupt_model_file(tmp_path):
    (tmp_path / "m.json").write_text("{not json")
    with pytest.raises(ModelFormatError):
        load_body_model(tmp_path / "m.json")


def test_beta_and_pose_files(tmp_path):
    (tmp_path / "b.json").write_text(json.dumps({"beta": [1, 2]}))
    np.testing.assert_array_equal(load_beta(tmp_path / "b.json", 2), [1, 2])
    with pytest.raises(DimensionMismatchError):
        load_beta(tmp_path / "b.json", 3)
    (tmp_path / "p.json").write_text(json.dumps(Pose(np.ones((2, 3)), [0, 1, 0]).to_dict()))
    pose = load_pose(tmp_path / "p.json")
    np.testing.assert_array_equal(pose.gamma, [0, 1, 0])
