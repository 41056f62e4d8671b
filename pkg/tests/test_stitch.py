from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avatarforge.body import Pose, regress_joints, skin_vertices
from avatarforge.errors import LoopsInterpenetrateError, MissingJointError, StitchError
from avatarforge.mesh import Mesh, boundary_loops, check_edge_manifold, is_watertight
from avatarforge.stitch import (
    SeamBand,
    band_ramp,
    bridge_loops,
    read_weights,
    save_combined,
    seam_boundary_edges,
    transfer_skin_weights,
)
from helpers import assemble, random_pair


def circle(n, radius=1.0, y=0.0, phase=0.0, reverse=False):
    t = phase + 2 * np.pi * np.arange(n) / n
    if reverse:
        t = -t
    return np.column_stack([radius * np.cos(t), np.full(n, y), radius * np.sin(t)])


def band_mesh(a, b):
    tris = bridge_loops(a, b)
    return Mesh(np.vstack([a, b]), tris), tris


def check_annulus(a, b):
    n, m = len(a), len(b)
    mesh, tris = band_mesh(a, b)
    assert len(tris) == n + m
    check_edge_manifold(mesh)
    directed = Counter((int(t[k]), int(t[(k + 1) % 3])) for t in tris for k in range(3))
    assert max(directed.values()) == 1, "band is not consistently oriented"
    loops = sorted(len(lp) for lp in boundary_loops(mesh))
    assert loops == sorted([n, m])
    # Every band edge that is not on a loop is shared by two triangles.
    undirected = Counter(tuple(sorted(e)) for e in directed)
    rungs = [e for e in undirected if (e[0] < n) != (e[1] < n)]
    assert all(undirected[e] == 2 for e in rungs)


def test_parallel_squares():
    check_annulus(circle(4), circle(4, y=1.0))


@pytest.mark.parametrize("n,m", [(3, 3), (4, 6), (32, 24), (7, 31)])
def test_annulus_face_counts(n, m):
    check_annulus(circle(n), circle(m, radius=0.7, y=0.3, phase=0.4))


def test_opposite_winding_is_handled():
    check_annulus(circle(8), circle(10, y=0.5, reverse=True))


def test_coplanar_concentric_loops():
    check_annulus(circle(12), circle(9, radius=0.6))


@given(st.integers(3, 40), st.integers(3, 40), st.floats(0.2, 3.0), st.floats(0.05, 2.0), st.floats(0, 6.3))
@settings(max_examples=60, deadline=None)
def test_bridge_is_an_annulus(n, m, radius, height, phase):
    check_annulus(circle(n), circle(m, radius=radius, y=height, phase=phase))


def test_folded_loop_is_rejected():
    a = circle(8)
    b = circle(8, y=0.5)[[0, 2, 1, 3, 4, 5, 6, 7]]
    with pytest.raises(LoopsInterpenetrateError):
        bridge_loops(a, b)


def test_tiny_loops_rejected():
    with pytest.raises(ValueError):
        bridge_loops(circle(2), circle(5))


def test_weight_transfer_examples():
    # Body vertices 0, 1 (neck); band 2 (body edge), 3 (middle), 4 (head edge); head vertex 5.
    positions = np.array([[0, 0.0, 0], [0, 0.5, 0], [0, 1.0, 0], [0, 1.5, 0], [0, 2.0, 0], [0, 5.0, 0]])
    body_pos = positions[:3]
    body_w = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
    prov = np.array(["body", "body", "bridge", "bridge", "head", "head"])
    band = SeamBand(np.array([2, 3, 4]), np.array([2]), np.array([4]))
    w = transfer_skin_weights(positions, prov, body_pos, body_w, 2, band)
    np.testing.assert_array_equal(w[5], [0, 0, 1])
    np.testing.assert_allclose(w[2], body_w[2], atol=1e-9)
    np.testing.assert_allclose(w[3], [0, 0.5, 0.5], atol=1e-9)
    np.testing.assert_allclose(w[4], [0, 0, 1], atol=1e-9)
    np.testing.assert_array_equal(w[0], body_w[0])
    assert band_ramp(positions, band).tolist() == [0.0, 0.5, 1.0]
    with pytest.raises(MissingJointError):
        transfer_skin_weights(positions, prov, body_pos, body_w, 7, band)


@pytest.fixture(scope="module")
def stitched():
    model, shaped, head = random_pair(0)
    return (model, shaped, head) + assemble(model, shaped, head)


def test_stitch_census(stitched):
    model, shaped, head, combined, body_loops, head_loops, n, m = stitched
    assert combined.n_bridge_faces == n + m
    assert seam_boundary_edges(combined) == []
    assert len(boundary_loops(combined.mesh)) == body_loops + head_loops - 2
    assert is_watertight(combined.mesh)
    check_edge_manifold(combined.mesh)
    assert combined.census["bridge_faces"] == n + m


def test_stitch_weights_are_partition_of_unity(stitched):
    combined = stitched[3]
    np.testing.assert_allclose(combined.weights.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(combined.weights >= 0)


def posed(stitched, theta):
    model, shaped, _, combined = stitched[:4]
    joints = regress_joints(model, shaped)
    return skin_vertices(combined.mesh.vertices, joints, model.parents, combined.weights, Pose(theta))


def test_rest_pose_is_identity(stitched):
    model, combined = stitched[0], stitched[3]
    out = posed(stitched, np.zeros((model.n_joints, 3)))
    np.testing.assert_allclose(out, combined.mesh.vertices, atol=1e-12)


def test_head_turn_moves_head_rigidly(stitched):
    model, combined = stitched[0], stitched[3]
    theta = np.zeros((model.n_joints, 3))
    theta[model.head_joint_index] = [0, np.radians(30), 0]
    out = posed(stitched, theta)
    idx = np.flatnonzero(combined.provenance == "head")
    before = combined.mesh.vertices[idx]
    after = out[idx]
    d0 = np.linalg.norm(before[:, None] - before[None], axis=-1)
    d1 = np.linalg.norm(after[:, None] - after[None], axis=-1)
    np.testing.assert_allclose(d1, d0, atol=1e-6)
    assert np.abs(after - before).max() > 1e-3


def test_save_combined_round_trip(tmp_path, stitched):
    combined = stitched[3]
    wpath = save_combined(combined, tmp_path / "avatar.obj")
    weights, prov = read_weights(wpath)
    np.testing.assert_allclose(weights, combined.weights, atol=1e-11)
    assert prov.tolist() == combined.provenance.tolist()


def test_non_finite_alignment_rejected(stitched):
    from avatarforge.stitch import stitch

    model, shaped, head = stitched[:3]
    with pytest.raises(StitchError):
        stitch(shaped, head, [np.nan, 0, 0], [0, 0, 0], model)
