import json

import numpy as np
import pytest

from avatarforge.cli import main
from avatarforge.garment import SignedDistance
from avatarforge.mesh import is_watertight, load_mesh, save_mesh
from avatarforge.pipeline import load_avatar, load_config
from avatarforge.synthetic import make_head, misalign


def run(*argv):
    return main([str(a) for a in argv])


def sha(path):
    import hashlib

    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def avatar(tmp_path_factory, samples):
    out = tmp_path_factory.mktemp("pipe") / "avatar"
    assert run("reconstruct", "--config", samples / "config.json", "--output-dir", out) == 0
    assert run("fit", "--avatar", out, "--garment", "tshirt_a") == 0
    return out


def private_config(tmp_path, samples, **changes):
    doc = json.loads((samples / "config.json").read_text())
    for key in ("body_model_path", "beta_path", "head_mesh_path", "head_texture_path",
                "head_manifest_path", "garment_library_dir"):
        doc[key] = str(samples / doc[key])
    doc.update(changes)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def test_reconstruct_outputs(avatar):
    for name in ("avatar.obj", "avatar.weights.json", "avatar_head.png", "avatar_body.png", "report.json"):
        assert (avatar / name).is_file(), name
    report = json.loads((avatar / "report.json").read_text())
    assert report["alignment"]["iterations"] > 0
    assert set(report["alignment"]["errors"]) == {"E_x", "E_y", "E_z"}
    assert report["census"]["bridge_faces"] == report["census"]["body_loop_length"] + report["census"]["head_loop_length"]
    assert report["seam_boundary_edges"] == 0
    assert is_watertight(load_mesh(avatar / "avatar.obj"))


def test_head_texture_seam_fades_to_body_color(avatar):
    from avatarforge.texture import load_image

    report = json.loads((avatar / "report.json").read_text())
    body = load_image(avatar / "avatar_body.png").pixels
    head = load_image(avatar / "avatar_head.png").pixels
    assert np.all(body == report["skin_color"])
    assert report["blended_texels"] > 0
    assert head.shape[2] == 3


def test_corrupt_obj_exits_2(tmp_path, samples, capsys):
    bad = tmp_path / "head.obj"
    bad.write_text("v 0 0 0\nv 1 0 0\nf 1 2 9\n")
    cfg = private_config(tmp_path, samples, head_mesh_path=str(bad), head_manifest_path=None)
    assert run("reconstruct", "--config", cfg, "--output-dir", tmp_path / "o") == 2
    assert "head.obj:3: face index 9 out of range" in capsys.readouterr().err


def test_missing_input_exits_2(tmp_path, samples):
    cfg = private_config(tmp_path, samples, beta_path=str(tmp_path / "none.json"))
    assert run("reconstruct", "--config", cfg, "--output-dir", tmp_path / "o") == 2


def test_non_convergence_exits_3_with_report(tmp_path, samples):
    out = tmp_path / "o"
    assert run("reconstruct", "--config", samples / "config.json", "--output-dir", out, "--max-iters", 1) == 3
    report = json.loads((out / "report.json").read_text())
    assert report["alignment"]["iterations"] == 1
    assert set(report["alignment"]["errors"]) == {"E_x", "E_y", "E_z"}
    assert not (out / "avatar.obj").exists()


def test_stitch_failure_exits_4(tmp_path, samples):
    head = make_head()
    groups = dict(head.groups)
    # A second cut patch around the top pole leaves two seam loops.
    groups["head_cut"] = np.concatenate([groups["head_cut"], np.arange(0, 1 + 32)])
    head = misalign(head.replace(groups=groups), (2.0, 3.0, -2.0))
    save_mesh(head, tmp_path / "head.obj")
    cfg = private_config(tmp_path, samples, head_mesh_path=str(tmp_path / "head.obj"), head_manifest_path=None)
    out = tmp_path / "o"
    assert run("reconstruct", "--config", cfg, "--output-dir", out) == 4
    assert json.loads((out / "report.json").read_text())["status"] == "stitch_failed"


def test_flags_override_config(samples):
    cfg = load_config(samples / "config.json", weight_form="literal", tol=1e-3)
    assert cfg.alignment.weight_form == "literal"
    assert cfg.alignment.tol == 1e-3
    assert cfg.alignment.max_iters == 500


def test_fit_output_clears_body(avatar):
    garment = load_mesh(avatar / "avatar_tshirt_a.obj")
    body = load_mesh(avatar / "avatar.obj")
    eps = json.loads((avatar / "avatar.json").read_text())["epsilon"]
    sd = SignedDistance(body).signed_distance(garment.vertices)
    assert np.sum(sd < eps / 2) == 0
    report = json.loads((avatar / "fit_tshirt_a.json").read_text())
    assert report["clearance_warnings"] == []


def test_second_garment_leaves_avatar_untouched(avatar):
    before = {p.name: sha(p) for p in avatar.glob("avatar.*")}
    assert run("fit", "--avatar", avatar, "--garment", "skirt_a") == 0
    assert {p.name: sha(p) for p in avatar.glob("avatar.*")} == before
    assert (avatar / "avatar_skirt_a.obj").is_file()


def test_fit_map_is_cached(avatar):
    assert (avatar / "fitmaps" / "tshirt_a.json").is_file()
    run("fit", "--avatar", avatar, "--garment", "tshirt_a")
    assert json.loads((avatar / "fit_tshirt_a.json").read_text())["fit_map"] == "cache"


def test_unknown_garment_exits_2(avatar):
    assert run("fit", "--avatar", avatar, "--garment", "ball_gown") == 2


def test_rest_pose_frame_matches_avatar(avatar, tmp_path):
    n = load_avatar(avatar).n_joints
    (tmp_path / "rest.json").write_text(json.dumps({"theta": [[0, 0, 0]] * n}))
    assert run("pose", "--avatar", avatar, "--poses", tmp_path / "rest.json", "--out", tmp_path / "f") == 0
    frame = load_mesh(tmp_path / "f" / "frame_0000.obj")
    rest = load_mesh(avatar / "avatar.obj")
    np.testing.assert_allclose(frame.vertices, rest.vertices, atol=1e-6)
    np.testing.assert_array_equal(frame.faces, rest.faces)


def test_joint_count_mismatch_exits_2(avatar, tmp_path):
    (tmp_path / "bad.json").write_text(json.dumps({"theta": [[0, 0, 0]] * 3}))
    assert run("pose", "--avatar", avatar, "--poses", tmp_path / "bad.json", "--out", tmp_path / "f") == 2


def test_sleeves_follow_raised_arm(avatar, tmp_path, samples):
    assert run("pose", "--avatar", avatar, "--poses", samples / "poses" / "arm_raise.json", "--out", tmp_path / "f") == 0
    av = load_avatar(avatar)
    rest_body = av.mesh.vertices
    rest_shirt = load_mesh(avatar / "avatar_tshirt_a.obj").vertices
    body = load_mesh(tmp_path / "f" / "frame_0000.obj").vertices
    shirt = load_mesh(tmp_path / "f" / "frame_0000_tshirt_a.obj").vertices
    for side, sign in (("shoulder_l", 1), ("shoulder_r", -1)):
        j = av.joint_names.index(side)
        arm = av.weights[:, j] == 1.0
        arm_move = (body - rest_body)[arm].mean(axis=0)
        sleeve = sign * rest_shirt[:, 0] > 0.25
        assert sleeve.sum() > 10
        dots = (shirt - rest_shirt)[sleeve] @ arm_move
        assert np.all(dots > 0)


def test_interpolated_head_turn_is_monotone(avatar, tmp_path, samples):
    out = tmp_path / "f"
    assert run("pose", "--avatar", avatar, "--poses", samples / "poses" / "head_turn.json", "--out", out, "--frames", 10) == 0
    av = load_avatar(avatar)
    j = av.joint_names.index("head")
    rigid = np.flatnonzero(av.weights[:, j] == 1.0)
    center = av.joints[j]
    rest = av.mesh.vertices[rigid] - center
    keep = np.hypot(rest[:, 0], rest[:, 2]) > 0.02
    rest = rest[keep]
    angles = []
    for k in range(10):
        v = load_mesh(out / f"frame_{k:04d}.obj").vertices[rigid][keep] - center
        turn = np.arctan2(rest[:, 2] * v[:, 0] - rest[:, 0] * v[:, 2], rest[:, 0] * v[:, 0] + rest[:, 2] * v[:, 2])
        angles.append(np.degrees(turn))
    angles = np.array(angles)
    assert np.all(np.diff(angles, axis=0) > 0)
    np.testing.assert_allclose(angles[0], 0.0, atol=1e-5)
    np.testing.assert_allclose(angles[-1], 30.0, atol=1e-4)


def test_pose_does_not_touch_avatar(avatar, tmp_path, samples):
    before = {p.name: sha(p) for p in avatar.iterdir() if p.is_file()}
    run("pose", "--avatar", avatar, "--poses", samples / "poses" / "arm_raise.json", "--out", tmp_path / "f")
    assert {p.name: sha(p) for p in avatar.iterdir() if p.is_file()} == before


def test_samples_command_is_deterministic(tmp_path, samples):
    assert run("samples", "--out", tmp_path / "s") == 0
    for path in sorted(samples.rglob("*")):
        if path.is_file():
            assert sha(path) == sha(tmp_path / "s" / path.relative_to(samples)), path.name
