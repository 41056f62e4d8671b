"""Deterministic synthetic assets: body model, head, textures and garments.

The bundled sample assets under ``avatarforge/data/sample`` are produced by
:func:`write_sample_assets`.  Everything here is y-up, +z facing forward,
+x toward the body's left, in meters.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy import sparse

from .align import correction_matrix
from .body import BodyModel, save_body_model
from .mesh import Mesh, save_mesh
from .texture import Image, save_image

TORSO_SEGMENTS = 32

# (height, x-radius, z-radius) rings of the torso/neck/head-stub lathe.
_HEMI = [
    (0.15 - 0.15 * np.cos(k * np.pi / 10), 0.15 * np.sin(k * np.pi / 10), 0.1125 * np.sin(k * np.pi / 10))
    for k in range(1, 5)
]
BODY_RINGS = _HEMI + [
    (0.15, 0.15, 0.1125),
    (0.25, 0.15, 0.1125),
    (0.35, 0.15, 0.1125),
    (0.45, 0.15, 0.1125),
    (0.55, 0.15, 0.1125),
    (0.60, 0.13, 0.10),
    (0.64, 0.09, 0.08),
    (0.67, 0.06, 0.06),
    (0.70, 0.055, 0.055),  # neck_seam
    (0.73, 0.055, 0.055),  # neck_top_ring
    (0.76, 0.07, 0.07),
    (0.80, 0.09, 0.09),
    (0.85, 0.085, 0.085),
    (0.89, 0.05, 0.05),
]
BODY_BOTTOM = 0.0
BODY_TOP = 0.91
NECK_SEAM_RING = 12
NECK_TOP_RING = 13

ARM_Y = 0.50
ARM_RADIUS = 0.045
ARM_START = 0.215  # x of the inner cap centre
ARM_END = 0.62


def lathe(profile, n_seg, origin=(0, 0, 0), axis=(0, 1, 0), side=(1, 0, 0), front=(0, 0, 1),
          bottom=None, top=None):
    """Rings of an elliptic surface of revolution.

    ``profile`` rows are ``(h, r_side, r_front)``; ring vertex ``j`` sits at
    angle ``2*pi*j/n_seg`` measured from ``front`` toward ``side``.  Optional
    pole heights close the ends.  Returns vertices, faces (outward facing)
    and the vertex indices of every ring.
    """
    origin, axis, side, front = (np.asarray(v, dtype=float) for v in (origin, axis, side, front))
    phi = 2.0 * np.pi * np.arange(n_seg) / n_seg
    verts, rings = [], []
    if bottom is not None:
        verts.append(origin + bottom * axis)
    for h, rs, rf in profile:
        start = len(verts)
        for p in phi:
            verts.append(origin + h * axis + rs * np.sin(p) * side + rf * np.cos(p) * front)
        rings.append(np.arange(start, start + n_seg))
    if top is not None:
        verts.append(origin + top * axis)
    faces = []
    for r0, r1 in zip(rings[:-1], rings[1:]):
        for j in range(n_seg):
            k = (j + 1) % n_seg
            faces.append((r0[j], r0[k], r1[k]))
            faces.append((r0[j], r1[k], r1[j]))
    if bottom is not None:
        for j in range(n_seg):
            faces.append((0, rings[0][(j + 1) % n_seg], rings[0][j]))
    if top is not None:
        t = len(verts) - 1
        for j in range(n_seg):
            faces.append((t, rings[-1][j], rings[-1][(j + 1) % n_seg]))
    verts = np.array(verts)
    faces = np.array(faces, dtype=np.int64)
    # Orient outward: face normals should point away from the axis.
    tri = verts[faces]
    normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    rel = tri.mean(axis=1) - origin
    radial = rel - np.outer(rel @ axis, axis)
    if np.sum(np.einsum("ij,ij->i", normal, radial)) < 0:
        faces = faces[:, [0, 2, 1]]
    return verts, faces, rings


# ---------------------------------------------------------------------------
# body


def _torso_weights(y):
    """pelvis, spine, neck, head weights by height."""
    def ramp(v, a, b):
        return float(np.clip((v - a) / (b - a), 0.0, 1.0))

    to_spine = ramp(y, 0.15, 0.45)
    to_neck = ramp(y, 0.62, 0.68)
    to_head = ramp(y, 0.74, 0.78)
    w_head = to_head
    w_neck = to_neck * (1 - to_head)
    w_spine = to_spine * (1 - to_neck)
    w_pelvis = (1 - to_spine) * (1 - to_neck)
    return [w_pelvis, w_spine, w_neck, w_head]


def _mode_profile(k, y):
    """Radial scale factor of shape mode ``k >= 2`` at height ``y``."""
    return 0.05 * np.cos(k * np.pi * y / BODY_TOP + 0.3 * k)


def make_body_model(n_betas=10, with_arms=True, segments=TORSO_SEGMENTS, arm_segments=16) -> BodyModel:
    """Capsule torso with neck and head stub; optional T-pose capsule arms.

    Joints: pelvis, spine, neck, head (+ shoulder_l, shoulder_r).  Shape
    modes: 0 height, 1 girth, then small smooth radial modes.
    """
    if segments % 4:
        raise ValueError("segments must be a multiple of 4")
    if n_betas < 2:
        raise ValueError("the synthetic model needs at least 2 shape coefficients")
    verts, faces, rings = lathe(BODY_RINGS, segments, bottom=BODY_BOTTOM, top=BODY_TOP)
    n_torso = len(verts)
    parts = [(verts, faces)]
    arm_rings = {}
    if with_arms:
        n_cap = 4
        cap = [(-ARM_RADIUS * np.cos(k * np.pi / (2 * n_cap)), ARM_RADIUS * np.sin(k * np.pi / (2 * n_cap)))
               for k in range(1, n_cap)]
        length = ARM_END - ARM_START
        body_rows = [(0.0, ARM_RADIUS)] + [(length * t, ARM_RADIUS) for t in (0.25, 0.5, 0.75)] + [(length, ARM_RADIUS)]
        tail = [(length - h, r) for h, r in reversed(cap)]
        profile = [(h, r, r) for h, r in cap + body_rows + tail]
        for side, sign in (("l", 1.0), ("r", -1.0)):
            origin = (sign * ARM_START, ARM_Y, 0.0)
            av, af, ar = lathe(profile, arm_segments, origin=origin, axis=(sign, 0, 0), side=(0, 1, 0),
                               front=(0, 0, 1), bottom=-ARM_RADIUS, top=length + ARM_RADIUS)
            offset = sum(len(p[0]) for p in parts)
            arm_rings[side] = (offset, offset + len(av), [r + offset for r in ar])
            parts.append((av, af + offset))
    V = np.concatenate([p[0] for p in parts])
    F = np.concatenate([p[1] for p in parts])
    nV = len(V)

    joint_names = ["pelvis", "spine", "neck", "head"]
    parents = [-1, 0, 1, 2]
    if with_arms:
        joint_names += ["shoulder_l", "shoulder_r"]
        parents += [1, 1]
    J = len(parents)

    weights = np.zeros((nV, J))
    for v in range(n_torso):
        weights[v, :4] = _torso_weights(V[v, 1])
    for k, side in enumerate(arm_rings):
        start, stop, _ = arm_rings[side]
        weights[start:stop, 4 + k] = 1.0

    basis = np.zeros((n_betas, nV, 3))
    basis[0, :, 1] = 0.1 * V[:, 1]
    torso = slice(0, n_torso)
    basis[1, torso, 0] = 0.1 * V[torso, 0]
    basis[1, torso, 2] = 0.1 * V[torso, 2]
    for k in range(2, n_betas):
        f = _mode_profile(k, V[torso, 1])
        basis[k, torso, 0] = f * V[torso, 0]
        basis[k, torso, 2] = f * V[torso, 2]
    for side in arm_rings:
        start, stop, _ = arm_rings[side]
        arm = slice(start, stop)
        sign = 1.0 if side == "l" else -1.0
        # Arms ride on the torso surface and thicken with it.
        for k in range(1, n_betas):
            f = 0.1 if k == 1 else _mode_profile(k, ARM_Y)
            basis[k, arm, 0] += sign * f * 0.15
            basis[k, arm, 1] += f * (V[arm, 1] - ARM_Y)
            basis[k, arm, 2] += f * V[arm, 2]

    entries = []

    def ring_mean(j, ring):
        for v in ring:
            entries.append((j, int(v), 1.0 / len(ring)))

    ring_mean(0, rings[4])  # y = 0.15
    ring_mean(1, rings[7])  # y = 0.45
    ring_mean(2, rings[NECK_SEAM_RING])
    ring_mean(3, rings[15])  # y = 0.80
    for k, side in enumerate(arm_rings):
        ring_mean(4 + k, arm_rings[side][2][3])  # first full-radius ring
    e = np.array(entries)
    regressor = sparse.csr_matrix((e[:, 2], (e[:, 0].astype(int), e[:, 1].astype(int))), shape=(J, nV))

    q = segments // 4  # ring vertex index facing +x; 0 faces +z
    landmarks = {
        "shoulder_l": int(rings[8][q]),
        "shoulder_r": int(rings[8][3 * q]),
        "collar": int(rings[10][0]),
        "chest_front": int(rings[7][0]),
        "chest_back": int(rings[7][2 * q]),
        "top_hem": int(rings[5][0]),
        "dress_hem": int(rings[0][0]),
        "hip_l": int(rings[4][q]),
        "hip_r": int(rings[4][3 * q]),
        "hip_front": int(rings[4][0]),
        "hip_back": int(rings[4][2 * q]),
        "waist": int(rings[6][0]),
        "bottom_hem": int(rings[0][0]),
    }
    uvs = np.zeros((nV, 2))
    for v in range(n_torso):
        angle = np.arctan2(V[v, 0], V[v, 2]) % (2 * np.pi)
        uvs[v] = [angle / (2 * np.pi), np.clip(V[v, 1] / BODY_TOP, 0.0, 1.0)]
    for side in arm_rings:
        start, stop, _ = arm_rings[side]
        uvs[start:stop] = np.column_stack(
            [np.clip(np.abs(V[start:stop, 0]) / 0.7, 0, 1), np.clip(V[start:stop, 1] / BODY_TOP, 0, 1)]
        )
    groups = {
        "neck_seam": rings[NECK_SEAM_RING],
        "neck_top_ring": rings[NECK_TOP_RING],
    }
    template = Mesh(V, F, uvs=uvs, groups=groups)
    return BodyModel(
        template=template,
        shape_basis=basis,
        joint_regressor=regressor,
        parents=parents,
        weights=weights,
        joint_names=tuple(joint_names),
        landmarks=landmarks,
        head_joint="head",
    )


# ---------------------------------------------------------------------------
# head


def make_head(n_lat=24, n_lon=32, axes=(0.08, 0.105, 0.095), cut_rings=4) -> Mesh:
    """Mirror-symmetric UV ellipsoid head centred at the origin.

    Groups: ``sagittal_line`` (the x = 0 meridians and poles), ``z_profile``
    (the equator ring), ``head_cut`` (the bottom ``cut_rings`` rings and the
    bottom pole).
    """
    if n_lat % 2 or n_lon % 2:
        raise ValueError("n_lat and n_lon must be even")
    a, b, c = axes
    verts = [[0.0, b, 0.0]]
    uvs = [[0.5, 1.0]]
    for i in range(1, n_lat):
        th = np.pi * i / n_lat
        for j in range(n_lon):
            ph = 2 * np.pi * j / n_lon
            verts.append([a * np.sin(th) * np.sin(ph), b * np.cos(th), c * np.sin(th) * np.cos(ph)])
            uvs.append([j / n_lon, 1.0 - i / n_lat])
    verts.append([0.0, -b, 0.0])
    uvs.append([0.5, 0.0])
    verts = np.array(verts)
    # Exact zeros on the mirror plane.
    verts[np.abs(verts) < 1e-15] = 0.0

    def ring(i):
        return 1 + (i - 1) * n_lon + np.arange(n_lon)

    faces = []
    for j in range(n_lon):
        k = (j + 1) % n_lon
        faces.append((0, ring(1)[k], ring(1)[j]))
    for i in range(1, n_lat - 1):
        r0, r1 = ring(i), ring(i + 1)
        for j in range(n_lon):
            k = (j + 1) % n_lon
            faces.append((r0[j], r1[j], r1[k]))
            faces.append((r0[j], r1[k], r0[k]))
    bottom = len(verts) - 1
    for j in range(n_lon):
        k = (j + 1) % n_lon
        faces.append((bottom, ring(n_lat - 1)[j], ring(n_lat - 1)[k]))
    faces = np.array(faces, dtype=np.int64)
    tri = verts[faces]
    normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    if np.sum(np.einsum("ij,ij->i", normal, tri.mean(axis=1))) < 0:
        faces = faces[:, [0, 2, 1]]

    half = n_lon // 2
    sagittal = [0] + [int(ring(i)[jj]) for i in range(1, n_lat) for jj in (0, half)] + [bottom]
    cut = [int(v) for i in range(n_lat - cut_rings, n_lat) for v in ring(i)] + [bottom]
    groups = {
        "sagittal_line": np.array(sorted(sagittal)),
        "z_profile": ring(n_lat // 2),
        "head_cut": np.array(sorted(cut)),
    }
    return Mesh(verts, faces, uvs=np.array(uvs), groups=groups)


def misalign(mesh: Mesh, angles, translation=(0.0, 0.0, 0.0), center=None) -> Mesh:
    """Rotate so that alignment angles ``-angles`` undo it exactly, then translate."""
    center = mesh.centroid() if center is None else np.asarray(center, dtype=float)
    inverse = correction_matrix(-np.asarray(angles, dtype=float)).T
    v = (mesh.vertices - center) @ inverse.T + center + np.asarray(translation, dtype=float)
    return mesh.with_vertices(v)


SKIN = (198, 152, 128)
HAIR = (58, 40, 30)
LIPS = (170, 70, 80)
EYES = (40, 45, 60)
HEAD_SKIN_REGION = [[0.0, 0.15, 1.0, 0.78]]


def make_head_texture(size=256, seed=7) -> Image:
    """Skin with hair on top, eyes and lips; small deterministic noise."""
    rng = np.random.default_rng(seed)
    px = np.empty((size, size, 3), dtype=np.float64)
    px[:] = SKIN
    v = 1.0 - (np.arange(size) + 0.5) / size
    u = (np.arange(size) + 0.5) / size
    U, Vv = np.meshgrid(u, v)
    hair = (Vv > 0.74) | ((Vv > 0.35) & (U > 0.3) & (U < 0.7))
    px[hair] = HAIR
    for cu in (0.06, 0.94):
        eye = (np.abs(U - cu) < 0.03) & (np.abs(Vv - 0.58) < 0.025)
        px[eye] = EYES
    lips = ((U < 0.04) | (U > 0.96)) & (np.abs(Vv - 0.4) < 0.02)
    px[lips] = LIPS
    px += rng.integers(-3, 4, size=px.shape)
    return Image(np.clip(px, 0, 255).astype(np.uint8))


# ---------------------------------------------------------------------------
# garments


def _tube_garment(profile, segments, anchor_rows, extra=()):
    verts, faces, rings = lathe(profile, segments)
    parts_v, parts_f = [verts], [faces]
    offset = len(verts)
    for ev, ef in extra:
        parts_v.append(ev)
        parts_f.append(ef + offset)
        offset += len(ev)
    mesh = Mesh(np.concatenate(parts_v), np.concatenate(parts_f))
    q = segments // 4
    anchors = {name: int(rings[r][{"front": 0, "left": q, "back": 2 * q, "right": 3 * q}[d]])
               for name, (r, d) in anchor_rows.items()}
    return mesh, anchors


def make_tshirt(with_sleeves=True, offset=0.02, segments=TORSO_SEGMENTS):
    """Top following the torso from y=0.25 to the collar at y=0.64."""
    rings = [(y, rx + offset, rz + offset) for y, rx, rz in BODY_RINGS if 0.25 <= y <= 0.64]
    extra = []
    if with_sleeves:
        sleeve = [(h, 0.062, 0.062) for h in np.linspace(0.0, 0.2, 6)]
        for sign in (1.0, -1.0):
            sv, sf, _ = lathe(sleeve, 16, origin=(sign * 0.19, ARM_Y, 0.0), axis=(sign, 0, 0),
                              side=(0, 1, 0), front=(0, 0, 1))
            extra.append((sv, sf))
    # ring indices: 0 -> 0.25, 2 -> 0.45, 3 -> 0.55, 5 -> 0.64
    rows = {
        "shoulder_l": (3, "left"), "shoulder_r": (3, "right"), "collar": (5, "front"),
        "hem": (0, "front"), "chest_front": (2, "front"), "chest_back": (2, "back"),
    }
    return _tube_garment(rings, segments, rows, extra)


def make_skirt(offset=0.025, segments=TORSO_SEGMENTS):
    """Flared skirt from the waist (y=0.35) to the hem ring of the torso cap."""
    y_hem = BODY_RINGS[0][0]
    rings = [
        (y_hem, 0.20, 0.17),
        (0.08, 0.19, 0.16),
        (0.15, 0.15 + offset, 0.1125 + offset),
        (0.25, 0.15 + offset, 0.1125 + offset),
        (0.35, 0.15 + offset, 0.1125 + offset),
    ]
    rows = {
        "hip_l": (2, "left"), "hip_r": (2, "right"), "hip_front": (2, "front"), "hip_back": (2, "back"),
        "waist": (4, "front"), "hem": (0, "front"),
    }
    return _tube_garment(rings, segments, rows)


def garment_rest_scale(model: BodyModel, mesh: Mesh, anchors, category) -> list[float]:
    """rest_scale that makes the fitted scale 1 on the mean (beta = 0) body."""
    from .garment import body_landmarks, measure

    body_dims, _ = measure(body_landmarks(model, model.template, category), category)
    g_dims, _ = measure({a: mesh.vertices[i] for a, i in anchors.items()}, category)
    return [float(x) for x in np.round(g_dims / body_dims, 12)]


# ---------------------------------------------------------------------------
# fixtures for penetration tests


def make_capsule(radius=0.15, length=0.6, segments=32, cap_rings=6, body_rings=8) -> Mesh:
    """Closed capsule along y from 0 to ``length + 2 * radius``."""
    cap = [(radius - radius * np.cos(k * np.pi / (2 * cap_rings)), radius * np.sin(k * np.pi / (2 * cap_rings)))
           for k in range(1, cap_rings)]
    mid = [(radius + length * t, radius) for t in np.linspace(0, 1, body_rings)]
    top = [(2 * radius + length - h, r) for h, r in reversed(cap)]
    profile = [(h, r, r) for h, r in cap + mid + top]
    v, f, _ = lathe(profile, segments, bottom=0.0, top=2 * radius + length)
    return Mesh(v, f)


def make_cylinder(radius, y0, y1, segments=48, rings=16) -> Mesh:
    profile = [(y, radius, radius) for y in np.linspace(y0, y1, rings)]
    v, f, _ = lathe(profile, segments)
    return Mesh(v, f)


def make_icosphere(subdivisions=2, radius=1.0) -> Mesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return Mesh(np.array(verts) * radius, np.array(faces))


# ---------------------------------------------------------------------------
# sample asset bundle


SAMPLE_BETA = [0.8, -0.5, 0.3, -0.2, 0.1, 0.0, -0.1, 0.2, 0.0, 0.05]
SAMPLE_HEAD_ANGLES = (4.0, 9.0, -6.0)
SAMPLE_HEAD_OFFSET = (0.02, 1.1, 0.03)


def _dump(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def write_sample_assets(out_dir) -> Path:
    """Write the complete sample input set used by the CLI and the tests."""
    out = Path(out_dir)
    (out / "garments" / "meshes").mkdir(parents=True, exist_ok=True)
    (out / "poses").mkdir(exist_ok=True)

    model = make_body_model(n_betas=10)
    save_body_model(model, out / "body_model.json", template_name="body_template.obj")
    _dump(out / "beta.json", {"beta": SAMPLE_BETA})

    head = misalign(make_head(), SAMPLE_HEAD_ANGLES, SAMPLE_HEAD_OFFSET, center=np.zeros(3))
    save_mesh(head, out / "head_sample.obj")
    save_image(make_head_texture(), out / "head_sample.png")
    _dump(out / "head_sample.json", {
        "mesh": "head_sample.obj",
        "texture": "head_sample.png",
        "vertex_count": head.n_vertices,
        "skin_region": HEAD_SKIN_REGION,
    })

    garments = {
        "tshirt_a": ("top", *make_tshirt(with_sleeves=True)),
        "tank_b": ("top", *make_tshirt(with_sleeves=False, offset=0.03)),
        "skirt_a": ("bottom", *make_skirt()),
    }
    for gid, (category, mesh, anchors) in garments.items():
        save_mesh(mesh, out / "garments" / "meshes" / f"{gid}.obj")
        _dump(out / "garments" / f"{gid}.json", {
            "id": gid,
            "mesh": f"meshes/{gid}.obj",
            "category": category,
            "anchors": dict(sorted(anchors.items())),
            "rest_scale": garment_rest_scale(model, mesh, anchors, category),
            "fit_map": None,
        })

    theta = np.zeros((model.n_joints, 3))
    theta[model.joint_index("shoulder_l")] = [0.0, 0.0, np.radians(60)]
    theta[model.joint_index("shoulder_r")] = [0.0, 0.0, -np.radians(60)]
    _dump(out / "poses" / "arm_raise.json", {"theta": theta.tolist(), "gamma": [0.0, 0.0, 0.0]})
    theta = np.zeros((model.n_joints, 3))
    theta[model.joint_index("head")] = [0.0, np.radians(30), 0.0]
    _dump(out / "poses" / "head_turn.json", {"theta": theta.tolist(), "gamma": [0.0, 0.0, 0.0]})

    _dump(out / "config.json", {
        "body_model_path": "body_model.json",
        "beta_path": "beta.json",
        "head_mesh_path": "head_sample.obj",
        "head_texture_path": "head_sample.png",
        "head_manifest_path": "head_sample.json",
        "garment_library_dir": "garments",
        "output_dir": "out",
        "alignment": {"max_iters": 500, "tol": 1e-4, "c_init": 3e-2, "weight_form": "gaussian"},
        "epsilon": 0.005,
        "texture_size": 256,
    })
    return out
