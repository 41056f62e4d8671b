"""Shared builders for randomized stitch scenarios."""

import numpy as np

from avatarforge.align import align_rotation, align_translation, correction_matrix
from avatarforge.body import apply_shape
from avatarforge.mesh import transform_mesh
from avatarforge.stitch import cut_body_neck, cut_head, stitch
from avatarforge.synthetic import make_body_model, make_head, misalign


def random_pair(seed):
    """A shaped body and a misaligned head with randomized resolutions."""
    rng = np.random.default_rng(seed)
    segments = int(rng.choice([16, 24, 32, 40]))
    model = make_body_model(n_betas=4, with_arms=bool(rng.integers(2)), segments=segments)
    shaped = apply_shape(model, rng.normal(0, 1, model.n_betas))
    axes = (rng.uniform(0.07, 0.09), rng.uniform(0.095, 0.115), rng.uniform(0.085, 0.1))
    head = make_head(n_lat=int(rng.choice([16, 20, 24])), n_lon=int(rng.choice([20, 24, 32, 36])), axes=axes)
    angles = (rng.uniform(-8, 8), rng.uniform(-15, 15), rng.uniform(-15, 15))
    head = misalign(head, angles, rng.uniform(-0.5, 0.5, 3) + [0, 1.0, 0])
    return model, shaped, head


def assemble(model, shaped, head, gap=0.01):
    result = align_rotation(head, (head.group("sagittal_line"), head.group("z_profile")))
    head_cut, _, head_loop, head_loops = cut_head(head)
    head_cut = transform_mesh(head_cut, correction_matrix(result.angles), center=head.centroid())
    body_cut, _, body_loop, body_loops = cut_body_neck(shaped)
    t = align_translation(head_cut, body_cut, head_loop, body_loop, gap=gap)
    combined = stitch(shaped, head, result.angles, t, model)
    return combined, len(body_loops), len(head_loops), len(body_loop), len(head_loop)


def _segment_distance(p, a, b):
    ab = b - a
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


def brute_unsigned_distance(p, vertices, faces):
    """Point-to-mesh distance by checking every triangle's plane foot and edges."""
    tri = np.asarray(vertices, dtype=float)[np.asarray(faces)]
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    n = np.cross(b - a, c - a)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    h = np.einsum("ij,ij->i", p - a, n)
    foot = p - h[:, None] * n
    inside = np.ones(len(tri), dtype=bool)
    for v0, v1 in ((a, b), (b, c), (c, a)):
        inside &= np.einsum("ij,ij->i", np.cross(v1 - v0, foot - v0), n) >= -1e-15
    edges = np.minimum.reduce([_segment_distance(p, a, b), _segment_distance(p, b, c), _segment_distance(p, c, a)])
    return float(np.min(np.where(inside, np.abs(h), edges)))


def winding_number(p, vertices, faces):
    """Generalized winding number: ~1 inside a closed outward mesh, ~0 outside."""
    tri = vertices[faces] - p
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    la, lb, lc = (np.linalg.norm(x, axis=1) for x in (a, b, c))
    det = np.einsum("ij,ij->i", a, np.cross(b, c))
    div = la * lb * lc + np.einsum("ij,ij->i", a, b) * lc + np.einsum("ij,ij->i", b, c) * la \
        + np.einsum("ij,ij->i", c, a) * lb
    return float(np.sum(2 * np.arctan2(det, div)) / (4 * np.pi))


def brute_signed_distance(points, mesh):
    out = []
    for p in np.asarray(points, dtype=float):
        d = brute_unsigned_distance(p, mesh.vertices, mesh.faces)
        out.append(-d if winding_number(p, mesh.vertices, mesh.faces) > 0.5 else d)
    return np.array(out)


def planted_shirt(body, shirt, fraction=0.05, seed=0):
    """Move ``fraction`` of the shirt vertices to random points inside ``body``."""
    rng = np.random.default_rng(seed)
    n = int(round(fraction * shirt.n_vertices))
    idx = np.sort(rng.choice(shirt.n_vertices, n, replace=False))
    verts = np.array(shirt.vertices)
    # Pull the chosen vertices toward the body axis so they end up inside.
    for i in idx:
        x, y, z = verts[i]
        r = np.hypot(x, z)
        depth = rng.uniform(0.1, 0.9)
        verts[i] = [x / r * depth * 0.15, y, z / r * depth * 0.15]
    return shirt.with_vertices(verts), idx
