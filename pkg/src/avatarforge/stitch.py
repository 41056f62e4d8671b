"""Cut the body and head at their seams, bridge the openings and rig the head."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .align import correction_matrix
from .body import BodyModel
from .errors import LoopsInterpenetrateError, MissingJointError, StitchError
from .mesh import (
    Mesh,
    boundary_edges,
    boundary_loops,
    delete_vertex_group,
    delete_vertices,
    flood_region,
    merge_meshes,
    save_mesh,
    transform_mesh,
    vertex_adjacency,
)

PROVENANCE = ("body", "head", "bridge")


def _wrap(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def _newell_normal(points):
    p = np.asarray(points)
    q = np.roll(p, -1, axis=0)
    return np.cross(p, q).sum(axis=0)


def _strictly_increasing_turn(angles, name):
    steps = _wrap(np.diff(np.append(angles, angles[0])))
    total = steps.sum()
    if abs(abs(total) - 2.0 * np.pi) > 1e-6:
        raise LoopsInterpenetrateError(f"loop {name} does not wind once around the bridge axis")
    return np.sign(total), steps


def _segments_cross(p, q, tol):
    """Pairwise proper intersections between 2-D segments p[i]->q[i]."""

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    P1, Q1 = p[:, None, :], q[:, None, :]
    P2, Q2 = p[None, :, :], q[None, :, :]
    o1, o2 = orient(P1, Q1, P2), orient(P1, Q1, Q2)
    o3, o4 = orient(P2, Q2, P1), orient(P2, Q2, Q1)
    clear = (np.abs(o1) > tol) & (np.abs(o2) > tol) & (np.abs(o3) > tol) & (np.abs(o4) > tol)
    return clear & (np.sign(o1) != np.sign(o2)) & (np.sign(o3) != np.sign(o4))


def bridge_loops(loop_a, loop_b) -> np.ndarray:
    """Triangulate the annulus between two closed loops.

    ``loop_a`` vertices are numbered ``0..n-1`` and ``loop_b`` vertices
    ``n..n+m-1`` in the returned (n+m, 3) triangle array.  Loops are
    expected to be boundary traversals (surface on the same side); the band
    then runs every loop edge in the reverse direction so the result stays
    orientable.  If ``loop_b`` winds the same way as ``loop_a`` the band
    follows ``loop_a``.

    Both loops are projected onto the plane orthogonal to the line joining
    their centroids and zipped together by angle.
    """
    A = np.asarray(loop_a, dtype=np.float64).reshape(-1, 3)
    B = np.asarray(loop_b, dtype=np.float64).reshape(-1, 3)
    n, m = len(A), len(B)
    if n < 3 or m < 3:
        raise ValueError("both loops need at least 3 vertices")
    ca, cb = A.mean(axis=0), B.mean(axis=0)
    scale = max(np.ptp(np.vstack([A, B]), axis=0).max(), 1e-12)
    axis = cb - ca
    if np.linalg.norm(axis) < 1e-9 * scale:
        axis = _newell_normal(A - ca)
    if np.linalg.norm(axis) == 0:
        raise LoopsInterpenetrateError("loops are degenerate; cannot find a bridge axis")
    axis = axis / np.linalg.norm(axis)

    ref = (A[0] - ca) - np.dot(A[0] - ca, axis) * axis
    if np.linalg.norm(ref) < 1e-12 * scale:
        raise LoopsInterpenetrateError("loop_a vertex lies on the bridge axis")
    e1 = ref / np.linalg.norm(ref)
    e2 = np.cross(axis, e1)

    def planar(P, c):
        rel = P - c
        return np.column_stack([rel @ e1, rel @ e2])

    pa, pb = planar(A, ca), planar(B, cb)
    ang_a = np.arctan2(pa[:, 1], pa[:, 0])
    ang_b = np.arctan2(pb[:, 1], pb[:, 0])
    sign_a, _ = _strictly_increasing_turn(ang_a, "a")
    if sign_a < 0:
        ang_a, ang_b = -ang_a, -ang_b
    sign_b, _ = _strictly_increasing_turn(ang_b, "b")
    order_b = np.arange(m) if sign_b > 0 else (-np.arange(m)) % m

    steps_a = _wrap(np.diff(ang_a))
    if np.any(steps_a <= 0) or _wrap(ang_a[0] - ang_a[-1]) <= 0:
        raise LoopsInterpenetrateError("loop a folds back on itself around the bridge axis")
    t_a = np.concatenate([[0.0], np.cumsum(steps_a), [2.0 * np.pi]])

    ang_b = ang_b[order_b]
    j0 = int(np.argmin(np.abs(_wrap(ang_b - ang_a[0]))))
    order_b = np.roll(order_b, -j0)
    ang_b = np.roll(ang_b, -j0)
    steps_b = _wrap(np.diff(np.append(ang_b, ang_b[0])))
    if np.any(steps_b <= 0):
        raise LoopsInterpenetrateError("loop b folds back on itself around the bridge axis")
    t_b = _wrap(ang_b[0] - ang_a[0]) + np.concatenate([[0.0], np.cumsum(steps_b)])

    def a(k):
        return k % n

    def b(k):
        return n + int(order_b[k % m])

    tris, rungs = [], [(0, b(0))]
    i = j = 0
    while i < n or j < m:
        advance_a = j == m or (i < n and t_a[i + 1] <= t_b[j + 1])
        if advance_a:
            tris.append((a(i + 1), a(i), b(j)))
            i += 1
        else:
            tris.append((a(i), b(j), b(j + 1)))
            j += 1
        rungs.append((a(i), b(j)))
    rungs = rungs[:-1]  # the last rung closes back onto the first

    # Self-intersection check on the projected rungs.
    origin = ca
    allp = np.vstack([A, B])
    flat = np.column_stack([(allp - origin) @ e1, (allp - origin) @ e2])
    r = np.asarray(rungs)
    cross = _segments_cross(flat[r[:, 0]], flat[r[:, 1]], tol=1e-12 * scale**2)
    R = len(r)
    idx = np.arange(R)
    near = np.abs(idx[:, None] - idx[None, :])
    near = np.minimum(near, R - near) <= 1
    cross &= ~near
    if cross.any():
        p, q = np.argwhere(cross)[0]
        raise LoopsInterpenetrateError(f"bridge rungs {tuple(r[p])} and {tuple(r[q])} intersect")
    return np.asarray(tris, dtype=np.int64)


@dataclass
class SeamBand:
    """Vertices spanning the seam, with the body-side and head-side edge rings."""

    vertices: np.ndarray
    body_edge: np.ndarray
    head_edge: np.ndarray


def band_ramp(positions, band: SeamBand) -> np.ndarray:
    """Normalized distance across the band: 0 on the body edge, 1 on the head edge."""
    pts = np.asarray(positions)[band.vertices]
    d_body, _ = cKDTree(np.asarray(positions)[band.body_edge]).query(pts)
    d_head, _ = cKDTree(np.asarray(positions)[band.head_edge]).query(pts)
    total = d_body + d_head
    return np.divide(d_body, total, out=np.zeros_like(total), where=total > 0)


def nearest_vertex_weights(positions, body_positions, body_weights):
    """Copy each point's weights from its nearest body vertex."""
    _, nearest = cKDTree(np.asarray(body_positions)).query(np.asarray(positions, dtype=np.float64))
    return np.asarray(body_weights, dtype=np.float64)[nearest].copy(), nearest


def transfer_skin_weights(positions, provenance, body_positions, body_weights, head_joint, band: SeamBand):
    """Skinning weights for a combined body+head vertex set.

    Head vertices outside the band get weight 1 on ``head_joint``.  Every
    other vertex starts from the weights of its nearest body vertex; inside
    the band those are blended linearly toward the head joint by the band
    ramp.
    """
    positions = np.asarray(positions, dtype=np.float64)
    body_weights = np.asarray(body_weights, dtype=np.float64)
    J = body_weights.shape[1]
    if not 0 <= int(head_joint) < J:
        raise MissingJointError(f"head joint {head_joint} out of range for {J} joints")
    head_row = np.zeros(J)
    head_row[int(head_joint)] = 1.0

    weights, nearest = nearest_vertex_weights(positions, body_positions, body_weights)
    provenance = np.asarray(provenance)
    weights[provenance == "head"] = head_row

    t = band_ramp(positions, band)[:, None]
    weights[band.vertices] = (1.0 - t) * body_weights[nearest[band.vertices]] + t * head_row
    weights /= weights.sum(axis=1, keepdims=True)
    return weights


@dataclass
class CombinedModel:
    mesh: Mesh
    weights: np.ndarray
    seam_band: SeamBand
    provenance: np.ndarray
    n_bridge_faces: int = 0
    census: dict = field(default_factory=dict)

    def validate(self):
        w = self.weights
        if w.shape[0] != self.mesh.n_vertices:
            raise StitchError("weights do not cover every vertex")
        if np.any(w < -1e-12) or np.any(np.abs(w.sum(axis=1) - 1.0) > 1e-6):
            raise StitchError("combined skinning weights are not a partition of unity")
        if seam_boundary_edges(self):
            raise StitchError("seam region has open edges")


def seam_boundary_edges(combined: CombinedModel) -> list[tuple[int, int]]:
    """Boundary edges touching the seam band or joining body and head vertices."""
    in_band = np.zeros(combined.mesh.n_vertices, dtype=bool)
    in_band[combined.seam_band.vertices] = True
    prov = combined.provenance
    out = []
    for u, v in boundary_edges(combined.mesh):
        if in_band[u] or in_band[v] or {prov[u], prov[v]} == {"body", "head"}:
            out.append((u, v))
    return out


def _seam_loop(mesh: Mesh, original_adjacent, what):
    """The single boundary loop touching ``original_adjacent`` vertices."""
    marks = set(int(v) for v in original_adjacent)
    loops = boundary_loops(mesh)
    hits = [lp for lp in loops if marks.intersection(lp)]
    if len(hits) != 1:
        raise StitchError(f"cutting the {what} produced {len(hits)} seam loops, expected 1")
    return hits[0], loops


def _cut_neighbors(mesh: Mesh, cut, remap):
    adj = vertex_adjacency(mesh)
    cut_set = set(int(c) for c in cut)
    ring = {n for c in cut_set for n in adj[c] if n not in cut_set}
    return [int(remap[v]) for v in sorted(ring) if remap[v] >= 0]


def cut_body_neck(body: Mesh, seam_group="neck_seam", top_group="neck_top_ring"):
    """Delete everything above the neck seam ring, keeping the ring itself."""
    seam = body.group(seam_group)
    region = flood_region(body, body.group(top_group), barrier=seam)
    cut, remap = delete_vertices(body, region)
    loop, loops = _seam_loop(cut, remap[seam], "body")
    return cut, remap, loop, loops


def cut_head(head: Mesh, group="head_cut"):
    cut, remap = delete_vertex_group(head, group)
    loop, loops = _seam_loop(cut, _cut_neighbors(head, head.group(group), remap), "head")
    return cut, remap, loop, loops


def _one_ring(mesh: Mesh, loop):
    adj = vertex_adjacency(mesh)
    loop_set = set(loop)
    return sorted({n for v in loop for n in adj[v] if n not in loop_set})


def stitch(body: Mesh, head: Mesh, rotation, translation, model: BodyModel, body_weights=None) -> CombinedModel:
    """Combine a shaped body and a head into one rigged mesh.

    Order: cut the head, rotate it about its (uncut) centroid and translate
    it, cut the body above ``neck_seam``, bridge the two openings, merge and
    transfer skinning weights.  ``body_weights`` defaults to the model's.
    """
    body_weights = model.weights if body_weights is None else np.asarray(body_weights)
    if not np.all(np.isfinite(rotation)) or not np.all(np.isfinite(translation)):
        raise StitchError("alignment values must be finite")

    center = head.centroid()
    head_cut, _, head_loop, head_loops = cut_head(head)
    head_cut = transform_mesh(head_cut, correction_matrix(rotation), translation, center=center)
    body_cut, body_remap, body_loop, body_loops = cut_body_neck(body)

    n, m = len(body_loop), len(head_loop)
    local = bridge_loops(body_cut.vertices[body_loop], head_cut.vertices[head_loop])
    offset = body_cut.n_vertices
    lookup = np.concatenate([np.asarray(body_loop), np.asarray(head_loop) + offset])
    bridge_faces = lookup[local]

    head_cut = head_cut.replace(groups={f"head/{k}": v for k, v in head_cut.groups.items()})
    merged, offsets = merge_meshes([body_cut, head_cut], extra_faces=bridge_faces)
    N = merged.n_vertices
    provenance = np.array(["body"] * offset + ["head"] * head_cut.n_vertices, dtype=object)
    provenance[lookup] = "bridge"
    groups = dict(merged.groups)
    groups["avatar_body"] = np.arange(offset)
    groups["avatar_head"] = np.arange(offset, N)
    merged = merged.replace(groups=groups)

    body_ring = _one_ring(body_cut, body_loop)
    head_ring = [v + offset for v in _one_ring(head_cut, head_loop)]
    band = SeamBand(
        vertices=np.array(sorted(set(lookup.tolist()) | set(body_ring) | set(head_ring)), dtype=np.int64),
        body_edge=np.array(body_ring, dtype=np.int64),
        head_edge=np.array(head_ring, dtype=np.int64),
    )
    kept = body_remap >= 0
    cut_weights = np.zeros((body_cut.n_vertices, body_weights.shape[1]))
    cut_weights[body_remap[kept]] = body_weights[kept]
    weights = transfer_skin_weights(
        merged.vertices, provenance, body_cut.vertices, cut_weights, model.head_joint_index, band
    )
    census = {
        "body_cut_loops": len(body_loops),
        "head_cut_loops": len(head_loops),
        "combined_loops": len(boundary_loops(merged)),
        "body_loop_length": n,
        "head_loop_length": m,
        "bridge_faces": int(len(bridge_faces)),
    }
    combined = CombinedModel(merged, weights, band, provenance, len(bridge_faces), census)
    combined.validate()
    return combined


def save_combined(combined: CombinedModel, obj_path) -> Path:
    """Write ``<name>.obj`` (+ groups sidecar) and ``<name>.weights.json``."""
    obj_path = Path(obj_path)
    save_mesh(combined.mesh, obj_path)
    weights_path = obj_path.with_name(obj_path.stem + ".weights.json")
    write_weights(weights_path, combined.weights, combined.provenance)
    return weights_path


def write_weights(path, weights, provenance=None):
    weights = np.asarray(weights)
    rows = [
        [[int(j), round(float(row[j]), 12)] for j in np.flatnonzero(row > 0)] for row in weights
    ]
    doc = {"joints": int(weights.shape[1]), "weights": rows}
    if provenance is not None:
        doc["provenance"] = [str(p) for p in provenance]
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def read_weights(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    J = int(doc["joints"])
    weights = np.zeros((len(doc["weights"]), J))
    for v, row in enumerate(doc["weights"]):
        for j, w in row:
            weights[v, int(j)] += w
    provenance = doc.get("provenance")
    return weights, (None if provenance is None else np.array(provenance, dtype=object))
