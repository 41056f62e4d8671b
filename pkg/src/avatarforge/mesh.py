"""Indexed triangle meshes: OBJ I/O, boundary topology and group editing."""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import MeshError, MeshParseError, NonManifoldEdgeError, UnknownGroupError

logger = logging.getLogger(__name__)

_NORMAL_TOL = 1e-6


def _frozen(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh with optional per-vertex UVs, normals and vertex groups.

    Arrays are stored read-only; every editing function returns a new mesh.
    """

    vertices: np.ndarray
    faces: np.ndarray
    uvs: np.ndarray | None = None
    groups: Mapping[str, np.ndarray] = field(default_factory=dict)
    normals: np.ndarray | None = None

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "vertices", _frozen(vertices))
        object.__setattr__(self, "faces", _frozen(faces))
        if self.uvs is not None:
            uvs = np.array(self.uvs, dtype=np.float64).reshape(-1, 2)
            object.__setattr__(self, "uvs", _frozen(uvs))
        if self.normals is not None:
            normals = np.array(self.normals, dtype=np.float64).reshape(-1, 3)
            object.__setattr__(self, "normals", _frozen(normals))
        groups = {
            str(name): _frozen(np.unique(np.asarray(idx, dtype=np.int64).ravel()))
            for name, idx in dict(self.groups).items()
        }
        object.__setattr__(self, "groups", groups)
        self.validate()

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def validate(self):
        n = self.n_vertices
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= n:
                raise MeshError(f"face index out of range for {n} vertices")
            f = self.faces
            degenerate = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            if degenerate.any():
                raise MeshError(f"face {int(np.argmax(degenerate))} is degenerate")
        if self.uvs is not None and len(self.uvs) != n:
            raise MeshError(f"expected {n} uvs, got {len(self.uvs)}")
        if self.normals is not None:
            if len(self.normals) != n:
                raise MeshError(f"expected {n} normals, got {len(self.normals)}")
            lengths = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(lengths - 1.0) > _NORMAL_TOL):
                raise MeshError("normals must have unit length")
        for name, idx in self.groups.items():
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise MeshError(f"group {name!r} has an index out of range")

    def group(self, name: str) -> np.ndarray:
        try:
            return self.groups[name]
        except KeyError:
            raise UnknownGroupError(f"unknown vertex group {name!r}") from None

    def replace(self, **changes) -> "Mesh":
        fields = dict(
            vertices=self.vertices,
            faces=self.faces,
            uvs=self.uvs,
            groups=self.groups,
            normals=self.normals,
        )
        fields.update(changes)
        return Mesh(**fields)

    def with_vertices(self, vertices) -> "Mesh":
        """Same topology, new positions.  Stored normals are dropped."""
        return self.replace(vertices=vertices, normals=None)

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


# ---------------------------------------------------------------------------
# OBJ I/O


def _group_sidecar(path: Path) -> Path:
    return path.with_name(path.stem + ".groups.json")


def _parse_index(token, count, lineno, path):
    idx = int(token)
    if idx < 0:
        idx = count + idx
    else:
        idx -= 1
    if idx < 0:
        raise MeshParseError(f"invalid index {token!r}", lineno, path)
    return idx


def load_mesh(path) -> Mesh:
    """Read a Wavefront OBJ file.

    Quads and larger polygons are fan-triangulated.  Degenerate faces are
    dropped and counted in a log warning.  Vertex groups come from the
    ``<stem>.groups.json`` sidecar when present, otherwise from ``g``
    statements (vertices of every face tagged with the group).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"mesh file not found: {path}")

    vertices: list[list[float]] = []
    texcoords: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    face_lines: list[int] = []
    face_vt: list[tuple[int | None, ...]] = []
    face_groups: list[tuple[str, ...]] = []
    current_groups: tuple[str, ...] = ()
    dropped = 0

    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tag, *rest = line.split()
            try:
                if tag == "v":
                    if len(rest) < 3:
                        raise MeshParseError("vertex needs 3 coordinates", lineno, path)
                    vertices.append([float(x) for x in rest[:3]])
                elif tag == "vt":
                    if len(rest) < 2:
                        raise MeshParseError("texcoord needs 2 values", lineno, path)
                    texcoords.append([float(x) for x in rest[:2]])
                elif tag == "g":
                    current_groups = tuple(rest)
                elif tag == "f":
                    if len(rest) < 3:
                        raise MeshParseError("face needs at least 3 vertices", lineno, path)
                    vs, ts = [], []
                    for corner in rest:
                        parts = corner.split("/")
                        vs.append(_parse_index(parts[0], len(vertices), lineno, path))
                        if len(parts) > 1 and parts[1]:
                            ts.append(_parse_index(parts[1], len(texcoords), lineno, path))
                        else:
                            ts.append(None)
                    for k in range(1, len(vs) - 1):
                        tri = (vs[0], vs[k], vs[k + 1])
                        if len(set(tri)) < 3:
                            dropped += 1
                            continue
                        faces.append(tri)
                        face_vt.append((ts[0], ts[k], ts[k + 1]))
                        face_lines.append(lineno)
                        face_groups.append(current_groups)
            except ValueError as exc:
                if isinstance(exc, MeshParseError):
                    raise
                raise MeshParseError(f"malformed {tag!r} statement: {exc}", lineno, path) from None

    n = len(vertices)
    for tri, lineno in zip(faces, face_lines):
        for v in tri:
            if v >= n:
                raise MeshParseError(
                    f"face index {v + 1} out of range ({n} vertices)", lineno, path
                )
    if dropped:
        logger.warning("%s: dropped %d degenerate face(s)", path, dropped)

    uvs = None
    if texcoords:
        uvs = np.zeros((n, 2))
        seen = np.zeros(n, dtype=bool)
        conflicts = 0
        for tri, tvs in zip(faces, face_vt):
            for v, t in zip(tri, tvs):
                if t is None:
                    continue
                if t >= len(texcoords):
                    raise MeshParseError(f"texcoord index {t + 1} out of range", None, path)
                if seen[v]:
                    if not np.array_equal(uvs[v], texcoords[t]):
                        conflicts += 1
                    continue
                uvs[v] = texcoords[t]
                seen[v] = True
        if conflicts:
            logger.warning("%s: %d corner(s) with conflicting uvs kept first value", path, conflicts)

    sidecar = _group_sidecar(path)
    if sidecar.is_file():
        with sidecar.open("r", encoding="utf-8") as fh:
            groups = {k: np.asarray(v, dtype=np.int64) for k, v in json.load(fh).items()}
    else:
        collected: dict[str, set[int]] = defaultdict(set)
        for tri, names in zip(faces, face_groups):
            for name in names:
                if name != "default":
                    collected[name].update(tri)
        groups = {k: np.array(sorted(v), dtype=np.int64) for k, v in collected.items()}

    try:
        return Mesh(np.array(vertices).reshape(-1, 3), np.array(faces).reshape(-1, 3), uvs, groups)
    except MeshError as exc:
        raise MeshParseError(str(exc), None, path) from None


def _fmt(x: float) -> str:
    s = f"{x:.10g}"
    return "0" if s == "-0" else s


def save_mesh(mesh: Mesh, path) -> None:
    """Write ``mesh`` as OBJ plus a ``.groups.json`` sidecar (if it has groups).

    Output is byte-deterministic for a given mesh.
    """
    path = Path(path)
    mesh.validate()
    lines = []
    for v in mesh.vertices:
        lines.append("v " + " ".join(_fmt(x) for x in v))
    if mesh.uvs is not None:
        for t in mesh.uvs:
            lines.append("vt " + " ".join(_fmt(x) for x in t))

    names = sorted(mesh.groups)
    members = {name: np.zeros(mesh.n_vertices, dtype=bool) for name in names}
    for name in names:
        members[name][mesh.groups[name]] = True
    current = None
    for tri in mesh.faces:
        tags = tuple(name for name in names if members[name][tri].all()) or ("default",)
        if tags != current:
            lines.append("g " + " ".join(tags))
            current = tags
        if mesh.uvs is not None:
            lines.append("f " + " ".join(f"{i + 1}/{i + 1}" for i in tri))
        else:
            lines.append("f " + " ".join(str(i + 1) for i in tri))

    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    sidecar = _group_sidecar(path)
    if mesh.groups:
        payload = {name: [int(i) for i in mesh.groups[name]] for name in names}
        sidecar.write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# topology


def edge_face_counts(faces: np.ndarray) -> dict[tuple[int, int], int]:
    counts: dict[tuple[int, int], int] = defaultdict(int)
    for a, b, c in np.asarray(faces).tolist():
        for u, v in ((a, b), (b, c), (c, a)):
            counts[(u, v) if u < v else (v, u)] += 1
    return counts


def check_edge_manifold(mesh: Mesh) -> None:
    for edge, count in sorted(edge_face_counts(mesh.faces).items()):
        if count > 2:
            raise NonManifoldEdgeError(edge, count)


def boundary_edges(mesh: Mesh) -> list[tuple[int, int]]:
    """Directed edges (as oriented in their face) bordering exactly one face."""
    counts = edge_face_counts(mesh.faces)
    out = []
    for a, b, c in mesh.faces.tolist():
        for u, v in ((a, b), (b, c), (c, a)):
            if counts[(u, v) if u < v else (v, u)] == 1:
                out.append((u, v))
    return out


def boundary_loops(mesh: Mesh) -> list[list[int]]:
    """Ordered boundary cycles of an edge-manifold mesh.

    Each loop follows the direction its edges have in their faces, so the
    surface is always on the same side.  Loops start at their smallest
    vertex index and are sorted by it.
    """
    check_edge_manifold(mesh)
    outgoing: dict[int, list[int]] = defaultdict(list)
    for u, v in boundary_edges(mesh):
        outgoing[u].append(v)
    for targets in outgoing.values():
        targets.sort()

    loops = []
    for start in sorted(outgoing):
        while outgoing[start]:
            loop = [start]
            current = outgoing[start].pop(0)
            while current != start:
                loop.append(current)
                if not outgoing[current]:
                    raise MeshError(f"boundary walk from vertex {start} did not close")
                current = outgoing[current].pop(0)
            loops.append(loop)
    for i, loop in enumerate(loops):
        k = int(np.argmin(loop))
        loops[i] = loop[k:] + loop[:k]
    loops.sort(key=lambda lp: lp[0])
    return loops


def is_watertight(mesh: Mesh) -> bool:
    try:
        return not boundary_loops(mesh)
    except NonManifoldEdgeError:
        return False


def vertex_adjacency(mesh: Mesh) -> list[set[int]]:
    adj: list[set[int]] = [set() for _ in range(mesh.n_vertices)]
    for a, b, c in mesh.faces.tolist():
        adj[a].update((b, c))
        adj[b].update((a, c))
        adj[c].update((a, b))
    return adj


def flood_region(mesh: Mesh, seeds, barrier=()) -> np.ndarray:
    """Vertices reachable from ``seeds`` along edges without entering ``barrier``."""
    adj = vertex_adjacency(mesh)
    blocked = set(int(b) for b in barrier)
    seen = set()
    stack = [int(s) for s in seeds if int(s) not in blocked]
    while stack:
        v = stack.pop()
        if v in seen:
            continue
        seen.add(v)
        stack.extend(n for n in adj[v] if n not in seen and n not in blocked)
    return np.array(sorted(seen), dtype=np.int64)


# ---------------------------------------------------------------------------
# editing


def delete_vertices(mesh: Mesh, indices) -> tuple[Mesh, np.ndarray]:
    """Drop vertices and every face touching them.

    Returns the compacted mesh and an old->new index map (-1 for deleted).
    Surviving vertices keep their relative order.
    """
    doomed = np.zeros(mesh.n_vertices, dtype=bool)
    doomed[np.asarray(indices, dtype=np.int64)] = True
    keep = ~doomed
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[keep] = np.arange(int(keep.sum()))

    face_keep = keep[mesh.faces].all(axis=1) if mesh.n_faces else np.zeros(0, dtype=bool)
    faces = remap[mesh.faces[face_keep]]
    groups = {}
    for name, idx in mesh.groups.items():
        new = remap[idx]
        groups[name] = new[new >= 0]
    result = Mesh(
        vertices=mesh.vertices[keep],
        faces=faces,
        uvs=None if mesh.uvs is None else mesh.uvs[keep],
        groups=groups,
        normals=None if mesh.normals is None else mesh.normals[keep],
    )
    return result, remap


def delete_vertex_group(mesh: Mesh, group: str) -> tuple[Mesh, np.ndarray]:
    return delete_vertices(mesh, mesh.group(group))


def face_normals(mesh: Mesh, normalize=True) -> np.ndarray:
    v = mesh.vertices
    f = mesh.faces
    n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    if normalize:
        length = np.linalg.norm(n, axis=1, keepdims=True)
        n = np.divide(n, length, out=np.zeros_like(n), where=length > 0)
    return n


def vertex_normals(mesh: Mesh) -> np.ndarray:
    """Area-weighted vertex normals; vertices without faces get zeros."""
    if mesh.n_faces == 0:
        raise MeshError("vertex normals need at least one face")
    weighted = face_normals(mesh, normalize=False)
    acc = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(acc, mesh.faces[:, k], weighted)
    length = np.linalg.norm(acc, axis=1, keepdims=True)
    return np.divide(acc, length, out=np.zeros_like(acc), where=length > 0)


def merge_meshes(meshes, extra_faces=None) -> tuple[Mesh, list[int]]:
    """Concatenate meshes; returns the merged mesh and per-input vertex offsets.

    Groups with the same name are unioned.  UVs survive only if every input
    has them.  ``extra_faces`` are in merged indexing.
    """
    offsets, verts, faces, uvs = [], [], [], []
    groups: dict[str, list[np.ndarray]] = defaultdict(list)
    offset = 0
    for m in meshes:
        offsets.append(offset)
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        uvs.append(m.uvs)
        for name, idx in m.groups.items():
            groups[name].append(idx + offset)
        offset += m.n_vertices
    if extra_faces is not None:
        faces.append(np.asarray(extra_faces, dtype=np.int64).reshape(-1, 3))
    merged = Mesh(
        vertices=np.concatenate(verts),
        faces=np.concatenate(faces),
        uvs=None if any(u is None for u in uvs) else np.concatenate(uvs),
        groups={k: np.concatenate(v) for k, v in groups.items()},
    )
    return merged, offsets


def rotation_matrix(axis: str, degrees: float) -> np.ndarray:
    t = np.radians(degrees)
    c, s = np.cos(t), np.sin(t)
    if axis == "x":
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    if axis == "y":
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    if axis == "z":
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    raise ValueError(f"unknown axis {axis!r}")


def transform_mesh(mesh: Mesh, rotation=None, translation=None, center=None) -> Mesh:
    """Rotate about ``center`` (default origin), then translate."""
    v = np.asarray(mesh.vertices)
    if rotation is not None:
        c = np.zeros(3) if center is None else np.asarray(center, dtype=float)
        v = (v - c) @ np.asarray(rotation).T + c
    if translation is not None:
        v = v + np.asarray(translation, dtype=float)
    return mesh.with_vertices(v)
