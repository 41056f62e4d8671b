"""Garment placement driven by body shape, plus static penetration resolution."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_betas, check_vector
from .body import BodyModel, apply_shape
from .errors import DimensionMismatchError, GarmentError, RankDeficientError
from .mesh import Mesh, face_normals, load_mesh, vertex_normals

# Anchor pairs whose x, y and z separations give width, height and depth.
CATEGORY_MEASURES = {
    "top": {"width": ("shoulder_l", "shoulder_r"), "height": ("collar", "hem"), "depth": ("chest_front", "chest_back")},
    "dress": {"width": ("shoulder_l", "shoulder_r"), "height": ("collar", "hem"), "depth": ("chest_front", "chest_back")},
    "bottom": {"width": ("hip_l", "hip_r"), "height": ("waist", "hem"), "depth": ("hip_front", "hip_back")},
}
_AXES = {"width": 0, "height": 1, "depth": 2}


def required_anchors(category) -> list[str]:
    try:
        measures = CATEGORY_MEASURES[category]
    except KeyError:
        raise GarmentError(f"unknown garment category {category!r}") from None
    return sorted({name for pair in measures.values() for name in pair})


@dataclass(frozen=True, eq=False)
class Garment:
    mesh: Mesh
    category: str
    anchors: dict
    rest_scale: np.ndarray = field(default_factory=lambda: np.ones(3))
    name: str = ""
    fit_map_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "rest_scale", check_vector(self.rest_scale, 3, "rest_scale"))
        missing = [a for a in required_anchors(self.category) if a not in self.anchors]
        if missing:
            raise GarmentError(f"{self.category} garment is missing anchors {missing}")
        for name, idx in self.anchors.items():
            if not 0 <= int(idx) < self.mesh.n_vertices:
                raise GarmentError(f"anchor {name!r} index {idx} out of range")

    def anchor_points(self) -> dict:
        return {a: self.mesh.vertices[int(self.anchors[a])] for a in required_anchors(self.category)}

    def anchor_centroid(self) -> np.ndarray:
        return np.mean(list(self.anchor_points().values()), axis=0)


def measure(points: dict, category) -> tuple[np.ndarray, np.ndarray]:
    """(width, height, depth) and centroid of the category's anchor points."""
    dims = np.zeros(3)
    for what, (a, b) in CATEGORY_MEASURES[category].items():
        axis = _AXES[what]
        dims[axis] = abs(points[a][axis] - points[b][axis])
    centroid = np.mean([points[a] for a in required_anchors(category)], axis=0)
    return dims, centroid


def body_landmarks(model: BodyModel, shaped: Mesh, category) -> dict:
    """Body landmark positions named like the category's garment anchors.

    A category-specific landmark (``top_hem``) wins over a generic one (``hem``).
    """
    out = {}
    for name in required_anchors(category):
        key = f"{category}_{name}" if f"{category}_{name}" in model.landmarks else name
        if key not in model.landmarks:
            raise GarmentError(f"body model has no landmark for {category} anchor {name!r}")
        out[name] = shaped.vertices[model.landmarks[key]]
    return out


def fit_targets(model: BodyModel, garment: Garment, beta) -> np.ndarray:
    """Scale (3) and position (3) placing ``garment`` on the body shaped by ``beta``."""
    shaped = apply_shape(model, beta)
    body_dims, body_center = measure(body_landmarks(model, shaped, garment.category), garment.category)
    garment_dims, _ = measure(garment.anchor_points(), garment.category)
    if np.any(garment_dims <= 0):
        raise GarmentError("garment anchors span zero extent along an axis")
    scale = garment.rest_scale * body_dims / garment_dims
    return np.concatenate([scale, body_center])


class FitMap(RegressorMixin, BaseEstimator):
    """Affine map from shape coefficients to garment (scale, position).

    Solved by least squares; when the samples do not span the coefficient
    space the minimum-norm solution is used and a warning is issued.
    """

    def fit(self, X, y):
        X = check_betas(X)
        y = np.asarray(y, dtype=np.float64).reshape(len(X), -1)
        if y.shape[1] != 6:
            raise DimensionMismatchError(f"targets must have 6 columns, got {y.shape[1]}")
        n, K = X.shape
        if n < K + 1:
            raise RankDeficientError(f"need at least {K + 1} samples for {K} coefficients, got {n}")
        design = np.hstack([np.ones((n, 1)), X])
        solution, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        if rank < K + 1:
            warnings.warn(
                f"shape samples span rank {rank} < {K + 1}; using the minimum-norm fit",
                stacklevel=2,
            )
        self.intercept_ = solution[0]
        self.coef_ = solution[1:].T
        self.rank_ = int(rank)
        self.n_features_in_ = K
        self.residual_ = float(np.sqrt(np.mean((design @ solution - y) ** 2)))
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_betas(X, self.n_features_in_)
        return X @ self.coef_.T + self.intercept_

    @property
    def coefficients(self) -> np.ndarray:
        """(6, K+1) matrix: constant column followed by the beta columns."""
        check_is_fitted(self, "coef_")
        return np.hstack([self.intercept_[:, None], self.coef_])

    def to_dict(self):
        return {"coefficients": self.coefficients.tolist(), "residual": self.residual_, "rank": self.rank_}

    @classmethod
    def from_dict(cls, doc):
        coefficients = np.asarray(doc["coefficients"], dtype=np.float64)
        if coefficients.ndim != 2 or coefficients.shape[0] != 6:
            raise DimensionMismatchError("fit map coefficients must be (6, K+1)")
        fm = cls()
        fm.intercept_ = coefficients[:, 0].copy()
        fm.coef_ = coefficients[:, 1:].copy()
        fm.n_features_in_ = fm.coef_.shape[1]
        fm.residual_ = float(doc.get("residual", 0.0))
        fm.rank_ = int(doc.get("rank", fm.n_features_in_ + 1))
        return fm


def train_fit_map(model: BodyModel, garment: Garment, samples) -> FitMap:
    samples = check_betas(samples, model.n_betas)
    targets = np.array([fit_targets(model, garment, beta) for beta in samples])
    return FitMap().fit(samples, targets)


def predict_fit_params(fit: FitMap, beta) -> tuple[np.ndarray, np.ndarray]:
    out = fit.predict(np.asarray(beta, dtype=np.float64).reshape(1, -1))[0]
    return out[:3], out[3:]


def place_garment(garment: Garment, scale, position) -> Mesh:
    """Scale about the anchor centroid, then move the centroid to ``position``."""
    scale = check_vector(scale, 3, "scale")
    position = check_vector(position, 3, "position")
    if np.any(scale <= 0):
        raise GarmentError("scale components must be positive")
    center = garment.anchor_centroid()
    placed = (garment.mesh.vertices - center) * scale + position
    return garment.mesh.with_vertices(placed)


# ---------------------------------------------------------------------------
# distances


def closest_points_on_triangles(p, a, b, c):
    """Closest point on triangle (a, b, c) to p, row-wise.

    Region-based method (vertex, edge and face Voronoi regions).  Returns
    the closest points and their barycentric coordinates.
    """
    p, a, b, c = (np.asarray(x, dtype=np.float64) for x in (p, a, b, c))
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    n = len(p)
    bary = np.zeros((n, 3))
    done = np.zeros(n, dtype=bool)

    def take(mask, w):
        nonlocal done
        mask = mask & ~done
        bary[mask] = w[mask]
        done |= mask

    one = np.ones(n)
    zero = np.zeros(n)
    take((d1 <= 0) & (d2 <= 0), np.column_stack([one, zero, zero]))
    take((d3 >= 0) & (d4 <= d3), np.column_stack([zero, one, zero]))
    take((d6 >= 0) & (d5 <= d6), np.column_stack([zero, zero, one]))
    with np.errstate(divide="ignore", invalid="ignore"):
        v = d1 / (d1 - d3)
        take((vc <= 0) & (d1 >= 0) & (d3 <= 0), np.column_stack([1 - v, v, zero]))
        w = d2 / (d2 - d6)
        take((vb <= 0) & (d2 >= 0) & (d6 <= 0), np.column_stack([1 - w, zero, w]))
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        take((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), np.column_stack([zero, 1 - w, w]))
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        take(np.ones(n, dtype=bool), np.column_stack([1 - v - w, v, w]))
    q = bary[:, :1] * a + bary[:, 1:2] * b + bary[:, 2:] * c
    return q, bary


@dataclass
class SurfaceQuery:
    distance: np.ndarray  # signed, negative inside
    closest: np.ndarray
    face: np.ndarray
    normal: np.ndarray  # smooth outward normal at the closest point


class SignedDistance:
    """Signed point-to-surface distance against a triangle mesh.

    The sign comes from the normal of the nearest triangle; among equally
    near triangles the lowest face index wins.
    """

    def __init__(self, body: Mesh):
        if body.n_faces == 0:
            raise GarmentError("body mesh has no faces")
        self.mesh = body
        tri = body.vertices[body.faces]
        self._tri = tri
        self._face_normals = face_normals(body)
        self._vertex_normals = vertex_normals(body)
        centroids = tri.mean(axis=1)
        self._radius = float(np.max(np.linalg.norm(tri - centroids[:, None, :], axis=2)))
        self._centroids = cKDTree(centroids)
        self._vertices = cKDTree(body.vertices)

    def query(self, points) -> SurfaceQuery:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        bound, _ = self._vertices.query(points)
        candidates = self._centroids.query_ball_point(points, bound + self._radius + 1e-12)
        counts = np.array([len(c) for c in candidates])
        owner = np.repeat(np.arange(len(points)), counts)
        faces = np.concatenate([np.sort(np.asarray(c, dtype=np.int64)) for c in candidates]) if len(points) else np.zeros(0, dtype=np.int64)
        tri = self._tri[faces]
        q, bary = closest_points_on_triangles(points[owner], tri[:, 0], tri[:, 1], tri[:, 2])
        dist = np.linalg.norm(points[owner] - q, axis=1)

        # Per point: minimal distance, lowest face index among ties.
        order = np.lexsort((faces, np.round(dist, 12), owner))
        first = np.ones(len(order), dtype=bool)
        first[1:] = owner[order][1:] != owner[order][:-1]
        pick = order[first]

        face = faces[pick]
        closest = q[pick]
        d = dist[pick]
        side = np.einsum("ij,ij->i", points - closest, self._face_normals[face])
        signed = np.where(side < 0, -d, d)
        vn = self._vertex_normals[self.mesh.faces[face]]
        normal = np.einsum("ij,ijk->ik", bary[pick], vn)
        length = np.linalg.norm(normal, axis=1, keepdims=True)
        normal = np.where(length > 1e-12, normal / np.where(length > 0, length, 1), self._face_normals[face])
        return SurfaceQuery(signed, closest, face, normal)

    def signed_distance(self, points) -> np.ndarray:
        return self.query(points).distance


class ClearanceWarning(UserWarning):
    pass


@dataclass
class PenetrationReport:
    passes: int
    moved: int
    min_distance: float
    converged: bool

    def to_dict(self):
        return {
            "passes": self.passes,
            "moved_vertices": self.moved,
            "min_signed_distance": self.min_distance,
            "converged": self.converged,
        }


class PenetrationResolver(TransformerMixin, BaseEstimator):
    """Push garment vertices out of a body until they clear it by ``epsilon``.

    ``fit`` takes the body mesh; ``transform`` takes a garment mesh.
    Vertices closer than ``epsilon`` (or inside) are moved to ``epsilon``
    along the body's outward normal at their closest point.
    """

    def __init__(self, epsilon=0.005, max_passes=10):
        self.epsilon = epsilon
        self.max_passes = max_passes

    def fit(self, X: Mesh, y=None):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        self.distance_ = SignedDistance(X)
        return self

    def transform(self, X: Mesh) -> Mesh:
        check_is_fitted(self, "distance_")
        eps = float(self.epsilon)
        verts = np.array(X.vertices, dtype=np.float64)
        moved = np.zeros(len(verts), dtype=bool)
        passes = 0
        sd = self.distance_.signed_distance(verts)
        while passes < int(self.max_passes):
            bad = sd < eps
            if not bad.any():
                break
            passes += 1
            hit = self.distance_.query(verts[bad])
            verts[bad] = hit.closest + eps * hit.normal
            moved |= bad
            sd = self.distance_.signed_distance(verts)
            if sd.min() >= eps / 2:
                break
        min_d = float(sd.min()) if len(sd) else float("inf")
        converged = min_d >= eps / 2
        self.report_ = PenetrationReport(passes, int(moved.sum()), min_d, converged)
        if not converged:
            warnings.warn(
                f"garment clearance {min_d:.4g} still below {eps / 2:.4g} after {passes} passes",
                ClearanceWarning,
                stacklevel=2,
            )
        return X.with_vertices(verts)


def resolve_penetration(garment: Mesh, body: Mesh, epsilon=0.005, max_passes=10):
    """Returns ``(mesh, report)``; warns with ClearanceWarning if unresolved."""
    resolver = PenetrationResolver(epsilon=epsilon, max_passes=max_passes).fit(body)
    mesh = resolver.transform(garment)
    return mesh, resolver.report_


# ---------------------------------------------------------------------------
# manifests


def load_garment(manifest_path) -> Garment:
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    try:
        mesh_path = Path(doc["mesh"])
        if not mesh_path.is_absolute():
            mesh_path = manifest_path.parent / mesh_path
        fit_map = doc.get("fit_map")
        if fit_map and not Path(fit_map).is_absolute():
            fit_map = str(manifest_path.parent / fit_map)
        return Garment(
            mesh=load_mesh(mesh_path),
            category=doc["category"],
            anchors={k: int(v) for k, v in doc["anchors"].items()},
            rest_scale=doc.get("rest_scale", [1.0, 1.0, 1.0]),
            name=doc.get("id", manifest_path.stem),
            fit_map_path=fit_map,
        )
    except KeyError as exc:
        raise GarmentError(f"{manifest_path}: missing field {exc}") from None


class GarmentLibrary:
    """Directory of ``<id>.json`` garment manifests."""

    def __init__(self, root):
        self.root = Path(root)
        if not self.root.is_dir():
            raise GarmentError(f"garment library {self.root} is not a directory")

    def ids(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.json") if "." not in p.stem)

    def manifest_path(self, garment_id) -> Path:
        path = self.root / f"{garment_id}.json"
        if not path.is_file():
            raise GarmentError(f"unknown garment id {garment_id!r} (have {self.ids()})")
        return path

    def get(self, garment_id) -> Garment:
        return load_garment(self.manifest_path(garment_id))


def load_fit_map(path) -> FitMap:
    return FitMap.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_fit_map(fit: FitMap, path) -> None:
    Path(path).write_text(json.dumps(fit.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

