"""SMPL-style parametric body: shape blendshapes, joint regression and LBS.

Pose-corrective blendshapes are not modelled.  Real SMPL fidelity requires
converting the licensed model files into the JSON layout read by
:func:`load_body_model`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.spatial.transform import Rotation

from .errors import DimensionMismatchError, MissingJointError, ModelFormatError
from .mesh import Mesh, load_mesh, save_mesh

WEIGHT_TOL = 1e-6


def kinematic_order(parents) -> list[int]:
    """Root-to-leaf joint order; raises if ``parents`` is not a single rooted tree."""
    parents = [int(p) for p in parents]
    roots = [j for j, p in enumerate(parents) if p == -1]
    if len(roots) != 1:
        raise ModelFormatError(f"kinematic tree needs exactly one root, found {len(roots)}")
    children: dict[int, list[int]] = {j: [] for j in range(len(parents))}
    for j, p in enumerate(parents):
        if p == -1:
            continue
        if not 0 <= p < len(parents):
            raise ModelFormatError(f"joint {j} has invalid parent {p}")
        children[p].append(j)
    order, stack = [], [roots[0]]
    while stack:
        j = stack.pop()
        order.append(j)
        stack.extend(reversed(children[j]))
    if len(order) != len(parents):
        raise ModelFormatError("kinematic tree contains a cycle or a detached joint")
    return order


@dataclass(frozen=True, eq=False)
class BodyModel:
    template: Mesh
    shape_basis: np.ndarray  # (K, V, 3)
    joint_regressor: sparse.csr_matrix  # (J, V)
    parents: np.ndarray  # (J,)
    weights: np.ndarray  # (V, J)
    joint_names: tuple[str, ...] = ()
    landmarks: dict = field(default_factory=dict)
    head_joint: str = "head"

    def __post_init__(self):
        basis = np.asarray(self.shape_basis, dtype=np.float64)
        if basis.ndim == 2 and basis.shape[0] == 0:
            basis = basis.reshape(0, self.template.n_vertices, 3)
        object.__setattr__(self, "shape_basis", basis)
        object.__setattr__(self, "joint_regressor", sparse.csr_matrix(self.joint_regressor))
        object.__setattr__(self, "parents", np.asarray(self.parents, dtype=np.int64))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        if not self.joint_names:
            object.__setattr__(self, "joint_names", tuple(f"joint_{j}" for j in range(self.n_joints)))
        self.validate()

    @property
    def n_vertices(self) -> int:
        return self.template.n_vertices

    @property
    def n_joints(self) -> int:
        return len(self.parents)

    @property
    def n_betas(self) -> int:
        return self.shape_basis.shape[0]

    def validate(self):
        V, J = self.n_vertices, self.n_joints
        if self.shape_basis.ndim != 3 or self.shape_basis.shape[1:] != (V, 3):
            raise ModelFormatError(
                f"shape_basis must be (K, {V}, 3), got {self.shape_basis.shape}"
            )
        if self.joint_regressor.shape != (J, V):
            raise ModelFormatError(
                f"joint_regressor must be ({J}, {V}), got {self.joint_regressor.shape}"
            )
        if self.weights.shape != (V, J):
            raise ModelFormatError(f"weights must be ({V}, {J}), got {self.weights.shape}")
        if np.any(self.weights < 0):
            raise ModelFormatError("skinning weights must be nonnegative")
        bad = np.abs(self.weights.sum(axis=1) - 1.0) > WEIGHT_TOL
        if bad.any():
            raise ModelFormatError(f"weights of vertex {int(np.argmax(bad))} do not sum to 1")
        if len(self.joint_names) != J:
            raise ModelFormatError("joint_names length must equal joint count")
        kinematic_order(self.parents)
        for name, idx in self.landmarks.items():
            if not 0 <= int(idx) < V:
                raise ModelFormatError(f"landmark {name!r} index {idx} out of range")

    def joint_index(self, name) -> int:
        if isinstance(name, (int, np.integer)):
            if 0 <= int(name) < self.n_joints:
                return int(name)
            raise MissingJointError(f"joint index {name} out of range")
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise MissingJointError(f"model has no joint named {name!r}") from None

    @property
    def head_joint_index(self) -> int:
        return self.joint_index(self.head_joint)


@dataclass(frozen=True)
class Pose:
    """Per-joint axis-angle rotations (radians) and a global translation."""

    theta: np.ndarray
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=np.float64).reshape(3))

    @classmethod
    def rest(cls, n_joints):
        return cls(np.zeros((n_joints, 3)))

    @classmethod
    def from_dict(cls, data):
        return cls(data["theta"], data.get("gamma", [0.0, 0.0, 0.0]))

    def to_dict(self):
        return {"theta": self.theta.tolist(), "gamma": self.gamma.tolist()}


def check_beta(model: BodyModel, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64).ravel()
    if beta.shape != (model.n_betas,):
        raise DimensionMismatchError(
            f"model expects {model.n_betas} shape coefficients, got {beta.size}"
        )
    return beta


def apply_shape(model: BodyModel, beta) -> Mesh:
    """Template plus the beta-weighted sum of shape displacements."""
    beta = check_beta(model, beta)
    offsets = np.tensordot(beta, model.shape_basis, axes=1)
    return model.template.with_vertices(model.template.vertices + offsets)


def regress_joints(model: BodyModel, shaped: Mesh) -> np.ndarray:
    if shaped.n_vertices != model.n_vertices:
        raise DimensionMismatchError(
            f"mesh has {shaped.n_vertices} vertices, model has {model.n_vertices}"
        )
    return np.asarray(model.joint_regressor @ shaped.vertices)


def joint_transforms(joints, parents, theta) -> np.ndarray:
    """World transforms ``G_j`` (J, 4, 4) mapping rest-space points to posed space.

    Each joint rotates about its rest position; rotations compose root to leaf.
    """
    joints = np.asarray(joints, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64).reshape(-1, 3)
    J = len(parents)
    if theta.shape[0] != J or joints.shape != (J, 3):
        raise DimensionMismatchError(f"pose has {theta.shape[0]} joints, skeleton has {J}")
    rot = Rotation.from_rotvec(theta).as_matrix()
    world = np.zeros((J, 4, 4))
    for j in kinematic_order(parents):
        local = np.eye(4)
        local[:3, :3] = rot[j]
        p = parents[j]
        local[:3, 3] = joints[j] if p == -1 else joints[j] - joints[p]
        world[j] = local if p == -1 else world[p] @ local
    # Remove the rest-pose joint offset so G_j acts on rest coordinates.
    rest = np.einsum("jab,jb->ja", world[:, :3, :3], joints)
    world[:, :3, 3] -= rest
    return world


def skin_vertices(vertices, joints, parents, weights, pose: Pose) -> np.ndarray:
    """Linear blend skinning: ``v' = sum_j w_vj G_j v + gamma``."""
    vertices = np.asarray(vertices, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(vertices), len(parents)):
        raise DimensionMismatchError(
            f"weights shape {weights.shape} does not match {len(vertices)} vertices x {len(parents)} joints"
        )
    G = joint_transforms(joints, parents, pose.theta)
    blended = np.einsum("vj,jab->vab", weights, G)
    posed = np.einsum("vab,vb->va", blended[:, :3, :3], vertices) + blended[:, :3, 3]
    return posed + pose.gamma


def apply_pose(model: BodyModel, shaped: Mesh, pose: Pose) -> Mesh:
    if pose.theta.shape[0] != model.n_joints:
        raise DimensionMismatchError(
            f"pose has {pose.theta.shape[0]} joints, model has {model.n_joints}"
        )
    joints = regress_joints(model, shaped)
    posed = skin_vertices(shaped.vertices, joints, model.parents, model.weights, pose)
    return shaped.with_vertices(posed)


# ---------------------------------------------------------------------------
# JSON model files


def _resolve(base: Path, ref: str) -> Path:
    p = Path(ref)
    return p if p.is_absolute() else base / p


def load_body_model(path) -> BodyModel:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: {exc}") from None
    base = path.parent
    try:
        template = load_mesh(_resolve(base, doc["template"]))
        if doc.get("groups_file"):
            with _resolve(base, doc["groups_file"]).open("r", encoding="utf-8") as fh:
                groups = {k: np.asarray(v, dtype=np.int64) for k, v in json.load(fh).items()}
            template = template.replace(groups=groups)
        V = template.n_vertices
        basis = np.asarray(doc["shape_basis"], dtype=np.float64).reshape(-1, V, 3)
        reg = doc["joint_regressor"]
        J = int(reg["rows"])
        entries = np.asarray(reg["entries"], dtype=np.float64).reshape(-1, 3)
        regressor = sparse.csr_matrix(
            (entries[:, 2], (entries[:, 0].astype(int), entries[:, 1].astype(int))), shape=(J, V)
        )
        if len(doc["weights"]) != V:
            raise ModelFormatError(f"weights list has {len(doc['weights'])} rows, expected {V}")
        weights = np.zeros((V, J))
        for v, row in enumerate(doc["weights"]):
            for j, w in row:
                weights[v, int(j)] += w
        return BodyModel(
            template=template,
            shape_basis=basis,
            joint_regressor=regressor,
            parents=doc["parents"],
            weights=weights,
            joint_names=tuple(doc.get("joint_names", ())),
            landmarks={k: int(v) for k, v in doc.get("landmarks", {}).items()},
            head_joint=doc.get("head_joint", "head"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"{path}: invalid body model ({exc!r})") from None


def save_body_model(model: BodyModel, path, template_name=None) -> None:
    """Write the model JSON next to its template OBJ (and groups sidecar)."""
    path = Path(path)
    template_name = template_name or path.stem + "_template.obj"
    save_mesh(model.template, path.parent / template_name)
    coo = model.joint_regressor.tocoo()
    order = np.lexsort((coo.col, coo.row))
    entries = [[int(coo.row[i]), int(coo.col[i]), float(coo.data[i])] for i in order]
    weights = [
        [[int(j), float(row[j])] for j in np.flatnonzero(row)] for row in model.weights
    ]
    doc = {
        "template": template_name,
        "shape_basis": np.round(model.shape_basis, 12).tolist(),
        "joint_regressor": {"rows": model.n_joints, "entries": entries},
        "parents": model.parents.tolist(),
        "weights": weights,
        "joint_names": list(model.joint_names),
        "landmarks": dict(sorted(model.landmarks.items())),
        "head_joint": model.head_joint,
    }
    if model.template.groups:
        doc["groups_file"] = Path(template_name).stem + ".groups.json"
    path.write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_beta(path, n_betas=None) -> np.ndarray:
    with Path(path).open("r", encoding="utf-8") as fh:
        doc = json.load(fh)
    beta = np.asarray(doc["beta"] if isinstance(doc, dict) else doc, dtype=np.float64).ravel()
    if n_betas is not None and beta.size != n_betas:
        raise DimensionMismatchError(f"beta file has {beta.size} coefficients, expected {n_betas}")
    return beta


def load_pose(path) -> Pose:
    with Path(path).open("r", encoding="utf-8") as fh:
        return Pose.from_dict(json.load(fh))
