"""End-to-end commands: reconstruct an avatar, fit garments, export poses.

Reconstruction writes a self-contained avatar directory.  ``fit`` and
``pose`` only read from it (``fit`` adds garment files next to it), so the
personalized model is built once and reused.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .align import (
    AlignmentConfig,
    AlignmentResult,
    align_rotation,
    align_translation,
    correction_matrix,
)
from .body import Pose, apply_shape, load_beta, load_body_model, regress_joints, save_body_model, skin_vertices
from .errors import (
    AlignmentNotConvergedError,
    AvatarForgeError,
    DimensionMismatchError,
    EmptyLoopError,
    LoopsInterpenetrateError,
    StitchError,
)
from .garment import (
    ClearanceWarning,
    GarmentLibrary,
    load_fit_map,
    predict_fit_params,
    place_garment,
    resolve_penetration,
    save_fit_map,
    train_fit_map,
)
from .mesh import Mesh, is_watertight, load_mesh, save_mesh, transform_mesh
from .stitch import (
    cut_body_neck,
    cut_head,
    nearest_vertex_weights,
    read_weights,
    save_combined,
    seam_boundary_edges,
    stitch,
    write_weights,
)
from .texture import (
    band_texels,
    blend_seam,
    dominant_skin_color,
    load_image,
    mask_from_regions,
    save_image,
    synthesize_body_texture,
)

log = logging.getLogger(__name__)

AVATAR_MESH = "avatar.obj"
AVATAR_WEIGHTS = "avatar.weights.json"
AVATAR_MANIFEST = "avatar.json"
REPORT = "report.json"
SKELETON = "skeleton.json"
MODEL_COPY = "body_model.json"
FIT_SAMPLES = 50


class ConfigError(AvatarForgeError, ValueError):
    """Invalid or unresolvable pipeline configuration."""


def _dump(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _load_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


@dataclass
class PipelineConfig:
    body_model_path: Path
    beta_path: Path
    head_mesh_path: Path
    head_texture_path: Path
    garment_library_dir: Path
    output_dir: Path
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)
    epsilon: float = 0.005
    head_manifest_path: Path | None = None
    texture_size: int = 256
    neck_gap: float = 0.01
    seed: int = 42

    _PATHS = ("body_model_path", "beta_path", "head_mesh_path", "head_texture_path", "garment_library_dir")

    def validate(self):
        for name in self._PATHS + (("head_manifest_path",) if self.head_manifest_path else ()):
            if not Path(getattr(self, name)).exists():
                raise ConfigError(f"{name}: {getattr(self, name)} does not exist")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if int(self.texture_size) <= 1:
            raise ConfigError("texture_size must be at least 2")
        if self.neck_gap < 0:
            raise ConfigError("neck_gap must be non-negative")
        return self


def load_config(path, **overrides) -> PipelineConfig:
    """Read a JSON config; relative paths resolve against its directory.

    Keyword overrides (``None`` values ignored) win over the file.  The
    alignment keys ``weight_form``, ``tol``, ``max_iters`` and ``c_init``
    may be given either at top level or inside ``alignment``.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    doc = _load_json(path)
    base = path.parent
    align_doc = dict(doc.pop("alignment", {}) or {})
    for key in ("weight_form", "tol", "max_iters", "c_init"):
        if overrides.get(key) is not None:
            align_doc[key] = overrides.pop(key)
        else:
            overrides.pop(key, None)
    doc.update({k: v for k, v in overrides.items() if v is not None})

    def resolve(value):
        p = Path(value)
        return p if p.is_absolute() else (base / p)

    try:
        kwargs = {name: resolve(doc[name]) for name in PipelineConfig._PATHS}
        kwargs["output_dir"] = resolve(doc.get("output_dir", "out"))
        if doc.get("head_manifest_path"):
            kwargs["head_manifest_path"] = resolve(doc["head_manifest_path"])
        for key in ("epsilon", "neck_gap"):
            if key in doc:
                kwargs[key] = float(doc[key])
        for key in ("texture_size", "seed"):
            if key in doc:
                kwargs[key] = int(doc[key])
        kwargs["alignment"] = AlignmentConfig(**align_doc)
    except KeyError as exc:
        raise ConfigError(f"{path}: missing config key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return PipelineConfig(**kwargs)


# ---------------------------------------------------------------------------
# reconstruct


def _alignment_report(result: AlignmentResult | None):
    if result is None:
        return {"iterations": 0, "errors": None, "angles": None, "converged": False}
    return {
        "iterations": int(result.iterations),
        "errors": {"E_x": result.errors[0], "E_y": result.errors[1], "E_z": result.errors[2]},
        "angles": [float(a) for a in result.angles],
        "converged": bool(result.converged),
    }


def _head_seam_texels(combined, head_offset, width, height):
    """Texel samples fading from the seam loop (t = 1) to its one-ring (t = 0)."""
    mesh = combined.mesh
    head_loop = [int(v) for v in combined.seam_band.vertices
                 if v >= head_offset and combined.provenance[v] == "bridge"]
    ring = [int(v) for v in combined.seam_band.head_edge]
    ramp = np.zeros(mesh.n_vertices)
    ramp[head_loop] = 1.0
    band = np.zeros(mesh.n_vertices, dtype=bool)
    band[head_loop] = True
    band[ring] = True
    faces = mesh.faces[band[mesh.faces].all(axis=1) & (mesh.faces.min(axis=1) >= head_offset)]
    uv = mesh.uvs[faces]
    # Skip faces that straddle the u wrap-around of the texture.
    faces = faces[np.ptp(uv[:, :, 0], axis=1) < 0.5]
    return band_texels(mesh.uvs, faces, ramp, width, height)


def cmd_reconstruct(config: PipelineConfig) -> dict:
    """Build the personalized avatar and write it to ``config.output_dir``.

    Raises AlignmentNotConvergedError after writing ``report.json``.
    """
    config.validate()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    model = load_body_model(config.body_model_path)
    model.validate()
    beta = load_beta(config.beta_path, model.n_betas)
    shaped = apply_shape(model, beta)
    head = load_mesh(config.head_mesh_path)
    manifest = _load_json(config.head_manifest_path) if config.head_manifest_path else {}
    if "vertex_count" in manifest and int(manifest["vertex_count"]) != head.n_vertices:
        raise DimensionMismatchError(
            f"head mesh has {head.n_vertices} vertices, manifest says {manifest['vertex_count']}"
        )

    report = {
        "alignment": _alignment_report(None),
        "weight_form": config.alignment.weight_form,
        "beta": [float(b) for b in beta],
    }
    try:
        result = align_rotation(head, (head.group("sagittal_line"), head.group("z_profile")), config.alignment)
    except AlignmentNotConvergedError as exc:
        report["alignment"] = _alignment_report(exc.result)
        report["status"] = "alignment_not_converged"
        _dump(out / REPORT, report)
        raise
    report["alignment"] = _alignment_report(result)
    log.info("head aligned in %d iterations", result.iterations)

    try:
        head_cut, _, head_loop, _ = cut_head(head)
        head_cut = transform_mesh(head_cut, correction_matrix(result.angles), center=head.centroid())
        body_cut, _, body_loop, _ = cut_body_neck(shaped)
        translation = align_translation(head_cut, body_cut, head_loop, body_loop, gap=config.neck_gap)
        report["translation"] = [float(t) for t in translation]
        combined = stitch(shaped, head, result.angles, translation, model)
    except (StitchError, EmptyLoopError, LoopsInterpenetrateError) as exc:
        report["status"] = "stitch_failed"
        report["error"] = str(exc)
        _dump(out / REPORT, report)
        raise
    report["census"] = combined.census
    report["seam_boundary_edges"] = len(seam_boundary_edges(combined))
    report["watertight"] = bool(is_watertight(combined.mesh))

    head_tex = load_image(config.head_texture_path)
    if manifest.get("skin_region"):
        mask = mask_from_regions(head_tex.width, head_tex.height, manifest["skin_region"])
        head_tex = type(head_tex)(head_tex.pixels, mask)
    color = dominant_skin_color(head_tex, seed=config.seed)
    body_tex = synthesize_body_texture(color, config.texture_size)
    head_offset = int(np.flatnonzero(combined.provenance == "head")[0]) if np.any(combined.provenance == "head") \
        else combined.mesh.n_vertices
    if combined.mesh.uvs is not None:
        texels = _head_seam_texels(combined, head_offset, head_tex.width, head_tex.height)
        body_tex, blended = blend_seam(body_tex, head_tex, texels)
    else:
        texels, blended = [], head_tex
    report["skin_color"] = list(color)
    report["blended_texels"] = len(texels)

    save_combined(combined, out / AVATAR_MESH)
    save_image(blended, out / "avatar_head.png")
    save_image(body_tex, out / "avatar_body.png")
    save_body_model(model, out / MODEL_COPY, template_name="body_model_template.obj")
    joints = regress_joints(model, shaped)
    _dump(out / SKELETON, {
        "joint_names": list(model.joint_names),
        "parents": model.parents.tolist(),
        "joints": np.round(joints, 12).tolist(),
    })
    _dump(out / AVATAR_MANIFEST, {
        "mesh": AVATAR_MESH,
        "weights": AVATAR_WEIGHTS,
        "skeleton": SKELETON,
        "body_model": MODEL_COPY,
        "beta": [float(b) for b in beta],
        "garment_library": _portable_path(config.garment_library_dir, out),
        "epsilon": float(config.epsilon),
        "seed": int(config.seed),
    })
    report["status"] = "ok"
    _dump(out / REPORT, report)
    return report


def _portable_path(target, start) -> str:
    """``target`` relative to ``start`` when possible, so outputs do not embed absolute paths."""
    import os

    try:
        return Path(os.path.relpath(Path(target).resolve(), Path(start).resolve())).as_posix()
    except ValueError:
        return Path(target).resolve().as_posix()


# ---------------------------------------------------------------------------
# avatar directory


@dataclass
class Avatar:
    root: Path
    mesh: Mesh
    weights: np.ndarray
    joints: np.ndarray
    parents: np.ndarray
    joint_names: tuple
    manifest: dict

    @property
    def n_joints(self) -> int:
        return len(self.parents)


def load_avatar(root) -> Avatar:
    root = Path(root)
    manifest_path = root / AVATAR_MANIFEST
    if not manifest_path.is_file():
        raise ConfigError(f"{root} is not an avatar directory (no {AVATAR_MANIFEST})")
    manifest = _load_json(manifest_path)
    mesh = load_mesh(root / manifest["mesh"])
    weights, _ = read_weights(root / manifest["weights"])
    skel = _load_json(root / manifest["skeleton"])
    return Avatar(
        root=root,
        mesh=mesh,
        weights=weights,
        joints=np.asarray(skel["joints"], dtype=np.float64),
        parents=np.asarray(skel["parents"], dtype=np.int64),
        joint_names=tuple(skel["joint_names"]),
        manifest=manifest,
    )


# ---------------------------------------------------------------------------
# fit


def fit_samples(n_betas, n=FIT_SAMPLES, seed=42) -> np.ndarray:
    """Shape samples used to train a fit map (zero vector first)."""
    rng = np.random.default_rng(seed)
    samples = rng.normal(0.0, 1.0, size=(n, n_betas))
    samples[0] = 0.0
    return samples


def cmd_fit(avatar_dir, garment_id, library_dir=None, epsilon=None) -> dict:
    """Dress the avatar in ``garment_id``; writes ``avatar_<id>.obj`` and a report.

    The fit map is read from ``fitmaps/<id>.json`` in the avatar directory
    (or the garment manifest's ``fit_map``), trained and cached if absent.
    """
    avatar = load_avatar(avatar_dir)
    root = avatar.root
    library = GarmentLibrary(library_dir or (root / avatar.manifest["garment_library"]))
    garment = library.get(garment_id)
    model = load_body_model(root / avatar.manifest["body_model"])
    beta = np.asarray(avatar.manifest["beta"], dtype=np.float64)
    eps = float(epsilon if epsilon is not None else avatar.manifest.get("epsilon", 0.005))

    cache = root / "fitmaps" / f"{garment_id}.json"
    if garment.fit_map_path and Path(garment.fit_map_path).is_file():
        fit, source = load_fit_map(garment.fit_map_path), "library"
    elif cache.is_file():
        fit, source = load_fit_map(cache), "cache"
    else:
        samples = fit_samples(model.n_betas, seed=int(avatar.manifest.get("seed", 42)))
        fit, source = train_fit_map(model, garment, samples), "trained"
        cache.parent.mkdir(exist_ok=True)
        save_fit_map(fit, cache)
    scale, position = predict_fit_params(fit, beta)
    placed = place_garment(garment, scale, position)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ClearanceWarning)
        resolved, pen = resolve_penetration(placed, avatar.mesh, epsilon=eps)
    clearance = [str(w.message) for w in caught if issubclass(w.category, ClearanceWarning)]

    garment_weights, _ = nearest_vertex_weights(resolved.vertices, avatar.mesh.vertices, avatar.weights)
    out_obj = root / f"avatar_{garment_id}.obj"
    save_mesh(resolved, out_obj)
    write_weights(root / f"avatar_{garment_id}.weights.json", garment_weights)
    report = {
        "garment": garment_id,
        "category": garment.category,
        "fit_map": source,
        "fit_residual": float(fit.residual_),
        "scale": [float(s) for s in scale],
        "position": [float(p) for p in position],
        "epsilon": eps,
        "penetration": pen.to_dict(),
        "clearance_warnings": clearance,
    }
    _dump(root / f"fit_{garment_id}.json", report)
    return report


# ---------------------------------------------------------------------------
# pose


def load_pose_sequence(path, n_joints, frames=None) -> list[Pose]:
    """Frames from a pose file.

    Accepts ``{"theta", "gamma"}`` (one pose) or ``{"frames": [...]}``.
    With ``frames = N`` a single pose is interpolated linearly in
    axis-angle from rest (frame 0) to the pose (frame N - 1).
    """
    doc = _load_json(path)
    raw = doc["frames"] if isinstance(doc, dict) and "frames" in doc else [doc]
    try:
        poses = [Pose.from_dict(p) for p in raw]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: invalid pose ({exc})") from None
    for k, pose in enumerate(poses):
        if pose.theta.shape != (n_joints, 3):
            raise DimensionMismatchError(
                f"pose frame {k} has {pose.theta.shape[0]} joints, avatar has {n_joints}"
            )
    if frames is not None:
        frames = int(frames)
        if frames < 1:
            raise ConfigError("frames must be at least 1")
        if len(poses) != 1:
            raise ConfigError("--frames interpolation needs a single-pose file")
        target = poses[0]
        if frames == 1:
            return [target]
        return [
            Pose(target.theta * (k / (frames - 1)), target.gamma * (k / (frames - 1)))
            for k in range(frames)
        ]
    return poses


def _avatar_garments(root: Path) -> list[str]:
    return sorted(
        p.stem[len("avatar_"):] for p in root.glob("avatar_*.obj")
        if (root / f"{p.stem}.weights.json").is_file()
    )


def cmd_pose(avatar_dir, poses_path, out_dir, frames=None) -> list[Path]:
    """Write ``frame_####.obj`` (and ``frame_####_<garment>.obj``) per pose."""
    avatar = load_avatar(avatar_dir)
    poses = load_pose_sequence(poses_path, avatar.n_joints, frames)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    garments = []
    for gid in _avatar_garments(avatar.root):
        mesh = load_mesh(avatar.root / f"avatar_{gid}.obj")
        weights, _ = read_weights(avatar.root / f"avatar_{gid}.weights.json")
        garments.append((gid, mesh, weights))
    written = []
    bare = avatar.mesh.replace(groups={})
    for k, pose in enumerate(poses):
        verts = skin_vertices(avatar.mesh.vertices, avatar.joints, avatar.parents, avatar.weights, pose)
        path = out / f"frame_{k:04d}.obj"
        save_mesh(bare.with_vertices(verts), path)
        written.append(path)
        for gid, mesh, weights in garments:
            gv = skin_vertices(mesh.vertices, avatar.joints, avatar.parents, weights, pose)
            gpath = out / f"frame_{k:04d}_{gid}.obj"
            save_mesh(mesh.replace(groups={}).with_vertices(gv), gpath)
            written.append(gpath)
    return written


__all__ = [
    "PipelineConfig",
    "ConfigError",
    "load_config",
    "cmd_reconstruct",
    "cmd_fit",
    "cmd_pose",
    "load_avatar",
    "load_pose_sequence",
    "fit_samples",
]
