"""Personalized rigged avatars from a parametric body and a reconstructed head."""

from .align import AlignmentConfig, AlignmentResult, HeadAligner, align_rotation, align_translation
from .body import BodyModel, Pose, apply_pose, apply_shape, load_body_model, regress_joints
from .garment import FitMap, Garment, GarmentLibrary, PenetrationResolver, SignedDistance
from .mesh import Mesh, boundary_loops, is_watertight, load_mesh, save_mesh
from .pipeline import PipelineConfig, cmd_fit, cmd_pose, cmd_reconstruct, load_config
from .stitch import CombinedModel, bridge_loops, stitch
from .texture import Image, SkinToneEstimator, blend_seam, dominant_skin_color

__version__ = "0.1.0"

__all__ = [
    "AlignmentConfig",
    "AlignmentResult",
    "BodyModel",
    "CombinedModel",
    "FitMap",
    "Garment",
    "GarmentLibrary",
    "HeadAligner",
    "Image",
    "Mesh",
    "PenetrationResolver",
    "PipelineConfig",
    "Pose",
    "SignedDistance",
    "SkinToneEstimator",
    "align_rotation",
    "align_translation",
    "apply_pose",
    "apply_shape",
    "blend_seam",
    "boundary_loops",
    "bridge_loops",
    "cmd_fit",
    "cmd_pose",
    "cmd_reconstruct",
    "dominant_skin_color",
    "is_watertight",
    "load_body_model",
    "load_config",
    "load_mesh",
    "regress_joints",
    "save_mesh",
    "stitch",
]
