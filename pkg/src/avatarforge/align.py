"""Iterative head alignment against the body's neck.

The head is rotated about its centroid until a set of vertices on its
sagittal (mirror) line share one x coordinate, then pitched until a
front-to-back vertex profile is level.  Each axis is driven by a weighted
deviation error and a sign-searching step factor that reverses and halves
whenever its error grows.

Coordinates are y-up, z pointing out of the face, x lateral.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_points, check_weight_form
from .errors import AlignmentNotConvergedError, DegenerateSpreadError, EmptyLoopError
from .mesh import Mesh, rotation_matrix, transform_mesh

STEP_MIN = 1e-6
STEP_MAX = 1e-1


def weight(z, center, sigma, weight_form="gaussian"):
    """Exponential z-weight.  ``gaussian`` decays away from ``center``;
    ``literal`` uses the positive exponent and grows without bound."""
    check_weight_form(weight_form)
    if not sigma > 0:
        raise DegenerateSpreadError("z spread is zero; the weight is undefined")
    u = ((np.asarray(z, dtype=np.float64) - center) / sigma) ** 2
    return np.exp(-u) if weight_form == "gaussian" else np.exp(u)


def z_stats(points):
    """Mean and spread (standard deviation) of the z coordinates."""
    z = check_points(points, min_points=2)[:, 2]
    sigma = float(z.std())
    if sigma <= 0.0:
        raise DegenerateSpreadError("all points share one z coordinate")
    return float(z.mean()), sigma


def _x_deviation(points):
    x = points[:, 0]
    return np.abs(x - x.mean())


def error_y(points, alpha, sigma, weight_form="gaussian") -> float:
    """Sum of |x_i - mean x| weighted by w(z_i)."""
    p = check_points(points, min_points=2)
    return float(np.sum(_x_deviation(p) * weight(p[:, 2], alpha, sigma, weight_form)))


def error_z(points, alpha, sigma, weight_form="gaussian") -> float:
    """Sum of |x_i - mean x| weighted by 1 - w(z_i)."""
    p = check_points(points, min_points=2)
    return float(np.sum(_x_deviation(p) * (1.0 - weight(p[:, 2], alpha, sigma, weight_form))))


def error_x(points, d, z_mean, sigma, weight_form="gaussian") -> float:
    """Sum of |y_i - d| weighted by w(z_i) centred on ``z_mean``."""
    p = check_points(points, min_points=2)
    return float(np.sum(np.abs(p[:, 1] - d) * weight(p[:, 2], z_mean, sigma, weight_form)))


def step_angle(prev_angle, c, e):
    return prev_angle + 360.0 * c * e


def update_step_factor(c_prev, e_prev, e_curr, c_min=STEP_MIN, c_max=STEP_MAX):
    """Reverse and halve the step factor when the error grew, else keep it."""
    c = -c_prev / 2.0 if e_curr > e_prev else c_prev
    sign = -1.0 if c < 0 else 1.0
    return sign * min(max(abs(c), c_min), c_max)


def correction_matrix(angles) -> np.ndarray:
    """Rotation for angles (R_x, R_y, R_z) in degrees: z first, then y, then x."""
    ax, ay, az = angles
    return rotation_matrix("x", ax) @ rotation_matrix("y", ay) @ rotation_matrix("z", az)


def rotate_about(points, angles, center):
    return (np.asarray(points) - center) @ correction_matrix(angles).T + center


@dataclass
class AlignmentConfig:
    max_iters: int = 500
    tol: float = 1e-4
    c_init: float = 3e-2
    weight_form: str = "gaussian"

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        check_weight_form(self.weight_form)


@dataclass
class AlignmentState:
    angles: np.ndarray = field(default_factory=lambda: np.zeros(3))
    errors: np.ndarray = field(default_factory=lambda: np.full(3, np.inf))  # (E_x, E_y, E_z)
    c: np.ndarray = field(default_factory=lambda: np.zeros(3))  # (C_x, C_y, C_z)
    alpha: float = 0.0
    sigma: float = 1.0
    d: float = 0.0
    profile_z_mean: float = 0.0


@dataclass
class AlignmentResult:
    angles: np.ndarray
    iterations: int
    errors: tuple[float, float, float]
    converged: bool
    state: AlignmentState
    history: list = field(default_factory=list)

    def to_dict(self):
        return {
            "angles_deg": [float(a) for a in self.angles],
            "iterations": int(self.iterations),
            "final_errors": {"E_x": self.errors[0], "E_y": self.errors[1], "E_z": self.errors[2]},
            "converged": bool(self.converged),
        }


def _sagittal_errors(points, state, weight_form):
    state.alpha, state.sigma = z_stats(points)
    ey = error_y(points, state.alpha, state.sigma, weight_form)
    ez = error_z(points, state.alpha, state.sigma, weight_form)
    return ey, ez


def _profile_error(points, state, weight_form):
    state.profile_z_mean, sigma = z_stats(points)
    return error_x(points, state.d, state.profile_z_mean, sigma, weight_form)


def _axis_errors(ey, ez, weight_form):
    """Pick (yaw error, roll error) from (E_y, E_z).

    Under yaw the x-deviation of a sagittal point grows with its distance
    from the mean z, so yaw needs the error that weights far-z points:
    E_y in the literal form, E_z (the ``1 - w`` factor) in the Gaussian
    form.  Roll is driven by the other one.
    """
    if weight_form == "gaussian":
        return ez, ey
    return ey, ez


def align_rotation(head: Mesh, sets, config: AlignmentConfig | None = None) -> AlignmentResult:
    """Find (R_x, R_y, R_z) that level the head.

    ``sets`` is ``(sagittal_indices, profile_indices)``.  R_y and R_z are
    updated together each iteration; R_x follows in a second phase.  The
    phases repeat until every error is below ``tol``, all sharing one
    ``max_iters`` budget.

    Raises AlignmentNotConvergedError (carrying the result) if an error is
    still >= tol when the budget runs out.
    """
    config = config or AlignmentConfig()
    sagittal, profile = (np.asarray(s, dtype=np.int64) for s in sets)
    for name, idx in (("sagittal", sagittal), ("profile", profile)):
        if idx.size == 0:
            raise ValueError(f"{name} symmetry set is empty")
        if idx.min() < 0 or idx.max() >= head.n_vertices:
            raise ValueError(f"{name} symmetry set has an index out of range")
    form = config.weight_form
    center = head.centroid()
    sag0 = head.vertices[sagittal]
    prof0 = head.vertices[profile]

    state = AlignmentState(c=np.full(3, float(config.c_init)))
    state.d = float(prof0[:, 1].mean())
    history = []

    ey, ez = _sagittal_errors(sag0, state, form)
    ex = _profile_error(prof0, state, form)
    history.append((state.angles.copy(), (ex, ey, ez)))
    it = 0

    # Alternate the two phases: pitching the head shifts the z-weights of
    # the sagittal set, so y/z may need another pass after x settles.
    while max(abs(ex), abs(ey), abs(ez)) >= config.tol and it < config.max_iters:
        # R_y and R_z in parallel.
        while max(abs(ey), abs(ez)) >= config.tol and it < config.max_iters:
            it += 1
            e_yaw, e_roll = _axis_errors(ey, ez, form)
            state.angles[1] = step_angle(state.angles[1], state.c[1], e_yaw)
            state.angles[2] = step_angle(state.angles[2], state.c[2], e_roll)
            ey_new, ez_new = _sagittal_errors(rotate_about(sag0, state.angles, center), state, form)
            yaw_new, roll_new = _axis_errors(ey_new, ez_new, form)
            state.c[1] = update_step_factor(state.c[1], abs(e_yaw), abs(yaw_new))
            state.c[2] = update_step_factor(state.c[2], abs(e_roll), abs(roll_new))
            ey, ez = ey_new, ez_new
            ex = _profile_error(rotate_about(prof0, state.angles, center), state, form)
            history.append((state.angles.copy(), (ex, ey, ez)))

        # R_x on the front-to-back profile.
        while abs(ex) >= config.tol and it < config.max_iters:
            it += 1
            state.angles[0] = step_angle(state.angles[0], state.c[0], ex)
            ex_new = _profile_error(rotate_about(prof0, state.angles, center), state, form)
            state.c[0] = update_step_factor(state.c[0], abs(ex), abs(ex_new))
            ex = ex_new
            history.append((state.angles.copy(), (ex, ey, ez)))
        ey, ez = _sagittal_errors(rotate_about(sag0, state.angles, center), state, form)

    ey, ez = _sagittal_errors(rotate_about(sag0, state.angles, center), state, form)
    state.errors = np.array([ex, ey, ez])
    converged = bool(np.all(np.abs(state.errors) < config.tol))
    result = AlignmentResult(
        angles=state.angles.copy(),
        iterations=it,
        errors=(float(ex), float(ey), float(ez)),
        converged=converged,
        state=state,
        history=history,
    )
    if not converged:
        raise AlignmentNotConvergedError(
            f"head alignment did not reach tol={config.tol} in {config.max_iters} iterations "
            f"(E_x={ex:.3g}, E_y={ey:.3g}, E_z={ez:.3g})",
            result,
        )
    return result


def rotate_head(head: Mesh, angles, center=None) -> Mesh:
    """Apply alignment angles about ``center`` (default: the head centroid)."""
    center = head.centroid() if center is None else np.asarray(center, dtype=float)
    return transform_mesh(head, correction_matrix(angles), center=center)


def _loop_points(mesh, loop, what):
    loop = np.asarray(loop, dtype=np.int64).ravel()
    if loop.size == 0:
        raise EmptyLoopError(f"{what} loop is empty")
    return mesh.vertices[loop]


def align_translation(head: Mesh, body: Mesh, head_cut_loop, body_neck_loop, gap=0.0, up_axis=1):
    """Translation moving the head's cut loop onto the body's neck loop.

    Loop centroids are matched; if the head loop then dips below the top
    of the neck loop the head is lifted so the two clear by ``gap``.
    """
    head_pts = _loop_points(head, head_cut_loop, "head cut")
    neck_pts = _loop_points(body, body_neck_loop, "body neck")
    t = neck_pts.mean(axis=0) - head_pts.mean(axis=0)
    overlap = neck_pts[:, up_axis].max() - (head_pts[:, up_axis] + t[up_axis]).min()
    lift = max(0.0, float(overlap)) + float(gap)
    if lift > 0.0:
        t[up_axis] += lift
    return t


class HeadAligner(TransformerMixin, BaseEstimator):
    """Estimate head alignment angles and apply them.

    Parameters
    ----------
    weight_form : {"gaussian", "literal"}
    tol : float
        Stop once every error is below this value (model units).
    max_iters : int
        Iteration budget shared by the y/z and x phases.
    c_init : float
        Initial step factor for every axis.
    sagittal_group, profile_group : str
        Vertex groups holding the symmetry-line and z-profile vertices.
    strict : bool
        If True, ``fit`` raises when alignment does not converge; otherwise
        the best angles found are kept and ``converged_`` is False.
    """

    def __init__(
        self,
        weight_form="gaussian",
        tol=1e-4,
        max_iters=500,
        c_init=3e-2,
        sagittal_group="sagittal_line",
        profile_group="z_profile",
        strict=True,
    ):
        self.weight_form = weight_form
        self.tol = tol
        self.max_iters = max_iters
        self.c_init = c_init
        self.sagittal_group = sagittal_group
        self.profile_group = profile_group
        self.strict = strict

    def fit(self, X: Mesh, y=None):
        config = AlignmentConfig(
            max_iters=self.max_iters, tol=self.tol, c_init=self.c_init, weight_form=self.weight_form
        )
        sets = (X.group(self.sagittal_group), X.group(self.profile_group))
        try:
            result = align_rotation(X, sets, config)
        except AlignmentNotConvergedError as exc:
            if self.strict:
                raise
            result = exc.result
        self.result_ = result
        self.angles_ = result.angles
        self.n_iter_ = result.iterations
        self.errors_ = result.errors
        self.converged_ = result.converged
        self.center_ = X.centroid()
        return self

    def transform(self, X: Mesh) -> Mesh:
        check_is_fitted(self, "angles_")
        return rotate_head(X, self.angles_, center=self.center_)
