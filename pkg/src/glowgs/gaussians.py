"""Gaussian primitive math: covariance, camera projection, 2D evaluation, SH color.

Scalar, numpy-facing functions operate on single splats and are the reference
API; the rasterizer uses the batched torch twins below (same formulas) so the
whole render stays differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from glowgs.errors import InvalidInputError, NumericalError

NEAR_PLANE = 0.01
COV2D_DILATION = 0.3  # px^2 added to the projected covariance diagonal
CULL_SIGMA = 3.0

# Real spherical harmonics constants, degrees 0..2.
SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)


def sh_coeff_count(degree: int) -> int:
    return (degree + 1) ** 2


@dataclass
class Gaussian3D:
    """One splat: position, orientation, anisotropic scale, opacity, SH color.

    ``quat`` is (w, x, y, z) and is normalized before use; ``log_scale`` holds
    the log of per-axis standard deviations; opacity lives in logit space so
    the optimizer is unconstrained.
    """

    mean: np.ndarray
    quat: np.ndarray
    log_scale: np.ndarray
    opacity_logit: float
    sh: np.ndarray  # ((deg+1)^2, 3)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(3)
        self.quat = np.asarray(self.quat, dtype=np.float64).reshape(4)
        self.log_scale = np.asarray(self.log_scale, dtype=np.float64).reshape(3)
        self.sh = np.asarray(self.sh, dtype=np.float64).reshape(-1, 3)
        if self.sh.shape[0] not in (1, 4, 9):
            raise InvalidInputError(
                f"sh must have 1, 4 or 9 coefficients per channel, got {self.sh.shape[0]}"
            )

    @property
    def sh_degree(self) -> int:
        return int(round(np.sqrt(self.sh.shape[0]))) - 1

    @property
    def opacity(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.opacity_logit)))

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)


@dataclass
class Camera:
    """Pinhole camera with a world-to-camera pose: x_cam = rot @ x_world + trans."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    rot: np.ndarray
    trans: np.ndarray

    def __post_init__(self):
        self.rot = np.asarray(self.rot, dtype=np.float64).reshape(3, 3)
        self.trans = np.asarray(self.trans, dtype=np.float64).reshape(3)
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError("focal lengths must be positive")
        if not np.allclose(self.rot @ self.rot.T, np.eye(3), atol=1e-6):
            raise InvalidInputError("camera rotation must be orthonormal")
        if np.linalg.det(self.rot) < 0:
            raise InvalidInputError("camera rotation must have det +1")

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rot.T @ self.trans

    def scaled(self, s: float) -> "Camera":
        """Same pose, image plane resampled by factor ``s``."""
        return Camera(
            width=int(round(self.width * s)),
            height=int(round(self.height * s)),
            fx=self.fx * s,
            fy=self.fy * s,
            cx=self.cx * s,
            cy=self.cy * s,
            rot=self.rot.copy(),
            trans=self.trans.copy(),
        )


@dataclass
class Gaussian2D:
    """Screen-space footprint of a projected splat."""

    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float

    def __post_init__(self):
        self.mean2d = np.asarray(self.mean2d, dtype=np.float64).reshape(2)
        self.cov2d = np.asarray(self.cov2d, dtype=np.float64).reshape(2, 2)


# --------------------------------------------------------------------------
# Scalar reference API
# --------------------------------------------------------------------------

def quat_to_rotation(q: np.ndarray) -> np.ndarray:
    """Unit-quaternion (w,x,y,z) to a proper rotation matrix; normalizes internally."""
    q = np.asarray(q, dtype=np.float64).reshape(4)
    n = np.linalg.norm(q)
    if n <= 1e-12:
        raise InvalidInputError("quaternion norm too small to normalize")
    w, x, y, z = q / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def build_covariance(rot: np.ndarray, log_scale: np.ndarray) -> np.ndarray:
    """World-space covariance R S S^T R^T with S = diag(exp(log_scale))."""
    rot = np.asarray(rot, dtype=np.float64).reshape(3, 3)
    s = np.exp(np.asarray(log_scale, dtype=np.float64).reshape(3))
    m = rot * s[None, :]  # R @ diag(s)
    return m @ m.T


def project_gaussian(g: Gaussian3D, cam: Camera) -> Gaussian2D | None:
    """EWA projection of one splat; returns None when culled.

    Culling: camera-space depth at or behind the near plane, or the 3-sigma
    screen footprint entirely outside the image.
    """
    t = cam.rot @ g.mean + cam.trans
    depth = float(t[2])
    if depth <= NEAR_PLANE:
        return None
    cov3d = build_covariance(quat_to_rotation(g.quat), g.log_scale)
    inv_z = 1.0 / depth
    jac = np.array(
        [
            [cam.fx * inv_z, 0.0, -cam.fx * t[0] * inv_z * inv_z],
            [0.0, cam.fy * inv_z, -cam.fy * t[1] * inv_z * inv_z],
        ]
    )
    jw = jac @ cam.rot
    cov2d = jw @ cov3d @ jw.T + COV2D_DILATION * np.eye(2)
    mean2d = np.array([cam.fx * t[0] * inv_z + cam.cx, cam.fy * t[1] * inv_z + cam.cy])
    radius = CULL_SIGMA * np.sqrt(max(np.linalg.eigvalsh(cov2d).max(), 0.0))
    if (
        mean2d[0] + radius < 0
        or mean2d[0] - radius > cam.width
        or mean2d[1] + radius < 0
        or mean2d[1] - radius > cam.height
    ):
        return None
    return Gaussian2D(mean2d=mean2d, cov2d=cov2d, depth=depth)


def eval_gaussian2d(g: Gaussian2D, x: np.ndarray) -> float:
    """Unnormalized 2D Gaussian density exp(-0.5 d^T Sigma^-1 d), 1 at the mean."""
    x = np.asarray(x, dtype=np.float64).reshape(2)
    a, b = g.cov2d[0, 0], g.cov2d[0, 1]
    c = g.cov2d[1, 1]
    det = a * c - b * b
    if det <= 0.0 or a <= 0.0:
        raise NumericalError("cov2d is not positive definite")
    d = x - g.mean2d
    power = -0.5 * (c * d[0] * d[0] - 2 * b * d[0] * d[1] + a * d[1] * d[1]) / det
    return float(np.exp(power))


def sh_color(sh: np.ndarray, view_dir: np.ndarray) -> np.ndarray:
    """Evaluate SH coefficients along a unit view direction; clamped to >= 0."""
    view_dir = np.asarray(view_dir, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(view_dir) - 1.0) > 1e-6:
        raise InvalidInputError("view_dir must be unit length")
    sh = np.asarray(sh, dtype=np.float64).reshape(-1, 3)
    rgb = _sh_eval(torch.from_numpy(sh[None]), torch.from_numpy(view_dir[None]))
    return rgb[0].numpy()


# --------------------------------------------------------------------------
# Batched torch twins (used by the rasterizer; differentiable)
# --------------------------------------------------------------------------

def _quat_to_rotation_t(q: torch.Tensor) -> torch.Tensor:
    """(K,4) quaternions (w,x,y,z) to (K,3,3) rotations; normalizes internally."""
    q = q / torch.linalg.norm(q, dim=-1, keepdim=True).clamp_min(1e-12)
    w, x, y, z = q.unbind(-1)
    rows = [
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ]
    return torch.stack(rows, dim=-1).reshape(q.shape[:-1] + (3, 3))


def _build_covariance_t(quat: torch.Tensor, log_scale: torch.Tensor) -> torch.Tensor:
    r = _quat_to_rotation_t(quat)
    m = r * torch.exp(log_scale).unsqueeze(-2)
    return m @ m.transpose(-1, -2)


def _project_t(
    means: torch.Tensor,
    quats: torch.Tensor,
    log_scales: torch.Tensor,
    cam: Camera,
    dilation: float = COV2D_DILATION,
):
    """Project a batch of splats. Returns (mean2d, cov2d, depth) without culling."""
    rot = torch.as_tensor(cam.rot, dtype=means.dtype)
    trans = torch.as_tensor(cam.trans, dtype=means.dtype)
    t = means @ rot.T + trans
    depth = t[:, 2]
    inv_z = 1.0 / depth
    mean2d = torch.stack(
        [cam.fx * t[:, 0] * inv_z + cam.cx, cam.fy * t[:, 1] * inv_z + cam.cy], dim=-1
    )
    zeros = torch.zeros_like(depth)
    jac = torch.stack(
        [
            torch.stack([cam.fx * inv_z, zeros, -cam.fx * t[:, 0] * inv_z * inv_z], dim=-1),
            torch.stack([zeros, cam.fy * inv_z, -cam.fy * t[:, 1] * inv_z * inv_z], dim=-1),
        ],
        dim=-2,
    )  # (K,2,3)
    cov3d = _build_covariance_t(quats, log_scales)
    jw = jac @ rot
    cov2d = jw @ cov3d @ jw.transpose(-1, -2)
    cov2d = cov2d + dilation * torch.eye(2, dtype=means.dtype)
    return mean2d, cov2d, depth


def _sh_eval(sh: torch.Tensor, dirs: torch.Tensor) -> torch.Tensor:
    """Evaluate real SH up to degree 2. sh: (K,C,3), dirs: (K,3) unit. Clamped >= 0."""
    n_coeff = sh.shape[-2]
    rgb = SH_C0 * sh[..., 0, :] + 0.5
    if n_coeff > 1:
        x, y, z = dirs.unbind(-1)
        rgb = rgb + SH_C1 * (
            -y.unsqueeze(-1) * sh[..., 1, :]
            + z.unsqueeze(-1) * sh[..., 2, :]
            - x.unsqueeze(-1) * sh[..., 3, :]
        )
    if n_coeff > 4:
        x, y, z = dirs.unbind(-1)
        xx, yy, zz = x * x, y * y, z * z
        basis = torch.stack(
            [
                SH_C2[0] * x * y,
                SH_C2[1] * y * z,
                SH_C2[2] * (2 * zz - xx - yy),
                SH_C2[3] * x * z,
                SH_C2[4] * (xx - yy),
            ],
            dim=-1,
        )  # (K,5)
        rgb = rgb + torch.einsum("...k,...kc->...c", basis, sh[..., 4:9, :])
    return rgb.clamp_min(0.0)


@dataclass
class _Projection:
    """Culled, depth-sorted projection shared by the rasterizer."""

    mean2d: torch.Tensor  # (V,2) sorted front-to-back
    cov2d: torch.Tensor  # (V,2,2)
    depth: np.ndarray  # (V,)
    ids: np.ndarray  # (V,) original indices, sorted order
    radius: np.ndarray  # (V,) 3-sigma pixel radius


def _project_and_sort(
    means: torch.Tensor,
    quats: torch.Tensor,
    log_scales: torch.Tensor,
    cam: Camera,
) -> _Projection | None:
    mean2d, cov2d, depth = _project_t(means, quats, log_scales, cam)
    with torch.no_grad():
        d = depth.numpy()
        m = mean2d.numpy()
        c = cov2d.numpy()
        half_tr = 0.5 * (c[:, 0, 0] + c[:, 1, 1])
        det = c[:, 0, 0] * c[:, 1, 1] - c[:, 0, 1] * c[:, 1, 0]
        lam_max = half_tr + np.sqrt(np.maximum(half_tr * half_tr - det, 0.0))
        radius = CULL_SIGMA * np.sqrt(np.maximum(lam_max, 0.0))
        keep = (
            (d > NEAR_PLANE)
            & (m[:, 0] + radius >= 0)
            & (m[:, 0] - radius <= cam.width)
            & (m[:, 1] + radius >= 0)
            & (m[:, 1] - radius <= cam.height)
        )
        ids = np.nonzero(keep)[0]
        if ids.size == 0:
            return None
        order = np.lexsort((ids, d[ids]))  # depth asc, id asc on ties
        ids = ids[order]
    idx = torch.from_numpy(ids)
    return _Projection(
        mean2d=mean2d[idx],
        cov2d=cov2d[idx],
        depth=d[ids],
        ids=ids,
        radius=radius[ids],
    )
