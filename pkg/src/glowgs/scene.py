"""Batched scene container bridging the per-splat API and tensor training state."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from glowgs.errors import InvalidInputError
from glowgs.gaussians import Camera, Gaussian3D, sh_coeff_count


@dataclass
class GaussianScene:
    """All splats of a scene as contiguous arrays (float64 internally)."""

    means: np.ndarray  # (K,3)
    quats: np.ndarray  # (K,4) wxyz
    log_scales: np.ndarray  # (K,3)
    opacity_logits: np.ndarray  # (K,)
    sh: np.ndarray  # (K,C,3)

    def __post_init__(self):
        k = self.means.shape[0]
        self.means = np.asarray(self.means, dtype=np.float64).reshape(k, 3)
        self.quats = np.asarray(self.quats, dtype=np.float64).reshape(k, 4)
        self.log_scales = np.asarray(self.log_scales, dtype=np.float64).reshape(k, 3)
        self.opacity_logits = np.asarray(self.opacity_logits, dtype=np.float64).reshape(k)
        sh = np.asarray(self.sh, dtype=np.float64)
        if sh.ndim != 3:
            sh = sh.reshape(k, -1, 3)
        self.sh = sh
        if self.sh.shape[1] not in (1, 4, 9):
            raise InvalidInputError("sh coefficient count must be 1, 4 or 9")

    def __len__(self) -> int:
        return self.means.shape[0]

    @property
    def sh_degree(self) -> int:
        return int(round(np.sqrt(self.sh.shape[1]))) - 1

    @classmethod
    def from_gaussians(cls, gaussians: list[Gaussian3D]) -> "GaussianScene":
        if not gaussians:
            return cls.empty(sh_degree=0)
        return cls(
            means=np.stack([g.mean for g in gaussians]),
            quats=np.stack([g.quat for g in gaussians]),
            log_scales=np.stack([g.log_scale for g in gaussians]),
            opacity_logits=np.array([g.opacity_logit for g in gaussians]),
            sh=np.stack([g.sh for g in gaussians]),
        )

    @classmethod
    def empty(cls, sh_degree: int = 0) -> "GaussianScene":
        c = sh_coeff_count(sh_degree)
        return cls(
            means=np.zeros((0, 3)),
            quats=np.zeros((0, 4)),
            log_scales=np.zeros((0, 3)),
            opacity_logits=np.zeros((0,)),
            sh=np.zeros((0, c, 3)),
        )

    def to_gaussians(self) -> list[Gaussian3D]:
        return [
            Gaussian3D(
                mean=self.means[i],
                quat=self.quats[i],
                log_scale=self.log_scales[i],
                opacity_logit=float(self.opacity_logits[i]),
                sh=self.sh[i],
            )
            for i in range(len(self))
        ]

    def tensors(self, dtype: torch.dtype = torch.float32, requires_grad: bool = False):
        """Parameter tensors in a fixed order: means, quats, log_scales, logits, sh."""
        out = tuple(
            torch.tensor(a, dtype=dtype, requires_grad=requires_grad)
            for a in (self.means, self.quats, self.log_scales, self.opacity_logits, self.sh)
        )
        return out

    @classmethod
    def from_tensors(cls, means, quats, log_scales, opacity_logits, sh) -> "GaussianScene":
        return cls(
            means=means.detach().cpu().numpy().astype(np.float64),
            quats=quats.detach().cpu().numpy().astype(np.float64),
            log_scales=log_scales.detach().cpu().numpy().astype(np.float64),
            opacity_logits=opacity_logits.detach().cpu().numpy().astype(np.float64),
            sh=sh.detach().cpu().numpy().astype(np.float64),
        )

    def copy(self) -> "GaussianScene":
        return GaussianScene(
            means=self.means.copy(),
            quats=self.quats.copy(),
            log_scales=self.log_scales.copy(),
            opacity_logits=self.opacity_logits.copy(),
            sh=self.sh.copy(),
        )


def random_scene(
    cameras: list[Camera],
    count: int,
    rng: np.random.Generator,
    sh_degree: int = 0,
    depth_range: tuple[float, float] = (1.0, 5.0),
    init_scale: float = 0.08,
    init_opacity_logit: float = -2.0,
) -> GaussianScene:
    """Seed a scene with random splats inside the union of the view frustums.

    Points are sampled per camera by unprojecting uniform pixels at uniform
    depths, so every training view starts covered.
    """
    if not cameras:
        raise InvalidInputError("need at least one camera to seed a scene")
    per_cam = int(np.ceil(count / len(cameras)))
    pts = []
    for cam in cameras:
        px = rng.uniform(0, cam.width, size=per_cam)
        py = rng.uniform(0, cam.height, size=per_cam)
        z = rng.uniform(depth_range[0], depth_range[1], size=per_cam)
        x = (px - cam.cx) / cam.fx * z
        y = (py - cam.cy) / cam.fy * z
        cam_pts = np.stack([x, y, z], axis=-1)
        pts.append((cam_pts - cam.trans) @ cam.rot)  # rot^T @ (p - t), vectorized
    means = np.concatenate(pts)[:count]
    k = means.shape[0]
    quats = rng.normal(size=(k, 4))
    quats /= np.linalg.norm(quats, axis=-1, keepdims=True)
    sh = np.zeros((k, sh_coeff_count(sh_degree), 3))
    sh[:, 0, :] = rng.uniform(-1.0, 0.5, size=(k, 3))
    return GaussianScene(
        means=means,
        quats=quats,
        log_scales=np.full((k, 3), np.log(init_scale)) + rng.uniform(-0.3, 0.3, size=(k, 3)),
        opacity_logits=np.full((k,), init_opacity_logit),
        sh=sh,
    )
