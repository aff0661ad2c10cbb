"""Optimization loop: reconstruction loss on training views, feature-bank loss
on renders at perturbed poses, Adam updates, densify/prune."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np
import torch

from glowgs.descriptor import patch_features
from glowgs.errors import InvalidInputError, NumericalError
from glowgs.featbank import FeatureBank, semantic_term
from glowgs.gaussians import Camera, quat_to_rotation
from glowgs.metrics import ssim_torch
from glowgs.rasterizer import render_tensors
from glowgs.scene import GaussianScene


@dataclass
class TrainConfig:
    """Knobs for one training run. ``lambda_weight`` is the loss balance: on
    iterations where the semantic branch fires, total = lambda * L_ori +
    (1 - lambda) * semantic; other iterations optimize L_ori alone."""

    lambda_weight: float = 0.01
    iters: int = 300
    semantic_every: int = 10
    semantic_from: int = 0  # first iteration eligible for the semantic branch
    semantic_enabled: bool = True
    perturb_rot_deg: float = 2.0
    perturb_trans_frac: float = 0.01
    crop: int = 256
    bank_threshold: float = 1.5
    seed: int = 0
    init_count: int = 2000
    sh_degree: int = 1
    background: tuple = (0.0, 0.0, 0.0)
    dtype: str = "f32"
    # Per-group learning rates; the mean lr decays exponentially to lr_mean_final.
    lr_mean: float = 2e-3
    lr_mean_final: float = 2e-4
    lr_quat: float = 2e-3
    lr_scale: float = 6e-3
    lr_opacity: float = 5e-2
    lr_sh: float = 5e-3
    # Densification / pruning.
    densify_every: int = 60
    densify_from: int = 50
    densify_until_frac: float = 0.6
    densify_grad_thresh: float = 1e-5
    split_scale_frac: float = 0.02
    prune_opacity: float = 0.005
    prune_scale_frac: float = 0.3  # of scene extent; curbs runaway footprints
    max_gaussians: int = 8000

    def __post_init__(self):
        if not (0.0 <= self.lambda_weight <= 1.0):
            raise InvalidInputError("lambda_weight must lie in [0, 1]")
        if self.semantic_every < 1:
            raise InvalidInputError("semantic_every must be >= 1")

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "f64" else torch.float32


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def append(self, **kw) -> None:
        self.records.append(kw)

    def write_ndjson(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for rec in self.records:
                f.write(json.dumps(rec) + "\n")


def original_loss_t(render: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Backbone reconstruction loss: 0.8 * MAE + 0.2 * (1 - SSIM)."""
    if render.shape != gt.shape:
        raise InvalidInputError(f"shape mismatch: {tuple(render.shape)} vs {tuple(gt.shape)}")
    l1 = (render - gt).abs().mean()
    return 0.8 * l1 + 0.2 * (1.0 - ssim_torch(render, gt))


def original_loss(render: np.ndarray, gt: np.ndarray) -> float:
    render = np.asarray(render, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    return float(original_loss_t(torch.from_numpy(render), torch.from_numpy(gt)))


def camera_extent(cameras: list[Camera]) -> float:
    """Scene scale proxy: largest distance between any two camera centers."""
    centers = np.stack([c.center for c in cameras])
    if len(centers) < 2:
        return 1.0
    d = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
    return float(max(d.max(), 1e-6))


def _rodrigues(axis: np.ndarray, angle: float) -> np.ndarray:
    k = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def perturb_pose(
    cam: Camera,
    rot_deg: float,
    trans_frac: float,
    extent: float,
    rng: np.random.Generator,
) -> Camera:
    """Random small rigid perturbation of a camera pose."""
    if rot_deg < 0 or trans_frac < 0:
        raise InvalidInputError("perturbation magnitudes must be >= 0")
    if rot_deg == 0 and trans_frac == 0:
        return Camera(cam.width, cam.height, cam.fx, cam.fy, cam.cx, cam.cy,
                      cam.rot.copy(), cam.trans.copy())
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.deg2rad(rng.uniform(0.0, rot_deg))
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    radius = trans_frac * extent * rng.uniform(0.0, 1.0) ** (1.0 / 3.0)
    rot = _rodrigues(axis, angle) @ cam.rot
    center = cam.center + radius * direction
    return Camera(cam.width, cam.height, cam.fx, cam.fy, cam.cx, cam.cy, rot, -rot @ center)


def densify_and_prune(
    scene: GaussianScene,
    grad_stats: np.ndarray,
    cfg: TrainConfig,
    extent: float = 1.0,
    rng: np.random.Generator | None = None,
) -> tuple[GaussianScene, dict]:
    """Adaptive density control: clone small / split large high-gradient splats,
    prune near-transparent ones. Returns the new scene and operation counts."""
    if rng is None:
        rng = np.random.default_rng(0)
    k = len(scene)
    grad_stats = np.asarray(grad_stats, dtype=np.float64).reshape(k)
    scales = np.exp(scene.log_scales).max(axis=1)
    high = grad_stats > cfg.densify_grad_thresh
    big = scales > cfg.split_scale_frac * extent
    clone = high & ~big
    split = high & big
    if k >= cfg.max_gaussians:
        clone[:] = False
        split[:] = False

    parts = {
        "means": [scene.means],
        "quats": [scene.quats],
        "log_scales": [scene.log_scales],
        "opacity_logits": [scene.opacity_logits],
        "sh": [scene.sh],
    }
    keep = np.ones(k, dtype=bool)
    if clone.any():
        parts["means"].append(scene.means[clone])
        parts["quats"].append(scene.quats[clone])
        parts["log_scales"].append(scene.log_scales[clone])
        parts["opacity_logits"].append(scene.opacity_logits[clone])
        parts["sh"].append(scene.sh[clone])
    if split.any():
        idx = np.nonzero(split)[0]
        keep[idx] = False  # parent replaced by two children
        for _ in range(2):
            offs = rng.normal(size=(idx.size, 3)) * np.exp(scene.log_scales[idx])
            rots = np.stack([quat_to_rotation(scene.quats[i]) for i in idx])
            world_offs = np.einsum("kij,kj->ki", rots, offs)
            parts["means"].append(scene.means[idx] + world_offs)
            parts["quats"].append(scene.quats[idx])
            parts["log_scales"].append(scene.log_scales[idx] - np.log(1.6))
            parts["opacity_logits"].append(scene.opacity_logits[idx])
            parts["sh"].append(scene.sh[idx])

    # Assemble survivors first, then appended children.
    def gather(name, first_mask):
        arrs = parts[name]
        return np.concatenate([arrs[0][first_mask]] + arrs[1:]) if len(arrs) > 1 else arrs[0][first_mask]

    merged = GaussianScene(
        means=gather("means", keep),
        quats=gather("quats", keep),
        log_scales=gather("log_scales", keep),
        opacity_logits=gather("opacity_logits", keep),
        sh=gather("sh", keep),
    )
    opacity = 1.0 / (1.0 + np.exp(-merged.opacity_logits))
    alive = (opacity >= cfg.prune_opacity) & (
        np.exp(merged.log_scales).max(axis=1) <= cfg.prune_scale_frac * extent
    )
    pruned = int((~alive).sum())
    merged = GaussianScene(
        means=merged.means[alive],
        quats=merged.quats[alive],
        log_scales=merged.log_scales[alive],
        opacity_logits=merged.opacity_logits[alive],
        sh=merged.sh[alive],
    )
    return merged, {"cloned": int(clone.sum()), "split": int(split.sum()), "pruned": pruned}


def _make_optimizer(params: list[torch.Tensor], cfg: TrainConfig, extent: float):
    groups = [
        {"params": [params[0]], "lr": cfg.lr_mean * extent, "name": "means"},
        {"params": [params[1]], "lr": cfg.lr_quat, "name": "quats"},
        {"params": [params[2]], "lr": cfg.lr_scale, "name": "log_scales"},
        {"params": [params[3]], "lr": cfg.lr_opacity, "name": "opacity_logits"},
        {"params": [params[4]], "lr": cfg.lr_sh, "name": "sh"},
    ]
    return torch.optim.Adam(groups, eps=1e-15)


def train(
    scene0: GaussianScene,
    views: list[tuple[np.ndarray, Camera]],
    bank: FeatureBank | None,
    cfg: TrainConfig,
) -> tuple[GaussianScene, TrainLog]:
    """Optimize a scene against posed training views, with optional feature-bank
    supervision at perturbed poses. Deterministic for a fixed config and seed."""
    if not views:
        raise InvalidInputError("need at least one training view")
    semantic_active = cfg.semantic_enabled and cfg.lambda_weight < 1.0
    if semantic_active and (bank is None or len(bank) == 0):
        raise InvalidInputError("semantic supervision requires a non-empty feature bank")

    dtype = cfg.torch_dtype
    rng = np.random.default_rng(cfg.seed)
    torch.manual_seed(cfg.seed)
    cams = [c for _, c in views]
    extent = camera_extent(cams)
    gts = [torch.tensor(np.asarray(img, dtype=np.float64), dtype=dtype) for img, _ in views]

    scene = scene0.copy()
    params = list(scene.tensors(dtype=dtype, requires_grad=True))
    opt = _make_optimizer(params, cfg, extent)
    grad_accum = np.zeros(len(scene))
    grad_count = 0
    densify_until = int(cfg.iters * cfg.densify_until_frac)
    log = TrainLog()
    lr_decay = (
        (cfg.lr_mean_final / cfg.lr_mean) ** (1.0 / cfg.iters) if cfg.iters > 0 else 1.0
    )

    for it in range(1, cfg.iters + 1):
        opt.param_groups[0]["lr"] = cfg.lr_mean * extent * lr_decay**it
        t0 = time.perf_counter()
        vi = int(rng.integers(len(views)))
        cam = cams[vi]
        image, _ = render_tensors(*params, cam, cfg.background)
        l_ori = original_loss_t(image, gts[vi])

        sem_val = None
        if semantic_active and it >= cfg.semantic_from and it % cfg.semantic_every == 0:
            sem = _semantic_branch(params, cam, bank, cfg, extent, rng)
            total = cfg.lambda_weight * l_ori + (1.0 - cfg.lambda_weight) * sem
            sem_val = float(sem.detach())
        else:
            total = l_ori

        opt.zero_grad(set_to_none=True)
        if total.requires_grad:  # a view can see no splats at all
            total.backward()
            with torch.no_grad():
                g = params[0].grad
                if g is not None:
                    grad_accum += np.linalg.norm(g.numpy(), axis=1)
                    grad_count += 1
            opt.step()
        with torch.no_grad():
            # Bound world scale so a single splat cannot swallow the screen.
            params[2].clamp_(max=float(np.log(cfg.prune_scale_frac * extent)))

        # Log the composition in float64 of the logged terms so the identity
        # total == lambda * l_ori + (1 - lambda) * semantic holds exactly.
        l_ori_val = float(l_ori.detach())
        if sem_val is None:
            total_val = l_ori_val
        else:
            total_val = cfg.lambda_weight * l_ori_val + (1.0 - cfg.lambda_weight) * sem_val
        log.append(
            iter=it,
            l_ori=l_ori_val,
            semantic=sem_val,
            total=total_val,
            count=int(params[0].shape[0]),
            seconds=time.perf_counter() - t0,
        )

        if (
            cfg.densify_every > 0
            and cfg.densify_from <= it <= densify_until
            and it % cfg.densify_every == 0
            and grad_count > 0
        ):
            snapshot = GaussianScene.from_tensors(*params)
            snapshot, counts = densify_and_prune(
                snapshot, grad_accum / grad_count, cfg, extent=extent, rng=rng
            )
            if len(snapshot) == 0:
                raise NumericalError("all Gaussians pruned; training aborted")
            params = list(snapshot.tensors(dtype=dtype, requires_grad=True))
            opt = _make_optimizer(params, cfg, extent)
            grad_accum = np.zeros(len(snapshot))
            grad_count = 0
            log.records[-1].update(counts)

    return GaussianScene.from_tensors(*params), log


def _semantic_branch(params, cam: Camera, bank, cfg: TrainConfig, extent, rng):
    """Render a perturbed pose, crop, describe, and score against the bank.

    Views smaller than the descriptor crop are rendered at native resolution
    and bilinearly upscaled (differentiably), mirroring how small images are
    handled when the bank is built, so query and bank features live in the
    same space.
    """
    pcam = perturb_pose(cam, cfg.perturb_rot_deg, cfg.perturb_trans_frac, extent, rng)
    image, _ = render_tensors(*params, pcam, cfg.background)
    h, w = image.shape[0], image.shape[1]
    if min(h, w) < cfg.crop:
        s = cfg.crop / min(h, w)
        nh, nw = max(int(round(h * s)), cfg.crop), max(int(round(w * s)), cfg.crop)
        image = torch.nn.functional.interpolate(
            image.permute(2, 0, 1)[None], size=(nh, nw),
            mode="bilinear", align_corners=False,
        )[0].permute(1, 2, 0)
        h, w = nh, nw
    x = int(rng.integers(0, w - cfg.crop + 1))
    y = int(rng.integers(0, h - cfg.crop + 1))
    patches, _ = patch_features(image[y : y + cfg.crop, x : x + cfg.crop])
    sem, _ = semantic_term(patches, bank)
    return sem
