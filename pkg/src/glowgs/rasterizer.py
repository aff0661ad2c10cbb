"""Tile-based front-to-back alpha blending and its backward pass.

The forward pass projects every splat, depth-sorts (ties broken by splat id),
bins splats into 16x16 pixel tiles and blends per pixel with early termination
once transmittance drops below 1e-4. The backward pass reverse-modes the exact
forward computation, so stopped tails contribute exactly zero gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from glowgs.errors import InvalidInputError
from glowgs.gaussians import Camera, _project_and_sort, _sh_eval
from glowgs.scene import GaussianScene

TILE = 16
STOP_TRANSMITTANCE = 1e-4


@dataclass
class RenderOutput:
    """Rendered image plus the saved context needed for the backward pass."""

    image: np.ndarray  # (H,W,3)
    alpha: np.ndarray  # (H,W)
    ctx: dict


@dataclass
class SceneGrads:
    """Per-splat parameter gradients, same shapes as the scene arrays."""

    means: np.ndarray
    quats: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    sh: np.ndarray


def render_tensors(
    means: torch.Tensor,
    quats: torch.Tensor,
    log_scales: torch.Tensor,
    opacity_logits: torch.Tensor,
    sh: torch.Tensor,
    cam: Camera,
    background,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Differentiable render. Returns (image (H,W,3), alpha (H,W)) tensors."""
    dtype = means.dtype
    h, w = cam.height, cam.width
    bg = torch.as_tensor(background, dtype=dtype).reshape(3)
    image = torch.zeros((h, w, 3), dtype=dtype) + bg
    alpha = torch.zeros((h, w), dtype=dtype)
    if means.shape[0] == 0:
        return image, alpha
    proj = _project_and_sort(means, quats, log_scales, cam)
    if proj is None:
        return image, alpha

    idx = torch.from_numpy(proj.ids)
    cam_center = torch.as_tensor(cam.center, dtype=dtype)
    dirs = means[idx] - cam_center
    dirs = dirs / torch.linalg.norm(dirs, dim=-1, keepdim=True).clamp_min(1e-12)
    colors = _sh_eval(sh[idx], dirs)  # (V,3)
    opac = torch.sigmoid(opacity_logits[idx])

    cov = proj.cov2d
    a, b, c = cov[:, 0, 0], cov[:, 0, 1], cov[:, 1, 1]
    det = a * c - b * b
    conic = torch.stack([c / det, -b / det, a / det], dim=-1)  # (V,3)
    mean2d = proj.mean2d

    # Tile binning on detached centers/radii.
    m2d = mean2d.detach().numpy()
    tiles_x = math.ceil(w / TILE)
    tiles_y = math.ceil(h / TILE)
    tx0 = np.clip(((m2d[:, 0] - proj.radius) // TILE).astype(int), 0, tiles_x - 1)
    tx1 = np.clip(((m2d[:, 0] + proj.radius) // TILE).astype(int), 0, tiles_x - 1)
    ty0 = np.clip(((m2d[:, 1] - proj.radius) // TILE).astype(int), 0, tiles_y - 1)
    ty1 = np.clip(((m2d[:, 1] + proj.radius) // TILE).astype(int), 0, tiles_y - 1)
    tile_lists: list[list[int]] = [[] for _ in range(tiles_x * tiles_y)]
    for v in range(m2d.shape[0]):  # sorted order, so lists stay depth-sorted
        for ty in range(ty0[v], ty1[v] + 1):
            row = ty * tiles_x
            for tx in range(tx0[v], tx1[v] + 1):
                tile_lists[row + tx].append(v)

    # Tiles with similar splat counts are padded together and blended as one
    # batched tensor op; per-tile results land in the image via slice views.
    occupied = [t for t, vs in enumerate(tile_lists) if vs]
    if not occupied:
        return image, alpha
    occupied.sort(key=lambda t: len(tile_lists[t]), reverse=True)
    off_y, off_x = np.meshgrid(np.arange(TILE), np.arange(TILE), indexing="ij")
    offsets = torch.tensor(
        np.stack([off_x.ravel(), off_y.ravel()], axis=-1), dtype=dtype
    )  # (TILE*TILE, 2)
    chunk = 64
    for start in range(0, len(occupied), chunk):
        tiles = occupied[start : start + chunk]
        kmax = len(tile_lists[tiles[0]])
        n = len(tiles)
        vi = np.zeros((n, kmax), dtype=np.int64)
        valid = np.zeros((n, kmax), dtype=bool)
        origins = np.empty((n, 2))
        for i, t in enumerate(tiles):
            vs = tile_lists[t]
            vi[i, : len(vs)] = vs
            valid[i, : len(vs)] = True
            origins[i] = ((t % tiles_x) * TILE, (t // tiles_x) * TILE)
        vi_t = torch.from_numpy(vi)
        valid_t = torch.from_numpy(valid).to(dtype)
        px = torch.tensor(origins, dtype=dtype)[:, None, :] + offsets[None]  # (n,P,2)
        d = px[:, :, None, :] - mean2d[vi_t][:, None, :, :]  # (n,P,K,2)
        co = conic[vi_t]  # (n,K,3)
        dx, dy = d[..., 0], d[..., 1]
        power = (
            -0.5 * (co[:, None, :, 0] * dx * dx + co[:, None, :, 2] * dy * dy)
            - co[:, None, :, 1] * dx * dy
        )
        g = torch.exp(power.clamp_max(0.0))  # (n,P,K)
        al = (opac[vi_t] * valid_t)[:, None, :] * g
        t_excl = torch.cumprod(
            torch.cat([torch.ones_like(al[..., :1]), 1.0 - al[..., :-1]], dim=-1),
            dim=-1,
        )
        active = (t_excl >= STOP_TRANSMITTANCE).to(dtype).detach()
        wgt = al * t_excl * active  # (n,P,K)
        tile_alpha = wgt.sum(dim=-1)  # (n,P)
        tile_rgb = wgt @ colors[vi_t] + (1.0 - tile_alpha)[..., None] * bg
        for i, t in enumerate(tiles):
            c0 = (t % tiles_x) * TILE
            r0 = (t // tiles_x) * TILE
            th, tw = min(TILE, h - r0), min(TILE, w - c0)
            rgb = tile_rgb[i].reshape(TILE, TILE, 3)
            av = tile_alpha[i].reshape(TILE, TILE)
            image[r0 : r0 + th, c0 : c0 + tw] = rgb[:th, :tw]
            alpha[r0 : r0 + th, c0 : c0 + tw] = av[:th, :tw]
    return image, alpha


def _as_scene(scene) -> GaussianScene:
    if isinstance(scene, GaussianScene):
        return scene
    return GaussianScene.from_gaussians(list(scene))


def rasterize(
    scene,
    cam: Camera,
    background=(0.0, 0.0, 0.0),
    dtype: torch.dtype = torch.float32,
) -> RenderOutput:
    """Render a scene (GaussianScene or list of Gaussian3D) from one camera.

    The returned context keeps the autograd graph alive for
    :func:`rasterize_backward`.
    """
    sc = _as_scene(scene)
    leaves = sc.tensors(dtype=dtype, requires_grad=True)
    image_t, alpha_t = render_tensors(*leaves, cam, background)
    return RenderOutput(
        image=image_t.detach().numpy(),
        alpha=alpha_t.detach().numpy(),
        ctx={
            "leaves": leaves,
            "image_t": image_t,
            "alpha_t": alpha_t,
            "count": len(sc),
            "dtype": dtype,
        },
    )


def rasterize_backward(out: RenderOutput, grad_image: np.ndarray, grad_alpha=None) -> SceneGrads:
    """Backpropagate an image-space gradient to every splat parameter."""
    ctx = out.ctx
    leaves = ctx["leaves"]
    image_t = ctx["image_t"]
    grad_image = np.asarray(grad_image, dtype=np.float64)
    if grad_image.shape != tuple(image_t.shape):
        raise InvalidInputError(
            f"grad_image shape {grad_image.shape} does not match render {tuple(image_t.shape)}"
        )
    outputs = [image_t]
    grad_outputs = [torch.as_tensor(grad_image, dtype=ctx["dtype"])]
    if grad_alpha is not None:
        outputs.append(ctx["alpha_t"])
        grad_outputs.append(torch.as_tensor(np.asarray(grad_alpha), dtype=ctx["dtype"]))
    grads = torch.autograd.grad(
        outputs, leaves, grad_outputs=grad_outputs, retain_graph=True, allow_unused=True
    )
    arrs = []
    for leaf, g in zip(leaves, grads):
        arrs.append(
            np.zeros(leaf.shape) if g is None else g.detach().numpy().astype(np.float64)
        )
    return SceneGrads(
        means=arrs[0], quats=arrs[1], log_scales=arrs[2], opacity_logits=arrs[3], sh=arrs[4]
    )
