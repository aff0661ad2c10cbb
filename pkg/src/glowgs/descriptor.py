"""Built-in differentiable patch descriptor.

Stands in for a pretrained vision backbone: a 256x256 crop is partitioned into
a 16x16 grid of 16-pixel patches and each patch is described by 17 numbers,

* mean RGB (3),
* an 8-bin gradient-orientation histogram, magnitude-weighted with linear
  soft-binning so it stays piecewise smooth (8),
* the first 6 zig-zag DCT-II coefficients of patch luminance (6),

then L2-normalized per patch. The global feature is the normalized mean of the
patch features. Every stage has a defined backward to the input pixels, which
is what lets the semantic loss reach the splat parameters through the render.
"""

from __future__ import annotations

import numpy as np
import torch

from glowgs.errors import InvalidInputError

CROP = 256
GRID = 16
PATCH = CROP // GRID  # 16 px
N_BINS = 8
N_DCT = 6
FEATURE_DIM = 3 + N_BINS + N_DCT
NORM_EPS = 1e-8

LUMA = (0.299, 0.587, 0.114)
# Zig-zag order over the (row, col) DCT coefficient grid, first 6 entries.
DCT_ZIGZAG = ((0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2))


def _dct_matrix(n: int, dtype: torch.dtype) -> torch.Tensor:
    """Orthonormal DCT-II basis as an (n,n) matrix."""
    k = torch.arange(n, dtype=dtype)
    mat = torch.cos(np.pi * (2 * k[None, :] + 1) * k[:, None] / (2 * n))
    mat = mat * np.sqrt(2.0 / n)
    mat[0] = mat[0] / np.sqrt(2.0)
    return mat


def _safe_norm(x: torch.Tensor, dim: int) -> torch.Tensor:
    """L2 norm with zero (not NaN) gradient at exactly zero input."""
    s = (x * x).sum(dim=dim)
    n = torch.sqrt(s.clamp_min(1e-30))
    return torch.where(s > 0, n, torch.zeros_like(n))


def patch_features(crop: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Describe one 256x256x3 crop. Returns (patches (256,17), global (17,))."""
    if crop.shape != (CROP, CROP, 3):
        raise InvalidInputError(f"crop must be {CROP}x{CROP}x3, got {tuple(crop.shape)}")
    dtype = crop.dtype

    # Mean RGB per patch.
    blocks = crop.reshape(GRID, PATCH, GRID, PATCH, 3)
    mean_rgb = blocks.mean(dim=(1, 3)).reshape(GRID * GRID, 3)

    # Luminance, central-difference gradients with replicate borders.
    luma = crop[..., 0] * LUMA[0] + crop[..., 1] * LUMA[1] + crop[..., 2] * LUMA[2]
    pad_x = torch.cat([luma[:, :1], luma, luma[:, -1:]], dim=1)
    pad_y = torch.cat([luma[:1, :], luma, luma[-1:, :]], dim=0)
    gx = 0.5 * (pad_x[:, 2:] - pad_x[:, :-2])
    gy = 0.5 * (pad_y[2:, :] - pad_y[:-2, :])

    sq = gx * gx + gy * gy
    mag = torch.where(sq > 0, torch.sqrt(sq.clamp_min(1e-30)), torch.zeros_like(sq))
    theta = torch.atan2(gy, gx + 1e-30)  # (-pi, pi]

    # Linear soft assignment onto 8 circular bins.
    pos = (theta + np.pi) / (2 * np.pi) * N_BINS  # [0, 8]
    lo = torch.floor(pos).detach()
    frac = pos - lo
    lo_bin = (lo.to(torch.long) % N_BINS).reshape(-1)
    hi_bin = (lo_bin + 1) % N_BINS
    w_lo = (mag * (1.0 - frac)).reshape(-1)
    w_hi = (mag * frac).reshape(-1)
    # Patch index of every pixel.
    rows = torch.arange(CROP) // PATCH
    cols = torch.arange(CROP) // PATCH
    pidx = (rows[:, None] * GRID + cols[None, :]).reshape(-1)
    hist = torch.zeros(GRID * GRID * N_BINS, dtype=dtype)
    hist = hist.index_add(0, pidx * N_BINS + lo_bin, w_lo)
    hist = hist.index_add(0, pidx * N_BINS + hi_bin, w_hi)
    hist = hist.reshape(GRID * GRID, N_BINS)

    # First 6 zig-zag DCT-II coefficients of per-patch luminance.
    dct = _dct_matrix(PATCH, dtype)
    patches_l = luma.reshape(GRID, PATCH, GRID, PATCH).permute(0, 2, 1, 3)
    coeffs = dct @ patches_l.reshape(-1, PATCH, PATCH) @ dct.T
    coeffs = coeffs.reshape(GRID * GRID, PATCH, PATCH)
    dct_feats = torch.stack([coeffs[:, r, c] for r, c in DCT_ZIGZAG], dim=-1)

    feats = torch.cat([mean_rgb, hist, dct_feats], dim=-1)
    feats = feats / (_safe_norm(feats, dim=-1)[:, None] + NORM_EPS)
    mean_feat = feats.mean(dim=0)
    global_feat = mean_feat / (_safe_norm(mean_feat, dim=0) + NORM_EPS)
    return feats, global_feat


def describe(image, crop_xy: tuple[int, int] = (0, 0), source_view: int = 0):
    """Describe a 256x256 crop of an H x W x 3 image (numpy in, numpy out).

    ``crop_xy`` is the (x, y) top-left corner of the crop; it must lie fully
    inside the image.
    """
    from glowgs.featbank import FeatureSet

    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidInputError("image must be HxWx3")
    x, y = int(crop_xy[0]), int(crop_xy[1])
    h, w = img.shape[:2]
    if x < 0 or y < 0 or x + CROP > w or y + CROP > h:
        raise InvalidInputError(
            f"crop ({x},{y})+{CROP} out of bounds for image {w}x{h}"
        )
    crop = torch.from_numpy(img[y : y + CROP, x : x + CROP, :].copy())
    feats, global_feat = patch_features(crop)
    return FeatureSet(
        global_=global_feat.numpy(),
        patches=feats.numpy(),
        grid=(GRID, GRID),
        source_view=source_view,
    )
