"""Image quality metrics: PSNR, single-scale SSIM, and glow-masked evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from glowgs.errors import InvalidInputError

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class EvalReport:
    """PSNR/SSIM, optionally split into glow and non-glow regions.

    The ``lpips`` slot is always None here; it is kept so serialized reports
    stay schema-stable for tooling that expects the field.
    """

    psnr: float
    ssim: float
    lpips: float | None = None
    glow_psnr: float | None = None
    glow_ssim: float | None = None
    nonglow_psnr: float | None = None
    nonglow_ssim: float | None = None

    def to_dict(self) -> dict:
        return {
            "psnr": self.psnr,
            "ssim": self.ssim,
            "lpips": self.lpips,
            "glow_psnr": self.glow_psnr,
            "glow_ssim": self.glow_ssim,
            "nonglow_psnr": self.nonglow_psnr,
            "nonglow_ssim": self.nonglow_ssim,
        }


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images, capped at 99."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse <= 0.0:
        return PSNR_CAP
    return min(float(10.0 * np.log10(1.0 / mse)), PSNR_CAP)


def _gaussian_window(dtype: torch.dtype) -> torch.Tensor:
    half = SSIM_WINDOW // 2
    x = torch.arange(-half, half + 1, dtype=dtype)
    g = torch.exp(-(x * x) / (2 * SSIM_SIGMA * SSIM_SIGMA))
    g = g / g.sum()
    return (g[:, None] * g[None, :]).reshape(1, 1, SSIM_WINDOW, SSIM_WINDOW)


def ssim_map(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Per-window SSIM map, valid padding.

    Inputs are (H,W,C) tensors; the result is (H-10, W-10, C), one value per
    fully covered 11x11 window center. Differentiable in both arguments.
    """
    if isinstance(a, np.ndarray):
        a = torch.from_numpy(np.asarray(a, dtype=np.float64))
    if isinstance(b, np.ndarray):
        b = torch.from_numpy(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape:
        raise InvalidInputError(f"image shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise InvalidInputError("image smaller than the 11x11 SSIM window")
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    win = _gaussian_window(a.dtype)
    ch = a.shape[2]
    x = a.permute(2, 0, 1).unsqueeze(1)  # (C,1,H,W)
    y = b.permute(2, 0, 1).unsqueeze(1)
    mu_x = F.conv2d(x, win)
    mu_y = F.conv2d(y, win)
    sig_x = F.conv2d(x * x, win) - mu_x * mu_x
    sig_y = F.conv2d(y * y, win) - mu_y * mu_y
    sig_xy = F.conv2d(x * y, win) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sig_xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sig_x + sig_y + c2)
    return (num / den).squeeze(1).permute(1, 2, 0)


def ssim_torch(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return ssim_map(a, b).mean()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean single-scale SSIM (11x11 Gaussian window, sigma 1.5, K=(0.01, 0.03))."""
    a, b = _check_pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    return float(ssim_torch(torch.from_numpy(a), torch.from_numpy(b)))


def _masked_psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float | None:
    if not mask.any():
        return None
    diff = (a - b) ** 2
    mse = float(diff[mask].mean())
    if mse <= 0.0:
        return PSNR_CAP
    return min(float(10.0 * np.log10(1.0 / mse)), PSNR_CAP)


def masked_eval(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> EvalReport:
    """Evaluate a prediction against ground truth, optionally split by a glow mask.

    Masked PSNR restricts the MSE to masked pixels. Masked SSIM computes the
    full SSIM map, then averages over window centers whose pixel is masked.
    Empty regions report None rather than a fake score.
    """
    a, b = _check_pair(a, b)
    report = EvalReport(psnr=psnr(a, b), ssim=ssim(a, b))
    if mask is None:
        return report
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape[:2]:
        raise InvalidInputError(f"mask shape {mask.shape} != image shape {a.shape[:2]}")
    smap = ssim_map(torch.from_numpy(a), torch.from_numpy(b)).numpy()
    half = SSIM_WINDOW // 2
    center_mask = mask[half:-half, half:-half]
    for region, m, cm in (
        ("glow", mask, center_mask),
        ("nonglow", ~mask, ~center_mask),
    ):
        p = _masked_psnr(a, b, m)
        s = float(smap[cm].mean()) if cm.any() else None
        setattr(report, f"{region}_psnr", p)
        setattr(report, f"{region}_ssim", s)
    return report
