"""Input validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np

from glowgs.errors import InvalidInputError
from glowgs.gaussians import Camera


def check_image(image, name: str = "image") -> np.ndarray:
    """Validate an HxWx3 float image in [0, 1]; returns a float64 array."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError(f"{name} must be HxWx3, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise InvalidInputError(f"{name} contains non-finite values")
    if arr.min() < -1e-9 or arr.max() > 1.0 + 1e-9:
        raise InvalidInputError(f"{name} values must lie in [0, 1]")
    return np.clip(arr, 0.0, 1.0)


def check_camera(cam, name: str = "camera") -> Camera:
    if not isinstance(cam, Camera):
        raise InvalidInputError(f"{name} must be a Camera, got {type(cam).__name__}")
    return cam


def check_posed_views(views, cameras) -> list:
    """Pair up images and cameras, validating shapes against intrinsics."""
    if len(views) != len(cameras):
        raise InvalidInputError(
            f"got {len(views)} views but {len(cameras)} cameras"
        )
    if len(views) == 0:
        raise InvalidInputError("need at least one posed view")
    paired = []
    for i, (img, cam) in enumerate(zip(views, cameras)):
        arr = check_image(img, name=f"views[{i}]")
        cam = check_camera(cam, name=f"cameras[{i}]")
        if arr.shape[:2] != (cam.height, cam.width):
            raise InvalidInputError(
                f"views[{i}] is {arr.shape[1]}x{arr.shape[0]} but its camera expects "
                f"{cam.width}x{cam.height}"
            )
        paired.append((arr, cam))
    return paired
