import numpy as np
import pytest
import torch

from glowgs.gaussians import Camera
from glowgs.scene import GaussianScene

torch.set_num_threads(2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_camera(size=32, focal=40.0) -> Camera:
    return Camera(
        width=size,
        height=size,
        fx=focal,
        fy=focal,
        cx=size / 2.0,
        cy=size / 2.0,
        rot=np.eye(3),
        trans=np.zeros(3),
    )


def make_scene(rng, k=5, sh_degree=1, depth=(1.5, 3.0), spread=0.5) -> GaussianScene:
    """Random splats comfortably inside the frustum of make_camera()."""
    quats = rng.normal(size=(k, 4))
    quats /= np.linalg.norm(quats, axis=-1, keepdims=True)
    return GaussianScene(
        means=np.column_stack(
            [
                rng.uniform(-spread, spread, k),
                rng.uniform(-spread, spread, k),
                rng.uniform(depth[0], depth[1], k),
            ]
        ),
        quats=quats,
        log_scales=rng.uniform(np.log(0.05), np.log(0.25), (k, 3)),
        opacity_logits=rng.uniform(-1.0, 1.5, k),
        sh=rng.uniform(-0.4, 0.8, (k, (sh_degree + 1) ** 2, 3)),
    )


def fd_gradient(f, x0: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    g = np.zeros_like(x0, dtype=np.float64)
    for idx in np.ndindex(x0.shape):
        xp = x0.copy()
        xm = x0.copy()
        xp[idx] += eps
        xm[idx] -= eps
        g[idx] = (f(xp) - f(xm)) / (2 * eps)
    return g


def rel_err(a, b, floor=1e-7):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


SCOREBOARD: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance scoreboard after the run summary."""
    if SCOREBOARD:
        terminalreporter.section("acceptance scoreboard")
        for line in SCOREBOARD:
            terminalreporter.write_line(line)
