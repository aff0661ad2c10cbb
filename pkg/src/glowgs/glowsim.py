"""Synthetic nighttime-glow scenes and APSF-based glow masks.

A scene is a handful of textured planar patches lit by point emitters; each
emitter additionally produces a glow layer by convolving its splatted peak
with a radially symmetric atmospheric point-spread kernel. The glow mask is
the level set of that layer at a fraction of the per-emitter peak.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml
from scipy.signal import fftconvolve

from glowgs.errors import InvalidInputError
from glowgs.gaussians import Camera, NEAR_PLANE

TEXTURE_RES = 64


@dataclass
class Emitter:
    position: np.ndarray  # (3,)
    peak: float
    color: np.ndarray  # (3,)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.color = np.asarray(self.color, dtype=np.float64).reshape(3)
        if self.peak <= 0:
            raise InvalidInputError("emitter peak intensity must be positive")


@dataclass
class SurfacePatch:
    corners: np.ndarray  # (4,3), quad in CCW order
    texture_id: int

    def __post_init__(self):
        self.corners = np.asarray(self.corners, dtype=np.float64).reshape(4, 3)


@dataclass
class GlowSceneSpec:
    emitters: list[Emitter]
    surfaces: list[SurfacePatch]
    apsf_radius: int = 24
    apsf_q: float = 1.2
    ambient: float = 0.08
    seed: int = 0

    def __post_init__(self):
        if self.apsf_radius < 1:
            raise InvalidInputError("apsf kernel radius must be >= 1")


def save_spec(spec: GlowSceneSpec, path) -> None:
    data = {
        "ambient": float(spec.ambient),
        "seed": int(spec.seed),
        "apsf": {"radius": int(spec.apsf_radius), "q": float(spec.apsf_q)},
        "emitters": [
            {
                "position": [float(v) for v in e.position],
                "peak": float(e.peak),
                "color": [float(v) for v in e.color],
            }
            for e in spec.emitters
        ],
        "surfaces": [
            {
                "corners": [[float(v) for v in c] for c in s.corners],
                "texture_id": int(s.texture_id),
            }
            for s in spec.surfaces
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(data, f, sort_keys=True)


def load_spec(path) -> GlowSceneSpec:
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    try:
        return GlowSceneSpec(
            emitters=[
                Emitter(np.array(e["position"]), float(e["peak"]), np.array(e["color"]))
                for e in data.get("emitters", [])
            ],
            surfaces=[
                SurfacePatch(np.array(s["corners"]), int(s["texture_id"]))
                for s in data.get("surfaces", [])
            ],
            apsf_radius=int(data["apsf"]["radius"]),
            apsf_q=float(data["apsf"]["q"]),
            ambient=float(data.get("ambient", 0.0)),
            seed=int(data.get("seed", 0)),
        )
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed scene spec {path}: {exc}") from exc


def apsf_kernel(radius: int, q: float) -> np.ndarray:
    """Generalized-Gaussian glow kernel k(r) = exp(-(r/sigma)^q), sigma = radius/3.

    Peak 1 at the center, radially symmetric, monotone non-increasing in r.
    """
    if radius < 1:
        raise InvalidInputError("radius must be >= 1")
    if not (0.5 < q <= 4.0):
        raise InvalidInputError("shape parameter q must lie in (0.5, 4]")
    sigma = radius / 3.0
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    r = np.sqrt(ax[:, None] ** 2 + ax[None, :] ** 2)
    return np.exp(-((r / sigma) ** q))


def _project_point(p: np.ndarray, cam: Camera) -> tuple[float, float, float]:
    t = cam.rot @ p + cam.trans
    if t[2] <= NEAR_PLANE:
        return np.nan, np.nan, float(t[2])
    return (
        float(cam.fx * t[0] / t[2] + cam.cx),
        float(cam.fy * t[1] / t[2] + cam.cy),
        float(t[2]),
    )


def emitter_layers(spec: GlowSceneSpec, cam: Camera) -> list[np.ndarray]:
    """Per-emitter post-APSF intensity layers (H,W); zero when off-frame.

    The kernel radius is specified relative to a 128-pixel-wide frame and
    scales with the render resolution, so the same scene produces the same
    glow extent (as a fraction of the image) at any size.
    """
    radius = max(1, int(round(spec.apsf_radius * cam.width / 128.0)))
    kernel = apsf_kernel(radius, spec.apsf_q)
    layers = []
    for e in spec.emitters:
        canvas = np.zeros((cam.height, cam.width))
        px, py, depth = _project_point(e.position, cam)
        if depth > NEAR_PLANE:
            xi, yi = int(round(px)), int(round(py))
            if 0 <= xi < cam.width and 0 <= yi < cam.height:
                canvas[yi, xi] = e.peak
        if canvas.any():
            canvas = fftconvolve(canvas, kernel, mode="same")
        layers.append(canvas)
    return layers


def procedural_texture(texture_id: int, seed: int, res: int = TEXTURE_RES) -> np.ndarray:
    """Deterministic albedo texture: checker base plus low-frequency color noise."""
    rng = np.random.default_rng(1_000_003 * (seed + 1) + texture_id)
    period = int(rng.integers(6, 16))
    c_a = rng.uniform(0.15, 0.75, size=3)
    c_b = rng.uniform(0.05, 0.45, size=3)
    yy, xx = np.meshgrid(np.arange(res), np.arange(res), indexing="ij")
    checker = ((xx // period + yy // period) % 2).astype(np.float64)
    tex = checker[..., None] * c_a + (1 - checker[..., None]) * c_b
    u = xx / res * 2 * np.pi
    v = yy / res * 2 * np.pi
    for _ in range(3):
        fx, fy = rng.integers(1, 5, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.03, 0.12, size=3)
        tex = tex + np.sin(fx * u + fy * v + phase)[..., None] * amp
    return np.clip(tex, 0.02, 1.0)


def _bilinear_sample(tex: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    res = tex.shape[0]
    x = np.clip(u * (res - 1), 0, res - 1)
    y = np.clip(v * (res - 1), 0, res - 1)
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    x1 = np.minimum(x0 + 1, res - 1)
    y1 = np.minimum(y0 + 1, res - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    return (
        tex[y0, x0] * (1 - fx) * (1 - fy)
        + tex[y0, x1] * fx * (1 - fy)
        + tex[y1, x0] * (1 - fx) * fy
        + tex[y1, x1] * fx * fy
    )


def _surface_layer(spec: GlowSceneSpec, cam: Camera) -> np.ndarray:
    """Flat-shaded planar patches via per-pixel ray casting with a z-buffer."""
    h, w = cam.height, cam.width
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    d_cam = np.stack([(xs - cam.cx) / cam.fx, (ys - cam.cy) / cam.fy, np.ones_like(xs)], axis=-1)
    d_world = d_cam.reshape(-1, 3) @ cam.rot  # rot^T applied to each dir
    origin = cam.center
    n_px = d_world.shape[0]
    best_t = np.full(n_px, np.inf)
    best_uv = np.zeros((n_px, 2))
    best_sid = np.full(n_px, -1, dtype=int)
    unit = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    for sid, surf in enumerate(spec.surfaces):
        c = surf.corners
        for tri in ((0, 1, 2), (0, 2, 3)):
            v0, v1, v2 = c[tri[0]], c[tri[1]], c[tri[2]]
            e1, e2 = v1 - v0, v2 - v0
            pvec = np.cross(d_world, e2)
            det = pvec @ e1
            ok = np.abs(det) > 1e-12
            inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
            tvec = origin - v0
            bu = (pvec @ tvec) * inv_det
            qvec = np.cross(tvec, e1)
            bv = d_world @ qvec * inv_det
            t = (e2 @ qvec) * inv_det
            hit = ok & (bu >= 0) & (bv >= 0) & (bu + bv <= 1) & (t > NEAR_PLANE) & (t < best_t)
            if not hit.any():
                continue
            uv0, uv1, uv2 = unit[tri[0]], unit[tri[1]], unit[tri[2]]
            uv = uv0 + bu[:, None] * (uv1 - uv0) + bv[:, None] * (uv2 - uv0)
            best_t[hit] = t[hit]
            best_uv[hit] = uv[hit]
            best_sid[hit] = sid

    layer = np.zeros((n_px, 3))
    for sid, surf in enumerate(spec.surfaces):
        sel = best_sid == sid
        if not sel.any():
            continue
        tex = procedural_texture(surf.texture_id, spec.seed)
        albedo = _bilinear_sample(tex, best_uv[sel, 0], best_uv[sel, 1])
        pts = origin + best_t[sel, None] * d_world[sel]
        irr = np.full((sel.sum(), 3), spec.ambient)
        for e in spec.emitters:
            d2 = np.sum((pts - e.position) ** 2, axis=1) + 0.25
            irr = irr + (e.peak / d2)[:, None] * e.color
        layer[sel] = albedo * irr
    return layer.reshape(h, w, 3)


def render_reference(spec: GlowSceneSpec, cam: Camera) -> np.ndarray:
    """Ground-truth render: shaded surfaces plus APSF glow, clamped to [0,1]."""
    surface = _surface_layer(spec, cam)
    glow = np.zeros_like(surface)
    for e, layer in zip(spec.emitters, emitter_layers(spec, cam)):
        glow = glow + layer[..., None] * e.color
    return np.clip(surface + glow, 0.0, 1.0)


def glow_mask(spec: GlowSceneSpec, cam: Camera, threshold_frac: float = 0.10) -> np.ndarray:
    """Union over emitters of pixels whose glow layer reaches the peak fraction."""
    if not (0.0 < threshold_frac <= 1.0):
        raise InvalidInputError("threshold_frac must lie in (0, 1]")
    mask = np.zeros((cam.height, cam.width), dtype=bool)
    for layer in emitter_layers(spec, cam):
        peak = layer.max()
        if peak > 0:
            mask |= layer >= threshold_frac * peak
    return mask


# --------------------------------------------------------------------------
# Camera rigs and benchmark scenes
# --------------------------------------------------------------------------

def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera (rot, trans) for a camera at ``eye`` looking at ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd])
    return rot, -rot @ eye


def orbit_camera(
    azimuth_deg: float,
    elevation_deg: float = 12.0,
    radius: float = 3.0,
    target=(0.0, 0.0, 0.0),
    size: int = 128,
    focal: float = 110.0,
) -> Camera:
    az = np.deg2rad(azimuth_deg)
    el = np.deg2rad(elevation_deg)
    target = np.asarray(target, dtype=np.float64)
    eye = target + radius * np.array(
        [np.sin(az) * np.cos(el), np.sin(el), -np.cos(az) * np.cos(el)]
    )
    rot, trans = look_at(eye, target)
    scale = size / 128.0
    return Camera(
        width=size,
        height=size,
        fx=focal * scale,
        fy=focal * scale,
        cx=size / 2.0,
        cy=size / 2.0,
        rot=rot,
        trans=trans,
    )


def benchmark_spec(scene_seed: int) -> GlowSceneSpec:
    """A randomized desk-scale night scene: backdrop, ground, and 2-3 emitters."""
    rng = np.random.default_rng(scene_seed)
    # A low backdrop and ground strip; everything above is empty night sky so
    # the frame is dominated by darkness and glow rather than texture.
    surfaces = [
        SurfacePatch(  # backdrop, lower half of the frame
            corners=np.array(
                [[-2.2, -1.5, 1.6], [2.2, -1.5, 1.6], [2.2, 0.1, 1.6], [-2.2, 0.1, 1.6]]
            ),
            texture_id=0,
        ),
        SurfacePatch(  # ground, sloping toward the cameras
            corners=np.array(
                [[-2.2, -1.5, 1.6], [-2.2, -1.0, -2.0], [2.2, -1.0, -2.0], [2.2, -1.5, 1.6]]
            ),
            texture_id=1,
        ),
    ]
    emitters = []
    for _ in range(int(rng.integers(2, 4))):
        # lamps sit against the sky, just above the backdrop edge
        pos = np.array(
            [rng.uniform(-1.2, 1.2), rng.uniform(0.3, 1.0), rng.uniform(1.2, 1.55)]
        )
        color = rng.uniform(0.55, 1.0, size=3)
        color[int(rng.integers(0, 3))] = 1.0
        emitters.append(Emitter(position=pos, peak=float(rng.uniform(0.7, 1.1)), color=color))
    return GlowSceneSpec(
        emitters=emitters,
        surfaces=surfaces,
        apsf_radius=26,
        apsf_q=1.2,
        ambient=0.04,
        seed=scene_seed,
    )


def benchmark_cameras(
    n_train: int = 6,
    n_test: int = 6,
    n_candidates: int = 24,
    size: int = 128,
) -> tuple[list[Camera], list[Camera], list[Camera]]:
    """Disjoint train/test/candidate pose sets on an orbit arc.

    Train poses span the arc, test poses interleave between them at a higher
    elevation, and candidate poses cover the same arc densely at offset
    azimuths so their poses never coincide with train or test (the trainer
    never sees them).
    """
    arc = 84.0
    train = [
        orbit_camera(-arc / 2 + arc * i / max(n_train - 1, 1), size=size)
        for i in range(n_train)
    ]
    test = [
        orbit_camera(-arc / 2 + arc * (i + 0.5) / max(n_test, 1), elevation_deg=14.0, size=size)
        for i in range(n_test)
    ]
    cand = [
        orbit_camera(
            -arc / 2 + 0.37 + arc * i / max(n_candidates - 1, 1),
            elevation_deg=12.5,
            size=size,
        )
        for i in range(n_candidates)
    ]
    return train, test, cand
