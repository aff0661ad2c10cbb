"""On-disk formats: GSFB feature banks, GSSC scenes, camera text files, images.

Both binary formats are little-endian with exact length arithmetic so files
round-trip bit-identically across platforms. Parse failures raise
DataFormatError naming the failing field and byte offset.
"""

from __future__ import annotations

import struct

import numpy as np
import yaml
from PIL import Image

from glowgs.errors import DataFormatError, InvalidInputError
from glowgs.featbank import FeatureBank
from glowgs.gaussians import Camera, sh_coeff_count
from glowgs.scene import GaussianScene

BANK_MAGIC = b"GSFB"
SCENE_MAGIC = b"GSSC"
FORMAT_VERSION = 1


def _need(buf: bytes, offset: int, count: int, fieldname: str) -> bytes:
    if offset + count > len(buf):
        raise DataFormatError(
            f"truncated: need {count} bytes, have {len(buf) - offset}",
            field=fieldname,
            offset=offset,
        )
    return buf[offset : offset + count]


# --------------------------------------------------------------------------
# Feature bank (GSFB)
# --------------------------------------------------------------------------

def write_bank(bank: FeatureBank) -> bytes:
    if len(bank) < 1:
        raise InvalidInputError("refusing to write an empty bank (S >= 1 required)")
    name = bank.extractor.encode("utf-8")
    header = BANK_MAGIC + struct.pack(
        "<IH", FORMAT_VERSION, len(name)
    ) + name + struct.pack("<IQ", bank.dim, len(bank))
    body = bytearray()
    vecs = np.ascontiguousarray(bank.vectors, dtype="<f4")
    for i in range(len(bank)):
        body += struct.pack("<II", int(bank.source_views[i]), int(bank.patch_indices[i]))
        body += vecs[i].tobytes()
    return header + bytes(body)


def read_bank(data: bytes) -> FeatureBank:
    off = 0
    if _need(data, off, 4, "magic") != BANK_MAGIC:
        raise DataFormatError("bad magic, expected GSFB", field="magic", offset=0)
    off = 4
    (version,) = struct.unpack("<I", _need(data, off, 4, "version"))
    if version != FORMAT_VERSION:
        raise DataFormatError(f"unsupported version {version}", field="version", offset=off)
    off += 4
    (name_len,) = struct.unpack("<H", _need(data, off, 2, "name_len"))
    off += 2
    try:
        name = _need(data, off, name_len, "extractor_name").decode("utf-8")
    except UnicodeDecodeError as e:
        raise DataFormatError(
            "extractor name is not valid UTF-8", field="extractor_name", offset=off
        ) from e
    off += name_len
    (dim,) = struct.unpack("<I", _need(data, off, 4, "dim"))
    off += 4
    (count,) = struct.unpack("<Q", _need(data, off, 8, "count"))
    off += 8
    if count < 1:
        raise DataFormatError("bank must hold at least one record", field="count", offset=off - 8)
    rec_size = 8 + 4 * dim
    expected = off + count * rec_size
    if len(data) != expected:
        raise DataFormatError(
            f"length mismatch: expected {expected} bytes, got {len(data)}",
            field="records",
            offset=off,
        )
    raw = np.frombuffer(data, dtype=np.uint8, offset=off).reshape(count, rec_size)
    ints = raw[:, :8].copy().view("<u4").reshape(count, 2)
    vecs = raw[:, 8:].copy().view("<f4").reshape(count, dim)
    return FeatureBank(
        dim=int(dim),
        vectors=vecs,
        source_views=ints[:, 0],
        patch_indices=ints[:, 1],
        extractor=name,
    )


def save_bank(bank: FeatureBank, path) -> None:
    with open(path, "wb") as f:
        f.write(write_bank(bank))


def load_bank(path) -> FeatureBank:
    with open(path, "rb") as f:
        return read_bank(f.read())


# --------------------------------------------------------------------------
# Scene (GSSC)
# --------------------------------------------------------------------------

def write_scene(scene: GaussianScene) -> bytes:
    deg = scene.sh_degree
    header = SCENE_MAGIC + struct.pack("<IIQ", FORMAT_VERSION, deg, len(scene))
    k = len(scene)
    rec = np.empty((k, 11 + 3 * sh_coeff_count(deg)), dtype="<f4")
    rec[:, 0:3] = scene.means
    # Quaternions are free parameters during optimization; the file format
    # stores them unit-normalized.
    quats = scene.quats
    if k:
        norms = np.linalg.norm(quats, axis=1, keepdims=True)
        if (norms == 0).any():
            raise InvalidInputError("cannot serialize a zero quaternion")
        quats = quats / norms
    rec[:, 3:7] = quats
    rec[:, 7:10] = scene.log_scales
    rec[:, 10] = scene.opacity_logits
    rec[:, 11:] = scene.sh.reshape(k, 3 * sh_coeff_count(deg))
    return header + rec.tobytes()


def read_scene(data: bytes) -> GaussianScene:
    off = 0
    if _need(data, off, 4, "magic") != SCENE_MAGIC:
        raise DataFormatError("bad magic, expected GSSC", field="magic", offset=0)
    off = 4
    (version,) = struct.unpack("<I", _need(data, off, 4, "version"))
    if version != FORMAT_VERSION:
        raise DataFormatError(f"unsupported version {version}", field="version", offset=off)
    off += 4
    (deg,) = struct.unpack("<I", _need(data, off, 4, "sh_degree"))
    if deg > 2:
        raise DataFormatError(f"sh_degree {deg} out of range [0, 2]", field="sh_degree", offset=off)
    off += 4
    (count,) = struct.unpack("<Q", _need(data, off, 8, "count"))
    off += 8
    n_coeff = sh_coeff_count(deg)
    rec_size = 4 * (11 + 3 * n_coeff)
    expected = off + count * rec_size
    if len(data) != expected:
        raise DataFormatError(
            f"length mismatch: expected {expected} bytes, got {len(data)}",
            field="records",
            offset=off,
        )
    rec = np.frombuffer(data, dtype="<f4", offset=off).reshape(count, rec_size // 4)
    quats = rec[:, 3:7].astype(np.float64)
    norms = np.linalg.norm(quats, axis=1)
    if count and (np.abs(norms - 1.0) > 1e-3).any():
        bad = int(np.argmax(np.abs(norms - 1.0)))
        raise DataFormatError(
            f"record {bad} quaternion norm {norms[bad]:.6f} off unit by more than 1e-3",
            field="quat",
            offset=off + bad * rec_size + 12,
        )
    if count:
        quats = quats / norms[:, None]
    return GaussianScene(
        means=rec[:, 0:3].astype(np.float64),
        quats=quats,
        log_scales=rec[:, 7:10].astype(np.float64),
        opacity_logits=rec[:, 10].astype(np.float64),
        sh=rec[:, 11:].astype(np.float64).reshape(count, n_coeff, 3),
    )


def save_scene(scene: GaussianScene, path) -> None:
    with open(path, "wb") as f:
        f.write(write_scene(scene))


def load_scene(path) -> GaussianScene:
    with open(path, "rb") as f:
        return read_scene(f.read())


# --------------------------------------------------------------------------
# Cameras, images, reports
# --------------------------------------------------------------------------

def save_camera(cam: Camera, path) -> None:
    data = {
        "width": int(cam.width),
        "height": int(cam.height),
        "fx": float(cam.fx),
        "fy": float(cam.fy),
        "cx": float(cam.cx),
        "cy": float(cam.cy),
        "rotation": [float(v) for v in cam.rot.reshape(-1)],
        "translation": [float(v) for v in cam.trans],
    }
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(data, f, sort_keys=True)


def load_camera(path) -> Camera:
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    try:
        return Camera(
            width=int(data["width"]),
            height=int(data["height"]),
            fx=float(data["fx"]),
            fy=float(data["fy"]),
            cx=float(data["cx"]),
            cy=float(data["cy"]),
            rot=np.array(data["rotation"], dtype=np.float64).reshape(3, 3),
            trans=np.array(data["translation"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"malformed camera file {path}: {exc}") from exc


def save_image(image: np.ndarray, path) -> None:
    """Store a linear [0,1] float image as plain 8-bit (scale by 255, no gamma)."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8)).save(path)


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_mask(mask: np.ndarray, path) -> None:
    Image.fromarray((np.asarray(mask, dtype=bool) * 255).astype(np.uint8)).save(path)


def load_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) >= 128
