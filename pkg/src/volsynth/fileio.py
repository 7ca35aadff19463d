"""Readers and writers for the on-disk formats.

Depth maps: PFM (grayscale "Pf", little-endian, scale -1.0) is the canonical
writer; a raw float32 format with a 16-byte header (magic ``DPT1``, u32
height, u32 width, u32 reserved) is also readable/writable.  Images and masks
are 8-bit PNG.  Poses and intrinsics are small JSON documents.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .camera import Intrinsics, Pose
from .errors import FormatError
from .volume import DepthMap, ViewTriplet

DPT_MAGIC = b"DPT1"


def write_pfm(path, values: np.ndarray) -> None:
    """Write a single-channel float32 PFM (bottom-up scanlines, little-endian)."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise FormatError("PFM writer expects a 2-D array")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(arr[::-1].astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header not in (b"Pf", b"PF"):
            raise FormatError(f"not a PFM file: {path}")
        channels = 3 if header == b"PF" else 1
        dims = f.readline().split()
        if len(dims) != 2:
            raise FormatError(f"bad PFM dimension line in {path}")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(w * h * channels * 4), dtype=dtype)
        if data.size != w * h * channels:
            raise FormatError(f"truncated PFM payload in {path}")
    arr = data.reshape(h, w) if channels == 1 else data.reshape(h, w, 3)
    return np.ascontiguousarray(arr[::-1]).astype(np.float32)


def write_dpt(path, values: np.ndarray) -> None:
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise FormatError("DPT writer expects a 2-D array")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(DPT_MAGIC)
        f.write(struct.pack("<III", h, w, 0))
        f.write(arr.astype("<f4").tobytes())


def read_dpt(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != DPT_MAGIC:
            raise FormatError(f"not a DPT1 file: {path}")
        h, w, _reserved = struct.unpack("<III", f.read(12))
        data = np.frombuffer(f.read(h * w * 4), dtype="<f4")
        if data.size != h * w:
            raise FormatError(f"truncated DPT payload in {path}")
    return data.reshape(h, w).astype(np.float32)


def read_depth(path) -> np.ndarray:
    """Sniff PFM vs DPT by magic bytes."""
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic[:2] in (b"Pf", b"PF"):
        return read_pfm(path)
    if magic == DPT_MAGIC:
        return read_dpt(path)
    raise FormatError(f"unrecognized depth format in {path}")


def write_image(path, rgb: np.ndarray) -> None:
    """Write an H x W x 3 float image in [0, 1] as 8-bit PNG."""
    arr = np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0)
    data = np.floor(arr * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def read_image(path) -> np.ndarray:
    img = Image.open(path).convert("RGB")
    return (np.asarray(img, dtype=np.float32) / 255.0).astype(np.float32)


def write_mask(path, mask: np.ndarray) -> None:
    data = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    img = Image.open(path).convert("L")
    return np.asarray(img) >= 128


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def save_triplet(out_dir, triplet: ViewTriplet, extras: dict | None = None) -> None:
    """Write one view triplet into a directory (image.png, depth.pfm, *.json)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_image(out / "image.png", triplet.image)
    write_pfm(out / "depth.pfm", triplet.depth.values)
    write_mask(out / "depth_valid.png", triplet.depth.valid)
    write_json(out / "pose.json", triplet.pose.to_dict())
    write_json(out / "intrinsics.json", triplet.intr.to_dict())
    if extras:
        write_json(out / "meta.json", extras)


def load_triplet(in_dir) -> ViewTriplet:
    d = Path(in_dir)
    image = read_image(d / "image.png")
    values = read_depth(d / "depth.pfm")
    valid_path = d / "depth_valid.png"
    valid = read_mask(valid_path) if valid_path.exists() else np.ones(values.shape, dtype=bool)
    pose = Pose.from_dict(read_json(d / "pose.json"))
    intr = Intrinsics.from_dict(read_json(d / "intrinsics.json"))
    return ViewTriplet(image, DepthMap(values, valid), pose, intr)


def save_manifest(path, vol, view_dirs: list[str]) -> None:
    """Volume manifest: view directory paths (relative to the manifest) + policy."""
    doc = {
        "format": "volume-manifest-v1",
        "unknown_policy": vol.unknown_policy,
        "depth_sampling": vol.depth_sampling,
        "views": list(view_dirs),
    }
    write_json(path, doc)


def load_manifest(path):
    from .volume import PseudoVolume

    p = Path(path)
    doc = read_json(p)
    if doc.get("format") != "volume-manifest-v1":
        raise FormatError(f"not a volume manifest: {path}")
    views = [load_triplet(p.parent / rel) for rel in doc["views"]]
    return PseudoVolume(
        tuple(views),
        unknown_policy=doc.get("unknown_policy", "occupied"),
        depth_sampling=doc.get("depth_sampling", "nearest"),
    )
