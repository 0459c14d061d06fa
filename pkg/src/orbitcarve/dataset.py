"""Orbit datasets: PNG frame encodings, manifest I/O, synthetic generation.

Frame encodings:

* RGB: 8-bit PNG, ``round(c * 255)``.
* Mask: 8-bit grayscale PNG, foreground 255.
* Normal: 16-bit RGB PNG in camera space, ``round((n + 1) / 2 * 65535)``;
  decoded as ``enc / 65535 * 2 - 1`` and renormalized under the mask.

The manifest is JSON with paths relative to the manifest file.
"""

from __future__ import annotations

import json
import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .geometry import Camera, CameraError, Normalization, TriMesh
from .init.orbit import OrbitRig, build_orbit_cameras
from .raster import RasterConfig, render

log = logging.getLogger(__name__)

UNITS_NOTE = "normalized: subject fits the [-1, 1]^3 box"
PNG_PARAMS = [cv2.IMWRITE_PNG_COMPRESSION, 6]
PREFLIGHT_THRESHOLD_DEG = 30.0


class DatasetError(ValueError):
    """A manifest or one of its frames is missing or inconsistent."""


class NormalConventionWarning(UserWarning):
    """Provided normal maps disagree with camera-space renders of the init mesh."""


@dataclass(eq=False)
class ViewRecord:
    rgb: np.ndarray  # (H, W, 3) in [0, 1]
    mask: np.ndarray  # (H, W) in [0, 1]
    normal: np.ndarray  # (H, W, 3) camera space
    camera: Camera


@dataclass(eq=False)
class OrbitDataset:
    name: str
    width: int
    height: int
    views: list[ViewRecord]
    rig: OrbitRig | None = None
    normalization: Normalization | None = None
    units: str = UNITS_NOTE
    manifest_path: Path | None = None
    frame_files: list[dict] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.views) < 2:
            raise DatasetError(f"dataset needs at least 2 frames, got {len(self.views)}")
        for i, v in enumerate(self.views):
            if v.mask.shape != (self.height, self.width):
                raise DatasetError(f"frame {i}: mask is {v.mask.shape[::-1]}, expected {self.width}x{self.height}")

    def __len__(self) -> int:
        return len(self.views)

    @property
    def cameras(self) -> list[Camera]:
        return [v.camera for v in self.views]

    @property
    def masks(self) -> list[np.ndarray]:
        return [v.mask for v in self.views]

    @property
    def normals(self) -> list[np.ndarray]:
        return [v.normal for v in self.views]

    @property
    def images(self) -> list[np.ndarray]:
        return [v.rgb for v in self.views]

    def resized(self, size: int) -> OrbitDataset:
        """Area-downsampled copy with square ``size`` frames (for optimization)."""
        if size == self.width and size == self.height:
            return self
        views = []
        for v in self.views:
            mask = cv2.resize(v.mask, (size, size), interpolation=cv2.INTER_AREA)
            rgb = cv2.resize(v.rgb, (size, size), interpolation=cv2.INTER_AREA)
            normal = cv2.resize(v.normal, (size, size), interpolation=cv2.INTER_AREA)
            length = np.linalg.norm(normal, axis=-1, keepdims=True)
            normal = np.divide(normal, length, out=np.zeros_like(normal), where=length > 1e-8)
            views.append(ViewRecord(np.clip(rgb, 0, 1), np.clip(mask, 0, 1), normal, v.camera.resized(size, size)))
        return OrbitDataset(self.name, size, size, views, self.rig, self.normalization, self.units)


def encode_normals(normals: np.ndarray) -> np.ndarray:
    return np.floor((np.clip(normals, -1.0, 1.0) + 1.0) / 2.0 * 65535.0 + 0.5).astype(np.uint16)


def decode_normals(encoded: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    n = encoded.astype(np.float64) / 65535.0 * 2.0 - 1.0
    if mask is not None:
        under = mask > 0
        length = np.linalg.norm(n[under], axis=-1, keepdims=True)
        n[under] = np.divide(n[under], length, out=np.zeros_like(n[under]), where=length > 0)
    return n


def encode_u8(values: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_png(path, image: np.ndarray) -> None:
    """Write a uint8/uint16 gray or RGB array (RGB order) as PNG."""
    if image.ndim == 3:
        image = image[..., ::-1]
    if not cv2.imwrite(str(path), np.ascontiguousarray(image), PNG_PARAMS):
        raise OSError(f"could not write {path}")


def read_png(path) -> np.ndarray:
    image = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if image is None:
        raise OSError(f"could not decode {path}")
    if image.ndim == 3:
        if image.shape[2] == 4:
            image = image[..., :3]
        image = image[..., ::-1]
    return np.ascontiguousarray(image)


def write_frame(out_dir: Path, index: int, rgb, mask, normal) -> dict:
    names = {"rgb": f"rgb_{index:03d}.png", "mask": f"mask_{index:03d}.png", "normal": f"normal_{index:03d}.png"}
    write_png(out_dir / names["rgb"], encode_u8(rgb))
    write_png(out_dir / names["mask"], encode_u8(mask))
    write_png(out_dir / names["normal"], encode_normals(normal))
    return names


def manifest_dict(dataset: OrbitDataset) -> dict:
    doc = {
        "name": dataset.name,
        "width": dataset.width,
        "height": dataset.height,
        "units": dataset.units,
    }
    if dataset.rig is not None:
        doc["rig"] = dataset.rig.to_dict()
    if dataset.normalization is not None:
        doc["normalization"] = dataset.normalization.to_dict()
    frames = []
    for files, view in zip(dataset.frame_files, dataset.views):
        cam = view.camera.to_dict()
        frames.append(
            {
                "rgb": files["rgb"],
                "mask": files["mask"],
                "normal": files["normal"],
                "camera": {k: cam[k] for k in ("fx", "fy", "cx", "cy", "R", "t")},
            }
        )
    doc["frames"] = frames
    return doc


def write_manifest(dataset: OrbitDataset, path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest_dict(dataset), fh, indent=1)
        fh.write("\n")
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def generate_dataset(
    mesh: TriMesh,
    rig: OrbitRig,
    out_dir,
    name: str = "synthetic",
    threads: int = 1,
    normalization: Normalization | None = None,
) -> OrbitDataset:
    """Render ground-truth RGB / mask / normal frames on an orbit.

    Frames use hard rasterization; the manifest is written last.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise OSError(f"{out_dir} is not writable")
    cameras = build_orbit_cameras(rig)
    config = RasterConfig(mode="hard")
    if mesh.colors is None:
        mesh = mesh.with_colors(np.full_like(mesh.vertices, 0.7))

    def one(k):
        out = render(mesh, cameras[k], config)
        files = write_frame(out_dir, k, out.color, out.mask, out.normal)
        return files, out

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(one, range(rig.views)))

    views, frame_files = [], []
    for (files, out), cam in zip(results, cameras):
        frame_files.append(files)
        # store what the loader will decode, so in-memory and on-disk agree
        enc_n = encode_normals(out.normal)
        views.append(
            ViewRecord(
                encode_u8(out.color) / 255.0,
                encode_u8(out.mask) / 255.0,
                decode_normals(enc_n, out.mask),
                cam,
            )
        )
    dataset = OrbitDataset(name, rig.width, rig.height, views, rig, normalization, UNITS_NOTE, out_dir / "manifest.json", frame_files)
    write_manifest(dataset, dataset.manifest_path)
    return dataset


def load_dataset(manifest_path) -> OrbitDataset:
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise DatasetError(f"manifest {manifest_path} not found")
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"manifest {manifest_path}: invalid JSON ({exc})") from None
    for key in ("width", "height", "frames"):
        if key not in doc:
            raise DatasetError(f"manifest {manifest_path}: missing key {key!r}")
    width, height = int(doc["width"]), int(doc["height"])
    root = manifest_path.parent
    views, files = [], []
    labels = {"rgb": "RGB image", "mask": "mask", "normal": "normal map"}
    for i, fr in enumerate(doc["frames"]):
        arrays = {}
        for key in ("rgb", "mask", "normal"):
            if key not in fr:
                raise DatasetError(f"frame {i}: {labels[key]} missing from manifest")
            p = root / fr[key]
            if not p.exists():
                raise DatasetError(f"frame {i}: {labels[key]} missing ({p})")
            try:
                arrays[key] = read_png(p)
            except OSError as exc:
                raise DatasetError(f"frame {i}: {exc}") from None
        rgb, mask, normal = arrays["rgb"], arrays["mask"], arrays["normal"]
        if mask.ndim == 3:
            mask = mask[..., 0]
        for key, arr in (("rgb", rgb), ("mask", mask), ("normal", normal)):
            if arr.shape[:2] != (height, width):
                raise DatasetError(f"frame {i}: {labels[key]} is {arr.shape[1]}x{arr.shape[0]}, expected {width}x{height}")
        if rgb.ndim != 3 or normal.ndim != 3:
            raise DatasetError(f"frame {i}: RGB and normal images must have 3 channels")
        if normal.dtype != np.uint16:
            raise DatasetError(f"frame {i}: normal map must be 16-bit")
        rgb = rgb.astype(np.float64) / (65535.0 if rgb.dtype == np.uint16 else 255.0)
        mask = mask.astype(np.float64) / (65535.0 if mask.dtype == np.uint16 else 255.0)
        try:
            cam = Camera.from_dict(fr.get("camera", {}), width, height)
        except CameraError as exc:
            raise DatasetError(f"frame {i}: invalid camera: {exc}") from None
        if (cam.width, cam.height) != (width, height):
            raise DatasetError(f"frame {i}: camera is {cam.width}x{cam.height}, expected {width}x{height}")
        views.append(ViewRecord(rgb, mask, decode_normals(normal, mask), cam))
        files.append({k: fr[k] for k in ("rgb", "mask", "normal")})
    if len(views) < 2:
        raise DatasetError(f"manifest {manifest_path}: need at least 2 frames, got {len(views)}")
    rig = OrbitRig.from_dict(doc["rig"]) if "rig" in doc else None
    norm = Normalization.from_dict(doc["normalization"]) if "normalization" in doc else None
    return OrbitDataset(doc.get("name", manifest_path.parent.name), width, height, views, rig, norm, doc.get("units", UNITS_NOTE), manifest_path, files)


def normal_preflight(mesh: TriMesh, dataset: OrbitDataset, threshold_deg: float = PREFLIGHT_THRESHOLD_DEG) -> float:
    """Mean angle (degrees) between rendered and provided normals.

    Compared at pixels covered by both the render of ``mesh`` and the
    dataset mask. Emits ``NormalConventionWarning`` above the threshold,
    which usually means the maps are world-space rather than camera-space.
    """
    angles = []
    config = RasterConfig(mode="hard")
    for view in dataset.views:
        out = render(mesh, view.camera, config)
        both = out.covered & (view.mask > 0.5)
        if not both.any():
            continue
        dots = np.clip(np.einsum("pi,pi->p", out.normal[both], view.normal[both]), -1.0, 1.0)
        angles.append(np.degrees(np.arccos(dots)))
    if not angles:
        return 0.0
    mean = float(np.concatenate(angles).mean())
    if mean > threshold_deg:
        warnings.warn(
            f"provided normals differ from camera-space renders by {mean:.1f} deg on average "
            f"(threshold {threshold_deg:.0f}); are they world-space?",
            NormalConventionWarning,
            stacklevel=2,
        )
    return mean


def dump_render(out, out_dir, prefix: str = "render") -> None:
    """Debug dump of a RenderOutput as mask / normal / depth PNGs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_png(out_dir / f"{prefix}_mask.png", encode_u8(out.mask))
    write_png(out_dir / f"{prefix}_normal.png", encode_normals(out.normal))
    write_png(out_dir / f"{prefix}_depth.png", encode_depth(out.depth))


def encode_depth(depth: np.ndarray) -> np.ndarray:
    """16-bit depth with the finite range stretched to [1, 65535]; background 0."""
    finite = np.isfinite(depth)
    enc = np.zeros(depth.shape, dtype=np.uint16)
    if finite.any():
        lo, hi = depth[finite].min(), depth[finite].max()
        scale = (hi - lo) if hi > lo else 1.0
        enc[finite] = np.floor(1.0 + (depth[finite] - lo) / scale * 65534.0 + 0.5).astype(np.uint16)
    return enc
