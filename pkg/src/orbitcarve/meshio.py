"""OBJ / binary PLY mesh I/O, oriented point-cloud PLY, camera JSON files."""

from __future__ import annotations

import json
import logging
import os
import warnings
from pathlib import Path

import numpy as np

from .geometry import Camera, MeshError, OrientedPointCloud, TriMesh

log = logging.getLogger(__name__)


class MeshFormatError(ValueError):
    """A mesh or point-cloud file could not be parsed."""


_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def load_mesh(path) -> TriMesh:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    ext = path.suffix.lower()
    if ext == ".obj":
        return _load_obj(path)
    if ext == ".ply":
        vertices, faces, colors, _ = _read_ply(path)
        if faces is None:
            raise MeshFormatError(f"{path}: PLY has no face element")
        return _checked_mesh(vertices, faces, colors, path)
    raise MeshFormatError(f"{path}: unsupported mesh extension {ext!r} (expected .obj or .ply)")


def save_mesh(mesh: TriMesh, path) -> None:
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".obj":
        _save_obj(mesh, path)
    elif ext == ".ply":
        _write_ply(path, mesh.vertices, mesh.faces, mesh.colors)
    else:
        raise MeshFormatError(f"{path}: unsupported mesh extension {ext!r}")


def _checked_mesh(vertices, faces, colors, path) -> TriMesh:
    try:
        return TriMesh(vertices, faces, colors)
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from None


def _load_obj(path: Path) -> TriMesh:
    vertices, colors, faces = [], [], []
    ignored: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split("#", 1)[0].split()
            if not tokens:
                continue
            tag = tokens[0]
            try:
                if tag == "v":
                    if len(tokens) not in (4, 7):
                        raise ValueError(f"expected 3 or 6 numbers, got {len(tokens) - 1}")
                    vals = [float(t) for t in tokens[1:]]
                    vertices.append(vals[:3])
                    colors.append(vals[3:] if len(vals) == 6 else None)
                elif tag == "f":
                    if len(tokens) != 4:
                        raise ValueError(f"only triangles are supported, got {len(tokens) - 1} corners")
                    idx = []
                    for t in tokens[1:]:
                        i = int(t.split("/", 1)[0])
                        # negative indices are relative to the vertices read so far
                        idx.append(i - 1 if i > 0 else len(vertices) + i)
                    faces.append(idx)
                else:
                    ignored[tag] = ignored.get(tag, 0) + 1
            except ValueError as exc:
                raise MeshFormatError(f"{path}:{lineno}: {exc}") from None
    if ignored:
        warnings.warn(f"{path}: ignored OBJ directives {sorted(ignored)}", stacklevel=3)
    have = [c is not None for c in colors]
    if any(have) and not all(have):
        raise MeshFormatError(f"{path}: vertex colors present on some vertices only")
    col = np.array(colors, dtype=np.float64) if colors and all(have) else None
    return _checked_mesh(
        np.array(vertices, dtype=np.float64).reshape(-1, 3),
        np.array(faces, dtype=np.int64).reshape(-1, 3),
        col,
        path,
    )


def _save_obj(mesh: TriMesh, path: Path) -> None:
    lines = []
    if mesh.colors is None:
        for x, y, z in mesh.vertices.tolist():
            lines.append(f"v {x!r} {y!r} {z!r}")
    else:
        for (x, y, z), (r, g, b) in zip(mesh.vertices.tolist(), mesh.colors.tolist()):
            lines.append(f"v {x!r} {y!r} {z!r} {r!r} {g!r} {b!r}")
    for a, b, c in (mesh.faces + 1).tolist():
        lines.append(f"f {a} {b} {c}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def quantize_colors(colors: np.ndarray) -> np.ndarray:
    """Colors in [0, 1] to uchar by ``round(c * 255)`` (half away from zero)."""
    return np.floor(np.clip(colors, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def _write_ply(path: Path, vertices, faces=None, colors=None, normals=None) -> None:
    n = len(vertices)
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if normals is not None:
        fields += [("nx", "<f4"), ("ny", "<f4"), ("nz", "<f4")]
    if colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    vert = np.empty(n, dtype=fields)
    vert["x"], vert["y"], vert["z"] = vertices[:, 0], vertices[:, 1], vertices[:, 2]
    if normals is not None:
        vert["nx"], vert["ny"], vert["nz"] = normals[:, 0], normals[:, 1], normals[:, 2]
    if colors is not None:
        q = quantize_colors(colors)
        vert["red"], vert["green"], vert["blue"] = q[:, 0], q[:, 1], q[:, 2]

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    ply_names = {"<f4": "float", "u1": "uchar"}
    header += [f"property {ply_names[t]} {name}" for name, t in fields]
    if faces is not None:
        header += [f"element face {len(faces)}", "property list uchar int vertex_indices"]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(vert.tobytes())
        if faces is not None:
            face = np.empty(len(faces), dtype=[("n", "u1"), ("i", "<i4", (3,))])
            face["n"] = 3
            face["i"] = faces
            fh.write(face.tobytes())


def _parse_ply_header(data: bytes, path):
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise MeshFormatError(f"{path}: not a PLY file (byte 0)")
    nl = data.find(b"\n", end)
    body_start = nl + 1
    lines = data[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements = []
    for line in lines[1:]:
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append({"name": tok[1], "count": int(tok[2]), "props": []})
        elif tok[0] == "property":
            if not elements:
                raise MeshFormatError(f"{path}: property before element in header")
            if tok[1] == "list":
                elements[-1]["props"].append((tok[4], "list", _ply_type(tok[2], path), _ply_type(tok[3], path)))
            else:
                elements[-1]["props"].append((tok[2], _ply_type(tok[1], path)))
    if fmt != "binary_little_endian":
        raise MeshFormatError(f"{path}: only binary_little_endian PLY is supported (got {fmt})")
    return elements, body_start


def _ply_type(name, path):
    try:
        return np.dtype("<" + _PLY_TYPES[name])
    except KeyError:
        raise MeshFormatError(f"{path}: unknown PLY type {name!r}") from None


def _read_ply(path):
    data = Path(path).read_bytes()
    elements, offset = _parse_ply_header(data, path)
    vertices = faces = colors = normals = None
    for el in elements:
        lists = [p for p in el["props"] if len(p) == 4]
        if not lists:
            dt = np.dtype([(p[0], p[1]) for p in el["props"]])
            size = dt.itemsize * el["count"]
            if offset + size > len(data):
                raise MeshFormatError(f"{path}: truncated element {el['name']!r} at byte {offset}")
            arr = np.frombuffer(data, dtype=dt, count=el["count"], offset=offset)
            offset += size
            if el["name"] == "vertex":
                names = dt.names
                if not all(k in names for k in "xyz"):
                    raise MeshFormatError(f"{path}: vertex element lacks x/y/z")
                vertices = np.stack([arr[k].astype(np.float64) for k in "xyz"], axis=1)
                if all(k in names for k in ("red", "green", "blue")):
                    colors = np.stack([arr[k] for k in ("red", "green", "blue")], axis=1).astype(np.float64) / 255.0
                if all(k in names for k in ("nx", "ny", "nz")):
                    normals = np.stack([arr[k].astype(np.float64) for k in ("nx", "ny", "nz")], axis=1)
            continue
        if el["name"] != "face" or len(el["props"]) != 1:
            raise MeshFormatError(f"{path}: unsupported list element {el['name']!r} at byte {offset}")
        _, _, count_t, index_t = el["props"][0]
        dt = np.dtype([("n", count_t), ("i", index_t, (3,))])
        size = dt.itemsize * el["count"]
        if offset + size > len(data):
            raise MeshFormatError(f"{path}: truncated face element at byte {offset}")
        arr = np.frombuffer(data, dtype=dt, count=el["count"], offset=offset)
        bad = np.flatnonzero(arr["n"] != 3)
        if len(bad):
            raise MeshFormatError(
                f"{path}: face {bad[0]} has {arr['n'][bad[0]]} corners at byte "
                f"{offset + bad[0] * dt.itemsize}; only triangles are supported"
            )
        faces = arr["i"].astype(np.int64)
        offset += size
    if vertices is None:
        raise MeshFormatError(f"{path}: PLY has no vertex element")
    return vertices, faces, colors, normals


def load_point_cloud(path) -> OrientedPointCloud:
    """Oriented points from a PLY with ``nx, ny, nz`` vertex properties."""
    vertices, _, _, normals = _read_ply(path)
    if normals is None:
        raise MeshFormatError(f"{path}: point cloud needs nx/ny/nz properties")
    length = np.linalg.norm(normals, axis=1, keepdims=True)
    if np.any(length == 0):
        raise MeshFormatError(f"{path}: zero-length normal at point {int(np.flatnonzero(length == 0)[0])}")
    # float32 storage loses a little unit-length precision
    return OrientedPointCloud(vertices, normals / length)


def save_point_cloud(cloud: OrientedPointCloud, path) -> None:
    _write_ply(Path(path), cloud.points, normals=cloud.normals)


def load_cameras(path) -> list[Camera]:
    """Camera JSON: one record, a list of records, or ``{"frames": [...]}``."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(doc, dict) and "frames" in doc:
        records = [fr.get("camera", fr) for fr in doc["frames"]]
    elif isinstance(doc, list):
        records = doc
    else:
        records = [doc]
    return [Camera.from_dict(r) for r in records]


def save_cameras(cameras, path) -> None:
    records = [c.to_dict() for c in cameras]
    payload = records[0] if len(records) == 1 else records
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
    os.replace(tmp, path)
