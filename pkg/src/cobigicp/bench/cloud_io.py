"""Point-cloud and pose file I/O: PLY (ascii and binary little-endian),
plain XYZ text, and 12-number pose lines."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..se3 import RigidTransform, transform_from_line, transform_to_line
from ..surface import PointCloud

_PLY_SCALAR_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def load_cloud(path) -> tuple[PointCloud, int]:
    """Load a cloud from PLY or whitespace/comma-separated XYZ text.

    Rows with non-finite coordinates are dropped; returns (cloud, dropped
    count).  Raises ValueError with a line number for malformed input and when
    no valid points remain.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, "rb") as fh:
        head = fh.peek(4)[:4] if hasattr(fh, "peek") else fh.read(4)
    if head.startswith(b"ply"):
        points = _load_ply(path)
    else:
        points = _load_xyz_text(path)
    finite = np.all(np.isfinite(points), axis=1)
    dropped = int(np.count_nonzero(~finite))
    points = points[finite]
    if points.shape[0] == 0:
        raise ValueError(f"{path}: zero valid points")
    return PointCloud(points=points), dropped


def _load_ply(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        fmt = None
        elements: list[tuple[str, int, list[tuple[str, str]]]] = []
        line_no = 0
        while True:
            raw = fh.readline()
            line_no += 1
            if not raw:
                raise ValueError(f"{path}: line {line_no}: unexpected end of PLY header")
            line = raw.decode("ascii", errors="replace").strip()
            if line_no == 1:
                if line != "ply":
                    raise ValueError(f"{path}: line 1: not a PLY file")
                continue
            if line == "end_header":
                break
            fields = line.split()
            if not fields or fields[0] == "comment" or fields[0] == "obj_info":
                continue
            if fields[0] == "format":
                if len(fields) < 2 or fields[1] not in ("ascii", "binary_little_endian"):
                    raise ValueError(f"{path}: line {line_no}: unsupported PLY format")
                fmt = fields[1]
            elif fields[0] == "element":
                if len(fields) != 3:
                    raise ValueError(f"{path}: line {line_no}: malformed element declaration")
                try:
                    count = int(fields[2])
                except ValueError:
                    raise ValueError(f"{path}: line {line_no}: bad element count") from None
                elements.append((fields[1], count, []))
            elif fields[0] == "property":
                if not elements:
                    raise ValueError(f"{path}: line {line_no}: property before any element")
                if fields[1] == "list":
                    elements[-1][2].append(("list", fields[-1]))
                else:
                    if len(fields) != 3:
                        raise ValueError(f"{path}: line {line_no}: malformed property")
                    elements[-1][2].append((fields[1], fields[2]))
            else:
                raise ValueError(f"{path}: line {line_no}: unknown header keyword {fields[0]!r}")

        if fmt is None:
            raise ValueError(f"{path}: line {line_no}: PLY header missing format line")
        if not elements or elements[0][0] != "vertex":
            raise ValueError(f"{path}: line {line_no}: vertex element must come first")
        _, count, props = elements[0]
        names = [name for _, name in props]
        if any(t == "list" for t, _ in props):
            raise ValueError(f"{path}: line {line_no}: list properties on vertices are unsupported")
        for axis in ("x", "y", "z"):
            if axis not in names:
                raise ValueError(f"{path}: line {line_no}: vertex element lacks property {axis!r}")

        if fmt == "ascii":
            rows = np.empty((count, 3))
            cols = [names.index(a) for a in ("x", "y", "z")]
            for r in range(count):
                raw = fh.readline()
                line_no += 1
                parts = raw.decode("ascii", errors="replace").split()
                if len(parts) < len(names):
                    raise ValueError(f"{path}: line {line_no}: truncated vertex row")
                try:
                    rows[r] = [float(parts[c]) for c in cols]
                except ValueError:
                    raise ValueError(f"{path}: line {line_no}: non-numeric vertex value") from None
            return rows

        for t, name in props:
            if t not in _PLY_SCALAR_TYPES:
                raise ValueError(f"{path}: unsupported vertex property type {t!r}")
        dtype = np.dtype([(name, "<" + _PLY_SCALAR_TYPES[t]) for t, name in props])
        data = np.frombuffer(fh.read(dtype.itemsize * count), dtype=dtype, count=count)
        if data.shape[0] != count:
            raise ValueError(f"{path}: binary vertex block shorter than declared")
        return np.column_stack([data["x"], data["y"], data["z"]]).astype(np.float64)


def _load_xyz_text(path: Path) -> np.ndarray:
    rows: list[tuple[float, float, float]] = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.replace(",", " ").split()
            if len(parts) < 3:
                raise ValueError(f"{path}: line {line_no}: expected at least 3 values")
            try:
                rows.append((float(parts[0]), float(parts[1]), float(parts[2])))
            except ValueError:
                raise ValueError(f"{path}: line {line_no}: non-numeric value") from None
    if not rows:
        raise ValueError(f"{path}: zero valid points")
    return np.array(rows, dtype=np.float64)


def save_xyz(path, points) -> None:
    """Write points as whitespace-separated XYZ text, one row per point."""
    points = np.asarray(points, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for row in points:
            fh.write(f"{row[0]!r} {row[1]!r} {row[2]!r}\n")


def read_pose(path) -> RigidTransform:
    """Read a transform from the first non-empty line of a pose file."""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            stripped = line.strip()
            if stripped and not stripped.startswith("#"):
                return transform_from_line(stripped)
    raise ValueError(f"{path}: no pose line found")


def write_pose(path, transform: RigidTransform) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(transform_to_line(transform) + "\n")
