"""XYZ and PLY point cloud readers and writers."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import as_cloud


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UnsupportedFormat(ValueError):
    pass


def read_xyz(path) -> np.ndarray:
    """One point per line as three whitespace-separated reals; ``#`` starts a comment line."""
    rows = []
    with open(path, encoding="ascii", errors="strict") as f:
        for lineno, line in enumerate(f, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 3:
                raise ParseError(f"expected 3 values, found {len(parts)}", lineno)
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ParseError(f"not a number in {text!r}", lineno) from None
    if not rows:
        raise ParseError(f"{path}: no points")
    try:
        return as_cloud(rows)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def write_xyz(path, pc) -> None:
    pc = as_cloud(pc)
    with open(path, "w", encoding="ascii", newline="\n") as f:
        for x, y, z in pc.tolist():
            f.write(f"{x:.17g} {y:.17g} {z:.17g}\n")


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _ply_type(name, lineno):
    try:
        return _PLY_TYPES[name]
    except KeyError:
        raise ParseError(f"unknown PLY type {name!r}", lineno) from None


def _read_ply_header(f):
    if f.readline().strip() != b"ply":
        raise ParseError("missing 'ply' magic", 1)
    fmt, elements, lineno = None, [], 1
    while True:
        raw = f.readline()
        lineno += 1
        if not raw:
            raise ParseError("header has no end_header", lineno)
        parts = raw.decode("ascii", errors="replace").split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        key = parts[0]
        if key == "end_header":
            break
        if key == "format":
            if len(parts) != 3:
                raise ParseError("malformed format line", lineno)
            fmt = parts[1]
        elif key == "element":
            if len(parts) != 3:
                raise ParseError("malformed element line", lineno)
            elements.append({"name": parts[1], "count": int(parts[2]), "props": []})
        elif key == "property":
            if not elements:
                raise ParseError("property before any element", lineno)
            if parts[1] == "list":
                if len(parts) != 5:
                    raise ParseError("malformed list property", lineno)
                prop = (parts[4], _ply_type(parts[2], lineno), _ply_type(parts[3], lineno))
            else:
                if len(parts) != 3:
                    raise ParseError("malformed property line", lineno)
                prop = (parts[2], _ply_type(parts[1], lineno), None)
            elements[-1]["props"].append(prop)
        else:
            raise ParseError(f"unexpected header keyword {key!r}", lineno)
    if fmt is None:
        raise ParseError("header has no format line")
    if fmt != "ascii" and fmt != "binary_little_endian":
        raise UnsupportedFormat(f"PLY format {fmt!r} is not supported")
    return fmt, elements, lineno


def _vertex_xyz(elem):
    names = [p[0] for p in elem["props"]]
    missing = [c for c in "xyz" if c not in names]
    if missing:
        raise ParseError(f"vertex element lacks properties {missing}")
    for c in "xyz":
        if elem["props"][names.index(c)][2] is not None:
            raise ParseError(f"vertex property {c!r} is a list")
    return [names.index(c) for c in "xyz"]


def _skip_binary(data, pos, elem):
    if all(p[2] is None for p in elem["props"]):
        return pos + elem["count"] * sum(np.dtype(p[1]).itemsize for p in elem["props"])
    for _ in range(elem["count"]):
        for _, t, item in elem["props"]:
            if item is None:
                pos += np.dtype(t).itemsize
            else:
                n = int(np.frombuffer(data, "<" + t, 1, pos)[0])
                pos += np.dtype(t).itemsize + n * np.dtype(item).itemsize
    return pos


def read_ply(path) -> np.ndarray:
    """Vertex positions of an ascii or binary_little_endian PLY file.

    Other elements and vertex properties are skipped.
    """
    with open(path, "rb") as f:
        fmt, elements, header_lines = _read_ply_header(f)
        body = f.read()
    vertex = next((e for e in elements if e["name"] == "vertex"), None)
    if vertex is None:
        raise ParseError("no vertex element")
    cols = _vertex_xyz(vertex)

    if fmt == "ascii":
        lines = body.decode("ascii", errors="replace").splitlines()
        pos = 0
        for elem in elements:
            if elem is vertex:
                break
            pos += elem["count"]
        rows = []
        for r in range(vertex["count"]):
            lineno = header_lines + pos + r + 1
            if pos + r >= len(lines):
                raise ParseError("file ends before all vertices were read", lineno)
            parts = lines[pos + r].split()
            try:
                rows.append([float(parts[c]) for c in cols])
            except (IndexError, ValueError):
                raise ParseError("malformed vertex row", lineno) from None
        pts = np.array(rows, dtype=np.float64).reshape(-1, 3)
    else:
        pos = 0
        for elem in elements:
            if elem is vertex:
                break
            pos = _skip_binary(body, pos, elem)
        if any(p[2] is not None for p in vertex["props"]):
            raise UnsupportedFormat("list properties on the vertex element are not supported")
        dtype = np.dtype([(f"p{i}", "<" + p[1]) for i, p in enumerate(vertex["props"])])
        if len(body) < pos + vertex["count"] * dtype.itemsize:
            raise ParseError("file ends before all vertices were read")
        rec = np.frombuffer(body, dtype, vertex["count"], pos)
        pts = np.stack([rec[f"p{c}"].astype(np.float64) for c in cols], axis=1)
    try:
        return as_cloud(pts)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def write_ply(path, pc) -> None:
    """Binary little-endian PLY with double x, y, z."""
    pc = as_cloud(pc)
    header = ("ply\nformat binary_little_endian 1.0\n"
              f"element vertex {len(pc)}\n"
              "property double x\nproperty double y\nproperty double z\nend_header\n")
    Path(path).write_bytes(header.encode("ascii") + pc.astype("<f8").tobytes())


def read_cloud(path) -> np.ndarray:
    """Dispatch on extension: ``.ply`` or anything else as XYZ."""
    return read_ply(path) if str(path).lower().endswith(".ply") else read_xyz(path)


def write_cloud(path, pc) -> None:
    if str(path).lower().endswith(".ply"):
        write_ply(path, pc)
    else:
        write_xyz(path, pc)

