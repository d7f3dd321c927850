"""Text serialization: field CSV blocks, frame/primitive bundles, OBJ meshes.

Every format is line-oriented ASCII so artifacts stay inspectable. Floats
are written with 17 significant digits, making all round trips lossless.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .errors import InputError
from .grid import ImmersionField, MetricField, PeriodicGrid, ScalarField

FLOAT_FMT = "{:.17g}"


def _fmt_row(row) -> str:
    return ",".join(FLOAT_FMT.format(float(v)) for v in row)


def _field_payload(field) -> np.ndarray:
    if isinstance(field, ScalarField):
        return field.values.reshape(-1, 1)
    if isinstance(field, MetricField):
        return field.comps.reshape(-1, field.comps.shape[-1])
    if isinstance(field, ImmersionField):
        return field.values.reshape(-1, field.ambient_dim)
    raise InputError(f"unsupported field type {type(field).__name__}")


def write_field_block(field, out: io.TextIOBase):
    """One field as a header line plus one CSV row per node (row-major)."""
    grid = field.grid
    payload = _field_payload(field)
    res = ",".join(str(r) for r in grid.shape)
    out.write(f"# field {field.kind} dim={grid.dim} res={res} N={payload.shape[1]}\n")
    if isinstance(field, ImmersionField):
        rows = ";".join(_fmt_row(field.offsets[a]) for a in range(grid.dim))
        out.write(f"# offsets {rows}\n")
    for row in payload:
        out.write(_fmt_row(row) + "\n")


def read_field_block(lines, min_resolution: int = 16):
    """Inverse of write_field_block; consumes lines from an iterator."""
    header = None
    for line in lines:
        line = line.strip()
        if line:
            header = line
            break
    if header is None:
        raise InputError("empty field block")
    parts = header.split()
    if len(parts) != 6 or parts[0] != "#" or parts[1] != "field":
        raise InputError(f"malformed field header: {header!r}")
    kind = parts[2]
    attrs = dict(p.split("=", 1) for p in parts[3:])
    dim = int(attrs["dim"])
    shape = tuple(int(r) for r in attrs["res"].split(","))
    ncomp = int(attrs["N"])
    if len(shape) != dim:
        raise InputError("res entry count does not match dim")
    grid = PeriodicGrid(shape, min_resolution=min_resolution)

    offsets = None
    rows = []
    needed = grid.num_nodes
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if line.startswith("# offsets"):
            body = line[len("# offsets"):].strip()
            offsets = np.array([[float(v) for v in part.split(",")]
                                for part in body.split(";")])
            continue
        rows.append([float(v) for v in line.split(",")])
        if len(rows) == needed:
            break
    if len(rows) != needed:
        raise InputError(f"field block truncated: {len(rows)} of {needed} rows")
    data = np.asarray(rows)
    if data.shape[1] != ncomp:
        raise InputError(f"row width {data.shape[1]} != declared N={ncomp}")
    if kind == "scalar":
        return ScalarField(grid, data.reshape(grid.shape))
    if kind == "metric":
        return MetricField(grid, data.reshape(grid.shape + (ncomp,)))
    if kind == "immersion":
        return ImmersionField(grid, data.reshape(grid.shape + (ncomp,)), offsets)
    raise InputError(f"unknown field kind {kind!r}")


def write_field(field, path):
    with open(path, "w") as fh:
        write_field_block(field, fh)


def read_field(path, min_resolution: int = 16):
    with open(path) as fh:
        return read_field_block(iter(fh), min_resolution=min_resolution)


def write_frame(frame, path):
    """FramePair as two immersion-style blocks (nu then b)."""
    with open(path, "w") as fh:
        write_field_block(ImmersionField(frame.grid, frame.nu), fh)
        write_field_block(ImmersionField(frame.grid, frame.b), fh)


def read_frame(path):
    from .frame import FramePair

    with open(path) as fh:
        lines = iter(fh)
        nu = read_field_block(lines)
        b = read_field_block(lines)
    return FramePair(nu.grid, nu.values, b.values)


def write_primitives(primitives, path):
    """Each primitive: one manifest line, then amplitude and psi blocks."""
    with open(path, "w") as fh:
        for k, prim in enumerate(primitives):
            lin = _fmt_row(prim.psi_linear)
            fh.write(f"primitive id={k} patch={prim.support_id} psi_linear={lin}\n")
            write_field_block(prim.amplitude, fh)
            write_field_block(prim.psi_periodic, fh)


def read_primitives(path):
    from .decompose import PrimitiveMetric

    prims = []
    with open(path) as fh:
        lines = iter(fh)
        for line in lines:
            line = line.strip()
            if not line:
                continue
            if not line.startswith("primitive "):
                raise InputError(f"expected primitive manifest, got {line!r}")
            attrs = dict(p.split("=", 1) for p in line.split()[1:])
            amplitude = read_field_block(lines)
            psi_periodic = read_field_block(lines)
            prims.append(PrimitiveMetric(
                amplitude=amplitude,
                psi_periodic=psi_periodic,
                psi_linear=np.array([float(v) for v in attrs["psi_linear"].split(",")]),
                support_id=int(attrs["patch"]),
            ))
    return prims


def export_obj(w: ImmersionField, path):
    """Quad mesh of a torus immersion: first three ambient coordinates.

    Faces wrap around both periodic seams; indices are 1-based per the OBJ
    text format.
    """
    if w.grid.dim != 2:
        raise InputError("OBJ export needs a 2-dimensional chart")
    r1, r2 = w.grid.shape
    values = w.values
    coords = np.zeros((r1, r2, 3))
    take = min(3, w.ambient_dim)
    coords[..., :take] = values[..., :take]
    with open(path, "w") as fh:
        for i in range(r1):
            for j in range(r2):
                fh.write("v " + " ".join(FLOAT_FMT.format(c) for c in coords[i, j]) + "\n")
        for i in range(r1):
            for j in range(r2):
                a = i * r2 + j + 1
                b = ((i + 1) % r1) * r2 + j + 1
                c = ((i + 1) % r1) * r2 + (j + 1) % r2 + 1
                d = i * r2 + (j + 1) % r2 + 1
                fh.write(f"f {a} {b} {c} {d}\n")


def parse_obj_counts(path) -> tuple[int, int]:
    """Vertex and face counts of an OBJ file (round-trip check helper)."""
    nv = nf = 0
    with open(path) as fh:
        for line in fh:
            if line.startswith("v "):
                nv += 1
            elif line.startswith("f "):
                nf += 1
    return nv, nf


def write_table(header, rows, path_or_stream):
    """Plain CSV: one header line then the data rows."""
    own = isinstance(path_or_stream, (str, Path))
    fh = open(path_or_stream, "w") if own else path_or_stream
    try:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(
                v if isinstance(v, str) else FLOAT_FMT.format(float(v)) for v in row) + "\n")
    finally:
        if own:
            fh.close()


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise InputError("empty table")
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]
