"""Readers and writers for tet meshes (plain ASCII, legacy VTK) and OBJ surfaces.

Plain tet-mesh grammar (``.tet``), whitespace separated, ``#`` starts a comment::

    hydrostep-tetmesh 1
    <n_vertices>
    x y z                      (n_vertices lines)
    <n_tets>
    i j k l                    (n_tets lines, 0-based)
    [pressure                  (optional keyword, then n_vertices values)
    p
    ...]

Tets with negative orientation are flipped on read.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import SurfaceMesh, TetMesh, signed_volumes

TET_HEADER = "hydrostep-tetmesh"


def _tokens(text: str):
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        yield from line.split()


def _orient(vertices, tets):
    tets = np.array(tets, dtype=np.int64).reshape(-1, 4)
    neg = signed_volumes(np.asarray(vertices, float), tets) < 0
    tets[neg] = tets[neg][:, [0, 2, 1, 3]]
    return tets


def read_tet_mesh(path) -> tuple[TetMesh, np.ndarray | None]:
    """Read the plain format. Returns the mesh and the optional pressure field."""
    tok = _tokens(Path(path).read_text())
    try:
        if next(tok) != TET_HEADER:
            raise ValueError("missing tet-mesh header")
        next(tok)  # version
        nv = int(next(tok))
        verts = np.array([float(next(tok)) for _ in range(3 * nv)]).reshape(nv, 3)
        nt = int(next(tok))
        tets = np.array([int(next(tok)) for _ in range(4 * nt)]).reshape(nt, 4)
        pressure = None
        key = next(tok, None)
        if key is not None:
            if key != "pressure":
                raise ValueError(f"unexpected section {key!r}")
            pressure = np.array([float(next(tok)) for _ in range(nv)])
    except StopIteration:
        raise ValueError("truncated tet-mesh file") from None
    return TetMesh(verts, _orient(verts, tets)), pressure


def write_tet_mesh(path, mesh: TetMesh, pressure=None):
    lines = [f"{TET_HEADER} 1", str(len(mesh.vertices))]
    lines += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    lines.append(str(len(mesh.tets)))
    lines += [" ".join(str(int(i)) for i in t) for t in mesh.tets]
    if pressure is not None:
        lines.append("pressure")
        lines += [repr(float(p)) for p in pressure]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk_tets(path) -> tuple[TetMesh, np.ndarray | None]:
    """Minimal legacy-VTK ASCII unstructured grid: POINTS, tetra CELLS, one point scalar."""
    tok = list(_tokens(Path(path).read_text()))
    upper = [t.upper() for t in tok]
    i = upper.index("POINTS")
    nv = int(tok[i + 1])
    verts = np.array(tok[i + 3:i + 3 + 3 * nv], dtype=float).reshape(nv, 3)
    i = upper.index("CELLS")
    nc = int(tok[i + 1])
    cells, j = [], i + 3
    for _ in range(nc):
        k = int(tok[j])
        cells.append([int(x) for x in tok[j + 1:j + 1 + k]])
        j += k + 1
    if "CELL_TYPES" in upper:
        i = upper.index("CELL_TYPES")
        types = [int(t) for t in tok[i + 2:i + 2 + nc]]
        cells = [c for c, t in zip(cells, types) if t == 10]
    if any(len(c) != 4 for c in cells):
        raise ValueError("only tetrahedral cells are supported")
    pressure = None
    if "POINT_DATA" in upper:
        i = upper.index("SCALARS", upper.index("POINT_DATA"))
        j = i + 3
        if tok[j].isdigit():
            j += 1  # optional component count
        if upper[j] == "LOOKUP_TABLE":
            j += 2
        pressure = np.array(tok[j:j + nv], dtype=float)
    return TetMesh(verts, _orient(verts, cells)), pressure


def read_obj(path) -> SurfaceMesh:
    """``v``/``f`` lines only; polygon faces are fan-triangulated, 1-based or negative indices."""
    verts, tris = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = []
            for p in parts[1:]:
                k = int(p.split("/")[0])
                idx.append(k - 1 if k > 0 else len(verts) + k)
            tris.extend([idx[0], idx[i], idx[i + 1]] for i in range(1, len(idx) - 1))
    return SurfaceMesh(np.array(verts, float), np.array(tris, dtype=np.int64).reshape(-1, 3))


def write_obj(path, mesh: SurfaceMesh):
    lines = ["v " + " ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")
