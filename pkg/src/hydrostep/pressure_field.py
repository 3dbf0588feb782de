"""Compliant primitives with a medial-axis pressure field, plus rigid surfaces.

The field of a compliant primitive is ``E_h * d(x) / d_max`` where ``d`` is the
distance to the boundary, sampled at mesh vertices and interpolated linearly.
Meshes are built so that medial-axis points are mesh vertices.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import permutations

import numpy as np

from .mesh import Bvh, SurfaceMesh, TetMesh, build_bvh, signed_volumes, tet_affine_fields

_TET_FACES = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])


@dataclass(eq=False)
class PressureMesh:
    mesh: TetMesh
    field: np.ndarray
    modulus: float

    def __post_init__(self):
        self.field = np.array(self.field, dtype=float)
        if self.field.shape != (len(self.mesh.vertices),):
            raise ValueError("field length must equal vertex count")
        if np.any(self.field < 0):
            raise ValueError("pressure field must be nonnegative")

    @cached_property
    def affine(self):
        """Per-tet (gradient, offset), body frame."""
        return tet_affine_fields(self.mesh.vertices, self.mesh.tets, self.field)

    @cached_property
    def face_planes(self):
        """Per-tet outward face normals (n, 4, 3) and offsets (n, 4); inside is n.x <= o."""
        pts = self.mesh.element_points()
        f = pts[:, _TET_FACES]                                   # (n, 4, 3, 3)
        nrm = np.cross(f[:, :, 1] - f[:, :, 0], f[:, :, 2] - f[:, :, 0])
        nrm /= np.linalg.norm(nrm, axis=2, keepdims=True)
        off = np.einsum("nfi,nfi->nf", nrm, f[:, :, 0])
        return nrm, off

    @cached_property
    def bvh(self) -> Bvh:
        return build_bvh(self.mesh)


@dataclass(eq=False)
class RigidGeometry:
    surface: SurfaceMesh

    @cached_property
    def bvh(self) -> Bvh:
        return build_bvh(self.surface)


def _axis_nodes(half: float, resolution: float, keys) -> np.ndarray:
    n = max(1, int(np.ceil(2 * half / resolution - 1e-9)))
    nodes = np.concatenate([np.linspace(-half, half, n + 1), list(keys)])
    nodes = np.unique(np.round(nodes / half, 12)) * half
    return nodes


_KUHN = []
for _perm in permutations(range(3)):
    corner = np.zeros(3, dtype=int)
    path = [corner.copy()]
    for ax in _perm:
        corner[ax] += 1
        path.append(corner.copy())
    _KUHN.append(path)


def _grid_tets(xs, ys, zs):
    """Kuhn (6-tet) split of a tensor grid; conforming because every cell uses
    the same main diagonal."""
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    verts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    nx, ny, nz = len(xs), len(ys), len(zs)
    idx = np.arange(nx * ny * nz).reshape(nx, ny, nz)
    ci, cj, ck = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), np.arange(nz - 1), indexing="ij")
    ci, cj, ck = ci.ravel(), cj.ravel(), ck.ravel()
    tets = []
    for path in _KUHN:
        tets.append(np.stack([idx[ci + p[0], cj + p[1], ck + p[2]] for p in path], axis=1))
    tets = np.concatenate(tets)
    return verts, _positive(verts, tets)


def _positive(verts, tets):
    tets = np.asarray(tets, dtype=np.int64)
    neg = signed_volumes(verts, tets) < 0
    tets[neg] = tets[neg][:, [0, 2, 1, 3]]
    return tets


def _check_modulus(modulus):
    if not np.isfinite(modulus) or modulus < 0:
        raise ValueError("hydroelastic modulus must be finite and nonnegative")


def make_box(half_sizes, modulus: float, resolution: float) -> PressureMesh:
    """Compliant box centred at the origin."""
    half = np.asarray(half_sizes, dtype=float)
    _check_modulus(modulus)
    if half.shape != (3,) or np.any(half <= 0):
        raise ValueError("half sizes must be three positive numbers")
    depth = half.min()
    if not 0 < resolution <= depth:
        raise ValueError("resolution must be in (0, min half size]")
    axes = [_axis_nodes(a, resolution, [0.0, a - depth, depth - a]) for a in half]
    verts, tets = _grid_tets(*axes)
    dist = np.min(half - np.abs(verts), axis=1)
    dist[np.isclose(dist, 0.0, atol=1e-12 * depth)] = 0.0
    field = modulus * np.clip(dist, 0.0, None) / depth
    return PressureMesh(TetMesh(verts, tets), field, float(modulus))


def make_half_space_slab(thickness: float, extent: float, modulus: float,
                         resolution: float) -> PressureMesh:
    """Slab [-extent, extent]^2 x [-thickness, 0]; pressure grows linearly with depth.

    The bottom face carries pressure ``modulus`` (treated as interior), so the
    gradient is ``modulus / thickness`` pointing down everywhere.
    """
    _check_modulus(modulus)
    if thickness <= 0 or extent <= 0 or resolution <= 0:
        raise ValueError("thickness, extent and resolution must be positive")
    nxy = max(1, int(np.ceil(2 * extent / resolution - 1e-9)))
    nz = max(1, int(np.ceil(thickness / resolution - 1e-9)))
    xs = np.linspace(-extent, extent, nxy + 1)
    zs = np.linspace(-thickness, 0.0, nz + 1)
    verts, tets = _grid_tets(xs, xs, zs)
    field = modulus * (-verts[:, 2]) / thickness
    field[verts[:, 2] == 0.0] = 0.0
    return PressureMesh(TetMesh(verts, tets), field, float(modulus))


# -- cylinder -----------------------------------------------------------------


def _split_prism(v):
    """Conforming 3-tet split of a prism [a, b, c | d, e, f] (d over a, ...)."""
    rotations = [(0, 1, 2, 3, 4, 5), (1, 2, 0, 4, 5, 3), (2, 0, 1, 5, 3, 4),
                 (3, 5, 4, 0, 2, 1), (4, 3, 5, 1, 0, 2), (5, 4, 3, 2, 1, 0)]
    i = int(np.argmin(v))
    perm = next(r for r in rotations if r[0] == i)
    v0, v1, v2, v3, v4, v5 = (v[j] for j in perm)
    if min(v1, v5) < min(v2, v4):
        return [(v0, v1, v2, v5), (v0, v1, v5, v4), (v0, v4, v5, v3)]
    return [(v0, v1, v2, v4), (v0, v4, v2, v5), (v0, v4, v5, v3)]


def _split_pyramid(apex, quad):
    b, c, d, e = quad
    if min(b, d) < min(c, e):
        return [(apex, b, c, d), (apex, b, d, e)]
    return [(apex, b, c, e), (apex, c, d, e)]


def _revolve(nodes_rz, triangles, sectors):
    """Sweep an (r, z) triangulation about the z axis into a tet mesh."""
    on_axis = nodes_rz[:, 0] == 0.0
    ids = np.full((len(nodes_rz), sectors), -1, dtype=np.int64)
    verts = []
    theta = 2 * np.pi * np.arange(sectors) / sectors
    for n, (r, z) in enumerate(nodes_rz):
        if on_axis[n]:
            ids[n, :] = len(verts)
            verts.append((0.0, 0.0, z))
        else:
            ids[n, :] = len(verts) + np.arange(sectors)
            verts.extend(zip(r * np.cos(theta), r * np.sin(theta), np.full(sectors, z)))
    verts = np.array(verts)
    tets = []
    for tri in triangles:
        axis_nodes = [n for n in tri if on_axis[n]]
        ring = [n for n in tri if not on_axis[n]]
        for k in range(sectors):
            k1 = (k + 1) % sectors
            if not axis_nodes:
                a, b, c = tri
                tets += _split_prism([ids[a, k], ids[b, k], ids[c, k],
                                      ids[a, k1], ids[b, k1], ids[c, k1]])
            elif len(axis_nodes) == 1:
                b, c = ring
                tets += _split_pyramid(ids[axis_nodes[0], 0],
                                       (ids[b, k], ids[c, k], ids[c, k1], ids[b, k1]))
            else:
                c = ring[0]
                tets.append((ids[axis_nodes[0], 0], ids[axis_nodes[1], 0], ids[c, k], ids[c, k1]))
    return verts, _positive(verts, np.array(tets))


def cylinder_sectors(radius: float, resolution: float) -> int:
    return max(8, int(np.ceil(2 * np.pi * radius / resolution - 1e-9)))


def make_cylinder(radius: float, height: float, modulus: float, resolution: float,
                  sectors: int | None = None) -> PressureMesh:
    """Compliant cylinder along z, centred at the origin, radius > height / 2.

    The (r, z) section is split so that the medial disk (r <= R - h, z = 0)
    and the 45-degree medial cones are mesh edges; the field is then exactly
    ``E_h * (h - |z|) / h`` in the flat-face regions. ``sectors`` overrides the
    angular count derived from ``resolution``.
    """
    _check_modulus(modulus)
    if radius <= 0 or height <= 0:
        raise ValueError("radius and height must be positive")
    h = height / 2
    if radius <= h:
        raise ValueError("cylinder must be wider than tall (radius > height / 2)")
    if not 0 < resolution <= radius:
        raise ValueError("resolution must be in (0, radius]")
    n_sec = sectors or cylinder_sectors(radius, resolution)
    inner = radius - h
    n_rad = max(1, int(np.ceil(inner / resolution - 1e-9)))
    rs = np.linspace(0.0, inner, n_rad + 1)
    zs = (-h, 0.0, h)
    nodes = [(r, z) for r in rs for z in zs]
    nid = {(i, j): 3 * i + j for i in range(n_rad + 1) for j in range(3)}
    nodes += [(radius, -h), (radius, h)]
    rim_lo, rim_hi = len(nodes) - 2, len(nodes) - 1
    tris = []
    for i in range(n_rad):
        for j in range(2):
            a, b = nid[i, j], nid[i + 1, j]
            c, d = nid[i + 1, j + 1], nid[i, j + 1]
            tris += [(a, b, c), (a, c, d)]
    last = n_rad
    tris += [(nid[last, 0], rim_lo, nid[last, 1]),
             (nid[last, 1], rim_lo, rim_hi),
             (nid[last, 1], rim_hi, nid[last, 2])]
    nodes = np.array(nodes)
    verts, tets = _revolve(nodes, tris, n_sec)
    r = np.hypot(verts[:, 0], verts[:, 1])
    dist = np.minimum(h - np.abs(verts[:, 2]), radius - r)
    dist[np.isclose(dist, 0.0, atol=1e-12 * radius)] = 0.0
    field = modulus * np.clip(dist, 0.0, None) / h
    return PressureMesh(TetMesh(verts, tets), field, float(modulus))


# -- rigid surfaces -----------------------------------------------------------


def make_rigid_box(half_sizes) -> RigidGeometry:
    hx, hy, hz = np.asarray(half_sizes, dtype=float)
    if min(hx, hy, hz) <= 0:
        raise ValueError("half sizes must be positive")
    v = np.array([[sx * hx, sy * hy, sz * hz]
                  for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
    # vertex index = 4*ix + 2*iy + iz
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    tris = []
    for a, b, c, d in quads:
        tris += [(a, b, c), (a, c, d)]
    return RigidGeometry(SurfaceMesh(v, tris))


def make_rigid_plane(extent: float) -> RigidGeometry:
    """Square of half-width ``extent`` at z = 0, normal +z (open surface)."""
    e = float(extent)
    if e <= 0:
        raise ValueError("extent must be positive")
    v = np.array([[-e, -e, 0.0], [e, -e, 0.0], [e, e, 0.0], [-e, e, 0.0]])
    return RigidGeometry(SurfaceMesh(v, [(0, 1, 2), (0, 2, 3)]))
