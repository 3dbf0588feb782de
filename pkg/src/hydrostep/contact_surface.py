"""Equal-pressure contact surfaces between pressure meshes (and rigid surfaces).

Polygons are computed in batches: every candidate element pair starts from a
convex polygon (a large rectangle on the equilibrium plane, or the rigid
triangle) that is clipped against tet face half-spaces with a vectorised
Sutherland-Hodgman pass. Surfaces are stored as arrays; ``polygons`` gives the
per-face view.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mesh import RigidPose
from .pressure_field import PressureMesh, RigidGeometry

MIN_AREA = 1e-14
PARALLEL_TOL = 1e-10
POLYGONAL = "polygonal"
TRIANGULATED = "triangulated"


@dataclass
class ContactPolygon:
    vertices: np.ndarray          # (k, 3) CCW about normal
    area: float
    centroid: np.ndarray
    normal: np.ndarray            # from body A into body B
    centroid_pressure: float
    grad_a: float                 # -grad p_A . n  (inf for a rigid A)
    grad_b: float                 #  grad p_B . n  (inf for a rigid B)
    pressure_gradient: np.ndarray  # world gradient of the pressure on the face
    element_a: int
    element_b: int

    def pressure_at(self, x) -> float:
        return float(self.centroid_pressure + self.pressure_gradient @ (np.asarray(x) - self.centroid))


@dataclass
class ContactSurface:
    """All faces of one body pair, struct-of-arrays. ``vertices`` is padded to
    the largest face; ``counts`` holds the real vertex counts."""

    body_a: int
    body_b: int
    mode: str
    counts: np.ndarray
    vertices: np.ndarray
    area: np.ndarray
    centroid: np.ndarray
    normal: np.ndarray
    pressure: np.ndarray
    grad_a: np.ndarray
    grad_b: np.ndarray
    pressure_gradient: np.ndarray
    element_a: np.ndarray
    element_b: np.ndarray
    timings: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, body_a=0, body_b=1, mode=POLYGONAL) -> ContactSurface:
        z = np.zeros(0)
        return cls(body_a, body_b, mode, np.zeros(0, np.int64), np.zeros((0, 3, 3)), z,
                   np.zeros((0, 3)), np.zeros((0, 3)), z, z, z, np.zeros((0, 3)),
                   np.zeros(0, np.int64), np.zeros(0, np.int64))

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def num_faces(self) -> int:
        return len(self.counts)

    @property
    def polygons(self) -> list[ContactPolygon]:
        return [ContactPolygon(self.vertices[i, :self.counts[i]].copy(), float(self.area[i]),
                               self.centroid[i].copy(), self.normal[i].copy(),
                               float(self.pressure[i]), float(self.grad_a[i]), float(self.grad_b[i]),
                               self.pressure_gradient[i].copy(), int(self.element_a[i]),
                               int(self.element_b[i]))
                for i in range(len(self))]

    def total_area(self) -> float:
        return float(self.area.sum())

    def net_force(self) -> np.ndarray:
        """Elastic force on body B, sum of A p_c n over faces."""
        return (self.area * self.pressure) @ self.normal if len(self) else np.zeros(3)

    def select(self, mask) -> ContactSurface:
        return ContactSurface(self.body_a, self.body_b, self.mode, self.counts[mask],
                              self.vertices[mask], self.area[mask], self.centroid[mask],
                              self.normal[mask], self.pressure[mask], self.grad_a[mask],
                              self.grad_b[mask], self.pressure_gradient[mask],
                              self.element_a[mask], self.element_b[mask], dict(self.timings))


# -- batched polygon kernels ------------------------------------------------------


def _take(arr, idx):
    """arr[p, idx[p, k]] for (P, K[, 3]) arrays."""
    P, K = arr.shape[:2]
    flat = (np.arange(P)[:, None] * K + idx).ravel()
    return arr.reshape(P * K, *arr.shape[2:])[flat].reshape(idx.shape + arr.shape[2:])


def _compact(verts, mask):
    """Move the masked vertices of each row to the front, keeping their order."""
    counts = mask.sum(axis=1)
    kmax = max(int(counts.max(initial=0)), 1)
    rows, cols = np.nonzero(mask)
    out = np.zeros((len(verts), kmax, 3))
    out[rows, (np.cumsum(mask, axis=1) - 1)[rows, cols]] = verts[rows, cols]
    return out, counts


def clip_batch(verts, counts, normals, offsets):
    """Clip convex polygons against half-spaces ``normals . x <= offsets``.

    verts (P, K, 3), counts (P,), normals (P, 3), offsets (P,).
    """
    P, K, _ = verts.shape
    if P == 0:
        return verts, counts
    idx = np.arange(K)
    valid = idx[None, :] < counts[:, None]
    nxt = np.where(idx[None, :] + 1 < counts[:, None], idx[None, :] + 1, 0)
    d = np.einsum("pki,pi->pk", verts, normals) - offsets[:, None]
    dn = _take(d, nxt)
    vn = _take(verts, nxt)
    keep = valid & (d <= 0)
    cross = valid & (((d < 0) & (dn > 0)) | ((d > 0) & (dn < 0)))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(cross, d / (d - dn), 0.0)
    xpt = verts + t[..., None] * (vn - verts)
    out = np.empty((P, 2 * K, 3))
    out[:, 0::2] = verts
    out[:, 1::2] = xpt
    mask = np.empty((P, 2 * K), dtype=bool)
    mask[:, 0::2] = keep
    mask[:, 1::2] = cross
    return _compact(out, mask)


def _dedupe(verts, counts):
    """Drop consecutive (cyclic) near-duplicate vertices."""
    P, K, _ = verts.shape
    if P == 0:
        return verts, counts
    idx = np.arange(K)
    valid = idx[None, :] < counts[:, None]
    prev = np.where(idx[None, :] > 0, idx[None, :] - 1, np.maximum(counts[:, None] - 1, 0))
    gap = np.linalg.norm(verts - _take(verts, prev), axis=2)
    scale = np.abs(np.where(valid[..., None], verts, 0.0)).max(axis=(1, 2))
    dup = gap <= 1e-12 * scale[:, None] + 1e-300
    # the first vertex is compared with the last; keep it if everything collapsed
    keep = valid & ~(dup & (counts[:, None] > 1))
    keep[:, 0] |= valid[:, 0] & ~keep.any(axis=1)
    return _compact(verts, keep)


def polygon_area_centroid(verts, counts, normals):
    """Signed area along ``normals`` and area-weighted centroid, via a fan from vertex 0."""
    P, K, _ = verts.shape
    if P == 0:
        return np.zeros(0), np.zeros((0, 3))
    idx = np.arange(1, K - 1)
    ok = (idx[None, :] + 1) < counts[:, None]
    v0 = verts[:, :1]
    a = verts[:, 1:K - 1] - v0
    b = verts[:, 2:K] - v0
    tri = 0.5 * np.einsum("pki,pi->pk", np.cross(a, b), normals) * ok
    area = tri.sum(axis=1)
    cen = (v0 + verts[:, 1:K - 1] + verts[:, 2:K]) / 3.0
    with np.errstate(invalid="ignore", divide="ignore"):
        centroid = np.einsum("pk,pki->pi", tri, cen) / area[:, None]
    centroid = np.where(area[:, None] > 0, centroid, verts[:, 0])
    return area, centroid


def tangent_basis(n):
    """Deterministic tangents (t1, t2) with t1 x t2 = n, seeded by the world axis
    least aligned with n."""
    axis = np.argmin(np.abs(n), axis=1)
    e = np.eye(3)[axis]
    t1 = e - np.einsum("pi,pi->p", e, n)[:, None] * n
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(n, t1)
    return t1, t2


def _world_tet_data(pm: PressureMesh, pose: RigidPose, tets):
    grad_b, off_b = pm.affine
    g = grad_b[tets] @ pose.rotation.T
    c = off_b[tets] - g @ pose.translation
    fn, fo = pm.face_planes
    n = fn[tets] @ pose.rotation.T
    o = fo[tets] + n @ pose.translation
    pts = pose.transform_points(pm.mesh.vertices[pm.mesh.tets[tets]])
    return g, c, n, o, pts


def _normal_gradient(grad, n):
    """grad . n with rounding-level values (relative to |grad|) snapped to zero."""
    g = np.einsum("pi,pi->p", grad, n)
    return np.where(np.abs(g) <= PARALLEL_TOL * np.linalg.norm(grad, axis=1), 0.0, g)


def _finish(body_a, body_b, verts, counts, normal, offset, pressure_fn, grad_field, ga, gb,
            ea, eb):
    # re-project onto the face plane n . x = offset to remove clipping drift
    verts = verts - (np.einsum("pki,pi->pk", verts, normal) - offset[:, None])[..., None] \
        * normal[:, None, :]
    verts, counts = _dedupe(verts, counts)
    area, centroid = polygon_area_centroid(verts, counts, normal)
    keep = (counts >= 3) & (area > MIN_AREA)
    verts, counts, area, centroid = verts[keep], counts[keep], area[keep], centroid[keep]
    normal, grad_field, ga, gb, ea, eb = (x[keep] for x in (normal, grad_field, ga, gb, ea, eb))
    pressure = np.maximum(pressure_fn(centroid, keep), 0.0)
    if len(counts):
        verts = verts[:, :max(int(counts.max()), 3)]
    return ContactSurface(body_a, body_b, POLYGONAL, counts, verts, area, centroid, normal,
                          pressure, ga, gb, grad_field, ea, eb)


def tet_tet_batch(pm_a: PressureMesh, pose_a: RigidPose, tets_a,
                  pm_b: PressureMesh, pose_b: RigidPose, tets_b,
                  body_a=0, body_b=1) -> ContactSurface:
    tets_a = np.asarray(tets_a, dtype=np.int64)
    tets_b = np.asarray(tets_b, dtype=np.int64)
    ga, ca, na, oa, pa = _world_tet_data(pm_a, pose_a, tets_a)
    gb, cb, nb, ob, pb = _world_tet_data(pm_b, pose_b, tets_b)
    diff = gb - ga
    norm = np.linalg.norm(diff, axis=1)
    scale = np.maximum(np.linalg.norm(ga, axis=1), np.linalg.norm(gb, axis=1))
    ok = (norm > PARALLEL_TOL * scale) & (norm > 0)
    ga, ca, na, oa, pa, gb, cb, nb, ob, pb, diff, norm = (
        x[ok] for x in (ga, ca, na, oa, pa, gb, cb, nb, ob, pb, diff, norm))
    tets_a, tets_b = tets_a[ok], tets_b[ok]
    n = diff / norm[:, None]
    # L_a = L_b  <=>  n . x = (ca - cb) / norm
    rhs = (ca - cb) / norm
    cen = pa.mean(axis=1)
    center = cen - (np.einsum("pi,pi->p", cen, n) - rhs)[:, None] * n
    allpts = np.concatenate([pa, pb], axis=1)
    half = 2.0 * np.linalg.norm(allpts.max(axis=1) - allpts.min(axis=1), axis=1)
    t1, t2 = tangent_basis(n)
    corners = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
    verts = (center[:, None, :] + half[:, None, None]
             * (corners[None, :, :1] * t1[:, None] + corners[None, :, 1:] * t2[:, None]))
    counts = np.full(len(n), 4, dtype=np.int64)
    for f in range(4):
        verts, counts = clip_batch(verts, counts, na[:, f], oa[:, f])
    for f in range(4):
        verts, counts = clip_batch(verts, counts, nb[:, f], ob[:, f])
    g_a = _normal_gradient(-ga, n)
    g_b = _normal_gradient(gb, n)

    def pressure(x, keep):
        return np.einsum("pi,pi->p", ga[keep], x) + ca[keep]

    return _finish(body_a, body_b, verts, counts, n, rhs, pressure, ga, g_a, g_b, tets_a, tets_b)


def tri_tet_batch(rigid: RigidGeometry, pose_a: RigidPose, tris,
                  pm_b: PressureMesh, pose_b: RigidPose, tets_b,
                  body_a=0, body_b=1) -> ContactSurface:
    """Rigid triangles (body A) clipped by compliant tets (body B)."""
    tris = np.asarray(tris, dtype=np.int64)
    tets_b = np.asarray(tets_b, dtype=np.int64)
    surf = rigid.surface
    verts = pose_a.transform_points(surf.vertices[surf.triangles[tris]])
    n = pose_a.transform_vectors(surf.face_normals()[tris])
    gb, cb, nb, ob, _ = _world_tet_data(pm_b, pose_b, tets_b)
    counts = np.full(len(tris), 3, dtype=np.int64)
    plane = np.einsum("pi,pi->p", verts[:, 0], n)
    for f in range(4):
        verts, counts = clip_batch(verts, counts, nb[:, f], ob[:, f])
    g_b = _normal_gradient(gb, n)
    g_a = np.full(len(tris), np.inf)

    def pressure(x, keep):
        return np.einsum("pi,pi->p", gb[keep], x) + cb[keep]

    return _finish(body_a, body_b, verts, counts, n, plane, pressure, gb, g_a, g_b, tris, tets_b)


def _flip(surface: ContactSurface) -> ContactSurface:
    """Swap the roles of A and B: reverse winding and normal, swap gradients."""
    verts = surface.vertices.copy()
    for i, k in enumerate(surface.counts):
        verts[i, :k] = verts[i, :k][::-1]
    return ContactSurface(surface.body_b, surface.body_a, surface.mode, surface.counts, verts,
                          surface.area, surface.centroid, -surface.normal, surface.pressure,
                          surface.grad_b, surface.grad_a, surface.pressure_gradient,
                          surface.element_b, surface.element_a, dict(surface.timings))


# -- public per-pair API ------------------------------------------------------------


def equilibrium_plane(field_a, field_b):
    """Plane where two affine pressure fields agree.

    Each field is ``(gradient, offset)`` with p(x) = gradient . x + offset.
    Returns ``(point, unit_normal)`` with the normal along grad_b - grad_a, or
    None when the gradients are (numerically) equal.
    """
    ga, ca = np.asarray(field_a[0], float), float(field_a[1])
    gb, cb = np.asarray(field_b[0], float), float(field_b[1])
    diff = gb - ga
    norm = np.linalg.norm(diff)
    if norm == 0 or norm < PARALLEL_TOL * max(np.linalg.norm(ga), np.linalg.norm(gb)):
        return None
    n = diff / norm
    return n * (ca - cb) / norm, n


def tet_halfspaces(tet_points):
    """Outward unit normals (4, 3) and offsets (4,) of a tet's faces."""
    p = np.asarray(tet_points, dtype=float)
    faces = [(1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1)]
    if np.linalg.det(p[1:] - p[0]) < 0:
        faces = [(a, c, b) for a, b, c in faces]
    n = np.array([np.cross(p[b] - p[a], p[c] - p[a]) for a, b, c in faces])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    o = np.array([n[i] @ p[faces[i][0]] for i in range(4)])
    return n, o


def clip_polygon_by_tet(polygon, tet_points) -> np.ndarray:
    """Convex planar polygon intersected with a tetrahedron, (m, 3), possibly empty."""
    poly = np.asarray(polygon, dtype=float)[None]
    counts = np.array([len(poly[0])])
    n, o = tet_halfspaces(tet_points)
    for f in range(4):
        poly, counts = clip_batch(poly, counts, n[f][None], o[f][None])
    poly, counts = _dedupe(poly, counts)
    if counts[0] < 3:
        return np.zeros((0, 3))
    return poly[0, :counts[0]]


def tet_tet_contact_polygon(pm_a: PressureMesh, tet_a: int, pm_b: PressureMesh, tet_b: int,
                            pose_a: RigidPose | None = None,
                            pose_b: RigidPose | None = None) -> ContactPolygon | None:
    s = tet_tet_batch(pm_a, pose_a or RigidPose(), [tet_a], pm_b, pose_b or RigidPose(), [tet_b])
    return s.polygons[0] if len(s) else None


def rigid_tri_contact_polygon(rigid: RigidGeometry, tri: int, pm_b: PressureMesh, tet_b: int,
                              pose_a: RigidPose | None = None,
                              pose_b: RigidPose | None = None) -> ContactPolygon | None:
    s = tri_tet_batch(rigid, pose_a or RigidPose(), [tri], pm_b, pose_b or RigidPose(), [tet_b])
    return s.polygons[0] if len(s) else None


def compute_contact_surface(geom_a, geom_b, pose_a: RigidPose, pose_b: RigidPose,
                            mode: str = POLYGONAL, body_a: int = 0, body_b: int = 1) -> ContactSurface:
    """Broadphase plus narrowphase for one body pair; normals point from A into B."""
    from time import perf_counter

    if mode not in (POLYGONAL, TRIANGULATED):
        raise ValueError(f"unknown tessellation mode {mode!r}")
    rigid_a = isinstance(geom_a, RigidGeometry)
    rigid_b = isinstance(geom_b, RigidGeometry)
    if rigid_a and rigid_b:
        raise ValueError("rigid-rigid contact is not modelled")
    t0 = perf_counter()
    if rigid_b:
        pairs = _candidate(geom_b, pose_b, geom_a, pose_a)
    else:
        pairs = _candidate(geom_a, pose_a, geom_b, pose_b)
    t1 = perf_counter()
    if not len(pairs):
        surf = ContactSurface.empty(body_a, body_b, mode)
    elif rigid_a:
        surf = tri_tet_batch(geom_a, pose_a, pairs[:, 0], geom_b, pose_b, pairs[:, 1], body_a, body_b)
    elif rigid_b:
        surf = _flip(tri_tet_batch(geom_b, pose_b, pairs[:, 0], geom_a, pose_a, pairs[:, 1],
                                   body_b, body_a))
    else:
        surf = tet_tet_batch(geom_a, pose_a, pairs[:, 0], geom_b, pose_b, pairs[:, 1], body_a, body_b)
    if mode == TRIANGULATED:
        surf = triangulate(surf)
    surf.timings = {"broadphase": t1 - t0, "narrowphase": perf_counter() - t1}
    return surf


def _candidate(geom_a, pose_a, geom_b, pose_b):
    from .mesh import candidate_pairs

    return candidate_pairs(geom_a.bvh, pose_a, geom_b.bvh, pose_b)


def triangulate(surface: ContactSurface) -> ContactSurface:
    """Replace every n-gon by the fan of n triangles around its centroid.

    Each triangle keeps the parent's normal and gradients and carries the
    pressure of the parent's linear field at its own centroid.
    """
    if surface.mode == TRIANGULATED:
        return surface
    P = len(surface)
    if P == 0:
        return ContactSurface.empty(surface.body_a, surface.body_b, TRIANGULATED)
    K = surface.vertices.shape[1]
    idx = np.arange(K)
    valid = (idx[None, :] < surface.counts[:, None]).ravel()
    nxt = np.where(idx[None, :] + 1 < surface.counts[:, None], idx[None, :] + 1, 0)
    v = surface.vertices
    vn = _take(v, nxt)
    c = np.broadcast_to(surface.centroid[:, None, :], v.shape)
    tri = np.stack([c, v, vn], axis=2).reshape(P * K, 3, 3)[valid]
    parent = np.repeat(np.arange(P), K)[valid]
    n = surface.normal[parent]
    area = 0.5 * np.einsum("pi,pi->p", np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), n)
    cen = tri.mean(axis=1)
    pg = surface.pressure_gradient[parent]
    pressure = surface.pressure[parent] + np.einsum("pi,pi->p", pg, cen - surface.centroid[parent])
    return ContactSurface(surface.body_a, surface.body_b, TRIANGULATED,
                          np.full(len(tri), 3, dtype=np.int64), tri, area, cen, n, pressure,
                          surface.grad_a[parent], surface.grad_b[parent], pg,
                          surface.element_a[parent], surface.element_b[parent], dict(surface.timings))


def write_polygon_soup(path, surfaces, time: float | None = None):
    """ASCII snapshot: one face per line ``k x1 y1 z1 ... xk yk zk p_c nx ny nz``."""
    lines = ["# hydrostep polygon soup v1"]
    if time is not None:
        lines.append(f"# t {float(time)!r}")
    for s in surfaces:
        for i in range(len(s)):
            k = int(s.counts[i])
            coords = " ".join(f"{x:.17g}" for x in s.vertices[i, :k].ravel())
            nrm = " ".join(f"{x:.17g}" for x in s.normal[i])
            lines.append(f"{k} {coords} {s.pressure[i]:.17g} {nrm}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_polygon_soup(path):
    """Inverse of :func:`write_polygon_soup`: list of (vertices, pressure, normal)."""
    faces = []
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        vals = line.split()
        k = int(vals[0])
        xyz = np.array(vals[1:1 + 3 * k], dtype=float).reshape(k, 3)
        faces.append((xyz, float(vals[1 + 3 * k]), np.array(vals[2 + 3 * k:5 + 3 * k], dtype=float)))
    return faces
