"""Tetrahedral and triangle meshes, linear vertex fields and an AABB tree."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEGENERACY_TOL = 1e-14
BOX_INFLATION = 1e-12
BARYCENTRIC_TOL = 1e-10


@dataclass(frozen=True)
class RigidPose:
    """Rigid transform taking body-frame points to world: x_w = R x_b + p."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> RigidPose:
        return cls()

    def transform_points(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def transform_vectors(self, vectors: np.ndarray) -> np.ndarray:
        return np.asarray(vectors) @ self.rotation.T

    def compose(self, other: RigidPose) -> RigidPose:
        """self * other (apply ``other`` first)."""
        return RigidPose(self.rotation @ other.rotation,
                         self.rotation @ other.translation + self.translation)


def signed_volumes(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    p = vertices[tets]
    a, b, c = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]
    return np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0


def _bbox_diagonal(vertices: np.ndarray) -> float:
    if len(vertices) == 0:
        return 0.0
    return float(np.linalg.norm(vertices.max(axis=0) - vertices.min(axis=0)))


class TetMesh:
    """Tetrahedral volume mesh in the body frame.

    Every tet must have positive signed volume above
    ``DEGENERACY_TOL * diag**3`` where ``diag`` is the bounding-box diagonal.
    """

    def __init__(self, vertices, tets):
        self.vertices = np.array(vertices, dtype=float).reshape(-1, 3)
        self.tets = np.array(tets, dtype=np.int64).reshape(-1, 4)
        if len(self.tets) == 0:
            return
        if self.tets.min() < 0 or self.tets.max() >= len(self.vertices):
            raise ValueError("tet vertex index out of range")
        vol = signed_volumes(self.vertices, self.tets)
        min_vol = DEGENERACY_TOL * _bbox_diagonal(self.vertices) ** 3
        if np.any(vol <= min_vol):
            bad = int(np.argmin(vol))
            raise ValueError(f"degenerate or inverted tet {bad} (volume {vol[bad]:.3e})")

    @property
    def num_elements(self) -> int:
        return len(self.tets)

    def element_points(self) -> np.ndarray:
        """(n_tets, 4, 3) vertex coordinates per tet."""
        return self.vertices[self.tets]

    def volumes(self) -> np.ndarray:
        return signed_volumes(self.vertices, self.tets)

    def boundary_faces(self) -> np.ndarray:
        """Faces referenced by exactly one tet, oriented outward."""
        local = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])
        faces = self.tets[:, local].reshape(-1, 3)
        key = np.sort(faces, axis=1)
        _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        return faces[counts[inverse.ravel()] == 1]

    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_faces())


class SurfaceMesh:
    """Triangle surface mesh, counter-clockwise seen from outside."""

    def __init__(self, vertices, triangles):
        self.vertices = np.array(vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise ValueError("triangle vertex index out of range")

    @property
    def num_elements(self) -> int:
        return len(self.triangles)

    def element_points(self) -> np.ndarray:
        return self.vertices[self.triangles]

    def face_normals(self) -> np.ndarray:
        p = self.element_points()
        n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def is_closed(self) -> bool:
        edges = np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]],
                                self.triangles[:, [2, 0]]])
        fwd = {tuple(e) for e in edges}
        return len(fwd) == len(edges) and all((b, a) in fwd for a, b in fwd)


def tet_affine_fields(vertices: np.ndarray, tets: np.ndarray, values: np.ndarray):
    """Per-tet gradient and offset such that p(x) = grad . x + offset."""
    p = vertices[tets]
    edges = p[:, 1:] - p[:, :1]                      # (n, 3, 3)
    dv = values[tets[:, 1:]] - values[tets[:, :1]]   # (n, 3)
    grad = np.linalg.solve(edges, dv[..., None])[..., 0]
    offset = values[tets[:, 0]] - np.einsum("ij,ij->i", grad, p[:, 0])
    return grad, offset


def barycentric(points4: np.ndarray, x: np.ndarray) -> np.ndarray:
    edges = (points4[1:] - points4[0]).T
    lam = np.linalg.solve(edges, np.asarray(x, dtype=float) - points4[0])
    return np.concatenate([[1.0 - lam.sum()], lam])


def interpolate_pressure(mesh: TetMesh, field: np.ndarray, tet: int, point) -> float:
    """Barycentric interpolation of a vertex field inside one tet."""
    pts = mesh.vertices[mesh.tets[tet]]
    w = barycentric(pts, point)
    # weight_i * height_i is the signed distance to the face opposite vertex i
    vol6 = abs(np.linalg.det(pts[1:] - pts[0]))
    faces = [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)]
    areas2 = np.array([np.linalg.norm(np.cross(pts[b] - pts[a], pts[c] - pts[a]))
                       for a, b, c in faces])
    if np.min(w * vol6 / areas2) < -BARYCENTRIC_TOL:
        raise ValueError("point not in element")
    return float(w @ np.asarray(field, dtype=float)[mesh.tets[tet]])


def field_gradient(mesh: TetMesh, field: np.ndarray, tet: int) -> np.ndarray:
    """Constant gradient of the linear interpolant over one tet (units/m)."""
    pts = mesh.vertices[mesh.tets[tet]]
    edges = pts[1:] - pts[0]
    vol = np.linalg.det(edges) / 6.0
    if abs(vol) <= DEGENERACY_TOL * _bbox_diagonal(pts) ** 3:
        raise ValueError("degenerate tet")
    vals = np.asarray(field, dtype=float)[mesh.tets[tet]]
    return np.linalg.solve(edges, vals[1:] - vals[0])


# ---------------------------------------------------------------------------
# Bounding volume hierarchy


@dataclass
class Bvh:
    """Binary AABB tree stored as flat arrays.

    Nodes are in breadth-first order, so every child index is larger than its
    parent's; ``levels`` lists node ids per depth for bottom-up refits.
    Boxes are body-frame; :func:`candidate_pairs` refits them to a pose.
    """

    element_points: np.ndarray   # (n_elem, k, 3) body frame
    left: np.ndarray             # (n_nodes,) child id or -1
    right: np.ndarray
    leaf_element: np.ndarray     # (n_nodes,) element id or -1
    levels: list
    lo: np.ndarray               # (n_nodes, 3)
    hi: np.ndarray

    @property
    def num_leaves(self) -> int:
        return int(np.count_nonzero(self.leaf_element >= 0))

    def refit(self, pose: RigidPose | None = None):
        """Boxes for the tree with elements placed at ``pose``."""
        pts = self.element_points if pose is None else pose.transform_points(self.element_points)
        elo, ehi = pts.min(axis=1), pts.max(axis=1)
        lo = np.empty_like(self.lo)
        hi = np.empty_like(self.hi)
        leaves = self.leaf_element >= 0
        lo[leaves] = elo[self.leaf_element[leaves]]
        hi[leaves] = ehi[self.leaf_element[leaves]]
        for level in reversed(self.levels):
            inner = level[self.left[level] >= 0]
            if len(inner):
                lo[inner] = np.minimum(lo[self.left[inner]], lo[self.right[inner]])
                hi[inner] = np.maximum(hi[self.left[inner]], hi[self.right[inner]])
        return lo - BOX_INFLATION, hi + BOX_INFLATION


def build_bvh(mesh: TetMesh | SurfaceMesh) -> Bvh:
    if mesh.num_elements == 0:
        raise ValueError("empty geometry")
    pts = mesh.element_points()
    centroids = pts.mean(axis=1)
    left, right, leaf = [], [], []
    levels = []
    # breadth-first construction with median splits along the widest centroid axis
    frontier = [np.arange(len(pts))]
    next_id = 1
    while frontier:
        level_ids = []
        children = []
        for elems in frontier:
            nid = len(left)
            level_ids.append(nid)
            left.append(-1)
            right.append(-1)
            leaf.append(-1)
            if len(elems) == 1:
                leaf[nid] = int(elems[0])
                continue
            c = centroids[elems]
            axis = int(np.argmax(np.ptp(c, axis=0)))
            order = elems[np.argsort(c[:, axis], kind="stable")]
            half = len(order) // 2
            children.append((nid, order[:half], order[half:]))
        frontier = []
        for nid, a, b in children:
            left[nid] = next_id
            right[nid] = next_id + 1
            next_id += 2
            frontier.extend([a, b])
        levels.append(np.array(level_ids, dtype=np.int64))
    tree = Bvh(pts, np.array(left), np.array(right), np.array(leaf), levels,
               np.zeros((len(left), 3)), np.zeros((len(left), 3)))
    tree.lo, tree.hi = tree.refit(None)
    return tree


def candidate_pairs(bvh_a: Bvh, pose_a: RigidPose, bvh_b: Bvh, pose_b: RigidPose) -> np.ndarray:
    """Element pairs whose world-frame boxes overlap, sorted, as an (n, 2) array.

    Conservative: every intersecting pair is reported exactly once.
    """
    lo_a, hi_a = bvh_a.refit(pose_a)
    lo_b, hi_b = bvh_b.refit(pose_b)
    size_a = (hi_a - lo_a).sum(axis=1)
    size_b = (hi_b - lo_b).sum(axis=1)
    na = np.zeros(1, dtype=np.int64)
    nb = np.zeros(1, dtype=np.int64)
    found = []
    while len(na):
        overlap = np.all((lo_a[na] <= hi_b[nb]) & (lo_b[nb] <= hi_a[na]), axis=1)
        na, nb = na[overlap], nb[overlap]
        leaf_a = bvh_a.left[na] < 0
        leaf_b = bvh_b.left[nb] < 0
        both = leaf_a & leaf_b
        if np.any(both):
            found.append(np.stack([bvh_a.leaf_element[na[both]],
                                   bvh_b.leaf_element[nb[both]]], axis=1))
        split_a = ~leaf_a & (leaf_b | (size_a[na] >= size_b[nb]))
        split_b = ~both & ~split_a
        na = np.concatenate([bvh_a.left[na[split_a]], bvh_a.right[na[split_a]],
                             na[split_b], na[split_b]])
        nb = np.concatenate([nb[split_a], nb[split_a],
                             bvh_b.left[nb[split_b]], bvh_b.right[nb[split_b]]])
    if not found:
        return np.zeros((0, 2), dtype=np.int64)
    pairs = np.concatenate(found)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]
