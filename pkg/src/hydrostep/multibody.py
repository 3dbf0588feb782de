"""Free rigid bodies: state layout, mass matrix, bias forces, contact Jacobian.

Per free body the generalized position is a unit quaternion (w, x, y, z)
followed by the world position of the body origin, and the generalized
velocity is the world-frame angular velocity followed by the origin's linear
velocity. The body origin must be the centre of mass.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import RigidPose

NQ, NV = 7, 6


@dataclass(eq=False)
class RigidBody:
    name: str
    mass: float = 0.0
    inertia: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    geometry: object = None
    fixed: bool = False
    pose: RigidPose = field(default_factory=RigidPose)  # used when fixed
    friction: float = 0.0

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        if self.fixed:
            return
        if not self.mass > 0:
            raise ValueError(f"body {self.name!r}: mass must be positive")
        if not np.allclose(self.inertia, self.inertia.T, rtol=1e-12, atol=0) or \
                np.linalg.eigvalsh(self.inertia).min() <= 0:
            raise ValueError(f"body {self.name!r}: inertia must be symmetric positive definite")


@dataclass
class SystemState:
    q: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def copy(self) -> SystemState:
        return SystemState(self.q.copy(), self.v.copy(), self.t)


@dataclass
class ContactJacobian:
    """Dense (3 n_c, n_v) matrix; rows per contact are t1, t2, n."""

    matrix: np.ndarray

    def __matmul__(self, v):
        return self.matrix @ v

    @property
    def T(self):
        return self.matrix.T

    @property
    def num_contacts(self) -> int:
        return self.matrix.shape[0] // 3


# -- quaternions ----------------------------------------------------------------


def quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([aw * bw - ax * bx - ay * by - az * bz,
                     aw * bx + ax * bw + ay * bz - az * by,
                     aw * by - ax * bz + ay * bw + az * bx,
                     aw * bz + ax * by - ay * bx + az * bw])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([[1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                     [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                     [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)]])


def quat_from_axis_angle(axis, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])


def yaw_angle(q) -> float:
    w, x, y, z = q
    return float(np.arctan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z)))


# -- layout helpers --------------------------------------------------------------


def free_slots(bodies) -> np.ndarray:
    """Index of each body among the free bodies, -1 for fixed ones."""
    slots = np.full(len(bodies), -1, dtype=np.int64)
    k = 0
    for i, b in enumerate(bodies):
        if not b.fixed:
            slots[i] = k
            k += 1
    return slots


def make_state(bodies, poses=None, velocities=None, t=0.0) -> SystemState:
    """Pack per-body (quaternion, position) and (omega, v) for the free bodies."""
    free = [i for i, b in enumerate(bodies) if not b.fixed]
    q = np.zeros(NQ * len(free))
    v = np.zeros(NV * len(free))
    for s, i in enumerate(free):
        quat, pos = (poses or {}).get(i, ((1.0, 0, 0, 0), (0, 0, 0)))
        q[NQ * s:NQ * s + 4] = np.asarray(quat, float) / np.linalg.norm(quat)
        q[NQ * s + 4:NQ * s + 7] = pos
        if velocities and i in velocities:
            w, lin = velocities[i]
            v[NV * s:NV * s + 3] = w
            v[NV * s + 3:NV * s + 6] = lin
    return SystemState(q, v, t)


def body_poses(bodies, q) -> list[RigidPose]:
    poses = []
    slots = free_slots(bodies)
    for b, s in zip(bodies, slots):
        if s < 0:
            poses.append(b.pose)
        else:
            qs = q[NQ * s:NQ * s + NQ]
            poses.append(RigidPose(quat_to_matrix(qs[:4]), qs[4:]))
    return poses


def world_inertia(body: RigidBody, rotation) -> np.ndarray:
    return rotation @ body.inertia @ rotation.T


# -- operations -------------------------------------------------------------------


def mass_matrix(bodies, q) -> np.ndarray:
    slots = free_slots(bodies)
    nv = NV * int((slots >= 0).sum())
    M = np.zeros((nv, nv))
    for b, s, pose in zip(bodies, slots, body_poses(bodies, q)):
        if s < 0:
            continue
        i = NV * s
        M[i:i + 3, i:i + 3] = world_inertia(b, pose.rotation)
        M[i + 3:i + 6, i + 3:i + 6] = b.mass * np.eye(3)
    return M


def bias_forces(bodies, q, v, gravity) -> np.ndarray:
    """Gravity plus gyroscopic torque -w x (I w) per free body."""
    gravity = np.asarray(gravity, dtype=float)
    slots = free_slots(bodies)
    k = np.zeros(NV * int((slots >= 0).sum()))
    for b, s, pose in zip(bodies, slots, body_poses(bodies, q)):
        if s < 0:
            continue
        i = NV * s
        w = v[i:i + 3]
        k[i:i + 3] = -np.cross(w, world_inertia(b, pose.rotation) @ w)
        k[i + 3:i + 6] = b.mass * gravity
    return k


def contact_jacobian(constraints, bodies, q) -> ContactJacobian:
    """Maps v to stacked contact velocities of B relative to A at each point,
    expressed in the contact frame (v_n > 0 separates)."""
    slots = free_slots(bodies)
    nv = NV * int((slots >= 0).sum())
    nc = len(constraints)
    J = np.zeros((nc, 3, nv))
    if nc == 0:
        return ContactJacobian(J.reshape(0, nv))
    poses = body_poses(bodies, q)
    origins = np.array([p.translation for p in poses])
    rows = np.arange(nc)
    for ids, sign in ((constraints.body_b, 1.0), (constraints.body_a, -1.0)):
        s = slots[ids]
        live = s >= 0
        if not np.any(live):
            continue
        r = constraints.point[live] - origins[ids[live]]
        frame = constraints.frame[live]
        ang = np.cross(r[:, None, :], frame)        # d(row . (w x r))/dw = r x row
        cols = NV * s[live]
        for j in range(3):
            J[rows[live], :, cols + j] += sign * ang[:, :, j]
            J[rows[live], :, cols + 3 + j] += sign * frame[:, :, j]
    return ContactJacobian(J.reshape(3 * nc, nv))


def advance_positions(q, v, dt) -> np.ndarray:
    """q = q0 + dt N(q0) v, quaternions renormalised."""
    if not dt > 0:
        raise ValueError("time step must be positive")
    q = np.array(q, dtype=float)
    nb = len(q) // NQ
    for s in range(nb):
        quat = q[NQ * s:NQ * s + 4]
        w = v[NV * s:NV * s + 3]
        dq = 0.5 * quat_multiply(np.concatenate([[0.0], w]), quat)
        quat = quat + dt * dq
        q[NQ * s:NQ * s + 4] = quat / np.linalg.norm(quat)
        q[NQ * s + 4:NQ * s + 7] += dt * v[NV * s + 3:NV * s + 6]
    return q
