"""Fixed-step velocity-level time stepping with compliant contact and friction.

Each step freezes geometry, mass matrix and bias forces at the start of the
step and solves for the next velocities

    M0 (v - v0) = dt k0 + dt J0^T f(J0 v)

where per contact f_n = (-k (phi0 + dt v_n) - d v_n)_+ and
f_t = -mu f_n v_t / max(|v_t|, v_s). Positions are then advanced with v.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from time import perf_counter

import numpy as np

from .contact_surface import POLYGONAL, TRIANGULATED, compute_contact_surface
from .discrete_contact import ConstraintSet, DissipationModel, combine_friction, surface_constraints
from .multibody import (SystemState, advance_positions, bias_forces, body_poses,
                        contact_jacobian, mass_matrix)
from .pressure_field import RigidGeometry


@dataclass
class SolverConfig:
    dt: float = 1e-3
    max_newton_iters: int = 100
    residual_tol: float = 1e-8
    stiction_velocity: float = 1e-4
    backtrack: float = 0.5
    tessellation: str = POLYGONAL
    clamp_width: float = 1e-10     # N, C1 smoothing of the normal positive part
    residual_floor: float = 1e-14  # N s, added to the residual scale

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.stiction_velocity > 0:
            raise ValueError("stiction velocity must be positive")
        if not self.residual_tol > 0:
            raise ValueError("residual tolerance must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtracking factor must be in (0, 1)")
        if self.tessellation not in (POLYGONAL, TRIANGULATED):
            raise ValueError(f"unknown tessellation {self.tessellation!r}")


@dataclass
class PairProperties:
    friction: float
    dissipation: DissipationModel


@dataclass(eq=False)
class World:
    bodies: list
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    relaxation_time: float = 0.0
    pair_properties: dict = field(default_factory=dict)  # (i, j) -> PairProperties

    def contact_pairs(self):
        """(i, j, PairProperties) for every pair that can produce hydroelastic contact."""
        out = []
        for i, a in enumerate(self.bodies):
            for j in range(i + 1, len(self.bodies)):
                b = self.bodies[j]
                if a.geometry is None or b.geometry is None or (a.fixed and b.fixed):
                    continue
                if isinstance(a.geometry, RigidGeometry) and isinstance(b.geometry, RigidGeometry):
                    continue
                props = self.pair_properties.get((i, j)) or PairProperties(
                    combine_friction(a.friction, b.friction), DissipationModel(self.relaxation_time))
                out.append((i, j, props))
        return out


@dataclass
class StepDiagnostics:
    newton_iterations: int = 0
    residual: float = 0.0
    num_contacts: int = 0
    num_faces: int = 0
    broadphase_time: float = 0.0
    narrowphase_time: float = 0.0
    solve_time: float = 0.0
    num_stick: int = 0
    num_slip: int = 0
    constraints: ConstraintSet = field(default_factory=ConstraintSet.empty, repr=False)
    forces: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)), repr=False)
    contact_velocities: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)), repr=False)


class SolverError(RuntimeError):
    """Newton did not converge; carries the last iterate and diagnostics."""

    def __init__(self, message, v=None, diagnostics=None):
        super().__init__(message)
        self.v = v
        self.diagnostics = diagnostics


def _soft_positive(x, w):
    """C1 approximation of max(x, 0) that differs only on |x| < w / 2."""
    f = np.where(x >= 0.5 * w, x, np.where(x <= -0.5 * w, 0.0, (x + 0.5 * w) ** 2 / (2 * w)))
    df = np.clip((x + 0.5 * w) / w, 0.0, 1.0)
    return f, df


def contact_forces(vc, constraints: ConstraintSet, config: SolverConfig, with_jacobian=True):
    """Forces (n, 3) [f_t1, f_t2, f_n] and blocks df/dvc (n, 3, 3)."""
    vt, vn = vc[:, :2], vc[:, 2]
    k, d, mu = constraints.stiffness, constraints.dissipation, constraints.friction
    x = -k * (constraints.phi0 + config.dt * vn) - d * vn
    fn, dfn_dx = _soft_positive(x, config.clamp_width)
    speed = np.linalg.norm(vt, axis=1)
    s = np.maximum(speed, config.stiction_velocity)
    ft = -(mu * fn / s)[:, None] * vt
    f = np.concatenate([ft, fn[:, None]], axis=1)
    if not with_jacobian:
        return f, None
    dfn = -(k * config.dt + d) * dfn_dx
    G = np.zeros((len(vn), 3, 3))
    slide = speed > config.stiction_velocity
    u = np.where(slide[:, None], vt / np.where(slide, speed, 1.0)[:, None], 0.0)
    eye = np.eye(2)[None]
    G[:, :2, :2] = -(mu * fn / s)[:, None, None] * (eye - slide[:, None, None] * u[:, :, None] * u[:, None, :])
    G[:, :2, 2] = -(mu * dfn / s)[:, None] * vt
    G[:, 2, 2] = dfn
    return f, G


def solve_velocities(M, k0, J, constraints: ConstraintSet, v0, config: SolverConfig):
    """Newton with backtracking on the residual norm.

    Returns ``(v, f, iterations, residual_norm)``; ``f`` is (n_c, 3) in
    contact-frame order [f_t1, f_t2, f_n].
    """
    J = np.asarray(getattr(J, "matrix", J))
    dt = config.dt
    nc = len(constraints)
    scale = (np.linalg.norm(dt * k0) + np.linalg.norm(M @ v0) + config.residual_floor)
    tol = config.residual_tol * scale

    def residual(v, jac=True):
        vc = (J @ v).reshape(nc, 3)
        f, G = contact_forces(vc, constraints, config, jac)
        r = M @ (v - v0) - dt * k0 - dt * (J.T @ f.ravel())
        return r, f, G

    v = np.array(v0, dtype=float)
    r, f, G = residual(v)
    rn = np.linalg.norm(r)
    it = 0
    while rn > tol:
        if it >= config.max_newton_iters or not np.isfinite(rn):
            raise SolverError(f"Newton did not converge: |r| = {rn:.3e} > {tol:.3e} after {it} "
                              "iterations", v=v)
        it += 1
        A = M.copy()
        if nc:
            GJ = np.einsum("cij,cjm->cim", G, J.reshape(nc, 3, -1)).reshape(3 * nc, -1)
            A -= dt * (J.T @ GJ)
        dv = np.linalg.solve(A, -r)
        alpha = 1.0
        while True:
            v_try = v + alpha * dv
            r_try, f_try, G_try = residual(v_try)
            rn_try = np.linalg.norm(r_try)
            if rn_try <= (1 - 1e-4 * alpha) * rn or alpha < 1e-10:
                break
            alpha *= config.backtrack
        v, r, f, G, rn = v_try, r_try, f_try, G_try, rn_try
    return v, f, it, rn


def assemble_contacts(state: SystemState, world: World, tessellation: str = POLYGONAL):
    """Contact surfaces and constraints at the start-of-step configuration.

    Returns ``(surfaces, constraints, timings)`` with broad/narrowphase seconds.
    """
    bodies = world.bodies
    poses = body_poses(bodies, state.q)
    surfaces, sets = [], []
    timings = {"broadphase": 0.0, "narrowphase": 0.0}
    for i, j, props in world.contact_pairs():
        surf = compute_contact_surface(bodies[i].geometry, bodies[j].geometry, poses[i], poses[j],
                                       tessellation, i, j)
        for key in timings:
            timings[key] += surf.timings.get(key, 0.0)
        surfaces.append(surf)
        sets.append(surface_constraints(surf, props.friction, props.dissipation))
    return surfaces, ConstraintSet.concatenate(sets), timings


def step(state: SystemState, world: World, config: SolverConfig, contacts=None):
    """Advance one time step. Returns ``(state, surfaces, diagnostics)``.

    ``contacts`` may carry a precomputed :func:`assemble_contacts` result for
    this state.
    """
    if not (np.all(np.isfinite(state.q)) and np.all(np.isfinite(state.v))):
        raise ValueError("non-finite values in state")
    bodies = world.bodies
    surfaces, constraints, timings = contacts or assemble_contacts(state, world, config.tessellation)
    diag = StepDiagnostics(broadphase_time=timings["broadphase"],
                           narrowphase_time=timings["narrowphase"],
                           num_contacts=len(constraints),
                           num_faces=sum(len(s) for s in surfaces),
                           constraints=constraints)
    t0 = perf_counter()
    M = mass_matrix(bodies, state.q)
    k0 = bias_forces(bodies, state.q, state.v, world.gravity)
    J = contact_jacobian(constraints, bodies, state.q)
    try:
        v, f, iters, res = solve_velocities(M, k0, J, constraints, state.v, config)
    except SolverError as err:
        err.diagnostics = diag
        raise
    diag.solve_time = perf_counter() - t0
    vc = (J.matrix @ v).reshape(-1, 3)
    stick = np.linalg.norm(vc[:, :2], axis=1) <= config.stiction_velocity
    active = f[:, 2] > 0
    diag.newton_iterations = iters
    diag.residual = float(res)
    diag.num_stick = int(np.count_nonzero(stick & active))
    diag.num_slip = int(np.count_nonzero(~stick & active))
    diag.forces, diag.contact_velocities = f, vc
    q = advance_positions(state.q, v, config.dt)
    return SystemState(q, v, state.t + config.dt), surfaces, diag


def body_wrenches(bodies, q, constraints: ConstraintSet, forces):
    """World wrench [torque about origin, force] on each body from contact forces."""
    poses = body_poses(bodies, q)
    wrenches = np.zeros((len(bodies), 6))
    if len(constraints) == 0:
        return wrenches
    fw = np.einsum("cij,ci->cj", constraints.frame, forces)   # world force on B
    for ids, sign in ((constraints.body_b, 1.0), (constraints.body_a, -1.0)):
        for c, b in enumerate(ids):
            r = constraints.point[c] - poses[b].translation
            wrenches[b, :3] += sign * np.cross(r, fw[c])
            wrenches[b, 3:] += sign * fw[c]
    return wrenches
