import numpy as np
import pytest
from hypothesis import given
from scipy.integrate import solve_ivp
from scipy.spatial.transform import Rotation

from conftest import random_rotation, seeds
from hydrostep.discrete_contact import ConstraintSet, contact_frame
from hydrostep.mesh import RigidPose
from hydrostep.multibody import (NQ, NV, RigidBody, advance_positions, bias_forces,
                                 body_poses, contact_jacobian, make_state, mass_matrix,
                                 quat_from_axis_angle, quat_multiply, quat_to_matrix,
                                 yaw_angle)


def random_body(rng, name="b"):
    a = rng.normal(size=(3, 3))
    inertia = a @ a.T + 0.1 * np.eye(3)
    return RigidBody(name, float(rng.uniform(0.5, 3)), inertia)


def random_quat(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def test_body_validation():
    with pytest.raises(ValueError):
        RigidBody("x", 0.0, np.eye(3))
    with pytest.raises(ValueError):
        RigidBody("x", 1.0, np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        RigidBody("x", 1.0, [[1, 0.5, 0], [0, 1, 0], [0, 0, 1]])
    RigidBody("ground", fixed=True)


def test_quaternion_helpers():
    q = quat_from_axis_angle([0, 0, 1], 0.3)
    assert yaw_angle(q) == pytest.approx(0.3)
    r = quat_to_matrix(q)
    assert np.allclose(r @ [1, 0, 0], [np.cos(0.3), np.sin(0.3), 0])
    p = quat_from_axis_angle([1, 0, 0], 0.4)
    assert np.allclose(quat_to_matrix(quat_multiply(q, p)), quat_to_matrix(q) @ quat_to_matrix(p))


def test_mass_matrix_simple_and_fixed():
    bodies = [RigidBody("g", fixed=True), RigidBody("s", 2.0, 0.1 * np.eye(3))]
    st = make_state(bodies)
    M = mass_matrix(bodies, st.q)
    assert M.shape == (6, 6)
    assert np.allclose(M, np.diag([0.1, 0.1, 0.1, 2, 2, 2]))


@given(seeds)
def test_kinetic_energy_oracle(seed):
    rng = np.random.default_rng(seed)
    bodies = [random_body(rng, "a"), RigidBody("g", fixed=True), random_body(rng, "b")]
    quats = {0: random_quat(rng), 2: random_quat(rng)}
    st = make_state(bodies, {i: (q, rng.normal(size=3)) for i, q in quats.items()})
    v = rng.normal(size=12)
    M = mass_matrix(bodies, st.q)
    energy = 0.0
    for s, i in enumerate((0, 2)):
        w, lin = v[6 * s:6 * s + 3], v[6 * s + 3:6 * s + 6]
        w_body = quat_to_matrix(quats[i]).T @ w
        energy += 0.5 * bodies[i].mass * lin @ lin + 0.5 * w_body @ bodies[i].inertia @ w_body
    assert 0.5 * v @ M @ v == pytest.approx(energy, rel=1e-12)
    assert np.all(np.linalg.eigvalsh(M) > 0)


def test_bias_gravity_and_principal_spin():
    body = RigidBody("b", 2.0, np.diag([1.0, 2.0, 3.0]))
    st = make_state([body], velocities={0: ((0, 0, 5.0), (0, 0, 0))})
    k = bias_forces([body], st.q, st.v, [0, 0, -9.81])
    assert np.allclose(k[:3], 0.0, atol=1e-12)
    assert np.allclose(k[3:], [0, 0, -19.62])


def _torque_free(inertia, rot0, w0, h):
    """Integrate Euler's equations in the body frame; return world omega at t = h."""
    def rhs(_, y):
        wb, r = y[:3], y[3:].reshape(3, 3)
        dwb = np.linalg.solve(inertia, -np.cross(wb, inertia @ wb))
        hat = np.array([[0, -wb[2], wb[1]], [wb[2], 0, -wb[0]], [-wb[1], wb[0], 0]])
        return np.concatenate([dwb, (r @ hat).ravel()])
    y0 = np.concatenate([rot0.T @ w0, rot0.ravel()])
    sol = solve_ivp(rhs, (0, h), y0, rtol=1e-13, atol=1e-15, method="DOP853")
    y = sol.y[:, -1]
    return y[3:].reshape(3, 3) @ y[:3]


@given(seeds)
def test_gyroscopic_term_matches_finite_difference(seed):
    rng = np.random.default_rng(seed)
    body = random_body(rng)
    rot = random_rotation(rng)
    w0 = rng.normal(size=3) * 3
    x, y, z, w = Rotation.from_matrix(rot).as_quat()
    quat = np.array([w, x, y, z])
    assert np.allclose(quat_to_matrix(quat), rot, atol=1e-9)
    st = make_state([body], {0: (quat, (0, 0, 0))}, {0: (w0, (0, 0, 0))})
    k = bias_forces([body], st.q, st.v, [0, 0, 0])
    h = 1e-5
    dw = (_torque_free(body.inertia, rot, w0, h) - _torque_free(body.inertia, rot, w0, -h)) / (2 * h)
    i_world = rot @ body.inertia @ rot.T
    assert np.allclose(i_world @ dw, k[:3], rtol=0, atol=1e-6 * max(1.0, np.abs(k[:3]).max()))


def _constraints(points, normals, a, b):
    n = len(points)
    return ConstraintSet(np.full(n, a), np.full(n, b), points, contact_frame(normals),
                         np.zeros(n), np.ones(n), np.zeros(n), np.zeros(n), np.arange(n))


def test_static_bodies_zero_contact_velocity():
    rng = np.random.default_rng(1)
    bodies = [random_body(rng, "a"), random_body(rng, "b")]
    st = make_state(bodies)
    c = _constraints(rng.normal(size=(5, 3)), rng.normal(size=(5, 3)), 0, 1)
    assert np.allclose(contact_jacobian(c, bodies, st.q) @ st.v, 0.0)


def test_translation_along_normal_separates():
    bodies = [RigidBody("g", fixed=True), RigidBody("b", 1.0, np.eye(3))]
    n = np.array([0.0, 0.6, 0.8])
    st = make_state(bodies, velocities={1: ((0, 0, 0), 0.1 * n)})
    c = _constraints(np.array([[0.3, 0.1, 0.0]]), n[None], 0, 1)
    vc = contact_jacobian(c, bodies, st.q) @ st.v
    assert vc[2] == pytest.approx(0.1, abs=1e-15)
    assert np.allclose(vc[:2], 0.0, atol=1e-15)


@given(seeds)
def test_jacobian_kinematic_oracle(seed):
    rng = np.random.default_rng(seed)
    bodies = [random_body(rng, "a"), RigidBody("g", fixed=True,
                                               pose=RigidPose(random_rotation(rng), [1, 2, 3])),
              random_body(rng, "b")]
    st = make_state(bodies, {0: (random_quat(rng), rng.normal(size=3)),
                             2: (random_quat(rng), rng.normal(size=3))})
    st.v[:] = rng.normal(size=12)
    pairs = [(0, 2), (1, 2), (0, 1), (2, 0)]
    sets = []
    for a, b in pairs:
        sets.append(_constraints(rng.normal(size=(25, 3)), rng.normal(size=(25, 3)), a, b))
    c = ConstraintSet.concatenate(sets)
    vc = (contact_jacobian(c, bodies, st.q) @ st.v).reshape(-1, 3)
    poses = body_poses(bodies, st.q)

    def point_velocity(i, x):
        if bodies[i].fixed:
            return np.zeros(3)
        s = 0 if i == 0 else 1
        w, lin = st.v[6 * s:6 * s + 3], st.v[6 * s + 3:6 * s + 6]
        return lin + np.cross(w, x - poses[i].translation)

    for k in range(len(c)):
        rel = point_velocity(c.body_b[k], c.point[k]) - point_velocity(c.body_a[k], c.point[k])
        assert np.abs(c.frame[k] @ rel - vc[k]).max() < 1e-12 * max(1.0, np.abs(rel).max())


def test_virtual_work_identity():
    rng = np.random.default_rng(4)
    bodies = [random_body(rng, "a"), random_body(rng, "b")]
    st = make_state(bodies, {0: (random_quat(rng), rng.normal(size=3)),
                             1: (random_quat(rng), rng.normal(size=3))})
    st.v[:] = rng.normal(size=12)
    c = _constraints(rng.normal(size=(30, 3)), rng.normal(size=(30, 3)), 0, 1)
    J = contact_jacobian(c, bodies, st.q)
    f = rng.normal(size=90)
    gen = J.T @ f
    power = 0.0
    for s in range(2):
        power += gen[6 * s:6 * s + 6] @ st.v[6 * s:6 * s + 6]
    assert f @ (J @ st.v) == pytest.approx(power, rel=1e-12)


def test_advance_positions_examples():
    body = RigidBody("b", 1.0, np.eye(3))
    st = make_state([body], {0: (quat_from_axis_angle([1, 1, 0], 0.3), (1, 2, 3))})
    assert np.array_equal(advance_positions(st.q, np.zeros(6), 1e-3), st.q)
    q0 = make_state([body]).q
    q1 = advance_positions(q0, np.array([0, 0, np.pi, 0, 0, 0]), 1e-3)
    assert yaw_angle(q1[:4]) == pytest.approx(np.pi * 1e-3, abs=1e-8)
    q2 = advance_positions(q0, np.array([0, 0, 0, 1.0, -2.0, 0.5]), 1e-2)
    assert np.allclose(q2[4:7], [0.01, -0.02, 0.005])
    with pytest.raises(ValueError):
        advance_positions(q0, np.zeros(6), 0.0)


def test_quaternion_norm_tracking():
    rng = np.random.default_rng(2)
    q = make_state([RigidBody("b", 1.0, np.eye(3))]).q
    for _ in range(1000):
        q = advance_positions(q, rng.normal(size=6) * 20, 1e-2)
        assert abs(np.linalg.norm(q[:4]) - 1) < 1e-12


def test_free_momentum_update():
    """No contact, no gravity: linear momentum is exact, angular drifts at O(dt^2)."""
    rng = np.random.default_rng(9)
    body = random_body(rng)
    st = make_state([body], {0: (random_quat(rng), (0, 0, 0))}, {0: (rng.normal(size=3), (1.0, 2.0, 0))})
    drift = []
    for dt in (1e-3, 5e-4):
        M = mass_matrix([body], st.q)
        k = bias_forces([body], st.q, st.v, [0, 0, 0])
        v = st.v + dt * np.linalg.solve(M, k)
        assert np.array_equal(v[3:], st.v[3:])
        q1 = advance_positions(st.q, v, dt)
        L0 = M[:3, :3] @ st.v[:3]
        L1 = mass_matrix([body], q1)[:3, :3] @ v[:3]
        drift.append(np.linalg.norm(L1 - L0))
    assert drift[0] / drift[1] == pytest.approx(4.0, rel=0.1)


def test_layout_constants():
    assert (NQ, NV) == (7, 6)
