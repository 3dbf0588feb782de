"""Scenario description, config-file loading and world construction.

A scenario is a plain data description: shapes, inertial data, initial
state, pair properties, solver settings and run length. :func:`build_world`
turns it into a :class:`~hydrostep.stepper.World` and initial state.
Geometry is cached by shape spec, so sweeps that share a mesh build it once.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from ..discrete_contact import DissipationModel
from ..mesh import RigidPose
from ..mesh_io import read_obj, read_tet_mesh, read_vtk_tets
from ..multibody import RigidBody, make_state, quat_to_matrix
from ..pressure_field import (PressureMesh, RigidGeometry, make_box, make_cylinder,
                              make_half_space_slab, make_rigid_box, make_rigid_plane)
from ..stepper import PairProperties, SolverConfig, World

SHAPE_KINDS = ("box", "cylinder", "slab", "rigid_box", "rigid_plane", "tet_file", "obj_file")

# Coin dimensions and material (a US quarter dollar).
COIN_RADIUS = 1.213e-2
COIN_THICKNESS = 1.75e-3
COIN_MASS = 5.67e-3
COIN_FRICTION = 0.2
COIN_MODULUS = 1e9


def _freeze(value):
    if isinstance(value, (list, tuple, np.ndarray)):
        return tuple(_freeze(v) for v in value)
    return value


@dataclass(frozen=True)
class ShapeSpec:
    """Shape kind plus its parameters, hashable so geometry can be cached."""

    kind: str
    params: tuple = ()   # sorted (key, value) pairs

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}; expected one of {SHAPE_KINDS}")

    @classmethod
    def from_dict(cls, d: dict) -> ShapeSpec:
        d = dict(d)
        kind = d.pop("kind", None)
        if kind is None:
            raise ValueError("shape table needs a 'kind'")
        return cls(kind, tuple(sorted((k, _freeze(v)) for k, v in d.items())))

    def to_dict(self) -> dict:
        return {"kind": self.kind, **dict(self.params)}

    def get(self, key, default=None):
        return dict(self.params).get(key, default)

    def replace(self, **updates) -> ShapeSpec:
        d = self.to_dict()
        d.update(updates)
        return ShapeSpec.from_dict(d)

    def _need(self, key):
        value = self.get(key)
        if value is None:
            raise ValueError(f"shape {self.kind!r} needs parameter {key!r}")
        return value

    def build(self, base_dir: str | Path = "."):
        return _build_shape(self, str(base_dir))

    def inertia(self, mass: float) -> np.ndarray | None:
        """Solid inertia about the centre for analytic shapes, else None."""
        if self.kind in ("box", "rigid_box"):
            a, b, c = 2 * np.asarray(self._need("half_sizes"), dtype=float)
            return mass / 12 * np.diag([b * b + c * c, a * a + c * c, a * a + b * b])
        if self.kind == "cylinder":
            r, t = float(self._need("radius")), float(self._need("height"))
            ix = mass * (3 * r * r + t * t) / 12
            return np.diag([ix, ix, mass * r * r / 2])
        return None


@lru_cache(maxsize=32)
def _build_shape(spec: ShapeSpec, base_dir: str):
    s = spec
    if s.kind == "box":
        return make_box(s._need("half_sizes"), float(s._need("modulus")),
                        float(s._need("resolution")))
    if s.kind == "cylinder":
        return make_cylinder(float(s._need("radius")), float(s._need("height")),
                             float(s._need("modulus")), float(s._need("resolution")),
                             s.get("sectors"))
    if s.kind == "slab":
        return make_half_space_slab(float(s._need("thickness")), float(s._need("extent")),
                                    float(s._need("modulus")), float(s._need("resolution")))
    if s.kind == "rigid_box":
        return make_rigid_box(s._need("half_sizes"))
    if s.kind == "rigid_plane":
        return make_rigid_plane(float(s._need("extent")))
    path = Path(base_dir) / s._need("path")
    if s.kind == "obj_file":
        return RigidGeometry(read_obj(path))
    reader = read_vtk_tets if path.suffix.lower() == ".vtk" else read_tet_mesh
    mesh, pressure = reader(path)
    if pressure is None:
        raise ValueError(f"{path}: tet mesh has no pressure field")
    return PressureMesh(mesh, pressure, float(s.get("modulus", pressure.max())))


@dataclass(frozen=True)
class BodySpec:
    name: str
    shape: ShapeSpec | None = None
    mass: float = 0.0
    inertia: tuple | None = None         # 3 principal values or 3x3 rows
    fixed: bool = False
    position: tuple = (0.0, 0.0, 0.0)
    orientation: tuple = (1.0, 0.0, 0.0, 0.0)   # quaternion w, x, y, z
    angular_velocity: tuple = (0.0, 0.0, 0.0)
    velocity: tuple = (0.0, 0.0, 0.0)
    friction: float = 0.0

    def inertia_matrix(self) -> np.ndarray:
        if self.inertia is not None:
            arr = np.asarray(self.inertia, dtype=float)
            return np.diag(arr) if arr.shape == (3,) else arr.reshape(3, 3)
        if self.fixed:
            return np.zeros((3, 3))
        est = self.shape.inertia(self.mass) if self.shape else None
        if est is None:
            raise ValueError(f"body {self.name!r}: inertia required for this shape")
        return est


@dataclass(frozen=True)
class PairSpec:
    bodies: tuple               # (name_a, name_b)
    friction: float
    relaxation_time: float = 0.0


@dataclass(frozen=True)
class Scenario:
    name: str
    bodies: tuple
    duration: float
    solver: SolverConfig = field(default_factory=SolverConfig)
    pairs: tuple = ()
    gravity: tuple = (0.0, 0.0, -9.81)
    relaxation_time: float = 0.0
    record_stride: int = 1
    stop_spin_below: float | None = None   # end the run once omega_z of stop_body drops below
    stop_body: str | None = None
    epsilon_body: str | None = None        # record v/(omega R) for this body
    epsilon_radius: float | None = None
    base_dir: str = "."

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError("record stride must be a positive integer")
        names = [b.name for b in self.bodies]
        if len(set(names)) != len(names):
            raise ValueError("body names must be unique")
        for p in self.pairs:
            for n in p.bodies:
                if n not in names:
                    raise ValueError(f"pair references unknown body {n!r}")
        for n in (self.stop_body, self.epsilon_body):
            if n is not None and n not in names:
                raise ValueError(f"unknown body {n!r}")
        if self.epsilon_body is not None and not (self.epsilon_radius or 0) > 0:
            raise ValueError("epsilon radius must be positive")

    @property
    def num_steps(self) -> int:
        return int(np.floor(self.duration / self.solver.dt + 1e-9))

    @property
    def num_rows(self) -> int:
        return int(np.floor(self.duration / (self.solver.dt * self.record_stride) + 1e-9)) + 1

    def body_index(self, name: str) -> int:
        return [b.name for b in self.bodies].index(name)

    def replace(self, **changes) -> Scenario:
        return dataclasses.replace(self, **changes)

    def with_solver(self, **changes) -> Scenario:
        return self.replace(solver=dataclasses.replace(self.solver, **changes))

    def with_resolution(self, resolution: float) -> Scenario:
        """Same scenario with every meshed shape at the given resolution."""
        bodies = tuple(dataclasses.replace(b, shape=b.shape.replace(resolution=resolution))
                       if b.shape is not None and b.shape.get("resolution") is not None else b
                       for b in self.bodies)
        return self.replace(bodies=bodies)


def build_world(scenario: Scenario):
    """World and initial SystemState for a scenario."""
    bodies, poses, vels = [], {}, {}
    for i, spec in enumerate(scenario.bodies):
        geom = spec.shape.build(scenario.base_dir) if spec.shape is not None else None
        quat = np.asarray(spec.orientation, dtype=float)
        quat = quat / np.linalg.norm(quat)
        pose = RigidPose(quat_to_matrix(quat), np.asarray(spec.position, dtype=float))
        bodies.append(RigidBody(spec.name, spec.mass, spec.inertia_matrix(), geom, spec.fixed,
                                pose, spec.friction))
        if not spec.fixed:
            poses[i] = (quat, spec.position)
            vels[i] = (spec.angular_velocity, spec.velocity)
    pair_props = {}
    for p in scenario.pairs:
        i, j = sorted(scenario.body_index(n) for n in p.bodies)
        pair_props[i, j] = PairProperties(float(p.friction), DissipationModel(p.relaxation_time))
    world = World(bodies, np.asarray(scenario.gravity, dtype=float), scenario.relaxation_time,
                  pair_props)
    return world, make_state(bodies, poses, vels)


# -- config files ---------------------------------------------------------------


def _vec(value, n, what):
    arr = tuple(float(x) for x in value)
    if len(arr) != n:
        raise ValueError(f"{what} must have {n} components")
    return arr


def scenario_from_dict(d: dict, base_dir: str | Path = ".") -> Scenario:
    d = dict(d)
    solver = SolverConfig(**d.pop("solver", {}))
    bodies = []
    for b in d.pop("bodies", []):
        b = dict(b)
        shape = ShapeSpec.from_dict(b.pop("shape")) if "shape" in b else None
        inertia = b.pop("inertia", None)
        kw = {k: _vec(b.pop(k), n, k) for k, n in (("position", 3), ("orientation", 4),
                                                   ("angular_velocity", 3), ("velocity", 3))
              if k in b}
        name = b.pop("name")
        spec = BodySpec(name, shape, float(b.pop("mass", 0.0)),
                        _freeze(inertia) if inertia is not None else None,
                        bool(b.pop("fixed", False)), friction=float(b.pop("friction", 0.0)), **kw)
        if b:
            raise ValueError(f"body {name!r}: unknown keys {sorted(b)}")
        bodies.append(spec)
    pairs = tuple(PairSpec(tuple(p["bodies"]), float(p["friction"]),
                           float(p.get("relaxation_time", d.get("relaxation_time", 0.0))))
                  for p in d.pop("pairs", []))
    stop = d.pop("stop", {})
    eps = d.pop("epsilon", {})
    known = {"name", "duration", "gravity", "relaxation_time", "record_stride"}
    extra = set(d) - known
    if extra:
        raise ValueError(f"unknown scenario keys {sorted(extra)}")
    return Scenario(
        name=str(d.get("name", "scenario")), bodies=tuple(bodies),
        duration=float(d["duration"]), solver=solver, pairs=pairs,
        gravity=_vec(d.get("gravity", (0.0, 0.0, -9.81)), 3, "gravity"),
        relaxation_time=float(d.get("relaxation_time", 0.0)),
        record_stride=int(d.get("record_stride", 1)),
        stop_spin_below=stop.get("spin_below"), stop_body=stop.get("body"),
        epsilon_body=eps.get("body"), epsilon_radius=eps.get("radius"),
        base_dir=str(base_dir))


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return scenario_from_dict(data, base_dir=path.parent)


# -- built-in scenarios ---------------------------------------------------------


def coin_rest_depth(resolution: float, sectors: int | None = None) -> float:
    """Static penetration of the coin mesh on a rigid plane under its weight."""
    from ..pressure_field import cylinder_sectors
    n = sectors or cylinder_sectors(COIN_RADIUS, resolution)
    area = 0.5 * n * np.sin(2 * np.pi / n) * COIN_RADIUS ** 2
    stiffness = COIN_MODULUS / (COIN_THICKNESS / 2)
    return COIN_MASS * 9.81 / (stiffness * area)


def coin_scenario(eps0: float = 1.0, omega0: float = 50.0, dt: float = 1e-3,
                  resolution: float = 2.4e-3, duration: float = 20.0,
                  stop_spin_below: float | None = 0.5, relaxation_time: float = 5e-3,
                  record_stride: int = 1, tessellation: str = "polygonal",
                  stiction_velocity: float = 1e-4) -> Scenario:
    """Compliant coin lying flat on a rigid plane, spinning at ``omega0`` and
    sliding along x at ``eps0 * omega0 * R``.

    The coin starts at its static penetration so no normal transient is
    excited. The plane is shifted so its diagonal edge is far from the coin.
    """
    h = COIN_THICKNESS / 2
    z0 = h - coin_rest_depth(resolution)
    ground = BodySpec("ground", ShapeSpec.from_dict({"kind": "rigid_plane", "extent": 100.0}),
                      fixed=True, position=(0.0, 50.3, 0.0), friction=COIN_FRICTION)
    coin = BodySpec("coin", ShapeSpec.from_dict({
        "kind": "cylinder", "radius": COIN_RADIUS, "height": COIN_THICKNESS,
        "modulus": COIN_MODULUS, "resolution": resolution}),
        mass=COIN_MASS, position=(0.0, 0.0, z0), angular_velocity=(0.0, 0.0, omega0),
        velocity=(eps0 * omega0 * COIN_RADIUS, 0.0, 0.0), friction=COIN_FRICTION)
    return Scenario(
        name=f"coin_eps{eps0:g}", bodies=(ground, coin), duration=duration,
        solver=SolverConfig(dt=dt, tessellation=tessellation,
                            stiction_velocity=stiction_velocity),
        pairs=(PairSpec(("ground", "coin"), COIN_FRICTION, relaxation_time),),
        relaxation_time=relaxation_time, record_stride=record_stride,
        stop_spin_below=stop_spin_below, stop_body="coin" if stop_spin_below else None,
        epsilon_body="coin", epsilon_radius=COIN_RADIUS)


def box_on_slab_scenario(duration: float = 0.5, dt: float = 1e-3, mass: float = 1.0,
                         modulus: float = 1e6, resolution: float = 0.05,
                         relaxation_time: float = 0.01, friction: float = 0.5,
                         compliant_box: bool = False) -> Scenario:
    """0.2 m cube released just above a compliant slab.

    By default the cube is rigid, so every contact normal is vertical; a
    compliant cube exercises the tet-tet path but tilts normals near its edges.
    """
    half = 0.1
    slab = BodySpec("slab", ShapeSpec.from_dict({
        "kind": "slab", "thickness": 0.2, "extent": 0.5, "modulus": modulus,
        "resolution": 0.1}), fixed=True, friction=friction)
    shape = ({"kind": "box", "half_sizes": (half, half, half), "modulus": modulus,
              "resolution": resolution} if compliant_box
             else {"kind": "rigid_box", "half_sizes": (half, half, half)})
    box = BodySpec("box", ShapeSpec.from_dict(shape), mass=mass,
                   position=(0.0, 0.0, half + 1e-3), friction=friction)
    return Scenario("box_on_slab", (slab, box), duration, SolverConfig(dt=dt),
                    pairs=(PairSpec(("slab", "box"), friction, relaxation_time),),
                    relaxation_time=relaxation_time)


def sliding_block_scenario(v0: float = 1.0, friction: float = 0.2, duration: float = 0.6,
                           dt: float = 1e-3, modulus: float = 1e7,
                           relaxation_time: float = 0.01) -> Scenario:
    """Compliant block sliding along x on a rigid plane."""
    half = (0.05, 0.05, 0.02)
    mass = 0.5
    area = 4 * half[0] * half[1]
    depth = mass * 9.81 / (modulus / half[2] * area)
    ground = BodySpec("ground", ShapeSpec.from_dict({"kind": "rigid_plane", "extent": 10.0}),
                      fixed=True, position=(0.0, 5.03, 0.0), friction=friction)
    block = BodySpec("block", ShapeSpec.from_dict({
        "kind": "box", "half_sizes": half, "modulus": modulus, "resolution": 0.02}),
        mass=mass, position=(0.0, 0.0, half[2] - depth), velocity=(v0, 0.0, 0.0),
        friction=friction)
    return Scenario("sliding_block", (ground, block), duration, SolverConfig(dt=dt),
                    pairs=(PairSpec(("ground", "block"), friction, relaxation_time),),
                    relaxation_time=relaxation_time)


def free_fall_scenario(duration: float = 1.0, dt: float = 1e-3) -> Scenario:
    ball = BodySpec("body", None, mass=1.0, inertia=(0.1, 0.1, 0.1))
    return Scenario("free_fall", (ball,), duration, SolverConfig(dt=dt))
