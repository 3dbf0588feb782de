"""Running scenarios and recording trajectories."""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..contact_surface import write_polygon_soup
from ..discrete_contact import write_constraints_csv
from ..multibody import NQ, NV, free_slots
from ..stepper import SolverError, step
from .scenario import Scenario, build_world

TRAJECTORY_SCHEMA = "hydrostep-trajectory/1"
_POSE = ("qw", "qx", "qy", "qz", "x", "y", "z")
_VEL = ("wx", "wy", "wz", "vx", "vy", "vz")


class ScenarioError(RuntimeError):
    """A step failed even after the retry; ``time`` is the step start time."""

    def __init__(self, message, time, record=None):
        super().__init__(message)
        self.time = time
        self.record = record


@dataclass
class TrajectoryRecord:
    """Recorded rows plus run summary.

    Row k holds the state at ``t_k`` together with the contact count and
    total normal force of the step that ended at ``t_k`` (zero on row 0).
    """

    columns: list
    data: np.ndarray
    scenario: str = ""
    dt: float = 0.0
    retries: int = 0
    retry_times: list = field(default_factory=list)
    stopped_early: bool = False
    steps: int = 0
    mean_times: dict = field(default_factory=dict)   # seconds per step and phase
    max_newton_iterations: int = 0

    def __len__(self) -> int:
        return len(self.data)

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    def positions(self) -> np.ndarray:
        """Translation columns of every free body, (rows, 3 n_free)."""
        idx = [i for i, c in enumerate(self.columns) if c.rsplit(".", 1)[-1] in ("x", "y", "z")]
        return self.data[:, idx]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# {TRAJECTORY_SCHEMA}\n")
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.data:
                w.writerow([format(float(x), ".17g") for x in row])

    @classmethod
    def from_csv(cls, path) -> TrajectoryRecord:
        with open(path, newline="") as fh:
            head = fh.readline().strip()
            if head != f"# {TRAJECTORY_SCHEMA}":
                raise ValueError(f"{path}: unsupported trajectory schema {head!r}")
            rows = list(csv.reader(fh))
        return cls(rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0])))


def _columns(scenario: Scenario) -> list:
    cols = ["t"]
    for b in scenario.bodies:
        if not b.fixed:
            cols += [f"{b.name}.{c}" for c in _POSE + _VEL]
    cols += ["contacts", "normal_force"]
    if scenario.epsilon_body is not None:
        cols.append("epsilon")
    return cols


def _slot(scenario, bodies, name):
    return int(free_slots(bodies)[scenario.body_index(name)])


def _epsilon(v, slot, radius):
    w = v[NV * slot:NV * slot + NV]
    return np.hypot(w[3], w[4]) / (w[2] * radius) if w[2] > 0 else np.nan


def _row(t, state, slots, contacts, fn, eps_slot, radius):
    parts = [[t]]
    for s in slots:
        parts += [state.q[NQ * s:NQ * s + NQ], state.v[NV * s:NV * s + NV]]
    parts.append([contacts, fn])
    if eps_slot is not None:
        parts.append([_epsilon(state.v, eps_slot, radius)])
    return np.concatenate(parts)


def _advance(state, world, config, allow_retry):
    """One step; on solver failure retry once as two half steps."""
    try:
        new, surfaces, diag = step(state, world, config)
        return new, surfaces, diag, False
    except SolverError:
        if not allow_retry:
            raise
    half = dataclasses.replace(config, dt=config.dt / 2)
    mid, _, d1 = step(state, world, half)
    new, surfaces, diag = step(mid, world, half)
    for key in ("broadphase_time", "narrowphase_time", "solve_time"):
        setattr(diag, key, getattr(diag, key) + getattr(d1, key))
    diag.newton_iterations = max(diag.newton_iterations, d1.newton_iterations)
    return new, surfaces, diag, True


def run_scenario(scenario: Scenario, out_dir=None, snapshot_every: int | None = None,
                 dump_constraints: bool = False, allow_retry: bool = True) -> TrajectoryRecord:
    """Simulate ``scenario`` and return its trajectory.

    With ``out_dir`` set, polygon-soup snapshots are written every
    ``snapshot_every`` steps and, if requested, every step's constraints are
    appended to ``constraints.csv``. A failed step is retried once at half
    the time step; the retry is counted in the record.
    """
    world, state = build_world(scenario)
    config = scenario.solver
    slots = [int(s) for s in free_slots(world.bodies) if s >= 0]
    eps_slot = (_slot(scenario, world.bodies, scenario.epsilon_body)
                if scenario.epsilon_body is not None else None)
    stop_slot = (_slot(scenario, world.bodies, scenario.stop_body)
                 if scenario.stop_spin_below is not None else None)
    radius = scenario.epsilon_radius
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if snapshot_every:
            (out / "snapshots").mkdir(exist_ok=True)

    rows = [_row(0.0, state, slots, 0, 0.0, eps_slot, radius)]
    record = TrajectoryRecord(_columns(scenario), np.zeros(0), scenario.name, config.dt)
    totals = {"broadphase": 0.0, "narrowphase": 0.0, "solve": 0.0}
    n_steps = scenario.num_steps
    k = 0
    for k in range(1, n_steps + 1):
        t_start = (k - 1) * config.dt
        try:
            state, surfaces, diag, retried = _advance(state, world, config, allow_retry)
        except (SolverError, ValueError) as err:
            record.data = np.array(rows)
            record.steps = k - 1
            raise ScenarioError(f"step at t = {t_start:.6g} s failed: {err}", t_start,
                                record) from err
        state.t = k * config.dt
        if retried:
            record.retries += 1
            record.retry_times.append(t_start)
        totals["broadphase"] += diag.broadphase_time
        totals["narrowphase"] += diag.narrowphase_time
        totals["solve"] += diag.solve_time
        record.max_newton_iterations = max(record.max_newton_iterations, diag.newton_iterations)
        if out is not None and snapshot_every and k % snapshot_every == 0:
            write_polygon_soup(out / "snapshots" / f"step_{k:07d}.txt", surfaces, state.t)
        if out is not None and dump_constraints:
            write_constraints_csv(out / "constraints.csv", diag.constraints, state.t,
                                  append=k > 1)
        stop = (stop_slot is not None
                and state.v[NV * stop_slot + 2] < scenario.stop_spin_below)
        if k % scenario.record_stride == 0 or stop:
            fn = float(diag.forces[:, 2].sum()) if len(diag.forces) else 0.0
            rows.append(_row(state.t, state, slots, diag.num_contacts, fn, eps_slot, radius))
        if stop:
            record.stopped_early = True
            break
    record.data = np.array(rows)
    record.steps = k
    record.mean_times = {key: v / max(k, 1) for key, v in totals.items()}
    return record


def spinning_disk_epsilon(record: TrajectoryRecord, radius: float, cutoff: float = 0.5,
                          body: str = "coin") -> float:
    """Terminal ratio ``v / (omega R)``: the last sample with omega_z above ``cutoff``."""
    w = record.column(f"{body}.wz")
    v = np.hypot(record.column(f"{body}.vx"), record.column(f"{body}.vy"))
    if not w[0] > 0:
        raise ValueError("no spin: initial omega_z must be positive")
    below = np.nonzero(w < cutoff)[0]
    if len(below) == 0:
        raise ValueError(f"did not stop: omega_z stayed above {cutoff} rad/s")
    last = below[0] - 1
    return float(v[last] / (w[last] * radius))


def epsilon_series(record: TrajectoryRecord, radius: float, cutoff: float = 0.5,
                   body: str = "coin"):
    """(t, epsilon) on the window where omega_z is above ``cutoff``."""
    w = record.column(f"{body}.wz")
    v = np.hypot(record.column(f"{body}.vx"), record.column(f"{body}.vy"))
    below = np.nonzero(w < cutoff)[0]
    end = below[0] if len(below) else len(w)
    return record.t[:end], v[:end] / (w[:end] * radius)
