"""Convergence sweeps and the polygonal-vs-triangulated tessellation report."""
from __future__ import annotations

import csv
import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from time import perf_counter

import numpy as np

from ..contact_surface import POLYGONAL, TRIANGULATED, triangulate
from ..discrete_contact import ConstraintSet, surface_constraints
from ..stepper import assemble_contacts, step
from .runner import TrajectoryRecord, run_scenario
from .scenario import Scenario, build_world

STUDY_SCHEMA = "hydrostep-study/1"
TESSELLATION_SCHEMA = "hydrostep-tessellation/1"


class StudyError(RuntimeError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass
class StudyResult:
    variable: str          # "dt" or "dx"
    values: np.ndarray
    errors: np.ndarray
    slope: float
    reference: float
    records: dict = field(default_factory=dict, repr=False)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# {STUDY_SCHEMA} variable={self.variable} reference={self.reference!r} "
                     f"slope={self.slope!r}\n")
            w = csv.writer(fh)
            w.writerow(["h", "relative_error"])
            for h, e in zip(self.values, self.errors):
                w.writerow([repr(float(h)), repr(float(e))])


def loglog_slope(h, err) -> float:
    """Least-squares slope of log(err) against log(h)."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if len(h) < 3:
        raise ValueError("need >= 3 points for a slope")
    if np.any(h <= 0) or np.any(err <= 0):
        raise ValueError("slope needs positive sizes and errors")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def trajectory_error(run: TrajectoryRecord, ref: TrajectoryRecord) -> float:
    """||x_h - x_ref||_2 / ||x_ref||_2 over position coordinates at common times."""
    step_h = np.diff(run.t).min() if len(run) > 1 else 1.0
    key_run = np.rint(run.t / step_h * 1e6).astype(np.int64)
    key_ref = np.rint(ref.t / step_h * 1e6).astype(np.int64)
    common, i_run, i_ref = np.intersect1d(key_run, key_ref, return_indices=True)
    if len(common) < 2:
        raise ValueError("trajectories share fewer than two recording times")
    x, x_ref = run.positions()[i_run], ref.positions()[i_ref]
    return float(np.linalg.norm(x - x_ref) / np.linalg.norm(x_ref))


def _variant(base: Scenario, variable: str, h: float, interval: float) -> Scenario:
    if variable == "dt":
        stride = interval / h
        if abs(stride - round(stride)) > 1e-6 * stride:
            raise ValueError(f"time step {h} does not divide the recording interval {interval}")
        return base.with_solver(dt=h).replace(record_stride=int(round(stride)),
                                              stop_spin_below=None, stop_body=None)
    if variable == "dx":
        return base.with_resolution(h).replace(stop_spin_below=None, stop_body=None)
    raise ValueError(f"unknown sweep variable {variable!r}")


def _run(scenario):
    return run_scenario(scenario, allow_retry=False)


def convergence_study(base: Scenario, variable: str, values, reference: float,
                      interval: float | None = None, workers: int = 1) -> StudyResult:
    """Relative trajectory error against a fine reference for each swept size.

    ``variable`` is ``"dt"`` (time step) or ``"dx"`` (mesh resolution). The
    reference must be at least ten times finer than the smallest swept
    value. For time-step sweeps all runs are recorded every ``interval``
    seconds (default: the largest step).
    """
    values = np.asarray(sorted(values, reverse=True), dtype=float)
    if len(values) < 3:
        raise ValueError("need >= 3 points for a slope")
    if not reference <= values.min() / 10 * (1 + 1e-9):
        raise ValueError("reference size must be <= smallest swept size / 10")
    if variable == "dt":
        interval = interval or float(values.max())
    else:
        interval = base.solver.dt * base.record_stride
    scenarios = [_variant(base, variable, h, interval) for h in (*values, reference)]
    records = {}
    try:
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                for h, rec in zip((*values, reference), pool.map(_run, scenarios)):
                    records[float(h)] = rec
        else:
            for h, sc in zip((*values, reference), scenarios):
                records[float(h)] = _run(sc)
    except Exception as err:
        raise StudyError(f"study aborted: {err}", partial=records) from err
    ref = records[float(reference)]
    errors = np.array([trajectory_error(records[float(h)], ref) for h in values])
    return StudyResult(variable, values, errors, loglog_slope(values, errors), float(reference),
                       records)


# -- tessellation comparison ----------------------------------------------------


@dataclass
class TessellationReport:
    columns: list
    data: np.ndarray

    def column(self, name):
        return self.data[:, self.columns.index(name)]

    @property
    def mean_ratio(self) -> float:
        fp = self.column("faces_polygonal")
        ok = fp > 0
        return float(np.mean(self.column("faces_triangulated")[ok] / fp[ok]))

    @property
    def max_force_difference(self) -> float:
        return float(np.max(self.column("force_relative_difference"), initial=0.0))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# {TESSELLATION_SCHEMA} mean_ratio={self.mean_ratio!r}\n")
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.data:
                w.writerow([format(float(x), ".17g") for x in row])


def _net_force(surfaces):
    return sum((s.net_force() for s in surfaces), np.zeros(3))


def tessellation_report(scenario: Scenario, steps: int | None = None) -> TessellationReport:
    """Per step: face counts, solve times and net elastic force in both modes.

    Both tessellations are built from the same start-of-step configuration;
    the trajectory itself follows the polygonal mode.
    """
    world, state = build_world(scenario)
    poly_cfg = dataclasses.replace(scenario.solver, tessellation=POLYGONAL)
    tri_cfg = dataclasses.replace(scenario.solver, tessellation=TRIANGULATED)
    pairs = world.contact_pairs()
    rows = []
    n = scenario.num_steps if steps is None else min(steps, scenario.num_steps)
    for k in range(n):
        surf_p, cons_p, timings = assemble_contacts(state, world, POLYGONAL)
        surf_t = [triangulate(s) for s in surf_p]
        cons_t = ConstraintSet.concatenate(
            [surface_constraints(s, props.friction, props.dissipation)
             for s, (_, _, props) in zip(surf_t, pairs)])
        vertex_sum = sum(int(s.counts.sum()) for s in surf_p)
        f_p, f_t = _net_force(surf_p), _net_force(surf_t)
        scale = np.linalg.norm(f_p)
        diff = np.linalg.norm(f_p - f_t) / scale if scale > 0 else np.linalg.norm(f_t)
        t0 = perf_counter()
        step(state, world, tri_cfg, contacts=(surf_t, cons_t, timings))
        solve_t = perf_counter() - t0
        t0 = perf_counter()
        state, _, _ = step(state, world, poly_cfg, contacts=(surf_p, cons_p, timings))
        solve_p = perf_counter() - t0
        state.t = (k + 1) * poly_cfg.dt
        rows.append([k * poly_cfg.dt, sum(len(s) for s in surf_p), sum(len(s) for s in surf_t),
                     1e3 * solve_p, 1e3 * solve_t, vertex_sum, diff])
    cols = ["t", "faces_polygonal", "faces_triangulated", "solve_ms_polygonal",
            "solve_ms_triangulated", "polygon_vertex_sum", "force_relative_difference"]
    return TessellationReport(cols, np.array(rows, dtype=float).reshape(-1, len(cols)))
