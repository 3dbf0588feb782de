import json
from pathlib import Path

import numpy as np
import pytest

from conftest import coin_run
from hydrostep.experiments import cli, runner
from hydrostep.experiments.runner import (TRAJECTORY_SCHEMA, TrajectoryRecord, epsilon_series,
                                          run_scenario, spinning_disk_epsilon)
from hydrostep.experiments.scenario import (COIN_RADIUS, BodySpec, Scenario, ShapeSpec,
                                            build_world, coin_scenario, free_fall_scenario,
                                            load_scenario, scenario_from_dict)
from hydrostep.experiments.studies import (StudyError, convergence_study, loglog_slope,
                                           tessellation_report, trajectory_error)
from hydrostep.mesh_io import write_tet_mesh
from hydrostep.pressure_field import make_box
from hydrostep.stepper import SolverConfig, SolverError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
G = 9.81


def test_zero_gravity_body_keeps_pose():
    body = BodySpec("b", None, 1.0, (1.0, 2.0, 3.0), position=(0.1, 0.2, 0.3),
                    orientation=(0.5, 0.5, 0.5, 0.5))
    sc = Scenario("still", (body,), 0.05, gravity=(0.0, 0.0, 0.0))
    rec = run_scenario(sc)
    pose = [f"b.{c}" for c in ("qw", "qx", "qy", "qz", "x", "y", "z")]
    data = np.stack([rec.column(c) for c in pose], axis=1)
    assert np.array_equal(data, np.repeat(data[:1], len(rec), axis=0))
    assert len(rec) == sc.num_rows == 51


def test_free_fall_final_velocity_and_discrete_sum():
    rec = run_scenario(free_fall_scenario(1.0, 1e-3))
    assert rec.column("body.vz")[-1] == pytest.approx(-G, abs=1e-9)
    k = np.arange(len(rec))
    assert np.allclose(rec.column("body.z"), -G * 1e-6 * k * (k + 1) / 2, rtol=1e-12, atol=1e-15)
    assert np.all(rec.column("contacts") == 0)


@pytest.mark.parametrize("duration,dt,stride", [(0.1, 1e-3, 1), (0.1, 1e-3, 3), (0.0505, 1e-3, 7),
                                                (0.02, 4e-3, 2)])
def test_row_count_and_time_grid(duration, dt, stride):
    sc = free_fall_scenario(duration, dt).replace(record_stride=stride)
    rec = run_scenario(sc)
    assert len(rec) == int(np.floor(duration / (dt * stride) + 1e-9)) + 1
    assert np.all(np.diff(rec.t) > 0)
    assert np.allclose(rec.t, np.arange(len(rec)) * dt * stride, rtol=0, atol=1e-15)


def test_scenario_validation():
    body = BodySpec("b", None, 1.0, (1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        Scenario("x", (body,), 0.0)
    with pytest.raises(ValueError):
        Scenario("x", (body,), 1.0, record_stride=0)
    with pytest.raises(ValueError):
        Scenario("x", (body, body), 1.0)
    with pytest.raises(ValueError):
        Scenario("x", (body,), 1.0, stop_spin_below=1.0, stop_body="nobody")
    with pytest.raises(ValueError):
        ShapeSpec("sphere")


def test_csv_round_trip_and_schema(tmp_path):
    rec = run_scenario(free_fall_scenario(0.05))
    path = tmp_path / "ff.csv"
    rec.to_csv(path)
    assert path.read_text().splitlines()[0] == f"# {TRAJECTORY_SCHEMA}"
    back = TrajectoryRecord.from_csv(path)
    assert back.columns == rec.columns
    assert np.array_equal(back.data, rec.data)
    path.write_text("# other-schema/9\n" + path.read_text().split("\n", 1)[1])
    with pytest.raises(ValueError, match="schema"):
        TrajectoryRecord.from_csv(path)


def test_coin_without_spin_reports_no_spin():
    rec = run_scenario(coin_scenario(1.0, omega0=0.0, duration=0.01))
    with pytest.raises(ValueError, match="no spin"):
        spinning_disk_epsilon(rec, COIN_RADIUS)


def test_coin_short_run_did_not_stop():
    rec = run_scenario(coin_scenario(1.0, duration=0.02))
    assert not rec.stopped_early and len(rec) == 21
    with pytest.raises(ValueError, match="did not stop"):
        spinning_disk_epsilon(rec, COIN_RADIUS)


def test_coin_comes_to_rest():
    rec = coin_run(1.0)
    assert rec.stopped_early and rec.t[-1] < 20.0
    assert rec.column("coin.wz")[-1] < 0.5
    speed = np.hypot(rec.column("coin.vx"), rec.column("coin.vy"))
    assert speed[-1] < 0.01 * speed[0]
    assert np.all(rec.column("contacts")[1:] > 0)
    assert rec.column("normal_force")[-1] == pytest.approx(5.67e-3 * G, rel=0.05)


def test_epsilon_column_matches_state():
    rec = coin_run(1.0)
    eps = np.hypot(rec.column("coin.vx"), rec.column("coin.vy")) / (rec.column("coin.wz")
                                                                    * COIN_RADIUS)
    assert np.allclose(rec.column("epsilon"), eps, rtol=1e-14)
    t, series = epsilon_series(rec, COIN_RADIUS)
    assert series[-1] == pytest.approx(spinning_disk_epsilon(rec, COIN_RADIUS), rel=1e-14)
    assert series[0] == pytest.approx(1.0, rel=1e-12)


def test_epsilon_trajectories_approach_common_value():
    finals = []
    for eps0 in (0.1, 10.0):
        t, eps = epsilon_series(coin_run(eps0), COIN_RADIUS)
        tail = eps[int(0.8 * len(eps)):]
        finals.append(eps[-1])
        gap = np.abs(tail - eps[-1])
        # distance to the terminal value shrinks across the tail, up to a 0.5% band
        assert np.all(np.diff(gap) <= 0.005 * eps[-1])
    assert abs(finals[0] - finals[1]) < 0.1 * abs(0.1 - 10.0)


def test_loglog_slope_guards_and_exact_power_law():
    h = np.array([0.4, 0.2, 0.1, 0.05])
    assert loglog_slope(h, 3.0 * h ** 2) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ValueError, match="need >= 3 points"):
        loglog_slope([1e-3], [1e-2])
    with pytest.raises(ValueError):
        loglog_slope(h, np.zeros(4))


def test_study_guards():
    sc = free_fall_scenario(0.1)
    with pytest.raises(ValueError, match="need >= 3 points"):
        convergence_study(sc, "dt", [1e-3], 1e-4)
    with pytest.raises(ValueError, match="reference"):
        convergence_study(sc, "dt", [4e-3, 2e-3, 1e-3], 5e-4)
    with pytest.raises(ValueError):
        convergence_study(sc, "mass", [4e-3, 2e-3, 1e-3], 1e-4)


def test_free_fall_time_study_matches_closed_form():
    values, ref = [4e-3, 2e-3, 1e-3], 1e-4
    result = convergence_study(free_fall_scenario(1.0), "dt", values, ref)
    t = np.arange(251) * 4e-3
    for h, err in zip(result.values, result.errors):
        oracle = (h - ref) * np.linalg.norm(t) / np.linalg.norm(t * (t + ref))
        assert err == pytest.approx(oracle, rel=1e-9)
    assert result.slope == pytest.approx(loglog_slope(result.values, result.errors))
    assert 0.95 < result.slope < 1.1


def test_study_failure_keeps_partial_table(monkeypatch):
    from hydrostep.experiments import studies
    calls = []

    def flaky(scenario):
        calls.append(scenario.solver.dt)
        if len(calls) == 3:
            raise SolverError("forced")
        return run_scenario(scenario)
    monkeypatch.setattr(studies, "_run", flaky)
    with pytest.raises(StudyError) as err:
        convergence_study(free_fall_scenario(0.1), "dt", [4e-3, 2e-3, 1e-3], 1e-4)
    assert sorted(err.value.partial) == [2e-3, 4e-3]


def test_trajectory_error_identity_and_misaligned():
    rec = run_scenario(free_fall_scenario(0.1))
    assert trajectory_error(rec, rec) == 0.0
    other = TrajectoryRecord(rec.columns, rec.data[:1])
    with pytest.raises(ValueError):
        trajectory_error(other, rec)


def test_coin_config_file_matches_builtin():
    sc = load_scenario(CONFIGS / "coin.toml")
    ref = coin_scenario(1.0)
    world, state = build_world(sc)
    ref_world, ref_state = build_world(ref)
    assert np.allclose(state.q, ref_state.q, rtol=1e-15, atol=0)
    assert np.allclose(state.v, ref_state.v, rtol=1e-12, atol=0)
    assert sc.bodies[1].shape == ref.bodies[1].shape
    assert sc.pairs == ref.pairs and sc.solver == ref.solver
    assert (sc.stop_spin_below, sc.epsilon_radius) == (ref.stop_spin_below, ref.epsilon_radius)
    assert np.allclose(world.bodies[1].inertia, ref_world.bodies[1].inertia, rtol=1e-15)


@pytest.mark.parametrize("name", ["coin", "box_on_slab", "free_fall", "squeeze"])
def test_shipped_configs_load(name):
    sc = load_scenario(CONFIGS / f"{name}.toml")
    world, state = build_world(sc)
    assert len(world.bodies) == len(sc.bodies)


def test_config_errors():
    base = {"duration": 1.0, "bodies": [{"name": "b", "mass": 1.0, "inertia": [1, 1, 1]}]}
    scenario_from_dict(base)
    with pytest.raises(ValueError, match="unknown scenario keys"):
        scenario_from_dict({**base, "durration": 2.0})
    with pytest.raises(ValueError, match="unknown keys"):
        scenario_from_dict({**base, "bodies": [{"name": "b", "mass": 1.0, "colour": "red"}]})
    with pytest.raises(KeyError):
        scenario_from_dict({"bodies": base["bodies"]})
    with pytest.raises(ValueError):
        scenario_from_dict({**base, "gravity": [0, 1]})
    bad_shape = {"duration": 1.0, "bodies": [{"name": "b", "mass": 1.0,
                                              "shape": {"kind": "box"}}]}
    with pytest.raises(ValueError, match="half_sizes"):
        build_world(scenario_from_dict(bad_shape))


def test_tet_file_shape(tmp_path):
    pm = make_box((0.1, 0.1, 0.1), 1e6, 0.05)
    write_tet_mesh(tmp_path / "box.tet", pm.mesh, pm.field)
    d = {"duration": 0.01, "bodies": [{"name": "b", "mass": 1.0, "inertia": [1, 1, 1],
                                       "shape": {"kind": "tet_file", "path": "box.tet"}}]}
    world, _ = build_world(scenario_from_dict(d, tmp_path))
    geom = world.bodies[0].geometry
    assert np.array_equal(geom.field, pm.field)
    assert geom.modulus == pytest.approx(1e6)


def test_retry_is_counted(monkeypatch):
    real = runner.step
    failed = []

    def fails_once(state, world, config, contacts=None):
        if not failed and config.dt == 1e-3:
            failed.append(state.t)
            raise SolverError("forced")
        return real(state, world, config, contacts)
    monkeypatch.setattr(runner, "step", fails_once)
    rec = run_scenario(free_fall_scenario(0.01))
    assert rec.retries == 1 and rec.retry_times == [0.0]
    assert rec.column("body.vz")[-1] == pytest.approx(-G * 0.01, rel=1e-12)


def test_persistent_failure_surfaces_time(monkeypatch):
    real = runner.step

    def fails_late(state, world, config, contacts=None):
        if state.t > 4.5e-3:
            raise SolverError("forced")
        return real(state, world, config, contacts)
    monkeypatch.setattr(runner, "step", fails_late)
    with pytest.raises(runner.ScenarioError) as err:
        run_scenario(free_fall_scenario(0.01))
    assert err.value.time == pytest.approx(5e-3)
    assert len(err.value.record) == 6


def _small_config(tmp_path, duration=0.05):
    text = (CONFIGS / "box_on_slab.toml").read_text().replace("duration = 0.5",
                                                               f"duration = {duration}")
    path = tmp_path / "small.toml"
    path.write_text(text)
    return path


def test_cli_run_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["run", str(_small_config(tmp_path)), "--out", str(out),
                     "--snapshot-every", "10", "--dump-constraints"])
    assert code == 0
    rec = TrajectoryRecord.from_csv(out / "box_on_slab.csv")
    assert len(rec) == 51
    summary = json.loads((out / "box_on_slab.summary.json").read_text())
    assert summary["retries"] == 0 and summary["steps"] == 50
    assert set(summary["mean_seconds_per_step"]) == {"broadphase", "narrowphase", "solve"}
    snaps = sorted((out / "snapshots").iterdir())
    assert [p.name for p in snaps] == [f"step_{k:07d}.txt" for k in (10, 20, 30, 40, 50)]
    header = (out / "constraints.csv").read_text().splitlines()[0]
    assert header.startswith("t,phi0,k,d,mu")


def test_cli_run_exit_codes(tmp_path, monkeypatch, capsys):
    real = runner.step
    state = {"n": 0}

    def fails_once(s, world, config, contacts=None):
        state["n"] += 1
        if state["n"] == 3:
            raise SolverError("forced")
        return real(s, world, config, contacts)
    monkeypatch.setattr(runner, "step", fails_once)
    assert cli.main(["run", str(CONFIGS / "free_fall.toml"), "--out", str(tmp_path)]) == 2
    assert "retried" in capsys.readouterr().out

    def always(s, world, config, contacts=None):
        raise SolverError("forced")
    monkeypatch.setattr(runner, "step", always)
    assert cli.main(["run", str(CONFIGS / "free_fall.toml"), "--out", str(tmp_path)]) == 1
    assert (tmp_path / "free_fall.partial.csv").exists()


def test_cli_study(tmp_path, capsys):
    code = cli.main(["study", str(CONFIGS / "free_fall.toml"), "--sweep-dt", "4e-3", "2e-3",
                     "1e-3", "--out", str(tmp_path)])
    assert code == 0
    text = (tmp_path / "free_fall_dt_study.csv").read_text().splitlines()
    assert text[0].startswith("# hydrostep-study/1 variable=dt")
    assert len(text) == 5
    assert "log-log slope" in capsys.readouterr().out
    assert cli.main(["study", str(CONFIGS / "free_fall.toml"), "--sweep-dt", "1e-3",
                     "--out", str(tmp_path)]) == 1


def test_cli_report_and_vertex_recount(tmp_path, capsys):
    code = cli.main(["report", str(CONFIGS / "coin.toml"), "--tessellation", "--steps", "5",
                     "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "coin_tessellation.csv").read_text().splitlines()
    assert lines[1] == ("t,faces_polygonal,faces_triangulated,solve_ms_polygonal,"
                        "solve_ms_triangulated,polygon_vertex_sum,force_relative_difference")
    data = np.array([[float(x) for x in row.split(",")] for row in lines[2:]])
    assert len(data) == 5
    assert np.array_equal(data[:, 2], data[:, 5])
    assert np.all(data[:, 6] <= 1e-10)
    assert "mean face ratio" in capsys.readouterr().out


def test_tessellation_report_recount_against_surfaces():
    from hydrostep.contact_surface import POLYGONAL
    from hydrostep.stepper import assemble_contacts
    sc = coin_scenario(2.0, duration=0.003)
    report = tessellation_report(sc)
    world, state = build_world(sc)
    surfaces, _, _ = assemble_contacts(state, world, POLYGONAL)
    assert report.column("faces_polygonal")[0] == sum(len(s) for s in surfaces)
    assert report.column("faces_triangulated")[0] == sum(int(s.counts.sum()) for s in surfaces)


def test_cli_disk_coarse(tmp_path, capsys):
    code = cli.main(["disk", "--eps0", "10", "--resolution", "4.8e-3", "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("eps0 = 10: eps* = ")
    assert (tmp_path / "coin_eps10.csv").exists()


def test_runs_are_byte_identical(tmp_path):
    sc = coin_scenario(2.0, duration=0.1)
    run_scenario(sc).to_csv(tmp_path / "a.csv")
    run_scenario(sc).to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_solver_config_in_scenario():
    sc = scenario_from_dict({"duration": 1.0, "solver": {"dt": 2e-3, "stiction_velocity": 1e-3},
                             "bodies": [{"name": "b", "mass": 1.0, "inertia": [1, 1, 1]}]})
    assert sc.solver == SolverConfig(dt=2e-3, stiction_velocity=1e-3)
    assert sc.num_steps == 500 and sc.num_rows == 501
