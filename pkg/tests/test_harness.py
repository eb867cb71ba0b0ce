import csv
import filecmp
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from stratokeeper.env import EnvConfig
from stratokeeper.errors import UsageError
from stratokeeper.harness import (
    CellResult,
    ExperimentSpec,
    aggregate,
    kde_2d,
    launch_objective,
    polar_launches,
    resolve_threads,
    reward_sweep,
    run_experiment,
    split_seed,
    wind_cone,
)
from stratokeeper.noise import NoiseSpec
from stratokeeper.optimize import Trace, converged_stats
from stratokeeper.policy import ControllerSpec
from stratokeeper.windfield import GridAxes, SyntheticWindSpec, WindField, synthesize_grid, write_grid

from conftest import constant_grid

SHORT = EnvConfig(horizon=12)
SPEC = ExperimentSpec(days=(0,), optimizers=("uniform",), budget=5, env=SHORT, sweep_launches=0)


@pytest.fixture(scope="module")
def calm_day(tmp_path_factory):
    path = tmp_path_factory.mktemp("days") / "calm.grid"
    write_grid(constant_grid(0.0, 0.0), path)
    return str(path)


def test_split_seed():
    assert split_seed(7, "a", 1) == split_seed(7, "a", 1)
    assert split_seed(7, "a", 1) != split_seed(7, "a", 2)
    assert split_seed(7, "a") != split_seed(8, "a")
    assert 0 <= split_seed(2**70, "x") < 2**63


def test_objective_pure_and_corner_inclusive():
    obj = launch_objective(0, "step", ControllerSpec(), SPEC)
    cfg = (120.0, -50.0, 3.0)
    assert obj(cfg) == obj(cfg)
    assert math.isfinite(obj((400.0, 400.0, 24.0)))


def test_objective_day_seed_fixed():
    a = launch_objective(3, "step", ControllerSpec(), SPEC)
    b = launch_objective(3, "step", ControllerSpec(), SPEC)
    assert a.episode_seed == b.episode_seed
    assert a.windfield.noise == b.windfield.noise
    assert launch_objective(4, "step", ControllerSpec(), SPEC).episode_seed != a.episode_seed


def test_kde_peak():
    g = kde_2d([(0.0, 0.0)], bandwidth=10.0, extent=50.0, resolution=101)
    assert g.density[50, 50] == pytest.approx(1.0 / (2.0 * math.pi * 100.0), abs=1e-6)
    assert g.density[50, 50] == pytest.approx(0.0015915, abs=1e-6)


point_sets = arrays(np.float64, st.tuples(st.integers(1, 12), st.just(2)), elements=st.floats(-300.0, 300.0))


@settings(max_examples=25)
@given(point_sets, st.randoms(use_true_random=False))
def test_kde_symmetry_and_permutation(pts, rnd):
    g = kde_2d(pts, 15.0, 400.0, 81)
    mirrored = kde_2d(pts * np.array([-1.0, 1.0]), 15.0, 400.0, 81)
    assert np.allclose(mirrored.density, g.density[:, ::-1], rtol=1e-12, atol=1e-300)
    order = list(range(len(pts)))
    rnd.shuffle(order)
    shuffled = kde_2d(pts[order], 15.0, 400.0, 81)
    assert np.allclose(shuffled.density, g.density, rtol=1e-12, atol=1e-300)
    assert np.all(g.density >= 0.0)


@settings(max_examples=20)
@given(arrays(np.float64, st.tuples(st.integers(1, 10), st.just(2)), elements=st.floats(-300.0, 300.0)))
def test_kde_integral(pts):
    # Default grid spans +-400 km, at least 6 bandwidths beyond every point.
    assert kde_2d(pts).integral() == pytest.approx(1.0, abs=0.02)


def test_kde_validation():
    with pytest.raises(UsageError):
        kde_2d([])
    with pytest.raises(ValueError):
        kde_2d([(0.0, 0.0)], bandwidth=0.0)


def cone_field(twist):
    grid = synthesize_grid(SyntheticWindSpec(seed=5, direction_twist=twist, time_drift=0.0), GridAxes.centered())
    return WindField(grid, NoiseSpec(amplitude=0.0))


def test_wind_cone_parallel_without_twist():
    cone = wind_cone(cone_field(0.0), 30.0, -20.0, 5.0)
    assert len(cone) == 25
    for a in cone:
        for b in cone:
            assert abs(a.u * b.v - a.v * b.u) <= 1e-9


def test_wind_cone_opposing_levels():
    cfg = EnvConfig()
    span = cfg.obs_pressure_hi - cfg.obs_pressure_lo
    cone = wind_cone(cone_field(math.pi / span), 0.0, 0.0, 0.0, cfg)
    unit = [np.array(v) / np.hypot(*v) for v in cone]
    assert min(float(a @ b) for a in unit for b in unit) <= -0.99


@settings(max_examples=10)
@given(st.floats(-400.0, 400.0), st.floats(-400.0, 400.0), st.floats(0.0, 24.0))
def test_wind_cone_length(day_field, x, y, t):
    assert len(wind_cone(day_field, x, y, t)) == 25


def test_polar_launches_radius():
    pts = polar_launches(np.random.default_rng(0), 2000, 400.0)
    r = np.hypot(pts[:, 0], pts[:, 1])
    assert r.max() <= 400.0
    # Radius is uniform, so half the launches fall within 200 km.
    assert np.mean(r < 200.0) == pytest.approx(0.5, abs=0.05)


def test_sweep_hover_at_origin(calm_day):
    spec = replace(SPEC, days=(calm_day,), perturbation=NoiseSpec(amplitude=0.0))
    out = reward_sweep(calm_day, ("step", "tanh", "exp"), ControllerSpec("hold", hold_altitude=14000.0), 4, spec, radius=0.0)
    assert out == {"step": (1.0, 1.0), "tanh": (1.0, 1.0), "exp": (1.0, 1.0)}


def test_sweep_all_outside_is_zero(calm_day):
    # Calm air and a held altitude: nobody moves, so nobody ever enters a tiny region.
    env = replace(SHORT, region_radius=1.0)
    spec = replace(SPEC, days=(calm_day,), env=env, perturbation=NoiseSpec(amplitude=0.0))
    pts = polar_launches(np.random.default_rng(2), 4, 400.0)
    assert np.all(np.hypot(pts[:, 0], pts[:, 1]) > 5.0)
    out = reward_sweep(calm_day, ("step",), ControllerSpec("hold", hold_altitude=14000.0), 4, spec, seed=2)
    assert out["step"] == (0.0, 0.0)


@settings(max_examples=5)
@given(st.integers(0, 2**16))
def test_sweep_unit_square(seed):
    out = reward_sweep(0, ("step", "exp"), ControllerSpec(), 2, SPEC, seed=seed)
    for tw, reach in out.values():
        assert 0.0 <= tw <= 1.0 and 0.0 <= reach <= 1.0


def test_sweep_needs_launches():
    with pytest.raises(UsageError):
        reward_sweep(0, ("step",), ControllerSpec(), 0, SPEC)


def test_single_cell_matches_trace():
    report = run_experiment(SPEC)
    assert len(report.cells) == 1 and len(report.results) == 1
    stats = converged_stats(report.results[0].trace())
    cell = report.cell("uniform")
    assert cell.count == 1 and cell.failures == 0
    assert cell.mean_converged_max == stats.converged_max
    assert cell.mean_converge_index == stats.converge_index


def constant_cells(n_seeds):
    rows = tuple((i + 1, 0.0, 0.0, 0.0, 2.5, 2.5) for i in range(4))
    return [CellResult("d", "bo", "step", s, rows, None) for s in range(n_seeds)]


def test_constant_objective_zero_variance():
    spec = replace(SPEC, optimizers=("bo",), seeds=(0, 1))
    results = constant_cells(2)
    (cell,) = aggregate(results, spec)
    stats = [converged_stats(r.trace()) for r in results]
    assert np.var([s.converged_max for s in stats]) == 0.0
    assert np.var([s.converge_index for s in stats]) == 0.0
    assert cell.count == 2 and cell.mean_converged_max == 2.5 and cell.mean_converge_index == 1.0


def test_failed_cell_is_recorded():
    spec = replace(SPEC, days=("/nonexistent/day.grid", 0))
    report = run_experiment(spec)
    cell = report.cell("uniform")
    assert cell.failures == 1 and cell.count == 1
    bad = [r for r in report.results if r.error]
    assert len(bad) == 1 and bad[0].rows == ()


def read_rows(path):
    with open(path) as f:
        return list(csv.DictReader(f))


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    spec = replace(
        SPEC, days=(0, 1), optimizers=("bo", "uniform"), rewards=("step", "exp"), budget=5,
        seeds=(0, 1), sweep_launches=2, kde_resolution=41,
    )
    a = tmp_path_factory.mktemp("run_a")
    b = tmp_path_factory.mktemp("run_b")
    return spec, run_experiment(spec, a), a, b


def test_report_means_from_trace_csvs(small_run):
    spec, report, out, _ = small_run
    report_rows = read_rows(out / "report.csv")
    for row in report_rows:
        if row["section"] != "optimizer":
            continue
        maxima, indices = [], []
        for day in spec.days:
            for seed in spec.seeds:
                rows = read_rows(out / f"trace_{day}_{row['optimizer']}_{row['reward']}_{seed}.csv")
                tr = Trace(row["optimizer"])
                for r in rows:
                    tr.append((float(r["x_km"]), float(r["y_km"]), float(r["dt_h"])), float(r["value"]))
                s = converged_stats(tr)
                maxima.append(s.converged_max)
                indices.append(s.converge_index)
        assert int(row["count"]) == len(spec.days) * len(spec.seeds)
        assert float(row["mean_converged_max"]) == math.fsum(maxima) / len(maxima)
        assert float(row["mean_converge_index"]) == math.fsum(indices) / len(indices)
    assert {r["reward"] for r in report_rows if r["section"] == "sweep"} == {"step", "exp"}


def test_rerun_byte_identical(small_run):
    spec, _, a, b = small_run
    run_experiment(spec, b)
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    assert mismatch == [] and errors == []


def test_meta_lists_every_file(small_run):
    _, _, out, _ = small_run
    listed = {
        line.split("=", 1)[1].strip()
        for line in (out / "meta.txt").read_text().splitlines()
        if line.startswith("file =")
    }
    assert listed == {p.name for p in out.iterdir()}
    assert {"report.csv", "kde_step.csv", "kde_exp.csv", "windcone_0.csv", "windcone_1.csv"} <= listed
    header = (out / "windcone_0.csv").read_text().splitlines()[0]
    assert header == "level,pressure_pa,u,v"
    assert (out / "kde_step.csv").read_text().splitlines()[0] == "x_km,y_km,density"


def test_threads_env_override(monkeypatch):
    monkeypatch.delenv("STRATOKEEPER_THREADS", raising=False)
    assert resolve_threads(3) == 3
    monkeypatch.setenv("STRATOKEEPER_THREADS", "2")
    assert resolve_threads(5) == 2
    monkeypatch.setenv("STRATOKEEPER_THREADS", "two")
    with pytest.raises(UsageError):
        resolve_threads(1)


def test_parallel_matches_serial():
    spec = replace(SPEC, days=(0, 1), seeds=(0, 1))
    serial = run_experiment(spec)
    parallel = run_experiment(replace(spec, threads=2))
    assert [r.rows for r in serial.results] == [r.rows for r in parallel.results]


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec(days=())
    with pytest.raises(ValueError):
        ExperimentSpec(optimizers=("cmaes",))
    with pytest.raises(ValueError):
        ExperimentSpec(seeds=())
    with pytest.raises(ValueError):
        ExperimentSpec(days=(1, 1))
