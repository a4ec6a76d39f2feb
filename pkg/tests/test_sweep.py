"""Sweep harness tests: grids, execution, CSV round trips, plateaus."""
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from packetsim.errors import ConfigError, ParseError
from packetsim.sweep import (
    BASELINE_K,
    DEFAULT_K_GRID,
    DEFAULT_S_GRID,
    METRIC_NAMES,
    SweepConfig,
    WorkloadSpec,
    aggregate_series,
    detect_plateau,
    emit_plot_series,
    expand_grid,
    load_sweep_config,
    plateau_report,
    read_results_csv,
    run_experiment,
    run_sweep,
    write_results_csv,
)
from packetsim.workload import GeneratorConfig, build_workload, write_workload


def gen_workload_spec(workload_id="wl", nodes=8, **overrides):
    base = dict(n_jobs=40, span_s=600.0, h_types=2, nodes=nodes, load=0.8,
                runtime_bounds_s=(5.0, 60.0), seed=0)
    base.update(overrides)
    return WorkloadSpec(workload_id=workload_id, nodes=nodes,
                        generator=GeneratorConfig(**base))


def toy_config(out_dir, **overrides):
    base = dict(
        workloads=(gen_workload_spec(),),
        policies=("packet", "fcfs"),
        k_grid=(0.5, 2.0, 10.0),
        s_grid=(0.1, 0.3),
        seeds=(1, 2),
        out_dir=str(out_dir),
    )
    base.update(overrides)
    return SweepConfig(**base)


def test_default_k_grid_shape():
    assert len(DEFAULT_K_GRID) == 37
    assert DEFAULT_K_GRID[0] == 0.1
    assert DEFAULT_K_GRID[-1] == 1000.0
    assert all(b > a for a, b in zip(DEFAULT_K_GRID, DEFAULT_K_GRID[1:]))
    for landmark in (0.5, 1.0, 8.0, 20.0, 50.0, 100.0, 500.0):
        assert landmark in DEFAULT_K_GRID


def test_default_grid_expands_to_1332_experiments():
    workloads = tuple(gen_workload_spec(workload_id=f"wl{i}") for i in range(6))
    config = SweepConfig(workloads=workloads, policies=("packet",),
                         s_grid=DEFAULT_S_GRID, seeds=(1,))
    assert len(expand_grid(config)) == 6 * len(DEFAULT_S_GRID) * 37


def test_expand_grid_single_point():
    config = SweepConfig(workloads=(gen_workload_spec(),),
                         k_grid=(2.0,), s_grid=(0.1,), seeds=(1,))
    specs = expand_grid(config)
    assert len(specs) == 1
    assert (specs[0].k, specs[0].s_value, specs[0].seed) == (2.0, 0.1, 1)


def test_expand_grid_orders_k_ascending():
    config = SweepConfig(workloads=(gen_workload_spec(),),
                         k_grid=(0.5, 1.0, 2.0, 4.0), s_grid=(0.1,), seeds=(1,))
    assert [s.k for s in expand_grid(config)] == [0.5, 1.0, 2.0, 4.0]


def test_expand_grid_collapses_k_for_baselines():
    config = toy_config("unused", policies=("packet", "fcfs", "easy-backfill"))
    specs = expand_grid(config)
    packet = [s for s in specs if s.policy == "packet"]
    baseline = [s for s in specs if s.policy != "packet"]
    assert len(packet) == 3 * 2 * 2
    assert len(baseline) == 2 * 1 * 2 * 2
    assert all(s.k == BASELINE_K for s in baseline)


def test_workload_spec_needs_exactly_one_source(tmp_path):
    with pytest.raises(ConfigError, match="exactly one"):
        WorkloadSpec(workload_id="w", nodes=4)
    with pytest.raises(ConfigError, match="exactly one"):
        WorkloadSpec(workload_id="w", nodes=4,
                     generator=GeneratorConfig(), path="x.csv")


@pytest.mark.parametrize(
    "overrides",
    [
        dict(workloads=()),
        dict(policies=()),
        dict(policies=("packet", "sjf")),
        dict(k_grid=()),
        dict(k_grid=(1.0, 1.0)),
        dict(k_grid=(2.0, 1.0)),
        dict(k_grid=(-1.0,)),
        dict(s_grid=(0.0,)),
        dict(s_grid=(1.0,)),
        dict(seeds=()),
        dict(wait_endpoint="midpoint"),
        dict(t_max_s=0.0),
    ],
)
def test_sweep_config_validation(overrides):
    with pytest.raises(ConfigError):
        toy_config("unused", **overrides)


def test_duplicate_workload_ids_rejected():
    with pytest.raises(ConfigError, match="unique"):
        toy_config("unused", workloads=(gen_workload_spec(), gen_workload_spec()))


def test_run_experiment_error_row():
    spec_source = WorkloadSpec(workload_id="missing", nodes=4,
                               path="does/not/exist.csv")
    config = SweepConfig(workloads=(spec_source,), k_grid=(1.0,),
                         s_grid=(0.1,), seeds=(1,))
    row = run_experiment(expand_grid(config)[0])
    assert row.status == "error"
    assert "FileNotFoundError" in row.error
    assert row.full_utilization is None


def test_run_sweep_writes_results_and_timing(tmp_path):
    config = toy_config(tmp_path / "out")
    rows = run_sweep(config, workers=1)
    # 3 k values for packet plus one fcfs cell, times 2 S times 2 seeds
    assert len(rows) == (3 + 1) * 2 * 2
    assert all(r.status == "ok" for r in rows)
    assert (tmp_path / "out" / "results.csv").exists()
    assert (tmp_path / "out" / "timing.csv").exists()
    keys = [(r.workload, r.policy, r.s_value, r.k, r.seed) for r in rows]
    assert keys == sorted(keys)


def test_results_csv_identical_across_worker_counts(tmp_path):
    byte_versions = []
    for i, workers in enumerate((1, 2, 4)):
        config = toy_config(tmp_path / f"out{i}")
        run_sweep(config, workers=workers)
        byte_versions.append((tmp_path / f"out{i}" / "results.csv").read_bytes())
    assert byte_versions[0] == byte_versions[1] == byte_versions[2]


def test_rerun_is_byte_identical(tmp_path):
    config = toy_config(tmp_path / "out")
    run_sweep(config, workers=1)
    first = (tmp_path / "out" / "results.csv").read_bytes()
    run_sweep(config, workers=1)
    assert (tmp_path / "out" / "results.csv").read_bytes() == first


def test_results_csv_round_trip(tmp_path):
    config = toy_config(tmp_path / "out")
    rows = run_sweep(config, workers=1)
    back = read_results_csv(tmp_path / "out" / "results.csv")
    assert len(back) == len(rows)
    for orig, parsed in zip(rows, back):
        assert (parsed.workload, parsed.policy, parsed.k,
                parsed.s_value, parsed.seed) == \
            (orig.workload, orig.policy, orig.k, orig.s_value, orig.seed)
        assert parsed.status == "ok"
        assert parsed.full_utilization == pytest.approx(
            orig.full_utilization, abs=1e-6)


def test_read_results_rejects_foreign_tables(tmp_path):
    path = tmp_path / "results.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ParseError, match="unexpected results columns"):
        read_results_csv(path)


def test_error_rows_round_trip(tmp_path):
    from packetsim.sweep import ResultRow

    rows = [ResultRow(workload="w", policy="packet", k=1.0, s_value=0.1,
                      seed=1, status="error", error="ValidationError: boom")]
    path = tmp_path / "results.csv"
    write_results_csv(rows, path)
    back = read_results_csv(path)
    assert back[0].status == "error"
    assert back[0].error == "ValidationError: boom"
    assert back[0].avg_queue_time_s is None


def test_file_workload_mismatched_nodes_warns(tmp_path):
    jobs = build_workload(GeneratorConfig(n_jobs=20, span_s=300.0, h_types=2,
                                          nodes=16, load=0.5, seed=3),
                          s_target=0.1)
    path = tmp_path / "wl.csv"
    write_workload(jobs, path, nodes=16, h_types=2, seed=3)
    spec_source = WorkloadSpec(workload_id="filewl", nodes=8, path=str(path))
    config = SweepConfig(workloads=(spec_source,), k_grid=(1.0,),
                         s_grid=(0.1,), seeds=(1,))
    with pytest.warns(UserWarning, match="sweep value wins"):
        row = run_experiment(expand_grid(config)[0])
    assert row.status == "ok"


def test_detect_plateau_constant_series():
    assert detect_plateau([1, 2, 4], [5.0, 5.0, 5.0], rel_tol=0.05) == 1


def test_detect_plateau_never_settles():
    assert detect_plateau([1, 2, 4], [100.0, 50.0, 25.0], rel_tol=0.05) is None


def test_detect_plateau_knee_case():
    ks = [0.5, 1, 2, 5, 10, 20, 50, 100]
    values = [100.0, 60.0, 30.0, 18.0, 12.0, 10.2, 10.1, 10.0]
    assert detect_plateau(ks, values, rel_tol=0.05) == 20


def test_detect_plateau_absolute_floor_rescues_zero_tail():
    ks = [1, 2, 4, 8]
    values = [3.0, 0.4, 0.0, 0.0]
    # a zero final value makes the relative tolerance vanish
    assert detect_plateau(ks, values, rel_tol=0.05) == 4
    assert detect_plateau(ks, values, rel_tol=0.05, abs_floor=1.0) == 2


def test_detect_plateau_validation():
    with pytest.raises(ValueError):
        detect_plateau([1, 2], [1.0, 1.0], rel_tol=0.05)
    with pytest.raises(ValueError):
        detect_plateau([1, 2, 2], [1.0, 1.0, 1.0], rel_tol=0.05)
    with pytest.raises(ValueError):
        detect_plateau([1, 2, 3], [1.0, 1.0], rel_tol=0.05)
    with pytest.raises(ValueError):
        detect_plateau([1, 2, 3], [1.0, 1.0, 1.0], rel_tol=0.0)


@settings(max_examples=100, deadline=None)
@given(
    values=st.lists(st.floats(min_value=0.0, max_value=100.0), min_size=3,
                    max_size=12),
    tol_small=st.floats(min_value=0.01, max_value=0.5),
    tol_factor=st.floats(min_value=1.0, max_value=10.0),
)
def test_detect_plateau_monotone_in_tolerance(values, tol_small, tol_factor):
    ks = list(range(1, len(values) + 1))
    first = detect_plateau(ks, values, rel_tol=tol_small)
    second = detect_plateau(ks, values, rel_tol=tol_small * tol_factor)
    # loosening the tolerance can only move the onset earlier
    if first is not None:
        assert second is not None
        assert second <= first


def test_aggregate_series_groups_by_cell(tmp_path):
    rows = run_sweep(toy_config(tmp_path / "out"), workers=1)
    series = aggregate_series(rows, "avg_queue_time_s")
    assert ("wl", "packet", 0.1) in series
    points = series[("wl", "packet", 0.1)]
    assert [k for k, _ in points] == [0.5, 2.0, 10.0]
    assert all(len(vals) == 2 for _, vals in points)


def test_aggregate_series_validation():
    from packetsim.sweep import ResultRow

    with pytest.raises(ConfigError, match="unknown metric"):
        aggregate_series([], "throughput")
    error_only = [ResultRow(workload="w", policy="packet", k=1.0,
                            s_value=0.1, seed=1, status="error", error="x")]
    with pytest.raises(ConfigError, match="no successful rows"):
        aggregate_series(error_only, "full_utilization")


def test_emit_plot_series_multi_seed(tmp_path):
    rows = run_sweep(toy_config(tmp_path / "out"), workers=1)
    paths = emit_plot_series(rows, "full_utilization", tmp_path / "series")
    names = sorted(p.split("/")[-1] for p in paths)
    assert "wl_packet_S0.1_full_utilization.csv" in names
    assert "wl_fcfs_S0.3_full_utilization.csv" in names
    content = (tmp_path / "series" / "wl_packet_S0.1_full_utilization.csv").read_text()
    lines = content.strip().splitlines()
    assert lines[0] == "k,full_utilization_mean,full_utilization_min,full_utilization_max"
    assert len(lines) == 1 + 3


def test_emit_plot_series_single_seed(tmp_path):
    rows = run_sweep(toy_config(tmp_path / "out", seeds=(1,)), workers=1)
    emit_plot_series(rows, "avg_queue_length", tmp_path / "series")
    content = (tmp_path / "series" / "wl_packet_S0.1_avg_queue_length.csv").read_text()
    assert content.splitlines()[0] == "k,avg_queue_length"


def test_plateau_report_skips_baselines(tmp_path):
    rows = run_sweep(toy_config(tmp_path / "out"), workers=1)
    report = plateau_report(rows, "full_utilization", rel_tol=0.5)
    assert report
    assert all(entry["policy"] == "packet" for entry in report)


def test_metric_names_cover_report_fields():
    assert set(METRIC_NAMES) == {
        "full_utilization", "useful_utilization", "avg_queue_time_s",
        "median_queue_time_s", "avg_queue_length",
    }


def test_load_sweep_config(tmp_path):
    path = tmp_path / "sweep.yaml"
    path.write_text(
        "workloads:\n"
        "  - id: demo\n"
        "    nodes: 8\n"
        "    generator:\n"
        "      n_jobs: 40\n"
        "      span_s: 600\n"
        "      h_types: 2\n"
        "      load: 0.8\n"
        "      runtime_bounds_s: [5, 60]\n"
        "policies: [packet, fcfs]\n"
        "k_grid: [0.5, 2, 10]\n"
        "s_grid: [0.1, 0.3]\n"
        "seeds: [1, 2]\n"
    )
    config = load_sweep_config(path)
    assert config.workloads[0].workload_id == "demo"
    assert config.workloads[0].nodes == 8
    assert config.workloads[0].generator.runtime_bounds_s == (5.0, 60.0)
    assert config.k_grid == (0.5, 2.0, 10.0)
    assert config.policies == ("packet", "fcfs")


def test_load_sweep_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "sweep.yaml"
    path.write_text("workloads:\n  - id: w\n    generator: {}\nworker_count: 4\n")
    with pytest.raises(ConfigError, match="unknown keys"):
        load_sweep_config(path)


def test_load_sweep_config_rejects_bad_generator(tmp_path):
    path = tmp_path / "sweep.yaml"
    path.write_text(
        "workloads:\n  - id: w\n    generator:\n      job_count: 10\n")
    with pytest.raises(ConfigError, match="bad generator settings"):
        load_sweep_config(path)


def test_load_sweep_config_requires_workloads(tmp_path):
    path = tmp_path / "sweep.yaml"
    path.write_text("policies: [packet]\n")
    with pytest.raises(ConfigError, match="workloads"):
        load_sweep_config(path)
