import math

import pandas as pd
import pytest

from cli import COUNTEREXAMPLE_FLAGS
from graphs import basic_reproduction_number, derive_seed, disjoint_union, erdos_renyi, named_graph
from runner import (
    build_ensemble,
    build_graph,
    build_sequence,
    calibration_job,
    normalize_graph_spec,
    run_calibration,
    run_sweep,
    sweep_job,
    worker_map,
)
from transition import SWEEP_COLUMNS, calibration_failures, mean_log_t_bar_by_family, measure_t_bar
from utils.edgelist import write_edgelist


def test_normalize_graph_spec():
    assert normalize_graph_spec("g.txt") == {"kind": "edgelist", "path": "g.txt"}
    assert normalize_graph_spec({"path": "g.txt"}) == {"kind": "edgelist", "path": "g.txt"}
    with pytest.raises(ValueError):
        normalize_graph_spec({"n": 5})
    with pytest.raises(ValueError):
        normalize_graph_spec(5)


def test_build_graph_kinds(tmp_path):
    assert build_graph({"kind": "complete", "n": 6}) == named_graph("complete", 6)
    assert build_graph({"kind": "complete_bipartite", "n": 7, "a": 3, "b": 4}).link_count == 12
    assert build_graph({"kind": "er", "n": 20, "p": 0.3, "seed": 4}) == erdos_renyi(20, 0.3, seed=4)
    # a seed inside the graph spec wins over the caller's
    assert build_graph({"kind": "er", "n": 20, "p": 0.3, "seed": 4}, seed=99) == erdos_renyi(20, 0.3, seed=4)
    assert build_graph({"kind": "ba", "n": 30, "m0": 4, "m": 2}, seed=1).link_count == 6 + 26 * 2
    assert build_graph({"kind": "ws", "n": 20, "K": 2, "beta_ws": 0.0}).link_count == 40

    union = build_graph({"kind": "union", "parts": [{"kind": "complete", "n": 5}, {"kind": "complete", "n": 3}]})
    assert union == disjoint_union(named_graph("complete", 5), named_graph("complete", 3))

    path = write_edgelist(named_graph("star", 5), tmp_path / "star.txt")
    assert build_graph(str(path)) == named_graph("star", 5)
    assert build_graph({"path": str(path)}) == named_graph("star", 5)


def test_build_graph_errors():
    with pytest.raises(ValueError, match="missing p"):
        build_graph({"kind": "er", "n": 10})
    with pytest.raises(ValueError, match="unknown graph kind"):
        build_graph({"kind": "lattice", "n": 10})


def test_build_sequence():
    graphs = build_sequence([{"kind": "complete", "n": 5}, {"kind": "er", "n": 5, "p": 0.5}], seed=3)
    assert len(graphs) == 2
    assert graphs[1] == erdos_renyi(5, 0.5, seed=derive_seed(3, 1))
    seq = build_sequence({"kind": "er_sequence", "M": 4, "n": 10, "p_range": [0.3, 0.8], "seed": 2})
    assert len(seq) == 4
    assert seq == build_sequence({"kind": "er_sequence", "M": 4, "n": 10, "p_range": [0.3, 0.8]}, seed=2)
    with pytest.raises(ValueError):
        build_sequence([])
    with pytest.raises(ValueError, match="missing M"):
        build_sequence({"kind": "er_sequence", "n": 10, "p_range": [0.3, 0.8]})


def test_build_ensemble_ids_and_determinism():
    spec = [
        {"kind": "er", "count": 3, "n": 20, "p_range": [0.2, 0.5]},
        {"kind": "ba", "count": 2, "n": 20, "m0_range": [3, 5]},
        {"kind": "ws", "count": 2, "n": 20, "K_range": [1, 3], "beta_range": [0.0, 0.5]},
        {"kind": "star", "n": 10},
        {"kind": "complete", "n": 10, "id": "k10"},
    ]
    labeled = build_ensemble(spec, seed=11)
    ids = [gid for gid, _, _ in labeled]
    assert ids == ["er-0000", "er-0001", "er-0002", "ba-0000", "ba-0001", "ws-0000", "ws-0001", "star-0000", "k10"]
    seeds = [s for _, s, _ in labeled]
    assert seeds[-2:] == [None, None]
    assert len(set(seeds[:-2])) == 7
    again = build_ensemble(spec, seed=11)
    assert [g for _, _, g in again] == [g for _, _, g in labeled]
    assert [g for _, _, g in build_ensemble(spec, seed=12)][:3] != [g for _, _, g in labeled][:3]


def test_build_ensemble_rejects_duplicate_ids():
    with pytest.raises(ValueError, match="not unique"):
        build_ensemble([{"kind": "star", "n": 5}, {"kind": "star", "n": 6}], seed=0)
    with pytest.raises(ValueError, match="missing n"):
        build_ensemble({"kind": "er", "count": 2}, seed=0)


def test_worker_map_serial_and_pool():
    with worker_map(1) as mapper:
        assert mapper is map
    with worker_map(2) as mapper:
        assert list(mapper(abs, [-1, 2, -3])) == [1, 2, 3]


def test_numerical_failures_leave_nan_rows():
    g = named_graph("complete", 20)
    # h = 1 at tau = 5 leaves the unit box
    report = sweep_job(("k20", None, g, 5.0, 1e-3, 1.0, 10.0, None, 0))
    assert report.flags == ["decay_not_converged", "growth_not_converged"]
    row = report.to_row()
    assert tuple(row) == SWEEP_COLUMNS
    assert math.isnan(row["t_bar_decay"])
    assert math.isnan(row["t_bar_growth"])
    assert row["T_hat"] > 0
    rows = calibration_job(("k20", g, 5.0, [0.1], [0.01], 1.0, 10.0))
    assert len(rows) == 1
    assert rows[0]["graph_id"] == "k20"
    assert math.isnan(rows[0]["t_bar"])


def test_run_sweep_matches_across_mappers():
    labeled = build_ensemble({"kind": "er", "count": 3, "n": 20, "p_range": [0.3, 0.5]}, seed=5)
    serial = run_sweep(labeled, 0.2, 1e-3, 0.01, 300.0)
    with worker_map(2) as mapper:
        pooled = run_sweep(labeled, 0.2, 1e-3, 0.01, 300.0, mapper=mapper)
    assert pd.DataFrame([r.to_row() for r in serial]).equals(pd.DataFrame([r.to_row() for r in pooled]))
    assert [r.graph_id for r in serial] == ["er-0000", "er-0001", "er-0002"]


@pytest.mark.slow
def test_bound_ordering_on_er_sweep():
    labeled = build_ensemble({"kind": "er", "count": 500, "n": 50, "p_range": [0.0, 1.0]}, seed=2024)
    with worker_map(4) as mapper:
        reports = run_sweep(labeled, 0.1, 1e-4, 0.01, 1e4, mapper=mapper)
    assert len(reports) == 500
    bad = [(r.graph_id, r.R0, r.flags) for r in reports if any(f in COUNTEREXAMPLE_FLAGS for f in r.flags)]
    assert bad == []


@pytest.mark.slow
def test_t_star_calibration_on_er_sweep():
    labeled = build_ensemble({"kind": "er", "count": 200, "n": 50, "p_range": [0.0, 1.0]}, seed=2025)
    r_values = [1e-1, 1e-2, 1e-3, 1e-4]
    with worker_map(4) as mapper:
        rows = pd.DataFrame(run_calibration(labeled, 0.1, r_values, [r * r for r in r_values], 0.01, 1e4, mapper))
    assert rows["graph_id"].nunique() == 200
    assert calibration_failures(rows).empty


@pytest.mark.slow
def test_ba_transition_times_stand_apart_above_r0_two():
    spec = [
        {"kind": "er", "count": 300, "n": 50, "p_range": [0.0, 1.0]},
        {"kind": "ba", "count": 300, "n": 50, "m0_range": [1, 50]},
        {"kind": "ws", "count": 300, "n": 50, "K_range": [1, 24], "beta_range": [0.0, 1.0]},
    ]
    tau = 0.1
    rows = []
    for gid, _, g in build_ensemble(spec, seed=2026):
        R0 = basic_reproduction_number(g, tau)
        if R0 > 2.0:
            rows.append({"graph_id": gid, "R0": R0, "t_bar_decay": measure_t_bar(g, tau, 1e-4)})
    means = mean_log_t_bar_by_family(pd.DataFrame(rows))
    assert set(means.index) == {"er", "ba", "ws"}
    assert means["ba"] > means["er"]
    assert means["ba"] > means["ws"]
