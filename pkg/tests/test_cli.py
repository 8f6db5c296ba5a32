import json

import numpy as np
import pandas as pd
import pytest

import conjecture
from cli import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main


def _config(tmp_path, data, name="exp.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def _run(tmp_path, command, data, *extra):
    out = tmp_path / "out"
    code = main([command, "--config", _config(tmp_path, data), "--out", str(out), *extra])
    return code, out


def test_simulate_complete_graph_at_threshold(tmp_path):
    code, out = _run(tmp_path, "simulate", {"graph": {"kind": "complete", "n": 50}, "beta": 1 / 49, "t_end": 10.0})
    assert code == EXIT_OK
    df = pd.read_csv(out / "trajectory.csv")
    assert list(df.columns[:3]) == ["t", "y", "v_0"]
    assert df.shape == (1001, 52)
    assert np.abs(df["y"] - 1 / (1 + df["t"])).max() <= 1e-6
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["kind"] == "simulate"
    assert meta["time_unit"] == "1/delta"
    assert meta["valid"] is True


def test_rates_are_rescaled_to_unit_curing(tmp_path):
    code, out = _run(tmp_path, "simulate", {"graph": {"kind": "star", "n": 10}, "beta": 0.2, "delta": 2.0, "t_end": 1.0})
    assert code == EXIT_OK
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["delta"] == 2.0
    assert meta["tau"] == pytest.approx(0.1)


def test_usage_errors_exit_one(tmp_path):
    assert main(["simulate"]) == EXIT_USAGE
    assert main(["plot", "--config", "x.json"]) == EXIT_USAGE
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == EXIT_USAGE
    code, _ = _run(tmp_path, "simulate", {"kind": "sweep"})
    assert code == EXIT_USAGE
    code, _ = _run(tmp_path, "simulate", {"beta": 0.1})
    assert code == EXIT_USAGE
    code, _ = _run(tmp_path, "simulate", {"graph": {"kind": "er", "n": 10}})
    assert code == EXIT_USAGE


def test_numerical_failure_exits_two(tmp_path):
    data = {"graph": {"kind": "complete", "n": 50}, "beta": 5.0, "h": 1.0, "y0": 0.5, "t_end": 10.0}
    code, _ = _run(tmp_path, "simulate", data)
    assert code == EXIT_NUMERICAL


def test_overrides_and_seed_flags(tmp_path):
    data = {"graph": {"kind": "er", "n": 20, "p": 0.3}, "t_end": 1.0}
    code, out = _run(tmp_path, "simulate", data, "--seed", "42", "--set", "graph.n=12", "--set", "t_end=0.5")
    assert code == EXIT_OK
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["config"]["seed"] == 42
    assert meta["n"] == 12
    assert len(pd.read_csv(out / "trajectory.csv")) == 51


def test_predict_writes_errors(tmp_path):
    data = {
        "graphs": {"kind": "er_sequence", "M": 3, "n": 30, "p_range": [0.3, 0.8]},
        "delta_t": 5.0,
        "r": 1e-3,
        "seed": 4,
    }
    code, out = _run(tmp_path, "predict", data)
    assert code == EXIT_OK
    df = pd.read_csv(out / "prediction.csv")
    assert list(df.columns) == ["t", "y_actual", "y_pred", "abs_err"]
    assert df["y_pred"].iloc[:500].isna().all()
    assert df["y_pred"].iloc[500:].notna().all()
    meta = json.loads((out / "metadata.json").read_text())
    assert len(meta["interval_end_errors"]) == 2
    # the shared boundary sample is reported once, by the later interval
    assert meta["max_error"] >= df["abs_err"].max()


def test_temporal_upper_bound_interval(tmp_path):
    data = {"graphs": [{"kind": "complete", "n": 10}, {"kind": "star", "n": 10}], "delta_t": "upper_bound", "r": 0.1}
    code, out = _run(tmp_path, "temporal", data)
    assert code == EXIT_OK
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["M"] == 2
    assert meta["delta_t"] > 0
    assert (out / "trajectory.csv").exists()


def test_markov_writes_ensemble_and_nimfa(tmp_path):
    data = {"graph": {"kind": "complete", "n": 10}, "beta": 0.05, "t_end": 2.0, "runs": 20, "grid_step": 0.1}
    code, out = _run(tmp_path, "markov", data)
    assert code == EXIT_OK
    ens = pd.read_csv(out / "ensemble.csv")
    assert list(ens.columns) == ["t", "mean_y", "survivors", "runs", "stderr"]
    assert len(ens) == 21
    assert ens["survivors"].iloc[0] == 20
    assert (out / "nimfa.csv").exists()


def test_markov_on_sequence_shares_the_horizon(tmp_path):
    data = {
        "graphs": [{"kind": "complete", "n": 10}, {"kind": "star", "n": 10}],
        "delta_t": 1.0,
        "beta": 0.1,
        "runs": 10,
        "grid_step": 0.1,
    }
    code, out = _run(tmp_path, "markov", data)
    assert code == EXIT_OK
    ens = pd.read_csv(out / "ensemble.csv")
    nimfa = pd.read_csv(out / "nimfa.csv")
    assert ens["t"].iloc[-1] == pytest.approx(2.0)
    assert nimfa["t"].iloc[-1] == pytest.approx(2.0)
    assert json.loads((out / "metadata.json").read_text())["t_end"] == 2.0


def test_sweep_is_identical_across_worker_counts(tmp_path):
    data = {
        "ensemble": {"kind": "er", "count": 3, "n": 20, "p_range": [0.3, 0.5]},
        "beta": 0.2,
        "r": 1e-3,
        "t_max": 300.0,
        "seed": 9,
    }
    outs = []
    for workers in ("1", "2"):
        out = tmp_path / f"w{workers}"
        assert main(["sweep", "--config", _config(tmp_path, data), "--out", str(out), "--workers", workers]) == EXIT_OK
        outs.append(out)
    assert (outs[0] / "sweep.csv").read_bytes() == (outs[1] / "sweep.csv").read_bytes()
    sweep = pd.read_csv(outs[0] / "sweep.csv")
    assert sweep["graph_id"].tolist() == ["er-0000", "er-0001", "er-0002"]
    assert (outs[0] / "r0_bins.csv").exists()
    meta = json.loads((outs[0] / "metadata.json").read_text())
    assert meta["graphs"] == 3


def test_sweep_calibration_mode(tmp_path):
    data = {
        "mode": "calibration",
        "ensemble": {"kind": "er", "count": 2, "n": 20, "p_range": [0.3, 0.5]},
        "beta": 0.2,
        "t_max": 300.0,
        "r_values": [0.1, 0.01],
        "r_star_values": [0.01, 0.0001],
    }
    code, out = _run(tmp_path, "sweep", data)
    assert code == EXIT_OK
    cal = pd.read_csv(out / "calibration.csv")
    assert len(cal) == 8
    assert "calibration_failures" in json.loads((out / "metadata.json").read_text())


def _verify_config():
    return {
        "ensemble": [{"kind": "star", "n": 10}, {"kind": "er", "count": 2, "n": 30, "p_range": [0.3, 0.4]}],
        "tau_multipliers": [0.5, 2.0],
        "t_end": 10.0,
    }


def test_verify_passes(tmp_path):
    code, out = _run(tmp_path, "verify", _verify_config())
    assert code == conjecture.EXIT_ALL_PASS
    rows = pd.read_csv(out / "verify.csv")
    assert (rows["check"] == "decay").sum() == 6
    assert rows["passed"].all()


def test_verify_counterexample_exit_code(tmp_path, monkeypatch):
    monkeypatch.setattr(conjecture, "SLACK", -1.0)
    code, out = _run(tmp_path, "verify", _verify_config())
    assert code == conjecture.EXIT_COUNTEREXAMPLE
    bundles = sorted(p.name for p in (out / "counterexamples").iterdir())
    assert "decay-star-0000-x0.5" in bundles
    assert json.loads((out / "metadata.json").read_text())["all_passed"] is False
