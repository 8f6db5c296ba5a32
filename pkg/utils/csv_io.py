# utils/csv_io.py
"""CSV and metadata writers. Floats carry 17 significant digits so files round-trip exactly."""
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Sequence

import numpy as np
import pandas as pd

FLOAT_FORMAT = "%.17g"


def _write(df: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def trajectory_frame(traj) -> pd.DataFrame:
    if traj.states is None:
        raise ValueError("trajectory was integrated without keep_states; nodal columns unavailable")
    n = traj.states.shape[1]
    data = np.column_stack([traj.times, traj.prevalence, traj.states])
    return pd.DataFrame(data, columns=["t", "y"] + [f"v_{i}" for i in range(n)])


def write_trajectory_csv(traj, path) -> Path:
    return _write(trajectory_frame(traj), path)


def prediction_frame(report) -> pd.DataFrame:
    actual = report.actual
    y_pred = np.full(actual.times.size, np.nan)
    for p in report.intervals:
        # the shared boundary sample goes to the later interval's prediction
        start = int(np.searchsorted(actual.times, p.times[0]))
        y_pred[start:start + p.times.size] = p.predicted.prevalence
    return pd.DataFrame(
        {
            "t": actual.times,
            "y_actual": actual.prevalence,
            "y_pred": y_pred,
            "abs_err": np.abs(y_pred - actual.prevalence),
        }
    )


def write_prediction_csv(report, path) -> Path:
    return _write(prediction_frame(report), path)


def ensemble_frame(result) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "t": result.times,
            "mean_y": result.mean_prevalence,
            "survivors": result.survivors,
            "runs": np.full(result.times.size, result.runs),
            "stderr": result.stderr,
        }
    )


def write_ensemble_csv(result, path) -> Path:
    return _write(ensemble_frame(result), path)


def write_rows_csv(rows: Iterable[Dict[str, Any]], columns: Sequence[str], path) -> Path:
    return _write(pd.DataFrame(list(rows), columns=list(columns)), path)


def write_metadata(meta: Dict[str, Any], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path
