# utils/notifier.py
import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd

from utils.csv_io import FLOAT_FORMAT
from utils.edgelist import write_edgelist

log = logging.getLogger("sis-transition.notifier")


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_") or "counterexample"


def write_counterexample_bundle(
    out_dir,
    name: str,
    graph,
    params: Dict[str, Any],
    residuals: Optional[pd.DataFrame] = None,
) -> Path:
    """Directory with edges.txt, params.json and residuals.csv reproducing one failed check."""
    bundle = Path(out_dir) / "counterexamples" / _slug(name)
    bundle.mkdir(parents=True, exist_ok=True)
    write_edgelist(graph, bundle / "edges.txt")
    (bundle / "params.json").write_text(json.dumps(params, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    if residuals is not None:
        residuals.to_csv(bundle / "residuals.csv", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return bundle


def notify_counterexample(bundle: Optional[Path], summary: str):
    if bundle is None:
        log.warning("counterexample (not written): %s", summary)
        return
    log.warning("counterexample written to %s: %s", bundle, summary)
