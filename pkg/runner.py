# runner.py
"""
Experiment plumbing: graph specs -> Graph objects, ensemble generation and the
worker pool used by the CLI. Module code elsewhere only ever sees a `mapper`.
"""
import logging
from contextlib import contextmanager
from multiprocessing import Pool
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from dynamics import NumericalError
from graphs import (
    NAMED_KINDS,
    Graph,
    barabasi_albert,
    derive_seed,
    disjoint_union,
    erdos_renyi,
    named_graph,
    watts_strogatz,
)
from temporal import random_er_sequence
from transition import BOUND_KEYS, CALIBRATION_COLUMNS, TransitionReport, calibration_rows, transition_report
from utils.edgelist import read_edgelist

log = logging.getLogger("sis-transition.runner")

GraphSpec = Union[str, Dict[str, Any]]
RANDOM_KINDS = ("er", "ba", "ws")
# one (graph_id, seed, graph) triple per generated graph; seed is None for deterministic graphs
Labeled = Tuple[str, Optional[int], Graph]


# -------------------------
# Normalization
# -------------------------
def normalize_graph_spec(spec: GraphSpec) -> Dict[str, Any]:
    """Bring a graph spec to a common shape. A bare string is an edge-list path."""
    if isinstance(spec, str):
        return {"kind": "edgelist", "path": spec}
    if not isinstance(spec, dict):
        raise ValueError(f"graph spec must be a mapping or an edge-list path, got {type(spec).__name__}")
    if "kind" not in spec:
        if "path" in spec:
            return {"kind": "edgelist", **spec}
        raise ValueError("graph spec needs a 'kind'")
    return dict(spec)


def _require(spec: Dict[str, Any], *keys: str):
    missing = [k for k in keys if k not in spec]
    if missing:
        raise ValueError(f"graph spec of kind {spec['kind']!r} is missing {', '.join(missing)}")


def build_graph(spec: GraphSpec, seed: int = 0) -> Graph:
    """Graph from a spec; random kinds use spec['seed'] when given, else `seed`."""
    spec = normalize_graph_spec(spec)
    kind = spec["kind"]
    s = int(spec.get("seed", seed))
    if kind == "edgelist":
        _require(spec, "path")
        return read_edgelist(spec["path"])
    if kind == "er":
        _require(spec, "n", "p")
        return erdos_renyi(int(spec["n"]), float(spec["p"]), s)
    if kind == "ba":
        _require(spec, "n", "m0", "m")
        return barabasi_albert(int(spec["n"]), int(spec["m0"]), int(spec["m"]), s)
    if kind == "ws":
        _require(spec, "n", "K", "beta_ws")
        return watts_strogatz(int(spec["n"]), int(spec["K"]), float(spec["beta_ws"]), s)
    if kind == "union":
        _require(spec, "parts")
        return disjoint_union(*(build_graph(p, derive_seed(s, i)) for i, p in enumerate(spec["parts"])))
    if kind in NAMED_KINDS:
        _require(spec, "n")
        return named_graph(kind, int(spec["n"]), spec.get("a"), spec.get("b"))
    raise ValueError(f"unknown graph kind {kind!r}")


def build_sequence(spec: Union[List[GraphSpec], Dict[str, Any]], seed: int = 0) -> List[Graph]:
    """Graph sequence from an explicit list or an {"kind": "er_sequence", ...} spec."""
    if isinstance(spec, list):
        if not spec:
            raise ValueError("graph sequence is empty")
        return [build_graph(item, derive_seed(seed, m)) for m, item in enumerate(spec)]
    if isinstance(spec, dict) and spec.get("kind") == "er_sequence":
        for key in ("M", "n", "p_range"):
            if key not in spec:
                raise ValueError(f"er_sequence spec is missing {key}")
        graphs, ps = random_er_sequence(int(spec["M"]), int(spec["n"]), tuple(spec["p_range"]), int(spec.get("seed", seed)))
        log.debug("er_sequence link densities: %s", ", ".join(f"{p:.3f}" for p in ps))
        return graphs
    raise ValueError("graphs must be a list of graph specs or an er_sequence spec")


# -------------------------
# Ensembles
# -------------------------
def _draw_family_member(kind: str, entry: Dict[str, Any], seed: int) -> Graph:
    rng = np.random.default_rng(seed)
    n = int(entry["n"])
    if kind == "er":
        lo, hi = entry.get("p_range", (0.0, 1.0))
        return erdos_renyi(n, float(rng.uniform(lo, hi)), seed)
    if kind == "ba":
        lo, hi = entry.get("m0_range", (2, 10))
        m0 = int(rng.integers(lo, min(hi, n) + 1))
        m = int(entry["m"]) if "m" in entry else int(rng.integers(1, m0 + 1))
        return barabasi_albert(n, m0, min(m, m0), seed)
    lo, hi = entry.get("K_range", (1, 5))
    K = int(rng.integers(lo, min(hi, (n - 1) // 2) + 1))
    b_lo, b_hi = entry.get("beta_range", (0.0, 1.0))
    return watts_strogatz(n, K, float(rng.uniform(b_lo, b_hi)), seed)


def build_ensemble(spec: Union[Dict[str, Any], List[Dict[str, Any]]], seed: int) -> List[Labeled]:
    """Labeled graphs for sweeps and verification.

    Random families ({"kind": "er"|"ba"|"ws", "count", "n", ranges}) yield ids like
    "er-0007"; any other entry is a single graph spec labeled "<kind>-0000" or by its "id".
    """
    entries = spec if isinstance(spec, list) else [spec]
    out: List[Labeled] = []
    for e_idx, entry in enumerate(entries):
        entry = normalize_graph_spec(entry)
        kind = entry["kind"]
        family_seed = derive_seed(seed, e_idx)
        if kind in RANDOM_KINDS and "count" in entry:
            if "n" not in entry:
                raise ValueError(f"ensemble entry {e_idx} ({kind}) is missing n")
            for i in range(int(entry["count"])):
                s = derive_seed(family_seed, i)
                out.append((f"{kind}-{i:04d}", s, _draw_family_member(kind, entry, s)))
        else:
            gid = entry.get("id", f"{kind}-0000")
            s = family_seed if kind in RANDOM_KINDS else None
            out.append((gid, s, build_graph(entry, family_seed)))
    ids = [gid for gid, _, _ in out]
    if len(set(ids)) != len(ids):
        raise ValueError("ensemble graph ids are not unique; set an explicit 'id' on repeated entries")
    log.info("ensemble: %d graphs", len(out))
    return out


# -------------------------
# Worker pool
# -------------------------
@contextmanager
def worker_map(workers: int = 1) -> Iterator:
    """Order-preserving map over independent jobs; a process pool when workers > 1."""
    if workers <= 1:
        yield map
        return
    with Pool(workers) as pool:
        yield pool.imap


# -------------------------
# Sweep jobs
# -------------------------
def sweep_job(job) -> TransitionReport:
    graph_id, seed, g, tau, r, h, t_max, r_star, spot_checks = job
    try:
        return transition_report(g, tau, r, h, t_max, r_star, graph_id, seed, spot_checks)
    except NumericalError as e:
        log.warning("%s: numerical failure: %s", graph_id, e)
        nan = float("nan")
        return TransitionReport(
            graph_id=graph_id, R0=nan, y_infinity=nan, t_bar_decay=nan, t_bar_growth=nan, t_star=nan,
            bounds=dict.fromkeys(BOUND_KEYS, nan), r=r, seed=seed, flags=["numerical_failure"],
        )


def calibration_job(job) -> List[Dict[str, object]]:
    graph_id, g, tau, r_values, r_star_values, h, t_max = job
    try:
        return calibration_rows(g, tau, r_values, r_star_values, h, t_max, graph_id)
    except NumericalError as e:
        log.warning("%s: numerical failure: %s", graph_id, e)
        row = dict.fromkeys(CALIBRATION_COLUMNS, float("nan"))
        row["graph_id"] = graph_id
        return [row]


def run_sweep(
    graphs: Sequence[Labeled],
    tau: float,
    r: float,
    h: float,
    t_max: float,
    r_star: Optional[float] = None,
    spot_checks: int = 0,
    mapper=map,
) -> List[TransitionReport]:
    jobs = [(gid, s, g, tau, r, h, t_max, r_star, spot_checks) for gid, s, g in graphs]
    return list(mapper(sweep_job, jobs))


def run_calibration(
    graphs: Sequence[Labeled],
    tau: float,
    r_values: Sequence[float],
    r_star_values: Sequence[float],
    h: float,
    t_max: float,
    mapper=map,
) -> List[Dict[str, object]]:
    jobs = [(gid, g, tau, list(r_values), list(r_star_values), h, t_max) for gid, _, g in graphs]
    return [row for rows in mapper(calibration_job, jobs) for row in rows]
