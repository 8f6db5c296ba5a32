# temporal.py
"""
Piecewise NIMFA on graph sequences and the quenched prediction of each interval.

Update times are snapped to the integration grid: boundary t_m maps to step
round((t_m - t_0) / h). The state is carried unchanged across every boundary.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np

from dynamics import (
    DEFAULT_STEP,
    EpidemicParams,
    Trajectory,
    check_state,
    prevalence,
    run_steps,
    steady_state,
    uniform_state,
)
from graphs import Graph, derive_seed, erdos_renyi

log = logging.getLogger("sis-transition.temporal")


# -------------------------
# Temporal network
# -------------------------
@dataclass(frozen=True, eq=False)
class TemporalNetwork:
    graphs: Tuple[Graph, ...]
    update_times: np.ndarray

    def __post_init__(self):
        graphs = tuple(self.graphs)
        times = np.asarray(self.update_times, dtype=float)
        if not graphs:
            raise ValueError("a temporal network needs at least one graph")
        if times.shape != (len(graphs) + 1,):
            raise ValueError(f"{len(graphs)} graphs need {len(graphs) + 1} update times, got {times.size}")
        sizes = {g.n for g in graphs}
        if len(sizes) != 1:
            raise ValueError(f"all graphs must share the node count, got sizes {sorted(sizes)}")
        if np.any(np.diff(times) <= 0):
            raise ValueError("update times must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "graphs", graphs)
        object.__setattr__(self, "update_times", times)

    @property
    def n(self) -> int:
        return self.graphs[0].n

    @property
    def M(self) -> int:
        return len(self.graphs)

    @property
    def intervals(self) -> np.ndarray:
        return np.diff(self.update_times)

    def graph_at(self, t: float) -> Graph:
        """Graph active at time t; the last graph stays active after t_M."""
        m = int(np.searchsorted(self.update_times, t, side="right")) - 1
        return self.graphs[min(max(m, 0), self.M - 1)]

    def boundary_steps(self, h: float) -> Tuple[np.ndarray, float]:
        """Grid indices of t_0..t_M and the largest snapping error."""
        if h <= 0:
            raise ValueError(f"step size must be > 0, got {h}")
        offsets = self.update_times - self.update_times[0]
        k = np.rint(offsets / h).astype(np.int64)
        if np.any(np.diff(k) < 1):
            raise ValueError(f"inter-update times shorter than the step h={h}")
        snap_error = float(np.abs(offsets - k * h).max())
        return k, snap_error


def constant_interval_network(graphs: Sequence[Graph], delta_t: float) -> TemporalNetwork:
    if delta_t <= 0:
        raise ValueError(f"delta_t must be > 0, got {delta_t}")
    return TemporalNetwork(tuple(graphs), np.arange(len(graphs) + 1) * float(delta_t))


def random_er_sequence(M: int, n: int, p_range: Tuple[float, float], seed: int) -> Tuple[List[Graph], List[float]]:
    """ER graphs with link density drawn uniformly from p_range, one derived seed per graph."""
    lo, hi = p_range
    if not 0.0 <= lo <= hi <= 1.0:
        raise ValueError(f"p_range must satisfy 0 <= lo <= hi <= 1, got {p_range}")
    graphs, ps = [], []
    for m in range(M):
        s = derive_seed(seed, m)
        p = float(np.random.default_rng(s).uniform(lo, hi))
        graphs.append(erdos_renyi(n, p, s))
        ps.append(p)
    return graphs, ps


# -------------------------
# Integration
# -------------------------
def integrate_temporal(
    tn: TemporalNetwork,
    params: EpidemicParams,
    v0,
    h: float = DEFAULT_STEP,
    keep_states: bool = True,
) -> Trajectory:
    v = check_state(v0, tn.n)
    k, snap_error = tn.boundary_steps(h)
    if snap_error > 0:
        log.debug("update times snapped to the h=%g grid (max error %.3e)", h, snap_error)

    prevalences = [np.array([prevalence(v)])]
    changes = []
    states = [v[None, :]] if keep_states else None
    worst = 0.0
    for m, g in enumerate(tn.graphs):
        piece = run_steps(g.matrix, params.beta, params.delta, v, int(k[m + 1] - k[m]), h, keep_states=keep_states)
        prevalences.append(piece.prevalence[1:])
        changes.append(piece.step_change)
        if keep_states:
            states.append(piece.states[1:])
        worst = max(worst, piece.max_clamp)
        v = piece.final_state

    total = int(k[-1])
    return Trajectory(
        times=tn.update_times[0] + np.arange(total + 1) * h,
        prevalence=np.concatenate(prevalences),
        step_change=np.concatenate(changes),
        final_state=v,
        states=np.concatenate(states) if keep_states else None,
        max_clamp=worst,
    )


# -------------------------
# Quenched prediction
# -------------------------
@dataclass
class IntervalPrediction:
    index: int
    predicted: Trajectory
    y_actual: np.ndarray
    abs_error: np.ndarray
    die_out: bool = False

    @property
    def times(self) -> np.ndarray:
        return self.predicted.times

    @property
    def end_error(self) -> float:
        return float(self.abs_error[-1])


@dataclass
class PredictionReport:
    actual: Trajectory
    intervals: List[IntervalPrediction] = field(default_factory=list)
    snap_error: float = 0.0

    def max_error(self) -> float:
        """Largest absolute error over every predicted interval (interval 1 is never predicted)."""
        if not self.intervals:
            return 0.0
        return max(float(p.abs_error.max()) for p in self.intervals)

    def interval_end_errors(self) -> np.ndarray:
        return np.array([p.end_error for p in self.intervals])

    @property
    def die_outs(self) -> int:
        return int(sum(bool(p.die_out) for p in self.intervals))


def _predict_interval(job) -> Tuple[Trajectory, bool]:
    prev, g, params, r, steps, h = job
    start = steady_state(prev, params.tau)
    die_out = bool(prevalence(start) < r)
    if die_out:
        start = uniform_state(g.n, r)
    piece = run_steps(g.matrix, params.beta, params.delta, start, steps, h, keep_states=False)
    return piece, die_out


def quenched_predict(
    tn: TemporalNetwork,
    params: EpidemicParams,
    r: float,
    h: float = DEFAULT_STEP,
    v0=None,
    mapper: Callable = map,
) -> PredictionReport:
    """Predict each interval m >= 2 from the steady state of G_{m-1}.

    When y_inf(G_{m-1}) < r the prediction starts from r*u instead. The actual
    process starts from v0 (all infected unless given).
    """
    if tn.M < 2:
        raise ValueError("quenched prediction needs at least two graphs")
    if not 0.0 < r < 1.0:
        raise ValueError(f"accuracy tolerance r must be in (0, 1), got {r}")
    v0 = uniform_state(tn.n) if v0 is None else v0
    actual = integrate_temporal(tn, params, v0, h, keep_states=False)
    k, snap_error = tn.boundary_steps(h)

    jobs = [(tn.graphs[m - 1], tn.graphs[m], params, r, int(k[m + 1] - k[m]), h) for m in range(1, tn.M)]
    report = PredictionReport(actual=actual, snap_error=snap_error)
    for m, (piece, die_out) in zip(range(1, tn.M), mapper(_predict_interval, jobs)):
        window = slice(int(k[m]), int(k[m + 1]) + 1)
        piece.times = actual.times[window]
        y_actual = actual.prevalence[window]
        report.intervals.append(
            IntervalPrediction(
                index=m + 1,
                predicted=piece,
                y_actual=y_actual,
                abs_error=np.abs(piece.prevalence - y_actual),
                die_out=die_out,
            )
        )
        if die_out:
            log.info("interval %d: predecessor steady state below r, starting prediction at r*u", m + 1)
    return report
