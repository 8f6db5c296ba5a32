# conjecture.py
"""
Numerical checks of the 1/(1+t) decay envelope and of the projection inequalities
behind it. Failed checks are results, not errors: each one leaves a reproducible
bundle on disk.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from dynamics import DEFAULT_STEP, EpidemicParams, integrate, prevalence, steady_state, uniform_state
from graphs import Graph
from utils.notifier import notify_counterexample, write_counterexample_bundle

log = logging.getLogger("sis-transition.conjecture")

SLACK = 1e-9
REGULAR_XI_TOL = 1e-10
DEFAULT_T_END = 100.0

EXIT_ALL_PASS = 0
EXIT_COUNTEREXAMPLE = 3


# -------------------------
# Decay envelope
# -------------------------
@dataclass
class DecayCheckResult:
    graph_id: str
    tau_multiplier: float
    max_excess: float
    argmax_time: float
    passed: bool
    residuals: Optional[pd.DataFrame] = field(default=None, repr=False)


def check_decay_envelope(
    g: Graph,
    tau: float,
    h: float = DEFAULT_STEP,
    t_end: float = DEFAULT_T_END,
    graph_id: str = "g",
) -> DecayCheckResult:
    """max over t of |y(t) - y_inf| - 1/(1+t) for the decay from V(0) = u."""
    y_inf = prevalence(steady_state(g, tau))
    traj = integrate(g, EpidemicParams.from_tau(tau), uniform_state(g.n), t_end, h, keep_states=False)
    excess = np.abs(traj.prevalence - y_inf) - 1.0 / (1.0 + traj.times)
    k = int(np.argmax(excess))
    return DecayCheckResult(
        graph_id=graph_id,
        tau_multiplier=tau * (g.n - 1),
        max_excess=float(excess[k]),
        argmax_time=float(traj.times[k]),
        passed=bool(excess[k] <= SLACK),
        residuals=pd.DataFrame({"t": traj.times, "excess": excess}),
    )


# -------------------------
# Projection on the principal eigenvector
# -------------------------
@dataclass
class ProjectionResiduals:
    graph_id: str
    # max_t c(t) - c(0)/(1+t)
    c_residual: float
    # max_t |xi(t)| - |xi(0)|/(1+t)
    xi_residual: float
    # max_t N y(t) - (c(0)c(t) + |xi(0)||xi(t)|)
    split_residual: float
    # max_t (c(0)c(t) + |xi(0)||xi(t)|) - N/(1+t)
    envelope_residual: float
    xi_max: float
    regular: bool
    passed: bool
    residuals: Optional[pd.DataFrame] = field(default=None, repr=False)


def check_projection_inequalities(
    g: Graph,
    tau: float,
    h: float = DEFAULT_STEP,
    t_end: float = DEFAULT_T_END,
    graph_id: str = "g",
) -> ProjectionResiduals:
    """Split V(t) = c(t) x1 + xi(t) along the principal eigenvector and test the decay of each part."""
    if not g.is_connected:
        raise ValueError("projection checks need a connected graph")
    x1 = g.spectral.x1
    traj = integrate(g, EpidemicParams.from_tau(tau), uniform_state(g.n), t_end, h)
    c = traj.states @ x1
    xi = np.linalg.norm(traj.states - np.outer(c, x1), axis=1)
    decay = 1.0 / (1.0 + traj.times)
    split = c[0] * c + xi[0] * xi

    res = pd.DataFrame(
        {
            "t": traj.times,
            "c": c,
            "xi_norm": xi,
            "c_residual": c - c[0] * decay,
            "xi_residual": xi - xi[0] * decay,
            "split_residual": g.n * traj.prevalence - split,
            "envelope_residual": split - g.n * decay,
        }
    )
    regular = g.is_regular
    out = ProjectionResiduals(
        graph_id=graph_id,
        c_residual=float(res["c_residual"].max()),
        xi_residual=float(res["xi_residual"].max()),
        split_residual=float(res["split_residual"].max()),
        envelope_residual=float(res["envelope_residual"].max()),
        xi_max=float(xi.max()),
        regular=regular,
        passed=False,
        residuals=res,
    )
    # c and |xi| carry per-node error times sqrt(N), the split terms times N
    root_n = np.sqrt(g.n)
    out.passed = (
        max(out.c_residual, out.xi_residual) <= root_n * SLACK
        and max(out.split_residual, out.envelope_residual) <= g.n * SLACK
        and (not regular or out.xi_max <= REGULAR_XI_TOL)
    )
    return out


# -------------------------
# Suite
# -------------------------
@dataclass
class SuiteReport:
    decay: List[DecayCheckResult] = field(default_factory=list)
    projection: List[ProjectionResiduals] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)
    counterexamples: List[Path] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(d.passed for d in self.decay) and all(p.passed for p in self.projection)

    @property
    def exit_code(self) -> int:
        return EXIT_ALL_PASS if self.all_passed else EXIT_COUNTEREXAMPLE

    def summary_rows(self) -> List[dict]:
        rows = [
            {"check": "decay", "graph_id": d.graph_id, "tau_multiplier": d.tau_multiplier,
             "max_residual": d.max_excess, "at_t": d.argmax_time, "passed": d.passed}
            for d in self.decay
        ]
        rows += [
            {"check": "projection", "graph_id": p.graph_id, "tau_multiplier": 1.0,
             "max_residual": max(p.c_residual, p.xi_residual, p.split_residual, p.envelope_residual),
             "at_t": np.nan, "passed": p.passed}
            for p in self.projection
        ]
        return rows


def _suite_job(job):
    check, graph_id, g, multiplier, h, t_end = job
    tau = multiplier / (g.n - 1)
    if check == "decay":
        return check_decay_envelope(g, tau, h, t_end, graph_id)
    return check_projection_inequalities(g, tau, h, t_end, graph_id)


def run_suite(
    graphs: Sequence[Tuple[str, Optional[int], Graph]],
    tau_multipliers: Sequence[float] = (0.5, 1.0, 2.0, 5.0),
    h: float = DEFAULT_STEP,
    t_end: float = DEFAULT_T_END,
    out_dir=None,
    projection_multiplier: float = 1.0,
    mapper: Callable = map,
) -> SuiteReport:
    """Decay-envelope checks for every (graph, tau) and projection checks at one tau.

    tau is given as a multiple of 1/(N-1), the threshold of the complete graph.
    """
    report = SuiteReport()
    seeds = {graph_id: seed for graph_id, seed, _ in graphs}
    by_id = {graph_id: g for graph_id, _, g in graphs}

    jobs = [("decay", gid, g, m, h, t_end) for gid, _, g in graphs if g.n > 1 for m in tau_multipliers]
    for gid, _, g in graphs:
        if g.n > 1 and g.is_connected:
            jobs.append(("projection", gid, g, projection_multiplier, h, t_end))
        else:
            report.skipped.append(gid)
            log.info("%s: disconnected, projection check skipped", gid)

    for job, result in zip(jobs, mapper(_suite_job, jobs)):
        check, gid, _, multiplier = job[:4]
        (report.decay if check == "decay" else report.projection).append(result)
        if result.passed:
            continue
        g = by_id[gid]
        params = {
            "check": check, "graph_id": gid, "seed": seeds[gid], "tau_multiplier": multiplier,
            "tau": multiplier / (g.n - 1), "h": h, "t_end": t_end,
        }
        bundle = None
        if out_dir is not None:
            bundle = write_counterexample_bundle(out_dir, f"{check}-{gid}-x{multiplier:g}", g, params, result.residuals)
            report.counterexamples.append(bundle)
        notify_counterexample(bundle, f"{check} check failed for {gid} at tau multiplier {multiplier:g}")
    return report
