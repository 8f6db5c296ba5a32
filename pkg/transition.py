# transition.py
"""
Upper-transition time T̄(r), derivative convergence time t*(r*), and the analytic
upper and lower bounds on T̄(r).

Times are in units of 1/delta: every measurement runs the rescaled process with
beta = tau and delta = 1.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from dynamics import (
    DEFAULT_STEP,
    LONG_HORIZON,
    SETTLE_TOL,
    ConvergenceError,
    EpidemicParams,
    NumericalError,
    Trajectory,
    check_state,
    integrate,
    prevalence,
    rk4_step,
    steady_state,
    steps_for,
    uniform_state,
)
from graphs import Graph, basic_reproduction_number, connected_components, max_degree

log = logging.getLogger("sis-transition.transition")

# allowed gap between y(t_max) and the fixed-point prevalence
CROSSCHECK_TOL = 1e-6
# relative within-bin spread above which an R0 bin is flagged
BIN_SPREAD_LIMIT = 0.2


class BoundDomainError(ValueError):
    pass


def _check_r(r: float, upper_inclusive: bool = False):
    ok = 0.0 < r <= 1.0 if upper_inclusive else 0.0 < r < 1.0
    if not ok:
        raise ValueError(f"accuracy tolerance r must be in (0, 1{']' if upper_inclusive else ')'}, got {r}")


def _start_state(n: int, r: float, v0_mode: Union[str, float]) -> np.ndarray:
    if v0_mode == "decay":
        return uniform_state(n)
    if v0_mode == "growth":
        return uniform_state(n, r)
    if isinstance(v0_mode, (int, float)):
        return uniform_state(n, float(v0_mode))
    raise ValueError(f"v0_mode must be 'decay', 'growth' or a uniform level, got {v0_mode!r}")


# -------------------------
# Measurements
# -------------------------
def _settle_tol(r_star: float) -> float:
    # per-step changes near the fixed point stay far below h*r_star once settled
    return min(SETTLE_TOL, 1e-3 * r_star)


def t_bar_from_trajectory(traj: Trajectory, y_inf: float, r: float) -> float:
    """Last entry time into the band |y - y_inf| <= r, which must hold up to the final sample."""
    err = np.abs(traj.prevalence - y_inf)
    outside = np.flatnonzero(err > r)
    if outside.size == 0:
        return float(traj.times[0])
    if outside[-1] == err.size - 1:
        raise ConvergenceError(f"prevalence not within r={r:g} of y_inf by t={traj.times[-1]:g}", float(err[-1]))
    return float(traj.times[outside[-1] + 1])


def t_star_from_trajectory(traj: Trajectory, r_star: float) -> float:
    h = traj.step
    hits = np.flatnonzero(traj.step_change <= h * r_star)
    if hits.size == 0:
        computed = traj.step_change[~np.isnan(traj.step_change)]
        where = f"settling at t={traj.settled_at:g}" if traj.settled_at is not None else f"t={traj.times[-1]:g}"
        raise ConvergenceError(
            f"nodal changes never dropped below h*r_star={h * r_star:g} before {where}",
            float(computed[-1]) / h if computed.size else math.inf,
        )
    return float(traj.times[hits[0]])


def measure_t_bar(
    g: Graph,
    tau: float,
    r: float,
    v0_mode: Union[str, float] = "decay",
    h: float = DEFAULT_STEP,
    t_max: float = LONG_HORIZON,
    y_inf: Optional[float] = None,
) -> float:
    """T̄(r) from V(0) = u ('decay'), r*u ('growth') or any uniform level."""
    _check_r(r)
    v_inf = steady_state(g, tau)
    if y_inf is None:
        y_inf = prevalence(v_inf)
    traj = integrate(
        g, EpidemicParams.from_tau(tau), _start_state(g.n, r, v0_mode), t_max, h, keep_states=False, settle_to=v_inf
    )
    gap = abs(traj.prevalence[-1] - y_inf)
    if gap > CROSSCHECK_TOL:
        log.warning("y(t_max) differs from the fixed-point prevalence by %.3e", gap)
    return t_bar_from_trajectory(traj, y_inf, r)


def derivative_convergence_time(
    g: Graph,
    tau: float,
    r_star: float,
    h: float = DEFAULT_STEP,
    v0=None,
    t_max: float = LONG_HORIZON,
) -> float:
    """First grid time t with |v_i(t+h) - v_i(t)| <= h*r_star for every node."""
    if r_star <= 0:
        raise ValueError(f"r_star must be > 0, got {r_star}")
    v = check_state(uniform_state(g.n) if v0 is None else v0, g.n)
    a = g.matrix
    threshold = h * r_star
    change = math.inf
    for k in range(steps_for(t_max, h)):
        w, _ = rk4_step(a, tau, 1.0, v, h)
        change = float(np.abs(w - v).max())
        if change <= threshold:
            return k * h
        v = w
    raise ConvergenceError(f"derivative convergence not reached by t_max={t_max:g}", change / h)


# -------------------------
# Upper bounds
# -------------------------
def bound_decay_conjecture(r: float) -> float:
    _check_r(r, upper_inclusive=True)
    return (1.0 - r) / r


def _exponential_decay_time(R0: float, r: float) -> float:
    if R0 >= 1.0:
        raise BoundDomainError(f"exponential decay bound needs R0 < 1, got {R0:.6g}")
    return math.log(1.0 / r) / (1.0 - R0)


def bound_decay_exponential(g: Graph, tau: float, r: float) -> float:
    _check_r(r, upper_inclusive=True)
    return _exponential_decay_time(basic_reproduction_number(g, tau), r)


def bound_intersection(r: float) -> float:
    """R0 value where the exponential and conjectured decay bounds meet."""
    _check_r(r)
    return 1.0 - (r / (1.0 - r)) * math.log(1.0 / r)


def _growth_time(R0: float, tau: float, d_max: int, r: float) -> float:
    if R0 <= 1.0:
        raise BoundDomainError(f"growth bound needs R0 > 1, got {R0:.6g}")
    arg = tau * d_max / (r * (tau * d_max + 1.0)) - 1.0
    # v_inf,1 <= 2r: already within r of the steady state
    if arg <= 1.0:
        return 0.0
    return 2.0 / (R0 - 1.0) * math.log(arg)


def bound_growth(g: Graph, tau: float, r: float) -> float:
    _check_r(r)
    if not g.is_connected:
        raise BoundDomainError("growth bound needs a connected graph; use combined_upper_bound")
    return _growth_time(basic_reproduction_number(g, tau), tau, max_degree(g), r)


def bound_growth_steady_state(g: Graph, tau: float, r: float, v_inf=None) -> float:
    """Growth bound before v_inf,1 is replaced by its degree-based upper bound."""
    _check_r(r)
    R0 = basic_reproduction_number(g, tau)
    if R0 <= 1.0:
        raise BoundDomainError(f"growth bound needs R0 > 1, got {R0:.6g}")
    v1 = float(np.max(steady_state(g, tau) if v_inf is None else v_inf))
    if v1 <= 2.0 * r:
        return 0.0
    return 2.0 / (R0 - 1.0) * math.log((v1 - r) / r)


def _connected_bound(sub: Graph, tau: float, r: float, r_cross: float) -> float:
    R0 = tau * sub.spectral.lambda1
    if R0 <= r_cross:
        return _exponential_decay_time(R0, r)
    if R0 <= 1.0:
        return bound_decay_conjecture(r)
    return max(bound_decay_conjecture(r), _growth_time(R0, tau, max_degree(sub), r))


def combined_upper_bound(g: Graph, tau: float, r: float) -> float:
    """T̂(r, G): the connected-graph bound maximised over components."""
    _check_r(r)
    r_cross = bound_intersection(r)
    return max(_connected_bound(sub, tau, r, r_cross) for sub, _ in connected_components(g))


def combined_upper_bound_sequence(graphs: Iterable[Graph], tau: float, r: float) -> float:
    return max(combined_upper_bound(g, tau, r) for g in graphs)


# -------------------------
# Lower bounds
# -------------------------
def lower_bound_growth(g: Graph, tau: float, r: float, y_inf: Optional[float] = None) -> float:
    _check_r(r)
    R0 = basic_reproduction_number(g, tau)
    if R0 <= 1.0:
        raise BoundDomainError(f"growth lower bound needs R0 > 1, got {R0:.6g}")
    y_inf = prevalence(steady_state(g, tau)) if y_inf is None else y_inf
    if y_inf <= 2.0 * r:
        return 0.0
    return math.log((y_inf - r) / r) / (R0 - 1.0)


def lower_bound_decay(g: Graph, tau: float, r: float, y_inf: Optional[float] = None) -> float:
    _check_r(r)
    y_inf = prevalence(steady_state(g, tau)) if y_inf is None else y_inf
    return max(0.0, math.log(1.0 / (y_inf + r)))


def lower_bound_decay_sequence(graphs: Iterable[Graph], tau: float, r: float) -> float:
    return max(lower_bound_decay(g, tau, r) for g in graphs)


# -------------------------
# Slow start from near zero
# -------------------------
def lemma1_epsilon(g: Graph, tau: float, r: float, T: float, y_inf: Optional[float] = None) -> float:
    """Uniform start level eps keeping |y(t) - y_inf| > r for all t <= T."""
    if basic_reproduction_number(g, tau) <= 1.0:
        raise BoundDomainError("slow-start construction needs tau above the epidemic threshold")
    y_inf = prevalence(steady_state(g, tau)) if y_inf is None else y_inf
    if r >= y_inf:
        raise BoundDomainError(f"r={r:g} must be below y_inf={y_inf:.6g}")
    return (y_inf - r) / math.exp((tau * g.n - 1.0) * T)


@dataclass
class SlowStartCheck:
    holds: bool
    epsilon: float
    min_gap: float
    first_violation: Optional[float] = None


def verify_slow_start(g: Graph, tau: float, r: float, T: float, h: float = DEFAULT_STEP) -> SlowStartCheck:
    y_inf = prevalence(steady_state(g, tau))
    eps = lemma1_epsilon(g, tau, r, T, y_inf)
    traj = integrate(g, EpidemicParams.from_tau(tau), uniform_state(g.n, eps), T, h, keep_states=False)
    gap = np.abs(traj.prevalence - y_inf)
    bad = np.flatnonzero(gap <= r)
    return SlowStartCheck(
        holds=bad.size == 0,
        epsilon=eps,
        min_gap=float(gap.min()),
        first_violation=float(traj.times[bad[0]]) if bad.size else None,
    )


# -------------------------
# Per-graph report
# -------------------------
BOUND_KEYS = ("U_D_conjecture", "U_D_exponential", "U_G_growth", "T_hat_combined", "L_G", "L_D")
SWEEP_COLUMNS = (
    "graph_id", "seed", "R0", "y_inf", "t_bar_decay", "t_bar_growth", "t_star",
    "U_D", "U_G", "T_hat", "L_G", "L_D", "flags",
)


@dataclass
class TransitionReport:
    graph_id: str
    R0: float
    y_infinity: float
    t_bar_decay: float
    t_bar_growth: float
    t_star: float
    bounds: Dict[str, float]
    r: float
    seed: Optional[int] = None
    flags: List[str] = field(default_factory=list)

    @property
    def t_bar(self) -> float:
        return float(np.nanmax([self.t_bar_decay, self.t_bar_growth]))

    @property
    def decay_upper(self) -> float:
        """U_D as plotted: exponential bound below the intersection, (1-r)/r above."""
        if self.R0 <= bound_intersection(self.r):
            return self.bounds["U_D_exponential"]
        return self.bounds["U_D_conjecture"]

    def to_row(self) -> Dict[str, object]:
        return {
            "graph_id": self.graph_id,
            "seed": "" if self.seed is None else self.seed,
            "R0": self.R0,
            "y_inf": self.y_infinity,
            "t_bar_decay": self.t_bar_decay,
            "t_bar_growth": self.t_bar_growth,
            "t_star": self.t_star,
            "U_D": self.decay_upper,
            "U_G": self.bounds["U_G_growth"],
            "T_hat": self.bounds["T_hat_combined"],
            "L_G": self.bounds["L_G"],
            "L_D": self.bounds["L_D"],
            "flags": ";".join(self.flags),
        }


def _safe(fn, *args) -> float:
    try:
        return float(fn(*args))
    except BoundDomainError:
        return math.nan


def ordering_violations(report: TransitionReport, slack: float = DEFAULT_STEP) -> List[str]:
    """Bound-ordering checks; decays slower than (1-r)/r are named by regime."""
    b, out = report.bounds, []
    if report.t_bar_decay < b["L_D"] - slack:
        out.append("L_D_violation")
    if report.R0 > 1.0 and not math.isnan(b["L_G"]) and report.t_bar_growth < b["L_G"] - slack:
        out.append("L_G_violation")
    if report.t_bar > b["T_hat_combined"] + slack:
        out.append("T_hat_violation")
    if report.t_bar_decay > b["U_D_conjecture"] + slack:
        out.append("supercritical_decay_violation" if report.R0 > 1.0 else "subcritical_decay_violation")
    return out


def mixed_start_spot_check(
    g: Graph,
    tau: float,
    r: float,
    t_bar: float,
    y_inf: float,
    starts: int,
    seed: int,
    h: float = DEFAULT_STEP,
    t_max: float = LONG_HORIZON,
    v_inf: Optional[np.ndarray] = None,
) -> int:
    """Count random V(0) in [r,1]^N whose T̄ exceeds the extremal-start T̄."""
    rng = np.random.default_rng(seed)
    params = EpidemicParams.from_tau(tau)
    worse = 0
    for _ in range(starts):
        v0 = rng.uniform(r, 1.0, g.n)
        traj = integrate(g, params, v0, t_max, h, keep_states=False, settle_to=v_inf)
        try:
            t = t_bar_from_trajectory(traj, y_inf, r)
        except ConvergenceError:
            t = math.inf
        if t > t_bar + h:
            worse += 1
    if worse:
        log.warning("%d of %d mixed starts exceeded T̄=%.4g (extremal-start assumption)", worse, starts, t_bar)
    return worse


def transition_report(
    g: Graph,
    tau: float,
    r: float,
    h: float = DEFAULT_STEP,
    t_max: float = LONG_HORIZON,
    r_star: Optional[float] = None,
    graph_id: str = "g",
    seed: Optional[int] = None,
    spot_checks: int = 0,
) -> TransitionReport:
    r_star = r * r if r_star is None else r_star
    flags: List[str] = []
    R0 = basic_reproduction_number(g, tau)
    v_inf = steady_state(g, tau)
    y_inf = prevalence(v_inf)
    params = EpidemicParams.from_tau(tau)
    settle = {"settle_to": v_inf, "settle_tol": _settle_tol(r_star)}

    t_bar_decay = t_star = math.nan
    try:
        decay = integrate(g, params, uniform_state(g.n), t_max, h, keep_states=False, **settle)
        if abs(decay.prevalence[-1] - y_inf) > CROSSCHECK_TOL:
            flags.append("y_inf_crosscheck")
        t_bar_decay = t_bar_from_trajectory(decay, y_inf, r)
        t_star = t_star_from_trajectory(decay, r_star)
    except NumericalError as e:
        log.warning("%s: decay measurement failed: %s", graph_id, e)
        flags.append("decay_not_converged")

    t_bar_growth = math.nan
    if r >= y_inf:
        t_bar_growth = 0.0
        flags.append("growth_degenerate")
    else:
        try:
            growth = integrate(g, params, uniform_state(g.n, r), t_max, h, keep_states=False, **settle)
            t_bar_growth = t_bar_from_trajectory(growth, y_inf, r)
        except NumericalError as e:
            log.warning("%s: growth measurement failed: %s", graph_id, e)
            flags.append("growth_not_converged")

    bounds = {
        "U_D_conjecture": bound_decay_conjecture(r),
        "U_D_exponential": _safe(bound_decay_exponential, g, tau, r),
        "U_G_growth": _safe(bound_growth, g, tau, r),
        "T_hat_combined": combined_upper_bound(g, tau, r),
        "L_G": _safe(lower_bound_growth, g, tau, r, y_inf),
        "L_D": lower_bound_decay(g, tau, r, y_inf),
    }
    report = TransitionReport(
        graph_id=graph_id, R0=R0, y_infinity=y_inf, t_bar_decay=t_bar_decay, t_bar_growth=t_bar_growth,
        t_star=t_star, bounds=bounds, r=r, seed=seed, flags=flags,
    )
    if not math.isnan(report.t_bar):
        violations = ordering_violations(report)
        if violations:
            log.warning("%s (R0=%.4f): %s", graph_id, R0, ", ".join(violations))
        flags.extend(violations)
        if spot_checks and mixed_start_spot_check(
            g, tau, r, report.t_bar, y_inf, spot_checks, seed or 0, h, t_max, v_inf
        ):
            flags.append("mixed_start_violation")
    return report


# -------------------------
# Calibration of t* against T̄
# -------------------------
CALIBRATION_COLUMNS = ("graph_id", "R0", "r", "t_bar", "r_star", "t_star")


def calibration_rows(
    g: Graph,
    tau: float,
    r_values: Sequence[float],
    r_star_values: Sequence[float],
    h: float = DEFAULT_STEP,
    t_max: float = LONG_HORIZON,
    graph_id: str = "g",
) -> List[Dict[str, object]]:
    """T̄(r) and t*(r*) from a single decay run, one row per (r, r*) pair."""
    v_inf = steady_state(g, tau)
    y_inf = prevalence(v_inf)
    traj = integrate(
        g, EpidemicParams.from_tau(tau), uniform_state(g.n), t_max, h, keep_states=False,
        settle_to=v_inf, settle_tol=_settle_tol(min(r_star_values, default=1.0)),
    )
    R0 = basic_reproduction_number(g, tau)

    def attempt(fn, *args):
        try:
            return fn(*args)
        except ConvergenceError:
            return math.nan

    t_bars = {r: attempt(t_bar_from_trajectory, traj, y_inf, r) for r in r_values}
    t_stars = {s: attempt(t_star_from_trajectory, traj, s) for s in r_star_values}
    return [
        {"graph_id": graph_id, "R0": R0, "r": r, "t_bar": t_bars[r], "r_star": s, "t_star": t_stars[s]}
        for r in r_values
        for s in r_star_values
    ]


def calibration_failures(rows: pd.DataFrame) -> pd.DataFrame:
    """Rows where t*(r^2) falls below T̄(r)."""
    paired = rows[np.isclose(rows["r_star"], rows["r"] ** 2, rtol=1e-9, atol=0.0)]
    return paired[paired["t_star"] < paired["t_bar"]]


# -------------------------
# Sweep summaries
# -------------------------
def r0_bin_spread(r0, t_bar, width: float = 0.05) -> pd.DataFrame:
    """Per-R0-bin range of T̄, flagged when the range exceeds 20% of the bin mean."""
    df = pd.DataFrame({"R0": np.asarray(r0, dtype=float), "t_bar": np.asarray(t_bar, dtype=float)}).dropna()
    df["bin"] = np.floor(df["R0"] / width).astype(int)
    out = df.groupby("bin")["t_bar"].agg(count="count", mean="mean", low="min", high="max").reset_index()
    out["R0_low"] = out["bin"] * width
    out["range"] = out["high"] - out["low"]
    out["flagged"] = out["range"] > BIN_SPREAD_LIMIT * out["mean"]
    return out[["R0_low", "count", "mean", "range", "flagged"]]


def threshold_asymptote_check(r0, t_bar, window: float = 0.05) -> Optional[bool]:
    """T̄ near R0 = 1 exceeds T̄ near R0 = 0.5 and near R0 = 2; None without samples."""
    r0 = np.asarray(r0, dtype=float)
    t_bar = np.asarray(t_bar, dtype=float)

    def near(centre):
        vals = t_bar[(np.abs(r0 - centre) <= window) & ~np.isnan(t_bar)]
        return vals.max() if vals.size else None

    peak, low, high = near(1.0), near(0.5), near(2.0)
    if peak is None or (low is None and high is None):
        return None
    return all(peak > other for other in (low, high) if other is not None)


def family_of(graph_id: str) -> str:
    return graph_id.split("-", 1)[0]


def mean_log_t_bar_by_family(rows: pd.DataFrame, r0_min: float = 2.0, column: str = "t_bar_decay") -> pd.Series:
    """Mean log T̄ per graph family over graphs with R0 > r0_min."""
    sel = rows[(rows["R0"] > r0_min) & (rows[column] > 0)]
    return np.log(sel[column]).groupby(sel["graph_id"].map(family_of)).mean()
