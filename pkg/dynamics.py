# dynamics.py
"""
NIMFA SIS on a static graph: vector field, fixed-step RK4 integration, prevalence
and the endemic steady state.

All rates may be given in absolute units; `rescale` maps them onto delta = 1 so
that times are measured in units of 1/delta.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, validator

from graphs import Graph, basic_reproduction_number, connected_components

log = logging.getLogger("sis-transition.dynamics")

DEFAULT_STEP = 0.01
LONG_HORIZON = 1e4
STEADY_STATE_TOL = 1e-12
STEADY_STATE_MAX_ITER = 1_000_000
# a measurement run stops stepping once |dV/dt| < SETTLE_TOL within SETTLE_DISTANCE of the fixed point
SETTLE_TOL = 1e-12
SETTLE_DISTANCE = 1e-9
# clamp magnitudes: below VALID_CLAMP the run is clean, above ABORT_CLAMP it is rejected
VALID_CLAMP = 1e-12
ABORT_CLAMP = 1e-9


class NumericalError(RuntimeError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


# -------------------------
# Parameters and states
# -------------------------
class EpidemicParams(BaseModel):
    beta: float
    delta: float = 1.0

    class Config:
        frozen = True

    @validator("beta")
    def _beta_non_negative(cls, v):
        if v < 0:
            raise ValueError("infection rate beta must be >= 0")
        return v

    @validator("delta")
    def _delta_positive(cls, v):
        if v <= 0:
            raise ValueError("curing rate delta must be > 0")
        return v

    @property
    def tau(self) -> float:
        return self.beta / self.delta

    @classmethod
    def from_tau(cls, tau: float) -> "EpidemicParams":
        return cls(beta=tau, delta=1.0)


def rescale(params: EpidemicParams) -> Tuple[EpidemicParams, float]:
    """Rates with delta = 1 plus the time scale factor delta."""
    if params.delta <= 0:
        raise ValueError("curing rate delta must be > 0")
    return EpidemicParams(beta=params.tau, delta=1.0), params.delta


def uniform_state(n: int, level: float = 1.0) -> np.ndarray:
    if not 0.0 <= level <= 1.0:
        raise ValueError(f"uniform level must be in [0, 1], got {level}")
    return np.full(n, float(level))


def check_state(v, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"state has shape {v.shape}, graph has {n} nodes")
    if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
        raise ValueError("state entries must be probabilities in [0, 1]")
    return v


def prevalence(v) -> float:
    return float(np.mean(v))


@dataclass
class Trajectory:
    times: np.ndarray
    prevalence: np.ndarray
    # max_i |v_i(t_{k+1}) - v_i(t_k)|, one entry per step
    step_change: np.ndarray
    final_state: np.ndarray
    states: Optional[np.ndarray] = None
    max_clamp: float = 0.0
    # time at which stepping stopped on the fixed point, if it did
    settled_at: Optional[float] = None

    @property
    def valid(self) -> bool:
        return bool(self.max_clamp < VALID_CLAMP)

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def __len__(self):
        return len(self.times)


# -------------------------
# Vector field and stepping
# -------------------------
def _rate(a: np.ndarray, beta: float, delta: float, v: np.ndarray) -> np.ndarray:
    return -delta * v + beta * (1.0 - v) * (a @ v)


def nimfa_derivative(g: Graph, params: EpidemicParams, v) -> np.ndarray:
    v = check_state(v, g.n)
    return _rate(g.matrix, params.beta, params.delta, v)


def rk4_step(a: np.ndarray, beta: float, delta: float, v: np.ndarray, h: float) -> Tuple[np.ndarray, float]:
    """One classic RK4 step clamped to [0,1]; returns the new state and the clamp magnitude."""
    k1 = _rate(a, beta, delta, v)
    k2 = _rate(a, beta, delta, v + 0.5 * h * k1)
    k3 = _rate(a, beta, delta, v + 0.5 * h * k2)
    k4 = _rate(a, beta, delta, v + h * k3)
    w = v + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    if not np.all(np.isfinite(w)):
        raise NumericalError("non-finite state produced by integration step")
    clamp = max(float(w.max()) - 1.0, -float(w.min()), 0.0)
    if clamp > 0.0:
        w = np.clip(w, 0.0, 1.0)
    return w, clamp


def steps_for(t_end: float, h: float) -> int:
    if h <= 0:
        raise ValueError(f"step size must be > 0, got {h}")
    if t_end < 0:
        raise ValueError(f"t_end must be >= 0, got {t_end}")
    return int(round(t_end / h))


def run_steps(
    a: np.ndarray,
    beta: float,
    delta: float,
    v0: np.ndarray,
    steps: int,
    h: float,
    t0: float = 0.0,
    keep_states: bool = True,
    settle_to: Optional[np.ndarray] = None,
    settle_tol: float = SETTLE_TOL,
) -> Trajectory:
    """Integrate `steps` RK4 steps from v0 on a fixed adjacency matrix.

    With `settle_to`, stepping stops once every nodal change is below h*settle_tol and the
    state is within SETTLE_DISTANCE of settle_to; the remaining samples hold the settled
    prevalence and their step changes are NaN.
    """
    n = v0.shape[0]
    y = np.empty(steps + 1)
    change = np.empty(steps)
    states = np.empty((steps + 1, n)) if keep_states else None

    v = v0.copy()
    y[0] = v.sum() / n
    if keep_states:
        states[0] = v
    worst = 0.0
    settled = None
    for k in range(steps):
        w, clamp = rk4_step(a, beta, delta, v, h)
        if clamp > worst:
            worst = clamp
            if worst > ABORT_CLAMP:
                raise NumericalError(f"state left [0,1] by {worst:.3e} at t={t0 + (k + 1) * h:.6g}")
        change[k] = np.abs(w - v).max()
        y[k + 1] = w.sum() / n
        if keep_states:
            states[k + 1] = w
        v = w
        if settle_to is not None and change[k] < h * settle_tol and np.abs(w - settle_to).max() < SETTLE_DISTANCE:
            settled = k + 1
            break

    if settled is not None:
        y[settled + 1:] = y[settled]
        change[settled:] = np.nan
        if keep_states:
            states[settled + 1:] = v
    times = t0 + np.arange(steps + 1) * h
    return Trajectory(
        times=times, prevalence=y, step_change=change, final_state=v, states=states, max_clamp=worst,
        settled_at=None if settled is None else float(times[settled]),
    )


def integrate(
    g: Graph,
    params: EpidemicParams,
    v0,
    t_end: float,
    h: float = DEFAULT_STEP,
    keep_states: bool = True,
    settle_to=None,
    settle_tol: float = SETTLE_TOL,
) -> Trajectory:
    """Fixed-step RK4 on [0, t_end]; t_end is snapped to the nearest multiple of h.

    Pass the fixed point as `settle_to` to stop stepping once the state sits on it.
    """
    v0 = check_state(v0, g.n)
    steps = steps_for(t_end, h)
    target = None if settle_to is None else check_state(settle_to, g.n)
    traj = run_steps(
        g.matrix, params.beta, params.delta, v0, steps, h, keep_states=keep_states, settle_to=target, settle_tol=settle_tol
    )
    if not traj.valid:
        log.debug("clamp magnitude %.3e on a %d-node run", traj.max_clamp, g.n)
    if traj.settled_at is not None:
        log.debug("settled on the fixed point at t=%.6g of %.6g", traj.settled_at, traj.times[-1])
    return traj


# -------------------------
# Steady state
# -------------------------
def _fixed_point(a: np.ndarray, tau: float, tol: float, max_iter: int) -> np.ndarray:
    v = np.ones(a.shape[0])
    residual = np.inf
    for _ in range(max_iter):
        s = tau * (a @ v)
        w = s / (1.0 + s)
        residual = float(np.abs(w - v).max())
        v = w
        if residual < tol:
            return v
    raise ConvergenceError(f"steady state fixed point did not converge in {max_iter} iterations", residual)


def steady_state(
    g: Graph,
    tau: float,
    mode: str = "fixed_point",
    tol: float = STEADY_STATE_TOL,
    h: float = DEFAULT_STEP,
    max_iter: int = STEADY_STATE_MAX_ITER,
) -> np.ndarray:
    """Endemic fixed point V_inf, or the zero vector when R0 <= 1."""
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    if basic_reproduction_number(g, tau) <= 1.0:
        return np.zeros(g.n)

    if mode == "long_integration":
        traj = integrate(g, EpidemicParams.from_tau(tau), uniform_state(g.n), LONG_HORIZON, h, keep_states=False)
        return traj.final_state
    if mode != "fixed_point":
        raise ValueError(f"unknown steady-state mode {mode!r}")

    # components are independent; subcritical ones sit exactly at zero
    v = np.zeros(g.n)
    for sub, idx in connected_components(g):
        if tau * sub.spectral.lambda1 > 1.0:
            v[idx] = _fixed_point(sub.matrix, tau, tol, max_iter)
    return v


def steady_prevalence(g: Graph, tau: float, **kwargs) -> float:
    return prevalence(steady_state(g, tau, **kwargs))


# -------------------------
# Regular-graph closed forms
# -------------------------
def regular_threshold_prevalence(t, y0: float = 1.0):
    """Prevalence on a k-regular graph at tau = 1/k from a uniform start y0."""
    return 1.0 / (1.0 / y0 + np.asarray(t, dtype=float))


def regular_steady_prevalence(k: int, tau: float) -> float:
    if k == 0 or tau * k <= 1.0:
        return 0.0
    return 1.0 - 1.0 / (tau * k)


# -------------------------
# Monotone coupling
# -------------------------
@dataclass
class CouplingWitness:
    holds: bool
    time: Optional[float] = None
    node: Optional[int] = None
    max_violation: float = 0.0


def monotone_coupling_check(
    g: Graph,
    params: EpidemicParams,
    v0_low,
    v0_high,
    t_end: float,
    h: float = DEFAULT_STEP,
    tol: float = 1e-9,
) -> CouplingWitness:
    """Integrate both starts and report the first (t, i) where the ordering breaks."""
    low = check_state(v0_low, g.n)
    high = check_state(v0_high, g.n)
    if np.any(low > high):
        raise ValueError("v0_low must be <= v0_high entrywise")
    a = integrate(g, params, low, t_end, h)
    b = integrate(g, params, high, t_end, h)
    gap = a.states - b.states
    worst = float(gap.max())
    bad = np.argwhere(gap > tol)
    if bad.size == 0:
        return CouplingWitness(holds=True, max_violation=max(worst, 0.0))
    k, i = bad[0]
    return CouplingWitness(holds=False, time=float(a.times[k]), node=int(i), max_violation=worst)
