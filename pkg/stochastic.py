# stochastic.py
"""
Exact Markovian SIS on temporal networks (direct Gillespie method) and the
ensemble prevalence conditioned on non-extinction.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Tuple

import numpy as np
from scipy.linalg import expm

from config import DEBUG_RECOUNT
from dynamics import DEFAULT_STEP, NumericalError
from graphs import Graph, derive_seed
from temporal import TemporalNetwork

log = logging.getLogger("sis-transition.stochastic")

RECOUNT_EVERY = 10_000
MAX_ORACLE_NODES = 4


# -------------------------
# States and paths
# -------------------------
def markov_state(n: int, infected: Iterable[int] = ()) -> np.ndarray:
    x = np.zeros(n, dtype=bool)
    x[list(infected)] = True
    return x


def all_infected(n: int) -> np.ndarray:
    return np.ones(n, dtype=bool)


def static_network(g: Graph, t_end: float) -> TemporalNetwork:
    """Single-graph temporal network; the graph stays active past t_end too."""
    return TemporalNetwork((g,), np.array([0.0, max(float(t_end), 1.0)]))


@dataclass
class EventPath:
    x0: np.ndarray
    times: np.ndarray
    nodes: np.ndarray
    # +1 infection, -1 curing
    changes: np.ndarray
    t_start: float
    t_end: float

    @property
    def n(self) -> int:
        return self.x0.shape[0]

    @property
    def final_count(self) -> int:
        return int(self.x0.sum() + self.changes.sum())

    @property
    def extinction_time(self) -> float:
        """Time the path reaches all-healthy, inf if it survives to t_end."""
        if self.final_count > 0:
            return np.inf
        return float(self.times[-1]) if self.times.size else self.t_start

    def counts_on(self, grid) -> np.ndarray:
        grid = np.asarray(grid, dtype=float)
        running = np.concatenate(([int(self.x0.sum())], int(self.x0.sum()) + np.cumsum(self.changes)))
        return running[np.searchsorted(self.times, grid, side="right")]

    def prevalence_on(self, grid) -> np.ndarray:
        return self.counts_on(grid) / self.n


def _si_links(k_inf: np.ndarray, x: np.ndarray) -> int:
    return int(k_inf[~x].sum())


def gillespie_sis(
    tn: TemporalNetwork,
    beta: float,
    delta: float,
    x0,
    t_end: float,
    seed: int,
    debug_recount: Optional[bool] = None,
) -> EventPath:
    """Direct-method simulation: pick the event category by rate, then a member uniformly.

    Infection picks an S-I link uniformly, i.e. a susceptible node with weight equal
    to its number of infected neighbours. At each update time the S-I bookkeeping is
    rebuilt for the new graph and the clock keeps running.
    """
    if beta < 0:
        raise ValueError("infection rate beta must be >= 0")
    if delta <= 0:
        raise ValueError("curing rate delta must be > 0")
    debug_recount = DEBUG_RECOUNT if debug_recount is None else debug_recount

    x = np.array(x0, dtype=bool)
    if x.shape != (tn.n,):
        raise ValueError(f"initial state has shape {x.shape}, network has {tn.n} nodes")
    rng = np.random.default_rng(seed)
    t = float(tn.update_times[0])
    m = 0
    a = tn.graphs[m].adjacency.astype(np.int64)
    k_inf = a @ x
    n_inf = int(x.sum())
    si = _si_links(k_inf, x)

    times, nodes, changes = [], [], []
    while n_inf > 0:
        total = delta * n_inf + beta * si
        t_next = t + rng.exponential(1.0 / total)
        next_update = tn.update_times[m + 1] if m + 1 < tn.M else np.inf
        if t_next >= next_update and next_update < t_end:
            # memoryless: restart the clock on the new graph
            t = float(next_update)
            m += 1
            a = tn.graphs[m].adjacency.astype(np.int64)
            k_inf = a @ x
            si = _si_links(k_inf, x)
            continue
        if t_next > t_end:
            break
        t = t_next

        if rng.random() * total < delta * n_inf:
            infected = np.flatnonzero(x)
            i = int(infected[rng.integers(infected.size)])
            x[i] = False
            n_inf -= 1
            k_inf -= a[i]
            si += int(k_inf[i]) - int(a[i][~x].sum())
            changes.append(-1)
        else:
            weights = np.where(x, 0, k_inf)
            i = int(np.searchsorted(np.cumsum(weights), rng.random() * si, side="right"))
            x[i] = True
            n_inf += 1
            k_inf += a[i]
            si += int(a[i][~x].sum()) - int(k_inf[i])
            changes.append(1)
        times.append(t)
        nodes.append(i)

        if debug_recount and len(times) % RECOUNT_EVERY == 0:
            recount = _si_links(a @ x, x)
            if si != recount:
                raise NumericalError(f"S-I link count drifted: kept {si}, recount {recount} at t={t:.6g}")

    return EventPath(
        x0=np.array(x0, dtype=bool),
        times=np.asarray(times, dtype=float),
        nodes=np.asarray(nodes, dtype=int),
        changes=np.asarray(changes, dtype=int),
        t_start=float(tn.update_times[0]),
        t_end=float(t_end),
    )


# -------------------------
# Ensembles
# -------------------------
@dataclass
class EnsembleResult:
    times: np.ndarray
    mean_prevalence: np.ndarray
    survivors: np.ndarray
    stderr: np.ndarray
    runs: int


def _ensemble_run(job) -> Tuple[np.ndarray, np.ndarray]:
    tn, beta, delta, x0, t_end, seed, grid = job
    path = gillespie_sis(tn, beta, delta, x0, t_end, seed)
    return path.prevalence_on(grid), grid < path.extinction_time


def ensemble_prevalence(
    tn: TemporalNetwork,
    beta: float,
    delta: float,
    x0,
    t_end: float,
    runs: int,
    seed: int,
    grid_step: float = DEFAULT_STEP,
    mapper: Callable = map,
) -> EnsembleResult:
    """Mean prevalence over runs still alive at each grid time.

    A run counts at grid time t only when t is strictly before its extinction time;
    where no run survives the mean and stderr are NaN.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    steps = int(round(t_end / grid_step))
    grid = tn.update_times[0] + np.arange(steps + 1) * grid_step
    jobs = [(tn, beta, delta, x0, t_end, derive_seed(seed, i), grid) for i in range(runs)]

    total = np.zeros(grid.size)
    total_sq = np.zeros(grid.size)
    survivors = np.zeros(grid.size, dtype=int)
    for y, alive in mapper(_ensemble_run, jobs):
        total += np.where(alive, y, 0.0)
        total_sq += np.where(alive, y * y, 0.0)
        survivors += alive

    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(survivors > 0, total / survivors, np.nan)
        var = np.where(survivors > 1, (total_sq - survivors * mean**2) / (survivors - 1), np.nan)
        stderr = np.sqrt(np.clip(var, 0.0, None)) / np.sqrt(survivors)
    extinct = int((survivors == 0).sum())
    if extinct:
        log.info("%d grid times with no surviving run; conditional mean left missing there", extinct)
    return EnsembleResult(times=grid, mean_prevalence=mean, survivors=survivors, stderr=stderr, runs=runs)


# -------------------------
# Brute-force oracle
# -------------------------
def master_equation_prevalence(g: Graph, beta: float, delta: float, x0, times) -> Tuple[np.ndarray, np.ndarray]:
    """Expected and extinction-conditioned prevalence from the 2^N-state chain (N <= 4)."""
    n = g.n
    if n > MAX_ORACLE_NODES:
        raise ValueError(f"master equation oracle limited to {MAX_ORACLE_NODES} nodes, got {n}")
    size = 2**n
    q = np.zeros((size, size))
    for s in range(size):
        infected = [(s >> i) & 1 for i in range(n)]
        for i in range(n):
            if infected[i]:
                q[s, s & ~(1 << i)] += delta
            else:
                pressure = sum(infected[j] for j in range(n) if g.adjacency[i, j])
                if pressure:
                    q[s, s | (1 << i)] += beta * pressure
        q[s, s] = -q[s].sum()

    p0 = np.zeros(size)
    p0[sum(1 << i for i in range(n) if x0[i])] = 1.0
    level = np.array([bin(s).count("1") / n for s in range(size)])
    expected, conditional = [], []
    for t in np.atleast_1d(times):
        p = p0 @ expm(q * float(t))
        expected.append(p @ level)
        alive = 1.0 - p[0]
        conditional.append(p @ level / alive if alive > 0 else np.nan)
    return np.array(expected), np.array(conditional)
