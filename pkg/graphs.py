# graphs.py
"""
Simple undirected graphs for the NIMFA SIS toolkit.

A Graph is an immutable dense 0/1 adjacency matrix with cached spectral data.
Random generators are deterministic per seed; named topologies come from networkx.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Tuple

import networkx as nx
import numpy as np

log = logging.getLogger("sis-transition.graphs")

# power iteration stopping rules
RAYLEIGH_TOL = 1e-10
RESIDUAL_TOL = 1e-10
MAX_POWER_ITERATIONS = 100_000
START_PERTURBATION = 1e-3

MAX_SEED = 2**64 - 1


# -------------------------
# Domain types
# -------------------------
@dataclass(frozen=True)
class SpectralData:
    lambda1: float
    x1: np.ndarray
    degenerate: bool = False
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class Graph:
    """Symmetric 0/1 adjacency, zero diagonal, nodes 0..n-1."""

    adjacency: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {a.shape}")
        if a.shape[0] < 1:
            raise ValueError("graph needs at least one node")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        if np.any(np.diag(a)):
            raise ValueError("simple graphs have no self-loops")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        a = a.astype(np.uint8, copy=True)
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return np.array_equal(self.adjacency, other.adjacency)

    def __hash__(self):
        return hash((self.n, self.adjacency.tobytes()))

    @property
    def n(self) -> int:
        return int(self.adjacency.shape[0])

    @cached_property
    def matrix(self) -> np.ndarray:
        """Float view of the adjacency for linear algebra."""
        m = self.adjacency.astype(float)
        m.setflags(write=False)
        return m

    @cached_property
    def degrees(self) -> np.ndarray:
        d = self.adjacency.sum(axis=1).astype(int)
        d.setflags(write=False)
        return d

    @property
    def link_count(self) -> int:
        return int(self.degrees.sum() // 2)

    @property
    def mean_degree(self) -> float:
        return float(self.degrees.mean())

    @cached_property
    def spectral(self) -> SpectralData:
        return spectral(self)

    @cached_property
    def is_connected(self) -> bool:
        return self.n == 1 or nx.is_connected(self.to_networkx())

    @property
    def is_regular(self) -> bool:
        return bool(np.all(self.degrees == self.degrees[0]))

    def edges(self) -> List[Tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(i.tolist(), j.tolist()))

    def to_networkx(self) -> nx.Graph:
        G = nx.Graph()
        G.add_nodes_from(range(self.n))
        G.add_edges_from(self.edges())
        return G

    @classmethod
    def from_networkx(cls, G: nx.Graph) -> "Graph":
        nodes = sorted(G.nodes())
        if nodes != list(range(len(nodes))):
            G = nx.convert_node_labels_to_integers(G, ordering="sorted")
            nodes = list(range(len(nodes)))
        a = nx.to_numpy_array(G, nodelist=nodes, weight=None, dtype=np.uint8)
        return cls(a)

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        if n < 1:
            raise ValueError("n must be >= 1")
        a = np.zeros((n, n), dtype=np.uint8)
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"link ({i}, {j}) outside 0..{n - 1}")
            a[i, j] = a[j, i] = 1
        return cls(a)

    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls(np.zeros((n, n), dtype=np.uint8))


# -------------------------
# Seeds
# -------------------------
def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def derive_seed(master: int, index: int) -> int:
    """Per-item seed derived from a master seed and an item index."""
    ss = np.random.SeedSequence(_check_seed(master), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# -------------------------
# Generators
# -------------------------
def erdos_renyi(n: int, p: float, seed: int) -> Graph:
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"link probability must be in [0, 1], got {p}")
    return Graph.from_networkx(nx.gnp_random_graph(n, p, seed=_check_seed(seed)))


def barabasi_albert(n: int, m0: int, m: int, seed: int) -> Graph:
    """Preferential attachment onto a complete starting clique of m0 nodes.

    Each new node links to m distinct existing nodes drawn with probability
    proportional to their degree; a zero-degree pool is sampled uniformly.
    """
    if not 1 <= m <= m0 <= n:
        raise ValueError(f"need 1 <= m <= m0 <= n, got m={m}, m0={m0}, n={n}")
    rng = np.random.default_rng(_check_seed(seed))
    a = np.zeros((n, n), dtype=np.uint8)
    a[:m0, :m0] = 1
    np.fill_diagonal(a, 0)
    degree = a.sum(axis=1).astype(float)

    for new_node in range(m0, n):
        weights = degree[:new_node]
        total = weights.sum()
        p = weights / total if total > 0 else None
        targets = rng.choice(new_node, size=m, replace=False, p=p)
        a[new_node, targets] = a[targets, new_node] = 1
        degree[targets] += 1
        degree[new_node] += m
    return Graph(a)


def watts_strogatz(n: int, K: int, beta_ws: float, seed: int) -> Graph:
    """Ring lattice with K neighbours per side, links rewired with probability beta_ws."""
    if not 1 <= K <= (n - 1) // 2:
        raise ValueError(f"K must be in [1, {(n - 1) // 2}] for n={n}, got {K}")
    if not 0.0 <= beta_ws <= 1.0:
        raise ValueError(f"rewiring probability must be in [0, 1], got {beta_ws}")
    G = nx.watts_strogatz_graph(n, 2 * K, beta_ws, seed=_check_seed(seed))
    return Graph.from_networkx(G)


NAMED_KINDS = ("complete", "complete_bipartite", "star", "path", "cycle")


def named_graph(kind: str, n: int, a: Optional[int] = None, b: Optional[int] = None) -> Graph:
    if n < 1:
        raise ValueError("n must be >= 1")
    if kind == "complete":
        G = nx.complete_graph(n)
    elif kind == "complete_bipartite":
        if a is None and b is None:
            a, b = n // 2, n - n // 2
        elif a is None:
            a = n - b
        elif b is None:
            b = n - a
        if a < 0 or b < 0 or a + b != n:
            raise ValueError(f"bipartite sides must sum to n={n}, got a={a}, b={b}")
        G = nx.complete_bipartite_graph(a, b)
    elif kind == "star":
        G = nx.star_graph(n - 1)
    elif kind == "path":
        G = nx.path_graph(n)
    elif kind == "cycle":
        if n < 3:
            raise ValueError("a cycle needs at least 3 nodes")
        G = nx.cycle_graph(n)
    else:
        raise ValueError(f"unknown named graph {kind!r}; expected one of {NAMED_KINDS}")
    return Graph.from_networkx(G)


def disjoint_union(*graphs: Graph) -> Graph:
    n = sum(g.n for g in graphs)
    a = np.zeros((n, n), dtype=np.uint8)
    offset = 0
    for g in graphs:
        a[offset:offset + g.n, offset:offset + g.n] = g.adjacency
        offset += g.n
    return Graph(a)


# -------------------------
# Structure
# -------------------------
def connected_components(g: Graph) -> List[Tuple[Graph, np.ndarray]]:
    """Components ordered by their smallest node; index map sends local -> global."""
    parts = sorted((sorted(c) for c in nx.connected_components(g.to_networkx())), key=lambda c: c[0])
    out = []
    for nodes in parts:
        idx = np.asarray(nodes, dtype=int)
        out.append((Graph(g.adjacency[np.ix_(idx, idx)]), idx))
    return out


def max_degree(g: Graph) -> int:
    return int(g.degrees.max())


def basic_reproduction_number(g: Graph, tau: float) -> float:
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    return tau * g.spectral.lambda1


# -------------------------
# Spectral
# -------------------------
def _power_iteration(a: np.ndarray) -> Tuple[float, np.ndarray, int]:
    """Largest eigenpair of a connected non-negative symmetric matrix.

    Iterates with A + I so that -lambda1 (bipartite spectra) cannot compete. A + I is
    primitive on a connected graph and the start vector is positive, so the iteration
    needs no restart.
    """
    n = a.shape[0]
    if n == 1:
        return 0.0, np.ones(1), 0
    row_sums = a.sum(axis=1)
    if np.all(row_sums == row_sums[0]):
        # regular: the Perron pair is (degree, u/sqrt(n)) exactly
        return float(row_sums[0]), np.full(n, 1.0 / np.sqrt(n)), 0

    shifted = a + np.eye(n)
    x = np.ones(n)
    x[0] += START_PERTURBATION
    x /= np.linalg.norm(x)
    lam = float(x @ a @ x)

    for it in range(1, MAX_POWER_ITERATIONS + 1):
        y = shifted @ x
        x = y / np.linalg.norm(y)
        ax = a @ x
        lam_new = float(x @ ax)
        converged = abs(lam_new - lam) < RAYLEIGH_TOL and np.linalg.norm(ax - lam_new * x) <= RESIDUAL_TOL
        lam = lam_new
        if converged:
            return lam, x, it

    log.warning("power iteration hit %d iterations (lambda1 ~ %.12g)", MAX_POWER_ITERATIONS, lam)
    return lam, x, MAX_POWER_ITERATIONS


def spectral(g: Graph) -> SpectralData:
    if g.link_count == 0:
        x = np.full(g.n, 1.0 / np.sqrt(g.n))
        x.setflags(write=False)
        return SpectralData(lambda1=0.0, x1=x, degenerate=True)

    best = None
    for sub, idx in connected_components(g):
        if sub.link_count == 0:
            continue
        lam, vec, iterations = _power_iteration(sub.matrix)
        if best is None or lam > best[0]:
            best = (lam, vec, idx, iterations)

    lam, vec, idx, iterations = best
    x = np.zeros(g.n)
    x[idx] = np.abs(vec)
    x /= np.linalg.norm(x)
    x.setflags(write=False)
    return SpectralData(lambda1=lam, x1=x, degenerate=False, iterations=iterations)
