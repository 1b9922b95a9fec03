"""Classical similarity-score link predictors.

Neighbor/path/walk heuristics over the observed (message) graph:
common neighbors, Jaccard, Adamic-Adar, resource allocation, preferential
attachment, truncated Katz, and iterative SimRank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graphs import EdgeSplit, Graph
from .metrics import Metrics, evaluate_scores

KINDS = ("cn", "jaccard", "aa", "ra", "pa", "katz", "simrank")

SIMRANK_MAX_NODES = 2000       # full pair table is O(N^2) memory
KATZ_MAX_NNZ = 50_000_000      # cap fill-in of iterated sparse powers


@dataclass(frozen=True)
class HeuristicMethod:
    kind: str
    beta: float | None = None   # katz damping; default min(0.005, 0.5/spectral radius)
    max_len: int = 10           # katz series truncation
    c: float = 0.8              # simrank decay
    iters: int = 5              # simrank fixed-point iterations

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown heuristic {self.kind!r}, expected one of {KINDS}")
        if self.beta is not None and self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if not (0.0 < self.c < 1.0):
            raise ValueError("simrank decay c must lie in (0, 1)")
        if self.iters < 1:
            raise ValueError("simrank needs at least one iteration")


def estimate_spectral_radius(graph: Graph, iterations: int = 100) -> float:
    """Power iteration on the adjacency matrix (deterministic all-ones start)."""
    if graph.num_edges == 0:
        return 0.0
    a = _sparse_adjacency(graph)
    x = np.ones(graph.num_nodes) / math.sqrt(graph.num_nodes)
    rho = 0.0
    for _ in range(iterations):
        y = a @ x
        norm = np.linalg.norm(y)
        if norm == 0:
            return 0.0
        rho = norm
        x = y / norm
    return float(rho)


def _sparse_adjacency(graph: Graph) -> sp.csr_matrix:
    if graph.num_edges == 0:
        return sp.csr_matrix((graph.num_nodes, graph.num_nodes))
    rows = [u for u, v in graph.edges] + [v for u, v in graph.edges]
    cols = [v for u, v in graph.edges] + [u for u, v in graph.edges]
    data = np.ones(len(rows))
    return sp.csr_matrix((data, (rows, cols)),
                         shape=(graph.num_nodes, graph.num_nodes))


def katz_score_matrix(graph: Graph, beta: float, max_len: int) -> sp.csr_matrix:
    """Truncated Katz series: sum over l = 1..max_len of beta^l A^l."""
    a = _sparse_adjacency(graph).astype(np.float64)
    power = a.copy()
    score = beta * a
    for length in range(2, max_len + 1):
        power = power @ a
        if power.nnz > KATZ_MAX_NNZ:
            raise MemoryError("Katz power fill-in exceeds the supported scale")
        score = score + (beta ** length) * power
    return score.tocsr()


def simrank_table(graph: Graph, c: float, iterations: int) -> np.ndarray:
    """Standard SimRank fixed point over all node pairs.

    s(u, u) = 1; s(a, b) = c * mean over neighbor pairs of s. Nodes without
    neighbors score 0 against everyone else.
    """
    n = graph.num_nodes
    if n > SIMRANK_MAX_NODES:
        raise MemoryError(
            f"SimRank keeps an N x N table; N={n} exceeds {SIMRANK_MAX_NODES}. "
            "Use it on the smaller benchmark graphs or subsample.")
    a = _sparse_adjacency(graph).toarray()
    deg = a.sum(axis=1)
    denom = np.outer(deg, deg)
    ok = denom > 0
    s = np.eye(n)
    for _ in range(iterations):
        m = a @ s @ a
        s = np.where(ok, c * m / np.where(ok, denom, 1.0), 0.0)
        np.fill_diagonal(s, 1.0)
    return s


class HeuristicScorer:
    """Pair scorer with the per-method tables precomputed once."""

    def __init__(self, graph: Graph, method: HeuristicMethod):
        self.graph = graph
        self.method = method
        self.adj = graph.adjacency_sets()
        self.deg = graph.degrees()
        self._katz = None
        self._simrank = None
        if method.kind == "katz":
            rho = estimate_spectral_radius(graph)
            beta = method.beta if method.beta is not None \
                else min(0.005, 0.5 / rho if rho > 0 else 0.005)
            if rho > 0 and beta * rho >= 1.0:
                raise ValueError(
                    f"katz beta={beta} does not converge: beta * spectral_radius "
                    f"= {beta * rho:.3f} >= 1")
            self.beta = beta
            self._katz = katz_score_matrix(graph, beta, method.max_len)
        elif method.kind == "simrank":
            self._simrank = simrank_table(graph, method.c, method.iters)

    def __call__(self, u: int, v: int) -> float:
        if u == v:
            raise ValueError("heuristic scores are defined for distinct nodes")
        kind = self.method.kind
        if kind == "katz":
            return float(self._katz[u, v])
        if kind == "simrank":
            return float(self._simrank[u, v])
        gu, gv = self.adj[u], self.adj[v]
        if kind == "pa":
            return float(len(gu) * len(gv))
        common = gu & gv
        if kind == "cn":
            return float(len(common))
        if kind == "jaccard":
            union = len(gu | gv)
            return float(len(common) / union) if union else 0.0
        if kind == "aa":
            # degree-1 common neighbors are impossible on simple graphs,
            # but guard the ln(1)=0 division anyway
            return float(sum(1.0 / math.log(len(self.adj[w]))
                             for w in common if len(self.adj[w]) > 1))
        if kind == "ra":
            return float(sum(1.0 / len(self.adj[w]) for w in common))
        raise AssertionError(kind)

    def score_pairs(self, pairs) -> np.ndarray:
        return np.array([self(u, v) for u, v in pairs], dtype=np.float64)


def make_scorer(graph: Graph, method: HeuristicMethod) -> HeuristicScorer:
    return HeuristicScorer(graph, method)


def heuristic_score(graph: Graph, method: HeuristicMethod, u: int, v: int) -> float:
    """One-off pair score; build a HeuristicScorer to score many pairs."""
    return make_scorer(graph, method)(u, v)


def evaluate_heuristic(graph: Graph, split: EdgeSplit,
                       method: HeuristicMethod) -> Metrics:
    """Score the held-out test pairs on the message graph and report AUC/AP."""
    scorer = make_scorer(split.message_graph, method)
    return evaluate_scores(scorer.score_pairs(split.test_pos),
                           scorer.score_pairs(split.test_neg))
