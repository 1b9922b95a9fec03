"""Graph data model, edge-list/feature ingestion, splits, negative sampling.

File formats:
  * edge list -- UTF-8 text, one ``u v`` pair per line, optional first line
    ``N=<int>`` overriding the node count (default is 1 + max id);
  * features -- headerless CSV of reals, row i belongs to node i;
  * split manifest -- JSON with train_pos/val_pos/test_pos/val_neg/test_neg
    arrays of [u, v] pairs plus the seed that produced them.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

log = logging.getLogger(__name__)

Edge = tuple[int, int]


class GraphFormatError(ValueError):
    """Malformed edge-list or feature file."""


class SplitError(ValueError):
    """Invalid split request (bad fractions or not enough non-edges)."""


def _canonical(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph; edges are deduplicated (u < v) pairs."""

    num_nodes: int
    edges: tuple[Edge, ...]
    features: np.ndarray | None = None

    def __post_init__(self):
        for u, v in self.edges:
            if u == v:
                raise GraphFormatError(f"self-loop ({u},{v})")
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise GraphFormatError(f"edge ({u},{v}) outside [0,{self.num_nodes})")
            if u > v:
                raise GraphFormatError(f"edge ({u},{v}) not in canonical u<v order")
        if len(set(self.edges)) != len(self.edges):
            raise GraphFormatError("duplicate edges")
        if self.features is not None and self.features.shape[0] != self.num_nodes:
            raise GraphFormatError(
                f"feature rows ({self.features.shape[0]}) != num_nodes ({self.num_nodes})")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        if self.features is None:
            raise ValueError("graph has no features attached")
        return self.features.shape[1]

    def adjacency_sets(self) -> list[set[int]]:
        adj: list[set[int]] = [set() for _ in range(self.num_nodes)]
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return adj

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def dense_adjacency(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes))
        for u, v in self.edges:
            a[u, v] = 1.0
            a[v, u] = 1.0
        return a


def _normalize_edges(pairs) -> tuple[Edge, ...]:
    return tuple(sorted({_canonical(int(u), int(v)) for u, v in pairs}))


def make_graph(num_nodes: int, pairs, features: np.ndarray | None = None) -> Graph:
    """Build a Graph from possibly unordered/duplicated pairs."""
    return Graph(num_nodes, _normalize_edges(pairs), features)


def load_edge_list(path) -> Graph:
    """Parse an edge-list file; drops self-loops (counted in a log warning)."""
    pairs: list[Edge] = []
    header_n: int | None = None
    dropped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if lineno == 1 and line.startswith("N="):
                try:
                    header_n = int(line[2:])
                except ValueError:
                    raise GraphFormatError(f"{path}:{lineno}: bad header {line!r}")
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected 'u v', got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-integer node id in {line!r}")
            if u < 0 or v < 0:
                raise GraphFormatError(f"{path}:{lineno}: negative node id in {line!r}")
            if u == v:
                dropped += 1
                continue
            pairs.append(_canonical(u, v))
    if dropped:
        log.warning("%s: dropped %d self-loop line(s)", path, dropped)
    max_id = max((max(u, v) for u, v in pairs), default=-1)
    n = header_n if header_n is not None else max_id + 1
    if n < max_id + 1:
        raise GraphFormatError(f"{path}: header N={n} smaller than max id {max_id}")
    return make_graph(n, pairs)


def save_edge_list(graph: Graph, path) -> None:
    """Write the graph in the same format load_edge_list reads."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"N={graph.num_nodes}\n")
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")


def compact_node_ids(graph: Graph) -> tuple[Graph, dict[int, int]]:
    """Re-map ids so only endpoint ids remain, densely 0-based.

    For files with sparse original ids; returns the new graph and the
    old-id -> new-id mapping (persist it next to any derived output).
    """
    used = sorted({n for e in graph.edges for n in e})
    mapping = {old: new for new, old in enumerate(used)}
    pairs = [(mapping[u], mapping[v]) for u, v in graph.edges]
    feats = graph.features[used] if graph.features is not None else None
    return make_graph(len(used), pairs, feats), mapping


def attach_features(graph: Graph, path) -> Graph:
    """Attach a headerless CSV of reals (row i = node i) to the graph."""
    rows: list[list[float]] = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise GraphFormatError(f"{path}:{lineno}: ragged row ({len(cells)} != {width})")
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-numeric cell")
    if len(rows) != graph.num_nodes:
        raise GraphFormatError(
            f"{path}: {len(rows)} feature rows for {graph.num_nodes} nodes")
    return replace(graph, features=np.asarray(rows, dtype=np.float64))


def identity_features(graph: Graph) -> Graph:
    """One-hot identity features, the convention for attribute-free graphs."""
    return replace(graph, features=np.eye(graph.num_nodes))


def adjacency_features(graph: Graph) -> Graph:
    """Rows of the adjacency matrix as features (synthetic benchmark convention)."""
    return replace(graph, features=graph.dense_adjacency())


@dataclass(frozen=True)
class EdgeSplit:
    """Positive/negative edge lists for train/val/test plus the train-only graph."""

    train_pos: tuple[Edge, ...]
    val_pos: tuple[Edge, ...]
    test_pos: tuple[Edge, ...]
    val_neg: tuple[Edge, ...]
    test_neg: tuple[Edge, ...]
    message_graph: Graph
    seed: int = 0

    def validate(self, graph: Graph | None = None) -> None:
        lists = [self.train_pos, self.val_pos, self.test_pos, self.val_neg, self.test_neg]
        flat = [e for lst in lists for e in lst]
        if len(set(flat)) != len(flat):
            raise SplitError("split lists are not pairwise disjoint")
        if len(self.val_neg) != len(self.val_pos) or len(self.test_neg) != len(self.test_pos):
            raise SplitError("negative list sizes do not match positives")
        if set(self.message_graph.edges) != set(self.train_pos):
            raise SplitError("message graph edges differ from train positives")
        if graph is not None:
            full = set(graph.edges)
            if set(self.train_pos) | set(self.val_pos) | set(self.test_pos) != full:
                raise SplitError("positives do not partition the graph's edges")
            for e in self.val_neg + self.test_neg:
                if e in full:
                    raise SplitError(f"negative edge {e} exists in the graph")


def split_edges(graph: Graph, val_frac: float, test_frac: float, seed: int) -> EdgeSplit:
    """Randomly partition edges and sample an equal count of negatives.

    |val_pos| = floor(val_frac * E), |test_pos| = floor(test_frac * E);
    everything else stays in train. Negatives are uniform over non-edges
    of the *full* graph, without replacement. Deterministic under seed.
    """
    if val_frac < 0 or test_frac < 0 or val_frac + test_frac >= 1:
        raise SplitError("need 0 <= val_frac + test_frac < 1")
    rng = np.random.default_rng(seed)
    edges = list(graph.edges)
    n_edges = len(edges)
    n_val = math.floor(val_frac * n_edges)
    n_test = math.floor(test_frac * n_edges)
    order = rng.permutation(n_edges)
    val_pos = tuple(edges[i] for i in order[:n_val])
    test_pos = tuple(edges[i] for i in order[n_val:n_val + n_test])
    train_pos = tuple(sorted(edges[i] for i in order[n_val + n_test:]))

    need = n_val + n_test
    negatives = _sample_negatives(graph, need, rng)
    split = EdgeSplit(
        train_pos=train_pos,
        val_pos=val_pos,
        test_pos=test_pos,
        val_neg=tuple(negatives[:n_val]),
        test_neg=tuple(negatives[n_val:]),
        message_graph=make_graph(graph.num_nodes, train_pos, graph.features),
        seed=seed,
    )
    split.validate(graph)
    return split


def _sample_negatives(graph: Graph, need: int, rng: np.random.Generator) -> list[Edge]:
    n = graph.num_nodes
    total_pairs = n * (n - 1) // 2
    available = total_pairs - graph.num_edges
    if need > available:
        raise SplitError(f"requested {need} negatives but only {available} non-edges exist")
    if need == 0:
        return []
    edge_set = set(graph.edges)
    if need > 0.25 * available:
        # dense graph: rejection would thrash, enumerate instead
        if n > 4000:
            raise SplitError("graph too dense for negative sampling at this scale")
        pool = [(u, v) for u in range(n) for v in range(u + 1, n)
                if (u, v) not in edge_set]
        idx = rng.choice(len(pool), size=need, replace=False)
        return [pool[i] for i in idx]
    chosen: list[Edge] = []
    seen: set[Edge] = set()
    while len(chosen) < need:
        us = rng.integers(0, n, size=2 * (need - len(chosen)) + 8)
        vs = rng.integers(0, n, size=us.size)
        for u, v in zip(us.tolist(), vs.tolist()):
            if u == v:
                continue
            e = _canonical(u, v)
            if e in edge_set or e in seen:
                continue
            seen.add(e)
            chosen.append(e)
            if len(chosen) == need:
                break
    return chosen


def adjacency_targets(graph: Graph) -> tuple[np.ndarray, int, int]:
    """Binary reconstruction target: adjacency plus forced-1 diagonal.

    Returns (target, num_pos, num_total) where num_pos counts the ones and
    num_total = N*N, the constants the weighted reconstruction loss needs.
    """
    target = graph.dense_adjacency()
    np.fill_diagonal(target, 1.0)
    num_pos = int(target.sum())
    return target, num_pos, target.size


def save_split_manifest(split: EdgeSplit, path) -> None:
    payload = {
        "num_nodes": split.message_graph.num_nodes,
        "seed": split.seed,
        "train_pos": [list(e) for e in split.train_pos],
        "val_pos": [list(e) for e in split.val_pos],
        "test_pos": [list(e) for e in split.test_pos],
        "val_neg": [list(e) for e in split.val_neg],
        "test_neg": [list(e) for e in split.test_neg],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_split_manifest(path, graph: Graph | None = None) -> EdgeSplit:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    as_edges = lambda key: tuple((int(u), int(v)) for u, v in payload[key])
    train_pos = as_edges("train_pos")
    n = int(payload["num_nodes"])
    features = graph.features if graph is not None else None
    split = EdgeSplit(
        train_pos=train_pos,
        val_pos=as_edges("val_pos"),
        test_pos=as_edges("test_pos"),
        val_neg=as_edges("val_neg"),
        test_neg=as_edges("test_neg"),
        message_graph=make_graph(n, train_pos, features),
        seed=int(payload.get("seed", 0)),
    )
    split.validate(graph)
    return split
