"""Stochastic-block-model dataset generation and embedding-correlation
analysis for the disentanglement benchmark.

Communities play the role of planted latent factors: each community has
its own within-community link probability, communities are bridged with a
single between probability tuned to hit a target average degree, and node
features are the rows of the adjacency matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import Graph, adjacency_features, make_graph


@dataclass(frozen=True)
class SbmSpec:
    num_communities: int
    community_size: int
    p_within: tuple[float, ...]   # one link probability per community
    q_between: float
    seed: int = 0

    def __post_init__(self):
        if self.num_communities < 1 or self.community_size < 1:
            raise ValueError("need at least one community with one node")
        if len(self.p_within) != self.num_communities:
            raise ValueError("p_within needs one entry per community")
        for p in (*self.p_within, self.q_between):
            if not (0.0 <= p <= 1.0):
                raise ValueError("probabilities must lie in [0, 1]")

    @property
    def num_nodes(self) -> int:
        return self.num_communities * self.community_size


def expected_average_degree(num_communities: int, community_size: int,
                            p_within, q_between: float) -> float:
    """Closed-form expectation of the mean degree of the generated graph."""
    n_c = community_size
    n = num_communities * n_c
    intra = sum(p * n_c * (n_c - 1) / 2.0 for p in p_within)
    inter_pairs = n_c * n_c * num_communities * (num_communities - 1) / 2.0
    return 2.0 * (intra + q_between * inter_pairs) / n


def tune_q(num_communities: int, community_size: int, p_within,
           target_degree: tuple[float, float]) -> float:
    """Bisection on the between-community probability until the expected
    average degree lands inside the target interval."""
    lo_deg, hi_deg = target_degree
    if lo_deg > hi_deg:
        raise ValueError("target interval out of order")
    deg = lambda q: expected_average_degree(num_communities, community_size,
                                            p_within, q)
    if deg(0.0) > hi_deg:
        raise ValueError(
            f"infeasible: within-community degree alone is {deg(0.0):.2f} "
            f"> {hi_deg}")
    if deg(1.0) < lo_deg:
        raise ValueError("infeasible: even q=1 cannot reach the target degree")
    lo, hi = 0.0, 1.0
    for _ in range(200):
        q = 0.5 * (lo + hi)
        d = deg(q)
        if lo_deg <= d <= hi_deg:
            return q
        if d < lo_deg:
            lo = q
        else:
            hi = q
    raise RuntimeError("bisection failed to land inside the target interval")


def generate_sbm(spec: SbmSpec) -> tuple[Graph, np.ndarray]:
    """Sample a graph from the spec; features are adjacency rows.

    Returns (graph, community_labels).
    """
    rng = np.random.default_rng(spec.seed)
    n_c = spec.community_size
    k = spec.num_communities
    pairs: list[tuple[int, int]] = []
    iu, ju = np.triu_indices(n_c, 1)
    for c in range(k):
        off = c * n_c
        mask = rng.random(iu.size) < spec.p_within[c]
        pairs.extend(zip((iu[mask] + off).tolist(), (ju[mask] + off).tolist()))
    for c1 in range(k):
        for c2 in range(c1 + 1, k):
            mask = rng.random((n_c, n_c)) < spec.q_between
            rows, cols = np.nonzero(mask)
            off1, off2 = c1 * n_c, c2 * n_c
            pairs.extend(zip((rows + off1).tolist(), (cols + off2).tolist()))
    graph = adjacency_features(make_graph(spec.num_nodes, pairs))
    labels = np.repeat(np.arange(k), n_c)
    return graph, labels


@dataclass(frozen=True)
class CorrelationReport:
    """Absolute Pearson correlations between embedding dimensions and the
    within-block vs between-block contrast ratio."""

    corr: np.ndarray
    block_contrast: float
    constant_columns: tuple[int, ...]


def embedding_correlation(z: np.ndarray, num_channels: int,
                          channel_dim: int) -> CorrelationReport:
    """Column-pairwise |Pearson| over nodes, plus the channel-block contrast.

    Constant columns get correlation 0 (flagged). block_contrast divides
    the mean off-diagonal |corr| inside the K channel blocks by the mean
    |corr| between different blocks; scale changes of any column cancel.
    """
    z = np.asarray(z, dtype=np.float64)
    n, width = z.shape
    if n < 3:
        raise ValueError("correlation needs at least 3 rows")
    if width != num_channels * channel_dim:
        raise ValueError("width must equal num_channels * channel_dim")
    std = z.std(axis=0)
    constant = std < 1e-12
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.abs(np.corrcoef(z, rowvar=False))
    corr[np.isnan(corr)] = 0.0
    corr[constant, :] = 0.0
    corr[:, constant] = 0.0
    np.fill_diagonal(corr, 1.0)

    block = np.repeat(np.arange(num_channels), channel_dim)
    same_block = block[:, None] == block[None, :]
    off_diag = ~np.eye(width, dtype=bool)
    within = corr[same_block & off_diag]
    between = corr[~same_block]
    between_mean = between.mean() if between.size else 0.0
    within_mean = within.mean() if within.size else 0.0
    contrast = float(within_mean / between_mean) if between_mean > 0 else float("inf")
    return CorrelationReport(corr=corr, block_contrast=contrast,
                             constant_columns=tuple(np.nonzero(constant)[0].tolist()))
