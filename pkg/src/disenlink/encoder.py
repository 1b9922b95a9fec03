"""Multi-channel graph encoder: per-channel projection, factor-aware
neighbor routing, concatenation, and the optional variational head.

Each of the K channels carries a d-dimensional embedding meant to capture
one latent factor behind edge formation. Neighbors are softly assigned to
channels by routing probabilities and aggregated per channel; every
embedding row is kept on the unit sphere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graphs import Graph
from .optim import xavier_init

LOGVAR_CLIP = 10.0


@dataclass
class EncoderParams:
    """Learnable projection weights/biases per channel, plus the optional
    log-variance head used by the variational mode."""

    proj_w: list[Tensor]          # K tensors of shape (f, d)
    proj_b: list[Tensor]          # K tensors of shape (1, d)
    logvar_w: Tensor | None = None  # (K*d, K*d)
    logvar_b: Tensor | None = None  # (1, K*d)

    @property
    def num_channels(self) -> int:
        return len(self.proj_w)

    @property
    def channel_dim(self) -> int:
        return self.proj_w[0].shape[1]

    def named(self) -> dict[str, Tensor]:
        out = {}
        for k in range(self.num_channels):
            out[f"proj_w_{k}"] = self.proj_w[k]
            out[f"proj_b_{k}"] = self.proj_b[k]
        if self.logvar_w is not None:
            out["logvar_w"] = self.logvar_w
            out["logvar_b"] = self.logvar_b
        return out


def init_encoder_params(feature_dim: int, num_channels: int, channel_dim: int,
                        rng: np.random.Generator, variational: bool) -> EncoderParams:
    """Xavier weights, zero biases; adds the log-variance head if variational."""
    if num_channels < 1 or channel_dim < 1:
        raise ValueError("need at least one channel and one dimension")
    proj_w = [xavier_init((feature_dim, channel_dim), rng) for _ in range(num_channels)]
    proj_b = [ad.parameter(np.zeros((1, channel_dim))) for _ in range(num_channels)]
    logvar_w = logvar_b = None
    if variational:
        width = num_channels * channel_dim
        logvar_w = xavier_init((width, width), rng)
        logvar_b = ad.parameter(np.zeros((1, width)))
    return EncoderParams(proj_w, proj_b, logvar_w, logvar_b)


@dataclass(frozen=True)
class EdgeIndex:
    """Directed view of an undirected edge set: one (center, neighbor)
    entry per direction, sorted by center."""

    centers: np.ndarray
    neighbors: np.ndarray
    num_nodes: int

    @classmethod
    def from_edges(cls, edges, num_nodes: int) -> "EdgeIndex":
        us = [u for u, v in edges] + [v for u, v in edges]
        vs = [v for u, v in edges] + [u for u, v in edges]
        centers = np.asarray(us, dtype=np.int64)
        neighbors = np.asarray(vs, dtype=np.int64)
        order = np.lexsort((neighbors, centers))
        return cls(centers[order], neighbors[order], num_nodes)

    @classmethod
    def from_graph(cls, graph: Graph) -> "EdgeIndex":
        return cls.from_edges(graph.edges, graph.num_nodes)

    @property
    def num_directed(self) -> int:
        return self.centers.size


@dataclass
class ChannelEmbeddings:
    """Per-channel initial and routed embeddings plus their concatenation."""

    e_channels: list[Tensor]   # K of (N, d), unit rows
    z_channels: list[Tensor]   # K of (N, d), unit rows
    z: Tensor                  # (N, K*d)
    guarded_rows: int = 0      # rows whose pre-normalization norm fell under eps


def project_features(x: Tensor, params: EncoderParams,
                     eps: float = 1e-12) -> tuple[list[Tensor], int]:
    """Per-channel linear projection followed by row L2 normalization.

    Returns the K channel matrices and the count of rows that hit the
    zero-norm epsilon guard (a degenerate-input diagnostic).
    """
    e_channels = []
    guarded = 0
    for k in range(params.num_channels):
        raw = ad.add(ad.matmul(x, params.proj_w[k]), params.proj_b[k])
        norms = np.linalg.norm(raw.data, axis=1)
        guarded += int((norms <= eps).sum())
        e_channels.append(ad.row_l2_normalize(raw, eps))
    return e_channels, guarded


def _routing_probs_gathered(e_gathered: list[Tensor], z_channels: list[Tensor],
                            edge_index: EdgeIndex) -> Tensor:
    d = e_gathered[0].shape[1]
    ones = ad.constant(np.ones((d, 1)))
    cols = []
    for k, e_nbr in enumerate(e_gathered):
        z_ctr = ad.gather_rows(z_channels[k], edge_index.centers)
        cols.append(ad.matmul(ad.mul(e_nbr, z_ctr), ones))
    return ad.row_softmax(ad.concat_cols(cols))


def routing_probabilities(e_channels: list[Tensor], z_channels: list[Tensor],
                          edge_index: EdgeIndex) -> Tensor:
    """Soft channel assignment for every directed (center, neighbor) pair.

    Row (u, v) holds softmax_k of the channel-k similarity between the
    neighbor's initial embedding and the center's current embedding, so
    each row is a probability vector over the K channels.
    """
    e_gathered = [ad.gather_rows(e_k, edge_index.neighbors) for e_k in e_channels]
    return _routing_probs_gathered(e_gathered, z_channels, edge_index)


def route_aggregate(e_channels: list[Tensor], edge_index: EdgeIndex,
                    iterations: int) -> list[Tensor]:
    """Iterative factor-aware aggregation.

    Starting from z = e, each iteration routes neighbors using the current
    z, then rebuilds every channel as the normalized sum of the node's own
    initial embedding and the probability-weighted initial embeddings of
    its neighbors. Runs exactly `iterations` rounds, all differentiable.
    """
    if iterations < 1:
        raise ValueError("need at least one routing iteration")
    num_channels = len(e_channels)
    n = edge_index.num_nodes
    selectors = [ad.constant(np.eye(num_channels)[:, k:k + 1]) for k in range(num_channels)]
    # neighbor embeddings are iteration-invariant, gather them once
    e_gathered = [ad.gather_rows(e_k, edge_index.neighbors) for e_k in e_channels]
    z_channels = list(e_channels)
    for _ in range(iterations):
        probs = _routing_probs_gathered(e_gathered, z_channels, edge_index)
        new_z = []
        for k in range(num_channels):
            p_k = ad.matmul(probs, selectors[k])
            msg = ad.segment_sum(ad.mul(p_k, e_gathered[k]), edge_index.centers, n)
            new_z.append(ad.row_l2_normalize(ad.add(e_channels[k], msg)))
        z_channels = new_z
    return z_channels


def encode(x: Tensor, edge_index: EdgeIndex, params: EncoderParams,
           iterations: int, routing: bool = True) -> ChannelEmbeddings:
    """Full deterministic encoder: project, route, concatenate.

    With routing disabled the concatenated projections are returned as-is
    (the linear-autoencoder ablation).
    """
    e_channels, guarded = project_features(x, params)
    z_channels = route_aggregate(e_channels, edge_index, iterations) if routing \
        else list(e_channels)
    z = ad.concat_cols(z_channels)
    return ChannelEmbeddings(e_channels, z_channels, z, guarded)


@dataclass
class VariationalEncoding:
    """Reparameterized sample (block-structured like the mean), the mean
    embeddings, and the log-variance matrix."""

    sample: Tensor                  # (N, K*d); equals the mean in eval mode
    sample_channels: list[Tensor]   # K of (N, d)
    mean: ChannelEmbeddings
    logvar: Tensor                  # (N, K*d), clipped


def encode_variational(x: Tensor, edge_index: EdgeIndex, params: EncoderParams,
                       iterations: int, rng: np.random.Generator | None,
                       routing: bool = True) -> VariationalEncoding:
    """Variational encoder: mean = routed embedding, log-variance = a
    clipped linear head on the mean, sample via reparameterization.

    With rng=None (evaluation mode) the sample *is* the mean.
    """
    if params.logvar_w is None:
        raise ValueError("params lack the variational head")
    emb = encode(x, edge_index, params, iterations, routing=routing)
    mu = emb.z
    logvar = ad.clamp(ad.add(ad.matmul(mu, params.logvar_w), params.logvar_b),
                      -LOGVAR_CLIP, LOGVAR_CLIP)
    if rng is None:
        return VariationalEncoding(mu, list(emb.z_channels), emb, logvar)
    num_channels = params.num_channels
    d = params.channel_dim
    n = mu.shape[0]
    width = num_channels * d
    sample_channels = []
    for k in range(num_channels):
        block = np.zeros((width, d))
        block[k * d:(k + 1) * d] = np.eye(d)
        lv_k = ad.matmul(logvar, ad.constant(block))
        noise = ad.constant(rng.standard_normal((n, d)))
        sample_channels.append(
            ad.add(emb.z_channels[k], ad.mul(ad.exp(ad.smul(lv_k, 0.5)), noise)))
    sample = ad.concat_cols(sample_channels)
    return VariationalEncoding(sample, sample_channels, emb, logvar)


def split_channels(z: np.ndarray, num_channels: int) -> list[np.ndarray]:
    """Cut an (N, K*d) embedding matrix into its K channel blocks."""
    if z.shape[1] % num_channels:
        raise ValueError("embedding width is not a multiple of the channel count")
    d = z.shape[1] // num_channels
    return [z[:, k * d:(k + 1) * d] for k in range(num_channels)]
