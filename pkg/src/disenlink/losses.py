"""Inner-product decoding, weighted adjacency reconstruction, KL term,
and the composed objectives for the deterministic and variational modes.

The variational objective is the negative evidence lower bound plus the
MI penalty, written so that *minimizing* the total is correct:
total = reconstruction + KL (variational only) + lambda_mi * MI.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class LossReport:
    """Scalar summary of one training step's objective."""

    recon: float
    kl: float
    mi: float
    total: float
    lambda_mi: float

    def as_dict(self) -> dict[str, float]:
        return {"recon": self.recon, "kl": self.kl, "mi": self.mi,
                "total": self.total, "lambda_mi": self.lambda_mi}


def _sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def decode_edge_logit(z: np.ndarray, u: int, v: int) -> float:
    """Inner product of the two node embeddings; symmetric in (u, v)."""
    return float(np.dot(z[u], z[v]))


def decode_edge_prob(z: np.ndarray, u: int, v: int) -> float:
    return float(_sigmoid(np.array([[decode_edge_logit(z, u, v)]]))[0, 0])


def score_edges(z: np.ndarray, edges) -> np.ndarray:
    """Sigmoid inner-product scores for a list of (u, v) pairs."""
    pairs = np.asarray(list(edges), dtype=np.int64)
    if pairs.size == 0:
        return np.zeros(0)
    dots = np.einsum("ij,ij->i", z[pairs[:, 0]], z[pairs[:, 1]])
    return _sigmoid(dots)


def class_balance(num_pos: int, num_total: int) -> tuple[float, float]:
    """(pos_weight, norm) for the imbalanced dense reconstruction.

    pos_weight upweights the sparse positive entries; norm rescales the
    mean. Degenerate all-positive targets fall back to unweighted.
    """
    num_neg = num_total - num_pos
    if num_pos == 0 or num_neg == 0:
        return 1.0, 1.0
    return num_neg / num_pos, num_total / (2.0 * num_neg)


def reconstruction_loss(z: Tensor, targets: np.ndarray, num_pos: int,
                        num_total: int) -> Tensor:
    """Weighted binary cross-entropy over all N^2 logits of Z Z^T.

    Uses the softplus identity on logits (no probabilities are formed), so
    the value stays finite for any logit magnitude.
    """
    n = z.shape[0]
    if targets.shape != (n, n) or num_total != n * n:
        raise ad.ShapeError("targets must be the dense N x N matrix")
    pos_weight, norm = class_balance(num_pos, num_total)
    logits = ad.matmul(z, ad.transpose(z))
    return ad.bce_logits_mean(logits, targets, pos_weight=pos_weight, scale=norm)


def sampled_reconstruction_loss(z: Tensor, pos_pairs: np.ndarray,
                                neg_pairs: np.ndarray) -> Tensor:
    """Balanced cross-entropy on explicit edge samples instead of all N^2
    entries; the memory-safe path for large graphs (positives get all
    train edges, negatives are resampled each epoch by the caller)."""
    d = z.shape[1]
    ones = ad.constant(np.ones((d, 1)))

    def pair_logits(pairs):
        zu = ad.gather_rows(z, pairs[:, 0])
        zv = ad.gather_rows(z, pairs[:, 1])
        return ad.matmul(ad.mul(zu, zv), ones)

    loss_pos = ad.reduce_sum(ad.softplus(ad.smul(pair_logits(pos_pairs), -1.0)))
    loss_neg = ad.reduce_sum(ad.softplus(pair_logits(neg_pairs)))
    count = pos_pairs.shape[0] + neg_pairs.shape[0]
    return ad.smul(ad.add(loss_pos, loss_neg), 1.0 / count)


def kl_standard_normal(mu: Tensor, logvar: Tensor) -> Tensor:
    """KL(q || N(0, I)) averaged over the N rows; non-negative, zero only
    at mu = 0, logvar = 0."""
    if mu.shape != logvar.shape:
        raise ad.ShapeError("mu and logvar must share a shape")
    n = mu.shape[0]
    inner = ad.sub(ad.sub(ad.add(logvar, ad.constant(1.0)), ad.mul(mu, mu)),
                   ad.exp(logvar))
    return ad.smul(ad.reduce_sum(inner), -0.5 / n)


def total_loss(mode: str, recon: Tensor, kl: Tensor | None, mi: Tensor,
               lambda_mi: float) -> tuple[Tensor, LossReport]:
    """Compose the final minimized objective for either mode.

    Deterministic: recon + lambda * mi. Variational: (recon + kl) +
    lambda * mi. Returns the scalar tensor plus a float report.
    """
    if lambda_mi < 0:
        raise ValueError("lambda_mi must be non-negative")
    if mode not in ("dgae", "vdgae"):
        raise ValueError(f"unknown mode {mode!r}")
    total = ad.add(recon, ad.smul(mi, lambda_mi))
    kl_value = 0.0
    if mode == "vdgae":
        if kl is None:
            raise ValueError("variational mode needs a KL term")
        total = ad.add(total, kl)
        kl_value = kl.item()
    report = LossReport(recon=recon.item(), kl=kl_value, mi=mi.item(),
                        total=total.item(), lambda_mi=lambda_mi)
    return total, report
