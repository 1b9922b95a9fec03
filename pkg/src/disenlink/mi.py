"""CLUB mutual-information regularization between embedding channels.

For every unordered channel pair (k, m) a small variational approximation
network (VAN) models q(z_m | z_k) as a diagonal Gaussian. The contrastive
log-ratio upper bound compares aligned rows against rows shuffled by a
fresh permutation. The VAN chases the encoder in an inner loop driven by
log-likelihood, while the encoder sees the CLUB value with the VAN frozen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .optim import AdamState, adam_step, grads_by_name, init_adam, xavier_init

LOG_TWO_PI = math.log(2.0 * math.pi)
LOGVAR_CLIP = 10.0


@dataclass
class PairVan:
    """Gaussian conditional network for one channel pair: a shared
    sigmoid hidden layer feeding linear mean and log-variance heads."""

    w_hidden: Tensor   # (d, d)
    b_hidden: Tensor   # (1, d)
    w_mean: Tensor     # (d, d)
    b_mean: Tensor     # (1, d)
    w_logvar: Tensor   # (d, d)
    b_logvar: Tensor   # (1, d)

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}_w_hidden": self.w_hidden,
            f"{prefix}_b_hidden": self.b_hidden,
            f"{prefix}_w_mean": self.w_mean,
            f"{prefix}_b_mean": self.b_mean,
            f"{prefix}_w_logvar": self.w_logvar,
            f"{prefix}_b_logvar": self.b_logvar,
        }

    def detached(self) -> "PairVan":
        return PairVan(*(t.detach() for t in (
            self.w_hidden, self.b_hidden, self.w_mean,
            self.b_mean, self.w_logvar, self.b_logvar)))


@dataclass
class VanCollection:
    """One PairVan per unordered channel pair (k < m)."""

    pairs: dict[tuple[int, int], PairVan]

    def named(self) -> dict[str, Tensor]:
        out = {}
        for (k, m), van in self.pairs.items():
            out.update(van.named(f"van_{k}_{m}"))
        return out


def init_van(num_channels: int, channel_dim: int,
             rng: np.random.Generator) -> VanCollection:
    pairs = {}
    for k in range(num_channels):
        for m in range(k + 1, num_channels):
            d = channel_dim
            pairs[(k, m)] = PairVan(
                w_hidden=xavier_init((d, d), rng),
                b_hidden=ad.parameter(np.zeros((1, d))),
                w_mean=xavier_init((d, d), rng),
                b_mean=ad.parameter(np.zeros((1, d))),
                w_logvar=xavier_init((d, d), rng),
                b_logvar=ad.parameter(np.zeros((1, d))),
            )
    return VanCollection(pairs)


def van_forward(z_k: Tensor, van: PairVan) -> tuple[Tensor, Tensor]:
    """Conditional Gaussian parameters (mean, clipped log-variance) from z_k rows."""
    hidden = ad.sigmoid(ad.add(ad.matmul(z_k, van.w_hidden), van.b_hidden))
    mean = ad.add(ad.matmul(hidden, van.w_mean), van.b_mean)
    logvar = ad.clamp(ad.add(ad.matmul(hidden, van.w_logvar), van.b_logvar),
                      -LOGVAR_CLIP, LOGVAR_CLIP)
    return mean, logvar


def log_gaussian(z: Tensor, mean: Tensor, logvar: Tensor) -> Tensor:
    """Row-wise diagonal-Gaussian log density, shape (N, 1)."""
    if z.shape != mean.shape or z.shape != logvar.shape:
        raise ad.ShapeError("log_gaussian operands must share a shape")
    d = z.shape[1]
    diff = ad.sub(z, mean)
    quad = ad.mul(ad.mul(diff, diff), ad.exp(ad.smul(logvar, -1.0)))
    per_dim = ad.add(logvar, quad)
    ones = ad.constant(np.ones((d, 1)))
    row_sums = ad.matmul(per_dim, ones)
    return ad.add(ad.smul(row_sums, -0.5), ad.constant(-0.5 * d * LOG_TWO_PI))


def club_pair_loss(z_k: Tensor, z_m: Tensor, van: PairVan,
                   permutation: np.ndarray) -> Tensor:
    """Contrastive upper-bound estimate for one pair: mean over rows of
    log q(z_m,i | z_k,i) - log q(z_m,perm(i) | z_k,i).

    Gradients flow to the encoder only; the VAN is used detached here.
    """
    frozen = van.detached()
    mean, logvar = van_forward(z_k, frozen)
    lp_pos = log_gaussian(z_m, mean, logvar)
    lp_neg = log_gaussian(ad.gather_rows(z_m, permutation), mean, logvar)
    return ad.reduce_mean(ad.sub(lp_pos, lp_neg))


def lld_loss(z_k: Tensor, z_m: Tensor, van: PairVan) -> Tensor:
    """Negative mean log-likelihood of aligned pairs under the VAN.

    The embeddings are detached: this loss trains the VAN only.
    """
    mean, logvar = van_forward(z_k.detach(), van)
    return ad.smul(ad.reduce_mean(log_gaussian(z_m.detach(), mean, logvar)), -1.0)


def inner_phi_update(z_channels: list[Tensor], van: VanCollection, steps: int,
                     adam: AdamState) -> list[float]:
    """Fit every pair's VAN to the current (frozen) embeddings.

    Runs `steps` Adam updates on the summed log-likelihood losses; the
    pairs have disjoint parameters so one joint step equals per-pair
    steps. Returns the summed loss value per step.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    params = van.named()
    history = []
    for _ in range(steps):
        with ad.Tape():
            total = None
            for (k, m), pair_van in van.pairs.items():
                loss = lld_loss(z_channels[k], z_channels[m], pair_van)
                total = loss if total is None else ad.add(total, loss)
            grad_map = ad.backward(total)
        adam_step(params, grads_by_name(params, grad_map), adam)
        history.append(total.item())
    return history


def total_mi_loss(z_channels: list[Tensor], van: VanCollection | None,
                  rng: np.random.Generator) -> tuple[Tensor, dict[str, float]]:
    """Sum of CLUB estimates over unordered channel pairs.

    Mutual information is symmetric, so each pair is evaluated once in the
    k < m direction (the double-counted sum halves back to this). Draws a
    fresh shuffle per pair. Returns the loss and per-pair diagnostics.
    """
    n = z_channels[0].shape[0]
    diagnostics: dict[str, float] = {}
    if van is None or len(z_channels) < 2:
        return ad.constant(np.zeros((1, 1))), diagnostics
    total = None
    for (k, m) in sorted(van.pairs):
        perm = rng.permutation(n)
        loss = club_pair_loss(z_channels[k], z_channels[m], van.pairs[(k, m)], perm)
        diagnostics[f"club_{k}_{m}"] = loss.item()
        total = loss if total is None else ad.add(total, loss)
    return total, diagnostics


def make_van_optimizer(van: VanCollection, lr_phi: float) -> AdamState:
    return init_adam(van.named(), lr_phi)
