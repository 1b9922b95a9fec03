"""Central finite-difference verification of the backward pass.

Builds random end-to-end instances (graph, encoder, VANs, full objective,
both modes) and compares every analytic parameter gradient against
(f(p+h) - f(p-h)) / 2h.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .encoder import EdgeIndex, encode, encode_variational, init_encoder_params
from .graphs import adjacency_targets, make_graph
from .losses import kl_standard_normal, reconstruction_loss
from .mi import club_pair_loss, init_van
from .optim import grads_by_name


def finite_diff_check(loss_fn, params: dict[str, ad.Tensor], h: float = 1e-5,
                      floor: float = 1e-3) -> float:
    """Max relative error between backward() and central differences.

    Per coordinate: |fd - analytic| / max(|fd|, |analytic|, floor). The
    floor keeps near-zero gradients from turning finite-difference noise
    into spurious relative error.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    with ad.Tape():
        loss = loss_fn()
        grad_map = ad.backward(loss)
    analytic = grads_by_name(params, grad_map)
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        an = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = loss_fn().item()
            flat[i] = orig - h
            f_minus = loss_fn().item()
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            err = abs(fd - an[i]) / max(abs(fd), abs(an[i]), floor)
            worst = max(worst, err)
    return worst


@dataclass
class GradcheckInstance:
    loss_fn: object
    params: dict[str, ad.Tensor]
    info: dict


def build_random_instance(seed: int, mode: str, n_max: int = 12) -> GradcheckInstance:
    """A small random graph plus the complete training objective for one mode."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, n_max + 1))
    f = int(rng.integers(2, 8))
    num_channels = int(rng.choice([2, 3]))
    d = int(rng.choice([2, 4]))
    iters = int(rng.choice([1, 3]))
    lam = 0.3

    pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.35]
    if not pairs:
        pairs = [(0, 1)]
    graph = make_graph(n, pairs)
    edge_index = EdgeIndex.from_graph(graph)
    targets, num_pos, num_total = adjacency_targets(graph)
    x = ad.constant(rng.standard_normal((n, f)))

    variational = mode == "vdgae"
    params = init_encoder_params(f, num_channels, d, rng, variational)
    for k in range(num_channels):
        params.proj_b[k].data = rng.normal(0.0, 0.3, size=(1, d))
    if variational:
        params.logvar_b.data = rng.normal(0.0, 0.3, size=(1, num_channels * d))
    van = init_van(num_channels, d, rng)
    for tensor in van.named().values():
        if tensor.shape[0] == 1:  # randomize biases too
            tensor.data = rng.normal(0.0, 0.3, size=tensor.shape)
    perm = rng.permutation(n)
    noise_seed = int(rng.integers(0, 2**31))

    def loss_fn():
        if variational:
            venc = encode_variational(x, edge_index, params, iters,
                                      rng=np.random.default_rng(noise_seed))
            z, channels = venc.sample, venc.sample_channels
            kl = kl_standard_normal(venc.mean.z, venc.logvar)
        else:
            emb = encode(x, edge_index, params, iters)
            z, channels = emb.z, emb.z_channels
            kl = None
        total = reconstruction_loss(z, targets, num_pos, num_total)
        if kl is not None:
            total = ad.add(total, kl)
        for (k, m), pair_van in van.pairs.items():
            total = ad.add(total, ad.smul(
                club_pair_loss(channels[k], channels[m], pair_van, perm), lam))
        return total

    info = {"n": n, "f": f, "channels": num_channels, "d": d,
            "iters": iters, "mode": mode, "edges": len(pairs)}
    return GradcheckInstance(loss_fn, params.named(), info)


def run_gradcheck(trials: int = 100, n_max: int = 12, seed: int = 0,
                  h: float = 1e-5, progress=None) -> dict:
    """Finite-difference sweep over random instances of both modes."""
    start = time.time()
    worst = 0.0
    worst_info = None
    for trial in range(trials):
        mode = "dgae" if trial % 2 == 0 else "vdgae"
        inst = build_random_instance(seed * 100003 + trial, mode, n_max)
        err = finite_diff_check(inst.loss_fn, inst.params, h=h)
        if err > worst:
            worst = err
            worst_info = inst.info
        if progress is not None:
            progress(trial + 1, trials, err)
    return {
        "trials": trials,
        "max_rel_err": worst,
        "worst_instance": worst_info,
        "elapsed_sec": time.time() - start,
    }
