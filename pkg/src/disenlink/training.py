"""Training loop, model selection, checkpointing, and evaluation.

Each epoch: encode the message graph (sampled in variational mode), fit
the per-pair VANs for a few inner steps against the frozen embeddings,
assemble the full objective, and take one Adam step on the encoder. The
checkpoint with the best validation AUC is kept.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .encoder import (EdgeIndex, EncoderParams, encode, encode_variational,
                      init_encoder_params)
from .graphs import EdgeSplit, Graph, adjacency_targets, split_edges, _sample_negatives
from .losses import (kl_standard_normal, reconstruction_loss,
                     sampled_reconstruction_loss, score_edges, total_loss)
from .metrics import Metrics, evaluate_scores, summarize_runs
from .mi import VanCollection, init_van, inner_phi_update, make_van_optimizer, total_mi_loss
from .optim import adam_step, grads_by_name, init_adam

MODES = ("dgae", "vdgae")
VARIANTS = ("full", "no_mi", "no_disent")
CHECKPOINT_VERSION = 1


class NonFiniteLossError(RuntimeError):
    """Training hit a non-finite loss; partial history is attached."""

    def __init__(self, message: str, history: list[dict]):
        super().__init__(message)
        self.history = history


@dataclass
class TrainConfig:
    mode: str = "dgae"           # dgae | vdgae
    num_channels: int = 5        # channels (latent factors)
    channel_dim: int = 64        # dimensions per channel
    routing_iters: int = 3       # neighbor-routing rounds
    inner_steps: int = 5         # VAN fitting steps per epoch
    lr: float = 0.01
    lr_phi: float = 0.005        # VAN inner-loop learning rate
    lambda_mi: float = 0.1
    epochs: int = 200
    seed: int = 0
    eval_every: int = 1
    variant: str = "full"        # full | no_mi | no_disent
    sampled_recon: bool = False  # edge-sampled loss instead of dense N^2

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if min(self.num_channels, self.channel_dim, self.routing_iters) < 1:
            raise ValueError("channels, dimensions and routing iterations must be >= 1")
        if self.inner_steps < 0 or self.epochs < 0 or self.eval_every < 1:
            raise ValueError("negative step/epoch counts")
        if not (0.0 <= self.lambda_mi <= 1.0):
            raise ValueError("lambda_mi must lie in [0, 1]")
        if self.lr <= 0 or self.lr_phi <= 0:
            raise ValueError("learning rates must be positive")

    @property
    def routing_enabled(self) -> bool:
        return self.variant != "no_disent"

    @property
    def effective_lambda(self) -> float:
        # no_mi drops the MI term; no_disent reduces to the plain
        # (variational) linear autoencoder, which has no MI term either
        return self.lambda_mi if self.variant == "full" else 0.0

    @property
    def mi_enabled(self) -> bool:
        return self.effective_lambda > 0.0 and self.num_channels >= 2


@dataclass
class TrainedModel:
    encoder_params: EncoderParams
    van: VanCollection | None
    config: TrainConfig
    best_epoch: int
    history: list[dict] = field(repr=False)
    embeddings: np.ndarray = field(repr=False)  # eval-mode rows at best epoch


def compute_embeddings(graph: Graph, edge_index: EdgeIndex, params: EncoderParams,
                       config: TrainConfig) -> np.ndarray:
    """Evaluation-mode embeddings (mean embeddings in variational mode)."""
    x = ad.constant(graph.features)
    if config.mode == "vdgae":
        venc = encode_variational(x, edge_index, params, config.routing_iters,
                                  rng=None, routing=config.routing_enabled)
        return venc.mean.z.data
    emb = encode(x, edge_index, params, config.routing_iters,
                 routing=config.routing_enabled)
    return emb.z.data


def train(graph: Graph, split: EdgeSplit, config: TrainConfig) -> TrainedModel:
    """Run the full optimization on the split's message graph.

    Deterministic under (config, seed): all randomness (init, sampling
    noise, shuffles, resampled negatives) derives from config.seed.
    """
    config.validate()
    if graph.features is None:
        raise ValueError("graph needs features (attach or derive them first)")
    streams = np.random.SeedSequence(config.seed).spawn(4)
    init_rng, noise_rng, perm_rng, neg_rng = (np.random.default_rng(s) for s in streams)

    variational = config.mode == "vdgae"
    params = init_encoder_params(graph.feature_dim, config.num_channels,
                                 config.channel_dim, init_rng, variational)
    theta = params.named()
    adam_theta = init_adam(theta, config.lr)
    van = adam_phi = None
    if config.mi_enabled:
        van = init_van(config.num_channels, config.channel_dim, init_rng)
        adam_phi = make_van_optimizer(van, config.lr_phi)

    msg = split.message_graph
    x = ad.constant(graph.features)
    edge_index = EdgeIndex.from_graph(msg)
    if config.sampled_recon:
        pos_pairs = np.asarray(split.train_pos, dtype=np.int64).reshape(-1, 2)
    else:
        targets, num_pos, num_total = adjacency_targets(msg)

    history: list[dict] = []
    best_auc = -1.0
    best_epoch = 0
    best_theta = {name: t.data.copy() for name, t in theta.items()}
    best_embeddings = compute_embeddings(graph, edge_index, params, config)
    has_val = len(split.val_pos) > 0 and len(split.val_neg) > 0

    for epoch in range(1, config.epochs + 1):
        with ad.Tape():
            if variational:
                venc = encode_variational(x, edge_index, params, config.routing_iters,
                                          rng=noise_rng, routing=config.routing_enabled)
                z_train = venc.sample
                mi_channels = venc.sample_channels
                kl = kl_standard_normal(venc.mean.z, venc.logvar)
            else:
                emb = encode(x, edge_index, params, config.routing_iters,
                             routing=config.routing_enabled)
                z_train = emb.z
                mi_channels = emb.z_channels
                kl = None
            if van is not None:
                inner_phi_update(mi_channels, van, config.inner_steps, adam_phi)
            mi_loss, mi_diag = total_mi_loss(mi_channels, van, perm_rng)
            if config.sampled_recon:
                neg_pairs = np.asarray(
                    _sample_negatives(msg, pos_pairs.shape[0], neg_rng),
                    dtype=np.int64).reshape(-1, 2)
                recon = sampled_reconstruction_loss(z_train, pos_pairs, neg_pairs)
            else:
                recon = reconstruction_loss(z_train, targets, num_pos, num_total)
            total, report = total_loss(config.mode, recon, kl, mi_loss,
                                       config.effective_lambda)
        if not np.isfinite(report.total):
            raise NonFiniteLossError(f"non-finite loss at epoch {epoch}", history)
        grad_map = ad.backward(total)
        adam_step(theta, grads_by_name(theta, grad_map), adam_theta)

        record = {"epoch": epoch, **report.as_dict(), **mi_diag}
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            z_eval = compute_embeddings(graph, edge_index, params, config)
            if has_val:
                m = evaluate_embeddings(z_eval, split.val_pos, split.val_neg)
                record["val_auc"] = m.auc
                record["val_ap"] = m.ap
                if m.auc > best_auc:
                    best_auc = m.auc
                    best_epoch = epoch
                    best_theta = {name: t.data.copy() for name, t in theta.items()}
                    best_embeddings = z_eval
            else:
                best_epoch = epoch
                best_theta = {name: t.data.copy() for name, t in theta.items()}
                best_embeddings = z_eval
        history.append(record)

    for name, arr in best_theta.items():
        theta[name].data = arr.copy()
    return TrainedModel(encoder_params=params, van=van, config=config,
                        best_epoch=best_epoch, history=history,
                        embeddings=best_embeddings)


def evaluate_embeddings(z: np.ndarray, pos_edges, neg_edges) -> Metrics:
    pos_edges, neg_edges = list(pos_edges), list(neg_edges)
    if not pos_edges or not neg_edges:
        raise ValueError("evaluation needs non-empty positive and negative lists")
    if set(pos_edges) & set(neg_edges):
        raise ValueError("positive and negative lists overlap")
    return evaluate_scores(score_edges(z, pos_edges), score_edges(z, neg_edges))


def evaluate(model: TrainedModel, pos_edges, neg_edges) -> Metrics:
    """AUC/AP of the trained model's evaluation-mode embeddings."""
    return evaluate_embeddings(model.embeddings, pos_edges, neg_edges)


def run_link_prediction(graph: Graph, config: TrainConfig, val_frac: float,
                        test_frac: float, seeds: list[int]) -> tuple[dict, list[TrainedModel]]:
    """One split + training run per seed; aggregates test metrics."""
    runs: list[Metrics] = []
    models: list[TrainedModel] = []
    for seed in seeds:
        split = split_edges(graph, val_frac, test_frac, seed)
        model = train(graph, split, replace(config, seed=seed))
        runs.append(evaluate(model, split.test_pos, split.test_neg))
        models.append(model)
    summary = summarize_runs(runs)
    summary["seeds"] = list(seeds)
    summary["best_epochs"] = [m.best_epoch for m in models]
    return summary, models


# ---------------------------------------------------------------------------
# checkpoints: one .npz holding every parameter plus a JSON metadata blob

def save_checkpoint(path, model: TrainedModel) -> None:
    arrays = {f"enc~{k}": t.data for k, t in model.encoder_params.named().items()}
    if model.van is not None:
        arrays.update({f"van~{k}": t.data for k, t in model.van.named().items()})
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "best_epoch": model.best_epoch,
    }
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
             **arrays)


def load_checkpoint(path) -> tuple[EncoderParams, VanCollection | None, TrainConfig, dict]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
        config = TrainConfig(**meta["config"])
        feature_dim = int(data["enc~proj_w_0"].shape[0])
        rng = np.random.default_rng(0)
        params = init_encoder_params(feature_dim, config.num_channels,
                                     config.channel_dim, rng,
                                     variational=config.mode == "vdgae")
        for name, tensor in params.named().items():
            tensor.data = np.array(data[f"enc~{name}"], dtype=np.float64)
        van = None
        if any(key.startswith("van~") for key in data.files):
            van = init_van(config.num_channels, config.channel_dim, rng)
            for name, tensor in van.named().items():
                tensor.data = np.array(data[f"van~{name}"], dtype=np.float64)
    return params, van, config, meta
