"""Two-step asynchronous training loop.

Each step runs one forward pass per batch. Step 1 updates the modality
prototypes from the prototype-side loss with embeddings held constant.
Step 2 updates the encoder and the identity-prototype head from the
feature-side losses, evaluated against the modality prototypes as they were
BEFORE step 1. A config flag switches to the alternating-batch variant where
the two steps consume different batches.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Dataset, IdentityPrototypeMatrix, ModalityPrototypeMatrix
from .data import pk_sample
from .encoder import (
    EncoderParams,
    SGDState,
    encoder_backward,
    encoder_forward,
    init_encoder,
    lr_schedule,
    sgd_step,
)
from .errors import ContractViolation, NumericError
from .evaluation import mean_intra_cross_cosine
from .losses import (
    CombinedLossConfig,
    am_softmax_loss,
    circle_loss,
    combined_loss,
)

VARIANTS = ("SOFTMAX", "SAS", "SAS_FM", "SAS_FM_AST", "SAS_FM_WM", "AM_SOFTMAX", "CIRCLE")

TRAINLOG_FIELDS = [
    "epoch",
    "lr",
    "loss_total",
    "loss_w",
    "loss_f",
    "loss_softmax",
    "loss_ast",
    "probe_cosine",
]


@dataclass
class TrainConfig:
    variant: str = "SAS_FM_AST"
    alpha: float = 0.7
    beta: float = 1.0
    epochs: int = 100
    batches_per_epoch: int = 10
    p: int = 8
    k: int = 8
    hidden_dims: tuple = (64,)
    embed_dim: int = 16
    base_lr: float = 0.01
    milestones: tuple = (40, 80)
    lr_factor: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    am_margin: float = 0.3
    am_scale: float = 15.0
    circle_gamma: float = 32.0
    circle_margin: float = 0.25
    squared_ast: bool = False
    alternate_batches: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ContractViolation(f"unknown variant {self.variant!r}")
        if self.epochs < 0 or self.batches_per_epoch <= 0:
            raise ContractViolation("epochs must be >= 0, batches_per_epoch > 0")

    def loss_config(self) -> CombinedLossConfig:
        """Map the variant onto the combined-loss switches."""
        if self.variant == "SOFTMAX":
            return CombinedLossConfig(alpha=0.0, beta=0.0)
        if self.variant == "SAS":
            return CombinedLossConfig(alpha=self.alpha, beta=0.0)
        if self.variant == "SAS_FM":
            return CombinedLossConfig(alpha=self.alpha, beta=0.0, use_feature_mask=True)
        if self.variant == "SAS_FM_AST":
            if self.beta <= 0.0:
                raise ContractViolation("SAS_FM_AST requires beta > 0")
            return CombinedLossConfig(
                alpha=self.alpha,
                beta=self.beta,
                use_feature_mask=True,
                squared_ast=self.squared_ast,
            )
        if self.variant == "SAS_FM_WM":
            return CombinedLossConfig(
                alpha=self.alpha, beta=0.0, use_feature_mask=True, use_weight_mask=True
            )
        raise ContractViolation(f"variant {self.variant} has no combined-loss mapping")


@dataclass
class TrainState:
    params: EncoderParams
    modality_prototypes: ModalityPrototypeMatrix
    identity_prototypes: IdentityPrototypeMatrix
    opt_encoder: SGDState
    opt_modality: SGDState
    opt_identity: SGDState


@dataclass
class TrainLog:
    records: list[dict] = field(default_factory=list)

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=TRAINLOG_FIELDS)
            writer.writeheader()
            for rec in self.records:
                writer.writerow({k: repr(rec[k]) if k != "epoch" else rec[k] for k in TRAINLOG_FIELDS})


def init_train_state(dataset: Dataset, config: TrainConfig) -> TrainState:
    dims = [dataset.input_dim, *config.hidden_dims, config.embed_dim]
    params = init_encoder(dims, config.seed)
    n = dataset.num_identities
    # seed offsets decorrelate the heads from the encoder init
    rng_mod = np.random.default_rng(config.seed + 1_000_003)
    rng_id = np.random.default_rng(config.seed + 2_000_003)
    scale = np.sqrt(1.0 / config.embed_dim)
    w_mod = ModalityPrototypeMatrix(rng_mod.normal(0.0, scale, size=(config.embed_dim, 2 * n)))
    w_id = IdentityPrototypeMatrix(rng_id.normal(0.0, scale, size=(config.embed_dim, n)))
    return TrainState(
        params=params,
        modality_prototypes=w_mod,
        identity_prototypes=w_id,
        opt_encoder=SGDState(params.weights + params.biases),
        opt_modality=SGDState([w_mod.W]),
        opt_identity=SGDState([w_id.W]),
    )


def _feature_side_grads(state: TrainState, embeddings, ids, mods, config: TrainConfig, w_mod_snapshot):
    """Gradients that flow to the encoder / identity head, computed against a
    snapshot of the modality prototypes."""
    if config.variant == "AM_SOFTMAX":
        res = am_softmax_loss(
            embeddings, state.identity_prototypes, ids, config.am_margin, config.am_scale
        )
        comps = {"loss_w": 0.0, "loss_f": 0.0, "loss_softmax": res.value, "loss_ast": 0.0}
        return res.value, res.grad_embeddings, res.grad_prototypes, comps
    if config.variant == "CIRCLE":
        res = circle_loss(
            embeddings, state.identity_prototypes, ids, config.circle_gamma, config.circle_margin
        )
        comps = {"loss_w": 0.0, "loss_f": 0.0, "loss_softmax": res.value, "loss_ast": 0.0}
        return res.value, res.grad_embeddings, res.grad_prototypes, comps
    res = combined_loss(
        embeddings,
        ModalityPrototypeMatrix(w_mod_snapshot),
        state.identity_prototypes,
        ids,
        mods,
        config.loss_config(),
    )
    return res.value, res.grad_embeddings, res.grad_identity_prototypes, res.components


def train_step(
    state: TrainState,
    dataset: Dataset,
    batch_indices: np.ndarray,
    config: TrainConfig,
    lr: float,
    do_w_step: bool = True,
    do_f_step: bool = True,
) -> dict:
    """One asynchronous update on one batch. Returns step metrics."""
    x = dataset.features[batch_indices]
    ids = dataset.identities[batch_indices]
    mods = dataset.modalities[batch_indices]
    embeddings, cache = encoder_forward(state.params, x)

    loss_cfg = None
    if config.variant not in ("AM_SOFTMAX", "CIRCLE"):
        loss_cfg = config.loss_config()

    w_mod_snapshot = state.modality_prototypes.W.copy()

    # step 1: prototype-side update, embeddings held constant
    if do_w_step and loss_cfg is not None and loss_cfg.alpha > 0.0:
        res = combined_loss(
            embeddings,
            state.modality_prototypes,
            state.identity_prototypes,
            ids,
            mods,
            loss_cfg,
        )
        if not np.isfinite(res.value):
            raise NumericError(_diverged_message(batch_indices, res.value))
        sgd_step(
            [state.modality_prototypes.W],
            [res.grad_modality_prototypes],
            state.opt_modality,
            lr,
            config.momentum,
            config.weight_decay,
        )

    metrics = {"loss_total": 0.0}
    if do_f_step:
        # step 2: encoder + identity head, against pre-step-1 prototypes
        value, grad_emb, grad_id, comps = _feature_side_grads(
            state, embeddings, ids, mods, config, w_mod_snapshot
        )
        if not np.isfinite(value):
            raise NumericError(_diverged_message(batch_indices, value))
        grad_w, grad_b = encoder_backward(state.params, cache, grad_emb)
        sgd_step(
            state.params.weights + state.params.biases,
            grad_w + grad_b,
            state.opt_encoder,
            lr,
            config.momentum,
            config.weight_decay,
        )
        if grad_id is not None:
            sgd_step(
                [state.identity_prototypes.W],
                [grad_id],
                state.opt_identity,
                lr,
                config.momentum,
                config.weight_decay,
            )
        metrics = {"loss_total": value, **comps}
    return metrics


def _diverged_message(batch_indices, value) -> str:
    return (
        f"training diverged (loss={value}); offending batch indices: "
        f"{np.asarray(batch_indices).tolist()}"
    )


def train(dataset: Dataset, config: TrainConfig):
    """Full training run. Returns (TrainState, TrainLog); deterministic per seed."""
    state = init_train_state(dataset, config)
    log = TrainLog()
    batch_seed = np.random.default_rng(config.seed + 3_000_003)
    for epoch in range(config.epochs):
        lr = lr_schedule(config.base_lr, epoch, list(config.milestones), config.lr_factor)
        epoch_metrics: dict[str, float] = {}
        n_f_steps = 0
        for b in range(config.batches_per_epoch):
            idx = pk_sample(dataset, config.p, config.k, int(batch_seed.integers(2**63)))
            if config.alternate_batches:
                do_w = b % 2 == 0
                do_f = not do_w
            else:
                do_w = do_f = True
            metrics = train_step(state, dataset, idx, config, lr, do_w, do_f)
            if do_f:
                n_f_steps += 1
                for key, val in metrics.items():
                    epoch_metrics[key] = epoch_metrics.get(key, 0.0) + val
        emb, _ = encoder_forward(state.params, dataset.features)
        probe = mean_intra_cross_cosine(emb, dataset.identities, dataset.modalities)
        rec = {k: epoch_metrics.get(k, 0.0) / max(n_f_steps, 1) for k in TRAINLOG_FIELDS[2:-1]}
        rec.update({"epoch": epoch, "lr": lr, "probe_cosine": probe})
        log.records.append(rec)
    return state, log


def variant_config(base: TrainConfig, variant: str, seed: int | None = None) -> TrainConfig:
    """Derive a config for one ablation variant, optionally reseeded."""
    kwargs = {"variant": variant}
    if seed is not None:
        kwargs["seed"] = seed
    return replace(base, **kwargs)
