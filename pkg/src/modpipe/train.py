"""Training: masked per-category cross-entropy (L_c), the domain critic
loss (L_d), and the adversarial minimax loop.

The critic estimates the Wasserstein distance between source and target
embedding distributions; its weights are clipped into a compact box after
every ascent step to enforce the Lipschitz constraint, and the encoder is
trained to shrink the estimated distance while keeping classification loss
low: min over (θ_z, θ_c) of L_c + λ · max over θ_d of L_d.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import net
from .corpus import Dataset, consolidate
from .features import FeaturizerConfig, shared_featurizer
from .net import (
    CLAMP_HI,
    CLAMP_LO,
    Model,
    NetworkConfig,
    add_grads,
    apply_sgd,
    clip_critic,
    critic_backward,
    critic_from_h,
    draw_dropout_masks,
    encode_batch,
    encoder_backward,
    heads_backward,
    heads_from_h,
)
from .taxonomy import CATEGORIES, Label, LabelVector


class TrainError(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    batch_size: int = 256
    epochs: int = 3
    lam: float = 0.01
    clip: float = 0.01
    critic_steps: int = 1
    seed: int = 0
    mode: str = "supervised"

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0 or self.critic_steps < 1:
            raise TrainError("rates and sizes must be positive")
        if self.clip <= 0:
            raise TrainError("critic clip bound must be > 0")
        if self.mode not in ("supervised", "wdat"):
            raise TrainError(f"unknown training mode {self.mode!r}")

    @classmethod
    def from_obj(cls, obj: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in obj.items() if k in known})


@dataclass
class StepReport:
    L_c: float
    L_d: Optional[float]
    objective: float


@dataclass
class EpochStats:
    epoch: int
    L_c: float
    L_d: Optional[float]
    objective: float
    val_loss: Optional[float] = None

    def as_obj(self) -> dict:
        return {
            "epoch": self.epoch,
            "L_c": self.L_c,
            "L_d": self.L_d,
            "objective": self.objective,
            "val_loss": self.val_loss,
        }


@dataclass
class LossReport:
    entries: list[EpochStats] = field(default_factory=list)

    def as_obj(self) -> list[dict]:
        return [e.as_obj() for e in self.entries]


@dataclass
class TrainResult:
    model: Model
    report: LossReport


def masked_bce(P: np.ndarray, Y: np.ndarray, W: np.ndarray) -> float:
    """Mean over samples of the per-sample mean BCE over labeled categories.
    Samples with no labeled category contribute zero."""
    Pc = np.clip(P, CLAMP_LO, CLAMP_HI)
    bce = -(Y * np.log(Pc) + (1.0 - Y) * np.log1p(-Pc))
    weighted = (W * bce).sum(axis=0)
    labeled = W.sum(axis=0)
    per_sample = np.divide(weighted, labeled, out=np.zeros_like(weighted), where=labeled > 0)
    return float(per_sample.mean()) if per_sample.size else 0.0


def classification_loss(probabilities: Sequence[float], target: LabelVector) -> float:
    """L_c for a single sample: mean BCE over the labeled categories."""
    probs = np.asarray(probabilities, dtype=np.float64).reshape(len(CATEGORIES), 1)
    Y, W = targets_matrix([target])
    return masked_bce(probs, Y, W)


def targets_matrix(vectors: Sequence[LabelVector]) -> tuple[np.ndarray, np.ndarray]:
    """Label and mask matrices of shape (8, N) from label vectors."""
    n = len(vectors)
    Y = np.zeros((len(CATEGORIES), n))
    W = np.zeros((len(CATEGORIES), n))
    for i, vec in enumerate(vectors):
        for k, value in enumerate(vec.values):
            if value is Label.UNLABELED:
                continue
            W[k, i] = 1.0
            if value is Label.POSITIVE:
                Y[k, i] = 1.0
    return Y, W


def labeled_arrays(ds: Dataset, feat_config: FeaturizerConfig):
    """Feature matrix plus target/mask matrices for the labeled samples of a
    dataset.  Samples without any labeled category are skipped."""
    texts, vectors = [], []
    for s in ds:
        vec = s.consolidated
        if vec is None and s.labels:
            vec = consolidate(s)
        if vec is None or not vec.labeled():
            continue
        texts.append(s.text)
        vectors.append(vec)
    X = shared_featurizer(feat_config).matrix(texts)
    Y, W = targets_matrix(vectors)
    return X, Y, W


def _critic_means(Hs: np.ndarray, Ht: np.ndarray, params: dict, cfg: NetworkConfig):
    cs = critic_from_h(Hs, params, cfg)
    ct = critic_from_h(Ht, params, cfg)
    diff = float(cs.out.mean()) - float(ct.out.mean())
    return cs, ct, diff


def critic_loss(source, target, model: Model) -> float:
    """L_d = |E_source f_d(f_z(x)) − E_target f_d(f_z(x))|."""
    Xs = _features_of(source, model)
    Xt = _features_of(target, model)
    if Xs.shape[0] == 0 or Xt.shape[0] == 0:
        raise TrainError("critic loss needs non-empty source and target batches")
    Hs = encode_batch(Xs, model.params, model.net_config).H
    Ht = encode_batch(Xt, model.params, model.net_config).H
    _, _, diff = _critic_means(Hs, Ht, model.params, model.net_config)
    return abs(diff)


def _features_of(batch, model: Model):
    if sp.issparse(batch):
        return batch.tocsr()
    items = list(batch)
    if items and isinstance(items[0], str):
        return model.featurizer.matrix(items)
    raise TrainError("batch must be a sparse matrix or a sequence of texts")


def critic_ascent(params: dict, net_cfg: NetworkConfig, cfg: TrainConfig, Hs: np.ndarray, Ht: np.ndarray) -> float:
    """cfg.critic_steps gradient ascents on θ_d maximizing L_d, clipping into
    [−clip, clip] after each step.  Returns the post-ascent L_d."""
    bs, bt = Hs.shape[0], Ht.shape[0]
    for _ in range(cfg.critic_steps):
        cs, ct, diff = _critic_means(Hs, Ht, params, net_cfg)
        sign = 1.0 if diff >= 0 else -1.0
        gs, _ = critic_backward(cs, np.full(bs, sign / bs), params, net_cfg)
        gt, _ = critic_backward(ct, np.full(bt, -sign / bt), params, net_cfg)
        for key in gs:
            params[key] += cfg.lr * (gs[key] + gt[key])
        clip_critic(params, net_cfg, cfg.clip)
    _, _, diff = _critic_means(Hs, Ht, params, net_cfg)
    return abs(diff)


def supervised_step(
    params: dict,
    net_cfg: NetworkConfig,
    cfg: TrainConfig,
    Xb,
    Yb: np.ndarray,
    Wb: np.ndarray,
    dropout_rng: np.random.Generator,
) -> StepReport:
    fs = encode_batch(Xb, params, net_cfg)
    masks = draw_dropout_masks(net_cfg, fs.H.shape[0], dropout_rng)
    heads = heads_from_h(fs.H, params, net_cfg, masks)
    L_c = masked_bce(heads.P, Yb, Wb)
    if not np.isfinite(L_c):
        raise TrainError(f"non-finite classification loss: {L_c}")
    grads_c, dH = heads_backward(heads, fs.H, Yb, Wb, params, net_cfg)
    grads = dict(grads_c)
    add_grads(grads, encoder_backward(fs, dH, params))
    apply_sgd(params, grads, cfg.lr, net.theta_z_keys() + net.theta_c_keys())
    return StepReport(L_c=L_c, L_d=None, objective=L_c)


def wdat_step(
    params: dict,
    net_cfg: NetworkConfig,
    cfg: TrainConfig,
    Xs,
    Yb: np.ndarray,
    Wb: np.ndarray,
    Xt,
    dropout_rng: np.random.Generator,
) -> StepReport:
    """One minimax step: critic ascent on θ_d, then one descent step on
    (θ_z, θ_c) against L_c + λ·L_d with θ_d frozen."""
    fs = encode_batch(Xs, params, net_cfg)
    ft = encode_batch(Xt, params, net_cfg)
    bs, bt = fs.H.shape[0], ft.H.shape[0]
    if bt == 0:
        raise TrainError("wdat step needs a non-empty target batch")

    critic_ascent(params, net_cfg, cfg, fs.H, ft.H)

    cs, ct, diff = _critic_means(fs.H, ft.H, params, net_cfg)
    L_d = abs(diff)
    sign = 1.0 if diff >= 0 else -1.0

    masks = draw_dropout_masks(net_cfg, bs, dropout_rng)
    heads = heads_from_h(fs.H, params, net_cfg, masks)
    L_c = masked_bce(heads.P, Yb, Wb)
    if not np.isfinite(L_c) or not np.isfinite(L_d):
        raise TrainError(f"non-finite loss: L_c={L_c} L_d={L_d}")

    grads_c, dH_src = heads_backward(heads, fs.H, Yb, Wb, params, net_cfg)
    grads = dict(grads_c)
    # λ = 0 must reproduce the supervised update bit-for-bit, so the critic
    # term is skipped entirely rather than multiplied through by zero.
    if cfg.lam != 0.0:
        _, dHs_d = critic_backward(cs, np.full(bs, sign / bs), params, net_cfg, need_dh=True)
        _, dHt_d = critic_backward(ct, np.full(bt, -sign / bt), params, net_cfg, need_dh=True)
        dH_src = dH_src + cfg.lam * dHs_d
        add_grads(grads, encoder_backward(ft, cfg.lam * dHt_d, params))
    add_grads(grads, encoder_backward(fs, dH_src, params))
    apply_sgd(params, grads, cfg.lr, net.theta_z_keys() + net.theta_c_keys())
    return StepReport(L_c=L_c, L_d=L_d, objective=L_c + cfg.lam * L_d)


def _validation_loss(params: dict, net_cfg: NetworkConfig, Xv, Yv, Wv) -> float:
    fwd = encode_batch(Xv, params, net_cfg)
    heads = heads_from_h(fwd.H, params, net_cfg, masks=None)
    return masked_bce(heads.P, Yv, Wv)


def train(
    train_set: Dataset,
    cfg: TrainConfig,
    net_cfg: NetworkConfig,
    feat_cfg: FeaturizerConfig,
    validation: Optional[Dataset] = None,
    target_pool: Optional[Dataset] = None,
) -> TrainResult:
    """Full training run.  Deterministic for fixed seeds: separate RNG
    streams drive shuffling, dropout, and target-batch sampling so that the
    supervised and λ=0 adversarial paths consume identical draws."""
    X, Y, W = labeled_arrays(train_set, feat_cfg)
    n = X.shape[0]
    if n == 0:
        raise TrainError("training set has no labeled samples")
    if cfg.mode == "wdat":
        if target_pool is None or len(target_pool) == 0:
            raise TrainError("wdat mode needs an unlabeled target pool")
        Xt_all = shared_featurizer(feat_cfg).matrix([s.text for s in target_pool])

    shuffle_rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(1,)))
    dropout_rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(2,)))
    target_rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(3,)))

    params = net.init_params(net_cfg)
    if validation is not None and len(validation):
        Xv, Yv, Wv = labeled_arrays(validation, feat_cfg)
    else:
        validation = None

    report = LossReport()
    best: Optional[tuple[float, dict]] = None
    for epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        steps: list[StepReport] = []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            Xb, Yb, Wb = X[idx], Y[:, idx], W[:, idx]
            if cfg.mode == "wdat":
                t_idx = target_rng.choice(Xt_all.shape[0], size=min(cfg.batch_size, Xt_all.shape[0]), replace=False)
                steps.append(wdat_step(params, net_cfg, cfg, Xb, Yb, Wb, Xt_all[t_idx], dropout_rng))
            else:
                steps.append(supervised_step(params, net_cfg, cfg, Xb, Yb, Wb, dropout_rng))
        entry = EpochStats(
            epoch=epoch,
            L_c=float(np.mean([s.L_c for s in steps])),
            L_d=(float(np.mean([s.L_d for s in steps])) if cfg.mode == "wdat" else None),
            objective=float(np.mean([s.objective for s in steps])),
        )
        if validation is not None:
            entry.val_loss = _validation_loss(params, net_cfg, Xv, Yv, Wv)
            if best is None or entry.val_loss < best[0]:
                best = (entry.val_loss, net.clone_params(params))
        report.entries.append(entry)

    if validation is not None and best is not None:
        params = best[1]
    return TrainResult(model=Model(net_cfg, feat_cfg, params), report=report)
