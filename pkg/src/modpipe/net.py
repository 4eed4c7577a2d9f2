"""Classifier network with exact analytic gradients.

Architecture: a shared affine+ReLU encoder over hashed features (f_z), 8
independent sigmoid MLP heads, one per category (f_c), and a scalar critic
MLP over the embedding (f_d).  Everything runs in float64 numpy on one core;
gradients are hand-derived and checked against finite differences in tests.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .features import Featurizer, FeaturizerConfig, SparseVector, shared_featurizer
from .taxonomy import CATEGORIES

N_HEADS = len(CATEGORIES)

CHECKPOINT_MAGIC = "MODPIPE-CKPT-1"
CHECKPOINT_VERSION = 1

# BCE probability clamp; gradients are zero in the clamped region.
CLAMP_LO = 1e-7
CLAMP_HI = 1.0 - 1e-7


class NetError(Exception):
    pass


class CheckpointError(NetError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    d_model: int = 256
    head_hidden: int = 256
    dropout: float = 0.1
    critic_hidden: tuple[int, ...] = (300, 300)
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1 or self.d_model < 1 or self.head_hidden < 1:
            raise NetError("widths must be >= 1")
        if any(w < 1 for w in self.critic_hidden):
            raise NetError("critic widths must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            raise NetError(f"dropout must lie in [0, 1), got {self.dropout}")

    def as_obj(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "d_model": self.d_model,
            "head_hidden": self.head_hidden,
            "dropout": self.dropout,
            "critic_hidden": list(self.critic_hidden),
            "seed": self.seed,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "NetworkConfig":
        return cls(
            input_dim=int(obj["input_dim"]),
            d_model=int(obj["d_model"]),
            head_hidden=int(obj["head_hidden"]),
            dropout=float(obj["dropout"]),
            critic_hidden=tuple(obj["critic_hidden"]),
            seed=int(obj["seed"]),
        )


def theta_z_keys() -> tuple[str, ...]:
    return ("Wz", "bz")


def theta_c_keys() -> tuple[str, ...]:
    return ("Wh1", "bh1", "Wh2", "bh2")


def theta_d_keys(cfg: NetworkConfig) -> tuple[str, ...]:
    keys = []
    for i in range(len(cfg.critic_hidden) + 1):
        keys.extend([f"Wd{i}", f"bd{i}"])
    return tuple(keys)


def all_keys(cfg: NetworkConfig) -> tuple[str, ...]:
    return theta_z_keys() + theta_c_keys() + theta_d_keys(cfg)


def init_params(cfg: NetworkConfig) -> dict[str, np.ndarray]:
    """Seeded initialization.  Inputs are L2-normalized, so the encoder uses
    unit-scale weights; heads use 1/sqrt(fan_in); the critic starts inside
    the clip box it will be confined to."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    params: dict[str, np.ndarray] = {}
    params["Wz"] = rng.normal(0.0, 1.0, size=(cfg.input_dim, cfg.d_model))
    params["bz"] = np.zeros(cfg.d_model)
    params["Wh1"] = rng.normal(0.0, 1.0 / np.sqrt(cfg.d_model), size=(N_HEADS, cfg.d_model, cfg.head_hidden))
    params["bh1"] = np.zeros((N_HEADS, cfg.head_hidden))
    params["Wh2"] = rng.normal(0.0, 1.0 / np.sqrt(cfg.head_hidden), size=(N_HEADS, cfg.head_hidden))
    params["bh2"] = np.zeros(N_HEADS)
    widths = (cfg.d_model,) + cfg.critic_hidden + (1,)
    for i in range(len(widths) - 1):
        params[f"Wd{i}"] = rng.uniform(-0.01, 0.01, size=(widths[i], widths[i + 1]))
        params[f"bd{i}"] = np.zeros(widths[i + 1])
    return params


def clone_params(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in params.items()}


class RowSparseGrad:
    """Encoder weight gradient restricted to feature rows active in a batch;
    keeps full-dimensional training from materializing input_dim × d_model."""

    def __init__(self, rows: np.ndarray, block: np.ndarray, shape: tuple[int, int]):
        self.rows = rows
        self.block = block
        self.shape = shape

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.shape)
        dense[self.rows] = self.block
        return dense

    def __mul__(self, scalar: float) -> "RowSparseGrad":
        return RowSparseGrad(self.rows, self.block * scalar, self.shape)

    __rmul__ = __mul__

    def add(self, other: "RowSparseGrad") -> "RowSparseGrad":
        rows = np.union1d(self.rows, other.rows)
        block = np.zeros((rows.size, self.shape[1]))
        block[np.searchsorted(rows, self.rows)] += self.block
        block[np.searchsorted(rows, other.rows)] += other.block
        return RowSparseGrad(rows, block, self.shape)


def apply_sgd(params: dict[str, np.ndarray], grads: dict, lr: float, keys: Sequence[str]):
    for key in keys:
        g = grads[key]
        if isinstance(g, RowSparseGrad):
            params[key][g.rows] -= lr * g.block
        else:
            params[key] -= lr * g


def add_grads(into: dict, frm: dict):
    for key, g in frm.items():
        if key not in into:
            into[key] = g
            continue
        a = into[key]
        if isinstance(a, RowSparseGrad) and isinstance(g, RowSparseGrad):
            into[key] = a.add(g)
        elif isinstance(a, RowSparseGrad) or isinstance(g, RowSparseGrad):
            a = a.to_dense() if isinstance(a, RowSparseGrad) else a
            g = g.to_dense() if isinstance(g, RowSparseGrad) else g
            into[key] = a + g
        else:
            into[key] = a + g


def densify_grads(grads: dict) -> dict[str, np.ndarray]:
    return {k: (v.to_dense() if isinstance(v, RowSparseGrad) else v) for k, v in grads.items()}


def _as_matrix(x, cfg: NetworkConfig) -> sp.csr_matrix:
    if isinstance(x, SparseVector):
        if x.dim != cfg.input_dim:
            raise NetError(f"input dimensionality {x.dim} != encoder input {cfg.input_dim}")
        return sp.csr_matrix((x.values, x.indices, np.array([0, x.nnz])), shape=(1, x.dim))
    if sp.issparse(x):
        mat = x.tocsr()
    else:
        mat = sp.csr_matrix(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    if mat.shape[1] != cfg.input_dim:
        raise NetError(f"input dimensionality {mat.shape[1]} != encoder input {cfg.input_dim}")
    return mat


@dataclass
class EncoderForward:
    X: sp.csr_matrix
    Hpre: np.ndarray  # (B, d_model)
    H: np.ndarray  # (B, d_model)


@dataclass
class HeadsForward:
    A1: np.ndarray  # (N_HEADS, B, hidden) preactivation
    Z1: np.ndarray  # (N_HEADS, B, hidden) after ReLU and dropout scaling
    masks: Optional[np.ndarray]  # (N_HEADS, B, hidden) keep mask, train mode only
    logits: np.ndarray  # (N_HEADS, B)
    P: np.ndarray  # (N_HEADS, B)


@dataclass
class CriticForward:
    H: np.ndarray
    pre: list[np.ndarray]  # per-layer preactivations
    post: list[np.ndarray]  # per-layer outputs after ReLU (last layer linear)
    out: np.ndarray  # (B,)


def encode_batch(X, params: dict, cfg: NetworkConfig) -> EncoderForward:
    X = _as_matrix(X, cfg)
    Hpre = X @ params["Wz"] + params["bz"]
    Hpre = np.asarray(Hpre)
    return EncoderForward(X=X, Hpre=Hpre, H=np.maximum(Hpre, 0.0))


def encode(x, params: dict, cfg: NetworkConfig) -> np.ndarray:
    """Embedding f_z.  A single SparseVector yields shape (d_model,), a
    batch yields (B, d_model)."""
    single = isinstance(x, SparseVector)
    fwd = encode_batch(x, params, cfg)
    return fwd.H[0] if single else fwd.H


def draw_dropout_masks(cfg: NetworkConfig, batch_size: int, rng: np.random.Generator) -> Optional[np.ndarray]:
    if cfg.dropout == 0.0:
        return None
    return (rng.random((N_HEADS, batch_size, cfg.head_hidden)) >= cfg.dropout).astype(np.float64)


def heads_from_h(
    H: np.ndarray,
    params: dict,
    cfg: NetworkConfig,
    masks: Optional[np.ndarray] = None,
) -> HeadsForward:
    B = H.shape[0]
    # One GEMM for all heads: (B, d) @ (d, 8*hidden).
    W1 = params["Wh1"]
    A1 = (H @ W1.transpose(1, 0, 2).reshape(cfg.d_model, N_HEADS * cfg.head_hidden)).reshape(
        B, N_HEADS, cfg.head_hidden
    )
    A1 = np.ascontiguousarray(A1.transpose(1, 0, 2)) + params["bh1"][:, None, :]
    Z1 = np.maximum(A1, 0.0)
    if masks is not None:
        Z1 = Z1 * masks / (1.0 - cfg.dropout)
    logits = np.matmul(Z1, params["Wh2"][:, :, None])[:, :, 0] + params["bh2"][:, None]
    P = 1.0 / (1.0 + np.exp(-logits))
    return HeadsForward(A1=A1, Z1=Z1, masks=masks, logits=logits, P=P)


def heads_forward(
    h: np.ndarray,
    params: dict,
    cfg: NetworkConfig,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
    masks: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Per-category probabilities f_c.  Dropout applies only in train mode."""
    h = np.asarray(h, dtype=np.float64)
    single = h.ndim == 1
    H = h[None, :] if single else h
    if train and masks is None and cfg.dropout > 0.0:
        if rng is None:
            raise NetError("train-mode heads_forward needs an rng or explicit masks")
        masks = draw_dropout_masks(cfg, H.shape[0], rng)
    if not train:
        masks = None
    fwd = heads_from_h(H, params, cfg, masks)
    return fwd.P[:, 0] if single else fwd.P


def critic_from_h(H: np.ndarray, params: dict, cfg: NetworkConfig) -> CriticForward:
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = []
    z = H
    n_layers = len(cfg.critic_hidden) + 1
    for i in range(n_layers):
        a = z @ params[f"Wd{i}"] + params[f"bd{i}"]
        pre.append(a)
        z = np.maximum(a, 0.0) if i < n_layers - 1 else a
        post.append(z)
    return CriticForward(H=H, pre=pre, post=post, out=z[:, 0])


def critic_forward(h: np.ndarray, params: dict, cfg: NetworkConfig) -> Union[float, np.ndarray]:
    """Critic value f_d over an embedding or a batch of embeddings."""
    h = np.asarray(h, dtype=np.float64)
    single = h.ndim == 1
    fwd = critic_from_h(h[None, :] if single else h, params, cfg)
    return float(fwd.out[0]) if single else fwd.out


def heads_backward(
    fwd: HeadsForward,
    H: np.ndarray,
    Y: np.ndarray,
    W: np.ndarray,
    params: dict,
    cfg: NetworkConfig,
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradients of the masked mean BCE w.r.t. head parameters, plus the
    gradient flowing back into the embedding.  Y and W are (8, B)."""
    B = H.shape[0]
    labeled = W.sum(axis=0)
    coeff = np.zeros_like(W)
    np.divide(W, labeled[None, :] * B, out=coeff, where=labeled[None, :] > 0)
    G = coeff * (fwd.P - Y)
    # The loss clamps probabilities; inside the clamped region it is constant.
    G[(fwd.P < CLAMP_LO) | (fwd.P > CLAMP_HI)] = 0.0

    dWh2 = np.matmul(G[:, None, :], fwd.Z1)[:, 0, :]
    dbh2 = G.sum(axis=1)
    dZ1 = G[:, :, None] * params["Wh2"][:, None, :]
    if fwd.masks is not None:
        dZ1 = dZ1 * fwd.masks / (1.0 - cfg.dropout)
    dA1 = dZ1 * (fwd.A1 > 0.0)
    dWh1 = np.einsum("bd,kbh->kdh", H, dA1, optimize=True)
    dbh1 = dA1.sum(axis=1)
    dH = np.einsum("kbh,kdh->bd", dA1, params["Wh1"], optimize=True)
    return {"Wh1": dWh1, "bh1": dbh1, "Wh2": dWh2, "bh2": dbh2}, dH


def encoder_backward(fwd: EncoderForward, dH: np.ndarray, params: dict) -> dict:
    dHpre = dH * (fwd.Hpre > 0.0)
    rows = np.unique(fwd.X.indices)
    if rows.size:
        block = np.asarray(fwd.X[:, rows].T @ dHpre)
    else:
        block = np.zeros((0, params["Wz"].shape[1]))
    return {
        "Wz": RowSparseGrad(rows, block, params["Wz"].shape),
        "bz": dHpre.sum(axis=0),
    }


def critic_backward(
    fwd: CriticForward,
    dout: np.ndarray,
    params: dict,
    cfg: NetworkConfig,
    need_dh: bool = False,
) -> tuple[dict[str, np.ndarray], Optional[np.ndarray]]:
    """Backpropagate per-sample output gradients through the critic.  Returns
    θ_d gradients and, when requested, the gradient w.r.t. the embedding."""
    n_layers = len(cfg.critic_hidden) + 1
    grads: dict[str, np.ndarray] = {}
    dz = dout[:, None]
    for i in reversed(range(n_layers)):
        da = dz if i == n_layers - 1 else dz * (fwd.pre[i] > 0.0)
        below = fwd.H if i == 0 else fwd.post[i - 1]
        grads[f"Wd{i}"] = below.T @ da
        grads[f"bd{i}"] = da.sum(axis=0)
        if i > 0 or need_dh:
            dz = da @ params[f"Wd{i}"].T
    return grads, (dz if need_dh else None)


def clip_critic(params: dict, cfg: NetworkConfig, bound: float):
    for key in theta_d_keys(cfg):
        np.clip(params[key], -bound, bound, out=params[key])


def max_critic_abs(params: dict, cfg: NetworkConfig) -> float:
    return max(float(np.max(np.abs(params[key]))) for key in theta_d_keys(cfg))


class Model:
    """Bundle of configs and parameters; scoring is evaluation-mode only."""

    def __init__(self, net_config: NetworkConfig, feat_config: FeaturizerConfig, params: dict[str, np.ndarray]):
        if net_config.input_dim != feat_config.dim:
            raise NetError("featurizer dimensionality does not match encoder input")
        self.net_config = net_config
        self.feat_config = feat_config
        self.params = params

    @property
    def featurizer(self) -> Featurizer:
        return shared_featurizer(self.feat_config)

    def score_matrix(self, X) -> np.ndarray:
        fwd = encode_batch(X, self.params, self.net_config)
        return heads_from_h(fwd.H, self.params, self.net_config, masks=None).P

    def score_texts(self, texts: Sequence[str]) -> np.ndarray:
        return self.score_matrix(self.featurizer.matrix(list(texts)))

    def score_text(self, text: str) -> np.ndarray:
        return self.score_texts([text])[:, 0]

    def score_map(self, text: str) -> dict[str, float]:
        probs = self.score_text(text)
        return {c.value: float(p) for c, p in zip(CATEGORIES, probs)}

    def clone(self) -> "Model":
        return Model(self.net_config, self.feat_config, clone_params(self.params))

    def checkpoint_id(self) -> str:
        return checkpoint_digest(self.params, self.net_config, self.feat_config)[:12]


def new_model(net_config: NetworkConfig, feat_config: FeaturizerConfig) -> Model:
    return Model(net_config, feat_config, init_params(net_config))


def _encode_array(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return {
        "shape": list(arr.shape),
        "dtype": "<f8",
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def _decode_array(obj: dict) -> np.ndarray:
    if obj.get("dtype") != "<f8":
        raise CheckpointError(f"unsupported array dtype {obj.get('dtype')!r}")
    raw = base64.b64decode(obj["data"])
    arr = np.frombuffer(raw, dtype="<f8").reshape(obj["shape"])
    return arr.astype(np.float64).copy()


def _payload(params: dict, net_config: NetworkConfig, feat_config: FeaturizerConfig) -> dict:
    return {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "network": net_config.as_obj(),
        "featurizer": feat_config.as_obj(),
        "arrays": {key: _encode_array(params[key]) for key in sorted(params)},
    }


def checkpoint_digest(params: dict, net_config: NetworkConfig, feat_config: FeaturizerConfig) -> str:
    payload = _payload(params, net_config, feat_config)
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def save(params: dict, net_config: NetworkConfig, feat_config: FeaturizerConfig, path) -> str:
    """Write a checkpoint; returns its id (digest prefix)."""
    payload = _payload(params, net_config, feat_config)
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")).hexdigest()
    payload["sha256"] = digest
    with open(Path(path), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    return digest[:12]


def save_model(model: Model, path) -> str:
    return save(model.params, model.net_config, model.feat_config, path)


def load(path) -> Model:
    try:
        with open(Path(path), encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a model checkpoint (bad magic)")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {payload.get('version')!r}")
    stored = payload.pop("sha256", None)
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(canon.encode("utf-8")).hexdigest()
    if stored != digest:
        raise CheckpointError(f"checkpoint {path} failed its integrity check")
    net_config = NetworkConfig.from_obj(payload["network"])
    feat_config = FeaturizerConfig.from_obj(payload["featurizer"])
    params = {key: _decode_array(obj) for key, obj in payload["arrays"].items()}
    expected = set(all_keys(net_config))
    if set(params) != expected:
        raise CheckpointError("checkpoint parameter set does not match its network config")
    return Model(net_config, feat_config, params)
