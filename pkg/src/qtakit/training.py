"""Target normalization, rotational augmentation, the optimizer, and
the training loop with best-validation checkpointing.

Determinism contract: everything downstream of a seed (initialization,
epoch shuffles, per-molecule rotations) derives from one SeedSequence,
so two runs with the same seed produce bit-identical checkpoints.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import NumericError, TrainingDivergedError, ValidationError
from .geometry import rotate5, sample_rotation
from .graphs import GraphInstance, build_graph, pack_graphs, rotate_graph
from .losses import element_weights, loss_v1, loss_v2
from .qtnet import (
    ModelConfig,
    config_hash,
    forward_vars,
    graph_features,
    init_params,
    wrap_params,
)

__all__ = [
    "TargetStats",
    "targets_to_array",
    "augment_targets",
    "Hyperparams",
    "AdamWState",
    "adamw_step",
    "gradient",
    "train_atomic",
    "TrainResult",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass
class TargetStats:
    """Normalization constants fitted on training atoms only.

    Scalars are z-scored; dipole and quadrupole components are divided
    by their root mean square over all components and atoms.
    """

    n_mean: float
    n_std: float
    li_mean: float
    li_std: float
    mu_rms: float
    q_rms: float

    @classmethod
    def fit(cls, target_rows: np.ndarray) -> "TargetStats":
        t = np.asarray(target_rows, dtype=float)
        if t.ndim != 2 or t.shape[1] != 10 or len(t) == 0:
            raise ValidationError("need a nonempty (n, 10) target array")
        n_std = float(t[:, 0].std())
        li_std = float(t[:, 1].std())
        mu_rms = float(np.sqrt((t[:, 2:5] ** 2).mean()))
        q_rms = float(np.sqrt((t[:, 5:] ** 2).mean()))
        scale = max(1.0, float(np.abs(t).max()))
        for name, val in (("population std", n_std), ("localization std", li_std),
                          ("dipole rms", mu_rms), ("quadrupole rms", q_rms)):
            if val <= 1e-12 * scale:
                raise NumericError(f"{name} is zero; targets cannot be normalized")
        return cls(
            n_mean=float(t[:, 0].mean()),
            n_std=n_std,
            li_mean=float(t[:, 1].mean()),
            li_std=li_std,
            mu_rms=mu_rms,
            q_rms=q_rms,
        )

    def apply(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = t.copy()
        out[..., 0] = (t[..., 0] - self.n_mean) / self.n_std
        out[..., 1] = (t[..., 1] - self.li_mean) / self.li_std
        out[..., 2:5] = t[..., 2:5] / self.mu_rms
        out[..., 5:] = t[..., 5:] / self.q_rms
        return out

    def invert(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = t.copy()
        out[..., 0] = t[..., 0] * self.n_std + self.n_mean
        out[..., 1] = t[..., 1] * self.li_std + self.li_mean
        out[..., 2:5] = t[..., 2:5] * self.mu_rms
        out[..., 5:] = t[..., 5:] * self.q_rms
        return out

    def to_dict(self):
        return asdict(self)


def targets_to_array(targets) -> np.ndarray:
    """Stack AtomTargets into the (n, 10) layout used everywhere."""
    return np.array([[t.n_e, t.li, *t.mu, *t.quad] for t in targets], dtype=float)


def augment_targets(target_rows: np.ndarray, rot: np.ndarray) -> np.ndarray:
    """Co-rotate per-atom targets: scalars fixed, mu as a vector, the
    quadrupole through the 5-vector convention."""
    t = np.asarray(target_rows, dtype=float)
    out = t.copy()
    out[:, 2:5] = t[:, 2:5] @ rot.T
    for k in range(len(t)):
        out[k, 5:] = rotate5(rot, t[k, 5:])
    return out


@dataclass
class Hyperparams:
    lr: float = 3.8e-3
    weight_decay: float = 1.1e-4
    batch_size: int = 256
    epochs: int = 2000
    seed: int = 0
    loss_version: int = 2
    element_weight_mode: str = "sqrt_ratio"


@dataclass
class AdamWState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adamw_step(params, grads, state, lr, weight_decay, betas=(0.9, 0.999), eps=1e-8):
    """Decoupled-weight-decay adaptive moment update, in place."""
    state.t += 1
    b1, b2 = betas
    bias1 = 1.0 - b1**state.t
    bias2 = 1.0 - b2**state.t
    for key, g in grads.items():
        m = state.m.get(key)
        if m is None:
            m = np.zeros_like(g)
            state.m[key] = m
            state.v[key] = np.zeros_like(g)
        v = state.v[key]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        step = (m / bias1) / (np.sqrt(v / bias2) + eps)
        params[key] -= lr * (step + weight_decay * params[key])


def gradient(params, cfg, graph, feats, targets_norm, loss_version=1, weights=None, qta=None):
    """Loss value and exact reverse-accumulation gradients per parameter."""
    pv = wrap_params(params)
    pred = forward_vars(pv, cfg, graph, feats, qta=qta)
    if loss_version == 1:
        loss = loss_v1(pred, targets_norm)
    elif loss_version == 2:
        if weights is None:
            weights = np.ones(len(targets_norm))
        loss = loss_v2(pred, targets_norm, weights)
    else:
        raise ValidationError(f"unknown loss version {loss_version}")
    ad.backward(loss)
    grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.value)) for k, v in pv.items()}
    return float(loss.value), grads


@dataclass
class TrainResult:
    params: dict
    best_params: dict
    history: list[dict]
    best_epoch: int
    best_val_loss: float


def _molecule_rows(entries, cfg):
    """Precompute (graph, target array) per molecule."""
    rows = []
    for entry in entries:
        graph = build_graph(entry.record, cfg.cutoff, cfg.max_nn)
        rows.append((graph, targets_to_array(entry.targets)))
    return rows


def _batch_loss_grad(params, cfg, graphs, targets, hp, weights_fn):
    packed = pack_graphs(graphs)
    t = np.concatenate(targets)
    feats = graph_features(packed, cfg)
    weights = weights_fn(packed.species) if hp.loss_version == 2 else None
    return gradient(
        params, cfg, packed, feats, t, loss_version=hp.loss_version, weights=weights
    )


def _eval_loss(params, cfg, rows, hp, weights_fn):
    graphs = [g for g, _ in rows]
    targets = [t for _, t in rows]
    packed = pack_graphs(graphs)
    t = np.concatenate(targets)
    feats = graph_features(packed, cfg)
    pv = wrap_params(params)
    pred = forward_vars(pv, cfg, packed, feats)
    if hp.loss_version == 1:
        return float(loss_v1(pred, t).value)
    return float(loss_v2(pred, t, weights_fn(packed.species)).value)


def train_atomic(cfg: ModelConfig, train_entries, val_entries, hp: Hyperparams, stats=None):
    """Train on per-atom targets; returns TrainResult with the best-
    validation parameter set and a per-epoch history.

    ``stats`` (TargetStats) defaults to a fit on the training atoms.
    Rotational augmentation draws one fresh rotation per molecule per
    epoch when the config asks for it.
    """
    if not train_entries:
        raise ValidationError("empty training set")
    train_rows = _molecule_rows(train_entries, cfg)
    val_rows = _molecule_rows(val_entries, cfg) if val_entries else []

    if stats is None:
        stats = TargetStats.fit(np.concatenate([t for _, t in train_rows]))
    train_rows = [(g, stats.apply(t)) for g, t in train_rows]
    val_rows = [(g, stats.apply(t)) for g, t in val_rows]

    all_species = np.concatenate([g.species for g, _ in train_rows])
    fold_weights = element_weights(all_species, hp.element_weight_mode)
    weight_of = {int(z): float(fold_weights[all_species == z][0]) for z in np.unique(all_species)}

    def weights_fn(species):
        return np.array([weight_of.get(int(z), 1.0) for z in species])

    ss = np.random.SeedSequence(hp.seed)
    init_ss, shuffle_ss, rot_ss = ss.spawn(3)
    params = init_params(cfg, np.random.default_rng(init_ss))
    shuffle_rng = np.random.default_rng(shuffle_ss)
    rot_rng = np.random.default_rng(rot_ss)

    opt = AdamWState()
    history = []
    best_params = {k: v.copy() for k, v in params.items()}
    best_val = np.inf
    best_epoch = -1

    n_train = len(train_rows)
    for epoch in range(hp.epochs):
        order = shuffle_rng.permutation(n_train)
        if cfg.augment:
            rotations = [sample_rotation(rot_rng) for _ in range(n_train)]
            epoch_rows = [
                (rotate_graph(train_rows[i][0], rotations[i]),
                 augment_targets(train_rows[i][1], rotations[i]))
                for i in range(n_train)
            ]
        else:
            epoch_rows = train_rows

        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n_train, hp.batch_size):
            idx = order[start : start + hp.batch_size]
            graphs = [epoch_rows[i][0] for i in idx]
            targets = [epoch_rows[i][1] for i in idx]
            loss, grads = _batch_loss_grad(params, cfg, graphs, targets, hp, weights_fn)
            if not np.isfinite(loss):
                raise TrainingDivergedError("training loss is non-finite", epoch=epoch)
            adamw_step(params, grads, opt, hp.lr, hp.weight_decay)
            epoch_loss += loss
            n_batches += 1

        train_loss = epoch_loss / max(1, n_batches)
        val_loss = _eval_loss(params, cfg, val_rows, hp, weights_fn) if val_rows else train_loss
        if not np.isfinite(val_loss):
            raise TrainingDivergedError("validation loss is non-finite", epoch=epoch)
        history.append(
            {
                "epoch": epoch,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "lr": hp.lr,
                "seed": hp.seed,
            }
        )
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}

    if hp.epochs == 0:
        best_params = {k: v.copy() for k, v in params.items()}
        best_val = np.inf
    return TrainResult(
        params=params,
        best_params=best_params,
        history=history,
        best_epoch=best_epoch,
        best_val_loss=best_val,
    ), stats


# ---- checkpoints -------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(path, params, cfg: ModelConfig, stats=None, extra=None):
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(cfg),
        "config_hash": config_hash(cfg),
        "stats": stats.to_dict() if stats is not None else None,
        "extra": extra or {},
    }
    arrays = {f"param:{k}": v for k, v in params.items()}
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path):
    """Returns (params, cfg, stats_or_None, meta); validates shapes."""
    path = Path(path)
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValidationError(f"unsupported checkpoint version {meta.get('version')}")
        cfg_dict = meta["config"]
        cfg = ModelConfig(**cfg_dict)
        params = {
            k[len("param:") :]: data[k] for k in data.files if k.startswith("param:")
        }
    reference = init_params(cfg, np.random.default_rng(0))
    if set(params) != set(reference):
        missing = set(reference) - set(params)
        surplus = set(params) - set(reference)
        raise ValidationError(
            f"checkpoint does not match the config (missing {sorted(missing)[:3]}, "
            f"surplus {sorted(surplus)[:3]})"
        )
    for k, ref in reference.items():
        if params[k].shape != ref.shape:
            raise ValidationError(
                f"checkpoint parameter {k} has shape {params[k].shape}, expected {ref.shape}"
            )
    stats = TargetStats(**meta["stats"]) if meta.get("stats") else None
    return params, cfg, stats, meta
