"""Scalar message-passing regressor for per-atom multipole targets.

Nodes and edges carry scalar feature vectors. Geometry enters only
through fixed per-edge constants: raw direction components, the edge
gyration tensor, a radial basis of the length, and Legendre-projected
gyration similarities between adjacent edges. One layer runs, in
order: edge<-edge messages (shared-node intermediary, Legendre
filter), node<-node messages (connecting-edge intermediary, RBF +
direction filter), node->edge messages (edge-encoder convention), a
node feed-forward with a chemical reminder of the species embedding,
and an edge feed-forward. Every layer feeds an atomic head; the final
prediction is a softmax-weighted sum of the per-layer heads. All MLPs
use SiLU between hidden layers; geometric filters end in tanh and
gates in sigmoid.

The ``molecular`` variant drops the raw direction/gyration components
from all filter inputs (keeping only invariant radial and angular
projections), replaces the per-layer atomic heads with one sum-pooled
molecular head, and can consume per-atom ground-truth or inferred
multipole features when ``informed`` is set.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from . import autodiff as ad
from .errors import NumericError, ValidationError
from .geometry import legendre_basis, rbf_basis
from .graphs import GraphInstance

__all__ = [
    "ModelConfig",
    "config_for_variant",
    "config_hash",
    "init_params",
    "n_parameters",
    "graph_features",
    "forward_vars",
    "predict",
    "N_TARGETS",
]

N_TARGETS = 10  # population, localization, dipole(3), quadrupole(5)

VARIANTS = {
    "SG-8-12": dict(cutoff=8.0, max_nn=12, depth=7, augment=True),
    "SG-8-5": dict(cutoff=8.0, max_nn=5, depth=7, augment=True),
    "SFC2": dict(cutoff=None, max_nn=None, depth=7, augment=True, rbf_cutoff=40.0),
    "SGFC": dict(cutoff=None, max_nn=None, depth=7, augment=False, rbf_cutoff=40.0),
    "SGNN": dict(cutoff=5.25, max_nn=5, depth=7, augment=False),
    "molecular": dict(
        cutoff=3.5,
        max_nn=4,
        depth=4,
        augment=False,
        geometric_inputs=False,
        molecular_head=True,
    ),
}


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "SG-8-12"
    depth: int = 7
    node_dim: int = 48
    edge_dim: int = 48
    hidden_dim: int = 48
    filter_hidden: int = 16
    head_hidden: int = 32
    embed_dim: int = 24
    n_rbf: int = 8
    legendre_degree: int = 6
    cutoff: Optional[float] = 8.0
    max_nn: Optional[int] = 12
    rbf_cutoff: Optional[float] = None
    augment: bool = True
    mlp_layers: int = 2  # hidden layers in MLPs and gates
    filter_layers: int = 1  # hidden layers in geometric filters
    molecular_head: bool = False
    geometric_inputs: bool = True
    informed: bool = False

    def __post_init__(self):
        if self.depth < 1:
            raise ValidationError("depth must be >= 1")
        for field in ("node_dim", "edge_dim", "hidden_dim", "filter_hidden",
                      "head_hidden", "embed_dim", "n_rbf"):
            if getattr(self, field) < 1:
                raise ValidationError(f"{field} must be >= 1")
        if self.cutoff is None and self.rbf_cutoff is None:
            raise ValidationError("fully connected models need an explicit rbf_cutoff")

    @property
    def radial_cutoff(self) -> float:
        return self.rbf_cutoff if self.rbf_cutoff is not None else self.cutoff

    @property
    def node_input_dim(self) -> int:
        return self.embed_dim + (N_TARGETS if self.informed else 0)


def config_for_variant(variant: str, **overrides) -> ModelConfig:
    if variant not in VARIANTS:
        raise ValidationError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}")
    kwargs = dict(VARIANTS[variant])
    kwargs.update(overrides)
    return ModelConfig(variant=variant, **kwargs)


def config_hash(cfg: ModelConfig) -> str:
    payload = json.dumps(asdict(cfg), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def scale_config(cfg: ModelConfig, width: int) -> ModelConfig:
    """Uniformly shrink a config for desk-scale tests."""
    return replace(
        cfg,
        node_dim=width,
        edge_dim=width,
        hidden_dim=width,
        filter_hidden=max(2, width // 2),
        head_hidden=max(2, width // 2),
        embed_dim=max(2, width // 2),
    )


# ---- parameters -------------------------------------------------------


def _init_mlp(params, rng, name, d_in, d_out, hidden, n_hidden):
    dims = [d_in] + [hidden] * n_hidden + [d_out]
    for k in range(len(dims) - 1):
        params[f"{name}/w{k}"] = rng.standard_normal((dims[k], dims[k + 1])) / np.sqrt(dims[k])
        params[f"{name}/b{k}"] = np.zeros(dims[k + 1])


def _init_ln(params, name, dim):
    params[f"{name}/g"] = np.ones(dim)
    params[f"{name}/b"] = np.zeros(dim)


def _geo_dims(cfg: ModelConfig):
    node_geo = (3 if cfg.geometric_inputs else 0) + cfg.n_rbf
    edge_geo = (5 if cfg.geometric_inputs else 0) + cfg.n_rbf
    pair_geo = (5 if cfg.geometric_inputs else 0) + cfg.legendre_degree + 1
    return node_geo, edge_geo, pair_geo


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    p: dict[str, np.ndarray] = {}
    dn, de, h, f = cfg.node_dim, cfg.edge_dim, cfg.hidden_dim, cfg.filter_hidden
    b_in = cfg.node_input_dim
    node_geo, edge_geo, pair_geo = _geo_dims(cfg)

    p["embed"] = rng.standard_normal((4, cfg.embed_dim))

    _init_mlp(p, rng, "enc_node_mlp", 2 * b_in, dn, h, cfg.mlp_layers)
    _init_mlp(p, rng, "enc_node_gamma", node_geo, dn, f, cfg.filter_layers)
    _init_ln(p, "enc_node_ln", dn)
    _init_mlp(p, rng, "enc_edge_pre", dn, de, h, cfg.mlp_layers)
    _init_ln(p, "enc_edge_ln1", de)
    _init_mlp(p, rng, "enc_edge_mlp", de, de, h, cfg.mlp_layers)
    _init_mlp(p, rng, "enc_edge_gamma", edge_geo, de, f, cfg.filter_layers)
    _init_ln(p, "enc_edge_ln2", de)

    for l in range(cfg.depth):
        pref = f"layer{l}"
        _init_ln(p, f"{pref}/ee_ln_edge", de)
        _init_ln(p, f"{pref}/ee_ln_node", dn)
        _init_mlp(p, rng, f"{pref}/ee_mlp", 2 * de + dn, de, h, cfg.mlp_layers)
        _init_mlp(p, rng, f"{pref}/ee_gamma", pair_geo, de, f, cfg.filter_layers)
        _init_mlp(p, rng, f"{pref}/ee_gate", de, de, h, cfg.mlp_layers)

        _init_ln(p, f"{pref}/nn_ln_node", dn)
        _init_ln(p, f"{pref}/nn_ln_edge", de)
        _init_mlp(p, rng, f"{pref}/nn_mlp", 2 * dn + de, dn, h, cfg.mlp_layers)
        _init_mlp(p, rng, f"{pref}/nn_gamma", node_geo, dn, f, cfg.filter_layers)
        _init_mlp(p, rng, f"{pref}/nn_gate", dn, dn, h, cfg.mlp_layers)

        _init_ln(p, f"{pref}/ne_ln_node", dn)
        _init_mlp(p, rng, f"{pref}/ne_pre", dn, de, h, cfg.mlp_layers)
        _init_ln(p, f"{pref}/ne_ln_mid", de)
        _init_mlp(p, rng, f"{pref}/ne_mlp", de, de, h, cfg.mlp_layers)
        _init_mlp(p, rng, f"{pref}/ne_gamma", edge_geo, de, f, cfg.filter_layers)
        _init_mlp(p, rng, f"{pref}/ne_gate", de, de, h, cfg.mlp_layers)

        _init_ln(p, f"{pref}/ff_node_ln", dn)
        p[f"{pref}/ff_node_reminder"] = rng.standard_normal(
            (b_in, cfg.embed_dim)
        ) / np.sqrt(b_in)
        _init_mlp(p, rng, f"{pref}/ff_node_mlp", dn + cfg.embed_dim, dn, h, cfg.mlp_layers)
        _init_mlp(p, rng, f"{pref}/ff_node_gate", dn, dn, h, cfg.mlp_layers)

        _init_ln(p, f"{pref}/ff_edge_ln", de)
        _init_mlp(p, rng, f"{pref}/ff_edge_mlp", de, de, h, cfg.mlp_layers)
        _init_mlp(p, rng, f"{pref}/ff_edge_gate", de, de, h, cfg.mlp_layers)

        if not cfg.molecular_head:
            _init_ln(p, f"{pref}/head_ln", dn)
            _init_mlp(p, rng, f"{pref}/head_mlp", dn, cfg.head_hidden, cfg.head_hidden,
                      cfg.mlp_layers)
            p[f"{pref}/head_out"] = rng.standard_normal(
                (cfg.head_hidden, N_TARGETS)
            ) / np.sqrt(cfg.head_hidden)

    if cfg.molecular_head:
        _init_ln(p, "mol_ln", dn)
        _init_mlp(p, rng, "mol_head_mlp", dn, cfg.head_hidden, cfg.head_hidden,
                  cfg.mlp_layers)
        p["mol_head_out"] = rng.standard_normal((cfg.head_hidden, 1)) / np.sqrt(
            cfg.head_hidden
        )
    else:
        p["readout_logits"] = np.zeros(cfg.depth)
    return p


def n_parameters(cfg: ModelConfig) -> int:
    params = init_params(cfg, np.random.default_rng(0))
    return sum(v.size for v in params.values())


# ---- constant graph features -----------------------------------------


@dataclass
class GraphFeatures:
    rbf: np.ndarray  # (E, n_rbf)
    gamma_node_in: np.ndarray  # (E, node_geo)
    gamma_edge_in: np.ndarray  # (E, edge_geo)
    pair_recv: np.ndarray  # (P,) receiver-edge index
    pair_send: np.ndarray  # (P,) sender-edge index
    pair_node: np.ndarray  # (P,) shared node index
    gamma_pair_in: np.ndarray  # (P, pair_geo)


def _edge_pairs(receivers, senders, n_atoms):
    """All (a, b) with receivers[b] == senders[a]: edges feeding edge a
    through its sender node. Includes the reverse edge."""
    n_edges = len(receivers)
    if n_edges == 0:
        z = np.empty(0, dtype=np.intp)
        return z, z, z
    order = np.argsort(receivers, kind="stable")
    counts = np.bincount(receivers, minlength=n_atoms)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    reps = counts[senders]
    total = int(reps.sum())
    pair_a = np.repeat(np.arange(n_edges), reps)
    starts = np.repeat(offsets[senders], reps)
    within = np.arange(total) - np.repeat(np.concatenate([[0], np.cumsum(reps)])[:-1], reps)
    pair_b = order[starts + within]
    return pair_a, pair_b, senders[pair_a]


def graph_features(graph: GraphInstance, cfg: ModelConfig) -> GraphFeatures:
    c = cfg.radial_cutoff
    if graph.n_edges and graph.lengths.max() > c:
        raise ValidationError(
            f"edge length {graph.lengths.max():.3f} exceeds the radial cutoff {c}; "
            "set rbf_cutoff large enough for fully connected graphs"
        )
    rbf = (
        rbf_basis(graph.lengths, c, cfg.n_rbf)
        if graph.n_edges
        else np.empty((0, cfg.n_rbf))
    )
    if cfg.geometric_inputs:
        gamma_node = np.concatenate([graph.unit_vecs, rbf], axis=1)
        gamma_edge = np.concatenate([graph.gyrations, rbf], axis=1)
    else:
        gamma_node = rbf
        gamma_edge = rbf

    pair_a, pair_b, pair_node = _edge_pairs(graph.receivers, graph.senders, graph.n_atoms)
    if len(pair_a):
        g_a = graph.gyrations[pair_a]
        g_b = graph.gyrations[pair_b]
        rel = g_a - g_b
        norms = np.sqrt(2.0 * (rel[:, :4] ** 2).sum(axis=1) + 1.5 * rel[:, 4] ** 2)
        safe = norms > 1e-12
        rel = np.where(safe[:, None], rel / np.where(safe, norms, 1.0)[:, None], 0.0)
        cos = 2.0 * (g_a[:, :4] * g_b[:, :4]).sum(axis=1) + 1.5 * g_a[:, 4] * g_b[:, 4]
        leg = legendre_basis(np.clip(cos, -1.0, 1.0), cfg.legendre_degree)
        gamma_pair = np.concatenate([rel, leg], axis=1) if cfg.geometric_inputs else leg
    else:
        _, _, pair_geo = _geo_dims(cfg)
        gamma_pair = np.empty((0, pair_geo))
    return GraphFeatures(
        rbf=rbf,
        gamma_node_in=gamma_node,
        gamma_edge_in=gamma_edge,
        pair_recv=pair_a,
        pair_send=pair_b,
        pair_node=pair_node,
        gamma_pair_in=gamma_pair,
    )


# ---- forward pass ------------------------------------------------------


def _mlp(pv, name, x, n_hidden, out_activation=None):
    for k in range(n_hidden + 1):
        x = x @ pv[f"{name}/w{k}"] + pv[f"{name}/b{k}"]
        if k < n_hidden:
            x = ad.silu(x)
    if out_activation is not None:
        x = out_activation(x)
    return x


def _ln(pv, name, x):
    return ad.layer_norm(x, pv[f"{name}/g"], pv[f"{name}/b"])


def forward_vars(
    pv: dict[str, ad.Var],
    cfg: ModelConfig,
    graph: GraphInstance,
    feats: GraphFeatures,
    qta: np.ndarray | None = None,
) -> ad.Var:
    """Run the network on Var-wrapped parameters; returns predictions
    in normalized target space: (n_atoms, 10), or (n_molecules, 1) for
    the molecular head."""
    if cfg.informed:
        if qta is None:
            raise ValidationError("informed model requires per-atom multipole inputs")
        qta = np.asarray(qta, dtype=float)
        if qta.shape != (graph.n_atoms, N_TARGETS):
            raise ValidationError(f"qta inputs must be ({graph.n_atoms}, {N_TARGETS})")
    recv, send = graph.receivers, graph.senders
    n, n_edges = graph.n_atoms, graph.n_edges
    ml, fl = cfg.mlp_layers, cfg.filter_layers

    emb = ad.take(pv["embed"], graph.species)
    node_in = ad.concat([emb, ad.constant(qta)]) if cfg.informed else emb

    # encoders
    msg = _mlp(pv, "enc_node_mlp", ad.concat([ad.take(node_in, recv), ad.take(node_in, send)]), ml)
    gam = _mlp(pv, "enc_node_gamma", ad.constant(feats.gamma_node_in), fl, ad.tanh)
    h_n = _ln(pv, "enc_node_ln", ad.segment_sum(msg * gam, recv, n))

    pre = _mlp(pv, "enc_edge_pre", h_n, ml)
    s = _ln(pv, "enc_edge_ln1", ad.take(pre, recv) + ad.take(pre, send))
    msg = _mlp(pv, "enc_edge_mlp", s, ml)
    gam = _mlp(pv, "enc_edge_gamma", ad.constant(feats.gamma_edge_in), fl, ad.tanh)
    h_e = _ln(pv, "enc_edge_ln2", msg * gam)

    heads = []
    for l in range(cfg.depth):
        pref = f"layer{l}"
        # edge<-edge via the shared node
        he_n = _ln(pv, f"{pref}/ee_ln_edge", h_e)
        hn_n = _ln(pv, f"{pref}/ee_ln_node", h_n)
        msg = _mlp(
            pv,
            f"{pref}/ee_mlp",
            ad.concat(
                [
                    ad.take(he_n, feats.pair_recv),
                    ad.take(he_n, feats.pair_send),
                    ad.take(hn_n, feats.pair_node),
                ]
            ),
            ml,
        )
        gam = _mlp(pv, f"{pref}/ee_gamma", ad.constant(feats.gamma_pair_in), fl, ad.tanh)
        agg = ad.segment_sum(msg * gam, feats.pair_recv, n_edges)
        h_e = h_e + _mlp(pv, f"{pref}/ee_gate", h_e, ml, ad.sigmoid) * agg

        # node<-node via the connecting edge
        hn_n = _ln(pv, f"{pref}/nn_ln_node", h_n)
        he_n = _ln(pv, f"{pref}/nn_ln_edge", h_e)
        msg = _mlp(
            pv,
            f"{pref}/nn_mlp",
            ad.concat([ad.take(hn_n, recv), ad.take(hn_n, send), he_n]),
            ml,
        )
        gam = _mlp(pv, f"{pref}/nn_gamma", ad.constant(feats.gamma_node_in), fl, ad.tanh)
        agg = ad.segment_sum(msg * gam, recv, n)
        h_n = h_n + _mlp(pv, f"{pref}/nn_gate", h_n, ml, ad.sigmoid) * agg

        # node->edge, edge-encoder convention
        pre = _mlp(pv, f"{pref}/ne_pre", _ln(pv, f"{pref}/ne_ln_node", h_n), ml)
        s = _ln(pv, f"{pref}/ne_ln_mid", ad.take(pre, recv) + ad.take(pre, send))
        msg = _mlp(pv, f"{pref}/ne_mlp", s, ml) * _mlp(
            pv, f"{pref}/ne_gamma", ad.constant(feats.gamma_edge_in), fl, ad.tanh
        )
        h_e = h_e + _mlp(pv, f"{pref}/ne_gate", h_e, ml, ad.sigmoid) * msg

        # node feed-forward with chemical reminder
        reminder = node_in @ pv[f"{pref}/ff_node_reminder"]
        m_ff = _mlp(
            pv,
            f"{pref}/ff_node_mlp",
            ad.concat([_ln(pv, f"{pref}/ff_node_ln", h_n), reminder]),
            ml,
        )
        h_n = h_n + _mlp(pv, f"{pref}/ff_node_gate", h_n, ml, ad.sigmoid) * m_ff

        # edge feed-forward (no reminder)
        m_ff = _mlp(pv, f"{pref}/ff_edge_mlp", _ln(pv, f"{pref}/ff_edge_ln", h_e), ml)
        h_e = h_e + _mlp(pv, f"{pref}/ff_edge_gate", h_e, ml, ad.sigmoid) * m_ff

        if not (np.all(np.isfinite(h_n.value)) and np.all(np.isfinite(h_e.value))):
            raise NumericError(f"non-finite features after layer {l}")

        if not cfg.molecular_head:
            feats_head = _mlp(pv, f"{pref}/head_mlp", _ln(pv, f"{pref}/head_ln", h_n), ml)
            heads.append(feats_head @ pv[f"{pref}/head_out"])

    if cfg.molecular_head:
        pooled = ad.segment_sum(_ln(pv, "mol_ln", h_n), graph.mol_index, graph.n_molecules)
        hidden = _mlp(pv, "mol_head_mlp", pooled, ml)
        return hidden @ pv["mol_head_out"]

    alpha = ad.softmax_vec(pv["readout_logits"])
    out = None
    for l in range(cfg.depth):
        term = heads[l] * ad.take(alpha, np.array([l]))
        out = term if out is None else out + term
    return out


def wrap_params(params: dict[str, np.ndarray]) -> dict[str, ad.Var]:
    return {k: ad.Var(v) for k, v in params.items()}


def predict(
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
    graph: GraphInstance,
    qta: np.ndarray | None = None,
) -> np.ndarray:
    feats = graph_features(graph, cfg)
    out = forward_vars(wrap_params(params), cfg, graph, feats, qta=qta)
    if not np.all(np.isfinite(out.value)):
        raise NumericError("non-finite model output")
    return out.value
