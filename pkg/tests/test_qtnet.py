import numpy as np
import pytest

from qtakit import autodiff as ad
from qtakit.dataset import MoleculeRecord
from qtakit.errors import ValidationError
from qtakit.geometry import frob_norm5, rotate5, sample_rotation
from qtakit.graphs import build_graph, pack_graphs, rotate_graph
from qtakit.losses import element_weights, loss_v1, loss_v2
from qtakit.qtnet import (
    ModelConfig,
    config_for_variant,
    config_hash,
    graph_features,
    init_params,
    n_parameters,
    predict,
    scale_config,
)


def record_from(positions, elements, mol_id="m"):
    return MoleculeRecord(id=mol_id, elements=elements, positions=positions)


def tiny_cfg(**overrides):
    base = config_for_variant("SFC2", depth=2, **overrides)
    return scale_config(base, width=8)


class TestBuildGraph:
    def test_three_atoms_fully_connected(self):
        rec = record_from(np.eye(3) * 2.0, ["C", "H", "O"])
        g = build_graph(rec, cutoff=None, max_nn=None)
        assert g.n_edges == 6
        assert np.all(g.lengths > 0)

    def test_linear_chain_cutoff_only_adjacent(self):
        rec = record_from(
            np.array([[0.0, 0, 0], [3.0, 0, 0], [6.0, 0, 0]]), ["C", "C", "C"]
        )
        g = build_graph(rec, cutoff=4.0, max_nn=None)
        assert g.n_edges == 4
        pairs = set(zip(g.receivers.tolist(), g.senders.tolist()))
        assert pairs == {(0, 1), (1, 0), (1, 2), (2, 1)}

    def test_max_nn_tie_break_by_atom_index(self):
        # node 0 sees nodes 1 and 2 at exactly 2.0 Bohr (bit-equal
        # distances); the lower atom index wins the single slot
        rec = record_from(
            np.array([[0.0, 0, 0], [2.0, 0, 0], [0.0, 2.0, 0]]),
            ["C", "C", "C"],
        )
        g = build_graph(rec, cutoff=3.0, max_nn=1)
        pairs = set(zip(g.receivers.tolist(), g.senders.tolist()))
        assert pairs == {(0, 1), (1, 0), (2, 0)}

    def test_single_atom_under_cutoff_rejected(self):
        rec = record_from(np.zeros((1, 3)), ["C"])
        with pytest.raises(ValidationError):
            build_graph(rec, cutoff=8.0, max_nn=12)

    def test_warns_on_underconnected_node(self):
        rec = record_from(
            np.array([[0.0, 0, 0], [2.0, 0, 0], [40.0, 0, 0]]), ["C", "C", "C"]
        )
        with pytest.warns(UserWarning, match="fewer than 2"):
            build_graph(rec, cutoff=5.0, max_nn=4)

    def test_unit_vec_points_to_sender(self):
        rec = record_from(np.array([[0.0, 0, 0], [2.0, 0, 0]]), ["C", "H"])
        g = build_graph(rec, cutoff=None, max_nn=None)
        k = list(zip(g.receivers.tolist(), g.senders.tolist())).index((0, 1))
        assert np.allclose(g.unit_vecs[k], [1.0, 0.0, 0.0])


class TestGraphFeatures:
    def test_invariant_features_under_rotation(self):
        rng = np.random.default_rng(5)
        rec = record_from(rng.standard_normal((5, 3)) * 2.5, ["C", "H", "N", "O", "H"])
        cfg = tiny_cfg()
        g = build_graph(rec, cfg.cutoff, cfg.max_nn)
        f = graph_features(g, cfg)
        rot = sample_rotation(rng)
        g2 = rotate_graph(g, rot)
        f2 = graph_features(g2, cfg)
        assert np.abs(f2.rbf - f.rbf).max() < 1e-10
        # Legendre-projected gyration similarity is invariant
        leg = f.gamma_pair_in[:, 5:]
        leg2 = f2.gamma_pair_in[:, 5:]
        assert np.abs(leg2 - leg).max() < 1e-10

    def test_raw_components_equivary(self):
        rng = np.random.default_rng(6)
        rec = record_from(rng.standard_normal((4, 3)) * 2.5, ["C", "H", "N", "O"])
        cfg = tiny_cfg()
        g = build_graph(rec, cfg.cutoff, cfg.max_nn)
        rot = sample_rotation(rng)
        g2 = rotate_graph(g, rot)
        assert np.abs(g2.unit_vecs - g.unit_vecs @ rot.T).max() < 1e-12
        for k in range(g.n_edges):
            assert np.abs(g2.gyrations[k] - rotate5(rot, g.gyrations[k])).max() < 1e-10

    def test_molecular_variant_drops_raw_components(self):
        rng = np.random.default_rng(7)
        rec = record_from(rng.standard_normal((4, 3)) * 1.8, ["C", "H", "N", "O"])
        cfg = scale_config(config_for_variant("molecular"), width=8)
        g = build_graph(rec, cfg.cutoff, cfg.max_nn)
        f = graph_features(g, cfg)
        assert f.gamma_node_in.shape[1] == cfg.n_rbf
        assert f.gamma_edge_in.shape[1] == cfg.n_rbf
        assert f.gamma_pair_in.shape[1] == cfg.legendre_degree + 1


class TestForward:
    def test_zero_head_matrices_zero_output(self):
        rng = np.random.default_rng(8)
        rec = record_from(rng.standard_normal((4, 3)) * 2.0, ["C", "H", "O", "N"])
        cfg = tiny_cfg()
        params = init_params(cfg, rng)
        for k in params:
            if k.endswith("head_out"):
                params[k] = np.zeros_like(params[k])
        g = build_graph(rec, cfg.cutoff, cfg.max_nn)
        out = predict(params, cfg, g)
        assert np.all(out == 0.0)

    def test_readout_softmax_sums_to_one(self):
        rng = np.random.default_rng(9)
        w = ad.Var(rng.standard_normal(7) * 3.0)
        assert abs(ad.softmax_vec(w).value.sum() - 1.0) < 1e-12

    def test_permuting_atoms_permutes_outputs(self):
        rng = np.random.default_rng(10)
        pos = rng.standard_normal((5, 3)) * 2.2
        elements = ["C", "H", "N", "O", "H"]
        cfg = tiny_cfg()
        params = init_params(cfg, rng)
        out = predict(params, cfg, build_graph(record_from(pos, elements), None, None))
        perm = np.array([3, 0, 4, 1, 2])
        out_p = predict(
            params,
            cfg,
            build_graph(record_from(pos[perm], [elements[i] for i in perm]), None, None),
        )
        assert np.abs(out_p - out[perm]).max() < 1e-10

    def test_deterministic(self):
        rng = np.random.default_rng(11)
        rec = record_from(rng.standard_normal((4, 3)) * 2.0, ["C", "H", "O", "N"])
        cfg = tiny_cfg()
        params = init_params(np.random.default_rng(3), rng=np.random.default_rng(3)) if False else init_params(cfg, rng)
        g = build_graph(rec, None, None)
        assert np.array_equal(predict(params, cfg, g), predict(params, cfg, g))

    def test_informed_requires_qta(self):
        rng = np.random.default_rng(12)
        rec = record_from(rng.standard_normal((3, 3)) * 2.0, ["C", "H", "O"])
        cfg = scale_config(config_for_variant("molecular", informed=True), width=8)
        g = build_graph(rec, cfg.cutoff, cfg.max_nn)
        params = init_params(cfg, rng)
        with pytest.raises(ValidationError):
            predict(params, cfg, g)

    def test_molecular_head_pools_per_molecule(self):
        rng = np.random.default_rng(13)
        cfg = scale_config(config_for_variant("molecular"), width=8)
        params = init_params(cfg, rng)
        recs = [
            record_from(rng.standard_normal((4, 3)) * 1.5, ["C", "H", "O", "N"], "a"),
            record_from(rng.standard_normal((3, 3)) * 1.5, ["C", "H", "H"], "b"),
        ]
        graphs = [build_graph(r, cfg.cutoff, cfg.max_nn) for r in recs]
        packed = pack_graphs(graphs)
        out = predict(params, cfg, packed)
        assert out.shape == (2, 1)
        single = predict(params, cfg, graphs[0])
        assert np.abs(out[0] - single[0]).max() < 1e-10


class TestConfig:
    def test_sg812_parameter_budget(self):
        n = n_parameters(config_for_variant("SG-8-12"))
        assert abs(n - 686_049) / 686_049 < 0.05

    def test_variants_table(self):
        assert config_for_variant("SG-8-12").max_nn == 12
        assert config_for_variant("SG-8-5").max_nn == 5
        assert config_for_variant("SFC2").cutoff is None
        assert config_for_variant("SFC2").augment is True
        assert config_for_variant("SGFC").augment is False
        assert config_for_variant("SGNN").cutoff == 5.25
        mol = config_for_variant("molecular")
        assert mol.cutoff == 3.5 and mol.max_nn == 4 and mol.molecular_head

    def test_unknown_variant(self):
        with pytest.raises(ValidationError):
            config_for_variant("nope")

    def test_config_hash_stable_and_sensitive(self):
        a = config_for_variant("SG-8-12")
        assert config_hash(a) == config_hash(config_for_variant("SG-8-12"))
        assert config_hash(a) != config_hash(config_for_variant("SG-8-5"))

    def test_fc_requires_rbf_cutoff(self):
        with pytest.raises(ValidationError):
            ModelConfig(cutoff=None, rbf_cutoff=None)


class TestLosses:
    def test_zero_at_exact_match(self):
        rng = np.random.default_rng(14)
        t = rng.standard_normal((6, 10))
        assert loss_v1(ad.Var(t), t).value == 0.0
        assert loss_v2(ad.Var(t), t, np.ones(6)).value == 0.0

    def test_v1_hand_value(self):
        t = np.zeros((1, 10))
        p = t.copy()
        p[0, 0] = 2.0  # population error of 2, everything else exact
        assert abs(loss_v1(ad.Var(p), t).value - 1.0) < 1e-15

    def test_v1_component_averaging(self):
        t = np.zeros((1, 10))
        p = t.copy()
        p[0, 2] = 1.0  # one dipole component
        assert abs(loss_v1(ad.Var(p), t).value - 1.0 / 12.0) < 1e-15
        p = np.zeros((1, 10))
        p[0, 5] = 1.0  # one quadrupole component
        assert abs(loss_v1(ad.Var(p), t).value - 1.0 / 20.0) < 1e-15

    def test_v2_frobenius_weighting(self):
        eps = 0.3
        t = np.zeros((1, 10))
        p = t.copy()
        p[0, 9] = eps  # zz component: contributes 1.5 eps^2 / 4
        got = loss_v2(ad.Var(p), t, np.ones(1)).value
        assert abs(got - 1.5 * eps**2 / 4.0) < 1e-15
        p = np.zeros((1, 10))
        p[0, 5] = eps  # off-diagonal: 2 eps^2 / 4
        got = loss_v2(ad.Var(p), t, np.ones(1)).value
        assert abs(got - 2.0 * eps**2 / 4.0) < 1e-15

    def test_element_weight_modes(self):
        species = np.array([0, 0, 0, 1])
        w = element_weights(species, "sqrt_ratio")
        assert np.allclose(w[:3], np.sqrt(4 / 3))
        assert np.allclose(w[3], 2.0)
        w = element_weights(species, "sum_to_one")
        assert abs(w[:3].sum() - 1.0) < 1e-12 and abs(w[3] - 1.0) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            loss_v1(ad.Var(np.zeros((2, 10))), np.zeros((3, 10)))
