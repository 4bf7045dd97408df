import numpy as np
import pytest

from qtakit.dataset import MoleculeRecord
from qtakit.errors import NumericError, ValidationError
from qtakit.geometry import frob_norm5, sample_rotation
from qtakit.losses import loss_v1
from qtakit import autodiff as ad
from qtakit.qtnet import config_for_variant, scale_config
from qtakit.synthetic import make_synthetic_dataset
from qtakit.training import (
    AdamWState,
    Hyperparams,
    TargetStats,
    adamw_step,
    augment_targets,
    load_checkpoint,
    save_checkpoint,
    targets_to_array,
    train_atomic,
)

RNG = np.random.default_rng(31)


def small_train_cfg(**over):
    over.setdefault("depth", 1)
    over.setdefault("max_nn", 3)
    over.setdefault("augment", False)
    width = over.pop("width", 8)
    return scale_config(config_for_variant("SG-8-12", **over), width=width)


class TestTargetStats:
    def test_round_trip(self):
        t = RNG.standard_normal((40, 10)) * 3.0 + 1.0
        stats = TargetStats.fit(t)
        assert np.abs(stats.invert(stats.apply(t)) - t).max() < 1e-12

    def test_normalized_moments(self):
        t = RNG.standard_normal((500, 10)) * 2.5 + 0.7
        stats = TargetStats.fit(t)
        n = stats.apply(t)
        assert abs(n[:, 0].mean()) < 1e-12 and abs(n[:, 0].std() - 1.0) < 1e-12
        assert abs(np.sqrt((n[:, 2:5] ** 2).mean()) - 1.0) < 1e-12
        assert abs(np.sqrt((n[:, 5:] ** 2).mean()) - 1.0) < 1e-12

    def test_constant_column_rejected(self):
        t = RNG.standard_normal((10, 10))
        t[:, 0] = 4.2
        with pytest.raises(NumericError):
            TargetStats.fit(t)


class TestAugment:
    def test_identity_rotation(self):
        # quadrupole rows pass through the full-tensor reconstruction,
        # exact only to float round-off
        t = RNG.standard_normal((5, 10))
        assert np.abs(augment_targets(t, np.eye(3)) - t).max() < 1e-14

    def test_scalars_fixed_tensors_rotate(self):
        t = RNG.standard_normal((6, 10))
        rot = sample_rotation(np.random.default_rng(3))
        out = augment_targets(t, rot)
        assert np.array_equal(out[:, :2], t[:, :2])
        assert np.abs(out[:, 2:5] - t[:, 2:5] @ rot.T).max() < 1e-12
        for k in range(6):
            assert abs(frob_norm5(out[k, 5:]) - frob_norm5(t[k, 5:])) < 1e-10

    def test_perfect_predictor_needs_corotated_targets(self):
        t = RNG.standard_normal((4, 10))
        rot = sample_rotation(np.random.default_rng(5))
        rotated = augment_targets(t, rot)
        assert loss_v1(ad.Var(rotated), rotated).value == 0.0
        assert loss_v1(ad.Var(rotated), t).value > 1e-4


class TestAdamW:
    def test_decoupled_weight_decay(self):
        # zero gradient: the update is pure decay p *= (1 - lr*wd)
        params = {"w": np.array([2.0])}
        state = AdamWState()
        adamw_step(params, {"w": np.array([0.0])}, state, lr=0.1, weight_decay=0.5)
        assert abs(params["w"][0] - 2.0 * (1 - 0.05)) < 1e-12

    def test_descends_quadratic(self):
        params = {"w": np.array([5.0])}
        state = AdamWState()
        for _ in range(400):
            adamw_step(params, {"w": 2 * params["w"]}, state, lr=0.05, weight_decay=0.0)
        assert abs(params["w"][0]) < 1e-2


def synthetic_entries(n, seed=19):
    return list(make_synthetic_dataset(n_molecules=n, seed=seed))


class TestTrainAtomic:
    def test_epochs_zero_returns_initialization(self):
        entries = synthetic_entries(4)
        cfg = small_train_cfg()
        hp = Hyperparams(epochs=0, seed=1, batch_size=8)
        result, _ = train_atomic(cfg, entries, [], hp)
        from qtakit.qtnet import init_params

        ss = np.random.SeedSequence(1)
        init_ss = ss.spawn(3)[0]
        expected = init_params(cfg, np.random.default_rng(init_ss))
        assert set(result.best_params) == set(expected)
        for k in expected:
            assert np.array_equal(result.best_params[k], expected[k])

    def test_smoke_train_loss_halves(self):
        entries = synthetic_entries(20)
        cfg = small_train_cfg()
        hp = Hyperparams(lr=8e-3, weight_decay=1e-5, batch_size=10, epochs=200, seed=3)
        result, _ = train_atomic(cfg, entries, entries[:4], hp)
        first = result.history[0]["train_loss"]
        last = result.history[-1]["train_loss"]
        assert last <= 0.5 * first, (first, last)

    def test_seed_reproducibility_bitwise(self):
        entries = synthetic_entries(6)
        cfg = small_train_cfg()
        hp = Hyperparams(lr=3e-3, batch_size=4, epochs=12, seed=77)
        r1, _ = train_atomic(cfg, entries, entries[:2], hp)
        r2, _ = train_atomic(cfg, entries, entries[:2], hp)
        for k in r1.params:
            assert np.array_equal(r1.params[k], r2.params[k]), k
        assert r1.history == r2.history

    def test_memorizes_single_molecule(self):
        entries = synthetic_entries(1, seed=23)
        cfg = scale_config(
            config_for_variant("SG-8-12", depth=2, max_nn=4, augment=False), width=16
        )
        hp = Hyperparams(lr=1e-2, weight_decay=0.0, batch_size=1, epochs=300, seed=5,
                        loss_version=1)
        result, _ = train_atomic(cfg, entries, [], hp)
        first = result.history[0]["train_loss"]
        last = result.history[-1]["train_loss"]
        assert last < 1e-3 * first, (first, last)

    def test_history_structure(self):
        entries = synthetic_entries(4)
        cfg = small_train_cfg()
        hp = Hyperparams(epochs=3, batch_size=2, seed=9)
        result, stats = train_atomic(cfg, entries, entries[:1], hp)
        assert len(result.history) == 3
        for row in result.history:
            assert set(row) == {"epoch", "train_loss", "val_loss", "lr", "seed"}
        assert result.best_epoch >= 0
        assert stats.n_std > 0

    def test_empty_training_set(self):
        with pytest.raises(ValidationError):
            train_atomic(small_train_cfg(), [], [], Hyperparams(epochs=1))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        from qtakit.qtnet import init_params

        cfg = small_train_cfg()
        params = init_params(cfg, np.random.default_rng(4))
        stats = TargetStats(1.0, 2.0, 0.5, 1.5, 3.0, 4.0)
        path = tmp_path / "model.npz"
        save_checkpoint(path, params, cfg, stats, extra={"note": "test"})
        loaded, cfg2, stats2, meta = load_checkpoint(path)
        assert cfg2 == cfg
        assert stats2 == stats
        assert meta["extra"]["note"] == "test"
        for k in params:
            assert np.array_equal(loaded[k], params[k])

    def test_shape_validation(self, tmp_path):
        from qtakit.qtnet import init_params

        cfg = small_train_cfg()
        params = init_params(cfg, np.random.default_rng(4))
        params["embed"] = np.zeros((4, 99))
        path = tmp_path / "bad.npz"
        save_checkpoint(path, params, cfg)
        with pytest.raises(ValidationError):
            load_checkpoint(path)
