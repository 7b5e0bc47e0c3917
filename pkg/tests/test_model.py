import json

import numpy as np
import pytest

from scoremix.model import (
    CheckpointError,
    DenoiserConfig,
    DenoiserNet,
    embed_label,
    embed_time,
    init_net,
    load_checkpoint,
    net_backward,
    net_forward,
    param_names,
    save_checkpoint,
)
from scoremix.schedule import build_schedule
from scoremix.scorefield import ConceptLabel

DISCRETE_CFG = DenoiserConfig(
    data_dim=2, hidden_widths=(6, 5), time_embed_dim=4, label_embed_dim=5, num_discrete_concepts=3
)
COORD_CFG = DenoiserConfig(
    data_dim=3, hidden_widths=(6,), time_embed_dim=4, label_embed_dim=5, coord_dim=2
)


class TestConfig:
    def test_requires_exactly_one_conditioning_mode(self):
        with pytest.raises(ValueError):
            DenoiserConfig(data_dim=2)  # neither mode
        with pytest.raises(ValueError):
            DenoiserConfig(data_dim=2, num_discrete_concepts=2, coord_dim=2)  # both

    def test_rejects_odd_time_dim(self):
        with pytest.raises(ValueError):
            DenoiserConfig(data_dim=2, time_embed_dim=5, num_discrete_concepts=1)


class TestEmbedTime:
    def test_t_zero_alternates(self):
        out = embed_time(0, 8)
        assert np.array_equal(out, np.tile([0.0, 1.0], 4))

    def test_bounded(self):
        for t in (0, 1, 17, 999, 100000):
            out = embed_time(t, 32)
            assert np.all(np.abs(out) <= 1.0)

    def test_dim4_frequencies(self):
        out = embed_time(1, 4)
        expected = [np.sin(1.0), np.cos(1.0), np.sin(1e-4), np.cos(1e-4)]
        assert out == pytest.approx(expected, rel=1e-12)

    def test_odd_dim_rejected(self):
        with pytest.raises(ValueError):
            embed_time(3, 7)


class TestEmbedLabel:
    def test_null_is_reserved_table_row(self):
        net = init_net(DISCRETE_CFG, seed=1)
        null_row = net.params["embed.table"][DISCRETE_CFG.num_discrete_concepts]
        assert np.array_equal(embed_label(net, ConceptLabel.null()), null_row)

    def test_coord_origin_with_zero_bias(self):
        net = init_net(COORD_CFG, seed=1)
        out = embed_label(net, ConceptLabel.of_coord((0.0, 0.0)))
        assert np.array_equal(out, net.params["coord.b"])
        assert np.array_equal(out, np.zeros(COORD_CFG.label_embed_dim))

    def test_distinct_ids_differ_at_init(self):
        net = init_net(DISCRETE_CFG, seed=1)
        a = embed_label(net, ConceptLabel.discrete(0))
        b = embed_label(net, ConceptLabel.discrete(1))
        assert np.any(a != b)

    def test_out_of_range_id(self):
        net = init_net(DISCRETE_CFG, seed=1)
        with pytest.raises(ValueError):
            embed_label(net, ConceptLabel.discrete(3))

    def test_coord_dim_mismatch(self):
        net = init_net(COORD_CFG, seed=1)
        with pytest.raises(ValueError):
            embed_label(net, ConceptLabel.of_coord((0.1, 0.2, 0.3)))

    def test_mode_mismatch(self):
        net = init_net(DISCRETE_CFG, seed=1)
        with pytest.raises(ValueError):
            embed_label(net, ConceptLabel.of_coord((0.0, 0.0)))


class TestForward:
    def test_zero_params_zero_output(self):
        net = init_net(DISCRETE_CFG, seed=0)
        for k in net.params:
            net.params[k][:] = 0.0
        out = net_forward(net, np.array([0.7, -0.3]), 12, ConceptLabel.discrete(1))
        assert np.array_equal(out, np.zeros(2))

    def test_purity(self):
        net = init_net(DISCRETE_CFG, seed=0)
        x = np.array([[0.2, 0.4], [1.0, -1.0]])
        a = net_forward(net, x, 7, ConceptLabel.null())
        b = net_forward(net, x, 7, ConceptLabel.null())
        assert np.array_equal(a, b)

    def test_rejects_nonfinite(self):
        net = init_net(DISCRETE_CFG, seed=0)
        with pytest.raises(ValueError):
            net_forward(net, np.array([np.nan, 0.0]), 5, ConceptLabel.null())

    def test_no_blowup_on_bounded_inputs(self):
        net = init_net(DISCRETE_CFG, seed=0)
        rng = np.random.default_rng(0)
        x = rng.uniform(-10, 10, size=(128, 2))
        out = net_forward(net, x, 999, ConceptLabel.discrete(2))
        assert np.all(np.isfinite(out))

    def test_null_row_actually_used(self):
        # replacing the null embedding must change null-conditioned outputs
        net = init_net(DISCRETE_CFG, seed=0)
        x = np.array([0.4, 0.1])
        before = net_forward(net, x, 33, ConceptLabel.null())
        net.params["embed.table"][DISCRETE_CFG.num_discrete_concepts] += 1.0
        after = net_forward(net, x, 33, ConceptLabel.null())
        assert np.any(before != after)


class TestBackward:
    def test_zero_gradient_at_exact_fit(self):
        net = init_net(DISCRETE_CFG, seed=2)
        x = np.array([[0.1, 0.2], [0.3, -0.4]])
        labels = [ConceptLabel.discrete(0), ConceptLabel.null()]
        pred = net_forward(net, x, 9, labels)
        loss, grads = net_backward(net, x, 9, labels, pred)
        assert loss == 0.0
        for g in grads.values():
            assert np.array_equal(g, np.zeros_like(g))

    def test_duplicating_batch_keeps_mean_gradient(self):
        net = init_net(DISCRETE_CFG, seed=2)
        rng = np.random.default_rng(5)
        x = rng.normal(size=(3, 2))
        t = np.array([4, 9, 100])
        labels = [ConceptLabel.discrete(1), ConceptLabel.discrete(2), ConceptLabel.null()]
        target = rng.normal(size=(3, 2))
        loss1, g1 = net_backward(net, x, t, labels, target)
        loss2, g2 = net_backward(
            net, np.vstack([x, x]), np.concatenate([t, t]), labels + labels, np.vstack([target, target])
        )
        assert loss2 == pytest.approx(loss1, rel=1e-12)
        for k in g1:
            assert g2[k] == pytest.approx(g1[k], rel=1e-9, abs=1e-12)

    @pytest.mark.parametrize("cfg,labels", [
        (DISCRETE_CFG, [ConceptLabel.discrete(0), ConceptLabel.null(), ConceptLabel.discrete(2)]),
        (COORD_CFG, [ConceptLabel.of_coord((0.3, -0.5)), ConceptLabel.null(), ConceptLabel.of_coord((0.9, 0.1))]),
    ])
    def test_finite_difference_all_parameters(self, cfg, labels):
        net = init_net(cfg, seed=0)
        rng = np.random.default_rng(1)
        n = len(labels)
        x = rng.normal(size=(n, cfg.data_dim))
        t = rng.integers(1, 50, size=n)
        target = rng.normal(size=(n, cfg.data_dim))
        _, grads = net_backward(net, x, t, labels, target)
        h = 1e-4
        for name in param_names(cfg):
            flat = net.params[name].ravel()
            gflat = grads[name].ravel()
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                lp, _ = net_backward(net, x, t, labels, target)
                flat[idx] = orig - h
                lm, _ = net_backward(net, x, t, labels, target)
                flat[idx] = orig
                fd = (lp - lm) / (2 * h)
                rel = abs(fd - gflat[idx]) / max(abs(fd), abs(gflat[idx]), 1e-8)
                assert rel < 1e-4, f"{name}[{idx}]: analytic {gflat[idx]}, finite-diff {fd}"

    def test_empty_batch_rejected(self):
        net = init_net(DISCRETE_CFG, seed=0)
        with pytest.raises(ValueError):
            net_backward(net, np.empty((0, 2)), np.empty(0, dtype=int), [], np.empty((0, 2)))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        sched = build_schedule("cosine", 64)
        net = init_net(DISCRETE_CFG, seed=9)
        path = tmp_path / "ckpt.json"
        save_checkpoint(net, sched, str(path), meta={"steps": 5, "loss": 0.25, "seed": 9})
        loaded, info = load_checkpoint(str(path))
        assert loaded.config == net.config
        for k in net.params:
            assert np.array_equal(loaded.params[k], net.params[k])
        assert info["schedule"] == ("cosine", 64)
        assert info["meta"]["loss"] == 0.25

    def test_truncated_file_is_corrupt(self, tmp_path):
        sched = build_schedule("cosine", 8)
        net = init_net(DISCRETE_CFG, seed=9)
        path = tmp_path / "ckpt.json"
        save_checkpoint(net, sched, str(path))
        raw = path.read_text()
        path.write_text(raw[: len(raw) // 2])
        with pytest.raises(CheckpointError, match="corrupt"):
            load_checkpoint(str(path))

    def test_version_mismatch(self, tmp_path):
        sched = build_schedule("cosine", 8)
        net = init_net(DISCRETE_CFG, seed=9)
        path = tmp_path / "ckpt.json"
        save_checkpoint(net, sched, str(path))
        doc = json.loads(path.read_text())
        doc["version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(str(path))

    def test_schedule_mismatch(self, tmp_path):
        sched = build_schedule("cosine", 1000)
        net = init_net(DISCRETE_CFG, seed=9)
        path = tmp_path / "ckpt.json"
        save_checkpoint(net, sched, str(path))
        with pytest.raises(CheckpointError, match="schedule mismatch"):
            load_checkpoint(str(path), expect_schedule=("cosine", 500))

    def test_shape_mismatch(self, tmp_path):
        sched = build_schedule("cosine", 8)
        net = init_net(DISCRETE_CFG, seed=9)
        path = tmp_path / "ckpt.json"
        save_checkpoint(net, sched, str(path))
        doc = json.loads(path.read_text())
        doc["params"][0]["data"] = doc["params"][0]["data"][:-1]
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointError):
            load_checkpoint(str(path))
