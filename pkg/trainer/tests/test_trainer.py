"""Trainer pipeline tests, including the cross-package export contract.

The inference package (`hecnet`) is imported here only to validate that
exported files satisfy its loader and plain evaluator; the trainer itself
never touches it.
"""

import time

import numpy as np
import pytest
import torch

from hetrainer import data
from hetrainer.model import DigitsNet, FoldedNet, PolyAct, fold_batchnorm
from hetrainer.pipeline import (
    TrainConfig,
    evaluate,
    export_weights,
    forward_records,
    input_shape_for,
    run_pipeline,
    train_baseline,
)


@pytest.fixture(scope="session")
def digits_result():
    cfg = TrainConfig(dataset="digits", epochs=20, seed=0)
    return cfg, run_pipeline(cfg)


class TestData:
    def test_blobs_shapes_and_determinism(self):
        a = data.blobs(seed=3)
        b = data.blobs(seed=3)
        assert np.array_equal(a.x_train, b.x_train)
        assert a.classes == 2
        assert len(a.x_train) == 960 and len(a.x_test) == 240

    def test_digits_normalized(self):
        d = data.digits()
        assert d.x_train.max() <= 1.0 and d.x_train.min() >= 0.0
        assert d.x_train.shape[1:] == (1, 8, 8)
        assert d.classes == 10


class TestBaseline:
    def test_blobs_accuracy_floor(self):
        cfg = TrainConfig(dataset="blobs", epochs=8, sparsities=[0.6, 0.7], seed=0)
        _, _, acc = train_baseline(cfg)
        assert acc >= 0.95

    def test_deterministic_under_seed(self):
        cfg = TrainConfig(dataset="blobs", epochs=3, sparsities=[0.6, 0.7], seed=5)
        m1, _, acc1 = train_baseline(cfg)
        m2, _, acc2 = train_baseline(cfg)
        assert acc1 == acc2
        for p1, p2 in zip(m1.parameters(), m2.parameters()):
            assert torch.equal(p1, p2)

    def test_swish_aq_within_two_points_of_relu_control(self):
        aq = TrainConfig(dataset="digits", epochs=20, seed=0)
        relu = TrainConfig(dataset="digits", epochs=20, seed=0, activation="relu")
        _, _, acc_aq = train_baseline(aq)
        _, _, acc_relu = train_baseline(relu)
        assert acc_aq >= acc_relu - 0.02


class TestFolding:
    def test_fold_preserves_outputs(self):
        cfg = TrainConfig(dataset="digits", epochs=2, seed=1)
        model, split, _ = train_baseline(cfg)
        folded = FoldedNet(fold_batchnorm(model), input_shape_for(split))
        x = torch.from_numpy(split.x_test[:32]).float()
        model.eval()
        with torch.no_grad():
            want = model(x).numpy()
            got = folded(x).numpy()
        assert np.allclose(got, want, atol=1e-5)
        assert not any(isinstance(m, torch.nn.BatchNorm2d) for m in folded.modules())


class TestSchedule:
    def test_monotone_partition_enforced(self):
        with pytest.raises(ValueError):
            TrainConfig(inq_partitions=[0.5, 0.4, 1.0])
        with pytest.raises(ValueError):
            TrainConfig(inq_partitions=[0.5, 0.8])

    def test_one_shot_schedule(self):
        cfg = TrainConfig(
            dataset="blobs", epochs=6, sparsities=[0.7, 0.8], inq_partitions=[1.0], seed=2
        )
        res = run_pipeline(cfg)
        assert len(res.inq_trace) == 1
        assert res.inq_trace[0][0] == 1.0

    def test_trace_records_every_step(self, digits_result):
        cfg, res = digits_result
        assert [f for f, _ in res.inq_trace] == list(cfg.inq_partitions)
        for _, acc in res.inq_trace:
            assert 0.5 < acc <= 1.0

    def test_sparsity_targets_hit(self, digits_result):
        _, res = digits_result
        import math

        for (kind, payload), target in zip(
            [r for r in res.records if r[0] in ("conv", "dense")], [0.7, 0.55, 0.75]
        ):
            w = payload[0]
            surviving = np.count_nonzero(w) / w.size
            # splicing keeps the mask near the target; snapping to zero can
            # only reduce it
            assert surviving <= target + 2.0 / w.size


class TestExport:
    def test_roundtrip_identical_arrays(self, digits_result, tmp_path):
        _, res = digits_result
        from hecnet import weights_io

        path = tmp_path / "m.fcnw"
        export_weights(res, path)
        net = weights_io.load_network(path)
        conv = net.layers[0]
        want_w, want_b = res.records[0][1][0], res.records[0][1][1]
        assert np.allclose(conv.weights * conv.mask, want_w, atol=0)
        assert np.allclose(conv.bias, want_b, atol=0)

    def test_quantized_export_accepted_with_exponents(self, digits_result, tmp_path):
        # the engine loader enforces exponent-array presence <=> pure
        # power-of-two weights, so a clean load of a fully quantized model
        # proves the arrays were written
        _, res = digits_result
        from hecnet import weights_io
        from hecnet.compress import sparsity_report

        path = tmp_path / "q.fcnw"
        export_weights(res, path)
        net = weights_io.load_network(path)
        rows = sparsity_report(net, precision_bits=15)
        assert rows and all(r.monomial_encodable for r in rows)

    def test_trainer_forward_equals_primary_eval_plain(self, digits_result, tmp_path):
        _, res = digits_result
        from hecnet import engine, weights_io

        path = tmp_path / "m.fcnw"
        export_weights(res, path)
        net = weights_io.load_network(path)
        rng = np.random.default_rng(7)
        for _ in range(100):
            x = rng.uniform(0, 1, (1, 8, 8))
            mine = forward_records(res.records, res.input_shape, x).ravel()
            theirs = engine.eval_plain(net, x).ravel()
            assert np.allclose(mine, theirs, atol=1e-6)

    def test_records_match_torch_model(self, digits_result):
        cfg, res = digits_result
        split = data.load(cfg.dataset, seed=cfg.seed)
        x = split.x_test[:20]
        for xi in x:
            got = forward_records(res.records, res.input_shape, xi)
            assert got.shape == (10,)


class TestAcceptanceSecondary:
    def test_prune_inq_pipeline_criterion(self, digits_result, tmp_path):
        """Digit-subset model loses <= 1 point and exports a
        monomial-encodable file the inference loader accepts, well inside
        the 30-minute budget."""
        t0 = time.perf_counter()
        _, res = digits_result
        drop_points = res.accuracy_drop * 100
        assert drop_points <= 1.0, f"accuracy dropped {drop_points:.2f} points"

        from hecnet import weights_io
        from hecnet.compress import sparsity_report

        path = tmp_path / "final.fcnw"
        export_weights(res, path)
        net = weights_io.load_network(path)
        assert all(r.monomial_encodable for r in sparsity_report(net, 15))
        wall = time.perf_counter() - t0
        assert wall < 1800
        print(
            f"\nACCEPTANCE S1 trainer-pipeline: PASS "
            f"(baseline {res.baseline_acc:.4f} -> quantized {res.quantized_acc:.4f}, "
            f"drop {drop_points:.2f} pts, monomial-encodable export accepted)"
        )
