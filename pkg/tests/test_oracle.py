import numpy as np
import pytest

from panoptrack.core import DataError, FormatError, pack_arrays
from panoptrack.fusion import fuse
from panoptrack.metrics import evaluate_stream
from panoptrack.oracle import (
    InstancePrediction,
    NoiseConfig,
    load_predictions,
    oracle_outputs,
    save_predictions,
)


def grid_with_car(small_taxonomy, h=20, w=40):
    cls = np.zeros((h, w), dtype=np.int64)
    ins = np.zeros((h, w), dtype=np.int64)
    cls[5:15, 10:35] = 2  # car region, 250 px
    ins[5:15, 10:35] = 1
    return pack_arrays(cls, ins)


class TestNoiseFree:
    def test_exact_reproduction(self, small_taxonomy):
        grid = grid_with_car(small_taxonomy)
        logits, instances = oracle_outputs(grid, small_taxonomy)
        assert logits.shape == (20, 40, 4)
        np.testing.assert_array_equal(np.argmax(logits, axis=2),
                                      (grid & 0xFFFF).astype(np.int64))
        assert len(instances) == 1
        inst = instances[0]
        assert inst.semantic_class == 2
        assert inst.score == 1.0
        np.testing.assert_array_equal(inst.mask_logits > 0, (grid >> 16) == 1)

    def test_drop_everything(self, small_taxonomy):
        grid = grid_with_car(small_taxonomy)
        logits, instances = oracle_outputs(grid, small_taxonomy,
                                           NoiseConfig(drop_prob=1.0, seed=3))
        assert instances == []
        assert logits.shape == (20, 40, 4)

    def test_seed_determinism(self, small_taxonomy):
        grid = grid_with_car(small_taxonomy)
        noise = NoiseConfig(class_confusion_rate=0.3, boundary_jitter_px=2,
                            instance_split_prob=0.5, instance_merge_prob=0.5,
                            drop_prob=0.2, score_floor=0.4, seed=42)
        a = oracle_outputs(grid, small_taxonomy, noise)
        b = oracle_outputs(grid, small_taxonomy, noise)
        np.testing.assert_array_equal(a[0], b[0])
        assert len(a[1]) == len(b[1])
        for x, y in zip(a[1], b[1]):
            np.testing.assert_array_equal(x.mask_logits, y.mask_logits)
            assert x.semantic_class == y.semantic_class
            assert x.score == y.score

    def test_fusion_roundtrip_up_to_renaming(self, small_taxonomy):
        rng = np.random.default_rng(1)
        cls = np.zeros((16, 32), dtype=np.int64)
        ins = np.zeros((16, 32), dtype=np.int64)
        cls[0:8, :] = 1
        cls[10:14, 2:9] = 2
        ins[10:14, 2:9] = 4
        cls[3:6, 20:28] = 3
        ins[3:6, 20:28] = 9
        grid = pack_arrays(cls, ins)
        logits, instances = oracle_outputs(grid, small_taxonomy)
        fused = fuse(logits, instances, small_taxonomy)
        rep = evaluate_stream([(fused.reshape(-1), grid.reshape(-1))], small_taxonomy)
        assert rep.pq == 1.0

    def test_split_produces_two_instances(self, small_taxonomy):
        grid = grid_with_car(small_taxonomy)
        _, instances = oracle_outputs(
            grid, small_taxonomy, NoiseConfig(instance_split_prob=1.0, seed=0))
        assert len(instances) == 2
        m0 = instances[0].mask_logits > 0
        m1 = instances[1].mask_logits > 0
        assert not (m0 & m1).any()
        np.testing.assert_array_equal(m0 | m1, (grid >> 16) == 1)


class TestMonotonicity:
    def test_pq_degrades_with_confusion(self, small_taxonomy):
        rng = np.random.default_rng(0)
        cls = np.zeros((24, 48), dtype=np.int64)
        ins = np.zeros((24, 48), dtype=np.int64)
        cls[:10, :] = 1
        for i, (r, c) in enumerate([(12, 5), (12, 20), (18, 35)], start=1):
            cls[r:r + 5, c:c + 8] = 2
            ins[r:r + 5, c:c + 8] = i
        grid = pack_arrays(cls, ins)
        means = []
        for rate in (0.0, 0.1, 0.3):
            pqs = []
            for seed in range(5):
                logits, instances = oracle_outputs(
                    grid, small_taxonomy,
                    NoiseConfig(class_confusion_rate=rate, seed=seed))
                fused = fuse(logits, instances, small_taxonomy)
                rep = evaluate_stream([(fused.reshape(-1), grid.reshape(-1))],
                                      small_taxonomy)
                pqs.append(rep.pq)
            means.append(np.mean(pqs))
        assert means[0] >= means[1] >= means[2]


class TestPredictionFiles:
    def test_round_trip(self, tmp_path, small_taxonomy):
        grid = grid_with_car(small_taxonomy)
        logits, instances = oracle_outputs(grid, small_taxonomy)
        save_predictions(tmp_path, 3, logits, instances)
        l2, i2 = load_predictions(tmp_path, 3, 20, 40, small_taxonomy)
        np.testing.assert_allclose(l2, logits, atol=1e-6)
        assert len(i2) == 1
        np.testing.assert_allclose(i2[0].mask_logits, instances[0].mask_logits)
        assert i2[0].semantic_class == 2
        assert i2[0].score == 1.0

    def test_missing_file(self, tmp_path, small_taxonomy):
        with pytest.raises(FileNotFoundError):
            load_predictions(tmp_path, 0, 4, 4, small_taxonomy)

    def test_wrong_element_count(self, tmp_path, small_taxonomy):
        (tmp_path / "pred").mkdir()
        (tmp_path / "pred" / "000000.logits").write_bytes(b"\x00" * 12)
        (tmp_path / "pred" / "000000.inst").write_bytes(b"\x00\x00\x00\x00")
        with pytest.raises(FormatError):
            load_predictions(tmp_path, 0, 4, 4, small_taxonomy)

    def test_bad_score_rejected(self):
        with pytest.raises(DataError):
            InstancePrediction(np.zeros((2, 2)), 2, 1.5)
