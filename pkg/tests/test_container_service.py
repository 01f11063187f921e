"""
Tests for the OTSF tensor container, feature-pair loading and checkpoints.
"""

import struct

import numpy as np
import pytest

from config import ModelConfig
from errors import FormatError
from models.ofam import FeatureMap, ScoreMap, ofam
from models.ots_model import build_model
from services.container_service import (TensorRecord, decode_container, encode_container, load_checkpoint,
                                        load_feature_pairs, load_object_features, object_feature_records,
                                        read_container, save_checkpoint, write_container)


def feature_pair_records(rng, n_samples, channels=6, objects=5, units=12):
    records = []
    for i in range(n_samples):
        records.append(TensorRecord(f"{i}.F", rng.standard_normal((channels, units))))
        records.append(TensorRecord(f"{i}.S", rng.uniform(size=(objects, units))))
        records.append(TensorRecord(f"{i}.y", np.array([[i % 3]], dtype=np.float64)))
    return records


class TestContainer:
    def test_round_trip_is_bit_exact(self, rng, tmp_path):
        record = TensorRecord("w", rng.standard_normal((2, 3)))
        write_container(tmp_path / "a.otsf", [record])
        loaded = read_container(tmp_path / "a.otsf")
        assert loaded[0].name == "w"
        assert np.array_equal(loaded[0].array, record.array)
        write_container(tmp_path / "b.otsf", loaded)
        assert (tmp_path / "a.otsf").read_bytes() == (tmp_path / "b.otsf").read_bytes()

    def test_header_layout(self):
        data = encode_container([TensorRecord("ab", np.zeros((1, 2), dtype=np.uint8))])
        assert data[:4] == b"OTSF"
        assert struct.unpack("<II", data[4:12]) == (1, 1)
        assert struct.unpack("<H", data[12:14]) == (2,)
        assert data[14:16] == b"ab"
        assert struct.unpack("<BI", data[16:21]) == (3, 2)
        assert len(data) == 21 + 8 + 2

    def test_mixed_dtypes(self, rng):
        records = [TensorRecord("f", rng.standard_normal((2, 2)).astype(np.float32)),
                   TensorRecord("u", np.arange(6, dtype=np.uint8).reshape(2, 3))]
        decoded = decode_container(encode_container(records))
        assert decoded[0].array.dtype == np.float32
        assert np.array_equal(decoded[1].array, records[1].array)

    def test_bad_magic(self):
        data = b"XXXX" + encode_container([])[4:]
        with pytest.raises(FormatError) as info:
            decode_container(data)
        assert info.value.offset == 0

    def test_bad_version(self):
        data = b"OTSF" + struct.pack("<II", 2, 0)
        with pytest.raises(FormatError) as info:
            decode_container(data)
        assert info.value.offset == 4

    def test_truncated_payload(self, rng):
        data = encode_container([TensorRecord("w", rng.standard_normal((4, 4)))])
        with pytest.raises(FormatError, match="offset"):
            decode_container(data[:-5])

    def test_trailing_bytes(self):
        with pytest.raises(FormatError):
            decode_container(encode_container([]) + b"\x00")

    def test_unsupported_dtype(self):
        with pytest.raises(ValueError):
            encode_container([TensorRecord("i", np.zeros((2, 2), dtype=np.int64))])

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError):
            read_container(tmp_path / "nope.otsf")


class TestFeaturePairs:
    def test_one_valid_triplet(self, rng, tmp_path):
        write_container(tmp_path / "pairs.otsf", feature_pair_records(rng, 1))
        pairs = load_feature_pairs(tmp_path / "pairs.otsf")
        assert len(pairs) == 1
        features, scores, label = pairs[0]
        assert features.matrix.shape == (6, 12)
        assert scores.matrix.shape == (5, 12)
        assert label == 0

    def test_unit_count_mismatch_names_sample(self, rng, tmp_path):
        records = [TensorRecord("0.F", rng.standard_normal((4, 196))),
                   TensorRecord("0.S", rng.uniform(size=(3, 100))),
                   TensorRecord("0.y", np.array([[0.0]]))]
        write_container(tmp_path / "bad.otsf", records)
        with pytest.raises(FormatError) as info:
            load_feature_pairs(tmp_path / "bad.otsf")
        assert info.value.sample == 0

    def test_missing_member(self, rng, tmp_path):
        records = feature_pair_records(rng, 2)
        write_container(tmp_path / "bad.otsf", [r for r in records if r.name != "1.S"])
        with pytest.raises(FormatError, match="1.S") as info:
            load_feature_pairs(tmp_path / "bad.otsf")
        assert info.value.sample == 1

    def test_precomputed_object_features(self, rng, tmp_path):
        records = feature_pair_records(rng, 10)
        expected = []
        for i in range(10):
            features = [r.array for r in records if r.name == f"{i}.F"][0]
            scores = [r.array for r in records if r.name == f"{i}.S"][0]
            x = ofam(FeatureMap(features), ScoreMap(scores)).matrix
            expected.append(x)
            records.append(TensorRecord(f"{i}.X", x))
        write_container(tmp_path / "pairs.otsf", records)

        for i, (features, scores, _) in enumerate(load_feature_pairs(tmp_path / "pairs.otsf")):
            assert np.max(np.abs(ofam(features, scores).matrix - expected[i])) <= 1e-10

    def test_object_features_round_trip(self, rng, tmp_path):
        pairs = [(ofam(FeatureMap(rng.standard_normal((6, 12))), ScoreMap(rng.uniform(size=(5, 12)))), k % 2)
                 for k in range(4)]
        write_container(tmp_path / "x.otsf", object_feature_records(pairs))
        dataset = load_object_features(tmp_path / "x.otsf", ["a", "b"])
        assert len(dataset) == 4
        assert dataset.labels == [0, 1, 0, 1]
        assert np.array_equal(dataset[2][0].matrix, pairs[2][0].matrix)
        assert np.array_equal(dataset[2][0].present, pairs[2][0].present)


class TestCheckpoint:
    def test_reload_gives_identical_logits(self, rng, tmp_path):
        config = ModelConfig(c_in=16, n_objects=6, c_out=8, num_classes=3, use_bias=True, seed=4)
        model = build_model(config)
        for block in model.oam.blocks:
            block.gamma.assign([[0.3]])
        save_checkpoint(model, tmp_path / "model.otsf")
        assert (tmp_path / "model.yaml").exists()

        reloaded = load_checkpoint(tmp_path / "model.otsf")
        x = rng.standard_normal((16, 6))
        assert np.max(np.abs(model.forward_logits(x).value - reloaded.forward_logits(x).value)) <= 1e-12
        assert reloaded.config == config

    def test_missing_param(self, tmp_path):
        model = build_model(ModelConfig(c_in=16, n_objects=6, c_out=8, num_classes=3))
        save_checkpoint(model, tmp_path / "model.otsf")
        records = [r for r in read_container(tmp_path / "model.otsf") if r.name != "head.weight"]
        write_container(tmp_path / "model.otsf", records)
        with pytest.raises(FormatError, match="head.weight"):
            load_checkpoint(tmp_path / "model.otsf")
