import numpy as np
import pytest

from edgerank.features import FeatureConfig
from edgerank.model import ModelConfig, RankingModel, production_config
from edgerank.serialize import (
    ModelFileError,
    file_digest,
    load_model,
    save_model,
    update_required,
)

FC = FeatureConfig(n_categories=6, duration_buckets=8, history_len=4, max_ordered=2,
                   category_dim=3, duration_dim=3, feedback_dim=2, net_dim=2,
                   autodis_buckets=4, autodis_dim=2)
MC = ModelConfig(heads=2, head_dim=2, experts=2, expert_hidden=4, expert_out=4,
                 tower_dims=(4, 1))


@pytest.fixture
def model_path(tmp_path):
    model = RankingModel(MC, FC, seed=3)
    path = tmp_path / "model.bin"
    digest = save_model(model, path)
    return model, path, digest


class TestRoundTrip:
    def test_weights_identical_after_reload(self, model_path):
        model, path, _ = model_path
        loaded = load_model(path)
        assert loaded.schema == model.schema
        assert loaded.get_params() == model.get_params()
        for name, t in model.params.items():
            np.testing.assert_array_equal(loaded.params[name].data, t.data)

    def test_digest_stable_and_reported(self, model_path):
        model, path, digest = model_path
        assert file_digest(path) == digest
        # byte-identical rewrite gives the same digest
        path2 = path.with_name("again.bin")
        assert save_model(model, path2) == digest

    def test_different_weights_different_digest(self, model_path, tmp_path):
        _, _, digest = model_path
        other = RankingModel(MC, FC, seed=4)
        assert save_model(other, tmp_path / "other.bin") != digest


class TestCorruptionDetection:
    def test_every_section_single_byte_flip(self, model_path):
        """Flipping one byte anywhere in the file must be rejected."""
        _, path, _ = model_path
        raw = bytearray(path.read_bytes())
        for pos in (0, 5, 20, len(raw) // 2, len(raw) - 40, len(raw) - 1):
            corrupted = bytearray(raw)
            corrupted[pos] ^= 0x01
            bad = path.with_name("bad.bin")
            bad.write_bytes(bytes(corrupted))
            with pytest.raises(ModelFileError):
                load_model(bad)

    def test_truncation_rejected(self, model_path):
        _, path, _ = model_path
        raw = path.read_bytes()
        bad = path.with_name("short.bin")
        bad.write_bytes(raw[:-10])
        with pytest.raises(ModelFileError):
            load_model(bad)
        bad.write_bytes(raw[:3])
        with pytest.raises(ModelFileError):
            load_model(bad)

    def test_wrong_magic_rejected(self, model_path):
        _, path, _ = model_path
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        bad = path.with_name("magic.bin")
        bad.write_bytes(bytes(raw))
        with pytest.raises(ModelFileError):
            load_model(bad)


class TestUpdateProtocol:
    def test_update_when_digests_differ(self):
        assert update_required(None, "abc")
        assert update_required("old", "new")
        assert not update_required("same", "same")

    def test_retrain_changes_digest_forces_update(self, model_path, tmp_path):
        model, _, old = model_path
        model.params["emb_cat"].data[0, 0] += 1.0
        new = save_model(model, tmp_path / "v2.bin")
        assert update_required(old, new)


class TestSizeBudget:
    def test_production_file_under_six_megabytes(self, tmp_path):
        mc, fc = production_config()
        model = RankingModel(mc, fc, seed=0)
        path = tmp_path / "prod.bin"
        save_model(model, path)
        assert path.stat().st_size < 6 * 1024 * 1024
        assert model.parameter_count() < 1_500_000
