"""Checkpoint round trips and schema fingerprint pinning."""

import numpy as np
import pytest

from severitas.armnet import ArmNetConfig, armnet_init
from severitas.checkpoint import load_checkpoint, save_checkpoint
from severitas.errors import CheckpointError
from severitas.mambanet import MambaNetConfig, mambanet_init

from helpers import small_schema


class TestRoundTrip:
    @pytest.mark.parametrize("kind", ["armnet", "mambanet"])
    def test_bit_exact(self, tmp_path, kind):
        schema = small_schema()
        rng = np.random.default_rng(0)
        if kind == "armnet":
            params = armnet_init(ArmNetConfig(embed_dim=3, n_heads=2, n_interactions=2,
                                              hidden_dim=6, num_layers=2), schema, rng)
        else:
            params = mambanet_init(MambaNetConfig(embed_channels=3, conv_out_channels=4,
                                                  lstm_hidden=3, hidden_dims=(6, 4)),
                                   schema, rng)
        path = tmp_path / "model.json"
        save_checkpoint(path, kind, params, schema)
        kind2, loaded = load_checkpoint(path, schema)
        assert kind2 == kind
        assert loaded.config == params.config
        assert loaded.fields == params.fields
        assert set(loaded.arrays) == set(params.arrays)
        for name in params.arrays:
            np.testing.assert_array_equal(loaded.arrays[name], params.arrays[name])

    def test_identical_saves_byte_identical(self, tmp_path):
        schema = small_schema()
        params = armnet_init(ArmNetConfig(embed_dim=2, n_heads=1, n_interactions=1,
                                          hidden_dim=4, num_layers=1),
                             schema, np.random.default_rng(1))
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_checkpoint(a, "armnet", params, schema)
        save_checkpoint(b, "armnet", params, schema)
        assert a.read_bytes() == b.read_bytes()


class TestValidation:
    def test_fingerprint_mismatch(self, tmp_path):
        schema = small_schema()
        params = armnet_init(ArmNetConfig(embed_dim=2, n_heads=1, n_interactions=1,
                                          hidden_dim=4, num_layers=1),
                             schema, np.random.default_rng(1))
        path = tmp_path / "m.json"
        save_checkpoint(path, "armnet", params, schema)
        other = small_schema()
        other.fields[0].vocabulary = ["x", "y", "z"]
        with pytest.raises(CheckpointError, match="different schema"):
            load_checkpoint(path, other)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "nope.json", small_schema())

    def test_corrupt_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json", encoding="utf-8")
        with pytest.raises(CheckpointError, match="JSON"):
            load_checkpoint(p, small_schema())
