"""Checkpoint container: byte format, corruption diagnostics, model dispatch."""

import json
import struct

import numpy as np
import pytest
import torch

from faderlab.attributes import AttributeStats
from faderlab.baselines import ArConfig, CondLatentVae, CondVaeConfig, QuantileMap
from faderlab.checkpoint import (
    MAGIC,
    CheckpointError,
    load_checkpoint,
    load_model,
    save_arvae,
    save_checkpoint,
    save_diffusion,
    save_lcvae,
    save_vae,
)
from faderlab.generate import LatentScaler
from faderlab.lcdiff import Denoiser, DenoiserConfig, SinusoidalConfig, build_schedule
from faderlab.seqvae import SequenceVae, VaeConfig

TINY_VAE = VaeConfig(latent_dim=4, enc_hidden=8, conductor_hidden=8, decoder_hidden=8)
TINY_DENOISER = DenoiserConfig(
    latent_dim=4, hidden=8, blocks=3, trunk_width=8, encoding=SinusoidalConfig(dim=4)
)
MINI_CVAE = CondVaeConfig(latent_dim=4, inner_dim=3, hidden=8, depth=2)
STATS = AttributeStats(mean=1.0, std=0.5, min=0.0, max=2.0, p99=1.9)


def sample_tensors(seed=0):
    rng = np.random.default_rng(seed)
    return {
        "alpha": rng.normal(size=(3, 4)).astype(np.float32),
        "beta": rng.normal(size=(7,)).astype(np.float32),
        "gamma": np.float32(2.5).reshape(()),
    }


def read_parts(path):
    raw = path.read_bytes()
    (length,) = struct.unpack("<I", raw[4:8])
    manifest = json.loads(raw[8:8 + length].decode("utf-8"))
    return manifest, raw[8 + length:]


def write_parts(path, manifest, payload):
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    path.write_bytes(MAGIC + struct.pack("<I", len(blob)) + blob + payload)


class TestContainer:
    def test_round_trip_bit_exact(self, tmp_path):
        path = tmp_path / "model.flck"
        tensors = sample_tensors()
        save_checkpoint(path, "vae", tensors, {"latent_dim": 4}, extra={"note": "x"})
        loaded, manifest = load_checkpoint(path)
        assert set(loaded) == set(tensors)
        for name in tensors:
            np.testing.assert_array_equal(loaded[name], tensors[name])
            assert loaded[name].dtype == np.float32
        assert manifest["model_kind"] == "vae"
        assert manifest["config"] == {"latent_dim": 4}
        assert manifest["extra"] == {"note": "x"}
        assert manifest["format_version"] == 1

    def test_save_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a.flck", tmp_path / "b.flck"
        save_checkpoint(a, "vae", sample_tensors(), {"k": 1})
        save_checkpoint(b, "vae", sample_tensors(), {"k": 1})
        assert a.read_bytes() == b.read_bytes()

    def test_torch_and_float64_inputs_coerced(self, tmp_path):
        path = tmp_path / "m.flck"
        wide = np.arange(6, dtype=np.float64).reshape(2, 3)
        transposed = torch.arange(6, dtype=torch.float32).reshape(2, 3).t()
        save_checkpoint(path, "vae", {"w": wide, "t": transposed}, {})
        loaded, _ = load_checkpoint(path)
        np.testing.assert_array_equal(loaded["w"], wide.astype(np.float32))
        np.testing.assert_array_equal(loaded["t"], transposed.numpy())

    def test_offsets_recorded_contiguously(self, tmp_path):
        path = tmp_path / "m.flck"
        save_checkpoint(path, "vae", sample_tensors(), {})
        manifest, payload = read_parts(path)
        entries = manifest["tensors"]
        assert entries[0]["offset"] == 0
        assert entries[1]["offset"] == 3 * 4 * 4
        assert entries[2]["shape"] == [1]  # 0-d inputs are stored as length-1 vectors
        assert len(payload) == 3 * 4 * 4 + 7 * 4 + 4

    def test_creates_parent_directories(self, tmp_path):
        path = tmp_path / "deep" / "nested" / "m.flck"
        save_checkpoint(path, "vae", sample_tensors(), {})
        assert path.exists()

    def test_unknown_kind_rejected(self, tmp_path):
        with pytest.raises(CheckpointError, match="model kind"):
            save_checkpoint(tmp_path / "m.flck", "transformer", {}, {})


class TestCorruption:
    def _valid(self, tmp_path):
        path = tmp_path / "m.flck"
        save_checkpoint(path, "vae", sample_tensors(), {"latent_dim": 4})
        return path

    def test_bad_magic(self, tmp_path):
        path = self._valid(tmp_path)
        raw = path.read_bytes()
        path.write_bytes(b"NOPE" + raw[4:])
        with pytest.raises(CheckpointError, match="not a FLCK"):
            load_checkpoint(path)

    def test_too_short(self, tmp_path):
        path = tmp_path / "m.flck"
        path.write_bytes(b"FLC")
        with pytest.raises(CheckpointError, match="not a FLCK"):
            load_checkpoint(path)

    def test_truncated_manifest(self, tmp_path):
        path = self._valid(tmp_path)
        raw = path.read_bytes()
        path.write_bytes(raw[:20])
        with pytest.raises(CheckpointError, match="truncated manifest"):
            load_checkpoint(path)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "m.flck"
        blob = b"{not json"
        path.write_bytes(MAGIC + struct.pack("<I", len(blob)) + blob)
        with pytest.raises(CheckpointError, match="not valid JSON"):
            load_checkpoint(path)

    def test_unsupported_version(self, tmp_path):
        path = self._valid(tmp_path)
        manifest, payload = read_parts(path)
        manifest["format_version"] = 9
        write_parts(path, manifest, payload)
        with pytest.raises(CheckpointError, match="format version"):
            load_checkpoint(path)

    def test_truncated_tensor_data(self, tmp_path):
        path = self._valid(tmp_path)
        manifest, payload = read_parts(path)
        write_parts(path, manifest, payload[:-8])
        with pytest.raises(CheckpointError, match="truncated tensor data"):
            load_checkpoint(path)

    def test_trailing_garbage(self, tmp_path):
        path = self._valid(tmp_path)
        manifest, payload = read_parts(path)
        write_parts(path, manifest, payload + b"\x00\x00\x00\x00")
        with pytest.raises(CheckpointError, match="trailing bytes"):
            load_checkpoint(path)

    def test_out_of_order_segments(self, tmp_path):
        path = self._valid(tmp_path)
        manifest, payload = read_parts(path)
        manifest["tensors"][0], manifest["tensors"][1] = (
            manifest["tensors"][1],
            manifest["tensors"][0],
        )
        write_parts(path, manifest, payload)
        with pytest.raises(CheckpointError, match="out-of-order"):
            load_checkpoint(path)


class TestModelRoundTrips:
    def test_vae(self, tmp_path):
        model = SequenceVae(TINY_VAE)
        model.init_params(torch.Generator().manual_seed(0))
        path = tmp_path / "vae.flck"
        save_vae(path, model)
        loaded = load_model(path)
        assert loaded.kind == "vae"
        assert loaded.model.config == TINY_VAE
        assert not loaded.model.training
        for name, param in model.state_dict().items():
            assert torch.equal(loaded.model.state_dict()[name], param), name

    def test_diffusion(self, tmp_path):
        model = Denoiser(TINY_DENOISER)
        model.init_params(torch.Generator().manual_seed(1))
        schedule = build_schedule(10, 1e-4, 1e-2)
        path = tmp_path / "diff.flck"
        save_diffusion(path, model, schedule, "note_density", STATS)
        loaded = load_model(path)
        assert loaded.kind == "diffusion"
        assert loaded.model.config == TINY_DENOISER
        assert loaded.attribute == "note_density"
        assert loaded.stats == STATS
        assert loaded.schedule.num_steps == 10
        np.testing.assert_allclose(loaded.schedule.betas, schedule.betas, rtol=1e-12)
        assert loaded.scaler is None
        for name, param in model.state_dict().items():
            assert torch.equal(loaded.model.state_dict()[name], param), name

    def test_diffusion_with_latent_scaler(self, tmp_path):
        model = Denoiser(TINY_DENOISER)
        model.init_params(torch.Generator().manual_seed(1))
        schedule = build_schedule(10, 1e-4, 1e-2)
        scaler = LatentScaler(loc=torch.tensor([0.5, -1.0, 2.0, 0.0]),
                              scale=torch.tensor([3.0, 0.25, 1.0, 8.0]))
        path = tmp_path / "diff.flck"
        save_diffusion(path, model, schedule, "note_density", STATS, scaler=scaler)
        loaded = load_model(path)
        assert torch.equal(loaded.scaler.loc, scaler.loc)
        assert torch.equal(loaded.scaler.scale, scaler.scale)
        # aux tensors must not leak into the model state
        for name, param in model.state_dict().items():
            assert torch.equal(loaded.model.state_dict()[name], param), name

    def test_arvae_with_quantile_map(self, tmp_path):
        model = SequenceVae(TINY_VAE)
        model.init_params(torch.Generator().manual_seed(2))
        ar = ArConfig(variant="pl", latent_index=2, gamma=0.5, delta=10.0)
        # float32-representable knots survive the container exactly
        qm = QuantileMap(
            sorted_attr=np.array([0.0, 0.5, 1.0]), sorted_latent=np.array([-2.0, 0.25, 2.0])
        )
        path = tmp_path / "arvae.flck"
        save_arvae(path, model, ar, "contour", STATS, quantile_map=qm)
        loaded = load_model(path)
        assert loaded.kind == "arvae"
        assert loaded.ar == ar
        assert loaded.attribute == "contour"
        np.testing.assert_array_equal(loaded.quantile_map.sorted_attr, qm.sorted_attr)
        np.testing.assert_array_equal(loaded.quantile_map.sorted_latent, qm.sorted_latent)
        assert "__aux__.quantile_attr" not in dict(loaded.model.state_dict())

    def test_arvae_without_quantile_map(self, tmp_path):
        model = SequenceVae(TINY_VAE)
        model.init_params(torch.Generator().manual_seed(3))
        path = tmp_path / "arvae.flck"
        save_arvae(path, model, ArConfig(), "note_density", STATS)
        loaded = load_model(path)
        assert loaded.quantile_map is None

    def test_lcvae(self, tmp_path):
        model = CondLatentVae(MINI_CVAE)
        model.init_params(torch.Generator().manual_seed(4))
        path = tmp_path / "lcvae.flck"
        save_lcvae(path, model, "rhythm_complexity", STATS)
        loaded = load_model(path)
        assert loaded.kind == "lcvae"
        assert loaded.model.config == MINI_CVAE
        z = torch.randn(2, 3, generator=torch.Generator().manual_seed(5))
        a = torch.tensor([0.5, 1.5])
        with torch.no_grad():
            assert torch.equal(loaded.model.decode(z, a), model.decode(z, a))

    def test_missing_tensor(self, tmp_path):
        model = SequenceVae(TINY_VAE)
        model.init_params(torch.Generator().manual_seed(0))
        state = dict(model.state_dict())
        state.pop(next(iter(state)))
        path = tmp_path / "broken.flck"
        save_checkpoint(path, "vae", state, {"latent_dim": 4, "enc_hidden": 8,
                                             "conductor_hidden": 8, "decoder_hidden": 8})
        with pytest.raises(CheckpointError, match="missing tensor"):
            load_model(path)

    def test_shape_mismatch(self, tmp_path):
        model = SequenceVae(TINY_VAE)
        model.init_params(torch.Generator().manual_seed(0))
        wrong = VaeConfig(latent_dim=8, enc_hidden=8, conductor_hidden=8, decoder_hidden=8)
        path = tmp_path / "broken.flck"
        save_checkpoint(path, "vae", model.state_dict(), dataclass_dict(wrong))
        with pytest.raises(CheckpointError, match="model expects"):
            load_model(path)


def dataclass_dict(config):
    import dataclasses

    return dataclasses.asdict(config)
