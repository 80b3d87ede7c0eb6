"""Checkpoint container: roundtrips, corruption detection, manifest
consistency."""

import numpy as np
import pytest

from dpilab.checkpoint import (Checkpoint, checkpoint_load, checkpoint_save,
                               checkpoint_to_bytes)
from dpilab.errors import FormatError
from dpilab.training import RunConfig, build_model, resolve_config, train


def _small_run(conditioning="tmap", iterations=30):
    cfg = RunConfig(conditioning=conditioning, iterations=iterations,
                    batch_size=8, hidden="8,8", grid_size=16, timesteps=50)
    return cfg, train(cfg)[0]


def test_save_load_save_byte_identical(tmp_path):
    _, ckpt = _small_run()
    p1, p2 = tmp_path / "a.dpi", tmp_path / "b.dpi"
    checkpoint_save(ckpt, p1)
    loaded = checkpoint_load(p1)
    checkpoint_save(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_load_restores_everything(tmp_path):
    cfg, ckpt = _small_run("dpi")
    path = tmp_path / "c.dpi"
    checkpoint_save(ckpt, path)
    loaded = checkpoint_load(path)
    assert loaded.config_text == ckpt.config_text
    assert loaded.iteration == ckpt.iteration
    assert loaded.rng_state == ckpt.rng_state
    for section in ("tensors", "opt_tensors", "ema_tensors"):
        ours, theirs = getattr(ckpt, section), getattr(loaded, section)
        assert list(ours) == list(theirs)
        for name in ours:
            assert np.array_equal(ours[name], theirs[name])


def test_corrupted_magic_rejected(tmp_path):
    _, ckpt = _small_run()
    path = tmp_path / "bad.dpi"
    checkpoint_save(ckpt, path)
    raw = bytearray(path.read_bytes())
    raw[0:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        checkpoint_load(path)


def test_crc_detects_single_bit_flips(tmp_path, rng):
    _, ckpt = _small_run()
    path = tmp_path / "flip.dpi"
    checkpoint_save(ckpt, path)
    original = path.read_bytes()
    for _ in range(12):
        pos = int(rng.integers(len(original)))
        bit = 1 << int(rng.integers(8))
        raw = bytearray(original)
        raw[pos] ^= bit
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            checkpoint_load(path)


def test_truncation_reports_offset(tmp_path):
    _, ckpt = _small_run()
    path = tmp_path / "trunc.dpi"
    checkpoint_save(ckpt, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:len(raw) // 2])
    with pytest.raises(FormatError):
        checkpoint_load(path)
    path.write_bytes(b"")
    with pytest.raises(FormatError):
        checkpoint_load(path)


def test_payload_matches_manifest():
    cfg, ckpt = _small_run("tmap")
    model = build_model(resolve_config(cfg))
    manifest_total = sum(int(np.prod(shape)) for _, shape, _ in model.net.manifest())
    payload_total = sum(arr.size for arr in ckpt.tensors.values())
    assert payload_total == manifest_total
    assert len(ckpt.tensors) == len(model.net.manifest())
    # optimizer carries two moments per tensor, EMA exactly one shadow each
    assert len(ckpt.opt_tensors) == 2 * len(ckpt.tensors)
    assert set(ckpt.ema_tensors) == set(ckpt.tensors)


def test_bytes_stable_across_processes():
    # serialization must not depend on dict iteration quirks
    _, a = _small_run("dpi")
    _, b = _small_run("dpi")
    assert checkpoint_to_bytes(a) == checkpoint_to_bytes(b)


def test_rank_zero_tensor_roundtrip(tmp_path):
    ckpt = Checkpoint(config_text="k = v\n", tensors={"s": np.array(2.5)})
    path = tmp_path / "r0.dpi"
    checkpoint_save(ckpt, path)
    loaded = checkpoint_load(path)
    assert loaded.tensors["s"].shape == ()
    assert loaded.tensors["s"] == 2.5
