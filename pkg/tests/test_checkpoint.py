import json

import numpy as np
import pytest

from ucfnet.autograd import GradientTape, Tensor, precision
from ucfnet.checkpoint import CheckpointError, checkpoint_digest, load_checkpoint, save_checkpoint
from ucfnet.losses import total_loss
from ucfnet.model import UcfConfig, build
from ucfnet.optim import AdamW, OptimConfig


@pytest.fixture
def trained(rng):
    model = build(UcfConfig(base_width=4, depth=2, n_ffc_blocks=1), seed=2)
    opt = AdamW(model.parameters(), OptimConfig())
    x = rng.random((2, 1, 16, 16))
    y = (rng.random((2, 1, 16, 16)) < 0.1).astype(float)
    with GradientTape() as tape:
        loss, _ = total_loss(model(Tensor(x)), y)
    tape.backward(loss)
    opt.step(1e-3)
    return model, opt.state


def test_save_load_save_identical(tmp_path, trained):
    model, state = trained
    p1 = save_checkpoint(model, state, 7, tmp_path / "a")
    ck = load_checkpoint(p1)
    assert ck.step == 7 and ck.state.step == 1
    p2 = save_checkpoint(ck.model, ck.state, ck.step, tmp_path / "b")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    m1 = json.loads(p1.read_text())
    m2 = json.loads(p2.read_text())
    m1.pop("payload"), m2.pop("payload")
    assert m1 == m2


def test_layout_tiles_payload(tmp_path, trained):
    model, state = trained
    p = save_checkpoint(model, state, 1, tmp_path / "c")
    man = json.loads(p.read_text())
    assert man["element_width"] == 32 and man["byte_order"] == "little"
    off = 0
    for e in man["tensors"]:
        assert e["offset"] == off
        assert e["nbytes"] == int(np.prod(e["shape"])) * 4
        off += e["nbytes"]
    assert off == (tmp_path / "c.bin").stat().st_size


def test_loaded_model_predicts_identically(tmp_path, trained, rng):
    model, state = trained
    save_checkpoint(model, state, 1, tmp_path / "c")
    ck = load_checkpoint(tmp_path / "c")
    x = Tensor(rng.random((1, 1, 16, 16)))
    model.eval(), ck.model.eval()
    np.testing.assert_array_equal(model(x).data, ck.model(x).data)


def test_truncated_payload(tmp_path, trained):
    model, state = trained
    save_checkpoint(model, state, 1, tmp_path / "c")
    data = (tmp_path / "c.bin").read_bytes()
    (tmp_path / "c.bin").write_bytes(data[:-10])
    with pytest.raises(CheckpointError, match="corrupt"):
        load_checkpoint(tmp_path / "c.manifest.json")


def test_shape_mismatch_against_config(tmp_path, trained):
    model, state = trained
    p = save_checkpoint(model, state, 1, tmp_path / "c")
    man = json.loads(p.read_text())
    man["config"]["base_width"] = 8
    p.write_text(json.dumps(man))
    with pytest.raises(CheckpointError, match="does not match"):
        load_checkpoint(p)


def test_cross_mode_load_warns(tmp_path, rng):
    with precision("float64"):
        model = build(UcfConfig(base_width=4, depth=2, n_ffc_blocks=0), seed=0)
        save_checkpoint(model, None, 0, tmp_path / "d")
    with pytest.warns(UserWarning, match="float64 checkpoint to float32"):
        ck = load_checkpoint(tmp_path / "d", dtype="float32")
    assert all(p.data.dtype == np.float32 for p in ck.model.parameters())
    ref = dict(model.named_parameters())
    for name, p in ck.model.named_parameters():
        np.testing.assert_array_equal(p.data, ref[name].data.astype(np.float32))


def test_digest_changes_with_content(tmp_path, trained):
    model, state = trained
    save_checkpoint(model, state, 1, tmp_path / "e")
    d1 = checkpoint_digest(tmp_path / "e")
    model.parameters()[0].data[0, 0, 0, 0] += 1
    save_checkpoint(model, state, 1, tmp_path / "e")
    assert checkpoint_digest(tmp_path / "e") != d1
