import numpy as np
import pytest

from src.domain.checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint
from src.domain.exceptions import ContractError
from src.engine.agent import NavigationModel


def test_model_state_survives_a_checkpoint(tmp_path):
    model = NavigationModel(12, d=8, heads=2, seed=4)
    path = save_checkpoint(tmp_path / "nested" / "model.ckpt", model.state_dict())
    restored = NavigationModel(12, d=8, heads=2, seed=99)
    restored.load_state_dict(load_checkpoint(path))
    for name, value in model.state_dict().items():
        assert np.array_equal(restored.state_dict()[name], value)


def test_header_layout(tmp_path):
    path = save_checkpoint(tmp_path / "a.ckpt", {"w": np.arange(6.0).reshape(2, 3), "s": np.array(2.5)})
    raw = path.read_bytes()
    assert raw[0] == FORMAT_VERSION
    header_length = int.from_bytes(raw[1:5], "little")
    assert raw[5 : 5 + header_length].decode("utf-8") == "w\t2,3\ns\t\n"
    assert len(raw) == 5 + header_length + 7 * 8
    assert load_checkpoint(path)["s"].shape == ()


def test_same_state_same_bytes(tmp_path):
    state = NavigationModel(12, d=8, heads=2, seed=4).state_dict()
    first = save_checkpoint(tmp_path / "a.ckpt", state).read_bytes()
    second = save_checkpoint(tmp_path / "b.ckpt", state).read_bytes()
    assert first == second


def test_unknown_version_is_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(bytes([FORMAT_VERSION + 1]) + b"\x00" * 4)
    with pytest.raises(ContractError, match="version"):
        load_checkpoint(path)


def test_trailing_bytes_are_rejected(tmp_path):
    path = save_checkpoint(tmp_path / "a.ckpt", {"w": np.ones(2)})
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(ContractError, match="trailing"):
        load_checkpoint(path)
