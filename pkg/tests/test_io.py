import numpy as np
import pytest

from curvlab.errors import ConfigError
from curvlab.io import heatmap_pixels, load_dataset, read_pgm, resolve_data, save_dataset, synthetic_dataset, write_pgm
from curvlab.losses import LossConfig

MSE = LossConfig("mse", "sum")
CE = LossConfig("ce", "sum")


def test_synthetic_is_deterministic():
    a = synthetic_dataset(3, 10, 5, 3, MSE)
    b = resolve_data("synthetic:seed=3,n=10", 5, 3, MSE)
    np.testing.assert_array_equal(a.inputs, b.inputs)
    np.testing.assert_array_equal(a.targets, b.targets)
    c = synthetic_dataset(3, 10, 5, 3, CE)
    assert c.targets.dtype.kind == "i" and c.targets.min() >= 0 and c.targets.max() < 3


def test_synthetic_defaults():
    assert len(resolve_data("synthetic:", 2, 2, MSE)) == 100


@pytest.mark.parametrize("arg", ["synthetic:seed=x", "synthetic:n=0", "synthetic:size=3"])
def test_synthetic_errors(arg):
    with pytest.raises(ConfigError):
        resolve_data(arg, 2, 2, MSE)


@pytest.mark.parametrize("cfg", [MSE, CE], ids=["mse", "ce"])
def test_dataset_csv_round_trip(tmp_path, cfg):
    data = synthetic_dataset(1, 7, 4, 3, cfg)
    save_dataset(tmp_path / "d.csv", data)
    back = load_dataset(tmp_path / "d.csv", 4, 3, cfg)
    np.testing.assert_array_equal(back.inputs, data.inputs)
    np.testing.assert_array_equal(back.targets, data.targets)


def test_dataset_csv_errors(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1,2,3\n")
    with pytest.raises(ConfigError):
        load_dataset(path, 4, 3, MSE)
    path.write_text("1,2,0.5\n")
    with pytest.raises(ConfigError):
        load_dataset(path, 2, 3, CE)
    with pytest.raises(ConfigError):
        load_dataset(tmp_path / "missing.csv", 2, 3, CE)


def test_heatmap_scaling():
    pix = heatmap_pixels(np.array([[1.0, 10.0], [100.0, 0.0]]))
    assert pix.dtype == np.uint8
    assert pix[1, 1] == 0 and pix[1, 0] == 255
    assert heatmap_pixels(np.ones((2, 2))).max() == 0


def test_pgm_round_trip(tmp_path, rng):
    m = rng.standard_normal((7, 4))
    write_pgm(tmp_path / "m.pgm", m)
    np.testing.assert_array_equal(read_pgm(tmp_path / "m.pgm"), heatmap_pixels(m))
    (tmp_path / "bad.pgm").write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(ValueError):
        read_pgm(tmp_path / "bad.pgm")
