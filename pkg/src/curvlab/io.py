"""Dataset files, synthetic data, metadata sidecars and PGM heatmaps."""
import json
import re

import numpy as np

from .curvature import Dataset
from .errors import ConfigError
from .losses import Criterion, LossConfig

HEATMAP_EPS = 1e-12


def synthetic_dataset(seed, n, input_dim, num_outputs, cfg: LossConfig) -> Dataset:
    """Standard-normal inputs; standard-normal targets or uniform class labels."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, input_dim))
    if cfg.criterion is Criterion.MSE:
        y = rng.standard_normal((n, num_outputs))
    else:
        y = rng.integers(0, num_outputs, size=n)
    return Dataset(x, y)


def load_dataset(path, input_dim, num_outputs, cfg: LossConfig) -> Dataset:
    try:
        raw = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read dataset {path}: {exc}") from None
    want = input_dim + (num_outputs if cfg.criterion is Criterion.MSE else 1)
    if raw.shape[1] != want:
        raise ConfigError(f"dataset {path} has {raw.shape[1]} columns, expected {want}")
    x, y = raw[:, :input_dim], raw[:, input_dim:]
    if cfg.criterion is Criterion.CE:
        labels = y[:, 0]
        if np.any(labels != np.round(labels)) or np.any(labels < 0) or np.any(labels >= num_outputs):
            raise ConfigError(f"dataset {path}: class labels must be integers in [0, {num_outputs})")
        y = labels.astype(np.int64)
    return Dataset(x, y)


def save_dataset(path, data: Dataset):
    y = data.targets.reshape(len(data), -1).astype(np.float64)
    np.savetxt(path, np.hstack([data.inputs, y]), delimiter=",", fmt="%.17g")


_SYNTH = re.compile(r"^synthetic:(.*)$")


def resolve_data(arg, input_dim, num_outputs, cfg: LossConfig) -> Dataset:
    """Load ``arg`` as a CSV path or build ``synthetic:seed=S,n=N`` data."""
    m = _SYNTH.match(arg)
    if not m:
        return load_dataset(arg, input_dim, num_outputs, cfg)
    params = {}
    for part in filter(None, m.group(1).split(",")):
        key, _, value = part.partition("=")
        try:
            params[key.strip()] = int(value)
        except ValueError:
            raise ConfigError(f"bad synthetic data option {part!r}") from None
    unknown = set(params) - {"seed", "n"}
    if unknown:
        raise ConfigError(f"unknown synthetic data options {sorted(unknown)}")
    n = params.get("n", 100)
    if n < 1:
        raise ConfigError("synthetic data needs n >= 1")
    return synthetic_dataset(params.get("seed", 0), n, input_dim, num_outputs, cfg)


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def heatmap_pixels(mat):
    """``log10(|m| + eps)`` mapped linearly onto 0..255 over the matrix's own range."""
    logs = np.log10(np.abs(np.asarray(mat, dtype=np.float64)) + HEATMAP_EPS)
    lo, hi = float(logs.min()), float(logs.max())
    if hi == lo:
        return np.zeros(logs.shape, dtype=np.uint8)
    return np.rint(255.0 * (logs - lo) / (hi - lo)).astype(np.uint8)


def write_pgm(path, mat):
    """8-bit binary PGM (P5) heatmap of a matrix."""
    pix = heatmap_pixels(np.atleast_2d(mat))
    with open(path, "wb") as fh:
        fh.write(f"P5\n{pix.shape[1]} {pix.shape[0]}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    header = data.split(b"\n", 3)
    if header[0] != b"P5":
        raise ValueError(f"{path} is not a binary PGM")
    width, height = map(int, header[1].split())
    return np.frombuffer(header[3], dtype=np.uint8).reshape(height, width)
