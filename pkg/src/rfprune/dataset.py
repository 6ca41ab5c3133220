"""Synthetic regression models, train/test splitting and CSV exchange."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .sampling import derive_stream, subsample_without_replacement

NOISE_NONE = "none"
NOISE_GAUSSIAN = "gaussian"
NOISE_INDICATOR = "bernoulli-indicator"
NOISE_KINDS = (NOISE_NONE, NOISE_GAUSSIAN, NOISE_INDICATOR)

# (n_default, d, noise_kind) at noise_scale = 1
MODEL_TABLE = {
    1: (800, 50, NOISE_NONE),
    2: (600, 100, NOISE_GAUSSIAN),
    3: (600, 100, NOISE_GAUSSIAN),
    4: (600, 100, NOISE_GAUSSIAN),
    5: (700, 20, NOISE_GAUSSIAN),
    6: (500, 30, NOISE_INDICATOR),
    7: (600, 300, NOISE_GAUSSIAN),
    8: (500, 1000, NOISE_NONE),
}

GAUSSIAN_NOISE_LEVEL = 0.5
MODEL6_THRESHOLD = 1.25


class DataError(ValueError):
    """Raised for malformed or out-of-domain data."""


@dataclass(frozen=True)
class ModelSpec:
    model_id: int
    n_default: int
    d: int
    noise_kind: str = NOISE_NONE
    noise_scale: float = 1.0
    # "variance": N(0, 0.5) has variance 0.5; "sd": standard deviation 0.5
    noise_interpretation: str = "variance"

    def __post_init__(self):
        if self.model_id not in MODEL_TABLE:
            raise DataError(f"unknown model id {self.model_id}")
        if self.noise_kind not in NOISE_KINDS:
            raise DataError(f"unknown noise kind {self.noise_kind!r}")
        if not self.noise_scale >= 0:
            raise DataError("noise_scale must be nonnegative")
        if self.noise_interpretation not in ("variance", "sd"):
            raise DataError("noise_interpretation must be 'variance' or 'sd'")
        if self.noise_kind == NOISE_INDICATOR and self.model_id != 6:
            raise DataError("indicator noise only exists for model 6")

    @property
    def gaussian_sd(self) -> float:
        base = GAUSSIAN_NOISE_LEVEL
        sd = math.sqrt(base) if self.noise_interpretation == "variance" else base
        return sd * self.noise_scale


def model_spec(model_id: int, noise_scale: float = 1.0,
               noise_interpretation: str = "variance") -> ModelSpec:
    """The spec of one of the eight benchmark models.

    With ``noise_scale > 1`` the noiseless models (1 and 8) get Gaussian noise
    at the common level scaled by ``noise_scale - 1``, so that scale 1 keeps
    them noiseless and the default noisy scale of 2 gives them the same noise
    as the other models at scale 1.
    """
    if model_id not in MODEL_TABLE:
        raise DataError(f"unknown model id {model_id}")
    n_default, d, kind = MODEL_TABLE[model_id]
    if kind == NOISE_NONE and noise_scale > 1:
        return ModelSpec(model_id, n_default, d, NOISE_GAUSSIAN, noise_scale - 1.0,
                         noise_interpretation)
    return ModelSpec(model_id, n_default, d, kind, noise_scale, noise_interpretation)


def noisy_variant(spec: ModelSpec, noise_scale: float = 2.0) -> ModelSpec:
    return model_spec(spec.model_id, noise_scale, spec.noise_interpretation)


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    responses: np.ndarray
    origin: Union[ModelSpec, str] = "external"
    # realized noise, kept when generated with debug=True
    noise: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        x = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.responses, dtype=np.float64)
        if x.ndim != 2:
            raise DataError("features must be a 2-d array")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise DataError("features and responses must have the same length")
        if x.shape[0] < 1 or x.shape[1] < 1:
            raise DataError("a dataset needs at least one row and one feature")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError("non-finite value in dataset")
        bad = np.flatnonzero(np.any((x < 0.0) | (x > 1.0), axis=1))
        if bad.size:
            raise DataError(f"row {bad[0]} has a feature outside [0, 1]")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "responses", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        noise = None if self.noise is None else self.noise[indices]
        return Dataset(self.features[indices], self.responses[indices], self.origin, noise)


def tilde_transform(x):
    """Map [0, 1] onto [-1, 1]."""
    return 2.0 * (np.asarray(x, dtype=np.float64) - 0.5)


def regression_function(model_id: int, x: np.ndarray) -> np.ndarray:
    """Noiseless part of the response of ``model_id`` at rows ``x``.

    For model 6 this is the sum of indicators only; the indicator noise term
    is part of the noise.
    """
    t = tilde_transform(x)
    c = lambda i: t[:, i - 1]  # noqa: E731 - 1-based columns, as in the model table
    if model_id == 1:
        return c(1) ** 2 + np.exp(-c(2) ** 2)
    if model_id == 2:
        return c(1) * c(2) + c(3) ** 2 - c(4) * c(7) + c(8) * c(10) - c(6) ** 2
    if model_id == 3:
        return -np.sin(2 * c(1)) + c(2) ** 2 + c(3) - np.exp(-c(4))
    if model_id == 4:
        s3 = np.sin(2 * np.pi * c(3))
        a4 = 2 * np.pi * c(4)
        return (c(1) + (2 * c(2) - 1) ** 2 + s3 / (2 - s3) + np.sin(a4)
                + 2 * np.cos(a4) + 3 * np.sin(a4) ** 2 + 4 * np.cos(a4) ** 2)
    if model_id == 5:
        return ((c(1) > 0).astype(float) + c(2) ** 3
                + (c(4) + c(6) - c(8) - c(9) > 1 + c(10)).astype(float)
                + np.exp(-c(2) ** 2))
    if model_id == 6:
        return np.sum(t[:, :10] ** 3 < 0, axis=1).astype(float)
    if model_id == 7:
        return c(1) ** 2 + c(2) ** 2 * c(3) * np.exp(-np.abs(c(4))) + c(6) - c(8)
    if model_id == 8:
        return c(1) + 3 * c(3) ** 2 - 2 * np.exp(-c(5)) + c(6)
    raise DataError(f"unknown model id {model_id}")


def generate_model(spec: ModelSpec, n: int, seed: int, debug: bool = False) -> Dataset:
    """Draw ``n`` observations from ``spec`` using the stream family of ``seed``.

    Features and noise come from separate streams, so the design matrix for a
    given seed does not depend on the noise settings.
    """
    if n < 1:
        raise DataError("n must be at least 1")
    x = derive_stream(seed, 0).random((n, spec.d))
    noise_stream = derive_stream(seed, 1)
    z = noise_stream.standard_normal(n)
    if spec.noise_kind == NOISE_GAUSSIAN:
        noise = spec.gaussian_sd * z
    elif spec.noise_kind == NOISE_INDICATOR:
        noise = -spec.noise_scale * (z > MODEL6_THRESHOLD).astype(float)
    else:
        noise = np.zeros(n)
    y = regression_function(spec.model_id, x) + noise
    return Dataset(x, y, spec, noise if debug else None)


def split_train_test(data: Dataset, train_fraction: float, seed: int):
    """Uniform random partition into (train, test) with round(fraction * n) train rows."""
    if not 0.0 < train_fraction < 1.0:
        raise DataError("train_fraction must lie strictly between 0 and 1")
    n_train = int(round(train_fraction * data.n))
    if n_train < 1 or n_train >= data.n:
        raise DataError(f"split of {data.n} rows at {train_fraction} leaves an empty part")
    perm = subsample_without_replacement(data.n, data.n, derive_stream(seed, 0))
    return data.subset(np.sort(perm[:n_train])), data.subset(np.sort(perm[n_train:]))


def csv_text(data: Dataset) -> str:
    """CSV rendering with shortest round-trip float formatting."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{j + 1}" for j in range(data.d)] + ["y"])
    for row, y in zip(data.features, data.responses):
        writer.writerow([repr(float(v)) for v in row] + [repr(float(y))])
    return buf.getvalue()


def write_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(data))


def read_csv(path, require_response: bool = True) -> Dataset:
    """Read a CSV written by :func:`write_csv` (header ``x1,...,xd,y``).

    With ``require_response=False`` a file without the ``y`` column is
    accepted and the responses are set to zero (prediction inputs).
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    has_y = header[-1] == "y"
    if require_response and not has_y:
        raise DataError(f"{path}: last column must be 'y'")
    n_cols = len(header)
    body = [r for r in rows[1:] if r]
    if not body:
        raise DataError(f"{path}: no data rows")
    values = np.empty((len(body), n_cols))
    for i, row in enumerate(body):
        if len(row) != n_cols:
            raise DataError(f"{path}: row {i} has {len(row)} columns, expected {n_cols}")
        try:
            values[i] = [float(v) for v in row]
        except ValueError:
            raise DataError(f"{path}: row {i} is not numeric") from None
    if has_y:
        x, y = values[:, :-1], values[:, -1]
    else:
        x, y = values, np.zeros(len(body))
    if x.shape[1] < 1:
        raise DataError(f"{path}: no feature columns")
    bad = np.flatnonzero(np.any((x < 0.0) | (x > 1.0), axis=1))
    if bad.size:
        raise DataError(f"{path}: row {bad[0]} has a feature outside [0, 1]")
    return Dataset(x, y, "external")

