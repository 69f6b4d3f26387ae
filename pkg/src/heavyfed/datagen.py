"""Heavy-tailed synthetic data, CSV ingestion, partitioning and splits.

Both label-noise generators are centered exactly (the raw distributions have
positive means), and the Pareto sampler uses inverse-CDF draws so that the
same seed reproduces the same data on any platform.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import IndivisibleSplit, InvalidConfig, MissingColumn, ParseError
from .losses import Dataset

NOISE_KINDS = ("lognormal", "pareto")


def sample_lognormal_centered(mu, sigma, rng, size=None):
    """Log-normal draw minus its mean exp(mu + sigma^2/2); exact mean zero."""
    if sigma <= 0.0:
        raise InvalidConfig(f"lognormal sigma must be > 0, got {sigma}")
    return rng.lognormal(mu, sigma, size) - math.exp(mu + sigma * sigma / 2.0)


def sample_pareto_centered(scale, shape, rng, size=None):
    """Pareto draw (inverse CDF) minus its mean shape*scale/(shape-1).

    Requires shape > 2 so the variance is finite.  Support is one-sided:
    every draw is >= scale - mean.
    """
    if shape <= 2.0:
        raise InvalidConfig(f"pareto shape must exceed 2 for a finite variance, got {shape}")
    if scale <= 0.0:
        raise InvalidConfig(f"pareto scale must be > 0, got {scale}")
    u = rng.random(size)
    return scale * (1.0 - u) ** (-1.0 / shape) - shape * scale / (shape - 1.0)


@dataclass(frozen=True)
class NoiseSpec:
    """Centered label-noise distribution."""

    kind: str = "lognormal"
    mu: float = 0.0
    sigma: float = 0.55848
    scale: float = 1.0
    shape: float = 3.26953

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise InvalidConfig(f"unknown noise kind {self.kind!r}")
        if self.kind == "lognormal" and self.sigma <= 0.0:
            raise InvalidConfig(f"lognormal sigma must be > 0, got {self.sigma}")
        if self.kind == "pareto":
            if self.shape <= 2.0:
                raise InvalidConfig(f"pareto shape must exceed 2, got {self.shape}")
            if self.scale <= 0.0:
                raise InvalidConfig(f"pareto scale must be > 0, got {self.scale}")

    def sample(self, rng, size=None):
        if self.kind == "lognormal":
            return sample_lognormal_centered(self.mu, self.sigma, rng, size)
        return sample_pareto_centered(self.scale, self.shape, rng, size)

    def variance(self) -> float:
        if self.kind == "lognormal":
            s2 = self.sigma * self.sigma
            return (math.exp(s2) - 1.0) * math.exp(2.0 * self.mu + s2)
        a = self.shape
        return self.scale * self.scale * a / ((a - 1.0) ** 2 * (a - 2.0))


@dataclass(frozen=True)
class SyntheticSpec:
    """Declarative description of one synthetic dataset."""

    model_kind: str = "linear"
    d: int = 10
    feature_sigma: float = 0.78
    noise: NoiseSpec = NoiseSpec()
    n_train: int = 1000
    n_test: int = 200
    w_star: np.ndarray | None = None

    def __post_init__(self):
        if self.model_kind not in ("linear", "logistic"):
            raise InvalidConfig(f"synthetic data supports linear/logistic, got {self.model_kind!r}")
        if self.d < 1:
            raise InvalidConfig(f"dimension must be >= 1, got {self.d}")
        if self.feature_sigma <= 0.0:
            raise InvalidConfig(f"feature sigma must be > 0, got {self.feature_sigma}")
        if self.n_train < 1 or self.n_test < 0:
            raise InvalidConfig("need n_train >= 1 and n_test >= 0")
        if self.w_star is not None:
            w = np.asarray(self.w_star, dtype=float)
            if w.shape != (self.d,):
                raise InvalidConfig(f"w_star must have shape ({self.d},), got {w.shape}")
            object.__setattr__(self, "w_star", w)


def _stream(seed, key):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))


def draw_w_star(d, seed) -> np.ndarray:
    """True parameter drawn uniformly from the unit sphere; deterministic."""
    v = _stream(seed, 0).standard_normal(d)
    return v / np.linalg.norm(v)


def _resolve_w_star(spec, seed):
    if spec.w_star is not None:
        return spec.w_star
    return draw_w_star(spec.d, seed)


def _features_and_noise(spec, rng, count):
    X = rng.lognormal(0.0, spec.feature_sigma, size=(count, spec.d))
    noise = spec.noise.sample(rng, count)
    return X, noise


def gen_linear(spec: SyntheticSpec, seed) -> tuple[Dataset, Dataset]:
    """Linear-response data y = <x, w*> + noise; bit-identical for a given seed."""
    if spec.model_kind != "linear":
        raise InvalidConfig(f"gen_linear called with model kind {spec.model_kind!r}")
    w_star = _resolve_w_star(spec, seed)
    out = []
    for key, count in ((1, spec.n_train), (2, spec.n_test)):
        X, noise = _features_and_noise(spec, _stream(seed, key), count)
        out.append(Dataset(X, X @ w_star + noise))
    return out[0], out[1]


def gen_logistic(spec: SyntheticSpec, seed) -> tuple[Dataset, Dataset]:
    """Binary labels y = sign(sigmoid(<x, w*> + noise) - 1/2), sign(0) = +1."""
    if spec.model_kind != "logistic":
        raise InvalidConfig(f"gen_logistic called with model kind {spec.model_kind!r}")
    w_star = _resolve_w_star(spec, seed)
    out = []
    for key, count in ((1, spec.n_train), (2, spec.n_test)):
        X, noise = _features_and_noise(spec, _stream(seed, key), count)
        z = X @ w_star + noise
        out.append(Dataset(X, np.where(z >= 0.0, 1.0, -1.0)))
    return out[0], out[1]


def partition(data: Dataset, m: int, seed=0) -> list[Dataset]:
    """Even split into m shards after a seeded shuffle."""
    if m < 1:
        raise InvalidConfig(f"device count must be >= 1, got {m}")
    n = len(data)
    if n % m != 0:
        raise IndivisibleSplit(f"{n} samples cannot be split evenly across {m} devices")
    perm = np.random.default_rng(np.random.SeedSequence(entropy=seed)).permutation(n)
    size = n // m
    return [data.take(perm[i * size : (i + 1) * size]) for i in range(m)]


def split_train_test(data: Dataset, n_test: int, seed=0) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then hold out the first n_test records as the test set."""
    if not 0 <= n_test < len(data):
        raise InvalidConfig(f"test size {n_test} invalid for {len(data)} records")
    perm = np.random.default_rng(np.random.SeedSequence(entropy=seed)).permutation(len(data))
    return data.take(perm[n_test:]), data.take(perm[:n_test])


@dataclass(frozen=True)
class CsvSchema:
    """How to read a numeric CSV: which columns, and optional preprocessing."""

    label_column: str
    feature_columns: tuple[str, ...] | None = None  # None: every other column
    standardize: bool = False
    add_bias: bool = False


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Read a numeric, comma-separated, header-first CSV into a Dataset.

    Standardization (when enabled) makes every feature column zero mean and
    unit variance over the loaded rows; constant columns are left centered.
    A bias feature of ones is appended last when ``add_bias`` is set.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file, header row required") from None
        if schema.label_column not in header:
            raise MissingColumn(f"label column {schema.label_column!r} not in header {header}")
        if schema.feature_columns is None:
            feature_names = [h for h in header if h != schema.label_column]
        else:
            feature_names = list(schema.feature_columns)
            for name in feature_names:
                if name not in header:
                    raise MissingColumn(f"feature column {name!r} not in header {header}")
        if not feature_names:
            raise InvalidConfig("no feature columns left after removing the label column")
        col_index = {name: header.index(name) for name in header}
        label_idx = col_index[schema.label_column]
        feat_idx = [col_index[name] for name in feature_names]

        features, labels = [], []
        for row_num, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(f"row {row_num}: expected {len(header)} fields, found {len(row)}")
            values = []
            for name, idx in zip(feature_names, feat_idx):
                try:
                    values.append(float(row[idx]))
                except ValueError:
                    raise ParseError(
                        f"row {row_num}, column {name!r}: not a number: {row[idx]!r}"
                    ) from None
            try:
                labels.append(float(row[label_idx]))
            except ValueError:
                raise ParseError(
                    f"row {row_num}, column {schema.label_column!r}: not a number: {row[label_idx]!r}"
                ) from None
            features.append(values)

    if not features:
        raise ParseError(f"{path}: no data rows")
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if schema.standardize:
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std == 0.0, 1.0, std)
        X = (X - mean) / std
    if schema.add_bias:
        X = np.hstack([X, np.ones((X.shape[0], 1))])
    return Dataset(X, y)
