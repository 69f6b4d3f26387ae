"""Synchronous server/device simulation loops with projection and metrics.

Each round broadcasts the current parameter vector, lets every device
compute its upload from its own shard, applies the adversary to the
Byzantine subset, aggregates at the server, and takes a projected descent
step.  Device computations are pure functions of (round state, shard,
derived seed); the loop evaluates them sequentially, so identical configs
and seeds reproduce bit-identical metric streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import adversary, aggregation, compression
from .config import ExperimentConfig
from .datagen import (
    CsvSchema,
    SyntheticSpec,
    draw_w_star,
    gen_linear,
    gen_logistic,
    load_csv,
    partition,
    split_train_test,
)
from .errors import InvalidConfig, NonFiniteState
from .estimator import robust_gradient
from .losses import LossModel, empirical_risk, per_sample_gradients


@dataclass(frozen=True)
class ParamSpace:
    """Euclidean ball the iterates are projected back into."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", center)
        if center.ndim != 1:
            raise InvalidConfig("parameter space center must be a vector")
        if not (math.isfinite(self.radius) and self.radius > 0.0):
            raise InvalidConfig(f"parameter space radius must be finite and > 0, got {self.radius}")


def project(w, space: ParamSpace) -> np.ndarray:
    """Exact Euclidean projection onto the ball.

    Non-finite inputs pass through unchanged so the caller's divergence
    check sees them.
    """
    w = np.asarray(w, dtype=float)
    offset = w - space.center
    dist = float(np.linalg.norm(offset))
    if not math.isfinite(dist) or dist <= space.radius:
        return w
    return space.center + (space.radius / dist) * offset


@dataclass(frozen=True)
class RoundMetrics:
    """State captured after each round (round 0 is the initial point)."""

    round_index: int
    test_loss: float
    param_err: float | None
    bytes_up: int
    grad_norm: float


_STREAMS = {"data": 0, "init": 1, "adversary": 2, "compressor": 3, "partition": 4}


def stream_seed(config: ExperimentConfig, rep: int, name: str) -> int:
    """Integer seed for one randomness stream of one repetition.

    The per-repetition base is ``seed XOR rep``; data/init/adversary honour
    their explicit config overrides.
    """
    explicit = {
        "data": config.seed_data,
        "init": config.seed_init,
        "adversary": config.seed_adversary,
    }.get(name)
    base = (config.seed if explicit is None else explicit) ^ rep
    ss = np.random.SeedSequence(entropy=base, spawn_key=(_STREAMS[name],))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _round_rng(seed, t):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(t, 1)))


def _message_rng(seed, t, device, stage):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(t, device, stage)))


def build_data(config: ExperimentConfig, rep: int = 0):
    """Materialize (train, test, w_star-or-None, model) for one repetition."""
    seed = stream_seed(config, rep, "data")
    if config.source == "synthetic":
        spec = SyntheticSpec(
            model_kind=config.model_kind,
            d=config.dimension,
            feature_sigma=config.resolved_feature_sigma(),
            noise=config.noise,
            n_train=config.devices * config.samples_per_device,
            n_test=config.test_samples,
            w_star=draw_w_star(config.dimension, seed),
        )
        gen = gen_linear if config.model_kind == "linear" else gen_logistic
        train, test = gen(spec, seed)
        model = LossModel(config.model_kind, config.dimension, config.mlp_hidden, config.mlp_objective)
        return train, test, spec.w_star, model
    schema = CsvSchema(
        label_column=config.csv_label,
        feature_columns=config.csv_features,
        standardize=config.csv_standardize,
        add_bias=config.csv_add_bias,
    )
    data = load_csv(config.csv_path, schema)
    train, test = split_train_test(data, config.test_samples, seed)
    model = LossModel(config.model_kind, train.features.shape[1], config.mlp_hidden, config.mlp_objective)
    return train, test, None, model


def estimate_smoothness(model: LossModel, train) -> float:
    """Largest eigenvalue of the pooled feature second-moment matrix (logistic: /4)."""
    if model.kind == "mlp":
        raise InvalidConfig("no smoothness estimate for mlp models; set smoothness or eta")
    X = train.features
    lam = float(np.linalg.eigvalsh(X.T @ X / X.shape[0])[-1])
    if lam <= 0.0:
        raise InvalidConfig("feature second-moment matrix is singular; set eta explicitly")
    return lam if model.kind == "linear" else lam / 4.0


def _initial_point(config, rep, d, space):
    if config.w0 == "origin":
        return np.zeros(d)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=stream_seed(config, rep, "init")))
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    return space.center + space.radius * rng.random() ** (1.0 / d) * direction


def _run(config: ExperimentConfig, rep: int, mode: str, aggregator=None):
    train, test, w_star, model = build_data(config, rep)
    m = config.devices
    shards = partition(train, m, seed=stream_seed(config, rep, "partition"))
    n = len(shards[0])
    d = model.dim

    smooth = config.smoothness if config.smoothness is not None else estimate_smoothness(model, train)
    eta = config.eta if config.eta is not None else 1.0 / smooth
    space = ParamSpace(np.zeros(d), config.space_radius)
    w = _initial_point(config, rep, d, space)

    est = None
    if mode in ("robust", "compressed"):
        variant = "compressed" if mode == "compressed" else "plain"
        est = config.estimator_params(n=n, m=m, d=d, variant=variant)
    agg_spec = aggregator if aggregator is not None else config.aggregator
    adv_seed = stream_seed(config, rep, "adversary")
    comp_seed = stream_seed(config, rep, "compressor")
    buffers = None

    def snapshot(t, bytes_up, grad_norm, w_now):
        err = float(np.linalg.norm(w_now - w_star)) if w_star is not None else None
        return RoundMetrics(t, empirical_risk(model, w_now, test), err, bytes_up, grad_norm)

    metrics = [snapshot(0, 0, 0.0, w)]
    for t in range(config.rounds):
        if mode == "baseline":
            uploads = [per_sample_gradients(model, w, shard).mean(axis=0) for shard in shards]
            if agg_spec.kind == "mkrum":
                if buffers is None:
                    buffers = [np.zeros(d) for _ in range(m)]
                uploads = [
                    agg_spec.momentum * buf + (1.0 - agg_spec.momentum) * g
                    for buf, g in zip(buffers, uploads)
                ]
                buffers = uploads
        else:
            uploads = [robust_gradient(model, w, shard, est) for shard in shards]

        byz = adversary.select_byzantine(m, config.attack.alpha, config.attack.dynamic, t, adv_seed)
        if mode == "compressed":
            msgs = [
                compression.compress(config.compressor, u, rng=_message_rng(comp_seed, t, i, 0))
                for i, u in enumerate(uploads)
            ]
            wire = [compression.decompress(msg) for msg in msgs]
            corrupted = adversary.corrupt(config.attack, wire, byz, _round_rng(adv_seed, t))
            # Byzantine devices choose their own wire message; it is emitted
            # in the run's message format so byte accounting stays uniform.
            for i in byz:
                msgs[i] = compression.compress(
                    config.compressor, corrupted[i], rng=_message_rng(comp_seed, t, i, 1)
                )
            vectors = [compression.decompress(msg) for msg in msgs]
            agg_vec = aggregation.norm_trimmed_mean(vectors, config.beta)
            bytes_up = sum(compression.nominal_bytes(msg) for msg in msgs)
        else:
            vectors = adversary.corrupt(config.attack, uploads, byz, _round_rng(adv_seed, t))
            if mode == "robust":
                agg_vec = aggregation.coord_trimmed_mean(vectors, config.beta)
            else:
                agg_vec = aggregation.aggregate(agg_spec, vectors)
            bytes_up = 8 * d * m

        w_next = project(w - eta * agg_vec, space)
        if not np.all(np.isfinite(w_next)):
            raise NonFiniteState(t)
        metrics.append(snapshot(t + 1, bytes_up, float(np.linalg.norm(agg_vec)), w_next))
        w = w_next
    return metrics


def run_robust_gd(config: ExperimentConfig, rep: int = 0) -> list[RoundMetrics]:
    """Robust per-coordinate local estimates + coordinate-wise trimmed mean."""
    return _run(config, rep, "robust")


def run_compressed_gd(config: ExperimentConfig, rep: int = 0) -> list[RoundMetrics]:
    """Robust local estimates, compressed uploads, norm-based trimmed mean."""
    return _run(config, rep, "compressed")


def run_baseline(config: ExperimentConfig, aggregator=None, rep: int = 0) -> list[RoundMetrics]:
    """Plain local mean gradients under a configurable aggregation rule."""
    return _run(config, rep, "baseline", aggregator=aggregator)


def run(config: ExperimentConfig, rep: int = 0) -> list[RoundMetrics]:
    """Dispatch on ``config.algorithm``."""
    if config.algorithm == "robust":
        return run_robust_gd(config, rep)
    if config.algorithm == "robust_compressed":
        return run_compressed_gd(config, rep)
    return run_baseline(config, rep=rep)
