"""Byzantine-resilient, communication-efficient gradient descent on heavy-tailed data.

A desk-scale simulation framework: heavy-tail-robust local gradient
estimation, robust server-side aggregation, gradient compression, Byzantine
attack models, and a deterministic seeded experiment runner.
"""

from .adversary import AttackSpec, byzantine_count, corrupt, select_byzantine
from .aggregation import (
    AggregatorSpec,
    aggregate,
    bulyan,
    coord_median,
    coord_trimmed_mean,
    geometric_median,
    krum,
    krum_index,
    mean,
    norm_trimmed_mean,
)
from .compression import (
    CompressedMessage,
    CompressorSpec,
    compress,
    decompress,
    effective_delta,
    nominal_bytes,
    payload_bytes,
)
from .config import ExperimentConfig, apply_axis, config_digest, echo_config, make_config, parse_config
from .datagen import (
    CsvSchema,
    NoiseSpec,
    SyntheticSpec,
    draw_w_star,
    gen_linear,
    gen_logistic,
    load_csv,
    partition,
    sample_lognormal_centered,
    sample_pareto_centered,
    split_train_test,
)
from .engine import (
    ParamSpace,
    RoundMetrics,
    build_data,
    estimate_smoothness,
    project,
    run,
    run_baseline,
    run_compressed_gd,
    run_robust_gd,
)
from .errors import (
    ConfigError,
    DimensionMismatch,
    EmptyInput,
    HeavyFedError,
    IndivisibleSplit,
    InvalidConfig,
    MissingColumn,
    NonFiniteState,
    ParseError,
    TooFewVectors,
)
from .estimator import (
    EstimatorParams,
    TRUNCATION_CAP,
    continuity_constant,
    default_params,
    robust_gradient,
    robust_scalar_mean,
    smoothed_truncate,
    smoothing_correction,
    soft_truncate,
)
from .losses import (
    Dataset,
    LossModel,
    empirical_risk,
    per_sample_gradient,
    per_sample_gradients,
    per_sample_loss,
    per_sample_losses,
)
from .runner import RunSummary, run_experiment, run_repetitions, sweep

__version__ = "0.1.0"
