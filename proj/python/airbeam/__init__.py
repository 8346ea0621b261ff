"""Learned hybrid beamforming for massive MIMO-OFDM: channel simulation,
classical baselines and the experiment runner, backed by a C++ core."""

from ._core import (
    ChannelKind,
    ConfigError,
    ExperimentConfig,
    IntRange,
    MissingCheckpoint,
    SystemConfig,
    array_response,
    fdd_pilot_matrix,
    gen_channel,
    lloyd_max,
    pca_hb,
    quantize_phase,
    results_header,
    run_experiment,
    ss_hb,
    sum_rate,
    sw_omp,
    test_pool,
    zf_fully_digital,
)

__all__ = [
    "ChannelKind",
    "ConfigError",
    "ExperimentConfig",
    "IntRange",
    "MissingCheckpoint",
    "SystemConfig",
    "array_response",
    "fdd_pilot_matrix",
    "gen_channel",
    "lloyd_max",
    "pca_hb",
    "quantize_phase",
    "results_header",
    "run_experiment",
    "ss_hb",
    "sum_rate",
    "sw_omp",
    "test_pool",
    "zf_fully_digital",
]
