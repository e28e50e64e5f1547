"""Configuration, the training loop and the command line."""

from .config import ALGOS, DESK_ITERATIONS, ConfigError, ExperimentConfig, load_config, parse_config
from .run import (
    LOG_COLUMNS,
    PHASES,
    STREAMS,
    RunAborted,
    RunResult,
    build_demos,
    gail_mode,
    policy_from_checkpoint,
    prepare_expert_side,
    rng_streams,
    run_training,
)
