"""banditlab: deterministic simulator and metrics toolkit for two-phase
bandit A/B experiments on topic recommenders."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    ExperimentConfig,
    Group,
    ImpressionRecord,
    Outcomes,
    RecordBatch,
    TaskKind,
    decode_impression,
    encode_impression,
    load_config,
)
from .harness import run_experiment  # noqa: F401
