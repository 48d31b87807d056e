from .config import RUN_ROOT_ENV_VAR, ConfigError, PipelineConfig, SCHEMA
from .evaluate import METRICS_SCHEMA_VERSION, MetricsReport, evaluate_classifier, evaluate_split
from .report import REPORT_SCHEMA, emit_report, validate_report_payload
from .stages import (
    STAGES,
    MissingUpstreamError,
    StageError,
    ablation_config,
    read_metrics_report,
    run_ablation,
    run_all,
    run_stage,
    stage_complete,
)

__all__ = [
    "ConfigError",
    "METRICS_SCHEMA_VERSION",
    "MetricsReport",
    "MissingUpstreamError",
    "PipelineConfig",
    "REPORT_SCHEMA",
    "RUN_ROOT_ENV_VAR",
    "SCHEMA",
    "STAGES",
    "StageError",
    "ablation_config",
    "emit_report",
    "evaluate_classifier",
    "evaluate_split",
    "read_metrics_report",
    "run_ablation",
    "run_all",
    "run_stage",
    "stage_complete",
    "validate_report_payload",
]
