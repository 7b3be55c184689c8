"""Pydantic schemas for the reconstruction pipeline"""

from .config import (
    RenderConfig,
    FieldConfig,
    OptimSettings,
    SceneConfig,
    OrbitConfig,
    MaterialConfig,
    BakeConfig,
    RelightConfig,
    WarpConfig,
    PathsConfig,
    PipelineConfig,
    RuntimeSettings,
)
from .results import (
    LossRecord,
    RelightRow,
    MetricRow,
    LOSS_CSV_HEADER,
    RELIGHT_CSV_HEADER,
    METRIC_CSV_HEADER,
    format_db,
)

__all__ = [
    "RenderConfig",
    "FieldConfig",
    "OptimSettings",
    "SceneConfig",
    "OrbitConfig",
    "MaterialConfig",
    "BakeConfig",
    "RelightConfig",
    "WarpConfig",
    "PathsConfig",
    "PipelineConfig",
    "RuntimeSettings",
    "LossRecord",
    "RelightRow",
    "MetricRow",
    "LOSS_CSV_HEADER",
    "RELIGHT_CSV_HEADER",
    "METRIC_CSV_HEADER",
    "format_db",
]
