from .ekf import (
    EkfState,
    ImuSample,
    MeasurementKind,
    MeasurementPacket,
    default_R,
    predict,
    propagate,
    update,
    variance_from_stats,
)
from .filter import EkfFusion, FilterRun, FusionConfig, FusionEngine, run_filter
from .geodesy import FrameOrigin, geodetic_to_ned, ned_to_geodetic
from .rotations import quat_to_rotation

__all__ = [
    "EkfState", "ImuSample", "MeasurementKind", "MeasurementPacket", "default_R", "predict",
    "propagate", "update", "variance_from_stats", "EkfFusion", "FilterRun", "FusionConfig",
    "FusionEngine", "run_filter", "FrameOrigin", "geodetic_to_ned", "ned_to_geodetic",
    "quat_to_rotation",
]
