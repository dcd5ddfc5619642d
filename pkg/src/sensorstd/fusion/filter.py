"""Drive the EKF from a stream of standardized records.

Accelerometer records (rotated by the latest Orientation quaternion, or a
gyro-integrated attitude when no orientation stream is present) drive the time
update. Location (GNSS), UWB and Bluetooth records, and VPS position packets
drive measurement updates. The filter initializes on the first position fix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .._checks import as_covariance3
from ..exceptions import EmptyStream, NoPositionSensor
from ..schema import NS_PER_S
from ..validation import validate_record
from .ekf import (
    DEFAULT_SIGMA_A,
    GRAVITY_NED,
    MAX_PREDICT_DT,
    EkfState,
    MeasurementKind,
    MeasurementPacket,
    default_R,
    initial_state,
    measurement_in_frame,
    propagate,
    update,
)
from .geodesy import FrameOrigin
from .rotations import integrate_rate, quat_to_rotation

SENSORS = ("IMU", "GNSS", "UWB", "Bluetooth", "VPS")
_RECORD_MEASUREMENT = {"Location": MeasurementKind.GNSS, "UWB": MeasurementKind.UWB,
                       "Bluetooth": MeasurementKind.BLUETOOTH}
# attitude/gravity side inputs are applied before an accelerometer sample with the same time
_SIDE_INPUTS = {"Orientation", "Gyroscope", "Gravity"}


@dataclass(frozen=True)
class FusionConfig:
    origin: FrameOrigin | None = None
    sigma_a: float = DEFAULT_SIGMA_A
    r_overrides: Mapping[str, Any] = field(default_factory=dict)
    enabled: frozenset = frozenset(SENSORS)
    max_dt: float = MAX_PREDICT_DT
    velocity_variance: float = 10.0
    use_gravity_records: bool = True
    orientation_timeout: float = 1.0

    def __post_init__(self):
        enabled = frozenset(self.enabled)
        unknown = enabled - set(SENSORS)
        if unknown:
            raise ValueError(f"unknown sensors {sorted(unknown)}; choose from {SENSORS}")
        object.__setattr__(self, "enabled", enabled)
        if isinstance(self.origin, Mapping):
            object.__setattr__(self, "origin", FrameOrigin(**self.origin))
        for kind, value in self.r_overrides.items():
            MeasurementKind(kind)
            as_covariance3(value, f"R[{kind}]")
        if self.sigma_a < 0 or self.max_dt <= 0:
            raise ValueError("sigma_a must be >= 0 and max_dt > 0")

    def R(self, kind: MeasurementKind) -> np.ndarray:
        if kind.value in self.r_overrides:
            return as_covariance3(self.r_overrides[kind.value])
        return default_R(kind)

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "FusionConfig":
        allowed = set(cls.__dataclass_fields__)
        extra = set(doc) - allowed
        if extra:
            raise ValueError(f"unknown fusion config keys: {sorted(extra)}")
        kwargs = dict(doc)
        if "enabled" in kwargs:
            kwargs["enabled"] = frozenset(kwargs["enabled"])
        return cls(**kwargs)

    def to_document(self) -> dict:
        return {
            "origin": self.origin.to_document() if self.origin else None,
            "sigma_a": self.sigma_a,
            "r_overrides": {k: np.asarray(v, dtype=float).tolist() for k, v in self.r_overrides.items()},
            "enabled": sorted(self.enabled),
            "max_dt": self.max_dt,
            "velocity_variance": self.velocity_variance,
            "use_gravity_records": self.use_gravity_records,
            "orientation_timeout": self.orientation_timeout,
        }


def item_time(item) -> int:
    return item.t if isinstance(item, MeasurementPacket) else item["time"]


def _sort_key(indexed):
    seq, item = indexed
    side = not isinstance(item, MeasurementPacket) and item.get("name") in _SIDE_INPUTS
    return (item_time(item), 0 if side else 1, seq)


def order_items(records: Iterable = (), measurements: Iterable = ()) -> list:
    """Merge records and packets into processing order (time, side inputs first, arrival)."""
    items = list(records) + list(measurements)
    return [item for _, item in sorted(enumerate(items), key=_sort_key)]


def trajectory_point(state: EkfState) -> dict:
    n, e, d = (float(c) for c in state.x[:3])
    return {"t": state.t, "north": n, "east": e, "down": d, "p_diag": [float(v) for v in np.diag(state.P)]}


class FusionEngine:
    """Stateful single-consumer filter: feed items in time order with :meth:`process`."""

    def __init__(self, config: FusionConfig | None = None):
        self.config = config or FusionConfig()
        self.origin = self.config.origin
        self.state: EkfState | None = None
        self.quaternion = np.array([0.0, 0.0, 0.0, 1.0])
        self._C = np.eye(3)
        self._R = {kind: self.config.R(kind) for kind in MeasurementKind}
        self.orientation_t: int | None = None
        self.gyro: tuple | None = None
        self.gravity_body: tuple | None = None
        self.dropped = 0
        self.processed = 0

    @property
    def last_time(self) -> int | None:
        return None if self.state is None else self.state.t

    def process(self, item) -> dict | None:
        """Consume one record or packet; return a trajectory point if the state changed."""
        t = item_time(item)
        if self.state is not None and t < self.state.t:
            self.dropped += 1
            return None
        if isinstance(item, MeasurementPacket):
            return self._measure(item)
        name = item.get("name")
        if name == "Orientation":
            v = item["values"]
            q = np.array([v["qx"], v["qy"], v["qz"], v["qw"]], dtype=float)
            self._set_attitude(q / np.linalg.norm(q))
            self.orientation_t = t
        elif name == "Gyroscope":
            self._gyro(item, t)
        elif name == "Gravity":
            v = item["values"]
            self.gravity_body = (t, np.array([v["x"], v["y"], v["z"]], dtype=float))
        elif name == "Accelerometer":
            return self._accelerate(item, t)
        elif name in _RECORD_MEASUREMENT:
            kind = _RECORD_MEASUREMENT[name]
            v = item["values"]
            if kind is MeasurementKind.GNSS:
                z = [v["latitude"], v["longitude"], v["altitude"]]
            else:
                z = v["position"]
            return self._measure(MeasurementPacket._trusted(kind, z, t, self._R[kind]))
        return None

    def _set_attitude(self, q: np.ndarray) -> None:
        self.quaternion = q
        self._C = quat_to_rotation(q)

    def _orientation_fresh(self, t: int) -> bool:
        return (self.orientation_t is not None
                and (t - self.orientation_t) <= self.config.orientation_timeout * NS_PER_S)

    def _gyro(self, item, t: int) -> None:
        v = item["values"]
        omega = np.array([v["x"], v["y"], v["z"]], dtype=float)
        if self.gyro is not None and "IMU" in self.config.enabled and not self._orientation_fresh(t):
            t_prev, omega_prev = self.gyro
            dt = (t - t_prev) / NS_PER_S
            if 0 < dt <= self.config.max_dt:
                self._set_attitude(integrate_rate(self.quaternion, omega_prev, dt))
        self.gyro = (t, omega)

    def _gravity_ned(self, C: np.ndarray, t: int) -> np.ndarray:
        if self.config.use_gravity_records and self.gravity_body is not None:
            g_t, g_body = self.gravity_body
            if t - g_t <= self.config.orientation_timeout * NS_PER_S:
                return C @ g_body
        return GRAVITY_NED

    def _accelerate(self, item, t: int) -> dict | None:
        if "IMU" not in self.config.enabled or self.state is None or t <= self.state.t:
            return None
        v = item["values"]
        C = self._C
        a_ned = C @ np.array([v["x"], v["y"], v["z"]], dtype=float) - self._gravity_ned(C, t)
        self.state = propagate(self.state, t, a_ned, self.config.sigma_a, self.config.max_dt)
        self.processed += 1
        return trajectory_point(self.state)

    def _enabled(self, kind: MeasurementKind) -> bool:
        return kind.value in self.config.enabled

    def _measure(self, meas: MeasurementPacket) -> dict | None:
        if not self._enabled(meas.kind):
            return None
        if meas.kind is MeasurementKind.GNSS and self.origin is None:
            self.origin = FrameOrigin(float(meas.z[0]), float(meas.z[1]), float(meas.z[2]))
        if self.state is None:
            z = measurement_in_frame(meas, self.origin)
            self.state = initial_state(z, meas.R, meas.t, self.config.velocity_variance)
        else:
            state = propagate(self.state, meas.t, None, self.config.sigma_a, self.config.max_dt)
            self.state = update(state, meas, self.origin)
        self.processed += 1
        return trajectory_point(self.state)

    def is_position_item(self, item) -> bool:
        if isinstance(item, MeasurementPacket):
            return self._enabled(item.kind)
        kind = _RECORD_MEASUREMENT.get(item.get("name"))
        return kind is not None and self._enabled(kind)


@dataclass
class FilterRun:
    trajectory: list
    state: EkfState | None
    origin: FrameOrigin | None
    dropped: int = 0


def run_filter(records: Sequence[Mapping[str, Any]], config: FusionConfig | None = None,
               measurements: Sequence[MeasurementPacket] = (), validate: bool = True) -> FilterRun:
    """Fuse a standardized record stream (plus optional VPS packets) into a trajectory."""
    config = config or FusionConfig()
    if not records and not measurements:
        raise EmptyStream("no records to fuse")
    if validate:
        for i, rec in enumerate(records):
            report = validate_record(rec, prefix=f"/records/{i}")
            if not report.valid:
                e = report.errors[0]
                raise ValueError(f"invalid record: {e.path} {e.code.value} ({e.message})")
    engine = FusionEngine(config)
    items = order_items(records, measurements)
    if not any(engine.is_position_item(it) for it in items):
        raise NoPositionSensor("stream has no enabled position-bearing sensor")
    trajectory = []
    for item in items:
        point = engine.process(item)
        if point is not None:
            trajectory.append(point)
    return FilterRun(trajectory, engine.state, engine.origin, engine.dropped)


class EkfFusion(BaseEstimator):
    """Estimator facade over :class:`FusionEngine`.

    ``fit`` runs the filter over a record stream from scratch, ``partial_fit``
    continues from the current state, ``predict`` coasts the current estimate to
    later times.
    """

    def __init__(self, origin=None, sigma_a: float = DEFAULT_SIGMA_A, r_overrides=None,
                 enabled=SENSORS, max_dt: float = MAX_PREDICT_DT):
        self.origin = origin
        self.sigma_a = sigma_a
        self.r_overrides = r_overrides
        self.enabled = enabled
        self.max_dt = max_dt

    def _config(self) -> FusionConfig:
        return FusionConfig(origin=self.origin, sigma_a=self.sigma_a, r_overrides=self.r_overrides or {},
                            enabled=frozenset(self.enabled), max_dt=self.max_dt)

    def fit(self, X, y=None, measurements=()):
        run = run_filter(list(X), self._config(), list(measurements))
        self.engine_ = FusionEngine(self._config())
        self.engine_.state, self.engine_.origin = run.state, run.origin
        self._collect(run.trajectory, run.dropped)
        return self

    def partial_fit(self, X, y=None, measurements=()):
        if not hasattr(self, "engine_"):
            self.engine_ = FusionEngine(self._config())
            self.trajectory_ = []
        points = [p for p in map(self.engine_.process, order_items(X, measurements)) if p is not None]
        self._collect(self.trajectory_ + points, self.engine_.dropped)
        return self

    def _collect(self, trajectory, dropped):
        self.trajectory_ = trajectory
        self.state_ = self.engine_.state
        self.origin_ = self.engine_.origin
        self.dropped_ = dropped

    def predict(self, times) -> np.ndarray:
        """NED positions at ``times`` (ns, not before the last processed item)."""
        check_is_fitted(self, "state_")
        if self.state_ is None:
            raise ValueError("filter has not been initialized by a position fix")
        return np.array([propagate(self.state_, int(t), None, self.sigma_a, self.max_dt).position
                         for t in times])
