"""Six-state position/velocity Extended Kalman Filter primitives.

State ``x = [n, e, d, vn, ve, vd]`` in a local NED frame. Prediction is driven by
accelerometer specific force rotated into NED (``a_ned = C a_body - g``) through

    F = [[I, dt I], [0, I]]        B = [[dt^2/2 I], [dt I]]
    Q = sigma_a^2 [[dt^4/4 I, dt^3/2 I], [dt^3/2 I, dt^2 I]]

and every position sensor observes ``H = [I 0]``.
"""

from __future__ import annotations

import enum
import functools
import os
from dataclasses import dataclass, field

import numpy as np

from .._checks import as_covariance3, check_covariance, check_time_ns, check_vector
from ..exceptions import GapTooLarge, NonMonotonicTime, SingularInnovation
from ..schema import NS_PER_S, STANDARD_GRAVITY
from .geodesy import FrameOrigin, geodetic_to_ned
from .rotations import as_quaternion, quat_to_rotation

GRAVITY_NED = np.array([0.0, 0.0, STANDARD_GRAVITY])
H = np.hstack([np.eye(3), np.zeros((3, 3))])
DEFAULT_SIGMA_A = 0.35
MAX_PREDICT_DT = 1.0
# re-validate P (symmetric, PSD) on every predict/update; off by default for speed
CHECK_INVARIANTS = os.environ.get("SENSORSTD_CHECK_INVARIANTS", "") not in ("", "0")


class MeasurementKind(str, enum.Enum):
    GNSS = "GNSS"
    UWB = "UWB"
    VPS = "VPS"
    BLUETOOTH = "Bluetooth"


def variance_from_stats(mean: float, std: float) -> float:
    """Second moment of an error distribution from its mean and (population) std."""
    if mean < 0 or std < 0:
        raise ValueError("mean and std must be non-negative")
    return mean * mean + std * std


_DEFAULT_VARIANCE = {
    MeasurementKind.GNSS: 655.00,
    MeasurementKind.UWB: 1.00,
    MeasurementKind.VPS: 0.15,
    MeasurementKind.BLUETOOTH: 1.00,
}


def default_R(kind) -> np.ndarray:
    return _DEFAULT_VARIANCE[MeasurementKind(kind)] * np.eye(3)


@dataclass(frozen=True)
class EkfState:
    x: np.ndarray
    P: np.ndarray
    t: int

    def __post_init__(self):
        object.__setattr__(self, "x", check_vector(self.x, 6, "x"))
        object.__setattr__(self, "P", check_covariance(self.P, 6, "P"))
        object.__setattr__(self, "t", check_time_ns(self.t))
        self.x.setflags(write=False)
        self.P.setflags(write=False)

    @classmethod
    def _derived(cls, x, P, t) -> "EkfState":
        """Construct from filter arithmetic; validation only when CHECK_INVARIANTS is set."""
        if CHECK_INVARIANTS:
            return cls(x, P, t)
        state = object.__new__(cls)
        x = np.asarray(x, dtype=float)
        P = np.asarray(P, dtype=float)
        x.setflags(write=False)
        P.setflags(write=False)
        object.__setattr__(state, "x", x)
        object.__setattr__(state, "P", P)
        object.__setattr__(state, "t", int(t))
        return state

    @property
    def position(self) -> np.ndarray:
        return self.x[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.x[3:]


@dataclass(frozen=True)
class ImuSample:
    a: np.ndarray
    t: int
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    m: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "a", check_vector(self.a, 3, "a"))
        object.__setattr__(self, "omega", check_vector(self.omega, 3, "omega"))
        object.__setattr__(self, "m", check_vector(self.m, 3, "m"))
        object.__setattr__(self, "t", check_time_ns(self.t))
        if self.q is not None:
            object.__setattr__(self, "q", as_quaternion(self.q))

    @property
    def u(self) -> np.ndarray:
        """Control vector ``[a, omega, m]``."""
        return np.concatenate([self.a, self.omega, self.m])


@dataclass(frozen=True)
class MeasurementPacket:
    kind: MeasurementKind
    z: np.ndarray
    t: int
    R: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", MeasurementKind(self.kind))
        object.__setattr__(self, "z", check_vector(self.z, 3, "z"))
        object.__setattr__(self, "t", check_time_ns(self.t))
        R = default_R(self.kind) if self.R is None else as_covariance3(self.R)
        object.__setattr__(self, "R", R)

    @classmethod
    def _trusted(cls, kind: MeasurementKind, z, t: int, R: np.ndarray) -> "MeasurementPacket":
        """Skip validation for inputs already checked upstream (schema-valid records, config R)."""
        packet = object.__new__(cls)
        object.__setattr__(packet, "kind", kind)
        object.__setattr__(packet, "z", np.asarray(z, dtype=float))
        object.__setattr__(packet, "t", t)
        object.__setattr__(packet, "R", R)
        return packet

    def to_document(self) -> dict:
        return {"kind": self.kind.value, "t": self.t, "z": self.z.tolist(), "R": self.R.tolist()}

    @classmethod
    def from_document(cls, doc) -> "MeasurementPacket":
        return cls(doc["kind"], doc["z"], doc["t"], doc.get("R"))


def transition_matrix(dt: float) -> np.ndarray:
    F = np.eye(6)
    F[:3, 3:] = dt * np.eye(3)
    return F


def control_matrix(dt: float) -> np.ndarray:
    return np.vstack([0.5 * dt * dt * np.eye(3), dt * np.eye(3)])


def process_noise(dt: float, sigma_a: float) -> np.ndarray:
    s2 = sigma_a * sigma_a
    Q = np.zeros((6, 6))
    Q[:3, :3] = s2 * dt**4 / 4 * np.eye(3)
    Q[:3, 3:] = Q[3:, :3] = s2 * dt**3 / 2 * np.eye(3)
    Q[3:, 3:] = s2 * dt**2 * np.eye(3)
    return Q


@functools.lru_cache(maxsize=256)
def _model(dt: float, sigma_a: float) -> tuple:
    mats = (transition_matrix(dt), control_matrix(dt), process_noise(dt, sigma_a))
    for m in mats:
        m.setflags(write=False)
    return mats


def _sym(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def _dt(state: EkfState, t: int) -> float:
    if t < state.t:
        raise NonMonotonicTime(f"time {t} precedes filter time {state.t}")
    return (t - state.t) / NS_PER_S


def predict_ned(state: EkfState, a_ned, t: int, sigma_a: float = DEFAULT_SIGMA_A,
                max_dt: float = MAX_PREDICT_DT) -> EkfState:
    """Propagate to ``t`` with a NED-frame acceleration held over the interval."""
    dt = _dt(state, t)
    if dt > max_dt:
        raise GapTooLarge(f"dt = {dt:.3f} s exceeds {max_dt} s")
    F, B, Q = _model(dt, sigma_a)
    x = F @ state.x + B @ np.asarray(a_ned, dtype=float)
    P = _sym(F @ state.P @ F.T + Q)
    return EkfState._derived(x, P, t)


def imu_to_ned(imu: ImuSample, gravity_ned=GRAVITY_NED) -> np.ndarray:
    C = np.eye(3) if imu.q is None else quat_to_rotation(imu.q)
    return C @ imu.a - np.asarray(gravity_ned, dtype=float)


def predict(state: EkfState, imu: ImuSample, sigma_a: float = DEFAULT_SIGMA_A,
            gravity_ned=GRAVITY_NED, max_dt: float = MAX_PREDICT_DT) -> EkfState:
    """IMU-driven time update. Raises NonMonotonicTime / GapTooLarge."""
    if imu.t <= state.t:
        raise NonMonotonicTime(f"IMU time {imu.t} is not after filter time {state.t}")
    return predict_ned(state, imu_to_ned(imu, gravity_ned), imu.t, sigma_a, max_dt)


def propagate(state: EkfState, t: int, a_ned=None, sigma_a: float = DEFAULT_SIGMA_A,
              max_dt: float = MAX_PREDICT_DT) -> EkfState:
    """Time update that splits long gaps into ``max_dt`` sub-steps.

    Only the first sub-step carries ``a_ned``; the rest coast at zero acceleration.
    """
    a = np.zeros(3) if a_ned is None else np.asarray(a_ned, dtype=float)
    _dt(state, t)
    step = int(max_dt * NS_PER_S)
    while t - state.t > step:
        state = predict_ned(state, a, state.t + step, sigma_a, max_dt)
        a = np.zeros(3)
    if t > state.t:
        state = predict_ned(state, a, t, sigma_a, max_dt)
    return state


def measurement_in_frame(meas: MeasurementPacket, origin: FrameOrigin | None) -> np.ndarray:
    if meas.kind is MeasurementKind.GNSS:
        if origin is None:
            raise ValueError("GNSS measurements need a frame origin")
        return geodetic_to_ned(meas.z[0], meas.z[1], meas.z[2], origin)
    return meas.z


def update(state: EkfState, meas: MeasurementPacket, origin: FrameOrigin | None = None) -> EkfState:
    """Position measurement update (Joseph form)."""
    if meas.t < state.t:
        raise NonMonotonicTime(f"measurement time {meas.t} precedes filter time {state.t}")
    z = measurement_in_frame(meas, origin)
    P = state.P
    S = H @ P @ H.T + meas.R
    try:
        if np.linalg.cond(S) > 1e15:
            raise np.linalg.LinAlgError("ill-conditioned")
        K = np.linalg.solve(S, H @ P).T
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation(f"innovation covariance not invertible: {exc}") from None
    y = z - H @ state.x
    x = state.x + K @ y
    A = np.eye(6) - K @ H
    P_new = _sym(A @ P @ A.T + K @ meas.R @ K.T)
    return EkfState._derived(x, P_new, meas.t)


def initial_state(z_local, R, t: int, velocity_variance: float = 10.0) -> EkfState:
    P = np.zeros((6, 6))
    P[:3, :3] = R
    P[3:, 3:] = velocity_variance * np.eye(3)
    return EkfState(np.concatenate([np.asarray(z_local, dtype=float), np.zeros(3)]), P, t)
