"""Vendor-style raw payloads with hand-built standardized targets, one style per sensor kind.

Targets are built first in canonical units; the raw side is derived by dividing
by the conversion factor written out here (not taken from the package), so the
pair is an independent oracle for the standardizer and the rule deriver.
"""

from __future__ import annotations

import base64
import datetime as dt
import math

import numpy as np

G = 9.80665
DEG = math.pi / 180.0
KMH = 1.0 / 3.6
T0_S = 1_705_307_400  # 2024-01-15T08:30:00Z
T0 = T0_S * 1_000_000_000

KINDS = ("Magnetometer", "Gyroscope", "Accelerometer", "Gravity", "UWB", "Bluetooth", "Pedometer",
         "Orientation", "Barometer", "Location", "Image")


def _iso(t_ns: int) -> str:
    d = dt.datetime(1970, 1, 1, tzinfo=dt.timezone.utc) + dt.timedelta(microseconds=t_ns // 1000)
    return d.strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z"


def _f(rng, lo=-20.0, hi=20.0) -> float:
    v = 0.0
    while abs(v) < 1e-3:
        v = float(rng.uniform(lo, hi))
    return round(v, 6)


def _unit_quat(rng) -> list:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return [float(c) for c in q]


def kind_pair(kind: str, rng, t_ns: int) -> tuple:
    """(raw fragment, mapping entries, expected record) for one kind at time ``t_ns`` (ms resolution)."""
    t_ms = t_ns // 1_000_000
    if kind == "Magnetometer":
        v = [_f(rng, -60, 60) for _ in range(3)]
        raw = {"mag": {"ts_ms": t_ms, "mx": v[0], "my": v[1], "mz": v[2]}}
        entries = [("$.mag.ts_ms", "time", None), ("$.mag.mx", "x", None), ("$.mag.my", "y", None),
                   ("$.mag.mz", "z", None)]
        rec = {"name": kind, "time": t_ns, "values": dict(zip("xyz", v))}
    elif kind == "Gyroscope":
        v = [_f(rng, -3, 3) for _ in range(3)]
        raw = {"gyro": {"timestamp": _iso(t_ns), "wx": v[0] / DEG, "wy": v[1] / DEG, "wz": v[2] / DEG}}
        entries = [("$.gyro.timestamp", "time", None), ("$.gyro.wx", "x", "deg/s"), ("$.gyro.wy", "y", "deg/s"),
                   ("$.gyro.wz", "z", "deg/s")]
        rec = {"name": kind, "time": t_ns, "values": {"x": v[0], "y": v[1], "z": v[2]}}
    elif kind == "Accelerometer":
        v = [_f(rng, -15, 15) for _ in range(3)]
        raw = {"sensor_data": {"Accelerometer": {"timestamp": t_ms / 1000.0, "x": v[0] / G, "y": v[1] / G,
                                                 "z": v[2] / G}}}
        entries = [("$.sensor_data.Accelerometer.timestamp", "time", None),
                   ("$.sensor_data.Accelerometer.x", "x", "g"), ("$.sensor_data.Accelerometer.y", "y", "g"),
                   ("$.sensor_data.Accelerometer.z", "z", "g")]
        rec = {"name": kind, "time": t_ns, "values": {"x": v[0], "y": v[1], "z": v[2]}}
    elif kind == "Gravity":
        v = [_f(rng, -9.8, 9.8) for _ in range(3)]
        raw = {"grav": {"t_us": t_ns // 1000, "g": {"x": v[0], "y": v[1], "z": v[2]}}}
        entries = [("$.grav.t_us", "time", None), ("$.grav.g.x", "x", None), ("$.grav.g.y", "y", None),
                   ("$.grav.g.z", "z", None)]
        rec = {"name": kind, "time": t_ns, "values": dict(zip("xyz", v))}
    elif kind == "UWB":
        p = [_f(rng, -50, 50) for _ in range(3)]
        raw = {"uwb": {"ts": t_ns, "pos": p}}
        entries = [("$.uwb.ts", "time", None), ("$.uwb.pos", "position", None)]
        rec = {"name": kind, "time": t_ns, "values": {"position": p}}
    elif kind == "Bluetooth":
        p = [_f(rng, -50, 50) for _ in range(3)]
        raw = {"ble": {"time": t_ms, "xyz_cm": [c / 0.01 for c in p]}}
        entries = [("$.ble.time", "time", None), ("$.ble.xyz_cm", "position", "cm")]
        rec = {"name": kind, "time": t_ns, "values": {"position": p}}
    elif kind == "Pedometer":
        steps = int(rng.integers(1, 100_000))
        raw = {"pedo": {"when": _iso(t_ns), "count": steps}}
        entries = [("$.pedo.when", "time", None), ("$.pedo.count", "steps", None)]
        rec = {"name": kind, "time": t_ns, "steps": steps}
    elif kind == "Orientation":
        q = _unit_quat(rng)
        raw = {"attitude": {"stamp": t_ms, "quat": {"x": q[0], "y": q[1], "z": q[2], "w": q[3]}}}
        entries = [("$.attitude.stamp", "time", None), ("$.attitude.quat.x", "qx", None),
                   ("$.attitude.quat.y", "qy", None), ("$.attitude.quat.z", "qz", None),
                   ("$.attitude.quat.w", "qw", None)]
        rec = {"name": kind, "time": t_ns, "values": dict(zip(("qx", "qy", "qz", "qw"), q))}
    elif kind == "Barometer":
        rel, p = _f(rng, -30, 30), round(float(rng.uniform(950, 1050)), 4)
        raw = {"baro": {"ts": t_ms, "rel_alt": rel, "p_hpa": p}}
        entries = [("$.baro.ts", "time", None), ("$.baro.rel_alt", "relative_altitude", None),
                   ("$.baro.p_hpa", "pressure", "hPa")]
        rec = {"name": kind, "time": t_ns, "values": {"relative_altitude": rel, "pressure": p}}
    elif kind == "Location":
        lat, lon = round(float(rng.uniform(-80, 80)), 7), round(float(rng.uniform(-170, 170)), 7)
        alt, spd = _f(rng, 1, 900), _f(rng, 0.1, 3)
        sacc, hacc, vacc = _f(rng, 0.1, 1), _f(rng, 2, 30), _f(rng, 3, 40)
        raw = {"gps": {"fix_time": _iso(t_ns), "lat": lat, "lon": lon, "alt": alt, "spd_kmh": spd / KMH,
                       "acc": {"speed": sacc, "h": hacc, "v": vacc}}}
        entries = [("$.gps.fix_time", "time", None), ("$.gps.lat", "latitude", None),
                   ("$.gps.lon", "longitude", None), ("$.gps.alt", "altitude", None),
                   ("$.gps.spd_kmh", "speed", "km/h"), ("$.gps.acc.speed", "speed_accuracy", None),
                   ("$.gps.acc.h", "horizontal_accuracy", None), ("$.gps.acc.v", "vertical_accuracy", None)]
        rec = {"name": kind, "time": t_ns, "values": {
            "latitude": lat, "longitude": lon, "altitude": alt, "speed": spd, "speed_accuracy": sacc,
            "horizontal_accuracy": hacc, "vertical_accuracy": vacc}}
    elif kind == "Image":
        data = base64.b64encode(rng.bytes(24)).decode("ascii")
        raw = {"camera": {"captured": t_ms, "jpeg_b64": data}}
        entries = [("$.camera.captured", "time", None), ("$.camera.jpeg_b64", "image", None)]
        rec = {"name": kind, "time": t_ns, "image": data}
    else:
        raise KeyError(kind)
    mapping = [{"path": p, "kind": kind, "field": f, **({"unit": u} if u else {})} for p, f, u in entries]
    return raw, mapping, rec


def payload_pair(kinds, seed: int, t0: int = T0) -> tuple:
    """(raw body, mapping document, expected dataset) for a payload mixing ``kinds``."""
    rng = np.random.default_rng(seed)
    body, entries, expected = {}, [], []
    for i, kind in enumerate(kinds):
        t = t0 + (seed * 1000 + 7 * i + 3) * 1_000_000  # ms resolution, distinct per kind
        raw, mapping, rec = kind_pair(kind, rng, t)
        body.update(raw)
        entries += mapping
        expected.append(rec)
    expected.sort(key=lambda r: r["time"])
    return body, {"entries": entries}, expected


def thirty_datasets() -> list:
    """30 (payload, mapping document, faulty_iterations) triples: 24 clean, 2 repairable, 4 never valid.

    Repairable ones converge on iterations 3 and 4; the hopeless ones stay faulty
    far past any sensible cap.
    """
    faults = [0] * 24 + [2, 3] + [1000] * 4
    out = []
    for i, faulty in enumerate(faults):
        kinds = (KINDS[i % len(KINDS)], KINDS[(i * 5 + 3) % len(KINDS)])
        kinds = tuple(dict.fromkeys(kinds))
        body, mapping, _ = payload_pair(kinds, seed=100 + i)
        out.append((body, mapping, faulty))
    return out


def assert_records_close(actual, expected, rel=1e-12) -> None:
    """Structural equality with floats compared to ``rel`` (unit conversion rounds in the last bits)."""

    def close(a, b, where):
        if isinstance(b, float) and isinstance(a, (int, float)) and not isinstance(a, bool):
            assert math.isclose(a, b, rel_tol=rel, abs_tol=1e-300), f"{where}: {a} != {b}"
        elif isinstance(b, dict):
            assert isinstance(a, dict) and a.keys() == b.keys(), f"{where}: keys differ"
            for k in b:
                close(a[k], b[k], f"{where}/{k}")
        elif isinstance(b, list):
            assert isinstance(a, list) and len(a) == len(b), f"{where}: length differs"
            for i, (x, y) in enumerate(zip(a, b)):
                close(x, y, f"{where}/{i}")
        else:
            assert a == b and type(a) is type(b), f"{where}: {a!r} != {b!r}"

    close(list(actual), list(expected), "")


def roundtrip_kind_sets(n: int = 22) -> list:
    """``n`` kind combinations: every kind alone, then mixed payloads of 3 to 5 kinds."""
    sets = [(k,) for k in KINDS]
    i = 0
    while len(sets) < n:
        size = 3 + i % 3
        sets.append(tuple(KINDS[(i * 4 + j * 3) % len(KINDS)] for j in range(size)))
        i += 1
    return [tuple(dict.fromkeys(s)) for s in sets]
