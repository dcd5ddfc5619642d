"""NMEA 0183 GGA/RMC parsing and conversion to Location records."""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

from ..exceptions import ChecksumMismatch, MalformedField, NmeaError, UnsupportedSentence
from ..schema import NS_PER_S

KNOT_MPS = 1852.0 / 3600.0
_HEX = set("0123456789abcdefABCDEF")


@dataclass(frozen=True)
class NmeaFix:
    """A GGA position fix. ``t`` is None until a date is known."""

    lat: float
    lon: float
    alt: float
    quality: int
    num_satellites: int
    hdop: float
    time_of_day_ns: int
    t: int | None = None
    talker: str = "GP"


@dataclass(frozen=True)
class RmcInfo:
    date: _dt.date
    time_of_day_ns: int
    valid: bool
    lat: float | None
    lon: float | None
    speed_mps: float | None
    course: float | None
    t: int = 0


def checksum(payload: bytes) -> int:
    value = 0
    for b in payload:
        value ^= b
    return value


def _split(sentence: str | bytes) -> list:
    try:
        raw = sentence.encode("ascii") if isinstance(sentence, str) else bytes(sentence)
    except UnicodeEncodeError:
        raise MalformedField(0, "non-ASCII characters") from None
    raw = raw.rstrip(b"\r\n")
    if not raw.startswith(b"$"):
        raise MalformedField(0, "sentence must start with '$'")
    star = raw.rfind(b"*")
    if star < 0:
        raise ChecksumMismatch("sentence carries no checksum")
    tail = raw[star + 1:]
    if len(tail) != 2 or not all(chr(c) in _HEX for c in tail):
        raise ChecksumMismatch(f"checksum field {tail!r} is not two hex digits")
    body = raw[1:star]
    expected = int(tail, 16)
    actual = checksum(body)
    if actual != expected:
        raise ChecksumMismatch(f"computed {actual:02X}, sentence says {expected:02X}")
    try:
        text = body.decode("ascii")
    except UnicodeDecodeError:
        raise MalformedField(0, "non-ASCII bytes") from None
    return text.split(",")


def _decimal(fields: list, i: int, name: str) -> Decimal:
    try:
        text = fields[i]
    except IndexError:
        raise MalformedField(i, f"missing {name}") from None
    if not text:
        raise MalformedField(i, f"empty {name}")
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise MalformedField(i, f"{name} {text!r} is not a number") from None
    if not value.is_finite():
        raise MalformedField(i, f"{name} is not finite")
    return value


def _angle(fields: list, i: int, hemis: str, name: str) -> float:
    raw = _decimal(fields, i, name)
    if raw < 0:
        raise MalformedField(i, f"{name} must be unsigned")
    degrees = int(raw // 100)
    minutes = raw - degrees * 100
    if minutes >= 60:
        raise MalformedField(i, f"{name} minutes {minutes} >= 60")
    value = float(degrees + minutes / 60)
    try:
        hemi = fields[i + 1]
    except IndexError:
        raise MalformedField(i + 1, "missing hemisphere") from None
    if hemi not in hemis:
        raise MalformedField(i + 1, f"hemisphere {hemi!r} not in {hemis}")
    if hemi in "SW":
        value = -value
    limit = 90.0 if name == "latitude" else 180.0
    if abs(value) > limit:
        raise MalformedField(i, f"{name} {value} out of range")
    return value


def _time_of_day(fields: list, i: int) -> int:
    text = fields[i] if i < len(fields) else ""
    if len(text) < 6 or not text[:6].isdigit():
        raise MalformedField(i, f"time {text!r} is not hhmmss[.ss]")
    hh, mm = int(text[:2]), int(text[2:4])
    try:
        ss = Decimal(text[4:])
    except InvalidOperation:
        raise MalformedField(i, f"time {text!r} is not hhmmss[.ss]") from None
    if hh > 23 or mm > 59 or not 0 <= ss < 61:
        raise MalformedField(i, f"time {text!r} out of range")
    return int((hh * 3600 + mm * 60) * NS_PER_S + ss * NS_PER_S)


def _date_ns(date: _dt.date) -> int:
    return (date - _dt.date(1970, 1, 1)).days * 86400 * NS_PER_S


def _gga(fields: list, date: _dt.date | None) -> NmeaFix:
    tod = _time_of_day(fields, 1)
    lat = _angle(fields, 2, "NS", "latitude")
    lon = _angle(fields, 4, "EW", "longitude")
    quality = int(_decimal(fields, 6, "fix quality"))
    sats = int(_decimal(fields, 7, "satellite count"))
    hdop = float(_decimal(fields, 8, "hdop"))
    alt = float(_decimal(fields, 9, "altitude"))
    t = _date_ns(date) + tod if date is not None else None
    return NmeaFix(lat, lon, alt, quality, sats, hdop, tod, t, fields[0][:2])


def _rmc(fields: list) -> RmcInfo:
    tod = _time_of_day(fields, 1)
    status = fields[2] if len(fields) > 2 else ""
    if status not in ("A", "V"):
        raise MalformedField(2, f"status {status!r} not A/V")
    text = fields[9] if len(fields) > 9 else ""
    if len(text) != 6 or not text.isdigit():
        raise MalformedField(9, f"date {text!r} is not ddmmyy")
    yy = int(text[4:])
    try:
        date = _dt.date(2000 + yy if yy < 80 else 1900 + yy, int(text[2:4]), int(text[:2]))
    except ValueError as exc:
        raise MalformedField(9, str(exc)) from None
    lat = lon = speed = course = None
    if fields[3]:
        lat = _angle(fields, 3, "NS", "latitude")
    if len(fields) > 5 and fields[5]:
        lon = _angle(fields, 5, "EW", "longitude")
    if len(fields) > 7 and fields[7]:
        speed = float(_decimal(fields, 7, "speed")) * KNOT_MPS
    if len(fields) > 8 and fields[8]:
        course = float(_decimal(fields, 8, "course"))
    return RmcInfo(date, tod, status == "A", lat, lon, speed, course, _date_ns(date) + tod)


def parse_nmea(sentence: str | bytes, date: _dt.date | None = None) -> NmeaFix | RmcInfo:
    """Parse one GGA or RMC sentence after verifying its XOR checksum."""
    fields = _split(sentence)
    kind = fields[0][2:] if len(fields[0]) == 5 else fields[0]
    if kind == "GGA":
        return _gga(fields, date)
    if kind == "RMC":
        return _rmc(fields)
    raise UnsupportedSentence(f"unsupported sentence {fields[0]!r}")


class NmeaDecoder:
    """Stateful per-source decoder: RMC supplies date and speed for subsequent GGA fixes.

    Accuracy fields of the produced Location records come from HDOP times a
    user-equivalent range error (``uere``); NMEA carries no speed accuracy so a
    fixed ``speed_accuracy`` is used.
    """

    def __init__(self, default_date: _dt.date | None = None, uere: float = 5.0,
                 vertical_factor: float = 1.5, speed_accuracy: float = 0.5):
        self.date = default_date
        self.uere = uere
        self.vertical_factor = vertical_factor
        self.speed_accuracy = speed_accuracy
        self.speed = 0.0

    def to_record(self, fix: NmeaFix) -> dict:
        if fix.t is None:
            raise NmeaError("GGA fix has no date: send an RMC sentence first or configure a date")
        h_acc = fix.hdop * self.uere
        return {
            "name": "Location",
            "time": fix.t,
            "values": {
                "latitude": fix.lat,
                "longitude": fix.lon,
                "altitude": fix.alt,
                "speed": self.speed,
                "speed_accuracy": self.speed_accuracy,
                "horizontal_accuracy": h_acc,
                "vertical_accuracy": h_acc * self.vertical_factor,
            },
        }

    def decode(self, text: str | bytes) -> list:
        """Location records for every GGA line in ``text``; raises on the first bad line."""
        records = []
        for line in text.splitlines():
            if not line.strip():
                continue
            msg = parse_nmea(line.strip(), self.date)
            if isinstance(msg, RmcInfo):
                self.date = msg.date
                if msg.speed_mps is not None:
                    self.speed = msg.speed_mps
            else:
                records.append(self.to_record(msg))
        return records
