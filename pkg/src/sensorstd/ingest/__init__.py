from .nmea import NmeaDecoder, NmeaFix, RmcInfo, checksum, parse_nmea
from .pipeline import IngestConfig, IngestPipeline, ReorderBuffer, RouteConfig, SubmitResult
from .replay import ReplaySummary, parse_log_line, replay

__all__ = [
    "NmeaDecoder", "NmeaFix", "RmcInfo", "checksum", "parse_nmea", "IngestConfig", "IngestPipeline",
    "ReorderBuffer", "RouteConfig", "SubmitResult", "ReplaySummary", "parse_log_line", "replay",
]
