"""Time-tag stream data model and file I/O.

A TagStream is an immutable, time-ordered record of detector clicks and
laser-trigger events with integer picosecond timestamps.  Optional truth
labels record whether each click originated from the pair source or from
the photoluminescent background, which lets the analysis be audited
against ground truth.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import FileFormatError

__all__ = ["Channel", "Origin", "TagStream", "write_stream", "read_stream"]

MAGIC = b"PSFT1"

RECORD_DTYPE = np.dtype([("channel", "u1"), ("time_ps", "<i8"), ("origin", "u1")])


class Channel(enum.IntEnum):
    DET1 = 0
    DET2 = 1
    TRIGGER = 2


class Origin(enum.IntEnum):
    NONE = 0  # triggers, or streams without truth labels
    SPDC = 1
    PL = 2
    DARK = 3


_CHANNEL_NAMES = {Channel.DET1: "det1", Channel.DET2: "det2", Channel.TRIGGER: "trigger"}
_CHANNEL_CODES = {v: k for k, v in _CHANNEL_NAMES.items()}
_ORIGIN_NAMES = {Origin.NONE: "", Origin.SPDC: "spdc", Origin.PL: "pl", Origin.DARK: "dark"}
_ORIGIN_CODES = {v: k for k, v in _ORIGIN_NAMES.items()}


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass
class TagStream:
    """Sorted event record: times ascending, ties broken by channel order."""

    times: np.ndarray                      # int64 picoseconds
    channels: np.ndarray                   # uint8 Channel codes
    truth: Optional[np.ndarray] = None     # uint8 Origin codes, or None
    meta: Optional[object] = None          # EmissionConfig echo, if known
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        if self.truth is not None:
            self.truth = np.asarray(self.truth, dtype=np.uint8)
            if self.truth.shape != self.times.shape:
                raise ValueError("truth array length mismatch")
        if self.times.shape != self.channels.shape:
            raise ValueError("times/channels length mismatch")
        if self.times.size > 1 and np.any(np.diff(self.times) < 0):
            raise ValueError("tag stream must be time-ordered")
        _freeze(self.times)
        _freeze(self.channels)
        if self.truth is not None:
            _freeze(self.truth)

    @classmethod
    def build(cls, times, channels, truth=None, meta=None) -> "TagStream":
        """Construct from unsorted arrays; sorts by (time, channel), stable."""
        times = np.asarray(times, dtype=np.int64)
        channels = np.asarray(channels, dtype=np.uint8)
        order = np.lexsort((channels, times))
        truth_arr = None
        if truth is not None:
            truth_arr = np.asarray(truth, dtype=np.uint8)[order]
        return cls(times[order], channels[order], truth_arr, meta)

    def __len__(self) -> int:
        return int(self.times.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TagStream):
            return NotImplemented
        if not (np.array_equal(self.times, other.times)
                and np.array_equal(self.channels, other.channels)):
            return False
        if (self.truth is None) != (other.truth is None):
            return False
        return self.truth is None or np.array_equal(self.truth, other.truth)

    @property
    def has_truth(self) -> bool:
        return self.truth is not None

    def channel_times(self, channel: Channel) -> np.ndarray:
        return self.times[self.channels == int(channel)]

    @property
    def trigger_times(self) -> np.ndarray:
        return self.channel_times(Channel.TRIGGER)

    @property
    def detector_mask(self) -> np.ndarray:
        return self.channels != int(Channel.TRIGGER)

    @property
    def n_detector_events(self) -> int:
        return int(np.count_nonzero(self.detector_mask))

    def select(self, mask: np.ndarray) -> "TagStream":
        """Subset by boolean mask; order (hence sortedness) is preserved."""
        truth = self.truth[mask] if self.truth is not None else None
        return TagStream(self.times[mask], self.channels[mask], truth, self.meta)

    def span_ps(self) -> int:
        if len(self) == 0:
            return 0
        return int(self.times[-1] - self.times[0])


# ---------------------------------------------------------------------------
# binary format: MAGIC + u32 header length + JSON header + packed records
# ---------------------------------------------------------------------------

def _config_dict(meta) -> Optional[dict]:
    if meta is None:
        return None
    to_dict = getattr(meta, "to_dict", None)
    return to_dict() if callable(to_dict) else dict(meta)


def write_stream(stream: TagStream, path) -> None:
    """Write the compact binary format (header JSON + 10-byte records)."""
    header = {
        "format": "PSFT1",
        "version": 1,
        "count": len(stream),
        "truth": stream.has_truth,
        "config": _config_dict(stream.meta),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    records = np.zeros(len(stream), dtype=RECORD_DTYPE)
    records["channel"] = stream.channels
    records["time_ps"] = stream.times
    if stream.truth is not None:
        records["origin"] = stream.truth
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(len(blob)).tobytes())
        fh.write(blob)
        fh.write(records.tobytes())


def read_stream(path) -> TagStream:
    """Read a binary tag file written by write_stream."""
    from .simulate import EmissionConfig

    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise FileFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        raw_len = fh.read(4)
        if len(raw_len) != 4:
            raise FileFormatError(f"{path}: truncated header length")
        (hlen,) = np.frombuffer(raw_len, dtype=np.uint32)
        blob = fh.read(int(hlen))
        if len(blob) != int(hlen):
            raise FileFormatError(f"{path}: truncated header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FileFormatError(f"{path}: corrupt header: {exc}") from exc
        payload = fh.read()
    records = np.frombuffer(payload, dtype=RECORD_DTYPE)
    if header.get("count") is not None and len(records) != header["count"]:
        raise FileFormatError(
            f"{path}: record count {len(records)} != header count {header['count']}"
        )
    meta = None
    if header.get("config"):
        meta = EmissionConfig.from_dict(header["config"])
    truth = records["origin"].copy() if header.get("truth") else None
    return TagStream(records["time_ps"].copy(), records["channel"].copy(), truth, meta)


# ---------------------------------------------------------------------------
# CSV: channel,time_ps,origin
# ---------------------------------------------------------------------------

def write_stream_csv(stream: TagStream, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("channel,time_ps,origin\n")
        truth = stream.truth
        for i in range(len(stream)):
            name = _CHANNEL_NAMES[Channel(int(stream.channels[i]))]
            origin = _ORIGIN_NAMES[Origin(int(truth[i]))] if truth is not None else ""
            fh.write(f"{name},{int(stream.times[i])},{origin}\n")


def read_stream_csv(path) -> TagStream:
    times, channels, origins = [], [], []
    saw_origin = False
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header.split(",")[:2] != ["channel", "time_ps"]:
            raise FileFormatError(f"{path}: unexpected CSV header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise FileFormatError(f"{path}:{lineno}: malformed row {line!r}")
            try:
                channels.append(int(_CHANNEL_CODES[parts[0]]))
                times.append(int(parts[1]))
            except (KeyError, ValueError) as exc:
                raise FileFormatError(f"{path}:{lineno}: {exc}") from exc
            origin = parts[2] if len(parts) > 2 else ""
            if origin:
                saw_origin = True
            origins.append(int(_ORIGIN_CODES.get(origin, Origin.NONE)))
    truth = np.array(origins, dtype=np.uint8) if saw_origin else None
    return TagStream.build(np.array(times, dtype=np.int64),
                           np.array(channels, dtype=np.uint8), truth)
