"""Time-tagged photon streams and their on-disk formats.

Binary layout (little-endian): magic ``PHTS``, version u16, reserved u16,
record count u64, then 16-byte records ``channel u8, flags u8, reserved u16,
pad u32, timestamp_ps u64`` sorted by timestamp. The text alternative is a
CSV with header ``channel,timestamp_ps``.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from enum import IntFlag
from pathlib import Path

import numpy as np

MAGIC = b"PHTS"
VERSION = 1
HEADER = struct.Struct("<4sHHQ")
RECORD_DTYPE = np.dtype([("channel", "u1"), ("flags", "u1"), ("reserved", "<u2"),
                         ("pad", "<u4"), ("timestamp_ps", "<u8")])
CSV_HEADER = ("channel", "timestamp_ps")
PS = 1e-12


class StreamFormatError(ValueError):
    """A stream file or array violates the format (names the defect)."""


class EventFlag(IntFlag):
    """Provenance bits stored in the record flags byte (simulated data only)."""

    NONE = 0
    SIGNAL = 1
    OPTICAL_BACKGROUND = 2
    DARK = 4
    AFTERPULSE = 8


@dataclass(frozen=True)
class PhotonEvent:
    channel: int
    timestamp_ps: int


@dataclass(frozen=True, eq=False)
class PhotonStream:
    """Detections sorted by time, in integer picoseconds.

    ``duration_ps`` is the acquisition span when known; otherwise the span of
    the data is used.
    """

    timestamps_ps: np.ndarray
    channels: np.ndarray | None = None
    flags: np.ndarray | None = None
    duration_ps: int | None = None

    def __post_init__(self):
        ts = np.ascontiguousarray(self.timestamps_ps, dtype=np.uint64)
        if ts.ndim != 1:
            raise StreamFormatError("timestamps must be one-dimensional")
        if len(ts) > 1 and np.any(ts[1:] < ts[:-1]):
            raise StreamFormatError("timestamps are not sorted")
        ch = np.zeros(len(ts), np.uint8) if self.channels is None else \
            np.ascontiguousarray(self.channels, dtype=np.uint8)
        fl = np.zeros(len(ts), np.uint8) if self.flags is None else \
            np.ascontiguousarray(self.flags, dtype=np.uint8)
        if ch.shape != ts.shape or fl.shape != ts.shape:
            raise StreamFormatError("channels/flags length differs from timestamps")
        object.__setattr__(self, "timestamps_ps", ts)
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "flags", fl)

    def __len__(self) -> int:
        return len(self.timestamps_ps)

    def __iter__(self):
        for c, t in zip(self.channels, self.timestamps_ps):
            yield PhotonEvent(int(c), int(t))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PhotonStream):
            return NotImplemented
        return (np.array_equal(self.timestamps_ps, other.timestamps_ps)
                and np.array_equal(self.channels, other.channels)
                and np.array_equal(self.flags, other.flags))

    @property
    def times(self) -> np.ndarray:
        """Timestamps in seconds (float64)."""
        return self.timestamps_ps.astype(np.float64) * PS

    @property
    def duration(self) -> float:
        """Acquisition span in seconds."""
        if self.duration_ps is not None:
            return self.duration_ps * PS
        if len(self) < 2:
            return 0.0
        return float(self.timestamps_ps[-1] - self.timestamps_ps[0]) * PS

    @property
    def rate(self) -> float:
        d = self.duration
        return len(self) / d if d > 0 else 0.0

    def select_channel(self, channel: int) -> "PhotonStream":
        keep = self.channels == channel
        return PhotonStream(self.timestamps_ps[keep], self.channels[keep], self.flags[keep],
                            self.duration_ps)

    def with_duration(self, duration: float) -> "PhotonStream":
        return PhotonStream(self.timestamps_ps, self.channels, self.flags,
                            int(round(duration / PS)))

    @classmethod
    def merge(cls, *streams: "PhotonStream") -> "PhotonStream":
        """Stable time-ordered union."""
        ts = np.concatenate([s.timestamps_ps for s in streams])
        order = np.argsort(ts, kind="stable")
        durations = [s.duration_ps for s in streams if s.duration_ps is not None]
        return cls(ts[order], np.concatenate([s.channels for s in streams])[order],
                   np.concatenate([s.flags for s in streams])[order],
                   max(durations) if durations else None)


def write_stream(path, stream: PhotonStream, fmt: str = "binary") -> Path:
    path = Path(path)
    if fmt == "binary":
        rec = np.zeros(len(stream), RECORD_DTYPE)
        rec["channel"] = stream.channels
        rec["flags"] = stream.flags
        rec["timestamp_ps"] = stream.timestamps_ps
        with open(path, "wb") as fh:
            fh.write(HEADER.pack(MAGIC, VERSION, 0, len(stream)))
            fh.write(rec.tobytes())
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            w.writerows(zip(stream.channels.tolist(), stream.timestamps_ps.tolist()))
    else:
        raise ValueError(f"unknown stream format {fmt!r}")
    return path


def _read_binary(path: Path) -> PhotonStream:
    data = path.read_bytes()
    if len(data) < HEADER.size:
        raise StreamFormatError(f"{path}: truncated header")
    magic, version, _, count = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise StreamFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise StreamFormatError(f"{path}: unsupported version {version}")
    body = len(data) - HEADER.size
    if body != count * RECORD_DTYPE.itemsize:
        raise StreamFormatError(f"{path}: record count {count} does not match file size")
    rec = np.frombuffer(data, RECORD_DTYPE, count=count, offset=HEADER.size)
    ts = rec["timestamp_ps"].astype(np.uint64)
    if count > 1 and np.any(ts[1:] < ts[:-1]):
        raise StreamFormatError(f"{path}: unsorted timestamps")
    return PhotonStream(ts, rec["channel"].copy(), rec["flags"].copy())


def _read_csv(path: Path) -> PhotonStream:
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if tuple(h.strip() for h in header.split(",")) != CSV_HEADER:
            raise StreamFormatError(f"{path}: expected header 'channel,timestamp_ps'")
        body = fh.read()
        if not body.strip():
            return PhotonStream(np.empty(0, np.uint64))
        try:
            arr = np.loadtxt(io.StringIO(body), delimiter=",", dtype=np.uint64, ndmin=2)
        except ValueError as exc:
            raise StreamFormatError(f"{path}: malformed row ({exc})") from exc
    if arr.size == 0:
        return PhotonStream(np.empty(0, np.uint64))
    ts = arr[:, 1]
    if np.any(ts[1:] < ts[:-1]):
        raise StreamFormatError(f"{path}: unsorted timestamps")
    return PhotonStream(ts, arr[:, 0].astype(np.uint8))


def read_stream(path) -> PhotonStream:
    """Read a stream, detecting the format from the first bytes."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return _read_binary(path)
    if head.startswith(b"chan"):
        return _read_csv(path)
    if path.suffix.lower() == ".csv":
        return _read_csv(path)
    raise StreamFormatError(f"{path}: bad magic {head!r}")
