from __future__ import annotations

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atomdetect.analysis import (EventFlag, PhotonEvent, PhotonStream, StreamFormatError,
                                 read_stream, write_stream)
from atomdetect.analysis.streamio import HEADER, MAGIC


def _stream(n=1000, seed=0):
    rng = np.random.default_rng(seed)
    ts = np.sort(rng.integers(0, 10**12, n)).astype(np.uint64)
    return PhotonStream(ts, rng.integers(0, 2, n), rng.integers(0, 16, n))


@pytest.mark.parametrize("fmt", ["binary", "csv"])
def test_round_trip(tmp_path, fmt):
    s = _stream()
    back = read_stream(write_stream(tmp_path / f"s.{fmt}", s, fmt))
    np.testing.assert_array_equal(back.timestamps_ps, s.timestamps_ps)
    np.testing.assert_array_equal(back.channels, s.channels)
    if fmt == "binary":
        assert back == s


def test_binary_layout(tmp_path):
    s = PhotonStream(np.array([5, 2**40], np.uint64), np.array([1, 0]),
                     np.array([int(EventFlag.SIGNAL), int(EventFlag.DARK)]))
    raw = write_stream(tmp_path / "s.phts", s).read_bytes()
    assert raw[:4] == b"PHTS"
    assert struct.unpack_from("<HHQ", raw, 4) == (1, 0, 2)
    assert len(raw) == 16 + 2 * 16
    ch, fl, _, _, ts = struct.unpack_from("<BBHIQ", raw, 16)
    assert (ch, fl, ts) == (1, 1, 5)
    assert list(s) == [PhotonEvent(1, 5), PhotonEvent(0, 2**40)]


@settings(max_examples=30)
@given(st.lists(st.integers(0, 2**63), max_size=50))
def test_round_trip_property(tmp_path_factory, ts):
    s = PhotonStream(np.sort(np.array(ts, dtype=np.uint64)))
    path = tmp_path_factory.mktemp("rt") / "s.phts"
    assert read_stream(write_stream(path, s)) == s


def test_empty_stream_round_trip(tmp_path):
    s = PhotonStream(np.empty(0, np.uint64))
    for fmt in ("binary", "csv"):
        assert len(read_stream(write_stream(tmp_path / f"e.{fmt}", s, fmt))) == 0


def test_bad_magic(tmp_path):
    p = tmp_path / "bad.phts"
    p.write_bytes(b"XXXX" + bytes(12))
    with pytest.raises(StreamFormatError, match="magic"):
        read_stream(p)


def test_bad_version(tmp_path):
    p = tmp_path / "v.phts"
    p.write_bytes(HEADER.pack(MAGIC, 7, 0, 0))
    with pytest.raises(StreamFormatError, match="version"):
        read_stream(p)


def test_truncated(tmp_path):
    p = write_stream(tmp_path / "t.phts", _stream(10))
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(StreamFormatError, match="record count"):
        read_stream(p)
    p.write_bytes(b"PHTS\x01")
    with pytest.raises(StreamFormatError, match="truncated"):
        read_stream(p)


def test_unsorted_binary(tmp_path):
    p = write_stream(tmp_path / "u.phts", _stream(10))
    raw = bytearray(p.read_bytes())
    first = raw[16:32]
    raw[16:32] = raw[32:48]
    raw[32:48] = first
    p.write_bytes(bytes(raw))
    with pytest.raises(StreamFormatError, match="unsorted"):
        read_stream(p)


def test_csv_errors(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("time,chan\n1,0\n")
    with pytest.raises(StreamFormatError, match="header"):
        read_stream(p)
    p.write_text("channel,timestamp_ps\n0,10\n1,5\n")
    with pytest.raises(StreamFormatError, match="unsorted"):
        read_stream(p)
    p.write_text("channel,timestamp_ps\n0,abc\n")
    with pytest.raises(StreamFormatError, match="malformed"):
        read_stream(p)


def test_stream_invariants():
    with pytest.raises(StreamFormatError):
        PhotonStream(np.array([3, 1], np.uint64))
    with pytest.raises(StreamFormatError):
        PhotonStream(np.array([1, 3], np.uint64), channels=np.array([0]))


def test_merge_and_select():
    a = PhotonStream(np.array([1, 5, 9], np.uint64), np.zeros(3), duration_ps=20)
    b = PhotonStream(np.array([2, 5, 10], np.uint64), np.ones(3), duration_ps=30)
    m = PhotonStream.merge(a, b)
    assert list(m.timestamps_ps) == [1, 2, 5, 5, 9, 10]
    assert list(m.channels) == [0, 1, 0, 1, 0, 1]
    assert m.duration_ps == 30
    assert m.select_channel(1) == b
    assert m.duration == pytest.approx(30e-12)
