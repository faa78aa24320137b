import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depthsr.formats import (FileFormatError, read_pfm, read_pgm, read_ppm,
                             write_pfm, write_pgm, write_ppm)


def test_pfm_round_trip_small(tmp_path):
    arr = np.array([[0.0, 1.0], [2.0, 3.0]], dtype=np.float32)
    write_pfm(arr, tmp_path / "a.pfm")
    assert np.array_equal(read_pfm(tmp_path / "a.pfm"), arr)


def test_pfm_rejects_color_header(tmp_path):
    p = tmp_path / "c.pfm"
    p.write_bytes(b"PF\n2 2\n-1.0\n" + b"\x00" * 48)
    with pytest.raises(FileFormatError, match="single-channel"):
        read_pfm(p)


def test_pfm_random_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    arr = rng.uniform(0, 5, size=(64, 64)).astype(np.float32)
    write_pfm(arr, tmp_path / "r.pfm")
    back = read_pfm(tmp_path / "r.pfm")
    assert np.max(np.abs(back - arr)) <= 1e-6 * max(1.0, np.abs(arr).max())


def test_pfm_rejects_nonfinite(tmp_path):
    with pytest.raises(FileFormatError):
        write_pfm(np.array([[np.nan, 0.0]]), tmp_path / "bad.pfm")


def test_pfm_truncated_payload(tmp_path):
    p = tmp_path / "t.pfm"
    p.write_bytes(b"Pf\n4 4\n-1.0\n" + b"\x00" * 10)
    with pytest.raises(FileFormatError, match="truncated"):
        read_pfm(p)


def test_pfm_malformed_header(tmp_path):
    p = tmp_path / "m.pfm"
    p.write_bytes(b"Pf\nxx yy\n-1.0\n")
    with pytest.raises(FileFormatError):
        read_pfm(p)


@settings(max_examples=25, deadline=None)
@given(h=st.integers(1, 12), w=st.integers(1, 12), seed=st.integers(0, 2**31 - 1))
def test_pfm_round_trip_property(h, w, seed):
    arr = np.random.default_rng(seed).uniform(0, 100, size=(h, w)).astype(np.float32)
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "x.pfm"
        write_pfm(arr, path)
        assert np.array_equal(read_pfm(path), arr)


def test_ppm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    # quantized grid so the 8-bit round trip is exact
    img = (rng.integers(0, 256, size=(5, 7, 3)) / 255.0).astype(np.float32)
    write_ppm(img, tmp_path / "a.ppm")
    assert np.allclose(read_ppm(tmp_path / "a.ppm"), img, atol=1e-7)


def test_pgm_round_trip(tmp_path):
    mask = np.random.default_rng(1).random((6, 4)) > 0.5
    write_pgm(mask, tmp_path / "m.pgm")
    assert np.array_equal(read_pgm(tmp_path / "m.pgm"), mask)


def test_ppm_bad_magic(tmp_path):
    p = tmp_path / "bad.ppm"
    p.write_bytes(b"P3\n1 1\n255\n0 0 0\n")
    with pytest.raises(FileFormatError):
        read_ppm(p)
