"""Binary image codec and the raw tensor container."""
import numpy as np
import pytest

from maskfuse.formats import (
    FormatError,
    read_label_map,
    read_mask,
    read_pgm,
    read_tensor,
    write_label_map,
    write_mask,
    write_pgm,
    write_tensor,
)


# -- binary masks ------------------------------------------------------------

def test_mask_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    for i, shape in enumerate([(1, 1), (1, 7), (9, 1), (16, 16), (33, 47)]):
        m = rng.random(shape) < 0.4
        p = tmp_path / f"m{i}.pgm"
        write_mask(p, m)
        assert np.array_equal(read_mask(p), m)


def test_mask_files_are_byte_stable(tmp_path):
    rng = np.random.default_rng(1)
    m = rng.random((20, 30)) < 0.5
    p1 = tmp_path / "a.pgm"
    p2 = tmp_path / "b.pgm"
    write_mask(p1, m)
    write_mask(p2, read_mask(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_mask_decode_threshold_at_128(tmp_path):
    p = tmp_path / "t.pgm"
    data = np.array([[0, 127, 128, 255]], dtype=np.uint8)
    write_pgm(p, data)
    assert read_mask(p).tolist() == [[False, False, True, True]]


def test_pgm_header_comments_are_skipped(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# a comment\n2 2\n# another\n255\n\x00\xff\xff\x00")
    got = read_pgm(p)
    assert got.tolist() == [[0, 255], [255, 0]]


def test_pgm_rejects_wrong_magic(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P2\n2 2\n255\n0 0 0 0\n")
    with pytest.raises(FormatError):
        read_pgm(p)


def test_pgm_rejects_wrong_maxval(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P5\n2 2\n65535\n\x00\x00\x00\x00\x00\x00\x00\x00")
    with pytest.raises(FormatError):
        read_pgm(p)


def test_pgm_rejects_truncated_payload(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P5\n4 4\n255\n\x00\x00")
    with pytest.raises(FormatError):
        read_pgm(p)


def test_label_map_round_trip_and_id_set(tmp_path):
    lab = np.zeros((12, 12), dtype=np.int32)
    lab[2:6, 2:6] = 1
    lab[7:11, 7:11] = 2
    p = tmp_path / "lab.pgm"
    write_label_map(p, lab)
    got = read_label_map(p)
    assert np.array_equal(got, lab)
    assert set(np.unique(got).tolist()) == {0, 1, 2}


# -- tensors -----------------------------------------------------------------

def test_tensor_round_trip_ranks(tmp_path):
    rng = np.random.default_rng(2)
    shapes = [(5,), (3, 4), (2, 6, 7), (2, 3, 4, 5)]
    for i, shape in enumerate(shapes):
        t = rng.normal(size=shape).astype(np.float32)
        p = tmp_path / f"t{i}.stgt"
        write_tensor(p, t)
        got = read_tensor(p)
        assert got.dtype == np.float32
        assert got.shape == t.shape
        assert np.array_equal(got, t)


def test_tensor_files_are_byte_stable(tmp_path):
    rng = np.random.default_rng(3)
    t = rng.normal(size=(4, 9)).astype(np.float32)
    p1 = tmp_path / "a.stgt"
    p2 = tmp_path / "b.stgt"
    write_tensor(p1, t)
    write_tensor(p2, read_tensor(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_tensor_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.stgt"
    write_tensor(p, np.zeros((2, 2), dtype=np.float32))
    raw = bytearray(p.read_bytes())
    raw[0] = ord("X")
    p.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_tensor(p)


def test_tensor_rejects_unknown_version(tmp_path):
    p = tmp_path / "bad.stgt"
    write_tensor(p, np.zeros((2, 2), dtype=np.float32))
    raw = bytearray(p.read_bytes())
    raw[4] = 9
    p.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_tensor(p)


def test_tensor_rejects_truncated_payload(tmp_path):
    p = tmp_path / "bad.stgt"
    write_tensor(p, np.ones((3, 3), dtype=np.float32))
    raw = p.read_bytes()
    p.write_bytes(raw[:-4])
    with pytest.raises(FormatError):
        read_tensor(p)


def test_tensor_rejects_trailing_bytes(tmp_path):
    p = tmp_path / "bad.stgt"
    write_tensor(p, np.ones((3, 3), dtype=np.float32))
    p.write_bytes(p.read_bytes() + b"\x00")
    with pytest.raises(FormatError):
        read_tensor(p)


def test_tensor_rejects_zero_dimension(tmp_path):
    p = tmp_path / "bad.stgt"
    with pytest.raises(FormatError):
        write_tensor(p, np.zeros((0, 3), dtype=np.float32))
