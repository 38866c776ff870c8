import numpy as np
import pytest

from corrcam.exceptions import FormatError
from corrcam.io import (format_value, parse_key_values, read_csv_matrix, read_pgm,
                        read_points_csv, to_uint8_preview, write_csv_matrix, write_pgm,
                        write_points_csv)


def test_key_values_round_trip():
    text = "# comment\na.b = 1.5\nc = hello world  # trailing\n\nd=none\n"
    assert parse_key_values(text) == {"a.b": "1.5", "c": "hello world", "d": "none"}


def test_key_values_reject_garbage():
    with pytest.raises(ValueError):
        parse_key_values("no equals sign here\n")


@pytest.mark.parametrize("value, text", [
    (None, "none"), (True, "true"), (False, "false"), (0.1, "0.1"), ((1.0, 2.0), "1.0, 2.0"),
    (3, "3"),
])
def test_format_value(value, text):
    assert format_value(value) == text


@pytest.mark.parametrize("maxval, dtype", [(255, np.uint8), (65535, np.uint16)])
def test_pgm_round_trip(tmp_path, rng, maxval, dtype):
    image = rng.integers(0, maxval + 1, (7, 5)).astype(dtype)
    write_pgm(tmp_path / "a.pgm", image, maxval=maxval)
    back, mv = read_pgm(tmp_path / "a.pgm")
    assert mv == maxval
    np.testing.assert_array_equal(back, image)


def test_pgm_16bit_is_big_endian(tmp_path):
    write_pgm(tmp_path / "a.pgm", np.array([[258]]), maxval=65535)
    assert (tmp_path / "a.pgm").read_bytes().endswith(b"\x01\x02")


def test_preview_spans_full_range():
    preview = to_uint8_preview(np.array([[-1.0, 0.0], [1.0, 3.0]]))
    assert preview.dtype == np.uint8
    assert preview.min() == 0 and preview.max() == 255


def test_preview_of_flat_image_is_zero():
    assert not to_uint8_preview(np.full((3, 3), 2.5)).any()


def test_csv_matrix_is_bit_exact(tmp_path, rng):
    m = rng.normal(size=(4, 6))
    write_csv_matrix(tmp_path / "m.csv", m)
    np.testing.assert_array_equal(read_csv_matrix(tmp_path / "m.csv"), m)


def test_points_csv_round_trip(tmp_path):
    pts = [(50.0, 26.0), (75.0, 17.3)]
    write_points_csv(tmp_path / "p.csv", pts, header=("f_mm", "width_px"))
    assert read_points_csv(tmp_path / "p.csv") == pts


@pytest.mark.parametrize("body", ["x,y\n1,2,3\n", "x,y\n1,abc\n", ""])
def test_malformed_points_csv(tmp_path, body):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(FormatError):
        read_points_csv(path)
