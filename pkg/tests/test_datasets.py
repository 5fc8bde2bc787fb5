import numpy as np
import pytest

from spikebench.datasets import (
    CIFAR_RECORD,
    load_cifar10,
    read_cifar10_batch,
    read_csv_matrix,
    write_cifar10_batch,
    write_csv_matrix,
)
from spikebench.errors import FormatError


def test_csv_roundtrip_with_header(tmp_path):
    M = np.random.default_rng(0).random((4, 3))
    write_csv_matrix(tmp_path / "m.csv", M, header=["a", "b", "c"])
    assert np.array_equal(read_csv_matrix(tmp_path / "m.csv"), M)


def test_csv_skips_comments_and_blank_lines(tmp_path):
    (tmp_path / "m.csv").write_text("# note\n1,2\n\n3,4\n")
    assert read_csv_matrix(tmp_path / "m.csv").tolist() == [[1, 2], [3, 4]]


def test_csv_ragged_row_names_line(tmp_path):
    (tmp_path / "m.csv").write_text("1,2\n3,4\n5\n")
    with pytest.raises(FormatError, match=r"m.csv:3"):
        read_csv_matrix(tmp_path / "m.csv")


def test_csv_bad_field_names_line(tmp_path):
    (tmp_path / "m.csv").write_text("x,y\n1,2\n3,oops\n")
    with pytest.raises(FormatError, match=r":3: non-numeric"):
        read_csv_matrix(tmp_path / "m.csv")


def test_csv_empty(tmp_path):
    (tmp_path / "m.csv").write_text("a,b\n")
    with pytest.raises(FormatError):
        read_csv_matrix(tmp_path / "m.csv")


def _batch(n, seed):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, (n, 3072), dtype=np.uint8), rng.integers(0, 10, n, dtype=np.uint8)


def test_cifar_record_layout(tmp_path):
    px, lab = _batch(3, 0)
    write_cifar10_batch(tmp_path / "b.bin", px, lab)
    raw = (tmp_path / "b.bin").read_bytes()
    assert len(raw) == 3 * CIFAR_RECORD
    assert raw[CIFAR_RECORD] == lab[1] and raw[CIFAR_RECORD + 1] == px[1, 0]
    got_px, got_lab = read_cifar10_batch(tmp_path / "b.bin")
    assert np.array_equal(got_px, px) and np.array_equal(got_lab, lab)


def test_cifar_truncated_reports_offset(tmp_path):
    px, lab = _batch(2, 1)
    write_cifar10_batch(tmp_path / "b.bin", px, lab)
    data = (tmp_path / "b.bin").read_bytes()
    (tmp_path / "b.bin").write_bytes(data[:-5])
    with pytest.raises(FormatError, match=f"offset {CIFAR_RECORD}"):
        read_cifar10_batch(tmp_path / "b.bin")


def test_cifar_bad_label(tmp_path):
    px, lab = _batch(2, 2)
    lab[1] = 12
    write_cifar10_batch(tmp_path / "b.bin", px, lab)
    with pytest.raises(FormatError, match="label 12"):
        read_cifar10_batch(tmp_path / "b.bin")


def test_cifar_directory(tmp_path):
    for i in (1, 2):
        write_cifar10_batch(tmp_path / f"data_batch_{i}.bin", *_batch(4, i))
    px, lab = load_cifar10(tmp_path)
    assert px.shape == (8, 3072) and lab.shape == (8,)
    (tmp_path / "empty").mkdir()
    with pytest.raises(FormatError):
        load_cifar10(tmp_path / "empty")
    with pytest.raises(FileNotFoundError):
        load_cifar10(tmp_path / "missing.bin")
