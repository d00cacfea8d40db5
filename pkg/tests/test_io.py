import json

import numpy as np
import pytest

from jic.exceptions import DimensionError, InputError
from jic.io import read_block, read_blockset, read_matrix, write_block, write_json, write_matrix


def write(path, text):
    path.write_text(text)
    return path


class TestReadBlock:
    def test_plain_numeric(self, tmp_path):
        b, sids, vids = read_block(write(tmp_path / "a.csv", "1,2,3\n4,5,6\n"))
        np.testing.assert_array_equal(b.data, [[1, 2, 3], [4, 5, 6]])
        assert sids is None and vids is None and b.label == "a"

    def test_header_and_ids(self, tmp_path):
        p = write(tmp_path / "b.tsv", "gene\tS1\tS2\ng1\t1.5\t2\ng2\t3\t-4e-3\n")
        b, sids, vids = read_block(p)
        assert sids == ["S1", "S2"] and vids == ["g1", "g2"]
        np.testing.assert_array_equal(b.data, [[1.5, 2.0], [3.0, -4e-3]])

    def test_header_without_corner(self, tmp_path):
        b, sids, vids = read_block(write(tmp_path / "c.csv", "S1,S2\ng1,1,2\ng2,3,4\n"))
        assert sids == ["S1", "S2"] and vids == ["g1", "g2"]

    def test_header_only_numeric_rows(self, tmp_path):
        b, sids, vids = read_block(write(tmp_path / "d.csv", "S1,S2,S3\n1,2,3\n4,5,6\n"))
        assert sids == ["S1", "S2", "S3"] and vids is None

    def test_ragged(self, tmp_path):
        with pytest.raises(DimensionError):
            read_block(write(tmp_path / "e.csv", "1,2,3\n4,5\n"))

    def test_non_numeric_cell(self, tmp_path):
        with pytest.raises(InputError):
            read_block(write(tmp_path / "f.csv", "1,2\n3,x\n4,5\n"), label="f")

    def test_nan_rejected(self, tmp_path):
        with pytest.raises(InputError):
            read_block(write(tmp_path / "g.csv", "1,nan\n3,4\n"))

    def test_empty(self, tmp_path):
        with pytest.raises(InputError):
            read_block(write(tmp_path / "h.csv", "\n\n"))

    def test_roundtrip_full_precision(self, tmp_path):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((4, 6)) * 10.0 ** rng.integers(-8, 8, size=(4, 6))
        write_block(tmp_path / "x.csv", x, [f"s{j}" for j in range(6)], [f"v{i}" for i in range(4)])
        b, sids, vids = read_block(tmp_path / "x.csv")
        np.testing.assert_array_equal(b.data, x)
        assert sids[0] == "s0" and vids[-1] == "v3"


class TestReadBlockset:
    def test_matching_ids(self, tmp_path):
        a = write(tmp_path / "a.csv", "v,S1,S2\ng,1,2\n")
        b = write(tmp_path / "b.csv", "v,S1,S2\nh,3,4\nk,5,6\n")
        bs = read_blockset([a, b])
        assert list(bs.sizes) == [1, 2] and bs.sample_ids == ("S1", "S2")

    def test_mismatched_ids(self, tmp_path):
        a = write(tmp_path / "a.csv", "v,S1,S2\ng,1,2\n")
        b = write(tmp_path / "b.csv", "v,S2,S1\nh,3,4\n")
        with pytest.raises(DimensionError):
            read_blockset([a, b])

    def test_sample_count_mismatch(self, tmp_path):
        a = write(tmp_path / "a.csv", "1,2\n3,4\n")
        b = write(tmp_path / "b.csv", "1,2,3\n")
        with pytest.raises(DimensionError):
            read_blockset([a, b])

    def test_positional_pairing(self, tmp_path):
        a = write(tmp_path / "a.csv", "v,S1,S2\ng,1,2\n")
        b = write(tmp_path / "b.csv", "3,4\n")
        bs = read_blockset([a, b])
        assert bs.sample_ids == ("S1", "S2")


def test_matrix_roundtrip(tmp_path):
    x = np.array([[np.pi, -1e-300], [1 / 3, 2.0**60]])
    write_matrix(tmp_path / "m.csv", x, header=["a", "b"])
    np.testing.assert_array_equal(read_matrix(tmp_path / "m.csv"), x)


def test_json_numpy_types(tmp_path):
    write_json(tmp_path / "o.json", {"a": np.int64(3), "b": np.float64(0.1), "c": np.arange(2)})
    assert json.loads((tmp_path / "o.json").read_text()) == {"a": 3, "b": 0.1, "c": [0, 1]}
