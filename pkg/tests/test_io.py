"""Round-trip and error tests for the text file formats."""

import numpy as np
import pytest

from zits.io import (
    DataFormatError,
    read_bundle,
    read_flags,
    read_keyvalues,
    read_manifest,
    read_rtensor_dense,
    read_tensor,
    write_bundle,
    write_flags,
    write_keyvalues,
    write_manifest,
    write_rtensor,
    write_tensor,
)
from zits.tensor_ops import CountTensor


@pytest.fixture
def tensor():
    return CountTensor(4, 3, [0, 0, 1, 2], [1, 3, 2, 2], [0, 2, 1, 2],
                       [5, 1, 2, 9])


class TestTensorFormat:
    def test_roundtrip(self, tmp_path, tensor):
        path = tmp_path / "t.txt"
        write_tensor(path, tensor)
        back = read_tensor(path)
        assert back.n_loci == 4 and back.n_cells == 3
        assert np.array_equal(back.to_dense(), tensor.to_dense())

    def test_header_and_layout(self, tmp_path, tensor):
        path = tmp_path / "t.txt"
        write_tensor(path, tensor)
        lines = path.read_text().splitlines()
        assert lines[0] == "# zits-tensor v1"
        assert lines[1] == "4 3"
        assert lines[2].split() == ["0", "1", "0", "5"]

    def test_ingest_1based(self, tmp_path):
        path = tmp_path / "t.txt"
        path.write_text("# zits-tensor v1\n3 2\n1 2 1 4\n")
        back = read_tensor(path, ingest_1based=True)
        assert back.to_dense()[0, 1, 0] == 4

    def test_swapped_indices_canonicalized(self, tmp_path):
        path = tmp_path / "t.txt"
        path.write_text("# zits-tensor v1\n3 2\n2 0 1 7\n")
        back = read_tensor(path)
        assert back.to_dense()[0, 2, 1] == 7
        assert np.all(back.i <= back.j)

    def test_missing_header(self, tmp_path):
        path = tmp_path / "t.txt"
        path.write_text("3 2\n0 1 0 4\n")
        with pytest.raises(DataFormatError):
            read_tensor(path)

    def test_bad_entry_line(self, tmp_path):
        path = tmp_path / "t.txt"
        path.write_text("# zits-tensor v1\n3 2\n0 1 0\n")
        with pytest.raises(DataFormatError):
            read_tensor(path)

    def test_out_of_bounds_entry(self, tmp_path):
        path = tmp_path / "t.txt"
        path.write_text("# zits-tensor v1\n3 2\n0 5 0 1\n")
        with pytest.raises(DataFormatError):
            read_tensor(path)


class TestRtensorFormat:
    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        n, k = 5, 3
        dense = np.zeros((n, n, k))
        iu, ju = np.triu_indices(n)
        vals = rng.standard_normal((iu.size, k))
        vals[rng.random(vals.shape) < 0.5] = 0.0
        dense[iu, ju] = vals
        dense[ju, iu] = vals
        path = tmp_path / "r.txt"
        write_rtensor(path, dense)
        back = read_rtensor_dense(path)
        # 17 significant digits: doubles survive the text round trip exactly
        assert np.array_equal(back, dense)

    def test_header(self, tmp_path):
        path = tmp_path / "r.txt"
        write_rtensor(path, np.zeros((2, 2, 1)))
        assert path.read_text().splitlines()[0] == "# zits-rtensor v1"


class TestFlags:
    def test_roundtrip(self, tmp_path):
        flags = np.array([[0, 1, 0], [2, 2, 4]])
        path = tmp_path / "f.txt"
        write_flags(path, 3, 5, flags)
        back = read_flags(path)
        assert set(map(tuple, back)) == set(map(tuple, flags))

    def test_empty(self, tmp_path):
        path = tmp_path / "f.txt"
        write_flags(path, 3, 5, np.empty((0, 3)))
        assert read_flags(path).shape == (0, 3)


class TestBundle:
    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        mats = {"a": rng.standard_normal((3, 4)),
                "b": rng.standard_normal((1, 1)),
                "long_name": rng.standard_normal((2, 2)) * 1e-17}
        path = tmp_path / "b.txt"
        write_bundle(path, mats)
        back = read_bundle(path)
        assert set(back) == set(mats)
        for name in mats:
            assert np.array_equal(back[name], np.atleast_2d(mats[name]))

    def test_vector_promoted(self, tmp_path):
        path = tmp_path / "b.txt"
        write_bundle(path, {"v": np.array([1.0, 2.0, 3.0])})
        assert read_bundle(path)["v"].shape == (1, 3)

    def test_truncated_section(self, tmp_path):
        path = tmp_path / "b.txt"
        path.write_text("a 3 2\n1 2\n3 4\n")
        with pytest.raises(DataFormatError):
            read_bundle(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "b.txt"
        path.write_text("just one token\n")
        with pytest.raises(DataFormatError):
            read_bundle(path)


class TestKeyValuesAndManifest:
    def test_keyvalues_roundtrip(self, tmp_path):
        path = tmp_path / "kv.txt"
        write_keyvalues(path, {"alpha": 0.1, "n": 5, "name": "run1"})
        back = read_keyvalues(path)
        assert float(back["alpha"]) == 0.1
        assert back["n"] == "5"
        assert back["name"] == "run1"

    def test_manifest_roundtrip(self, tmp_path):
        path = tmp_path / "m.json"
        write_manifest(path, "fit", {"Q": 5}, 3, ["in.txt"], ["out.txt"],
                       1.25, ["fit", "--data", "in.txt"])
        doc = read_manifest(path)
        assert doc["subcommand"] == "fit"
        assert doc["argv"][0] == "fit"
        assert doc["seed"] == 3
        assert doc["config"] == {"Q": 5}

    def test_bad_manifest(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("{not json")
        with pytest.raises(DataFormatError):
            read_manifest(path)
