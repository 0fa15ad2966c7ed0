import numpy as np
import pytest

from src.core import libsvm
from src.core.libsvm import load_dataset, parse_libsvm, resolve_dataset
from src.core.oracle import InvalidInputError
from src.core.problems import estimate_smoothness, make_logistic


class TestParse:
    def test_basic_rows(self):
        data = parse_libsvm("+1 1:0.5 3:2\n-1 2:1.5\n")
        assert data.n_samples == 2
        assert data.n_features == 3
        np.testing.assert_array_equal(data.labels, [1.0, -1.0])
        np.testing.assert_array_equal(data.to_csr().toarray(), [[0.5, 0.0, 2.0], [0.0, 1.5, 0.0]])

    def test_zero_one_labels(self):
        data = parse_libsvm("1 1:1\n0 1:2\n")
        np.testing.assert_array_equal(data.labels, [1.0, -1.0])

    def test_comments_and_blank_lines(self):
        data = parse_libsvm("# header\n\n+1 1:1 # trailing\n")
        assert data.n_samples == 1

    def test_declared_width(self):
        data = parse_libsvm("+1 2:1\n", n_features=5)
        assert data.n_features == 5
        assert data.to_csr().shape == (1, 5)

    def test_truncated_columns(self):
        data = parse_libsvm("+1 1:1 4:2\n")
        np.testing.assert_array_equal(data.to_csr(2).toarray(), [[1.0, 0.0]])

    @pytest.mark.parametrize("text,fragment", [
        ("+1 1:1\n+2 1:1\n", "line 2"),
        ("+1 1:1\nfoo 1:1\n", "line 2: bad label"),
        ("+1 3:1 2:1\n", "strictly increasing"),
        ("+1 0:1\n", "malformed"),
        ("+1 1-1\n", "malformed"),
        ("+1 1:x\n", "malformed"),
        ("+1 1:nan\n", "non-finite"),
    ])
    def test_errors_name_the_line(self, text, fragment):
        with pytest.raises(InvalidInputError, match=fragment):
            parse_libsvm(text)

    def test_serialize_round_trip(self):
        text = "+1 1:0.1 7:3.25\n-1 2:-1e-05\n+1\n"
        data = parse_libsvm(text, n_features=7)
        again = parse_libsvm(data.serialize(), n_features=7)
        np.testing.assert_array_equal(again.labels, data.labels)
        np.testing.assert_array_equal(again.to_csr().toarray(), data.to_csr().toarray())
        assert again.fingerprint() == data.fingerprint()


class TestCache:
    def test_resolves_existing_path(self, tmp_path):
        path = tmp_path / "tiny"
        path.write_text("+1 1:1\n")
        assert resolve_dataset(str(path)) == str(path)

    def test_resolves_cached_name(self, tmp_path):
        (tmp_path / "tiny").write_text("+1 1:1\n")
        assert resolve_dataset("tiny", data_dir=str(tmp_path)) == str(tmp_path / "tiny")

    def test_missing_without_download(self, tmp_path):
        with pytest.raises(InvalidInputError, match="not found"):
            resolve_dataset("a1a", data_dir=str(tmp_path), download=False)

    def test_unknown_dataset_is_not_fetched(self, tmp_path, monkeypatch):
        def no_network(*args, **kwargs):
            raise AssertionError("network access")

        monkeypatch.setattr(libsvm.urllib.request, "urlretrieve", no_network)
        with pytest.raises(InvalidInputError, match="unknown dataset"):
            load_dataset("not-a-dataset", data_dir=str(tmp_path))

    def test_data_dir_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BLOCKSPLIT_DATA_DIR", str(tmp_path))
        assert libsvm.default_data_dir() == str(tmp_path)

    def test_interrupted_download_leaves_no_file(self, tmp_path, monkeypatch):
        def partial_download(url, filename):
            with open(filename, "w") as fh:
                fh.write("+1 1:")
            raise OSError("connection reset")

        monkeypatch.setattr(libsvm.urllib.request, "urlretrieve", partial_download)
        with pytest.raises(OSError):
            libsvm.fetch("a1a", data_dir=str(tmp_path))
        assert list(tmp_path.iterdir()) == []

    def test_completed_download_is_moved_into_place(self, tmp_path, monkeypatch):
        def download(url, filename):
            assert url.endswith("/a1a")
            with open(filename, "w") as fh:
                fh.write("+1 1:1\n")

        monkeypatch.setattr(libsvm.urllib.request, "urlretrieve", download)
        path = libsvm.fetch("a1a", data_dir=str(tmp_path))
        assert path == str(tmp_path / "a1a")
        assert [p.name for p in tmp_path.iterdir()] == ["a1a"]


class TestA1a:
    def test_shape(self, a1a_path):
        data = load_dataset(a1a_path)
        assert data.n_samples == 1605
        assert data.n_features == 123

    def test_logistic_split_at_zero(self, a1a_path):
        data = load_dataset(a1a_path)
        problem = make_logistic(data, 100, 19, 0.005, 5e-5)
        assert problem.peek_value(np.zeros(100), np.zeros(19)) == pytest.approx(np.log(2.0), abs=1e-15)

    def test_smoothness_estimate(self, a1a_path):
        L = estimate_smoothness(load_dataset(a1a_path))
        assert L == pytest.approx(1.567, rel=0.25)
