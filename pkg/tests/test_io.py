import json

import numpy as np
import pytest

from iclust import Allocation, DataSet, MvHyperParams, Solution, UvHyperParams
from iclust.io import (
    distance_matrix,
    hyperparams_to_dict,
    read_csv,
    read_labels_csv,
    read_result,
    standardize,
    write_csv,
    write_result,
)


class TestReadCsv:
    def test_direct_parse(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("1.0,2.0\n3.0,4.0\n")
        data = read_csv(p)
        assert data.n == 2 and data.b == 2
        assert data.values.tolist() == [[1.0, 2.0], [3.0, 4.0]]

    def test_header_skipped(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("x,y\n1,2\n3,4\n")
        assert read_csv(p).n == 2

    def test_ragged_row_names_line(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("1,2\n3,4,5\n")
        with pytest.raises(ValueError, match="line 2"):
            read_csv(p)

    def test_non_numeric_cell_names_position(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("1,2\n3,abc\n")
        with pytest.raises(ValueError, match="line 2, column 2"):
            read_csv(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("")
        with pytest.raises(ValueError, match="empty"):
            read_csv(p)

    def test_header_only(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("x,y\n")
        with pytest.raises(ValueError, match="no data rows"):
            read_csv(p)

    def test_missing_file_is_oserror(self, tmp_path):
        with pytest.raises(OSError):
            read_csv(tmp_path / "nope.csv")

    def test_roundtrip_exact(self, tmp_path, rng):
        values = rng.standard_normal((17, 3)) * np.pi
        p = tmp_path / "d.csv"
        write_csv(values, p)
        back = read_csv(p)
        assert np.array_equal(back.values, values)


class TestStandardize:
    def test_symmetric_three_points(self):
        data, means, sds = standardize(DataSet(np.array([[1.0], [2.0], [3.0]])))
        assert data.values[:, 0].tolist() == [-1.0, 0.0, 1.0]
        assert means[0] == 2.0 and sds[0] == 1.0

    def test_postconditions(self, rng):
        data, _, _ = standardize(DataSet(rng.standard_normal((50, 3)) * 7 + 3))
        assert np.all(np.abs(data.values.mean(axis=0)) < 1e-12)
        assert np.all(np.abs(data.values.std(axis=0, ddof=1) - 1) < 1e-12)

    def test_constant_column_names_column(self):
        with pytest.raises(ValueError, match="column 2"):
            standardize(DataSet(np.array([[1.0, 5.0], [2.0, 5.0]])))


class TestDistanceMatrix:
    def test_three_four_five(self):
        data = DataSet(np.array([[0.0, 0.0], [3.0, 4.0]]))
        d = distance_matrix(data)
        assert d[0, 1] == pytest.approx(5.0, abs=1e-15)

    def test_manhattan(self):
        data = DataSet(np.array([[0.0, 0.0], [3.0, 4.0]]))
        d = distance_matrix(data, metric="manhattan")
        assert d[0, 1] == pytest.approx(7.0, abs=1e-15)

    def test_metric_axioms(self, rng):
        data = DataSet(rng.standard_normal((15, 3)))
        d = distance_matrix(data)
        assert np.array_equal(d, d.T)
        assert np.all(np.diag(d) == 0.0)
        assert np.all(d >= 0.0)

    def test_unknown_metric(self, small_data):
        with pytest.raises(ValueError, match="metric"):
            distance_matrix(small_data, metric="cosine")

    def test_standardized_distances_scale_invariant(self, rng):
        raw = rng.standard_normal((20, 2))
        scaled = raw * np.array([13.0, 0.04]) + np.array([-5.0, 2.0])
        d1 = distance_matrix(standardize(DataSet(raw))[0])
        d2 = distance_matrix(standardize(DataSet(scaled))[0])
        assert np.max(np.abs(d1 - d2)) < 1e-10


class TestResultDocument:
    def make_solution(self):
        return Solution(
            allocation=Allocation(np.array([1, 1, 2, 3, 2])),
            K=3,
            icl=-12.345678901234567,
            trace=((0, -20.0), (1, -12.345678901234567)),
            restart_id=4,
            restart_bests=(-15.0, -12.345678901234567),
        )

    def test_roundtrip_identical_fields(self, tmp_path):
        sol = self.make_solution()
        params = MvHyperParams(alpha=0.5, tau=0.01, mu=np.array([0.1, -0.2]), nu=3.0, omega=1.0)
        meta = {"seed": 7, "restarts": 2, "runtime_ms": 12.5, "algorithm": "combined",
                "metric": "euclidean", "standardize": True, "beta1": 0.1, "beta2": 0.01,
                "k_max": 20}
        path = tmp_path / "out.json"
        write_result(sol, params, meta, path)
        doc = read_result(path)
        assert doc["K"] == sol.K
        assert doc["icl_ex"] == sol.icl  # shortest round-trip floats are exact
        assert doc["labels"] == sol.allocation.labels.tolist()
        assert doc["restart_best"] == list(sol.restart_bests)
        assert doc["sweeps"] == sol.sweeps_used
        assert doc["seed"] == 7 and doc["restarts"] == 2
        assert doc["hyperparams"]["alpha"] == 0.5
        assert doc["hyperparams"]["mu"] == [0.1, -0.2]

    def test_univariate_hyperparams_dict(self):
        p = UvHyperParams(alpha=0.5, tau=0.01, mu=0.0, gamma=1.0, delta=0.1)
        d = hyperparams_to_dict(p)
        assert d["family"] == "univariate"
        assert d["gamma"] == 1.0 and d["delta"] == 0.1

    def test_missing_directory_errors(self, tmp_path):
        sol = self.make_solution()
        params = UvHyperParams(alpha=0.5, tau=0.01, mu=0.0, gamma=1.0, delta=0.1)
        with pytest.raises(OSError):
            write_result(sol, params, {}, tmp_path / "absent" / "out.json")

    def test_labels_length_matches_n(self, tmp_path):
        sol = self.make_solution()
        params = UvHyperParams(alpha=0.5, tau=0.01, mu=0.0, gamma=1.0, delta=0.1)
        path = tmp_path / "out.json"
        write_result(sol, params, {}, path)
        doc = json.loads(path.read_text())
        assert len(doc["labels"]) == len(sol.allocation)


class TestReadLabels:
    def test_reads_single_column_ints(self, tmp_path):
        p = tmp_path / "l.csv"
        p.write_text("1\n2\n1\n")
        assert read_labels_csv(p).tolist() == [1, 2, 1]

    def test_rejects_two_columns(self, tmp_path):
        p = tmp_path / "l.csv"
        p.write_text("1,2\n2,3\n")
        with pytest.raises(ValueError, match="one column"):
            read_labels_csv(p)

    def test_rejects_fractional(self, tmp_path):
        p = tmp_path / "l.csv"
        p.write_text("1.5\n2\n")
        with pytest.raises(ValueError, match="integers"):
            read_labels_csv(p)
