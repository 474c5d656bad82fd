import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.diagnostics import TightnessCurve
from src.exceptions import InvalidArgumentError
from src.file_exporter import FileExporter, read_stream_csv

from .helpers import brownian_step_function


class TestStreamCsv:
    def test_roundtrip(self, tmp_path: Path) -> None:
        rsf = brownian_step_function(16, d=2, seed=5, xi2_rule="refined(4)")
        path = FileExporter(tmp_path).export_stream_csv(rsf, "stream")

        assert path.endswith("stream.csv")
        partition, stream = read_stream_csv(path)
        assert partition == rsf.partition
        np.testing.assert_array_equal(stream.xis, rsf.increments.xis)
        np.testing.assert_array_equal(stream.Xis, rsf.increments.Xis)

    def test_columns(self, tmp_path: Path) -> None:
        path = FileExporter(tmp_path).export_stream_csv(brownian_step_function(4, d=2), "s.csv")
        assert list(pd.read_csv(path).columns) == [
            "t_start", "t_end", "xi_1", "xi_2", "Xi_11", "Xi_12", "Xi_21", "Xi_22",
        ]

    def test_missing_level_two_columns(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.csv"
        pd.DataFrame({"t_start": [0.0], "t_end": [1.0], "xi_1": [0.3]}).to_csv(path, index=False)
        with pytest.raises(InvalidArgumentError):
            read_stream_csv(path)

    def test_cells_must_join_up(self, tmp_path: Path) -> None:
        path = tmp_path / "gap.csv"
        pd.DataFrame(
            {"t_start": [0.0, 0.6], "t_end": [0.5, 1.0], "xi_1": [0.1, 0.2], "Xi_11": [0.0, 0.0]}
        ).to_csv(path, index=False)
        with pytest.raises(InvalidArgumentError):
            read_stream_csv(path)

    def test_empty_stream(self, tmp_path: Path) -> None:
        path = tmp_path / "empty.csv"
        path.write_text("t_start,t_end,xi_1,Xi_11\n", encoding="utf-8")
        with pytest.raises(InvalidArgumentError):
            read_stream_csv(path)


class TestFileExporter:
    def test_ensemble_csv(self, tmp_path: Path) -> None:
        seeds = [2 ** 64 - 1, 12345]
        path = FileExporter(tmp_path).export_ensemble_csv([0, 1], seeds, np.array([[1.0, 2.0], [3.0, 4.0]]), "ens")
        frame = pd.read_csv(path, dtype={"seed": str})
        assert list(frame.columns) == ["path_id", "seed", "y_1", "y_2"]
        assert [int(s) for s in frame["seed"]] == seeds
        np.testing.assert_array_equal(frame["y_2"], [2.0, 4.0])

    def test_trajectory_csv(self, tmp_path: Path) -> None:
        times = np.linspace(0.0, 1.0, 5)
        path = FileExporter(tmp_path).export_trajectory_csv(times, np.exp(times), "traj")
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["t", "y_1"]
        np.testing.assert_array_equal(frame["y_1"], np.exp(times))

    def test_tightness_csv(self, tmp_path: Path) -> None:
        curve = TightnessCurve(n=64, M=np.array([1.0, 2.0]), p_hat=np.array([0.3, 0.1]), paths=10)
        frame = pd.read_csv(FileExporter(tmp_path).export_tightness_csv([curve], "tight"))
        assert list(frame.columns) == ["M", "n", "p_hat"]
        assert frame["n"].tolist() == [64, 64]

    def test_json_with_numpy_values(self, tmp_path: Path) -> None:
        data = {"gamma_hat": np.float64(0.48), "curve": np.arange(3), "count": np.int64(7), "dir": tmp_path}
        path = FileExporter(tmp_path).export_to_json(data, "report")
        with open(path, encoding="utf-8") as f:
            loaded = json.load(f)
        assert loaded == {"gamma_hat": 0.48, "curve": [0, 1, 2], "count": 7, "dir": str(tmp_path)}

    def test_nested_filename_creates_directories(self, tmp_path: Path) -> None:
        path = FileExporter(tmp_path).export_to_json({"a": 1}, "runs/first/report.json")
        assert Path(path) == tmp_path / "runs" / "first" / "report.json"
        assert Path(path).exists()
