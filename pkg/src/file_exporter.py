"""
File export functionality - increment streams, trajectories, ensembles,
polylines and tightness curves as CSV, reports as JSON
"""
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple
import json
import sys

import numpy as np
import pandas as pd

sys.path.insert(0, str(Path(__file__).parent.parent))
from config.config import OUTPUTS_DIR, EXPORT_SETTINGS
from src.exceptions import InvalidArgumentError
from src.logger import setup_logger
from src.rough_step import IncrementStream, Partition, RoughStepFunction

logger = setup_logger(__name__)


def _level_two_columns(d: int):
    return [f"Xi_{a}{b}" for a in range(1, d + 1) for b in range(1, d + 1)]


def _to_builtin(obj):
    """json.dump fallback for numpy scalars and arrays"""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


class FileExporter:
    """Export laboratory artifacts to plot-ready files"""

    def __init__(self, output_dir: Optional[Path] = None):
        self.output_dir = Path(output_dir) if output_dir is not None else OUTPUTS_DIR
        self.output_dir.mkdir(exist_ok=True, parents=True)

    def _path(self, filename: str, suffix: str) -> Path:
        path = Path(filename)
        if path.suffix != suffix:
            path = path.with_name(path.name + suffix)
        return path if path.is_absolute() else self.output_dir / path

    def _write_frame(self, frame: pd.DataFrame, filename: str, kind: str) -> str:
        try:
            output_path = self._path(filename, ".csv")
            output_path.parent.mkdir(exist_ok=True, parents=True)
            frame.to_csv(output_path, index=False, float_format=EXPORT_SETTINGS["float_format"])
            logger.info(f"Exported {kind} to CSV: {output_path}")
            return str(output_path)
        except Exception as e:
            logger.error(f"Error exporting {kind} to CSV: {str(e)}")
            raise

    def export_stream_csv(self, rsf: RoughStepFunction, filename: str) -> str:
        """
        Export the increment stream of a rough step function.

        Args:
            rsf: Rough step function
            filename: Output filename (extension optional)

        Returns:
            str: Path to exported file; columns t_start, t_end, xi_1..xi_d, Xi_11..Xi_dd
        """
        taus = rsf.partition.taus
        d = rsf.dim
        xis = rsf.increments.xis
        Xis = rsf.increments.Xis.reshape(rsf.partition.count, d * d)
        columns = {"t_start": taus[:-1], "t_end": taus[1:]}
        columns.update({f"xi_{a + 1}": xis[:, a] for a in range(d)})
        columns.update({name: Xis[:, k] for k, name in enumerate(_level_two_columns(d))})
        return self._write_frame(pd.DataFrame(columns), filename, "increment stream")

    def export_trajectory_csv(self, times: np.ndarray, values: np.ndarray, filename: str) -> str:
        """Columns t, y_1..y_e"""
        values = np.asarray(values).reshape(len(times), -1)
        columns = {"t": np.asarray(times)}
        columns.update({f"y_{k + 1}": values[:, k] for k in range(values.shape[1])})
        return self._write_frame(pd.DataFrame(columns), filename, "trajectory")

    def export_ensemble_csv(
        self,
        path_ids: Sequence[int],
        seeds: Sequence[int],
        terminal: np.ndarray,
        filename: str,
    ) -> str:
        """Terminal values only, one row per path: path_id, seed, y_1..y_e"""
        terminal = np.asarray(terminal).reshape(len(path_ids), -1)
        columns = {
            "path_id": np.asarray(path_ids, dtype=np.int64),
            "seed": np.array([int(s) for s in seeds], dtype=np.uint64),
        }
        columns.update({f"y_{k + 1}": terminal[:, k] for k in range(terminal.shape[1])})
        return self._write_frame(pd.DataFrame(columns), filename, "ensemble")

    def export_polyline_csv(self, times: np.ndarray, values: np.ndarray, filename: str) -> str:
        """Level-1 samples of a lifted path: t, x_1..x_d"""
        values = np.asarray(values).reshape(len(times), -1)
        columns = {"t": np.asarray(times)}
        columns.update({f"x_{k + 1}": values[:, k] for k in range(values.shape[1])})
        return self._write_frame(pd.DataFrame(columns), filename, "polyline")

    def export_tightness_csv(self, curves, filename: str) -> str:
        """Exceedance curves as rows M, n, p_hat"""
        rows = [row for curve in curves for row in curve.rows()]
        frame = pd.DataFrame(rows, columns=["M", "n", "p_hat"])
        return self._write_frame(frame, filename, "tightness curves")

    def export_to_json(self, data: Dict[str, Any], filename: str) -> str:
        """
        Export data to JSON file.

        Args:
            data: Dictionary data to export
            filename: Output filename (extension optional)

        Returns:
            str: Path to exported file
        """
        try:
            output_path = self._path(filename, ".json")
            output_path.parent.mkdir(exist_ok=True, parents=True)

            with open(output_path, 'w', encoding='utf-8') as f:
                json.dump(
                    data,
                    f,
                    indent=EXPORT_SETTINGS["json_indent"],
                    ensure_ascii=False,
                    sort_keys=True,
                    default=_to_builtin,
                )

            logger.info(f"Exported to JSON: {output_path}")
            return str(output_path)

        except Exception as e:
            logger.error(f"Error exporting to JSON: {str(e)}")
            raise


def read_stream_csv(path) -> Tuple[Partition, IncrementStream]:
    """
    Read an increment stream written by FileExporter.export_stream_csv.

    Raises:
        InvalidArgumentError: Missing columns or cells that do not join up
        PartitionError: Times do not form a valid partition
    """
    frame = pd.read_csv(path)
    xi_cols = sorted(
        (c for c in frame.columns if c.startswith("xi_")), key=lambda c: int(c.split("_")[1])
    )
    d = len(xi_cols)
    required = ["t_start", "t_end"] + xi_cols + _level_two_columns(d)
    missing = [c for c in required if c not in frame.columns]
    if d == 0 or missing:
        raise InvalidArgumentError(f"Stream CSV {Path(path).name} is missing columns {missing or ['xi_1']}")
    if frame.empty:
        raise InvalidArgumentError(f"Stream CSV {Path(path).name} has no cells")

    starts = frame["t_start"].to_numpy(dtype=float)
    ends = frame["t_end"].to_numpy(dtype=float)
    if np.any(starts[1:] != ends[:-1]):
        raise InvalidArgumentError("Stream cells are not contiguous (t_start[j+1] != t_end[j])")
    partition = Partition(np.concatenate((starts[:1], ends)))
    xis = frame[xi_cols].to_numpy(dtype=float)
    Xis = frame[_level_two_columns(d)].to_numpy(dtype=float).reshape(-1, d, d)
    logger.info(f"Read {partition.count} cells of dimension {d} from {Path(path).name}")
    return partition, IncrementStream(xis, Xis)
