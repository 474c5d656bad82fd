"""
Experiment configuration: JSON schema validation and acceptance fixtures
"""
from dataclasses import dataclass, field
import json
from typing import Any, Dict, List, Optional
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))
from config.config import (
    ACCEPTANCE_FILE,
    CONFIG_SCHEMA_VERSION,
    MC_SETTINGS,
    OUTPUTS_DIR,
    PARTITION_SETTINGS,
    get_worker_count,
)
from src.exceptions import ConfigValidationError, InvalidArgumentError
from src.logger import setup_logger
from src.noise_models import NoiseSpec
from src.rough_step import CONVENTIONS
from src.vector_fields import FIELD_REGISTRY

logger = setup_logger(__name__)

TOP_LEVEL_KEYS = {
    "schema_version", "scenario", "noise", "field", "partition", "mc",
    "outputs", "convention", "y0", "options",
}
FIELD_KEYS = {"name", "params"}
PARTITION_KEYS = {"T", "n", "n_grid"}
MC_KEYS = {"paths", "master_seed", "workers"}
OUTPUT_KEYS = {
    "dir", "report", "ensemble_csv", "trajectory_csv", "tightness_csv", "polyline_csv",
}


def _reject_unknown(section: Dict[str, Any], allowed, prefix: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigValidationError(f"{prefix}{unknown[0]}", "unknown key")


def _require_dict(value, path: str) -> Dict[str, Any]:
    if not isinstance(value, dict):
        raise ConfigValidationError(path, f"expected an object, got {type(value).__name__}")
    return value


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class ExperimentConfig:
    scenario: str
    noise: Optional[NoiseSpec] = None
    field_name: str = "linear"
    field_params: Dict[str, Any] = field(default_factory=dict)
    T: float = PARTITION_SETTINGS["default_T"]
    n: Optional[int] = None
    n_grid: Optional[List[int]] = None
    paths: int = MC_SETTINGS["paths"]
    master_seed: int = MC_SETTINGS["master_seed"]
    workers: int = 1
    outputs: Dict[str, Any] = field(default_factory=dict)
    convention: str = "earlier_later"
    y0: List[float] = field(default_factory=lambda: [1.0])
    options: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """
        Validate a parsed config document.

        Raises:
            ConfigValidationError: First offending key, reported by its dotted path
        """
        data = _require_dict(data, "<root>")
        _reject_unknown(data, TOP_LEVEL_KEYS, "")

        version = data.get("schema_version")
        if version != CONFIG_SCHEMA_VERSION:
            raise ConfigValidationError(
                "schema_version", f"expected {CONFIG_SCHEMA_VERSION}, got {version!r}"
            )

        scenario = data.get("scenario")
        if not isinstance(scenario, str) or not scenario:
            raise ConfigValidationError("scenario", "must be a non-empty string")

        noise = None
        if "noise" in data:
            noise_data = _require_dict(data["noise"], "noise")
            _reject_unknown(noise_data, {"kind", "params", "xi2_rule"}, "noise.")
            try:
                noise = NoiseSpec.from_dict(noise_data)
            except InvalidArgumentError as e:
                raise ConfigValidationError("noise", str(e)) from e

        field_data = _require_dict(data.get("field", {"name": "linear"}), "field")
        _reject_unknown(field_data, FIELD_KEYS, "field.")
        field_name = field_data.get("name", "linear")
        if field_name not in FIELD_REGISTRY:
            raise ConfigValidationError(
                "field.name", f"unknown field '{field_name}', expected one of {sorted(FIELD_REGISTRY)}"
            )
        field_params = _require_dict(field_data.get("params", {}), "field.params")

        part = _require_dict(data.get("partition", {}), "partition")
        _reject_unknown(part, PARTITION_KEYS, "partition.")
        T = part.get("T", PARTITION_SETTINGS["default_T"])
        if isinstance(T, bool) or not isinstance(T, (int, float)) or not T > 0:
            raise ConfigValidationError("partition.T", f"must be a positive number, got {T!r}")
        n = part.get("n")
        if n is not None and (not _is_int(n) or n < 1):
            raise ConfigValidationError("partition.n", f"must be a positive integer, got {n!r}")
        n_grid = part.get("n_grid")
        if n_grid is not None:
            if not isinstance(n_grid, list) or not n_grid:
                raise ConfigValidationError("partition.n_grid", "must be a non-empty list")
            if not all(_is_int(v) and _is_power_of_two(v) for v in n_grid):
                raise ConfigValidationError("partition.n_grid", f"entries must be powers of two, got {n_grid}")
            if len(set(n_grid)) != len(n_grid):
                raise ConfigValidationError("partition.n_grid", f"entries must be distinct, got {n_grid}")
            n_grid = sorted(n_grid)

        mc = _require_dict(data.get("mc", {}), "mc")
        _reject_unknown(mc, MC_KEYS, "mc.")
        paths = mc.get("paths", MC_SETTINGS["paths"])
        if not _is_int(paths) or paths < 1:
            raise ConfigValidationError("mc.paths", f"must be an integer >= 1, got {paths!r}")
        master_seed = mc.get("master_seed", MC_SETTINGS["master_seed"])
        if not _is_int(master_seed) or not (0 <= master_seed < 2 ** 64):
            raise ConfigValidationError("mc.master_seed", f"must be a 64-bit unsigned integer, got {master_seed!r}")
        workers = mc.get("workers", 1)
        if not _is_int(workers) or workers < 1:
            raise ConfigValidationError("mc.workers", f"must be an integer >= 1, got {workers!r}")

        outputs = _require_dict(data.get("outputs", {}), "outputs")
        _reject_unknown(outputs, OUTPUT_KEYS, "outputs.")
        for key, value in outputs.items():
            if value is not None and not isinstance(value, str):
                raise ConfigValidationError(f"outputs.{key}", "must be a string path or null")

        convention = data.get("convention", "earlier_later")
        if convention not in CONVENTIONS:
            raise ConfigValidationError("convention", f"expected one of {list(CONVENTIONS)}, got {convention!r}")

        y0 = data.get("y0", [1.0])
        if not isinstance(y0, list) or not y0 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in y0
        ):
            raise ConfigValidationError("y0", "must be a non-empty list of numbers")

        options = _require_dict(data.get("options", {}), "options")

        return cls(
            scenario=scenario,
            noise=noise,
            field_name=field_name,
            field_params=dict(field_params),
            T=float(T),
            n=n,
            n_grid=n_grid,
            paths=paths,
            master_seed=master_seed,
            workers=workers,
            outputs=dict(outputs),
            convention=convention,
            y0=[float(v) for v in y0],
            options=dict(options),
        )

    @property
    def worker_count(self) -> int:
        return get_worker_count(self.workers)

    @property
    def output_dir(self) -> Path:
        return Path(self.outputs["dir"]) if self.outputs.get("dir") else OUTPUTS_DIR

    def require_n(self) -> int:
        if self.n is None:
            raise ConfigValidationError("partition.n", f"scenario '{self.scenario}' needs a cell count")
        return self.n

    def require_n_grid(self, minimum: int = 1) -> List[int]:
        if self.n_grid is None or len(self.n_grid) < minimum:
            raise ConfigValidationError(
                "partition.n_grid", f"scenario '{self.scenario}' needs at least {minimum} grid entries"
            )
        return self.n_grid

    def require_noise(self) -> NoiseSpec:
        if self.noise is None:
            raise ConfigValidationError("noise", f"scenario '{self.scenario}' needs a noise spec")
        return self.noise

    def to_dict(self) -> Dict[str, Any]:
        partition: Dict[str, Any] = {"T": self.T}
        if self.n is not None:
            partition["n"] = self.n
        if self.n_grid is not None:
            partition["n_grid"] = list(self.n_grid)
        out = {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "scenario": self.scenario,
            "field": {"name": self.field_name, "params": self.field_params},
            "partition": partition,
            "mc": {"paths": self.paths, "master_seed": self.master_seed, "workers": self.workers},
            "outputs": self.outputs,
            "convention": self.convention,
            "y0": self.y0,
            "options": self.options,
        }
        if self.noise is not None:
            out["noise"] = self.noise.to_dict()
        return out


def load_config(path) -> ExperimentConfig:
    """
    Read and validate an experiment config file.

    Args:
        path: JSON config path

    Returns:
        ExperimentConfig: Validated config
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigValidationError("<root>", f"{path.name} is not valid JSON: {e}") from e
    config = ExperimentConfig.from_dict(data)
    logger.info(f"Loaded config {path.name} (scenario '{config.scenario}')")
    return config


def load_acceptance(scenario: str, path: Optional[Path] = None) -> Dict[str, Any]:
    """Frozen thresholds and calibrations of one scenario from the acceptance fixture file"""
    path = Path(path) if path is not None else ACCEPTANCE_FILE
    with open(path, "r", encoding="utf-8") as f:
        fixtures = json.load(f)
    if scenario not in fixtures:
        raise ConfigValidationError(f"acceptance.{scenario}", "no fixture for this scenario")
    return fixtures[scenario]
