import json
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from src.noise_models import NoiseSpec, generate
from src.rough_step import IncrementStream, Partition, RoughStepFunction, build


def step_function(xis, Xis=None, T: float = 1.0, convention: str = "earlier_later") -> RoughStepFunction:
    stream = IncrementStream(xis, Xis)
    return build(Partition.uniform(T, stream.count), stream, convention)


def line_step_function(n: int, velocity=(1.0,), T: float = 1.0) -> RoughStepFunction:
    """Straight path X(t) = t * velocity with geometric cells Xi = xi (x) xi / 2"""
    v = np.asarray(velocity, dtype=float)
    xis = np.tile(v * T / n, (n, 1))
    return step_function(xis, 0.5 * np.einsum("ka,kb->kab", xis, xis), T)


def brownian_step_function(n: int, d: int = 1, seed: int = 0, path_id: int = 0, xi2_rule: str = "zero") -> RoughStepFunction:
    spec = NoiseSpec.from_dict({"kind": "brownian", "params": {"d": d}, "xi2_rule": xi2_rule})
    partition = Partition.uniform(1.0, n)
    return build(partition, generate(spec, partition, seed, path_id))


def config_dict(scenario: str, output_dir: Optional[Path] = None, **sections: Any) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "schema_version": 1,
        "scenario": scenario,
        "noise": {"kind": "iid_walk", "params": {"distribution": "rademacher", "d": 1}, "xi2_rule": "zero"},
        "field": {"name": "linear", "params": {"sigma": 1.0}},
        "partition": {"T": 1.0, "n": 64},
        "mc": {"paths": 200, "master_seed": 0, "workers": 1},
        "y0": [1.0],
    }
    if output_dir is not None:
        data["outputs"] = {"dir": str(output_dir)}
    data.update(sections)
    return data


def write_config(path: Path, data: Dict[str, Any]) -> Path:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f)
    return path
