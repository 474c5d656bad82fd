"""
Counter-based seed lineage: every (master_seed, path_id) pair maps to its own
Philox stream, so a path's draws do not depend on which worker runs it or in
what order
"""
from dataclasses import dataclass
import hashlib
from typing import List

import numpy as np

from src.exceptions import InvalidArgumentError

MASK64 = (1 << 64) - 1


def _lineage_key(master_seed: int, path_id: int) -> int:
    payload = f"{master_seed & MASK64}:{path_id}".encode("ascii")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=16).digest(), "little")


@dataclass(frozen=True)
class SeedLineage:
    master_seed: int
    path_id: int

    def __post_init__(self):
        if self.path_id < 0:
            raise InvalidArgumentError(f"path_id must be non-negative, got {self.path_id}")

    @property
    def seed(self) -> int:
        """64-bit seed reported alongside the path in ensemble exports"""
        return _lineage_key(self.master_seed, self.path_id) & MASK64

    def generator(self) -> np.random.Generator:
        # the Philox counter is the draw index within the path
        return np.random.Generator(np.random.Philox(key=_lineage_key(self.master_seed, self.path_id)))


def derive_lineages(master_seed: int, path_ids) -> List[SeedLineage]:
    return [SeedLineage(int(master_seed), int(pid)) for pid in path_ids]
