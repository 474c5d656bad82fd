"""
Partitions, increment streams and the rough step function (X^n, XX^n) built
from increments (xi_j, Xi_j) by prefix summation
"""
from typing import Optional, Tuple, Union
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent))
from config.config import PARTITION_SETTINGS
from src.exceptions import DimensionMismatchError, InvalidArgumentError, PartitionError
from src.logger import setup_logger
from src.tensor_algebra import TensorPair

logger = setup_logger(__name__)

CONVENTIONS = ("earlier_later", "later_earlier")


def _check_convention(convention: str) -> None:
    if convention not in CONVENTIONS:
        raise InvalidArgumentError(
            f"Unknown iterated-sum convention '{convention}', expected one of {CONVENTIONS}"
        )


class Partition:
    """Strictly increasing times 0 = tau_0 < ... < tau_N = T with N * mesh <= bound"""

    def __init__(self, taus, bound: Optional[float] = None):
        taus = np.array(taus, dtype=float)
        if taus.ndim != 1 or taus.size < 2:
            raise PartitionError("Partition needs at least two time points")
        if not np.all(np.isfinite(taus)):
            raise PartitionError("Partition times must be finite")
        if taus[0] != 0.0:
            raise PartitionError(f"Partition must start at 0, got {taus[0]}")
        widths = np.diff(taus)
        if np.any(widths <= 0.0):
            raise PartitionError("Partition times must be strictly increasing")

        self.taus = taus
        self.taus.setflags(write=False)
        self.bound = PARTITION_SETTINGS["mesh_bound_factor"] * self.T if bound is None else float(bound)
        if self.count * self.mesh > self.bound * (1.0 + 1e-12):
            raise PartitionError(
                f"N * mesh = {self.count * self.mesh:.6g} exceeds bound {self.bound:.6g}"
            )

    @classmethod
    def uniform(cls, T: float, n: int, bound: Optional[float] = None) -> "Partition":
        if n < 1:
            raise PartitionError(f"Number of cells must be >= 1, got {n}")
        if not T > 0:
            raise PartitionError(f"Horizon must be positive, got {T}")
        return cls(np.linspace(0.0, T, n + 1), bound=bound)

    @property
    def T(self) -> float:
        return float(self.taus[-1])

    @property
    def count(self) -> int:
        return self.taus.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.taus)

    @property
    def mesh(self) -> float:
        return float(np.max(self.widths))

    def index_of(self, t: Union[float, np.ndarray]):
        """Index k of the largest mesh point tau_k <= t"""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0.0) or np.any(t_arr > self.T):
            raise InvalidArgumentError(f"Time outside [0, {self.T}]")
        idx = np.searchsorted(self.taus, t_arr, side="right") - 1
        idx = np.minimum(idx, self.count)
        return int(idx) if idx.ndim == 0 else idx

    def contains_mesh_of(self, other: "Partition", atol: float = 1e-12) -> bool:
        """True if every point of `other` is a point of this partition"""
        pos = np.searchsorted(self.taus, other.taus)
        pos = np.clip(pos, 0, self.count)
        left = np.clip(pos - 1, 0, self.count)
        gap = np.minimum(np.abs(self.taus[pos] - other.taus), np.abs(self.taus[left] - other.taus))
        return bool(np.all(gap <= atol))

    def mesh_positions_in(self, grid: "Partition", atol: float = 1e-12) -> np.ndarray:
        """Indices into `grid` of this partition's points"""
        pos = np.clip(np.searchsorted(grid.taus, self.taus - atol), 0, grid.count)
        return pos

    def __eq__(self, other) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return self.taus.shape == other.taus.shape and bool(np.all(self.taus == other.taus))

    def __repr__(self) -> str:
        return f"Partition(N={self.count}, T={self.T:g}, mesh={self.mesh:.4g})"


class IncrementStream:
    """Level-1 increments xis (N, d) and level-2 increments Xis (N, d, d)"""

    def __init__(self, xis, Xis=None):
        xis = np.asarray(xis, dtype=float)
        if xis.ndim == 1:
            xis = xis[:, None]
        if xis.ndim != 2:
            raise DimensionMismatchError(f"xis must have shape (N, d), got {xis.shape}")
        n, d = xis.shape
        if Xis is None:
            Xis = np.zeros((n, d, d))
        Xis = np.asarray(Xis, dtype=float)
        if Xis.ndim == 1 and d == 1:
            Xis = Xis[:, None, None]
        if Xis.shape != (n, d, d):
            raise DimensionMismatchError(f"Xis has shape {Xis.shape}, expected {(n, d, d)}")
        self.xis = xis
        self.Xis = Xis

    @property
    def count(self) -> int:
        return self.xis.shape[0]

    @property
    def dim(self) -> int:
        return self.xis.shape[1]

    def cell(self, j: int) -> TensorPair:
        return TensorPair(self.xis[j], self.Xis[j])


def prefix_sums(xis: np.ndarray, Xis: np.ndarray, convention: str = "earlier_later") -> Tuple[np.ndarray, np.ndarray]:
    """
    Prefix arrays for one or many streams.

    Args:
        xis: Increments of shape (..., N, d)
        Xis: Level-2 increments of shape (..., N, d, d)
        convention: Iterated-sum ordering, earlier (x) later by default

    Returns:
        tuple: prefixX (..., N+1, d) and prefixXX (..., N+1, d, d), both zero at index 0
    """
    _check_convention(convention)
    batch = xis.shape[:-2]
    d = xis.shape[-1]
    pX = np.zeros(batch + (xis.shape[-2] + 1, d))
    np.cumsum(xis, axis=-2, out=pX[..., 1:, :])

    if convention == "earlier_later":
        cross = np.einsum("...ka,...kb->...kab", pX[..., :-1, :], xis)
    else:
        cross = np.einsum("...ka,...kb->...kab", xis, pX[..., :-1, :])

    pXX = np.zeros(batch + (xis.shape[-2] + 1, d, d))
    np.cumsum(cross + Xis, axis=-3, out=pXX[..., 1:, :, :])
    return pX, pXX


def earlier_later_form(Xis: np.ndarray, convention: str) -> np.ndarray:
    """Level-2 cell data as earlier (x) later iterated sums, the form the vector field contraction expects"""
    _check_convention(convention)
    return np.swapaxes(Xis, -1, -2) if convention == "later_earlier" else Xis


def mesh_increments(pX: np.ndarray, pXX: np.ndarray, lo, hi, convention: str = "earlier_later"):
    """(X, XX) between mesh indices lo <= hi, broadcasting over leading axes of the prefix arrays"""
    xl, xh = pX[..., lo, :], pX[..., hi, :]
    X = xh - xl
    if convention == "earlier_later":
        corr = np.einsum("...a,...b->...ab", xl, X)
    else:
        corr = np.einsum("...a,...b->...ab", X, xl)
    XX = pXX[..., hi, :, :] - pXX[..., lo, :, :] - corr
    return X, XX


class RoughStepFunction:
    """Piecewise-constant rough path (X^n, XX^n) on a partition; immutable after build"""

    def __init__(
        self,
        partition: Partition,
        increments: IncrementStream,
        prefixX: np.ndarray,
        prefixXX: np.ndarray,
        convention: str = "earlier_later",
    ):
        self.partition = partition
        self.increments = increments
        self.prefixX = prefixX
        self.prefixXX = prefixXX
        self.convention = convention
        for arr in (self.prefixX, self.prefixXX):
            arr.setflags(write=False)

    @classmethod
    def build(
        cls,
        partition: Partition,
        increments: IncrementStream,
        convention: str = "earlier_later",
    ) -> "RoughStepFunction":
        if increments.count != partition.count:
            raise DimensionMismatchError(
                f"Stream has {increments.count} increments but partition has {partition.count} cells"
            )
        pX, pXX = prefix_sums(increments.xis, increments.Xis, convention)
        logger.debug(f"Built rough step function: N={partition.count}, d={increments.dim}")
        return cls(partition, increments, pX, pXX, convention)

    @property
    def dim(self) -> int:
        return self.increments.dim

    @property
    def T(self) -> float:
        return self.partition.T

    def increment(self, s: float, t: float) -> TensorPair:
        """Level-2 increment over [s, t], evaluated at the mesh points tau^n(s), tau^n(t)"""
        if s > t:
            raise InvalidArgumentError(f"Need s <= t, got s={s}, t={t}")
        lo = self.partition.index_of(s)
        hi = self.partition.index_of(t)
        return self.increment_between(lo, hi)

    def increment_between(self, lo: int, hi: int) -> TensorPair:
        if lo > hi:
            raise InvalidArgumentError(f"Need lo <= hi, got {lo} > {hi}")
        X, XX = mesh_increments(self.prefixX, self.prefixXX, lo, hi, self.convention)
        return TensorPair(X, XX)

    def value(self, t: float) -> TensorPair:
        k = self.partition.index_of(t)
        return TensorPair(self.prefixX[k], self.prefixXX[k])

    def terminal(self) -> TensorPair:
        return TensorPair(self.prefixX[-1], self.prefixXX[-1])


def _check_gamma(gamma: float) -> None:
    if not (0.0 < gamma <= 1.0):
        raise InvalidArgumentError(f"gamma must lie in (0, 1], got {gamma}")


def holder_quotients(
    pX: np.ndarray,
    pXX: np.ndarray,
    taus: np.ndarray,
    gamma: float,
    convention: str = "earlier_later",
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Largest level-1 and level-2 Hoelder quotients over all pairs of sample points.

    Loops over index lags and vectorizes over start points and paths.

    Args:
        pX: Prefix level-1 values, shape (P, M, d)
        pXX: Prefix level-2 values, shape (P, M, d, d)
        taus: The M times the prefixes are sampled at
        gamma: Hoelder exponent in (0, 1]
        convention: Iterated-sum ordering the prefixes were built with

    Returns:
        tuple: (max |X| / dt^gamma, max |XX|^(1/2) / dt^gamma), each of shape (P,)
    """
    _check_gamma(gamma)
    paths, m = pX.shape[0], pX.shape[1]
    best1 = np.zeros(paths)
    best2 = np.zeros(paths)
    for lag in range(1, m):
        dt = (taus[lag:] - taus[:-lag]) ** gamma
        X = pX[:, lag:] - pX[:, :-lag]
        if convention == "earlier_later":
            corr = np.einsum("pka,pkb->pkab", pX[:, :-lag], X)
        else:
            corr = np.einsum("pka,pkb->pkab", X, pX[:, :-lag])
        XX = pXX[:, lag:] - pXX[:, :-lag] - corr
        n1 = np.sqrt(np.sum(X * X, axis=-1)) / dt
        n2 = np.sqrt(np.sqrt(np.sum(XX * XX, axis=(-2, -1)))) / dt
        np.maximum(best1, n1.max(axis=1), out=best1)
        np.maximum(best2, n2.max(axis=1), out=best2)
    return best1, best2


def discrete_holder_norms(
    pX: np.ndarray,
    pXX: np.ndarray,
    taus: np.ndarray,
    gamma: float,
    convention: str = "earlier_later",
) -> np.ndarray:
    """Batched discrete Hoelder norm: level-1 plus level-2 quotient per path"""
    best1, best2 = holder_quotients(pX, pXX, taus, gamma, convention)
    return best1 + best2


def subsample_indices(count: int, stride: int) -> np.ndarray:
    """Every `stride`-th mesh index, always keeping 0 and N"""
    if stride < 1:
        raise InvalidArgumentError(f"stride must be >= 1, got {stride}")
    idx = np.arange(0, count + 1, stride)
    if idx[-1] != count:
        idx = np.append(idx, count)
    return idx


def discrete_holder_norm(rsf: RoughStepFunction, gamma: float, stride: int = 1) -> float:
    """
    Discrete gamma-Hoelder norm over all mesh pairs j < k.

    With stride > 1 only every stride-th mesh point is used and the result is a
    lower bound of the exact norm.
    """
    _check_gamma(gamma)
    idx = subsample_indices(rsf.partition.count, stride)
    if stride > 1:
        logger.warning(
            f"Hoelder norm evaluated on {idx.size} of {rsf.partition.count + 1} mesh points; "
            f"value is a lower bound"
        )
    elif idx.size > PARTITION_SETTINGS["max_exact_holder_points"]:
        logger.info(f"Exact Hoelder norm over {idx.size} mesh points; consider a stride")
    value = discrete_holder_norms(
        rsf.prefixX[idx][None],
        rsf.prefixXX[idx][None],
        rsf.partition.taus[idx],
        gamma,
        rsf.convention,
    )
    return float(value[0])


def build(partition: Partition, increments: IncrementStream, convention: str = "earlier_later") -> RoughStepFunction:
    return RoughStepFunction.build(partition, increments, convention)


def increment(rsf: RoughStepFunction, s: float, t: float) -> TensorPair:
    return rsf.increment(s, t)
