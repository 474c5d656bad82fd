"""
Level-2 truncated tensor algebra over R^d: increments, Chen multiplication,
group/symmetric decomposition and a Carnot-Caratheodory norm surrogate.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.exceptions import DimensionMismatchError, InvalidArgumentError


@dataclass(frozen=True)
class TensorPair:
    """A level-2 increment (a, M): vector part a in R^d, matrix part M in R^{d x d}"""
    a: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        M = np.asarray(self.M, dtype=float)
        if a.size < 1:
            raise InvalidArgumentError("TensorPair needs dimension d >= 1")
        if M.shape != (a.size, a.size):
            raise DimensionMismatchError(
                f"Matrix part has shape {M.shape}, expected {(a.size, a.size)}"
            )
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "M", M)

    @property
    def dim(self) -> int:
        return self.a.size

    @classmethod
    def zero(cls, d: int) -> "TensorPair":
        return cls(np.zeros(d), np.zeros((d, d)))

    @classmethod
    def line(cls, v) -> "TensorPair":
        """Signature of the straight segment with increment v"""
        v = np.asarray(v, dtype=float).reshape(-1)
        return cls(v, 0.5 * np.outer(v, v))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.M)))

    def max_abs_diff(self, other: "TensorPair") -> float:
        _check_same_dim(self, other)
        return float(max(np.max(np.abs(self.a - other.a)), np.max(np.abs(self.M - other.M))))


@dataclass(frozen=True)
class GroupLogElement:
    """Log-coordinates (a, A) of g in G^2(R^d); A is stored as its strict upper triangle"""
    a: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        d = a.size
        if upper.size != d * (d - 1) // 2:
            raise DimensionMismatchError(
                f"Upper triangle has {upper.size} entries, expected {d * (d - 1) // 2}"
            )
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.a.size

    @property
    def A(self) -> np.ndarray:
        d = self.dim
        A = np.zeros((d, d))
        rows, cols = np.triu_indices(d, k=1)
        A[rows, cols] = self.upper
        A[cols, rows] = -self.upper
        return A

    @classmethod
    def from_antisymmetric(cls, a, A) -> "GroupLogElement":
        A = np.asarray(A, dtype=float)
        rows, cols = np.triu_indices(A.shape[0], k=1)
        return cls(a, A[rows, cols])

    def planes(self):
        """Yield (alpha, beta, area) for every plane alpha < beta with non-zero area"""
        rows, cols = np.triu_indices(self.dim, k=1)
        for alpha, beta, area in zip(rows, cols, self.upper):
            if area != 0.0:
                yield int(alpha), int(beta), float(area)


@dataclass(frozen=True)
class SymmetricDefect:
    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 2 or z.shape[0] != z.shape[1]:
            raise DimensionMismatchError(f"Defect must be square, got shape {z.shape}")
        # exact symmetry by construction
        z = 0.5 * (z + z.T)
        object.__setattr__(self, "z", z)


def _check_same_dim(p: TensorPair, q: TensorPair) -> None:
    if p.dim != q.dim:
        raise DimensionMismatchError(f"Dimension mismatch: {p.dim} vs {q.dim}")


def chen_mul(p: TensorPair, q: TensorPair) -> TensorPair:
    """Chen product (p.a + q.a, p.M + q.M + p.a (x) q.a)"""
    _check_same_dim(p, q)
    return TensorPair(p.a + q.a, p.M + q.M + np.outer(p.a, q.a))


def chen_inverse(p: TensorPair) -> TensorPair:
    """Inverse for chen_mul: (-a, -M + a (x) a)"""
    return TensorPair(-p.a, -p.M + np.outer(p.a, p.a))


def decompose(p: TensorPair) -> Tuple[GroupLogElement, SymmetricDefect]:
    """Split p into its group part (a, A) and the symmetric defect z"""
    A = 0.5 * (p.M - p.M.T)
    z = 0.5 * (p.M + p.M.T) - 0.5 * np.outer(p.a, p.a)
    return GroupLogElement.from_antisymmetric(p.a, A), SymmetricDefect(z)


def recompose(g: GroupLogElement, z: SymmetricDefect) -> TensorPair:
    if z.z.shape != (g.dim, g.dim):
        raise DimensionMismatchError(f"Defect shape {z.z.shape} does not match d={g.dim}")
    return TensorPair(g.a, 0.5 * np.outer(g.a, g.a) + g.A + z.z)


def cc_norm_upper(g: GroupLogElement) -> float:
    """
    Upper surrogate for the Carnot-Caratheodory norm: |a| + sum_{alpha<beta} 2 sqrt|A^{alpha beta}|.

    Homogeneous of degree one under the dilation (a, A) -> (lambda a, lambda^2 A).
    The rectangular-loop realization in `lift` has length between this value
    and twice this value.
    """
    return float(np.linalg.norm(g.a) + 2.0 * np.sum(np.sqrt(np.abs(g.upper))))


def dilate(g: GroupLogElement, lam: float) -> GroupLogElement:
    return GroupLogElement(lam * g.a, lam ** 2 * g.upper)
