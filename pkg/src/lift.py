"""
Lift of a rough step function to a continuous rough path: per cell a
constant-speed polyline (a line plus one square loop per active plane)
realizing the group part, with the symmetric defect interpolated linearly
"""
from dataclasses import dataclass
from typing import List, Tuple
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent))
from src.exceptions import InvalidArgumentError
from src.logger import setup_logger
from src.rough_step import RoughStepFunction, holder_quotients, prefix_sums
from src.tensor_algebra import TensorPair, decompose

logger = setup_logger(__name__)


@dataclass(frozen=True)
class Piece:
    """Smooth piece of the lifted path: constant velocity and constant defect slope"""
    t_start: float
    t_end: float
    velocity: np.ndarray
    z_slope: np.ndarray


class CellRealization:
    """Geodesic surrogate for one cell [t0, t1]"""

    def __init__(self, index: int, t0: float, t1: float, xi: np.ndarray, Xi: np.ndarray):
        self.index = index
        self.t0 = t0
        self.t1 = t1
        self.xi = xi
        self.Xi = Xi

        g, defect = decompose(TensorPair(xi, Xi))
        self.z = defect.z
        self.segments = self._segments(g)

        d = xi.size
        lengths = np.linalg.norm(self.segments, axis=1) if len(self.segments) else np.zeros(0)
        self.arc = np.concatenate(([0.0], np.cumsum(lengths)))
        # Chen-composed prefix signatures at segment joints
        seg = self.segments.reshape(-1, d)
        self.segX, self.segXX = prefix_sums(seg, 0.5 * np.einsum("ka,kb->kab", seg, seg))

    @staticmethod
    def _segments(g) -> np.ndarray:
        d = g.dim
        segments = []
        if np.any(g.a != 0.0):
            segments.append(g.a.copy())
        for alpha, beta, area in g.planes():
            side = np.sqrt(abs(area))
            first, second = (alpha, beta) if area > 0 else (beta, alpha)
            for axis, sign in ((first, 1.0), (second, 1.0), (first, -1.0), (second, -1.0)):
                v = np.zeros(d)
                v[axis] = sign * side
                segments.append(v)
        return np.array(segments).reshape(len(segments), d)

    @property
    def duration(self) -> float:
        return self.t1 - self.t0

    @property
    def length(self) -> float:
        return float(self.arc[-1])

    def head(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """Signature of the realization over [t0, t]"""
        frac = (t - self.t0) / self.duration
        zpart = frac * self.z
        if self.length == 0.0:
            return np.zeros(self.xi.size), zpart
        s = frac * self.length
        i = int(np.clip(np.searchsorted(self.arc, s, side="right") - 1, 0, len(self.segments) - 1))
        seg_len = self.arc[i + 1] - self.arc[i]
        v = ((s - self.arc[i]) / seg_len) * self.segments[i]
        X = self.segX[i] + v
        XX = self.segXX[i] + 0.5 * np.outer(v, v) + np.outer(self.segX[i], v) + zpart
        return X, XX

    def pieces(self) -> List[Piece]:
        z_slope = self.z / self.duration
        if self.length == 0.0:
            return [Piece(self.t0, self.t1, np.zeros(self.xi.size), z_slope)]
        out = []
        times = np.minimum(self.t0 + self.duration * self.arc / self.length, self.t1)
        times[-1] = self.t1
        for i, v in enumerate(self.segments):
            if times[i + 1] <= times[i]:
                continue
            out.append(Piece(float(times[i]), float(times[i + 1]), v / (times[i + 1] - times[i]), z_slope))
        return out


class LiftedRoughPath:
    """Continuous rough path agreeing with its base step function at every mesh point"""

    def __init__(self, base: RoughStepFunction, cells: List[CellRealization], transpose: bool):
        self.base = base
        self.cells = cells
        # later_earlier streams are lifted through their transpose
        self._transpose = transpose
        self._pX = base.prefixX
        self._pXX = np.swapaxes(base.prefixXX, -1, -2) if transpose else base.prefixXX

    @property
    def partition(self):
        return self.base.partition

    @property
    def T(self) -> float:
        return self.base.T

    def point(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """Signature over [0, t] in the earlier (x) later algebra"""
        part = self.partition
        j = part.index_of(t)
        if j == part.count or t == part.taus[j]:
            return self._pX[j], self._pXX[j]
        hX, hXX = self.cells[j].head(t)
        x0 = self._pX[j]
        return x0 + hX, self._pXX[j] + hXX + np.outer(x0, hX)

    def eval(self, s: float, t: float) -> TensorPair:
        if s > t:
            raise InvalidArgumentError(f"Need s <= t, got s={s}, t={t}")
        x0, m0 = self.point(s)
        x1, m1 = self.point(t)
        X = x1 - x0
        XX = m1 - m0 - np.outer(x0, X)
        if self._transpose:
            XX = XX.T
        return TensorPair(X, XX)

    def cell_subincrements(self, j: int, m: int) -> List[TensorPair]:
        """Increments over the m equal sub-intervals of cell j; m = 1 returns the stored cell data"""
        if m < 1:
            raise InvalidArgumentError(f"Need m >= 1 sub-intervals, got {m}")
        cell = self.cells[j]
        if m == 1:
            return [TensorPair(self.base.increments.xis[j], self.base.increments.Xis[j])]
        ts = np.linspace(cell.t0, cell.t1, m + 1)
        return [self.eval(ts[i], ts[i + 1]) for i in range(m)]

    def pieces(self) -> List[Piece]:
        out = []
        for cell in self.cells:
            for piece in cell.pieces():
                if self._transpose:
                    piece = Piece(piece.t_start, piece.t_end, piece.velocity, piece.z_slope.T)
                out.append(piece)
        return out

    def realization_length(self) -> float:
        return float(sum(cell.length for cell in self.cells))

    def polyline_samples(self, per_cell: int = 8) -> Tuple[np.ndarray, np.ndarray]:
        """Level-1 path sampled at `per_cell` equally spaced times per cell plus T"""
        if per_cell < 1:
            raise InvalidArgumentError(f"Need at least one sample per cell, got {per_cell}")
        taus = self.partition.taus
        times = np.concatenate(
            [np.linspace(taus[j], taus[j + 1], per_cell + 1)[:-1] for j in range(self.partition.count)]
            + [taus[-1:]]
        )
        values = np.array([self.point(t)[0] for t in times])
        return times, values


def lift(rsf: RoughStepFunction) -> LiftedRoughPath:
    transpose = rsf.convention == "later_earlier"
    taus = rsf.partition.taus
    xis, Xis = rsf.increments.xis, rsf.increments.Xis
    if transpose:
        Xis = np.swapaxes(Xis, -1, -2)
    cells = [
        CellRealization(j, float(taus[j]), float(taus[j + 1]), xis[j], Xis[j])
        for j in range(rsf.partition.count)
    ]
    logger.debug(f"Lifted {len(cells)} cells")
    return LiftedRoughPath(rsf, cells, transpose)


def eval(lrp: LiftedRoughPath, s: float, t: float) -> TensorPair:  # noqa: A001
    return lrp.eval(s, t)


def _sample_times(lrp: LiftedRoughPath, levels: int) -> np.ndarray:
    dyadic = np.linspace(0.0, lrp.T, 2 ** levels + 1)
    return np.union1d(dyadic, lrp.partition.taus)


def holder_parts(lrp: LiftedRoughPath, gamma: float, levels: int) -> Tuple[float, float]:
    """Level-1 and level-2 Hoelder quotients over the dyadic grid at `levels` joined with the mesh"""
    if levels < 1:
        raise InvalidArgumentError(f"levels must be >= 1, got {levels}")
    times = _sample_times(lrp, levels)
    points = [lrp.point(t) for t in times]
    pX = np.array([p[0] for p in points])[None]
    pXX = np.array([p[1] for p in points])[None]
    q1, q2 = holder_quotients(pX, pXX, times, gamma)
    return float(q1[0]), float(q2[0])


def holder_norm_estimate(lrp: LiftedRoughPath, gamma: float, levels: int) -> float:
    """
    Lower estimate of the gamma-Hoelder norm of the lifted path.

    Sampled on the dyadic grid at `levels` together with the mesh points, so the
    value is non-decreasing in `levels` and dominates the discrete norm of the base.
    """
    q1, q2 = holder_parts(lrp, gamma, levels)
    return q1 + q2
