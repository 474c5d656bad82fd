"""
Rough path recursion
    Y_{j+1} = Y_j + V(Y_j) xi_j + VV(Y_j) : Xi_j [+ W(Y_j) dt_j] [+ r_j]
on single paths and on batches of paths
"""
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent))
from config.config import MC_SETTINGS
from src.exceptions import (
    DimensionMismatchError,
    InvalidArgumentError,
    IterateExplosionError,
    RemainderBoundError,
)
from src.logger import setup_logger
from src.rough_step import IncrementStream, Partition, RoughStepFunction, earlier_later_form
from src.vector_fields import DerivedField, VectorFieldBundle

logger = setup_logger(__name__)


@dataclass
class Trajectory:
    """Solution values at the points of `partition`, piecewise constant in between"""
    partition: Partition
    values: np.ndarray
    meta: Dict[str, Any] = field(default_factory=dict)

    def value_at(self, t: float) -> np.ndarray:
        return self.values[self.partition.index_of(t)]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]

    @property
    def times(self) -> np.ndarray:
        return self.partition.taus


@dataclass(frozen=True)
class RemainderRule:
    """
    Injected remainder r_j = callback(j, Y_j, dt_j), declared to satisfy
    |r_j| <= c * mesh^lam with lam > 1
    """
    callback: Callable[[int, np.ndarray, float], np.ndarray]
    c: float
    lam: float

    def __post_init__(self):
        if not self.lam > 1.0:
            raise InvalidArgumentError(f"Remainder exponent must exceed 1, got {self.lam}")
        if self.c < 0.0:
            raise InvalidArgumentError(f"Remainder constant must be non-negative, got {self.c}")

    def bound(self, mesh: float) -> float:
        return self.c * mesh ** self.lam


def davie_step(
    bundle: VectorFieldBundle,
    y: np.ndarray,
    xi: np.ndarray,
    Xi: np.ndarray,
    dt: float,
) -> np.ndarray:
    """
    One update y + V(y) xi + VV(y) : Xi (+ W(y) dt), batched over leading axes.

    Xi is taken as earlier (x) later iterated sums; later_earlier data goes
    through rough_step.earlier_later_form first.
    """
    V = bundle.V(y)
    VV = DerivedField.from_values(V, bundle.jacV(y))
    y_next = y + np.einsum("...kb,...b->...k", V, xi) + np.einsum("...kab,...ab->...k", VV, Xi)
    if bundle.W is not None:
        y_next = y_next + bundle.W(y) * dt
    return y_next


def check_initial_condition(bundle: VectorFieldBundle, y0) -> np.ndarray:
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if y0.shape != (bundle.e,):
        raise DimensionMismatchError(f"y0 has shape {y0.shape}, expected {(bundle.e,)}")
    return y0


def run(
    bundle: VectorFieldBundle,
    rsf: RoughStepFunction,
    y0,
    remainder: Optional[RemainderRule] = None,
    meta: Optional[Dict[str, Any]] = None,
) -> Trajectory:
    """
    Run the recursion along one rough step function.

    Args:
        bundle: Vector fields
        rsf: Driving rough step function
        y0: Initial condition in R^e
        remainder: Optional injected remainder with a declared bound
        meta: Extra metadata (seed lineage, scheme tag) stored on the trajectory

    Returns:
        Trajectory: Values at every mesh point
    """
    y0 = check_initial_condition(bundle, y0)
    if rsf.dim != bundle.d:
        raise DimensionMismatchError(f"Driver has d={rsf.dim}, fields expect d={bundle.d}")

    widths = rsf.partition.widths
    xis = rsf.increments.xis
    Xis = earlier_later_form(rsf.increments.Xis, rsf.convention)
    bound = remainder.bound(rsf.partition.mesh) if remainder is not None else None

    values = np.empty((rsf.partition.count + 1, bundle.e))
    values[0] = y0
    y = y0
    warned = not bool(bundle.in_trust_region(y0))
    if warned:
        logger.warning(f"Initial condition lies outside the trust region of '{bundle.name}'")

    for j in range(rsf.partition.count):
        y_next = davie_step(bundle, y, xis[j], Xis[j], widths[j])
        if remainder is not None:
            r = np.asarray(remainder.callback(j, y, widths[j]), dtype=float)
            size = float(np.linalg.norm(r))
            if size > bound * (1.0 + 1e-12):
                logger.error(f"Remainder bound violated at step {j}")
                raise RemainderBoundError(j, bound, size)
            y_next = y_next + r
        if not np.all(np.isfinite(y_next)):
            logger.error(f"Iterate exploded at step {j}")
            raise IterateExplosionError(j)
        if not warned and not bundle.in_trust_region(y_next):
            logger.warning(f"Iterate left the trust region of '{bundle.name}' at step {j}")
            warned = True
        values[j + 1] = y_next
        y = y_next

    info = {"scheme": "recursion"}
    info.update(meta or {})
    return Trajectory(rsf.partition, values, info)


def theta_stream(xis: np.ndarray, theta: float) -> IncrementStream:
    """Level-2 increments Xi_k = (1 - theta) xi_k (x) xi_k"""
    if not (0.0 <= theta <= 1.0):
        raise InvalidArgumentError(f"theta must lie in [0, 1], got {theta}")
    xis = np.asarray(xis, dtype=float)
    if xis.ndim == 1:
        xis = xis[:, None]
    return IncrementStream(xis, (1.0 - theta) * np.einsum("ka,kb->kab", xis, xis))


def run_theta_scheme(
    bundle: VectorFieldBundle,
    xis,
    theta: float,
    y0,
    partition: Optional[Partition] = None,
) -> Trajectory:
    """
    Explicit Taylor form of the theta-scheme: theta = 1 is Euler, theta = 1/2 the
    midpoint rule. The partition defaults to the uniform one on [0, 1].
    """
    stream = theta_stream(xis, theta)
    if partition is None:
        partition = Partition.uniform(1.0, stream.count)
    rsf = RoughStepFunction.build(partition, stream)
    return run(bundle, rsf, y0, meta={"scheme": f"theta({theta:g})"})


@dataclass
class EnsembleResult:
    """Per-path outputs of a batched run; aborted paths hold NaN"""
    terminal: np.ndarray
    marginals: Dict[float, np.ndarray]
    running_max: np.ndarray
    aborted: np.ndarray

    @property
    def paths(self) -> int:
        return self.terminal.shape[0]

    @property
    def abort_fraction(self) -> float:
        return float(np.mean(self.aborted)) if self.paths else 0.0

    @staticmethod
    def concatenate(parts: Sequence["EnsembleResult"]) -> "EnsembleResult":
        keys = parts[0].marginals.keys()
        return EnsembleResult(
            terminal=np.concatenate([p.terminal for p in parts]),
            marginals={k: np.concatenate([p.marginals[k] for p in parts]) for k in keys},
            running_max=np.concatenate([p.running_max for p in parts]),
            aborted=np.concatenate([p.aborted for p in parts]),
        )


def run_ensemble(
    bundle: VectorFieldBundle,
    xis: np.ndarray,
    Xis: np.ndarray,
    partition: Partition,
    y0,
    fractions: Sequence[float] = MC_SETTINGS["marginal_fractions"],
    convention: str = "earlier_later",
) -> EnsembleResult:
    """
    Run the recursion for a batch of streams at once.

    Args:
        xis: Increments, shape (P, N, d)
        Xis: Level-2 increments, shape (P, N, d, d)
        partition: Common partition with N cells
        y0: Common initial condition
        fractions: Fractions of T at which marginals are recorded
        convention: Iterated-sum ordering of Xis

    Returns:
        EnsembleResult: Terminal values, marginals, running max of the first component, abort mask
    """
    y0 = check_initial_condition(bundle, y0)
    paths, n, d = xis.shape
    if n != partition.count or d != bundle.d:
        raise DimensionMismatchError(
            f"Streams of shape {xis.shape} do not fit N={partition.count}, d={bundle.d}"
        )
    Xis = earlier_later_form(Xis, convention)

    record_at = {f: partition.index_of(f * partition.T) for f in fractions}
    marginals = {f: np.empty((paths, bundle.e)) for f in fractions}
    widths = partition.widths

    y = np.broadcast_to(y0, (paths, bundle.e)).copy()
    running_max = y[:, 0].copy()
    aborted = np.zeros(paths, dtype=bool)
    for f, k in record_at.items():
        if k == 0:
            marginals[f][:] = y

    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(n):
            y = davie_step(bundle, y, xis[:, j], Xis[:, j], widths[j])
            bad = ~np.all(np.isfinite(y), axis=-1)
            if bad.any():
                newly = bad & ~aborted
                if newly.any():
                    logger.debug(f"{int(newly.sum())} paths exploded at step {j}")
                aborted |= bad
                y[bad] = np.nan
            np.fmax(running_max, y[:, 0], out=running_max)
            for f, k in record_at.items():
                if k == j + 1:
                    marginals[f][:] = y

    running_max[aborted] = np.nan
    for f in marginals:
        marginals[f][aborted] = np.nan
    return EnsembleResult(y, marginals, running_max, aborted)
