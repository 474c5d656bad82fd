"""
Statistical checks on ensembles: discrete Kolmogorov moment scaling,
tightness probes of the discrete Hoelder norm, two-sample KS distances at
fixed-time marginals, log-log rate fits and a Kendall trend test
"""
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union
import sys
from pathlib import Path

import numpy as np
from scipy import stats

sys.path.insert(0, str(Path(__file__).parent.parent))
from config.config import DIAGNOSTICS_SETTINGS, MC_SETTINGS
from src.exceptions import InsufficientEnsembleError, InvalidArgumentError
from src.logger import setup_logger
from src.noise_models import NoiseSpec, generate_ensemble
from src.rough_step import Partition, RoughStepFunction, discrete_holder_norms, mesh_increments, prefix_sums

logger = setup_logger(__name__)

Sampler = Callable[[Partition, np.ndarray], Tuple[np.ndarray, np.ndarray]]

# Level-2 entries within this many ulps of the prefix scale are rounding residue of the
# prefix difference and are taken as exact zeros.
_CANCELLATION_ULPS = 64.0


@dataclass
class MomentScalingReport:
    q: float
    gamma_hat_level1: float
    gamma_hat_level2: float
    intercept_level1: float
    intercept_level2: float
    r2_level1: float
    r2_level2: float
    pairs_used: int
    exact: bool

    @property
    def r2(self) -> float:
        return min(self.r2_level1, self.r2_level2)

    def to_dict(self) -> Dict[str, float]:
        return {
            "q": self.q,
            "gamma_hat_level1": self.gamma_hat_level1,
            "gamma_hat_level2": self.gamma_hat_level2,
            "r2": self.r2,
            "pairs_used": self.pairs_used,
            "exact_pairs": self.exact,
        }


def _all_pairs(count: int) -> Tuple[np.ndarray, np.ndarray]:
    lo, hi = np.triu_indices(count + 1, k=1)
    return lo, hi


def _stratified_pairs(count: int, budget: int, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Mesh pairs sampled evenly across decades of the index lag"""
    rng = np.random.default_rng(seed)
    edges = [1]
    while edges[-1] <= count:
        edges.append(edges[-1] * 10)
    strata = [(a, min(b, count + 1)) for a, b in zip(edges[:-1], edges[1:]) if a <= count]
    per = max(1, budget // len(strata))
    lo_all, hi_all = [], []
    for a, b in strata:
        lags = np.floor(np.exp(rng.uniform(np.log(a), np.log(b), size=per))).astype(np.int64)
        lags = np.clip(lags, a, b - 1)
        starts = rng.integers(0, count - lags + 1)
        lo_all.append(starts)
        hi_all.append(starts + lags)
    return np.concatenate(lo_all), np.concatenate(hi_all)


def _prefix_batch(ensemble) -> Tuple[np.ndarray, np.ndarray, np.ndarray, Optional[str]]:
    if isinstance(ensemble, tuple):
        pX, pXX, taus = ensemble
        return np.asarray(pX), np.asarray(pXX), np.asarray(taus), None
    ensemble = list(ensemble)
    if not ensemble:
        raise InsufficientEnsembleError("Empty ensemble")
    pX = np.stack([r.prefixX for r in ensemble])
    pXX = np.stack([r.prefixXX for r in ensemble])
    conventions = {r.convention for r in ensemble}
    if len(conventions) > 1:
        raise InvalidArgumentError(f"Ensemble mixes conventions {sorted(conventions)}")
    return pX, pXX, ensemble[0].partition.taus, conventions.pop()


def _drop_cancellation(XX, xl, xh, XXl, XXh) -> np.ndarray:
    span = np.abs(xl) + np.abs(xh)
    scale = np.abs(XXl) + np.abs(XXh) + np.einsum("...a,...b->...ab", span, span)
    return np.where(np.abs(XX) <= _CANCELLATION_ULPS * np.finfo(float).eps * scale, 0.0, XX)


def _fit(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    keep = np.isfinite(y) & (y > 0)
    if keep.sum() < 3:
        return float("nan"), float("nan"), 0.0
    res = stats.linregress(np.log(x[keep]), np.log(y[keep]))
    return float(res.slope), float(res.intercept), float(res.rvalue ** 2)


def kolmogorov_exponent(
    ensemble: Union[Sequence[RoughStepFunction], Tuple[np.ndarray, np.ndarray, np.ndarray]],
    q: float,
    pair_budget: Optional[int] = None,
    moment_order: float = np.inf,
    chunk: int = 4096,
    convention: Optional[str] = None,
) -> MomentScalingReport:
    """
    Fit the moment scaling exponents of an ensemble of rough step functions.

    Args:
        ensemble: Rough step functions on a common partition, or (prefixX, prefixXX, taus)
        q: Moment order
        pair_budget: Number of mesh pairs; all pairs are used for N <= 1024 unless a
            smaller budget is given, stratified samples by lag decade otherwise
        moment_order: Declared finite moment order of the noise; q may not exceed it
        convention: Ordering the prefix arrays were built with; taken from the
            ensemble when it holds rough step functions, earlier (x) later otherwise

    Returns:
        MomentScalingReport: Slopes of (E|X|^q)^(1/q) and (E|XX|^(q/2))^(1/q) against the pair width
    """
    if q <= 0:
        raise InvalidArgumentError(f"Moment order q must be positive, got {q}")
    if q > moment_order:
        raise InvalidArgumentError(f"q = {q} exceeds the declared moment order {moment_order}")
    pX, pXX, taus, stored = _prefix_batch(ensemble)
    convention = convention or stored or "earlier_later"
    paths, count = pX.shape[0], pX.shape[1] - 1
    if paths < DIAGNOSTICS_SETTINGS["min_paths"]:
        raise InsufficientEnsembleError(
            f"Need at least {DIAGNOSTICS_SETTINGS['min_paths']} paths, got {paths}"
        )

    total_pairs = count * (count + 1) // 2
    if pair_budget is None:
        exact = count <= DIAGNOSTICS_SETTINGS["exact_pairs_limit"]
        budget = DIAGNOSTICS_SETTINGS["default_pair_budget"]
    else:
        exact = total_pairs <= pair_budget
        budget = pair_budget
    lo, hi = _all_pairs(count) if exact else _stratified_pairs(count, budget)

    m1 = np.empty(lo.size)
    m2 = np.empty(lo.size)
    for start in range(0, lo.size, chunk):
        sl = slice(start, start + chunk)
        l, h = lo[sl], hi[sl]
        X, XX = mesh_increments(pX, pXX, l, h, convention)
        XX = _drop_cancellation(XX, pX[:, l], pX[:, h], pXX[:, l], pXX[:, h])
        a1 = np.sqrt(np.sum(X * X, axis=-1))
        a2 = np.sqrt(np.sum(XX * XX, axis=(-2, -1)))
        m1[sl] = np.mean(a1 ** q, axis=0) ** (1.0 / q)
        m2[sl] = np.mean(a2 ** (q / 2.0), axis=0) ** (1.0 / q)

    widths = taus[hi] - taus[lo]
    s1, c1, r1 = _fit(widths, m1)
    s2, c2, r2 = _fit(widths, m2)
    report = MomentScalingReport(q, s1, s2, c1, c2, r1, r2, int(lo.size), exact)
    logger.debug(f"Moment scaling: {report.to_dict()}")
    return report


@dataclass
class TightnessCurve:
    n: int
    M: np.ndarray
    p_hat: np.ndarray
    paths: int
    median: float = float("nan")

    def rows(self) -> List[Tuple[float, int, float]]:
        return [(float(m), self.n, float(p)) for m, p in zip(self.M, self.p_hat)]


def exceedance_curve(norms: np.ndarray, M_grid: Sequence[float]) -> np.ndarray:
    """P_hat(norm > M) for ascending M"""
    M = np.sort(np.asarray(M_grid, dtype=float))
    return np.mean(np.asarray(norms)[:, None] > M[None, :], axis=0)


def tightness_probe(
    noise: Union[NoiseSpec, Sampler],
    n_grid: Sequence[int],
    gamma: float,
    M_grid: Sequence[float],
    paths: int,
    master_seed: int = 0,
    T: float = 1.0,
    convention: str = "earlier_later",
) -> List[TightnessCurve]:
    """
    Empirical exceedance probabilities of the discrete Hoelder norm for each n.

    Args:
        noise: Noise spec, or a sampler (partition, path_ids) -> (xis, Xis)
        n_grid: Cell counts
        gamma: Hoelder exponent
        M_grid: Thresholds
        paths: Paths per n
    """
    M = np.sort(np.asarray(M_grid, dtype=float))
    chunk = MC_SETTINGS["chunk_size"]
    curves = []
    for n in n_grid:
        partition = Partition.uniform(T, int(n))
        norms = []
        for start in range(0, paths, chunk):
            ids = np.arange(start, min(start + chunk, paths))
            if isinstance(noise, NoiseSpec):
                xis, Xis = generate_ensemble(noise, partition, master_seed, ids)
            else:
                xis, Xis = noise(partition, ids)
            pX, pXX = prefix_sums(xis, Xis, convention)
            norms.append(discrete_holder_norms(pX, pXX, partition.taus, gamma, convention))
        norms = np.concatenate(norms)
        curve = TightnessCurve(int(n), M, exceedance_curve(norms, M), paths, float(np.median(norms)))
        logger.info(f"Tightness n={n}: p_hat at M={M[0]:g} is {curve.p_hat[0]:.3f}")
        curves.append(curve)
    return curves


def envelope(curves: Sequence[TightnessCurve]) -> np.ndarray:
    """Max over n of the exceedance curves (common M grid)"""
    return np.max(np.stack([c.p_hat for c in curves]), axis=0)


def _as_sample(samples) -> np.ndarray:
    arr = np.asarray(samples, dtype=float)
    if arr.ndim > 1:
        if arr.ndim == 2 and 1 in arr.shape:
            arr = arr.reshape(-1)
        else:
            raise InvalidArgumentError(f"KS distance needs one-dimensional samples, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidArgumentError("KS distance needs non-empty samples")
    return arr


def ks_distance(samples_a, samples_b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic"""
    a = _as_sample(samples_a)
    b = _as_sample(samples_b)
    return float(stats.ks_2samp(a, b).statistic)


def ks_threshold(m: int, n: int, alpha: float = DIAGNOSTICS_SETTINGS["ks_alpha"]) -> float:
    """Asymptotic critical value c(alpha) sqrt((m + n) / (m n))"""
    table = DIAGNOSTICS_SETTINGS["ks_coefficients"]
    if alpha not in table:
        raise InvalidArgumentError(f"No KS coefficient for alpha={alpha}, known: {sorted(table)}")
    return table[alpha] * np.sqrt((m + n) / (m * n))


def marginal_ks_report(
    samples_a: Dict[str, np.ndarray],
    samples_b: Dict[str, np.ndarray],
    alpha: float = DIAGNOSTICS_SETTINGS["ks_alpha"],
) -> Dict[str, Dict[str, float]]:
    """KS statistic against its threshold for every shared key (marginals, running max); NaNs dropped"""
    report = {}
    for key in sorted(set(samples_a) & set(samples_b)):
        a = _as_sample(samples_a[key])
        b = _as_sample(samples_b[key])
        a, b = a[np.isfinite(a)], b[np.isfinite(b)]
        statistic = ks_distance(a, b)
        threshold = ks_threshold(a.size, b.size, alpha)
        report[key] = {
            "ks": statistic,
            "threshold": float(threshold),
            "m": int(a.size),
            "n": int(b.size),
            "pass": bool(statistic <= threshold),
        }
    return report


@dataclass
class RateFit:
    slope: float
    intercept: float
    r2: float

    def to_dict(self) -> Dict[str, float]:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2}


def rate_fit(deltas, errors) -> RateFit:
    """Least-squares line through (log delta, log error)"""
    x = np.asarray(deltas, dtype=float).reshape(-1)
    y = np.asarray(errors, dtype=float).reshape(-1)
    if x.size != y.size:
        raise InvalidArgumentError(f"Got {x.size} deltas and {y.size} errors")
    if x.size < 3:
        raise InvalidArgumentError(f"rate_fit needs at least 3 points, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise InvalidArgumentError("rate_fit needs positive deltas and errors")
    res = stats.linregress(np.log(x), np.log(y))
    return RateFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2))


@dataclass
class TrendResult:
    tau: float
    p_value: float

    @property
    def growing(self) -> bool:
        return self.p_value <= 0.05


def trend_test(xs, ys) -> TrendResult:
    """One-sided Kendall tau test of ys increasing with xs"""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 3 or xs.size != ys.size:
        raise InvalidArgumentError("trend_test needs at least 3 paired values")
    tau, p_value = stats.kendalltau(xs, ys, alternative="greater")
    return TrendResult(float(tau), float(p_value))
