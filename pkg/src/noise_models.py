"""
Noise models generating increment streams (xi_j, Xi_j): i.i.d. walks, Brownian
increments, fractional Brownian increments and stationary Markov-chain noise,
together with their analytic diffusion limits (D, nu) and Monte Carlo
estimators of nu
"""
from dataclasses import dataclass, field
import re
import functools
from typing import Any, Dict, Optional, Sequence, Tuple, Union
import sys
from pathlib import Path

import numpy as np
from scipy.linalg import cholesky

sys.path.insert(0, str(Path(__file__).parent.parent))
from config.config import NOISE_SETTINGS, TOLERANCES
from src.exceptions import (
    InsufficientEnsembleError,
    InvalidArgumentError,
    SeriesConvergenceError,
)
from src.logger import setup_logger
from src.rough_step import IncrementStream, Partition, RoughStepFunction, prefix_sums
from src.seeding import SeedLineage

logger = setup_logger(__name__)

FBM_CAVEAT = "non-martingale limit: interpret as E[XX] minus the symmetric baseline"


@dataclass(frozen=True)
class Xi2Rule:
    """Level-2 rule: zero, theta(theta) with Xi = (1 - theta) xi (x) xi, or refined(m)"""
    kind: str = "zero"
    value: Optional[float] = None

    @classmethod
    def parse(cls, rule: Union[str, Dict[str, Any], "Xi2Rule", None]) -> "Xi2Rule":
        if rule is None:
            return cls()
        if isinstance(rule, Xi2Rule):
            return rule
        if isinstance(rule, dict):
            if len(rule) != 1:
                raise InvalidArgumentError(f"xi2_rule must have a single key, got {sorted(rule)}")
            kind, value = next(iter(rule.items()))
            return cls(kind, value).validated()
        match = re.fullmatch(r"\s*(\w+)\s*(?:\(\s*([^)]*)\s*\))?\s*", str(rule))
        if not match:
            raise InvalidArgumentError(f"Cannot parse xi2_rule '{rule}'")
        kind, value = match.group(1), match.group(2)
        return cls(kind, float(value) if value else None).validated()

    def validated(self) -> "Xi2Rule":
        if self.kind not in NOISE_SETTINGS["xi2_rules"]:
            raise InvalidArgumentError(
                f"Unknown xi2_rule '{self.kind}', expected one of {NOISE_SETTINGS['xi2_rules']}"
            )
        if self.kind == "zero":
            return Xi2Rule("zero", None)
        if self.value is None:
            raise InvalidArgumentError(f"xi2_rule '{self.kind}' needs a parameter")
        if self.kind == "theta" and not (0.0 <= float(self.value) <= 1.0):
            raise InvalidArgumentError(f"theta must lie in [0, 1], got {self.value}")
        if self.kind == "refined":
            m = float(self.value)
            if m < 1 or m != int(m):
                raise InvalidArgumentError(f"refined(m) needs an integer m >= 1, got {self.value}")
            return Xi2Rule("refined", int(m))
        return Xi2Rule(self.kind, float(self.value))

    @property
    def theta(self) -> float:
        """Effective theta: the zero rule is theta = 1"""
        return float(self.value) if self.kind == "theta" else 1.0

    def to_obj(self):
        return "zero" if self.kind == "zero" else {self.kind: self.value}


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)
    xi2_rule: Xi2Rule = field(default_factory=Xi2Rule)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NoiseSpec":
        unknown = set(data) - {"kind", "params", "xi2_rule"}
        if unknown:
            raise InvalidArgumentError(f"Unknown noise keys: {sorted(unknown)}")
        if "kind" not in data:
            raise InvalidArgumentError("Noise spec needs a 'kind'")
        spec = cls(data["kind"], dict(data.get("params", {})), Xi2Rule.parse(data.get("xi2_rule")))
        spec.validate()
        return spec

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "params": self.params, "xi2_rule": self.xi2_rule.to_obj()}

    @property
    def dim(self) -> int:
        if self.kind == "markov_chain":
            return np.atleast_2d(np.asarray(self.params.get("v", [[0.0]]), dtype=float).T).T.shape[1]
        if self.kind == "iid_walk" and "mix" in self.params:
            return np.asarray(self.params["mix"]).shape[0]
        return int(self.params.get("d", 1))

    @property
    def moment_order(self) -> float:
        if self.kind == "iid_walk":
            return float(self.params.get("moment_order", NOISE_SETTINGS["default_moment_order"]))
        return np.inf

    def validate(self) -> None:
        if self.kind not in NOISE_SETTINGS["kinds"]:
            raise InvalidArgumentError(
                f"Unknown noise kind '{self.kind}', expected one of {NOISE_SETTINGS['kinds']}"
            )
        if self.xi2_rule.kind == "refined" and self.kind != "brownian":
            raise InvalidArgumentError("refined(m) level-2 data is only available for brownian noise")
        if self.dim < 1:
            raise InvalidArgumentError(f"Noise dimension must be >= 1, got {self.dim}")

        if self.kind == "iid_walk":
            dist = self.params.get("distribution", "rademacher")
            if dist not in NOISE_SETTINGS["distributions"]:
                raise InvalidArgumentError(
                    f"Unknown distribution '{dist}', expected one of {NOISE_SETTINGS['distributions']}"
                )
            if self.moment_order <= NOISE_SETTINGS["min_moment_order"]:
                raise InvalidArgumentError(
                    f"iid_walk needs a finite moment of order q > 6, declared q = {self.moment_order}"
                )
            if float(self.params.get("scale", 1.0)) <= 0.0:
                raise InvalidArgumentError("scale must be positive")
            if "mix" in self.params:
                mix = np.asarray(self.params["mix"], dtype=float)
                if mix.ndim != 2:
                    raise InvalidArgumentError(f"mix must be a matrix, got shape {mix.shape}")
        elif self.kind == "brownian":
            if float(self.params.get("sigma", 1.0)) <= 0.0:
                raise InvalidArgumentError("sigma must be positive")
        elif self.kind == "fbm":
            lo, hi = NOISE_SETTINGS["fbm_hurst_range"]
            hurst = float(self.params.get("hurst", 0.5))
            if not (lo < hurst < hi):
                raise InvalidArgumentError(f"Hurst index must lie in ({lo:.4g}, {hi:g}), got {hurst}")
        elif self.kind == "markov_chain":
            markov_chain_parts(self.params)


def markov_chain_parts(params: Dict[str, Any]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Validated (P, v, mu) for a finite stationary chain.

    Args:
        params: Dict with transition matrix "P" (k x k), observable "v" (k x d) and
            optional stationary law "mu" (computed from P when absent)

    Returns:
        tuple: P, v of shape (k, d), mu
    """
    tol = TOLERANCES["stationarity"]
    if "P" not in params or "v" not in params:
        raise InvalidArgumentError("markov_chain needs a transition matrix 'P' and observable 'v'")
    P = np.asarray(params["P"], dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InvalidArgumentError(f"P must be square, got shape {P.shape}")
    if np.any(P < 0.0) or np.max(np.abs(P.sum(axis=1) - 1.0)) > tol:
        raise InvalidArgumentError("P must be a stochastic matrix")
    k = P.shape[0]
    v = np.asarray(params["v"], dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] != k:
        raise InvalidArgumentError(f"Observable has {v.shape[0]} states, P has {k}")

    if "mu" in params:
        mu = np.asarray(params["mu"], dtype=float)
    else:
        vals, vecs = np.linalg.eig(P.T)
        lead = np.argmin(np.abs(vals - 1.0))
        mu = np.real(vecs[:, lead])
        mu = mu / mu.sum()
    if mu.shape != (k,) or np.any(mu < -tol) or abs(mu.sum() - 1.0) > tol:
        raise InvalidArgumentError("mu must be a probability vector on the chain's states")
    if np.max(np.abs(mu @ P - mu)) > tol:
        raise InvalidArgumentError("mu is not stationary for P (|mu P - mu| > 1e-12)")
    if np.max(np.abs(mu @ v)) > tol:
        raise InvalidArgumentError("Observable is not centered under mu (|E_mu v| > 1e-12)")
    return P, v, mu


def two_state_chain(stay: float) -> Dict[str, Any]:
    """Symmetric two-state chain on {+1, -1} staying put with probability `stay`"""
    return {"P": [[stay, 1.0 - stay], [1.0 - stay, stay]], "v": [[1.0], [-1.0]], "mu": [0.5, 0.5]}


def lazy_cyclic_chain(stay: float) -> Dict[str, Any]:
    """Three-state chain rotating 0 -> 1 -> 2 -> 0 with observable on the unit circle (d = 2)"""
    move = 1.0 - stay
    angles = 2.0 * np.pi * np.arange(3) / 3.0
    v = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    v = v - v.mean(axis=0)
    return {
        "P": [[stay, move, 0.0], [0.0, stay, move], [move, 0.0, stay]],
        "v": v.tolist(),
        "mu": [1.0 / 3.0] * 3,
    }


# fGn Cholesky factors keyed by (hurst, partition times); least recently used entries are evicted
@functools.lru_cache(maxsize=NOISE_SETTINGS["fbm_factor_cache_size"])
def _fgn_cholesky(hurst: float, taus_bytes: bytes) -> np.ndarray:
    t = np.frombuffer(taus_bytes, dtype=float)
    h2 = 2.0 * hurst
    lo, hi = t[:-1], t[1:]
    cov = 0.5 * (
        np.abs(hi[:, None] - lo[None, :]) ** h2
        + np.abs(lo[:, None] - hi[None, :]) ** h2
        - np.abs(hi[:, None] - hi[None, :]) ** h2
        - np.abs(lo[:, None] - lo[None, :]) ** h2
    )
    factor = cholesky(cov, lower=True)
    factor.setflags(write=False)
    logger.debug(f"Cached fGn factor for H={hurst}, N={t.size - 1}")
    return factor


def fbm_factor(hurst: float, partition: Partition) -> np.ndarray:
    if partition.count > NOISE_SETTINGS["fbm_max_cells"]:
        raise InvalidArgumentError(
            f"fbm supports at most {NOISE_SETTINGS['fbm_max_cells']} cells, got {partition.count}"
        )
    return _fgn_cholesky(float(hurst), np.ascontiguousarray(partition.taus, dtype=float).tobytes())

def _unit_draws(distribution: str, rng: np.random.Generator, shape) -> np.ndarray:
    """Mean-zero, unit-variance draws"""
    if distribution == "rademacher":
        return 2.0 * rng.integers(0, 2, size=shape).astype(float) - 1.0
    if distribution == "normal":
        return rng.standard_normal(shape)
    return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=shape)


def _level_one(spec: NoiseSpec, partition: Partition, rng: np.random.Generator) -> np.ndarray:
    n, d = partition.count, spec.dim
    root_dt = np.sqrt(partition.widths)[:, None]
    if spec.kind == "iid_walk":
        scale = float(spec.params.get("scale", 1.0))
        if "mix" in spec.params:
            mix = np.asarray(spec.params["mix"], dtype=float)
            draws = _unit_draws(spec.params.get("distribution", "rademacher"), rng, (n, mix.shape[1]))
            draws = draws @ mix.T
        else:
            draws = _unit_draws(spec.params.get("distribution", "rademacher"), rng, (n, d))
        return scale * root_dt * draws
    if spec.kind == "brownian":
        return float(spec.params.get("sigma", 1.0)) * root_dt * rng.standard_normal((n, d))
    if spec.kind == "fbm":
        factor = fbm_factor(float(spec.params.get("hurst", 0.5)), partition)
        return float(spec.params.get("sigma", 1.0)) * (factor @ rng.standard_normal((n, d)))
    raise InvalidArgumentError(f"No direct sampler for kind '{spec.kind}'")


def _markov_levels(spec: NoiseSpec, partition: Partition, uniforms: np.ndarray) -> np.ndarray:
    """Level-1 increments for P chains driven by uniforms of shape (P, N + 1); stepped jointly"""
    P, v, mu = markov_chain_parts(spec.params)
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    init_cum = np.cumsum(mu)
    init_cum[-1] = 1.0
    paths, n = uniforms.shape[0], partition.count
    states = np.empty((paths, n), dtype=np.int64)
    states[:, 0] = np.searchsorted(init_cum, uniforms[:, 0], side="right")
    for j in range(1, n):
        rows = cum[states[:, j - 1]]
        states[:, j] = np.sum(uniforms[:, j][:, None] >= rows, axis=1)
    np.minimum(states, P.shape[0] - 1, out=states)
    return np.sqrt(partition.widths)[None, :, None] * v[states]


def _level_two(spec: NoiseSpec, xis: np.ndarray, refined: Optional[np.ndarray] = None) -> np.ndarray:
    rule = spec.xi2_rule
    if rule.kind == "zero":
        return np.zeros(xis.shape + (xis.shape[-1],))
    if rule.kind == "theta":
        return (1.0 - rule.theta) * np.einsum("...a,...b->...ab", xis, xis)
    # left-Riemann iterated sum over the sub-increments of each cell
    before = np.cumsum(refined, axis=-2) - refined
    return np.einsum("...ma,...mb->...ab", before, refined)


def _draw_path(spec: NoiseSpec, partition: Partition, rng: np.random.Generator):
    if spec.xi2_rule.kind == "refined":
        m = int(spec.xi2_rule.value)
        sigma = float(spec.params.get("sigma", 1.0))
        sub_dt = np.sqrt(partition.widths / m)[:, None, None]
        deltas = sigma * sub_dt * rng.standard_normal((partition.count, m, spec.dim))
        xis = deltas.sum(axis=1)
        return xis, _level_two(spec, xis, deltas)
    xis = _level_one(spec, partition, rng)
    return xis, _level_two(spec, xis)


def generate_ensemble(
    spec: NoiseSpec,
    partition: Partition,
    master_seed: int,
    path_ids: Sequence[int],
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Increment streams for several paths, each drawn from its own seed lineage.

    Args:
        spec: Validated noise spec
        partition: Common partition
        master_seed: Master seed of the experiment
        path_ids: Path identifiers; path p draws only from SeedLineage(master_seed, p)

    Returns:
        tuple: xis of shape (P, N, d) and Xis of shape (P, N, d, d)
    """
    spec.validate()
    lineages = [SeedLineage(int(master_seed), int(pid)) for pid in path_ids]
    if spec.kind == "markov_chain":
        uniforms = np.stack([lin.generator().random(partition.count + 1) for lin in lineages])
        xis = _markov_levels(spec, partition, uniforms)
        return xis, _level_two(spec, xis)

    draws = [_draw_path(spec, partition, lin.generator()) for lin in lineages]
    xis = np.stack([x for x, _ in draws])
    Xis = np.stack([X for _, X in draws])
    return xis, Xis


def generate(spec: NoiseSpec, partition: Partition, seed: int, path_id: int = 0) -> IncrementStream:
    """One increment stream, reproducible bit for bit from (seed, path_id)"""
    xis, Xis = generate_ensemble(spec, partition, seed, [path_id])
    return IncrementStream(xis[0], Xis[0])


@dataclass(frozen=True)
class AnalyticLimit:
    D: np.ndarray
    nu: np.ndarray
    derivation: str

    def to_dict(self) -> Dict[str, Any]:
        return {"D": self.D.tolist(), "nu": self.nu.tolist(), "derivation": self.derivation}


def autocovariances(P: np.ndarray, v: np.ndarray, mu: np.ndarray, max_lag: int) -> np.ndarray:
    """C_j = sum_s mu(s) v(s) (x) (P^j v)(s) for j = 0..max_lag, shape (max_lag + 1, d, d)"""
    out = np.empty((max_lag + 1, v.shape[1], v.shape[1]))
    weighted = mu[:, None] * v
    pv = v.copy()
    for j in range(max_lag + 1):
        out[j] = weighted.T @ pv
        pv = P @ pv
    return out


def _subdominant_modulus(P: np.ndarray) -> float:
    vals = np.linalg.eigvals(P)
    lead = np.argmin(np.abs(vals - 1.0))
    rest = np.delete(vals, lead)
    return float(np.max(np.abs(rest))) if rest.size else 0.0


def green_kubo_series(P: np.ndarray, v: np.ndarray, mu: np.ndarray) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    C_0 and S = sum_{j >= 1} C_j, truncated once the geometric tail bound from
    the subdominant eigenvalue drops below the relative tolerance.

    Returns:
        tuple: (C_0, S, number of terms summed)
    """
    rho = _subdominant_modulus(P)
    if rho >= 1.0 - 1e-12:
        raise SeriesConvergenceError(
            f"Spectral radius on centered functions is {rho:.6g} >= 1; correlation sums diverge"
        )
    tol = NOISE_SETTINGS["series_tail_tol"]
    weighted = mu[:, None] * v
    C0 = weighted.T @ v
    scale = max(float(np.max(np.abs(C0))), np.finfo(float).tiny)

    S = np.zeros_like(C0)
    pv = P @ v
    terms = 0
    while terms < NOISE_SETTINGS["series_max_terms"]:
        Cj = weighted.T @ pv
        S += Cj
        terms += 1
        size = float(np.max(np.abs(Cj)))
        if size == 0.0 or size * rho / (1.0 - rho) <= tol * scale:
            break
        pv = P @ pv
    else:
        raise SeriesConvergenceError(f"Series did not reach tolerance in {terms} terms")
    return C0, S, terms


def green_kubo_closed_form(P: np.ndarray, v: np.ndarray, mu: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    (D, nu) for a centered observable through the fundamental matrix
    Z = (I - P + 1 mu^T)^{-1}, using sum_{j >= 1} P^j v = (Z - I) v.
    """
    k = P.shape[0]
    A = np.eye(k) - P + np.outer(np.ones(k), mu)
    tail = np.linalg.solve(A, v) - v
    weighted = mu[:, None] * v
    C0 = weighted.T @ v
    S = weighted.T @ tail
    return C0 + S + S.T, -0.5 * C0 + 0.5 * (S - S.T)


def analytic_limit(spec: NoiseSpec, convention: str = "earlier_later") -> AnalyticLimit:
    """
    Closed-form limit covariance D and area correction nu of the rough step
    functions generated by `spec`.

    Raises:
        InvalidArgumentError: No closed form for the noise kind
        SeriesConvergenceError: Markov chain correlations are not summable
    """
    spec.validate()
    theta = spec.xi2_rule.theta
    d = spec.dim

    if spec.kind == "iid_walk":
        scale = float(spec.params.get("scale", 1.0))
        mix = np.asarray(spec.params.get("mix", np.eye(d)), dtype=float)
        D = scale ** 2 * (mix @ mix.T)
        nu = (0.5 - theta) * D
        tag = "iid walk: nu = -D/2 + (1 - theta) E[draw (x) draw]"
    elif spec.kind == "brownian":
        D = float(spec.params.get("sigma", 1.0)) ** 2 * np.eye(d)
        if spec.xi2_rule.kind == "refined":
            nu = -0.5 * D
            tag = "brownian refined(m): left-Riemann iterated sums target the Ito integral"
        else:
            nu = (0.5 - theta) * D
            tag = "brownian: nu = (1/2 - theta) D"
    elif spec.kind == "markov_chain":
        P, v, mu = markov_chain_parts(spec.params)
        C0, S, terms = green_kubo_series(P, v, mu)
        D = C0 + S + S.T
        nu = -0.5 * C0 + 0.5 * (S - S.T) + (1.0 - theta) * C0
        tag = f"markov chain: Green-Kubo sums over {terms} lags"
    else:
        raise InvalidArgumentError(f"No closed-form limit for noise kind '{spec.kind}'")

    D = 0.5 * (D + D.T)
    if convention == "later_earlier":
        nu = nu.T
    return AnalyticLimit(D, nu, tag)


@dataclass
class NuEstimate:
    nu: np.ndarray
    nu_stderr: np.ndarray
    D_hat: np.ndarray
    D_stderr: np.ndarray
    paths: int
    T: float
    caveat: Optional[str] = None

    def zscores(self, reference_nu: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (self.nu - reference_nu) / self.nu_stderr
        return np.where(self.nu_stderr > 0, z, np.where(self.nu == reference_nu, 0.0, np.inf))

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "nu_hat": self.nu.tolist(),
            "nu_stderr": self.nu_stderr.tolist(),
            "D_hat": self.D_hat.tolist(),
            "D_stderr": self.D_stderr.tolist(),
            "paths": self.paths,
            "T": self.T,
            "assumption": "centered increments with a martingale limit",
        }
        if self.caveat:
            out["caveat"] = self.caveat
        return out


def terminal_signatures(xis: np.ndarray, Xis: np.ndarray, convention: str = "earlier_later"):
    """(X(T), XX(T)) for a batch of streams"""
    pX, pXX = prefix_sums(xis, Xis, convention)
    return pX[..., -1, :], pXX[..., -1, :, :]


def empirical_nu(
    ensemble: Union[Sequence[RoughStepFunction], Tuple[np.ndarray, np.ndarray]],
    D: Optional[np.ndarray] = None,
    T: Optional[float] = None,
    kind: Optional[str] = None,
) -> NuEstimate:
    """
    Monte Carlo estimate nu_hat = mean(XX(T) - X(T) (x) X(T) / 2) / T with standard errors.

    Args:
        ensemble: Rough step functions, or a pair of terminal arrays (X(T) (P, d), XX(T) (P, d, d))
        D: Optional reference covariance; its mismatch with D_hat is logged
        T: Horizon (taken from the step functions when omitted)
        kind: Noise kind; fbm ensembles carry a non-martingale caveat
    """
    if isinstance(ensemble, tuple):
        X_T, XX_T = (np.asarray(a, dtype=float) for a in ensemble)
    else:
        ensemble = list(ensemble)
        if not ensemble:
            raise InsufficientEnsembleError("empirical_nu needs a non-empty ensemble")
        X_T = np.stack([r.prefixX[-1] for r in ensemble])
        XX_T = np.stack([r.prefixXX[-1] for r in ensemble])
        T = ensemble[0].T if T is None else T
    paths = X_T.shape[0]
    if paths < 2:
        raise InsufficientEnsembleError(f"empirical_nu needs at least 2 paths, got {paths}")
    if T is None or T <= 0:
        raise InvalidArgumentError(f"Horizon must be positive, got {T}")

    outer = np.einsum("pa,pb->pab", X_T, X_T)
    defect = XX_T - 0.5 * outer
    root = np.sqrt(paths)
    estimate = NuEstimate(
        nu=defect.mean(axis=0) / T,
        nu_stderr=defect.std(axis=0, ddof=1) / root / T,
        D_hat=outer.mean(axis=0) / T,
        D_stderr=outer.std(axis=0, ddof=1) / root / T,
        paths=paths,
        T=float(T),
        caveat=FBM_CAVEAT if kind == "fbm" else None,
    )
    if estimate.caveat:
        logger.warning(f"empirical nu: {estimate.caveat}")
    if D is not None:
        gap = np.max(np.abs(estimate.D_hat - np.asarray(D)))
        logger.info(f"empirical nu over {paths} paths; max |D_hat - D| = {gap:.4g}")
    return estimate


def empirical_autocovariances(observations: np.ndarray, max_lag: int) -> np.ndarray:
    """Sample C_j = mean_t v_t (x) v_{t+j} for one long stationary sequence of shape (n, d)"""
    obs = np.asarray(observations, dtype=float)
    if obs.ndim == 1:
        obs = obs[:, None]
    n = obs.shape[0]
    if n <= max_lag:
        raise InsufficientEnsembleError(f"Need more than {max_lag} observations, got {n}")
    return np.stack([obs[: n - j].T @ obs[j:] / (n - j) for j in range(max_lag + 1)])
