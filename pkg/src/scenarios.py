"""
Scenario presets and the experiment runner.

Each scenario drives the generic engine (noise -> rough step function ->
recursion / lift / solvers -> diagnostics), evaluates its acceptance checks
against the frozen fixture file and writes a JSON report plus any declared
CSV outputs.
"""
from dataclasses import dataclass, field
import json
from multiprocessing import Pool
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent))
from config.config import DIAGNOSTICS_SETTINGS, MC_SETTINGS, OUTPUTS_DIR, RDE_SETTINGS
from src.diagnostics import (
    kolmogorov_exponent,
    marginal_ks_report,
    rate_fit,
    tightness_probe,
    trend_test,
)
from src.exceptions import ConfigValidationError, InvalidArgumentError, RoughSimError
from src.experiment_config import ExperimentConfig, load_acceptance
from src.file_exporter import FileExporter
from src.lift import LiftedRoughPath, holder_norm_estimate, lift
from src.logger import log_function_call, setup_logger
from src.noise_models import (
    NoiseSpec,
    Xi2Rule,
    analytic_limit,
    empirical_nu,
    generate,
    generate_ensemble,
    green_kubo_closed_form,
    markov_chain_parts,
    terminal_signatures,
)
from src.rde_solver import RdeConfig, certify_approximation, solve_modified_equation, solve_rde, sup_distance
from src.recursion_engine import EnsembleResult, Trajectory, run, run_ensemble
from src.rough_step import (
    IncrementStream,
    Partition,
    RoughStepFunction,
    build,
    discrete_holder_norm,
    prefix_sums,
)
from src.seeding import SeedLineage
from src.tensor_algebra import TensorPair, cc_norm_upper, chen_mul, decompose
from src.vector_fields import get_field

logger = setup_logger(__name__)

# lineage reserved for reference draws (exact samples, random triples)
REFERENCE_PATH_ID = 2 ** 62
STATUS_FILE = "scenario_status.json"


@dataclass(frozen=True)
class ScenarioInfo:
    key: str
    description: str
    reproduces: str
    options: Tuple[str, ...]
    handler: Callable[["ScenarioContext"], Dict[str, Any]]


SCENARIOS: Dict[str, ScenarioInfo] = {}


def register_scenario(key: str, description: str, reproduces: str, options: Sequence[str] = ()):
    def decorator(handler):
        SCENARIOS[key] = ScenarioInfo(key, description, reproduces, tuple(options), handler)
        return handler
    return decorator


@dataclass
class ScenarioContext:
    config: ExperimentConfig
    exporter: FileExporter
    acceptance: Dict[str, Any]
    warnings: List[str] = field(default_factory=list)
    artifacts: Dict[str, str] = field(default_factory=dict)

    def option(self, name: str, default=None):
        return self.config.options.get(name, default)

    def warn(self, message: str) -> None:
        logger.warning(message)
        self.warnings.append(message)


# ---------------------------------------------------------------------------
# Ensemble simulation, chunked over path ids and optionally spread over workers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChunkTask:
    noise: Dict[str, Any]
    field_name: Optional[str]
    field_params: Dict[str, Any]
    T: float
    n: int
    master_seed: int
    start: int
    stop: int
    y0: Tuple[float, ...]
    convention: str


@dataclass
class EnsembleBatch:
    path_ids: np.ndarray
    seeds: List[int]
    X_T: np.ndarray
    XX_T: np.ndarray
    result: Optional[EnsembleResult]
    partition: Partition


def simulate_chunk(task: ChunkTask):
    """Worker body; rebuilds spec and bundle from plain data so it can run in a child process"""
    spec = NoiseSpec.from_dict(task.noise)
    partition = Partition.uniform(task.T, task.n)
    ids = np.arange(task.start, task.stop)
    xis, Xis = generate_ensemble(spec, partition, task.master_seed, ids)
    X_T, XX_T = terminal_signatures(xis, Xis, task.convention)
    result = None
    if task.field_name is not None:
        bundle = get_field(task.field_name, **task.field_params)
        result = run_ensemble(bundle, xis, Xis, partition, np.asarray(task.y0), convention=task.convention)
    return X_T, XX_T, result


def simulate(
    config: ExperimentConfig,
    spec: NoiseSpec,
    n: int,
    paths: Optional[int] = None,
    with_field: bool = True,
) -> EnsembleBatch:
    """
    Run `paths` streams of `spec` on the uniform n-cell partition, chunk by chunk.

    Chunks are fixed by MC_SETTINGS["chunk_size"] and merged in path order, so
    the outcome does not depend on the worker count.
    """
    paths = config.paths if paths is None else paths
    chunk = MC_SETTINGS["chunk_size"]
    tasks = [
        ChunkTask(
            noise=spec.to_dict(),
            field_name=config.field_name if with_field else None,
            field_params=config.field_params,
            T=config.T,
            n=n,
            master_seed=config.master_seed,
            start=start,
            stop=min(start + chunk, paths),
            y0=tuple(config.y0),
            convention=config.convention,
        )
        for start in range(0, paths, chunk)
    ]
    workers = min(config.worker_count, len(tasks))
    logger.info(f"Simulating {paths} paths of {spec.kind} noise, n={n}, {len(tasks)} chunks on {workers} worker(s)")
    if workers > 1:
        with Pool(workers) as pool:
            parts = pool.map(simulate_chunk, tasks)
    else:
        parts = [simulate_chunk(task) for task in tasks]

    ids = np.arange(paths)
    result = EnsembleResult.concatenate([p[2] for p in parts]) if with_field else None
    return EnsembleBatch(
        path_ids=ids,
        seeds=[SeedLineage(config.master_seed, int(pid)).seed for pid in ids],
        X_T=np.concatenate([p[0] for p in parts]),
        XX_T=np.concatenate([p[1] for p in parts]),
        result=result,
        partition=Partition.uniform(config.T, n),
    )


def _mean_se(values: np.ndarray) -> Tuple[float, float]:
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size < 2:
        raise InvalidArgumentError("Need at least two finite values for a standard error")
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))


def _check_aborts(ctx: ScenarioContext, result: EnsembleResult, label: str) -> bool:
    fraction = result.abort_fraction
    if fraction > 0:
        ctx.warn(f"{label}: {fraction:.2%} of paths aborted on non-finite iterates")
    return fraction <= MC_SETTINGS["max_abort_fraction"]


def _export_ensemble(ctx: ScenarioContext, batch: EnsembleBatch, suffix: str = "") -> None:
    name = ctx.config.outputs.get("ensemble_csv")
    if name and batch.result is not None:
        filename = f"{Path(name).with_suffix('')}{suffix}" if suffix else name
        ctx.artifacts[f"ensemble_csv{suffix}"] = ctx.exporter.export_ensemble_csv(
            batch.path_ids, batch.seeds, batch.result.terminal, filename
        )


def _band(ctx: ScenarioContext) -> float:
    return float(ctx.acceptance.get("se_band", DIAGNOSTICS_SETTINGS["standard_error_band"]))


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

@register_scenario(
    "cross_solver_consistency",
    "Davie solver vs recursion (bit-exact) and vs the modified equation on Brownian Euler data",
    "mesh consistency of the Davie expansion",
    options=("seeds", "substeps", "odesteps"),
)
def cross_solver_consistency(ctx: ScenarioContext) -> Dict[str, Any]:
    cfg = ctx.config
    spec = cfg.require_noise()
    partition = Partition.uniform(cfg.T, cfg.require_n())
    bundle = get_field(cfg.field_name, **cfg.field_params)
    substeps = int(ctx.option("substeps", ctx.acceptance.get("substeps", 64)))
    odesteps = int(ctx.option("odesteps", RDE_SETTINGS["odesteps_per_piece"]))
    band = float(ctx.acceptance["consistency_band"])

    rows = []
    for seed in range(int(ctx.option("seeds", 4))):
        rsf = build(partition, generate(spec, partition, cfg.master_seed, seed), cfg.convention)
        recursion = run(bundle, rsf, cfg.y0)
        lrp = lift(rsf)
        davie = solve_rde(bundle, lrp, cfg.y0, RdeConfig(substeps_per_cell=1))
        fine = solve_rde(bundle, lrp, cfg.y0, RdeConfig(substeps_per_cell=substeps))
        modified = solve_modified_equation(bundle, lrp, cfg.y0, odesteps)
        on_mesh = Trajectory(partition, modified.values[partition.mesh_positions_in(modified.partition)])
        rows.append({
            "seed": seed,
            "bit_identical": bool(np.array_equal(recursion.values, davie.values)),
            "modified_vs_davie": sup_distance(on_mesh, fine),
        })
        if seed == 0 and cfg.outputs.get("trajectory_csv"):
            ctx.artifacts["trajectory_csv"] = ctx.exporter.export_trajectory_csv(
                recursion.times, recursion.values, cfg.outputs["trajectory_csv"]
            )

    worst = max(r["modified_vs_davie"] for r in rows)
    return {
        "metrics": {"rows": rows, "max_modified_vs_davie": worst, "band": band, "substeps": substeps},
        "checks": {
            "davie_matches_recursion": all(r["bit_identical"] for r in rows),
            "modified_within_band": worst <= band,
        },
    }


@register_scenario(
    "fastslow_markov",
    "Stationary Markov-chain noise: Green-Kubo D and nu vs Monte Carlo, linear-field terminal mean",
    "fast-slow homogenization with area correction",
    options=("variant",),
)
def fastslow_markov(ctx: ScenarioContext) -> Dict[str, Any]:
    cfg = ctx.config
    spec = cfg.require_noise()
    if spec.kind != "markov_chain":
        raise ConfigValidationError("noise.kind", "fastslow_markov needs markov_chain noise")
    variant = ctx.option("variant", "scalar")
    if variant not in ("scalar", "planar"):
        raise ConfigValidationError("options.variant", f"expected 'scalar' or 'planar', got {variant!r}")
    band = _band(ctx)

    limit = analytic_limit(spec, cfg.convention)
    D_cf, nu_cf = green_kubo_closed_form(*markov_chain_parts(spec.params))
    if cfg.convention == "later_earlier":
        nu_cf = nu_cf.T
    series_gap = float(max(np.max(np.abs(limit.D - D_cf)), np.max(np.abs(limit.nu - nu_cf))))

    batch = simulate(cfg, spec, cfg.require_n())
    estimate = empirical_nu((batch.X_T, batch.XX_T), D=limit.D, T=cfg.T, kind=spec.kind)
    D_z = (estimate.D_hat - limit.D) / np.where(estimate.D_stderr > 0, estimate.D_stderr, np.inf)
    metrics: Dict[str, Any] = {
        "limit": limit.to_dict(),
        "series_vs_closed_form": series_gap,
        "estimate": estimate.to_dict(),
        "abort_fraction": batch.result.abort_fraction,
    }
    checks = {
        "series_matches_closed_form": series_gap <= 1e-10,
        "no_excess_aborts": _check_aborts(ctx, batch.result, "fastslow_markov"),
    }

    if variant == "scalar":
        sigma = float(np.atleast_1d(cfg.field_params.get("sigma", 1.0))[0])
        expected = cfg.y0[0] * np.exp(cfg.T * sigma ** 2 * (0.5 * limit.D[0, 0] + limit.nu[0, 0]))
        mean, se = _mean_se(batch.result.terminal[:, 0])
        metrics.update({"terminal_mean": mean, "terminal_se": se, "terminal_expected": float(expected)})
        checks.update({
            "D_hat_within_band": bool(np.all(np.abs(D_z) <= band)),
            "nu_hat_within_band": bool(np.all(np.abs(estimate.zscores(limit.nu)) <= band)),
            "terminal_mean_within_band": abs(mean - expected) <= band * se,
        })
    else:
        area = 0.5 * (batch.XX_T[:, 0, 1] - batch.XX_T[:, 1, 0]) / cfg.T
        area_mean, area_se = _mean_se(area)
        target = 0.5 * (limit.nu[0, 1] - limit.nu[1, 0])
        rel = abs(area_mean - target) / abs(target) if target != 0 else float("inf")
        metrics.update({"antisym_nu_hat": area_mean, "antisym_se": area_se, "antisym_series": float(target),
                        "antisym_rel_error": rel})
        checks.update({
            "antisym_nonzero": abs(area_mean) > band * area_se,
            "antisym_matches_series": rel <= float(ctx.acceptance["antisym_rel_tol"]),
        })
    _export_ensemble(ctx, batch)
    return {"metrics": metrics, "checks": checks}


@register_scenario(
    "lemma31_random_walk",
    "Scalar GBM driven by an i.i.d. Rademacher walk with Euler data: Ito moments and nu = -D/2",
    "random-walk limit with nu = -D/2",
)
def lemma31_random_walk(ctx: ScenarioContext) -> Dict[str, Any]:
    cfg = ctx.config
    spec = cfg.require_noise()
    acc = ctx.acceptance
    band = _band(ctx)

    batch = simulate(cfg, spec, cfg.require_n())
    limit = analytic_limit(spec, cfg.convention)
    estimate = empirical_nu((batch.X_T, batch.XX_T), D=limit.D, T=cfg.T, kind=spec.kind)
    terminal = batch.result.terminal[:, 0]
    mean, se = _mean_se(terminal)
    second = float(np.nanmean(terminal ** 2))
    expected_second = float(acc["expected_second_moment"])

    _export_ensemble(ctx, batch)
    return {
        "metrics": {
            "terminal_mean": mean,
            "terminal_se": se,
            "terminal_second_moment": second,
            "limit": limit.to_dict(),
            "estimate": estimate.to_dict(),
            "nu_zscores": estimate.zscores(limit.nu).tolist(),
            "abort_fraction": batch.result.abort_fraction,
        },
        "checks": {
            "terminal_mean": abs(mean - float(acc["expected_mean"])) <= float(acc["mean_tol"]),
            "terminal_second_moment": abs(second - expected_second) <= float(acc["second_moment_rel_tol"]) * expected_second,
            "nu_hat_within_band": bool(np.all(np.abs(estimate.zscores(limit.nu)) <= band)),
            "no_excess_aborts": _check_aborts(ctx, batch.result, "lemma31_random_walk"),
        },
    }


def lift_fidelity_metrics(
    rsf: RoughStepFunction,
    gamma: float,
    sub_levels: int,
    triples: int,
    rng: np.random.Generator,
) -> Tuple[LiftedRoughPath, Dict[str, float]]:
    """Mesh agreement, Chen violation on random triples, Hoelder ratio and length bounds of one lift"""
    lrp = lift(rsf)
    taus = rsf.partition.taus
    mesh_error = 0.0
    for k, t in enumerate(taus):
        X, XX = lrp.point(float(t))
        mesh_error = max(mesh_error, float(np.max(np.abs(X - rsf.prefixX[k]))))
        base_XX = rsf.prefixXX[k].T if rsf.convention == "later_earlier" else rsf.prefixXX[k]
        mesh_error = max(mesh_error, float(np.max(np.abs(XX - base_XX))))

    def earlier(p: TensorPair) -> TensorPair:
        return TensorPair(p.a, p.M.T) if rsf.convention == "later_earlier" else p

    chen_error = 0.0
    for s, u, t in np.sort(rng.uniform(0.0, rsf.T, size=(triples, 3)), axis=1):
        whole = earlier(lrp.eval(s, t))
        split = chen_mul(earlier(lrp.eval(s, u)), earlier(lrp.eval(u, t)))
        chen_error = max(chen_error, whole.max_abs_diff(split))

    levels = int(np.ceil(np.log2(rsf.partition.count))) + sub_levels
    lifted = holder_norm_estimate(lrp, gamma, levels)
    discrete = discrete_holder_norm(rsf, gamma)
    ratio = lifted / discrete if discrete > 0 else float("nan")

    surrogate = 0.0
    for cell in lrp.cells:
        g, _ = decompose(TensorPair(cell.xi, cell.Xi))
        surrogate += cc_norm_upper(g)
    length = lrp.realization_length()
    return lrp, {
        "mesh_error": mesh_error,
        "chen_error": chen_error,
        "holder_lifted": lifted,
        "holder_discrete": discrete,
        "holder_ratio": ratio,
        "realization_length": length,
        "cc_surrogate": surrogate,
        "length_within_surrogate_bounds": bool(surrogate * (1 - 1e-12) <= length <= 2.0 * surrogate * (1 + 1e-12)),
    }


@register_scenario(
    "lift_fidelity",
    "Geodesic lift of step functions: mesh agreement, Chen relations, Hoelder ratio without trend in n",
    "continuous lift of discrete rough step functions",
    options=("gamma", "sub_levels", "triples"),
)
def lift_fidelity(ctx: ScenarioContext) -> Dict[str, Any]:
    cfg = ctx.config
    spec = cfg.require_noise()
    acc = ctx.acceptance
    gamma = float(ctx.option("gamma", RDE_SETTINGS["gamma"]))
    sub_levels = int(ctx.option("sub_levels", 2))
    triples = int(ctx.option("triples", acc.get("triples", 1000)))
    n_grid = cfg.require_n_grid(minimum=3)

    rng = SeedLineage(cfg.master_seed, REFERENCE_PATH_ID).generator()
    rows = []
    lrp = None
    for n in n_grid:
        partition = Partition.uniform(cfg.T, n)
        rsf = build(partition, generate(spec, partition, cfg.master_seed, 0), cfg.convention)
        lrp, row = lift_fidelity_metrics(rsf, gamma, sub_levels, triples, rng)
        rows.append({"n": n, **row})
        logger.info(f"Lift n={n}: ratio {row['holder_ratio']:.4f}, chen {row['chen_error']:.2e}")

    if cfg.outputs.get("polyline_csv") and lrp is not None:
        times, values = lrp.polyline_samples()
        ctx.artifacts["polyline_csv"] = ctx.exporter.export_polyline_csv(times, values, cfg.outputs["polyline_csv"])

    ratios = [r["holder_ratio"] for r in rows]
    trend = trend_test(n_grid, ratios)
    return {
        "metrics": {"gamma": gamma, "rows": rows, "trend_tau": trend.tau, "trend_p_value": trend.p_value},
        "checks": {
            "mesh_agreement": max(r["mesh_error"] for r in rows) <= float(acc["mesh_tol"]),
            "chen_relations": max(r["chen_error"] for r in rows) <= float(acc["chen_tol"]),
            "ratio_at_least_one": min(ratios) >= 1.0 - 1e-12,
            "ratio_without_trend": trend.p_value > float(acc["trend_p_value"]),
            "length_bounds": all(r["length_within_surrogate_bounds"] for r in rows),
        },
    }


def _aggregate(xis: np.ndarray, n: int) -> np.ndarray:
    """Sum a fine stream of N cells down to n cells (n divides N)"""
    N, d = xis.shape
    return xis.reshape(n, N // n, d).sum(axis=1)


def rate_for_seed(task: Dict[str, Any]) -> List[Dict[str, float]]:
    """Recursion vs modified equation on nested grids of one Brownian path"""
    spec = NoiseSpec.from_dict(task["noise"])
    bundle = get_field(task["field_name"], **task["field_params"])
    n_grid = task["n_grid"]
    fine = Partition.uniform(task["T"], n_grid[-1])
    fine_xis = generate(spec, fine, task["master_seed"], task["seed"]).xis
    theta = spec.xi2_rule.theta

    rows = []
    for n in n_grid:
        partition = Partition.uniform(task["T"], n)
        xis = _aggregate(fine_xis, n)
        stream = IncrementStream(xis, (1.0 - theta) * np.einsum("ka,kb->kab", xis, xis))
        rsf = build(partition, stream, task["convention"])
        recursion = run(bundle, rsf, task["y0"])
        modified = solve_modified_equation(bundle, lift(rsf), task["y0"], task["odesteps"])
        C_n = discrete_holder_norm(rsf, task["gamma"])
        report = certify_approximation(recursion, modified, task["gamma"], C_n, task["c_cal"])
        rows.append({"seed": task["seed"], "n": n, **report.to_dict()})
    return rows


@register_scenario(
    "modified_equation_rate",
    "Sup distance between the recursion and its modified equation against K * mesh^(3 gamma - 1)",
    "backward error analysis of the recursion",
    options=("seeds", "gamma", "odesteps", "calibrate"),
)
def modified_equation_rate(ctx: ScenarioContext) -> Dict[str, Any]:
    cfg = ctx.config
    spec = cfg.require_noise()
    acc = ctx.acceptance
    if spec.kind != "brownian" or spec.xi2_rule.kind == "refined":
        raise ConfigValidationError("noise", "modified_equation_rate needs brownian noise with a zero or theta rule")
    n_grid = cfg.require_n_grid(minimum=3)
    gamma = float(ctx.option("gamma", acc.get("gamma", RDE_SETTINGS["gamma"])))
    c_cal = float(acc["c_cal"])
    tasks = [
        {
            "noise": spec.to_dict(),
            "field_name": cfg.field_name,
            "field_params": cfg.field_params,
            "n_grid": n_grid,
            "T": cfg.T,
            "master_seed": cfg.master_seed,
            "seed": seed,
            "convention": cfg.convention,
            "y0": list(cfg.y0),
            "odesteps": int(ctx.option("odesteps", RDE_SETTINGS["odesteps_per_piece"])),
            "gamma": gamma,
            "c_cal": c_cal,
        }
        for seed in range(int(ctx.option("seeds", 32)))
    ]
    workers = min(cfg.worker_count, len(tasks))
    if workers > 1:
        with Pool(workers) as pool:
            per_seed = pool.map(rate_for_seed, tasks)
    else:
        per_seed = [rate_for_seed(task) for task in tasks]

    slopes = []
    for rows in per_seed:
        deltas = [r["delta"] for r in rows]
        errors = [r["sup_error"] for r in rows]
        if min(errors) <= 0.0:
            ctx.warn(f"Seed {rows[0]['seed']} has a zero sup error; excluded from the slope fit")
            continue
        slopes.append(rate_fit(deltas, errors).slope)
    all_rows = [r for rows in per_seed for r in rows]
    seed_passes = [all(r["pass"] for r in rows) for rows in per_seed]
    median_slope = float(np.median(slopes)) if slopes else float("nan")
    pass_fraction = float(np.mean(seed_passes))

    metrics: Dict[str, Any] = {
        "gamma": gamma,
        "theory_slope": 3.0 * gamma - 1.0,
        "c_cal": c_cal,
        "slopes": slopes,
        "median_slope": median_slope,
        "pass_fraction": pass_fraction,
        "rows": all_rows,
    }
    if ctx.option("calibrate", False):
        reference = [r for r in all_rows if r["seed"] == int(acc.get("calibration_seed", 0))]
        worst = max(r["sup_error"] / r["K_bound"] for r in reference)
        metrics["c_cal_suggested"] = worst * float(acc.get("calibration_safety", 1.5))
        logger.info(f"Calibration on seed {acc.get('calibration_seed', 0)}: c_cal ~ {metrics['c_cal_suggested']:.4g}")
    return {
        "metrics": metrics,
        "checks": {
            "median_slope": median_slope >= float(acc["min_median_slope"]),
            "bound_pass_fraction": pass_fraction >= float(acc["min_pass_fraction"]),
        },
    }


@register_scenario(
    "subdiffusion_fbm",
    "Fractional Brownian driver with midpoint level-2 data: moment scaling, variance growth, nu caveat",
    "sub-diffusive fractional noise",
    options=("moment_paths", "q"),
)
def subdiffusion_fbm(ctx: ScenarioContext) -> Dict[str, Any]:
    cfg = ctx.config
    spec = cfg.require_noise()
    if spec.kind != "fbm":
        raise ConfigValidationError("noise.kind", "subdiffusion_fbm needs fbm noise")
    acc = ctx.acceptance
    hurst = float(spec.params.get("hurst", 0.5))
    n = cfg.require_n()
    partition = Partition.uniform(cfg.T, n)

    moment_paths = min(int(ctx.option("moment_paths", 1000)), cfg.paths)
    xis, Xis = generate_ensemble(spec, partition, cfg.master_seed, np.arange(moment_paths))
    pX, pXX = prefix_sums(xis, Xis, cfg.convention)
    scaling = kolmogorov_exponent(
        (pX, pXX, partition.taus), float(ctx.option("q", acc.get("q", 8))), moment_order=spec.moment_order,
        convention=cfg.convention,
    )

    # one decade of marginal variances, log-spaced mesh indices
    idx = np.unique(np.round(np.geomspace(n / 10, n, 12)).astype(int))
    variances = np.var(pX[:, idx, 0], axis=0, ddof=1)
    variance_fit = rate_fit(partition.taus[idx], variances)

    batch = simulate(cfg, spec, n)
    estimate = empirical_nu((batch.X_T, batch.XX_T), T=cfg.T, kind=spec.kind)
    if estimate.caveat:
        ctx.warnings.append(estimate.caveat)
    mean, se = _mean_se(batch.result.terminal[:, 0])
    _export_ensemble(ctx, batch)

    band = float(acc["gamma_band"])
    return {
        "metrics": {
            "hurst": hurst,
            "moment_scaling": scaling.to_dict(),
            "variance_slope": variance_fit.slope,
            "estimate": estimate.to_dict(),
            "terminal_mean": mean,
            "terminal_se": se,
            "abort_fraction": batch.result.abort_fraction,
        },
        "checks": {
            "gamma_level1": abs(scaling.gamma_hat_level1 - hurst) <= band,
            "gamma_level2": abs(scaling.gamma_hat_level2 - hurst) <= band,
            "variance_slope": abs(variance_fit.slope - 2.0 * hurst) <= float(acc["variance_slope_band"]),
            "no_excess_aborts": _check_aborts(ctx, batch.result, "subdiffusion_fbm"),
        },
    }


@register_scenario(
    "theta_scheme_gbm",
    "Scalar GBM with the explicit theta-scheme on Brownian data: Ito (1) and Stratonovich (1/2) limits",
    "theta-scheme limits between Ito and Stratonovich",
    options=("thetas",),
)
def theta_scheme_gbm(ctx: ScenarioContext) -> Dict[str, Any]:
    cfg = ctx.config
    spec = cfg.require_noise()
    if spec.kind != "brownian" or spec.dim != 1:
        raise ConfigValidationError("noise", "theta_scheme_gbm needs scalar brownian noise")
    if cfg.field_name != "linear":
        raise ConfigValidationError("field.name", "theta_scheme_gbm needs the linear field")
    band = _band(ctx)
    n = cfg.require_n()
    fractions = MC_SETTINGS["marginal_fractions"]

    # field and noise amplitudes enter the limit only through their product
    sigma = float(np.atleast_1d(cfg.field_params.get("sigma", 1.0))[0]) * float(spec.params.get("sigma", 1.0))
    mu = float(cfg.field_params.get("mu", 0.0))

    # exact samples of exp(sigma W(t) + (mu + (1/2 - theta) sigma^2) t) share one Brownian skeleton
    rng = SeedLineage(cfg.master_seed, REFERENCE_PATH_ID).generator()
    times = np.array([f * cfg.T for f in fractions])
    steps = np.diff(np.concatenate(([0.0], times)))
    W = np.cumsum(np.sqrt(steps) * rng.standard_normal((cfg.paths, len(times))), axis=1)

    metrics: Dict[str, Any] = {"thetas": {}}
    checks: Dict[str, bool] = {}
    for theta in ctx.option("thetas", [1.0, 0.5]):
        theta = float(theta)
        theta_spec = NoiseSpec(spec.kind, spec.params, Xi2Rule("theta", theta).validated())
        batch = simulate(cfg, theta_spec, n)
        terminal = batch.result.terminal[:, 0]
        mean, se = _mean_se(terminal)
        expected = cfg.y0[0] * np.exp((mu + (1.0 - theta) * sigma ** 2) * cfg.T)

        rate = mu + (0.5 - theta) * sigma ** 2
        exact = {f"t={f:g}": cfg.y0[0] * np.exp(sigma * W[:, k] + rate * times[k]) for k, f in enumerate(fractions)}
        simulated = {f"t={f:g}": batch.result.marginals[f][:, 0] for f in fractions}
        ks = marginal_ks_report(simulated, exact, float(ctx.acceptance.get("ks_alpha", DIAGNOSTICS_SETTINGS["ks_alpha"])))

        key = f"theta={theta:g}"
        metrics["thetas"][key] = {
            "terminal_mean": mean,
            "terminal_se": se,
            "terminal_expected": float(expected),
            "ks": ks,
            "abort_fraction": batch.result.abort_fraction,
        }
        checks[f"{key}:terminal_mean"] = abs(mean - expected) <= band * se
        checks[f"{key}:ks_terminal"] = ks[f"t={fractions[-1]:g}"]["pass"]
        checks[f"{key}:no_excess_aborts"] = _check_aborts(ctx, batch.result, key)
        _export_ensemble(ctx, batch, suffix=f"_theta{theta:g}")
    return {"metrics": metrics, "checks": checks}


@register_scenario(
    "tightness_probe",
    "Exceedance curves of the discrete Hoelder norm across n, a gamma > 1/2 control, Kolmogorov exponents",
    "discrete Kolmogorov criterion and tightness",
    options=("gamma", "control_gamma", "M_grid", "moment_paths", "moment_n", "q"),
)
def tightness_probe_scenario(ctx: ScenarioContext) -> Dict[str, Any]:
    cfg = ctx.config
    spec = cfg.require_noise()
    acc = ctx.acceptance
    n_grid = cfg.require_n_grid(minimum=4)
    gamma = float(ctx.option("gamma", RDE_SETTINGS["gamma"]))
    control = float(ctx.option("control_gamma", 0.6))
    M_grid = np.asarray(ctx.option("M_grid", list(np.linspace(1.0, 12.0, 12))), dtype=float)

    curves = {}
    for g in (gamma, control):
        curves[g] = tightness_probe(spec, n_grid, g, M_grid, cfg.paths, cfg.master_seed, cfg.T, cfg.convention)
        name = cfg.outputs.get("tightness_csv")
        if name:
            ctx.artifacts[f"tightness_csv_gamma{g:g}"] = ctx.exporter.export_tightness_csv(
                curves[g], f"{Path(name).with_suffix('')}_gamma{g:g}"
            )

    tail_tight = max(c.p_hat[-1] for c in curves[gamma])
    control_trend = trend_test(n_grid, [c.median for c in curves[control]])
    tight_trend = trend_test(n_grid, [c.median for c in curves[gamma]])

    moment_n = int(ctx.option("moment_n", 256))
    moment_paths = min(int(ctx.option("moment_paths", 500)), cfg.paths)
    partition = Partition.uniform(cfg.T, moment_n)
    xis, Xis = generate_ensemble(spec, partition, cfg.master_seed, np.arange(moment_paths))
    pX, pXX = prefix_sums(xis, Xis, cfg.convention)
    scaling = kolmogorov_exponent(
        (pX, pXX, partition.taus), float(ctx.option("q", acc.get("q", 8))), moment_order=spec.moment_order,
        convention=cfg.convention,
    )
    lo, hi = acc["gamma_range"]

    def summary(g):
        return [{"n": c.n, "median": c.median, "p_hat": c.p_hat.tolist()} for c in curves[g]]

    return {
        "metrics": {
            "gamma": gamma,
            "control_gamma": control,
            "M_grid": M_grid.tolist(),
            "curves": summary(gamma),
            "control_curves": summary(control),
            "tail_exceedance": tail_tight,
            "median_trend_p_value": tight_trend.p_value,
            "control_median_trend_p_value": control_trend.p_value,
            "moment_scaling": scaling.to_dict(),
        },
        "checks": {
            "tail_bounded": tail_tight <= float(acc["tail_level"]),
            "control_grows": control_trend.growing,
            "gamma_level1": lo <= scaling.gamma_hat_level1 <= hi,
            "gamma_level2": lo <= scaling.gamma_hat_level2 <= hi,
        },
    }


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

class ExperimentRunner:
    """Run scenarios from validated configs and keep track of their acceptance status"""

    def __init__(self, status_dir: Optional[Path] = None):
        self.status_dir = Path(status_dir) if status_dir is not None else OUTPUTS_DIR
        self.status_path = self.status_dir / STATUS_FILE

    @log_function_call(logger)
    def run(self, config: ExperimentConfig) -> Dict[str, Any]:
        """
        Execute a scenario.

        Args:
            config: Validated experiment config

        Returns:
            dict: success (no error), accepted (all checks passed), checks, metrics,
                artifacts, report_path, errors, warnings
        """
        result: Dict[str, Any] = {
            "success": False,
            "accepted": False,
            "scenario": config.scenario,
            "checks": {},
            "metrics": {},
            "artifacts": {},
            "report_path": None,
            "errors": [],
            "warnings": [],
        }
        try:
            info = SCENARIOS.get(config.scenario)
            if info is None:
                raise ConfigValidationError(
                    "scenario", f"unknown scenario '{config.scenario}', expected one of {sorted(SCENARIOS)}"
                )
            unknown = sorted(set(config.options) - set(info.options))
            if unknown:
                raise ConfigValidationError(f"options.{unknown[0]}", f"not an option of '{config.scenario}'")

            ctx = ScenarioContext(config, FileExporter(config.output_dir), load_acceptance(config.scenario))
            outcome = info.handler(ctx)
            checks = {k: bool(v) for k, v in outcome["checks"].items()}
            accepted = all(checks.values())

            report = {
                "scenario": config.scenario,
                "reproduces": info.reproduces,
                "config": config.to_dict(),
                "metrics": outcome["metrics"],
                "checks": checks,
                "accepted": accepted,
                "warnings": ctx.warnings,
            }
            report_path = ctx.exporter.export_to_json(report, config.outputs.get("report") or f"{config.scenario}_report")
            self._record_status(config.scenario, accepted, report_path)

            result.update({
                "success": True,
                "accepted": accepted,
                "checks": checks,
                "metrics": outcome["metrics"],
                "artifacts": ctx.artifacts,
                "report_path": report_path,
                "warnings": ctx.warnings,
            })
            failed = [k for k, v in checks.items() if not v]
            if failed:
                logger.warning(f"Scenario '{config.scenario}' failed checks: {failed}")
            else:
                logger.info(f"Scenario '{config.scenario}' accepted")
        except (RoughSimError, OSError, ValueError, KeyError) as e:
            logger.error(f"Scenario '{config.scenario}' aborted: {str(e)}", exc_info=True)
            result["errors"].append(str(e))
        return result

    def estimate_nu(self, config: ExperimentConfig) -> Dict[str, Any]:
        """Monte Carlo nu_hat and D_hat for the configured noise, with the analytic limit when one exists"""
        result: Dict[str, Any] = {"success": False, "errors": [], "warnings": [], "report_path": None}
        try:
            spec = config.require_noise()
            n = config.n if config.n is not None else max(config.require_n_grid())
            batch = simulate(config, spec, n, with_field=False)
            estimate = empirical_nu((batch.X_T, batch.XX_T), T=config.T, kind=spec.kind)
            payload: Dict[str, Any] = {"noise": spec.to_dict(), "n": n, "estimate": estimate.to_dict()}
            try:
                limit = analytic_limit(spec, config.convention)
                payload["limit"] = limit.to_dict()
                payload["nu_zscores"] = estimate.zscores(limit.nu).tolist()
            except InvalidArgumentError as e:
                result["warnings"].append(str(e))
            if estimate.caveat:
                result["warnings"].append(estimate.caveat)

            exporter = FileExporter(config.output_dir)
            result["report_path"] = exporter.export_to_json(payload, f"{config.scenario}_nu_estimate")
            result.update({"success": True, "estimate": estimate, "payload": payload})
        except RoughSimError as e:
            logger.error(f"nu estimation failed: {str(e)}", exc_info=True)
            result["errors"].append(str(e))
        return result

    def _record_status(self, scenario: str, accepted: bool, report_path: str) -> None:
        status = self.load_status()
        status[scenario] = {"accepted": accepted, "report": report_path}
        self.status_dir.mkdir(exist_ok=True, parents=True)
        with open(self.status_path, "w", encoding="utf-8") as f:
            json.dump(status, f, indent=2, sort_keys=True)

    def load_status(self) -> Dict[str, Any]:
        if not self.status_path.exists():
            return {}
        try:
            with open(self.status_path, "r", encoding="utf-8") as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            logger.warning(f"Ignoring unreadable status file {self.status_path}: {e}")
            return {}

    def list_scenarios(self) -> List[Dict[str, str]]:
        """Registry rows in alphabetical order with the status of the last run"""
        status = self.load_status()
        rows = []
        for key in sorted(SCENARIOS):
            info = SCENARIOS[key]
            last = status.get(key)
            if last is None or not Path(last.get("report", "")).exists():
                state = "not run"
            else:
                state = "pass" if last.get("accepted") else "fail"
            rows.append({"key": key, "description": info.description, "reproduces": info.reproduces, "status": state})
        return rows


def list_scenarios(status_dir: Optional[Path] = None) -> List[Dict[str, str]]:
    return ExperimentRunner(status_dir).list_scenarios()
