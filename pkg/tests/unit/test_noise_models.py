import numpy as np
import pytest

from config.config import NOISE_SETTINGS
from src.exceptions import InsufficientEnsembleError, InvalidArgumentError, SeriesConvergenceError
from src.noise_models import (
    FBM_CAVEAT,
    NoiseSpec,
    Xi2Rule,
    _fgn_cholesky,
    analytic_limit,
    autocovariances,
    empirical_autocovariances,
    empirical_nu,
    fbm_factor,
    generate,
    generate_ensemble,
    green_kubo_closed_form,
    green_kubo_series,
    lazy_cyclic_chain,
    markov_chain_parts,
    terminal_signatures,
    two_state_chain,
)
from src.rough_step import Partition, build


PARTITION_64 = Partition.uniform(1.0, 64)


def spec(kind: str, xi2_rule="zero", **params) -> NoiseSpec:
    return NoiseSpec.from_dict({"kind": kind, "params": params, "xi2_rule": xi2_rule})


class TestXi2Rule:
    def test_parse_forms(self) -> None:
        assert Xi2Rule.parse(None) == Xi2Rule("zero")
        assert Xi2Rule.parse("zero") == Xi2Rule("zero")
        assert Xi2Rule.parse("theta(0.5)") == Xi2Rule("theta", 0.5)
        assert Xi2Rule.parse({"refined": 4}) == Xi2Rule("refined", 4)

    def test_effective_theta(self) -> None:
        assert Xi2Rule.parse("zero").theta == 1.0
        assert Xi2Rule.parse("theta(0.25)").theta == 0.25

    @pytest.mark.parametrize("rule", ["bogus", "theta", "theta(1.5)", "refined(0)", "refined(2.5)", {"a": 1, "b": 2}])
    def test_rejected(self, rule) -> None:
        with pytest.raises(InvalidArgumentError):
            Xi2Rule.parse(rule)

    def test_to_obj_roundtrip(self) -> None:
        for text in ("zero", "theta(0.5)", "refined(8)"):
            rule = Xi2Rule.parse(text)
            assert Xi2Rule.parse(rule.to_obj()) == rule


class TestNoiseSpec:
    def test_unknown_kind(self) -> None:
        with pytest.raises(InvalidArgumentError):
            spec("levy")

    def test_refined_only_for_brownian(self) -> None:
        with pytest.raises(InvalidArgumentError):
            spec("iid_walk", xi2_rule="refined(4)")

    def test_moment_order_guard(self) -> None:
        with pytest.raises(InvalidArgumentError):
            spec("iid_walk", moment_order=6)

    def test_hurst_range(self) -> None:
        with pytest.raises(InvalidArgumentError):
            spec("fbm", hurst=0.3)

    def test_dimensions(self) -> None:
        assert spec("brownian", d=3).dim == 3
        assert spec("iid_walk", mix=[[1.0, 0.0, 0.0], [0.5, 0.5, 0.0]]).dim == 2
        assert spec("markov_chain", **lazy_cyclic_chain(0.5)).dim == 2

    def test_to_dict_roundtrip(self) -> None:
        original = spec("brownian", xi2_rule="theta(0.5)", d=2)
        assert NoiseSpec.from_dict(original.to_dict()) == original


class TestMarkovChainParts:
    def test_stationary_law_is_computed(self) -> None:
        params = two_state_chain(0.75)
        del params["mu"]
        _, _, mu = markov_chain_parts(params)
        np.testing.assert_allclose(mu, [0.5, 0.5], atol=1e-12)

    def test_not_stochastic(self) -> None:
        with pytest.raises(InvalidArgumentError):
            markov_chain_parts({"P": [[0.5, 0.6], [0.5, 0.5]], "v": [1.0, -1.0]})

    def test_uncentered_observable(self) -> None:
        with pytest.raises(InvalidArgumentError):
            markov_chain_parts({"P": [[0.5, 0.5], [0.5, 0.5]], "v": [1.0, 0.0], "mu": [0.5, 0.5]})

    def test_non_stationary_law(self) -> None:
        with pytest.raises(InvalidArgumentError):
            markov_chain_parts({"P": [[0.9, 0.1], [0.5, 0.5]], "v": [1.0, -1.0], "mu": [0.5, 0.5]})


class TestGenerate:
    @pytest.mark.parametrize(
        "noise",
        [
            spec("iid_walk", distribution="normal", d=2),
            spec("brownian", xi2_rule="refined(4)", d=2),
            spec("fbm", xi2_rule="theta(0.5)", hurst=0.7),
            spec("markov_chain", **two_state_chain(0.75)),
        ],
    )
    def test_reproducible_and_path_independent(self, noise: NoiseSpec) -> None:
        first = generate(noise, PARTITION_64, 42, path_id=3)
        again = generate(noise, PARTITION_64, 42, path_id=3)
        np.testing.assert_array_equal(first.xis, again.xis)
        np.testing.assert_array_equal(first.Xis, again.Xis)

        xis, Xis = generate_ensemble(noise, PARTITION_64, 42, [1, 2, 3, 4])
        np.testing.assert_array_equal(xis[2], first.xis)
        np.testing.assert_array_equal(Xis[2], first.Xis)

    def test_paths_differ(self) -> None:
        noise = spec("brownian")
        a = generate(noise, PARTITION_64, 42, path_id=0)
        b = generate(noise, PARTITION_64, 42, path_id=1)
        assert not np.array_equal(a.xis, b.xis)

    def test_theta_rule(self) -> None:
        stream = generate(spec("brownian", xi2_rule="theta(0.25)", d=2), PARTITION_64, 1)
        np.testing.assert_allclose(stream.Xis, 0.75 * np.einsum("ka,kb->kab", stream.xis, stream.xis))

    def test_zero_rule(self) -> None:
        assert np.all(generate(spec("brownian"), PARTITION_64, 1).Xis == 0.0)

    def test_single_refinement_has_no_level_two(self) -> None:
        assert np.all(generate(spec("brownian", xi2_rule="refined(1)"), PARTITION_64, 1).Xis == 0.0)

    def test_refined_symmetric_part_below_midpoint(self) -> None:
        stream = generate(spec("brownian", xi2_rule="refined(8)"), PARTITION_64, 1)
        assert np.all(stream.Xis[:, 0, 0] <= 0.5 * stream.xis[:, 0] ** 2 + 1e-15)

    def test_rademacher_walk_scale(self) -> None:
        stream = generate(spec("iid_walk", distribution="rademacher", scale=2.0), PARTITION_64, 9)
        np.testing.assert_allclose(np.abs(stream.xis), 2.0 / 8.0)

    def test_markov_increments_follow_observable(self) -> None:
        stream = generate(spec("markov_chain", **two_state_chain(0.75)), PARTITION_64, 5)
        np.testing.assert_allclose(np.abs(stream.xis), 1.0 / 8.0)


class TestFbm:
    def test_factor_reproduces_increment_variance(self) -> None:
        hurst = 0.4
        factor = fbm_factor(hurst, PARTITION_64)
        np.testing.assert_allclose(np.sum(factor ** 2, axis=1), PARTITION_64.widths ** (2 * hurst), rtol=1e-10)

    def test_factor_is_cached(self) -> None:
        assert fbm_factor(0.6, PARTITION_64) is fbm_factor(0.6, PARTITION_64)
        assert not fbm_factor(0.6, PARTITION_64).flags.writeable

    def test_cache_is_bounded(self) -> None:
        limit = NOISE_SETTINGS["fbm_factor_cache_size"]
        for n in range(16, 16 + limit + 4):
            fbm_factor(0.3, Partition.uniform(1.0, n))
        info = _fgn_cholesky.cache_info()
        assert info.maxsize == limit
        assert info.currsize <= limit

    def test_cell_guard(self) -> None:
        with pytest.raises(InvalidArgumentError):
            fbm_factor(0.4, Partition.uniform(1.0, 4097))


class TestAnalyticLimit:
    def test_iid_walk_normal(self) -> None:
        limit = analytic_limit(spec("iid_walk", distribution="normal", d=2))
        np.testing.assert_allclose(limit.D, np.eye(2))
        np.testing.assert_allclose(limit.nu, -0.5 * np.eye(2))

    def test_brownian_midpoint_has_no_correction(self) -> None:
        limit = analytic_limit(spec("brownian", xi2_rule="theta(0.5)", d=2))
        np.testing.assert_allclose(limit.nu, np.zeros((2, 2)))

    def test_two_state_chain(self) -> None:
        limit = analytic_limit(spec("markov_chain", **two_state_chain(0.75)))
        assert limit.D[0, 0] == pytest.approx(3.0, abs=1e-10)
        assert limit.nu[0, 0] == pytest.approx(-0.5, abs=1e-10)

    def test_cyclic_chain_series_matches_closed_form_and_brute_force(self) -> None:
        P, v, mu = markov_chain_parts(lazy_cyclic_chain(0.5))
        C0, S, _ = green_kubo_series(P, v, mu)
        D, nu = green_kubo_closed_form(P, v, mu)
        np.testing.assert_allclose(C0 + S + S.T, D, atol=1e-10)
        np.testing.assert_allclose(-0.5 * C0 + 0.5 * (S - S.T), nu, atol=1e-10)

        brute = autocovariances(P, v, mu, 400)
        np.testing.assert_allclose(brute[1:].sum(axis=0), S, atol=1e-10)
        assert abs(nu[0, 1] - nu[1, 0]) > 1e-3

    def test_later_earlier_transposes_nu(self) -> None:
        noise = spec("markov_chain", **lazy_cyclic_chain(0.5))
        np.testing.assert_allclose(
            analytic_limit(noise, "later_earlier").nu, analytic_limit(noise).nu.T, atol=1e-14
        )

    def test_periodic_chain_diverges(self) -> None:
        noise = spec("markov_chain", P=[[0.0, 1.0], [1.0, 0.0]], v=[[1.0], [-1.0]], mu=[0.5, 0.5])
        with pytest.raises(SeriesConvergenceError):
            analytic_limit(noise)

    def test_fbm_has_no_closed_form(self) -> None:
        with pytest.raises(InvalidArgumentError):
            analytic_limit(spec("fbm", hurst=0.4))


class TestEmpiricalNu:
    def test_rademacher_walk_is_exact(self) -> None:
        noise = spec("iid_walk", distribution="rademacher")
        estimate = empirical_nu(terminal_signatures(*generate_ensemble(noise, PARTITION_64, 0, range(50))), T=1.0)
        assert estimate.nu[0, 0] == pytest.approx(-0.5, abs=1e-12)
        assert estimate.nu_stderr[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_accepts_step_functions(self) -> None:
        noise = spec("brownian", xi2_rule="theta(0.5)")
        ensemble = [build(PARTITION_64, generate(noise, PARTITION_64, 0, p)) for p in range(20)]
        estimate = empirical_nu(ensemble)
        assert estimate.paths == 20
        assert estimate.T == 1.0
        # midpoint data is geometric, so the defect vanishes path by path
        assert np.max(np.abs(estimate.nu)) <= 1e-12

    def test_fbm_caveat(self) -> None:
        noise = spec("fbm", xi2_rule="theta(0.5)", hurst=0.4)
        estimate = empirical_nu(terminal_signatures(*generate_ensemble(noise, PARTITION_64, 0, range(10))), T=1.0, kind="fbm")
        assert estimate.caveat == FBM_CAVEAT
        assert estimate.to_dict()["caveat"] == FBM_CAVEAT

    def test_needs_two_paths(self) -> None:
        with pytest.raises(InsufficientEnsembleError):
            empirical_nu((np.zeros((1, 1)), np.zeros((1, 1, 1))), T=1.0)
        with pytest.raises(InsufficientEnsembleError):
            empirical_nu([])

    @pytest.mark.slow
    def test_two_state_chain_estimate(self) -> None:
        noise = spec("markov_chain", **two_state_chain(0.75))
        partition = Partition.uniform(1.0, 2048)
        estimate = empirical_nu(terminal_signatures(*generate_ensemble(noise, partition, 0, range(4000))), T=1.0)
        limit = analytic_limit(noise)
        assert abs(estimate.zscores(limit.nu)[0, 0]) <= 4.0
        assert abs(estimate.D_hat[0, 0] - 3.0) <= 4.0 * estimate.D_stderr[0, 0] + 0.05


class TestEmpiricalAutocovariances:
    def test_alternating_sequence(self) -> None:
        obs = np.tile([1.0, -1.0], 50)
        cov = empirical_autocovariances(obs, 2)
        np.testing.assert_allclose(cov[:, 0, 0], [1.0, -1.0, 1.0])

    def test_too_short(self) -> None:
        with pytest.raises(InsufficientEnsembleError):
            empirical_autocovariances(np.ones(3), 3)
