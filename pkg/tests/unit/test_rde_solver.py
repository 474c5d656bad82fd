import numpy as np
import pytest

from src.diagnostics import rate_fit
from src.exceptions import InvalidArgumentError, PartitionMismatchError
from src.experiment_config import load_acceptance
from src.lift import lift
from src.rde_solver import (
    RdeConfig,
    certify_approximation,
    solve_modified_equation,
    solve_rde,
    sup_distance,
)
from src.recursion_engine import davie_step, run
from src.rough_step import RoughStepFunction
from src.vector_fields import get_field

from .helpers import brownian_step_function, line_step_function, step_function


LINEAR = get_field("linear", sigma=1.0)
SMOOTH_INCREMENTS = np.array([0.2, -0.1, 0.3, 0.15])


def geometric_step_function(xis) -> RoughStepFunction:
    xis = np.asarray(xis, dtype=float).reshape(len(xis), -1)
    return step_function(xis, 0.5 * np.einsum("ka,kb->kab", xis, xis))


class TestSolveRde:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_single_substep_is_bit_identical_to_recursion(self, seed: int) -> None:
        rsf = brownian_step_function(64, seed=seed)
        bundle = get_field("linear", sigma=1.0, mu=0.3)
        recursion = run(bundle, rsf, [1.0])
        davie = solve_rde(bundle, lift(rsf), [1.0], RdeConfig(substeps_per_cell=1))
        assert np.array_equal(davie.values, recursion.values)
        assert davie.partition == recursion.partition

    def test_substeps_converge_to_exponential(self) -> None:
        rsf = geometric_step_function(SMOOTH_INCREMENTS)
        exact = np.exp(SMOOTH_INCREMENTS.sum())
        errors = [
            abs(solve_rde(LINEAR, lift(rsf), [1.0], RdeConfig(substeps_per_cell=m)).terminal[0] - exact)
            for m in (1, 4, 16, 64)
        ]
        assert all(later < earlier for earlier, later in zip(errors, errors[1:]))
        assert errors[-1] < 1e-5

    def test_substep_grid_refines_mesh(self) -> None:
        rsf = geometric_step_function(SMOOTH_INCREMENTS)
        traj = solve_rde(LINEAR, lift(rsf), [1.0], RdeConfig(substeps_per_cell=4))
        assert traj.partition.count == 16
        assert traj.partition.contains_mesh_of(rsf.partition)

    def test_zero_path_is_constant(self) -> None:
        traj = solve_rde(LINEAR, lift(step_function(np.zeros((8, 1)))), [1.5], RdeConfig(substeps_per_cell=3))
        assert np.all(traj.values == 1.5)

    def test_config_validation(self) -> None:
        with pytest.raises(InvalidArgumentError):
            RdeConfig(substeps_per_cell=0)
        with pytest.raises(InvalidArgumentError):
            RdeConfig(gamma=1.5)

    def test_davie_defect_scales_cubically(self) -> None:
        bundle = get_field("trig", scale=1.0)
        direction = np.array([1.0, 0.5])
        widths = np.array([0.02, 0.01, 0.005, 0.0025])
        defects = []
        for h in widths:
            xi = h * direction
            Xi = 0.5 * np.outer(xi, xi) + h ** 2 * np.array([[0.0, 0.3], [-0.3, 0.0]])
            rsf = step_function([xi], [Xi], T=h)
            reference = solve_rde(bundle, lift(rsf), [0.4], RdeConfig(substeps_per_cell=64)).terminal
            one_step = davie_step(bundle, np.array([0.4]), xi, Xi, h)
            defects.append(float(np.linalg.norm(reference - one_step)))
        assert rate_fit(widths, defects).slope >= 3.0 - 0.1


class TestLocalLipschitz:
    def test_terminal_value_is_lipschitz_in_initial_condition(self) -> None:
        fixture = load_acceptance("local_lipschitz")
        rsf = line_step_function(128)
        base = run(LINEAR, rsf, [1.0]).terminal
        for delta in fixture["deltas"]:
            moved = run(LINEAR, rsf, [1.0 + delta]).terminal
            assert np.linalg.norm(moved - base) <= fixture["L"] * delta


class TestModifiedEquation:
    def test_single_cell_closed_form(self) -> None:
        h, c = 0.3, 0.1
        traj = solve_modified_equation(LINEAR, lift(step_function([h], [c])), [1.0], odesteps_per_piece=64)
        assert traj.terminal[0] == pytest.approx(np.exp(h + c - 0.5 * h ** 2), abs=1e-8)

    def test_zero_lift_is_constant(self) -> None:
        traj = solve_modified_equation(LINEAR, lift(step_function(np.zeros((4, 1)))), [2.0])
        assert np.all(traj.values == 2.0)

    def test_grid_contains_mesh(self) -> None:
        rsf = brownian_step_function(16, d=2, seed=3, xi2_rule="refined(4)")
        traj = solve_modified_equation(get_field("linear", sigma=[1.0, 0.5]), lift(rsf), [1.0])
        assert traj.partition.contains_mesh_of(rsf.partition)

    def test_step_count_validation(self) -> None:
        with pytest.raises(InvalidArgumentError):
            solve_modified_equation(LINEAR, lift(step_function([0.1])), [1.0], odesteps_per_piece=0)


class TestCertifyApproximation:
    def test_identical_trajectories(self) -> None:
        traj = run(LINEAR, brownian_step_function(32, seed=4), [1.0])
        report = certify_approximation(traj, traj, gamma=0.45, C_n=0.5, c_cal=2.0)
        rate = (1.0 / 32) ** (3 * 0.45 - 1.0)
        assert report.sup_error == 0.0
        assert report.passed
        assert report.K_bound == pytest.approx(0.5 ** 4 * rate)
        assert report.K_bound_cubic == pytest.approx(0.5 ** 3 * rate)
        assert report.to_dict()["pass"] is True

    def test_large_constant_is_capped(self) -> None:
        traj = run(LINEAR, brownian_step_function(32, seed=4), [1.0])
        report = certify_approximation(traj, traj, gamma=0.45, C_n=7.0, c_cal=2.0)
        assert report.K_bound == pytest.approx((1.0 / 32) ** 0.35)

    def test_default_calibration_from_fixture(self) -> None:
        traj = run(LINEAR, brownian_step_function(8, seed=4), [1.0])
        report = certify_approximation(traj, traj, gamma=0.45, C_n=1.0)
        assert report.c_cal == load_acceptance("modified_equation_rate")["c_cal"]

    def test_modified_solution_close_to_recursion(self) -> None:
        rsf = brownian_step_function(256, seed=0)
        recursion = run(LINEAR, rsf, [1.0])
        modified = solve_modified_equation(LINEAR, lift(rsf), [1.0])
        distance = sup_distance(recursion, modified)
        assert 0.0 < distance < 0.1

    def test_mesh_mismatch(self) -> None:
        a = run(LINEAR, brownian_step_function(8, seed=1), [1.0])
        b = run(LINEAR, brownian_step_function(6, seed=1), [1.0])
        with pytest.raises(PartitionMismatchError):
            sup_distance(a, b)


class TestConventions:
    AREA = np.array([[0.0, 0.02], [-0.02, 0.0]])

    def area_step_function(self, Xi, convention: str) -> RoughStepFunction:
        return step_function(np.zeros((64, 2)), np.tile(Xi, (64, 1, 1)), convention=convention)

    @pytest.mark.parametrize("convention", ["earlier_later", "later_earlier"])
    def test_recursion_tracks_modified_equation(self, convention: str) -> None:
        bundle = get_field("scalar_pair")
        rsf = self.area_step_function(self.AREA, convention)
        recursion = run(bundle, rsf, [1.0])
        modified = solve_modified_equation(bundle, lift(rsf), [1.0])
        davie = solve_rde(bundle, lift(rsf), [1.0], RdeConfig(substeps_per_cell=16))
        assert sup_distance(recursion, modified) < 0.2
        assert abs(davie.terminal[0] - modified.terminal[0]) < 0.02

    @pytest.mark.parametrize("convention, expected", [("earlier_later", -0.28), ("later_earlier", 2.28)])
    def test_stored_area_sign_follows_convention(self, convention: str, expected: float) -> None:
        traj = run(get_field("scalar_pair"), self.area_step_function(self.AREA, convention), [1.0])
        assert traj.terminal[0] == pytest.approx(expected, abs=1e-12)

    def test_transposed_storage_gives_identical_solutions(self) -> None:
        bundle = get_field("scalar_pair")
        earlier = self.area_step_function(self.AREA, "earlier_later")
        later = self.area_step_function(self.AREA.T, "later_earlier")

        np.testing.assert_array_equal(run(bundle, later, [1.0]).values, run(bundle, earlier, [1.0]).values)
        np.testing.assert_allclose(
            solve_modified_equation(bundle, lift(later), [1.0]).values,
            solve_modified_equation(bundle, lift(earlier), [1.0]).values,
            atol=1e-12,
        )
        cfg = RdeConfig(substeps_per_cell=4)
        np.testing.assert_allclose(
            solve_rde(bundle, lift(later), [1.0], cfg).values,
            solve_rde(bundle, lift(earlier), [1.0], cfg).values,
            atol=1e-12,
        )


class TestCrossSolver:
    def test_constant_field_solvers_coincide(self) -> None:
        bundle = get_field("constant", C=[[1.0, -0.5]])
        rsf = brownian_step_function(64, d=2, seed=6, xi2_rule="refined(4)")
        recursion = run(bundle, rsf, [0.3])
        modified = solve_modified_equation(bundle, lift(rsf), [0.3])
        assert sup_distance(recursion, modified) < 1e-8
        expected = 0.3 + rsf.prefixX @ np.array([1.0, -0.5])
        np.testing.assert_allclose(recursion.values[:, 0], expected, atol=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_davie_within_consistency_band_of_modified_equation(self, seed: int) -> None:
        fixture = load_acceptance("cross_solver_consistency")
        lrp = lift(brownian_step_function(256, seed=seed))
        davie = solve_rde(LINEAR, lrp, [1.0], RdeConfig(substeps_per_cell=fixture["substeps"]))
        modified = solve_modified_equation(LINEAR, lrp, [1.0])
        assert abs(davie.terminal[0] - modified.terminal[0]) <= fixture["consistency_band"]

    def test_geometric_data_within_consistency_band(self) -> None:
        fixture = load_acceptance("cross_solver_consistency")
        lrp = lift(geometric_step_function(SMOOTH_INCREMENTS))
        davie = solve_rde(LINEAR, lrp, [1.0], RdeConfig(substeps_per_cell=fixture["substeps"]))
        modified = solve_modified_equation(LINEAR, lrp, [1.0])
        assert abs(davie.terminal[0] - modified.terminal[0]) <= fixture["consistency_band"]
        assert modified.terminal[0] == pytest.approx(np.exp(SMOOTH_INCREMENTS.sum()), abs=1e-8)
