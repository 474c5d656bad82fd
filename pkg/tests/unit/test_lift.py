import numpy as np
import pytest

from src.exceptions import InvalidArgumentError
from src.lift import holder_norm_estimate, holder_parts, lift
from src.rough_step import discrete_holder_norm
from src.tensor_algebra import TensorPair, cc_norm_upper, chen_mul, decompose

from .helpers import brownian_step_function, step_function


def random_step_function(n: int = 16, d: int = 2, seed: int = 6, convention: str = "earlier_later"):
    rng = np.random.default_rng(seed)
    xis = rng.standard_normal((n, d)) / np.sqrt(n)
    Xis = rng.standard_normal((n, d, d)) / n
    return step_function(xis, Xis, convention=convention)


class TestCellRealization:
    def test_geometric_cell_is_a_single_segment(self) -> None:
        xi = np.array([0.2, -0.1])
        lrp = lift(step_function([xi], [0.5 * np.outer(xi, xi)]))
        cell = lrp.cells[0]
        assert cell.segments.shape == (1, 2)
        assert np.max(np.abs(cell.z)) <= 1e-15
        assert cell.length == pytest.approx(np.linalg.norm(xi))

    def test_pure_area_cell_is_a_square_loop(self) -> None:
        area = 0.09
        Xi = np.array([[0.0, area], [-area, 0.0]])
        cell = lift(step_function([[0.0, 0.0]], [Xi])).cells[0]
        assert cell.segments.shape == (4, 2)
        np.testing.assert_allclose(np.linalg.norm(cell.segments, axis=1), np.sqrt(area))
        X, XX = cell.head(cell.t1)
        assert np.max(np.abs(X)) <= 1e-15
        np.testing.assert_allclose(XX, Xi, atol=1e-15)

    def test_negative_area_reverses_orientation(self) -> None:
        Xi = np.array([[0.0, -0.04], [0.04, 0.0]])
        cell = lift(step_function([[0.0, 0.0]], [Xi])).cells[0]
        _, XX = cell.head(cell.t1)
        np.testing.assert_allclose(XX, Xi, atol=1e-15)

    def test_scalar_cell_carries_defect(self) -> None:
        cell = lift(step_function([0.5], [0.3])).cells[0]
        assert cell.z[0, 0] == pytest.approx(0.3 - 0.125)
        assert cell.segments.shape == (1, 1)

    def test_length_within_twice_surrogate(self) -> None:
        lrp = lift(random_step_function(d=3))
        for cell in lrp.cells:
            g, _ = decompose(TensorPair(cell.xi, cell.Xi))
            surrogate = cc_norm_upper(g)
            assert cell.length <= 2.0 * surrogate + 1e-12
            assert cell.length >= surrogate - 1e-12


class TestLiftedRoughPath:
    @pytest.mark.parametrize("convention", ["earlier_later", "later_earlier"])
    def test_mesh_agreement(self, convention: str) -> None:
        rsf = random_step_function(convention=convention)
        lrp = lift(rsf)
        taus = rsf.partition.taus
        for j in range(0, rsf.partition.count + 1, 3):
            for k in range(j, rsf.partition.count + 1, 5):
                assert lrp.eval(taus[j], taus[k]).max_abs_diff(rsf.increment_between(j, k)) <= 1e-12

    def test_chen_inside_a_cell(self) -> None:
        lrp = lift(random_step_function())
        cell = lrp.cells[5]
        s, u, t = np.linspace(cell.t0, cell.t1, 5)[[0, 2, 3]] + np.array([0.1, 0.0, 0.2]) * cell.duration
        joined = chen_mul(lrp.eval(s, u), lrp.eval(u, t))
        assert joined.max_abs_diff(lrp.eval(s, t)) <= 1e-10

    def test_chen_across_cells(self) -> None:
        lrp = lift(random_step_function())
        rng = np.random.default_rng(7)
        for _ in range(100):
            s, u, t = np.sort(rng.uniform(0.0, 1.0, size=3))
            joined = chen_mul(lrp.eval(s, u), lrp.eval(u, t))
            assert joined.max_abs_diff(lrp.eval(s, t)) <= 1e-10

    def test_line_is_interpolated_linearly(self) -> None:
        xi = np.array([0.4, 0.8])
        lrp = lift(step_function([xi], [0.5 * np.outer(xi, xi)]))
        X, _ = lrp.point(0.25)
        np.testing.assert_allclose(X, 0.25 * xi, atol=1e-15)

    def test_reversed_interval(self) -> None:
        with pytest.raises(InvalidArgumentError):
            lift(random_step_function()).eval(0.7, 0.3)

    def test_subincrements_single_piece_is_stored_cell(self) -> None:
        rsf = random_step_function()
        (inc,) = lift(rsf).cell_subincrements(3, 1)
        np.testing.assert_array_equal(inc.a, rsf.increments.xis[3])
        np.testing.assert_array_equal(inc.M, rsf.increments.Xis[3])

    def test_subincrements_compose_to_cell(self) -> None:
        rsf = random_step_function()
        parts = lift(rsf).cell_subincrements(4, 8)
        joined = parts[0]
        for part in parts[1:]:
            joined = chen_mul(joined, part)
        assert joined.max_abs_diff(rsf.increments.cell(4)) <= 1e-12

    def test_pieces_cover_horizon(self) -> None:
        lrp = lift(random_step_function())
        pieces = lrp.pieces()
        assert pieces[0].t_start == 0.0
        assert pieces[-1].t_end == pytest.approx(1.0)
        assert sum(p.t_end - p.t_start for p in pieces) == pytest.approx(1.0)

    def test_polyline_samples(self) -> None:
        rsf = random_step_function(n=8)
        times, values = lift(rsf).polyline_samples(per_cell=4)
        assert times.shape == (33,)
        assert values.shape == (33, 2)
        np.testing.assert_allclose(values[-1], rsf.terminal().a, atol=1e-14)


class TestHolderEstimate:
    def test_zero_path(self) -> None:
        assert holder_norm_estimate(lift(step_function(np.zeros((4, 1)))), 0.5, 3) == 0.0

    def test_unit_line(self) -> None:
        q1, q2 = holder_parts(lift(step_function([1.0], [0.5])), 1.0, 4)
        assert q1 == pytest.approx(1.0, rel=1e-12)
        assert q2 == pytest.approx(np.sqrt(0.5), rel=1e-12)

    def test_dominates_discrete_norm_and_grows_with_levels(self) -> None:
        rsf = brownian_step_function(16, d=2, seed=8, xi2_rule="refined(4)")
        lrp = lift(rsf)
        coarse = holder_norm_estimate(lrp, 0.45, 4)
        fine = holder_norm_estimate(lrp, 0.45, 6)
        assert coarse >= discrete_holder_norm(rsf, 0.45) - 1e-12
        assert fine >= coarse - 1e-12

    def test_levels_must_be_positive(self) -> None:
        with pytest.raises(InvalidArgumentError):
            holder_parts(lift(step_function([1.0])), 0.5, 0)

    @pytest.mark.parametrize("n", [16, 64, 256])
    def test_brownian_ratio_stays_in_band(self, n: int) -> None:
        rsf = brownian_step_function(n, d=2, seed=3, xi2_rule="refined(4)")
        levels = int(np.ceil(np.log2(n))) + 2
        ratio = holder_norm_estimate(lift(rsf), 0.45, levels) / discrete_holder_norm(rsf, 0.45)
        assert 1.0 - 1e-12 <= ratio <= 6.0


class TestDilation:
    @pytest.mark.parametrize("lam", [0.5, 3.0])
    @pytest.mark.parametrize("convention", ["earlier_later", "later_earlier"])
    def test_lift_commutes_with_dilation(self, lam: float, convention: str) -> None:
        rsf = random_step_function(convention=convention)
        scaled = step_function(lam * rsf.increments.xis, lam ** 2 * rsf.increments.Xis, convention=convention)
        base, dilated = lift(rsf), lift(scaled)
        rng = np.random.default_rng(15)
        for s, t in np.sort(rng.uniform(0.0, 1.0, size=(30, 2)), axis=1):
            inc, inc_scaled = base.eval(s, t), dilated.eval(s, t)
            np.testing.assert_allclose(inc_scaled.a, lam * inc.a, atol=1e-12)
            np.testing.assert_allclose(inc_scaled.M, lam ** 2 * inc.M, atol=1e-11)

    def test_realization_length_scales_linearly(self) -> None:
        rsf = random_step_function()
        scaled = step_function(2.0 * rsf.increments.xis, 4.0 * rsf.increments.Xis)
        assert lift(scaled).realization_length() == pytest.approx(2.0 * lift(rsf).realization_length(), rel=1e-12)
