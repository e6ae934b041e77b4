import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.stats import norm

import modeseek as ms
from modeseek.medoid import (
    MetricView,
    max_shift_path,
    max_slope_shift_path,
    medoid_shift_path,
    quick_shift_path,
)
from oracles import linear_scan

ALLOWED = {"radius_query", "distances", "pairwise", "f", "__len__"}


class RecordingView:
    """Forwards the metric interface and records which methods were used."""

    def __init__(self, view):
        self._view = view
        self.used = set()

    def __len__(self):
        self.used.add("__len__")
        return len(self._view)

    def __getattr__(self, name):
        self.used.add(name)
        return getattr(self._view, name)


@pytest.fixture
def three(normal1d):
    return ms.MedoidSet([[0.0], [0.4], [0.9]], density=normal1d)


class TestMedoidSet:
    def test_values_and_verify(self, three, normal1d):
        assert_allclose(three.f_values, norm.pdf([0.0, 0.4, 0.9]), rtol=1e-14)
        assert three.verify()
        assert not ms.MedoidSet([[0.0]], f_values=[0.5]).verify(normal1d)

    def test_from_csv(self, tmp_path, normal1d):
        path = tmp_path / "y.csv"
        path.write_text("0.0\n0.4\n0.9\n")
        Y = ms.MedoidSet.from_csv(path, normal1d)
        assert_array_equal(Y.points[:, 0], [0.0, 0.4, 0.9])

    @pytest.mark.parametrize("kwargs", [dict(points=np.empty((0, 1)), f_values=[]),
                                        dict(points=[[0.0]]),
                                        dict(points=[[0.0], [1.0]], f_values=[1.0]),
                                        dict(points=[[0.0]], f_values=[np.nan])])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ms.MedoidSet(**kwargs)

    def test_view_exposes_metric_only(self, three):
        view = three.view()
        assert isinstance(view, MetricView)
        assert not hasattr(view, "points")
        assert not hasattr(view, "__dict__")


class TestRadiusQuery:
    def test_zero_radius_outside(self, three):
        assert len(ms.radius_query(three, [0.2], 0.0)) == 0

    def test_zero_radius_member(self, three):
        assert_array_equal(ms.radius_query(three, [0.4], 0.0), [1])

    def test_diameter_returns_all(self, three):
        assert_array_equal(ms.radius_query(three, [0.0], 0.9), [0, 1, 2])

    def test_matches_linear_scan(self, reference, rng):
        for n in (20, 200, 500):
            P = rng.normal(size=(n, 2))
            Y = ms.MedoidSet(P, density=reference)
            for x in rng.normal(size=(5, 2)):
                for r in (0.1, 0.5, 1.5):
                    assert_array_equal(ms.radius_query(Y, x, r), linear_scan(P, x, r))

    def test_index_location(self, three):
        assert_array_equal(three.radius_query(2, 0.5), [1, 2])

    def test_negative_radius(self, three):
        with pytest.raises(ValueError):
            three.radius_query(0, -0.1)


class TestMedoidMaxShift:
    def test_three_points(self, three):
        t = ms.medoid_max_shift(three, 2, 0.5)
        assert_array_equal(t.points[:, 0], [0.9, 0.4, 0.0])
        assert t.terminal.status is ms.Status.CONVERGED
        assert t.extras["certificate"] is True

    def test_singleton(self, normal1d):
        t = ms.medoid_max_shift(ms.MedoidSet([[1.3]], density=normal1d), 0, 0.5)
        assert_array_equal(t.points[:, 0], [1.3, 1.3])
        assert t.terminal.status is ms.Status.CONVERGED

    def test_isolated_start(self, three):
        t = ms.medoid_max_shift(three, [5.0], 0.5)
        assert t.n_steps == 0
        assert t.terminal.status is ms.Status.STALLED

    def test_external_start_needs_f0_without_density(self):
        Y = ms.MedoidSet([[0.0], [1.0]], f_values=[1.0, 0.5])
        with pytest.raises(ValueError):
            ms.medoid_max_shift(Y, [0.5], 1.0)
        t = ms.medoid_max_shift(Y, [0.5], 1.0, f0=0.1)
        assert_array_equal(t.endpoint, [0.0])


class TestMedoidMaxSlopeShift:
    def test_three_points(self, three):
        # exhaustive slope comparison from 0.9 over {0, 0.4}
        slopes = {y: (norm.pdf(y) - norm.pdf(0.9)) / abs(0.9 - y) for y in (0.0, 0.4)}
        assert max(slopes, key=slopes.get) == 0.4
        t = ms.medoid_max_slope_shift(three, 2, 1.0)
        assert_allclose(t.points[1], [0.4])
        assert_allclose(t.endpoint, [0.0])

    def test_no_improvement_stops(self, three):
        t = ms.medoid_max_slope_shift(three, 0, 1.0)
        assert t.n_steps == 0
        assert t.terminal.status is ms.Status.CONVERGED


class TestQuickShift:
    def test_three_points(self, three):
        t = ms.quick_shift(three, 2, 1.0)
        assert_array_equal(t.points[:, 0], [0.9, 0.4, 0.0])

    def test_start_at_argmax(self, three):
        assert ms.quick_shift(three, 0, 1.0).n_steps == 0

    @pytest.mark.parametrize("order, expected", [([1.0, -1.0, 0.0], 1.0), ([-1.0, 1.0, 0.0], -1.0)])
    def test_tie_smallest_index(self, order, expected):
        Y = ms.MedoidSet(np.array(order)[:, None], f_values=[1.0, 1.0, 0.0])
        for _ in range(2):
            t = ms.quick_shift(Y, 2, 2.0)
            assert_array_equal(t.points[1], [expected])


class TestMedoidShift:
    def test_flat_three(self):
        Y = ms.MedoidSet([[0.0], [1.0], [2.0]], f_values=[1.0, 1.0, 1.0])
        # sum_j (y - y_j)^2 over {0, 1, 2} is minimized at 1
        costs = {y: sum((y - v) ** 2 for v in (0, 1, 2)) for y in (0, 1, 2)}
        assert min(costs, key=costs.get) == 1
        for form in ("anchored", "printed"):
            t = ms.medoid_shift(Y, 0, 10.0, ms.FLAT, form=form)
            assert_array_equal(t.endpoint, [1.0])
            assert t.terminal.status is ms.Status.CONVERGED

    def test_symmetric_set(self, normal1d):
        Y = ms.MedoidSet([[-1.0], [0.0], [1.0]], density=normal1d)
        t = ms.medoid_shift(Y, 1, 1.5)
        assert_array_equal(t.endpoint, [0.0])

    def test_singleton(self, normal1d):
        Y = ms.MedoidSet([[0.3]], density=normal1d)
        assert_array_equal(ms.medoid_shift(Y, [0.5], 1.0).endpoint, [0.3])

    def test_isolated(self, three):
        assert ms.medoid_shift(three, [5.0], 0.5).terminal.status is ms.Status.STALLED

    def test_unknown_form(self, three):
        with pytest.raises(ValueError):
            ms.medoid_shift(three, 0, 0.5, form="other")

    def test_anchored_candidates_are_complete(self, reference, rng):
        # restricting candidates to 2h loses nothing against all medoids
        Y = ms.MedoidSet(ms.sample(reference, 300, 2), density=reference)
        view = Y.view()
        h = 0.4
        for q in rng.choice(len(Y), 10, replace=False):
            window = view.radius_query(int(q), h)
            w = ms.TRIWEIGHT.k(view.distances(int(q), window) ** 2 / h**2)
            full = (view.pairwise(np.arange(len(Y)), window) ** 2) @ w
            path, _ = medoid_shift_path(view, int(q), h, max_iters=1)
            assert path[0] == int(np.argmin(full))


class TestMetricOnly:
    def test_cores_use_only_the_view(self, reference):
        Y = ms.MedoidSet(ms.sample(reference, 200, 1), density=reference)
        for run in (lambda v: max_shift_path(v, 0, 0.3),
                    lambda v: max_slope_shift_path(v, 0, float(Y.f_values[0]), 0.3),
                    lambda v: quick_shift_path(v, 0, float(Y.f_values[0]), 0.3),
                    lambda v: medoid_shift_path(v, 0, 0.5)):
            view = RecordingView(Y.view())
            run(view)
            assert view.used <= ALLOWED


class TestCoveringRadius:
    def test_self_cover(self, bimodal):
        grid, step = ms.make_grid([[-6, 6]], spacing=0.01)
        cov = ms.covering_radius(ms.MedoidSet(grid, density=bimodal), bimodal, 0.01, grid=grid, resolution=step)
        assert cov.alpha == 0.0

    def test_grid_geometry(self, reference):
        g = 0.05
        Y = ms.MedoidSet(ms.make_grid(reference.box(5.0), spacing=g)[0], density=reference)
        cov = ms.covering_radius(Y, reference, 0.05, resolution=0.01)
        assert cov.alpha <= g * math.sqrt(2) / 2 + 1e-12
        assert cov.n_grid > 0

    def test_nonincreasing_in_level(self, reference):
        Y = ms.MedoidSet(ms.sample(reference, 500, 3), density=reference)
        grid = ms.make_grid(reference.box(3.0), num=80)[0]
        alphas = [ms.covering_radius(Y, reference, s, grid=grid).alpha for s in (0.02, 0.1, 0.2, 0.3)]
        assert all(b <= a for a, b in zip(alphas, alphas[1:]))

    def test_level_too_high(self, reference):
        Y = ms.MedoidSet([[0.0, 0.0]], density=reference)
        with pytest.raises(ms.LevelTooHighError):
            ms.covering_radius(Y, reference, 1.0)

    def test_level_must_be_positive(self, reference):
        with pytest.raises(ValueError):
            ms.covering_radius(ms.MedoidSet([[0.0, 0.0]], density=reference), reference, 0.0)


class TestFiniteTermination:
    def test_bounded_by_set_size(self, reference, rng):
        Y = ms.MedoidSet(ms.sample(reference, 150, 4), density=reference)
        for x0 in rng.uniform([-2, -1], [2, 2.5], size=(20, 2)):
            for fn in (ms.medoid_max_shift, ms.medoid_max_slope_shift, ms.quick_shift):
                t = fn(Y, x0, 0.4)
                assert t.n_steps <= len(Y)
                assert t.terminal.status is not ms.Status.MAX_ITERATIONS
