import io

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose, assert_array_equal

import modeseek as ms
from modeseek import harness
from oracles import fd_grad, linear_scan

FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])

# rounded so squared distances cannot underflow
coord = st.floats(-3.0, 3.0).map(lambda v: round(v, 6))


def points(dim, min_n=1, max_n=40):
    return st.integers(min_n, max_n).flatmap(
        lambda n: arrays(np.float64, (n, dim), elements=coord))


@st.composite
def mixtures(draw, dim=2):
    k = draw(st.integers(1, 3))
    weights = draw(arrays(np.float64, k, elements=st.floats(0.1, 1.0)))
    means = draw(arrays(np.float64, (k, dim), elements=st.floats(-2.0, 2.0)))
    scales = draw(arrays(np.float64, k, elements=st.floats(0.3, 1.5)))
    covs = np.array([s**2 * np.eye(dim) for s in scales])
    return ms.GaussianMixture(weights / weights.sum(), means, covs)


class TestDensityProperties:
    @FAST
    @given(mix=mixtures(), x=arrays(np.float64, 2, elements=coord))
    def test_reflection_symmetry(self, mix, x):
        # mirrored copy of every component makes f even
        sym = ms.GaussianMixture(np.r_[mix.weights, mix.weights] / 2, np.r_[mix.means, -mix.means],
                                 np.r_[mix.covs, mix.covs])
        assert_allclose(sym.value(x), sym.value(-x), rtol=1e-12, atol=1e-300)
        assert_allclose(sym.grad(x), -sym.grad(-x), rtol=1e-10, atol=1e-15)

    @FAST
    @given(mix=mixtures(), x=arrays(np.float64, 2, elements=coord))
    def test_gradient_matches_differences(self, mix, x):
        assert_allclose(mix.grad(x), fd_grad(mix.value, x), rtol=1e-5, atol=1e-9)

    @FAST
    @given(mix=mixtures(), X=points(2, max_n=10))
    def test_batch_matches_pointwise(self, mix, X):
        assert_allclose(mix.values(X), [mix.value(x) for x in X], rtol=1e-14)


class TestKdeProperties:
    @FAST
    @given(X=points(2, min_n=2), x=arrays(np.float64, 2, elements=coord), h=st.floats(0.2, 2.0))
    def test_far_points_do_not_contribute(self, X, x, h):
        far = x + np.array([h * 1.5, 0.0])
        base = ms.Kde(X, h)
        more = ms.Kde(np.vstack([X, far]), h)
        # same unnormalized sum once the sample-size factor is removed
        assert_allclose(more.value(x) * more.n, base.value(x) * base.n, rtol=1e-12, atol=1e-300)

    @FAST
    @given(X=points(2, min_n=3), h=st.floats(0.5, 2.0), data=st.data())
    def test_shadow_identity(self, X, h, data):
        kde = ms.Kde(X, h)
        x = X[data.draw(st.integers(0, len(X) - 1))] + data.draw(arrays(np.float64, 2, elements=st.floats(-0.2, 0.2)))
        fK = kde.value(x)
        assume(fK > 0)
        c = ms.shadow(kde.profile, 2).c
        expected = kde.h**2 / (2 * c) * kde.shadow_kde().grad(x) / fK
        assert_allclose(kde.mean_shift(x), expected, rtol=1e-9, atol=1e-10)

    @FAST
    @given(X=points(1, min_n=2), h=st.floats(0.3, 2.0), x=coord)
    def test_nonnegative(self, X, h, x):
        assert ms.Kde(X, h).value([x]) >= 0.0


class TestMedoidProperties:
    @FAST
    @given(P=points(2, max_n=60), x=arrays(np.float64, 2, elements=coord), r=st.floats(0.0, 3.0))
    def test_radius_query_is_linear_scan(self, P, x, r):
        Y = ms.MedoidSet(P, f_values=np.ones(len(P)))
        assert_array_equal(ms.radius_query(Y, x, r), linear_scan(P, x, r))

    @FAST
    @given(P=points(2, max_n=40), start=st.integers(0, 39), eps=st.floats(0.1, 2.0))
    def test_finite_termination_and_certificate(self, reference, P, start, eps):
        Y = ms.MedoidSet(P, density=reference)
        i = start % len(Y)
        t = ms.medoid_max_shift(Y, i, eps)
        assert t.n_steps <= len(Y)
        assert np.all(np.diff(t.f_values) >= 0)
        end = np.flatnonzero(np.all(P == t.endpoint, axis=1))[0]
        window = linear_scan(P, t.endpoint, eps)
        assert Y.f_values[end] >= Y.f_values[window].max()

    @FAST
    @given(P=points(1, max_n=30), start=st.integers(0, 29), eps=st.floats(0.1, 2.0))
    def test_quick_shift_strictly_climbs(self, bimodal, P, start, eps):
        Y = ms.MedoidSet(P, density=bimodal)
        t = ms.quick_shift(Y, start % len(Y), eps)
        assert np.all(np.diff(t.f_values) > 0)


class TestShiftProperties:
    @settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(x=arrays(np.float64, 2, elements=st.floats(-2.0, 2.0)), eps=st.floats(0.05, 0.5))
    def test_max_shift_monotone_and_bounded(self, reference, x, eps):
        t = ms.max_shift(reference, x, ms.ShiftConfig(eps=eps))
        assert np.all(np.diff(t.f_values) >= 0)
        assert np.all(t.step_lengths <= eps * (1 + 1e-12))


finite = st.floats(-1e6, 1e6, allow_nan=False)


class TestSerializationProperties:
    @FAST
    @given(n=st.integers(1, 6), dim=st.integers(1, 3), data=st.data(),
           status=st.sampled_from(list(ms.Status)))
    def test_trajectory_csv_roundtrip(self, n, dim, data, status):
        pts = data.draw(arrays(np.float64, (n, dim), elements=finite))
        f = data.draw(arrays(np.float64, n, elements=st.floats(0, 10)))
        mode = 3 if status is ms.Status.CONVERGED else None
        t = ms.Trajectory(pts, f, ms.Terminal(status, mode))
        back = ms.read_trajectory(io.StringIO(t.to_csv()))
        assert_array_equal(back.points, t.points)
        assert_array_equal(back.f_values, t.f_values)
        assert back.terminal == t.terminal

    @FAST
    @given(rows=st.lists(st.tuples(st.sampled_from(["euler", "max_shift", "quick_shift"]),
                                   st.floats(1e-4, 1.0), st.integers(0, 50), st.data()), max_size=4))
    def test_report_roundtrip(self, tmp_path, rows):
        out = []
        for name, value, n, data in rows:
            resolved = data.draw(st.integers(0, n))
            frac = data.draw(st.floats(0.0, 1.0))
            out.append(harness.ReportRow(name, "eps", value, n, resolved, frac, data.draw(st.floats(0, 5)),
                                         0, 0, 0, 0.0))
        rep = ms.ExperimentReport(out)
        path = tmp_path / "r.csv"
        ms.emit_report(rep, path)
        assert ms.parse_report(path) == rep

    @FAST
    @given(est=points(2, max_n=6), truth=points(2, max_n=6))
    def test_match_bounds(self, est, truth):
        m = ms.match_modes(est, truth)
        assert len(m.pairs) == min(len(est), len(truth))
        assert m.hausdorff >= 0 and m.bottleneck >= 0
        assert m.cardinality_mismatch == (len(est) != len(truth))
        if not m.cardinality_mismatch:
            # every point has a partner within the bottleneck cost
            assert m.hausdorff <= m.bottleneck + 1e-12


class TestAgreementBounds:
    @settings(max_examples=5, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(eps=st.floats(0.05, 0.6))
    def test_agreement_in_unit_interval(self, reference, tmp_path, eps):
        cfg = harness.ExperimentConfig.from_dict({
            "model": {"inline": reference.to_dict()},
            "algorithms": [{"name": "max_shift", "values": [eps]}],
            "starts": {"kind": "grid", "num": 6},
            "record_timing": False,
        })
        row = harness.run_experiment(cfg).row("max_shift")
        assert 0.0 <= row.agreement_fraction <= 1.0
        assert row.n_resolved <= row.n_starts
