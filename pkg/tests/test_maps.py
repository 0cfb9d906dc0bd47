import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.generators import path_space, spiked_circle_values, twisted_cone_values
from app.loaders import space_from_dict
from core.errors import NormPreservationError, PreconditionError, UnboundedProfileError
from core.maps import (
    MetricMap,
    NormPreservingMap,
    RadialGrowthBound,
    SpaceMap,
    SphereMap,
    annulus_profile,
    asymptotic_fit,
    compose,
    discrete_lipschitz_bound,
    growth_trend,
    induce,
    lip_constant,
    lip_on,
    lip_witness,
    profile_implies_lipschitz,
    project,
    rescale_transfer,
    sublinear_defect,
)
from core.metric_core import PointedMetricSpace
from core.sublinear import PiecewiseLinearFunction


def spiked_circle_map(N):
    space = space_from_dict(path_space(N, start=1))
    values = spiked_circle_values(N)
    return SphereMap(space, space.indices_of(values.keys()), np.array(list(values.values())))


def polar_map(radii=20, angles=12, twist=2):
    rho, theta = np.meshgrid(np.arange(1.0, radii + 1.0), 2 * np.pi * np.arange(angles) / angles)
    coords = np.vstack([[0.0, 0.0], np.column_stack([(rho * np.cos(theta)).ravel(), (rho * np.sin(theta)).ravel()])])
    space = PointedMetricSpace.from_coordinates([f"q{i}" for i in range(len(coords))], coords, "q0")
    return project(NormPreservingMap.total(space, twisted_cone_values(coords, twist)))


def cloud_map(rng, n=30, scale=20.0, twist=2):
    coords = rng.uniform(-scale, scale, size=(n, 2))
    coords[0] = 0.0
    space = PointedMetricSpace.from_coordinates([f"p{i}" for i in range(n)], coords, "p0")
    return project(NormPreservingMap.total(space, twisted_cone_values(coords, twist)))


class TestLipschitz:
    def test_square_on_three_points(self, path_of):
        f = MetricMap.total(path_of(2), [0.0, 1.0, 4.0])
        lip, pair = lip_witness(f)
        assert lip == pytest.approx(3.0)
        assert pair == ("1", "2")

    def test_single_point(self, path_of):
        assert lip_constant(MetricMap(path_of(2), [1], [7.0])) == 0.0

    def test_coincident_points_with_distinct_values(self):
        space = PointedMetricSpace.from_matrix(["a", "b"], [[0.0, 0.0], [0.0, 0.0]], "a")
        assert lip_constant(MetricMap.total(space, [0.0, 1.0])) == np.inf

    def test_restriction(self, path_of):
        f = MetricMap.total(path_of(3), [0.0, 1.0, 4.0, 4.5])
        assert lip_on(f, [0, 1]) == pytest.approx(1.0)
        assert lip_on(f, [2, 3]) == pytest.approx(0.5)

    def test_compose(self, path_of):
        space = path_of(3)
        shift = SpaceMap(space, [0, 1, 2], space, [1, 2, 3])
        f = MetricMap.total(space, [0.0, 2.0, 4.0, 6.0])
        g = compose(f, shift)
        assert g.values[:, 0].tolist() == [2.0, 4.0, 6.0]


class TestFits:
    def test_two_point_frontier(self, path_of):
        f = MetricMap(path_of(1), [0, 1], [0.0, 10.0])
        fit = asymptotic_fit(f)
        assert fit.pareto == [(0.0, 10.0), (10.0, 0.0)]
        assert fit.lam == 10.0 and fit.M == 0.0

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(min_value=-50, max_value=50, allow_nan=False), min_size=2, max_size=15))
    def test_every_knee_is_a_fit(self, values):
        space = PointedMetricSpace.from_coordinates(
            [str(i) for i in range(len(values))], [[float(i)] for i in range(len(values))], "0"
        )
        f = MetricMap.total(space, values)
        fit = asymptotic_fit(f)
        d = space.dist
        D = np.abs(np.subtract.outer(f.values[:, 0], f.values[:, 0]))
        for lam, M in fit.pareto:
            assert (D <= lam * d + M + 1e-9 * (1 + np.abs(D))).all()
        assert fit.lam == pytest.approx(lip_constant(f), rel=1e-9, abs=1e-12)

    def test_discrete_bound(self, path_of):
        f = MetricMap(path_of(4), [0, 2, 4], [0.0, 1.0, 0.0])
        report = discrete_lipschitz_bound(f)
        assert report["eps"] == 2.0
        assert report["best"] >= report["measured_lip"]


class TestNormPreserving:
    def test_sphere_values_must_be_unit(self, path_of):
        with pytest.raises(PreconditionError):
            SphereMap.total(path_of(1), [[1.0, 0.0], [0.5, 0.0]])

    def test_norms_must_match(self, path_of):
        with pytest.raises(NormPreservationError):
            NormPreservingMap.total(path_of(1), [[0.0, 0.0], [2.0, 0.0]])

    def test_project_then_induce(self, rng):
        f = cloud_map(rng)
        again = project(induce(f))
        assert np.allclose(again.values, f.values)

    def test_basepoint_gets_default_direction(self, path_of):
        fp = NormPreservingMap.total(path_of(1), [[0.0, 0.0], [0.0, 1.0]])
        assert project(fp).values[0].tolist() == [1.0, 0.0]


class TestProfiles:
    def test_growth_on_spiked_circle_map(self):
        profile = annulus_profile(spiked_circle_map(1024), 1.0, 2.0, forward_check=False)
        for row in profile.rows:
            if 2 <= row.k <= 10:
                assert row.scaled_x == pytest.approx(2**row.k / np.sqrt(2 ** (row.k - 2) + 1), rel=1e-9)
                assert row.scaled_x >= 0.5 * 2 ** (row.k / 2)
        assert profile.trend == "unbounded-trend"
        with pytest.raises(UnboundedProfileError):
            profile_implies_lipschitz(spiked_circle_map(64), annulus_profile(spiked_circle_map(64), 1.0))

    def test_forward_and_converse_on_cone_map(self):
        f = polar_map()
        profile = annulus_profile(f, 1.0, 2.0)
        assert profile.forward.holds
        assert profile.bounded
        bound = profile_implies_lipschitz(f, profile)
        assert bound.check.holds
        assert bound.measured <= bound.bound
        assert bound.inner is not None
        assert bound.inner.theorem and bound.inner.holds
        assert bound.inner.checked == f.size - 1
        assert "inner_certificate" in bound.to_dict()

    def test_bad_parameters(self):
        f = spiked_circle_map(16)
        with pytest.raises(PreconditionError):
            annulus_profile(f, 0.0)
        with pytest.raises(PreconditionError):
            annulus_profile(f, 1.0, 1.0)

    def test_trend_labels(self):
        assert growth_trend([1.0, 1.0, 1.0, 1.0])[0] == "bounded"
        assert growth_trend([1.0, 1.0, 4.0, 8.0]) == ("unbounded-trend", 8.0)


class TestDefect:
    def test_defect_decays(self):
        f = spiked_circle_map(1024)
        s = PiecewiseLinearFunction.from_callable(np.sqrt, np.arange(0.0, 1025.0))
        early = sublinear_defect(f, s, 16, with_bound=False)
        assert early.defect == pytest.approx(1 / 3)
        later = sublinear_defect(f, s, 256, with_bound=False)
        assert later.defect == pytest.approx(1 / np.sqrt(129))
        last = sublinear_defect(f, s, 1024, with_bound=False)
        assert last.defect == 0.0 and last.pairs == 0

    def test_decay_against_largest_populated_radius(self):
        f = spiked_circle_map(1024)
        s = PiecewiseLinearFunction.from_callable(np.sqrt, np.arange(0.0, 1025.0))
        early = sublinear_defect(f, s, 16, with_bound=False)
        late = sublinear_defect(f, s, 512, with_bound=False)
        assert late.pairs > 0
        assert late.defect == pytest.approx(1 / np.sqrt(257))
        assert early.defect >= 4 * late.defect

    def test_bound_certificates(self):
        f = spiked_circle_map(64)
        s = PiecewiseLinearFunction.from_callable(np.sqrt, np.arange(0.0, 65.0))
        report = sublinear_defect(f, s, 4)
        assert report.bound is not None
        assert report.defect <= report.bound
        assert report.certificates.holds

    def test_negative_radius(self):
        s = PiecewiseLinearFunction(np.array([[0.0, 1.0]]))
        with pytest.raises(PreconditionError):
            sublinear_defect(spiked_circle_map(8), s, -1.0)


class TestRescale:
    def test_transfer_holds(self, rng):
        f = cloud_map(rng, n=25)
        s = MetricMap(f.space, f.support, 2.0 * f.norms + 3.0)
        transfer = rescale_transfer(f, s, RadialGrowthBound(2.0, 3.0))
        assert transfer.certificates.holds
        assert transfer.constants["c_prime"] == 1.0
        assert transfer.constants["threshold"] == 3.0

    def test_growth_bound_is_enforced(self, rng):
        f = cloud_map(rng, n=10)
        s = MetricMap(f.space, f.support, np.ones(f.size))
        with pytest.raises(PreconditionError):
            rescale_transfer(f, s, RadialGrowthBound(2.0, 0.0))

    def test_growth_parameters(self):
        with pytest.raises(PreconditionError):
            RadialGrowthBound(0.0, 1.0)
        with pytest.raises(PreconditionError):
            RadialGrowthBound(1.0, -1.0)
