import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.generators import cloud_space, twisted_cone_values
from app.loaders import space_from_dict
from core.errors import PreconditionError
from core.extension_engine import (
    SpliceParams,
    Strategy,
    extend_sphere_map,
    extension_modulus,
    mcshane_extend,
    nearest_extend,
    nearest_point_transfer,
    paste,
    restriction_holds,
    retract_extend,
    splice_extend,
)
from core.maps import MetricMap, NormPreservingMap, RadialGrowthBound, SphereMap, lip_constant, project
from core.metric_core import PointedMetricSpace


def restricted_cone_map(seed: int, n: int = 30, fraction: float = 0.5):
    rng = np.random.default_rng(seed)
    data = cloud_space(rng, n, 2, 10.0)
    space = space_from_dict(data)
    values = twisted_cone_values(np.asarray(data["coordinates"]), 2)
    keep = np.sort(rng.choice(n, size=max(1, int(fraction * n)), replace=False))
    return NormPreservingMap(space, keep, values[keep])


class TestMcShane:
    def test_values_on_path(self, path_of):
        f = MetricMap(path_of(4), [0, 4], [0.0, 2.0])
        g = mcshane_extend(f)
        assert g.values[:, 0].tolist() == [0.0, 0.5, 1.0, 1.5, 2.0]

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(min_value=-10, max_value=10, allow_nan=False), min_size=2, max_size=10), st.data())
    def test_keeps_values_and_constant(self, values, data):
        n = len(values) + 3
        space = space_from_dict({"points": [str(i) for i in range(n)], "coordinates": [[float(i * i)] for i in range(n)]})
        support = np.sort(data.draw(st.lists(st.integers(0, n - 1), min_size=len(values), max_size=len(values), unique=True)))
        f = MetricMap(space, support, values)
        g = mcshane_extend(f)
        assert restriction_holds(f, g)
        assert lip_constant(g) <= lip_constant(f) * (1 + 1e-9) + 1e-12

    def test_empty_domain(self, path_of):
        with pytest.raises(PreconditionError):
            mcshane_extend(MetricMap(path_of(2), [], np.zeros((0, 1))))


class TestSphereExtension:
    def test_nearest_copies_anchor_values(self, path_of):
        f = SphereMap(path_of(4), [0, 4], [[1.0, 0.0], [0.0, 1.0]])
        g = nearest_extend(f)
        assert g.values.tolist() == [[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]
        assert isinstance(g, SphereMap)

    def test_nearest_drops_norm_preservation(self, path_of):
        fp = NormPreservingMap(path_of(2), [1], [[1.0, 0.0]])
        g = nearest_extend(fp)
        assert type(g) is MetricMap
        assert g.values.tolist() == [[1.0, 0.0]] * 3

    def test_nearest_certificate(self, path_of):
        f = SphereMap(path_of(6), [0, 3, 6], [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        ext = extend_sphere_map(f)
        assert ext.strategy is Strategy.NEAREST
        assert ext.check.holds
        assert restriction_holds(f, ext.g)

    def test_projection_falls_back_when_degenerate(self, path_of):
        f = SphereMap(path_of(2), [0, 2], [[1.0, 0.0], [-1.0, 0.0]])
        ext = extend_sphere_map(f, strategy="project")
        assert ext.fallback
        assert ext.rho == 0.0
        assert ext.strategy is Strategy.NEAREST

    def test_projection_when_well_conditioned(self, path_of):
        theta = np.linspace(0.0, 0.3, 4)
        f = SphereMap(path_of(6), [0, 2, 4, 6], np.column_stack([np.cos(theta), np.sin(theta)]))
        ext = extend_sphere_map(f, strategy="project")
        assert not ext.fallback
        assert ext.strategy is Strategy.PROJECT
        assert ext.check.holds
        assert np.allclose(np.linalg.norm(ext.g.values, axis=1), 1.0)

    def test_unknown_strategy(self, path_of):
        f = SphereMap(path_of(2), [0], [[1.0, 0.0]])
        with pytest.raises(PreconditionError):
            extend_sphere_map(f, strategy="spline")


class TestPaste:
    def test_agreeing_pieces(self, path_of):
        space = path_of(10)
        g = np.arange(11.0) ** 0.5
        result = paste(MetricMap(space, np.arange(0, 6), g[:6]), MetricMap(space, np.arange(4, 11), g[4:]), 3.0)
        assert result.check.holds
        assert result.u.values[:, 0].tolist() == g.tolist()

    def test_disagreement(self, path_of):
        space = path_of(4)
        with pytest.raises(PreconditionError):
            paste(MetricMap(space, [0, 1, 2], [0.0, 1.0, 2.0]), MetricMap(space, [2, 3, 4], [5.0, 6.0, 7.0]), 2.0)

    def test_gap_too_small(self, path_of):
        space = path_of(4)
        with pytest.raises(PreconditionError):
            paste(MetricMap(space, [0, 1], [0.0, 1.0]), MetricMap(space, [2, 3], [2.0, 3.0]), 2.0)


class TestSplice:
    def test_extension_is_total_and_restricts(self):
        fp = restricted_cone_map(7)
        cert = splice_extend(fp, SpliceParams())
        assert cert.output_map.is_total
        assert cert.restriction_ok
        assert cert.norm_preserving_ok
        assert np.isfinite(cert.lip_out)

    def test_total_input_is_returned(self):
        fp = restricted_cone_map(3, fraction=1.0)
        cert = splice_extend(fp)
        assert cert.stages == []
        assert np.array_equal(cert.output_map.values, fp.values)

    def test_deterministic_across_worker_counts(self):
        fp = restricted_cone_map(11)
        one = splice_extend(fp, SpliceParams(max_workers=1))
        many = splice_extend(fp, SpliceParams(max_workers=8))
        assert np.array_equal(one.output_map.values, many.output_map.values)
        assert one.stages == many.stages

    def test_project_strategy(self):
        cert = splice_extend(restricted_cone_map(5), SpliceParams(strategy="project"))
        assert cert.restriction_ok and cert.norm_preserving_ok

    def test_bad_params(self):
        with pytest.raises(PreconditionError):
            SpliceParams(r=0.0)
        with pytest.raises(PreconditionError):
            SpliceParams(M=1.0)


class TestTransfers:
    def test_nearest_point_transfer(self):
        fp = restricted_cone_map(2)
        result = nearest_point_transfer(project(fp), np.arange(fp.space.n), eps=3.0)
        assert result.certificates.holds
        assert set(fp.support.tolist()) <= set(result.g.support.tolist())

    def test_transfer_onto_own_domain_is_identity(self):
        f = project(restricted_cone_map(3))
        result = nearest_point_transfer(f, f.support, eps=0.5)
        assert np.array_equal(result.g.support, f.support)
        assert np.array_equal(result.g.values, f.values)
        assert result.certificates.holds

    def test_transfer_to_a_close_point(self):
        space = PointedMetricSpace.from_coordinates(["0", "0.5"], [[0.0], [0.5]], "0")
        f = SphereMap(space, [0], [[1.0, 0.0]])
        result = nearest_point_transfer(f, [0, 1], eps=1.0)
        assert result.g.domain_ids == ["0", "0.5"]
        assert result.g.values.tolist() == [[1.0, 0.0], [1.0, 0.0]]
        assert result.discrete_bound["bound"] == pytest.approx(4.0)
        assert result.certificates.holds

    def test_far_targets_are_dropped(self):
        space = PointedMetricSpace.from_coordinates(["0", "0.5", "9"], [[0.0], [0.5], [9.0]], "0")
        f = SphereMap(space, [0], [[1.0, 0.0]])
        assert nearest_point_transfer(f, [0, 1, 2], eps=1.0).g.domain_ids == ["0", "0.5"]

    def test_retraction(self):
        fp = restricted_cone_map(4)
        result = retract_extend(fp, RadialGrowthBound(1.0, 0.0), R=3.0)
        assert result.certificates.holds
        assert restriction_holds(fp, result.g)
        assert type(result.g) is MetricMap

    def test_retraction_copies_nearest_anchor(self):
        space = PointedMetricSpace.from_coordinates(["1", "2", "3", "4"], [[1.0], [2.0], [3.0], [4.0]], "1")
        f = MetricMap(space, [1, 2], [[5.0], [7.0]])
        result = retract_extend(f, RadialGrowthBound(1.0, 0.0), R=1.0)
        assert not result.vacuous
        assert result.g.domain_ids == ["1", "2", "3", "4"]
        assert result.g.values[:, 0].tolist() == [5.0, 5.0, 7.0, 7.0]
        assert result.certificates.holds

    def test_retraction_checks_growth(self):
        fp = restricted_cone_map(4)
        with pytest.raises(PreconditionError):
            retract_extend(fp, RadialGrowthBound(2.0, 0.0), R=3.0)

    def test_vacuous_retraction(self, path_of):
        f = MetricMap(path_of(4), [0, 4], [[0.0], [4.0]])
        result = retract_extend(f, RadialGrowthBound(1.0, 0.0), R=0.5)
        assert result.vacuous


def test_modulus_columns(rng):
    family = []
    for size in (4, 6, 8, 10):
        data = cloud_space(rng, size, 2, 5.0)
        space = space_from_dict(data)
        angles = rng.uniform(0, 2 * np.pi, size=size // 2)
        family.append(SphereMap(space, np.arange(size // 2), np.column_stack([np.cos(angles), np.sin(angles)])))
    table = extension_modulus(family)
    raw = [row.c_raw for row in table.rows]
    assert [row.c_cumulative for row in table.rows] == list(np.maximum.accumulate(raw))
    regularized = [row.c_regularized for row in table.rows]
    assert all(a >= b for a, b in zip(regularized, regularized[1:]))
    assert sum(row.instances for row in table.rows) == len(family)
