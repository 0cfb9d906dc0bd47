import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.errors import DegenerateCoverError, ImproperCoverError, PreconditionError
from core.maps import MetricMap
from core.metric_core import PointedMetricSpace
from core.partitions import (
    Cover,
    build_nerve_map,
    canonical_partition,
    certify_partition_lipschitz,
    complement_distances,
    convex_combine,
    net_gap_transfer,
    sublinearity_gap,
)


def two_set_cover(path_of):
    return Cover.from_sets(path_of(2), {"U1": ["0", "1"], "U2": ["1", "2"]})


class TestCanonicalPartition:
    def test_worked_example(self, path_of):
        partition = canonical_partition(two_set_cover(path_of))
        assert partition.phi[:, 0].tolist() == [1.0, 0.5, 0.0]
        assert partition.S.tolist() == [2.0, 2.0, 2.0]
        assert np.allclose(partition.phi.sum(axis=1), 1.0)

    def test_gap(self, path_of):
        gap = sublinearity_gap(two_set_cover(path_of))
        assert gap.eps_star == 1.0
        assert gap.argmin == "2"

    def test_improper_cover(self, path_of):
        cover = Cover.from_sets(path_of(2), {"all": ["0", "1", "2"], "U": ["0"]})
        with pytest.raises(ImproperCoverError):
            canonical_partition(cover)

    def test_uncovered_point(self, path_of):
        with pytest.raises(PreconditionError):
            Cover.from_sets(path_of(2), {"U": ["0", "1"]})

    def test_degenerate_gap(self):
        space = PointedMetricSpace.from_matrix(
            ["a", "b", "c"], [[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 1.0, 0.0]], "a"
        )
        cover = Cover.from_sets(space, {"U1": ["a", "c"], "U2": ["b", "c"]})
        assert complement_distances(cover)[0].tolist() == [0.0, 0.0]
        with pytest.raises(DegenerateCoverError):
            canonical_partition(cover)

    def test_certificate(self, path_of):
        cert = certify_partition_lipschitz(canonical_partition(two_set_cover(path_of)))
        assert cert.proved_bound == pytest.approx(7.0)
        assert cert.certificates.holds
        assert max(cert.measured) <= cert.proved_bound

    def test_nerve_supports(self, path_of):
        nerve = build_nerve_map(canonical_partition(two_set_cover(path_of)))
        assert nerve.supports() == [(0,), (0, 1), (1,)]


@st.composite
def covered_clouds(draw):
    n = draw(st.integers(min_value=3, max_value=14))
    coords = draw(
        st.lists(
            st.tuples(st.integers(-20, 20), st.integers(-20, 20)),
            min_size=n,
            max_size=n,
            unique=True,
        )
    )
    k = draw(st.integers(min_value=2, max_value=4))
    owners = draw(st.lists(st.integers(0, k - 1), min_size=n, max_size=n))
    extra = draw(st.lists(st.tuples(st.integers(0, k - 1), st.integers(0, n - 1)), max_size=n))
    return coords, k, owners, extra


@settings(max_examples=50, deadline=None)
@given(covered_clouds())
def test_partition_bounds_hold(case):
    coords, k, owners, extra = case
    space = PointedMetricSpace.from_coordinates([str(i) for i in range(len(coords))], coords, "0")
    members = np.zeros((k, space.n), dtype=bool)
    members[owners, np.arange(space.n)] = True
    for i, x in extra:
        members[i, x] = True
    cover = Cover(space, tuple(f"U{i}" for i in range(k)), members)
    if not cover.proper:
        return
    partition = canonical_partition(cover)
    cert = certify_partition_lipschitz(partition)
    assert cert.certificates.holds
    assert np.allclose(partition.phi.sum(axis=1), 1.0)


@settings(max_examples=50, deadline=None)
@given(covered_clouds(), st.sampled_from([0.25, 2.0, 3.0, 10.0]))
def test_gap_ignores_metric_scaling(case, factor):
    coords, k, owners, extra = case
    space = PointedMetricSpace.from_coordinates([str(i) for i in range(len(coords))], coords, "0")
    members = np.zeros((k, space.n), dtype=bool)
    members[owners, np.arange(space.n)] = True
    for i, x in extra:
        members[i, x] = True
    names = tuple(f"U{i}" for i in range(k))
    cover = Cover(space, names, members)
    if not cover.proper:
        return
    stretched = Cover(space.scaled(factor), names, members)
    assert np.allclose(stretched.space.dist, factor * space.dist)
    assert sublinearity_gap(stretched).eps_star == pytest.approx(sublinearity_gap(cover).eps_star, rel=1e-9)


class TestConvexCombination:
    def test_bound_holds(self, path_of):
        space = path_of(6)
        gamma = canonical_partition(Cover.from_sets(space, {"a": ["0", "1", "2", "3"], "b": ["3", "4", "5", "6"]}))
        f = canonical_partition(Cover.from_sets(space, {"x": ["0", "1", "2"], "y": ["2", "3", "4", "5", "6"]}))
        g = canonical_partition(Cover.from_sets(space, {"x": ["0", "1", "2", "3", "4"], "y": ["5", "6"]}))
        result = convex_combine(
            MetricMap.total(space, gamma.phi), MetricMap.total(space, f.phi), MetricMap.total(space, g.phi)
        )
        assert result.check.holds
        assert result.measured <= result.bound
        assert np.allclose(result.h.values.sum(axis=1), 1.0)

    def test_gamma_must_be_two_dimensional(self, path_of):
        space = path_of(2)
        phi = canonical_partition(two_set_cover(path_of)).phi
        three = MetricMap.total(space, np.column_stack([phi, np.zeros(3)]))
        with pytest.raises(PreconditionError):
            convex_combine(three, three, three)

    def test_values_must_lie_in_a_simplex(self, path_of):
        space = path_of(2)
        bad = MetricMap.total(space, [[2.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        good = MetricMap.total(space, canonical_partition(two_set_cover(path_of)).phi)
        with pytest.raises(PreconditionError):
            convex_combine(good, bad, good)


class TestNetGapTransfer:
    def test_path(self, path_of):
        space = path_of(20)
        net = np.arange(0, 21, 2)
        report = net_gap_transfer(space, net, 2.0, [4, 8, 12], [6, 10, 14, 16, 18, 20])
        assert report.certificates.holds

    def test_sets_must_be_disjoint(self, path_of):
        with pytest.raises(PreconditionError):
            net_gap_transfer(path_of(4), [0, 2, 4], 2.0, [2], [2, 4])

    def test_net_is_checked(self, path_of):
        with pytest.raises(PreconditionError):
            net_gap_transfer(path_of(8), [0, 8], 2.0, [0], [8])
