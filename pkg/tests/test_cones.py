import numpy as np
import pytest

from core.cones import (
    BaseKind,
    BaseMap,
    BaseSet,
    ConePoint,
    cone_transport,
    measure_transport_lipschitz,
    sphere_simplex_homeo,
    transport_norm_preserving,
)
from core.errors import PreconditionError
from core.maps import NormPreservingMap
from core.metric_core import PointedMetricSpace


class TestBaseSets:
    def test_membership(self):
        assert BaseSet(BaseKind.SPHERE, 1).contains([0.6, 0.8])
        assert not BaseSet(BaseKind.SPHERE, 1).contains([1.0, 1.0])
        assert BaseSet(BaseKind.SIMPLEX, 2).contains([0.2, 0.3, 0.5])
        boundary = BaseSet(BaseKind.SIMPLEX_BOUNDARY, 1)
        assert boundary.ambient_dim == 3
        assert boundary.contains([0.0, 0.4, 0.6])
        assert not boundary.contains([0.2, 0.3, 0.5])

    def test_samples_lie_in_the_set(self, rng):
        for kind in BaseKind:
            base = BaseSet(kind, 2)
            assert all(base.contains(k) for k in base.sample(rng, 50))

    def test_negative_dimension(self):
        with pytest.raises(PreconditionError):
            BaseSet(BaseKind.SPHERE, -1)


class TestHomeomorphism:
    def test_zero_sphere_distortion(self):
        homeo = sphere_simplex_homeo(0)
        assert homeo.distortion == pytest.approx(np.sqrt(2.0))
        assert sorted(homeo.u([1.0]).round(12).tolist()) == [0.0, 1.0]

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_inverse_pair(self, m, rng):
        homeo = sphere_simplex_homeo(m)
        xs = homeo.sphere.sample(rng, 40)
        ps = homeo.u(xs)
        assert all(homeo.boundary.contains(p) for p in ps)
        assert np.allclose(homeo.v(ps), xs, atol=1e-9)

    def test_distortion_is_finite(self):
        homeo = sphere_simplex_homeo(2, rng=np.random.default_rng(0), samples=60)
        assert homeo.lip_u > 0 and homeo.lip_v > 0
        assert np.isfinite(homeo.distortion)


class TestConeTransport:
    def test_apex_goes_to_apex(self):
        f = BaseMap.identity(BaseSet(BaseKind.SPHERE, 1))
        image = cone_transport(f, ConePoint(0.0, [1.0, 0.0]))
        assert image.is_apex

    def test_radius_is_kept(self):
        homeo = sphere_simplex_homeo(1)
        image = cone_transport(homeo.u_map(), ConePoint(3.0, [0.0, 1.0]))
        assert image.t == 3.0
        assert homeo.boundary.contains(image.k)

    def test_direction_outside_domain(self):
        f = BaseMap.identity(BaseSet(BaseKind.SPHERE, 1))
        with pytest.raises(PreconditionError):
            cone_transport(f, ConePoint(1.0, [2.0, 0.0]))

    def test_tabulated_map(self):
        circle = BaseSet(BaseKind.SPHERE, 1)
        f = BaseMap.tabulate(circle, circle, [[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [-1.0, 0.0]])
        assert f([0.0, 1.0]).tolist() == [-1.0, 0.0]
        with pytest.raises(PreconditionError):
            f([-1.0, 0.0])

    def test_norm_preserving_transport(self):
        space = PointedMetricSpace.from_coordinates(["o", "a", "b"], [[0.0, 0.0], [2.0, 0.0], [0.0, 3.0]], "o")
        fp = NormPreservingMap.total(space, [[0.0, 0.0], [2.0, 0.0], [0.0, 3.0]])
        rotate = BaseMap(BaseSet(BaseKind.SPHERE, 1), BaseSet(BaseKind.SPHERE, 1), fn=lambda k: np.array([-k[1], k[0]]))
        out = transport_norm_preserving(fp, rotate)
        assert np.allclose(out.values, [[0.0, 0.0], [0.0, 2.0], [-3.0, 0.0]])

    def test_measured_transport_constant(self, rng):
        homeo = sphere_simplex_homeo(1)
        report = measure_transport_lipschitz(homeo.u_map(), rng, samples=200)
        assert report.lip_cone > 0
        assert report.constant > 0
