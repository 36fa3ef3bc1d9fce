import math

import numpy as np
import pytest

from cayleyklein.compgeom import (
    Hyperplane,
    MahalanobisQuadric,
    ball_to_quadric,
    bisector,
    ck_voronoi,
    clip_polygon,
    contains,
    conic_polyline,
    grid_oracle,
    is_convex,
    polygon_area,
    quadric_to_sphere,
    radical_hyperplane,
    sphere_samples,
    to_power_ball,
)
from cayleyklein.errors import (
    CoincidentSites,
    DegenerateShape,
    DomainViolation,
    DuplicateSites,
    NonpositiveRadius,
    NotPositiveDefinite,
    OutOfDomainSite,
)
from cayleyklein.geometry import BilinearForm, ck_distance, in_domain
from randforms import hyperbolic_points, random_elliptic, random_hyperbolic

H2 = BilinearForm.hyperbolic(np.diag([1.0, 1.0, -1.0]))
E2 = BilinearForm.elliptic(np.eye(3))


def points_on(plane, F, centre, count=100, span=3.0):
    """Points of a 2D line, kept where the form is defined."""
    foot = -plane.offset * plane.normal
    along = np.array([-plane.normal[1], plane.normal[0]])
    t = np.linspace(-span, span, count)
    X = foot + t[:, None] * along
    return X[in_domain(F, X)]


class TestBisector:
    def test_mirror_pair_hyperbolic(self):
        h = bisector(H2, [0.4, 0.0], [-0.4, 0.0])
        assert abs(abs(h.normal[0]) - 1.0) < 1e-15 and abs(h.offset) < 1e-15

    def test_mirror_pair_elliptic(self):
        h = bisector(E2, [0.0, 1.5], [0.0, -1.5])
        assert abs(abs(h.normal[1]) - 1.0) < 1e-15 and abs(h.offset) < 1e-15

    def test_negative_side_is_closer_to_first(self, rng):
        F, A = random_hyperbolic(rng, 2)
        p, q, x = hyperbolic_points(rng, A, 3)
        h = bisector(F, p, q)
        closer_p = ck_distance(F, p, x) < ck_distance(F, q, x)
        assert (h.evaluate(x)[0] < 0) == closer_p

    @pytest.mark.parametrize("kind", ["elliptic", "hyperbolic"])
    def test_equidistance(self, rng, kind):
        for _ in range(5):
            if kind == "elliptic":
                F = random_elliptic(rng, 2)
                p, q = rng.uniform(-1, 1, size=(2, 2))
            else:
                F, A = random_hyperbolic(rng, 2)
                p, q = hyperbolic_points(rng, A, 2)
            h = bisector(F, p, q)
            X = points_on(h, F, p)
            gaps = [abs(ck_distance(F, p, x) - ck_distance(F, q, x)) for x in X]
            assert len(X) > 0 and max(gaps) <= 1e-8

    def test_coincident(self):
        with pytest.raises(CoincidentSites):
            bisector(H2, [0.1, 0.1], [0.1, 0.1])

    def test_out_of_domain(self):
        with pytest.raises(DomainViolation):
            bisector(H2, [0.1, 0.1], [1.1, 0.1])

    def test_hyperplane_normalises(self):
        h = Hyperplane(np.array([3.0, 4.0]), 10.0)
        np.testing.assert_allclose(h.normal, [0.6, 0.8])
        assert h.offset == pytest.approx(2.0)


class TestPowerBall:
    def test_origin_centre(self):
        b = to_power_ball(H2, [0.0, 0.0])
        np.testing.assert_array_equal(b.center, [0.0, 0.0])

    def test_symmetric_pair(self):
        b1, b2 = to_power_ball(H2, [0.3, 0.1]), to_power_ball(H2, [-0.3, 0.1])
        h = radical_hyperplane(b1, b2)
        assert abs(h.offset) < 1e-15 and abs(abs(h.normal[0]) - 1) < 1e-15

    @pytest.mark.parametrize("kind", ["elliptic", "hyperbolic"])
    def test_radical_lines_are_bisectors(self, rng, kind):
        if kind == "elliptic":
            F = random_elliptic(rng, 2)
            P = rng.uniform(-1, 1, size=(5, 2))
        else:
            F = H2
            P = hyperbolic_points(rng, np.eye(3), 5)
        balls = [to_power_ball(F, p) for p in P]
        for i in range(5):
            for j in range(i + 1, 5):
                h = radical_hyperplane(balls[i], balls[j])
                assert h.same_as(bisector(F, P[i], P[j])) <= 1e-9
                # same orientation: negative side belongs to the first site
                np.testing.assert_allclose(h.normal, bisector(F, P[i], P[j]).normal, atol=1e-9)

    def test_outside_domain(self):
        with pytest.raises(DomainViolation):
            to_power_ball(H2, [1.5, 0.0])

    def test_works_in_three_dimensions(self, rng):
        F, A = random_hyperbolic(rng, 3)
        P = hyperbolic_points(rng, A, 2)
        h = radical_hyperplane(to_power_ball(F, P[0]), to_power_ball(F, P[1]))
        assert h.same_as(bisector(F, P[0], P[1])) <= 1e-9


class TestPolygons:
    SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])

    def test_clip_half(self):
        half = clip_polygon(self.SQUARE, np.array([1.0, 0.0]), -0.5)
        assert polygon_area(half) == pytest.approx(0.5)
        assert is_convex(half)

    def test_clip_all_and_none(self):
        assert len(clip_polygon(self.SQUARE, np.array([1.0, 0.0]), -2.0)) == 4
        assert len(clip_polygon(self.SQUARE, np.array([1.0, 0.0]), 2.0)) == 0

    def test_contains(self):
        mask = contains(self.SQUARE, np.array([[0.5, 0.5], [1.5, 0.5]]))
        np.testing.assert_array_equal(mask, [True, False])

    def test_conic_polyline(self):
        poly = conic_polyline(H2)
        assert len(poly) == 720
        np.testing.assert_allclose(np.hypot(*poly.T), 1.0, atol=1e-14)
        assert polygon_area(poly) > 0

    def test_unbounded_domain_is_rejected(self):
        F = BilinearForm.hyperbolic(np.diag([1.0, -1.0, 1.0]))
        with pytest.raises(DomainViolation):
            conic_polyline(F)


class TestVoronoi:
    def test_two_symmetric_sites(self):
        V = ck_voronoi(H2, [[0.5, 0.0], [-0.5, 0.0]])
        assert len(V.cells) == 2
        for cell in V.cells:
            xs = cell.polygon[:, 0]
            assert np.all(xs >= -1e-12) or np.all(xs <= 1e-12)
            assert np.min(np.abs(xs)) < 1e-12
        total = sum(polygon_area(c.polygon) for c in V.cells)
        assert total == pytest.approx(polygon_area(V.domain), rel=1e-12)

    def test_elliptic_identity_three_sites(self, rng):
        sites = np.array([[0.2, 0.1], [-0.5, 0.4], [0.3, -0.6]])
        V = ck_voronoi(E2, sites, window=(-2, -2, 2, 2))
        assert grid_oracle(V, size=120).fraction == 1.0

    def test_cells_are_convex_and_disjoint(self, rng):
        sites = hyperbolic_points(rng, np.eye(3), 12, radius=0.8)
        V = ck_voronoi(H2, sites, 2)
        assert all(is_convex(c.polygon) for c in V.cells)
        total = sum(polygon_area(c.polygon) for c in V.cells)
        assert total == pytest.approx(polygon_area(V.domain), rel=1e-9)

    def test_eight_sites_order_three(self, rng):
        sites = hyperbolic_points(rng, np.eye(3), 8, radius=0.85)
        V = ck_voronoi(H2, sites, 3)
        check = grid_oracle(V, size=150)
        assert check.fraction >= 0.995
        assert np.all(check.boundary_gaps <= 1e-6)
        assert all(len(c.owners) == 3 for c in V.cells)

    def test_general_hyperbolic_form(self):
        # off-centre ellipse domain with a tilted axis
        F = BilinearForm.hyperbolic(np.array([[2.0, 0.3, 0.1], [0.3, 1.0, -0.2], [0.1, -0.2, -1.5]]))
        sites = np.array([[0.1, 0.2], [-0.3, 0.1], [0.2, -0.4], [-0.1, -0.2]])
        assert in_domain(F, sites).all()
        check = grid_oracle(ck_voronoi(F, sites), size=120)
        assert check.fraction >= 0.995

    def test_duplicate_sites(self):
        with pytest.raises(DuplicateSites):
            ck_voronoi(H2, [[0.1, 0.1], [0.1, 0.1], [0.2, 0.0]])

    def test_out_of_domain_site(self):
        with pytest.raises(OutOfDomainSite):
            ck_voronoi(H2, [[0.1, 0.1], [1.2, 0.0]])

    def test_bad_order(self):
        with pytest.raises(ValueError):
            ck_voronoi(H2, [[0.1, 0.1], [0.2, 0.0]], order=2)


class TestBalls:
    @pytest.mark.parametrize("r", [0.1, 0.7, 2.0])
    def test_hyperbolic_origin_closed_form(self, r):
        q = ball_to_quadric(H2, [0.0, 0.0], r)
        np.testing.assert_allclose(q.shape, math.cosh(r) ** 2 * np.eye(2), atol=1e-12)
        np.testing.assert_allclose(q.center, 0.0, atol=1e-12)
        assert q.radius_sq == pytest.approx(math.sinh(r) ** 2, abs=1e-12)
        assert math.sqrt(q.radius_sq / q.shape[0, 0]) == pytest.approx(math.tanh(r), abs=1e-12)

    @pytest.mark.parametrize("r", [0.1, 0.7, 1.4])
    def test_elliptic_origin_closed_form(self, r):
        q = ball_to_quadric(E2, [0.0, 0.0], r)
        np.testing.assert_allclose(q.shape, math.cos(r) ** 2 * np.eye(2), atol=1e-12)
        assert q.radius_sq == pytest.approx(math.sin(r) ** 2, abs=1e-12)
        assert math.sqrt(q.radius_sq / q.shape[0, 0]) == pytest.approx(math.tan(r), abs=1e-12)

    def test_shrinks_to_centre(self):
        c = np.array([0.3, -0.2])
        q = ball_to_quadric(H2, c, 1e-7)
        assert q.radius_sq < 1e-12
        np.testing.assert_allclose(q.center, c, atol=1e-9)

    @pytest.mark.parametrize("kind", ["elliptic", "hyperbolic"])
    def test_sphere_samples_on_quadric(self, rng, kind):
        for _ in range(4):
            if kind == "elliptic":
                F = random_elliptic(rng, 2)
                c = rng.uniform(-1, 1, size=2)
                r = rng.uniform(0.05, 1.2)
            else:
                F, A = random_hyperbolic(rng, 2)
                c = hyperbolic_points(rng, A, 1, radius=0.6)[0]
                r = rng.uniform(0.05, 1.5)
            while True:
                try:
                    q = ball_to_quadric(F, c, r)
                    break
                except DegenerateShape:
                    r *= 0.5
            X = sphere_samples(F, c, r)
            assert np.max(np.abs([ck_distance(F, c, x) - r for x in X])) <= 1e-12
            assert np.max(np.abs(q.residual(X))) <= 1e-8 * max(1.0, abs(q.radius_sq))

    def test_three_dimensional_ball(self, rng):
        F, A = random_hyperbolic(rng, 3)
        c = hyperbolic_points(rng, A, 1, radius=0.5)[0]
        dirs = rng.normal(size=(20, 3))
        X = sphere_samples(F, c, 0.8, directions=dirs)
        q = ball_to_quadric(F, c, 0.8)
        assert np.max(np.abs(q.residual(X))) <= 1e-8 * max(1.0, abs(q.radius_sq))

    def test_curvature_scales_radius(self):
        F = BilinearForm.hyperbolic(np.diag([1.0, 1.0, -1.0]), kappa=-2.0)
        q = ball_to_quadric(F, [0.0, 0.0], 1.0)
        assert q.radius_sq == pytest.approx(math.sinh(0.5) ** 2, abs=1e-12)

    def test_elliptic_radius_limit(self):
        with pytest.raises(ValueError):
            ball_to_quadric(E2, [0.0, 0.0], 2.0)

    def test_unbounded_elliptic_ball(self):
        F = BilinearForm.elliptic(np.eye(3))
        with pytest.raises(DegenerateShape):
            ball_to_quadric(F, [3.0, 0.0], 1.0)

    def test_nonpositive_radius(self):
        with pytest.raises(NonpositiveRadius):
            ball_to_quadric(H2, [0.0, 0.0], 0.0)


class TestQuadricToSphere:
    def test_identity(self):
        L, r = quadric_to_sphere(MahalanobisQuadric(np.eye(2), np.zeros(2), 4.0))
        np.testing.assert_array_equal(L, np.eye(2))
        assert r == 2.0

    def test_diagonal(self):
        L, r = quadric_to_sphere(MahalanobisQuadric(np.diag([4.0, 1.0]), np.zeros(2), 1.0))
        np.testing.assert_allclose(L, np.diag([2.0, 1.0]))
        t = np.linspace(0, 2 * np.pi, 30)
        ellipse = np.column_stack([0.5 * np.cos(t), np.sin(t)])
        np.testing.assert_allclose(np.linalg.norm(ellipse @ L.T, axis=1), 1.0, atol=1e-14)

    def test_chained_with_hyperbolic_ball(self):
        r = 0.9
        L, rad = quadric_to_sphere(ball_to_quadric(H2, [0.0, 0.0], r))
        np.testing.assert_allclose(L, math.cosh(r) * np.eye(2), atol=1e-12)
        assert rad == pytest.approx(math.sinh(r), abs=1e-12)

    def test_random_quadric_points(self, rng):
        F, A = random_hyperbolic(rng, 2)
        c = hyperbolic_points(rng, A, 1, radius=0.5)[0]
        q = ball_to_quadric(F, c, 0.7)
        L, rad = quadric_to_sphere(q)
        X = sphere_samples(F, c, 0.7)
        np.testing.assert_allclose(np.linalg.norm((X - q.center) @ L.T, axis=1), rad, atol=1e-10)

    def test_errors(self):
        with pytest.raises(NotPositiveDefinite):
            quadric_to_sphere(MahalanobisQuadric(np.diag([1.0, -1.0]), np.zeros(2), 1.0))
        with pytest.raises(NonpositiveRadius):
            quadric_to_sphere(MahalanobisQuadric(np.eye(2), np.zeros(2), 0.0))
