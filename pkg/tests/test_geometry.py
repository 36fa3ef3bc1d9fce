import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cayleyklein.errors import (
    DegenerateForm,
    DegenerateLine,
    DimensionMismatch,
    DomainViolation,
    InconsistentForm,
    NotPositiveDefinite,
    SingularBlock,
)
from cayleyklein.geometry import (
    BilinearForm,
    CurvedMahalanobisParam,
    GeometryKind,
    MixedMetric,
    adjugate,
    bilinear,
    canonical_decompose,
    ck_distance,
    classify_form,
    cross_ratio_distance_oracle,
    curved_to_form,
    distance_matrix,
    domain_contains,
    form_to_curved,
    lower_factor,
    mahalanobis_distance,
    mixed_distance,
    paired_distances,
    signature,
)
from randforms import form_and_points, random_elliptic, random_hyperbolic, hyperbolic_points

H2 = BilinearForm.hyperbolic(np.diag([1.0, 1.0, -1.0]))
E2 = BilinearForm.elliptic(np.eye(3))


class TestBilinearForm:
    def test_hyperbolic_sign_is_normalised(self):
        F = BilinearForm.hyperbolic(np.diag([-1.0, -1.0, 1.0]))
        np.testing.assert_array_equal(F.S, np.diag([1.0, 1.0, -1.0]))

    def test_negative_definite_elliptic_is_flipped(self):
        F = BilinearForm.elliptic(-2 * np.eye(3))
        np.testing.assert_array_equal(F.S, 2 * np.eye(3))

    def test_rejects_asymmetric(self):
        S = np.eye(3)
        S[0, 1] = 1e-3
        with pytest.raises(ValueError):
            BilinearForm.elliptic(S)

    def test_rejects_indefinite_elliptic(self):
        with pytest.raises(NotPositiveDefinite):
            BilinearForm.elliptic(np.diag([1.0, -1.0, 1.0]))

    def test_rejects_wrong_hyperbolic_signature(self):
        with pytest.raises(DegenerateForm):
            BilinearForm.hyperbolic(np.diag([1.0, -1.0, -1.0, 1.0]))
        with pytest.raises(DegenerateForm):
            BilinearForm.hyperbolic(np.diag([1.0, 0.0, -1.0]))

    def test_flat_has_zero_kappa(self):
        F = BilinearForm.flat(np.eye(2))
        assert F.kappa == 0.0 and F.dim == 2

    def test_block_accessors(self):
        S = np.array([[2.0, 0.5, 0.1], [0.5, 1.0, 0.2], [0.1, 0.2, 3.0]])
        F = BilinearForm.elliptic(S)
        np.testing.assert_array_equal(F.sigma, S[:2, :2])
        np.testing.assert_array_equal(F.a, S[:2, 2])
        assert F.b == 3.0


class TestBilinear:
    def test_canonical_hyperbolic_is_dot_minus_one(self, rng):
        p, q = rng.normal(size=2), rng.normal(size=2)
        assert bilinear(H2, p, q) == pytest.approx(p @ q - 1.0, abs=1e-14)

    def test_identity_at_origin(self):
        assert bilinear(E2, [0, 0], [0, 0]) == 1.0

    def test_block_expansion(self, rng):
        F = random_elliptic(rng, 3)
        p, q = rng.normal(size=3), rng.normal(size=3)
        expect = p @ F.sigma @ q + p @ F.a + F.a @ q + F.b
        assert bilinear(F, p, q) == pytest.approx(expect, rel=1e-13)
        assert bilinear(F, p, q) == pytest.approx(bilinear(F, q, p), rel=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            bilinear(E2, [0, 0, 0], [0, 0])


class TestDistances:
    def test_canonical_hyperbolic_value(self):
        assert ck_distance(H2, [0, 0], [0.5, 0]) == pytest.approx(math.atanh(0.5), abs=1e-15)
        assert ck_distance(H2, [0, 0], [0.5, 0]) == pytest.approx(0.5493061, abs=5e-8)

    def test_canonical_elliptic_value(self):
        assert ck_distance(E2, [0, 0], [1, 0]) == pytest.approx(math.pi / 4, abs=1e-15)

    def test_flat_is_mahalanobis(self, rng):
        Q = np.array([[2.0, 0.3], [0.3, 1.0]])
        p, q = rng.normal(size=2), rng.normal(size=2)
        assert ck_distance(BilinearForm.flat(Q), p, q) == pytest.approx(
            mahalanobis_distance(Q, p, q), rel=1e-14)

    @pytest.mark.parametrize("F", [H2, E2, BilinearForm.flat(np.eye(2))])
    def test_identity_is_exact_zero(self, F):
        assert ck_distance(F, [0.3, -0.2], [0.3, -0.2]) == 0.0

    def test_outside_domain_raises(self):
        with pytest.raises(DomainViolation):
            ck_distance(H2, [0, 0], [2, 0])

    def test_domain_contains(self):
        assert domain_contains(H2, [0, 0])
        assert not domain_contains(H2, [2, 0])
        assert domain_contains(E2, [100.0, -50.0])

    def test_close_pair_keeps_relative_accuracy(self):
        # arccosh of a value rounding to 1 would lose every digit here
        p = np.array([0.1, 0.2])
        q = p + np.array([1e-9, 0.0])
        d = ck_distance(H2, p, q)
        # metric tensor of the Klein model along x: ((1-|p|^2) - ... ) closed form
        r2 = p @ p
        g = ((1 - r2) + p[0] ** 2) / (1 - r2) ** 2
        assert d == pytest.approx(1e-9 * math.sqrt(g), rel=1e-6)

    def test_projective_scale_invariance(self, rng):
        for kind in ("elliptic", "hyperbolic"):
            F, P = form_and_points(rng, kind, 3, 20)
            G = F.scaled(7.3)
            np.testing.assert_allclose(distance_matrix(F, P), distance_matrix(G, P), atol=1e-12)

    def test_distance_matrix_matches_pairwise(self, rng):
        F, P = form_and_points(rng, "hyperbolic", 2, 6)
        D = distance_matrix(F, P)
        for i in range(6):
            for j in range(6):
                assert D[i, j] == pytest.approx(ck_distance(F, P[i], P[j]), abs=1e-15)

    def test_elliptic_bound(self, rng):
        F = random_elliptic(rng, 2, kappa=2.0)
        P = rng.uniform(-50, 50, size=(500, 2))
        assert np.all(paired_distances(F, P[:250], P[250:]) <= 2.0 * math.pi + 1e-12)


class TestCrossRatioOracle:
    def test_canonical_hyperbolic(self):
        assert cross_ratio_distance_oracle(H2, [0, 0], [0.5, 0]) == pytest.approx(0.5 * math.log(3), abs=1e-15)

    def test_elliptic_obtuse_angle(self):
        # points whose lifted vectors meet at more than a right angle
        p, q = np.array([2.0, 0.0]), np.array([-2.0, 0.1])
        assert cross_ratio_distance_oracle(E2, p, q) == pytest.approx(ck_distance(E2, p, q), abs=1e-12)
        assert ck_distance(E2, p, q) > math.pi / 2

    @pytest.mark.parametrize("kind", ["elliptic", "hyperbolic"])
    def test_matches_closed_form(self, rng, kind):
        F, P = form_and_points(rng, kind, 4, 200)
        for p, q in zip(P[:100], P[100:]):
            assert cross_ratio_distance_oracle(F, p, q) == pytest.approx(ck_distance(F, p, q), abs=1e-9)

    def test_collinear_additivity(self, rng):
        F, P = form_and_points(rng, "hyperbolic", 2, 2)
        r = P[0] + 0.3 * (P[1] - P[0])
        whole = cross_ratio_distance_oracle(F, P[0], P[1])
        parts = cross_ratio_distance_oracle(F, P[0], r) + cross_ratio_distance_oracle(F, r, P[1])
        assert whole == pytest.approx(parts, abs=1e-12)

    def test_near_coincident_points_tend_to_zero(self):
        assert cross_ratio_distance_oracle(H2, [0.2, 0.1], [0.2 + 1e-8, 0.1]) < 1e-7

    def test_line_on_conic(self):
        F = BilinearForm.hyperbolic(np.diag([1.0, 1.0, -1.0]))
        with pytest.raises((DegenerateLine, DomainViolation)):
            cross_ratio_distance_oracle(F, [1.0, 0.0], [1.0, 0.0])


class TestCurvedParam:
    @pytest.mark.parametrize("kappa,kind", [(-1.0, GeometryKind.HYPERBOLIC), (1.0, GeometryKind.ELLIPTIC)])
    def test_identity_params(self, kappa, kind):
        F = curved_to_form(CurvedMahalanobisParam(np.eye(2), np.zeros(2), kappa))
        assert F.kind is kind
        np.testing.assert_array_equal(F.S, np.diag([1.0, 1.0, math.copysign(1.0, kappa)]))
        back = form_to_curved(F)
        np.testing.assert_array_equal(back.Sigma, np.eye(2))
        np.testing.assert_array_equal(back.mu, np.zeros(2))
        assert back.kappa == kappa

    @pytest.mark.parametrize("kappa", [-0.7, 0.4, 2.5, -3.0])
    def test_round_trip(self, rng, kappa):
        A = rng.normal(size=(3, 3))
        c = CurvedMahalanobisParam(A @ A.T + np.eye(3), rng.normal(size=3), kappa)
        back = form_to_curved(curved_to_form(c))
        np.testing.assert_allclose(back.Sigma, c.Sigma, atol=1e-10)
        np.testing.assert_allclose(back.mu, c.mu, atol=1e-10)
        assert back.kappa == pytest.approx(kappa, rel=1e-10)
        np.testing.assert_allclose(curved_to_form(back).S, curved_to_form(c).S, atol=1e-10)

    def test_rejects_indefinite_sigma(self):
        with pytest.raises(NotPositiveDefinite):
            CurvedMahalanobisParam(np.diag([1.0, -1.0]), np.zeros(2), 1.0)

    def test_singular_block(self):
        S = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
        F = BilinearForm.hyperbolic(S)
        with pytest.raises(SingularBlock):
            form_to_curved(F)

    def test_inconsistent_form(self):
        F = BilinearForm.trusted(np.array([[1.0, 1.0], [1.0, 1.0]]), GeometryKind.ELLIPTIC, 1.0)
        with pytest.raises(InconsistentForm):
            form_to_curved(F)

    def test_flat_limit_decreases(self, rng):
        A = rng.normal(size=(2, 2))
        Sigma = A @ A.T + np.eye(2)
        mu = rng.uniform(-0.5, 0.5, size=2)
        P, Q = rng.uniform(0, 1, size=(2, 50, 2))
        flat = np.sqrt(np.einsum("ij,jk,ik->i", Q - P, Sigma, Q - P))
        for sign in (1.0, -1.0):
            errs = [np.max(np.abs(paired_distances(curved_to_form(
                CurvedMahalanobisParam(Sigma, mu, sign * k)), P, Q) - flat)) for k in (1e-1, 1e-2, 1e-3)]
            assert errs[0] > errs[1] > errs[2]


class TestClassify:
    def test_elliptic(self):
        assert classify_form(np.eye(3)).label == "elliptic"

    def test_hyperbolic_either_sign(self):
        assert classify_form(np.diag([1.0, 1.0, -1.0])).label == "hyperbolic"
        assert classify_form(np.diag([-1.0, -1.0, 1.0])).label == "hyperbolic"

    def test_degenerate_rank_two(self):
        g = classify_form(np.diag([1.0, 1.0, 0.0]))
        assert g.label == "dual-euclidean"
        assert g.primal_signature == (0, 1, 2)
        assert g.dual_signature == (0, 2, 1)
        assert not g.exact

    def test_adjugate_of_diagonal(self):
        np.testing.assert_allclose(adjugate(np.diag([2.0, 3.0, 5.0])), np.diag([15.0, 10.0, 6.0]))

    def test_adjugate_inverse_relation(self, rng):
        A = rng.normal(size=(4, 4))
        np.testing.assert_allclose(adjugate(A) @ A, np.linalg.det(A) * np.eye(4), atol=1e-10)

    def test_signature_counts_sum(self, rng):
        A = rng.normal(size=(5, 5))
        g = classify_form(A + A.T)
        assert sum(g.primal_signature) == 5 and sum(g.dual_signature) == 5


class TestCanonical:
    def test_already_canonical(self):
        m = canonical_decompose(H2)
        np.testing.assert_allclose(np.abs(m.rotation), np.eye(3), atol=1e-12)
        np.testing.assert_allclose(m.scale, np.ones(3), atol=1e-12)
        assert m.timelike_sign == -1

    def test_reassembles_matrix(self, rng):
        F, _ = random_hyperbolic(rng, 3)
        m = canonical_decompose(F)
        np.testing.assert_allclose(m.matrix(), F.S, atol=1e-10)
        np.testing.assert_allclose(m.rotation @ m.rotation.T, np.eye(4), atol=1e-10)
        assert np.all(m.scale > 0)

    def test_hyperbolic_distances_preserved(self, rng):
        F, A = random_hyperbolic(rng, 2)
        P = hyperbolic_points(rng, A, 200)
        m = canonical_decompose(F)
        C = m.canonical_form()
        np.testing.assert_allclose(paired_distances(F, P[:100], P[100:]),
                                   paired_distances(C, m.apply(P[:100]), m.apply(P[100:])), atol=1e-9)

    def test_scaled_identity_elliptic(self, rng):
        F = BilinearForm.elliptic(2.0 * np.eye(3))
        m = canonical_decompose(F)
        P = rng.uniform(-1, 1, size=(20, 2))
        np.testing.assert_allclose(distance_matrix(F, P), distance_matrix(m.canonical_form(), m.apply(P)),
                                   atol=1e-12)

    def test_degenerate(self):
        F = BilinearForm.trusted(np.diag([1.0, 1.0, 0.0]), GeometryKind.ELLIPTIC, 1.0)
        with pytest.raises(DegenerateForm):
            canonical_decompose(F)


class TestMixed:
    def test_endpoints(self, rng):
        p, q = [0.1, 0.2], [-0.3, 0.4]
        assert mixed_distance(MixedMetric(E2, H2, 1.0), p, q) == ck_distance(E2, p, q)
        assert mixed_distance(MixedMetric(E2, H2, 0.0), p, q) == ck_distance(H2, p, q)

    def test_half(self):
        expect = 0.5 * math.acos(1 / math.sqrt(1.25)) + 0.5 * math.atanh(0.5)
        assert mixed_distance(MixedMetric(E2, H2, 0.5), [0, 0], [0.5, 0]) == pytest.approx(expect, abs=1e-15)

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            MixedMetric(E2, H2, 1.5)

    def test_hyperbolic_domain_propagates(self):
        with pytest.raises(DomainViolation):
            mixed_distance(MixedMetric(E2, H2, 0.5), [0, 0], [3, 0])


class TestLowerFactor:
    def test_reconstructs(self, rng):
        A = rng.normal(size=(4, 4))
        M = A @ A.T + np.eye(4)
        L = lower_factor(M)
        np.testing.assert_allclose(L.T @ L, M, atol=1e-12)
        assert np.all(np.triu(L, 1) == 0) and np.all(np.diag(L) > 0)

    def test_signature_helper(self):
        assert signature(np.diag([-2.0, 0.0, 3.0, 4.0])) == (1, 1, 2)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 0.95), st.floats(0.0, 2 * math.pi), st.floats(0.01, 0.95), st.floats(0.0, 2 * math.pi))
def test_klein_disk_matches_rapidity_formula(r1, t1, r2, t2):
    """Canonical Klein-disk distance against its hyperboloid-model formula."""
    p = r1 * np.array([math.cos(t1), math.sin(t1)])
    q = r2 * np.array([math.cos(t2), math.sin(t2)])
    # lift to the hyperboloid: x / sqrt(1 - |x|^2), with time 1 / sqrt(1 - |x|^2)
    up = np.append(p, 1.0) / math.sqrt(1 - p @ p)
    uq = np.append(q, 1.0) / math.sqrt(1 - q @ q)
    cosh = up[2] * uq[2] - up[:2] @ uq[:2]
    expect = math.acosh(max(cosh, 1.0))
    assert ck_distance(H2, p, q) == pytest.approx(expect, abs=1e-7)
