"""Cayley-Klein bilinear forms and the distances measured against them.

A form is a symmetric ``(d+1) x (d+1)`` matrix ``S`` acting on points lifted
to homogeneous coordinates ``(x, 1)``.  Elliptic forms are definite, hyperbolic
forms have exactly one eigenvalue of minority sign, and flat forms hold an
ordinary ``d x d`` Mahalanobis matrix.

Hyperbolic forms are stored sign-normalised so that the minority eigenvalue
is negative; the distance domain is then ``{x : S_xx < 0}``.
"""

from dataclasses import dataclass, field
from enum import Enum
import math

import numpy as np

from .errors import (
    DegenerateForm,
    DegenerateLine,
    DimensionMismatch,
    DomainViolation,
    InconsistentForm,
    NotPositiveDefinite,
    NumericalFailure,
    SingularBlock,
)

SYMMETRY_RTOL = 1e-12
EIG_RTOL = 1e-10
FORM_RTOL = 1e-14
ARCCOSH_SLACK = 1e-9
_CHUNK = 1 << 16


class GeometryKind(Enum):
    ELLIPTIC = "elliptic"
    HYPERBOLIC = "hyperbolic"
    FLAT = "flat"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown geometry kind {value!r}") from None


def lift(X):
    """Append the homogeneous coordinate ``w = 1`` to points (last axis)."""
    X = np.asarray(X, dtype=float)
    return np.concatenate([X, np.ones(X.shape[:-1] + (1,))], axis=-1)


def signature(A, rtol=EIG_RTOL):
    """Return ``(n_negative, n_zero, n_positive)`` eigenvalue counts of ``A``."""
    w = np.linalg.eigvalsh(np.asarray(A, dtype=float))
    scale = np.max(np.abs(w)) if w.size else 0.0
    if scale == 0.0:
        return (0, len(w), 0)
    tol = rtol * scale
    return (int(np.sum(w < -tol)), int(np.sum(np.abs(w) <= tol)), int(np.sum(w > tol)))


def lower_factor(A):
    """Lower-triangular ``L`` with positive diagonal such that ``A = L.T @ L``.

    This is the Cholesky factorisation taken in reversed index order, so the
    factor ends up lower rather than upper triangular.
    """
    A = np.asarray(A, dtype=float)
    flip = A[::-1, ::-1]
    try:
        C = np.linalg.cholesky(flip)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("matrix is not positive definite") from None
    return np.ascontiguousarray(C.T[::-1, ::-1])


def _as_points(p, dim):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != dim:
        raise DimensionMismatch(f"expected points of dimension {dim}, got {p.shape[-1]}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point coordinates must be finite")
    return p


@dataclass(frozen=True, eq=False)
class BilinearForm:
    """A symmetric form together with its geometry kind and distance scale.

    ``kappa`` is signed by convention (positive elliptic, negative
    hyperbolic, zero flat); distances are scaled by ``|kappa|``.
    """

    S: np.ndarray
    kind: GeometryKind
    kappa: float = 1.0

    def __post_init__(self):
        kind = GeometryKind.parse(self.kind)
        S = np.array(self.S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise DimensionMismatch("form matrix must be square")
        if not np.all(np.isfinite(S)):
            raise ValueError("form matrix must be finite")
        smax = np.max(np.abs(S))
        if smax == 0.0:
            raise DegenerateForm("zero form")
        if np.max(np.abs(S - S.T)) > SYMMETRY_RTOL * smax:
            raise ValueError("form matrix is not symmetric")
        S = 0.5 * (S + S.T)
        kappa = float(self.kappa)

        if kind is GeometryKind.FLAT:
            lower_factor(S)
            kappa = 0.0
        else:
            if S.shape[0] < 2:
                raise DimensionMismatch("curved forms need at least a 2x2 matrix")
            if kappa == 0.0 or not math.isfinite(kappa):
                raise ValueError("curved forms need a finite nonzero kappa")
            if kind is GeometryKind.ELLIPTIC:
                if S[-1, -1] < 0:
                    S = -S
                lower_factor(S)
            else:
                neg, zero, pos = signature(S, FORM_RTOL)
                if zero:
                    raise DegenerateForm("form has a zero eigenvalue")
                if min(neg, pos) != 1:
                    raise DegenerateForm(
                        f"hyperbolic form needs exactly one minority eigenvalue, got signature {(neg, zero, pos)}")
                if pos == 1 and neg != 1:
                    S = -S
        S.setflags(write=False)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "kappa", kappa)

    @classmethod
    def elliptic(cls, S, kappa=1.0):
        return cls(S, GeometryKind.ELLIPTIC, kappa)

    @classmethod
    def hyperbolic(cls, S, kappa=-1.0):
        return cls(S, GeometryKind.HYPERBOLIC, kappa)

    @classmethod
    def flat(cls, Q):
        return cls(Q, GeometryKind.FLAT, 0.0)

    @property
    def dim(self):
        if self.kind is GeometryKind.FLAT:
            return self.S.shape[0]
        return self.S.shape[0] - 1

    @property
    def scale(self):
        return abs(self.kappa)

    @property
    def sigma(self):
        return self.S[:-1, :-1] if self.kind is not GeometryKind.FLAT else self.S

    @property
    def a(self):
        return self.S[:-1, -1]

    @property
    def b(self):
        return self.S[-1, -1]

    @classmethod
    def trusted(cls, S, kind, kappa):
        """Build without validation; for matrices that are valid by construction."""
        F = object.__new__(cls)
        object.__setattr__(F, "S", S)
        object.__setattr__(F, "kind", kind)
        object.__setattr__(F, "kappa", float(kappa))
        return F

    def scaled(self, factor):
        """Same geometry with ``S`` multiplied by a positive ``factor``."""
        return BilinearForm(self.S * factor, self.kind, self.kappa)

    def __repr__(self):
        return f"BilinearForm(kind={self.kind.value}, kappa={self.kappa!r}, dim={self.dim})"


def bilinear(F, p, q):
    """Evaluate ``(p, 1) S (q, 1)^T``."""
    if F.kind is GeometryKind.FLAT:
        raise ValueError("flat forms have no homogeneous bilinear form")
    p = _as_points(p, F.dim)
    q = _as_points(q, F.dim)
    return float(lift(p) @ F.S @ lift(q))


def quadratic_values(F, X):
    """``S_xx`` for each row of ``X``."""
    Xt = lift(_as_points(np.atleast_2d(X), F.dim))
    return np.einsum("ij,jk,ik->i", Xt, F.S, Xt)


def in_domain(F, X):
    """Boolean mask of rows of ``X`` inside the distance domain of ``F``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if F.kind is not GeometryKind.HYPERBOLIC:
        return np.ones(len(X), dtype=bool)
    return quadratic_values(F, X) < 0.0


def domain_contains(F, p):
    p = np.asarray(p, dtype=float)
    return bool(in_domain(F, p[None, :])[0])


def _pair_terms(S, P, Q):
    """Return ``S_pq, S_pp, S_qq`` and the Gram determinant ``S_pp S_qq - S_pq^2``.

    The determinant is evaluated as ``S_pp S_dd - S_pd^2`` with ``d = q - p``
    (a unimodular change of basis) so close pairs keep full relative accuracy.
    """
    d = P.shape[1]
    Pt = lift(P)
    Qt = lift(Q)
    SP = Pt @ S
    spp = np.einsum("ij,ij->i", SP, Pt)
    sqq = np.einsum("ij,jk,ik->i", Qt, S, Qt)
    spq = np.einsum("ij,ij->i", SP, Qt)
    delta = Q - P
    spd = np.einsum("ij,ij->i", SP[:, :d], delta)
    sdd = np.einsum("ij,jk,ik->i", delta, S[:d, :d], delta)
    gram = spp * sdd - spd * spd
    return spq, spp, sqq, gram


def _paired(F, P, Q):
    if F.kind is GeometryKind.FLAT:
        delta = Q - P
        return np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", delta, F.S, delta), 0.0))
    spq, spp, sqq, gram = _pair_terms(F.S, P, Q)
    if F.kind is GeometryKind.ELLIPTIC:
        return F.scale * np.arctan2(np.sqrt(np.maximum(gram, 0.0)), spq)
    if np.any(spp >= 0.0) or np.any(sqq >= 0.0):
        raise DomainViolation("point outside the hyperbolic domain")
    norm = spp * sqq
    excess = -gram / norm
    # arccosh(u) with u^2 - 1 = excess; reject u < 1 - slack
    if np.any(excess < (1.0 - ARCCOSH_SLACK) ** 2 - 1.0):
        raise NumericalFailure("arccosh argument below 1")
    return F.scale * np.arcsinh(np.sqrt(np.maximum(excess, 0.0)))


def paired_distances(metric, P, Q):
    """Distances between corresponding rows of ``P`` and ``Q``."""
    metric = as_metric(metric)
    if isinstance(metric, MixedMetric):
        return (metric.alpha * paired_distances(metric.elliptic_form, P, Q)
                + (1.0 - metric.alpha) * paired_distances(metric.hyperbolic_form, P, Q))
    P = _as_points(np.atleast_2d(P), metric.dim)
    Q = _as_points(np.atleast_2d(Q), metric.dim)
    if P.shape != Q.shape:
        raise DimensionMismatch("paired point arrays differ in shape")
    out = np.empty(len(P))
    for s in range(0, len(P), _CHUNK):
        out[s:s + _CHUNK] = _paired(metric, P[s:s + _CHUNK], Q[s:s + _CHUNK])
    return out


def distance_matrix(metric, A, B=None):
    """All-pairs distances, shape ``(len(A), len(B))``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    n, m = len(A), len(B)
    out = np.empty((n, m))
    rows = max(1, _CHUNK // max(m, 1))
    for s in range(0, n, rows):
        blk = A[s:s + rows]
        P = np.repeat(blk, m, axis=0)
        Q = np.tile(B, (len(blk), 1))
        out[s:s + rows] = paired_distances(metric, P, Q).reshape(len(blk), m)
    return out


def ck_distance(F, p, q):
    """Cayley-Klein (or flat Mahalanobis) distance between two points."""
    p = _as_points(p, F.dim)
    q = _as_points(q, F.dim)
    return float(_paired(F, p[None, :], q[None, :])[0])


# -- cross-ratio oracle ------------------------------------------------------

def cross_ratio_distance_oracle(F, p, q):
    """Distance from the log cross-ratio of ``p, q`` and the conic points on line ``pq``.

    Independent of :func:`ck_distance`: the line ``p + t (q - p)`` is
    intersected with the conic by solving the scalar quadratic in ``t``.
    """
    if F.kind is GeometryKind.FLAT:
        raise ValueError("flat forms have no fundamental conic")
    p = _as_points(p, F.dim)
    q = _as_points(q, F.dim)
    S = F.S
    pt = lift(p)
    dt = np.append(q - p, 0.0)
    c2 = float(dt @ S @ dt)
    c1 = 2.0 * float(pt @ S @ dt)
    c0 = float(pt @ S @ pt)
    size = max(abs(c0), abs(c1), abs(c2))
    if size == 0.0 or (abs(c2) <= 1e-300 and abs(c1) <= 1e-300):
        raise DegenerateLine("line lies on the conic")
    if F.kind is GeometryKind.HYPERBOLIC and (c0 >= 0.0 or c0 + c1 + c2 >= 0.0):
        raise DomainViolation("oracle needs interior points")

    if c2 == 0.0:
        # one conic point is at infinity along the line
        t1 = -c0 / c1
        cr = complex((0.0 - t1) / (1.0 - t1))
        logcr = np.log(cr)
    else:
        disc = complex(c1 * c1 - 4.0 * c2 * c0)
        root = np.sqrt(disc)
        # numerically stable pair of roots
        qv = -0.5 * (c1 + (root if c1 >= 0 else -root))
        t1 = qv / c2
        t2 = c0 / qv
        num = (0.0 - t1) * (1.0 - t2)
        den = (0.0 - t2) * (1.0 - t1)
        if F.kind is GeometryKind.ELLIPTIC:
            # cross-ratio num/den = z / conj(z); log taken factor-wise so the
            # angle runs over [0, pi] rather than folding at pi/2
            logcr = np.log(num) - np.log(den)
        else:
            logcr = np.log(complex(num / den))
    if F.kind is GeometryKind.HYPERBOLIC:
        c_dist = -F.kappa / 2.0
    else:
        c_dist = F.scale / 2j
    return float(abs(c_dist * logcr))


# -- curved Mahalanobis parametrisation ---------------------------------------

@dataclass(frozen=True, eq=False)
class CurvedMahalanobisParam:
    """``(Sigma, mu, kappa)``; sign of kappa selects elliptic (+) or hyperbolic (-)."""

    Sigma: np.ndarray
    mu: np.ndarray
    kappa: float

    def __post_init__(self):
        Sigma = np.array(self.Sigma, dtype=float)
        mu = np.array(self.mu, dtype=float).reshape(-1)
        if Sigma.shape != (len(mu), len(mu)):
            raise DimensionMismatch("Sigma and mu sizes disagree")
        lower_factor(Sigma)
        if self.kappa == 0.0 or not math.isfinite(self.kappa):
            raise ValueError("kappa must be finite and nonzero")
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def a(self):
        return -self.Sigma @ self.mu

    @property
    def b(self):
        return float(self.mu @ self.Sigma @ self.mu + math.copysign(1.0, self.kappa) / self.kappa ** 2)


def curved_to_form(c):
    """Block form ``[[Sigma, -Sigma mu], [-mu^T Sigma, mu^T Sigma mu +/- 1/kappa^2]]``.

    The resulting form measures distances on the scale ``1/|kappa|`` (the
    curvature radius), which is what makes the flat limit ``kappa -> 0`` work.
    """
    d = len(c.mu)
    S = np.empty((d + 1, d + 1))
    S[:d, :d] = c.Sigma
    S[:d, d] = c.a
    S[d, :d] = c.a
    S[d, d] = c.b
    kind = GeometryKind.ELLIPTIC if c.kappa > 0 else GeometryKind.HYPERBOLIC
    return BilinearForm(S, kind, 1.0 / c.kappa)


def form_to_curved(F):
    if F.kind is GeometryKind.FLAT:
        raise ValueError("flat forms have no curvature parametrisation")
    Sigma = F.sigma
    try:
        mu = -np.linalg.solve(Sigma, F.a)
    except np.linalg.LinAlgError:
        raise SingularBlock("top-left block is singular") from None
    if np.linalg.cond(Sigma) > 1e14:
        raise SingularBlock("top-left block is singular")
    rest = F.b - float(mu @ Sigma @ mu)
    if rest == 0.0:
        raise InconsistentForm("b - mu^T Sigma mu vanishes")
    kappa = math.copysign(1.0 / math.sqrt(abs(rest)), rest)
    return CurvedMahalanobisParam(np.array(Sigma), mu, kappa)


def curved_mahalanobis_distance(c, p, q):
    return ck_distance(curved_to_form(c), p, q)


def mahalanobis_distance(Q, p, q):
    delta = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    return float(np.sqrt(delta @ Q @ delta))


# -- signature classification ------------------------------------------------

def adjugate(A):
    """Transpose of the cofactor matrix; defined for singular ``A`` too."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 1:
        return np.ones((1, 1))
    cof = np.empty_like(A)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(A, i, axis=0), j, axis=1)
            cof[i, j] = (-1) ** (i + j) * np.linalg.det(minor)
    return cof.T


# planar rows: (primal, dual) as (neg, zero, pos), compared up to global sign
_PLANAR_TYPES = [
    ("elliptic", (0, 0, 3), (0, 0, 3)),
    ("hyperbolic", (1, 0, 2), (1, 0, 2)),
    ("dual-euclidean", (0, 1, 2), (0, 1, 2)),
    ("dual-pseudo-euclidean", (1, 1, 1), (0, 2, 1)),
    ("euclidean", (0, 2, 1), (0, 1, 2)),
    ("pseudo-euclidean", (0, 2, 1), (1, 1, 1)),
    ("galilean", (0, 2, 1), (0, 2, 1)),
]
UNCLASSIFIED = "degenerate-unclassified"


def _canon_sig(sig):
    n, z, p = sig
    return (min(n, p), z, max(n, p))


@dataclass(frozen=True)
class GeometryClass:
    label: str
    primal_signature: tuple
    dual_signature: tuple
    exact: bool = True


def classify_form(A):
    """Classify a symmetric matrix by the signatures of it and its adjugate.

    Non-degenerate forms are elliptic (definite) or hyperbolic (one minority
    eigenvalue).  Degenerate 3x3 forms get a planar label when both
    signatures match a row; otherwise a primal signature that singles out
    one row labels it with ``exact=False``.
    """
    A = np.asarray(A, dtype=float)
    size = A.shape[0]
    primal = signature(A)
    dual = signature(adjugate(A))
    n, z, p = primal
    if z == 0 and (n == 0 or p == 0):
        return GeometryClass("elliptic", primal, dual)
    if z == 0 and min(n, p) == 1:
        return GeometryClass("hyperbolic", primal, dual)
    if size == 3:
        cp, cd = _canon_sig(primal), _canon_sig(dual)
        for label, rp, rd in _PLANAR_TYPES:
            if rp == cp and rd == cd:
                return GeometryClass(label, primal, dual)
        rows = [label for label, rp, _ in _PLANAR_TYPES if rp == cp]
        if len(rows) == 1:
            return GeometryClass(rows[0], primal, dual, exact=False)
    return GeometryClass(UNCLASSIFIED, primal, dual, exact=False)


# -- canonical coordinates ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class CanonicalMap:
    """Coordinate change taking a form to identity / ``diag(1,...,1,-1)``."""

    rotation: np.ndarray
    scale: np.ndarray
    timelike_sign: int
    kappa: float = 1.0

    def lift(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return (lift(X) @ self.rotation) * self.scale

    def apply(self, X):
        """Map points to canonical affine coordinates (perspective division)."""
        single = np.ndim(X) == 1
        Y = self.lift(X)
        out = Y[:, :-1] / Y[:, -1:]
        return out[0] if single else out

    def canonical_form(self):
        n = len(self.scale)
        if self.timelike_sign > 0:
            return BilinearForm.elliptic(np.eye(n), abs(self.kappa))
        return BilinearForm.hyperbolic(np.diag([1.0] * (n - 1) + [-1.0]), -abs(self.kappa))

    def matrix(self):
        """Reassemble ``O D^1/2 diag(I, lambda) D^1/2 O^T``."""
        signs = np.ones(len(self.scale))
        signs[-1] = self.timelike_sign
        half = self.rotation * self.scale
        return (half * signs) @ half.T


def canonical_decompose(F):
    """Spectral factorisation of ``F.S`` into canonical coordinates.

    Elliptic forms put last the eigenvector with the largest homogeneous
    component, oriented so that ``w > 0`` near the affine origin; distances
    are preserved for points whose mapped ``w`` share a sign (always true in
    the hyperbolic case, where the distance uses ``|S_pq|``).
    """
    if F.kind is GeometryKind.FLAT:
        raise ValueError("flat forms are already Euclidean after Cholesky")
    lam, O = np.linalg.eigh(F.S)
    if np.min(np.abs(lam)) <= EIG_RTOL * np.max(np.abs(lam)):
        raise DegenerateForm("form has a zero eigenvalue")
    n = len(lam)
    if F.kind is GeometryKind.HYPERBOLIC:
        last = int(np.argmin(lam))
    else:
        last = int(np.argmax(np.abs(O[-1, :])))
    # spacelike axes ordered by their dominant coordinate, so diagonal forms map to themselves
    rest = sorted((i for i in range(n) if i != last), key=lambda i: int(np.argmax(np.abs(O[:, i]))))
    order = rest + [last]
    lam = lam[order]
    O = O[:, order].copy()
    for j in range(n):
        col = O[:, j]
        pivot = n - 1 if j == n - 1 else int(np.argmax(np.abs(col)))
        if col[pivot] < 0:
            O[:, j] = -col
    scale = np.sqrt(np.abs(lam))
    sign = 1 if lam[-1] > 0 else -1
    return CanonicalMap(O, scale, sign, F.kappa)


# -- mixed metric ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MixedMetric:
    """``alpha * d_elliptic + (1 - alpha) * d_hyperbolic``."""

    elliptic_form: BilinearForm
    hyperbolic_form: BilinearForm
    alpha: float
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.elliptic_form.kind is not GeometryKind.ELLIPTIC:
            raise ValueError("elliptic_form must be elliptic")
        if self.hyperbolic_form.kind is not GeometryKind.HYPERBOLIC:
            raise ValueError("hyperbolic_form must be hyperbolic")
        if self.elliptic_form.dim != self.hyperbolic_form.dim:
            raise DimensionMismatch("mixed components differ in dimension")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def dim(self):
        return self.elliptic_form.dim


def mixed_distance(M, p, q):
    return (M.alpha * ck_distance(M.elliptic_form, p, q)
            + (1.0 - M.alpha) * ck_distance(M.hyperbolic_form, p, q))


def as_metric(obj):
    """Accept forms, mixed metrics, or anything exposing ``form()``."""
    if isinstance(obj, (BilinearForm, MixedMetric)):
        return obj
    if hasattr(obj, "form"):
        return obj.form()
    raise TypeError(f"not a metric: {type(obj).__name__}")


def metric_domain(metric, X):
    """Rows of ``X`` where ``metric`` is defined."""
    metric = as_metric(metric)
    if isinstance(metric, MixedMetric):
        return in_domain(metric.hyperbolic_form, X)
    return in_domain(metric, X)
