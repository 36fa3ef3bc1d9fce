"""Bisectors, power balls, clipped Voronoi diagrams and ball conversions.

Every Cayley-Klein bisector is a hyperplane.  Writing ``S_px`` for the
bilinear form and ``w_p(x) = S_px / sqrt|S_pp|``, a point ``x`` is closer to
site ``p`` than to ``q`` exactly when ``w_p(x) > w_q(x)``.  Since
``|x|^2 - w_p(x)`` is the power of ``x`` with respect to a Euclidean ball,
the Voronoi diagram of the sites is a power diagram restricted to the
domain of the form.
"""

from dataclasses import dataclass, field
import itertools
import math

import numpy as np

from .errors import (
    CoincidentSites,
    DegenerateShape,
    DimensionMismatch,
    DomainViolation,
    DuplicateSites,
    NonpositiveRadius,
    NotPositiveDefinite,
    OutOfDomainSite,
)
from .geometry import (
    GeometryKind,
    ck_distance,
    distance_matrix,
    in_domain,
    lift,
    lower_factor,
    quadratic_values,
)

CONIC_SEGMENTS = 720
GRID_SIZE = 200
COINCIDENT_TOL = 1e-12
SHAPE_TOL = 1e-12


def _curved(F):
    if F.kind is GeometryKind.FLAT:
        raise ValueError("this construction needs an elliptic or hyperbolic form")


def _point(F, p):
    p = np.asarray(p, dtype=float)
    if p.shape != (F.dim,):
        raise DimensionMismatch(f"expected a point of dimension {F.dim}")
    return p


@dataclass(frozen=True)
class Hyperplane:
    """The locus ``normal . x + offset = 0`` with a unit normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if not norm > 0.0:
            raise DegenerateShape("hyperplane normal vanishes")
        object.__setattr__(self, "normal", n / norm)
        object.__setattr__(self, "offset", float(self.offset) / norm)

    def evaluate(self, X):
        """Signed Euclidean distance of each row of ``X`` to the hyperplane."""
        return np.atleast_2d(X) @ self.normal + self.offset

    def same_as(self, other):
        """Largest coefficient difference after orienting both the same way."""
        a = np.append(self.normal, self.offset)
        b = np.append(other.normal, other.offset)
        if a @ b < 0:
            b = -b
        return float(np.max(np.abs(a - b)))


@dataclass(frozen=True)
class PowerBall:
    """Euclidean ball in power-diagram sense; ``radius_sq`` may be negative."""

    center: np.ndarray
    radius_sq: float

    def power(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        diff = X - self.center
        return np.einsum("ij,ij->i", diff, diff) - self.radius_sq


def radical_hyperplane(b1, b2):
    """Points with equal power to both balls; negative side favours ``b1``."""
    normal = 2.0 * (b2.center - b1.center)
    offset = (b1.center @ b1.center - b1.radius_sq) - (b2.center @ b2.center - b2.radius_sq)
    return Hyperplane(normal, offset)


def _site_scores(F, P):
    """Rows ``(g_i, h_i)`` with ``w_i(x) = g_i . x + h_i``."""
    P = np.atleast_2d(P)
    spp = quadratic_values(F, P)
    root = np.sqrt(np.abs(spp))
    g = (P @ F.sigma + F.a) / root[:, None]
    h = (P @ F.a + F.b) / root
    return g, h


def bisector(F, p, q):
    """Hyperplane of points equidistant from ``p`` and ``q``.

    The returned plane is negative on the side closer to ``p``.
    """
    _curved(F)
    p, q = _point(F, p), _point(F, q)
    if np.linalg.norm(p - q) <= COINCIDENT_TOL:
        raise CoincidentSites("bisector of coincident points")
    if F.kind is GeometryKind.HYPERBOLIC and not in_domain(F, np.vstack([p, q])).all():
        raise DomainViolation("bisector sites must lie in the domain")
    sp = math.sqrt(abs(float(lift(p) @ F.S @ lift(p))))
    sq = math.sqrt(abs(float(lift(q) @ F.S @ lift(q))))
    Sig, a, b = F.sigma, F.a, F.b
    normal = sp * (Sig @ q) - sq * (Sig @ p) + (sp - sq) * a
    offset = sp * (a @ q + b) - sq * (a @ p + b)
    return Hyperplane(normal, offset)


def to_power_ball(F, p):
    """Euclidean ball whose power diagram reproduces the Cayley-Klein cells."""
    _curved(F)
    p = _point(F, p)
    if not in_domain(F, p[None, :])[0]:
        raise DomainViolation("site lies outside the domain")
    spp = abs(float(lift(p) @ F.S @ lift(p)))
    root = math.sqrt(spp)
    v = F.sigma @ p + F.a
    center = v / (2.0 * root)
    radius_sq = v @ v / (4.0 * spp) + (F.a @ p + F.b) / root
    return PowerBall(center, float(radius_sq))


# -- polygons ----------------------------------------------------------------

def clip_polygon(poly, normal, offset, tol=1e-12):
    """Keep the part of a convex polygon where ``normal . x + offset <= 0``."""
    if len(poly) == 0:
        return poly
    vals = poly @ normal + offset
    scale = tol * max(1.0, float(np.max(np.abs(vals))))
    inside = vals <= scale
    if inside.all():
        return poly
    if not inside.any():
        return poly[:0]
    out = []
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        if inside[i]:
            out.append(poly[i])
        if inside[i] != inside[j]:
            t = vals[i] / (vals[i] - vals[j])
            out.append(poly[i] + t * (poly[j] - poly[i]))
    return np.array(out).reshape(-1, 2)


def polygon_area(poly):
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def is_convex(poly, tol=1e-12):
    """Counterclockwise convexity test by the sign of successive cross products."""
    if len(poly) < 3:
        return False
    e = np.roll(poly, -1, axis=0) - poly
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    scale = tol * max(1.0, float(np.max(np.abs(poly))) ** 2)
    return bool(np.all(cross >= -scale))


def contains(poly, X, tol=0.0):
    """Mask of rows of ``X`` inside a counterclockwise convex polygon."""
    X = np.atleast_2d(X)
    nxt = np.roll(poly, -1, axis=0)
    e = nxt - poly
    rel_x = X[:, None, 0] - poly[None, :, 0]
    rel_y = X[:, None, 1] - poly[None, :, 1]
    length = np.hypot(e[:, 0], e[:, 1])
    side = (e[None, :, 0] * rel_y - e[None, :, 1] * rel_x) / np.where(length > 0, length, 1.0)
    return np.all(side >= -tol, axis=1)


def domain_polygon(F, window=None, segments=CONIC_SEGMENTS):
    """Convex polygon standing in for the domain of a planar form.

    For a hyperbolic form whose domain is the inside of an ellipse this is the
    inscribed ``segments``-gon.  Elliptic forms are defined on the whole plane,
    so the rectangle ``window = (xmin, ymin, xmax, ymax)`` is used instead.
    """
    _curved(F)
    if F.dim != 2:
        raise DimensionMismatch("planar diagrams need d = 2")
    if F.kind is GeometryKind.HYPERBOLIC:
        return conic_polyline(F, segments)
    if window is None:
        raise ValueError("an elliptic diagram needs a clipping window")
    x0, y0, x1, y1 = (float(v) for v in window)
    if not (x1 > x0 and y1 > y0):
        raise ValueError("window must have positive width and height")
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def conic_polyline(F, segments=CONIC_SEGMENTS):
    """Vertices of the ellipse ``S_xx = 0`` (counterclockwise, inscribed)."""
    Sig = F.sigma
    try:
        L = lower_factor(Sig)
    except NotPositiveDefinite:
        raise DomainViolation("the domain is not bounded by an ellipse") from None
    m = -np.linalg.solve(Sig, F.a)
    rho_sq = F.a @ np.linalg.solve(Sig, F.a) - F.b
    if rho_sq <= 0.0:
        raise DomainViolation("the domain is empty")
    t = 2.0 * np.pi * np.arange(segments) / segments
    U = np.column_stack([np.cos(t), np.sin(t)]) * math.sqrt(rho_sq)
    poly = m + np.linalg.solve(L, U.T).T
    if polygon_area(poly) < 0:
        poly = poly[::-1]
    return poly


def default_window(sites, margin=0.5):
    """Bounding box of ``sites`` grown by ``margin`` times its extent."""
    sites = np.atleast_2d(sites)
    lo, hi = sites.min(axis=0), sites.max(axis=0)
    pad = margin * np.maximum(hi - lo, 1.0)
    return (lo[0] - pad[0], lo[1] - pad[1], hi[0] + pad[0], hi[1] + pad[1])


# -- diagrams ----------------------------------------------------------------

@dataclass
class VoronoiCell:
    owners: tuple
    polygon: np.ndarray


@dataclass
class VoronoiDiagram2D:
    """Cells of a (k-order) Cayley-Klein Voronoi diagram in the plane."""

    form: object
    sites: np.ndarray
    order: int
    cells: list
    domain: np.ndarray
    balls: list = field(default_factory=list)

    def cells_of(self, i):
        """Cells whose owner set contains site ``i``."""
        return [c for c in self.cells if i in c.owners]

    def locate(self, X, tol=1e-9):
        """Owner set of the first cell containing each row of ``X`` (None if none)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = [None] * len(X)
        todo = np.ones(len(X), dtype=bool)
        for cell in self.cells:
            hit = todo.copy()
            hit[todo] = contains(cell.polygon, X[todo], tol)
            for r in np.flatnonzero(hit):
                out[r] = cell.owners
            todo &= ~hit
            if not todo.any():
                break
        return out


def _check_sites(F, sites):
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    if sites.shape[1] != 2 or F.dim != 2:
        raise DimensionMismatch("planar diagrams need 2D sites and a 2D form")
    if len(sites) < 2:
        raise ValueError("need at least two sites")
    gaps = distance_matrix_euclid(sites)
    np.fill_diagonal(gaps, np.inf)
    if np.min(gaps) <= COINCIDENT_TOL:
        raise DuplicateSites("two sites coincide")
    if F.kind is GeometryKind.HYPERBOLIC and not in_domain(F, sites).all():
        raise OutOfDomainSite("site outside the hyperbolic domain")
    return sites


def distance_matrix_euclid(A):
    diff = A[:, None, :] - A[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def grid_points(domain, size=GRID_SIZE):
    """``size x size`` lattice over the bounding box of ``domain``, kept if inside it."""
    lo, hi = domain.min(axis=0), domain.max(axis=0)
    step = (hi - lo) / size
    xs = lo[0] + step[0] * (np.arange(size) + 0.5)
    ys = lo[1] + step[1] * (np.arange(size) + 0.5)
    G = np.array(np.meshgrid(xs, ys)).reshape(2, -1).T
    return G[contains(domain, G)]


def top_k(scores, k):
    """Sorted index tuples of the ``k`` largest entries in each row."""
    idx = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    return np.sort(idx, axis=1)


def ck_voronoi(F, sites, order=1, window=None, grid=GRID_SIZE):
    """Clipped (k-order) Voronoi diagram of planar sites under a curved form.

    Order 1 intersects, for every site, the half-planes on which it beats each
    other site.  Order ``k`` takes candidate owner sets from the ``k`` best
    sites at a ``grid x grid`` lattice of domain points and intersects the
    half-planes on which every owner beats every non-owner.  Cells are clipped
    to :func:`domain_polygon`; empty cells are dropped.
    """
    _curved(F)
    sites = _check_sites(F, sites)
    n = len(sites)
    order = int(order)
    if not 1 <= order < n:
        raise ValueError("order must satisfy 1 <= k < number of sites")
    if F.kind is GeometryKind.ELLIPTIC and window is None:
        window = default_window(sites)
    domain = domain_polygon(F, window)
    g, h = _site_scores(F, sites)

    if order == 1:
        candidates = [(i,) for i in range(n)]
    else:
        seeds = np.vstack([grid_points(domain, grid), domain])
        owners = top_k(seeds @ g.T + h, order)
        candidates = sorted(set(map(tuple, owners.tolist())))

    cells = []
    for owners in candidates:
        rest = [s for s in range(n) if s not in owners]
        poly = domain
        # owner t beats s where (g_s - g_t) x + (h_s - h_t) <= 0
        for t, s in itertools.product(owners, rest):
            poly = clip_polygon(poly, g[s] - g[t], h[s] - h[t])
            if len(poly) < 3:
                break
        if len(poly) >= 3 and abs(polygon_area(poly)) > 0.0:
            cells.append(VoronoiCell(tuple(int(o) for o in owners), poly))
    balls = [to_power_ball(F, p) for p in sites]
    return VoronoiDiagram2D(F, sites, order, cells, domain, balls)


@dataclass
class GridAgreement:
    """Outcome of comparing a diagram with brute-force nearest-k labels."""

    points: int
    agree: int
    disagreements: np.ndarray
    boundary_gaps: np.ndarray

    @property
    def fraction(self):
        return self.agree / self.points if self.points else 1.0


def grid_oracle(diagram, size=GRID_SIZE):
    """Check cell membership against brute-force ``k`` nearest sites.

    Uses grid points strictly inside the domain polygon.  For every
    disagreement the Euclidean distance to the nearest relevant bisector (the
    one separating the k-th and (k+1)-th nearest sites) is reported.
    """
    F, sites, k = diagram.form, diagram.sites, diagram.order
    G = grid_points(diagram.domain, size)
    D = distance_matrix(F, G, sites)
    truth = [tuple(r) for r in top_k(-D, k).tolist()]
    found = diagram.locate(G)
    bad = [i for i, (t, f) in enumerate(zip(truth, found)) if t != f]
    gaps = np.empty(len(bad))
    for j, i in enumerate(bad):
        # an edge near x separates one of its k nearest sites from another site
        ranked = np.argsort(D[i], kind="stable")
        gaps[j] = min(abs(float(bisector(F, sites[t], sites[s]).evaluate(G[i])[0]))
                      for t in ranked[:k] for s in ranked[k:])
    return GridAgreement(len(G), len(G) - len(bad), np.array(bad, dtype=int), gaps)


# -- balls -------------------------------------------------------------------

@dataclass(frozen=True)
class MahalanobisQuadric:
    """The locus ``(x - center)^T shape (x - center) = radius_sq``."""

    shape: np.ndarray
    center: np.ndarray
    radius_sq: float

    def residual(self, X):
        X = np.atleast_2d(X)
        diff = X - self.center
        return np.einsum("ij,jk,ik->i", diff, self.shape, diff) - self.radius_sq


def ball_to_quadric(F, c, r):
    """Mahalanobis quadric traced by the Cayley-Klein sphere of radius ``r`` about ``c``.

    The signed quantity ``S_cc cosh^2(r/|kappa|)`` (or ``cos^2`` for elliptic
    forms) is never square-rooted, which keeps the hyperbolic case real.
    """
    _curved(F)
    c = _point(F, c)
    r = float(r)
    if not r > 0.0:
        raise NonpositiveRadius("ball radius must be positive")
    Sig, a, b = F.sigma, F.a, F.b
    scc = float(lift(c) @ F.S @ lift(c))
    theta = r / F.scale
    a2 = Sig @ c + a
    b2 = a @ c + b
    if F.kind is GeometryKind.HYPERBOLIC:
        if scc >= 0.0:
            raise DomainViolation("ball center outside the domain")
        rt2 = scc * math.cosh(theta) ** 2
        shape = np.outer(a2, a2) - rt2 * Sig
        rhs = rt2 * a - b2 * a2
        const = rt2 * b - b2 * b2
    else:
        if theta >= math.pi / 2:
            raise ValueError("elliptic ball radius must stay below |kappa| pi / 2")
        rt2 = scc * math.cos(theta) ** 2
        shape = rt2 * Sig - np.outer(a2, a2)
        rhs = b2 * a2 - rt2 * a
        const = b2 * b2 - rt2 * b
    shape = 0.5 * (shape + shape.T)
    lam = np.linalg.eigvalsh(shape)
    if np.min(np.abs(lam)) <= SHAPE_TOL:
        raise DegenerateShape("quadric shape matrix is singular")
    if lam[0] < 0.0:
        raise DegenerateShape("ball reaches the hyperplane at infinity; its affine image is unbounded")
    center = np.linalg.solve(shape, rhs)
    return MahalanobisQuadric(shape, center, float(const + center @ shape @ center))


def _ray_limit(F, c, u):
    """Largest ``t`` with ``c + t u`` still in the domain (inf if unbounded)."""
    if F.kind is not GeometryKind.HYPERBOLIC:
        return math.inf
    # S(c + t u) = A t^2 + 2 B t + C with C < 0
    A = u @ F.sigma @ u
    B = u @ (F.sigma @ c + F.a)
    C = float(lift(c) @ F.S @ lift(c))
    if A <= 0.0 and B <= 0.0:
        return math.inf
    if A == 0.0:
        return -C / (2.0 * B)
    disc = math.sqrt(max(B * B - A * C, 0.0))
    return (-C) / (B + disc) if B >= 0 else (disc - B) / A


def sphere_samples(F, c, r, count=64, directions=None):
    """Points at Cayley-Klein distance ``r`` from ``c`` found by bisection along rays."""
    _curved(F)
    c = _point(F, c)
    if directions is None:
        if F.dim != 2:
            raise ValueError("pass directions for d != 2")
        t = 2.0 * np.pi * np.arange(count) / count
        directions = np.column_stack([np.cos(t), np.sin(t)])
    out = []
    for u in np.atleast_2d(directions):
        u = u / np.linalg.norm(u)
        dist = lambda s: ck_distance(F, c, c + s * u)  # noqa: E731
        limit = _ray_limit(F, c, u)
        lo = 0.0
        if math.isinf(limit):
            hi = 1.0
            while dist(hi) < r:
                lo, hi = hi, 2.0 * hi
                if hi > 1e12:
                    raise DegenerateShape("sphere does not cross this ray")
        else:
            shrink = 1e-13
            hi = limit * (1.0 - shrink)
            while not in_domain(F, (c + hi * u)[None, :])[0]:
                # rounding in the root can land a hair outside
                shrink *= 4.0
                hi = limit * (1.0 - shrink)
            if dist(hi) < r:
                raise DegenerateShape("sphere reaches the domain boundary")
        while True:
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if dist(mid) < r:
                lo = mid
            else:
                hi = mid
        s = lo if abs(dist(lo) - r) <= abs(dist(hi) - r) else hi
        out.append(c + s * u)
    return np.array(out)


def quadric_to_sphere(q):
    """Lower-triangular ``L`` with ``shape = L^T L`` and the radius ``sqrt(radius_sq)``.

    Under ``x -> L x`` the quadric becomes the Euclidean sphere of that radius
    about ``L @ q.center``.
    """
    L = lower_factor(0.5 * (q.shape + q.shape.T))
    if not q.radius_sq > 0.0:
        raise NonpositiveRadius("quadric radius_sq must be positive")
    return L, math.sqrt(q.radius_sq)

