"""Large-margin nearest-neighbour learning of flat and curved Mahalanobis metrics.

All three geometries share one objective::

    cost(L) = (1 - w) * sum_{i -> j} d(x_i, x_j)
              + w * sum_{(i, j, l)} [1 + d(x_i, x_j) - d(x_i, x_l)]_+

where ``d`` is the squared Mahalanobis distance ``|L (x_i - x_j)|^2`` for the
flat metric and the Cayley-Klein distance of ``S = L^T L`` (elliptic) or
``S = L^T D L`` (hyperbolic, ``D`` fixed) otherwise.  Optimisation is plain
gradient descent on the lower-triangular factor ``L`` with an adaptive step.
"""

from dataclasses import dataclass, replace
from enum import Enum
import logging

import numpy as np

from .errors import (
    BadKappa,
    ClassTooSmall,
    DimensionMismatch,
    Diverged,
    DomainViolation,
    EmptyDataset,
    NotPositiveDefinite,
    SingularCovariance,
)
from .geometry import (
    BilinearForm,
    GeometryKind,
    MixedMetric,
    distance_matrix,
    lift,
    lower_factor,
)

log = logging.getLogger(__name__)

GRAD_TOL = 1e-7
GAMMA_FLOOR = 1e-15
DIVERGENCE = 1e12
DIAG_FLOOR = 1e-8


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=float)
        std = X.std(axis=0)
        std[std == 0.0] = 1.0
        return cls(X.mean(axis=0), std)

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.std


@dataclass
class LabeledDataset:
    """Points in ``R^d`` with small nonnegative integer labels."""

    X: np.ndarray
    y: np.ndarray
    label_names: list = None
    scaler: Standardizer = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y).astype(int).reshape(-1)
        if len(self.X) != len(self.y):
            raise DimensionMismatch("points and labels differ in count")
        if len(self.y) < 2:
            raise EmptyDataset("a dataset needs at least two points")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("non-finite coordinates")
        if np.any(self.y < 0):
            raise ValueError("labels must be nonnegative")

    @property
    def n(self):
        return len(self.y)

    @property
    def dim(self):
        return self.X.shape[1]

    @property
    def classes(self):
        return np.unique(self.y)

    def subset(self, idx):
        idx = np.asarray(idx)
        return LabeledDataset(self.X[idx], self.y[idx], self.label_names, self.scaler)

    def standardized(self, scaler=None):
        """Z-scored copy; statistics are fitted here unless ``scaler`` is given."""
        scaler = scaler or Standardizer.fit(self.X)
        return LabeledDataset(scaler.transform(self.X), self.y, self.label_names, scaler)


@dataclass
class TripletSet:
    targets: np.ndarray
    impostors: np.ndarray

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=int).reshape(-1, 2)
        self.impostors = np.asarray(self.impostors, dtype=int).reshape(-1, 3)


class InitStrategy(Enum):
    PRECISION = "precision"
    FLAT_WARM_START = "flat"


@dataclass
class LmnnConfig:
    k_targets: int = 3
    tradeoff: float = 0.5
    gamma0: float = 1e-3
    max_iters: int = 300
    impostor_period: int = 10
    kappa_init: float = 1.5
    init_strategy: InitStrategy = InitStrategy.FLAT_WARM_START
    seed: int = 0
    # hyperbolic steps must keep the data, dilated by this factor about its mean, in the domain
    domain_margin: float = 1.25
    # warm-start flat runs and the mixed model reuse these
    flat_iters: int = None
    # project hyperbolic steps off the domain boundary instead of stalling there
    boundary_projection: bool = False

    def __post_init__(self):
        self.init_strategy = InitStrategy(self.init_strategy)
        if not 0.0 < self.tradeoff < 1.0:
            raise ValueError("tradeoff must lie in (0, 1)")
        if self.k_targets < 1:
            raise ValueError("k_targets must be positive")
        if self.impostor_period < 1:
            raise ValueError("impostor_period must be at least 1")
        if self.gamma0 <= 0.0:
            raise ValueError("gamma0 must be positive")
        if self.domain_margin < 1.0:
            raise ValueError("domain_margin must be at least 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")


@dataclass(eq=False)
class MetricState:
    """Factorised learnable metric.

    flat: ``M = L^T L``; elliptic: ``S = L^T L``; hyperbolic: ``S = L^T D L``.
    ``kappa`` is the signed distance scale of the curved kinds.
    """

    kind: GeometryKind
    L: np.ndarray
    D: np.ndarray = None
    kappa: float = 1.0
    scaler: Standardizer = None

    def __post_init__(self):
        self.kind = GeometryKind.parse(self.kind)
        self.L = np.asarray(self.L, dtype=float)
        if self.D is not None:
            self.D = np.asarray(self.D, dtype=float)
        if self.kind is GeometryKind.FLAT:
            self.kappa = 0.0
        elif self.kind is GeometryKind.HYPERBOLIC and self.D is None:
            raise ValueError("hyperbolic metrics need the diagonal factor D")

    @property
    def dim(self):
        n = self.L.shape[0]
        return n if self.kind is GeometryKind.FLAT else n - 1

    def matrix(self):
        if self.kind is GeometryKind.HYPERBOLIC:
            return self.L.T @ (self.D[:, None] * self.L)
        return self.L.T @ self.L

    def form(self):
        """Sign-normalised form; the factorisation already guarantees its signature."""
        S = self.matrix()
        if self.kind is GeometryKind.HYPERBOLIC and np.sum(self.D > 0) == 1 and len(self.D) > 2:
            S = -S
        return BilinearForm.trusted(S, self.kind, self.kappa)

    def with_L(self, L):
        return replace(self, L=L)

    def copy(self):
        return replace(self, L=self.L.copy(), D=None if self.D is None else self.D.copy())


@dataclass
class TrainReport:
    final_metric: object
    cost_trace: list
    gamma_trace: list
    halvings: int = 0
    iterations: int = 0
    stopped: str = "max_iters"
    active_impostors: int = 0

    @property
    def initial_cost(self):
        return self.cost_trace[0][1]

    @property
    def final_cost(self):
        return min(c for _, c in self.cost_trace)


# -- targets and impostors ---------------------------------------------------

def build_targets(data, k):
    """Each point's ``k`` nearest same-label points (Euclidean, ties to lower index)."""
    X, y = data.X, data.y
    pairs = []
    for label in np.unique(y):
        members = np.flatnonzero(y == label)
        if len(members) < 2:
            raise ClassTooSmall(f"class {label} has fewer than two members")
        sub = X[members]
        d2 = np.sum((sub[:, None, :] - sub[None, :, :]) ** 2, axis=-1)
        np.fill_diagonal(d2, np.inf)
        kk = min(k, len(members) - 1)
        order = np.argsort(d2, axis=1, kind="stable")[:, :kk]
        for row, i in enumerate(members):
            pairs.extend((i, members[j]) for j in order[row])
    pairs.sort()
    return np.array(pairs, dtype=int).reshape(-1, 2)


def loss_distances(state, X):
    """Pairwise distances as they enter the objective (squared for flat)."""
    if state.kind is GeometryKind.FLAT:
        Z = X @ state.L.T
        diff = Z[:, None, :] - Z[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)
    return distance_matrix(state.form(), X)


def _check_domain(state, X):
    if not _in_domain(state, X):
        raise DomainViolation("training point outside the hyperbolic domain")


def _impostors_from(dist, y, targets):
    ti, tj = targets[:, 0], targets[:, 1]
    margin = 1.0 + dist[ti, tj]
    viol = (dist[ti, :] < margin[:, None]) & (y[None, :] != y[ti][:, None])
    rows, ls = np.nonzero(viol)
    return np.column_stack([ti[rows], tj[rows], ls]).astype(int)


def find_impostors(state, data, targets):
    """All triples ``(i, j, l)`` whose hinge ``1 + d_ij - d_il`` is positive."""
    targets = np.asarray(targets, dtype=int).reshape(-1, 2)
    if len(targets) == 0:
        return np.empty((0, 3), dtype=int)
    _check_domain(state, data.X)
    return _impostors_from(loss_distances(state, data.X), data.y, targets)


# -- objective ---------------------------------------------------------------

def _cost_from(dist, triplets, w):
    t = triplets.targets
    pull = dist[t[:, 0], t[:, 1]].sum() if len(t) else 0.0
    imp = triplets.impostors
    if len(imp):
        hinge = 1.0 + dist[imp[:, 0], imp[:, 1]] - dist[imp[:, 0], imp[:, 2]]
        push = hinge[hinge > 0.0].sum()
    else:
        push = 0.0
    return float((1.0 - w) * pull + w * push)


def lmnn_cost(state, data, triplets, w):
    _check_domain(state, data.X)
    if len(triplets.targets) == 0:
        return 0.0
    return _cost_from(loss_distances(state, data.X), triplets, w)


def _pair_weights(dist, triplets, w, n):
    """Net coefficient of each ordered pair's distance in the objective."""
    omega = np.zeros((n, n))
    t = triplets.targets
    np.add.at(omega, (t[:, 0], t[:, 1]), 1.0 - w)
    imp = triplets.impostors
    if len(imp):
        hinge = 1.0 + dist[imp[:, 0], imp[:, 1]] - dist[imp[:, 0], imp[:, 2]]
        act = imp[hinge > 0.0]
        np.add.at(omega, (act[:, 0], act[:, 1]), w)
        np.add.at(omega, (act[:, 0], act[:, 2]), -w)
    return omega


def _gradient_from(state, X, dist, triplets, w):
    n = len(X)
    omega = _pair_weights(dist, triplets, w, n)
    if state.kind is GeometryKind.FLAT:
        lap = np.diag(omega.sum(axis=1) + omega.sum(axis=0)) - omega - omega.T
        grad = 2.0 * state.L @ (X.T @ lap @ X)
        return np.tril(grad)

    Xt = lift(X)
    S = state.matrix()
    Smat = Xt @ S @ Xt.T
    sdiag = np.diag(Smat)
    norm = np.outer(sdiag, sdiag)
    gram = norm - Smat ** 2
    coef = np.zeros((n, n))
    mask = omega != 0.0
    scale = abs(state.kappa)
    if state.kind is GeometryKind.ELLIPTIC:
        good = mask & (gram > 0.0)
        coef[good] = omega[good] * scale / np.sqrt(gram[good])
    else:
        good = mask & (gram < 0.0)
        coef[good] = -omega[good] * scale * np.sign(Smat[good]) / np.sqrt(-gram[good])
    ratio_i = Smat / sdiag[:, None]
    ratio_j = Smat / sdiag[None, :]
    W = np.diag((coef * ratio_i).sum(axis=1) + (coef * ratio_j).sum(axis=0)) - coef - coef.T
    inner = Xt.T @ W @ Xt
    grad = state.L @ inner
    if state.kind is GeometryKind.HYPERBOLIC:
        grad = state.D[:, None] * grad
    return np.tril(grad)


def lmnn_gradient(state, data, triplets, w):
    """Analytic gradient with respect to the lower triangle of ``L``."""
    _check_domain(state, data.X)
    if len(triplets.targets) == 0:
        return np.zeros_like(state.L)
    dist = loss_distances(state, data.X)
    return _gradient_from(state, data.X, dist, triplets, w)


def finite_difference_gradient(state, data, triplets, w, h=1e-6):
    """Central differences of :func:`lmnn_cost` over the lower triangle of ``L``."""
    grad = np.zeros_like(state.L)
    for i, j in zip(*np.tril_indices(len(state.L))):
        up, down = state.L.copy(), state.L.copy()
        up[i, j] += h
        down[i, j] -= h
        grad[i, j] = (lmnn_cost(state.with_L(up), data, triplets, w)
                      - lmnn_cost(state.with_L(down), data, triplets, w)) / (2.0 * h)
    return grad


# -- initialisation ----------------------------------------------------------

def precision_matrix(X):
    """Inverse of the (1/n) sample covariance, regularised if needed."""
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    cov = np.atleast_2d(np.cov(X, rowvar=False, bias=True))
    for reg in (0.0, 1e-6 * max(np.trace(cov), 1e-12) / d):
        C = cov + reg * np.eye(d)
        if np.linalg.cond(C) < 1e12:
            try:
                P = np.linalg.inv(C)
                lower_factor(P)
                return 0.5 * (P + P.T)
            except (np.linalg.LinAlgError, NotPositiveDefinite):
                continue
    raise SingularCovariance("covariance is singular even after regularisation")


def _guard_points(X, margin):
    """``X`` dilated about its mean; hyperbolic iterates must keep these inside."""
    if margin == 1.0:
        return X
    m = X.mean(axis=0)
    return m + margin * (X - m)


def _curved_from_flat(data, kind, kappa, M, margin=1.0):
    d = data.dim
    if kind is GeometryKind.ELLIPTIC:
        m = data.X.mean(axis=0)
        G = np.empty((d + 1, d + 1))
        G[:d, :d] = M
        G[:d, d] = G[d, :d] = -M @ m
        G[d, d] = m @ M @ m + 1.0 / kappa ** 2
        return MetricState(kind, lower_factor(G), kappa=1.0, scaler=data.scaler)
    Lp = lower_factor(M)
    reach = np.max(np.sum((_guard_points(data.X, margin) @ Lp.T) ** 2, axis=1))
    L = np.eye(d + 1)
    L[:d, :d] = Lp
    D = -np.ones(d + 1)
    D[d] = kappa * max(reach, 1e-12)
    return MetricState(kind, L, D, kappa=-1.0, scaler=data.scaler)


def init_metric(data, kind, kappa=1.5, strategy=InitStrategy.PRECISION, config=None):
    """Starting metric for training.

    ``PRECISION`` uses the inverse sample covariance; ``FLAT_WARM_START`` uses
    the matrix learned by flat LMNN (itself started from the identity).
    """
    kind = GeometryKind.parse(kind)
    strategy = InitStrategy(strategy)
    if kind is GeometryKind.HYPERBOLIC and not kappa > 1.0:
        raise BadKappa("hyperbolic initialisation needs kappa > 1")
    if kind is not GeometryKind.FLAT and kappa == 0.0:
        raise BadKappa("kappa must be nonzero")
    d = data.dim
    if kind is GeometryKind.FLAT:
        if strategy is InitStrategy.PRECISION:
            L = lower_factor(precision_matrix(data.X))
        else:
            L = np.eye(d)
        return MetricState(kind, L, scaler=data.scaler)

    if strategy is InitStrategy.PRECISION:
        M = precision_matrix(data.X)
    else:
        config = config or LmnnConfig()
        flat_cfg = replace(config, init_strategy=InitStrategy.FLAT_WARM_START,
                           max_iters=config.flat_iters or config.max_iters)
        M = train(flat_cfg, data, GeometryKind.FLAT).final_metric.matrix()
    margin = config.domain_margin if config is not None else 1.0
    state = _curved_from_flat(data, kind, kappa, M, margin)
    _check_domain(state, _guard_points(data.X, margin))
    return state


# -- training ----------------------------------------------------------------

def _clamp(L):
    L = np.tril(L)
    diag = np.diagonal(L).copy()
    np.fill_diagonal(L, np.maximum(diag, DIAG_FLOOR))
    return L


def _in_domain(state, X):
    if state.kind is not GeometryKind.HYPERBOLIC:
        return True
    Z = lift(X) @ state.L.T
    vals = (Z ** 2) @ state.D
    # S = L^T D L with a positive minority entry in D: inside means vals > 0
    return bool(np.all(vals > 0.0))


def _boundary_projection(state, P, grad, gamma):
    """Remove the parts of ``grad`` that would carry rows of ``P`` out of the domain.

    A point's domain value ``v = sum_k D_k (L p)_k^2`` is positive inside.  If
    the linearised step ``-gamma * grad`` would use up more than half of some
    point's ``v``, the step is projected onto the directions that leave those
    values unchanged to first order.  Without this an iterate pressed against
    the boundary can only take steps too small to matter.
    """
    Pt = lift(P)
    Z = Pt @ state.L.T
    vals = (Z ** 2) @ state.D
    rows, cols = np.tril_indices(len(state.L))
    G = 2.0 * (Z * state.D)[:, rows] * Pt[:, cols]
    g = grad[rows, cols]
    active = gamma * (G @ g) > 0.5 * vals
    if not active.any():
        return grad
    GA = G[active]
    g = g - GA.T @ np.linalg.lstsq(GA.T, g, rcond=None)[0]
    out = np.zeros_like(grad)
    out[rows, cols] = g
    return out


def train(config, data, kind, init=None, on_accept=None):
    """Gradient descent on ``L`` with periodic impostor refresh.

    A step is accepted when every training point stays in the domain and the
    objective over the current triplet set does not increase; then the step
    size grows by 1%.  Otherwise the step is rejected and the step size halves.
    The returned metric is the iterate with the lowest full objective.

    ``on_accept(iteration, state)`` is called after every accepted step.
    """
    kind = GeometryKind.parse(kind)
    if len(data.classes) < 2:
        raise ValueError("training needs at least two classes")
    state = init if init is not None else init_metric(
        data, kind, config.kappa_init, config.init_strategy, config)
    state = state.copy()
    X, y, w = data.X, data.y, config.tradeoff
    guard = _guard_points(X, config.domain_margin)
    if not _in_domain(state, guard):
        guard = X
    targets = build_targets(data, config.k_targets)

    dist = loss_distances(state, X)
    imp = _impostors_from(dist, y, targets)
    triplets = TripletSet(targets, imp)
    cost = _cost_from(dist, triplets, w)
    gamma = config.gamma0
    best_cost, best = cost, state.copy()
    cost_trace = [(0, cost)]
    gamma_trace = [(0, gamma)]
    halvings = 0
    stopped = "max_iters"
    it = 0

    for it in range(1, config.max_iters + 1):
        if it > 1 and (it - 1) % config.impostor_period == 0:
            triplets = TripletSet(targets, _impostors_from(dist, y, targets))
            cost = _cost_from(dist, triplets, w)
        grad = _gradient_from(state, X, dist, triplets, w)
        if np.max(np.abs(grad)) < GRAD_TOL:
            stopped = "gradient"
            it -= 1
            break
        if kind is GeometryKind.HYPERBOLIC and config.boundary_projection:
            grad = _boundary_projection(state, guard, grad, gamma)
        trial = state.with_L(_clamp(state.L - gamma * grad))
        accepted = False
        if _in_domain(trial, X) and (guard is X or _in_domain(trial, guard)):
            trial_dist = loss_distances(trial, X)
            trial_cost = _cost_from(trial_dist, triplets, w)
            if trial_cost > DIVERGENCE:
                raise Diverged(f"cost {trial_cost:.3g} exceeds {DIVERGENCE:g}")
            accepted = trial_cost <= cost
        if accepted:
            state, dist, cost = trial, trial_dist, trial_cost
            gamma *= 1.01
            full = _cost_from(dist, TripletSet(targets, _impostors_from(dist, y, targets)), w)
            if full < best_cost:
                best_cost, best = full, state.copy()
            cost_trace.append((it, full))
            if on_accept is not None:
                on_accept(it, state)
        else:
            gamma *= 0.5
            halvings += 1
        gamma_trace.append((it, gamma))
        if gamma < GAMMA_FLOOR:
            log.warning("step size underflow after %d iterations; keeping best iterate", it)
            stopped = "gamma_underflow"
            break

    final_dist = loss_distances(best, X)
    active = len(_impostors_from(final_dist, y, targets))
    return TrainReport(best, cost_trace, gamma_trace, halvings, it, stopped, active)


# -- mixed metric ------------------------------------------------------------

def _holdout_split(n, fraction, seed):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_hold = max(1, int(round(fraction * n)))
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def select_alpha(elliptic, hyperbolic, fit, held, alphas, k=3):
    """Accuracy of each candidate mix on ``held`` with neighbours from ``fit``."""
    from .classify import knn_predict

    E = distance_matrix(elliptic, held.X, fit.X)
    inside = np.ones(held.n, dtype=bool)
    from .geometry import in_domain
    inside = in_domain(hyperbolic, held.X)
    H = np.full_like(E, np.inf)
    if inside.any():
        H[inside] = distance_matrix(hyperbolic, held.X[inside], fit.X)
    scores = []
    for a in alphas:
        D = a * E + (1.0 - a) * H if a < 1.0 else E.copy()
        if a < 1.0:
            D[~inside] = np.inf
        pred = knn_predict(D, fit.y, k)
        ok = (pred == held.y) & (inside | (a >= 1.0))
        scores.append(float(np.mean(ok)))
    return scores


def train_mixed(config, data, alphas, k=3, holdout=0.2, full=None):
    """Train elliptic and hyperbolic metrics and pick ``alpha`` on a held-out split.

    Both metrics are first trained on 80% of ``data`` and every candidate
    alpha is scored by k-NN accuracy on the remaining 20%; the winner is then
    combined with metrics trained on all of ``data`` (or the pair given in
    ``full``).
    """
    alphas = [float(a) for a in alphas]
    if not alphas or any(not 0.0 <= a <= 1.0 for a in alphas):
        raise ValueError("alphas must be a non-empty subset of [0, 1]")
    if len(alphas) == 1:
        chosen = alphas[0]
        scores = [float("nan")]
    else:
        fit_idx, held_idx = _holdout_split(data.n, holdout, config.seed)
        fit, held = data.subset(fit_idx), data.subset(held_idx)
        e = train(config, fit, GeometryKind.ELLIPTIC).final_metric.form()
        h = train(config, fit, GeometryKind.HYPERBOLIC).final_metric.form()
        scores = select_alpha(e, h, fit, held, alphas, k)
        chosen = alphas[int(np.argmax(scores))]
    if full is None:
        e_state = train(config, data, GeometryKind.ELLIPTIC).final_metric
        h_state = train(config, data, GeometryKind.HYPERBOLIC).final_metric
    else:
        e_state, h_state = full
    mixed = MixedMetric(e_state.form(), h_state.form(), chosen,
                        extras={"validation": dict(zip(alphas, scores)),
                                "states": (e_state, h_state)})
    return mixed, chosen
