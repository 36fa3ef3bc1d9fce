"""k-NN classification under learned metrics and the two evaluation protocols."""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainViolation, ProtocolInfeasible
from .geometry import GeometryKind, as_metric, distance_matrix, metric_domain
from .learning import LmnnConfig, train, train_mixed

MIXED = "mixed"


@dataclass(frozen=True)
class LeaveOneOut:
    def describe(self):
        return "loo"


@dataclass(frozen=True)
class RandomSplit:
    train_size: int = 250
    repeats: int = 10

    def describe(self):
        return f"split:{self.train_size}:{self.repeats}"


def parse_protocol(text):
    """``loo`` or ``split:SIZE:REPEATS``."""
    text = text.strip().lower()
    if text == "loo":
        return LeaveOneOut()
    parts = text.split(":")
    if parts[0] == "split" and len(parts) in (1, 2, 3):
        size = int(parts[1]) if len(parts) > 1 else 250
        repeats = int(parts[2]) if len(parts) > 2 else 10
        if size < 1 or repeats < 1:
            raise ValueError("split size and repeats must be positive")
        return RandomSplit(size, repeats)
    raise ValueError(f"unknown protocol {text!r}")


@dataclass
class AccuracyReport:
    mean_accuracy: float
    per_repeat: list
    protocol: object
    k: int
    geometry: str
    seed: int
    out_of_domain: int = 0
    alphas: list = field(default_factory=list)

    def to_json(self):
        out = {
            "protocol": self.protocol.describe(),
            "k": self.k,
            "geometry": self.geometry,
            "seed": self.seed,
            "mean": self.mean_accuracy,
            "per_repeat": list(self.per_repeat),
            "out_of_domain": self.out_of_domain,
        }
        if self.alphas:
            out["alphas"] = list(self.alphas)
        return out


def knn_predict(D, train_labels, k):
    """Majority vote over the ``k`` smallest entries of each row of ``D``.

    Distance ties go to the lower training index; vote ties to the label with
    the smaller summed distance, then to the smaller label.
    """
    D = np.atleast_2d(D)
    train_labels = np.asarray(train_labels)
    k = min(k, D.shape[1])
    idx = np.argsort(D, axis=1, kind="stable")[:, :k]
    labels = train_labels[idx]
    dists = np.take_along_axis(D, idx, axis=1)
    classes = np.unique(train_labels)
    onehot = labels[:, :, None] == classes[None, None, :]
    counts = onehot.sum(axis=1)
    with np.errstate(invalid="ignore"):
        sums = np.where(onehot, dists[:, :, None], 0.0).sum(axis=1)
    sums = np.where(counts > 0, sums, np.inf)
    best = np.empty(len(D), dtype=int)
    for r in range(len(D)):
        # lexsort: last key is primary
        order = np.lexsort((classes, sums[r], -counts[r]))
        best[r] = classes[order[0]]
    return best


def knn_classify(metric, train_set, x, k):
    metric = as_metric(metric)
    x = np.asarray(x, dtype=float)
    if not metric_domain(metric, x[None, :])[0]:
        raise DomainViolation("query lies outside the metric's domain")
    if k > train_set.n:
        raise ValueError("k exceeds the training set size")
    D = distance_matrix(metric, x[None, :], train_set.X)
    return int(knn_predict(D, train_set.y, k)[0])


def _fit_all(config, data, geometries, alphas, k):
    """Fit every requested geometry on one training set.

    A mixed model reuses the pure elliptic and hyperbolic metrics trained in
    the same call instead of training them a second time.
    """
    states = {}

    def pure(kind):
        if kind not in states:
            states[kind] = train(config, data, kind).final_metric
        return states[kind]

    fitted = {}
    for g in geometries:
        if g == MIXED:
            full = (pure(GeometryKind.ELLIPTIC.value), pure(GeometryKind.HYPERBOLIC.value))
            fitted[g] = train_mixed(config, data, alphas, k, full=full)[0]
        else:
            fitted[g] = pure(g).form()
    return fitted


def _score(metric, train_set, test_set, k, exclude_self=False):
    """Return (#correct, #out-of-domain) on ``test_set``."""
    inside = metric_domain(metric, test_set.X)
    D = np.full((test_set.n, train_set.n), np.inf)
    if inside.any():
        D[inside] = distance_matrix(metric, test_set.X[inside], train_set.X)
    if exclude_self:
        np.fill_diagonal(D, np.inf)
    pred = knn_predict(D, train_set.y, k)
    correct = (pred == test_set.y) & inside
    return int(correct.sum()), int((~inside).sum())


def _geometry_name(kind):
    return MIXED if kind == MIXED else GeometryKind.parse(kind).value


def evaluate(protocol, config, data, kind, k=3, alphas=None, standardize=True):
    """Accuracy of k-NN under a metric learned per the protocol.

    Leave-one-out trains once on the full set and classifies each point with
    itself removed from the pool.  Random splits draw a seeded training
    subset per repeat, train on it and classify the rest.  Out-of-domain test
    points count as errors and are tallied.
    """
    return evaluate_many(protocol, config, data, [kind], k, alphas, standardize)[_geometry_name(kind)]


def evaluate_many(protocol, config, data, kinds, k=3, alphas=None, standardize=True):
    """Run :func:`evaluate` for several geometries over the same splits.

    Returns a dict keyed by geometry name.  Results match separate calls to
    :func:`evaluate` with the same seed.
    """
    geometries = list(dict.fromkeys(_geometry_name(g) for g in kinds))
    if MIXED in geometries and not alphas:
        raise ValueError("mixed evaluation needs candidate alphas")
    config = config or LmnnConfig()
    per_repeat = {g: [] for g in geometries}
    outside = dict.fromkeys(geometries, 0)

    def run(cfg, train_set, test_set, exclude_self):
        for g, metric in _fit_all(cfg, train_set, geometries, alphas, k).items():
            correct, off = _score(metric, train_set, test_set, k, exclude_self)
            per_repeat[g].append(correct / test_set.n)
            outside[g] += off

    if isinstance(protocol, LeaveOneOut):
        ds = data.standardized() if standardize else data
        run(config, ds, ds, True)
    elif isinstance(protocol, RandomSplit):
        if protocol.train_size >= data.n:
            raise ProtocolInfeasible("train_size must be smaller than the dataset")
        rng = np.random.default_rng(config.seed)
        for rep in range(protocol.repeats):
            perm = rng.permutation(data.n)
            tr, te = np.sort(perm[:protocol.train_size]), np.sort(perm[protocol.train_size:])
            train_set, test_set = data.subset(tr), data.subset(te)
            counts = np.bincount(train_set.y, minlength=data.y.max() + 1)
            if np.any(counts[data.classes] < 2):
                raise ProtocolInfeasible(f"repeat {rep}: training split lacks a class")
            if standardize:
                train_set = train_set.standardized()
                test_set = test_set.standardized(train_set.scaler)
            run(replace(config, seed=config.seed + rep), train_set, test_set, False)
    else:
        raise TypeError(f"unknown protocol {protocol!r}")

    return {g: AccuracyReport(float(np.mean(per_repeat[g])), per_repeat[g], protocol, k, g,
                              config.seed, outside[g], list(alphas) if g == MIXED else [])
            for g in geometries}
