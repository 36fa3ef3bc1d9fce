"""Command line: ``ckmetric {train,eval,dist,voronoi,balls}``.

Exit status is 0 on success, 1 for usage errors, 2 for data errors and 3 for
numerical failures.
"""

import argparse
import logging
from pathlib import Path
import sys

import numpy as np

from .classify import MIXED, evaluate_many, parse_protocol
from .compgeom import (
    MahalanobisQuadric,
    ball_to_quadric,
    ck_voronoi,
    conic_polyline,
    quadric_to_sphere,
)
from .dataio import (
    DatasetSchema,
    load_dataset,
    load_metric,
    load_scene,
    save_metric,
    train_report_to_json,
    write_json,
)
from .errors import DataError, DimensionMismatch, EmptyScene, NumericalFailure
from .geometry import GeometryKind, MixedMetric, as_metric, paired_distances
from .learning import InitStrategy, LmnnConfig, MetricState, train, train_mixed
from .svg import Curve, Scene, render_svg

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
GEOMETRIES = ("flat", "elliptic", "hyperbolic", MIXED)
DEFAULT_ALPHAS = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _data_flags(p):
    p.add_argument("--data", required=True, help="CSV file with one labelled point per row")
    p.add_argument("--label-col", default="last", help="label column: index, name, 'first' or 'last'")
    p.add_argument("--delimiter", default=",")
    head = p.add_mutually_exclusive_group()
    head.add_argument("--header", dest="header", action="store_true", default=None)
    head.add_argument("--no-header", dest="header", action="store_false")
    p.add_argument("--no-standardize", action="store_true", help="keep raw feature scales")


def _train_flags(p):
    d = LmnnConfig()
    p.add_argument("--k-targets", type=int, default=d.k_targets)
    p.add_argument("--tradeoff", type=float, default=d.tradeoff)
    p.add_argument("--gamma", type=float, default=d.gamma0, help="initial step size")
    p.add_argument("--iters", type=int, default=d.max_iters)
    p.add_argument("--impostor-period", type=int, default=d.impostor_period)
    p.add_argument("--kappa", type=float, default=d.kappa_init)
    p.add_argument("--init", choices=[s.value for s in InitStrategy], default=d.init_strategy.value)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--boundary-projection", action="store_true",
                   help="hyperbolic: slide along the domain boundary instead of stopping there")
    p.add_argument("--alphas", type=_floats, default=_floats(DEFAULT_ALPHAS),
                   help="candidate mixing weights (mixed geometry)")


def build_parser():
    parser = _Parser(prog="ckmetric", description="Cayley-Klein metric learning and geometry")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="learn a metric and write it as JSON")
    p.add_argument("--geometry", choices=GEOMETRIES, required=True)
    _data_flags(p)
    _train_flags(p)
    p.add_argument("--k", type=int, default=3, help="neighbours used to pick alpha (mixed)")
    p.add_argument("--out", required=True, help="metric JSON path")
    p.add_argument("--report", help="training report JSON path (default: <out>.report.json)")

    p = sub.add_parser("eval", help="k-NN accuracy under learned metrics")
    p.add_argument("--geometry", default="flat",
                   help="one geometry or a comma-separated list of " + ", ".join(GEOMETRIES))
    _data_flags(p)
    _train_flags(p)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--protocol", default="loo", help="loo or split:SIZE:REPEATS")
    p.add_argument("--out", help="accuracy report JSON path")
    p.add_argument("--table", help="also write the plain-text summary table here")

    p = sub.add_parser("dist", help="distance between two points under a metric file")
    p.add_argument("--metric", required=True)
    p.add_argument("--p", required=True, type=_floats)
    p.add_argument("--q", required=True, type=_floats)
    p.add_argument("--raw", action="store_true",
                   help="do not apply the metric's stored standardization to the points")

    p = sub.add_parser("voronoi", help="render a Cayley-Klein Voronoi diagram")
    p.add_argument("--scene", required=True, help="scene JSON with form and sites")
    p.add_argument("--order", type=int, help="k-order (overrides the scene)")
    p.add_argument("--out", required=True, help="SVG path")

    p = sub.add_parser("balls", help="Cayley-Klein balls against Mahalanobis balls")
    p.add_argument("--scene", required=True, help="scene JSON with form and balls")
    p.add_argument("--out", required=True, help="SVG path")
    return parser


def _schema(args):
    label = args.label_col
    if label.lstrip("-").isdigit():
        label = int(label)
    return DatasetSchema(label, args.delimiter, args.header, not args.no_standardize)


def _config(args):
    try:
        return LmnnConfig(k_targets=args.k_targets, tradeoff=args.tradeoff, gamma0=args.gamma,
                          max_iters=args.iters, impostor_period=args.impostor_period,
                          kappa_init=args.kappa, init_strategy=args.init, seed=args.seed,
                          boundary_projection=args.boundary_projection)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _cmd_train(args):
    config = _config(args)
    data = load_dataset(args.data, _schema(args))
    out = Path(args.out)
    report_path = Path(args.report) if args.report else out.with_name(out.stem + ".report.json")
    if args.geometry == MIXED:
        metric, alpha = train_mixed(config, data, args.alphas, args.k)
        if data.scaler is not None:
            metric.extras["scaler"] = data.scaler
        validation = metric.extras["validation"]
        report = {"geometry": MIXED, "alpha": alpha,
                  "validation": [[a, s] for a, s in validation.items()]}
    else:
        result = train(config, data, args.geometry)
        metric = result.final_metric
        report = {"geometry": args.geometry, **train_report_to_json(result)}
    save_metric(out, metric)
    write_json(report_path, report)
    print(f"wrote {out} and {report_path}")


def summary_table(name, reports):
    """Plain-text accuracy table: one row per dataset, one column per geometry."""
    cols = list(reports)
    width = max(10, len(name))
    head = "dataset".ljust(width) + "".join(c.rjust(12) for c in cols)
    row = name.ljust(width) + "".join(f"{reports[c].mean_accuracy:12.3f}" for c in cols)
    return head + "\n" + "-" * len(head) + "\n" + row + "\n"


def _cmd_eval(args):
    kinds = [g.strip().lower() for g in args.geometry.split(",") if g.strip()]
    if not kinds or any(g not in GEOMETRIES for g in kinds):
        raise UsageError(f"--geometry must name one or more of {', '.join(GEOMETRIES)}")
    try:
        protocol = parse_protocol(args.protocol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.k < 1:
        raise UsageError("--k must be positive")
    config = _config(args)
    schema = _schema(args)
    data = load_dataset(args.data, DatasetSchema(schema.label_column, schema.delimiter,
                                                 schema.has_header, standardize=False))
    reports = evaluate_many(protocol, config, data, kinds, args.k, args.alphas,
                            standardize=schema.standardize)
    payload = {g: r.to_json() for g, r in reports.items()}
    if len(payload) == 1:
        payload = next(iter(payload.values()))
    if args.out:
        write_json(args.out, payload)
    table = summary_table(Path(args.data).stem, reports)
    if args.table:
        Path(args.table).write_text(table, encoding="utf-8")
    sys.stdout.write(table)


def _cmd_dist(args):
    metric = load_metric(args.metric)
    p, q = np.asarray(args.p), np.asarray(args.q)
    scaler = metric.scaler if isinstance(metric, MetricState) else (
        metric.extras.get("scaler") if isinstance(metric, MixedMetric) else None)
    if scaler is not None and not args.raw:
        if p.shape != scaler.mean.shape or q.shape != scaler.mean.shape:
            raise DimensionMismatch(f"points must have dimension {len(scaler.mean)}")
        p, q = scaler.transform(p), scaler.transform(q)
    d = paired_distances(as_metric(metric), p[None, :], q[None, :])[0]
    print(f"{d:.7g}")


def _cmd_voronoi(args):
    scene = load_scene(args.scene)
    order = args.order if args.order is not None else scene["order"]
    F, sites = scene["form"], scene["sites"]
    if len(sites) == 0:
        raise EmptyScene("scene has no sites")
    diagram = ck_voronoi(F, sites, order, window=scene["window"]) if len(sites) > 1 else None
    conic = conic_polyline(F) if F.kind is GeometryKind.HYPERBOLIC else None
    svg = render_svg(Scene(diagram=diagram, conic=conic, sites=sites, labels=scene["labels"],
                           title=f"order-{order} {F.kind.value} Voronoi diagram"))
    Path(args.out).write_text(svg, encoding="utf-8")


def _ellipse(shape, center, radius_sq, segments=256):
    L, radius = quadric_to_sphere(MahalanobisQuadric(shape, np.zeros(len(shape)), radius_sq))
    t = 2.0 * np.pi * np.arange(segments) / segments
    U = radius * np.column_stack([np.cos(t), np.sin(t)])
    return center + np.linalg.solve(L, U.T).T


def _cmd_balls(args):
    scene = load_scene(args.scene)
    F = scene["form"]
    if F.kind is GeometryKind.FLAT or F.dim != 2:
        raise DataError("balls need a planar elliptic or hyperbolic form")
    if not scene["balls"]:
        raise EmptyScene("scene has no balls")
    curves, centers, displaced = [], [], []
    sigma = F.sigma
    for c, r in scene["balls"]:
        quad = ball_to_quadric(F, c, r)
        curves.append(Curve(_ellipse(quad.shape, quad.center, quad.radius_sq), stroke="#1f4e9c"))
        curves.append(Curve(_ellipse(sigma, c, r * r), stroke="#b03a2e", dashed=True))
        centers.append(c)
        displaced.append(quad.center)
    conic = conic_polyline(F) if F.kind is GeometryKind.HYPERBOLIC else None
    svg = render_svg(Scene(conic=conic, curves=curves, sites=np.array(centers),
                           marks=np.array(displaced),
                           title=f"{F.kind.value} balls (solid) and Mahalanobis balls (dashed)"))
    Path(args.out).write_text(svg, encoding="utf-8")


COMMANDS = {"train": _cmd_train, "eval": _cmd_eval, "dist": _cmd_dist,
            "voronoi": _cmd_voronoi, "balls": _cmd_balls}


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, UnicodeDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
