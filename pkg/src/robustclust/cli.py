"""Command-line interface.

Exit status: 0 on success, 1 on usage or input-format errors, 2 when a
computation fails.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import METHODS as BASELINES, BaselineConfig, run_baseline
from .bayes import bayes_partition, pseed_fast
from .experiments import (METHOD_IDS, ExperimentConfig, config_to_dict, run_experiment,
                          summarize, write_results_csv)
from .gaussian import LabelPrior, NiwModel
from .granulometry import (GranularConfig, GranularModel, SizingModel, load_scene,
                           opening_area_sweep, pattern_spectrum, read_pbm, render_scene,
                           sample_scene, save_scene, write_pbm)
from .io import FormatError, load_model_spec, parse_sizes, partition_to_dict, read_partition, \
    read_points_csv
from .partitions import natural_cost

CLUSTER_METHODS = ("ibr-exact", "ibr-pseed") + BASELINES
EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _model_dim(model) -> int:
    return model.dim if isinstance(model, NiwModel) else model.uc.states[0].dim


def _write(path, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# ---------------------------------------------------------------------------
# subcommands

def cmd_cluster(args):
    points = read_points_csv(args.input)
    needs_sizes = args.method in ("ibr-exact", "ibr-pseed", "random")
    sizes = parse_sizes(args.sizes) if args.sizes else None
    if needs_sizes and sizes is None:
        raise UsageError(f"--sizes is required for --method {args.method}")
    if sizes is not None and sum(sizes) != points.shape[0]:
        raise UsageError(f"sizes sum to {sum(sizes)} but the input has {points.shape[0]} points")
    if args.method.startswith("ibr"):
        if not args.model:
            raise UsageError(f"--model is required for --method {args.method}")
        model = load_model_spec(args.model)
        if _model_dim(model) != points.shape[1]:
            raise UsageError(f"model dimension {_model_dim(model)} does not match "
                             f"{points.shape[1]} data columns")
        if model.n_labels < len(sizes):
            raise UsageError("more sizes than model labels")
        prior = LabelPrior.fixed_sizes(sizes)
        if args.method == "ibr-exact":
            result = bayes_partition(points, prior, model)
        else:
            if not isinstance(model, NiwModel):
                raise UsageError("ibr-pseed needs a single NIW model, not an uncertainty class")
            if args.seed is None:
                raise UsageError("--seed is required for ibr-pseed")
            result = pseed_fast(points, prior, model, restarts=args.restarts, seed=args.seed)
    else:
        if args.seed is None and args.method not in ("hier-s", "hier-a", "hier-c"):
            raise UsageError(f"--seed is required for --method {args.method}")
        k = len(sizes) if sizes else args.k
        cfg = BaselineConfig(args.method, k=k, seed=args.seed, sizes=sizes)
        result = run_baseline(points, cfg)
    out = {"method": args.method, **partition_to_dict(result.partition), "score": result.score}
    _write(args.output, json.dumps(out) + "\n")


def cmd_cost(args):
    p, q = read_partition(args.p), read_partition(args.q)
    if p.n != q.n:
        raise UsageError(f"partitions cover {p.n} and {q.n} points")
    if max(p.n_blocks, q.n_blocks) > args.labels:
        raise UsageError(f"a partition has more than --labels {args.labels} blocks")
    print(repr(natural_cost(p, q, args.labels)))


def _experiment(args, kind: str):
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    data["kind"] = kind
    for key in ("reps", "states", "seed", "threads", "n_grains", "rho_points", "theta_points"):
        if getattr(args, key, None) is not None:
            data[key] = getattr(args, key)
    if getattr(args, "dims", None):
        data["dims"] = [int(v) for v in args.dims.split(",")]
    if args.sizes:
        data["sizes"] = list(parse_sizes(args.sizes))
    elif getattr(args, "n", None):
        data["sizes"] = [args.n - args.n // 2, args.n // 2]
    if args.methods:
        data["methods"] = args.methods.split(",")
    if getattr(args, "mode", None):
        data["image_mode"] = args.mode
    if args.timing:
        data["record_runtime"] = True
    if "seed" not in data:
        raise UsageError("--seed is required")
    try:
        cfg = ExperimentConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    result = run_experiment(cfg)
    write_results_csv(result, args.output)
    if args.summary:
        summarize(result, args.summary)
    if args.save_config:
        Path(args.save_config).write_text(json.dumps(config_to_dict(cfg), indent=1) + "\n")


def cmd_gaussian_exp(args):
    _experiment(args, "gaussian")


def cmd_granular_exp(args):
    _experiment(args, "granular")


def cmd_granulometry(args):
    img = read_pbm(args.image)
    span = img.shape[0] if args.se == "vertical" else img.shape[1]
    t_max = args.tmax if args.tmax is not None else span
    if t_max < 1:
        raise UsageError("--tmax must be >= 1")
    omega = opening_area_sweep(img, args.se, t_max)
    phi = pattern_spectrum(omega)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "omega", "phi"])
    for t, (o, f) in enumerate(zip(omega, phi)):
        w.writerow([t, int(o), repr(float(f))])
    _write(args.out, buf.getvalue())


def cmd_render(args):
    write_pbm(args.output, render_scene(load_scene(args.scene)))


def cmd_sample(args):
    if args.what == "scene":
        alpha = tuple(float(v) for v in args.alpha.split(","))
        sizing = SizingModel(alpha, args.beta)
        scene = sample_scene(args.grains, args.proportion, sizing, args.width, args.height,
                             seed=args.seed, min_radius=args.min_radius,
                             radius_unit=args.radius_unit)
        save_scene(args.output, scene)
        return
    sizes = parse_sizes(args.sizes)
    rng = np.random.default_rng(args.seed)
    if args.what == "points":
        model = (load_model_spec(args.model) if args.model
                 else NiwModel.symmetric(len(sizes), args.d))
        points, labels, _ = model.sample(sizes, rng)
    else:
        model = GranularModel(GranularConfig(n_grains=args.grains))
        points, labels, _ = model.sample(sizes, rng)
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in points:
            w.writerow([repr(float(v)) for v in row])
    if args.labels_out:
        Path(args.labels_out).write_text(" ".join(str(int(v)) for v in labels) + "\n")


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="robustclust", description="Robust Bayesian clustering of point sets and "
                "granular images.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("cluster", help="cluster a CSV of points")
    c.add_argument("--input", required=True, help="n x d CSV, optional header")
    c.add_argument("--model", help="JSON model spec (required for ibr-*)")
    c.add_argument("--method", required=True, choices=CLUSTER_METHODS)
    c.add_argument("--sizes", help="comma-separated cluster sizes")
    c.add_argument("--k", type=int, default=2, help="cluster count when --sizes is absent")
    c.add_argument("--seed", type=int)
    c.add_argument("--restarts", type=int, default=10, help="ibr-pseed restarts")
    c.add_argument("--output", default="-")
    c.set_defaults(func=cmd_cluster)

    c = sub.add_parser("cost", help="natural cost between two partitions")
    c.add_argument("--p", required=True)
    c.add_argument("--q", required=True)
    c.add_argument("--labels", type=int, required=True)
    c.set_defaults(func=cmd_cost)

    for name, func, kind in (("gaussian-exp", cmd_gaussian_exp, "gaussian"),
                             ("granular-exp", cmd_granular_exp, "granular")):
        c = sub.add_parser(name, help=f"{kind} Monte-Carlo experiment")
        c.add_argument("--config", help="JSON experiment config; flags override it")
        c.add_argument("--seed", type=int)
        c.add_argument("--reps", type=int)
        c.add_argument("--sizes", help="n1,n2")
        c.add_argument("--methods", help=f"comma-separated subset of {','.join(METHOD_IDS)}")
        c.add_argument("--threads", type=int)
        c.add_argument("--timing", action="store_true", help="fill runtime_ms (not reproducible)")
        c.add_argument("--output", required=True, help="results CSV")
        c.add_argument("--summary", help="directory for overall/curve CSVs")
        c.add_argument("--save-config", help="write the effective config as JSON")
        if kind == "gaussian":
            c.add_argument("--dims", help="comma-separated dimensions")
            c.add_argument("--n", type=int, help="total points, split evenly")
        else:
            c.add_argument("--states", type=int)
            c.add_argument("--mode", choices=("analytic", "rendered"))
            c.add_argument("--n-grains", dest="n_grains", type=int)
            c.add_argument("--rho-points", dest="rho_points", type=int)
            c.add_argument("--theta-points", dest="theta_points", type=int)
        c.set_defaults(func=func)

    c = sub.add_parser("granulometry", help="opening sweep of a PBM image")
    c.add_argument("--image", required=True)
    c.add_argument("--se", choices=("vertical", "horizontal"), default="vertical")
    c.add_argument("--tmax", type=int)
    c.add_argument("--out", default="-")
    c.set_defaults(func=cmd_granulometry)

    c = sub.add_parser("render", help="rasterize a JSON scene to PBM")
    c.add_argument("--scene", required=True)
    c.add_argument("--output", required=True)
    c.set_defaults(func=cmd_render)

    c = sub.add_parser("sample", help="draw a scene, Gaussian points or image features")
    c.add_argument("what", choices=("scene", "points", "features"))
    c.add_argument("--seed", type=int, required=True)
    c.add_argument("--output", required=True)
    c.add_argument("--labels-out", help="write the true labels (points/features)")
    c.add_argument("--sizes", default="5,5")
    c.add_argument("--model", help="JSON model spec for points")
    c.add_argument("--d", type=int, default=2, help="dimension of the default points model")
    c.add_argument("--grains", type=int, default=100)
    c.add_argument("--proportion", type=float, default=0.5, help="triangle share")
    c.add_argument("--alpha", default="1.95,1.97", help="triangle,rod gamma shapes")
    c.add_argument("--beta", type=float, default=2.0)
    c.add_argument("--width", type=int, default=550)
    c.add_argument("--height", type=int, default=550)
    c.add_argument("--radius-unit", dest="radius_unit", type=float, default=1.0)
    c.add_argument("--min-radius", dest="min_radius", type=float, default=0.0)
    c.set_defaults(func=cmd_sample)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"robustclust: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError, OSError, np.linalg.LinAlgError, json.JSONDecodeError) as exc:
        print(f"robustclust: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
