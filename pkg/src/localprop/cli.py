"""Command line front end: ``localprop {synth,eval,sweep}``.

Exit codes: 0 success, 1 bad arguments, 2 unreadable or malformed store.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .core import MethodConfig
from .evaluation import GLOBAL_KNN, EpisodeError, LOCAL_KNN, METHODS, SWEEP_PARAMS, evaluate, sweep, sweep_csv
from .io import FormatError, read_store, synth_generate, write_store


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_eval_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--features", required=True, type=Path, help="LPF1 feature store")
    p.add_argument("--method", choices=sorted(METHODS), default="local-lp")
    p.add_argument("--ways", type=int, default=5)
    p.add_argument("--shots", type=int, default=1)
    p.add_argument("--queries-per-class", type=int, default=15)
    p.add_argument("--episodes", type=int, default=2000)
    p.add_argument("--transductive", action="store_true")
    p.add_argument("--tau", type=float, default=0.3)
    p.add_argument("--clusters", type=int, default=60)
    p.add_argument("--knn", type=int, default=None,
                   help=f"graph neighbors (default {LOCAL_KNN}, or {GLOBAL_KNN} for global-lp)")
    p.add_argument("--nbnn-knn", type=int, default=1)
    p.add_argument("--gamma", type=float, default=4.0)
    p.add_argument("--alpha-feature", type=float, default=0.9)
    p.add_argument("--alpha-label", type=float, default=0.9)
    p.add_argument("--rho", type=float, default=10.0)
    p.add_argument("--pool-kernel", type=int, default=1,
                   help="local spatial pooling window applied to stored tensors (1 = none)")
    p.add_argument("--no-attention", action="store_true")
    p.add_argument("--no-pooling", action="store_true")
    p.add_argument("--no-feature-propagation", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1, help="episodes evaluated concurrently")


def build_parser() -> argparse.ArgumentParser:
    parser = Parser(prog="localprop", description="Local propagation for few-shot classification")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    synth = sub.add_parser("synth", help="generate a synthetic feature store")
    synth.add_argument("--classes", type=int, default=20)
    synth.add_argument("--images-per-class", type=int, default=50)
    synth.add_argument("--w", type=int, default=6)
    synth.add_argument("--h", type=int, default=6)
    synth.add_argument("--d", type=int, default=32)
    synth.add_argument("--clutter", type=float, default=0.5)
    synth.add_argument("--noise", type=float, default=0.6)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", type=Path, default=Path("features.lpf"))

    ev = sub.add_parser("eval", help="evaluate a method on sampled episodes")
    _add_eval_args(ev)
    ev.add_argument("--out", type=Path, default=Path("report.json"))

    sw = sub.add_parser("sweep", help="evaluate a method over values of one parameter")
    _add_eval_args(sw)
    sw.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--out", type=Path, default=Path("sweep.csv"))
    return parser


def config_from_args(args) -> MethodConfig:
    knn = args.knn
    if knn is None:
        knn = GLOBAL_KNN if args.method == "global-lp" else LOCAL_KNN
    return MethodConfig(
        tau=args.tau, clusters=args.clusters, knn=knn, nbnn_knn=args.nbnn_knn, gamma=args.gamma,
        alpha_feature=args.alpha_feature, alpha_label=args.alpha_label, rho=args.rho,
        use_attention=not args.no_attention, use_pooling=not args.no_pooling,
        use_feature_propagation=not args.no_feature_propagation,
        transductive=args.transductive, seed=args.seed, pool_kernel=args.pool_kernel,
    )


def _eval_kwargs(args) -> dict:
    return dict(episodes=args.episodes, seed=args.seed, ways=args.ways, shots=args.shots,
                queries_per_class=args.queries_per_class, workers=args.workers)


def parse_values(text: str, param: str) -> list:
    items = [v.strip() for v in text.split(",")]
    if not text.strip() or any(not v for v in items):
        raise ValueError("--values needs a comma-separated list of numbers")
    cast = int if param in ("clusters", "knn", "queries-per-class") else float
    return [cast(v) for v in items]


def cmd_synth(args) -> int:
    store = synth_generate(args.classes, args.images_per_class, args.w, args.h, args.d,
                           args.clutter, args.noise, args.seed)
    write_store(store, args.out)
    print(f"wrote {store.num_classes} classes x {args.images_per_class} images to {args.out}")
    return 0


def cmd_eval(args) -> int:
    if args.episodes < 1:
        raise ValueError("--episodes must be positive")
    config = config_from_args(args)
    store = read_store(args.features)
    report = evaluate(store, args.method, config, **_eval_kwargs(args))
    args.out.write_text(report.to_json())
    print(report.summary())
    return 0


def cmd_sweep(args) -> int:
    if args.episodes < 1:
        raise ValueError("--episodes must be positive")
    values = parse_values(args.values, args.param)
    config = config_from_args(args)
    store = read_store(args.features)
    reports = sweep(store, args.method, config, args.param, values, **_eval_kwargs(args))
    args.out.write_text(sweep_csv(args.param, values, reports))
    for value, report in zip(values, reports):
        print(f"{args.param}={value}  {report.summary()}")
    return 0


COMMANDS = {"synth": cmd_synth, "eval": cmd_eval, "sweep": cmd_sweep}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](args)
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, EpisodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
