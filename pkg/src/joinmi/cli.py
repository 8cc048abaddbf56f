"""Command-line entry point: ``joinmi <command> ...``.

Machine-readable results go to standard output or files; progress and
summaries go to standard error. Exit codes: 0 success, 1 data or runtime
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .aggregation import Agg, default_agg
from .estimators import DEFAULT_K, Estimator, estimate_mi
from .harness import (
    CDUNIF_M_RANGE,
    FULL_JOIN,
    TRINOMIAL_M_GRID,
    TRUE_MI,
    RealSweepConfig,
    SweepConfig,
    draw_spec,
    emit_report,
    preset,
    run_real_sweep,
    run_synthetic_sweep,
    summarize,
    time_comparison,
)
from .sketch import Method, Side, Sketch, SketchError, build_sketch, join_sketches
from .synthbench import KeyMode, TrinomialSpec, make_instance
from .table import TableError, full_left_join, load_csv

log = logging.getLogger("joinmi")

THREADS_ENV = "JOINMI_THREADS"
EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def _json_out(doc: dict) -> None:
    sys.stdout.write(json.dumps(doc, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# sketch build
# --------------------------------------------------------------------------

def cmd_sketch_build(args) -> int:
    t = load_csv(args.input, args.key_col, args.value_col, args.delimiter)
    side = Side(args.side)
    agg = Agg.parse(args.agg) if args.agg else None
    if side is Side.AUG and agg is None and Method.parse(args.method) is not Method.CSK:
        agg = default_agg(t.value_type)
    sk = build_sketch(t, args.method, side, args.n, agg, args.seed)
    sk.save(args.output)
    log.info("%s %s sketch: %d entries from %d rows (%d distinct keys), seed %d -> %s",
             sk.method.value, sk.side.value, len(sk), sk.source_n, sk.source_distinct, sk.seed, args.output)
    return EXIT_OK


# --------------------------------------------------------------------------
# mi
# --------------------------------------------------------------------------

def _estimate_doc(sample, args, join_field: str) -> dict:
    if len(sample) == 0:
        raise SketchError("empty join: no training key matched the augmentation side")
    est = estimate_mi(sample, args.estimator, k=args.k, perturb=args.perturb, seed=args.seed)
    doc = est.to_dict()
    doc[join_field] = len(sample)
    return doc


def cmd_mi(args) -> int:
    if args.train_sketch or args.aug_sketch:
        if not (args.train_sketch and args.aug_sketch):
            raise UsageError("--train-sketch and --aug-sketch must be given together")
        s_train = Sketch.load(args.train_sketch)
        s_aug = Sketch.load(args.aug_sketch)
        joined = join_sketches(s_train, s_aug)
        doc = _estimate_doc(joined.sample, args, "sketch_join_size")
        doc["matched_keys"] = joined.matched_keys
        _json_out(doc)
        return EXIT_OK

    needed = ("train", "train_key", "train_value", "aug", "aug_key", "aug_value")
    missing = [f"--{n.replace('_', '-')}" for n in needed if getattr(args, n) is None]
    if missing:
        raise UsageError("give two sketch files or two CSVs; missing " + ", ".join(missing))
    train = load_csv(args.train, args.train_key, args.train_value, args.delimiter)
    aug = load_csv(args.aug, args.aug_key, args.aug_value, args.delimiter)
    agg = Agg.parse(args.agg) if args.agg else default_agg(aug.value_type)
    if args.full_join:
        doc = _estimate_doc(full_left_join(train, aug, agg), args, "join_size")
    else:
        s_train = build_sketch(train, args.method, Side.TRAIN, args.n, agg, args.seed)
        s_aug = build_sketch(aug, args.method, Side.AUG, args.n, agg, args.seed)
        joined = join_sketches(s_train, s_aug)
        doc = _estimate_doc(joined.sample, args, "sketch_join_size")
        doc["matched_keys"] = joined.matched_keys
    _json_out(doc)
    return EXIT_OK


# --------------------------------------------------------------------------
# generate
# --------------------------------------------------------------------------

def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"dist": args.dist, "key_mode": args.key_mode, "n_rows": args.n_rows,
                "seed": args.seed, "instances": []}
    cfg = SweepConfig(dist=args.dist, n_rows=args.n_rows, instances=args.instances, seed=args.seed,
                      **_m_settings(args.dist, args.m))
    for i in range(args.instances):
        spec = draw_spec(cfg, i)
        inst = make_instance(spec, args.key_mode)
        stem = f"{args.dist}-{i:05d}"
        for role, t in (("train", inst.train), ("aug", inst.aug)):
            with open(out / f"{stem}-{role}.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow([t.key_name, t.value_name])
                for k, v in zip(t.keys, t.values.tolist()):
                    w.writerow([k, repr(v) if isinstance(v, float) and not v.is_integer() else int(v)])
        entry = {"name": stem, "m": spec.m, "seed": spec.seed, "true_mi": inst.true_mi}
        if isinstance(spec, TrinomialSpec):
            entry.update(p1=spec.p1, p2=spec.p2, target_mi=spec.target_mi)
        manifest["instances"].append(entry)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log.info("wrote %d instance(s) to %s", args.instances, out)
    print(str(out / "manifest.json"))
    return EXIT_OK


def _m_settings(dist: str, text: str) -> dict:
    """SweepConfig fields for ``--m``: an integer list, or ``sweep`` for the standard grid."""
    if text == "sweep":
        if dist == "trinomial":
            return {"m_values": TRINOMIAL_M_GRID}
        return {"m_values": (), "m_range": CDUNIF_M_RANGE}
    try:
        return {"m_values": tuple(_int_list(text))}
    except argparse.ArgumentTypeError as exc:
        raise UsageError(str(exc)) from None


# --------------------------------------------------------------------------
# bench
# --------------------------------------------------------------------------

def _log_summaries(summaries) -> None:
    for key, s in summaries.items():
        mse = "n/a" if s.mse is None else f"{s.mse:.4f}"
        rho = "n/a" if s.spearman_r is None else f"{s.spearman_r:.3f}"
        log.info("%-40s join %7.1f (%6.2f%%)  MSE %s  Spearman %s  used %d  absent %d",
                 " ".join(str(k) for k in key), s.avg_sketch_join_size, s.join_size_pct, mse, rho,
                 s.count, s.excluded)


def cmd_bench_synth(args) -> int:
    workers = _threads(args)
    if args.preset:
        configs = preset(args.preset, instances=args.instances, seed=args.seed, workers=workers)
    else:
        if args.dist is None:
            raise UsageError("bench synth needs --preset or --dist")
        kw = _m_settings(args.dist, args.m)
        configs = [SweepConfig(
            dist=args.dist, key_modes=tuple(KeyMode.parse(k).value for k in _csv_list(args.key_mode)),
            methods=tuple(Method.parse(m).value for m in _csv_list(args.methods)),
            estimators=tuple(_csv_list(args.estimators)) if args.estimators else None,
            n=args.n, instances=args.instances, n_rows=args.n_rows, seed=args.seed, k=args.k,
            workers=workers, **kw)]
    rows = []
    for cfg in configs:
        log.info("running %s sweep: %d instance(s), n=%d", cfg.dist, cfg.instances, cfg.n)
        rows.extend(run_synthetic_sweep(cfg))
    group = ("dist", "method", "estimator", "key_mode")
    summaries = summarize(rows, TRUE_MI, by=group)
    _log_summaries(summarize(rows, TRUE_MI, by=("dist", "method")))
    config = {"command": "bench synth", "preset": args.preset, "sweeps": [c.to_dict() for c in configs]}
    paths = emit_report(rows, summaries, args.out, config, group)
    for p in paths.values():
        print(str(p))
    return EXIT_OK


def cmd_bench_real(args) -> int:
    cfg = RealSweepConfig(n=args.n, min_join=args.min_join, pairs=args.pairs,
                          methods=tuple(Method.parse(m).value for m in _csv_list(args.methods)),
                          seed=args.seed, k=args.k, workers=_threads(args))
    rows = run_real_sweep(args.corpus, cfg)
    group = ("method", "estimator")
    summaries = summarize(rows, FULL_JOIN, by=group, min_join_size=args.min_join)
    _log_summaries(summarize(rows, FULL_JOIN, by=("method",), min_join_size=args.min_join))
    config = {"command": "bench real", "corpus": str(args.corpus), **cfg.to_dict()}
    paths = emit_report(rows, summaries, args.out, config, group)
    for p in paths.values():
        print(str(p))
    return EXIT_OK


def cmd_bench_time(args) -> int:
    table = time_comparison(args.n, args.N, repeats=args.repeats, seed=args.seed)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["N", "full_join_ms", "sketch_join_ms", "full_mi_ms", "sketch_mi_ms", "speedup"])
    for r in table:
        w.writerow([r.N, f"{r.full_join_ms:.4f}", f"{r.sketch_join_ms:.4f}", f"{r.full_mi_ms:.4f}",
                    f"{r.sketch_mi_ms:.4f}", f"{r.speedup:.1f}"])
        log.info("N=%d: full join+MI %.2f ms, sketch join+MI %.2f ms (%.1fx)", r.N,
                 r.full_join_ms + r.full_mi_ms, r.sketch_join_ms + r.sketch_mi_ms, r.speedup)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_estimator_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--estimator", default="auto",
                   choices=["auto"] + [e.value for e in Estimator] + ["mixed_ksg", "dc_ksg"])
    p.add_argument("--k", type=_positive_int, default=DEFAULT_K, help="neighbor count for k-NN estimators")
    p.add_argument("--perturb", action="store_true", help="break ties in numeric columns with tiny noise")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="joinmi", description="Sketch tables and estimate mutual information across joins.")
    parser.add_argument("--version", action="version", version=f"joinmi {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    methods = [m.value for m in Method]

    sk = sub.add_parser("sketch", help="build sketches")
    sk_sub = sk.add_subparsers(dest="sketch_command", required=True)
    b = sk_sub.add_parser("build", help="build a sketch from a CSV")
    b.add_argument("--in", dest="input", required=True)
    b.add_argument("--out", dest="output", required=True)
    b.add_argument("--key-col", required=True)
    b.add_argument("--value-col", required=True)
    b.add_argument("--method", choices=methods, default=Method.TUPSK.value)
    b.add_argument("--side", choices=[s.value for s in Side], required=True)
    b.add_argument("--n", type=_positive_int, default=256)
    b.add_argument("--agg", choices=[a.value for a in Agg])
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--delimiter", default=",")
    b.set_defaults(func=cmd_sketch_build)

    mi = sub.add_parser("mi", help="estimate MI from two sketches or two CSVs")
    mi.add_argument("--train-sketch")
    mi.add_argument("--aug-sketch")
    mi.add_argument("--train")
    mi.add_argument("--train-key")
    mi.add_argument("--train-value")
    mi.add_argument("--aug")
    mi.add_argument("--aug-key")
    mi.add_argument("--aug-value")
    mi.add_argument("--full-join", action="store_true", help="estimate on the exact join instead of sketches")
    mi.add_argument("--method", choices=methods, default=Method.TUPSK.value)
    mi.add_argument("--n", type=_positive_int, default=256)
    mi.add_argument("--agg", choices=[a.value for a in Agg])
    mi.add_argument("--seed", type=int, default=0)
    mi.add_argument("--delimiter", default=",")
    _add_estimator_flags(mi)
    mi.set_defaults(func=cmd_mi)

    g = sub.add_parser("generate", help="write synthetic train/aug table pairs")
    g.add_argument("--dist", choices=["trinomial", "cdunif"], required=True)
    g.add_argument("--m", default="sweep", help="integer list or 'sweep'")
    g.add_argument("--key-mode", choices=["ind", "dep"], default="ind")
    g.add_argument("--n-rows", type=_positive_int, default=10_000)
    g.add_argument("--instances", type=_positive_int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    bench = sub.add_parser("bench", help="run experiments")
    bench_sub = bench.add_subparsers(dest="bench_command", required=True)

    bs = bench_sub.add_parser("synth", help="synthetic sketch-vs-true-MI sweep")
    bs.add_argument("--preset", choices=["table3", "fig2"])
    bs.add_argument("--dist", choices=["trinomial", "cdunif"])
    bs.add_argument("--m", default="sweep", help="integer list or 'sweep'")
    bs.add_argument("--key-mode", default="ind,dep")
    bs.add_argument("--methods", default=",".join(methods))
    bs.add_argument("--estimators", help="comma-separated; default depends on --dist")
    bs.add_argument("--n", type=_positive_int, default=256)
    bs.add_argument("--n-rows", type=_positive_int, default=10_000)
    bs.add_argument("--instances", type=int, default=100)
    bs.add_argument("--k", type=_positive_int, default=DEFAULT_K)
    bs.add_argument("--seed", type=int, default=0)
    bs.add_argument("--threads", type=_positive_int)
    bs.add_argument("--out", required=True)
    bs.set_defaults(func=cmd_bench_synth)

    br = bench_sub.add_parser("real", help="sketch-vs-full-join sweep over a CSV corpus")
    br.add_argument("--corpus", required=True)
    br.add_argument("--n", type=_positive_int, default=1024)
    br.add_argument("--min-join", type=int, default=100)
    br.add_argument("--pairs", type=_positive_int, default=200)
    br.add_argument("--methods", default=Method.TUPSK.value)
    br.add_argument("--k", type=_positive_int, default=DEFAULT_K)
    br.add_argument("--seed", type=int, default=0)
    br.add_argument("--threads", type=_positive_int)
    br.add_argument("--out", required=True)
    br.set_defaults(func=cmd_bench_real)

    bt = bench_sub.add_parser("time", help="full join vs sketch timing")
    bt.add_argument("--n", type=_positive_int, default=256)
    bt.add_argument("--N", type=_int_list, default=[5_000, 10_000, 20_000])
    bt.add_argument("--repeats", type=_positive_int, default=5)
    bt.add_argument("--seed", type=int, default=0)
    bt.set_defaults(func=cmd_bench_time)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"joinmi: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TableError, SketchError, FileNotFoundError, ValueError, TypeError, OSError) as exc:
        print(f"joinmi: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
