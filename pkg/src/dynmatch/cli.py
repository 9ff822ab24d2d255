"""Command-line front end.

Subcommands::

    dynmatch match     stream one sample per line through one or more matchers
    dynmatch generate  write a synthetic labeled stream (CSV + truth CSV)
    dynmatch eval      score an event file against a truth file, or run a
                       recall-vs-lambda sweep
    dynmatch bench     per-tick timing for several query lengths

Exit codes: 0 success, 2 usage, 65 unparsable input, 74 I/O failure,
78 invalid configuration.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import secrets
import sys
import time
from pathlib import Path

import numpy as np

from .baseline import FixedWindowMatcher
from .engine import FLAT_POLICIES, MODES, Matcher
from .errors import DynMatchError, InvalidInputError, TraceExhaustedError
from .evaluation import bench, delay_model, score, topk_recall
from .prefix_norm import prepare_query
from .synth import AMP_RANGE, SHAPES, SHIFT_RANGE, build_stream, make_shape

EXIT_PARSE = 65
EXIT_IO = 74
EXIT_CONFIG = 78

BUFFER_ENV = "DYNMATCH_BUFFERING"
LAMBDA_SWEEP = (0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0)
SWEEP_SHAPES = ("triangle_wave", "arc_blob", "triangle_wave_reflected")


class ParseError(DynMatchError):
    def __init__(self, source: str, lineno: int, text: str, why: str):
        super().__init__(f"{source}:{lineno}: {why}: {text!r}")
        self.lineno = lineno


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def iter_samples(fh, source: str):
    """Yield floats from one-value-per-line text or a (tick, value) CSV.

    A first data line with several comma-separated fields whose last field
    is not numeric is taken as a header. Blank lines and ``#`` comments are
    skipped. Reads lazily so a pipe can be consumed sample by sample.
    """
    first = True
    lineno = 0
    while True:
        line = fh.readline()
        if not line:
            return
        lineno += 1
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        fields = [f.strip() for f in text.split(",")]
        if first:
            first = False
            if len(fields) > 1 and not _is_number(fields[-1]):
                continue
        if len(fields) > 2:
            raise ParseError(source, lineno, text, "expected a value or tick,value")
        try:
            v = float(fields[-1])
        except ValueError:
            raise ParseError(source, lineno, text, "not a number") from None
        if not math.isfinite(v):
            raise ParseError(source, lineno, text, "non-finite value")
        yield v


def read_values(path: str) -> np.ndarray:
    with _open_in(path) as fh:
        return np.fromiter(iter_samples(fh, path), dtype=np.float64)


def _open_in(path: str):
    if path == "-":
        return _NoClose(sys.stdin)
    return open(path, "r", encoding="utf-8")


def _open_out(path: str | None):
    if path in (None, "-"):
        return _NoClose(sys.stdout)
    return open(path, "w", encoding="utf-8", newline="")


class _NoClose:
    def __init__(self, fh):
        self.fh = fh

    def __enter__(self):
        return self.fh

    def __exit__(self, *exc):
        if self.fh is not None:
            self.fh.flush()
        return False


def _buffering() -> str:
    mode = os.environ.get(BUFFER_ENV, "line").strip().lower()
    if mode not in ("line", "block"):
        raise InvalidInputError(f"{BUFFER_ENV} must be 'line' or 'block', got {mode!r}")
    return mode


def _check_config(args):
    if args.mode == "topk" and args.epsilon is not None:
        raise InvalidInputError("--epsilon is managed internally in topk mode; drop it")
    if args.mode != "topk" and args.k is not None:
        raise InvalidInputError("--k only applies to topk mode")
    if args.trace_window is not None and args.trace_window < 0:
        raise InvalidInputError("--trace-window must be >= 0")
    if args.baseline_window is not None and args.normalized_out:
        raise InvalidInputError("--normalized-out needs the dynamic matcher, not --baseline-window")


def _build_matcher(args, values):
    if args.baseline_window is not None:
        return FixedWindowMatcher(values, args.baseline_window, mode=args.mode,
                                  epsilon=args.epsilon, k=args.k, norm=args.cost_norm)
    trace = args.trace_window
    if trace is None and not args.normalized_out:
        trace = 0
    return Matcher(values, mode=args.mode, epsilon=args.epsilon, k=args.k,
                   norm=args.cost_norm, trace_window=trace, flat=args.flat, band=args.band)


def cmd_match(args) -> int:
    _check_config(args)
    buffering = _buffering()
    queries = []
    for path in args.query:
        vals = read_values(path)
        if vals.size < 2:
            raise InvalidInputError(f"query {path} needs at least two samples")
        queries.append((Path(path).stem, prepare_query(vals)))
    matchers = [(name, _build_matcher(args, q)) for name, q in queries]
    multi = len(matchers) > 1
    counts = [0] * len(matchers)
    n = 0
    t0 = time.perf_counter()

    with _open_out(args.output) as out, _open_out_opt(args.normalized_out) as norm_out:
        if norm_out is not None:
            norm_out.write("query,start,tick,value\n")

        def emit(i, name, mt, ev):
            rec = ev.as_dict()
            if multi:
                rec["query"] = name
            out.write(json.dumps(rec) + "\n")
            counts[i] += 1
            if norm_out is not None:
                try:
                    vals = mt.reconstruct_normalized(ev)
                except TraceExhaustedError as exc:
                    print(f"dynmatch: warning: {exc}", file=sys.stderr)
                else:
                    for j, v in enumerate(vals):
                        norm_out.write(f"{name},{ev.start},{ev.start + j},{float(v)!r}\n")

        with _open_in(args.stream) as fh:
            for s in iter_samples(fh, args.stream):
                wrote = False
                for i, (name, mt) in enumerate(matchers):
                    for ev in mt.step(s):
                        if args.mode != "topk":
                            emit(i, name, mt, ev)
                            wrote = True
                if wrote and buffering == "line":
                    out.flush()
                n += 1
        for i, (name, mt) in enumerate(matchers):
            flushed = mt.finalize()
            for ev in (mt.top() if args.mode == "topk" else flushed):
                emit(i, name, mt, ev)
        out.flush()

    elapsed = time.perf_counter() - t0
    summary = {"ticks": n, "mode": args.mode, "queries": [name for name, _ in matchers],
               "events": counts, "elapsed_s": elapsed, "seed": args.seed}
    print(json.dumps({"summary": summary}), file=sys.stderr)
    return 0


def _open_out_opt(path):
    if path is None:
        return _NoClose(None)
    return _open_out(path)


def _resolve_seed(seed):
    if seed is None:
        seed = secrets.randbits(63)
        print(f"dynmatch: seed={seed}", file=sys.stderr)
    return seed


def _shape_list(text):
    kinds = [s.strip() for s in text.split(",") if s.strip()]
    for k in kinds:
        if k not in SHAPES:
            raise InvalidInputError(f"unknown shape {k!r}; choose from {', '.join(SHAPES)}")
    return kinds


def write_stream(ls, stream_path: Path, truth_path: Path):
    with open(stream_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("tick,value\n")
        for t, v in enumerate(ls.samples.tolist()):
            fh.write(f"{t},{v!r}\n")
    with open(truth_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("start,end,label\n")
        for s, e, lab in ls.truth:
            fh.write(f"{s},{e},{lab}\n")


def read_truth(path: str):
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            if lineno == 1 and not _is_number(row[0]):
                continue
            try:
                s, e = int(row[0]), int(row[1])
            except (ValueError, IndexError):
                raise ParseError(path, lineno, ",".join(row), "expected start,end[,label]") from None
            rows.append((s, e, row[2] if len(row) > 2 else None))
    return rows


def read_events(path: str):
    events = []
    with _open_in(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                continue
            try:
                rec = json.loads(text)
                events.append((int(rec["start"]), int(rec["end"]), rec.get("query")))
            except (ValueError, KeyError, TypeError):
                raise ParseError(path, lineno, text, "expected a JSON event object") from None
    return events


def _stream_kwargs(args, seed):
    return dict(plants_per_shape=args.plants, noise_gap_len=args.gap, seed=seed,
                flip_lambda=args.flip_lambda,
                lam_range=tuple(args.lambda_range) if args.lambda_range else None,
                amp_range=tuple(args.amp_range), shift_range=tuple(args.shift_range))


def cmd_generate(args) -> int:
    seed = _resolve_seed(args.seed)
    kinds = _shape_list(args.shapes)
    specs = {k: make_shape(k, args.m) for k in kinds}
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lams = LAMBDA_SWEEP if args.lambda_sweep else (args.lam,)
    for lam in lams:
        ls = build_stream(specs, lam=lam, **_stream_kwargs(args, seed))
        stem = f"{args.prefix}_lam{lam:g}" if args.lambda_sweep else args.prefix
        write_stream(ls, out / f"{stem}.csv", out / f"{stem}_truth.csv")
    if args.queries:
        for k, v in specs.items():
            with open(out / f"{k}.txt", "w", encoding="utf-8") as fh:
                fh.writelines(f"{float(x)!r}\n" for x in v)
    return 0


def cmd_eval(args) -> int:
    if args.lambda_sweep:
        return _eval_sweep(args)
    if not args.events or not args.truth:
        raise InvalidInputError("eval needs --events and --truth (or --lambda-sweep)")
    events = read_events(args.events)
    truth = read_truth(args.truth)
    if args.query_name is not None:
        events = [e for e in events if e[2] == args.query_name]
    samples = query = None
    if args.stream and args.query:
        samples, query = read_values(args.stream), read_values(args.query)
    rep = score([e[:2] for e in events], truth, args.alpha_min, class_label=args.label,
                samples=samples, query=query)
    if args.dt_p is not None and args.dt_s is not None:
        rep.modeled_delay_s = delay_model(args.dt_p, args.dt_s, n=args.delay_n,
                                          m=args.delay_m, method=args.delay_method)
    with _open_out(args.output) as out:
        out.write(json.dumps(rep.as_dict(), indent=2) + "\n")
    return 0


def _eval_sweep(args) -> int:
    seed = _resolve_seed(args.seed)
    kinds = _shape_list(args.shapes)
    specs = {k: make_shape(k, args.m) for k in kinds}
    lams = args.lambdas or list(LAMBDA_SWEEP)
    methods = ["dnrtpm"] + (["baseline"] if args.with_baseline else [])
    with _open_out(args.output) as out:
        out.write("lambda,shape,method,recall\n")
        for lam in lams:
            ls = build_stream(specs, lam=lam, **_stream_kwargs(args, seed))
            for k in kinds:
                for meth in methods:
                    rep, _ = topk_recall(ls, k, specs[k], meth, alpha_min=args.alpha_min)
                    out.write(f"{lam:g},{k},{meth},{rep.recall!r}\n")
                    out.flush()
    return 0


def cmd_bench(args) -> int:
    if args.pin_cpu:
        if hasattr(os, "sched_setaffinity"):
            os.sched_setaffinity(0, {min(os.sched_getaffinity(0))})
        else:
            print("dynmatch: warning: CPU pinning unsupported here", file=sys.stderr)
    seed = _resolve_seed(args.seed)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(args.ticks)
    rows = []
    with _open_out(args.output) as out:
        for m in args.m:
            q = np.cumsum(rng.standard_normal(m))
            mt = Matcher(q, mode="disjoint", epsilon=args.epsilon_frac * m)
            mt.feed(rng.standard_normal(min(2000, args.ticks)))   # JIT and cache warm-up
            st = bench(mt, x, window=args.window, keep_samples=args.samples_csv is not None)
            rec = {"m": m, **st.summary()}
            if args.dt_s is not None:
                rec["modeled_delay_s"] = delay_model(st.mean_ns * 1e-9, args.dt_s, n=args.ticks)
            out.write(json.dumps(rec) + "\n")
            out.flush()
            rows.append((m, st))
    if args.samples_csv:
        with open(args.samples_csv, "w", encoding="utf-8", newline="") as fh:
            fh.write("m,tick,ns\n")
            for m, st in rows:
                for t, ns in enumerate(st.samples_ns.tolist()):
                    fh.write(f"{m},{t},{ns}\n")
    return 0


def _add_stream_opts(p):
    p.add_argument("--m", type=int, default=120, help="template length (default 120)")
    p.add_argument("--plants", type=int, default=30, help="plants per shape (default 30)")
    p.add_argument("--gap", type=int, default=None,
                   help="noise run length (default round(2m/lambda))")
    p.add_argument("--lambda-range", type=float, nargs=2, metavar=("LO", "HI"),
                   help="draw lambda per plant from U(LO, HI)")
    p.add_argument("--flip-lambda", action="store_true",
                   help="use 1/lambda for each plant with probability 1/2")
    p.add_argument("--amp-range", type=float, nargs=2, default=AMP_RANGE, metavar=("LO", "HI"))
    p.add_argument("--shift-range", type=float, nargs=2, default=SHIFT_RANGE,
                   metavar=("LO", "HI"))
    p.add_argument("--seed", type=int, default=None, help="random seed (drawn and printed if unset)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynmatch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="stream samples through matchers, emit JSON-lines events")
    p.add_argument("--query", action="append", required=True,
                   help="query file (one value per line); repeat for several queries")
    p.add_argument("--stream", default="-", help="stream file, '-' for stdin (default)")
    p.add_argument("--output", default="-", help="event output, '-' for stdout (default)")
    p.add_argument("--mode", choices=MODES, default="disjoint")
    p.add_argument("--epsilon", type=float, default=None, help="distance threshold")
    p.add_argument("--k", type=int, default=None, help="list size for topk mode")
    p.add_argument("--cost-norm", choices=("abs", "squared"), default="abs")
    p.add_argument("--band", type=float, default=None,
                   help="warping band as a fraction of the query length")
    p.add_argument("--trace-window", type=int, default=None,
                   help="ticks of alignment trace to keep (default 8m with --normalized-out)")
    p.add_argument("--flat", choices=FLAT_POLICIES, default="inf",
                   help="scoring of zero-spread candidate windows")
    p.add_argument("--baseline-window", type=int, default=None,
                   help="use the fixed-window baseline with this window length")
    p.add_argument("--normalized-out", default=None,
                   help="CSV of dynamically normalized values of every emitted match")
    p.add_argument("--seed", type=int, default=None, help="recorded in the summary only")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("generate", help="write a synthetic labeled stream")
    _add_stream_opts(p)
    p.add_argument("--shapes", default=",".join(SHAPES),
                   help="comma-separated shape kinds (default: all six)")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="time scaling factor")
    p.add_argument("--lambda-sweep", action="store_true",
                   help=f"one stream per lambda in {LAMBDA_SWEEP}")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--prefix", default="stream")
    p.add_argument("--queries", action="store_true",
                   help="also write each template as <kind>.txt")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score events against truth, or sweep recall over lambda")
    p.add_argument("--events", help="JSON-lines event file")
    p.add_argument("--truth", help="truth CSV (start,end,label)")
    p.add_argument("--alpha-min", type=float, default=0.5)
    p.add_argument("--label", default=None, help="score only truth rows with this label")
    p.add_argument("--query-name", default=None,
                   help="score only events tagged with this query (multi-query runs)")
    p.add_argument("--stream", help="stream file, enables the mean DTW quality figure")
    p.add_argument("--query", help="query file, enables the mean DTW quality figure")
    p.add_argument("--dt-p", type=float, default=None, help="processing time per sample (s)")
    p.add_argument("--dt-s", type=float, default=None, help="sampling period (s)")
    p.add_argument("--delay-n", type=int, default=1)
    p.add_argument("--delay-m", type=int, default=1)
    p.add_argument("--delay-method", choices=("dnrtpm_like", "buffered"), default="dnrtpm_like")
    p.add_argument("--lambda-sweep", action="store_true",
                   help="generate streams per lambda and write a recall CSV")
    p.add_argument("--lambdas", type=float, nargs="+", default=None)
    p.add_argument("--shapes", default=",".join(SWEEP_SHAPES))
    p.add_argument("--with-baseline", action="store_true",
                   help="add fixed-window baseline rows (window = template length)")
    p.add_argument("--output", default="-")
    _add_stream_opts(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-tick timing for several query lengths")
    p.add_argument("--m", type=int, nargs="+", default=[50, 100, 200, 400])
    p.add_argument("--ticks", type=int, default=100_000)
    p.add_argument("--window", type=int, default=10_000)
    p.add_argument("--epsilon-frac", type=float, default=0.01,
                   help="threshold as a multiple of m (default 0.01)")
    p.add_argument("--dt-s", type=float, default=None,
                   help="sampling period; adds the modeled delay per query length")
    p.add_argument("--samples-csv", default=None, help="write every per-tick time here")
    p.add_argument("--pin-cpu", action="store_true", help="pin to one CPU where supported")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"dynmatch: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DynMatchError as exc:
        print(f"dynmatch: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"dynmatch: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
