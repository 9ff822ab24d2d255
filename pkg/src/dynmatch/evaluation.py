"""Retrieval scoring, per-tick timing and the analytic delay model."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
import time

import numpy as np
from scipy import stats

from .baseline import FixedWindowMatcher
from .dtw_core import znorm_dtw_distance
from .engine import Matcher
from .errors import ConfigError, InvalidInputError
from .synth import LabeledStream


def overlap(a, b) -> float:
    """Intersection over union of two inclusive tick intervals."""
    i, j = int(a[0]), int(a[1])
    i2, j2 = int(b[0]), int(b[1])
    if i > j or i2 > j2:
        raise InvalidInputError(f"malformed interval(s) {a!r}, {b!r}")
    lo, hi = max(i, i2), min(j, j2)
    if hi < lo:
        return 0.0
    return (hi - lo + 1) / (max(j, j2) - min(i, i2) + 1)


@dataclass
class EvalReport:
    recall: float
    precision: float
    f1: float
    n_truth: int
    n_events: int
    per_event: list[dict] = field(default_factory=list)
    mean_znorm_dtw: float | None = None
    per_tick_ns: dict | None = None
    modeled_delay_s: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def _interval(ev):
    if hasattr(ev, "start"):
        return int(ev.start), int(ev.end)
    return int(ev[0]), int(ev[1])


def score(events, truth, alpha_min: float = 0.5, class_label=None,
          samples=None, query=None) -> EvalReport:
    """Match reported intervals to ground truth one-to-one.

    ``truth`` holds ``(start, end)`` or ``(start, end, label)`` tuples;
    with ``class_label`` set, only truth rows of that label count. Pairs
    are assigned greedily by descending overlap and count when the overlap
    reaches ``alpha_min``. If ``samples`` and ``query`` are given the mean
    DTW distance between each z-normalized retrieved interval and the
    z-normalized query is included.
    """
    rows = []
    for r in truth:
        if len(r) > 2 and class_label is not None and r[2] != class_label:
            continue
        rows.append((int(r[0]), int(r[1]), r[2] if len(r) > 2 else class_label))
    ivs = [_interval(e) for e in events]

    pairs = []
    for ei, e in enumerate(ivs):
        for ti, tr in enumerate(rows):
            a = overlap(e, tr[:2])
            if a > 0:
                pairs.append((a, ei, ti))
    pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
    ev_hit: dict[int, tuple[float, int]] = {}
    tr_used = set()
    for a, ei, ti in pairs:
        if a < alpha_min:
            break
        if ei in ev_hit or ti in tr_used:
            continue
        ev_hit[ei] = (a, ti)
        tr_used.add(ti)

    best_any = {}
    for a, ei, ti in pairs:
        best_any.setdefault(ei, (a, ti))
    per_event = []
    for ei, (s, e) in enumerate(ivs):
        a, ti = ev_hit.get(ei, best_any.get(ei, (0.0, None)))
        per_event.append({"start": s, "end": e, "alpha": a,
                          "label": rows[ti][2] if ti is not None else None,
                          "hit": ei in ev_hit})

    n_truth, n_ev, hits = len(rows), len(ivs), len(tr_used)
    recall = hits / n_truth if n_truth else 0.0
    precision = hits / n_ev if n_ev else 0.0
    f1 = 2 * precision * recall / (precision + recall) if hits else 0.0

    mean_dtw = None
    if samples is not None and query is not None and ivs:
        x = np.asarray(samples, dtype=np.float64)
        d = [znorm_dtw_distance(x[s:e + 1], query) for s, e in ivs if e > s]
        mean_dtw = float(np.mean(d)) if d else None
    return EvalReport(recall, precision, f1, n_truth, n_ev, per_event, mean_dtw)


def topk_recall(stream: LabeledStream, label: str, template, method: str = "dnrtpm",
                window: int | None = None, alpha_min: float = 0.5, k: int | None = None):
    """Run a top-k query for one planted class and score it.

    ``k`` defaults to the number of planted intervals of that class.
    ``method="baseline"`` uses the fixed-window matcher with window
    ``window`` (default: the template length). Returns ``(report, events)``.
    """
    truth = stream.truth_for(label)
    k = k or len(truth)
    if method == "dnrtpm":
        mt = Matcher(template, mode="topk", k=k)
    elif method == "baseline":
        mt = FixedWindowMatcher(template, window or len(template), mode="topk", k=k)
    else:
        raise ConfigError(f"unknown method {method!r}")
    mt.feed(stream.samples)
    mt.finalize()
    events = mt.top()
    return score(events, truth, alpha_min), events


def delay_model(dt_p: float, dt_s: float, n: int = 1, m: int = 1,
                method: str = "dnrtpm_like") -> float:
    """Average time between a sample's arrival and the end of its processing.

    ``dnrtpm_like`` processes each sample on arrival; ``buffered`` waits
    for ``m`` further samples before processing one. Once processing is
    slower than sampling, the backlog grows linearly over ``n`` samples.
    """
    if min(dt_p, dt_s) <= 0 or n < 1 or m < 1:
        raise InvalidInputError("delay model arguments must be positive")
    if method == "dnrtpm_like":
        if dt_p < dt_s:
            return dt_p
        return n * (dt_p - dt_s) / 2 + dt_s
    if method == "buffered":
        if dt_p < dt_s:
            return m * dt_s + dt_p
        return n * (dt_p - dt_s) / 2 + (m + 1) * dt_s
    raise ConfigError(f"unknown delay method {method!r}")


@dataclass
class BenchStats:
    n: int
    mean_ns: float
    p99_ns: float
    slope_ns_per_tick: float
    slope_ci95: tuple[float, float]
    window: int
    samples_ns: np.ndarray | None = None

    def summary(self) -> dict:
        return {"n": self.n, "mean": self.mean_ns, "p99": self.p99_ns,
                "slope": self.slope_ns_per_tick, "slope_ci95": list(self.slope_ci95),
                "window": self.window}


def bench(matcher, stream, window: int = 10_000, keep_samples: bool = False) -> BenchStats:
    """Time every ``step`` call and regress per-window mean time on tick.

    Per-call times are averaged over consecutive windows of ``window``
    ticks (or fewer, for short streams) before fitting the slope, which
    damps scheduler noise.
    """
    x = np.asarray(stream, dtype=np.float64)
    n = x.size
    ts = np.empty(n, dtype=np.int64)
    clock = time.perf_counter_ns
    step = matcher.step
    for i in range(n):
        t0 = clock()
        step(x[i])
        ts[i] = clock() - t0
    if n == 0:
        return BenchStats(0, 0.0, 0.0, 0.0, (0.0, 0.0), window)
    w = max(1, min(window, n // 10 or 1))
    nw = n // w
    means = ts[: nw * w].reshape(nw, w).mean(axis=1)
    centers = (np.arange(nw) + 0.5) * w
    if nw >= 3:
        fit = stats.linregress(centers, means)
        half = stats.t.ppf(0.975, nw - 2) * fit.stderr
        slope, ci = float(fit.slope), (float(fit.slope - half), float(fit.slope + half))
    else:
        slope, ci = 0.0, (0.0, 0.0)
    return BenchStats(n, float(ts.mean()), float(np.percentile(ts, 99)), slope, ci, w,
                      ts if keep_samples else None)
