"""Streaming subsequence matcher with dynamic z-normalization inside DTW.

One column of the subsequence time warping matrix is kept for the
previous tick and one for the current tick. Every cell carries the
accumulated distance ``d`` and the tick ``b`` where its candidate
subsequence begins. When a new sample arrives, each cell re-normalizes
it against the window starting at each predecessor's own beginning
(mean/std from two prefix-sum lookups), compares it with the
prefix-normalized query value scaled by the query's amplification
factor, and keeps the cheapest predecessor.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
import math

import numpy as np
from numba import njit

from .errors import ConfigError, InvalidInputError, TraceExhaustedError
from .prefix_norm import SIGMA_FLOOR, PreparedQuery, RollingPrefixSums, prepare_query

MODES = ("monitor", "disjoint", "topk")
FLAT_POLICIES = ("zero", "inf")

# predecessor tags, in tie-break order
DIAG, LEFT, DOWN = 0, 1, 2   # (t-1, k-1), (t-1, k), (t, k-1)


@dataclass(frozen=True)
class MatchEvent:
    start: int
    end: int
    distance: float
    emitted_at: int
    kind: str

    def as_dict(self) -> dict:
        return asdict(self)


# layout of the per-matcher integer vector: ring-buffer bookkeeping,
# configuration, then the held optimum's (t_s, t_e)
IV_HEAD, IV_SIZE, IV_FIRST = 0, 1, 2
CFG_SQUARED, CFG_FLAT_INF, CFG_BAND, CFG_TRACE, CFG_MODE = 3, 4, 5, 6, 7
IV_TS, IV_TE = 8, 9
MODE_CODES = {"monitor": 0, "disjoint": 1, "topk": 2}
# _tick return codes
NO_EVENT, INSTANT, REPORT, NEED_ROOM = 0, 1, 2, 3


@njit(cache=True)
def _fill(t, s_t, qn, eta, prev_d, prev_b, cur_d, cur_b, ps, pss, iv, tr_sn, tr_mv):
    """Append ``s_t`` to the prefix sums, fill column ``t`` and trim the
    sums to the oldest beginning still referenced by the new column.

    The caller guarantees one free slot in the ring buffer.
    """
    mask = ps.shape[0] - 1
    head = iv[IV_HEAD]
    first = iv[IV_FIRST]
    last = (head + t - 1 - first) & mask
    slot = (last + 1) & mask
    ps_t = ps[last] + s_t
    pss_t = pss[last] + s_t * s_t
    ps[slot] = ps_t
    pss[slot] = pss_t
    iv[IV_SIZE] += 1

    squared = iv[CFG_SQUARED] != 0
    flat_inf = iv[CFG_FLAT_INF] != 0
    band = iv[CFG_BAND]
    tr_row = t % iv[CFG_TRACE] if iv[CFG_TRACE] > 0 else -1

    m = qn.shape[0]
    tracing = tr_row >= 0
    cur_d[0] = 0.0
    cur_b[0] = t
    if tracing:
        tr_sn[tr_row, 0] = 0.0
        tr_mv[tr_row, 0] = -1
    bmin = t
    for k in range(1, m):
        best = np.inf
        best_b = t
        best_mv = -1
        best_sn = 0.0
        for mv in range(3):
            if mv == DIAG:
                d = prev_d[k - 1]
                b = prev_b[k - 1]
            elif mv == LEFT:
                d = prev_d[k]
                b = prev_b[k]
            else:
                d = cur_d[k - 1]
                b = cur_b[k - 1]
            if d == np.inf:
                continue
            n = t - b + 1
            if band >= 0 and abs(n - 1 - k) > band:
                continue
            j = (head + b - 1 - first) & mask
            mu = (ps_t - ps[j]) / n
            var = (pss_t - pss[j]) / n - mu * mu
            sd = math.sqrt(var) if var > 0.0 else 0.0
            if sd < SIGMA_FLOOR:
                if flat_inf:
                    continue
                sn = 0.0
            else:
                sn = (s_t - mu) / sd
            diff = (sn - qn[k]) / eta[k]
            if squared:
                c = diff * diff
            else:
                c = abs(diff)
            dp = c + d
            if dp < best:
                best = dp
                best_b = b
                best_mv = mv
                best_sn = sn
        cur_d[k] = best
        cur_b[k] = best_b
        if best_b < bmin:
            bmin = best_b
        if tracing:
            tr_sn[tr_row, k] = best_sn
            tr_mv[tr_row, k] = best_mv

    drop = bmin - 1 - first
    if drop > 0:
        iv[IV_HEAD] = (head + drop) & mask
        iv[IV_SIZE] -= drop
        iv[IV_FIRST] = first + drop


@njit(cache=True)
def _may_report(cur_d, cur_b, d_min, t_e):
    for k in range(cur_d.shape[0]):
        if cur_d[k] < d_min and cur_b[k] <= t_e:
            return False
    return True


@njit(cache=True)
def _disable_overlapping(cur_d, cur_b, t_e):
    for k in range(cur_d.shape[0]):
        if cur_b[k] <= t_e:
            cur_d[k] = np.inf


@njit(cache=True)
def _hold(t, cur_d, cur_b, mf, iv):
    """Adopt the last row as the held optimum if it beats it under epsilon."""
    d = cur_d[-1]
    if d < mf[1] and d < mf[0]:
        mf[0] = d
        iv[IV_TS] = cur_b[-1]
        iv[IV_TE] = t


@njit(cache=True)
def _after(t, cur_d, cur_b, mf, iv):
    """Reporting decision for a filled column.

    ``mf`` is (d_min, epsilon). A REPORT return leaves the held optimum
    untouched for the caller to emit.
    """
    if iv[CFG_MODE] == 0:
        return INSTANT if cur_d[-1] <= mf[1] else NO_EVENT
    if mf[0] < mf[1] and _may_report(cur_d, cur_b, mf[0], iv[IV_TE]):
        return REPORT
    _hold(t, cur_d, cur_b, mf, iv)
    return NO_EVENT


@njit(cache=True)
def _tick(t, s_t, Q, D, B, S, iv, mf, tr_sn, tr_mv):
    """One streaming step. ``Q`` stacks the query's prefix-normalized
    values and amplification factors, ``S`` the prefix sums and sums of
    squares, ``D``/``B`` the two alternating columns."""
    if iv[IV_SIZE] == S.shape[1]:
        return NEED_ROOM
    cur = t & 1
    _fill(t, s_t, Q[0], Q[1], D[cur ^ 1], B[cur ^ 1], D[cur], B[cur], S[0], S[1], iv,
          tr_sn, tr_mv)
    return _after(t, D[cur], B[cur], mf, iv)


class Matcher:
    """Single-query streaming matcher.

    Parameters
    ----------
    query : PreparedQuery or sequence of float
        The pattern to look for (at least two samples, not constant).
    mode : {"monitor", "disjoint", "topk"}
        ``monitor`` reports every end tick whose distance is within
        ``epsilon``; ``disjoint`` reports locally optimal non-overlapping
        matches; ``topk`` keeps the ``k`` best disjoint matches and
        tightens its threshold as the list fills.
    epsilon : float
        Distance threshold (required for monitor/disjoint).
    k : int
        List size for ``topk``.
    norm : {"abs", "squared"}
        Pointwise cost.
    trace_window : int, optional
        Keep winning-predecessor tags for this many recent ticks so that
        :meth:`reconstruct_normalized` can rebuild matched values. ``0``
        disables; ``None`` picks ``8 * m``.
    flat : {"inf", "zero"}
        How a predecessor whose window has (numerically) zero spread is
        scored: the move is forbidden (default), or the sample's
        normalized value is taken as 0.
    band : float, optional
        Sakoe-Chiba style constraint as a fraction of ``m``: the candidate
        length at query row ``k`` may differ from ``k + 1`` by at most
        ``ceil(band * m)`` ticks. ``None`` leaves warping unconstrained.
    """

    def __init__(self, query, mode: str = "disjoint", epsilon: float | None = None,
                 k: int | None = None, norm: str = "abs", trace_window: int | None = 0,
                 flat: str = "inf", band: float | None = None):
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        if norm not in ("abs", "squared"):
            raise ConfigError(f"norm must be 'abs' or 'squared', got {norm!r}")
        if flat not in FLAT_POLICIES:
            raise ConfigError(f"flat must be one of {FLAT_POLICIES}, got {flat!r}")
        if band is not None and not (math.isfinite(band) and band >= 0):
            raise ConfigError(f"band must be a finite fraction >= 0, got {band!r}")
        if mode == "topk":
            if k is None or int(k) < 1:
                raise ConfigError("topk mode needs k >= 1")
            epsilon = math.inf
        else:
            if epsilon is None or not epsilon > 0:
                raise ConfigError(f"epsilon must be > 0 in {mode} mode")
        self.query = query if isinstance(query, PreparedQuery) else prepare_query(query)
        m = self.query.m
        self.mode = mode
        self.k = int(k) if k is not None else None
        self.norm = norm
        self.flat = flat
        self.band = band
        self._band_ticks = -1 if band is None else int(math.ceil(band * m))
        self._Q = np.vstack([self.query.pnorm, self.query.eta])
        # two columns used alternately: tick t writes row t & 1
        self._D = np.full((2, m), np.inf)
        self._B = np.zeros((2, m), dtype=np.int64)
        self._iv = np.zeros(10, dtype=np.int64)
        self.sums = RollingPrefixSums(max(64, 4 * m), state=self._iv[IV_HEAD:IV_FIRST + 1])
        self._mf = np.array([math.inf, float(epsilon)])   # d_min, epsilon
        self.tick = 0
        self.best: list[MatchEvent] = []
        if trace_window is None:
            trace_window = 8 * m
        self.trace_window = int(trace_window)
        if self.trace_window > 0:
            self._tr_sn = np.zeros((self.trace_window, m))
            self._tr_mv = np.zeros((self.trace_window, m), dtype=np.int8)
        else:
            self._tr_sn = np.zeros((1, 1))
            self._tr_mv = np.zeros((1, 1), dtype=np.int8)
        self._iv[CFG_SQUARED:CFG_MODE + 1] = (norm == "squared", flat == "inf",
                                              self._band_ticks, self.trace_window,
                                              MODE_CODES[mode])
        self._iv[IV_TS:IV_TE + 1] = -1

    @property
    def m(self) -> int:
        return self.query.m

    d_min = property(lambda self: float(self._mf[0]),
                     lambda self, v: self._mf.__setitem__(0, v))
    epsilon = property(lambda self: float(self._mf[1]),
                       lambda self, v: self._mf.__setitem__(1, v))
    t_s = property(lambda self: int(self._iv[IV_TS]))
    t_e = property(lambda self: int(self._iv[IV_TE]))

    def step(self, s_t: float) -> list[MatchEvent]:
        s_t = float(s_t)
        if not math.isfinite(s_t):
            raise InvalidInputError(f"non-finite sample {s_t!r} at tick {self.tick}")
        t = self.tick
        code = self._kernel(t, s_t)
        self.tick = t + 1
        if code == NO_EVENT:
            return []
        cur_d, cur_b = self._D[t & 1], self._B[t & 1]
        if code == INSTANT:
            return [MatchEvent(int(cur_b[-1]), t, float(cur_d[-1]), t, "instant")]
        ev = self._emit(t)
        _disable_overlapping(cur_d, cur_b, self._iv[IV_TE])
        _hold(t, cur_d, cur_b, self._mf, self._iv)
        return [ev] if ev is not None else []

    def _kernel(self, t: int, s_t: float) -> int:
        code = _tick(t, s_t, self._Q, self._D, self._B, self.sums.data, self._iv, self._mf,
                     self._tr_sn, self._tr_mv)
        if code == NEED_ROOM:
            self.sums._grow()
            code = _tick(t, s_t, self._Q, self._D, self._B, self.sums.data, self._iv,
                         self._mf, self._tr_sn, self._tr_mv)
        return code

    def _emit(self, t: int) -> MatchEvent | None:
        kind = "topk" if self.mode == "topk" else "disjoint"
        ev = MatchEvent(self.t_s, self.t_e, self.d_min, t, kind)
        self.d_min = math.inf
        if self.mode != "topk":
            return ev
        self.best.append(ev)
        self.best.sort(key=lambda e: e.distance)
        if len(self.best) > self.k:
            self.best.pop()
        if len(self.best) == self.k:
            self.epsilon = self.best[-1].distance
        return ev if ev in self.best else None

    def feed(self, samples) -> list[MatchEvent]:
        out = []
        for s in samples:
            out.extend(self.step(s))
        return out

    def finalize(self) -> list[MatchEvent]:
        """Flush the held optimum at end of stream (disjoint/topk only)."""
        if self.mode == "monitor" or not self.d_min <= self.epsilon:
            return []
        ev = self._emit(self.tick - 1 if self.tick else 0)
        return [ev] if ev is not None else []

    def top(self) -> list[MatchEvent]:
        """Current best-k list ordered by stream position (topk mode)."""
        return sorted(self.best, key=lambda e: e.start)

    def column(self) -> tuple[np.ndarray, np.ndarray]:
        """(D, B) of the most recent tick."""
        last = (self.tick - 1) & 1
        return self._D[last].copy(), self._B[last].copy()

    def retained(self) -> int:
        return len(self.sums)

    def reconstruct_normalized(self, event: MatchEvent) -> np.ndarray:
        """Dynamically normalized values of the matched stream interval.

        Each stream tick on the winning warping path is mapped to its
        aligned query rows; its value is ``s'/eta_k + delta_k`` averaged
        over those rows.
        """
        if self.trace_window <= 0:
            raise TraceExhaustedError("matcher was built without a trace window")
        W = self.trace_window
        if event.end >= self.tick or self.tick - event.start > W:
            raise TraceExhaustedError(
                f"interval [{event.start}, {event.end}] no longer inside the "
                f"last {W} traced ticks (now at {self.tick})"
            )
        eta, delta = self.query.eta, self.query.delta
        lo = event.start
        acc = np.zeros(event.end - lo + 1)
        cnt = np.zeros(event.end - lo + 1)
        t, k = event.end, self.m - 1
        while True:
            row = t % W
            sn = self._tr_sn[row, k]
            acc[t - lo] += delta[k] if math.isinf(eta[k]) else sn / eta[k] + delta[k]
            cnt[t - lo] += 1
            if k == 0:
                break
            mv = self._tr_mv[row, k]
            if mv == DIAG:
                t, k = t - 1, k - 1
            elif mv == LEFT:
                t -= 1
            elif mv == DOWN:
                k -= 1
            else:
                raise TraceExhaustedError(f"no traced predecessor at tick {t}, row {k}")
            if t < lo:
                raise TraceExhaustedError("warping path leaves the event interval")
        if t != lo or np.any(cnt == 0):
            raise TraceExhaustedError("traced path does not span the event interval")
        return acc / cnt


def new_matcher(q, mode: str = "disjoint", epsilon: float | None = None,
                k: int | None = None, **kw) -> Matcher:
    return Matcher(q, mode=mode, epsilon=epsilon, k=k, **kw)


def step(state: Matcher, s_t: float) -> list[MatchEvent]:
    return state.step(s_t)


def finalize(state: Matcher) -> list[MatchEvent]:
    return state.finalize()


def reconstruct_normalized(state: Matcher, event: MatchEvent) -> np.ndarray:
    return state.reconstruct_normalized(event)
