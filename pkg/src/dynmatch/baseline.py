"""Fixed-length sliding-window z-normalization feeding a streaming
subsequence-DTW matcher (the conventional approach the dynamic scheme is
compared against)."""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .dtw_core import znormalize
from .engine import CFG_SQUARED, Matcher, _after
from .errors import ConfigError, InvalidInputError
from .prefix_norm import SIGMA_FLOOR


def fixed_window_znorm(stream, w: int) -> np.ndarray:
    """Normalize each sample by the trailing ``w`` samples ending at it.

    The first ``w - 1`` samples use whatever prefix is available; windows
    with zero spread map to 0.
    """
    x = np.asarray(stream, dtype=np.float64)
    if w < 2:
        raise ConfigError("window length must be >= 2")
    out = np.zeros_like(x)
    for t in range(x.size):
        win = x[max(0, t - w + 1): t + 1]
        sd = win.std()
        if sd >= SIGMA_FLOOR:
            out[t] = (x[t] - win.mean()) / sd
    return out


@njit(cache=True)
def _window_z(ring, t, s_t):
    """Store ``s_t`` for tick ``t`` and z-score it against the ring's
    contents (the trailing window, or the prefix while it fills)."""
    w = ring.shape[0]
    ring[t % w] = s_t
    n = min(t + 1, w)
    mu = 0.0
    for i in range(n):
        mu += ring[i]
    mu /= n
    var = 0.0
    for i in range(n):
        var += (ring[i] - mu) ** 2
    sd = math.sqrt(var / n)
    return (s_t - mu) / sd if sd >= SIGMA_FLOOR else 0.0


@njit(cache=True)
def _spring_tick(t, s_t, qz, D, B, ring, iv, mf):
    cur = t & 1
    prev_d, prev_b = D[cur ^ 1], B[cur ^ 1]
    cur_d, cur_b = D[cur], B[cur]
    squared = iv[CFG_SQUARED] != 0
    z = _window_z(ring, t, s_t)
    m = qz.shape[0]
    diff = z - qz[0]
    cur_d[0] = diff * diff if squared else abs(diff)
    cur_b[0] = t
    for k in range(1, m):
        best = prev_d[k - 1]
        bb = prev_b[k - 1]
        if prev_d[k] < best:
            best = prev_d[k]
            bb = prev_b[k]
        if cur_d[k - 1] < best:
            best = cur_d[k - 1]
            bb = cur_b[k - 1]
        diff = z - qz[k]
        cur_d[k] = (diff * diff if squared else abs(diff)) + best
        cur_b[k] = bb if best < np.inf else t
    return _after(t, cur_d, cur_b, mf, iv)


class FixedWindowMatcher(Matcher):
    """Streaming matcher that z-normalizes each sample with the trailing
    window of fixed length ``window_len`` and compares it to the
    whole-query z-normalized template.

    Reporting modes and their semantics are those of :class:`Matcher`.
    """

    def __init__(self, query, window_len: int, mode: str = "disjoint",
                 epsilon: float | None = None, k: int | None = None, norm: str = "abs"):
        super().__init__(query, mode=mode, epsilon=epsilon, k=k, norm=norm, trace_window=0)
        if window_len < 2:
            raise ConfigError("window_len must be >= 2")
        self.window_len = int(window_len)
        self.qz = znormalize(self.query.raw)
        self._ring = np.zeros(self.window_len)

    def normalize_next(self, s_t: float) -> float:
        """Push ``s_t`` as the sample of the current tick and return its
        trailing-window z-score (does not advance the matcher)."""
        return float(_window_z(self._ring, self.tick, float(s_t)))

    def _kernel(self, t: int, s_t: float) -> int:
        return _spring_tick(t, s_t, self.qz, self._D, self._B, self._ring, self._iv, self._mf)

    def reconstruct_normalized(self, event):
        raise InvalidInputError("the fixed-window matcher keeps no alignment trace")


def baseline_step(state: FixedWindowMatcher, s_t: float):
    return state.step(s_t)
