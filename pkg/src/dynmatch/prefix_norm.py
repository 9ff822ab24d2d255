"""Expanding-window statistics, prefix normalization and the rolling
prefix-sum buffers that back the streaming matcher."""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .errors import DegenerateInputError, InvalidInputError, RangeError, StateError

SIGMA_FLOOR = 1e-12


def _as_finite(seq, name="seq") -> np.ndarray:
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional")
    if arr.size == 0:
        raise InvalidInputError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class PrefixStats:
    means: np.ndarray
    stddevs: np.ndarray


def prefix_stats(seq) -> PrefixStats:
    """Mean and population std of every prefix ``seq[0..k]``.

    Sums are taken relative to ``seq[0]`` so a constant input yields
    exactly zero spread.
    """
    x = _as_finite(seq)
    y = x - x[0]
    n = np.arange(1, x.size + 1, dtype=np.float64)
    mean_y = np.cumsum(y) / n
    var = np.cumsum(y * y) / n - mean_y * mean_y
    np.maximum(var, 0.0, out=var)
    std = np.sqrt(var)
    std[0] = 0.0
    means = mean_y + x[0]
    means.setflags(write=False)
    std.setflags(write=False)
    return PrefixStats(means, std)


def prefix_normalize(seq) -> np.ndarray:
    x = _as_finite(seq)
    st = prefix_stats(x)
    out = np.zeros_like(x)
    ok = st.stddevs >= SIGMA_FLOOR
    out[ok] = (x[ok] - st.means[ok]) / st.stddevs[ok]
    return out


def scale_factors(seq) -> tuple[np.ndarray, np.ndarray]:
    """Amplification (eta) and shift (delta) factors of every prefix.

    ``eta[k]`` is +inf wherever the prefix spread is below the floor,
    which always includes ``k = 0``.
    """
    x = _as_finite(seq)
    if x.size < 2:
        raise InvalidInputError("need at least two samples")
    st = prefix_stats(x)
    sd_full = st.stddevs[-1]
    mu_full = st.means[-1]
    if sd_full < SIGMA_FLOOR:
        raise DegenerateInputError("constant sequence cannot be normalized")
    eta = np.full(x.size, np.inf)
    ok = st.stddevs >= SIGMA_FLOOR
    eta[ok] = sd_full / st.stddevs[ok]
    delta = (st.means - mu_full) / sd_full
    return eta, delta


@dataclass(frozen=True)
class PreparedQuery:
    raw: np.ndarray
    pnorm: np.ndarray
    eta: np.ndarray
    delta: np.ndarray

    def __len__(self):
        return self.raw.size

    @property
    def m(self) -> int:
        return self.raw.size

    def znormalized(self) -> np.ndarray:
        """Whole-query z-normalization (what a retrieved pattern should look like)."""
        return (self.raw - self.raw.mean()) / self.raw.std()


def prepare_query(raw) -> PreparedQuery:
    x = _as_finite(raw, "query").copy()
    if x.size < 2:
        raise InvalidInputError("query needs at least two samples")
    eta, delta = scale_factors(x)
    pnorm = prefix_normalize(x)
    for a in (x, pnorm, eta, delta):
        a.setflags(write=False)
    return PreparedQuery(x, pnorm, eta, delta)


def dyn_norm_value(s_prefix_norm: float, eta_k: float, delta_k: float) -> float:
    """Map a prefix-normalized stream value onto the query's scale."""
    if math.isinf(eta_k):
        return float(delta_k)
    return s_prefix_norm / eta_k + delta_k


class RollingPrefixSums:
    """Prefix sums and prefix sums of squares of a stream, kept only for a
    sliding range of ticks.

    Backed by a power-of-two ring buffer that doubles when full, so
    appends, front removals and random access are all O(1) (amortized for
    appends). Entry ``i`` holds ``ps_i`` / ``pss_i``; the implicit
    ``ps_{-1} = pss_{-1} = 0`` is stored as the first entry of a new
    buffer so windows starting at tick 0 need no special case.

    Both sums share one ``(2, capacity)`` array and the bookkeeping
    integers live in ``state`` (head slot, size, first tick) so compiled
    kernels can update them in place. ``state`` may be a view into a
    caller's larger vector.
    """

    def __init__(self, capacity: int = 64, state: np.ndarray | None = None):
        cap = 1
        while cap < max(capacity, 2):
            cap <<= 1
        self.data = np.zeros((2, cap))
        self.state = np.empty(3, dtype=np.int64) if state is None else state
        self.state[:] = (0, 1, -1)   # tick -1 entry already present

    ps = property(lambda self: self.data[0])
    pss = property(lambda self: self.data[1])
    head = property(lambda self: int(self.state[0]),
                    lambda self, v: self.state.__setitem__(0, v))
    size = property(lambda self: int(self.state[1]),
                    lambda self, v: self.state.__setitem__(1, v))
    first_index = property(lambda self: int(self.state[2]),
                           lambda self, v: self.state.__setitem__(2, v))

    def __len__(self):
        return self.size

    @property
    def mask(self) -> int:
        return self.ps.size - 1

    @property
    def last_index(self) -> int:
        return self.first_index + self.size - 1

    def _slot(self, i: int) -> int:
        if i < self.first_index or i > self.last_index:
            raise RangeError(
                f"tick {i} outside retained range [{self.first_index}, {self.last_index}]"
            )
        return (self.head + i - self.first_index) & self.mask

    def __getitem__(self, i: int) -> tuple[float, float]:
        j = self._slot(i)
        return float(self.ps[j]), float(self.pss[j])

    def _grow(self):
        cap = self.data.shape[1]
        order = (self.head + np.arange(self.size)) & (cap - 1)
        data = np.zeros((2, cap * 2))
        data[:, : self.size] = self.data[:, order]
        self.data, self.head = data, 0

    def reserve(self, n: int):
        while self.ps.size < n:
            self._grow()

    def append(self, s_t: float):
        if not math.isfinite(s_t):
            raise InvalidInputError(f"non-finite sample {s_t!r}")
        if self.size == self.ps.size:
            self._grow()
        last = (self.head + self.size - 1) & self.mask
        nxt = (last + 1) & self.mask
        self.ps[nxt] = self.ps[last] + s_t
        self.pss[nxt] = self.pss[last] + s_t * s_t
        self.size += 1
        return self

    def trim(self, new_min_begin: int):
        """Drop entries older than ``new_min_begin - 1``."""
        drop = new_min_begin - 1 - self.first_index
        if drop <= 0:
            return self
        if drop >= self.size:
            raise StateError(
                f"trim to begin {new_min_begin} would empty buffer ending at {self.last_index}"
            )
        self.head = (self.head + drop) & self.mask
        self.first_index += drop
        self.size -= drop
        return self

    def window_stats(self, b: int, t: int) -> tuple[float, float]:
        """Mean and population std of ``S[b..t]`` from two prefix-sum lookups."""
        if b > t:
            raise RangeError(f"window begin {b} after end {t}")
        ps_t, pss_t = self[t]
        ps_b, pss_b = self[b - 1]
        n = t - b + 1
        mu = (ps_t - ps_b) / n
        var = (pss_t - pss_b) / n - mu * mu
        return mu, math.sqrt(var) if var > 0.0 else 0.0


def rps_append(buf: RollingPrefixSums, s_t: float) -> RollingPrefixSums:
    return buf.append(s_t)


def rps_trim(buf: RollingPrefixSums, new_min_begin: int) -> RollingPrefixSums:
    return buf.trim(new_min_begin)


def window_stats(buf: RollingPrefixSums, b: int, t: int) -> tuple[float, float]:
    return buf.window_stats(b, t)
