"""Reference (whole-matrix) DTW routines.

These are not on the streaming path; they serve as oracles for the
matcher and as the retrieval-quality metric in evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DegenerateInputError, InvalidInputError
from .prefix_norm import SIGMA_FLOOR, PreparedQuery, prefix_normalize

COST_NORMS = ("abs", "squared")


@dataclass(frozen=True)
class WarpingResult:
    distance: float
    path: list[tuple[int, int]]


@njit(cache=True)
def _fill(cost, band):
    n, m = cost.shape
    acc = np.full((n, m), np.inf)
    move = np.zeros((n, m), dtype=np.int8)  # 0 diag, 1 from (i-1, j), 2 from (i, j-1)
    for i in range(n):
        if band >= 0:
            centre = i * (m - 1) / (n - 1) if n > 1 else 0.0
            lo = max(0, int(np.ceil(centre - band)))
            hi = min(m - 1, int(np.floor(centre + band)))
        else:
            lo, hi = 0, m - 1
        for j in range(lo, hi + 1):
            if i == 0 and j == 0:
                acc[0, 0] = cost[0, 0]
                continue
            best = np.inf
            mv = 0
            if i > 0 and j > 0 and acc[i - 1, j - 1] < best:
                best = acc[i - 1, j - 1]
                mv = 0
            if i > 0 and acc[i - 1, j] < best:
                best = acc[i - 1, j]
                mv = 1
            if j > 0 and acc[i, j - 1] < best:
                best = acc[i, j - 1]
                mv = 2
            acc[i, j] = cost[i, j] + best
            move[i, j] = mv
    return acc, move


def _backtrack(move: np.ndarray) -> list[tuple[int, int]]:
    i, j = move.shape[0] - 1, move.shape[1] - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        mv = move[i, j]
        if mv == 0:
            i, j = i - 1, j - 1
        elif mv == 1:
            i -= 1
        else:
            j -= 1
        path.append((i, j))
    path.reverse()
    return path


def _check(seq, name) -> np.ndarray:
    a = np.asarray(seq, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return a


def _pointwise(diff: np.ndarray, norm: str) -> np.ndarray:
    if norm == "abs":
        return np.abs(diff)
    if norm == "squared":
        return diff * diff
    raise InvalidInputError(f"unknown cost norm {norm!r}")


def dtw_from_cost(cost: np.ndarray, band: float | None = None) -> WarpingResult:
    """DTW over a precomputed cost matrix.

    ``band`` is a Sakoe-Chiba half-width as a fraction of the longer
    sequence; None disables the constraint.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    w = -1.0 if band is None else float(band) * max(cost.shape)
    acc, move = _fill(cost, w)
    dist = float(acc[-1, -1])
    if not np.isfinite(dist):
        raise InvalidInputError("band too narrow: no admissible warping path")
    return WarpingResult(dist, _backtrack(move))


def dtw(x, y, norm: str = "abs", band: float | None = None) -> WarpingResult:
    x = _check(x, "X")
    y = _check(y, "Y")
    return dtw_from_cost(_pointwise(x[:, None] - y[None, :], norm), band)


def dnorm_cost_matrix(stream_slice, q: PreparedQuery, norm: str = "abs") -> np.ndarray:
    """Cell costs |s' - q'| / eta with the slice prefix-normalized from its
    first element; rows with eta = inf cost nothing."""
    s = _check(stream_slice, "stream_slice")
    sn = prefix_normalize(s)
    return _pointwise((sn[:, None] - q.pnorm[None, :]) / q.eta[None, :], norm)


def dnorm_fixed_start(stream_slice, q: PreparedQuery, norm: str = "abs",
                      band: float | None = None) -> tuple[float, list[tuple[int, int]]]:
    res = dtw_from_cost(dnorm_cost_matrix(stream_slice, q, norm), band)
    return res.distance, res.path


def znormalize(seq) -> np.ndarray:
    a = _check(seq, "seq")
    sd = a.std()
    if a.size < 2 or sd < SIGMA_FLOOR:
        raise DegenerateInputError("cannot z-normalize a constant or single-point sequence")
    return (a - a.mean()) / sd


def znorm_dtw_distance(a, b, norm: str = "abs") -> float:
    return dtw(znormalize(a), znormalize(b), norm).distance
