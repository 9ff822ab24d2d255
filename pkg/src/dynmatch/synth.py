"""Synthetic shapes, amplitude/time distortion and labeled test streams."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

BASE_SHAPES = ("stairs", "triangle_wave", "arc_blob")
SHAPES = BASE_SHAPES + tuple(f"{s}_reflected" for s in BASE_SHAPES)

AMP_RANGE = (0.0, 10.0)
SHIFT_RANGE = (-5.0, 5.0)


def make_shape(kind: str, m: int = 120) -> np.ndarray:
    """Deterministic non-constant template of length ``m``.

    ``<kind>_reflected`` returns the amplitude-negated template.
    """
    if m < 16:
        raise ConfigError("shape length must be >= 16")
    base = kind[: -len("_reflected")] if kind.endswith("_reflected") else kind
    if base not in BASE_SHAPES:
        raise ConfigError(f"unknown shape {kind!r}; choose from {SHAPES}")
    i = np.arange(m)
    x = i / (m - 1)
    if base == "stairs":
        y = np.floor(4 * i / m).astype(np.float64)
    elif base == "triangle_wave":
        # two full periods, second one taller
        phase = (2 * x) % 1.0
        tri = 1.0 - np.abs(2 * phase - 1.0)
        y = tri * np.where(x < 0.5, 1.0, 2.0)
    else:
        # skewed arc with a bump on its rising flank; no sub-part resembles the whole
        y = np.sin(np.pi * x ** 0.7) + 0.8 * np.exp(-(((x - 0.25) / 0.08) ** 2))
    return -y if kind != base else y


def distort(seq, amp: float = 1.0, shift: float = 0.0, lam: float = 1.0, rng=None) -> np.ndarray:
    """Affine amplitude distortion plus uniform time scaling by ``1/lam``.

    The output has ``round(m / lam)`` samples obtained by linear
    interpolation at equally spaced fractional indices of ``seq``.
    ``rng`` is accepted for call-site symmetry and not used.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if not lam > 0:
        raise ConfigError("lambda must be > 0")
    n = int(round(seq.size / lam))
    if n < 2:
        raise ConfigError(f"distorted length {n} < 2")
    if n == seq.size:
        res = seq.copy()
    else:
        res = np.interp(np.linspace(0.0, seq.size - 1, n), np.arange(seq.size), seq)
    return amp * res + shift


@dataclass
class Plant:
    label: str
    amp: float
    shift: float
    lam: float


@dataclass
class LabeledStream:
    samples: np.ndarray
    truth: list[tuple[int, int, str]]
    rng_seed: int | None = None
    plants: list[Plant] = field(default_factory=list)

    def truth_for(self, label: str) -> list[tuple[int, int]]:
        return [(s, e) for s, e, lab in self.truth if lab == label]


def build_stream(shape_specs, plants_per_shape: int = 30, noise_gap_len=None,
                 rng=None, *, lam: float = 1.0, flip_lambda: bool = False,
                 lam_range: tuple[float, float] | None = None,
                 amp_range=AMP_RANGE, shift_range=SHIFT_RANGE,
                 seed: int | None = None) -> LabeledStream:
    """Concatenate independently distorted copies of each shape with white
    noise between (and around) them.

    Parameters
    ----------
    shape_specs : dict label -> template, or sequence of (label, template)
    plants_per_shape : int
    noise_gap_len : int or callable(plant_len, lam) -> int, optional
        Length of every noise run. Defaults to ``round(2 * m / lam)``
        computed from the template length.
    lam : float
        Uniform time-scaling factor applied to every plant.
    flip_lambda : bool
        Use ``1/lam`` instead of ``lam`` with probability 1/2 per plant.
    lam_range : (lo, hi), optional
        Draw ``lam`` per plant from U(lo, hi) instead of using ``lam``.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    items = list(shape_specs.items()) if isinstance(shape_specs, dict) else list(shape_specs)
    if not items:
        raise ConfigError("at least one shape is required")
    order = [lab for lab, _ in items for _ in range(plants_per_shape)]
    rng.shuffle(order)
    templates = {lab: np.asarray(seq, dtype=np.float64) for lab, seq in items}

    plants = []
    for lab in order:
        lam_i = rng.uniform(*lam_range) if lam_range else lam
        if flip_lambda and rng.random() < 0.5:
            lam_i = 1.0 / lam_i
        plants.append(Plant(lab, rng.uniform(*amp_range), rng.uniform(*shift_range), lam_i))

    def gap_for(p: Plant) -> int:
        m = templates[p.label].size
        if noise_gap_len is None:
            return max(1, int(round(2 * m / p.lam)))
        if callable(noise_gap_len):
            return max(1, int(noise_gap_len(m, p.lam)))
        return max(1, int(noise_gap_len))

    chunks = []
    truth = []
    pos = 0
    for p in plants:
        g = gap_for(p)
        chunks.append(rng.standard_normal(g))
        pos += g
        seg = distort(templates[p.label], p.amp, p.shift, p.lam)
        chunks.append(seg)
        truth.append((pos, pos + seg.size - 1, p.label))
        pos += seg.size
    tail = gap_for(plants[-1]) if plants else 1
    chunks.append(rng.standard_normal(tail))
    return LabeledStream(np.concatenate(chunks), truth, seed, plants)
