"""Dyadic intervals, step functions on [0, 1) and the Haar system.

A step function at resolution ``N`` is stored as an array whose first axis
indexes the ``2**N`` finest cells.  Any trailing axes hold the value of the
function on that cell (nothing for scalars, ``(n,)`` for vectors, ``(n, n)``
for matrices).  The array kernels in this module work along axis 0 only, so
they accept arbitrary trailing axes, including an extra batch axis used by
the norm estimators.

Haar functions follow the convention

    h_I = |I|^{-1/2} (chi_{I+} - chi_{I-}),

i.e. they are *negative on the left half* of ``I``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import InvalidExponentError, ResolutionError, ShapeError


@dataclass(frozen=True, order=True)
class DyadicInterval:
    """The interval ``[index * 2**-level, (index + 1) * 2**-level)``."""

    level: int
    index: int

    def __post_init__(self):
        if self.level < 0:
            raise ValueError(f"negative level {self.level}")
        if not 0 <= self.index < 2**self.level:
            raise ValueError(f"index {self.index} out of range for level {self.level}")

    @classmethod
    def root(cls) -> "DyadicInterval":
        return cls(0, 0)

    @property
    def length(self) -> float:
        return 2.0**-self.level

    @property
    def left(self) -> float:
        return self.index * self.length

    @property
    def right(self) -> float:
        return (self.index + 1) * self.length

    @property
    def left_child(self) -> "DyadicInterval":
        return DyadicInterval(self.level + 1, 2 * self.index)

    @property
    def right_child(self) -> "DyadicInterval":
        return DyadicInterval(self.level + 1, 2 * self.index + 1)

    @property
    def children(self) -> tuple["DyadicInterval", "DyadicInterval"]:
        return self.left_child, self.right_child

    @property
    def parent(self) -> "DyadicInterval":
        if self.level == 0:
            raise ValueError("the root interval has no parent")
        return DyadicInterval(self.level - 1, self.index // 2)

    def contains(self, other: "DyadicInterval") -> bool:
        """True if ``other`` is a (not necessarily strict) dyadic subinterval."""
        if other.level < self.level:
            return False
        return other.index >> (other.level - self.level) == self.index

    def ancestor(self, level: int) -> "DyadicInterval":
        if level > self.level:
            raise ValueError("ancestor level must not exceed own level")
        return DyadicInterval(level, self.index >> (self.level - level))

    def cell_slice(self, resolution: int) -> slice:
        """Slice of finest cells (at ``resolution``) covered by the interval."""
        if self.level > resolution:
            raise ResolutionError(
                f"interval level {self.level} finer than resolution {resolution}"
            )
        width = 2 ** (resolution - self.level)
        return slice(self.index * width, (self.index + 1) * width)

    def descendants(self, max_level: int) -> Iterator["DyadicInterval"]:
        """All J in D(I) with level <= max_level, including I, coarse to fine."""
        for lev in range(self.level, max_level + 1):
            width = 2 ** (lev - self.level)
            for k in range(self.index * width, (self.index + 1) * width):
                yield DyadicInterval(lev, k)

    def __str__(self):
        return f"[{self.left:g}, {self.right:g})"


def all_intervals(max_level: int) -> Iterator[DyadicInterval]:
    """Every dyadic subinterval of [0, 1) with level <= max_level."""
    return DyadicInterval.root().descendants(max_level)


# ---------------------------------------------------------------------------
# array kernels (axis 0 = cells)
# ---------------------------------------------------------------------------


def resolution_of(values: np.ndarray) -> int:
    ncell = values.shape[0]
    N = int(ncell).bit_length() - 1
    if ncell < 1 or 2**N != ncell:
        raise ShapeError(f"cell count {ncell} is not a power of two")
    return N


def level_means(values: np.ndarray) -> list[np.ndarray]:
    """Averages over every dyadic interval, indexed ``[level][index]``.

    Entry ``level`` has shape ``(2**level, *trailing)`` for ``level = 0..N``.
    Parents are formed by pairwise averaging of their children, so the
    nesting identity holds bit-for-bit.
    """
    N = resolution_of(values)
    out: list[np.ndarray] = [None] * (N + 1)  # type: ignore[list-item]
    cur = np.asarray(values, dtype=float)
    out[N] = cur
    for lev in range(N - 1, -1, -1):
        cur = (cur[0::2] + cur[1::2]) * 0.5
        out[lev] = cur
    return out


def haar_analysis(values: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Return ``(mean, coeffs)`` with ``coeffs[l]`` of shape ``(2**l, *trailing)``."""
    N = resolution_of(values)
    means = level_means(values)
    coeffs = []
    for lev in range(N):
        child = means[lev + 1]
        # <f, h_I> = |I|^{1/2} (m_{I+} f - m_{I-} f) / 2
        coeffs.append((child[1::2] - child[0::2]) * (0.5 * 2.0 ** (-lev / 2)))
    return means[0][0], coeffs


def haar_synthesis(mean, coeffs: list[np.ndarray]) -> np.ndarray:
    """Inverse of :func:`haar_analysis` (``mean`` may be 0 for mean-free output)."""
    N = len(coeffs)
    trailing = coeffs[0].shape[1:] if N else np.shape(mean)
    cur = np.zeros((1, *trailing)) + mean
    for lev in range(N):
        d = coeffs[lev] * 2.0 ** (lev / 2)
        nxt = np.empty((2 * cur.shape[0], *trailing))
        nxt[0::2] = cur - d
        nxt[1::2] = cur + d
        cur = nxt
    return cur


def expand_level(level_values: np.ndarray, resolution: int) -> np.ndarray:
    """Broadcast one value per level-``l`` interval down to the cells."""
    level = resolution_of(level_values)
    return np.repeat(level_values, 2 ** (resolution - level), axis=0)


def pointwise_modulus(values: np.ndarray, value_ndim: int) -> np.ndarray:
    """|f(x)| per cell: absolute value for scalars, Euclidean norm for vectors."""
    if value_ndim == 0:
        return np.abs(values)
    if value_ndim == 1:
        return np.sqrt(np.sum(values * values, axis=1))
    raise ShapeError("modulus is defined for scalar- or vector-valued functions only")


# ---------------------------------------------------------------------------
# public objects
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Function constant on each of the ``2**N`` cells of width ``2**-N``."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.ndim == 0 or arr.ndim > 3:
            raise ShapeError(f"unsupported value array of ndim {arr.ndim}")
        resolution_of(arr)
        if arr.ndim == 3 and arr.shape[1] != arr.shape[2]:
            raise ShapeError("matrix values must be square")
        if arr.ndim >= 2 and arr.shape[1] < 1:
            raise ShapeError("vector dimension must be at least 1")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def resolution(self) -> int:
        return resolution_of(self.values)

    @property
    def value_shape(self) -> tuple[int, ...]:
        return self.values.shape[1:]

    @property
    def kind(self) -> str:
        return ("scalar", "vector", "matrix")[self.values.ndim - 1]

    @property
    def dim(self) -> int:
        """Vector/matrix dimension n (1 for scalars)."""
        return self.values.shape[1] if self.values.ndim > 1 else 1

    @classmethod
    def from_callable(cls, func, resolution: int, n: int | None = None):
        """Sample ``func`` at cell midpoints."""
        x = (np.arange(2**resolution) + 0.5) / 2**resolution
        vals = np.array([func(t) for t in x], dtype=float)
        if n is not None and vals.ndim == 1 and n > 1:
            raise ShapeError("callable returned scalars but n > 1 was requested")
        return cls(vals)

    @classmethod
    def indicator(cls, interval: DyadicInterval, resolution: int) -> "StepFunction":
        vals = np.zeros(2**resolution)
        vals[interval.cell_slice(resolution)] = 1.0
        return cls(vals)

    def __add__(self, other):
        return StepFunction(self.values + _vals(other))

    def __sub__(self, other):
        return StepFunction(self.values - _vals(other))

    def __mul__(self, c):
        return StepFunction(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return StepFunction(-self.values)

    def __repr__(self):
        return f"StepFunction(N={self.resolution}, kind={self.kind}, shape={self.value_shape})"


def _vals(obj):
    return obj.values if isinstance(obj, StepFunction) else obj


@dataclass(frozen=True, eq=False)
class HaarCoefficients:
    """Mean over [0, 1) plus ``<f, h_I>`` for every I with level < N."""

    resolution: int
    mean: np.ndarray
    levels: tuple

    def __getitem__(self, interval: DyadicInterval):
        if interval.level >= self.resolution:
            raise ResolutionError(
                f"no Haar coefficient at level {interval.level} for N={self.resolution}"
            )
        return self.levels[interval.level][interval.index]

    def items(self):
        for lev, arr in enumerate(self.levels):
            for k in range(arr.shape[0]):
                yield DyadicInterval(lev, k), arr[k]

    @property
    def coeffs(self) -> dict:
        return dict(self.items())

    def energy(self) -> float:
        """Sum of squared coefficient moduli (excluding the mean)."""
        return float(sum(np.sum(np.asarray(c) ** 2) for c in self.levels))


def haar_function(interval: DyadicInterval, resolution: int) -> StepFunction:
    if interval.level >= resolution:
        raise ResolutionError(
            f"h_I for level {interval.level} needs resolution > {interval.level}, got {resolution}"
        )
    vals = np.zeros(2**resolution)
    sl = interval.cell_slice(resolution)
    half = (sl.stop - sl.start) // 2
    amp = 2.0 ** (interval.level / 2)
    vals[sl.start : sl.start + half] = -amp
    vals[sl.start + half : sl.stop] = amp
    return StepFunction(vals)


def haar_transform(f: StepFunction) -> HaarCoefficients:
    mean, coeffs = haar_analysis(f.values)
    return HaarCoefficients(f.resolution, np.asarray(mean), tuple(coeffs))


def haar_synthesize(c: HaarCoefficients) -> StepFunction:
    if c.resolution == 0:
        return StepFunction(np.asarray(c.mean)[None, ...])
    return StepFunction(haar_synthesis(c.mean, list(c.levels)))


def _pairwise_mean(arr: np.ndarray) -> np.ndarray:
    while arr.shape[0] > 1:
        arr = (arr[0::2] + arr[1::2]) * 0.5
    return arr[0]


def mean_on(f: StepFunction, interval: DyadicInterval):
    """Average of ``f`` over ``interval`` (pairwise reduction, same as the pyramid)."""
    sl = interval.cell_slice(f.resolution)
    out = _pairwise_mean(f.values[sl])
    return float(out) if np.ndim(out) == 0 else out


def lp_norm(f: StepFunction, p: float) -> float:
    """(sum |f|^p 2^-N)^{1/p}; vector values use the Euclidean modulus per cell."""
    p = float(p)
    if not p >= 1:
        raise InvalidExponentError(f"L^p norm needs p >= 1, got {p}")
    mod = pointwise_modulus(f.values, f.values.ndim - 1)
    if math.isinf(p):
        return float(mod.max())
    return float(np.mean(mod**p) ** (1.0 / p))


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------


def write_csv(f: StepFunction, path) -> None:
    """One row per cell; header ``# N=<N> shape=<a>x<b>`` (``scalar`` for scalars)."""
    shape = "x".join(str(s) for s in f.value_shape) or "scalar"
    flat = f.values.reshape(f.values.shape[0], -1)
    with open(path, "w", newline="") as fh:
        fh.write(f"# N={f.resolution} shape={shape}\n")
        writer = csv.writer(fh)
        for row in flat:
            writer.writerow([repr(float(v)) for v in row])


def read_csv(path) -> StepFunction:
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ShapeError("missing step-function CSV header")
        fields = dict(tok.split("=", 1) for tok in header[1:].split())
        N = int(fields["N"])
        shape = () if fields["shape"] == "scalar" else tuple(int(s) for s in fields["shape"].split("x"))
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    arr = np.array(rows, dtype=float)
    if arr.shape[0] != 2**N:
        raise ShapeError(f"expected {2**N} rows, found {arr.shape[0]}")
    return StepFunction(arr.reshape(2**N, *shape))
