"""Dyadic operators: paraproducts, constant Haar multipliers, square and
maximal functions, and BMO / Carleson norms of symbols.

Every operator has two layers.  The ``*_cells`` kernels act on raw arrays
of shape ``(2**N, n, ...)`` (extra trailing axes are carried along, which
lets the norm estimators push a whole batch of test functions through in
one call) and come with exact adjoints.  The public functions wrap them for
:class:`~mwparaproduct.dyadic.StepFunction` inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dyadic import (
    StepFunction,
    expand_level,
    haar_analysis,
    haar_synthesis,
    level_means,
    pointwise_modulus,
    resolution_of,
)
from .errors import InvalidInputError, ShapeError, SingularMultiplierError
from .reducing import reducing_table
from .weights import MatrixWeight, apply_cellwise, as_exponent, matrix_power, spectral_norm

MULTIPLIER_VARIANTS = ("reducing", "inverse_reducing", "naive_average", "custom")


@dataclass(frozen=True, eq=False)
class SymbolCoefficients:
    """Haar coefficients b_I (scalars) or B_I (n x n matrices), levels 0..N-1."""

    resolution: int
    levels: tuple

    def __post_init__(self):
        if len(self.levels) != self.resolution:
            raise ShapeError(f"need {self.resolution} levels, got {len(self.levels)}")
        lv = []
        for lev, arr in enumerate(self.levels):
            arr = np.asarray(arr, dtype=float)
            if arr.shape[0] != 2**lev or arr.ndim not in (1, 3):
                raise ShapeError(f"bad coefficient array at level {lev}: {arr.shape}")
            lv.append(arr)
        object.__setattr__(self, "levels", tuple(lv))

    @property
    def is_matrix(self) -> bool:
        return self.resolution > 0 and self.levels[0].ndim == 3

    @classmethod
    def from_function(cls, b: StepFunction) -> "SymbolCoefficients":
        vals = b.values
        if vals.ndim == 2:
            raise ShapeError("symbols are scalar or matrix valued")
        _, coeffs = haar_analysis(vals)
        return cls(b.resolution, tuple(coeffs))

    @classmethod
    def from_mapping(cls, mapping: dict, resolution: int, n: int | None = None):
        """Finitely supported symbol from ``{DyadicInterval: b_I}``."""
        shape = () if n is None else (n, n)
        levels = [np.zeros((2**lev, *shape)) for lev in range(resolution)]
        for I, val in mapping.items():
            levels[I.level][I.index] = val
        return cls(resolution, tuple(levels))

    @classmethod
    def zeros(cls, resolution: int, n: int | None = None):
        return cls.from_mapping({}, resolution, n)

    def truncate(self, resolution: int) -> "SymbolCoefficients":
        """The section of levels < ``resolution``."""
        return SymbolCoefficients(resolution, self.levels[:resolution])

    def times_identity(self, n: int) -> "SymbolCoefficients":
        eye = np.eye(n)
        return SymbolCoefficients(self.resolution, tuple(a[:, None, None] * eye for a in self.levels))


@dataclass(frozen=True, eq=False)
class MultiplierSpec:
    """Per-interval matrices a_I (levels 0..N-1) of a constant Haar multiplier."""

    levels: tuple
    provenance: str = "custom"
    backend: str | None = None

    def __post_init__(self):
        if self.provenance not in MULTIPLIER_VARIANTS:
            raise ValueError(f"unknown multiplier provenance {self.provenance!r}")
        lv = tuple(np.asarray(a, dtype=float) for a in self.levels)
        for a in lv:
            if not np.all(np.isfinite(a)):
                raise ValueError("multiplier entries must be finite")
        object.__setattr__(self, "levels", lv)

    @property
    def resolution(self) -> int:
        return len(self.levels)

    @classmethod
    def constant(cls, matrix, resolution: int, provenance: str = "custom"):
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        return cls(tuple(np.broadcast_to(m, (2**lev, *m.shape)) for lev in range(resolution)), provenance)

    def inverted(self) -> "MultiplierSpec":
        inv = []
        for a in self.levels:
            if np.any(np.abs(np.linalg.det(a)) < 1e-300) or np.linalg.cond(a).max() > 1e14:
                raise SingularMultiplierError("multiplier has a singular entry")
            inv.append(np.linalg.inv(a))
        prov = {"reducing": "inverse_reducing", "inverse_reducing": "reducing"}.get(self.provenance, "custom")
        return MultiplierSpec(tuple(inv), prov, self.backend)

    def transposed(self) -> "MultiplierSpec":
        return MultiplierSpec(tuple(np.swapaxes(a, 1, 2) for a in self.levels), "custom", self.backend)


# ---------------------------------------------------------------------------
# array kernels
# ---------------------------------------------------------------------------


def _check_res(symbol_res, arr):
    if symbol_res != resolution_of(arr):
        raise ShapeError(f"resolution mismatch: {symbol_res} vs {resolution_of(arr)}")


def _bcast(a, x):
    """Reshape per-interval scalars ``a`` (2**l,) to broadcast against ``x``."""
    return a.reshape(a.shape + (1,) * (x.ndim - 1))


def paraproduct_cells(levels, f):
    """sum_I b_I m_I f h_I for scalar or matrix coefficient levels."""
    _check_res(len(levels), f)
    if len(levels) == 0:
        return np.zeros_like(f)
    means = level_means(f)
    if levels[0].ndim == 1:
        coeffs = [_bcast(b, means[lev]) * means[lev] for lev, b in enumerate(levels)]
    else:
        coeffs = [np.einsum("kij,kj...->ki...", B, means[lev]) for lev, B in enumerate(levels)]
    return haar_synthesis(0.0, coeffs)


def paraproduct_adjoint_cells(levels, g):
    """sum_I b_I^T <g, h_I> chi_I / |I|."""
    _check_res(len(levels), g)
    N = len(levels)
    out = np.zeros_like(g, dtype=float)
    if N == 0:
        return out
    _, c = haar_analysis(g)
    for lev, b in enumerate(levels):
        if b.ndim == 1:
            term = _bcast(b, c[lev]) * c[lev]
        else:
            term = np.einsum("kji,kj...->ki...", b, c[lev])
        out += expand_level(term * 2.0**lev, N)
    return out


def multiplier_cells(levels, f):
    """sum_I a_I f_I h_I; ``levels`` may hold scalars or matrices."""
    _check_res(len(levels), f)
    if len(levels) == 0:
        return np.zeros_like(f)
    _, c = haar_analysis(f)
    out = []
    for lev, a in enumerate(levels):
        if a.ndim == 1:
            out.append(_bcast(a, c[lev]) * c[lev])
        else:
            out.append(np.einsum("kij,kj...->ki...", a, c[lev]))
    return haar_synthesis(0.0, out)


def multiplier_adjoint_cells(levels, g):
    return multiplier_cells([a if a.ndim == 1 else np.swapaxes(a, 1, 2) for a in levels], g)


# ---------------------------------------------------------------------------
# public operators
# ---------------------------------------------------------------------------


def _vector(f: StepFunction) -> np.ndarray:
    if f.values.ndim == 1:
        return f.values
    if f.values.ndim == 2:
        return f.values
    raise ShapeError("expected a scalar or vector valued function")


def paraproduct(b: SymbolCoefficients, f: StepFunction) -> StepFunction:
    """pi_b f = sum_I b_I (m_I f) h_I, acting componentwise on vector f."""
    if b.is_matrix:
        raise ShapeError("use matrix_paraproduct for matrix symbols")
    return StepFunction(paraproduct_cells(b.levels, _vector(f)))


def matrix_paraproduct(B: SymbolCoefficients, f: StepFunction) -> StepFunction:
    """pi_B f = sum_I (B_I m_I f) h_I."""
    if not B.is_matrix and B.resolution > 0:
        raise ShapeError("matrix_paraproduct needs matrix coefficients")
    vals = f.values
    if vals.ndim != 2:
        raise ShapeError("matrix_paraproduct acts on vector valued functions")
    if B.resolution and B.levels[0].shape[1] != vals.shape[1]:
        raise ShapeError(f"symbol dimension {B.levels[0].shape[1]} vs function dimension {vals.shape[1]}")
    return StepFunction(paraproduct_cells(B.levels, vals))


def haar_multiplier(a: MultiplierSpec, f: StepFunction) -> StepFunction:
    """T_a f = sum_I a_I f_I h_I (the mean of f is annihilated)."""
    vals = f.values
    if a.resolution and a.levels[0].ndim == 3:
        if vals.ndim != 2 or a.levels[0].shape[2] != vals.shape[1]:
            raise ShapeError("multiplier matrices do not match the function dimension")
    return StepFunction(multiplier_cells(a.levels, vals))


def build_multiplier(
    W: MatrixWeight,
    p,
    variant: str = "reducing",
    backend: str = "auto",
    invert: bool = False,
    **kwargs,
) -> MultiplierSpec:
    """Multiplier coefficients for ``reducing`` (V_I), ``inverse_reducing``
    (V_I^{-1}) or ``naive_average`` ((m_I W)^{1/p}); ``invert`` inverts each a_I."""
    ex = as_exponent(p)
    N = W.resolution
    if variant in ("reducing", "inverse_reducing"):
        table = reducing_table(W, ex.p, max(N - 1, 0), backend, **kwargs)
        levels = tuple(table.V[:N])
        spec = MultiplierSpec(levels, "reducing", table.backend)
        if variant == "inverse_reducing":
            spec = spec.inverted()
    elif variant == "naive_average":
        means = level_means(W.values)
        levels = tuple(matrix_power(means[lev], 1.0 / ex.p) for lev in range(N))
        spec = MultiplierSpec(levels, "naive_average")
    else:
        raise ValueError(f"unknown multiplier variant {variant!r}")
    return spec.inverted() if invert else spec


def square_function(f: StepFunction) -> StepFunction:
    """S f(x) = ( sum_{I containing x} |f_I|^2 / |I| )^{1/2}."""
    vals = f.values
    if vals.ndim > 2:
        raise ShapeError("square function of a matrix valued function is not defined")
    N = f.resolution
    _, c = haar_analysis(vals)
    acc = np.zeros(2**N)
    for lev, cl in enumerate(c):
        e = cl**2 if cl.ndim == 1 else np.sum(cl**2, axis=1)
        acc += expand_level(e * 2.0**lev, N)
    return StepFunction(np.sqrt(acc))


def dyadic_maximal(g: StepFunction) -> StepFunction:
    """M^d g(x) = max over dyadic I containing x (cells included) of m_I g."""
    vals = g.values
    if vals.ndim != 1:
        raise ShapeError("dyadic maximal function takes scalar input")
    if np.any(vals < 0):
        raise InvalidInputError("dyadic maximal function requires a nonnegative input")
    N = g.resolution
    means = level_means(vals)
    out = vals.copy()
    for lev in range(N):
        np.maximum(out, expand_level(means[lev], N), out=out)
    return StepFunction(out)


def _carleson_sup(energy_levels, depth):
    """sup_I (1/|I|) sum_{J in D(I)} e_J for per-interval energies e_J."""
    N = len(energy_levels)
    depth = N if depth is None else depth
    if depth > N:
        raise ValueError(f"depth {depth} exceeds resolution {N}")
    best = 0.0
    acc = np.zeros(2**N)  # level N intervals carry no coefficients
    for lev in range(N - 1, -1, -1):
        acc = energy_levels[lev] + acc[0::2] + acc[1::2]
        if lev <= depth:
            best = max(best, float((acc * 2.0**lev).max()))
    return best**0.5


def bmo_norm(b: SymbolCoefficients, depth: int | None = None) -> float:
    """sup_I ( (1/|I|) sum_{J in D(I)} |b_J|^2 )^{1/2} over levels <= depth."""
    if b.is_matrix:
        raise ShapeError("use matrix_carleson_norm for matrix symbols")
    return _carleson_sup([np.asarray(a) ** 2 for a in b.levels], depth)


def matrix_carleson_norm(B: SymbolCoefficients, depth: int | None = None) -> float:
    """sup_I ( (1/|I|) sum_{J in D(I)} ||B_J^* B_J|| )^{1/2}."""
    if not B.is_matrix:
        return bmo_norm(B, depth)
    return _carleson_sup([spectral_norm(a) ** 2 for a in B.levels], depth)


def conjugated_paraproduct(W: MatrixWeight, p, b: SymbolCoefficients, f: StepFunction) -> StepFunction:
    """W^{1/p} pi_b W^{-1/p} f."""
    ex = as_exponent(p)
    x = apply_cellwise(W.power_values(-1.0 / ex.p), f.values)
    y = paraproduct_cells(b.levels, x)
    return StepFunction(apply_cellwise(W.power_values(1.0 / ex.p), y))


def conjugated_paraproduct_M(
    W: MatrixWeight, p, b: SymbolCoefficients, f: StepFunction, backend: str = "auto", **kwargs
) -> StepFunction:
    """M_W^{1/p} pi_b W^{-1/p} f with M_W^{1/p} the reducing-operator multiplier."""
    ex = as_exponent(p)
    spec = build_multiplier(W, ex, "reducing", backend, **kwargs)
    x = apply_cellwise(W.power_values(-1.0 / ex.p), f.values)
    return StepFunction(multiplier_cells(spec.levels, paraproduct_cells(b.levels, x)))


# ---------------------------------------------------------------------------
# symbol corpora
# ---------------------------------------------------------------------------


def random_bmo_symbol(resolution: int, rng: np.random.Generator, n: int | None = None) -> SymbolCoefficients:
    """b_I = |I|^{1/2} g_I / (1 + level), rescaled so that bmo_norm == 1.

    ``n`` switches to matrix symbols with standard normal entries in G_I and
    normalises the matrix Carleson norm instead.  Coefficients of coarse
    levels do not depend on ``resolution`` beyond the rescaling, so sections
    of one symbol are nested.
    """
    levels = []
    for lev in range(resolution):
        shape = (2**lev,) if n is None else (2**lev, n, n)
        levels.append(rng.standard_normal(shape) * (2.0 ** (-lev / 2) / (1 + lev)))
    sym = SymbolCoefficients(resolution, tuple(levels))
    norm = matrix_carleson_norm(sym) if n is not None else bmo_norm(sym)
    return SymbolCoefficients(resolution, tuple(a / norm for a in sym.levels))


def bmo_corpus(count: int, resolution: int, seed: int = 0, n: int | None = None) -> list:
    """``count`` normalised random symbols, symbol ``k`` drawn from seed ``(seed, k)``."""
    return [
        random_bmo_symbol(resolution, np.random.default_rng([seed, k]), n) for k in range(count)
    ]


def pointwise_norm(f: StepFunction) -> np.ndarray:
    return pointwise_modulus(f.values, f.values.ndim - 1)
