"""Matrix weights on [0, 1): SPD-valued step functions and their powers."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .dyadic import StepFunction, lp_norm, resolution_of
from .errors import (
    InvalidExponentError,
    InvalidWeightError,
    NonIntegrableWeightError,
    ShapeError,
    UnknownFamilyError,
)

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class Exponent:
    """Lebesgue exponent p > 1 together with its conjugate p' = p / (p - 1)."""

    p: float

    def __post_init__(self):
        p = float(self.p)
        if not (p > 1 and np.isfinite(p)):
            raise InvalidExponentError(f"exponent must satisfy 1 < p < inf, got {self.p}")
        object.__setattr__(self, "p", p)

    @property
    def conj(self) -> float:
        return self.p / (self.p - 1.0)

    def __float__(self):
        return self.p


def as_exponent(p) -> Exponent:
    return p if isinstance(p, Exponent) else Exponent(p)


def _check_spd(A: np.ndarray, rtol: float = SYMMETRY_TOL) -> None:
    scale = np.maximum(1.0, np.abs(A).max(axis=(-2, -1)))
    asym = np.abs(A - np.swapaxes(A, -1, -2)).max(axis=(-2, -1))
    if np.any(asym > rtol * scale):
        raise InvalidWeightError(f"matrix not symmetric (defect {asym.max():.3e})")


def matrix_power(A, s: float, check_rtol: float = 1e-10) -> np.ndarray:
    """A^s = Q diag(lambda^s) Q^T for SPD ``A``; broadcasts over leading axes."""
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ShapeError(f"expected square matrices, got shape {A.shape}")
    _check_spd(A, check_rtol)
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    lam, Q = np.linalg.eigh(A)
    if not np.all(lam > 0):
        raise InvalidWeightError(f"matrix not positive definite (min eigenvalue {lam.min():.3e})")
    out = (Q * lam[..., None, :] ** s) @ np.swapaxes(Q, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def spectral_norm(A: np.ndarray) -> np.ndarray:
    """Operator norm of (a batch of) small matrices via the Gram eigenvalues."""
    A = np.asarray(A, dtype=float)
    gram = np.swapaxes(A, -1, -2) @ A
    return np.sqrt(np.maximum(np.linalg.eigvalsh(gram)[..., -1], 0.0))


class MatrixWeight:
    """SPD-matrix-valued step function with memoised powers W^s.

    Scalar weights are stored as ``1 x 1`` matrices.
    """

    def __init__(self, values, meta: dict | None = None):
        arr = np.array(values, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None, None]
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise ShapeError(f"weight values must have shape (2**N, n, n), got {arr.shape}")
        resolution_of(arr)
        if not np.all(np.isfinite(arr)):
            raise InvalidWeightError("weight has non-finite entries")
        _check_spd(arr)
        arr = 0.5 * (arr + np.swapaxes(arr, 1, 2))
        if np.linalg.eigvalsh(arr)[:, 0].min() <= 0:
            raise InvalidWeightError("weight is not positive definite on every cell")
        arr.setflags(write=False)
        self._values = arr
        self.meta = dict(meta or {})
        self._powers: dict[float, np.ndarray] = {1.0: arr}
        self._lock = threading.Lock()
        self._cache: dict = {}

    @classmethod
    def from_step_function(cls, f: StepFunction, meta=None) -> "MatrixWeight":
        return cls(f.values, meta)

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def base(self) -> StepFunction:
        return StepFunction(self._values)

    @property
    def n(self) -> int:
        return self._values.shape[1]

    @property
    def resolution(self) -> int:
        return resolution_of(self._values)

    def power_values(self, s: float) -> np.ndarray:
        s = float(s)
        out = self._powers.get(s)
        if out is None:
            out = matrix_power(self._values, s)
            out.setflags(write=False)
            with self._lock:
                out = self._powers.setdefault(s, out)
        return out

    def power(self, s: float) -> StepFunction:
        return StepFunction(self.power_values(s))

    def scaled(self, c: float) -> "MatrixWeight":
        return MatrixWeight(self._values * c, self.meta)

    def cached(self, key, factory):
        """Memoise derived per-weight data (reducing tables etc.)."""
        out = self._cache.get(key)
        if out is None:
            out = factory()
            with self._lock:
                out = self._cache.setdefault(key, out)
        return out

    def __repr__(self):
        return f"MatrixWeight(N={self.resolution}, n={self.n}, meta={self.meta})"


# ---------------------------------------------------------------------------
# weight families
# ---------------------------------------------------------------------------

FAMILIES = ("constant", "scalar_power", "diagonal_powers", "rotated_powers")


@dataclass(frozen=True)
class WeightFamily:
    """Parametrised test weight.

    ``constant``         W = matrix
    ``scalar_power``     W = |x - x0|^alpha Id_n
    ``diagonal_powers``  W = diag(|x - x0|^alpha_i)
    ``rotated_powers``   W = R(theta(x)) diag(|x - x0|^alpha_i) R(theta(x))^T
                         with theta(x) = theta[0] + theta[1] x, rotating the
                         first two coordinates.
    """

    kind: str
    matrix: tuple | None = None
    alphas: tuple = ()
    x0: float = 0.5
    n: int = 1
    theta: tuple = (0.0, np.pi / 2)

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise UnknownFamilyError(f"unknown weight family {self.kind!r}")
        if self.kind == "constant":
            if self.matrix is None:
                raise InvalidWeightError("constant family needs a matrix")
            m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
            object.__setattr__(self, "matrix", tuple(map(tuple, m)))
            object.__setattr__(self, "n", m.shape[0])
        else:
            alphas = tuple(float(a) for a in np.atleast_1d(self.alphas))
            if self.kind == "scalar_power":
                if len(alphas) != 1:
                    raise InvalidWeightError("scalar_power takes a single alpha")
            else:
                object.__setattr__(self, "n", len(alphas))
            if self.kind == "rotated_powers" and len(alphas) < 2:
                raise InvalidWeightError("rotated_powers needs at least two exponents")
            if not all(np.isfinite(alphas)) or not np.isfinite(self.x0):
                raise InvalidWeightError("family parameters must be finite")
            object.__setattr__(self, "alphas", alphas)
            object.__setattr__(self, "theta", tuple(float(t) for t in self.theta))
            if 0.0 <= self.x0 <= 1.0 and min(alphas) <= -1:
                raise NonIntegrableWeightError(
                    f"exponent {min(alphas)} <= -1 with singularity x0={self.x0} in [0, 1]"
                )

    @classmethod
    def constant(cls, matrix):
        return cls("constant", matrix=matrix)

    @classmethod
    def scalar_power(cls, alpha, x0=0.5, n=1):
        return cls("scalar_power", alphas=(alpha,), x0=x0, n=n)

    @classmethod
    def diagonal_powers(cls, alphas, x0=0.5):
        return cls("diagonal_powers", alphas=tuple(alphas), x0=x0)

    @classmethod
    def rotated_powers(cls, alphas, x0=0.5, theta=(0.0, np.pi / 2)):
        return cls("rotated_powers", alphas=tuple(alphas), x0=x0, theta=tuple(theta))

    @classmethod
    def from_dict(cls, d: dict) -> "WeightFamily":
        kind = d.get("family")
        if kind not in FAMILIES:
            raise UnknownFamilyError(f"unknown weight family {kind!r}")
        if kind == "constant":
            return cls.constant(d["matrix"])
        if kind == "scalar_power":
            return cls.scalar_power(d.get("alpha", 0.5), d.get("x0", 0.5), int(d.get("n", 1)))
        alphas = d.get("alphas", d.get("alpha"))
        if alphas is None:
            raise InvalidWeightError(f"{kind} needs 'alphas'")
        if kind == "diagonal_powers":
            return cls.diagonal_powers(alphas, d.get("x0", 0.5))
        return cls.rotated_powers(alphas, d.get("x0", 0.5), tuple(d.get("theta", (0.0, np.pi / 2))))

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"family": "constant", "matrix": [list(r) for r in self.matrix]}
        d = {"family": self.kind, "x0": self.x0}
        if self.kind == "scalar_power":
            d.update(alpha=self.alphas[0], n=self.n)
        else:
            d["alphas"] = list(self.alphas)
        if self.kind == "rotated_powers":
            d["theta"] = list(self.theta)
        return d


def _power_cell_average(a, b, x0, alpha):
    """Exact mean of |x - x0|^alpha over [a, b] (alpha > -1 near x0)."""
    def prim(t):
        return np.sign(t) * np.abs(t) ** (alpha + 1) / (alpha + 1)

    return (prim(b - x0) - prim(a - x0)) / (b - a)


def make_weight(family: WeightFamily, resolution: int, sampling: str = "midpoint") -> MatrixWeight:
    """Sample ``family`` on the ``2**resolution`` grid.

    ``sampling`` is ``"midpoint"`` (point values at cell midpoints) or
    ``"average"`` (exact cell averages, available for the non-rotated
    families).  In midpoint mode a singularity sitting exactly on a sample
    point is shifted by ``2**-(N+4)`` so every cell stays positive definite.
    """
    if sampling not in ("midpoint", "average"):
        raise ValueError(f"unknown sampling mode {sampling!r}")
    N = int(resolution)
    ncell = 2**N
    meta = {"family": family.to_dict(), "resolution": N, "sampling": sampling}

    if family.kind == "constant":
        A = np.asarray(family.matrix, dtype=float)
        return MatrixWeight(np.broadcast_to(A, (ncell, *A.shape)).copy(), meta)

    x0 = family.x0
    mid = (np.arange(ncell) + 0.5) / ncell
    if sampling == "midpoint":
        k = x0 * ncell - 0.5
        if 0 <= x0 < 1 and abs(k - round(k)) < 1e-9:
            x0 = x0 + 2.0 ** (-N - 4)
        meta["x0_effective"] = x0
        diag = np.abs(mid[:, None] - x0) ** np.asarray(family.alphas)[None, :]
    else:
        if family.kind == "rotated_powers":
            raise InvalidWeightError("exact cell averages are not available for rotated_powers")
        edges = np.arange(ncell + 1) / ncell
        diag = np.stack(
            [_power_cell_average(edges[:-1], edges[1:], x0, a) for a in family.alphas], axis=1
        )

    if family.kind == "scalar_power":
        vals = diag[:, 0, None, None] * np.eye(family.n)[None]
    else:
        vals = np.zeros((ncell, family.n, family.n))
        idx = np.arange(family.n)
        vals[:, idx, idx] = diag
        if family.kind == "rotated_powers":
            th = family.theta[0] + family.theta[1] * mid
            R = np.broadcast_to(np.eye(family.n), vals.shape).copy()
            R[:, 0, 0] = np.cos(th)
            R[:, 0, 1] = -np.sin(th)
            R[:, 1, 0] = np.sin(th)
            R[:, 1, 1] = np.cos(th)
            vals = R @ vals @ np.swapaxes(R, 1, 2)
    if not np.all(np.isfinite(vals)):
        raise InvalidWeightError("sampled weight is not finite")
    return MatrixWeight(vals, meta)


# ---------------------------------------------------------------------------
# pointwise action and weighted norms
# ---------------------------------------------------------------------------


def apply_cellwise(M: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Per-cell matrix-vector product; ``f`` may carry trailing batch axes."""
    return np.einsum("cij,cj...->ci...", M, f)


def multiply_pointwise(M, f: StepFunction) -> StepFunction:
    Mv = M.values if isinstance(M, (StepFunction, MatrixWeight)) else np.asarray(M)
    if Mv.ndim != 3 or f.values.ndim != 2:
        raise ShapeError("multiply_pointwise needs a matrix function and a vector function")
    if Mv.shape[0] != f.values.shape[0]:
        raise ShapeError(f"resolution mismatch: {Mv.shape[0]} vs {f.values.shape[0]} cells")
    if Mv.shape[2] != f.values.shape[1]:
        raise ShapeError(f"dimension mismatch: {Mv.shape[1:]} acting on {f.values.shape[1]}")
    return StepFunction(apply_cellwise(Mv, f.values))


def as_vector_function(f: StepFunction) -> StepFunction:
    return StepFunction(f.values[:, None]) if f.values.ndim == 1 else f


def weighted_lp_norm(W: MatrixWeight, p, f: StepFunction) -> float:
    """(int |W^{1/p} f|^p dx)^{1/p}."""
    p = as_exponent(p).p
    f = as_vector_function(f)
    return lp_norm(multiply_pointwise(W.power_values(1.0 / p), f), p)
