"""Finite-section operator norms on L^p(R^n) and cross-resolution sweeps.

Operators act on cell arrays of shape ``(2**N, n, B)``; the trailing batch
axis lets a whole set of starting vectors move through the kernels at once.
Norms use the normalised measure on [0, 1): ``||f||_p = (mean_x |f(x)|^p)^{1/p}``
with ``|.|`` the Euclidean norm on R^n.  Ratios do not depend on that choice.

For general ``p`` the estimate is a lower bound obtained from the
Boyd / Higham power iteration

    f <- J_{p'}( A^T J_p(A f) ),    J_r(y) = |y|^{r-2} y / ||y||_r^{r-1},

whose ratio ``||A f||_p / ||f||_p`` is nondecreasing along the iteration.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse.linalg import ArpackError, LinearOperator, svds

from .errors import NonlinearOperatorError, ShapeError
from .operators import (
    MultiplierSpec,
    SymbolCoefficients,
    bmo_corpus,
    build_multiplier,
    multiplier_adjoint_cells,
    multiplier_cells,
    paraproduct_adjoint_cells,
    paraproduct_cells,
)
from .weights import MatrixWeight, WeightFamily, apply_cellwise, as_exponent, make_weight

log = logging.getLogger(__name__)

METHODS = ("auto", "dense_svd", "power_iteration_p2", "multistart_ascent")
DENSE_LIMIT = 2**8 * 3
OPERATORS = (
    "paraproduct",
    "matrix_paraproduct",
    "multiplier:reducing",
    "multiplier:inverse_reducing",
    "multiplier:naive_average",
    "conjugated",
    "conjugated_M",
    "weighted_T",
    "naive",
    "matrix_conjugated",
)
SYMBOL_OPERATORS = ("paraproduct", "matrix_paraproduct", "conjugated", "conjugated_M", "matrix_conjugated")
OPEN_QUESTION = ("naive", "matrix_conjugated")


@dataclass
class CellOperator:
    """A linear map on ``(2**N, n, ...)`` arrays with an optional adjoint."""

    resolution: int
    n: int
    matvec: Callable
    rmatvec: Callable | None = None
    name: str = "custom"

    @property
    def dim(self) -> int:
        return 2**self.resolution * self.n

    def __call__(self, x):
        return self.matvec(x)

    def dense(self) -> np.ndarray:
        """Matrix of the operator in the flattened (cell, component) basis."""
        D = self.dim
        E = np.eye(D).reshape(2**self.resolution, self.n, D)
        return self.matvec(E).reshape(D, D)

    def with_dense_adjoint(self) -> "CellOperator":
        if self.rmatvec is not None:
            return self
        A = self.dense()
        shape = (2**self.resolution, self.n)

        def rmv(y):
            flat = y.reshape(self.dim, -1)
            return (A.T @ flat).reshape(shape + y.shape[2:])

        return CellOperator(self.resolution, self.n, self.matvec, rmv, self.name)

    def as_linear_operator(self) -> LinearOperator:
        shape = (2**self.resolution, self.n)
        D = self.dim

        def mv(v):
            return self.matvec(np.asarray(v).reshape(shape)).reshape(D)

        def rmv(v):
            return self.rmatvec(np.asarray(v).reshape(shape)).reshape(D)

        return LinearOperator((D, D), matvec=mv, rmatvec=rmv, dtype=float)


def _conj(L, inner_fwd, inner_adj, R):
    """Operator ``L inner R`` for cellwise ``L, R`` given as (matrix, transpose) pairs or None."""

    def mv(x):
        y = x if R is None else apply_cellwise(R[0], x)
        y = inner_fwd(y)
        return y if L is None else apply_cellwise(L[0], y)

    def rmv(y):
        x = y if L is None else apply_cellwise(L[1], y)
        x = inner_adj(x)
        return x if R is None else apply_cellwise(R[1], x)

    return mv, rmv


def _pair(A):
    return (A, np.swapaxes(A, 1, 2))


def _multiplier_ops(spec: MultiplierSpec):
    lv = list(spec.levels)
    return (lambda x: multiplier_cells(lv, x)), (lambda y: multiplier_adjoint_cells(lv, y))


def make_operator(
    name: str,
    W: MatrixWeight,
    p,
    symbol: SymbolCoefficients | None = None,
    backend: str = "auto",
    **kwargs,
) -> CellOperator:
    """Named operator at the resolution of ``W``.

    ``paraproduct``       pi_b
    ``matrix_paraproduct`` pi_B
    ``multiplier:<v>``    constant Haar multiplier of variant ``v``
    ``conjugated``        W^{1/p} pi_b W^{-1/p}
    ``conjugated_M``      M_W^{1/p} pi_b W^{-1/p}
    ``weighted_T``         W^{1/p} (M_W^{1/p})^{-1}
    ``naive``             W^{1/p} (M~_W^{1/p})^{-1} with a_I = (m_I W)^{1/p}
    ``matrix_conjugated`` W^{1/p} pi_B W^{-1/p}
    """
    ex = as_exponent(p)
    N, n = W.resolution, W.n
    if name in SYMBOL_OPERATORS:
        if symbol is None:
            raise ValueError(f"operator {name!r} needs a symbol")
        if symbol.resolution != N:
            symbol = symbol.truncate(N)
        if name.startswith("matrix") and not symbol.is_matrix:
            symbol = symbol.times_identity(n)
        if name in ("paraproduct", "conjugated", "conjugated_M") and symbol.is_matrix:
            raise ShapeError(f"operator {name!r} takes a scalar symbol")
        lv = list(symbol.levels)
        pi = (lambda x: paraproduct_cells(lv, x)), (lambda y: paraproduct_adjoint_cells(lv, y))

    Wp = Wm = None
    if name in ("conjugated", "matrix_conjugated", "conjugated_M", "weighted_T", "naive"):
        Wp = _pair(W.power_values(1.0 / ex.p))
        Wm = _pair(W.power_values(-1.0 / ex.p))

    if name in ("paraproduct", "matrix_paraproduct"):
        mv, rmv = pi
    elif name.startswith("multiplier:"):
        spec = build_multiplier(W, ex, name.split(":", 1)[1], backend, **kwargs)
        mv, rmv = _multiplier_ops(spec)
    elif name in ("conjugated", "matrix_conjugated"):
        mv, rmv = _conj(Wp, *pi, Wm)
    elif name == "conjugated_M":
        m_fwd, m_adj = _multiplier_ops(build_multiplier(W, ex, "reducing", backend, **kwargs))
        mv, rmv = _conj(None, lambda x: m_fwd(pi[0](x)), lambda y: pi[1](m_adj(y)), Wm)
    elif name in ("weighted_T", "naive"):
        variant = "reducing" if name == "weighted_T" else "naive_average"
        inv = build_multiplier(W, ex, variant, backend, invert=True, **kwargs)
        mv, rmv = _conj(Wp, *_multiplier_ops(inv), None)
    else:
        raise ValueError(f"unknown operator {name!r}; expected one of {OPERATORS}")
    return CellOperator(N, n, mv, rmv, name)


# ---------------------------------------------------------------------------
# norm estimation
# ---------------------------------------------------------------------------


def _lp(x, p):
    """Batched L^p norms of ``(cells, n, B)`` arrays -> (B,)."""
    r = np.linalg.norm(x, axis=1)
    if np.isinf(p):
        return r.max(axis=0)
    return np.mean(r**p, axis=0) ** (1.0 / p)


def _duality_map(y, p):
    r = np.linalg.norm(y, axis=1, keepdims=True)
    nrm = _lp(y, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(r > 0, r ** (p - 2), 0.0)
    return scale * y / np.where(nrm > 0, nrm ** (p - 1), 1.0)


@dataclass
class NormEstimate:
    value: float
    method: str
    p: float
    resolution: int
    n: int
    trials: int
    seed: int
    witness: np.ndarray = field(repr=False)
    diagnostics: dict = field(default_factory=dict)

    def ratio(self, op: CellOperator) -> float:
        """Re-evaluate ``||A w|| / ||w||`` for the stored witness."""
        w = self.witness[..., None]
        return float(_lp(op.matvec(w), self.p)[0] / _lp(w, self.p)[0])

    def to_dict(self) -> dict:
        return {
            "value": float(self.value),
            "method": self.method,
            "p": float(self.p),
            "resolution": self.resolution,
            "n": self.n,
            "trials": self.trials,
            "seed": self.seed,
            "diagnostics": self.diagnostics,
        }


def check_linearity(op: CellOperator, seed: int = 0, probes: int = 3, rtol: float = 1e-8) -> float:
    """Largest relative defect of ``A(af + g) - aA f - A g``; raises above ``rtol``."""
    rng = np.random.default_rng([seed, 7919])
    shape = (2**op.resolution, op.n, probes)
    f, g = rng.standard_normal(shape), rng.standard_normal(shape)
    a = rng.standard_normal(probes)
    lhs = op.matvec(a * f + g)
    rhs = a * op.matvec(f) + op.matvec(g)
    scale = max(np.abs(rhs).max(), np.abs(lhs).max(), 1e-300)
    defect = float(np.abs(lhs - rhs).max() / scale)
    if defect > rtol:
        raise NonlinearOperatorError(f"operator {op.name!r} failed the linearity probe (defect {defect:.3g})")
    return defect


def _dense_svd(op, p, seed):
    A = op.dense()
    U, s, Vt = np.linalg.svd(A)
    w = Vt[0].reshape(2**op.resolution, op.n)
    return NormEstimate(float(s[0]), "dense_svd", p, op.resolution, op.n, 1, seed, w,
                        {"second_singular_value": float(s[1]) if s.size > 1 else 0.0})


def _svds(op, p, seed, tol):
    if op.rmatvec is None:
        op = op.with_dense_adjoint()
    L = op.as_linear_operator()
    v0 = np.random.default_rng(seed).standard_normal(op.dim)
    try:
        _, s, vt = svds(L, k=1, v0=v0, tol=tol, random_state=seed)
    except ArpackError as err:
        # degenerate top spectrum (e.g. multiples of the identity); at p = 2
        # the duality-map ascent is plain power iteration on A^T A
        log.debug("svds failed (%s); falling back to power iteration", err)
        est = _multistart(op, 2.0, seed, 4, 5000, tol**2)
        est.method = "power_iteration_p2"
        est.diagnostics["arpack_fallback"] = True
        return est
    w = vt[0].reshape(2**op.resolution, op.n)
    value = float(_lp(op.matvec(w[..., None]), 2.0)[0] / _lp(w[..., None], 2.0)[0])
    return NormEstimate(value, "power_iteration_p2", p, op.resolution, op.n, 1, seed, w,
                        {"svds_value": float(s[0]), "tol": tol})


def _multistart(op, p, seed, starts, max_iter, tol):
    if op.rmatvec is None:
        op = op.with_dense_adjoint()
    pc = as_exponent(p).conj
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2**op.resolution, op.n, starts))
    x /= _lp(x, p)
    vals = np.zeros(starts)
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        y = op.matvec(x)
        new = _lp(y, p)
        if np.all(new == 0):
            vals = new
            converged = True
            break
        z = op.rmatvec(_duality_map(y, p))
        x_new = _duality_map(z, pc)
        change = np.abs(new - vals) / np.maximum(new, 1e-300)
        vals = new
        if it % 50 == 0:
            history.append(float(vals.max()))
        if np.all(change < tol):
            converged = True
            break
        dead = ~np.isfinite(x_new).all(axis=(0, 1)) | (_lp(x_new, p) == 0)
        x = np.where(dead, x, x_new)
    best = int(np.argmax(vals))
    w = x[:, :, best]
    value = float(_lp(op.matvec(w[..., None]), p)[0] / _lp(w[..., None], p)[0])
    return NormEstimate(
        value, "multistart_ascent", p, op.resolution, op.n, starts, seed, w,
        {"iterations": it, "converged": converged, "start_values": [float(v) for v in vals],
         "history": history, "tol": tol},
    )


def operator_norm_estimate(
    op: CellOperator,
    p,
    method: str = "auto",
    seed: int = 0,
    starts: int = 16,
    max_iter: int = 2000,
    tol: float = 1e-12,
    check: bool = True,
) -> NormEstimate:
    """Lower bound for ``||A||_{L^p -> L^p}`` of the finite section ``op``.

    ``auto`` picks the dense SVD at p = 2 for small sections, ``svds`` at
    p = 2 beyond that, and the multistart duality-map ascent otherwise.

    Raises
    ------
    NonlinearOperatorError
        If the linearity probe fails.
    """
    p = as_exponent(p).p
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if check:
        check_linearity(op, seed)
    if method == "auto":
        if p == 2:
            method = "dense_svd" if op.dim <= DENSE_LIMIT else "power_iteration_p2"
        else:
            method = "multistart_ascent"
    if method in ("dense_svd", "power_iteration_p2") and p != 2:
        raise ValueError(f"{method} computes the L^2 norm only")
    if method == "dense_svd":
        return _dense_svd(op, p, seed)
    if method == "power_iteration_p2":
        return _svds(op, p, seed, 1e-10)
    return _multistart(op, p, seed, starts, max_iter, tol)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

DEFAULT_THRESHOLDS = {"plateau": 1.1, "growth": 1.5}


def verdict(r: float, thresholds=None) -> str:
    t = {**DEFAULT_THRESHOLDS, **(thresholds or {})}
    if r <= t["plateau"]:
        return "bounded-plateau"
    if r >= t["growth"]:
        return "growing"
    return "inconclusive"


@dataclass
class SweepReport:
    operator: str
    p: float
    resolutions: list
    estimates: list
    per_symbol: list
    growth_ratio: float
    verdict: str
    thresholds: dict
    label: str
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "operator": self.operator,
            "p": float(self.p),
            "resolutions": list(self.resolutions),
            "estimates": [float(e) for e in self.estimates],
            "per_symbol": [[e.to_dict() for e in row] for row in self.per_symbol],
            "growth_ratio": float(self.growth_ratio),
            "verdict": self.verdict,
            "label": self.label,
            "thresholds": dict(self.thresholds),
            "config": self.config,
        }


def _growth_ratio(resolutions, estimates):
    top = resolutions[-1]
    lower = [i for i, N in enumerate(resolutions) if N <= top - 2]
    ref = lower[-1] if lower else 0
    base = estimates[ref]
    return float(estimates[-1] / base) if base > 0 else (1.0 if estimates[-1] == 0 else np.inf)


def boundedness_sweep(
    family: WeightFamily,
    p,
    operator: str = "conjugated",
    resolutions=(8, 10, 12),
    symbols: list | None = None,
    corpus_size: int = 10,
    seed: int = 0,
    backend: str = "auto",
    method: str = "auto",
    thresholds: dict | None = None,
    threads: int = 1,
    sampling: str = "midpoint",
    starts: int = 16,
    max_iter: int = 100,
    tol: float = 1e-7,
) -> SweepReport:
    """Norm estimates of ``operator`` for the weight family resampled at each N.

    Symbols are drawn once at the finest resolution and truncated, so the
    symbols at different N are sections of one another.  The per-N estimate is
    the maximum over the corpus.
    """
    ex = as_exponent(p)
    resolutions = sorted(int(N) for N in resolutions)
    needs_symbol = operator in SYMBOL_OPERATORS
    if needs_symbol and symbols is None:
        n_sym = None
        if operator in ("matrix_paraproduct", "matrix_conjugated"):
            n_sym = family.n
        symbols = bmo_corpus(corpus_size, resolutions[-1], seed, n=n_sym)
    sym_list = symbols if needs_symbol else [None]

    estimates, per_symbol = [], []
    for N in resolutions:
        W = make_weight(family, N, sampling)
        log.info("sweep %s: N=%d (%d symbols)", operator, N, len(sym_list))

        def one(k):
            sym = sym_list[k]
            op = make_operator(operator, W, ex, sym, backend)
            return operator_norm_estimate(op, ex, method, seed=seed + k, starts=starts,
                                          max_iter=max_iter, tol=tol)

        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                row = list(pool.map(one, range(len(sym_list))))
        else:
            row = [one(k) for k in range(len(sym_list))]
        per_symbol.append(row)
        estimates.append(max(e.value for e in row))
    r = _growth_ratio(resolutions, estimates)
    t = {**DEFAULT_THRESHOLDS, **(thresholds or {})}
    return SweepReport(
        operator=operator,
        p=ex.p,
        resolutions=resolutions,
        estimates=estimates,
        per_symbol=per_symbol,
        growth_ratio=r,
        verdict=verdict(r, t),
        thresholds=t,
        label="open-question probe" if operator in OPEN_QUESTION else "verification",
        config={"family": family.to_dict(), "corpus_size": len(sym_list) if needs_symbol else 0,
                "seed": seed, "backend": backend, "method": method, "sampling": sampling},
    )
