"""Reducing operators V_I, V_I' and the quantities built from them.

For a matrix weight W, exponent p and dyadic interval I the directional
averages

    rho_I(v)  = ( avg_I |W^{1/p}(x) v|^p )^{1/p}
    rho'_I(v) = ( avg_I |W^{-1/p}(x) v|^{p'} )^{1/p'}

are norms on R^n.  A reducing operator is an SPD matrix with
``rho_I(v) <= |V_I v| <= sqrt(n) rho_I(v)``.  Three backends produce it:

``exact_p2``            p = 2 only: V_I = (m_I W)^{1/2}, V_I' = (m_I W^{-1})^{1/2},
                        for which |V_I v| = rho_I(v) exactly.
``scalar_closed_form``  n = 1 only: V_I = (m_I w)^{1/p}, V_I' = (m_I w^{-p'/p})^{1/p'}.
``ellipsoid``           any p, n: sqrt(n) times the gauge of the minimum-volume
                        ellipsoid around sampled boundary points u / rho_I(u).
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .dyadic import DyadicInterval, level_means
from .ellipsoid import mvee_shape
from .errors import InvalidBackendError, ResolutionError, ShapeError
from .weights import (
    MatrixWeight,
    WeightFamily,
    as_exponent,
    make_weight,
    matrix_power,
    spectral_norm,
)

log = logging.getLogger(__name__)

BACKENDS = ("auto", "exact_p2", "scalar_closed_form", "ellipsoid")
DEFAULT_DIRECTIONS = {1: 1, 2: 256, 3: 2048}
DEFAULT_MVEE_TOL = 1e-9


def default_direction_count(n: int) -> int:
    return DEFAULT_DIRECTIONS.get(n, 4096)


def sphere_directions(n: int, count: int | None = None, seed: int = 0) -> np.ndarray:
    """Deterministic, well spread unit directions (one per +/- pair).

    n = 2 uses equally spaced angles on a half circle with a seeded offset,
    n = 3 a spherical Fibonacci lattice under a seeded rotation.
    """
    count = count or default_direction_count(n)
    rng = np.random.default_rng(seed)
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        ang = np.pi * (np.arange(count) + rng.uniform()) / count
        return np.c_[np.cos(ang), np.sin(ang)]
    if n == 3:
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        r = np.sqrt(1.0 - z * z)
        phi = np.pi * (1.0 + 5**0.5) * k
        pts = np.c_[r * np.cos(phi), r * np.sin(phi), z]
        Q, R = np.linalg.qr(rng.standard_normal((3, 3)))
        return pts @ (Q * np.sign(np.diag(R))).T
    g = rng.standard_normal((count, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def resolve_backend(backend: str, n: int, p: float) -> str:
    if backend not in BACKENDS:
        raise InvalidBackendError(f"unknown backend {backend!r}")
    if backend == "auto":
        if n == 1:
            return "scalar_closed_form"
        return "exact_p2" if p == 2 else "ellipsoid"
    if backend == "exact_p2" and p != 2:
        raise InvalidBackendError(f"exact_p2 backend requires p = 2, got p = {p}")
    if backend == "scalar_closed_form" and n != 1:
        raise InvalidBackendError(f"scalar_closed_form backend requires n = 1, got n = {n}")
    return backend


def _directional_tables(P, r, U, depth):
    """rho tables: entry [l] has shape (2**l, D) with (avg |P u|^r)^{1/r}."""
    vals = np.linalg.norm(np.einsum("cij,dj->cdi", P, U), axis=2) ** r
    means = level_means(vals)
    return [means[lev] ** (1.0 / r) for lev in range(depth + 1)]


def _ellipsoid_from_norms(rho, U, tol):
    """sqrt(n) * MVEE gauge for boundary points U / rho; rho has shape (K, D)."""
    n = U.shape[1]
    pts = U[None, :, :] / rho[:, :, None]
    return np.sqrt(n) * matrix_power(mvee_shape(pts, tol), 0.5)


@dataclass(frozen=True)
class ReducingPair:
    interval: DyadicInterval
    V: np.ndarray
    Vprime: np.ndarray
    backend: str
    backend_tolerance: float


@dataclass
class ReducingTable:
    """V_I and V_I' for every interval of level <= depth; ``V[l][k]`` is (n, n)."""

    p: float
    depth: int
    backend: str
    V: list
    Vprime: list
    backend_tolerance: float = 0.0
    directions: int = 0
    seed: int = 0

    def pair(self, interval: DyadicInterval) -> ReducingPair:
        if interval.level > self.depth:
            raise ResolutionError(f"table holds levels <= {self.depth}, asked for {interval.level}")
        return ReducingPair(
            interval,
            self.V[interval.level][interval.index],
            self.Vprime[interval.level][interval.index],
            self.backend,
            self.backend_tolerance,
        )

    def inverse_V(self) -> list:
        return [np.linalg.inv(v) for v in self.V]


def _table_uncached(W, p, depth, backend, directions, tol, seed):
    ex = as_exponent(p)
    p, pc = ex.p, ex.conj
    n = W.n
    if backend == "exact_p2":
        mW = level_means(W.values)
        mWi = level_means(W.power_values(-1.0))
        V = [matrix_power(mW[lev], 0.5) for lev in range(depth + 1)]
        Vp = [matrix_power(mWi[lev], 0.5) for lev in range(depth + 1)]
        return ReducingTable(p, depth, backend, V, Vp)
    if backend == "scalar_closed_form":
        w = W.values[:, 0, 0]
        mw = level_means(w)
        mwd = level_means(w ** (-pc / p))
        V = [(mw[lev] ** (1.0 / p))[:, None, None] for lev in range(depth + 1)]
        Vp = [(mwd[lev] ** (1.0 / pc))[:, None, None] for lev in range(depth + 1)]
        return ReducingTable(p, depth, backend, V, Vp)

    D = directions or default_direction_count(n)
    U = sphere_directions(n, D, seed)
    rho = _directional_tables(W.power_values(1.0 / p), p, U, depth)
    rhod = _directional_tables(W.power_values(-1.0 / p), pc, U, depth)
    V, Vp = [], []
    for lev in range(depth + 1):
        log.debug("ellipsoid backend: level %d (%d intervals)", lev, 2**lev)
        V.append(_ellipsoid_from_norms(rho[lev], U, tol))
        Vp.append(_ellipsoid_from_norms(rhod[lev], U, tol))
    return ReducingTable(p, depth, backend, V, Vp, tol, D, seed)


def reducing_table(
    W: MatrixWeight,
    p,
    depth: int | None = None,
    backend: str = "auto",
    directions: int | None = None,
    tol: float = DEFAULT_MVEE_TOL,
    seed: int = 0,
) -> ReducingTable:
    """Reducing operators for all dyadic intervals down to ``depth`` (memoised on W)."""
    p = as_exponent(p).p
    depth = W.resolution if depth is None else int(depth)
    if depth > W.resolution:
        raise ResolutionError(f"depth {depth} exceeds resolution {W.resolution}")
    backend = resolve_backend(backend, W.n, p)
    key = ("reducing", p, depth, backend, directions, tol, seed)
    return W.cached(key, lambda: _table_uncached(W, p, depth, backend, directions, tol, seed))


def reducing_operator(
    W: MatrixWeight,
    p,
    interval: DyadicInterval,
    backend: str = "auto",
    directions: int | None = None,
    tol: float = DEFAULT_MVEE_TOL,
    seed: int = 0,
) -> ReducingPair:
    """V_I and V_I' for a single interval."""
    p = as_exponent(p).p
    sl = interval.cell_slice(W.resolution)
    sub = MatrixWeight(W.values[sl])
    backend = resolve_backend(backend, W.n, p)
    table = _table_uncached(sub, p, 0, backend, directions, tol, seed)
    pair = table.pair(DyadicInterval.root())
    return ReducingPair(interval, pair.V, pair.Vprime, pair.backend, pair.backend_tolerance)


def directional_norm(W: MatrixWeight, p, interval: DyadicInterval, v, dual: bool = False) -> float:
    """rho_I(v) (or rho'_I(v) with ``dual=True``)."""
    ex = as_exponent(p)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != W.n:
        raise ShapeError(f"vector of length {v.shape[0]} for weight of dimension {W.n}")
    sl = interval.cell_slice(W.resolution)
    if dual:
        P, r = W.power_values(-1.0 / ex.p)[sl], ex.conj
    else:
        P, r = W.power_values(1.0 / ex.p)[sl], ex.p
    mod = np.linalg.norm(P @ v, axis=1)
    return float(np.mean(mod**r) ** (1.0 / r))


def duality_singular_values(table: ReducingTable) -> list:
    """Smallest singular value of V_I V_I' per interval (at least 1 on the exact backends)."""
    out = []
    for V, Vp in zip(table.V, table.Vprime):
        out.append(np.linalg.svd(V @ Vp, compute_uv=False)[:, -1])
    return out


# ---------------------------------------------------------------------------
# A_p characteristic
# ---------------------------------------------------------------------------


def _interval_list(x):
    return [int(x.level), int(x.index)]


@dataclass
class ApReport:
    depth: int
    characteristic: float
    strong_product: float
    argmax_characteristic: DyadicInterval
    argmax_strong_product: DyadicInterval
    per_level: list
    duality_min_singular: float
    p: float
    backend: str
    resolution: int
    n: int
    directions: int = 0
    tol: float = 0.0
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["argmax_characteristic"] = _interval_list(self.argmax_characteristic)
        d["argmax_strong_product"] = _interval_list(self.argmax_strong_product)
        return d


def ap_characteristic(
    W: MatrixWeight,
    p,
    depth: int | None = None,
    backend: str = "auto",
    directions: int | None = None,
    tol: float = DEFAULT_MVEE_TOL,
    seed: int = 0,
) -> ApReport:
    """Scan sup ||V_I V_I'|| and sup ||V_I|| ||V_I'|| over dyadic I with level <= depth."""
    table = reducing_table(W, p, depth, backend, directions, tol, seed)
    per_level = []
    best_c = best_s = -np.inf
    arg_c = arg_s = DyadicInterval.root()
    dmin = np.inf
    sig = duality_singular_values(table)
    for lev in range(table.depth + 1):
        V, Vp = table.V[lev], table.Vprime[lev]
        char = spectral_norm(V @ Vp)
        strong = spectral_norm(V) * spectral_norm(Vp)
        kc, ks = int(np.argmax(char)), int(np.argmax(strong))
        per_level.append(
            {"level": lev, "characteristic": float(char[kc]), "strong_product": float(strong[ks])}
        )
        if char[kc] > best_c:
            best_c, arg_c = float(char[kc]), DyadicInterval(lev, kc)
        if strong[ks] > best_s:
            best_s, arg_s = float(strong[ks]), DyadicInterval(lev, ks)
        dmin = min(dmin, float(sig[lev].min()))
    return ApReport(
        depth=table.depth,
        characteristic=best_c,
        strong_product=best_s,
        argmax_characteristic=arg_c,
        argmax_strong_product=arg_s,
        per_level=per_level,
        duality_min_singular=dmin,
        p=table.p,
        backend=table.backend,
        resolution=W.resolution,
        n=W.n,
        directions=table.directions,
        tol=table.backend_tolerance,
        seed=table.seed,
    )


def ap_depth_profile(
    family: WeightFamily,
    p,
    depths,
    backend: str = "auto",
    sampling: str = "midpoint",
    **kwargs,
) -> list:
    """A_p reports with the weight resampled at resolution N = depth for each depth.

    Growth of the characteristic across this profile is the finite-grid
    signature of a weight that fails the A_p condition.
    """
    out = []
    for d in depths:
        log.info("A_p profile: depth %d", d)
        W = make_weight(family, d, sampling)
        out.append(ap_characteristic(W, p, d, backend, **kwargs))
    return out


# ---------------------------------------------------------------------------
# reverse Hoelder scan
# ---------------------------------------------------------------------------


@dataclass
class ReverseHolderReport:
    """Sup over I of avg_I ||V_I W^{-1/p}||^q (``dual``) and avg_I ||W^{1/p} V_I'||^q (``primal``)."""

    p: float
    depth: int
    q_grid: list
    dual_constants: list
    primal_constants: list
    dual_normalized: list
    primal_normalized: list
    backend: str
    resolution: int
    depth_series: list = field(default_factory=list)
    dual_growth: list = field(default_factory=list)
    primal_growth: list = field(default_factory=list)
    blowup_threshold: float | None = None
    dual_critical_q: float | None = None
    primal_critical_q: float | None = None
    dual_margin: float | None = None
    primal_margin: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def reverse_holder_constants(W: MatrixWeight, p, q_grid, depth=None, backend="auto", **kwargs):
    """Return ``(dual, primal)`` arrays of sup-averages, one entry per q."""
    ex = as_exponent(p)
    table = reducing_table(W, ex.p, depth, backend, **kwargs)
    N = W.resolution
    Wm = W.power_values(-1.0 / ex.p)
    Wp = W.power_values(1.0 / ex.p)
    q = np.asarray(q_grid, dtype=float)
    dual = np.zeros(len(q))
    primal = np.zeros(len(q))
    for lev in range(table.depth + 1):
        rep = 2 ** (N - lev)
        V = np.repeat(table.V[lev], rep, axis=0)
        Vp = np.repeat(table.Vprime[lev], rep, axis=0)
        a = spectral_norm(V @ Wm)
        b = spectral_norm(Wp @ Vp)
        for i, qi in enumerate(q):
            dual[i] = max(dual[i], (a**qi).reshape(2**lev, rep).mean(axis=1).max())
            primal[i] = max(primal[i], (b**qi).reshape(2**lev, rep).mean(axis=1).max())
    return dual, primal


def reverse_holder_scan(W: MatrixWeight, p, q_grid, depth=None, backend="auto", **kwargs):
    q = [float(x) for x in q_grid]
    if any(x < 1 for x in q):
        raise ValueError("reverse Hoelder exponents must be >= 1")
    table = reducing_table(W, p, depth, backend, **kwargs)
    dual, primal = reverse_holder_constants(W, p, q, depth, backend, **kwargs)
    qa = np.asarray(q)
    return ReverseHolderReport(
        p=float(as_exponent(p).p),
        depth=table.depth,
        q_grid=q,
        dual_constants=dual.tolist(),
        primal_constants=primal.tolist(),
        dual_normalized=(dual ** (1 / qa)).tolist(),
        primal_normalized=(primal ** (1 / qa)).tolist(),
        backend=table.backend,
        resolution=W.resolution,
    )


def _margin(q, growth, base, threshold):
    """Critical q (first blow-up) and largest stable q minus ``base``."""
    blown = [qi for qi, g in zip(q, growth) if g > threshold]
    critical = min(blown) if blown else None
    stable = [qi for qi in q if (critical is None or qi < critical) and qi >= base]
    margin = (max(stable) - base) if stable else None
    return critical, margin


def reverse_holder_profile(
    family: WeightFamily,
    p,
    q_grid,
    depths,
    backend: str = "auto",
    sampling: str = "midpoint",
    blowup: float = 1.1,
    **kwargs,
) -> ReverseHolderReport:
    """Reverse Hoelder scan across depths (weight resampled at N = depth).

    The returned report holds the constants of the deepest scan plus the
    whole depth series.  A q counts as blown up when its constant grows by
    more than ``blowup`` between the last two depths.
    """
    ex = as_exponent(p)
    depths = list(depths)
    reports = []
    for d in depths:
        log.info("reverse Hoelder profile: depth %d", d)
        reports.append(reverse_holder_scan(make_weight(family, d, sampling), ex, q_grid, d, backend, **kwargs))
    last = reports[-1]
    last.depth_series = [
        {"depth": r.depth, "dual_constants": r.dual_constants, "primal_constants": r.primal_constants}
        for r in reports
    ]
    if len(reports) > 1:
        prev = reports[-2]
        last.dual_growth = [a / b for a, b in zip(last.dual_constants, prev.dual_constants)]
        last.primal_growth = [a / b for a, b in zip(last.primal_constants, prev.primal_constants)]
        last.blowup_threshold = blowup
        last.dual_critical_q, last.dual_margin = _margin(last.q_grid, last.dual_growth, ex.conj, blowup)
        last.primal_critical_q, last.primal_margin = _margin(last.q_grid, last.primal_growth, ex.p, blowup)
    return last
