"""Stopping-time decomposition of the dyadic tree driven by a matrix weight.

For an interval ``I`` with reducing operators ``V_I, V_I'`` the stopping
children ``J(I)`` are the maximal ``J`` strictly inside ``I`` where either

    avg_J ||W^{1/p}(x) V_I'||^p  > lambda   or   avg_J ||V_I W^{-1/p}(x)||^{p'} > lambda.

Generations are indexed from the root: ``J^0 = {[0,1)}``, ``J^j`` collects
the stopping children of the members of ``J^{j-1}`` and ``F^j`` the
intervals of ``D(J)``, ``J in J^{j-1}``, not inside any child.  ``F^0`` is
empty, so the Haar levels ``0..N-1`` are split among ``F^1, F^2, ...``.

Cells (level ``N``) may appear as stopping children.  They carry no Haar
coefficient and are leaves of the recursion.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dyadic import DyadicInterval, StepFunction, haar_analysis, haar_synthesis, level_means
from .errors import IndexOutOfRangeError, LambdaTooSmallError, ResolutionError, ShapeError
from .operators import multiplier_cells
from .reducing import ReducingTable, reducing_table
from .weights import MatrixWeight, apply_cellwise, as_exponent, spectral_norm

log = logging.getLogger(__name__)

DECAY_TARGET = 0.9


@dataclass(frozen=True)
class StoppingConfig:
    """``lam=None`` means ``lambda_factor`` times the root baseline."""

    lam: float | None = None
    max_generations: int | None = None
    p: float = 2.0
    backend: str = "auto"
    lambda_factor: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "p", as_exponent(self.p).p)
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lambda must be positive")


def _table(W, p, backend, table):
    if table is not None:
        return table
    return reducing_table(W, p, max(W.resolution - 1, 0), backend)


def _integrands(W: MatrixWeight, p, V, Vp, sl):
    """Per-cell ||W^{1/p} V'||^p and ||V W^{-1/p}||^{p'} on the cells ``sl``."""
    ex = as_exponent(p)
    a = spectral_norm(W.power_values(1.0 / ex.p)[sl] @ Vp) ** ex.p
    b = spectral_norm(V @ W.power_values(-1.0 / ex.p)[sl]) ** ex.conj
    return a, b


def interval_baseline(W: MatrixWeight, p, interval: DyadicInterval, backend="auto", table=None) -> float:
    """max of the two stopping averages taken over ``interval`` itself."""
    tab = _table(W, p, backend, table)
    pair = tab.pair(interval)
    a, b = _integrands(W, p, pair.V, pair.Vprime, interval.cell_slice(W.resolution))
    return float(max(a.mean(), b.mean()))


def root_baseline(W: MatrixWeight, p, backend="auto", table=None) -> float:
    return interval_baseline(W, p, DyadicInterval.root(), backend, table)


def stopping_children(
    W: MatrixWeight, p, interval: DyadicInterval, lam: float, backend: str = "auto", table: ReducingTable | None = None
) -> list:
    """Maximal dyadic ``J`` strictly inside ``interval`` satisfying the stopping test.

    Returns a list sorted by (level, index).

    Raises
    ------
    LambdaTooSmallError
        If ``interval`` itself satisfies the test.
    """
    N = W.resolution
    if interval.level >= N:
        raise ResolutionError(f"interval {interval} has no dyadic subintervals at resolution {N}")
    tab = _table(W, p, backend, table)
    pair = tab.pair(interval)
    a, b = _integrands(W, p, pair.V, pair.Vprime, interval.cell_slice(N))
    ma, mb = level_means(a), level_means(b)
    exceeds = [(x > lam) | (y > lam) for x, y in zip(ma, mb)]
    if exceeds[0][0]:
        raise LambdaTooSmallError(
            f"lambda={lam:.6g} is below the stopping averages of {interval} "
            f"({ma[0][0]:.6g}, {mb[0][0]:.6g})",
            interval=interval,
        )
    out = []
    blocked = np.zeros(1, dtype=bool)
    for rel in range(1, len(exceeds)):
        blocked = np.repeat(blocked | exceeds[rel - 1], 2)
        hits = np.flatnonzero(exceeds[rel] & ~blocked)
        base = interval.index << rel
        out.extend(DyadicInterval(interval.level + rel, base + int(k)) for k in hits)
    return out


@dataclass
class DecayReport:
    mu: list
    rate: float
    halving: bool
    truncated: bool
    lam: float
    baseline: float
    target: float = DECAY_TARGET

    @property
    def meets_target(self) -> bool:
        return all(
            self.mu[j + 1] <= self.target * self.mu[j] for j in range(len(self.mu) - 1) if self.mu[j] > 0
        )

    def to_dict(self) -> dict:
        return {
            "mu": [float(m) for m in self.mu],
            "rate": float(self.rate),
            "halving": bool(self.halving),
            "truncated": bool(self.truncated),
            "lambda": float(self.lam),
            "baseline": float(self.baseline),
            "target": float(self.target),
            "meets_target": self.meets_target,
        }


@dataclass
class StoppingTree:
    """Generations ``J[j]`` (sorted interval lists) and F-ownership labels.

    ``owner[l][k]`` is the generation ``j`` with ``I(l, k)`` in ``F^j``
    (``-1`` if truncation left it unassigned).
    """

    resolution: int
    J: list
    owner: list
    lam: float
    p: float
    table: ReducingTable = field(repr=False)
    truncated: bool = False

    @property
    def generations(self) -> int:
        """Number of F-generations (indices 1..generations are nonempty candidates)."""
        return len(self.J)

    @property
    def mu(self) -> list:
        return [float(sum(I.length for I in gen)) for gen in self.J]

    def F(self, j: int) -> list:
        self._check(j)
        out = []
        for lev, own in enumerate(self.owner):
            out.extend(DyadicInterval(lev, int(k)) for k in np.flatnonzero(own == j))
        return out

    def _check(self, j):
        if not 0 <= j <= self.generations:
            raise IndexOutOfRangeError(f"generation {j} outside 0..{self.generations}")

    def generation_of(self, interval: DyadicInterval) -> int:
        """``j`` such that ``interval`` is in ``J^j``."""
        for j, gen in enumerate(self.J):
            if interval in gen:
                return j
        raise IndexOutOfRangeError(f"{interval} is not a stopping interval")

    def union_mask(self, j: int) -> np.ndarray:
        """Cell mask of the union of ``J^j``."""
        mask = np.zeros(2**self.resolution, dtype=bool)
        if j < len(self.J):
            for I in self.J[j]:
                mask[I.cell_slice(self.resolution)] = True
        return mask

    def to_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "lambda": float(self.lam),
            "p": float(self.p),
            "backend": self.table.backend,
            "truncated": self.truncated,
            "generations": [
                {
                    "j": j,
                    "J": [[I.level, I.index] for I in self.J[j]] if j < len(self.J) else [],
                    "F": [[I.level, I.index] for I in self.F(j)],
                    "mu": float(sum(I.length for I in self.J[j])) if j < len(self.J) else 0.0,
                }
                for j in range(self.generations + 1)
            ],
        }


def build_stopping_tree(W: MatrixWeight, p=None, cfg: StoppingConfig | None = None):
    """Iterate the stopping children from the root; returns ``(tree, report)``."""
    cfg = cfg or StoppingConfig()
    p = cfg.p if p is None else as_exponent(p).p
    N = W.resolution
    if N < 1:
        raise ResolutionError("stopping trees need resolution >= 1")
    table = reducing_table(W, p, N - 1, cfg.backend)
    baseline = root_baseline(W, p, table=table)
    lam = cfg.lam if cfg.lam is not None else cfg.lambda_factor * baseline
    max_gen = cfg.max_generations if cfg.max_generations is not None else N + 2

    owner = [np.full(2**lev, -1, dtype=int) for lev in range(N)]
    J = [[DyadicInterval.root()]]
    truncated = False
    while J[-1]:
        j = len(J)
        if j > max_gen:
            truncated = True
            break
        nxt = []
        for I in J[-1]:
            if I.level >= N:
                continue
            for lev in range(I.level, N):
                span = 1 << (lev - I.level)
                owner[lev][I.index * span : (I.index + 1) * span] = j
            nxt.extend(stopping_children(W, p, I, lam, table=table))
        nxt.sort()
        log.debug("generation %d: %d stopping intervals", j, len(nxt))
        J.append(nxt)
    if not J[-1]:
        J.pop()

    tree = StoppingTree(N, J, owner, lam, p, table, truncated)
    mu = tree.mu + [0.0] if not truncated else tree.mu
    ratios = [mu[i + 1] / mu[i] for i in range(len(mu) - 1) if mu[i] > 0]
    report = DecayReport(
        mu=mu,
        rate=max(ratios) if ratios else 0.0,
        halving=len(mu) < 2 or mu[1] <= 0.5,
        truncated=truncated,
        lam=lam,
        baseline=baseline,
    )
    return tree, report


def lambda_ladder(W: MatrixWeight, p, factors=(1.5, 2, 4, 8, 16, 32, 64), backend="auto"):
    """Build trees for ``factor * baseline`` and report the first factor with ``mu_1 <= 1/2``."""
    rows = []
    threshold = None
    for fac in factors:
        try:
            _, rep = build_stopping_tree(W, p, StoppingConfig(lambda_factor=fac, p=p, backend=backend))
        except LambdaTooSmallError as err:
            rows.append({"factor": fac, "error": err.to_dict()})
            continue
        rows.append({"factor": fac, **rep.to_dict()})
        if threshold is None and rep.halving:
            threshold = fac
    return {"ladder": rows, "halving_factor": threshold}


# ---------------------------------------------------------------------------
# projections and the operators T, T_j, M_I
# ---------------------------------------------------------------------------


def _vector_values(f: StepFunction, n: int, N: int) -> np.ndarray:
    v = f.values
    if v.ndim == 1:
        v = v[:, None]
    if v.ndim != 2 or v.shape[1] != n:
        raise ShapeError(f"expected an R^{n} valued function")
    if f.resolution != N:
        raise ResolutionError(f"function resolution {f.resolution} differs from {N}")
    return v


def _masked_coeffs(coeffs, masks):
    return [c * m.reshape(m.shape + (1,) * (c.ndim - 1)) for c, m in zip(coeffs, masks)]


def delta_projection(f: StepFunction, tree: StoppingTree, j: int) -> StepFunction:
    """Delta_j f = sum over I in F^j of f_I h_I."""
    tree._check(j)
    if f.resolution != tree.resolution:
        raise ResolutionError("function and tree resolutions differ")
    _, c = haar_analysis(f.values)
    return StepFunction(haar_synthesis(0.0, _masked_coeffs(c, [o == j for o in tree.owner])))


def _T_masked(W, p, f, tree, masks):
    ex = as_exponent(p)
    x = _vector_values(f, W.n, W.resolution)
    inv = tree.table.inverse_V()[: W.resolution]
    a = [A * m[:, None, None] for A, m in zip(inv, masks)]
    return apply_cellwise(W.power_values(1.0 / ex.p), multiplier_cells(a, x))


def operator_T(W: MatrixWeight, p, f: StepFunction, tree: StoppingTree | None = None, backend="auto") -> StepFunction:
    """T f = W^{1/p}(x) sum_I V_I^{-1} f_I h_I(x)."""
    ex = as_exponent(p)
    x = _vector_values(f, W.n, W.resolution)
    table = tree.table if tree is not None else reducing_table(W, ex.p, W.resolution - 1, backend)
    y = multiplier_cells(table.inverse_V()[: W.resolution], x)
    return StepFunction(apply_cellwise(W.power_values(1.0 / ex.p), y))


def operator_Tj(W: MatrixWeight, p, f: StepFunction, tree: StoppingTree, j: int) -> StepFunction:
    """T_j f = T Delta_j f = sum over I in J^{j-1} of W^{1/p} M_I f."""
    tree._check(j)
    return StepFunction(_T_masked(W, p, f, tree, [o == j for o in tree.owner]))


def operator_MI(W: MatrixWeight, p, f: StepFunction, interval: DyadicInterval, tree: StoppingTree) -> StepFunction:
    """M_I f = sum over J in F(I) of V_J^{-1} f_J h_J, for I a stopping interval."""
    j = tree.generation_of(interval) + 1
    x = _vector_values(f, W.n, W.resolution)
    masks = []
    for lev, own in enumerate(tree.owner):
        m = np.zeros(own.shape, dtype=bool)
        if lev >= interval.level:
            span = 1 << (lev - interval.level)
            sl = slice(interval.index * span, (interval.index + 1) * span)
            m[sl] = own[sl] == j
        masks.append(m)
    inv = tree.table.inverse_V()[: W.resolution]
    return StepFunction(multiplier_cells([A * m[:, None, None] for A, m in zip(inv, masks)], x))


def _modulus(v):
    return np.linalg.norm(v, axis=1)


def cotlar_cross_term(W: MatrixWeight, p, f: StepFunction, tree: StoppingTree, j: int, k: int) -> float:
    """Cell-sum of |T_j f|^{p/2} |T_k f|^{p/2}."""
    ex = as_exponent(p)
    a = _modulus(operator_Tj(W, ex.p, f, tree, j).values)
    b = a if j == k else _modulus(operator_Tj(W, ex.p, f, tree, k).values)
    return float(np.mean(a ** (ex.p / 2) * b ** (ex.p / 2)))


@dataclass
class CotlarReport:
    cross: np.ndarray
    normalized: np.ndarray
    diagonal_decay: list
    step_ratios: list

    @property
    def max_step_ratio(self) -> float:
        r = [x for x in self.step_ratios if np.isfinite(x)]
        return max(r) if r else 0.0

    def to_dict(self) -> dict:
        clean = lambda a: [[None if not np.isfinite(x) else float(x) for x in row] for row in a]
        return {
            "cross": clean(self.cross),
            "normalized": clean(self.normalized),
            "diagonal_decay": [float(x) for x in self.diagonal_decay],
            "step_ratios": [float(x) for x in self.step_ratios],
            "max_step_ratio": float(self.max_step_ratio),
        }


def cotlar_matrix(W: MatrixWeight, p, f: StepFunction, tree: StoppingTree) -> CotlarReport:
    """All cross terms for generations 1..G, normalised by ||f_j||^{p/2} ||f_k||^{p/2}.

    ``diagonal_decay[m]`` is the largest normalised entry with ``|j - k| = m``
    and ``step_ratios[m] = diagonal_decay[m+1] / diagonal_decay[m]``.
    """
    ex = as_exponent(p)
    G = tree.generations
    mods, fnorm = [], []
    for j in range(1, G + 1):
        mods.append(_modulus(operator_Tj(W, ex.p, f, tree, j).values))
        d = delta_projection(f, tree, j).values
        d = d[:, None] if d.ndim == 1 else d
        fnorm.append(float(np.mean(_modulus(d) ** ex.p) ** (1.0 / ex.p)))
    cross = np.zeros((G, G))
    for j in range(G):
        for k in range(j, G):
            cross[j, k] = cross[k, j] = np.mean(mods[j] ** (ex.p / 2) * mods[k] ** (ex.p / 2))
    fn = np.asarray(fnorm) ** (ex.p / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        norm = cross / np.outer(fn, fn)
    norm[np.outer(fn, fn) == 0] = np.nan
    decay = []
    for m in range(G):
        band = np.array([norm[j, j + m] for j in range(G - m)])
        band = band[np.isfinite(band)]
        decay.append(float(band.max()) if band.size else np.nan)
    ratios = []
    for m in range(G - 1):
        a, b = decay[m], decay[m + 1]
        ratios.append(b / a if a > 0 and np.isfinite(a) and np.isfinite(b) else np.nan)
    return CotlarReport(cross, norm, decay, ratios)
