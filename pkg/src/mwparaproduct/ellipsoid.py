"""Minimum-volume enclosing ellipsoids of centrally symmetric point clouds.

The ellipsoid is centred at the origin and written ``{x : |A x| <= 1}`` with
``A`` symmetric positive definite (the *gauge* matrix), equivalently
``{x : x^T E x <= 1}`` with ``E = A^2``.  Two solvers are provided.

``newton`` (default)
    Log-barrier method on the primal problem

        minimise -log det E   subject to  x_i^T E x_i <= 1,

    in the ``n(n+1)/2`` free entries of ``E``.  For the small ``n`` used
    here each Newton system is at most 6 x 6 and the whole batch moves in
    lockstep.  The duality gap of the barrier path bounds the log-volume
    error by ``m / t``.
``khachiyan``
    Frank-Wolfe iteration on the D-optimal design problem

        maximise log det sum_i u_i x_i x_i^T   over the probability simplex,

    with Todd-Yildirim away steps.  Optimal weights give ``M = sum u_i x_i x_i^T``
    and ``E = M^{-1} / n``.  Cheap per step, but it crawls when many points
    nearly touch the optimal ellipsoid, which is the typical situation for
    the nearly-ellipsoidal unit balls of reducing operators.

Both return an ellipsoid that contains every point (the final ``E`` is
rescaled so that ``max_i x_i^T E x_i = 1``).
"""
from __future__ import annotations

import numpy as np

from .errors import DegenerateBodyError, NoConvergenceError


def _sqrt_spd(M):
    lam, Q = np.linalg.eigh(M)
    out = (Q * lam[..., None, :] ** 0.5) @ np.swapaxes(Q, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def mvee_design(points, tol=1e-7, max_iter=100_000):
    """Batched D-optimal design for point sets of shape ``(K, m, n)``.

    Returns ``(M, kappa_max)`` where ``M`` has shape ``(K, n, n)`` and
    ``kappa_max[k] = max_i x_i^T M_k^{-1} x_i <= n (1 + tol)``.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 2:
        X = X[None]
    K, m, n = X.shape
    _check_span(X)

    u = np.full((K, m), 1.0 / m)
    active = np.arange(K)
    M_out = np.empty((K, n, n))
    kmax_out = np.empty(K)
    for _ in range(max_iter):
        Xa, ua = X[active], u[active]
        M = np.einsum("km,kmi,kmj->kij", ua, Xa, Xa)
        Minv = np.linalg.inv(M)
        kappa = np.einsum("kmi,kij,kmj->km", Xa, Minv, Xa)
        jp = np.argmax(kappa, axis=1)
        kp = kappa[np.arange(len(active)), jp]
        masked = np.where(ua > 0, kappa, np.inf)
        jm = np.argmin(masked, axis=1)
        km = kappa[np.arange(len(active)), jm]
        eps_plus = kp / n - 1.0
        eps_minus = 1.0 - km / n

        done = eps_plus <= tol
        if np.any(done):
            idx = active[done]
            M_out[idx] = M[done]
            kmax_out[idx] = kp[done]
        keep = ~done
        if not np.any(keep):
            return M_out, kmax_out
        active = active[keep]
        ua, kp, km, jp, jm = ua[keep], kp[keep], km[keep], jp[keep], jm[keep]
        eps_plus, eps_minus = eps_plus[keep], eps_minus[keep]
        rows = np.arange(len(active))

        toward = eps_plus >= eps_minus
        beta_up = (kp - n) / (n * (kp - 1.0))
        uj = ua[rows, jm]
        drop = uj / (1.0 - uj)
        with np.errstate(divide="ignore", invalid="ignore"):
            beta_away = np.where(km > 1.0, (n - km) / (n * (km - 1.0)), np.inf)
        beta_away = np.minimum(beta_away, drop)

        new = ua.copy()
        t = toward
        new[t] *= (1.0 - beta_up[t])[:, None]
        new[rows[t], jp[t]] += beta_up[t]
        a = ~toward
        new[a] *= (1.0 + beta_away[a])[:, None]
        new[rows[a], jm[a]] -= beta_away[a]
        np.maximum(new, 0.0, out=new)
        new /= new.sum(axis=1, keepdims=True)
        u[active] = new

    raise NoConvergenceError(
        f"mvee did not reach tol={tol} within {max_iter} iterations",
        last_iterate={"weights": u, "unconverged": active},
    )


def _sym_basis(n):
    idx = [(i, j) for i in range(n) for j in range(i, n)]
    B = np.zeros((len(idx), n, n))
    for k, (i, j) in enumerate(idx):
        B[k, i, j] = B[k, j, i] = 1.0
    return B


def mvee_shape_newton(points, tol=1e-9, max_newton=60, growth=8.0, chunk_elems=2**22):
    """Shape matrices ``E`` (K, n, n) by the log-barrier method.

    ``tol`` bounds the barrier duality gap, i.e. the error in ``log det E``.
    Large batches are processed in chunks of about ``chunk_elems`` entries of
    the precomputed Hessian features.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 2:
        X = X[None]
    K, m, n = X.shape
    _check_span(X)
    d = n * (n + 1) // 2
    size = max(1, chunk_elems // (m * d * (d + 1) // 2))
    if K > size:
        return np.concatenate(
            [_newton_chunk(X[i : i + size], tol, max_newton, growth) for i in range(0, K, size)]
        )
    return _newton_chunk(X, tol, max_newton, growth)


def _newton_chunk(X, tol, max_newton, growth):
    K, m, n = X.shape
    # the problem is affine equivariant; whitening keeps the Newton systems
    # well conditioned for very eccentric bodies
    S = _sqrt_spd(np.einsum("kmi,kmj->kij", X, X) / m)
    Sinv = np.linalg.inv(S)
    X = np.einsum("kij,kmj->kmi", Sinv, X)
    B = _sym_basis(n)
    phi = np.einsum("kmi,dij,kmj->kmd", X, B, X)  # x^T B_d x
    r2 = np.einsum("kmi,kmi->km", X, X).max(axis=1)
    E = np.eye(n)[None] * (0.5 / r2)[:, None, None]
    coef = np.einsum("kij,dij->kd", E, B) / np.einsum("dij,dij->d", B, B)
    # Hessian of the barrier term is sum_m w_m^2 phi_md phi_me; the products
    # phi_md phi_me do not change, so only a weighted sum is left per step
    iu, ju = np.triu_indices(B.shape[0])
    phi2 = phi[:, :, iu] * phi[:, :, ju]

    def value(ph, c, t):
        Ec = np.einsum("kd,dij->kij", c, B)
        s = (ph @ c[..., None])[..., 0]
        lam = np.linalg.eigvalsh(Ec)
        ok = (lam[:, 0] > 0) & np.all(s < 1.0, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            logdet = np.sum(np.log(np.where(lam > 0, lam, 1.0)), axis=1)
            f = -t * logdet - np.sum(np.log1p(-np.where(s < 1.0, s, 0.0)), axis=1)
        return np.where(ok, f, np.inf)

    t = float(n)
    t_final = max(m / tol, float(n))
    while True:
        active = np.arange(K)
        for _ in range(max_newton):
            if active.size == K:
                c, ph, ph2 = coef.copy(), phi, phi2
            else:
                c, ph, ph2 = coef[active], phi[active], phi2[active]
            Ei = np.linalg.inv(np.einsum("kd,dij->kij", c, B))
            w = 1.0 / (1.0 - (ph @ c[..., None])[..., 0])
            EB = np.einsum("kij,djl->kdil", Ei, B)
            g = -t * np.einsum("kdii->kd", EB) + (w[:, None, :] @ ph)[:, 0]
            H = t * np.einsum("kdij,keji->kde", EB, EB)
            h = ((w**2)[:, None, :] @ ph2)[:, 0]
            H[:, iu, ju] += h
            H[:, ju[iu != ju], iu[iu != ju]] += h[:, iu != ju]
            step = -np.linalg.solve(H, g[..., None])[..., 0]
            dec = -np.einsum("kd,kd->k", g, step)
            # full Newton steps stay feasible once the decrement is below 1
            alpha = np.ones(len(active))
            far = np.flatnonzero(dec > 0.25)
            if far.size:
                f0 = value(ph[far], c[far], t)
                a_far = np.ones(far.size)
                for _ls in range(60):
                    trial = c[far] + a_far[:, None] * step[far]
                    good = value(ph[far], trial, t) <= f0 - 0.25 * a_far * dec[far]
                    if np.all(good):
                        break
                    a_far = np.where(good, a_far, 0.5 * a_far)
                alpha[far] = a_far
            coef[active] = c + alpha[:, None] * step
            active = active[dec > 1e-6]
            if active.size == 0:
                break
        if t >= t_final:
            break
        t = min(t * growth, t_final)
    E = np.einsum("kd,dij->kij", coef, B)
    s = np.einsum("kmd,kd->km", phi, coef).max(axis=1)
    E = Sinv @ (E / s[:, None, None]) @ Sinv
    return 0.5 * (E + np.swapaxes(E, 1, 2))


def _check_span(X):
    K, m, n = X.shape
    if m < n:
        raise DegenerateBodyError(f"{m} points cannot span R^{n}")
    sv = np.linalg.svd(X, compute_uv=False)
    if np.any(sv[:, -1] <= 1e-12 * sv[:, 0]):
        raise DegenerateBodyError("point set does not span the space")


def mvee_shape(points, tol: float = 1e-9, method: str = "newton", max_iter: int = 100_000) -> np.ndarray:
    """Shape matrices ``E`` with ``{x^T E x <= 1}`` the MVEE of each cloud in ``(K, m, n)``."""
    X = np.asarray(points, dtype=float)
    if method == "newton":
        return mvee_shape_newton(X, tol)
    if method == "khachiyan":
        M, kmax = mvee_design(X, tol, max_iter)
        return np.linalg.inv(M) / kmax[:, None, None]
    raise ValueError(f"unknown MVEE method {method!r}")


def mvee(points, tol: float = 1e-9, max_iter: int = 100_000, method: str = "newton") -> np.ndarray:
    """Gauge matrix ``A`` of the minimum-volume ellipsoid ``{|A x| <= 1}``.

    Parameters
    ----------
    points : (m, n) array_like
        Point cloud, assumed closed under ``x -> -x`` (only one of each pair
        needs to be supplied; the centred ellipsoid treats them alike).
    tol : float
        Log-volume accuracy (``newton``) or the relative excess of
        ``max_i |A x_i|^2`` over the optimum design bound (``khachiyan``).
    method : {"newton", "khachiyan"}

    Raises
    ------
    DegenerateBodyError
        If the points do not span ``R^n``.
    NoConvergenceError
        If ``max_iter`` is exhausted.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim != 2:
        raise ValueError("points must be a 2-d array")
    return mvee_batch(P[None], tol, max_iter, method)[0]


def mvee_batch(points, tol: float = 1e-9, max_iter: int = 100_000, method: str = "newton") -> np.ndarray:
    """:func:`mvee` for a stack of point clouds of shape ``(K, m, n)``."""
    E = mvee_shape(points, tol, method, max_iter)
    return _sqrt_spd(E)
