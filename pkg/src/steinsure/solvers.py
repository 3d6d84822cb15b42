"""Sparse shrinkage solvers and their analytic gradients.

The l1 path is cyclic coordinate descent on

    F(b) = ||X b - y||^2 / (2n) + lam * ||b||_1 + gamma * ||b||^2 / (2n),

stopped by duality gap.  ``gamma = 0`` is the plain l1 fit; ``gamma > 0``
adds the ridge term (the quadratic penalty is normalized by n so that the
fitted-value gradient is X_S (X_S' X_S + gamma I)^{-1} X_S' on the active
set S).  A replication-vectorized variant shares one design across many
response vectors; it is verified against the scalar solver in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .core import RegressionProblem

HARD_ZERO = 1e-12


def soft_threshold(v, t):
    """Componentwise soft thresholding sign(v) * max(|v| - t, 0)."""
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def default_tol(y: np.ndarray) -> float:
    n = y.shape[-1]
    return 1e-10 * (1.0 + float(np.sum(y * y, axis=-1)) / n)


@dataclass
class FitResult:
    beta: np.ndarray
    mu_hat: np.ndarray
    support: np.ndarray
    df_hat: float
    trace_grad_sq: float
    lam: float
    gamma: float
    gap: float
    n_iter: int
    converged: bool

    @property
    def size(self) -> int:
        return int(self.support.size)


class KktReport(NamedTuple):
    max_inactive: float       # largest |x_j'(y - X b) - gamma b_j| / (n lam), j inactive
    max_active_error: float   # largest deviation from the active-sign condition
    margin: float
    strict: bool


class SvtResult(NamedTuple):
    matrix: np.ndarray
    df_exact: float
    degenerate: bool


def _dual_gap(x, y, beta, resid, lam, gamma):
    """Duality gap of F at beta, via the ridge-augmented l1 formulation."""
    n = y.shape[0]
    corr = (x.T @ resid - gamma * beta) / n
    cmax = float(np.max(np.abs(corr))) if corr.size else 0.0
    scale = 1.0 if cmax <= lam or cmax == 0.0 else lam / cmax
    rss = float(resid @ resid) + gamma * float(beta @ beta)
    primal = rss / (2.0 * n) + lam * float(np.sum(np.abs(beta)))
    dual = scale * float(resid @ y) / n - scale * scale * rss / (2.0 * n)
    return primal - dual


def _df_pair(x, support, gamma):
    """(trace, squared Frobenius norm) of the fitted-value gradient on S."""
    k = support.size
    if k == 0:
        return 0.0, 0.0
    xs = x[:, support]
    evals = np.linalg.eigvalsh(xs.T @ xs)
    evals = np.maximum(evals, 0.0)
    if gamma == 0.0:
        # Projection case; count nonzero eigenvalues (general position: k).
        return float(k), float(k)
    ratio = evals / (evals + gamma)
    return float(np.sum(ratio)), float(np.sum(ratio * ratio))


def _finish(x, y, beta, lam, gamma, gap, n_iter, converged):
    beta = np.where(np.abs(beta) <= HARD_ZERO, 0.0, beta)
    support = np.flatnonzero(beta)
    mu_hat = x @ beta
    df, tr2 = _df_pair(x, support, gamma)
    return FitResult(beta=beta, mu_hat=mu_hat, support=support, df_hat=df,
                     trace_grad_sq=tr2, lam=lam, gamma=gamma, gap=gap,
                     n_iter=n_iter, converged=converged)


def fit_lasso(problem: RegressionProblem, lam: float, *, gamma: float = 0.0,
              beta0: np.ndarray | None = None, max_iter: int = 100000,
              tol: float | None = None) -> FitResult:
    """Cyclic coordinate descent for the (optionally ridged) l1 objective.

    ``lam = 0`` with ``gamma = 0`` falls back to least squares; ``lam = 0``
    with ``gamma > 0`` is plain ridge.  Convergence is declared when the
    duality gap falls below ``tol`` (default 1e-10 * (1 + ||y||^2/n)).
    """
    x, y = problem.x, problem.y
    n, p = x.shape
    if lam < 0 or gamma < 0:
        raise ValueError("penalty levels must be nonnegative")
    if tol is None:
        tol = default_tol(y)

    if lam == 0.0:
        if gamma == 0.0:
            beta, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
            fit = _finish(x, y, beta, lam, gamma, 0.0, 0, True)
            fit.df_hat = float(rank)
            fit.trace_grad_sq = float(rank)
            return fit
        beta = np.linalg.solve(x.T @ x + gamma * np.eye(p), x.T @ y)
        fit = _finish(x, y, beta, lam, gamma, 0.0, 0, True)
        sup = np.arange(p)
        fit.df_hat, fit.trace_grad_sq = _df_pair(x, sup, gamma)
        return fit

    col_sq = np.einsum("ij,ij->j", x, x)
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    resid = y - x @ beta if beta0 is not None else y.copy()

    def sweep(cols):
        nonlocal resid
        moved = 0.0
        for j in cols:
            if col_sq[j] == 0.0:
                continue
            bj = beta[j]
            cj = resid @ x[:, j] + col_sq[j] * bj
            bn = soft_threshold(cj / n, lam) * n / (col_sq[j] + gamma)
            if bn != bj:
                resid -= (bn - bj) * x[:, j]
                beta[j] = bn
                moved = max(moved, abs(bn - bj))
        return moved

    gap = np.inf
    it = 0
    full = np.arange(p)
    active = np.flatnonzero(beta) if beta0 is not None else full
    if active.size == 0:
        active = full
    while it < max_iter:
        # iterate the working set to stationarity, then certify or grow it
        for _ in range(50):
            moved = sweep(active)
            it += 1
            if moved <= 1e-14 * (1.0 + np.max(np.abs(beta))) or it >= max_iter:
                break
        gap = _dual_gap(x, y, beta, resid, lam, gamma)
        if gap <= tol:
            return _finish(x, y, beta, lam, gamma, gap, it, True)
        sweep(full)
        it += 1
        active = np.flatnonzero(beta)
        if active.size == 0:
            gap = _dual_gap(x, y, beta, resid, lam, gamma)
            if gap <= tol:
                return _finish(x, y, beta, lam, gamma, gap, it, True)
            active = full
    return _finish(x, y, beta, lam, gamma, gap, it, False)


def fit_elastic_net(problem: RegressionProblem, lam: float, gamma: float,
                    **kwargs) -> FitResult:
    """Ridge-plus-l1 fit; see :func:`fit_lasso` for the shared objective."""
    return fit_lasso(problem, lam, gamma=gamma, **kwargs)


def fit_lasso_batch(x: np.ndarray, ys: np.ndarray, lam: float, *,
                    gamma: float = 0.0, max_iter: int = 2000,
                    tol: float | None = None,
                    betas0: np.ndarray | None = None) -> np.ndarray:
    """Solve many l1 problems sharing one design; returns the (R, p) betas.

    Same objective and stopping rule as :func:`fit_lasso`, vectorized across
    the rows of ``ys``.  Pure performance path for replication studies.
    """
    x = np.asarray(x, dtype=float)
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    n, p = x.shape
    nrep = ys.shape[0]
    if lam <= 0:
        raise ValueError("batch path requires lam > 0")
    col_sq = np.einsum("ij,ij->j", x, x)
    tols = (1e-10 * (1.0 + np.einsum("ij,ij->i", ys, ys) / n)
            if tol is None else np.full(nrep, tol))

    betas = np.zeros((nrep, p)) if betas0 is None else np.array(betas0, dtype=float)
    # live working copies are compacted as replications converge
    bl = betas.copy()
    rl = ys - bl @ x.T if betas0 is not None else ys.copy()
    yl = ys.copy()
    tl = tols.copy()
    idx = np.arange(nrep)

    for outer in range(max_iter // 10 + 1):
        if idx.size == 0:
            break
        cols = (np.arange(p) if outer % 3 == 0
                else np.flatnonzero(np.any(bl != 0.0, axis=0)))
        if cols.size == 0:
            cols = np.arange(p)
        for _ in range(10):
            for j in cols:
                if col_sq[j] == 0.0:
                    continue
                bj = bl[:, j]
                cj = rl @ x[:, j] + col_sq[j] * bj
                bn = soft_threshold(cj / n, lam) * n / (col_sq[j] + gamma)
                delta = bn - bj
                if np.any(delta != 0.0):
                    rl -= np.outer(delta, x[:, j])
                    bl[:, j] = bn
        # batched duality gap on the still-live replications
        corr = (rl @ x - gamma * bl) / n
        cmax = np.max(np.abs(corr), axis=1)
        scale = np.where(cmax > lam, lam / np.maximum(cmax, 1e-300), 1.0)
        rss = np.einsum("ij,ij->i", rl, rl) + gamma * np.einsum("ij,ij->i", bl, bl)
        primal = rss / (2 * n) + lam * np.sum(np.abs(bl), axis=1)
        dual = scale * np.einsum("ij,ij->i", rl, yl) / n - scale ** 2 * rss / (2 * n)
        done = primal - dual <= tl
        if np.any(done):
            betas[idx[done]] = bl[done]
            keep = ~done
            bl, rl, yl, tl, idx = bl[keep], rl[keep], yl[keep], tl[keep], idx[keep]
    if idx.size:
        raise RuntimeError("batch coordinate descent left %d replications "
                           "unconverged" % idx.size)
    betas[np.abs(betas) <= HARD_ZERO] = 0.0
    return betas


def check_kkt(problem: RegressionProblem, lam: float, beta: np.ndarray, *,
              gamma: float = 0.0, margin: float = 1e-6) -> KktReport:
    """Stationarity check for the l1 objective at a candidate solution.

    Inactive coordinates need |x_j' r - gamma b_j| <= n lam (1 - margin);
    active ones need the scaled correlation to sit within ``margin`` of the
    coefficient sign.
    """
    if lam <= 0:
        raise ValueError("KKT report requires lam > 0")
    x, y = problem.x, problem.y
    n = x.shape[0]
    beta = np.asarray(beta, dtype=float)
    corr = (x.T @ (y - x @ beta) - gamma * beta) / (n * lam)
    active = beta != 0.0
    max_inactive = float(np.max(np.abs(corr[~active]))) if np.any(~active) else 0.0
    max_active = (float(np.max(np.abs(corr[active] - np.sign(beta[active]))))
                  if np.any(active) else 0.0)
    strict = max_inactive <= 1.0 - margin and max_active <= margin
    return KktReport(max_inactive, max_active, margin, strict)


def lasso_projection(x: np.ndarray, support: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto the span of the selected columns.

    Rank is established by pivoted QR with threshold 1e-10 ||X_S||; a
    rank-deficient selection raises ValueError since the projection-based
    degrees of freedom would be ill-defined.
    """
    x = np.asarray(x, dtype=float)
    support = np.asarray(support, dtype=int)
    n = x.shape[0]
    if support.size == 0:
        return np.zeros((n, n))
    xs = x[:, support]
    q, r = scipy.linalg.qr(xs, mode="economic", pivoting=True)[:2]
    thresh = 1e-10 * np.linalg.norm(xs, 2)
    rank = int(np.sum(np.abs(np.diag(r)) > thresh))
    if rank < support.size:
        raise ValueError("selected columns are rank deficient (rank %d < %d)"
                         % (rank, support.size))
    return q @ q.T


def svt(y_matrix: np.ndarray, lam: float) -> SvtResult:
    """Singular value soft thresholding with its exact divergence.

    For a q-by-n matrix with singular values s_1 >= s_2 >= ..., the
    divergence of the thresholded map is

        sum_i [ 1{s_i > lam} + |q - n| (1 - lam/s_i)_+ ]
        + 2 sum_{i != j} s_i (s_i - lam)_+ / (s_i^2 - s_j^2).

    Pairs whose singular values differ by less than 1e-12 * s_1 are skipped
    in the cross term and flagged as degenerate.
    """
    y_matrix = np.asarray(y_matrix, dtype=float)
    if y_matrix.ndim != 2:
        raise ValueError("input must be a matrix")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    q, n = y_matrix.shape
    u, s, vt = np.linalg.svd(y_matrix, full_matrices=False)
    shrunk = np.maximum(s - lam, 0.0)
    out = (u * shrunk) @ vt

    smax = s[0] if s.size else 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(s > 0, lam / np.where(s > 0, s, 1.0), np.inf)
    own = np.sum((s > lam).astype(float) + abs(q - n) * np.maximum(1.0 - ratio, 0.0))

    s2 = s * s
    diff = s2[:, None] - s2[None, :]
    close = np.abs(s[:, None] - s[None, :]) < 1e-12 * max(smax, 1.0e-300)
    mask = ~np.eye(s.size, dtype=bool) & ~close
    degenerate = bool(np.any(close & ~np.eye(s.size, dtype=bool)))
    num = (s * shrunk)[:, None] * np.ones_like(diff)
    cross = 2.0 * float(np.sum(np.where(mask, num / np.where(mask, diff, 1.0), 0.0)))
    return SvtResult(out, float(own + cross), degenerate)
