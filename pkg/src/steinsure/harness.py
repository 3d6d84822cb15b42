"""Replication experiments and result serialization.

Every experiment is a pure function of its parameters and a seed: the same
call produces bit-identical results regardless of the parallelism level,
because each replication draws from a counter-based stream keyed by its
index.  Results serialize to JSON under the schema tag ``stein-sure/1`` and
tables round-trip through CSV at 17 significant digits.
"""

from __future__ import annotations

import concurrent.futures
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .core import RegressionProblem, RngStream
from . import debias as debias_mod
from . import divergence_mc, selection, solvers, stein

SCHEMA = "stein-sure/1"


# ---------------------------------------------------------------------------
# serialization


def load_matrix_csv(path: str) -> np.ndarray:
    """Read a numeric CSV matrix, reporting offending lines on failure."""
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise ValueError(
                    "%s:%d: expected %d fields, found %d"
                    % (path, lineno, width, len(parts)))
            try:
                rows.append([float(v) for v in parts])
            except ValueError as exc:
                raise ValueError("%s:%d: non-numeric field (%s)"
                                 % (path, lineno, exc)) from None
    if not rows:
        raise ValueError("%s: empty matrix" % path)
    return np.asarray(rows, dtype=float)


def save_matrix_csv(matrix: np.ndarray, path: str) -> None:
    """Write a matrix in round-trippable decimal (17 significant digits)."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", encoding="utf-8") as handle:
        for row in matrix:
            handle.write(",".join("%.17g" % v for v in row) + "\n")


def emit_table_csv(rows: list[dict], path: str) -> None:
    """Write a list of homogeneous dict rows as CSV, full precision."""
    if not rows:
        raise ValueError("no rows to write")
    keys = list(rows[0].keys())
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(",".join(keys) + "\n")
        for row in rows:
            cells = []
            for k in keys:
                v = row[k]
                cells.append("%.17g" % v if isinstance(v, float) else str(v))
            handle.write(",".join(cells) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def save_results_json(payload: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(_jsonable(payload), handle, sort_keys=True, indent=1)
        handle.write("\n")


def results_payload(kind: str, seed: int, params: dict, results: dict) -> dict:
    return {"schema": SCHEMA, "kind": kind, "seed": seed,
            "params": _jsonable(params), "results": _jsonable(results)}


# ---------------------------------------------------------------------------
# shared builders


def _sparse_beta(p: int, s0: int, amplitude: float) -> np.ndarray:
    beta = np.zeros(p)
    beta[:s0] = amplitude
    return beta


def _design(kind: str, n: int, p: int, stream: RngStream) -> np.ndarray:
    gen = stream.generator()
    if kind == "gauss":
        return gen.standard_normal((n, p))
    if kind == "pm1":
        return np.where(gen.random((n, p)) < 0.5, -1.0, 1.0)
    if kind == "ortho":
        if p != n:
            raise ValueError("orthonormal design needs p == n")
        return math.sqrt(n) * np.eye(n)
    raise ValueError("unknown design kind %r" % kind)


def default_lam(n: int, p: int, sigma: float, scale: float = 1.0) -> float:
    return scale * sigma * math.sqrt(2.0 * math.log(p) / n)


# ---------------------------------------------------------------------------
# experiments


def experiment_sos(reps: int = 100000, seed: int = 1, sigma: float = 1.0,
                   n_list=(5, 20)) -> dict:
    """Identity check over the six-field corpus; z-scores per field and n."""
    start = time.time()
    out = {}
    max_z = 0.0
    base = RngStream(seed)
    for ni, n in enumerate(n_list):
        corpus = stein.default_field_corpus(n, base.child(1000 + ni))
        for fi, (name, fld) in enumerate(corpus.items()):
            rep = stein.verify_sos_identity(fld, n, sigma, reps,
                                            base.child(100 * ni + fi))
            out["%s_n%d" % (name, n)] = {
                "lhs": rep.lhs_mean, "rhs": rep.rhs_mean, "z": rep.z_score}
            max_z = max(max_z, rep.z_score)
    return {"fields": out, "max_z": max_z, "reps": reps,
            "runtime_s": time.time() - start}


def _lasso_replication_stats(x, mu, lam, sigma, reps, stream):
    """Batch-fit replications; per-rep rss, loss, support size."""
    n = x.shape[0]
    eps = stream.generator().standard_normal((reps, n))
    ys = mu[None, :] + sigma * eps
    betas = solvers.fit_lasso_batch(x, ys, lam)
    fits = betas @ x.T
    resid = ys - fits
    rss = np.einsum("ij,ij->i", resid, resid)
    dev = fits - mu[None, :]
    loss = np.einsum("ij,ij->i", dev, dev)
    sizes = np.sum(betas != 0.0, axis=1).astype(float)
    return ys, betas, rss, loss, sizes


def experiment_unbiasedness(n: int = 100, p: int = 200, s0: int = 5,
                            sigma: float = 1.0, reps: int = 5000,
                            seed: int = 1, lam: float | None = None) -> dict:
    """Risk-identity moments for an l1 fit: unbiasedness and concentration."""
    start = time.time()
    base = RngStream(seed)
    x = _design("gauss", n, p, base.child(0))
    if lam is None:
        lam = default_lam(n, p, sigma, 1.5)
    beta = _sparse_beta(p, s0, 0.5)
    mu = x @ beta
    _, _, rss, loss, sizes = _lasso_replication_stats(
        x, mu, lam, sigma, reps, base.child(1))
    s2, s4 = sigma**2, sigma**4
    sure = rss + 2.0 * s2 * sizes - s2 * n
    r_hat = 4.0 * s2 * rss + 4.0 * s4 * sizes - 2.0 * s4 * n
    r_prime = 2.0 * s2 * (rss + sure)
    r_dp = 0.75 * r_prime + 0.25 * r_hat - s4 * sizes

    def zscore(diff):
        return abs(float(np.mean(diff))) / (
            float(np.std(diff, ddof=1)) / math.sqrt(reps))

    sq_loss_err = (sure - loss) ** 2
    risk = float(np.mean(loss))
    rel = (r_hat / np.mean(r_hat) - 1.0) ** 2
    rel_mean = float(np.mean(rel))
    rel_se = float(np.std(rel, ddof=1)) / math.sqrt(reps)
    var_rp = float(np.var(r_prime, ddof=1))
    centered = r_prime - np.mean(r_prime)
    se_var_rp = math.sqrt(max(float(np.mean(centered**4)) - var_rp**2, 0.0) / reps)
    rp_bound = 16.0 * s4 * float(np.mean(r_dp))
    rp_bound_se = 16.0 * s4 * float(np.std(r_dp, ddof=1)) / math.sqrt(reps)
    return {
        "n": n, "p": p, "s0": s0, "lam": lam, "reps": reps,
        "mean_sure": float(np.mean(sure)), "mean_loss": risk,
        "z_sure_unbiased": zscore(sure - loss),
        "mean_r_hat": float(np.mean(r_hat)),
        "mean_sq_loss_err": float(np.mean(sq_loss_err)),
        "z_r_hat_unbiased": zscore(r_hat - sq_loss_err),
        "mean_r_prime": float(np.mean(r_prime)),
        "mean_sq_risk_err": float(np.mean((sure - risk) ** 2)),
        "rel_quartic": rel_mean, "rel_quartic_se": rel_se,
        "rel_quartic_bound": 16.0 / n,
        "var_r_prime": var_rp, "var_r_prime_se": se_var_rp,
        "var_r_prime_bound": rp_bound, "var_r_prime_bound_se": rp_bound_se,
        "runtime_s": time.time() - start,
    }


def experiment_coverage(n: int = 500, p: int = 100, s0: int = 3,
                        sigma: float = 1.0, reps: int = 2000, seed: int = 1,
                        alpha: float = 0.05) -> dict:
    """Coverage of the loss confidence regions in the asymptotic regime."""
    start = time.time()
    base = RngStream(seed)
    x = _design("gauss", n, p, base.child(0))
    lam = default_lam(n, p, sigma, 1.2)
    beta = _sparse_beta(p, s0, 0.5)
    mu = x @ beta
    _, _, rss, loss, sizes = _lasso_replication_stats(
        x, mu, lam, sigma, reps, base.child(1))
    sure = rss + 2.0 * sigma**2 * sizes - sigma**2 * n
    v_two = stein.symmetric_deviation_quantile(n, alpha)
    v_up = stein.lower_deviation_quantile(n, alpha)
    half_two = sigma**2 * v_two * math.sqrt(2.0 * n)
    half_up = sigma**2 * v_up * math.sqrt(2.0 * n)
    cover_two = float(np.mean(
        (loss >= np.maximum(sure - half_two, 0.0)) & (loss <= sure + half_two)))
    cover_up = float(np.mean(loss <= sure + half_up))
    return {
        "n": n, "p": p, "s0": s0, "alpha": alpha, "reps": reps,
        "v_two_sided": v_two, "v_one_sided": v_up,
        "coverage_two_sided": cover_two, "coverage_one_sided": cover_up,
        "gamma_n": float(np.mean(sure / (n * sigma**2) + sizes / n)),
        "runtime_s": time.time() - start,
    }


MODEL_SIZE_GRID = (
    {"n": 100, "p": 200, "s0": 5, "lam_scale": 1.0, "design": "gauss"},
    {"n": 100, "p": 200, "s0": 5, "lam_scale": 0.7, "design": "gauss"},
    {"n": 200, "p": 100, "s0": 5, "lam_scale": 1.0, "design": "gauss"},
    {"n": 100, "p": 300, "s0": 10, "lam_scale": 1.0, "design": "pm1"},
    {"n": 150, "p": 150, "s0": 0, "lam_scale": 1.2, "design": "gauss"},
    {"n": 100, "p": 200, "s0": 5, "lam_scale": 1.0, "design": "pm1"},
)


def experiment_model_size(reps: int = 1000, seed: int = 1,
                          sigma: float = 1.0) -> dict:
    """Support-size variance against its bound over a configuration grid,
    plus the orthonormal-design case where the variance is exact."""
    start = time.time()
    base = RngStream(seed)
    rows = []
    for ci, cfg in enumerate(MODEL_SIZE_GRID):
        n, p, s0 = cfg["n"], cfg["p"], cfg["s0"]
        x = _design(cfg["design"], n, p, base.child(10 * ci))
        lam = default_lam(n, p, sigma, cfg["lam_scale"])
        beta = _sparse_beta(p, s0, 0.6)
        mu = x @ beta
        _, _, _, _, sizes = _lasso_replication_stats(
            x, mu, lam, sigma, reps, base.child(10 * ci + 1))
        mean_size = float(np.mean(sizes))
        var_size = float(np.var(sizes, ddof=1))
        centered = sizes - mean_size
        se_var = math.sqrt(
            max(float(np.mean(centered**4)) - var_size**2, 0.0) / reps)
        bound = min(2.0 * n, stein.model_size_variance_bound(mean_size, p))
        rows.append({**cfg, "mean_size": mean_size, "var_size": var_size,
                     "se_var": se_var, "bound": bound,
                     "ok": var_size <= bound + 4.0 * se_var})

    # orthonormal design: the support size is a sum of independent
    # Bernoullis with explicit activation probabilities
    n = p = 200
    s0 = 5
    x = _design("ortho", n, p, base.child(900))
    lam = default_lam(n, p, sigma, 1.0)
    beta = _sparse_beta(p, s0, 2.0 * lam)
    mu = x @ beta
    _, _, _, _, sizes = _lasso_replication_stats(
        x, mu, lam, sigma, reps, base.child(901))
    from scipy.stats import norm
    thr = math.sqrt(n) * lam
    q = (norm.sf((thr - mu) / sigma) + norm.sf((thr + mu) / sigma))
    var_exact = float(np.sum(q * (1.0 - q)))
    var_emp = float(np.var(sizes, ddof=1))
    centered = sizes - np.mean(sizes)
    se_var = math.sqrt(
        max(float(np.mean(centered**4)) - var_emp**2, 0.0) / reps)
    z_ortho = abs(var_emp - var_exact) / max(se_var, 1e-300)
    return {"grid": rows, "all_ok": all(r["ok"] for r in rows),
            "ortho": {"var_exact": var_exact, "var_emp": var_emp,
                      "z": z_ortho},
            "reps": reps, "runtime_s": time.time() - start}


def experiment_sparse_re(reps: int = 400, seed: int = 1, sigma: float = 1.0,
                         n: int = 500, p: int = 500,
                         s0_list=(1, 5, 10)) -> dict:
    """Sparsity-plus-prediction bound at orthonormal design (RE = 1)."""
    start = time.time()
    base = RngStream(seed)
    tau = gam = 1.0
    x = _design("ortho", n, p, base.child(0))
    rows = []
    for si, s0 in enumerate(s0_list):
        s1 = max(s0, 1)
        lam = sigma * (1 + tau) * (1 + gam) * math.sqrt(
            2.0 * math.log(math.e * p / s1) / n)
        beta = _sparse_beta(p, s0, 3.0 * lam)
        mu = x @ beta
        _, betas, _, loss, sizes = _lasso_replication_stats(
            x, mu, lam, sigma, reps, base.child(si + 1))
        stat = sizes + loss / (2.0 * sigma**2 * tau)
        bound = (math.sqrt(tau) + 1.0 / math.sqrt(tau)) ** 2 * (
            (1 + gam) ** 2 * (s0 * math.log(math.e * p / s1) + s1) + 0.25)
        mean_stat = float(np.mean(stat))
        se_stat = float(np.std(stat, ddof=1)) / math.sqrt(reps)
        rows.append({"s0": s0, "lam": lam, "mean_stat": mean_stat,
                     "se_stat": se_stat, "bound": bound,
                     "ok": mean_stat <= bound + 4.0 * se_stat})
    return {"rows": rows, "all_ok": all(r["ok"] for r in rows),
            "reps": reps, "runtime_s": time.time() - start}


def experiment_mc_divergence(kind: str, seed: int = 1, m_grid=None,
                             n_real: int = 50) -> dict:
    """Probe-count table for the divergence estimator on a fixed dataset."""
    start = time.time()
    base = RngStream(seed)
    if kind == "svt":
        q, n, rank, lam, a = 101, 100, 10, 10.0, 1e-4
        gen = base.child(0).generator()
        u = np.linalg.qr(gen.standard_normal((q, rank)))[0]
        v = np.linalg.qr(gen.standard_normal((n, rank)))[0]
        y = 40.0 * u @ v.T + gen.standard_normal((q, n))
        df_exact = solvers.svt(y, lam).df_exact
        f = divergence_mc.svt_map(lam)
        if m_grid is None:
            m_grid = (10, 40, 160, 225)
    elif kind == "enet":
        n, p, s0, a = 500, 400, 50, 1e-3
        gen = base.child(0).generator()
        x = np.where(gen.random((n, p)) < 0.5, -1.0, 1.0)
        lam = 0.8 * math.sqrt(4.0 * math.log(p) / n)
        gamma = n * 0.2 * math.sqrt(4.0 * math.log(p) / n)
        beta = _sparse_beta(p, s0, 0.5)
        y = x @ beta + gen.standard_normal(n)
        base_fit = solvers.fit_lasso(RegressionProblem(x, y), lam, gamma=gamma)
        df_exact = base_fit.df_hat
        f = divergence_mc.lasso_fitted_map(x, lam, gamma)
        if m_grid is None:
            m_grid = (10, 40, 160)
    else:
        raise ValueError("kind must be 'svt' or 'enet'")
    rows = divergence_mc.divergence_table(f, y, df_exact, m_grid, n_real,
                                          base.child(1), a=a)
    by_m = {r["m"]: r for r in rows}
    ratios = {}
    for m in by_m:
        if 4 * m in by_m and by_m[4 * m]["std"] > 0:
            ratios["%d/%d" % (m, 4 * m)] = by_m[m]["std"] / by_m[4 * m]["std"]
    return {"kind": kind, "df_exact": float(df_exact), "rows": rows,
            "std_ratios": ratios, "n_real": n_real,
            "runtime_s": time.time() - start}


def _debias_rep(args):
    (seed, rep, n, p, s0, lam, sigma, amplitude) = args
    base = RngStream(seed, 50000 + 3 * rep)
    x = base.generator().standard_normal((n, p))
    beta = _sparse_beta(p, s0, amplitude)
    eps = sigma * RngStream(seed, 50001 + 3 * rep).generator().standard_normal(n)
    y = x @ beta + eps
    direction = debias_mod.direction_setup(np.eye(p)[0], None, p)
    rep_out = debias_mod.debias_theta(
        x, y, lam, direction, RngStream(seed, 50002 + 3 * rep),
        sigma=sigma, beta_true=beta)
    return (rep_out.pivot, rep_out.v_star, rep_out.theta_hat,
            rep_out.frozen_support)


def experiment_debias(n: int = 200, p: int = 300, s0: int = 5,
                      reps: int = 2000, seed: int = 1, sigma: float = 1.0,
                      lam: float | None = None, threads: int = 1) -> dict:
    """Pivot moments for the de-biased contrast in simulation mode."""
    start = time.time()
    if lam is None:
        lam = default_lam(n, p, sigma, 1.0)
    args = [(seed, r, n, p, s0, lam, sigma, 1.0) for r in range(reps)]
    if threads > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_debias_rep, args, chunksize=32))
    else:
        results = [_debias_rep(a) for a in args]
    pivots = np.array([r[0] for r in results])
    v_stars = np.array([r[1] for r in results])
    check = debias_mod.pivot_variance_check(pivots, v_stars)
    check.update({
        "n": n, "p": p, "s0": s0, "lam": lam,
        "frozen_fraction": float(np.mean([r[3] for r in results])),
        "theta_hat_mean": float(np.mean([r[2] for r in results])),
        "runtime_s": time.time() - start,
    })
    return check


def experiment_selection(n: int = 100, p: int = 150, s0: int = 5,
                         reps: int = 2000, seed: int = 1, sigma: float = 1.0,
                         alpha: float = 0.1, n_cand: int = 8) -> dict:
    """Exceedance of the high-probability tuning bound on an l1 path."""
    start = time.time()
    base = RngStream(seed)
    x = _design("gauss", n, p, base.child(0))
    lam0 = default_lam(n, p, sigma, 1.0)
    lams = lam0 * np.geomspace(0.4, 2.2, n_cand)
    beta = _sparse_beta(p, s0, 0.6)
    mu = x @ beta
    eps = base.child(1).generator().standard_normal((reps, n))
    ys = mu[None, :] + sigma * eps

    sures = np.empty((reps, n_cand))
    dists = np.empty((reps, n_cand))
    supports = []
    for k, lam in enumerate(lams):
        betas = solvers.fit_lasso_batch(x, ys, float(lam))
        fits = betas @ x.T
        resid = ys - fits
        rss = np.einsum("ij,ij->i", resid, resid)
        sizes = np.sum(betas != 0.0, axis=1)
        sures[:, k] = rss + 2.0 * sigma**2 * sizes - sigma**2 * n
        dists[:, k] = np.linalg.norm(fits - mu[None, :], axis=1)
        supports.append([np.flatnonzero(b) for b in betas])

    j0 = int(np.argmin(np.mean(dists**2, axis=0)))
    picks = np.argmin(sures, axis=1)
    gaps = dists[np.arange(reps), picks] - dists[:, j0]

    # analytic squared-Jacobian traces of candidate-vs-reference differences
    qs_cache: dict[tuple, np.ndarray] = {}

    def qmat(sup):
        key = tuple(sup)
        if key not in qs_cache:
            qs_cache[key] = (np.linalg.qr(x[:, sup])[0] if len(sup)
                             else np.zeros((n, 0)))
        return qs_cache[key]

    s_star = 0.0
    for k in range(n_cand):
        if k == j0:
            continue
        tr = np.empty(reps)
        for r in range(reps):
            q1, q2 = qmat(supports[k][r]), qmat(supports[j0][r])
            cross = float(np.sum((q1.T @ q2) ** 2))
            tr[r] = q1.shape[1] + q2.shape[1] - 2.0 * cross
        s_star = max(s_star, float(np.mean(tr)))

    bound = selection.selection_gap_bound(n_cand, alpha, 1.0, s_star, sigma)
    exceed = float(np.mean(gaps > bound))
    se = math.sqrt(alpha * (1 - alpha) / reps)
    return {
        "n": n, "p": p, "m": n_cand, "alpha": alpha, "reps": reps,
        "j0": j0, "s_star": s_star, "bound": bound,
        "exceedance": exceed, "limit": alpha + 4.0 * se,
        "ok": exceed <= alpha + 4.0 * se,
        "mean_gap": float(np.mean(gaps)),
        "runtime_s": time.time() - start,
    }


def experiment_adversarial(n: int = 4096, reps: int = 2000, seed: int = 1,
                           sigma: float = 1.0, c: float = 0.9,
                           period_exponent: int = -8) -> dict:
    out = selection.adversarial_gap_experiment(
        n, sigma, reps, RngStream(seed), c=c,
        period_exponent=period_exponent)
    out["threshold"] = c * sigma * n ** 0.25
    return out


# ---------------------------------------------------------------------------
# config-driven dispatch


EXPERIMENTS = {
    "sos": experiment_sos,
    "unbiasedness": experiment_unbiasedness,
    "coverage": experiment_coverage,
    "model_size": experiment_model_size,
    "sparse_re": experiment_sparse_re,
    "mc_divergence": experiment_mc_divergence,
    "debias": experiment_debias,
    "selection": experiment_selection,
    "adversarial": experiment_adversarial,
}


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 1
    params: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
        if "kind" not in raw:
            raise ValueError("config must name an experiment 'kind'")
        return cls(kind=raw["kind"], seed=int(raw.get("seed", 1)),
                   params=dict(raw.get("params", {})))


def run_experiment(config: ExperimentConfig) -> dict:
    if config.kind not in EXPERIMENTS:
        raise ValueError("unknown experiment %r (choose from %s)"
                         % (config.kind, ", ".join(sorted(EXPERIMENTS))))
    fn = EXPERIMENTS[config.kind]
    results = fn(seed=config.seed, **config.params)
    return results_payload(config.kind, config.seed, config.params, results)
