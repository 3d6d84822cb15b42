"""Command-line interface.

Exit codes: 0 on success, 1 on usage errors, 2 when a numerical invariant
check fails.
"""

from __future__ import annotations

import json
import math
import os
import sys

import click
import numpy as np

from .core import RegressionProblem, RngStream
from . import debias as debias_mod
from . import divergence_mc, harness, selection, solvers, stein

# exit-code contract: usage errors are 1; 2 is reserved for invariant failures
click.UsageError.exit_code = 1

INVARIANT_FAILURE = 2


def _echo_or_write(payload: dict, out: str | None, fmt: str) -> None:
    if fmt == "json":
        text = json.dumps(harness._jsonable(payload), sort_keys=True, indent=1)
    else:
        rows = payload.get("results", payload)
        if isinstance(rows, dict):
            text = "\n".join("%s,%s" % (k, ("%.17g" % v)
                             if isinstance(v, float) else v)
                             for k, v in sorted(rows.items())
                             if not isinstance(v, (dict, list)))
        else:
            text = str(rows)
    if out:
        with open(out, "w", encoding="utf-8") as handle:
            handle.write(text + "\n")
    else:
        click.echo(text)


def _load_problem(x_path: str, y_path: str, sigma: float) -> RegressionProblem:
    x = harness.load_matrix_csv(x_path)
    y = harness.load_matrix_csv(y_path).ravel()
    return RegressionProblem(x, y, sigma)


common = [
    click.option("--seed", type=int, default=1, show_default=True),
    click.option("--out", type=click.Path(), default=None,
                 help="Write output to this file instead of stdout."),
    click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
                 default="json", show_default=True),
]


def with_common(fn):
    for opt in reversed(common):
        fn = opt(fn)
    return fn


@click.group()
@click.option("--threads", type=int, default=os.cpu_count(),
              show_default="logical cores",
              help="Parallelism level; results do not depend on it.")
@click.pass_context
def main(ctx, threads):
    """Unbiased risk estimation, second-order refinements, and friends."""
    ctx.ensure_object(dict)
    ctx.obj["threads"] = max(1, threads or 1)


@main.command("sos-verify")
@click.option("--n", type=int, default=20, show_default=True)
@click.option("--reps", type=int, default=20000, show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@with_common
def sos_verify(n, reps, sigma, seed, out, fmt):
    """Monte Carlo check of the second-order identity on the field corpus."""
    res = harness.experiment_sos(reps=reps, seed=seed, sigma=sigma,
                                 n_list=(n,))
    payload = harness.results_payload("sos", seed, {"n": n, "reps": reps}, res)
    _echo_or_write(payload, out, fmt)
    for name, row in res["fields"].items():
        click.echo("%-24s z=%.3f" % (name, row["z"]), err=True)
    if res["max_z"] > 4.0:
        click.echo("identity check failed: max z = %.3f" % res["max_z"],
                   err=True)
        sys.exit(INVARIANT_FAILURE)


def _fit_command(name, forced_gamma):
    @main.command(name)
    @click.option("--X", "x_path", type=click.Path(exists=True), required=True)
    @click.option("--y", "y_path", type=click.Path(exists=True), required=True)
    @click.option("--lam", type=float, required=True)
    @click.option("--gamma", type=float, default=forced_gamma,
                  show_default=True)
    @click.option("--sigma", type=float, default=1.0, show_default=True)
    @with_common
    def cmd(x_path, y_path, lam, gamma, sigma, seed, out, fmt):
        problem = _load_problem(x_path, y_path, sigma)
        fit = solvers.fit_lasso(problem, lam, gamma=gamma)
        rep = stein.sure_from_fit(fit, problem.y, sigma)
        payload = harness.results_payload(name, seed, {
            "lam": lam, "gamma": gamma, "sigma": sigma,
        }, {
            "support": fit.support, "df_hat": fit.df_hat,
            "trace_grad_sq": fit.trace_grad_sq, "gap": fit.gap,
            "sure": rep.sure, "r_hat": rep.r_hat, "r_prime": rep.r_prime,
            "beta_nonzero": fit.beta[fit.support],
        })
        _echo_or_write(payload, out, fmt)
        if not fit.converged:
            click.echo("solver did not reach the duality-gap tolerance",
                       err=True)
            sys.exit(INVARIANT_FAILURE)
    cmd.__name__ = name
    return cmd


_fit_command("lasso", 0.0)
_fit_command("enet", 1.0)


@main.command("svt-df")
@click.option("--X", "x_path", type=click.Path(exists=True), required=True,
              help="Observed matrix, CSV.")
@click.option("--lam", type=float, required=True)
@with_common
def svt_df(x_path, lam, seed, out, fmt):
    """Singular value thresholding and its exact divergence."""
    y = harness.load_matrix_csv(x_path)
    res = solvers.svt(y, lam)
    payload = harness.results_payload("svt_df", seed, {"lam": lam}, {
        "df_exact": res.df_exact, "degenerate": res.degenerate,
        "shape": list(y.shape),
    })
    _echo_or_write(payload, out, fmt)
    if res.degenerate:
        click.echo("warning: near-equal singular values; cross terms skipped",
                   err=True)


@main.command("mc-div")
@click.option("--map", "map_kind", type=click.Choice(["lasso", "enet", "svt",
                                                      "soft"]), required=True)
@click.option("--X", "x_path", type=click.Path(exists=True), default=None)
@click.option("--y", "y_path", type=click.Path(exists=True), default=None)
@click.option("--lam", type=float, required=True)
@click.option("--gamma", type=float, default=0.0, show_default=True)
@click.option("--m", type=int, default=100, show_default=True)
@click.option("--step", type=float, default=None)
@click.option("--two-sided", is_flag=True, default=False)
@with_common
def mc_div(map_kind, x_path, y_path, lam, gamma, m, step, two_sided,
           seed, out, fmt):
    """Monte Carlo divergence of a fitted-value map at the given data."""
    if map_kind == "svt":
        if x_path is None:
            raise click.UsageError("--map svt requires --X (the matrix)")
        y = harness.load_matrix_csv(x_path)
        f = divergence_mc.svt_map(lam)
    elif map_kind == "soft":
        if y_path is None:
            raise click.UsageError("--map soft requires --y")
        y = harness.load_matrix_csv(y_path).ravel()
        f = lambda v: solvers.soft_threshold(v, lam)
    else:
        if x_path is None or y_path is None:
            raise click.UsageError("--map %s requires --X and --y" % map_kind)
        x = harness.load_matrix_csv(x_path)
        y = harness.load_matrix_csv(y_path).ravel()
        f = divergence_mc.lasso_fitted_map(x, lam, gamma)
    est = divergence_mc.mc_divergence(f, y, m, RngStream(seed), a=step,
                                      two_sided=two_sided)
    payload = harness.results_payload("mc_div", seed, {
        "map": map_kind, "lam": lam, "gamma": gamma, "m": m,
    }, {"value": est.value, "a": est.a, "se_bound": est.se_bound,
        "empirical_se": est.empirical_se})
    _echo_or_write(payload, out, fmt)


@main.command("sure")
@click.option("--X", "x_path", type=click.Path(exists=True), required=True)
@click.option("--y", "y_path", type=click.Path(exists=True), required=True)
@click.option("--lam", type=float, required=True)
@click.option("--gamma", type=float, default=0.0, show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@with_common
def sure_cmd(x_path, y_path, lam, gamma, sigma, seed, out, fmt):
    """Unbiased risk estimate of an l1 / ridged-l1 fit."""
    problem = _load_problem(x_path, y_path, sigma)
    fit = solvers.fit_lasso(problem, lam, gamma=gamma)
    value = stein.sure(problem.y, fit.mu_hat, fit.df_hat, sigma)
    payload = harness.results_payload("sure", seed, {
        "lam": lam, "gamma": gamma, "sigma": sigma,
    }, {"sure": value, "sure_plus": max(value, 0.0), "df_hat": fit.df_hat})
    _echo_or_write(payload, out, fmt)


@main.command("sure4sure")
@click.option("--X", "x_path", type=click.Path(exists=True), required=True)
@click.option("--y", "y_path", type=click.Path(exists=True), required=True)
@click.option("--lam", type=float, required=True)
@click.option("--gamma", type=float, default=0.0, show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@with_common
def sure4sure(x_path, y_path, lam, gamma, sigma, seed, out, fmt):
    """Second-order risk estimates (accuracy of the risk estimate itself)."""
    problem = _load_problem(x_path, y_path, sigma)
    fit = solvers.fit_lasso(problem, lam, gamma=gamma)
    rep = stein.sure_from_fit(fit, problem.y, sigma)
    payload = harness.results_payload("sure4sure", seed, {
        "lam": lam, "gamma": gamma, "sigma": sigma,
    }, {"sure": rep.sure, "r_hat": rep.r_hat, "r_prime": rep.r_prime,
        "r_double_prime": rep.r_double_prime, "df_hat": rep.df_hat,
        "trace_grad_sq": rep.trace_grad_sq})
    _echo_or_write(payload, out, fmt)


@main.command("tune")
@click.option("--X", "x_path", type=click.Path(exists=True), required=True)
@click.option("--y", "y_path", type=click.Path(exists=True), required=True)
@click.option("--lams", type=str, required=True,
              help="Comma-separated penalty levels.")
@click.option("--sigma", type=float, default=1.0, show_default=True)
@with_common
def tune(x_path, y_path, lams, sigma, seed, out, fmt):
    """Pick the candidate penalty with the smallest risk estimate."""
    try:
        grid = [float(v) for v in lams.split(",") if v.strip()]
    except ValueError:
        raise click.UsageError("--lams must be a comma-separated float list")
    if not grid:
        raise click.UsageError("--lams must be nonempty")
    problem = _load_problem(x_path, y_path, sigma)
    values = []
    for lam in grid:
        fit = solvers.fit_lasso(problem, lam)
        values.append(stein.sure(problem.y, fit.mu_hat, fit.df_hat, sigma))
    pick = selection.sure_tune(values)
    payload = harness.results_payload("tune", seed, {"lams": grid}, {
        "sure_values": values, "selected_index": pick,
        "selected_lam": grid[pick]})
    _echo_or_write(payload, out, fmt)


@main.command("coverage")
@click.option("--n", type=int, default=500, show_default=True)
@click.option("--reps", type=int, default=2000, show_default=True)
@click.option("--alpha", type=float, default=0.05, show_default=True)
@with_common
def coverage(n, reps, alpha, seed, out, fmt):
    """Replication study of the loss confidence regions."""
    res = harness.experiment_coverage(n=n, reps=reps, alpha=alpha, seed=seed)
    payload = harness.results_payload("coverage", seed,
                                      {"n": n, "reps": reps, "alpha": alpha},
                                      res)
    _echo_or_write(payload, out, fmt)
    if not (res["coverage_two_sided"] >= 1 - alpha - 0.06
            and res["coverage_one_sided"] >= 1 - alpha - 0.06):
        click.echo("coverage fell below the tolerated band", err=True)
        sys.exit(INVARIANT_FAILURE)


@main.command("model-size")
@click.option("--observed", type=int, required=True,
              help="Observed support size.")
@click.option("--p", type=int, required=True)
@click.option("--alpha", type=float, default=0.05, show_default=True)
@with_common
def model_size(observed, p, alpha, seed, out, fmt):
    """Confidence interval for the expected support size."""
    try:
        ci = stein.model_size_ci(observed, p, alpha)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    payload = harness.results_payload("model_size", seed, {
        "observed": observed, "p": p, "alpha": alpha,
    }, {"lower": ci.lower, "upper": ci.upper, "level": ci.level})
    _echo_or_write(payload, out, fmt)


@main.command("debias")
@click.option("--X", "x_path", type=click.Path(exists=True), required=True)
@click.option("--y", "y_path", type=click.Path(exists=True), required=True)
@click.option("--lam", type=float, required=True)
@click.option("--a0", type=str, required=True,
              help="Comma-separated contrast direction of length p.")
@click.option("--sigma", type=float, default=1.0, show_default=True)
@with_common
def debias(x_path, y_path, lam, a0, sigma, seed, out, fmt):
    """De-biased estimate of the contrast <a0, beta>."""
    problem = _load_problem(x_path, y_path, sigma)
    try:
        a0_vec = np.array([float(v) for v in a0.split(",") if v.strip()])
    except ValueError:
        raise click.UsageError("--a0 must be a comma-separated float list")
    if a0_vec.size != problem.p:
        raise click.UsageError("--a0 must have length p = %d" % problem.p)
    direction = debias_mod.direction_setup(a0_vec, None, problem.p)
    rep = debias_mod.debias_theta(problem.x, problem.y, lam, direction,
                                  RngStream(seed), sigma=sigma)
    payload = harness.results_payload("debias", seed, {"lam": lam}, {
        "theta_hat": rep.theta_hat, "theta_proj": rep.theta_proj,
        "nu_hat": rep.nu_hat, "b_hat": rep.b_hat, "a_hat": rep.a_hat,
        "frozen_support": rep.frozen_support,
        "note": "theta_hat estimates the contrast scaled by %.17g"
                % direction.scale})
    _echo_or_write(payload, out, fmt)


@main.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True),
              required=True)
@with_common
@click.pass_context
def run(ctx, config_path, seed, out, fmt):
    """Run an experiment described by a JSON config file."""
    try:
        config = harness.ExperimentConfig.from_json(config_path)
    except (ValueError, json.JSONDecodeError) as exc:
        raise click.UsageError("bad config: %s" % exc)
    if config.kind == "debias" and "threads" not in config.params:
        config.params["threads"] = ctx.obj.get("threads", 1)
    payload = harness.run_experiment(config)
    if out:
        harness.save_results_json(payload, out)
    else:
        _echo_or_write(payload, None, fmt)


if __name__ == "__main__":
    main()
