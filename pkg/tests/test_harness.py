import json
import math

import numpy as np
import pytest
from click.testing import CliRunner
from hypothesis import given, settings, strategies as st

from steinsure import cli, harness
from steinsure.harness import (ExperimentConfig, emit_table_csv,
                               load_matrix_csv, results_payload,
                               run_experiment, save_matrix_csv,
                               save_results_json)


# --------------------------------------------------------------------- io

def test_matrix_csv_roundtrip(tmp_path):
    gen = np.random.default_rng(0)
    m = gen.standard_normal((7, 4)) * 10.0 ** gen.integers(-8, 8, (7, 4))
    path = str(tmp_path / "m.csv")
    save_matrix_csv(m, path)
    back = load_matrix_csv(path)
    assert np.array_equal(m, back)   # 17 significant digits: exact


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False,
                          width=64), min_size=1, max_size=8))
def test_matrix_csv_roundtrip_property(tmp_path_factory, values):
    path = str(tmp_path_factory.mktemp("csv") / "row.csv")
    save_matrix_csv(np.array([values]), path)
    assert np.array_equal(load_matrix_csv(path), np.array([values]))


def test_matrix_csv_ragged_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3,4\n5,6,7\n")
    with pytest.raises(ValueError, match=r"bad\.csv:3"):
        load_matrix_csv(str(path))


def test_matrix_csv_non_numeric_reports_line(tmp_path):
    path = tmp_path / "bad2.csv"
    path.write_text("1,2\n3,frog\n")
    with pytest.raises(ValueError, match=r"bad2\.csv:2"):
        load_matrix_csv(str(path))


def test_matrix_csv_empty(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("\n\n")
    with pytest.raises(ValueError, match="empty"):
        load_matrix_csv(str(path))


def test_emit_table_csv(tmp_path):
    rows = [{"m": 5, "mean": 1.0 / 3.0}, {"m": 20, "mean": 2.0 / 7.0}]
    path = str(tmp_path / "t.csv")
    emit_table_csv(rows, path)
    text = open(path).read().splitlines()
    assert text[0] == "m,mean"
    assert float(text[1].split(",")[1]) == 1.0 / 3.0


def test_results_payload_schema():
    payload = results_payload("sos", 3, {"n": 5}, {"ok": np.bool_(True)})
    assert payload["schema"] == "stein-sure/1"
    assert json.dumps(harness._jsonable(payload))  # serializable


def test_save_results_json_deterministic(tmp_path):
    res = harness.experiment_sos(reps=2000, seed=4, n_list=(5,))
    res.pop("runtime_s")
    p1, p2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    save_results_json(results_payload("sos", 4, {}, res), p1)
    res2 = harness.experiment_sos(reps=2000, seed=4, n_list=(5,))
    res2.pop("runtime_s")
    save_results_json(results_payload("sos", 4, {}, res2), p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()


# --------------------------------------------------------------- dispatch

def test_experiment_config_from_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text('{"kind": "sos", "seed": 9, "params": {"reps": 100}}')
    cfg = ExperimentConfig.from_json(str(path))
    assert cfg.kind == "sos" and cfg.seed == 9 and cfg.params == {"reps": 100}
    path.write_text('{"seed": 9}')
    with pytest.raises(ValueError):
        ExperimentConfig.from_json(str(path))


def test_run_experiment_unknown_kind():
    with pytest.raises(ValueError, match="unknown experiment"):
        run_experiment(ExperimentConfig(kind="nope"))


def test_run_experiment_payload():
    out = run_experiment(ExperimentConfig(
        kind="adversarial", seed=2, params={"n": 256, "reps": 50}))
    assert out["schema"] == "stein-sure/1"
    assert out["results"]["reps"] == 50


def test_debias_threads_do_not_change_results():
    r1 = harness.experiment_debias(n=40, p=30, s0=2, reps=12, seed=5,
                                   threads=1)
    r2 = harness.experiment_debias(n=40, p=30, s0=2, reps=12, seed=5,
                                   threads=2)
    for k in ("pivot_var", "v_star_mean", "theta_hat_mean"):
        assert r1[k] == r2[k]


# -------------------------------------------------------------------- cli

runner = CliRunner()


def _write_problem(tmp_path):
    gen = np.random.default_rng(1)
    x = gen.standard_normal((25, 8))
    y = x[:, 0] + gen.standard_normal(25)
    xp, yp = str(tmp_path / "X.csv"), str(tmp_path / "y.csv")
    save_matrix_csv(x, xp)
    save_matrix_csv(y[:, None], yp)
    return xp, yp


def test_cli_lasso_json(tmp_path):
    xp, yp = _write_problem(tmp_path)
    res = runner.invoke(cli.main, ["lasso", "--X", xp, "--y", yp,
                                   "--lam", "0.3"])
    assert res.exit_code == 0
    payload = json.loads(res.output)
    assert payload["schema"] == "stein-sure/1"
    assert "sure" in payload["results"]


def test_cli_usage_error_exit_code(tmp_path):
    xp, yp = _write_problem(tmp_path)
    res = runner.invoke(cli.main, ["lasso", "--X", xp, "--y", yp])
    assert res.exit_code == 1   # missing --lam is a usage error
    res2 = runner.invoke(cli.main, ["tune", "--X", xp, "--y", yp,
                                    "--lams", "a,b"])
    assert res2.exit_code == 1
    res3 = runner.invoke(cli.main, ["model-size", "--observed", "10",
                                    "--p", "5"])
    assert res3.exit_code == 1


def test_cli_sos_verify_pass():
    res = runner.invoke(cli.main, ["sos-verify", "--n", "5",
                                   "--reps", "3000", "--seed", "2"])
    assert res.exit_code == 0


def test_cli_tune_and_out_file(tmp_path):
    xp, yp = _write_problem(tmp_path)
    out = str(tmp_path / "tune.json")
    res = runner.invoke(cli.main, ["tune", "--X", xp, "--y", yp,
                                   "--lams", "0.1,0.3,0.9", "--out", out])
    assert res.exit_code == 0
    payload = json.loads(open(out).read())
    idx = payload["results"]["selected_index"]
    assert payload["results"]["sure_values"][idx] == min(
        payload["results"]["sure_values"])


def test_cli_svt_and_mc_div(tmp_path):
    gen = np.random.default_rng(3)
    mp = str(tmp_path / "M.csv")
    save_matrix_csv(gen.standard_normal((6, 5)), mp)
    res = runner.invoke(cli.main, ["svt-df", "--X", mp, "--lam", "1.0"])
    assert res.exit_code == 0
    res2 = runner.invoke(cli.main, ["mc-div", "--map", "svt", "--X", mp,
                                    "--lam", "1.0", "--m", "50"])
    assert res2.exit_code == 0
    v = json.loads(res2.output)["results"]["value"]
    exact = json.loads(res.output)["results"]["df_exact"]
    assert abs(v - exact) < 6.0


def test_cli_run_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "sos", "seed": 3,
                               "params": {"reps": 1500, "n_list": [5]}}))
    out = str(tmp_path / "res.json")
    res = runner.invoke(cli.main, ["run", "--config", str(cfg), "--out", out])
    assert res.exit_code == 0
    payload = json.loads(open(out).read())
    assert payload["kind"] == "sos"


def test_cli_debias(tmp_path):
    xp, yp = _write_problem(tmp_path)
    res = runner.invoke(cli.main, ["debias", "--X", xp, "--y", yp,
                                   "--lam", "0.3",
                                   "--a0", ",".join(["1"] + ["0"] * 7)])
    assert res.exit_code == 0
    assert "theta_hat" in json.loads(res.output)["results"]
