import csv
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

from decomp import harness
from decomp.harness import (
    EXIT_DIVERGED,
    EXIT_NOINPUT,
    EXIT_OK,
    EXIT_USAGE,
    ConfigError,
    ExperimentConfig,
    build_problem,
    build_topology,
    cli,
    parse_config,
    run_experiment,
)
from decomp.topology import TopologyError

SMALL = """
# small fast quadratic run
K = 4
d0 = 3
d1 = 3
d2 = 3
iterations = 60
metrics_every = 10
gamma_x = 0.1
gamma_y = 1.0
beta_x = 4
beta_y = 4
alpha = 1
wall_time = false
"""


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def small(tmp_path, extra="", name="out", drop=()):
    base = "".join(line + "\n" for line in SMALL.splitlines() if line.split(" = ")[0] not in drop)
    return parse_config(base + extra + f"\noutput_dir = {tmp_path / name}\n")


# -- parse_config ------------------------------------------------------------------------------


def test_empty_config_gives_defaults():
    cfg = parse_config("")
    assert cfg == ExperimentConfig()
    assert (cfg.algorithm, cfg.problem, cfg.K, cfg.topology) == ("gt", "quadratic", 4, "ring")
    hp = cfg.hyperparams
    assert (hp.eta, hp.gamma_x, hp.gamma_y, hp.beta_x, hp.beta_y, hp.alpha) == (0.1, 0.99, 0.99, 9.9, 9.9, 9.0)
    assert cfg.rho == 0.1


def test_comments_and_blank_lines():
    cfg = parse_config("# header\n\nK = 8   # trailing comment\nalgorithm = gp\n")
    assert cfg.K == 8 and cfg.algorithm == "gp"


def test_eta_out_of_range():
    with pytest.raises(ConfigError, match=r"line 2: key 'eta'.*\(0, 1\)"):
        parse_config("K = 4\neta = 1.5\n")


def test_unknown_key_names_line():
    with pytest.raises(ConfigError, match="line 3: unknown key 'etta'"):
        parse_config("K = 4\n\netta = 0.1\n")


def test_unparsable_value_names_line_and_key():
    with pytest.raises(ConfigError, match="line 1: key 'K'"):
        parse_config("K = four\n")


def test_missing_equals():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("K 4\n")


def test_duplicate_key():
    with pytest.raises(ConfigError, match="line 2: key 'K' already set on line 1"):
        parse_config("K = 4\nK = 8\n")


def test_sweep_and_base_of_same_key_conflict():
    with pytest.raises(ConfigError, match="already set"):
        parse_config("eta = 0.1\nsweep.eta = 0.2, 0.1\n")


def test_bad_enum_values():
    with pytest.raises(ConfigError, match="algorithm"):
        parse_config("algorithm = adam\n")
    with pytest.raises(ConfigError, match="topology"):
        parse_config("topology = star\n")


def test_sweep_produces_points_differing_only_in_eta():
    cfg = parse_config("sweep.eta = 0.1, 0.05\n")
    points = cfg.points()
    assert len(points) == 2
    (o1, c1), (o2, c2) = points
    assert o1 == {"eta": 0.1} and o2 == {"eta": 0.05}
    assert replace(c1, eta=0.05) == c2


def test_sweep_point_validated_against_base_values():
    # default alpha = 9 puts alpha * eta above 1 at eta = 0.2
    with pytest.raises(ConfigError, match=r"line 1: key 'alpha'.*sweep point eta-0.2"):
        parse_config("sweep.eta = 0.2, 0.1\n")


def test_sweep_grid_is_cartesian():
    cfg = parse_config("sweep.eta = 0.1, 0.05\nsweep.algorithm = gp, gt, gt-m\n")
    assert len(cfg.points()) == 6


def test_sweep_value_validated():
    with pytest.raises(ConfigError, match="line 4: key 'eta'"):
        parse_config("alpha = 1\nbeta_x = 1\nbeta_y = 1\nsweep.eta = 0.2, 2.0\n")
    with pytest.raises(ConfigError):
        parse_config("sweep.bogus = 1, 2\n")


def test_slope_report_needs_eta_sweep():
    with pytest.raises(ConfigError, match="slope"):
        parse_config("report = slope\n")
    parse_config("report = slope\nsweep.eta = 0.1, 0.05, 0.025\n")


def test_load_config_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        harness.load_config(tmp_path / "nope.conf")


# -- builders ------------------------------------------------------------------------------------


@pytest.mark.parametrize("K, expect", [(1, [[1.0]]), (2, [[0.5, 0.5], [0.5, 0.5]])])
def test_small_rings(K, expect):
    W = build_topology(replace(ExperimentConfig(), K=K))
    assert np.array_equal(W.weights, expect)


def test_two_worker_ring_self_weight():
    W = build_topology(replace(ExperimentConfig(), K=2, self_weight=0.7))
    assert np.allclose(W.weights, [[0.7, 0.3], [0.3, 0.7]])


def test_topology_file(tmp_path):
    path = tmp_path / "w.txt"
    path.write_text("0.6 0.4\n0.4 0.6\n")
    cfg = parse_config(f"K = 2\ntopology = file\ntopology_file = {path}\n")
    assert build_topology(cfg).lam == pytest.approx(0.2)


def test_topology_file_size_mismatch(tmp_path):
    path = tmp_path / "w.txt"
    path.write_text("0.6 0.4\n0.4 0.6\n")
    cfg = parse_config(f"K = 3\ntopology = file\ntopology_file = {path}\n")
    with pytest.raises(TopologyError, match="K=2"):
        build_topology(cfg)


def test_build_auroc_problem():
    cfg = parse_config("problem = auroc\nn_samples = 200\nn_features = 5\n")
    inst, test = build_problem(cfg)
    assert inst.K == 4 and inst.dim == 5
    assert len(test) == 20 and test.positive_ratio == pytest.approx(0.1)


def test_build_auroc_from_csv(tmp_path):
    from decomp.problems import make_gaussian_auroc_data

    data = make_gaussian_auroc_data(100, 3, seed=0)
    path = tmp_path / "d.csv"
    np.savetxt(path, np.column_stack([data.labels, data.features]), delimiter=",")
    cfg = parse_config(f"problem = auroc\nauroc_data = {path}\n")
    inst, test = build_problem(cfg)
    assert inst.dim == 3 and len(test) == 10


def test_build_tanh_problem():
    cfg = parse_config("problem = tanh\nK = 3\n")
    inst, test = build_problem(cfg)
    assert inst.family == "tanh" and test is None


# -- run_experiment -------------------------------------------------------------------------------


def test_two_seeds_byte_identical(tmp_path):
    cfg = small(tmp_path, "seeds = 2\n")
    s1 = run_experiment(cfg)
    files = sorted((tmp_path / "out" / "run").iterdir())
    assert [f.name for f in files] == ["trace_seed0.csv", "trace_seed1.csv"]
    first = {f.name: f.read_bytes() for f in files}
    summary = (tmp_path / "out" / "summary.csv").read_bytes()
    s2 = run_experiment(cfg)
    assert {f.name: f.read_bytes() for f in files} == first
    assert (tmp_path / "out" / "summary.csv").read_bytes() == summary
    assert s1.exit_code == s2.exit_code == EXIT_OK
    assert first["trace_seed0.csv"] != first["trace_seed1.csv"]


def test_K_sweep_tags(tmp_path):
    run_experiment(small(tmp_path, "sweep.K = 1, 2, 4, 8\n", drop=("K",)))
    tags = sorted(p.name for p in (tmp_path / "out").iterdir() if p.is_dir())
    assert tags == ["K-1", "K-2", "K-4", "K-8"]
    rows = read_rows(tmp_path / "out" / "summary.csv")
    assert [r["K"] for r in rows] == ["1", "2", "4", "8"]
    assert all(r["status"] == "ok" for r in rows)


def test_summary_columns(tmp_path):
    run_experiment(small(tmp_path, "algorithm = gp\n"))
    rows = read_rows(tmp_path / "out" / "summary.csv")
    assert rows[0]["steady_cons_h"] != "" and rows[0]["steady_cons_r"] == ""
    assert float(rows[0]["final_criterion"]) >= 0
    assert rows[0]["final_t"] == "60"


def test_slope_report(tmp_path):
    extra = "sweep.eta = 0.2, 0.1, 0.05\nsweep.algorithm = gp, gt\nreport = slope\nsigma_f = 0.3\nsigma_g = 0.3\n"
    summary = run_experiment(small(tmp_path, extra))
    rows = read_rows(tmp_path / "out" / "slopes.csv")
    got = {(r["group"], r["quantity"]) for r in rows}
    assert ("algorithm=gp", "cons_h") in got and ("algorithm=gt", "cons_r") in got
    assert ("algorithm=gp", "cons_r") not in got
    assert len(summary.slopes) == len(rows)
    for r in rows:
        assert np.isfinite(float(r["slope"]))


def test_sweep_order_irrelevant(tmp_path):
    a = small(tmp_path, "sweep.eta = 0.2, 0.05, 0.1\nsweep.algorithm = gt, gp\n", name="a")
    b = small(tmp_path, "sweep.algorithm = gp, gt\nsweep.eta = 0.1, 0.2, 0.05\n", name="b")
    run_experiment(a)
    run_experiment(b)
    rows_a = read_rows(tmp_path / "a" / "summary.csv")
    rows_b = read_rows(tmp_path / "b" / "summary.csv")
    strip = lambda rows: sorted(tuple(sorted((k, v) for k, v in r.items() if k != "tag")) for r in rows)  # noqa: E731
    assert strip(rows_a) == strip(rows_b)
    # same trace files under the tag each ordering produces
    for d in (tmp_path / "a").iterdir():
        if d.is_dir():
            eta, alg = d.name.split("_")
            twin = tmp_path / "b" / f"{alg}_{eta}" / "trace_seed0.csv"
            assert (d / "trace_seed0.csv").read_bytes() == twin.read_bytes()


def test_parallel_equals_serial(tmp_path, monkeypatch):
    extra = "seeds = 2\nsweep.algorithm = gp, gt\n"
    monkeypatch.setenv("DECOMP_THREADS", "1")
    run_experiment(small(tmp_path, extra, name="serial"))
    monkeypatch.setenv("DECOMP_THREADS", "4")
    run_experiment(small(tmp_path, extra, name="parallel"))
    for sub in ("algorithm-gp", "algorithm-gt"):
        for seed in (0, 1):
            f = f"{sub}/trace_seed{seed}.csv"
            assert (tmp_path / "serial" / f).read_bytes() == (tmp_path / "parallel" / f).read_bytes()
    assert (tmp_path / "serial" / "summary.csv").read_bytes() == (tmp_path / "parallel" / "summary.csv").read_bytes()


def test_bad_thread_count(tmp_path, monkeypatch):
    monkeypatch.setenv("DECOMP_THREADS", "many")
    with pytest.raises(ConfigError, match="DECOMP_THREADS"):
        run_experiment(small(tmp_path))


def test_divergence_exit_code(tmp_path, capsys):
    extra = "sweep.gamma_x = 0.1, 1000000\ngamma_y = 1000000\neta = 0.9\nbeta_x = 1\nbeta_y = 1\niterations = 3000\n"
    cfg = small(tmp_path, extra, name="", drop=("gamma_x", "gamma_y", "beta_x", "beta_y", "iterations"))
    with np.errstate(all="ignore"):
        summary = run_experiment(cfg)
    assert summary.exit_code == EXIT_DIVERGED
    status = {r["gamma_x"]: r["status"] for r in read_rows(tmp_path / "summary.csv")}
    assert status["1000000.0"] == "diverged"
    assert "non-finite" in capsys.readouterr().err


# -- CLI ----------------------------------------------------------------------------------------


def test_cli_selftest():
    assert cli(["selftest"]) == EXIT_OK


def test_cli_golden(capsys):
    assert cli(["golden"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "x: expected [5/8, 7/8]" in out and "PASS" in out


def test_cli_missing_config(tmp_path, capsys):
    assert cli(["run", str(tmp_path / "missing.conf")]) == EXIT_NOINPUT
    assert "missing.conf" in capsys.readouterr().err


def test_cli_unknown_command(capsys):
    assert cli(["frobnicate"]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_cli_no_arguments():
    assert cli([]) == EXIT_USAGE


def test_cli_bad_config(tmp_path, capsys):
    path = tmp_path / "bad.conf"
    path.write_text("eta = 1.5\n")
    assert cli(["run", str(path)]) == EXIT_USAGE
    assert "line 1" in capsys.readouterr().err


def test_cli_regime_defaults(capsys):
    assert cli(["regime", "defaults"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "theorem=1" in out and "theorem=2" in out
    theorem1 = out.split("theorem=2")[0]
    assert "satisfied.gamma_x=false" in theorem1
    assert "warning: hyperparameters violate" in out


def test_cli_run_with_overrides(tmp_path, capsys):
    path = tmp_path / "c.conf"
    path.write_text(SMALL)
    code = cli(["run", str(path), "--output-dir", str(tmp_path / "o"), "--seed", "7", "--quiet"])
    assert code == EXIT_OK
    assert (tmp_path / "o" / "run" / "trace_seed7.csv").exists()
    assert capsys.readouterr().out == ""


def test_cli_run_warns_outside_regime(tmp_path, capsys):
    path = tmp_path / "c.conf"
    path.write_text(SMALL)
    cli(["run", str(path), "--output-dir", str(tmp_path / "o")])
    assert "outside the proven step-size regime" in capsys.readouterr().out


def test_cli_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    path = tmp_path / "c.conf"
    path.write_text(SMALL)
    assert cli(["run", str(path), "--output-dir", str(blocker / "sub"), "--quiet"]) == harness.EXIT_CANTCREAT


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "decomp", "golden"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "PASS" in res.stdout


def test_default_run_reaches_saddle(tmp_path):
    # full defaults (gt, K=4 ring, default hyperparameters) on the quadratic instance
    cfg = replace(ExperimentConfig(), output_dir=str(tmp_path), metrics_every=500)
    inst, _ = build_problem(cfg)
    x_star, _ = inst.saddle_point()
    from decomp.algorithms import run

    trace = run(inst, build_topology(cfg), cfg.hyperparams, cfg.algorithm, cfg.iterations, metrics_every=500)
    x_bar = trace.final_state.mean("x")
    assert np.sum((x_bar - x_star) ** 2) <= 1e-4
