"""Config-driven experiment runner and command-line interface.

Configs are line-oriented ``key = value`` text with ``#`` comments.  A line
``sweep.<key> = v1, v2, ...`` turns a key into a sweep axis; several sweep
lines form a Cartesian grid.  Each sweep point runs ``seeds`` times and
writes ``<output_dir>/<tag>/trace_seed<i>.csv``; one ``summary.csv`` per
experiment collects the final and steady-state numbers.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import golden, metrics, theory
from .algorithms import ALGORITHMS, DivergenceError, HyperParams, run
from .problems import AurocDataset, make_auroc, make_gaussian_auroc_data, make_quadratic, make_tanh
from .topology import TopologyError, build_complete, build_from_weights, build_ring, load_weights

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentSummary",
    "parse_config",
    "build_problem",
    "build_topology",
    "run_experiment",
    "regime_reports",
    "selftest",
    "cli",
    "main",
]

PROBLEMS = ("quadratic", "tanh", "auroc")
TOPOLOGIES = ("ring", "complete", "file")
REPORTS = ("none", "slope")
STEADY_FRACTION = 0.2

EXIT_OK = 0
EXIT_DIVERGED = 2
EXIT_USAGE = 64
EXIT_NOINPUT = 66
EXIT_CANTCREAT = 73


class ConfigError(ValueError):
    """Bad config text; the message names the line and key."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Every tunable of one experiment.  Defaults are the AUROC-experiment hyperparameters."""

    algorithm: str = "gt"
    problem: str = "quadratic"
    K: int = 4
    d0: int = 5
    d1: int = 5
    d2: int = 5
    mu: float = 1.0
    sigma_f: float = 0.01
    sigma_g: float = 0.01
    sigma_g_prime: float = 0.0
    heterogeneity: float = 0.5
    outer_heterogeneity: float = 0.0
    instance_seed: int = 0
    topology: str = "ring"
    topology_file: str = ""
    self_weight: float = 0.5
    eta: float = 0.1
    gamma_x: float = 0.99
    gamma_y: float = 0.99
    beta_x: float = 9.9
    beta_y: float = 9.9
    alpha: float = 9.0
    iterations: int = 2000
    seed: int = 0
    seeds: int = 1
    metrics_every: int = 10
    output_dir: str = "runs"
    rho: float = 0.1
    minibatch: int = 32
    imbalance_ratio: float = 0.1
    train_test_split: float = 0.9
    auroc_data: str = ""
    n_samples: int = 2000
    n_features: int = 20
    separation: float = 3.0
    report: str = "none"
    wall_time: bool = True
    sweep: tuple = ()

    @property
    def hyperparams(self) -> HyperParams:
        return HyperParams(self.eta, self.gamma_x, self.gamma_y, self.beta_x, self.beta_y, self.alpha)

    def points(self):
        """``(overrides, config)`` for every sweep point, in grid order."""
        if not self.sweep:
            return [({}, self)]
        keys = [key for key, _ in self.sweep]
        out = []
        for combo in itertools.product(*(values for _, values in self.sweep)):
            overrides = dict(zip(keys, combo))
            out.append((overrides, replace(self, sweep=(), **overrides)))
        return out


_DEFAULTS = {f.name: f.default for f in fields(ExperimentConfig) if f.name != "sweep"}


def _coerce(key, raw):
    kind = type(_DEFAULTS[key])
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        raw = raw[1:-1]
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is int:
        value = float(raw)
        if value != int(value):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(value)
    if kind is float:
        return float(raw)
    return raw


def _validate(cfg: ExperimentConfig):
    """Yield ``(key, message)`` for every violated invariant."""
    if cfg.algorithm not in ALGORITHMS:
        yield "algorithm", f"must be one of {', '.join(ALGORITHMS)}"
    if cfg.problem not in PROBLEMS:
        yield "problem", f"must be one of {', '.join(PROBLEMS)}"
    if cfg.topology not in TOPOLOGIES:
        yield "topology", f"must be one of {', '.join(TOPOLOGIES)}"
    if cfg.topology == "file" and not cfg.topology_file:
        yield "topology_file", "required when topology = file"
    if cfg.report not in REPORTS:
        yield "report", f"must be one of {', '.join(REPORTS)}"
    for key in ("K", "d0", "d1", "d2", "iterations", "seeds", "metrics_every", "minibatch", "n_samples", "n_features"):
        if getattr(cfg, key) < 1:
            yield key, "must be >= 1"
    for key in ("mu", "gamma_x", "gamma_y", "beta_x", "beta_y", "alpha"):
        if not getattr(cfg, key) > 0:
            yield key, "must be > 0"
    for key in ("sigma_f", "sigma_g", "sigma_g_prime", "heterogeneity", "outer_heterogeneity", "rho", "separation"):
        if getattr(cfg, key) < 0:
            yield key, "must be >= 0"
    if not 0 < cfg.eta < 1:
        yield "eta", "eta must lie in (0, 1)"
    for key in ("alpha", "beta_x", "beta_y"):
        if getattr(cfg, key) > 0 and 0 < cfg.eta < 1 and not getattr(cfg, key) * cfg.eta < 1:
            yield key, f"{key} * eta must lie in (0, 1)"
    if not 0 < cfg.self_weight < 1:
        yield "self_weight", "must lie in (0, 1)"
    for key in ("imbalance_ratio", "train_test_split"):
        if not 0 < getattr(cfg, key) < 1:
            yield key, "must lie in (0, 1)"


def parse_config(text: str) -> ExperimentConfig:
    """Parse config text; an empty text gives the full defaults.

    Raises :class:`ConfigError` naming the offending line and key.
    """
    values = {}
    lines = {}
    sweep = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {body!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        is_sweep = key.startswith("sweep.")
        name = key[len("sweep.") :] if is_sweep else key
        if name not in _DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {name!r}")
        if name in lines:
            raise ConfigError(f"line {lineno}: key {name!r} already set on line {lines[name]}")
        lines[name] = lineno
        try:
            if is_sweep:
                items = [item for item in raw.split(",") if item.strip()]
                if not items:
                    raise ValueError("sweep needs at least one value")
                sweep.append((name, tuple(_coerce(name, item) for item in items)))
            else:
                values[name] = _coerce(name, raw)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: key {name!r}: {exc}") from None

    cfg = ExperimentConfig(**values, sweep=tuple(sweep))
    for overrides, point in cfg.points():
        for key, message in _validate(point):
            # a violation caused by a sweep value points at the sweep line
            culprit = key if key in lines else next(iter(overrides), None)
            where = f"line {lines[culprit]}: " if culprit in lines else ""
            at = f" (sweep point {_tag(overrides)})" if overrides else ""
            raise ConfigError(f"{where}key {key!r}: {message}{at}")
    if cfg.report == "slope":
        etas = dict(cfg.sweep).get("eta", ())
        if len(set(etas)) < 3:
            where = f"line {lines['report']}: " if "report" in lines else ""
            raise ConfigError(f"{where}key 'report': slope needs sweep.eta with at least 3 distinct values")
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


# -- construction ------------------------------------------------------------


def _auroc_data(cfg: ExperimentConfig):
    if cfg.auroc_data:
        data = AurocDataset.load_csv(cfg.auroc_data)
    else:
        data = make_gaussian_auroc_data(
            cfg.n_samples, cfg.n_features, cfg.imbalance_ratio, cfg.separation, seed=cfg.instance_seed
        )
    return data.split(cfg.train_test_split, seed=cfg.instance_seed)


def build_problem(cfg: ExperimentConfig):
    """``(instance, test_data)``; ``test_data`` is None except for AUROC."""
    if cfg.problem == "auroc":
        train, test = _auroc_data(cfg)
        return make_auroc(train, rho=cfg.rho, minibatch=cfg.minibatch, K=cfg.K, seed=cfg.instance_seed), test
    make = make_quadratic if cfg.problem == "quadratic" else make_tanh
    inst = make(
        cfg.K,
        cfg.d0,
        cfg.d1,
        cfg.d2,
        cfg.mu,
        sigma_f=cfg.sigma_f,
        sigma_g=cfg.sigma_g,
        sigma_g_prime=cfg.sigma_g_prime,
        heterogeneity=cfg.heterogeneity,
        outer_heterogeneity=cfg.outer_heterogeneity,
        seed=cfg.instance_seed,
    )
    return inst, None


def build_topology(cfg: ExperimentConfig):
    """Mixing matrix for the config.

    A ring needs three workers; with ``K = 2`` the ring degenerates to the
    single edge with weights ``[[s, 1-s], [1-s, s]]`` and with ``K = 1`` to
    ``[1]``, so K-sweeps across small networks stay well defined.
    """
    if cfg.topology == "complete":
        return build_complete(cfg.K)
    if cfg.topology == "file":
        W = load_weights(cfg.topology_file)
        if W.K != cfg.K:
            raise TopologyError(f"{cfg.topology_file}: matrix has K={W.K}, config has K={cfg.K}")
        return W
    if cfg.K == 1:
        return build_complete(1)
    if cfg.K == 2:
        s = cfg.self_weight
        return build_from_weights(np.array([[s, 1.0 - s], [1.0 - s, s]]))
    return build_ring(cfg.K, cfg.self_weight)


def regime_reports(cfg: ExperimentConfig):
    """Gossip and tracking regime checks for the config's instance and graph."""
    inst, _ = build_problem(cfg)
    W = build_topology(cfg)
    hp = cfg.hyperparams
    return [theory.theorem1_bounds(inst.constants, W.lam, hp), theory.theorem2_bounds(inst.constants, W.lam, hp)]


# -- running -----------------------------------------------------------------


@dataclass
class ExperimentSummary:
    output_dir: Path
    rows: list
    slopes: list
    exit_code: int


def _tag(overrides):
    if not overrides:
        return "run"
    return "_".join(f"{key}-{value}" for key, value in overrides.items())


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _run_one(cfg: ExperimentConfig, overrides: dict, seed: int, out_dir: str):
    """One (sweep point, seed) run; returns a summary row dict."""
    tag = _tag(overrides)
    row = {"tag": tag, **overrides, "seed": seed}
    inst, test = build_problem(cfg)
    W = build_topology(cfg)
    try:
        trace = run(
            inst, W, cfg.hyperparams, cfg.algorithm, cfg.iterations, seed=seed, metrics_every=cfg.metrics_every, test_data=test
        )
    except DivergenceError as exc:
        row["status"] = "diverged"
        row["message"] = str(exc)
        return row
    path = Path(out_dir) / tag
    path.mkdir(parents=True, exist_ok=True)
    metrics.write_trace_csv(path / f"trace_seed{seed}.csv", trace, wall_time=cfg.wall_time)
    last = trace[-1]
    window = max(1, int(len(trace) * STEADY_FRACTION))
    row.update(
        status="ok",
        message="",
        final_t=last.t,
        final_criterion=last.criterion,
        final_grad_phi_sq=last.grad_phi_sq,
        final_dual_gap_sq=last.dual_gap_sq,
        final_auroc=last.auroc,
    )
    for name in metrics.CONSENSUS_QUANTITIES:
        present = name in last.consensus
        row[f"steady_cons_{name}"] = metrics.steady_state_consensus(trace, name, window) if present else None
    return row


def _job(args):
    return _run_one(*args)


def _max_workers(n_jobs):
    raw = os.environ.get("DECOMP_THREADS", "")
    cap = os.cpu_count() or 1
    if raw:
        try:
            cap = max(1, int(raw))
        except ValueError:
            raise ConfigError(f"DECOMP_THREADS must be a positive integer, got {raw!r}") from None
    return max(1, min(cap, n_jobs))


def _sort_key(cfg, row):
    return tuple(str(row[key]) if isinstance(row[key], str) else float(row[key]) for key, _ in cfg.sweep) + (row["seed"],)


def _slopes(cfg, rows):
    """Fit steady-state cons_h and cons_r against eta within each group of the other sweep keys."""
    others = [key for key, _ in cfg.sweep if key != "eta"]
    groups = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        groups.setdefault(tuple(row[key] for key in others), []).append(row)
    out = []
    for group, members in sorted(groups.items(), key=lambda item: [str(v) for v in item[0]]):
        label = ";".join(f"{key}={value}" for key, value in zip(others, group)) or "all"
        for quantity in ("h", "r"):
            col = f"steady_cons_{quantity}"
            by_eta = {}
            for row in members:
                if row[col] is not None:
                    by_eta.setdefault(row["eta"], []).append(row[col])
            if len(by_eta) < 3:
                continue
            points = [(eta, float(np.mean(vals))) for eta, vals in sorted(by_eta.items())]
            slope, r2 = metrics.fit_loglog_slope(points)
            out.append({"group": label, "quantity": f"cons_{quantity}", "slope": slope, "r_squared": r2})
    return out


def _write_csv(path, rows, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(col)) for col in columns])


def run_experiment(config: ExperimentConfig, log=None) -> ExperimentSummary:
    """Run every sweep point and seed, write traces and ``summary.csv``.

    Rows of the summary are sorted by sweep values and seed, so the file
    does not depend on the order in which sweep values were listed or on
    the order in which parallel runs finished.
    """
    log = log or (lambda msg: None)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [config.seed + i for i in range(config.seeds)]
    jobs = [(cfg, overrides, seed, str(out_dir)) for overrides, cfg in config.points() for seed in seeds]
    workers = _max_workers(len(jobs))
    if workers == 1:
        rows = []
        for job in jobs:
            rows.append(_job(job))
            log(f"{rows[-1]['tag']} seed {rows[-1]['seed']}: {rows[-1]['status']}")
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_job, jobs))
        for row in rows:
            log(f"{row['tag']} seed {row['seed']}: {row['status']}")
    rows.sort(key=lambda row: _sort_key(config, row))

    sweep_keys = [key for key, _ in config.sweep]
    columns = ["tag", *sweep_keys, "seed", "status", "final_t", "final_criterion", "final_grad_phi_sq"]
    columns += ["final_dual_gap_sq", "final_auroc"] + [f"steady_cons_{n}" for n in metrics.CONSENSUS_QUANTITIES]
    columns += ["message"]
    _write_csv(out_dir / "summary.csv", rows, columns)

    slopes = []
    if config.report == "slope":
        slopes = _slopes(config, rows)
        _write_csv(out_dir / "slopes.csv", slopes, ["group", "quantity", "slope", "r_squared"])
        for entry in slopes:
            log(f"slope {entry['group']} {entry['quantity']}: {entry['slope']:.4f} (r^2 {entry['r_squared']:.4f})")
    diverged = [row for row in rows if row["status"] != "ok"]
    for row in diverged:
        print(f"{row['tag']} seed {row['seed']}: {row['message']}", file=sys.stderr)
    return ExperimentSummary(out_dir, rows, slopes, EXIT_DIVERGED if diverged else EXIT_OK)


# -- self test ---------------------------------------------------------------


def _selftest_checks():
    from .algorithms import init, step
    from .rng import NoiseStreams
    from .topology import mix

    def mixing():
        rng = np.random.default_rng(0)
        W = build_ring(6)
        v = rng.standard_normal((6, 3))
        out = mix(W, v)
        return np.max(np.abs(out.mean(0) - v.mean(0))) <= 1e-12 and metrics.consensus_error(out) <= W.lam**2 * metrics.consensus_error(v) + 1e-10

    def tracking():
        inst = make_quadratic(5, 3, 3, 3, sigma_f=0.1, sigma_g=0.1, sigma_g_prime=0.1, seed=1)
        W = build_ring(5)
        hp = HyperParams(eta=0.1, gamma_x=0.1, gamma_y=0.5, beta_x=4, beta_y=4, alpha=1)
        state = init(inst, W, hp, "gt")
        streams = NoiseStreams(0)
        worst = 0.0
        for _ in range(50):
            state = step(state, inst, W, hp, streams)
            for a, b in (("p", "u"), ("q", "v"), ("r", "h")):
                worst = max(worst, np.max(np.abs(state.mean(a) - state.mean(b))))
        return worst <= 1e-10

    def single_worker():
        inst = make_quadratic(1, 3, 3, 3, sigma_f=0.1, sigma_g=0.1, seed=2)
        W = build_complete(1)
        hp = HyperParams(eta=0.1, gamma_x=0.1, gamma_y=0.5, beta_x=4, beta_y=4, alpha=1)
        finals = [run(inst, W, hp, alg, 50, seed=3, metrics_every=50).final_state for alg in ("gp", "gt", "gt-m")]
        return all(np.array_equal(finals[0].x, f.x) and np.array_equal(finals[0].y, f.y) for f in finals[1:])

    def homogeneous():
        inst = make_quadratic(4, 3, 3, 3, sigma_f=0.1, sigma_g=0.1, heterogeneity=0.0, seed=4)
        hp = HyperParams(eta=0.1, gamma_x=0.1, gamma_y=0.5, beta_x=4, beta_y=4, alpha=1)
        trace = run(inst, build_complete(4), hp, "gt", 50, seed=5, metrics_every=1, shared_noise=True)
        return max(max(rec.consensus.values()) for rec in trace) <= 1e-12

    def golden_step():
        return max(golden.check("gp")[0], golden.check("gt")[0]) <= 1e-12

    def theory_values():
        from .problems import ProblemConstants

        c = ProblemConstants(L_f=1, L_g=1, C_f=1, C_g=1, sigma_f=0, sigma_g=0, sigma_g_prime=0, mu=1)
        hp = HyperParams(alpha=1, beta_x=1, beta_y=1)
        t1 = theory.theorem1_constants(c, hp)
        return t1["gamma_x1"] == 535 and theory.theorem2_constants(c, hp)["gamma_x1"] == 4484

    return [
        ("gossip preserves the mean and contracts by lambda^2", mixing),
        ("tracking identities hold for 50 noisy steps", tracking),
        ("gp, gt, gt-m coincide with one worker", single_worker),
        ("identical shards keep consensus errors at zero", homogeneous),
        ("single-step golden values", golden_step),
        ("step-size constants on unit inputs", theory_values),
    ]


def selftest(out=print) -> bool:
    ok = True
    for name, check in _selftest_checks():
        try:
            passed = bool(check())
        except Exception as exc:  # report and keep going
            passed = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        ok &= passed
        out(f"{'PASS' if passed else 'FAIL'}  {name}")
    return ok


# -- command line ------------------------------------------------------------


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parser():
    p = _Parser(
        prog="decomp",
        description="Decentralized compositional minimax simulator.",
        epilog="commands: run <config> | regime <config|defaults> | golden | selftest",
    )
    p.add_argument("command")
    p.add_argument("target", nargs="?")
    p.add_argument("--output-dir", help="override output_dir from the config")
    p.add_argument("--seed", type=int, help="override the base seed")
    p.add_argument("--quiet", action="store_true", help="only print errors and final results")
    return p


def _read_config(target, args):
    if target is None:
        raise _UsageError("missing config path")
    if target == "defaults":
        cfg = ExperimentConfig()
    else:
        cfg = load_config(target)
    overrides = {}
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    if args.seed is not None:
        overrides["seed"] = args.seed
    return replace(cfg, **overrides)


def _cmd_run(args, say):
    cfg = _read_config(args.target, args)
    for report in regime_reports(cfg):
        if not report.all_satisfied and report.theorem == (2 if cfg.algorithm in ("gt", "gt-m") else 1):
            say(f"warning: outside the proven step-size regime ({', '.join(report.violations())}); running anyway")
    summary = run_experiment(cfg, log=say)
    say(f"wrote {len(summary.rows)} run(s) to {summary.output_dir}")
    return summary.exit_code


def _cmd_regime(args, say):
    cfg = _read_config(args.target, args)
    for report in regime_reports(cfg):
        print(theory.format_report(report))
        if not report.all_satisfied:
            print(f"warning: hyperparameters violate {', '.join(report.violations())}")
        print()
    return EXIT_OK


def _cmd_golden(args, say):
    worst = 0.0
    for algorithm in ("gp", "gt"):
        err, expected, actual = golden.check(algorithm)
        worst = max(worst, err)
        print(f"{algorithm}: one step on the two-worker scalar instance")
        for name, vals in expected.items():
            exact = ", ".join(str(v) for v in vals)
            got = ", ".join(repr(v) for v in actual[name])
            print(f"  {name}: expected [{exact}]  got [{got}]")
    ok = worst <= 1e-12
    print(f"max abs error {worst:.3g}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else 1


def _cmd_selftest(args, say):
    return EXIT_OK if selftest() else 1


_COMMANDS = {"run": _cmd_run, "regime": _cmd_regime, "golden": _cmd_golden, "selftest": _cmd_selftest}


def cli(argv=None) -> int:
    """Entry point returning a process exit code (0, 1, 2, 64, 66 or 73)."""
    parser = _parser()
    try:
        args = parser.parse_args(argv)
        if args.command not in _COMMANDS:
            raise _UsageError(f"unknown command {args.command!r}")
        say = (lambda msg: None) if args.quiet else print
        return _COMMANDS[args.command](args, say)
    except _UsageError as exc:
        print(f"decomp: {exc}", file=sys.stderr)
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print(parser.epilog, file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"decomp: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"decomp: no such file: {exc.filename}", file=sys.stderr)
        return EXIT_NOINPUT
    except (TopologyError, ValueError) as exc:
        print(f"decomp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"decomp: cannot write {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_CANTCREAT


def main():
    sys.exit(cli())
