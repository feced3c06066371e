"""Seeded experiment runs, CSV artifacts, sweeps and summaries."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ExperimentConfig
from .environment import EndOfSequence, read_context_file
from .errors import ConfigError
from .evaluation import fit_scaling_exponent
from .simulation import TrialResult, run_trial

log = logging.getLogger(__name__)

CSV_HEADER = ["run_id", "algorithm", "feedback", "d", "T", "delta", "sigma", "r0", "source",
              "seed", "t", "cum_regret_expected", "cum_reward_realized", "theta1_err",
              "theta0_err", "clean_count", "lambda_min_ratio"]

TRACE_HEADER = ["seed", "t", "x", "x_prime", "beta", "tau", "always_one", "always_zero", "action",
                "optimal_action", "clean", "observed_reward", "realized_reward", "inst_regret"]

SUMMARY_HEADER = ["run_id", "algorithm", "feedback", "d", "T", "delta", "sigma", "r0", "source",
                  "n_seeds", "mean_cum_regret", "std_cum_regret", "single_seed"]


def run_id(cfg: ExperimentConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    if isinstance(v, np.ndarray):
        return " ".join(repr(float(e)) for e in v)
    return str(v)


@dataclass
class RunArtifacts:
    config: ExperimentConfig
    run_id: str
    rows: list[list[str]]
    trials: list[TrialResult] = field(default_factory=list)
    trace_rows: Optional[list[list[str]]] = None

    def final_regrets(self) -> np.ndarray:
        return np.array([tr.rows[-1].cum_regret_expected for tr in self.trials])

    def regret_at(self, t: int) -> np.ndarray:
        out = []
        for tr in self.trials:
            match = [r.cum_regret_expected for r in tr.rows if r.t == t]
            if not match:
                raise KeyError(f"no checkpoint at t={t}")
            out.append(match[0])
        return np.array(out)

    def metric_at(self, t: int, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for tr in self.trials for r in tr.rows if r.t == t])

    def csv_text(self) -> str:
        return _csv_text(CSV_HEADER, self.rows)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def preflight(cfg: ExperimentConfig) -> None:
    """Checks that must fail before any round is simulated."""
    if cfg.source.kind == "adversarial_file":
        try:
            X = read_context_file(cfg.source.path, cfg.d)
        except OSError as exc:
            raise ConfigError(f"cannot read context file: {exc}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if len(X) < cfg.T:
            raise ConfigError(f"context file {cfg.source.path} has {len(X)} rows, fewer than T={cfg.T}")


def _trial(args):
    cfg, seed, trace = args
    try:
        result = run_trial(cfg, seed, trace=trace)
    except EndOfSequence as exc:
        raise ConfigError(str(exc)) from None
    return result


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: int = 1,
                   trace: bool = False) -> RunArtifacts:
    """Run every seed of ``cfg`` (seed ``base_seed + i``) and collect checkpoint rows.

    Rows are ordered by (seed, t) whatever the worker count, so reruns of the
    same configuration produce byte-identical files.
    """
    preflight(cfg)
    seeds = [cfg.base_seed + i for i in range(cfg.seeds)]
    jobs = [(cfg, s, trace) for s in seeds]
    if threads > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            trials = list(pool.map(_trial, jobs))
    else:
        trials = [_trial(job) for job in jobs]
    rid = run_id(cfg)
    rows = []
    for tr in trials:
        for r in tr.rows:
            rows.append([fmt(v) for v in (rid, cfg.algorithm, cfg.feedback, cfg.d, cfg.T, cfg.delta,
                                          cfg.sigma, cfg.r0, cfg.source.kind, tr.seed, r.t,
                                          r.cum_regret_expected, r.cum_reward_realized,
                                          r.theta1_err, r.theta0_err, r.clean_count,
                                          r.lambda_min_ratio)])
    trace_rows = None
    if trace:
        trace_rows = []
        for tr in trials:
            for e in tr.logs:
                trace_rows.append([fmt(v) for v in (tr.seed, e.t, e.x, e.x_prime, e.beta, e.tau,
                                                    e.always_one, e.always_zero, e.action,
                                                    e.optimal_action, e.clean, e.observed_reward,
                                                    e.realized_reward, e.inst_regret)])
    art = RunArtifacts(cfg, rid, rows, trials, trace_rows)
    if out_dir is not None:
        write_artifacts(art, out_dir)
    return art


def summary_rows(artifacts: Sequence[RunArtifacts]) -> list[list[str]]:
    out = []
    for art in artifacts:
        cfg = art.config
        final = art.final_regrets()
        single = len(final) == 1
        std = 0.0 if single else float(np.std(final, ddof=1))
        out.append([fmt(v) for v in (art.run_id, cfg.algorithm, cfg.feedback, cfg.d, cfg.T, cfg.delta,
                                     cfg.sigma, cfg.r0, cfg.source.kind, len(final),
                                     float(np.mean(final)), std, single)])
    return out


def write_artifacts(art: RunArtifacts, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "checkpoints.csv").write_text(art.csv_text(), encoding="utf-8")
    (out / "summary.csv").write_text(_csv_text(SUMMARY_HEADER, summary_rows([art])), encoding="utf-8")
    if art.trace_rows is not None:
        (out / "trace.csv").write_text(_csv_text(TRACE_HEADER, art.trace_rows), encoding="utf-8")


@dataclass
class SweepSummary:
    key: str
    values: list
    rows: list[list[str]]
    means: list[float]
    stds: list[float]
    slope: Optional[float]


def summarize(artifacts: Sequence[RunArtifacts], key: str = "T") -> SweepSummary:
    """Mean and sample std of final regret per sweep point, plus the log-log
    slope in ``key`` when sweeping the horizon."""
    if not artifacts:
        raise ValueError("nothing to summarize")
    base = artifacts[0].config.to_dict()
    for art in artifacts[1:]:
        other = art.config.to_dict()
        diff = {k for k in base if base[k] != other[k]} - {key, "checkpoints"}
        if diff:
            raise ValueError(f"sweep points differ beyond {key}: {sorted(diff)}")
        if art.config.seeds != artifacts[0].config.seeds:
            raise ValueError("sweep points have different seed counts")
    for art in artifacts:
        if len(art.trials) == 1:
            log.warning("%s=%s has a single seed; std reported as 0", key, getattr(art.config, key))
    rows = summary_rows(artifacts)
    means = [float(np.mean(a.final_regrets())) for a in artifacts]
    stds = [0.0 if len(a.trials) == 1 else float(np.std(a.final_regrets(), ddof=1)) for a in artifacts]
    values = [getattr(a.config, key) for a in artifacts]
    slope = None
    if key == "T" and len(artifacts) >= 4:
        slope = fit_scaling_exponent(list(zip(values, means)))
    return SweepSummary(key, values, rows, means, stds, slope)


def plot_regret(summary: SweepSummary, path, title: str = "") -> None:
    """Log-log line chart of mean final regret against the swept value, as SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "stratapple"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    means = np.array(summary.means)
    stds = np.array(summary.stds)
    ax.errorbar(summary.values, means, yerr=stds, marker="o", capsize=3)
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel(summary.key)
    ax.set_ylabel("mean cumulative expected regret")
    if summary.slope is not None:
        title = f"{title} slope={summary.slope:.3f}".strip()
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def sweep(cfg: ExperimentConfig, key: str, values: Sequence, out_dir=None, threads: int = 1,
          plot: bool = True) -> tuple[list[RunArtifacts], SweepSummary]:
    if not hasattr(cfg, key) or key in ("source", "agent", "theta", "overrides", "checkpoints"):
        raise ConfigError(f"cannot sweep over {key}")
    arts = [run_experiment(cfg.replace(**{key: v}), threads=threads) for v in values]
    summary = summarize(arts, key)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = [row for art in arts for row in art.rows]
        (out / "checkpoints.csv").write_text(_csv_text(CSV_HEADER, rows), encoding="utf-8")
        header = SUMMARY_HEADER + ["slope"]
        srows = [r + [fmt(summary.slope)] for r in summary.rows]
        (out / "summary.csv").write_text(_csv_text(header, srows), encoding="utf-8")
        if plot and len(values) > 1:
            plot_regret(summary, out / "regret.svg", cfg.algorithm)
    return arts, summary


def parse_vary(spec: str) -> tuple[str, list]:
    """``KEY=v1,v2,...`` with integer or float values."""
    if "=" not in spec:
        raise ConfigError(f"--vary expects KEY=v1,v2,..., got {spec!r}")
    key, _, raw = spec.partition("=")
    values = []
    for tok in raw.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            values.append(int(tok))
        except ValueError:
            try:
                values.append(float(tok))
            except ValueError:
                raise ConfigError(f"--vary value {tok!r} is not a number") from None
    if not values:
        raise ConfigError("--vary needs at least one value")
    return key.strip(), values


def trial_median(values) -> float:
    return float(np.median(np.asarray(values, dtype=float)))


def pooled_stderr(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0


@dataclass
class OracleCheck:
    seed: int
    oracle_reward: float
    optimal_reward: float
    algorithm_reward: float
    strategic_regret: float
    stackelberg_regret: float
    slack: float

    @property
    def holds(self) -> bool:
        return self.stackelberg_regret <= self.strategic_regret + self.slack


def oracle_check(cfg: ExperimentConfig, seed: int, grid: int, n_intercepts: int = 64) -> OracleCheck:
    """Compare one trial against the best fixed shifted-linear policy on its contexts."""
    from .environment import mean_rewards
    from .evaluation import oracle_grid_slack, stackelberg_oracle
    from .errors import ScaleGuardError
    from .simulation import build_behavior, build_model, build_source, trial_streams

    if cfg.d > 3 or cfg.T > 10_000:
        raise ScaleGuardError(f"oracle limited to d <= 3 and T <= 10^4, got d={cfg.d}, T={cfg.T}")
    theta_rng, ctx_rng, *_ = trial_streams(seed)
    model = build_model(cfg, theta_rng)
    X = build_source(cfg).sample(ctx_rng, cfg.T)
    oracle = stackelberg_oracle(model, build_behavior(cfg), X, grid, n_intercepts)
    m1, m0 = mean_rewards(model, X)
    best = float(np.maximum(m1, m0).sum())
    result = run_trial(cfg, seed)
    regret = result.rows[-1].cum_regret_expected
    algo = best - regret
    slack = oracle_grid_slack(cfg.d, grid, n_intercepts, cfg.delta) * cfg.T
    return OracleCheck(seed, oracle, best, algo, regret, oracle - algo, slack)
