"""The eleven acceptance criteria at their stated scales and tolerances.

Each test records a one-line verdict; the lines are repeated together in the
pytest terminal summary under "acceptance criteria".
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from stratapple.config import config_from_dict
from stratapple.evaluation import (c1_lower_bound, c2_lower_bound, estimate_c1, estimate_c2,
                                   fit_scaling_exponent, fixed_policy_clean_flags,
                                   inconsistency_over_seeds)
from stratapple.harness import oracle_check, run_experiment
from stratapple.simulation import run_trial

pytestmark = pytest.mark.acceptance

ENV = dict(d=2, delta=0.2, sigma=0.1, r0=0.0)


def pooled_stderr(values):
    v = np.asarray(values, dtype=float)
    return float(v.std(ddof=1) / math.sqrt(len(v)))


@pytest.fixture(scope="module")
def sa_ols_runs():
    horizons = [2**k for k in range(12, 18)]
    cfg = config_from_dict(dict(ENV, algorithm="sa_ols", T=2**17, seeds=20,
                                checkpoints=[2**k for k in range(10, 18)]))
    start = time.perf_counter()
    art = run_experiment(cfg)
    return art, horizons, time.perf_counter() - start


def test_criterion_01_sa_ols_rate(sa_ols_runs, verdict):
    art, horizons, elapsed = sa_ols_runs
    means = [float(art.regret_at(T).mean()) for T in horizons]
    slope = fit_scaling_exponent(list(zip(horizons, means)))
    ok = 0.35 <= slope <= 0.65 and elapsed <= 120
    curve = ", ".join(f"{m:.3f}" for m in means)
    assert verdict(1, ok, f"SA-OLS slope {slope:.3f} (window [0.35, 0.65]); mean regret {curve}; "
                          f"{elapsed:.0f}s"), f"slope {slope:.3f}"


def test_criterion_02_etc_rate(verdict):
    horizons = [2**k for k in range(13, 19)]
    start = time.perf_counter()
    means = [float(run_experiment(config_from_dict(dict(ENV, algorithm="etc", T=T, seeds=20)))
                   .final_regrets().mean()) for T in horizons]
    elapsed = time.perf_counter() - start
    slope = fit_scaling_exponent(list(zip(horizons, means)))
    ok = 0.60 <= slope <= 0.80 and elapsed <= 120
    assert verdict(2, ok, f"ETC slope {slope:.3f} (window [0.60, 0.80]); {elapsed:.0f}s")


def test_criterion_03_exp3_sublinear(verdict):
    horizons = [2**k for k in range(13, 17)]
    start = time.perf_counter()
    finals = np.array([run_experiment(config_from_dict(dict(ENV, algorithm="exp3_sae", T=T, seeds=10)))
                       .final_regrets() for T in horizons])  # (horizon, seed)
    elapsed = time.perf_counter() - start
    slope = fit_scaling_exponent(list(zip(horizons, finals.mean(axis=1))))
    per_seed = [fit_scaling_exponent(list(zip(horizons, finals[:, s]))) for s in range(finals.shape[1])]
    se = pooled_stderr(per_seed)
    ok = 0.55 <= slope <= 0.95 and 1 - slope >= 3 * se and elapsed <= 600
    assert verdict(3, ok, f"EXP3-SAE slope {slope:.3f} (window [0.55, 0.95]), per-seed stderr "
                          f"{se:.3f}, margin below 1 = {(1 - slope) / se:.1f} stderr; {elapsed:.0f}s")


def test_criterion_04_doubling_hybrid(verdict):
    base = dict(ENV, delta=0.5, seeds=10)
    dbl = dict(base, algorithm="doubling")
    early = run_experiment(config_from_dict(dict(dbl, T=2**12))).final_regrets().mean()
    # the ETC branch alone: the same doubling schedule that never hands over
    pure_etc = run_experiment(config_from_dict(dict(dbl, T=2**12, overrides={"tau_star": 2**40}))
                              ).final_regrets().mean()
    late_art = run_experiment(config_from_dict(dict(dbl, T=2**17)))
    late = late_art.final_regrets().mean()
    sa_ols = run_experiment(config_from_dict(dict(base, algorithm="sa_ols", T=2**17))).final_regrets().mean()
    switch = late_art.trials[0].principal.switch_round
    first = abs(early - pure_etc) <= 0.05 * pure_etc
    second = late <= 2 * sa_ols
    assert verdict(4, first and second,
                   f"T=2^12 doubling {early:.2f} vs ETC branch {pure_etc:.2f} ({'ok' if first else 'off'}); "
                   f"T=2^17 doubling {late:.2f} vs SA-OLS {sa_ols:.2f}, ratio {late / sa_ols:.0f} "
                   f"({'ok' if second else 'above 2x'}); switch at t={switch}")


def test_criterion_05_estimation_consistency(sa_ols_runs, verdict):
    art, _, _ = sa_ols_runs
    e14 = float(np.median(art.metric_at(2**14, "theta1_err")))
    e16 = float(np.median(art.metric_at(2**16, "theta1_err")))
    assert verdict(5, e16 <= 0.7 * e14, f"median error {e16:.4g} at 2^16 vs {e14:.4g} at 2^14 "
                                        f"(ratio {e16 / e14:.3f}, need <= 0.7)")


def test_criterion_06_zero_noise(verdict):
    cfg = config_from_dict(dict(ENV, algorithm="sa_ols", T=2**12, sigma=0.0))
    res = run_trial(cfg, 0, keep_arrays=True)
    exact = [r.t for r in res.rows if r.theta1_err <= 1e-8]
    first = exact[0] if exact else None
    tail = float(res.inst_regret[first:].max()) if first else math.inf
    ok = first is not None and all(r.theta1_err <= 1e-8 for r in res.rows if r.t >= first) and tail == 0.0
    assert verdict(6, ok, f"error <= 1e-8 from t={first}, max later per-round regret {tail:g}")


def test_criterion_07_clean_fraction(verdict):
    worst = 0.0
    for d in (2, 4):
        for delta in (0.1, 0.3):
            c1, c1_se = estimate_c1(d, delta, 1_000_000, np.random.default_rng(1000 + d))
            for seq in range(5):
                flags = fixed_policy_clean_flags(d, delta, 100_000, np.random.default_rng([d, int(delta * 10), seq]))
                se = math.sqrt(c1 * (1 - c1) / len(flags))
                worst = max(worst, abs(flags.mean() - c1) / math.hypot(se, c1_se))
    assert verdict(7, worst <= 3, f"largest |clean fraction - c1| = {worst:.2f} combined stderr (20 cases)")


def test_criterion_08_constant_bounds(verdict):
    worst = math.inf
    rng = np.random.default_rng(8)
    for d in (2, 4, 8):
        for delta in (0.1, 0.3, 0.5):
            c1, s1 = estimate_c1(d, delta, 1_000_000, rng)
            c2, s2 = estimate_c2(d, delta, 1_000_000, rng)
            worst = min(worst, (c1 - c1_lower_bound(d, delta)) / s1, (c2 - c2_lower_bound(d, delta)) / s2)
    assert verdict(8, worst >= -3, f"smallest (MC - bound) margin {worst:.1f} stderr over 9 (d, delta) pairs")


# median all-data / clean-only error ratio from the first full run, kept as a regression value
INCONSISTENCY_RATIO = 26.97708419449025


@pytest.fixture(scope="module")
def inconsistency_errors():
    cfg = config_from_dict(dict(ENV, algorithm="sa_ols", delta=0.3, T=2**15, seeds=20))
    return inconsistency_over_seeds(cfg)


def test_inconsistency_ratio_regression(inconsistency_errors):
    clean, full = np.median(inconsistency_errors, axis=0)
    assert full / clean == pytest.approx(INCONSISTENCY_RATIO, rel=1e-6)


def test_criterion_09_ols_inconsistency(inconsistency_errors, verdict):
    clean, full = np.median(inconsistency_errors, axis=0)
    ok = full >= 3 * clean and clean <= 0.05
    assert verdict(9, ok, f"median clean-only {clean:.4f}, all-data {full:.4f}, ratio {full / clean:.1f}")


def test_criterion_10_stackelberg_inequality(verdict):
    cfg = config_from_dict(dict(ENV, algorithm="sa_ols", T=1000))
    checks = [oracle_check(cfg, seed, 720) for seed in range(5)]
    ok = all(c.holds for c in checks)
    worst = max(c.stackelberg_regret - c.strategic_regret for c in checks)
    assert verdict(10, ok, f"max (Stackelberg - strategic) regret {worst:.4f} vs slack {checks[0].slack:.1f}")


PROPERTY_SUITES = [
    "tests/test_agent.py::test_geometry_invariants_10k",
    "tests/test_agent.py::test_clean_inference_soundness",
    "tests/test_simulation.py::test_sa_ols_dataset_holds_only_original_contexts",
    "tests/test_principal.py::test_exp3_distribution_invariants_every_update",
    "tests/test_principal.py::test_loss_estimator_unbiased_mc",
    "tests/test_harness_cli.py::test_rerun_byte_identical",
]


def test_criterion_11_property_suites(verdict):
    root = Path(__file__).resolve().parent.parent
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *PROPERTY_SUITES],
                          cwd=root, capture_output=True, text=True)
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    assert verdict(11, proc.returncode == 0, f"property suites: {tail}"), proc.stdout
