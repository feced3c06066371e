"""Regret accounting, the Stackelberg benchmark, and Monte-Carlo constants."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .agent import AgentBehavior, LinearThresholdPolicy, best_respond_block, is_clean_block
from .environment import RewardModel, expected_reward, mean_rewards, uniform_ball
from .errors import InsufficientSamplesError, ScaleGuardError
from .linalg import min_eigenvalue

log = logging.getLogger(__name__)

MC_CHUNK = 1 << 17


@dataclass
class RoundLog:
    t: int
    x: np.ndarray
    x_prime: np.ndarray
    beta: Optional[np.ndarray]
    tau: float
    always_one: bool
    always_zero: bool
    action: int
    optimal_action: int
    clean: bool
    observed_reward: Optional[float]
    realized_reward: float
    inst_regret: float


def optimal_action(model: RewardModel, x: np.ndarray) -> int:
    """Best action on the true context; ties go to action 1."""
    if model.bandit:
        return int(float((model.theta1 - model.theta0) @ x) >= 0.0)
    return int(float(model.theta1 @ x) >= model.r0)


def instantaneous_regret(model: RewardModel, action: int, x: np.ndarray) -> float:
    m1 = expected_reward(model, 1, x)
    m0 = expected_reward(model, 0, x)
    return max(m1, m0) - (m1 if action == 1 else m0)


def cumulative_strategic_regret(logs: Sequence[RoundLog]) -> float:
    return float(sum(entry.inst_regret for entry in logs))


# ---------------------------------------------------------------------------
# Stackelberg benchmark

def slope_grid(d: int, resolution: int) -> np.ndarray:
    """Unit slope directions: both signs for d=1, an angular grid for d=2,
    a Fibonacci sphere for d=3."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        angle = 2 * np.pi * np.arange(resolution) / resolution
        return np.column_stack([np.cos(angle), np.sin(angle)])
    k = np.arange(resolution) + 0.5
    z = 1 - 2 * k / resolution
    r = np.sqrt(1 - z * z)
    phi = np.pi * (1 + math.sqrt(5)) * k
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def stackelberg_oracle(model: RewardModel, behavior: AgentBehavior, contexts: np.ndarray,
                       grid_resolution: int, n_intercepts: int = 64) -> float:
    """Best cumulative expected reward of a fixed shifted-linear policy
    against agents who best-respond to it.

    Searches unit slopes from :func:`slope_grid` times ``n_intercepts``
    intercepts spread over ``[-1 - delta, 1 + delta]``. An agent obtains
    action 1 iff ``<u, x> >= tau - delta``, whatever its tie-breaking.
    """
    X = np.atleast_2d(np.asarray(contexts, dtype=float))
    T, d = X.shape
    if d > 3 or T > 10_000:
        raise ScaleGuardError(f"oracle limited to d <= 3 and T <= 10^4, got d={d}, T={T}")
    delta = behavior.delta
    m1, m0 = mean_rewards(model, X)
    gain = m1 - m0
    base = float(m0.sum())
    U = slope_grid(d, grid_resolution)
    taus = np.linspace(-1 - delta, 1 + delta, n_intercepts)
    best = -np.inf
    for start in range(0, len(U), 64):
        S = X @ U[start:start + 64].T
        for tau in taus:
            total = gain @ (S >= tau - delta)
            best = max(best, float(total.max()))
    return base + best


def oracle_grid_slack(d: int, grid_resolution: int, n_intercepts: int, delta: float) -> float:
    """Per-round reward slack of the oracle's discretization."""
    if d == 1:
        angular = 0.0
    elif d == 2:
        angular = math.pi / grid_resolution
    else:
        angular = math.sqrt(4 * math.pi / grid_resolution)
    return angular + (2 + 2 * delta) / (n_intercepts - 1)


# ---------------------------------------------------------------------------
# constants c1 and c2

def _chunks(n: int, rng: np.random.Generator):
    sizes = [MC_CHUNK] * (n // MC_CHUNK)
    if n % MC_CHUNK:
        sizes.append(n % MC_CHUNK)
    return zip(sizes, rng.spawn(len(sizes)))


def estimate_c1(d: int, delta: float, n_samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte-Carlo ``P(x[1] >= delta)`` for ``x`` uniform on the unit ball."""
    if n_samples < 1000:
        raise ValueError("estimate_c1 needs at least 1000 samples")
    hits = 0
    for size, child in _chunks(n_samples, rng):
        hits += int(np.count_nonzero(uniform_ball(child, size, d)[:, 0] >= delta))
    p = hits / n_samples
    return p, math.sqrt(p * (1 - p) / n_samples)


def c1_lower_bound(d: int, delta: float) -> float:
    """Closed-form lower bound on the cap probability via the cap volume."""
    if delta >= 1:
        return 0.0
    logv = ((d + 1) / 2 * math.log1p(-delta) - math.log(math.sqrt(math.pi) * (d + 1))
            + math.lgamma(d / 2 + 1) - math.lgamma(d / 2 + 0.5))
    return math.exp(logv)


def estimate_c2(d: int, delta: float, n_samples: int, rng: np.random.Generator,
                min_hits: int = 1000) -> tuple[float, float]:
    """Monte-Carlo ``E[x[2]^2 | x[1] >= delta]`` for ``x`` uniform on the unit ball."""
    if d < 2:
        raise ValueError("c2 needs d >= 2")
    total = 0.0
    total_sq = 0.0
    hits = 0
    for size, child in _chunks(n_samples, rng):
        X = uniform_ball(child, size, d)
        v = X[X[:, 0] >= delta, 1] ** 2
        hits += len(v)
        total += float(v.sum())
        total_sq += float((v * v).sum())
    if hits < min_hits:
        raise InsufficientSamplesError(
            f"only {hits} of {n_samples} samples satisfy x[1] >= {delta}; need {min_hits}")
    mean = total / hits
    var = max(total_sq / hits - mean * mean, 0.0) * hits / (hits - 1)
    return mean, math.sqrt(var / hits)


def c2_lower_bound(d: int, delta: float) -> float:
    return (0.75 - delta / 2 - delta * delta / 4) ** 3 / (3 * d)


@dataclass
class ConstantsReport:
    d: int
    delta: float
    c1_mc: float
    c1_stderr: float
    c1_lower_bound: float
    c2_mc: float
    c2_stderr: float
    c2_lower_bound: float
    samples: int


def constants_report(d: int, delta: float, n_samples: int, rng: np.random.Generator) -> ConstantsReport:
    c1_rng, c2_rng = rng.spawn(2)
    c1, c1_se = estimate_c1(d, delta, n_samples, c1_rng)
    c2, c2_se = estimate_c2(d, delta, n_samples, c2_rng)
    return ConstantsReport(d, delta, c1, c1_se, c1_lower_bound(d, delta),
                           c2, c2_se, c2_lower_bound(d, delta), n_samples)


# ---------------------------------------------------------------------------
# statistics over logs

def min_eigen_track(logs: Sequence[RoundLog], checkpoints: Optional[Sequence[int]] = None):
    """``(t, lambda_min(sum of x x^T over clean rounds up to t) / t)`` per checkpoint."""
    if not logs:
        return []
    d = len(logs[0].x)
    T = logs[-1].t
    if checkpoints is None:
        checkpoints = [1 << k for k in range(T.bit_length()) if (1 << k) <= T]
    wanted = set(checkpoints)
    S = np.zeros((d, d))
    any_clean = False
    out = []
    for entry in logs:
        if entry.clean:
            S += np.outer(entry.x, entry.x)
            any_clean = True
        if entry.t in wanted:
            out.append((entry.t, min_eigenvalue(S) / entry.t if any_clean else 0.0))
    return out


def clean_fraction(logs: Sequence[RoundLog]) -> float:
    if not logs:
        return 0.0
    return sum(1 for entry in logs if entry.clean) / len(logs)


def fixed_policy_clean_flags(d: int, delta: float, T: int, rng: np.random.Generator,
                             n_policies: int = 100, r0: float = 0.0) -> np.ndarray:
    """Clean flags for ``T`` uniform-ball agents facing a seeded sequence of
    shifted policies with random slopes, each held for ``T / n_policies`` rounds."""
    behavior = AgentBehavior(delta)
    X = uniform_ball(rng, T, d)
    flags = np.zeros(T, dtype=bool)
    edges = np.linspace(0, T, n_policies + 1).astype(int)
    for lo, hi in zip(edges[:-1], edges[1:]):
        beta = rng.standard_normal(d) * rng.uniform(0.2, 2.0)
        pol = LinearThresholdPolicy.shifted(beta, delta, r0)
        Xp = best_respond_block(pol, X[lo:hi], behavior)
        flags[lo:hi] = (pol.actions(Xp) == 1) & is_clean_block(pol, Xp, delta, 0.0, r0)
    return flags


def fit_scaling_exponent(points) -> float:
    """Least-squares slope of ``log(regret)`` against ``log(T)``."""
    pts = [(float(T), float(r)) for T, r in points]
    usable = [(T, r) for T, r in pts if T > 0 and r > 0]
    if len(usable) < len(pts):
        log.warning("dropped %d nonpositive points from the scaling fit", len(pts) - len(usable))
    if len(usable) < 4:
        raise ValueError(f"scaling fit needs at least 4 positive points, got {len(usable)}")
    lt = np.log([T for T, _ in usable])
    lr = np.log([r for _, r in usable])
    slope, _ = np.polyfit(lt, lr, 1)
    return float(slope)


# ---------------------------------------------------------------------------
# clean-only versus all-data estimation

def ols_inconsistency_demo(config, seed: Optional[int] = None) -> tuple[float, float]:
    """Final ``||theta_hat - theta1||`` for two estimators fed by one SA-OLS run.

    The learner's own estimate uses clean rounds only. The second estimator
    regresses on every reported context ``x'`` that received action 1, which
    includes agents who moved onto the boundary.
    """
    from .linalg import LeastSquaresAccumulator
    from .simulation import run_trial

    if config.algorithm != "sa_ols":
        config = config.replace(algorithm="sa_ols")
    seed = config.base_seed if seed is None else seed
    acc = LeastSquaresAccumulator(config.d, keep_rows=False)

    def listener(X, Xp, A, observed):
        one = A == 1
        if one.any():
            acc.add_block(Xp[one], observed[one])

    result = run_trial(config, seed, listener=listener)
    theta1 = result.model.theta1
    est_clean, _ = result.principal.estimates()
    err_clean = float(np.linalg.norm(est_clean - theta1))
    err_all = float(np.linalg.norm(acc.solve() - theta1))
    return err_clean, err_all


def inconsistency_over_seeds(config) -> np.ndarray:
    """Rows ``(err_clean_only, err_all_data)``, one per seed of ``config``."""
    seeds = [config.base_seed + i for i in range(config.seeds)]
    return np.array([ols_inconsistency_demo(config, s) for s in seeds])
