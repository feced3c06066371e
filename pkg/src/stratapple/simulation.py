"""One seeded trial of the commit / best-respond / act / feedback protocol."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .agent import (AgentBehavior, LinearThresholdPolicy, best_respond, best_respond_block,
                    is_clean, is_clean_block)
from .config import ExperimentConfig, exp3_epsilon
from .environment import (APPLE, BANDIT, ContextSource, NoiseModel, RewardModel, mean_rewards,
                          uniform_sphere)
from .evaluation import RoundLog
from .linalg import min_eigenvalue
from .principal import DoublingTrick, Exp3Sae, ExploreThenCommit, Principal, SaOls

# listener(X, X_prime, actions, observed_rewards) sees every round, in order
Listener = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], None]


@dataclass
class CheckpointRow:
    t: int
    cum_regret_expected: float
    cum_reward_realized: float
    theta1_err: float
    theta0_err: float
    clean_count: int
    lambda_min_ratio: float


@dataclass
class TrialResult:
    seed: int
    model: RewardModel
    rows: list[CheckpointRow]
    principal: Principal
    logs: Optional[list[RoundLog]] = None
    inst_regret: Optional[np.ndarray] = None
    clean: Optional[np.ndarray] = None


def draw_theta(cfg: ExperimentConfig, rng: np.random.Generator) -> tuple[np.ndarray, Optional[np.ndarray]]:
    if cfg.theta.seed is not None:
        rng = np.random.default_rng(cfg.theta.seed)
    theta1 = np.asarray(cfg.theta.theta1, float) if cfg.theta.theta1 is not None else uniform_sphere(rng, 1, cfg.d)[0]
    theta0 = None
    if cfg.feedback == "bandit":
        theta0 = np.asarray(cfg.theta.theta0, float) if cfg.theta.theta0 is not None else uniform_sphere(rng, 1, cfg.d)[0]
    return theta1, theta0


def build_model(cfg: ExperimentConfig, rng: np.random.Generator) -> RewardModel:
    theta1, theta0 = draw_theta(cfg, rng)
    feedback = BANDIT if cfg.feedback == "bandit" else APPLE
    return RewardModel(theta1, theta0, cfg.r0, cfg.sigma, feedback)


def build_source(cfg: ExperimentConfig) -> ContextSource:
    s = cfg.source
    return ContextSource(s.kind, cfg.d, s.c0, s.alt_center, s.alt_radius, s.path, dict(s.params))


def build_behavior(cfg: ExperimentConfig) -> AgentBehavior:
    a = cfg.agent
    return AgentBehavior(cfg.delta, a.mode, a.gamma_th, a.alpha_rule, a.alpha_fixed, a.clip_to_ball)


def build_principal(cfg: ExperimentConfig, rng: np.random.Generator, keep_rows: bool = False) -> Principal:
    bandit = cfg.feedback == "bandit"
    gamma_th = cfg.agent.gamma_th if cfg.agent.mode == "trembling" else 0.0
    common = dict(r0=cfg.r0, bandit=bandit, gamma_th=gamma_th)
    ov = cfg.overrides
    if cfg.algorithm == "sa_ols":
        return SaOls(cfg.d, cfg.delta, keep_rows=keep_rows, **common)
    if cfg.algorithm == "etc":
        return ExploreThenCommit(cfg.d, cfg.delta, cfg.T, cfg.sigma, gamma_fail=cfg.gamma_fail,
                                 T0=ov.T0, **common)
    if cfg.algorithm == "doubling":
        return DoublingTrick(cfg.d, cfg.delta, cfg.T, cfg.sigma, tau_star=ov.tau_star, **common)
    return Exp3Sae(cfg.d, cfg.delta, cfg.T, cfg.sigma, rng, epsilon=exp3_epsilon(cfg), lam=ov.lam,
                   eta=ov.eta, gamma=ov.gamma_exp, grid_cap=ov.grid_cap, **common)


def trial_streams(seed: int):
    """Independent generators for theta, contexts, noise, agents and the learner."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)]


def _err(est, truth):
    if est is None or truth is None:
        return math.nan
    return float(np.linalg.norm(est - truth))


def run_trial(cfg: ExperimentConfig, seed: int, trace: bool = False,
              listener: Optional[Listener] = None, keep_rows: bool = False,
              keep_arrays: bool = False) -> TrialResult:
    """Play ``cfg.T`` rounds with a fresh learner and return checkpoint rows.

    Contexts and reward noise are drawn up front from their own streams, so
    two learners run with the same seed face identical agents.
    """
    theta_rng, ctx_rng, noise_rng, agent_rng, algo_rng = trial_streams(seed)
    model = build_model(cfg, theta_rng)
    source = build_source(cfg)
    behavior = build_behavior(cfg)
    noise = NoiseModel(cfg.sigma, cfg.noise)
    principal = build_principal(cfg, algo_rng, keep_rows=keep_rows)
    T = cfg.T
    bandit = model.bandit
    delta = cfg.delta
    gamma_th = principal.gamma_th
    r0_shift = principal.r0

    X = source.sample(ctx_rng, T)
    eps = noise.draw(noise_rng, T)
    m1_all, m0_all = mean_rewards(model, X)
    opt_all = (m1_all >= m0_all).astype(np.int8)
    gap_all = np.abs(m1_all - m0_all)

    inst = np.zeros(T)
    realized = np.zeros(T)
    clean = np.zeros(T, dtype=bool)
    logs: Optional[list[RoundLog]] = [] if trace else None
    rows: list[CheckpointRow] = []
    checkpoints = sorted(set(cfg.checkpoints) | {T})
    ci = 0
    cum_regret = 0.0
    cum_reward = 0.0
    nan = math.nan

    t = 1
    while t <= T:
        next_cp = checkpoints[ci]
        span = principal.fixed_span(t)
        end = min(t + span - 1, next_cp)
        policy = principal.choose_policy(t)
        if end > t:
            lo, hi = t - 1, end
            Xb = X[lo:hi]
            Xp = best_respond_block(policy, Xb, behavior, agent_rng)
            A = policy.actions(Xp)
            m1, m0 = m1_all[lo:hi], m0_all[lo:hi]
            reg = np.where(A != opt_all[lo:hi], gap_all[lo:hi], 0.0)
            one = A == 1
            rew = np.where(one, m1, m0)
            seen = one | bandit
            rew = rew + np.where(seen, eps[lo:hi], 0.0)
            observed = np.where(seen, rew, nan)
            cl = one & (policy.always_one | is_clean_block(policy, Xp, delta, gamma_th, r0_shift))
            principal.observe_block(Xp, A, observed)
            if listener is not None:
                listener(Xb, Xp, A, observed)
            inst[lo:hi] = reg
            realized[lo:hi] = rew
            clean[lo:hi] = cl
            cum_regret += float(reg.sum())
            cum_reward += float(rew.sum())
            if trace:
                for k in range(hi - lo):
                    logs.append(RoundLog(lo + k + 1, Xb[k], Xp[k], policy.beta, policy.tau,
                                         policy.always_one, policy.always_zero, int(A[k]),
                                         int(opt_all[lo + k]), bool(cl[k]),
                                         None if np.isnan(observed[k]) else float(observed[k]),
                                         float(rew[k]), float(reg[k])))
        else:
            i = t - 1
            x = X[i]
            xp = best_respond(policy, x, behavior, agent_rng)
            a = policy.action(xp)
            reg = gap_all[i] if a != opt_all[i] else 0.0
            if a == 1:
                rew = m1_all[i] + eps[i]
                obs = rew
                cl = policy.always_one or is_clean(policy, xp, delta, gamma_th, r0_shift)
            else:
                cl = False
                if bandit:
                    rew = m0_all[i] + eps[i]
                    obs = rew
                else:
                    rew = m0_all[i]
                    obs = None
            principal.observe(xp, a, obs)
            if listener is not None:
                listener(X[i:i + 1], xp[None, :], np.array([a]), np.array([nan if obs is None else obs]))
            inst[i] = reg
            realized[i] = rew
            clean[i] = cl
            cum_regret += reg
            cum_reward += rew
            if trace:
                logs.append(RoundLog(t, x, xp, policy.beta, policy.tau, policy.always_one,
                                     policy.always_zero, a, int(opt_all[i]), bool(cl), obs,
                                     float(rew), float(reg)))
        if end == next_cp:
            est1, est0 = principal.estimates()
            Xc = X[:end][clean[:end]]
            # the Gram matrix is PSD; clip round-off below zero
            lam = max(min_eigenvalue(Xc.T @ Xc), 0.0) / end if len(Xc) else 0.0
            rows.append(CheckpointRow(end, cum_regret, cum_reward, _err(est1, model.theta1),
                                      _err(est0, model.theta0), int(clean[:end].sum()), lam))
            ci += 1
        t = end + 1

    result = TrialResult(seed, model, rows, principal, logs)
    if keep_arrays:
        result.inst_regret = inst
        result.clean = clean
    return result
