"""Online learners for the principal.

All learners share one protocol, driven by :mod:`stratapple.simulation`::

    policy = learner.choose_policy(t)
    ...agent best-responds, principal acts...
    learner.observe(x_prime, action, reward)

``fixed_span(t)`` tells the driver for how many rounds starting at ``t`` the
committed policy stays constant and observations may be fed in one batch
through ``observe_block``; learners that adapt every round return 1.
"""

from __future__ import annotations

import itertools
import logging
import math
from typing import Optional

import numpy as np

from .agent import LinearThresholdPolicy, is_clean
from .errors import ConfigError, ProtocolError
from .linalg import LeastSquaresAccumulator

log = logging.getLogger(__name__)

GRID_CAP = 10**6


def etc_exploration_length(d: int, T: int, sigma: float, gamma_fail: float) -> int:
    """Exploration rounds for explore-then-commit, clamped to ``[2d, T]``."""
    if T < 1:
        raise ValueError("T must be positive")
    if not 0 < gamma_fail < 1:
        raise ValueError("gamma_fail must lie in (0, 1)")
    raw = (4 * 63 ** (1 / 3) * sigma ** (2 / 3) * d * T ** (2 / 3)
           * math.log(4 * d / gamma_fail) ** (1 / 3))
    T0 = max(math.ceil(raw), 2 * d)
    return int(min(T0, T))


def doubling_switch_time(d: int, delta: float, T: int) -> int:
    """Round budget after which the doubling scheme hands over to SA-OLS.

    Crossover of ``d T^(2/3)`` and ``d^(5/2) (1-delta)^(-d/2) sqrt(T)``,
    i.e. ``d^9 (1-delta)^(-3d)``, capped at ``T``.
    """
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    log_value = 9 * math.log(d) - 3 * d * math.log1p(-delta)
    if log_value >= math.log(T):
        return int(T)
    value = d**9 * (1 - delta) ** (-3 * d)
    # relative guard so exact products like 2^15 do not round up
    return int(min(T, math.ceil(value * (1 - 1e-12))))


def grid_shape(d: int, epsilon: float) -> tuple[float, int]:
    if not 0 < epsilon <= 1:
        raise ConfigError("epsilon must lie in (0, 1]")
    h = 2 * epsilon / math.sqrt(d)
    per_axis = math.ceil(2 / h - 1e-9)
    return h, per_axis


def build_policy_grid(d: int, epsilon: float, cap: int = GRID_CAP) -> np.ndarray:
    """Slope vectors covering every unit vector within l2 distance ``epsilon``.

    Axis-aligned grid over ``[-1, 1]^d`` with pitch ``2 epsilon / sqrt(d)``;
    returned as an ``(|E|, d)`` array.
    """
    h, m = grid_shape(d, epsilon)
    size = m**d
    if size > cap:
        raise ConfigError(f"policy grid has {size} points, above the cap of {cap}")
    coords = -1 + h / 2 + h * np.arange(m)
    return np.array(list(itertools.product(coords, repeat=d)), dtype=float).reshape(size, d)


class Principal:
    name = "base"

    def __init__(self, d: int, delta: float, r0: float = 0.0, bandit: bool = False,
                 gamma_th: float = 0.0):
        self.d = d
        self.delta = delta
        self.r0 = 0.0 if bandit else r0
        self.bandit = bandit
        self.gamma_th = gamma_th
        self.policy: Optional[LinearThresholdPolicy] = None
        self.fallbacks = 0

    def shifted_policy(self, beta: np.ndarray) -> LinearThresholdPolicy:
        if not float(beta @ beta) > 0.0:
            self.fallbacks += 1
            log.debug("zero slope estimate, assigning action 1")
            return LinearThresholdPolicy.one()
        return LinearThresholdPolicy.shifted(beta, self.delta, self.r0)

    def _check_reward(self, action: int, reward) -> None:
        needs = self.bandit or action == 1
        if needs and reward is None:
            raise ProtocolError(f"reward missing for action {action}")
        if not needs and reward is not None:
            raise ProtocolError("apple-tasting feedback reveals no reward for action 0")

    def fixed_span(self, t: int) -> int:
        return 1

    def choose_policy(self, t: int) -> LinearThresholdPolicy:
        raise NotImplementedError

    def observe(self, x_prime: np.ndarray, action: int, reward: Optional[float]) -> None:
        raise NotImplementedError

    def observe_block(self, X_prime: np.ndarray, actions: np.ndarray, rewards: np.ndarray) -> None:
        for x, a, r in zip(X_prime, actions, rewards):
            self.observe(x, int(a), None if np.isnan(r) else float(r))

    def estimates(self) -> tuple[np.ndarray, Optional[np.ndarray]]:
        raise NotImplementedError


class SaOls(Principal):
    """Greedy OLS on clean contexts behind a boundary shifted by the effort budget.

    Bootstraps with ``d`` rounds of action 1 (then ``d`` of action 0 under
    bandit feedback); afterwards a round enters the action-1 dataset only if
    the reported context is strictly above the shifted boundary.
    """

    name = "sa_ols"

    def __init__(self, d, delta, r0=0.0, bandit=False, gamma_th=0.0, keep_rows=True):
        super().__init__(d, delta, r0, bandit, gamma_th)
        self.data1 = LeastSquaresAccumulator(d, keep_rows)
        self.data0 = LeastSquaresAccumulator(d, keep_rows) if bandit else None
        self.bootstrap = 2 * d if bandit else d
        self._cached = None
        self._cache_key = None

    def fixed_span(self, t):
        if t <= self.d:
            return self.d - t + 1
        if t <= self.bootstrap:
            return self.bootstrap - t + 1
        return 1

    def slope(self) -> np.ndarray:
        theta1 = self.data1.solve()
        if self.bandit:
            return theta1 - self.data0.solve()
        return theta1

    def choose_policy(self, t):
        if t <= self.d:
            self.policy = LinearThresholdPolicy.one()
        elif t <= self.bootstrap:
            self.policy = LinearThresholdPolicy.zero()
        else:
            key = (self.data1.count, self.data0.count if self.bandit else 0)
            if key != self._cache_key:
                self._cached = self.shifted_policy(self.slope())
                self._cache_key = key
            self.policy = self._cached
        return self.policy

    def observe(self, x_prime, action, reward):
        self._check_reward(action, reward)
        policy = self.policy
        if action == 1:
            if policy.always_one or is_clean(policy, x_prime, self.delta, self.gamma_th, self.r0):
                self.data1.add(x_prime, reward)
        elif self.bandit:
            self.data0.add(x_prime, reward)

    def observe_block(self, X_prime, actions, rewards):
        policy = self.policy
        if not policy.constant:
            return super().observe_block(X_prime, actions, rewards)
        if policy.always_one:
            self._check_block(actions, rewards, 1)
            self.data1.add_block(X_prime, rewards)
        else:
            self._check_block(actions, rewards, 0)
            if self.bandit:
                self.data0.add_block(X_prime, rewards)

    def _check_block(self, actions, rewards, expected):
        if np.any(actions != expected):
            raise ProtocolError("constant policy produced a mixed action block")
        if (self.bandit or expected == 1) and np.any(np.isnan(rewards)):
            raise ProtocolError("reward missing in block")

    def estimates(self):
        return self.data1.solve(), (self.data0.solve() if self.bandit else None)

    @property
    def datasets(self):
        return self.data1, self.data0


class ExploreThenCommit(Principal):
    """Action 1 for ``T0`` rounds (plus ``T0`` rounds of action 0 under bandit
    feedback), then the shifted policy of the exploration OLS fit forever."""

    name = "etc"

    def __init__(self, d, delta, T, sigma, r0=0.0, bandit=False, gamma_th=0.0,
                 gamma_fail=0.05, T0=None):
        super().__init__(d, delta, r0, bandit, gamma_th)
        self.T = T
        self.T0 = int(T0) if T0 is not None else etc_exploration_length(d, T, sigma, gamma_fail)
        self.explore_one = min(self.T0, T)
        self.explore_end = min(2 * self.T0, T) if bandit else self.explore_one
        self.data1 = LeastSquaresAccumulator(d, keep_rows=False)
        self.data0 = LeastSquaresAccumulator(d, keep_rows=False) if bandit else None
        self.committed: Optional[LinearThresholdPolicy] = None

    def phase(self, t: int) -> str:
        return "explore" if t <= self.explore_end else "commit"

    def fixed_span(self, t):
        if t <= self.explore_one:
            return self.explore_one - t + 1
        if t <= self.explore_end:
            return self.explore_end - t + 1
        return max(self.T - t + 1, 1)

    def choose_policy(self, t):
        if t <= self.explore_one:
            self.policy = LinearThresholdPolicy.one()
        elif t <= self.explore_end:
            self.policy = LinearThresholdPolicy.zero()
        else:
            if self.committed is None:
                theta1, theta0 = self.estimates()
                beta = theta1 - theta0 if self.bandit else theta1
                self.committed = self.shifted_policy(beta)
            self.policy = self.committed
        return self.policy

    def observe(self, x_prime, action, reward):
        self._check_reward(action, reward)
        if self.committed is not None:
            return
        if action == 1:
            self.data1.add(x_prime, reward)
        elif self.bandit:
            self.data0.add(x_prime, reward)

    def observe_block(self, X_prime, actions, rewards):
        if self.committed is not None:
            if not self.bandit and np.any(np.isnan(rewards[actions == 1])):
                raise ProtocolError("reward missing for action 1")
            return
        if self.policy.always_one:
            self.data1.add_block(X_prime, rewards)
        elif self.policy.always_zero and self.bandit:
            self.data0.add_block(X_prime, rewards)
        else:
            super().observe_block(X_prime, actions, rewards)

    def estimates(self):
        return self.data1.solve(), (self.data0.solve() if self.bandit else None)


class DoublingTrick(Principal):
    """Explore-then-commit restarted on epochs of length 2, 4, 8, ... with
    failure probability ``1/len^2``, handing over to a fresh SA-OLS for the
    rest of the run once the cumulative epoch budget would reach
    ``tau_star``."""

    name = "doubling"

    def __init__(self, d, delta, T, sigma, r0=0.0, bandit=False, gamma_th=0.0, tau_star=None):
        super().__init__(d, delta, r0, bandit, gamma_th)
        self.T = T
        self.sigma = sigma
        self.tau_star = int(tau_star) if tau_star is not None else doubling_switch_time(d, delta, T)
        self.epochs: list[tuple[int, int]] = []
        self.budget = 0
        self.switch_round: Optional[int] = None
        self.inner: Optional[Principal] = None
        self._r0 = r0
        self._epoch_start = 1
        self._epoch_len = 0

    def _advance(self, t):
        if self.switch_round is not None:
            return
        if self.inner is not None and t < self._epoch_start + self._epoch_len:
            return
        length = 2 * (self._epoch_len or 1)
        if self.budget + length < self.tau_star:
            self.budget += length
            self._epoch_start, self._epoch_len = t, length
            self.epochs.append((t, length))
            self.inner = ExploreThenCommit(self.d, self.delta, length, self.sigma, self._r0,
                                           self.bandit, self.gamma_th, gamma_fail=1 / length**2)
        else:
            self.switch_round = t
            self._epoch_start = t
            self.inner = SaOls(self.d, self.delta, self._r0, self.bandit, self.gamma_th, keep_rows=False)

    def _local(self, t):
        return t - self._epoch_start + 1

    def fixed_span(self, t):
        self._advance(t)
        span = self.inner.fixed_span(self._local(t))
        if self.switch_round is None:
            span = min(span, self._epoch_start + self._epoch_len - t)
        return max(span, 1)

    def choose_policy(self, t):
        self._advance(t)
        self.policy = self.inner.choose_policy(self._local(t))
        return self.policy

    def observe(self, x_prime, action, reward):
        self.inner.observe(x_prime, action, reward)

    def observe_block(self, X_prime, actions, rewards):
        self.inner.observe_block(X_prime, actions, rewards)

    def estimates(self):
        return self.inner.estimates()


def importance_weighted_loss(q: np.ndarray, chosen: int, reward: float, lam: float) -> np.ndarray:
    """Loss estimate charged only to the sampled expert, scaled by its probability."""
    loss = np.zeros(len(q))
    loss[chosen] = (1.0 + lam - reward) / q[chosen]
    return loss


class Exp3Sae(Principal):
    """Exponential weights over a grid of strategy-aware threshold policies.

    Each expert ``e`` deploys the boundary ``<e, x'> >= delta ||e||`` (plus
    ``r0`` under apple tasting). Only the sampled expert's loss is updated,
    since counterfactual reports under other experts are unobservable.
    """

    name = "exp3_sae"

    def __init__(self, d, delta, T, sigma, rng: np.random.Generator, r0=0.0, bandit=False,
                 gamma_th=0.0, epsilon=None, lam=None, eta=None, gamma=None, grid_cap=GRID_CAP):
        super().__init__(d, delta, r0, bandit, gamma_th)
        self.T = T
        self.rng = rng
        if epsilon is None:
            if sigma <= 0 or T < 2:
                raise ConfigError("default epsilon needs sigma > 0 and T >= 2")
            epsilon = min(1.0, (d * sigma * math.log(T) / T) ** (1 / (d + 2)))
        self.epsilon = float(epsilon)
        self.grid = build_policy_grid(d, self.epsilon, grid_cap)
        n = len(self.grid)
        if lam is None:
            lam = sigma * math.sqrt(2 * math.log(T))
        self.lam = float(lam)
        if eta is None:
            if self.lam <= 0:
                raise ConfigError("learning rate needs lambda > 0")
            eta = math.sqrt(math.log(n) / (T * self.lam**2 * n)) if n > 1 else 0.0
        self.eta = float(eta)
        if gamma is None:
            gamma = 2 * self.eta * self.lam * n
        self.gamma = float(min(1.0, gamma))
        self.weights = np.ones(n)
        self.total = float(n)
        self.chosen = -1
        self.q_chosen = 0.0
        self._policies: dict[int, LinearThresholdPolicy] = {}

    @property
    def size(self) -> int:
        return len(self.grid)

    def probabilities(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    def sampling_distribution(self) -> np.ndarray:
        return (1 - self.gamma) * self.probabilities() + self.gamma / self.size

    def expert_policy(self, i: int) -> LinearThresholdPolicy:
        pol = self._policies.get(i)
        if pol is None:
            pol = self.shifted_policy(self.grid[i])
            self._policies[i] = pol
        return pol

    def choose_policy(self, t):
        n = self.size
        if self.rng.random() < self.gamma:
            i = int(self.rng.integers(n))
        else:
            cum = np.cumsum(self.weights)
            i = int(np.searchsorted(cum, self.rng.random() * cum[-1], side="right"))
            i = min(i, n - 1)
            self.total = float(cum[-1])
        self.chosen = i
        self.q_chosen = (1 - self.gamma) * self.weights[i] / self.total + self.gamma / n
        self.policy = self.expert_policy(i)
        return self.policy

    def observe(self, x_prime, action, reward):
        self._check_reward(action, reward)
        r = reward if reward is not None else self.r0
        loss = (1.0 + self.lam - r) / self.q_chosen
        self.weights[self.chosen] *= math.exp(-self.eta * loss)
        self.total = float(self.weights.sum())
        if self.total < 1e-200 or self.total > 1e200:
            self.weights /= self.total
            self.total = 1.0

    def estimates(self):
        if self.bandit:
            # the grid lives in the space of theta1 - theta0
            return None, None
        return self.grid[int(np.argmax(self.weights))], None
