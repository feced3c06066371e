"""Strategic agents best-responding to a committed linear threshold policy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# Boundary comparisons allow this much absolute slack (scaled by the policy
# size) so that an agent who stops on the boundary is assigned action 1 but
# is never mistaken for a clean context because of rounding.
BOUNDARY_TOL = 1e-12

ALPHA_RULES = ("fixed", "uniform_random", "adversarial_max")


class PolicyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LinearThresholdPolicy:
    """Action 1 iff ``<beta, x'> >= tau``, unless a constant override is set."""

    beta: Optional[np.ndarray]
    tau: float = 0.0
    always_one: bool = False
    always_zero: bool = False
    beta_norm: float = field(init=False, default=0.0)
    tol: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.always_one and self.always_zero:
            raise PolicyError("a policy cannot be both always_one and always_zero")
        if self.beta is not None:
            beta = np.asarray(self.beta, dtype=float)
            object.__setattr__(self, "beta", beta)
            norm = math.sqrt(float(beta @ beta))
            object.__setattr__(self, "beta_norm", norm)
            object.__setattr__(self, "tol", BOUNDARY_TOL * max(1.0, abs(self.tau), norm))
        if not (self.always_one or self.always_zero) and self.beta_norm == 0.0:
            raise PolicyError("threshold policy with zero slope has no direction")

    @classmethod
    def one(cls) -> "LinearThresholdPolicy":
        return cls(None, 0.0, always_one=True)

    @classmethod
    def zero(cls) -> "LinearThresholdPolicy":
        return cls(None, 0.0, always_zero=True)

    @classmethod
    def shifted(cls, beta: np.ndarray, delta: float, shift: float = 0.0) -> "LinearThresholdPolicy":
        """Threshold raised by ``delta * ||beta||`` above ``shift``."""
        beta = np.asarray(beta, dtype=float)
        return cls(beta, delta * math.sqrt(float(beta @ beta)) + shift)

    @property
    def constant(self) -> bool:
        return self.always_one or self.always_zero

    def action(self, x_prime: np.ndarray) -> int:
        if self.always_one:
            return 1
        if self.always_zero:
            return 0
        return int(float(self.beta @ x_prime) >= self.tau - self.tol)

    def actions(self, X_prime: np.ndarray) -> np.ndarray:
        if self.always_one:
            return np.ones(len(X_prime), dtype=np.int8)
        if self.always_zero:
            return np.zeros(len(X_prime), dtype=np.int8)
        return (X_prime @ self.beta >= self.tau - self.tol).astype(np.int8)

    def scaled(self, c: float) -> "LinearThresholdPolicy":
        if self.constant:
            return self
        return LinearThresholdPolicy(self.beta * c, self.tau * c)


@dataclass(frozen=True)
class AgentBehavior:
    """Effort budget and tie-breaking.

    Trembling agents overshoot the boundary by ``alpha`` drawn per
    ``alpha_rule`` from ``[0, min(delta - gap, gamma_th)]``; ``fixed`` uses
    ``alpha_fixed`` (default ``gamma_th / 2``) clipped to that interval.
    """

    delta: float = 0.0
    mode: str = "lazy"
    gamma_th: float = 0.0
    alpha_rule: str = "uniform_random"
    alpha_fixed: Optional[float] = None
    clip_to_ball: bool = False

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.mode not in ("lazy", "trembling"):
            raise ValueError(f"unknown agent mode {self.mode!r}")
        if self.gamma_th < 0:
            raise ValueError("gamma_th must be nonnegative")
        if self.alpha_rule not in ALPHA_RULES:
            raise ValueError(f"unknown alpha rule {self.alpha_rule!r}")

    def overshoot(self, slack: np.ndarray | float, rng: Optional[np.random.Generator]):
        """Overshoot for movers with budget ``slack = delta - gap`` left."""
        cap = np.minimum(slack, self.gamma_th)
        cap = np.maximum(cap, 0.0)
        if self.mode == "lazy":
            return cap * 0.0
        if self.alpha_rule == "adversarial_max":
            return cap
        if self.alpha_rule == "fixed":
            a = self.gamma_th / 2 if self.alpha_fixed is None else self.alpha_fixed
            return np.minimum(cap, a)
        if rng is None:
            raise ValueError("uniform_random overshoot needs a random generator")
        return cap * rng.random(np.shape(cap)) if np.ndim(cap) else cap * rng.random()


def best_respond(policy: LinearThresholdPolicy, x: np.ndarray, behavior: AgentBehavior,
                 rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """The context agent ``x`` reports under ``policy``.

    The agent moves along ``beta / ||beta||`` only when that is the cheapest
    way to obtain action 1 within budget; otherwise it reports ``x`` as is.
    """
    if policy.constant:
        return x
    s = float(policy.beta @ x)
    if s >= policy.tau - policy.tol:
        return x
    gap = (policy.tau - s) / policy.beta_norm
    if gap > behavior.delta:
        return x
    step = gap + float(behavior.overshoot(behavior.delta - gap, rng))
    x_new = x + (step / policy.beta_norm) * policy.beta
    if behavior.clip_to_ball:
        norm = math.sqrt(float(x_new @ x_new))
        if norm > 1.0:
            x_new = x_new / norm
            if policy.action(x_new) != 1:
                return x
    return x_new


def best_respond_block(policy: LinearThresholdPolicy, X: np.ndarray, behavior: AgentBehavior,
                       rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Row-wise :func:`best_respond` for a fixed policy."""
    if policy.constant or len(X) == 0:
        return X
    s = X @ policy.beta
    gap = (policy.tau - s) / policy.beta_norm
    movers = (s < policy.tau - policy.tol) & (gap <= behavior.delta)
    if not movers.any():
        return X
    Xp = X.copy()
    g = gap[movers]
    step = g + behavior.overshoot(behavior.delta - g, rng)
    moved = X[movers] + np.outer(step / policy.beta_norm, policy.beta)
    if behavior.clip_to_ball:
        norms = np.linalg.norm(moved, axis=1)
        out = norms > 1.0
        if out.any():
            moved[out] /= norms[out, None]
            fails = out & (moved @ policy.beta < policy.tau - policy.tol)
            moved[fails] = X[movers][fails]
    Xp[movers] = moved
    return Xp


def clean_threshold(policy: LinearThresholdPolicy, delta: float, gamma_th: float, r0_shift: float) -> float:
    return (delta + gamma_th) * policy.beta_norm + r0_shift + policy.tol


def is_clean(policy: LinearThresholdPolicy, x_prime: np.ndarray, delta: float,
             gamma_th: float = 0.0, r0_shift: float = 0.0) -> bool:
    """True iff ``x'`` lies strictly above the (trembling-widened) shifted boundary,
    which certifies that the agent did not move."""
    if policy.constant:
        return False
    return float(policy.beta @ x_prime) > clean_threshold(policy, delta, gamma_th, r0_shift)


def is_clean_block(policy: LinearThresholdPolicy, X_prime: np.ndarray, delta: float,
                   gamma_th: float = 0.0, r0_shift: float = 0.0) -> np.ndarray:
    if policy.constant:
        return np.zeros(len(X_prime), dtype=bool)
    return X_prime @ policy.beta > clean_threshold(policy, delta, gamma_th, r0_shift)
