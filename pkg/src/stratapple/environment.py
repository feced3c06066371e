"""Ground-truth reward model, context sources and reward noise."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .linalg import as_vector

NORM_TOL = 1e-12

APPLE = "apple_tasting"
BANDIT = "bandit"

SOURCE_KINDS = (
    "uniform_ball",
    "uniform_sphere_surface",
    "mixture_tilted",
    "adversarial_file",
    "adversarial_generator",
)


class EndOfSequence(Exception):
    """An adversarial context file ran out of rows."""


@dataclass(frozen=True)
class RewardModel:
    theta1: np.ndarray
    theta0: Optional[np.ndarray] = None
    r0: float = 0.0
    sigma: float = 0.0
    feedback: str = APPLE

    def __post_init__(self):
        theta1 = as_vector(self.theta1)
        object.__setattr__(self, "theta1", theta1)
        if self.feedback not in (APPLE, BANDIT):
            raise ValueError(f"unknown feedback mode {self.feedback!r}")
        if self.feedback == BANDIT:
            if self.theta0 is None:
                raise ValueError("bandit feedback needs theta0")
            theta0 = as_vector(self.theta0, len(theta1))
            object.__setattr__(self, "theta0", theta0)
            if np.linalg.norm(theta0) > 1 + NORM_TOL:
                raise ValueError("theta0 must have norm at most 1")
        elif self.theta0 is not None:
            raise ValueError("apple-tasting feedback takes no theta0")
        if np.linalg.norm(theta1) > 1 + NORM_TOL:
            raise ValueError("theta1 must have norm at most 1")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def d(self) -> int:
        return len(self.theta1)

    @property
    def bandit(self) -> bool:
        return self.feedback == BANDIT


def expected_reward(model: RewardModel, action: int, x: np.ndarray) -> float:
    if action == 1:
        return float(model.theta1 @ x)
    if model.bandit:
        return float(model.theta0 @ x)
    return float(model.r0)


def mean_rewards(model: RewardModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free rewards of both actions for each row of ``X``."""
    m1 = X @ model.theta1
    if model.bandit:
        m0 = X @ model.theta0
    else:
        m0 = np.full(len(X), float(model.r0))
    return m1, m0


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.0
    distribution: str = "gaussian"

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.distribution not in ("gaussian", "bounded_uniform"):
            raise ValueError(f"unknown noise distribution {self.distribution!r}")

    def draw(self, rng: np.random.Generator, size=None):
        if self.sigma == 0:
            return 0.0 if size is None else np.zeros(size)
        if self.distribution == "gaussian":
            return rng.normal(0.0, self.sigma, size)
        half = self.sigma * math.sqrt(3.0)
        return rng.uniform(-half, half, size)


def realize_reward(model: RewardModel, action: int, x_original: np.ndarray,
                   noise: NoiseModel, rng: np.random.Generator) -> float:
    """Noisy reward for ``action`` on the agent's unmodified context.

    Only the original context is accepted; the reported context never
    influences the principal's reward.
    """
    return expected_reward(model, action, x_original) + float(noise.draw(rng))


# ---------------------------------------------------------------------------
# context sources


def uniform_ball(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radius = rng.random(n) ** (1.0 / d)
    return g * radius[:, None]


def uniform_sphere(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass
class ContextSource:
    """Where agent contexts come from.

    ``mixture_tilted`` draws from ``c0 * Uniform(ball) + (1 - c0) * Q`` with Q
    uniform on the ball of radius ``alt_radius`` around ``alt_center``, which
    keeps the density ratio to the uniform ball above ``c0``.
    Adversarial kinds are oblivious: the whole sequence is fixed up front.
    """

    kind: str = "uniform_ball"
    d: int = 2
    c0: float = 1.0
    alt_center: Optional[list] = None
    alt_radius: float = 0.5
    path: Optional[str] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"unknown context source kind {self.kind!r}")
        if not 0 < self.c0 <= 1:
            raise ValueError("c0 must lie in (0, 1]")
        if self.kind == "mixture_tilted":
            center = self.center()
            if np.linalg.norm(center) + self.alt_radius > 1 + NORM_TOL or self.alt_radius <= 0:
                raise ValueError("mixture component must stay inside the unit ball")
        if self.kind == "adversarial_file" and not self.path:
            raise ValueError("adversarial_file needs a path")
        if self.kind == "adversarial_generator":
            pattern = self.params.get("pattern", "rotating")
            if pattern not in ("rotating", "switching"):
                raise ValueError(f"unknown adversarial pattern {pattern!r}")

    def center(self) -> np.ndarray:
        if self.alt_center is None:
            c = np.zeros(self.d)
            c[0] = 0.5
            return c
        return as_vector(self.alt_center, self.d)

    @property
    def label(self) -> str:
        return self.kind

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` contexts as an ``(n, d)`` array."""
        d = self.d
        if self.kind == "uniform_ball":
            return uniform_ball(rng, n, d)
        if self.kind == "uniform_sphere_surface":
            return uniform_sphere(rng, n, d)
        if self.kind == "mixture_tilted":
            X = uniform_ball(rng, n, d)
            alt = rng.random(n) >= self.c0
            k = int(alt.sum())
            if k:
                X[alt] = self.center() + self.alt_radius * uniform_ball(rng, k, d)
            return X
        if self.kind == "adversarial_file":
            X = read_context_file(self.path, d)
            if len(X) < n:
                raise EndOfSequence(f"{self.path} has {len(X)} contexts, {n} requested")
            return X[:n]
        return adversarial_sequence(self.params, n, d)


def sample_context(source: ContextSource, rng: np.random.Generator) -> np.ndarray:
    return source.sample(rng, 1)[0]


def adversarial_sequence(params: dict, n: int, d: int) -> np.ndarray:
    """Deterministic oblivious context sequences.

    ``rotating``: contexts circle the first coordinate plane at a fixed
    radius. ``switching``: blocks of length ``block`` alternate between two
    seeded clusters.
    """
    pattern = params.get("pattern", "rotating")
    radius = float(params.get("radius", 0.9))
    if pattern == "rotating":
        period = float(params.get("period", 97.0))
        angle = 2 * np.pi * np.arange(n) / period
        X = np.zeros((n, d))
        X[:, 0] = radius * np.cos(angle)
        if d > 1:
            X[:, 1] = radius * np.sin(angle)
        return X
    rng = np.random.default_rng(int(params.get("seed", 0)))
    block = int(params.get("block", 50))
    centers = uniform_sphere(rng, 2, d) * radius * 0.5
    spread = radius * 0.5
    X = np.empty((n, d))
    for start in range(0, n, block):
        stop = min(start + block, n)
        c = centers[(start // block) % 2]
        X[start:stop] = c + spread * uniform_ball(rng, stop - start, d)
    return X


def read_context_file(path, d: int) -> np.ndarray:
    """One context per line, ``d`` comma-separated floats."""
    rows = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if len(row) != d:
                raise ValueError(f"{path}:{lineno}: expected {d} values, got {len(row)}")
            rows.append(row)
    X = np.array(rows, dtype=float).reshape(-1, d)
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{path}: non-finite context")
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms > 1 + NORM_TOL):
        bad = int(np.argmax(norms > 1 + NORM_TOL)) + 1
        raise ValueError(f"{path}: context {bad} lies outside the unit ball")
    return X


def write_context_file(path, X: np.ndarray) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for row in np.asarray(X, dtype=float):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
