"""Small dense linear algebra used throughout the simulator.

Vectors are 1-D float64 numpy arrays, matrices are 2-D float64 arrays.
Dimensions stay small (d <= 32 in practice) so clarity wins over speed,
except in :class:`LeastSquaresAccumulator`, which sits on the hot path of
every online learner.
"""

from __future__ import annotations

from typing import Iterable, Sequence, Tuple

import numpy as np

RANK_RTOL = 1e-10
SYMMETRY_RTOL = 1e-12


def as_vector(x, d: int | None = None) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if d is not None and v.shape[0] != d:
        raise ValueError(f"expected dimension {d}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def _stack(data: Sequence[Tuple[np.ndarray, float]]) -> Tuple[np.ndarray, np.ndarray]:
    if len(data) == 0:
        raise ValueError("ols_fit needs at least one observation")
    d = len(data[0][0])
    X = np.empty((len(data), d))
    y = np.empty(len(data))
    for i, (x, r) in enumerate(data):
        if len(x) != d:
            raise ValueError(f"row {i} has dimension {len(x)}, expected {d}")
        X[i] = x
        y[i] = r
    return X, y


def ols_fit(data: Sequence[Tuple[np.ndarray, float]]) -> np.ndarray:
    """Least-squares fit of ``r ~ <theta, x>`` over ``(x, r)`` pairs.

    Rank-deficient designs get the minimum-norm solution; singular values
    below ``1e-10`` times the largest are treated as zero.
    """
    X, y = _stack(data)
    theta, *_ = np.linalg.lstsq(X, y, rcond=RANK_RTOL)
    return theta


def ols_fit_arrays(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("ols_fit needs at least one observation")
    if X.shape[0] != y.shape[0]:
        raise ValueError("design and response lengths differ")
    theta, *_ = np.linalg.lstsq(X, y, rcond=RANK_RTOL)
    return theta


class LeastSquaresAccumulator:
    """Running sufficient statistics for OLS with the same answer as
    :func:`ols_fit` on the rows seen so far.

    Keeps the Gram matrix and moment vector, and the raw rows so that a
    rank-deficient design can fall back to the exact minimum-norm solve.
    """

    def __init__(self, d: int, keep_rows: bool = True):
        self.d = d
        self.gram = np.zeros((d, d))
        self.moment = np.zeros(d)
        self.count = 0
        self.keep_rows = keep_rows
        self.rows: list[np.ndarray] = []
        self.targets: list[float] = []
        self._theta = np.zeros(d)
        self._dirty = False

    def add(self, x: np.ndarray, r: float) -> None:
        self.gram += x[:, None] * x
        self.moment += r * x
        self.count += 1
        if self.keep_rows:
            self.rows.append(x)
            self.targets.append(r)
        self._dirty = True

    def add_block(self, X: np.ndarray, r: np.ndarray) -> None:
        if len(X) == 0:
            return
        self.gram += X.T @ X
        self.moment += X.T @ r
        self.count += len(X)
        if self.keep_rows:
            self.rows.extend(X)
            self.targets.extend(r.tolist())
        self._dirty = True

    def _exact(self) -> np.ndarray:
        if self.keep_rows:
            return ols_fit_arrays(np.array(self.rows), np.array(self.targets))
        # without rows, pseudo-inverse of the Gram matrix gives the same
        # minimum-norm point; eigenvalues scale as squared singular values
        w, V = np.linalg.eigh(self.gram)
        cutoff = max(RANK_RTOL**2, 64 * np.finfo(float).eps) * max(w.max(), 0.0)
        inv = np.where(w > cutoff, 1.0 / np.where(w > cutoff, w, 1.0), 0.0)
        return V @ (inv * (V.T @ self.moment))

    def solve(self) -> np.ndarray:
        if not self._dirty:
            return self._theta
        self._dirty = False
        if self.count == 0:
            self._theta = np.zeros(self.d)
        elif self.count < self.d:
            self._theta = self._exact()
        else:
            try:
                theta = np.linalg.solve(self.gram, self.moment)
            except np.linalg.LinAlgError:
                theta = self._exact()
            else:
                if not np.all(np.isfinite(theta)):
                    theta = self._exact()
            self._theta = theta
        return self._theta


def check_symmetric(M: np.ndarray, rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    scale = max(np.abs(M).max(), 1.0) if M.size else 1.0
    if np.abs(M - M.T).max(initial=0.0) > rtol * scale:
        raise ValueError("matrix is not symmetric")
    return M


def jacobi_eigenvalues(M: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending."""
    A = check_symmetric(M).copy()
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    if n == 1:
        return A[0].copy()
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2))
        if off <= tol * max(np.sqrt(np.sum(A * A)), 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # rotate rows/cols p and q
                Ap = A[:, p].copy()
                Aq = A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap = A[p, :].copy()
                Aq = A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                A[p, q] = A[q, p] = 0.0
    return np.sort(np.diag(A))


def min_eigenvalue(M: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(jacobi_eigenvalues(M)[0])


def outer_sum(X: Iterable[np.ndarray], d: int) -> np.ndarray:
    S = np.zeros((d, d))
    for x in X:
        S += np.outer(x, x)
    return S
