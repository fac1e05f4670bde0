"""Linear and nonlinear solvers for the implicit time steps.

The systems couple every node to its two periodic neighbours through ``2x2``
blocks. They are solved as a banded system (bandwidth 3 in the interleaved
``(x1, x2)`` ordering) plus a rank-4 Sherman-Morrison-Woodbury correction for
the two wraparound corner blocks.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import NewtonConvergenceError, SingularSystemError

__all__ = ["CyclicBlockTridiagonal", "NewtonSettings", "NewtonResult", "cyclic_solve", "newton_solve"]

log = logging.getLogger(__name__)


@dataclass
class CyclicBlockTridiagonal:
    """Periodic block tridiagonal matrix with ``2x2`` blocks.

    Block row ``k`` reads ``lower[k] x_{k-1} + diag[k] x_k + upper[k] x_{k+1}``
    with indices taken modulo ``J``.
    """

    diag: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.diag = np.asarray(self.diag, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        shapes = {self.diag.shape, self.lower.shape, self.upper.shape}
        if len(shapes) != 1 or self.diag.ndim != 3 or self.diag.shape[1:] != (2, 2):
            raise ValueError(f"inconsistent block shapes {shapes}")
        if self.J < 3:
            raise ValueError("cyclic block systems need J >= 3")

    @property
    def J(self) -> int:
        return self.diag.shape[0]

    @classmethod
    def identity(cls, J: int) -> "CyclicBlockTridiagonal":
        z = np.zeros((J, 2, 2))
        return cls(np.broadcast_to(np.eye(2), (J, 2, 2)).copy(), z, z.copy())

    def matvec(self, x) -> np.ndarray:
        X = np.asarray(x, dtype=float).reshape(self.J, 2)
        y = (
            np.einsum("kij,kj->ki", self.diag, X)
            + np.einsum("kij,kj->ki", self.lower, np.roll(X, 1, axis=0))
            + np.einsum("kij,kj->ki", self.upper, np.roll(X, -1, axis=0))
        )
        return y.reshape(np.shape(x))

    def to_dense(self) -> np.ndarray:
        J = self.J
        A = np.zeros((2 * J, 2 * J))
        for k in range(J):
            r = slice(2 * k, 2 * k + 2)
            A[r, 2 * k : 2 * k + 2] += self.diag[k]
            km, kp = (k - 1) % J, (k + 1) % J
            A[r, 2 * km : 2 * km + 2] += self.lower[k]
            A[r, 2 * kp : 2 * kp + 2] += self.upper[k]
        return A

    def banded(self) -> np.ndarray:
        """LAPACK band storage ``ab[3 + i - j, j]`` of the non-wrapping part."""
        J = self.J
        n = 2 * J
        ab = np.zeros((7, n))
        k = np.arange(J)
        for c in range(2):
            for e in range(2):
                rows = 2 * k + c
                cols = 2 * k + e
                ab[3 + rows - cols, cols] = self.diag[:, c, e]
                cols = 2 * (k[1:] - 1) + e
                ab[3 + rows[1:] - cols, cols] = self.lower[1:, c, e]
                cols = 2 * (k[:-1] + 1) + e
                ab[3 + rows[:-1] - cols, cols] = self.upper[:-1, c, e]
        return ab


def cyclic_solve(A: CyclicBlockTridiagonal, rhs) -> np.ndarray:
    """Solve ``A x = rhs`` directly in ``O(J)`` operations.

    ``rhs`` may have shape ``(2J,)`` or ``(J, 2)``; the result has the same shape.
    """
    b = np.asarray(rhs, dtype=float)
    shape = b.shape
    J = A.J
    n = 2 * J
    b = b.reshape(n)
    # corner blocks as U V^T with U = [e_0-block, e_{J-1}-block]
    U = np.zeros((n, 4))
    U[0:2, 0:2] = np.eye(2)
    U[n - 2 : n, 2:4] = np.eye(2)
    try:
        sol = scipy.linalg.solve_banded((3, 3), A.banded(), np.column_stack([b, U]), check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        return _dense_fallback(A, b).reshape(shape)
    y, Z = sol[:, 0], sol[:, 1:]
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(Z))):
        return _dense_fallback(A, b).reshape(shape)

    def vt(v):
        # V^T v with V^T[0:2, n-2:n] = lower[0], V^T[2:4, 0:2] = upper[J-1]
        return np.concatenate([A.lower[0] @ v[n - 2 : n], A.upper[J - 1] @ v[0:2]])

    VtZ = np.column_stack([vt(Z[:, i]) for i in range(4)])
    cap = np.eye(4) + VtZ
    try:
        w = np.linalg.solve(cap, vt(y))
    except np.linalg.LinAlgError:
        return _dense_fallback(A, b).reshape(shape)
    x = y - Z @ w
    return x.reshape(shape)


def _dense_fallback(A: CyclicBlockTridiagonal, b: np.ndarray) -> np.ndarray:
    M = A.to_dense()
    try:
        with warnings.catch_warnings():
            # a zero pivot is reported below as SingularSystemError
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(M, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(str(exc)) from exc
    if np.any(np.diag(lu[0]) == 0) or not np.all(np.isfinite(lu[0])):
        raise SingularSystemError("singular cyclic block system")
    return scipy.linalg.lu_solve(lu, b, check_finite=False)


@dataclass(frozen=True)
class NewtonSettings:
    """Stopping rule and damping for :func:`newton_solve`.

    The iteration stops once the residual max norm is below ``tol``. When
    roundoff prevents that, a full Newton step smaller than ``step_tol``
    (relative to the iterate) is accepted as converged as well.
    """

    tol: float = 1e-10
    max_iter: int = 20
    min_damping: float = 2.0**-8
    step_tol: float = 1e-13

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual: float
    linear_residual: float = 0.0


def newton_solve(
    residual_fn: Callable,
    jacobian_fn: Callable,
    x0,
    settings: NewtonSettings | None = None,
    admissible: Callable | None = None,
) -> NewtonResult:
    """Damped Newton iteration with a cyclic block tridiagonal Jacobian.

    ``admissible(x)`` may reject trial iterates (for example points leaving the
    domain of a metric); rejected trials are damped like residual increases.
    """
    s = settings or NewtonSettings()
    x = np.array(x0, dtype=float)
    F = residual_fn(x)
    res = float(np.max(np.abs(F)))
    lin_res = 0.0
    it = 0
    while res > s.tol:
        if it >= s.max_iter:
            raise NewtonConvergenceError(
                f"Newton did not converge in {s.max_iter} iterations (residual {res:.3e})", res, it
            )
        A = jacobian_fn(x)
        dx = cyclic_solve(A, -F)
        lin_res = float(np.max(np.abs(A.matvec(dx) + F)))
        it += 1
        if np.max(np.abs(dx)) <= s.step_tol * max(1.0, float(np.max(np.abs(x)))):
            log.debug("Newton stopped at roundoff level: residual %.3e", res)
            break
        lam = 1.0
        while True:
            trial = x + lam * dx
            ok = admissible is None or admissible(trial)
            if ok:
                Ft = residual_fn(trial)
                rt = float(np.max(np.abs(Ft)))
                if np.isfinite(rt) and (rt < res or lam == 1.0 and rt <= s.tol):
                    break
            if lam <= s.min_damping:
                if not ok:
                    raise NewtonConvergenceError("Newton trial iterates left the admissible set", res, it)
                break
            lam *= 0.5
        x, F, res = trial, Ft, rt
        if lam < 1.0:
            log.debug("Newton step damped to %.4g (residual %.3e)", lam, res)
    return NewtonResult(x, it, res, lin_res)
