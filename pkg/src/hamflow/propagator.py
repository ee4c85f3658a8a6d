"""Fundamental-matrix and frame propagation for z' = H(omega . t) z.

The adaptive route integrates the matrix ODE with a high-order one-step
method and records the symplectic defect ||U^T J U - J|| relative to
||U||^2 (the absolute defect scales with the square of the solution
magnitude, so only the relative quantity is meaningful on hyperbolic
systems).  Constant-coefficient fields additionally have a matrix
exponential fast path; it is validated against the adaptive route in the
test suite, never the other way around.

Long-time frame work never holds raw products: the chunked propagator
caches transfer matrices over unit time chunks, and frame chains are
re-orthonormalized after every chunk with the change of basis recorded,
so only the plane (and the determinant sign of the top block, needed by
disconjugacy tests) survives, not the overflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .base_flow import BasePoint, advance
from .errors import StiffnessError
from .hamiltonian import CoefficientField, J_matrix

__all__ = [
    "CocycleValue",
    "SolutionFrame",
    "fundamental_matrix",
    "propagate_frame",
    "cocycle_check",
    "transfer_matrix",
    "ChunkedPropagator",
]

_DEFECT_TOL = 1e-8


def _rel(num: float, scale: float) -> float:
    return float(num) / max(1.0, float(scale))


def symplectic_defect(U: np.ndarray) -> float:
    """||U^T J U - J||_2 / max(1, ||U||_2^2); NaN for complex input."""
    if np.iscomplexobj(U):
        return float("nan")
    n = U.shape[0] // 2
    J = J_matrix(n)
    raw = np.linalg.norm(U.T @ J @ U - J, 2)
    return _rel(raw, np.linalg.norm(U, 2) ** 2)


@dataclass(frozen=True, eq=False)
class CocycleValue:
    """U(t, omega) with its defect bookkeeping."""

    U: np.ndarray
    t: float
    omega: BasePoint
    symplectic_defect: float
    degraded: bool

    @property
    def n(self) -> int:
        return self.U.shape[0] // 2

    def block(self, which: int) -> np.ndarray:
        """Blocks numbered 1..4: top-left, bottom-left, top-right,
        bottom-right (the two left blocks propagate [[I],[0]], the two
        right ones [[0],[I]])."""
        n = self.n
        return {
            1: self.U[:n, :n],
            2: self.U[n:, :n],
            3: self.U[:n, n:],
            4: self.U[n:, n:],
        }[which]


@dataclass(frozen=True, eq=False)
class SolutionFrame:
    """A 2n x n solution frame [[L1], [L2]] at a time along an orbit.

    ``basis_change`` records C with  F_returned = F_exact_solution @ C
    whenever internal re-orthonormalization replaced the raw columns
    (C = identity means the columns are honest solutions).
    """

    L1: np.ndarray
    L2: np.ndarray
    t: float
    omega: BasePoint
    basis_change: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.L1.shape[1]

    @property
    def stacked(self) -> np.ndarray:
        return np.vstack([self.L1, self.L2])

    @property
    def smallest_singular_value(self) -> float:
        return float(np.linalg.svd(self.stacked, compute_uv=False)[-1])

    @property
    def degenerate(self) -> bool:
        s = np.linalg.svd(self.stacked, compute_uv=False)
        return bool(s[-1] <= 1e-12 * max(1.0, s[0]))

    def lagrange_defect(self) -> float:
        """||L1^T L2 - L2^T L1|| relative to the frame scale; zero on
        Lagrange planes of real systems."""
        raw = np.linalg.norm(self.L1.T @ self.L2 - self.L2.T @ self.L1, 2)
        return _rel(raw, np.linalg.norm(self.stacked, 2) ** 2)

    def weyl_matrix(self) -> np.ndarray:
        """Graph representation L2 L1^{-1}."""
        return np.linalg.solve(self.L1.T, self.L2.T).T

    @staticmethod
    def from_stacked(F: np.ndarray, t: float, omega: BasePoint,
                     basis_change: np.ndarray | None = None) -> "SolutionFrame":
        n = F.shape[1]
        return SolutionFrame(L1=F[:n, :], L2=F[n:, :], t=t, omega=omega,
                             basis_change=basis_change)


def _integrate_matrix(
    H_of_t: Callable[[float], np.ndarray],
    Y0: np.ndarray,
    t0: float,
    t1: float,
    tol: float,
) -> np.ndarray:
    """Solve Y' = H(t) Y from t0 to t1 (either direction) with DOP853."""
    if t1 == t0:
        return Y0.copy()
    shape = Y0.shape

    def rhs(t, y):
        Y = y.reshape(shape)
        return (H_of_t(t) @ Y).reshape(-1)

    sol = solve_ivp(
        rhs,
        (t0, t1),
        Y0.reshape(-1),
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-2,
        dense_output=False,
    )
    if not sol.success:
        raise StiffnessError(
            f"integration stalled: {sol.message}", t_reached=float(sol.t[-1])
        )
    return sol.y[:, -1].reshape(shape)


def transfer_matrix(
    field: CoefficientField,
    omega: BasePoint,
    t0: float,
    t1: float,
    tol: float = 1e-10,
    method: str = "auto",
) -> np.ndarray:
    """The operator mapping z(t0) to z(t1) along the orbit of omega.

    method: "auto" (matrix exponential when the field is constant,
    adaptive otherwise), "adaptive", or "expm" (constant fields only).
    """
    if method not in ("auto", "adaptive", "expm"):
        raise ValueError(f"unknown method {method!r}")
    use_expm = field.is_autonomous and method in ("auto", "expm")
    if method == "expm" and not field.is_autonomous:
        raise ValueError("expm route requires a constant-coefficient field")
    n2 = 2 * field.n
    if use_expm:
        H0 = field.constant_matrix()
        return expm((t1 - t0) * H0)
    dtype = complex if field.is_complex else float
    I = np.eye(n2, dtype=dtype)
    return _integrate_matrix(field.H_of_t(omega), I, t0, t1, tol)


def fundamental_matrix(
    field: CoefficientField,
    omega: BasePoint,
    t: float,
    tol: float = 1e-10,
    method: str = "auto",
    resymplectify: bool = False,
    defect_tol: float = _DEFECT_TOL,
) -> CocycleValue:
    """U(t, omega): solution of U' = H(omega . s) U, U(0) = I."""
    U = transfer_matrix(field, omega, 0.0, t, tol=tol, method=method)
    if resymplectify and not np.iscomplexobj(U):
        U = _resymplectify(U)
    defect = symplectic_defect(U)
    degraded = bool(np.isfinite(defect) and defect > defect_tol)
    return CocycleValue(U=U, t=float(t), omega=omega,
                        symplectic_defect=defect, degraded=degraded)


def _resymplectify(U: np.ndarray) -> np.ndarray:
    """One correction step shrinking the symplectic defect quadratically.

    With E = J^{-1} U^T J U (identity for exact symplectic U), replace
    U <- U (I + (E - I)/2)^{-1}; accurate for small defects only.
    """
    n = U.shape[0] // 2
    J = J_matrix(n)
    E = np.linalg.solve(J, U.T @ J @ U)
    I = np.eye(2 * n)
    return U @ np.linalg.inv(I + 0.5 * (E - I))


def propagate_frame(
    field: CoefficientField,
    frame: SolutionFrame,
    t: float,
    tol: float = 1e-10,
    method: str = "auto",
) -> SolutionFrame:
    """Propagate a 2n x n frame by time t along the orbit; the returned
    columns are honest solutions (no renormalization)."""
    if frame.degenerate:
        raise ValueError("refusing to propagate a degenerate frame")
    F0 = frame.stacked
    t0 = frame.t
    t1 = t0 + t
    if field.is_autonomous and method in ("auto", "expm"):
        F1 = expm(t * field.constant_matrix()) @ F0
    else:
        F1 = _integrate_matrix(field.H_of_t(frame.omega), F0, t0, t1, tol)
    return SolutionFrame.from_stacked(F1, t=t1, omega=frame.omega,
                                      basis_change=frame.basis_change)


def cocycle_check(
    field: CoefficientField,
    omega: BasePoint,
    s: float,
    t: float,
    tol: float = 1e-10,
) -> dict:
    """Report the defect of U(t+s, omega) = U(t, omega . s) U(s, omega),
    relative to max(||U(t+s)||, ||U(t, omega.s)|| ||U(s)||)."""
    U_ts = transfer_matrix(field, omega, 0.0, t + s, tol=tol, method="adaptive")
    U_s = transfer_matrix(field, omega, 0.0, s, tol=tol, method="adaptive")
    omega_s = advance(field.flow, omega, s)
    U_t_shift = transfer_matrix(field, omega_s, 0.0, t, tol=tol, method="adaptive")
    raw = np.linalg.norm(U_ts - U_t_shift @ U_s, 2)
    # the product is assembled from the factors, so their norm product is
    # the attainable accuracy scale even when U(t+s) itself is small
    scale = max(np.linalg.norm(U_ts, 2),
                np.linalg.norm(U_t_shift, 2) * np.linalg.norm(U_s, 2))
    defect = _rel(raw, scale)
    return {
        "s": float(s),
        "t": float(t),
        "defect": float(defect),
        "raw_defect": float(raw),
        "scale": float(scale),
    }


def _positive_qr(F: np.ndarray):
    """QR with positive real diagonal of R, so det(change of basis) > 0
    and determinant signs of propagated top blocks are preserved."""
    Q, R = np.linalg.qr(F)
    d = np.diagonal(R).copy()
    d = np.where(np.abs(d) == 0, 1.0, d)
    phase = d / np.abs(d)
    Q = Q * phase
    R = phase.conj()[:, None] * R
    return Q, R


class ChunkedPropagator:
    """Cached transfer matrices over unit-time chunks along one orbit.

    Chunk k >= 0 covers [k h, (k+1) h] forward; chunk k < 0 covers
    [k h, (k+1) h] as well (so chunk -1 is [-h, 0]).  ``forward(k)``
    maps z(k h) to z((k+1) h); ``backward(k)`` is its inverse, computed
    by integrating in reverse rather than by matrix inversion.
    """

    def __init__(self, field: CoefficientField, omega: BasePoint,
                 h: float = 1.0, tol: float = 1e-10):
        self.field = field
        self.omega = omega
        self.h = float(h)
        self.tol = float(tol)
        self._fwd: dict[int, np.ndarray] = {}
        self._bwd: dict[int, np.ndarray] = {}
        self._expm_cache: dict[float, np.ndarray] = {}

    def _expm_step(self, dt: float) -> np.ndarray:
        E = self._expm_cache.get(dt)
        if E is None:
            E = expm(dt * self.field.constant_matrix())
            self._expm_cache[dt] = E
        return E

    def forward(self, k: int) -> np.ndarray:
        M = self._fwd.get(k)
        if M is None:
            if self.field.is_autonomous:
                M = self._expm_step(self.h)
            else:
                M = transfer_matrix(self.field, self.omega, k * self.h,
                                    (k + 1) * self.h, tol=self.tol,
                                    method="adaptive")
            self._fwd[k] = M
        return M

    def backward(self, k: int) -> np.ndarray:
        M = self._bwd.get(k)
        if M is None:
            if self.field.is_autonomous:
                M = self._expm_step(-self.h)
            else:
                M = transfer_matrix(self.field, self.omega, (k + 1) * self.h,
                                    k * self.h, tol=self.tol,
                                    method="adaptive")
            self._bwd[k] = M
        return M

    def frame_chain(
        self,
        F0: np.ndarray,
        chunks: Sequence[int],
        direction: str,
    ) -> np.ndarray:
        """Apply the chunk operators named in ``chunks`` to the frame,
        re-orthonormalizing after each chunk.  Only the plane is
        meaningful in the result."""
        step = self.forward if direction == "forward" else self.backward
        F = F0.copy()
        for k in chunks:
            F = step(k) @ F
            Q, _ = _positive_qr(F)
            F = Q
        return F

    def qr_exponents(self, T: float) -> np.ndarray:
        """Lyapunov-type exponents of the cocycle over [0, T] by the
        discrete QR method, sorted descending."""
        m = max(1, int(round(T / self.h)))
        n2 = 2 * self.field.n
        dtype = complex if self.field.is_complex else float
        Q = np.eye(n2, dtype=dtype)
        logs = np.zeros(n2)
        for k in range(m):
            B = self.forward(k) @ Q
            Q, R = _positive_qr(B)
            logs += np.log(np.abs(np.diagonal(R)))
        chi = logs / (m * self.h)
        return np.sort(chi)[::-1]
