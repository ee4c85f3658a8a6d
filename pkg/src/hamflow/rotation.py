"""Rotation number by continuous argument tracking of det(U1 - i U2),
parameter profiles of it, and ED-candidate intervals from profile
plateaus.

The tracked scalar is invariant under right-multiplication of the
fundamental matrix by a real matrix of positive determinant, so chunkwise
QR re-orthonormalization (positive-diagonal convention) leaves the
unwrapped argument exactly unchanged while keeping the propagation
well-conditioned at any horizon.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .base_flow import BasePoint
from .errors import InvalidCoefficients, StiffnessError, UnwrapFailure
from .hamiltonian import BlockMap, CoefficientField, perturb_h2
from .propagator import _positive_qr

__all__ = [
    "RotationEstimate",
    "RotationProfile",
    "rotation_number",
    "rotation_profile",
    "ed_candidates_from_rotation",
]

_MAX_DT_HALVINGS = 20


@dataclass(frozen=True)
class RotationEstimate:
    """Time-average winding rate of det(U1 - i U2) along one orbit.

    error_bar compares the horizon-T and horizon-T/2 averages;
    unwrap_steps counts accepted argument increments (each |step| < pi/2).
    """

    value: float
    error_bar: float
    T_used: float
    unwrap_steps: int

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "error_bar": self.error_bar,
            "T_used": self.T_used,
            "unwrap_steps": self.unwrap_steps,
        }


@dataclass(frozen=True)
class RotationProfile:
    alphas: tuple[float, ...]
    estimates: tuple[RotationEstimate, ...]
    monotonicity_defect: float

    def rows(self) -> list[tuple[float, float, float, float]]:
        """(alpha, value, error_bar, T_used) per grid point."""
        return [
            (a, e.value, e.error_bar, e.T_used)
            for a, e in zip(self.alphas, self.estimates)
        ]


class _ArgTracker:
    """Carries U(t, omega) chunk by chunk, accumulating the unwrapped
    argument of det(U1 - i U2) at sample resolution dt."""

    def __init__(
        self,
        field: CoefficientField,
        omega: BasePoint,
        dt: float,
        chunk: float = 1.0,
        tol: float = 1e-10,
    ):
        if field.is_complex:
            raise InvalidCoefficients("rotation_number requires a real field")
        self.field = field
        self.omega = omega
        self.dt0 = dt
        self.chunk = chunk
        self.tol = tol
        self.n = field.n
        self.U = np.eye(2 * self.n)
        self.t = 0.0
        self.arg = 0.0
        self.steps = 0
        self.history: list[tuple[float, float]] = [(0.0, 0.0)]
        self._autonomous = field.is_autonomous
        self._H = field.constant_matrix() if self._autonomous else None
        self._expm_cache: dict[float, np.ndarray] = {}

    def _det(self, U: np.ndarray) -> complex:
        n = self.n
        return complex(np.linalg.det(U[:n, :n] - 1j * U[n:, :n]))

    def _samples_autonomous(self, offsets: np.ndarray) -> list[np.ndarray]:
        out = []
        for s in offsets:
            key = round(float(s), 12)
            if key not in self._expm_cache:
                self._expm_cache[key] = expm(self._H * float(s))
            out.append(self._expm_cache[key] @ self.U)
        return out

    def _samples_general(self, offsets: np.ndarray) -> list[np.ndarray]:
        n2 = 2 * self.n
        Hfun = self.field.H_of_t(self.omega)
        t0 = self.t
        sol = solve_ivp(
            lambda s, y: (Hfun(s) @ y.reshape(n2, n2)).reshape(-1),
            (t0, t0 + offsets[-1]), self.U.reshape(-1),
            method="DOP853", rtol=self.tol, atol=self.tol * 1e-2,
            t_eval=t0 + offsets, dense_output=False,
        )
        if not sol.success:
            raise StiffnessError(
                f"propagation failed in rotation tracking: {sol.message}",
                t_reached=float(sol.t[-1]),
            )
        return [sol.y[:, j].reshape(n2, n2) for j in range(len(offsets))]

    def advance_chunk(self) -> None:
        h = self.chunk
        dt = min(self.dt0, h)
        d_prev = self._det(self.U)
        for halving in range(_MAX_DT_HALVINGS + 1):
            m = max(1, int(np.ceil(h / dt)))
            offsets = np.linspace(h / m, h, m)
            mats = (
                self._samples_autonomous(offsets)
                if self._autonomous
                else self._samples_general(offsets)
            )
            incs = []
            ok = True
            d0 = d_prev
            for U in mats:
                d1 = self._det(U)
                step = float(np.angle(d1 * np.conj(d0)))
                if abs(step) >= 0.5 * np.pi:
                    ok = False
                    break
                incs.append(step)
                d0 = d1
            if ok:
                self.arg += sum(incs)
                self.steps += len(incs)
                U_end = mats[-1]
                Q, _ = _positive_qr(U_end)
                self.U = Q
                self.t += h
                self.history.append((self.t, self.arg))
                return
            dt *= 0.5
        raise UnwrapFailure(
            f"argument step stayed >= pi/2 after {_MAX_DT_HALVINGS} dt halvings "
            f"near t = {self.t:.6g}"
        )

    def advance_to(self, T: float) -> None:
        while self.t < T - 1e-9:
            self.advance_chunk()


def _readoff_spread(tracker: _ArgTracker, value: float) -> float:
    """Worst disagreement between the endpoint average and averages that
    discard an initial segment ending inside [0.2 T, 0.6 T].

    This estimates (boundary-term amplitude) / T directly; the pure
    T-doubling increment can miss it when consecutive horizons happen to
    err on the same side.
    """
    T, arg_T = tracker.t, tracker.arg
    window = [(t, a) for (t, a) in tracker.history if 0.2 * T <= t <= 0.6 * T]
    if len(window) > 17:
        idx = np.linspace(0, len(window) - 1, 17).astype(int)
        window = [window[i] for i in idx]
    worst = 0.0
    for (t_i, a_i) in window:
        if T - t_i <= 1e-9:
            continue
        worst = max(worst, abs((arg_T - a_i) / (T - t_i) - value))
    return worst


def rotation_number(
    field: CoefficientField,
    omega: BasePoint | None = None,
    T: float = 64.0,
    dt: float = 0.1,
    tol: float | None = None,
    T_max: float = 8192.0,
) -> RotationEstimate:
    """(1/T) x unwrapped arg det(U1(T, omega) - i U2(T, omega)).

    With tol set, the horizon doubles until the error bar drops below tol
    (or T_max is hit; the returned error_bar is honest either way).  The
    bar combines the T-vs-T/2 discrepancy with the spread over delayed
    read-off points.  dt is halved, up to 20 times, whenever an argument
    step reaches pi/2; UnwrapFailure if that never resolves.
    """
    if omega is None:
        omega = field.flow.origin()
    tracker = _ArgTracker(field, omega, dt)
    tracker.advance_to(T / 2.0)
    arg_half = tracker.arg
    tracker.advance_to(T)
    value = tracker.arg / tracker.t
    err = abs(value - arg_half / (T / 2.0))
    err = max(err, _readoff_spread(tracker, value))
    while tol is not None and err > tol and tracker.t < T_max - 1e-9:
        arg_half = tracker.arg
        T_half = tracker.t
        tracker.advance_to(2.0 * T_half)
        value = tracker.arg / tracker.t
        err = abs(value - arg_half / T_half)
        err = max(err, _readoff_spread(tracker, value))
    return RotationEstimate(
        value=float(value), error_bar=float(err), T_used=float(tracker.t),
        unwrap_steps=tracker.steps,
    )


def rotation_profile(
    field: CoefficientField,
    delta=None,
    alpha_grid: Sequence[float] = (),
    T: float = 64.0,
    dt: float = 0.1,
    tol: float | None = 1e-3,
    omega: BasePoint | None = None,
) -> RotationProfile:
    """Rotation number of the lower-left family H2 - alpha Delta over a
    monotone alpha grid, with the worst monotonicity violation (beyond
    the summed error bars) reported."""
    alphas = [float(a) for a in alpha_grid]
    if sorted(alphas) != alphas:
        raise ValueError("alpha_grid must be nondecreasing")
    if delta is not None:
        if not isinstance(delta, BlockMap):
            delta = BlockMap.constant(np.atleast_2d(np.asarray(delta, dtype=float)))
        field = CoefficientField(
            n=field.n, flow=field.flow, H1=field.H1, H2=field.H2, H3=field.H3,
            delta=delta, flags=field.flags, tags=field.tags, name=field.name,
        )
    if field.delta is None:
        raise InvalidCoefficients("rotation_profile needs a perturbation direction")
    estimates = []
    for a in alphas:
        f_a = perturb_h2(field, a) if a != 0.0 else field
        estimates.append(rotation_number(f_a, omega, T=T, dt=dt, tol=tol))
    defect = 0.0
    for (a0, e0), (a1, e1) in zip(
        zip(alphas, estimates), zip(alphas[1:], estimates[1:])
    ):
        slack = 2.0 * (e0.error_bar + e1.error_bar)
        defect = max(defect, e0.value - e1.value - slack)
    return RotationProfile(
        alphas=tuple(alphas), estimates=tuple(estimates),
        monotonicity_defect=float(max(0.0, defect)),
    )


def ed_candidates_from_rotation(
    profile: RotationProfile,
    flat_tol: float | None = None,
) -> list[dict]:
    """Maximal alpha-subintervals where the profile is constant within
    tolerance; plateaus of the rotation number are where a dichotomy can
    live, so each is a candidate for confirmation by detect_ed."""
    rows = profile.rows()
    if not rows:
        return []
    out: list[dict] = []
    start = 0
    ref = rows[0]
    for i in range(1, len(rows) + 1):
        if i < len(rows):
            a, v, e, _ = rows[i]
            tol_i = flat_tol if flat_tol is not None else 2.0 * (e + ref[2]) + 1e-12
            flat = abs(v - ref[1]) <= tol_i
        else:
            flat = False
        if not flat:
            if i - start >= 2:
                vals = [rows[j][1] for j in range(start, i)]
                out.append({
                    "alpha_min": rows[start][0],
                    "alpha_max": rows[i - 1][0],
                    "value": float(np.mean(vals)),
                    "n_points": i - start,
                })
            if i < len(rows):
                start = i
                ref = rows[i]
    return out
