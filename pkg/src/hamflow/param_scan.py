"""Parameter-family scans: the critical coupling alpha* of the
lower-left family H2 - alpha Delta, the regularization boundary
rho(alpha) of H3 + eps I, Weyl monotonicity and left-half-line
certificates, and Herglotz representation / Stieltjes inversion of the
Weyl functions as maps of the spectral parameter.

Bisections run on three-valued predicates (pass / fail / inconclusive).
An inconclusive probe triggers local refinement; if that also fails to
resolve, the reported value keeps the widened bracket and says so,
because finite-time dichotomy detection is intrinsically marginal at the
boundary.  Bracket caps are embedded in every result: hitting the cap
reports +inf, which is a legitimate answer, not a failure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad_vec

from .base_flow import BasePoint
from .dichotomy import detect_ed, nonoscillation_check, uwd_test
from .errors import DivergentLimit, SignViolation, ToolkitError
from .hamiltonian import BlockMap, CoefficientField, perturb_h2, regularize
from .riccati_weyl import weyl_minus, weyl_plus

__all__ = [
    "ScanResult",
    "HerglotzData",
    "StieltjesMass",
    "MonotonicityCertificate",
    "find_alpha_star",
    "rho_curve",
    "weyl_monotonicity_check",
    "left_halfline_check",
    "herglotz_fit",
    "stieltjes_invert",
    "weakstar_convergence_check",
    "weyl_sampler",
]

Sampler = Callable[[complex], np.ndarray]


@dataclass(frozen=True, eq=False)
class ScanResult:
    """Outcome of the alpha* search and/or the rho(alpha) trace."""

    alpha_star: float
    alpha_uncertainty: float
    rho_table: tuple[dict, ...]
    monotonicity_certificate: float | None
    boundary_behavior: dict | None
    bracket: tuple[float, float]
    tol: float
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "alpha_star": self.alpha_star,
            "alpha_uncertainty": self.alpha_uncertainty,
            "rho_table": list(self.rho_table),
            "monotonicity_certificate": self.monotonicity_certificate,
            "boundary_behavior": self.boundary_behavior,
            "bracket": list(self.bracket),
            "tol": self.tol,
            "flags": list(self.flags),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def csv_rows(self) -> list[tuple[float, float, str]]:
        """(alpha, rho, verdict) rows for serialization."""
        return [
            (r["alpha"], r["rho"], r.get("verdict", "")) for r in self.rho_table
        ]


@dataclass(frozen=True, eq=False)
class MonotonicityCertificate:
    min_eigenvalue: float
    alpha1: float
    alpha2: float
    passed: bool
    n_points: int

    def to_dict(self) -> dict:
        return {
            "min_eigenvalue": self.min_eigenvalue,
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "passed": self.passed,
            "n_points": self.n_points,
        }


def _with_delta(field: CoefficientField, delta) -> CoefficientField:
    if delta is None:
        if field.delta is None:
            raise ToolkitError("a perturbation direction Delta is required")
        return field
    if not isinstance(delta, BlockMap):
        delta = BlockMap.constant(np.atleast_2d(np.asarray(delta, dtype=float)))
    return CoefficientField(
        n=field.n, flow=field.flow, H1=field.H1, H2=field.H2, H3=field.H3,
        delta=delta, flags=field.flags, tags=field.tags, name=field.name,
    )


def _check_delta_pd(field: CoefficientField) -> None:
    w = field.flow.origin()
    for t in (0.0, 0.73, 2.9):
        D = field.eval_delta(w, t)
        if np.linalg.eigvalsh(0.5 * (D + D.T)).min() <= 0.0:
            raise ToolkitError("Delta must be positive definite on samples")


def _ed_nc_predicate(
    field: CoefficientField, T_max: float
) -> bool | None:
    rep = detect_ed(field, T_max=T_max)
    if rep.verdict == "noED":
        return False
    if rep.verdict != "ED":
        return None
    return nonoscillation_check(field, rep).holds


def _ed_uwd_predicate(
    field: CoefficientField, T_max: float, uwd_t_max: float
) -> bool | None:
    rep = detect_ed(field, T_max=T_max)
    if rep.verdict == "noED":
        return False
    if rep.verdict != "ED":
        return None
    return bool(uwd_test(field, t_max=uwd_t_max).verdict)


def _bisect_three_valued(
    pred: Callable[[float], bool | None],
    lo: float,
    hi: float,
    tol: float,
) -> tuple[float, float, bool]:
    """Bisect with pred(lo)=True, pred(hi)=False.  Returns (midpoint,
    half-width, widened) where widened means inconclusive probes stopped
    the bracket above tol."""
    widened = False
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        r = pred(mid)
        if r is True:
            lo = mid
            continue
        if r is False:
            hi = mid
            continue
        resolved = False
        for frac in (0.25, 0.75):
            cand = lo + frac * (hi - lo)
            rc = pred(cand)
            if rc is True and cand > lo:
                lo = cand
                resolved = True
                break
            if rc is False and cand < hi:
                hi = cand
                resolved = True
                break
        if not resolved:
            widened = True
            break
    return 0.5 * (lo + hi), 0.5 * (hi - lo), widened


def find_alpha_star(
    field: CoefficientField,
    delta=None,
    alpha_bracket: tuple[float, float] = (0.0, 1e3),
    tol: float = 1e-3,
    T_max: float = 512.0,
    boundary_probe_offset: float | None = None,
) -> ScanResult:
    """Critical coupling of the family H2 - alpha Delta: the supremum of
    the half-line of alpha where the dichotomy and nonoscillation both
    hold.

    Bisection on the three-valued "ED and NC" predicate; the base family
    (alpha at the lower bracket) must pass, and a passing upper bracket
    reports alpha* = +inf with the cap flagged.  boundary_behavior
    records the detector output just above the located alpha*.
    """
    field = _with_delta(field, delta)
    _check_delta_pd(field)
    lo, hi = float(alpha_bracket[0]), float(alpha_bracket[1])
    cache: dict[float, bool | None] = {}

    def pred(a: float) -> bool | None:
        if a not in cache:
            cache[a] = _ed_nc_predicate(perturb_h2(field, a) if a != 0.0 else field,
                                        T_max)
        return cache[a]

    if pred(lo) is not True:
        raise ToolkitError(
            f"base family at alpha={lo:g} must satisfy ED and NC "
            f"(got {pred(lo)})"
        )
    flags: list[str] = []
    if pred(hi) is True:
        return ScanResult(
            alpha_star=float("inf"), alpha_uncertainty=float("inf"),
            rho_table=(), monotonicity_certificate=None,
            boundary_behavior=None, bracket=(lo, hi), tol=tol,
            flags=("bracket_exhausted",),
        )
    if pred(hi) is None:
        flags.append("upper_bracket_inconclusive")
    mid, half, widened = _bisect_three_valued(pred, lo, hi, tol)
    if widened:
        flags.append("widened_by_inconclusive")
    offset = boundary_probe_offset if boundary_probe_offset is not None \
        else max(2.0 * tol, 1e-2)
    probe = mid + offset
    probe_rep = detect_ed(perturb_h2(field, probe), T_max=T_max)
    boundary = {
        "alpha_probe": probe,
        "verdict": probe_rep.verdict,
        "expected": "not ED",
    }
    return ScanResult(
        alpha_star=mid, alpha_uncertainty=half, rho_table=(),
        monotonicity_certificate=None, boundary_behavior=boundary,
        bracket=(lo, hi), tol=tol, flags=tuple(flags),
    )


def rho_curve(
    field: CoefficientField,
    delta=None,
    alpha_grid: Sequence[float] = (),
    eps_bracket: tuple[float, float] = (1e-4, 1e3),
    tol: float = 1e-3,
    T_max: float = 512.0,
    uwd_t_max: float = 40.0,
) -> ScanResult:
    """Regularization boundary per alpha: the largest eps such that
    H3 + eps I restores both the dichotomy and uniform weak disconjugacy
    for the family at alpha, found by bisection on "ED and UWD".

    A passing upper cap reports rho = +inf for that alpha.  If no
    passing lower probe is found the row is flagged "no_lower_pass".
    """
    field = _with_delta(field, delta)
    _check_delta_pd(field)
    eps_lo0, eps_hi = float(eps_bracket[0]), float(eps_bracket[1])
    rows: list[dict] = []
    for a in alpha_grid:
        f_a = perturb_h2(field, float(a)) if a != 0.0 else field
        cache: dict[float, bool | None] = {}

        def pred(eps: float, _f=f_a) -> bool | None:
            if eps not in cache:
                cache[eps] = _ed_uwd_predicate(
                    regularize(_f, eps), T_max, uwd_t_max
                )
            return cache[eps]

        if pred(eps_hi) is True:
            rows.append({"alpha": float(a), "rho": float("inf"),
                         "verdict": "capped", "uncertainty": float("inf")})
            continue
        eps_lo = eps_lo0
        while pred(eps_lo) is not True and eps_lo > 1e-8:
            eps_lo *= 0.1
        if pred(eps_lo) is not True:
            rows.append({"alpha": float(a), "rho": float("nan"),
                         "verdict": "no_lower_pass", "uncertainty": float("nan")})
            continue
        mid, half, widened = _bisect_three_valued(pred, eps_lo, eps_hi, tol)
        rows.append({
            "alpha": float(a), "rho": mid,
            "verdict": "widened" if widened else "ok",
            "uncertainty": half,
        })
    finite = [(r["alpha"], r["rho"]) for r in rows if np.isfinite(r["rho"])]
    flags = []
    for (a0, r0), (a1, r1) in zip(finite, finite[1:]):
        if r1 > r0 + 2.0 * tol:
            flags.append(f"monotonicity_violation_at_{a1:g}")
    return ScanResult(
        alpha_star=float("nan"), alpha_uncertainty=float("nan"),
        rho_table=tuple(rows), monotonicity_certificate=None,
        boundary_behavior=None, bracket=(eps_lo0, eps_hi), tol=tol,
        flags=tuple(flags),
    )


def weyl_monotonicity_check(
    field: CoefficientField,
    delta=None,
    alpha1: float = 0.0,
    alpha2: float = 1.0,
    omega_grid: Sequence[BasePoint] | None = None,
    tol: float = 1e-7,
    weyl_tol: float = 1e-9,
) -> MonotonicityCertificate:
    """Smallest eigenvalue of M+(omega, alpha2) - M+(omega, alpha1) over
    the grid; the family's Weyl function must not decrease as alpha
    grows."""
    if alpha2 < alpha1:
        raise ValueError("alpha1 <= alpha2 required")
    field = _with_delta(field, delta)
    grid = list(omega_grid) if omega_grid is not None else [field.flow.origin()]
    worst = float("inf")
    for w in grid:
        m1 = weyl_plus(field, w, lam=alpha1, tol=weyl_tol).M
        m2 = weyl_plus(field, w, lam=alpha2, tol=weyl_tol).M
        worst = min(worst, float(np.linalg.eigvalsh(np.real(m2 - m1)).min()))
    return MonotonicityCertificate(
        min_eigenvalue=worst, alpha1=float(alpha1), alpha2=float(alpha2),
        passed=worst > -tol, n_points=len(grid),
    )


def left_halfline_check(
    field: CoefficientField,
    delta=None,
    alpha0: float = 0.0,
    test_alphas: Sequence[float] = (),
    omega: BasePoint | None = None,
    tol: float = 1e-7,
    T_max: float = 512.0,
) -> dict:
    """On alpha <= alpha0 with H2 - alpha0 Delta positive definite, the
    family must have ED and NC with M+ negative definite and ordered
    (smaller alpha gives the more negative M+)."""
    field = _with_delta(field, delta)
    if omega is None:
        omega = field.flow.origin()
    H2a = field.H2(field.flow.origin().as_array()) - alpha0 * field.eval_delta(omega, 0.0)
    if np.linalg.eigvalsh(0.5 * (H2a + H2a.T)).min() <= 0.0:
        raise ToolkitError("H2 - alpha0 Delta must be positive definite")
    alphas = sorted(float(a) for a in test_alphas)
    if any(a > alpha0 + 1e-12 for a in alphas):
        raise ValueError("test alphas must lie at or below alpha0")
    per_alpha = []
    ok = True
    prev_M = None
    for a in alphas:
        f_a = perturb_h2(field, a) if a != 0.0 else field
        rep = detect_ed(f_a, T_max=T_max)
        entry = {"alpha": a, "ed": rep.verdict}
        if rep.verdict != "ED":
            ok = False
            per_alpha.append(entry)
            continue
        nc = nonoscillation_check(f_a, rep)
        entry["nc"] = nc.holds
        M = weyl_plus(f_a, omega, lam=0.0, family=None).M
        entry["M_plus_max_eig"] = float(np.linalg.eigvalsh(np.real(M)).max())
        entry["negative_definite"] = entry["M_plus_max_eig"] < tol
        if not (nc.holds and entry["negative_definite"]):
            ok = False
        if prev_M is not None:
            gap = float(np.linalg.eigvalsh(np.real(M - prev_M)).min())
            entry["ordering_gap"] = gap
            if gap < -tol:
                ok = False
        prev_M = M
        per_alpha.append(entry)
    return {"passed": ok, "alpha0": float(alpha0), "entries": per_alpha,
            "tol": tol}


@dataclass(frozen=True, eq=False)
class StieltjesMass:
    """Two-sided Stieltjes limit over a window: interior mass plus half
    of each endpoint atom, with the atoms estimated separately."""

    mass: np.ndarray
    atom_lower: np.ndarray
    atom_upper: np.ndarray
    convergence_error: float
    window: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "mass": np.real(self.mass).tolist(),
            "atom_lower": np.real(self.atom_lower).tolist(),
            "atom_upper": np.real(self.atom_upper).tolist(),
            "convergence_error": self.convergence_error,
            "window": list(self.window),
        }


@dataclass(frozen=True, eq=False)
class HerglotzData:
    L: np.ndarray
    K: np.ndarray
    measure_samples: tuple[StieltjesMass, ...]
    K_min_eig: float
    sign_defect: float

    def to_dict(self) -> dict:
        return {
            "L": np.real(self.L).tolist(),
            "K": np.real(self.K).tolist(),
            "measure_samples": [m.to_dict() for m in self.measure_samples],
            "K_min_eig": self.K_min_eig,
            "sign_defect": self.sign_defect,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _neville_halving(values: list[np.ndarray], order: int = 2) -> tuple[np.ndarray, float]:
    """Limit of a sequence sampled at a halving step parameter, removing
    the first ``order`` powers; returns (limit, last increment)."""
    if len(values) < order + 1:
        raise ValueError("too few samples to extrapolate")
    cur = [np.asarray(v, dtype=complex) for v in values]
    for p in range(1, order + 1):
        f = 2.0 ** p
        cur = [(f * cur[k + 1] - cur[k]) / (f - 1.0) for k in range(len(cur) - 1)]
    if len(cur) >= 2:
        err = float(np.linalg.norm(cur[-1] - cur[-2], 2))
    else:
        err = float("nan")
    return cur[-1], err


def weyl_sampler(
    field: CoefficientField,
    omega: BasePoint | None = None,
    role: str = "M+",
    family: str | None = "H2",
    tol: float = 1e-9,
) -> Sampler:
    """lam -> M(omega, lam) as a plain callable for the Herglotz and
    Stieltjes operations."""
    if omega is None:
        omega = field.flow.origin()
    evaluate = weyl_plus if role == "M+" else weyl_minus

    def sampler(lam: complex) -> np.ndarray:
        return evaluate(field, omega, lam, tol=tol, family=family).M

    return sampler


def _imag_sym(M: np.ndarray) -> np.ndarray:
    Im = np.imag(M)
    return 0.5 * (Im + Im.T)


def herglotz_fit(
    sampler: Sampler,
    beta_grid: Sequence[float] | None = None,
    alpha_window: Sequence[tuple[float, float]] | tuple[float, float] | None = None,
    sign_tol: float = 1e-8,
    sign_check_points: Sequence[complex] | None = None,
) -> HerglotzData:
    """Constants of the upper-half-plane representation
    G(lam) = L + K lam + integral((t - lam)^{-1} - t (1 + t^2)^{-1}) dP.

    L is read off exactly as Re G(i) (the integral term at lam = i is
    purely imaginary).  K is the extrapolated limit of G(i beta)/(i beta)
    along the doubling beta grid.  Requested window masses come from
    stieltjes_invert.  SignViolation if Im G dips below -sign_tol at any
    checked point.
    """
    if beta_grid is None:
        beta_grid = [4.0 * 2.0 ** k for k in range(6)]
    betas = sorted(float(b) for b in beta_grid)
    if sign_check_points is None:
        sign_check_points = [1j * b for b in betas[:3]] + [
            0.3 + 0.5j, -1.1 + 0.25j, 2.7 + 1.5j
        ]
    sign_defect = 0.0
    for lam in sign_check_points:
        lmin = float(np.linalg.eigvalsh(_imag_sym(sampler(complex(lam)))).min())
        sign_defect = min(sign_defect, lmin)
    if sign_defect < -sign_tol:
        raise SignViolation(
            f"Im G has eigenvalue {sign_defect:.3g} < -{sign_tol:g}; "
            "sampler is not Herglotz"
        )
    G_i = np.asarray(sampler(1j))
    L = np.real(G_i)
    L = 0.5 * (L + L.T)
    ratios = [np.asarray(sampler(1j * b)) / (1j * b) for b in betas]
    K_c, K_err = _neville_halving(ratios, order=2)
    K = np.real(K_c)
    K = 0.5 * (K + K.T)
    K_min_eig = float(np.linalg.eigvalsh(K).min())
    masses: list[StieltjesMass] = []
    if alpha_window is not None:
        windows = (
            [alpha_window] if isinstance(alpha_window[0], (int, float))
            else list(alpha_window)
        )
        for a1, a2 in windows:
            masses.append(stieltjes_invert(sampler, float(a1), float(a2)))
    return HerglotzData(
        L=L, K=K, measure_samples=tuple(masses),
        K_min_eig=K_min_eig, sign_defect=float(sign_defect),
    )


def stieltjes_invert(
    sampler: Sampler,
    alpha1: float,
    alpha2: float,
    beta_sequence: Sequence[float] | None = None,
    quad_tol: float = 1e-9,
) -> StieltjesMass:
    """(1/pi) lim over beta of the window integral of Im G(a + i beta),
    which converges to the interior measure plus half of each endpoint
    atom; the atoms themselves are the limits of beta Im G(alpha + i beta).
    """
    if not alpha1 < alpha2:
        raise ValueError("alpha1 < alpha2 required")
    if beta_sequence is None:
        beta_sequence = [0.1 * 0.5 ** k for k in range(6)]
    betas = sorted((float(b) for b in beta_sequence), reverse=True)
    vals = []
    for b in betas:
        integral, _ = quad_vec(
            lambda a: _imag_sym(sampler(complex(a, b))),
            alpha1, alpha2, epsabs=quad_tol, epsrel=1e-8, limit=400,
        )
        vals.append(integral / np.pi)
    limit, err = _neville_halving(vals, order=2)
    raw_diffs = [float(np.linalg.norm(v2 - v1, 2))
                 for v1, v2 in zip(vals, vals[1:])]
    if len(raw_diffs) >= 2 and raw_diffs[-1] > 2.0 * raw_diffs[-2] + 1e-12 \
            and raw_diffs[-1] > 1e-6:
        raise DivergentLimit(
            f"window integral not settling: increments {raw_diffs[-2]:.3g} "
            f"-> {raw_diffs[-1]:.3g}"
        )
    atoms = []
    for a in (alpha1, alpha2):
        seq = [b * _imag_sym(sampler(complex(a, b))) for b in betas]
        atom, _ = _neville_halving(seq, order=1)
        atom = np.real(atom)
        atom[np.abs(atom) < 1e-10] = 0.0
        atoms.append(0.5 * (atom + atom.T))
    return StieltjesMass(
        mass=np.real(limit), atom_lower=atoms[0], atom_upper=atoms[1],
        convergence_error=err, window=(alpha1, alpha2),
    )


def weakstar_convergence_check(
    sampler_sequence: Sequence[Sampler],
    limit_sampler: Sampler,
    test_window: tuple[float, float],
    beta_sequence: Sequence[float] | None = None,
) -> dict:
    """Window masses of a sampler sequence against the limit sampler's;
    the tail max defect should shrink as the sequence converges."""
    a1, a2 = float(test_window[0]), float(test_window[1])
    m_lim = stieltjes_invert(limit_sampler, a1, a2, beta_sequence).mass
    defects = []
    for sampler in sampler_sequence:
        m_k = stieltjes_invert(sampler, a1, a2, beta_sequence).mass
        defects.append(float(np.linalg.norm(m_k - m_lim, 2)))
    tail = defects[len(defects) // 2:]
    return {
        "defects": defects,
        "tail_max": max(tail) if tail else float("nan"),
        "window": [a1, a2],
    }
