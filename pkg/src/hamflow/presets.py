"""Built-in example systems with frozen reference values.

The four autonomous scalar/block examples have closed-form Weyl
functions, critical couplings, regularization boundaries, and rotation
numbers; those numbers are recorded here once and consumed both by the
command-line `examples` runner and by the test suite.  Also ships the
abnormal family used by the classification alternative, a scalar LQ
problem, and a quasi-periodic demo field on the 2-torus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .base_flow import make_flow
from .errors import SchemaError
from .hamiltonian import BlockMap, CoefficientField, TrigTerm, constant_field
from .lq_control import LQProblem

__all__ = [
    "Preset",
    "GoldenValue",
    "PRESET_NAMES",
    "get_preset",
    "scalar_lq_problem",
]


@dataclass(frozen=True, eq=False)
class GoldenValue:
    """One frozen reference number: what to compare, against what, how
    tightly."""

    label: str
    want: float
    tol: float


@dataclass(frozen=True, eq=False)
class Preset:
    name: str
    description: str
    field: CoefficientField
    weyl_plus_law: Callable[[complex], complex] | None = None
    weyl_minus_law: Callable[[complex], complex] | None = None
    weyl_lambdas: tuple[float, ...] = ()
    m_minus_exists: bool = True
    alpha_star: float | None = None
    alpha_star_tol: float = 1e-3
    rho_law: Callable[[float], float] | None = None
    rho_alphas: tuple[float, ...] = ()
    rho_tol: float = 1e-3
    rotation_law: Callable[[float], float] | None = None
    rotation_alphas: tuple[float, ...] = ()
    ed_verdicts: tuple[tuple[float, bool], ...] = ()
    extra_golden: tuple[GoldenValue, ...] = dc_field(default=())


def _ex1_field() -> CoefficientField:
    return constant_field(
        H1=[[-1.0]], H2=[[0.0]], H3=[[0.0]], delta=[[1.0]], name="ex1"
    )


def _ex2_field() -> CoefficientField:
    return constant_field(
        H1=[[-1.0]], H2=[[0.0]], H3=[[1.0]], delta=[[1.0]], name="ex2"
    )


def _ex3_field() -> CoefficientField:
    return constant_field(
        H1=[[0.0]], H2=[[1.0]], H3=[[1.0]], delta=[[1.0]], name="ex3"
    )


def _ex4_field() -> CoefficientField:
    return constant_field(
        H1=np.diag([-1.0, 0.0]),
        H2=np.diag([0.0, 1.0]),
        H3=np.diag([0.0, 1.0]),
        delta=np.eye(2),
        name="ex4",
    )


def _abnormal_field() -> CoefficientField:
    return constant_field(
        H1=[[0.0]], H2=[[0.0]], H3=[[1.0]], delta=[[1.0]], name="abnormal"
    )


def _torus_demo_field() -> CoefficientField:
    """Quasi-periodic scalar system over the golden-ratio Kronecker flow;
    hyperbolic on the whole torus (the H1 part stays below -0.5)."""
    nu = (1.0, 0.5 * (1.0 + math.sqrt(5.0)))
    flow = make_flow({"kind": "torus", "nu": list(nu)})
    h1 = BlockMap(
        n=1, const=np.array([[-1.0]]),
        terms=(
            TrigTerm(k=(1, 0), cos=np.array([[0.25]]), sin=None),
            TrigTerm(k=(0, 1), cos=None, sin=np.array([[0.2]])),
        ),
    )
    h2 = BlockMap(
        n=1, const=np.array([[0.3]]),
        terms=(TrigTerm(k=(1, -1), cos=np.array([[0.1]]), sin=None),),
    )
    h3 = BlockMap(
        n=1, const=np.array([[0.5]]),
        terms=(TrigTerm(k=(0, 1), cos=np.array([[0.2]]), sin=None),),
    )
    return CoefficientField(
        n=1, flow=flow, H1=h1, H2=h2, H3=h3,
        delta=BlockMap.constant(np.array([[1.0]])), name="torus-demo",
    )


def _build_presets() -> dict[str, Preset]:
    presets = {}
    presets["ex1"] = Preset(
        name="ex1",
        description="H1=-1, H2=0, H3=0: M+(lam)=lam/2, M- never exists, "
                    "alpha*=+inf, rho(lam)=1/lam",
        field=_ex1_field(),
        weyl_plus_law=lambda lam: 0.5 * lam,
        weyl_minus_law=None,
        weyl_lambdas=(-2.0, -1.0, 0.0, 1.0, 5.0),
        m_minus_exists=False,
        alpha_star=float("inf"),
        rho_law=lambda a: 1.0 / a,
        rho_alphas=(0.5, 1.0, 2.0),
    )
    presets["ex2"] = Preset(
        name="ex2",
        description="H1=-1, H2=0, H3=1: I=(-inf,1), alpha*=1, "
                    "rho(lam)=-1+1/lam on (0,1)",
        field=_ex2_field(),
        weyl_plus_law=lambda lam: 1.0 - np.sqrt(1.0 - lam),
        weyl_lambdas=(-3.0, -1.0, 0.0, 0.5),
        alpha_star=1.0,
        rho_law=lambda a: -1.0 + 1.0 / a,
        rho_alphas=(0.25, 0.5, 0.75),
        ed_verdicts=((0.5, True), (1.01, False)),
    )
    presets["ex3"] = Preset(
        name="ex3",
        description="H1=0, H2=1, H3=1: M+-(lam)=-+sqrt(1-lam), rho=inf "
                    "below 1, rotation sqrt(lam-1) above 1",
        field=_ex3_field(),
        weyl_plus_law=lambda lam: -np.sqrt(complex(1.0 - lam)),
        weyl_minus_law=lambda lam: np.sqrt(complex(1.0 - lam)),
        weyl_lambdas=(-4.0, 0.0, 0.9),
        alpha_star=1.0,
        rotation_law=lambda a: 0.0 if a <= 1.0 else math.sqrt(a - 1.0),
        rotation_alphas=(-4.0, 0.0, 0.9, 1.5, 2.0, 5.0),
        ed_verdicts=((-4.0, True), (0.0, True), (0.9, True),
                     (1.5, False), (2.0, False)),
        extra_golden=(
            GoldenValue("stieltjes_mass(1,2)", 2.0 / (3.0 * math.pi), 1e-2),
            GoldenValue("N_plus", -1.0, 1e-6),
            GoldenValue("N_minus", 1.0, 1e-6),
        ),
    )
    presets["ex4"] = Preset(
        name="ex4",
        description="ex1 (+) ex3 block system: alpha*=1, rho(alpha)=1/alpha "
                    "near 1, rho0=1",
        field=_ex4_field(),
        alpha_star=1.0,
        rho_law=lambda a: 1.0 / a,
        rho_alphas=(0.8, 0.9),
        rho_tol=1e-2,
        extra_golden=(GoldenValue("rho0", 1.0, 1e-2),),
    )
    presets["abnormal"] = Preset(
        name="abnormal",
        description="H1=0, H2=0, H3=1: bounded solution (x,0), Atkinson "
                    "fails, classification lands on the shape alternative",
        field=_abnormal_field(),
    )
    presets["torus-demo"] = Preset(
        name="torus-demo",
        description="quasi-periodic hyperbolic demo over the golden-ratio "
                    "torus flow",
        field=_torus_demo_field(),
    )
    return presets


_PRESETS = _build_presets()
PRESET_NAMES = tuple(sorted(_PRESETS))


def get_preset(name: str) -> Preset:
    try:
        return _PRESETS[name]
    except KeyError:
        raise SchemaError(
            f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}"
        ) from None


def scalar_lq_problem() -> LQProblem:
    """A=0, B=1, G=1, g=0, R=1, x0=1: value 1/2, feedback u=-x."""
    return LQProblem.from_data(A=0.0, B=1.0, G=1.0, x0=[1.0])
