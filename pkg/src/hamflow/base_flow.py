"""Compact base flows: Kronecker torus flows, periodic flows, and the
one-point autonomous flow.

A base flow carries the driving dynamics of a nonautonomous linear system:
the coefficients are functions on the phase space of the flow, evaluated
along orbits.  Only three kinds are supported; they cover constant,
periodic and quasi-periodic coefficients, and the torus kind carries the
normalized Haar measure, which has full topological support when the
frequencies are incommensurate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np

from .errors import SchemaError

__all__ = [
    "BaseFlow",
    "BasePoint",
    "make_flow",
    "advance",
    "sample_orbit",
]

# Largest |integer| tried per coordinate when searching for a resonance
# k . nu = 0; chosen so the total search stays below ~10^3 candidates for
# the dimensions in scope (d <= 3).
_RESONANCE_ORDER = 10


@dataclass(frozen=True)
class BasePoint:
    """A point of the base space: d phases in [0, 1).

    Empty for the autonomous flow, a single phase for a periodic flow.
    """

    coordinates: tuple[float, ...] = ()

    def __post_init__(self):
        reduced = tuple(float(c) % 1.0 for c in self.coordinates)
        object.__setattr__(self, "coordinates", reduced)

    @property
    def dim(self) -> int:
        return len(self.coordinates)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coordinates, dtype=float)


@dataclass(frozen=True)
class BaseFlow:
    """A compact base flow.

    Attributes
    ----------
    kind : {"autonomous", "periodic", "torus"}
    period : float
        Only for the periodic kind; strictly positive.
    nu : tuple of float
        Frequency vector, only for the torus kind.
    incommensurate : bool
        True when no small-integer combination annihilates ``nu``
        (exhaustive search up to a fixed order); meaningful for the torus
        kind only.
    """

    kind: str
    period: float = 0.0
    nu: tuple[float, ...] = ()
    incommensurate: bool = field(default=False, compare=False)

    @property
    def dim(self) -> int:
        if self.kind == "torus":
            return len(self.nu)
        if self.kind == "periodic":
            return 1
        return 0

    def origin(self) -> BasePoint:
        return BasePoint((0.0,) * self.dim)

    def to_dict(self) -> dict:
        if self.kind == "torus":
            return {"kind": "torus", "nu": list(self.nu)}
        if self.kind == "periodic":
            return {"kind": "periodic", "period": self.period}
        return {"kind": "autonomous"}


def _has_small_integer_relation(nu: Sequence[float], order: int) -> bool:
    """Exhaustively check whether k . nu = 0 for a nonzero integer vector
    with |k_i| <= order.  Exact zero is required up to roundoff scaled by
    the magnitudes involved."""
    nu = np.asarray(nu, dtype=float)
    scale = np.max(np.abs(nu)) * order
    ranges = [range(-order, order + 1)] * len(nu)
    for k in product(*ranges):
        if all(ki == 0 for ki in k):
            continue
        if abs(float(np.dot(k, nu))) <= 1e-12 * max(scale, 1.0):
            return True
    return False


def make_flow(spec: dict | str) -> BaseFlow:
    """Build and validate a base flow from a descriptor.

    Accepts ``{"kind": "autonomous"}``, ``{"kind": "periodic", "period": p}``,
    ``{"kind": "torus", "nu": [...]}`` or the bare string "autonomous".
    """
    if isinstance(spec, str):
        spec = {"kind": spec}
    if not isinstance(spec, dict) or "kind" not in spec:
        raise SchemaError("flow descriptor must be a dict with a 'kind' key")
    kind = spec["kind"]
    if kind == "autonomous":
        return BaseFlow(kind="autonomous")
    if kind == "periodic":
        period = float(spec.get("period", 0.0))
        if not period > 0.0:
            raise SchemaError("periodic flow requires period > 0")
        return BaseFlow(kind="periodic", period=period)
    if kind == "torus":
        nu = tuple(float(x) for x in spec.get("nu", ()))
        if len(nu) == 0:
            raise SchemaError("torus flow requires a nonempty frequency vector")
        if not all(np.isfinite(nu)) or any(x == 0.0 for x in nu):
            raise SchemaError("torus frequencies must be finite and nonzero")
        incom = not _has_small_integer_relation(nu, _RESONANCE_ORDER)
        return BaseFlow(kind="torus", nu=nu, incommensurate=incom)
    raise SchemaError(f"unknown flow kind: {kind!r}")


def advance(flow: BaseFlow, omega: BasePoint, t: float) -> BasePoint:
    """Move a base point time t along the flow.

    Torus: (omega + t*nu) mod 1 componentwise.  Periodic: one phase at
    rate 1/period.  Autonomous: identity.
    """
    if flow.kind == "autonomous":
        return omega
    if flow.kind == "periodic":
        (phase,) = omega.coordinates
        return BasePoint(((phase + t / flow.period) % 1.0,))
    coords = tuple((c + t * v) % 1.0 for c, v in zip(omega.coordinates, flow.nu))
    return BasePoint(coords)


def sample_orbit(flow: BaseFlow, omega0: BasePoint, N: int, dt: float) -> list[BasePoint]:
    """Return the orbit sample [omega0 . (k dt)] for k = 0..N-1."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if not dt > 0:
        raise ValueError("dt must be > 0")
    return [advance(flow, omega0, k * dt) for k in range(N)]


def orbit_angles(flow: BaseFlow, omega: BasePoint, t: float) -> np.ndarray:
    """Phases of omega . t as a float array (empty for autonomous).

    Convenience used by coefficient evaluation along orbits.
    """
    return advance(flow, omega, t).as_array()


def grid_sample(flow: BaseFlow, count: int, seed: int = 0) -> list[BasePoint]:
    """A deterministic spread of base points used for 'for all omega' checks.

    Autonomous: the single point.  Periodic/torus: a low-discrepancy-ish
    lattice plus the origin; ``count`` is an upper bound.
    """
    if flow.kind == "autonomous" or count <= 1:
        return [flow.origin()]
    d = flow.dim
    rng = np.random.default_rng(seed)
    pts = [flow.origin()]
    # Kronecker lattice offsets give good equidistribution for small counts.
    alpha = np.sqrt(np.array([2.0, 3.0, 5.0, 7.0][:d]))
    for k in range(1, count):
        base = (k * alpha) % 1.0
        jitter = rng.uniform(0, 1e-3, size=d)
        pts.append(BasePoint(tuple((base + jitter) % 1.0)))
    return pts
