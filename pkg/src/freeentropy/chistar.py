"""Non-microstates free entropy by integrating the Fisher estimate along the
semicircular flow.

The half-line t in [0, inf) is mapped to u = t / (1 + t) in [0, 1) and
integrated by Gauss-Legendre on [0, u_max]; the remainder beyond u_max is
estimated by fitting Phi(t) ~ m / (C + t) at the last node.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .fisher import BasisSpec, phi_star_lower
from .lawkit import TraceOracle, heat_flow_law

log = logging.getLogger(__name__)

DEFAULT_NODES = 64
DEFAULT_UMAX = 0.999
DEFAULT_DEGREE = 4
MONOTONE_TOL = 1e-6
SIGN_TOL = 1e-8


def entropy_constant(m: int) -> float:
    return 0.5 * m * math.log(2 * math.pi * math.e)


@dataclass(frozen=True)
class FlowGrid:
    u: np.ndarray
    weights: np.ndarray
    u_max: float

    @classmethod
    def gauss_legendre(cls, nodes: int = DEFAULT_NODES, u_max: float = DEFAULT_UMAX) -> "FlowGrid":
        if not 0 < u_max < 1:
            raise ValueError("u_max must lie in (0, 1)")
        if nodes < 1:
            raise ValueError("need at least one node")
        x, w = np.polynomial.legendre.leggauss(nodes)
        u = 0.5 * u_max * (x + 1.0)
        return cls(u, 0.5 * u_max * w, u_max)

    @property
    def t(self) -> np.ndarray:
        return self.u / (1.0 - self.u)

    @property
    def jacobian(self) -> np.ndarray:
        # dt = du / (1 - u)^2
        return 1.0 / (1.0 - self.u) ** 2

    @property
    def t_max(self) -> float:
        return self.u_max / (1.0 - self.u_max)


@dataclass
class ChiStarReport:
    value: float
    degree: int
    m: int
    quadrature: float
    tail: float
    constant: float
    quadrature_error: float
    samples: List[dict] = field(default_factory=list)
    monotone: bool = True
    warnings: List[str] = field(default_factory=list)
    nodes: int = 0
    u_max: float = DEFAULT_UMAX

    @property
    def error_estimate(self) -> float:
        return abs(self.quadrature_error)

    def to_dict(self):
        return asdict(self)


def phi_star_flow(base: TraceOracle, t: float, degree: int = DEFAULT_DEGREE, m: Optional[int] = None,
                  y_indices: Sequence[int] = (), basis: Optional[BasisSpec] = None) -> float:
    """Phi-hat*(X + sqrt(t) S : Y) at degree d."""
    if t <= 0:
        raise ValueError("flow time must be positive")
    if m is None:
        m = len(base.x_letters)
    flowed = heat_flow_law(base, t)
    return phi_star_lower(flowed, m, y_indices, degree, basis=basis).value


def _integrate(base, m, y_indices, degree, grid, basis):
    t = grid.t
    phis = np.array([phi_star_flow(base, float(tk), degree, m, y_indices, basis) for tk in t])
    ref = m / (1.0 + t)
    integrand = 0.5 * (ref - phis) * grid.jacobian
    quad = float(np.sum(grid.weights * integrand))
    return t, ref, phis, quad


def _tail(m, t_last, phi_last, t_max):
    if phi_last <= 0:
        return float("inf")
    c = m / phi_last - t_last
    if c + t_max <= 0:
        return float("inf")
    return 0.5 * m * math.log((c + t_max) / (1.0 + t_max))


def chi_star_upper(
    base: TraceOracle,
    m: Optional[int] = None,
    degree: int = DEFAULT_DEGREE,
    grid: Optional[FlowGrid] = None,
    y_indices: Sequence[int] = (),
    error_check: bool = True,
) -> ChiStarReport:
    """Estimate chi*(X : Y); an upper estimate because Phi-hat* <= Phi* at every node.

    With ``error_check`` the integral is repeated on a half-size grid and the
    difference is reported as ``quadrature_error``.
    """
    if m is None:
        m = len(base.x_letters)
    if grid is None:
        grid = FlowGrid.gauss_legendre()
    basis = BasisSpec.build(m, degree, y_indices)
    t, ref, phis, quad = _integrate(base, m, y_indices, degree, grid, basis)
    tail = _tail(m, float(t[-1]), float(phis[-1]), grid.t_max)
    const = entropy_constant(m)

    qerr = 0.0
    if error_check and len(grid.u) >= 2:
        coarse = FlowGrid.gauss_legendre(max(1, len(grid.u) // 2), grid.u_max)
        ct, _, cphis, cquad = _integrate(base, m, y_indices, degree, coarse, basis)
        ctail = _tail(m, float(ct[-1]), float(cphis[-1]), grid.t_max)
        qerr = abs((quad + tail) - (cquad + ctail))

    warnings = []
    above = phis > ref + SIGN_TOL
    if np.count_nonzero(above) > len(phis) // 4:
        msg = (f"Fisher estimate exceeds m/(1+t) at {int(np.count_nonzero(above))} of {len(phis)} nodes; "
               "the integrand is negative there")
        warnings.append(msg)
        log.warning(msg)
    monotone = bool(np.all(np.diff(phis) <= MONOTONE_TOL))
    if not monotone:
        msg = "Fisher estimate is not nonincreasing along the flow"
        warnings.append(msg)
        log.warning(msg)

    samples = [{"t": float(a), "reference": float(b), "phi": float(c)} for a, b, c in zip(t, ref, phis)]
    return ChiStarReport(
        value=quad + tail + const,
        degree=degree,
        m=m,
        quadrature=quad,
        tail=tail,
        constant=const,
        quadrature_error=qerr,
        samples=samples,
        monotone=monotone,
        warnings=warnings,
        nodes=len(grid.u),
        u_max=grid.u_max,
    )
