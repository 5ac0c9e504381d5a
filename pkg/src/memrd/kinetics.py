"""Model parameters, kinetic terms and their exact partial derivatives.

The membrane carries an active concentration ``u`` and an inactive one ``v``;
the cytosolic pool ``V`` is spatially constant and tied to the membrane mass
through global conservation. Activation kinetics ``f`` combine a baseline
catalyst rate with a saturating positive feedback and a Michaelis-Menten
deactivation; the exchange flux ``q`` is a Langmuir attachment law with a
linear detachment term.

System-size factor ``gamma`` is stored here but applied by the simulator and
the dispersion analysis, so the same kinetics serve the ODE, PDE and
linear-analysis code paths. Values outside the physical range (negative
concentrations) are evaluated as-is; monitoring is the caller's job.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Parameters",
    "DimensionalParameters",
    "KinkWarning",
    "nondimensionalize",
    "f",
    "g0",
    "q",
    "q0",
    "q1",
    "V_of_integral",
    "jac_f",
    "jac_q",
    "jac_q0",
    "jac_q1",
    "qss_complex",
]

UNIT_SPHERE_AREA = 4.0 * math.pi
UNIT_BALL_VOLUME = 4.0 * math.pi / 3.0


class KinkWarning(UserWarning):
    """Derivative requested at the saturation kink u + v = 1."""


@dataclass(frozen=True)
class Parameters:
    """Dimensionless model constants.

    ``a1``..``a5`` are the reaction constants (``a2``, ``a5`` are the
    Michaelis denominators and must be positive), ``a6``/``a_neg6`` the
    sorption constants, ``d`` the lateral diffusion ratio, ``gamma`` the
    system-size factor, ``V0`` the total pool. Geometry enters through
    ``c`` (reciprocal enclosed volume) and ``gamma_area`` (surface area);
    their product ``cG`` and the pool capacity ``m = V0 / cG`` are derived.
    """

    a1: float
    a2: float
    a3: float
    a4: float
    a5: float
    a6: float
    a_neg6: float
    d: float
    gamma: float
    V0: float
    c: float = 1.0 / UNIT_BALL_VOLUME
    gamma_area: float = UNIT_SPHERE_AREA

    def __post_init__(self):
        for name in ("a1", "a2", "a3", "a4", "a5", "a6", "a_neg6"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.a2 <= 0 or self.a5 <= 0:
            raise ValueError("a2 and a5 (Michaelis denominators) must be positive")
        if self.d <= 0:
            raise ValueError("diffusion ratio d must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.V0 <= 0:
            raise ValueError("V0 must be positive")
        if self.c <= 0 or self.gamma_area <= 0:
            raise ValueError("geometry factors c and gamma_area must be positive")

    @property
    def cG(self) -> float:
        """Surface area divided by enclosed volume."""
        return self.c * self.gamma_area

    @property
    def m(self) -> float:
        """Pool capacity V0 / cG; u + v <= min(1, m) bounds homogeneous states."""
        return self.V0 / self.cG

    def replace(self, **changes) -> "Parameters":
        return dataclasses.replace(self, **changes)

    @classmethod
    def baseline(cls, **overrides) -> "Parameters":
        """Reference parameter set on the unit sphere (d = 1000, gamma = 400)."""
        values = dict(
            a1=0.0, a2=20.0, a3=160.0, a4=1.0, a5=0.5, a6=0.1, a_neg6=1.0,
            d=1000.0, gamma=400.0, V0=10.0,
            c=1.0 / UNIT_BALL_VOLUME, gamma_area=UNIT_SPHERE_AREA,
        )
        values.update(overrides)
        return cls(**values)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Parameters":
        return cls(**data)


@dataclass(frozen=True)
class DimensionalParameters:
    """Dimensional rate constants (SI units as listed).

    k1, k2, k5 in m^2/(mol s); k3 in mol/(m^2 s); k4 in mol/m^2; k_neg5 in
    1/s; b6 in m^2/(mol s); b_neg6 in 1/s; g0bar and cmax in mol/m^2;
    du, dv, Dcyt in m^2/s; R in m; V_init in mol/m^3. ``vol_over_area`` is
    the scale-invariant ratio volume / (area * R).
    """

    k1: float
    k2: float
    k3: float
    k4: float
    k5: float
    k_neg5: float
    b6: float
    b_neg6: float
    g0bar: float
    du: float
    dv: float
    Dcyt: float
    cmax: float
    R: float
    vol_over_area: float
    V_init: float

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 0:
            raise ValueError("k1 and k2 must be nonnegative")
        for name in ("k3", "k4", "k5", "k_neg5", "b6", "b_neg6", "g0bar",
                     "du", "dv", "Dcyt", "cmax", "R", "vol_over_area", "V_init"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DimensionalParameters":
        return cls(**data)


# Reference unit of length (metres): gamma = (R / UNIT_LENGTH)^2.
UNIT_LENGTH = 1.0


def nondimensionalize(dp: DimensionalParameters) -> Parameters:
    """Map dimensional rates to the dimensionless constants.

    Concentrations are scaled by the saturation density, lengths by the
    reference unit and time by the lateral diffusion of the active form.
    ``a3`` is computed directly from ``k2`` so that ``k1 = 0`` needs no
    special casing. All constants except ``gamma`` are independent of the
    system size ``R``.
    """
    i2 = UNIT_LENGTH**2
    K5 = dp.k5 / dp.k_neg5
    cG = 1.0 / dp.vol_over_area
    gamma_area = UNIT_SPHERE_AREA  # reporting convention: unit-sphere geometry
    return Parameters(
        a1=i2 * dp.k1 * dp.g0bar / dp.du,
        a2=1.0 / (K5 * dp.cmax),
        a3=i2 * dp.k2 * dp.g0bar / dp.du,
        a4=i2 * dp.k3 / (dp.du * dp.cmax),
        a5=dp.k4 / dp.cmax,
        a6=i2 * dp.b6 * dp.cmax * dp.vol_over_area / dp.du,
        a_neg6=i2 * dp.b_neg6 / dp.du,
        d=dp.dv / dp.du,
        gamma=(dp.R / UNIT_LENGTH) ** 2,
        V0=dp.R * dp.V_init / dp.cmax,
        c=cG / gamma_area,
        gamma_area=gamma_area,
    )


# -- kinetic terms (vectorized over nodal arrays) --------------------------------

def f(u, v, p: Parameters):
    """Activation kinetics: feedback-catalyzed production minus deactivation."""
    return (p.a1 + (p.a3 - p.a1) * u / (p.a2 + u)) * v - p.a4 * u / (p.a5 + u)


def q(w, v, V, p: Parameters):
    """Exchange flux with the pool V; saturates for membrane load w >= 1."""
    return p.a6 * V * np.maximum(1.0 - w, 0.0) - p.a_neg6 * v


def V_of_integral(total, p: Parameters):
    """Pool value from the membrane integral of u + v; may be negative."""
    return p.V0 - p.c * total


def q0(w, v, p: Parameters):
    """Exchange flux of the homogeneous (ODE) reduction: the pool follows w."""
    return q(w, v, p.V0 - p.cG * w, p)


def q1(w, v, Vstar, p: Parameters):
    """Exchange flux linearized around an interior state: pool frozen at Vstar,
    no saturation clamp."""
    return p.a6 * Vstar * (1.0 - w) - p.a_neg6 * v


def g0(u, v, p: Parameters):
    """Inactive-form kinetics of the homogeneous reduction: -f + q0."""
    w = u + v
    return -f(u, v, p) + q0(w, v, p)


# -- exact Jacobians -------------------------------------------------------------

def jac_f(u, v, p: Parameters):
    """(df/du, df/dv), exact closed forms; df/dv depends on u only."""
    du_ = p.a2 * (p.a3 - p.a1) * v / (p.a2 + u) ** 2 - p.a4 * p.a5 / (p.a5 + u) ** 2
    dv_ = p.a1 + (p.a3 - p.a1) * u / (p.a2 + u)
    return du_, dv_


def _warn_kink(w):
    if np.any(np.asarray(w) == 1.0):
        warnings.warn(
            "derivative of the saturating flux evaluated at u + v = 1; "
            "using the interior branch",
            KinkWarning,
            stacklevel=3,
        )


def jac_q(w, v, V, p: Parameters):
    """(dq/du, dq/dv) at frozen pool V.

    Piecewise in the membrane load; the kink at w = 1 takes the interior
    branch because the states of interest satisfy u + v < 1.
    """
    _warn_kink(w)
    inside = np.asarray(w) <= 1.0
    dw = np.where(inside, -p.a6 * np.asarray(V), 0.0)
    return dw, dw - p.a_neg6


def jac_q0(w, v, p: Parameters):
    """(dq0/du, dq0/dv) of the homogeneous reduction (pool follows w)."""
    _warn_kink(w)
    inside = np.asarray(w) <= 1.0
    dw = np.where(inside, -p.a6 * p.cG * (1.0 + p.m - 2.0 * np.asarray(w)), 0.0)
    return dw, dw - p.a_neg6


def jac_q1(Vstar, p: Parameters):
    """(dq1/du, dq1/dv): constants, the linearized flux has no kink."""
    du_ = -p.a6 * Vstar
    return du_, du_ - p.a_neg6


# -- quasi-steady-state complex reduction ------------------------------------------

def qss_complex(u, g0bar: float, K5: float):
    """Complex and free-catalyst concentrations under the fast-complex limit.

    Returns ``(m_complex, g_free)`` with ``m_complex + g_free == g0bar``
    exactly (the free part is computed as the conservation remainder).
    """
    if K5 < 0:
        raise ValueError("K5 must be nonnegative")
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("u must be nonnegative")
    m_complex = K5 * u * g0bar / (1.0 + K5 * u)
    return m_complex, g0bar - m_complex
