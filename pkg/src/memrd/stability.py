"""Homogeneous steady states, stability conditions and diffusive instabilities.

The homogeneous reduction of the surface system is a planar ODE for ``(u, v)``
with the pool eliminated through mass conservation. This module locates its
interior equilibria, evaluates the closed-form existence / stability /
instability conditions with explicit left- and right-hand values, computes the
band of Laplace-Beltrami eigenvalues whose modes grow, the critical diffusion
ratio, and runs the randomized equal-diffusion scan (no diffusive instability
is expected at d = 1 for stable activator--substrate-depletion states).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kinetics
from .kinetics import Parameters

__all__ = [
    "SteadyState",
    "ConditionRecord",
    "CheckValue",
    "TuringBand",
    "TuringReport",
    "ScanReport",
    "SteadyStateError",
    "ConditionError",
    "BracketError",
    "v_of_u",
    "u0",
    "phi",
    "find_steady_state",
    "check_conditions",
    "sufficient_d",
    "homogeneous_stability",
    "turing_conditions",
    "growth_rates",
    "unstable_modes",
    "critical_d",
    "no_turing_scan",
    "turing_report",
]

PHI_TOL = 1e-12
BRACKET_TOL = 1e-14


class SteadyStateError(RuntimeError):
    """No interior steady state could be located; carries diagnostics."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class ConditionError(ValueError):
    """A closed-form expression was used outside its validity conditions."""


class BracketError(RuntimeError):
    """A bisection bracket could not be established."""


@dataclass(frozen=True)
class SteadyState:
    """Interior homogeneous equilibrium with both linearization Jacobians.

    ``J0`` is the Jacobian of the homogeneous reduction (pool follows the
    state), ``J1`` of the heterogeneous linearization (pool frozen); neither
    includes the system-size factor.
    """

    u_star: float
    v_star: float
    V_star: float
    u0_bracket: float
    u1_bracket: float
    J0: np.ndarray
    J1: np.ndarray
    f_residual: float
    phi_residual: float
    sign_changes: int

    @property
    def w_star(self) -> float:
        return self.u_star + self.v_star


@dataclass(frozen=True)
class ConditionRecord:
    """One strict inequality with both sides exposed.

    ``satisfied`` means strict satisfaction; ``equality`` flags the
    left == right boundary case separately.
    """

    key: str
    description: str
    left: float
    right: float
    relation: str  # "<" or ">", applied as: left <relation> right
    satisfied: bool
    equality: bool

    @classmethod
    def compare(cls, key, description, left, right, relation) -> "ConditionRecord":
        left, right = float(left), float(right)
        if relation == "<":
            ok = left < right
        elif relation == ">":
            ok = left > right
        else:
            raise ValueError(f"unknown relation {relation!r}")
        return cls(key, description, left, right, relation, ok, left == right)


@dataclass(frozen=True)
class CheckValue:
    value: float
    satisfied: bool


@dataclass(frozen=True)
class TuringBand:
    """Heterogeneous-instability conditions and the unstable eigenvalue band.

    ``mu_minus``/``mu_plus`` are scaled by gamma and present only when both
    conditions hold; ``mu_minus_unit``/``mu_plus_unit`` are the gamma = 1
    band endpoints.
    """

    tu3: CheckValue
    tu4: CheckValue
    d: float
    gamma: float
    mu_minus: float | None = None
    mu_plus: float | None = None
    mu_minus_unit: float | None = None
    mu_plus_unit: float | None = None

    @property
    def exists(self) -> bool:
        return self.tu3.satisfied and self.tu4.satisfied


def v_of_u(u, p: Parameters):
    """Inactive concentration solving the activation balance at given ``u``.

    v[u] = a4 u (a2 + u) / ((a5 + u)(a1 a2 + a3 u)); v[0] is taken as 0.
    """
    u_arr = np.asarray(u, dtype=float)
    num = p.a4 * u_arr * (p.a2 + u_arr)
    den = (p.a5 + u_arr) * (p.a1 * p.a2 + p.a3 * u_arr)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(u_arr == 0.0, 0.0, num / np.where(den == 0.0, 1.0, den))
    if np.ndim(u) == 0:
        return float(out)
    return out


def u0(p: Parameters) -> float:
    """Location of the maximum of ``v_of_u`` (zero for a1 = 0).

    Requires a2 > a5 and 2 a1 a2 < a3 (a2 - a5); raises
    :class:`ConditionError` naming the violated inequality otherwise.
    """
    if not p.a2 > p.a5:
        raise ConditionError(f"requires a2 > a5, got a2={p.a2}, a5={p.a5}")
    if not 2.0 * p.a1 * p.a2 < p.a3 * (p.a2 - p.a5):
        raise ConditionError(
            f"requires 2 a1 a2 < a3 (a2 - a5), got {2 * p.a1 * p.a2} vs "
            f"{p.a3 * (p.a2 - p.a5)}"
        )
    den = p.a3 * (p.a2 - p.a5) - p.a1 * p.a2
    root = p.a2 * math.sqrt(p.a1 * p.a5) * math.sqrt((p.a3 - p.a1) * (p.a2 - p.a5))
    return p.a1 * p.a2 * p.a5 / den + root / den


def phi(u, p: Parameters):
    """Pool-balance residual along the activation-balance curve (no clamp)."""
    w = np.asarray(u, dtype=float) + v_of_u(u, p)
    out = p.a6 * (p.V0 - p.cG * w) * (1.0 - w) - p.a_neg6 * v_of_u(u, p)
    if np.ndim(u) == 0:
        return float(out)
    return out


def _bisect(fn, lo, hi, flo, *, value_tol=None, width_tol=BRACKET_TOL):
    """Bisection for fn with sign change between lo (flo) and hi."""
    pos = flo > 0.0
    mid, fmid = lo, flo
    while hi - lo > width_tol:
        mid = 0.5 * (lo + hi)
        fmid = fn(mid)
        if value_tol is not None and abs(fmid) < value_tol:
            return mid, fmid
        if (fmid > 0.0) == pos:
            lo = mid
        else:
            hi = mid
    return mid, fmid


def find_steady_state(p: Parameters, scan_points: int = 200) -> SteadyState:
    """Locate the interior homogeneous equilibrium.

    The admissible upper end ``u1`` solves u + v[u] = min(1, m); the
    equilibrium is the smallest root of the pool balance on (u0, u1),
    bisected to |phi| < 1e-12 or bracket width < 1e-14. Raises
    :class:`SteadyStateError` with endpoint diagnostics when no bracket or
    sign change exists.
    """
    mn = min(1.0, p.m)
    try:
        u_lo = u0(p)
    except ConditionError:
        u_lo = 0.0

    psi = lambda u: u + v_of_u(u, p) - mn
    psi_lo, psi_hi = psi(u_lo), psi(mn)
    if not (psi_lo < 0.0 <= psi_hi):
        raise SteadyStateError(
            "admissible bracket failure: u + v[u] does not cross min(1, m)",
            psi_low=psi_lo, psi_high=psi_hi, u_low=u_lo, u_high=mn,
        )
    u1, _ = _bisect(psi, u_lo, mn, psi_lo)

    phi_lo = phi(u_lo, p)
    if phi_lo <= 0.0:
        raise SteadyStateError(
            "no interior steady state: pool balance is not positive at the "
            "lower bracket end",
            phi_low=phi_lo, phi_high=phi(u1, p), u_low=u_lo, u_high=u1,
        )
    grid = np.linspace(u_lo, u1, scan_points)
    values = phi(grid, p)
    values[0] = phi_lo
    signs = np.sign(values)
    flips = np.flatnonzero(signs[:-1] * signs[1:] < 0)
    zeros = np.flatnonzero(signs[1:] == 0.0)
    sign_changes = int(len(flips) + len(zeros))
    if sign_changes == 0:
        raise SteadyStateError(
            "no interior steady state found: pool balance has no sign change",
            phi_low=float(values[0]), phi_high=float(values[-1]),
            u_low=u_lo, u_high=u1,
        )
    # smallest root: earliest grid interval carrying a flip or an exact zero
    i = int(min(
        flips[0] if len(flips) else scan_points,
        zeros[0] if len(zeros) else scan_points,
    ))
    u_star, phi_res = _bisect(
        lambda u: phi(u, p), grid[i], grid[i + 1], values[i], value_tol=PHI_TOL
    )

    v_star = v_of_u(u_star, p)
    w_star = u_star + v_star
    V_star = p.V0 - p.cG * w_star
    fu, fv = kinetics.jac_f(u_star, v_star, p)
    q0u, q0v = kinetics.jac_q0(w_star, v_star, p)
    q1u, q1v = kinetics.jac_q1(V_star, p)
    J0 = np.array([[fu, fv], [-fu + q0u, -fv + q0v]], dtype=float)
    J1 = np.array([[fu, fv], [-fu + q1u, -fv + q1v]], dtype=float)

    ss = SteadyState(
        u_star=float(u_star), v_star=float(v_star), V_star=float(V_star),
        u0_bracket=float(u_lo), u1_bracket=float(u1), J0=J0, J1=J1,
        f_residual=float(kinetics.f(u_star, v_star, p)),
        phi_residual=float(phi_res), sign_changes=sign_changes,
    )
    if not w_star < mn:
        raise SteadyStateError(
            f"computed state violates u* + v* < min(1, m): {w_star} vs {mn}",
            u_star=u_star, v_star=v_star,
        )
    if abs(ss.f_residual) > 1e-12 or abs(ss.phi_residual) > 1e-10:
        raise SteadyStateError(
            "steady-state residuals exceed tolerance",
            f_residual=ss.f_residual, phi_residual=ss.phi_residual,
        )
    return ss


def _safe_div(num: float, den: float) -> float:
    if den == 0.0:
        return math.inf if num >= 0 else -math.inf
    return num / den


def check_conditions(p: Parameters) -> dict:
    """Evaluate every closed-form condition with explicit left/right values.

    cdt1-cdt4 are the existence conditions, cdt5-cdt6 the homogeneous
    stability conditions, cdt7 supports the equilibrium bounds, cdt8 with the
    diffusion thresholds cdtd1/cdtd2 are sufficient for a diffusive
    instability at large enough system size.
    """
    a1, a2, a3, a4, a5 = p.a1, p.a2, p.a3, p.a4, p.a5
    a6, a_neg6, V0 = p.a6, p.a_neg6, p.V0
    mn = min(1.0, p.m)
    records = {}

    def add(key, description, left, right, relation):
        records[key] = ConditionRecord.compare(key, description, left, right, relation)

    add("cdt1", "a2 > a5", a2, a5, ">")
    add("cdt2", "4 a2 a4 < a3 a5 min(1,m)", 4 * a2 * a4, a3 * a5 * mn, "<")
    add("cdt3", "4 a4 a5 a-6 < V0 a2 a3 a6", 4 * a4 * a5 * a_neg6, V0 * a2 * a3 * a6, "<")
    add(
        "cdt4",
        "a1 < min(a3(a2-a5)/(2 a2), a3^2 (a2-a5)^2 min(1,m)^2 / (256 a2^2 a5))",
        a1,
        min(
            _safe_div(a3 * (a2 - a5), 2 * a2),
            _safe_div(a3**2 * (a2 - a5) ** 2 * mn**2, 256.0 * a2**2 * a5),
        ),
        "<",
    )
    add("cdt5", "2 a4 (a2-a5) < a3 a5^2", 2 * a4 * (a2 - a5), a3 * a5**2, "<")
    add("cdt6", "a-6 < a6 cG |1-m|", a_neg6, a6 * p.cG * abs(1.0 - p.m), "<")
    add("cdt7", "a1 a2 < a3/(1+a3^2)", a1 * a2, a3 / (1.0 + a3**2), "<")
    a32 = a3**2
    add(
        "cdt8",
        "a1 < min(min(1,m) a3 / (2 a2 (a3^2+1)), "
        "min(1,m)^2 a3 (a2-a5) / (4 a2 (a2+1)^2 (a3^2+1)))",
        a1,
        min(
            _safe_div(mn * a3, 2 * a2 * (a32 + 1)),
            _safe_div(mn**2 * a3 * (a2 - a5), 4 * a2 * (a2 + 1) ** 2 * (a32 + 1)),
        ),
        "<",
    )
    d1_rhs = _safe_div(
        2.0 * (a3 * (a32 + 2) + (a2 + 1) * (a32 + 1) * (a6 * V0 + a_neg6))
        * (a32 + 2) * (a5 + 1) ** 2,
        mn * a32 * a4 * (a2 - a5) * (a32 + 1),
    )
    add("cdtd1", "d > lower diffusion threshold 1", p.d, d1_rhs, ">")
    d2_rhs = _safe_div(
        4.0 * (a32 + 2) ** 2 * (a5 + 1) ** 2
        * (a32 * a4 * (a2 - a5) * mn + 4.0 * (a32 + 2) * a6 * V0 * (a2 + 1) * (a5 + 1) ** 2),
        a3**3 * (a32 + 1) * a4**2 * (a2 - a5) ** 2 * mn**2,
    )
    add("cdtd2", "d > lower diffusion threshold 2", p.d, d2_rhs, ">")
    return records


def sufficient_d(p: Parameters) -> float:
    """Diffusion ratio beyond which the closed-form bounds imply instability."""
    records = check_conditions(p)
    return max(records["cdtd1"].right, records["cdtd2"].right)


def homogeneous_stability(J0: np.ndarray):
    """Trace/determinant stability of the homogeneous linearization."""
    J0 = np.asarray(J0, dtype=float)
    tr = float(np.trace(J0))
    det = float(np.linalg.det(J0))
    return CheckValue(tr, tr < 0.0), CheckValue(det, det > 0.0)


def turing_conditions(J1: np.ndarray, d: float, gamma: float = 1.0) -> TuringBand:
    """Heterogeneous-instability conditions and the unstable eigenvalue band.

    The band endpoints are the roots of
    d mu^2 - gamma (d J11 + J22) mu + gamma^2 det(J1) = 0
    and scale linearly with gamma.
    """
    J1 = np.asarray(J1, dtype=float)
    fu, g1v = float(J1[0, 0]), float(J1[1, 1])
    det = float(np.linalg.det(J1))
    tu3_value = d * fu + g1v
    tu4_value = tu3_value**2 - 4.0 * d * det
    tu3 = CheckValue(tu3_value, tu3_value > 0.0)
    tu4 = CheckValue(tu4_value, tu4_value > 0.0)
    if tu3.satisfied and tu4.satisfied:
        root = math.sqrt(tu4_value)
        lo = (tu3_value - root) / (2.0 * d)
        hi = (tu3_value + root) / (2.0 * d)
        return TuringBand(
            tu3=tu3, tu4=tu4, d=d, gamma=gamma,
            mu_minus=gamma * lo, mu_plus=gamma * hi,
            mu_minus_unit=lo, mu_plus_unit=hi,
        )
    return TuringBand(tu3=tu3, tu4=tu4, d=d, gamma=gamma)


def growth_rates(lam: float, J1: np.ndarray, d: float, gamma: float) -> np.ndarray:
    """Both eigenvalues of the per-mode linearization -lam diag(1, d) + gamma J1.

    A surface mode with Laplace-Beltrami eigenvalue ``lam`` is unstable iff
    the larger real part is positive.
    """
    if lam < 0:
        raise ValueError("Laplace-Beltrami eigenvalues are nonnegative")
    B = -lam * np.diag([1.0, d]) + gamma * np.asarray(J1, dtype=float)
    return np.linalg.eigvals(B)


def unstable_modes(p: Parameters, ss: SteadyState, d: float, eigenvalues) -> np.ndarray:
    """Subset of surface eigenvalues strictly inside the unstable band."""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    band = turing_conditions(ss.J1, d, gamma=p.gamma)
    if not band.exists:
        return np.empty(0)
    positive = eigenvalues[eigenvalues > 1e-12]
    return positive[(positive > band.mu_minus) & (positive < band.mu_plus)]


def critical_d(p: Parameters, ss: SteadyState, d_range=(1.0, 1e8),
               tol: float = 1e-3) -> float:
    """Smallest diffusion ratio at which both heterogeneous conditions hold.

    Bisection on the joint predicate over ``d_range`` to absolute tolerance
    ``tol``; raises :class:`BracketError` when the predicate does not change
    across the range (e.g. no positive activator self-term).
    """
    def predicate(d):
        return turing_conditions(ss.J1, d).exists

    lo, hi = map(float, d_range)
    if not lo < hi:
        raise ValueError("d_range must be increasing")
    p_lo, p_hi = predicate(lo), predicate(hi)
    if p_lo == p_hi:
        raise BracketError(
            f"instability predicate is {p_lo} at both ends of d_range {d_range}; "
            "no critical diffusion ratio in range"
        )
    if p_lo:
        raise BracketError("predicate already holds at the lower end of d_range")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class ScanReport:
    """Outcome of the randomized equal-diffusion instability scan."""

    trials: int
    seed: int
    no_steady_state: int = 0
    not_activator_substrate: int = 0
    ode_unstable: int = 0
    kept: int = 0
    counterexamples: list = field(default_factory=list)


def no_turing_scan(trials: int, seed: int) -> ScanReport:
    """Randomized check that equal lateral diffusion admits no instability.

    Draws parameters log-uniformly (a-constants in [1e-3, 1e3], pool and
    geometry in [0.1, 100]), keeps samples with an interior steady state of
    activator--substrate-depletion type that is stable for homogeneous
    perturbations, and records any sample for which both heterogeneous
    conditions hold at d = 1 (a counterexample would indicate a bug).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    report = ScanReport(trials=trials, seed=seed)
    for _ in range(trials):
        a = 10.0 ** rng.uniform(-3.0, 3.0, size=7)
        V0 = 10.0 ** rng.uniform(-1.0, 2.0)
        cG = 10.0 ** rng.uniform(-1.0, 2.0)
        p = Parameters(
            a1=a[0], a2=a[1], a3=a[2], a4=a[3], a5=a[4], a6=a[5], a_neg6=a[6],
            d=1.0, gamma=1.0, V0=V0, c=cG, gamma_area=1.0,
        )
        try:
            ss = find_steady_state(p)
        except SteadyStateError:
            report.no_steady_state += 1
            continue
        fu, fv = ss.J0[0, 0], ss.J0[0, 1]
        g0u, g0v = ss.J0[1, 0], ss.J0[1, 1]
        if not (fu > 0 and fv > 0 and g0u < 0 and g0v < 0):
            report.not_activator_substrate += 1
            continue
        tu1, tu2 = homogeneous_stability(ss.J0)
        if not (tu1.satisfied and tu2.satisfied):
            report.ode_unstable += 1
            continue
        report.kept += 1
        band = turing_conditions(ss.J1, 1.0)
        if band.tu3.value > 0.0 and band.tu4.satisfied:
            report.counterexamples.append(p)
    return report


@dataclass(frozen=True)
class TuringReport:
    """Full analysis of one parameter set: conditions, band, classification."""

    steady_state: SteadyState
    conditions: dict
    rd_tu1: CheckValue
    rd_tu2: CheckValue
    band: TuringBand
    d_critical: float | None
    d_sufficient: float
    classification: str
    unstable_eigenvalues: np.ndarray

    def to_dict(self) -> dict:
        ss = self.steady_state
        return {
            "steady_state": {
                "u_star": ss.u_star, "v_star": ss.v_star, "V_star": ss.V_star,
                "u0_bracket": ss.u0_bracket, "u1_bracket": ss.u1_bracket,
                "f_residual": ss.f_residual, "phi_residual": ss.phi_residual,
                "sign_changes": ss.sign_changes,
                "J0": ss.J0.tolist(), "J1": ss.J1.tolist(),
            },
            "conditions": {
                key: {
                    "description": rec.description,
                    "left": rec.left, "right": rec.right,
                    "relation": rec.relation,
                    "satisfied": rec.satisfied, "equality": rec.equality,
                }
                for key, rec in self.conditions.items()
            },
            "homogeneous_stability": {
                "rd_tu1": {"value": self.rd_tu1.value, "satisfied": self.rd_tu1.satisfied},
                "rd_tu2": {"value": self.rd_tu2.value, "satisfied": self.rd_tu2.satisfied},
            },
            "heterogeneous_instability": {
                "rd_tu3": {"value": self.band.tu3.value, "satisfied": self.band.tu3.satisfied},
                "rd_tu4": {"value": self.band.tu4.value, "satisfied": self.band.tu4.satisfied},
                "d": self.band.d,
                "gamma": self.band.gamma,
                "mu_minus": self.band.mu_minus,
                "mu_plus": self.band.mu_plus,
                "mu_minus_unit_gamma": self.band.mu_minus_unit,
                "mu_plus_unit_gamma": self.band.mu_plus_unit,
            },
            "d_critical": self.d_critical,
            "d_sufficient": self.d_sufficient,
            "classification": self.classification,
            "unstable_eigenvalues": list(map(float, self.unstable_eigenvalues)),
        }


def turing_report(p: Parameters, surface_eigenvalues=None) -> TuringReport:
    """Assemble the full stability report for one parameter set.

    ``surface_eigenvalues`` (optional) selects which discrete modes fall in
    the unstable band.
    """
    ss = find_steady_state(p)
    conditions = check_conditions(p)
    tu1, tu2 = homogeneous_stability(ss.J0)
    band = turing_conditions(ss.J1, p.d, gamma=p.gamma)
    try:
        d_c = critical_d(p, ss)
    except BracketError:
        d_c = None
    if not (tu1.satisfied and tu2.satisfied):
        classification = "ode_unstable"
    elif band.exists:
        classification = "turing_unstable"
    else:
        classification = "stable_homogeneous"
    modes = (
        unstable_modes(p, ss, p.d, surface_eigenvalues)
        if surface_eigenvalues is not None
        else np.empty(0)
    )
    return TuringReport(
        steady_state=ss, conditions=conditions, rd_tu1=tu1, rd_tu2=tu2,
        band=band, d_critical=d_c, d_sufficient=sufficient_d(p),
        classification=classification, unstable_eigenvalues=modes,
    )
