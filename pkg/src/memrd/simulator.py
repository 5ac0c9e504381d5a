"""Semi-implicit time stepping of the coupled surface system.

Each step freezes the kinetic coefficients at the previous iterate, assembles
the 2x2 block sparse system (diffusion and linearized kinetics implicit,
linearization remainders explicit), solves it with BiCGStab, then updates the
spatially constant pool explicitly from the previous fields. The saturating
flux derivative at the previous iterate uses the interior branch at the kink.

The block-system sparsity pattern is fixed per mesh; reassembly per step
reduces to sparse matvecs with a precomputed coefficient map, so stepping is
dominated by the linear solve.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, spilu, splu

from . import kinetics
from .analysis import heterogeneity
from .fem import FemOperators, P1Assembler, solve_nonsymmetric_with_stats
from .kinetics import Parameters
from .mesh import SurfaceMesh

__all__ = [
    "State",
    "RunConfig",
    "RandomIC",
    "ConstantIC",
    "SteadyStatePlusNoiseIC",
    "TimeSeries",
    "SimulationAbort",
    "Stepper",
    "initial_state",
    "step",
    "run",
    "conservation_check",
]

logger = logging.getLogger(__name__)

# Nodal negativity policy: no clamping; small undershoots are logged, large
# ones abort (they signal a too-large time step or too-coarse mesh).
NEGATIVITY_WARN = -1e-8
NEGATIVITY_ABORT = -1e-3

# The incomplete-LU preconditioner is frozen across steps (the system drifts
# slowly) and refactored when BiCGStab slows down or the factors get stale.
ILU_REFRESH_ITERS = 8
ILU_MAX_AGE = 500
ILU_DROP_TOL = 1e-3
ILU_FILL_FACTOR = 5.0


class SimulationAbort(RuntimeError):
    """Time integration aborted; carries the last state and partial series."""

    def __init__(self, message: str, state: "State", series: "TimeSeries"):
        super().__init__(message)
        self.state = state
        self.series = series


@dataclass(frozen=True)
class State:
    """Nodal fields, pool value and clock of one time level."""

    u: np.ndarray
    v: np.ndarray
    V: float
    t: float
    step: int


@dataclass(frozen=True)
class RandomIC:
    """Independent uniform nodal values in [lo, hi] for both fields."""

    lo: float = 0.0
    hi: float = 0.02


@dataclass(frozen=True)
class ConstantIC:
    u: float
    v: float


@dataclass(frozen=True)
class SteadyStatePlusNoiseIC:
    """Homogeneous equilibrium plus uniform noise in [-amplitude, amplitude]."""

    amplitude: float


@dataclass(frozen=True)
class RunConfig:
    """Time-integration settings.

    ``min_stop_time`` arms the stationarity early stop only from that time
    on; pattern-forming runs pass through a quiet spell between the kinetic
    transient and mode growth where the raw residual can dip below any loose
    tolerance.
    """

    dt: float = 1e-3
    t_end: float = 25.0
    linear_tol: float = 1e-10
    stationarity_tol: float = 1e-6
    min_stop_time: float = 0.0
    snapshot_interval: float = 1.0
    seed: int = 0
    ic: object = RandomIC()

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not self.dt < self.t_end:
            raise ValueError("dt must be smaller than t_end")
        if self.min_stop_time < 0:
            raise ValueError("min_stop_time must be nonnegative")
        for name in ("linear_tol", "stationarity_tol", "snapshot_interval"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class TimeSeries:
    """Per-step scalar trace of a run.

    Row m belongs to the state after m steps (row 0 is the initial state);
    ``pool`` at row m+1 pairs with the integrals at row m because the pool
    update is explicit and lags one step.
    """

    t: np.ndarray
    int_u: np.ndarray
    int_v: np.ndarray
    pool: np.ndarray
    min_u: np.ndarray
    max_u: np.ndarray
    min_v: np.ndarray
    max_v: np.ndarray
    residual: np.ndarray
    heterogeneity: np.ndarray
    converged: bool

    def __len__(self):
        return len(self.t)


class Stepper:
    """Reusable time-stepping engine for one (mesh, parameters, dt) triple."""

    def __init__(self, mesh: SurfaceMesh, p: Parameters, dt: float,
                 linear_tol: float = 1e-10, max_iter: int | None = None):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.p = p
        self.dt = dt
        self.linear_tol = linear_tol
        asm = P1Assembler(mesh)
        self.assembler = asm
        self.n = asm.n
        self.max_iter = max_iter if max_iter is not None else 10 * 2 * self.n
        self.mass = asm.mass()
        nnz = asm.nnz
        inv_dt = 1.0 / dt
        self._b11_const = inv_dt * asm._mass_data + asm._stiffness_data
        self._b22_const = inv_dt * asm._mass_data + p.d * asm._stiffness_data
        self._inv_dt = inv_dt

        # Fixed block pattern; marker data records where each block entry
        # lands in the merged CSR, so per-step assembly is one gather.
        def marker(offset):
            return sparse.csr_matrix(
                (np.arange(offset, offset + nnz, dtype=np.float64),
                 asm.indices.copy(), asm.indptr.copy()),
                shape=(self.n, self.n),
            )

        system = sparse.bmat(
            [[marker(0), marker(nnz)], [marker(2 * nnz), marker(3 * nnz)]],
            format="csr",
        )
        system.sort_indices()
        self._perm = np.rint(system.data).astype(np.int64)
        self._system = system
        self._src = np.empty(4 * nnz)
        self._nnz = nnz
        self._ilu: LinearOperator | None = None
        self._ilu_age = 0
        self._last_iterations = 0

    def _preconditioner(self) -> LinearOperator:
        stale = (
            self._ilu is None
            or self._last_iterations > ILU_REFRESH_ITERS
            or self._ilu_age >= ILU_MAX_AGE
        )
        if stale:
            matrix = self._system.tocsc()
            try:
                factors = spilu(
                    matrix, drop_tol=ILU_DROP_TOL, fill_factor=ILU_FILL_FACTOR
                )
            except RuntimeError as exc:
                # Aggressive dropping can produce a singular incomplete factor
                # even for a well-posed system; escalate to a complete one.
                logger.info("incomplete LU failed (%s); using complete LU", exc)
                factors = splu(matrix)
            self._ilu = LinearOperator(self._system.shape, matvec=factors.solve)
            self._ilu_age = 0
        return self._ilu

    def step(self, state: State) -> State:
        p, asm, n, nnz = self.p, self.assembler, self.n, self._nnz
        u, v, V = state.u, state.v, state.V
        w = u + v
        fu, fv = kinetics.jac_f(u, v, p)
        qu, qv = kinetics.jac_q(w, v, V, p)
        gamma = p.gamma

        gm = asm._weight_map
        g_fu = gm @ (gamma * fu)
        g_fv = gm @ (gamma * fv)
        g_qu = gm @ (gamma * qu)
        g_qv = gm @ (gamma * qv)

        src = self._src
        src[:nnz] = self._b11_const - g_fu
        src[nnz:2 * nnz] = -g_fv
        src[2 * nnz:3 * nnz] = g_fu - g_qu
        src[3 * nnz:] = self._b22_const + g_fv - g_qv
        self._system.data[:] = src[self._perm]

        f_val = kinetics.f(u, v, p)
        q_val = kinetics.q(w, v, V, p)
        fe = gamma * (f_val - fu * u - fv * v)
        qe = gamma * (q_val - qu * u - qv * v)
        M = self.mass
        Mu, Mv = M @ u, M @ v
        rhs = np.concatenate(
            [self._inv_dt * Mu + M @ fe, self._inv_dt * Mv - M @ fe + M @ qe]
        )
        x, iterations = solve_nonsymmetric_with_stats(
            self._system, rhs, tol=self.linear_tol, max_iter=self.max_iter,
            x0=np.concatenate([u, v]), precond=self._preconditioner(),
        )
        self._last_iterations = iterations
        self._ilu_age += 1
        # Explicit pool update from the *previous* fields (one-step lag).
        V_new = p.V0 - p.c * float(Mu.sum() + Mv.sum())
        return State(u=x[:n], v=x[n:], V=V_new, t=state.t + self.dt,
                     step=state.step + 1)


def initial_state(mesh: SurfaceMesh, cfg: RunConfig, p: Parameters) -> State:
    """Build the initial state; the pool starts on the conservation identity."""
    from .stability import find_steady_state  # local import avoids cycle at import time

    rng = np.random.default_rng(cfg.seed)
    n = mesh.n_vertices
    ic = cfg.ic
    if isinstance(ic, RandomIC):
        u = rng.uniform(ic.lo, ic.hi, n)
        v = rng.uniform(ic.lo, ic.hi, n)
    elif isinstance(ic, ConstantIC):
        u = np.full(n, float(ic.u))
        v = np.full(n, float(ic.v))
    elif isinstance(ic, SteadyStatePlusNoiseIC):
        ss = find_steady_state(p)
        u = ss.u_star + ic.amplitude * rng.uniform(-1.0, 1.0, n)
        v = ss.v_star + ic.amplitude * rng.uniform(-1.0, 1.0, n)
    else:
        raise TypeError(f"unknown initial condition {ic!r}")
    M = P1Assembler(mesh).mass()
    total = float((M @ (u + v)).sum())
    return State(u=u, v=v, V=p.V0 - p.c * total, t=0.0, step=0)


def step(state: State, mesh: SurfaceMesh, ops: FemOperators, p: Parameters,
         dt: float, linear_tol: float = 1e-10) -> State:
    """Advance one time level (convenience wrapper building a fresh Stepper).

    ``ops`` must belong to ``mesh``; loops should construct one
    :class:`Stepper` and reuse it.
    """
    if ops.n != mesh.n_vertices:
        raise ValueError("operators do not match the mesh")
    return Stepper(mesh, p, dt, linear_tol=linear_tol).step(state)


class _SeriesBuilder:
    def __init__(self, M):
        self.M = M
        self.rows = []

    def append(self, state: State, residual: float):
        M, u, v = self.M, state.u, state.v
        self.rows.append((
            state.t,
            float((M @ u).sum()), float((M @ v).sum()), state.V,
            float(u.min()), float(u.max()), float(v.min()), float(v.max()),
            residual, heterogeneity(u, M),
        ))

    def build(self, converged: bool) -> TimeSeries:
        cols = list(zip(*self.rows))
        names = ("t", "int_u", "int_v", "pool", "min_u", "max_u",
                 "min_v", "max_v", "residual", "heterogeneity")
        return TimeSeries(
            **{name: np.asarray(col) for name, col in zip(names, cols)},
            converged=converged,
        )


def run(mesh: SurfaceMesh, ops: FemOperators, p: Parameters, cfg: RunConfig,
        snapshot_callback=None):
    """Fixed-dt loop to t_end with early stop on stationarity.

    Returns ``(final_state, series)``. ``snapshot_callback(state)`` fires at
    t = 0, every ``snapshot_interval`` and at the final accepted state. The
    stationarity measure is (||du||_inf + ||dv||_inf) / dt per step. NaN/Inf
    or nodal values below the negativity guard abort with
    :class:`SimulationAbort` carrying the partial series.
    """
    if ops.n != mesh.n_vertices:
        raise ValueError("operators do not match the mesh")
    stepper = Stepper(mesh, p, cfg.dt, linear_tol=cfg.linear_tol)
    state = initial_state(mesh, cfg, p)
    builder = _SeriesBuilder(stepper.mass)
    builder.append(state, math.inf)
    if snapshot_callback is not None:
        snapshot_callback(state)

    n_steps = int(round(cfg.t_end / cfg.dt))
    snap_every = max(1, int(round(cfg.snapshot_interval / cfg.dt)))
    converged = False
    warned_negative = False
    for m in range(1, n_steps + 1):
        new = stepper.step(state)
        if not (np.isfinite(new.u).all() and np.isfinite(new.v).all()
                and math.isfinite(new.V)):
            raise SimulationAbort(
                f"non-finite values at step {m} (t={new.t:.6g})",
                state=state, series=builder.build(False),
            )
        low = min(new.u.min(), new.v.min())
        if low < NEGATIVITY_ABORT:
            field = "u" if new.u.min() <= new.v.min() else "v"
            node = int(np.argmin(new.u if field == "u" else new.v))
            builder.append(new, math.nan)
            raise SimulationAbort(
                f"nodal {field}[{node}] = {low:.3e} below {NEGATIVITY_ABORT} at "
                f"step {m} (t={new.t:.6g}); decrease dt or refine the mesh",
                state=new, series=builder.build(False),
            )
        if low < NEGATIVITY_WARN and not warned_negative:
            warned_negative = True
            logger.warning(
                "nodal negativity %.3e at step %d (t=%.6g); monitoring only",
                low, m, new.t,
            )
        residual = (
            np.abs(new.u - state.u).max() + np.abs(new.v - state.v).max()
        ) / cfg.dt
        builder.append(new, residual)
        state = new
        is_snapshot = (m % snap_every == 0)
        if residual < cfg.stationarity_tol and new.t >= cfg.min_stop_time:
            converged = True
            if snapshot_callback is not None:
                snapshot_callback(state)
            break
        if is_snapshot and snapshot_callback is not None:
            snapshot_callback(state)
    else:
        if snapshot_callback is not None and n_steps % snap_every != 0:
            snapshot_callback(state)
    return state, builder.build(converged)


def conservation_check(series: TimeSeries, p: Parameters) -> float:
    """Largest relative violation of the lag-adjusted pool identity.

    The explicit update guarantees pool(m+1) = V0 - c * integral(m); the
    deviation is measured in units of the conserved total V0 / c.
    """
    if len(series) == 0:
        raise ValueError("series is empty")
    volume = 1.0 / p.c
    total = series.int_u + series.int_v
    budget = p.V0 * volume
    # Row 0 pairs with itself (the initial pool is built from the identity).
    residuals = [abs(series.pool[0] * volume + total[0] - budget)]
    if len(series) > 1:
        lagged = series.pool[1:] * volume + total[:-1] - budget
        residuals.append(np.abs(lagged).max())
    return float(max(residuals) / budget)
