"""Semi-implicit Euler stepping of the conjugated reaction-diffusion equation.

The state advanced here is the conjugated variable v = z * u, which solves

    dv/dt + lam * v - Laplace v = z(t) f(x, v/z(t)) + z(t) g(t, x)

pathwise for a fixed noise path.  Each step treats the stiff linear part
implicitly and the reaction explicitly, with z frozen at the step's left
endpoint:

    (I + dt (lam - Laplace_h)) v_next = v + dt [z f(x, v/z) + z g(t, x)].

In one dimension the implicit system is solved by a direct banded solve; in
two dimensions by conjugate gradients to the configured residual, warm
started from the current state.  Everything is deterministic: same inputs,
same bits.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import (
    BoundaryLeakWarning,
    ConfigurationError,
    DivergenceError,
    LinearSolveError,
)
from .field import Field, Grid, Trajectory, field_from_function, l2_norm
from .model import ProblemSpec, forcing_norm_sq
from .noise import Path, refine, z_factor, z_series

_SNAP = 1e-6  # lattice alignment slack, in units of dt
_BOUNDARY_TRUST = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    linear_solver_tol: float = 1e-10
    store_stride: int = 1

    def __post_init__(self):
        if not (self.dt > 0.0 and np.isfinite(self.dt)):
            raise ConfigurationError(f"dt must be positive, got {self.dt!r}")
        if not (self.linear_solver_tol > 0.0):
            raise ConfigurationError(
                f"linear_solver_tol must be positive, got {self.linear_solver_tol!r}"
            )
        if not (isinstance(self.store_stride, int) and self.store_stride >= 1):
            raise ConfigurationError(
                f"store_stride must be a positive integer, got {self.store_stride!r}"
            )


def steps_between(t_start: float, t_end: float, dt: float) -> int:
    """Number of dt steps from t_start to t_end; the duration must sit on
    the dt lattice (within snapping slack), off-lattice requests error."""
    ratio = (t_end - t_start) / dt
    n = int(round(ratio))
    if n < 0 or abs(ratio - n) > _SNAP:
        raise ConfigurationError(
            f"duration {t_end - t_start!r} is not a nonnegative multiple of dt={dt!r}"
        )
    return n


class _Context:
    """Per-run precomputation: grid geometry, implicit solve, data evaluators."""

    def __init__(self, grid: Grid, spec: ProblemSpec, cfg: SolverConfig):
        if grid.dimension != spec.dimension:
            raise ConfigurationError(
                f"grid dimension {grid.dimension} != spec dimension {spec.dimension}"
            )
        self.grid = grid
        self.spec = spec
        self.cfg = cfg
        self.pts = grid.points
        m = grid.points_per_axis
        h2 = grid.spacing**2
        dt = cfg.dt
        n_int = m - 2
        diag = 1.0 + dt * spec.lam + 2.0 * grid.dimension * dt / h2
        off = -dt / h2
        if grid.dimension == 1:
            ab = np.zeros((3, n_int))
            ab[0, 1:] = off
            ab[1, :] = diag
            ab[2, :-1] = off
            self._ab = ab
        else:
            lap1 = scipy.sparse.diags_array(
                [np.full(n_int - 1, off), np.full(n_int, 0.0), np.full(n_int - 1, off)],
                offsets=[-1, 0, 1],
                format="csr",
            )
            eye = scipy.sparse.eye_array(n_int, format="csr")
            cross = scipy.sparse.kron(eye, lap1) + scipy.sparse.kron(lap1, eye)
            self._A = (diag * scipy.sparse.eye_array(n_int**2, format="csr") + cross).tocsr()

    def solve_implicit(self, rhs_interior: np.ndarray, x0: np.ndarray) -> np.ndarray:
        if self.grid.dimension == 1:
            return scipy.linalg.solve_banded((1, 1), self._ab, rhs_interior)
        sol, info = scipy.sparse.linalg.cg(
            self._A,
            rhs_interior.ravel(),
            x0=x0.ravel(),
            rtol=0.0,
            atol=self.cfg.linear_solver_tol,
            maxiter=5000,
        )
        if info != 0:
            raise LinearSolveError(
                f"conjugate gradients stopped with info={info} before reaching "
                f"residual {self.cfg.linear_solver_tol}"
            )
        return sol.reshape(rhs_interior.shape)

    def reaction(self, v: np.ndarray, z: float) -> np.ndarray:
        u = v.ravel() / z
        return np.asarray(self.spec.nonlinearity.f(self.pts, u), dtype=float).reshape(
            v.shape
        )

    def forcing_values(self, t: float) -> np.ndarray:
        g = np.asarray(self.spec.forcing.g(t, self.pts), dtype=float)
        return g.reshape(self.grid.shape)


def _interior(v: np.ndarray) -> np.ndarray:
    return v[1:-1] if v.ndim == 1 else v[1:-1, 1:-1]


def _advance(v: np.ndarray, t: float, z: float, ctx: _Context) -> np.ndarray:
    dt = ctx.cfg.dt
    rhs = v + dt * (z * ctx.reaction(v, z) + z * ctx.forcing_values(t))
    # an overflowing reaction term must surface as a divergence, not as a
    # deep linear-algebra error from the implicit solve
    _check_finite(rhs, t + dt)
    out = np.zeros_like(v)
    sol = ctx.solve_implicit(_interior(rhs), _interior(v))
    if v.ndim == 1:
        out[1:-1] = sol
    else:
        out[1:-1, 1:-1] = sol
    return out


def _advance_plain(v: np.ndarray, t: float, ctx: _Context) -> np.ndarray:
    """Conjugation-free step of du/dt + lam u - Laplace u = f(x,u) + g."""
    dt = ctx.cfg.dt
    fv = np.asarray(
        ctx.spec.nonlinearity.f(ctx.pts, v.ravel()), dtype=float
    ).reshape(v.shape)
    rhs = v + dt * (fv + ctx.forcing_values(t))
    _check_finite(rhs, t + dt)
    out = np.zeros_like(v)
    sol = ctx.solve_implicit(_interior(rhs), _interior(v))
    if v.ndim == 1:
        out[1:-1] = sol
    else:
        out[1:-1, 1:-1] = sol
    return out


def _check_finite(v: np.ndarray, t: float) -> None:
    s = float(np.dot(v.ravel(), v.ravel()))
    if not np.isfinite(s):
        raise DivergenceError(t)


def _warn_boundary_leak(v: np.ndarray) -> None:
    if v.ndim == 1:
        ring = max(abs(float(v[1])), abs(float(v[-2])))
    else:
        ring = max(
            float(np.abs(v[1, :]).max()),
            float(np.abs(v[-2, :]).max()),
            float(np.abs(v[:, 1]).max()),
            float(np.abs(v[:, -2]).max()),
        )
    if ring > _BOUNDARY_TRUST:
        warnings.warn(
            f"solution magnitude {ring:.3e} adjacent to the artificial boundary "
            f"exceeds {_BOUNDARY_TRUST:.0e}; enlarge the domain radius",
            BoundaryLeakWarning,
            stacklevel=3,
        )


def step(v: Field, t: float, path: Path, spec: ProblemSpec, cfg: SolverConfig) -> Field:
    """One semi-implicit step from time t to t + dt."""
    ctx = _Context(v.grid, spec, cfg)
    z = z_factor(path, spec.epsilon, t)
    out = _advance(v.values, t, z, ctx)
    _check_finite(out, t + cfg.dt)
    return Field(v.grid, out)


def integrate(
    v0: Field,
    t_start: float,
    t_end: float,
    path: Path,
    spec: ProblemSpec,
    cfg: SolverConfig,
) -> Trajectory:
    """March the conjugated state from t_start to t_end along the path.

    The duration must be a lattice multiple of cfg.dt and the path window
    must cover [t_start, t_end].  Stores every store_stride-th state plus
    the final one; stored time stamps are exact multiples of dt from
    t_start.
    """
    n = steps_between(t_start, t_end, cfg.dt)
    _validate_window(path, t_start, t_end)
    ctx = _Context(v0.grid, spec, cfg)
    zs = z_series(path, spec.epsilon, t_start, max(n, 1), cfg.dt) if n else None
    v = v0.values
    times = [t_start]
    states = [v0]
    for k in range(n):
        v = _advance(v, t_start + k * cfg.dt, float(zs[k]), ctx)
        _check_finite(v, t_start + (k + 1) * cfg.dt)
        if (k + 1) % cfg.store_stride == 0 or k + 1 == n:
            times.append(t_start + (k + 1) * cfg.dt)
            states.append(Field(v0.grid, v))
    _warn_boundary_leak(v)
    return Trajectory(times=np.array(times), states=tuple(states), stride=cfg.store_stride)


def integrate_deterministic(
    u0: Field, t_start: float, t_end: float, spec: ProblemSpec, cfg: SolverConfig
) -> Trajectory:
    """Noise-free march of the original equation (no conjugation anywhere).

    This is the zero-intensity reference: with eps = 0 the conjugated
    stepper must reproduce it bit for bit.
    """
    n = steps_between(t_start, t_end, cfg.dt)
    ctx = _Context(u0.grid, spec, cfg)
    v = u0.values
    times = [t_start]
    states = [u0]
    for k in range(n):
        v = _advance_plain(v, t_start + k * cfg.dt, ctx)
        _check_finite(v, t_start + (k + 1) * cfg.dt)
        if (k + 1) % cfg.store_stride == 0 or k + 1 == n:
            times.append(t_start + (k + 1) * cfg.dt)
            states.append(Field(u0.grid, v))
    _warn_boundary_leak(v)
    return Trajectory(times=np.array(times), states=tuple(states), stride=cfg.store_stride)


def _validate_window(path: Path, t_start: float, t_end: float) -> None:
    slack = _SNAP * path.dt
    if t_start < path.t_min - slack or t_end > path.t_max + slack:
        from .errors import OutOfWindowError

        raise OutOfWindowError(
            f"run [{t_start}, {t_end}] leaves the path window "
            f"[{path.t_min}, {path.t_max}]"
        )


def final_state(
    v0: Field,
    t_start: float,
    t_end: float,
    path: Path,
    spec: ProblemSpec,
    cfg: SolverConfig,
) -> Field:
    """Endpoint of :func:`integrate` without storing the trajectory.

    Same step sequence, same bits, constant memory.
    """
    n = steps_between(t_start, t_end, cfg.dt)
    _validate_window(path, t_start, t_end)
    ctx = _Context(v0.grid, spec, cfg)
    if n == 0:
        return v0
    zs = z_series(path, spec.epsilon, t_start, n, cfg.dt)
    v = v0.values
    for k in range(n):
        v = _advance(v, t_start + k * cfg.dt, float(zs[k]), ctx)
        _check_finite(v, t_start + (k + 1) * cfg.dt)
    _warn_boundary_leak(v)
    return Field(v0.grid, v)


def iterate_states(
    v0: Field,
    t_start: float,
    t_end: float,
    path: Path,
    spec: ProblemSpec,
    cfg: SolverConfig,
):
    """Yield (time, state) after every step, without storing the run.

    The first yield is (t_start, v0) itself; the step sequence is the same
    one :func:`integrate` and :func:`final_state` walk, bit for bit.  Useful
    for streaming reductions over long runs at constant memory.
    """
    n = steps_between(t_start, t_end, cfg.dt)
    _validate_window(path, t_start, t_end)
    ctx = _Context(v0.grid, spec, cfg)
    yield t_start, v0
    if n == 0:
        return
    zs = z_series(path, spec.epsilon, t_start, n, cfg.dt)
    v = v0.values
    for k in range(n):
        v = _advance(v, t_start + k * cfg.dt, float(zs[k]), ctx)
        _check_finite(v, t_start + (k + 1) * cfg.dt)
        yield t_start + (k + 1) * cfg.dt, Field(v0.grid, v)


def difference_history(
    v0_a: Field,
    v0_b: Field,
    t_start: float,
    t_end: float,
    path: Path,
    spec: ProblemSpec,
    cfg: SolverConfig,
    sample_stride: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Run two solutions in lockstep along one path; record ||difference||^2.

    Returns (times, squared L2 norms of a - b), sampled every
    ``sample_stride`` steps plus the endpoint.  This is the raw material for
    contraction-rate fits.
    """
    if v0_a.grid != v0_b.grid:
        raise ConfigurationError("both initial states must live on one grid")
    n = steps_between(t_start, t_end, cfg.dt)
    _validate_window(path, t_start, t_end)
    ctx = _Context(v0_a.grid, spec, cfg)
    zs = z_series(path, spec.epsilon, t_start, max(n, 1), cfg.dt) if n else None
    va = v0_a.values
    vb = v0_b.values
    vol = v0_a.grid.cell_volume
    times = [t_start]
    norms = [vol * float(np.sum((va - vb) ** 2))]
    for k in range(n):
        t = t_start + k * cfg.dt
        z = float(zs[k])
        va = _advance(va, t, z, ctx)
        vb = _advance(vb, t, z, ctx)
        _check_finite(va, t + cfg.dt)
        _check_finite(vb, t + cfg.dt)
        if (k + 1) % sample_stride == 0 or k + 1 == n:
            times.append(t_start + (k + 1) * cfg.dt)
            norms.append(vol * float(np.sum((va - vb) ** 2)))
    return np.array(times), np.array(norms)


# -- scheme verification ----------------------------------------------------


@dataclass(frozen=True)
class ConvergenceReport:
    """Successive-refinement differences and the orders they witness."""

    parameters: tuple[float, ...]
    differences: tuple[float, ...]
    ratios: tuple[float, ...]
    orders: tuple[float, ...]


def self_convergence(
    v0: Field,
    horizon: float,
    path: Path,
    spec: ProblemSpec,
    dt_ladder: list[float],
    linear_solver_tol: float = 1e-10,
) -> ConvergenceReport:
    """Temporal self-convergence along a halving dt ladder on one path.

    The path is bridge-refined to the finest rung so every run sees the same
    noise; successive endpoint differences then witness the stepping order
    (ratio 2 per halving for a first-order scheme).
    """
    if len(dt_ladder) < 3:
        raise ConfigurationError("need at least three dt rungs to form a ratio")
    for a, b in zip(dt_ladder, dt_ladder[1:]):
        if abs(a / b - 2.0) > 1e-9:
            raise ConfigurationError("dt ladder must halve at each rung")
    finest = dt_ladder[-1]
    while path.dt > finest * (1.0 + 1e-9):
        path = refine(path)
    finals = []
    for dt in dt_ladder:
        cfg = SolverConfig(dt=dt, linear_solver_tol=linear_solver_tol, store_stride=10**9)
        finals.append(final_state(v0, 0.0, horizon, path, spec, cfg))
    diffs = [
        l2_norm(Field(v0.grid, a.values - b.values))
        for a, b in zip(finals, finals[1:])
    ]
    ratios = [d0 / d1 for d0, d1 in zip(diffs, diffs[1:])]
    orders = [float(np.log2(r)) for r in ratios]
    return ConvergenceReport(
        parameters=tuple(dt_ladder),
        differences=tuple(diffs),
        ratios=tuple(ratios),
        orders=tuple(orders),
    )


def spatial_convergence(
    profile_fn,
    horizon: float,
    path: Path,
    spec: ProblemSpec,
    cfg: SolverConfig,
    m_ladder: list[int],
) -> ConvergenceReport:
    """Spatial self-convergence on nested grids (m, 2m-1, 4m-3, ...).

    The initial profile is resampled analytically per grid; finer endpoints
    are restricted to the coarsest grid by index, so differences compare
    values at identical coordinates (ratio 4 per halving for a second-order
    stencil).
    """
    if len(m_ladder) < 3:
        raise ConfigurationError("need at least three grid rungs to form a ratio")
    for a, b in zip(m_ladder, m_ladder[1:]):
        if b != 2 * a - 1:
            raise ConfigurationError(
                f"grid ladder must nest (next = 2*m - 1), got {a} -> {b}"
            )
    coarse = Grid(spec.dimension, spec.domain_radius, m_ladder[0])
    restricted = []
    for i, m in enumerate(m_ladder):
        grid = Grid(spec.dimension, spec.domain_radius, m)
        v0 = field_from_function(grid, profile_fn)
        end = final_state(v0, 0.0, horizon, path, spec, cfg)
        stride = 2**i
        vals = (
            end.values[::stride]
            if spec.dimension == 1
            else end.values[::stride, ::stride]
        )
        restricted.append(vals)
    diffs = [
        l2_norm(Field(coarse, a - b)) for a, b in zip(restricted, restricted[1:])
    ]
    ratios = [d0 / d1 for d0, d1 in zip(diffs, diffs[1:])]
    orders = [float(np.log2(r)) for r in ratios]
    return ConvergenceReport(
        parameters=tuple(float(m) for m in m_ladder),
        differences=tuple(diffs),
        ratios=tuple(ratios),
        orders=tuple(orders),
    )


# -- energy audit ------------------------------------------------------------


@dataclass(frozen=True)
class EnergyAudit:
    """Per-step slack of the discrete dissipation inequality.

    Each step of the canonical estimate must satisfy

        ||v+||^2 - ||v||^2 + dt*lam*||v+||^2
            <= c * dt * z(t)^2 * (||g(t)||^2 + psi1_mass) + slack,

    with c = 2*max(1, 1/lam) and slack of size O(dt^2) from the explicit
    reaction pairing.  ``violations`` holds the left side minus the right
    side per step; anything above the O(dt^2) allowance signals a broken
    scheme or data outside the certified structure conditions.
    """

    violations: np.ndarray
    max_violation: float
    constant: float
    psi1_mass: float


def energy_audit(
    v0: Field,
    t_start: float,
    t_end: float,
    path: Path,
    spec: ProblemSpec,
    cfg: SolverConfig,
) -> EnergyAudit:
    n = steps_between(t_start, t_end, cfg.dt)
    _validate_window(path, t_start, t_end)
    ctx = _Context(v0.grid, spec, cfg)
    zs = z_series(path, spec.epsilon, t_start, max(n, 1), cfg.dt) if n else None
    vol = v0.grid.cell_volume
    psi1_mass = float(vol * np.sum(spec.nonlinearity.psi1(v0.grid.points)))
    c = 2.0 * max(1.0, 1.0 / spec.lam)
    v = v0.values
    norm_sq = vol * float(np.sum(v**2))
    out = np.empty(n)
    for k in range(n):
        t = t_start + k * cfg.dt
        z = float(zs[k])
        v_next = _advance(v, t, z, ctx)
        _check_finite(v_next, t + cfg.dt)
        next_sq = vol * float(np.sum(v_next**2))
        allowance = c * cfg.dt * z**2 * (forcing_norm_sq(spec.forcing, v0.grid, t) + psi1_mass)
        out[k] = next_sq - norm_sq + cfg.dt * spec.lam * next_sq - allowance
        v = v_next
        norm_sq = next_sq
    return EnergyAudit(
        violations=out,
        max_violation=float(out.max()) if n else 0.0,
        constant=c,
        psi1_mass=psi1_mass,
    )
