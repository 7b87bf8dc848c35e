"""Faedo-Galerkin time integration on the shell-truncated spaces.

Two problems are integrated:

  * the drift-linearized momentum equation, reduced to the real ODE system
    dc/dt + A(t) c = f(t) over the divergence-free eigenbasis, where
    A(t) = diag(mu m (2 pi/ell)^2) + W(t) couples the modes through the
    drift w; for autonomous A the matrix-exponential solution is available
    as an independent cross-check;

  * the nonlinear equation in evolution form,
    du/dt = mu Lap u + P(f - (u . grad) u),
    advanced in coefficient space with the diffusion handled exactly by an
    integrating factor (IF_RK4) or implicitly (IMEX_EULER), the transport
    term dealiased and the Leray projection applied at every stage.

Forcing may be supplied as a steady field, a time-sampled trajectory
(mid-step values by linear interpolation), or a callable t -> field
(evaluated exactly at the stage times).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .eigenbasis import DivFreeBasis, project_coefficients, reconstruct
from .fields import (
    SpectralScalarField,
    SpectralVectorField,
    bandwidth_of,
    embed_vector,
    parse_field_block,
    truncate_vector,
    wave_cubes,
    write_field,
)
from .operators import (
    _fast_len,
    _sample_stack,
    div,
    grad,
    grad_norm,
    inner_l2,
    l2_norm_exact,
    laplacian,
    lp_norm,
    self_convection,
)
from .helmholtz import leray_project

__all__ = [
    "SolverAbort",
    "SolverConfig",
    "FieldTrajectory",
    "LinearizedOperator",
    "assemble_linearized",
    "solve_linearized",
    "linearized_closed_form",
    "solve_navier_stokes",
    "residual",
    "energy_identity_defect",
    "matrix_exponential",
    "save_trajectory",
    "load_trajectory",
    "cumulative_trapezoid",
    "trapezoid",
]

SCHEMES = ("imex_euler", "if_rk4")


class SolverAbort(RuntimeError):
    """Raised when an integration cannot continue (blow-up, rejected step)."""


@dataclass(frozen=True)
class SolverConfig:
    """Time-integration parameters.

    Attributes
    ----------
    mu : viscosity, positive.
    horizon : final time T.
    cutoff : spectral shell cutoff M of the Galerkin space.
    dt : time step (the actual step is T/N with N = round(T/dt)).
    scheme : 'imex_euler' or 'if_rk4'.
    dealias_grid : optional minimal grid for the transport products; must
        be at least 3x the axis bandwidth.  None picks the smallest exact
        grid automatically.
    step_tolerance : when set, every step is checked by step doubling and
        the run aborts if the local error estimate exceeds this value.
    attach_error_estimate : when True the integration is repeated at dt/2
        and the maximal L2 deviation is attached to the trajectory.
    store_every : keep every n-th step in the returned trajectory.
    cfl_warning : emit a RuntimeWarning when the advective CFL number
        ||u||_inf dt (2 pi/ell) max|k| exceeds 0.5.
    """

    mu: float
    horizon: float
    cutoff: int
    dt: float
    scheme: str = "if_rk4"
    dealias_grid: int | None = None
    step_tolerance: float | None = None
    attach_error_estimate: bool = False
    store_every: int = 1
    cfl_warning: bool = True

    def __post_init__(self) -> None:
        if not self.mu > 0:
            raise ValueError("viscosity mu must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon T must be positive")
        if not self.dt > 0:
            raise ValueError("time step dt must be positive")
        if self.dt > self.horizon * (1 + 1e-12):
            raise ValueError("time step dt must not exceed the horizon")
        if self.cutoff < 1:
            raise ValueError("cutoff must be at least 1")
        scheme = self.scheme.lower()
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        object.__setattr__(self, "scheme", scheme)
        if self.dealias_grid is not None:
            if self.dealias_grid < 3 * bandwidth_of(self.cutoff):
                raise ValueError("dealias grid must be at least 3x the axis bandwidth")
        if self.store_every < 1:
            raise ValueError("store_every must be a positive integer")

    @property
    def nsteps(self) -> int:
        return max(1, round(self.horizon / self.dt))

    @property
    def dt_effective(self) -> float:
        return self.horizon / self.nsteps


@dataclass(frozen=True)
class FieldTrajectory:
    """Time samples of a vector field on [0, T], optionally with du/dt."""

    times: np.ndarray
    fields: tuple[SpectralVectorField, ...]
    rhs: tuple[SpectralVectorField, ...] | None = None
    error_estimate: float | None = None

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=np.float64)
        if times.ndim != 1 or len(times) != len(self.fields):
            raise ValueError("times and fields must have matching lengths")
        if len(times) < 1:
            raise ValueError("a trajectory needs at least one sample")
        if abs(times[0]) > 1e-12 * max(1.0, abs(times[-1])):
            raise ValueError("trajectories start at t = 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        f0 = self.fields[0]
        for f in self.fields:
            if f.ell != f0.ell or f.cutoff != f0.cutoff:
                raise ValueError("all trajectory fields must share ell and cutoff")
        if self.rhs is not None and len(self.rhs) != len(self.fields):
            raise ValueError("rhs samples must align with the fields")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "fields", tuple(self.fields))
        if self.rhs is not None:
            object.__setattr__(self, "rhs", tuple(self.rhs))

    @property
    def ell(self) -> float:
        return self.fields[0].ell

    @property
    def cutoff(self) -> int:
        return self.fields[0].cutoff

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def __len__(self) -> int:
        return len(self.fields)

    @property
    def initial(self) -> SpectralVectorField:
        return self.fields[0]

    @property
    def final(self) -> SpectralVectorField:
        return self.fields[-1]

    def at(self, t: float) -> SpectralVectorField:
        """Linear interpolation in coefficient space; exact at the samples."""
        times = self.times
        if t < times[0] - 1e-9 or t > times[-1] + 1e-9 * max(1.0, times[-1]):
            raise ValueError(f"time {t} outside trajectory span [0, {times[-1]}]")
        i = int(np.searchsorted(times, t))
        if i < len(times) and abs(times[i] - t) <= 1e-12 * max(1.0, times[-1]):
            return self.fields[i]
        i = min(max(i, 1), len(times) - 1)
        t0, t1 = times[i - 1], times[i]
        theta = (t - t0) / (t1 - t0)
        stack = (1 - theta) * self.fields[i - 1].coeff_stack() + theta * self.fields[
            i
        ].coeff_stack()
        return SpectralVectorField.from_stack(self.ell, self.cutoff, stack)

    def scaled(self, factor: float) -> "FieldTrajectory":
        return FieldTrajectory(
            self.times,
            tuple(f * factor for f in self.fields),
            None if self.rhs is None else tuple(f * factor for f in self.rhs),
        )


Forcing = (
    SpectralVectorField
    | FieldTrajectory
    | Callable[[float], SpectralVectorField]
    | None
)


def trapezoid(values: np.ndarray, times: np.ndarray) -> float:
    """Trapezoid quadrature over a (possibly nonuniform) time grid."""
    values = np.asarray(values, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if len(values) < 2:
        return 0.0
    dt = np.diff(times)
    return float(np.sum(0.5 * dt * (values[1:] + values[:-1])))


def cumulative_trapezoid(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    out = np.zeros_like(values)
    if len(values) > 1:
        dt = np.diff(times)
        out[1:] = np.cumsum(0.5 * dt * (values[1:] + values[:-1]))
    return out


# ---------------------------------------------------------------------------
# Forcing lookup.
# ---------------------------------------------------------------------------


def _forcing_function(
    f: Forcing, ell: float, cutoff: int, horizon: float
) -> Callable[[float], SpectralVectorField]:
    """Normalize the forcing input to a callable returning cutoff-truncated fields."""
    zero = SpectralVectorField.zero(ell, cutoff)

    def fit(field: SpectralVectorField) -> SpectralVectorField:
        if field.ell != ell:
            raise ValueError("incompatible domains: forcing period differs")
        if field.cutoff > cutoff:
            return truncate_vector(field, cutoff)
        if field.cutoff < cutoff:
            return embed_vector(field, cutoff)
        return field

    if f is None:
        return lambda t: zero
    if isinstance(f, SpectralVectorField):
        steady = fit(f)
        return lambda t: steady
    if isinstance(f, FieldTrajectory):
        if f.horizon < horizon * (1 - 1e-9):
            raise ValueError(
                "forcing samples do not cover the integration horizon"
            )
        fitted = FieldTrajectory(f.times, tuple(fit(x) for x in f.fields))
        return fitted.at
    if callable(f):
        return lambda t: fit(f(t))
    raise TypeError(f"unsupported forcing specification: {type(f)!r}")


def _require_divfree(u: SpectralVectorField, what: str) -> None:
    scale = l2_norm_exact(u) + 1e-30
    if l2_norm_exact(div(u)) > 1e-10 * scale * (1.0 + u.bandwidth):
        raise ValueError(f"{what} must be divergence-free")


# ---------------------------------------------------------------------------
# Nonlinear solver.
# ---------------------------------------------------------------------------


def solve_navier_stokes(
    f: Forcing, u0: SpectralVectorField, config: SolverConfig
) -> FieldTrajectory:
    """Integrate du/dt = mu Lap u + P(f - (u . grad) u) on shells <= cutoff.

    The returned trajectory is divergence-free at every sample and carries
    the evolution right-hand side as rhs samples.  Aborts with
    :class:`SolverAbort` on suspected blow-up (non-finite or exploding
    coefficients) and, when ``step_tolerance`` is set, on step rejection.
    """
    traj = _integrate_ns(f, u0, config)
    if config.attach_error_estimate:
        fine = _integrate_ns(
            f, u0, replace(config, dt=config.dt_effective / 2, attach_error_estimate=False)
        )
        est = _trajectory_deviation(traj, fine)
        traj = FieldTrajectory(traj.times, traj.fields, traj.rhs, error_estimate=est)
    return traj


def _trajectory_deviation(coarse: FieldTrajectory, fine: FieldTrajectory) -> float:
    stride = (len(fine) - 1) // (len(coarse) - 1) if len(coarse) > 1 else 1
    return max(
        l2_norm_exact(coarse.fields[i] - fine.fields[i * stride])
        for i in range(len(coarse))
    )


def _integrate_ns(
    f: Forcing, u0: SpectralVectorField, config: SolverConfig
) -> FieldTrajectory:
    ell, cutoff = u0.ell, config.cutoff
    if u0.cutoff > cutoff:
        raise ValueError(
            f"initial field cutoff {u0.cutoff} exceeds solver cutoff {cutoff}"
        )
    _require_divfree(u0, "initial field")
    u = embed_vector(u0, cutoff)
    forcing = _forcing_function(f, ell, cutoff, config.horizon)

    mu = config.mu
    bw = bandwidth_of(cutoff)
    ksq = wave_cubes(bw)[3].astype(np.float64)
    lam = ksq * (2.0 * math.pi / ell) ** 2
    dt = config.dt_effective
    nsteps = config.nsteps
    e_half = np.exp(-mu * lam * dt / 2.0)
    e_full = e_half * e_half
    imex_denom = 1.0 + dt * mu * lam
    min_grid = config.dealias_grid
    blowup_scale = 1e8 * (l2_norm_exact(u) + 1.0)
    cfl_grid = _fast_len(max(2 * bw + 1, 8))
    warned_cfl = False

    def nonlinear(v: SpectralVectorField, t: float) -> SpectralVectorField:
        return leray_project(forcing(t) - self_convection(v, min_grid=min_grid))

    def step(v: SpectralVectorField, t: float, h: float) -> SpectralVectorField:
        if config.scheme == "imex_euler":
            rhs = v.coeff_stack() + h * nonlinear(v, t).coeff_stack()
            return SpectralVectorField.from_stack(ell, cutoff, rhs / (1.0 + h * mu * lam))
        eh = np.exp(-mu * lam * h / 2.0) if h != dt else e_half
        ef = eh * eh
        c = v.coeff_stack()
        k1 = nonlinear(v, t).coeff_stack()
        k2 = nonlinear(
            SpectralVectorField.from_stack(ell, cutoff, eh * (c + 0.5 * h * k1)),
            t + 0.5 * h,
        ).coeff_stack()
        k3 = nonlinear(
            SpectralVectorField.from_stack(ell, cutoff, eh * c + 0.5 * h * k2),
            t + 0.5 * h,
        ).coeff_stack()
        k4 = nonlinear(
            SpectralVectorField.from_stack(ell, cutoff, ef * c + h * eh * k3), t + h
        ).coeff_stack()
        out = ef * c + (h / 6.0) * (ef * k1 + 2.0 * eh * (k2 + k3) + k4)
        return SpectralVectorField.from_stack(ell, cutoff, out)

    times = [0.0]
    fields = [u]
    rhs_samples = [laplacian(u) * mu + nonlinear(u, 0.0)]
    for n in range(nsteps):
        t = n * dt
        if config.cfl_warning and not warned_cfl and n % 25 == 0:
            umax = lp_norm(u, math.inf, cfl_grid)
            if umax * dt * (2.0 * math.pi / ell) * bw > 0.5:
                warnings.warn(
                    f"advective CFL number exceeds 0.5 at t={t:.6g}; "
                    "results may be inaccurate",
                    RuntimeWarning,
                    stacklevel=2,
                )
                warned_cfl = True
        u_next = step(u, t, dt)
        if config.step_tolerance is not None:
            half = step(step(u, t, dt / 2.0), t + dt / 2.0, dt / 2.0)
            est = float(
                np.max(np.abs(u_next.coeff_stack() - half.coeff_stack()))
            )
            if est > config.step_tolerance:
                raise SolverAbort(
                    f"step rejected at t={t:.6g}: local error estimate "
                    f"{est:.3e} exceeds tolerance {config.step_tolerance:.3e}"
                )
        u = u_next
        stack = u.coeff_stack()
        norm = l2_norm_exact(u)
        if not np.all(np.isfinite(stack)) or norm > blowup_scale:
            raise SolverAbort(f"blow-up suspected at t={(n + 1) * dt:.6g}")
        if (n + 1) % config.store_every == 0 or n + 1 == nsteps:
            tn = (n + 1) * dt
            times.append(tn)
            fields.append(u)
            rhs_samples.append(laplacian(u) * mu + nonlinear(u, tn))
    return FieldTrajectory(np.array(times), tuple(fields), tuple(rhs_samples))


# ---------------------------------------------------------------------------
# Linearized problem: assembly and integration over the eigenbasis.
# ---------------------------------------------------------------------------


def _drift_derivative_stack(field: SpectralVectorField) -> np.ndarray:
    """Coefficient stack with entry [m, c] holding d_m (component c)."""
    k1, k2, k3, _ = wave_cubes(field.bandwidth)
    fac = 1j * 2.0 * math.pi / field.ell
    out = np.empty((3, 3) + field.components[0].coeffs.shape, dtype=np.complex128)
    for c, comp in enumerate(field.components):
        for m, km in enumerate((k1, k2, k3)):
            out[m, c] = fac * km * comp.coeffs
    return out


@dataclass(frozen=True)
class LinearizedOperator:
    """Dense Galerkin matrices A(t) of the drift-linearized problem.

    ``matrices[i]`` is the full matrix at ``times[i]`` including the diagonal
    diffusion part ``diffusion`` = mu m (2 pi/ell)^2; the drift coupling is
    ``matrices[i] - diag(diffusion)``.
    """

    basis: DivFreeBasis
    mu: float
    times: np.ndarray
    matrices: np.ndarray
    diffusion: np.ndarray

    def drift_part(self, i: int) -> np.ndarray:
        return self.matrices[i] - np.diag(self.diffusion)

    def at(self, t: float) -> np.ndarray:
        """Full matrix at time t (linear interpolation between samples)."""
        times = self.times
        if len(times) == 1:
            return self.matrices[0]
        t = min(max(t, times[0]), times[-1])
        i = int(np.searchsorted(times, t))
        if i < len(times) and times[i] == t:
            return self.matrices[i]
        i = min(max(i, 1), len(times) - 1)
        theta = (t - times[i - 1]) / (times[i] - times[i - 1])
        return (1 - theta) * self.matrices[i - 1] + theta * self.matrices[i]


def assemble_linearized(
    w: FieldTrajectory | SpectralVectorField,
    basis: DivFreeBasis,
    mu: float,
    check_tol: float = 1e-11,
) -> LinearizedOperator:
    """Galerkin matrices of the drift coupling plus diagonal diffusion.

    For every drift sample the coupling entries are evaluated in the form
    (w . grad v', v) + (v' . grad w, v) and cross-checked against the
    integration-by-parts form (w . grad v', v) - (w, v' . grad v); the
    identity requires div w = 0, so a non-solenoidal drift is rejected.
    """
    if isinstance(w, SpectralVectorField):
        times = np.array([0.0])
        samples = [w]
    else:
        times = np.asarray(w.times, dtype=np.float64)
        samples = list(w.fields)
    for s in samples:
        if s.ell != basis.ell:
            raise ValueError("incompatible domains: drift period differs from basis")
        _require_divfree(s, "drift field")

    ell = basis.ell
    bw = bandwidth_of(basis.cutoff)
    bw_w = max(s.bandwidth for s in samples)
    # triple products w * grad v' * v have per-axis bandwidth bw_w + 2 bw
    n = _fast_len(max(3 * bw, bw_w + 2 * bw) + 1)
    cell = (ell / n) ** 3
    fields = basis.divfree_fields()
    dim = len(fields)

    vsamp = np.empty((dim, 3, n, n, n))
    dsamp = np.empty((dim, 3, 3, n, n, n))
    for b, fb in enumerate(fields):
        vsamp[b] = _sample_stack(fb.coeff_stack(), n)
        dsamp[b] = _sample_stack(
            _drift_derivative_stack(fb).reshape(9, *fb.components[0].coeffs.shape), n
        ).reshape(3, 3, n, n, n)

    vflat = vsamp.reshape(dim, -1)
    npts = n**3
    matrices = np.empty((len(times), dim, dim))
    for it, wt in enumerate(samples):
        wsamp = _sample_stack(wt.coeff_stack(), n)
        dwsamp = _sample_stack(
            _drift_derivative_stack(wt).reshape(9, *wt.components[0].coeffs.shape), n
        ).reshape(3, 3, n, n, n)
        # (w . grad v_col, v_row)
        conv = np.einsum("mxyz,bmcxyz->bcxyz", wsamp, dsamp).reshape(dim, -1)
        t1 = cell * (vflat @ conv.T)
        # (v_col . grad w, v_row)
        gradw = np.einsum("bmxyz,mcxyz->bcxyz", vsamp, dwsamp).reshape(dim, -1)
        t2 = cell * (vflat @ gradw.T)
        # second form: (w . grad v_col, v_row) - (w, v_col . grad v_row)
        tw = np.einsum("cxyz,bmcxyz->bmxyz", wsamp, dsamp).reshape(dim, -1)
        s2 = cell * (tw @ vsamp.reshape(dim, -1).T)
        scale = max(1.0, float(np.max(np.abs(t1)) + np.max(np.abs(t2))))
        defect = float(np.max(np.abs(t2 + s2)))
        if defect > check_tol * scale:
            raise ValueError(
                f"coupling-form identity violated (defect {defect:.3e}); "
                "drift is not solenoidal enough"
            )
        matrices[it] = t1 + t2
    diffusion = mu * basis.shell_values() * (2.0 * math.pi / ell) ** 2
    matrices += np.diag(diffusion)[None, :, :]
    return LinearizedOperator(basis, mu, times, matrices, diffusion)


def solve_linearized(
    op: LinearizedOperator,
    f: Forcing,
    u0: SpectralVectorField,
    config: SolverConfig,
) -> FieldTrajectory:
    """Integrate dc/dt + A(t) c = f(t) over the eigenbasis coefficients.

    A step-halving convergence estimate is attached to the trajectory.  For
    autonomous operators compare against :func:`linearized_closed_form`.
    """
    basis = op.basis
    _require_divfree(u0, "initial field")
    c0 = project_coefficients(u0, basis)
    gfun = _coefficient_forcing(f, basis, config.horizon)
    coarse_times, coarse = _integrate_linear(op, gfun, c0, config, config.dt_effective)
    fine_times, fine = _integrate_linear(op, gfun, c0, config, config.dt_effective / 2)
    est = float(np.max(np.abs(coarse - fine[::2])))

    fields = tuple(reconstruct(basis, c) for c in coarse)
    rhs = tuple(
        reconstruct(basis, gfun(t) - op.at(t) @ c) for t, c in zip(coarse_times, coarse)
    )
    return FieldTrajectory(coarse_times, fields, rhs, error_estimate=est)


def _coefficient_forcing(
    f: Forcing, basis: DivFreeBasis, horizon: float
) -> Callable[[float], np.ndarray]:
    dim = basis.dim
    if f is None:
        zero = np.zeros(dim)
        return lambda t: zero
    if isinstance(f, SpectralVectorField):
        vec = project_coefficients(truncate_vector(f, basis.cutoff), basis)
        return lambda t: vec
    if isinstance(f, FieldTrajectory):
        if f.horizon < horizon * (1 - 1e-9):
            raise ValueError("forcing samples do not cover the integration horizon")
        times = f.times
        table = np.stack(
            [project_coefficients(truncate_vector(x, basis.cutoff), basis) for x in f.fields]
        )

        def lookup(t: float) -> np.ndarray:
            tt = min(max(t, times[0]), times[-1])
            i = int(np.searchsorted(times, tt))
            if i < len(times) and times[i] == tt:
                return table[i]
            i = min(max(i, 1), len(times) - 1)
            theta = (tt - times[i - 1]) / (times[i] - times[i - 1])
            return (1 - theta) * table[i - 1] + theta * table[i]

        return lookup
    if callable(f):
        return lambda t: project_coefficients(truncate_vector(f(t), basis.cutoff), basis)
    raise TypeError(f"unsupported forcing specification: {type(f)!r}")


def _integrate_linear(
    op: LinearizedOperator,
    gfun: Callable[[float], np.ndarray],
    c0: np.ndarray,
    config: SolverConfig,
    dt: float,
) -> tuple[np.ndarray, np.ndarray]:
    nsteps = max(1, round(config.horizon / dt))
    dt = config.horizon / nsteps
    diff = op.diffusion

    def drift(t: float) -> np.ndarray:
        return op.at(t) - np.diag(diff)

    def gee(c: np.ndarray, t: float) -> np.ndarray:
        return gfun(t) - drift(t) @ c

    c = c0.copy()
    out = [c0.copy()]
    times = [0.0]
    for nstep in range(nsteps):
        t = nstep * dt
        if config.scheme == "imex_euler":
            c = (c + dt * gee(c, t)) / (1.0 + dt * diff)
        else:
            eh = np.exp(-diff * dt / 2.0)
            ef = eh * eh
            k1 = gee(c, t)
            k2 = gee(eh * (c + 0.5 * dt * k1), t + 0.5 * dt)
            k3 = gee(eh * c + 0.5 * dt * k2, t + 0.5 * dt)
            k4 = gee(ef * c + dt * eh * k3, t + dt)
            c = ef * c + (dt / 6.0) * (ef * k1 + 2.0 * eh * (k2 + k3) + k4)
        if not np.all(np.isfinite(c)):
            raise SolverAbort(f"blow-up suspected at t={(nstep + 1) * dt:.6g}")
        times.append((nstep + 1) * dt)
        out.append(c.copy())
    return np.array(times), np.stack(out)


def matrix_exponential(a: np.ndarray, tol: float = 1e-16) -> np.ndarray:
    """exp(a) by scaling and squaring with a truncated Taylor series.

    The series is summed until the term norm falls below ``tol`` relative to
    the partial sum (well beyond 1e-12 accuracy for the scaled matrix).
    """
    a = np.asarray(a, dtype=np.float64)
    dim = a.shape[0]
    norm = float(np.linalg.norm(a, 1))
    nsq = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0 else 0
    scaled = a / 2.0**nsq
    result = np.eye(dim)
    term = np.eye(dim)
    for k in range(1, 60):
        term = term @ scaled / k
        result = result + term
        if np.linalg.norm(term, 1) <= tol * max(1.0, np.linalg.norm(result, 1)):
            break
    for _ in range(nsq):
        result = result @ result
    return result


def linearized_closed_form(
    op: LinearizedOperator,
    f_const: np.ndarray | None,
    c0: np.ndarray,
    times: Sequence[float],
) -> np.ndarray:
    """Matrix-exponential solution for an autonomous operator.

    c(t) = exp(-t A) c0 + int_0^t exp(-(t - s) A) g ds for constant g,
    evaluated through the augmented-matrix exponential.
    """
    if len(op.times) != 1:
        raise ValueError("closed form requires an autonomous (single-sample) operator")
    a = op.matrices[0]
    dim = a.shape[0]
    out = np.empty((len(times), dim))
    g = np.zeros(dim) if f_const is None else np.asarray(f_const, dtype=np.float64)
    aug = np.zeros((dim + 1, dim + 1))
    aug[:dim, :dim] = -a
    aug[:dim, dim] = g
    for i, t in enumerate(times):
        phi = matrix_exponential(aug * t)
        out[i] = phi[:dim, :dim] @ c0 + phi[:dim, dim]
    return out


# ---------------------------------------------------------------------------
# Residuals and the discrete energy identity.
# ---------------------------------------------------------------------------


def _time_derivatives(traj: FieldTrajectory) -> list[SpectralVectorField]:
    """Second-order finite differences of the trajectory samples."""
    times = traj.times
    if len(times) < 3:
        raise ValueError("finite-difference time derivative needs >= 3 samples")
    stacks = [f.coeff_stack() for f in traj.fields]
    out = []
    for i in range(len(times)):
        if i == 0:
            t0, t1, t2 = times[0], times[1], times[2]
            w0, w1, w2 = _fd_weights(t0, t0, t1, t2)
            d = w0 * stacks[0] + w1 * stacks[1] + w2 * stacks[2]
        elif i == len(times) - 1:
            t0, t1, t2 = times[-3], times[-2], times[-1]
            w0, w1, w2 = _fd_weights(t2, t0, t1, t2)
            d = w0 * stacks[-3] + w1 * stacks[-2] + w2 * stacks[-1]
        else:
            t0, t1, t2 = times[i - 1], times[i], times[i + 1]
            w0, w1, w2 = _fd_weights(t1, t0, t1, t2)
            d = w0 * stacks[i - 1] + w1 * stacks[i] + w2 * stacks[i + 1]
        out.append(SpectralVectorField.from_stack(traj.ell, traj.cutoff, d))
    return out


def _fd_weights(t: float, t0: float, t1: float, t2: float) -> tuple[float, float, float]:
    # derivative of the quadratic interpolant through (t0, t1, t2) at t
    w0 = (2 * t - t1 - t2) / ((t0 - t1) * (t0 - t2))
    w1 = (2 * t - t0 - t2) / ((t1 - t0) * (t1 - t2))
    w2 = (2 * t - t0 - t1) / ((t2 - t0) * (t2 - t1))
    return w0, w1, w2


def residual(
    traj: FieldTrajectory,
    pressure: Sequence[SpectralScalarField] | None,
    f: Forcing,
    mu: float,
    use_stored_rhs: bool = True,
) -> np.ndarray:
    """Momentum-equation residual per sample,

        || du/dt - mu Lap u + (u . grad) u + grad p - f ||_{L2}.

    du/dt comes from the stored rhs samples when present (and
    ``use_stored_rhs``), otherwise from second-order finite differences.
    """
    forcing = _forcing_function(f, traj.ell, traj.cutoff, traj.horizon)
    if use_stored_rhs and traj.rhs is not None:
        dtu = list(traj.rhs)
    else:
        dtu = _time_derivatives(traj)
    out = np.empty(len(traj))
    for i, (t, u) in enumerate(zip(traj.times, traj.fields)):
        r = dtu[i] - laplacian(u) * mu + self_convection(u) - forcing(float(t))
        if pressure is not None:
            r = r + grad(pressure[i])
        out[i] = l2_norm_exact(r)
    return out


def energy_identity_defect(
    traj: FieldTrajectory, f: Forcing, mu: float
) -> np.ndarray:
    """Defect of the discrete energy balance at every sample,

        | 1/2 ||u(t)||^2 + mu int_0^t ||grad u||^2 - 1/2 ||u0||^2
          - int_0^t (f, u) |,

    with trapezoid time quadrature.
    """
    forcing = _forcing_function(f, traj.ell, traj.cutoff, traj.horizon)
    energy = np.array([0.5 * l2_norm_exact(u) ** 2 for u in traj.fields])
    enstrophy = np.array([grad_norm(u, 1) ** 2 for u in traj.fields])
    work = np.array(
        [inner_l2(forcing(float(t)), u) for t, u in zip(traj.times, traj.fields)]
    )
    return np.abs(
        energy
        + mu * cumulative_trapezoid(enstrophy, traj.times)
        - energy[0]
        - cumulative_trapezoid(work, traj.times)
    )


# ---------------------------------------------------------------------------
# Trajectory files.
# ---------------------------------------------------------------------------

_FMT = "{:.17g}"


def save_trajectory(traj: FieldTrajectory, path) -> None:
    """Write 'TRAJ 1 <ell> <cutoff> <N>' and one field block per sample."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(
            f"TRAJ 1 {_FMT.format(traj.ell)} {traj.cutoff} {len(traj)}\n"
        )
        for t, u in zip(traj.times, traj.fields):
            fh.write(f"T {_FMT.format(float(t))}\n")
            write_field(u, fh)


def load_trajectory(path) -> FieldTrajectory:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    pos = 0
    while pos < len(lines) and not lines[pos].strip():
        pos += 1
    header = lines[pos].split()
    if len(header) != 5 or header[0] != "TRAJ" or header[1] != "1":
        raise ValueError("not a TRAJ version 1 file")
    count = int(header[4])
    pos += 1
    times = []
    fields = []
    for _ in range(count):
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        parts = lines[pos].split()
        if len(parts) != 2 or parts[0] != "T":
            raise ValueError(f"expected time marker at line {pos + 1}")
        times.append(float(parts[1]))
        field, pos = parse_field_block(lines, pos + 1)
        if not isinstance(field, SpectralVectorField):
            raise ValueError("trajectory blocks must be vector fields")
        fields.append(field)
    return FieldTrajectory(np.array(times), tuple(fields))
