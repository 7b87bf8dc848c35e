"""Helmholtz (Leray) projection, dual-space norms and pressure recovery.

The projection onto divergence-free fields acts mode by mode: the mean is
kept, and for k != 0 the amplitude is replaced by its component orthogonal
to k,

    c_k  ->  c_k - k (k . c_k) / (k, k).

The complementary part is a gradient; its zero-mean potential is recovered
by inverting the gradient on each mode.  Projection, decomposition and the
derivative-commutation identity are exact at coefficient level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import SpectralScalarField, SpectralVectorField, wave_cubes
from .operators import grad_norm, partial_derivative, self_convection

__all__ = [
    "leray_project",
    "ProjectionDecomposition",
    "decompose",
    "gradient_potential",
    "recover_pressure",
    "dual_norm",
    "derivative_commutation_defect",
]


def _project_stack(stack: np.ndarray, bandwidth: int) -> np.ndarray:
    k1, k2, k3, ksq = wave_cubes(bandwidth)
    kdotc = k1 * stack[0] + k2 * stack[1] + k3 * stack[2]
    scale = np.zeros(ksq.shape, dtype=np.float64)
    nz = ksq > 0
    scale[nz] = 1.0 / ksq[nz]
    corr = kdotc * scale
    return np.stack([stack[0] - k1 * corr, stack[1] - k2 * corr, stack[2] - k3 * corr])


def leray_project(u: SpectralVectorField) -> SpectralVectorField:
    """Orthogonal projection onto divergence-free fields (mean preserved)."""
    return u.with_stack(_project_stack(u.coeff_stack(), u.bandwidth))


@dataclass(frozen=True)
class ProjectionDecomposition:
    """Split u = solenoidal + gradient_part with gradient_part = grad(potential).

    The solenoidal part is exactly divergence-free in coefficients, the
    gradient part is curl-free, and the potential has zero mean.
    """

    solenoidal: SpectralVectorField
    gradient_part: SpectralVectorField
    potential: SpectralScalarField


def decompose(u: SpectralVectorField) -> ProjectionDecomposition:
    sol = leray_project(u)
    gradient_part = u - sol
    return ProjectionDecomposition(sol, gradient_part, gradient_potential(gradient_part))


def gradient_potential(g: SpectralVectorField) -> SpectralScalarField:
    """Zero-mean p with grad(p) equal to the curl-free field g.

    Mode formula: p_k = (ell / (2 pi i)) (k . g_k) / (k, k) for k != 0; the
    zero mode of p is fixed to 0 (zero-mean gauge).  The mean of g is
    ignored, since constants are not gradients.
    """
    k1, k2, k3, ksq = wave_cubes(g.bandwidth)
    stack = g.coeff_stack()
    kdotg = k1 * stack[0] + k2 * stack[1] + k3 * stack[2]
    coeffs = np.zeros(ksq.shape, dtype=np.complex128)
    nz = ksq > 0
    coeffs[nz] = (g.ell / (2.0j * math.pi)) * kdotg[nz] / ksq[nz]
    return SpectralScalarField(g.ell, g.cutoff, coeffs)


def recover_pressure(
    f: SpectralVectorField | None, u: SpectralVectorField
) -> SpectralScalarField:
    """Pressure of the momentum balance: zero-mean p with

        grad(p) = (I - P)(f - (u . grad) u).
    """
    residual = -self_convection(u)
    if f is not None:
        if f.ell != u.ell or f.cutoff != u.cutoff:
            raise ValueError("mismatched ell/cutoff between forcing and velocity")
        residual = f + residual
    rough = residual - leray_project(residual)
    return gradient_potential(rough)


def dual_norm(f: SpectralVectorField, s: int) -> float:
    """Negative-order norm of the divergence-free dual pairing,

        ||f|| = ( ell^3 sum_k (1 + (k,k)(2 pi/ell)^2)^(-s) |c_k(Pf)|^2 )^(1/2).

    For s = 1 this equals exactly the supremum of |(f, v)_{L2}| / ||v||_{H1}
    over divergence-free v, with ||v||_{H1}^2 = ||v||^2 + ||grad v||^2.  For
    s >= 2 it is an equivalent-norm realization: the standard H^s norm is
    replaced by the spectral weight (1 + (k,k)(2 pi/ell)^2)^s, which bounds
    it above and below with s-dependent constants.
    """
    if not (isinstance(s, (int, np.integer)) and s >= 1):
        raise ValueError("dual norm order s must be a positive integer")
    proj = _project_stack(f.coeff_stack(), f.bandwidth)
    ksq = wave_cubes(f.bandwidth)[3].astype(np.float64)
    weight = (1.0 + ksq * (2.0 * math.pi / f.ell) ** 2) ** (-float(s))
    total = float(np.sum(weight * np.abs(proj) ** 2))
    return math.sqrt(f.ell**3 * total)


def derivative_commutation_defect(u: SpectralVectorField, j: int) -> float:
    """||d_j(Pu) - P(d_j u)||_{L2}; zero up to roundoff for every field."""
    if j not in (1, 2, 3):
        raise ValueError("derivative direction j must be 1, 2 or 3")
    alpha = tuple(1 if i == j - 1 else 0 for i in range(3))
    lhs = partial_derivative(leray_project(u), alpha)
    rhs = leray_project(partial_derivative(u, alpha))
    return grad_norm(lhs - rhs, 0)
