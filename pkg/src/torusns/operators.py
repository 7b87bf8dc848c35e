"""Differential operators, norms, grid transforms and dealiased products.

Every differential operator acts as a Fourier multiplier on the coefficient
cube (d/dx_j -> i (2 pi / ell) k_j), so the vector-calculus identities

    rot grad = 0,   div rot = 0,   -rot rot + grad div = Laplacian

hold exactly at coefficient level.  Quadratic products are evaluated
pseudo-spectrally on a grid padded far enough that the retained coefficients
are the exact convolution (no aliasing); truncating the result to the input
cutoff therefore yields the exact Galerkin projection of the product.

L2 norms and inner products are exact Parseval sums.  L^p norms for p != 2
are rectangle-rule quadrature on a user-chosen grid, and the L^infinity norm
is a grid maximum; these are documented sampling approximations.
"""

from __future__ import annotations

import math

import numpy as np

from .fields import (
    Field,
    SampledGrid,
    SpectralScalarField,
    SpectralVectorField,
    bandwidth_of,
    hermitianize,
    truncate_scalar,
    wave_cubes,
    wave_index_axes,
)

__all__ = [
    "grad",
    "div",
    "rot",
    "laplacian",
    "partial_derivative",
    "neg_laplacian_pow",
    "sobolev_norm",
    "l2_norm_exact",
    "inner_l2",
    "grad_norm",
    "hs_norm",
    "lp_norm",
    "dj_norm",
    "synthesize",
    "analyze",
    "multiply",
    "convect",
    "self_convection",
    "symmetrized_convection",
    "multi_indices",
]


def _wavenumber_factor(u: Field) -> float:
    return 2.0 * math.pi / u.ell


def _apply_multiplier(u: SpectralScalarField, mult: np.ndarray) -> SpectralScalarField:
    return u.with_coeffs(u.coeffs * mult)


def grad(p: SpectralScalarField) -> SpectralVectorField:
    """Gradient of a scalar field."""
    k1, k2, k3, _ = wave_cubes(p.bandwidth)
    fac = 1j * _wavenumber_factor(p)
    return SpectralVectorField(
        tuple(_apply_multiplier(p, fac * k) for k in (k1, k2, k3))
    )


def div(u: SpectralVectorField) -> SpectralScalarField:
    """Divergence of a vector field."""
    k1, k2, k3, _ = wave_cubes(u.bandwidth)
    fac = 1j * _wavenumber_factor(u)
    out = fac * (
        k1 * u.components[0].coeffs
        + k2 * u.components[1].coeffs
        + k3 * u.components[2].coeffs
    )
    return SpectralScalarField(u.ell, u.cutoff, out)


def rot(u: SpectralVectorField) -> SpectralVectorField:
    """Curl of a vector field."""
    k1, k2, k3, _ = wave_cubes(u.bandwidth)
    fac = 1j * _wavenumber_factor(u)
    c1, c2, c3 = (c.coeffs for c in u.components)
    out = np.stack(
        [
            fac * (k2 * c3 - k3 * c2),
            fac * (k3 * c1 - k1 * c3),
            fac * (k1 * c2 - k2 * c1),
        ]
    )
    return SpectralVectorField.from_stack(u.ell, u.cutoff, out)


def laplacian(u: Field) -> Field:
    """Laplacian, same rank as the input."""
    ksq = wave_cubes(u.bandwidth)[3]
    mult = -(_wavenumber_factor(u) ** 2) * ksq
    if isinstance(u, SpectralScalarField):
        return _apply_multiplier(u, mult)
    return u.with_stack(u.coeff_stack() * mult)


def partial_derivative(u: Field, alpha: tuple[int, int, int]) -> Field:
    """Mixed partial d^alpha for a multi-index alpha = (a1, a2, a3)."""
    k1, k2, k3, _ = wave_cubes(u.bandwidth)
    fac = 1j * _wavenumber_factor(u)
    mult = (fac * k1) ** alpha[0] * (fac * k2) ** alpha[1] * (fac * k3) ** alpha[2]
    if isinstance(u, SpectralScalarField):
        return _apply_multiplier(u, mult)
    return u.with_stack(u.coeff_stack() * mult)


def neg_laplacian_pow(u: Field, r: float) -> Field:
    """Fractional power of the negative Laplacian.

    Multiplies mode k != 0 by ((k, k) (2 pi / ell)^2)^r.  The zero mode is
    preserved for r = 0 and mapped to 0 otherwise; for r < 0 the field must
    have zero mean since the operator is not invertible on constants.
    """
    bw = u.bandwidth
    ksq = wave_cubes(bw)[3]
    if r == 0:
        return u
    mean = u.mean if isinstance(u, SpectralScalarField) else max(
        abs(c.mean) for c in u.components
    )
    if r < 0 and abs(mean) > 0:
        raise ValueError("not invertible on constants: zero mode must vanish for r < 0")
    lam = ksq.astype(np.float64) * _wavenumber_factor(u) ** 2
    mult = np.zeros_like(lam)
    nz = ksq > 0
    mult[nz] = lam[nz] ** r
    if isinstance(u, SpectralScalarField):
        return _apply_multiplier(u, mult)
    return u.with_stack(u.coeff_stack() * mult)


# ---------------------------------------------------------------------------
# Exact norms and inner products (Parseval sums).
# ---------------------------------------------------------------------------


def _coeff_stack(u: Field) -> np.ndarray:
    if isinstance(u, SpectralScalarField):
        return u.coeffs[None]
    return u.coeff_stack()


def sobolev_norm(u: Field, s: float) -> float:
    """Coefficient-weighted Sobolev norm (sum_k (1 + (k,k))^s |c_k|^2)^(1/2).

    Vector fields sum the squares of the three components.  This is the
    dimensionless sequence norm; for the H^s(Q) norm carrying the ell^3
    Parseval factor and physical wavenumbers see :func:`hs_norm`.
    """
    ksq = wave_cubes(u.bandwidth)[3]
    weight = (1.0 + ksq.astype(np.float64)) ** s
    total = float(np.sum(weight * np.abs(_coeff_stack(u)) ** 2))
    return math.sqrt(total)


def l2_norm_exact(u: Field) -> float:
    """Exact L2(Q) norm, ||u||^2 = ell^3 sum_k |c_k|^2."""
    total = float(np.sum(np.abs(_coeff_stack(u)) ** 2))
    return math.sqrt(u.ell**3 * total)


def inner_l2(u: Field, v: Field) -> float:
    """Exact L2(Q) inner product of two real fields of the same rank."""
    if u.ell != v.ell:
        raise ValueError("incompatible domains: fields have different periods")
    if u.ncomponents != v.ncomponents:
        raise ValueError("cannot pair fields of different rank")
    a, b = _coeff_stack(u), _coeff_stack(v)
    if a.shape != b.shape:
        bw = max(u.bandwidth, v.bandwidth)
        a = _embed_stack(a, bw)
        b = _embed_stack(b, bw)
    return float(np.real(np.sum(a * np.conj(b)))) * u.ell**3


def _embed_stack(stack: np.ndarray, bw_new: int) -> np.ndarray:
    bw_old = (stack.shape[1] - 1) // 2
    if bw_old == bw_new:
        return stack
    side = 2 * bw_new + 1
    out = np.zeros((stack.shape[0], side, side, side), dtype=stack.dtype)
    lo, hi = bw_new - bw_old, bw_new + bw_old + 1
    out[:, lo:hi, lo:hi, lo:hi] = stack
    return out


def grad_norm(u: Field, j: float) -> float:
    """||(-Laplacian)^(j/2) u||_{L2}; equals (sum_{|a|=j} ||d^a u||^2)^(1/2).

    For integer j this matches the summed derivative seminorm obtained by
    integration by parts; j = 0 gives the plain L2 norm (mean included).
    """
    ksq = wave_cubes(u.bandwidth)[3].astype(np.float64)
    lam = ksq * _wavenumber_factor(u) ** 2
    weight = lam**j if j > 0 else np.ones_like(lam)
    total = float(np.sum(weight * np.abs(_coeff_stack(u)) ** 2))
    return math.sqrt(u.ell**3 * total)


def hs_norm(u: Field, s: int) -> float:
    """Physical Sobolev norm (sum_{j<=s} ||(-Lap)^(j/2) u||^2_{L2})^(1/2)."""
    return math.sqrt(sum(grad_norm(u, j) ** 2 for j in range(s + 1)))


def multi_indices(order: int) -> list[tuple[int, int, int]]:
    """All 3d multi-indices of modulus ``order``."""
    return [
        (a, b, order - a - b)
        for a in range(order + 1)
        for b in range(order - a + 1)
    ]


# ---------------------------------------------------------------------------
# Grid synthesis and analysis.
# ---------------------------------------------------------------------------


def _fft_indices(bandwidth: int, n: int) -> np.ndarray:
    return wave_index_axes(bandwidth) % n


def _sample_stack(stack: np.ndarray, n: int) -> np.ndarray:
    """Exact point samples of the fields in ``stack`` on the n^3 grid.

    Works for any n >= 1: coefficients sharing a residue mod n are
    accumulated, which reproduces the exact point values of the truncated
    Fourier sum even on undersampled grids.
    """
    bw = (stack.shape[1] - 1) // 2
    idx = _fft_indices(bw, n)
    bufs = np.zeros((stack.shape[0], n, n, n), dtype=np.complex128)
    if n >= 2 * bw + 1:
        bufs[np.ix_(np.arange(stack.shape[0]), idx, idx, idx)] = stack
    else:
        i1, i2, i3 = np.meshgrid(idx, idx, idx, indexing="ij")
        for c in range(stack.shape[0]):
            np.add.at(bufs[c], (i1, i2, i3), stack[c])
    vals = np.fft.ifftn(bufs, axes=(1, 2, 3)) * n**3
    return np.real(vals)


def sample_values(u: Field, n: int) -> np.ndarray:
    """Point samples on the uniform n^3 grid; shape (n,n,n) or (3,n,n,n)."""
    vals = _sample_stack(_coeff_stack(u), n)
    return vals[0] if isinstance(u, SpectralScalarField) else vals


def synthesize(u: SpectralScalarField, n: int) -> SampledGrid:
    """Sample a scalar field on the n^3 grid (n a power of two, >= 2B+1)."""
    if n < 2 * u.bandwidth + 1:
        raise ValueError(
            f"undersampled: grid size {n} cannot resolve bandwidth {u.bandwidth}"
        )
    return SampledGrid(u.ell, n, sample_values(u, n))


def analyze(grid: SampledGrid, cutoff: int) -> SpectralScalarField:
    """Recover the coefficients of a bandlimited field from its grid samples."""
    return _analyze_values(grid.values, grid.ell, cutoff)


def _analyze_values(
    values: np.ndarray, ell: float, cutoff: int, assume_support: int | None = None
) -> SpectralScalarField:
    n = values.shape[-1]
    bw = bandwidth_of(cutoff)
    read_bw = bw if assume_support is None else min(bw, assume_support)
    if n < 2 * read_bw + 1:
        raise ValueError(f"undersampled: grid size {n} cannot resolve cutoff {cutoff}")
    spectrum = np.fft.fftn(values) / n**3
    idx = _fft_indices(read_bw, n)
    side = 2 * bw + 1
    coeffs = np.zeros((side,) * 3, dtype=np.complex128)
    lo, hi = bw - read_bw, bw + read_bw + 1
    coeffs[lo:hi, lo:hi, lo:hi] = spectrum[np.ix_(idx, idx, idx)]
    return SpectralScalarField(ell, cutoff, hermitianize(coeffs))


def _fast_len(n: int) -> int:
    """Smallest 5-smooth integer >= n (friendly FFT size)."""
    while True:
        m = n
        for p in (2, 3, 5):
            while m % p == 0:
                m //= p
        if m == 1:
            return n
        n += 1


def _product_grid(bw_total: int, min_grid: int | None = None) -> int:
    # alias-free retention of every product mode needs n >= 2*bw_total + 1
    n = 2 * bw_total + 1
    if min_grid is not None:
        n = max(n, min_grid)
    return _fast_len(max(n, 4))


def multiply(
    a: SpectralScalarField,
    b: SpectralScalarField,
    out_cutoff: int | None = None,
    min_grid: int | None = None,
) -> SpectralScalarField:
    """Pointwise product of two scalar fields, exact in coefficients.

    The result is computed on a zero-padded grid large enough that the full
    convolution is alias-free, then truncated to ``out_cutoff`` (defaults to
    the larger input cutoff, i.e. the Galerkin projection of the product).
    """
    if a.ell != b.ell:
        raise ValueError("incompatible domains: fields have different periods")
    if out_cutoff is None:
        out_cutoff = max(a.cutoff, b.cutoff)
    bw_total = a.bandwidth + b.bandwidth
    n = _product_grid(bw_total, min_grid)
    va = sample_values(a, n)
    vb = sample_values(b, n)
    full = _analyze_values(va * vb, a.ell, 3 * bw_total**2, assume_support=bw_total)
    return truncate_scalar(full, out_cutoff)


def convect(
    w: SpectralVectorField,
    u: SpectralVectorField,
    out_cutoff: int | None = None,
    min_grid: int | None = None,
) -> SpectralVectorField:
    """Convective derivative (w . grad) u, dealiased.

    The retained coefficients are the exact Galerkin truncation of the
    product; no aliasing error enters.  Inputs must share ell and cutoff.
    """
    if w.ell != u.ell or w.cutoff != u.cutoff:
        raise ValueError("mismatched ell/cutoff between drift and field")
    if out_cutoff is None:
        out_cutoff = u.cutoff
    bw_total = w.bandwidth + u.bandwidth
    n = _product_grid(bw_total, min_grid)
    wv = _sample_stack(w.coeff_stack(), n)
    k1, k2, k3, _ = wave_cubes(u.bandwidth)
    fac = 1j * _wavenumber_factor(u)
    deriv_stack = np.empty((9,) + u.components[0].coeffs.shape, dtype=np.complex128)
    for i, comp in enumerate(u.components):
        for j, kj in enumerate((k1, k2, k3)):
            deriv_stack[3 * i + j] = fac * kj * comp.coeffs
    dv = _sample_stack(deriv_stack, n).reshape(3, 3, n, n, n)
    prod = np.einsum("jxyz,ijxyz->ixyz", wv, dv)
    spectrum = np.fft.fftn(prod, axes=(1, 2, 3)) / n**3
    idx = _fft_indices(bw_total, n)
    small = spectrum[np.ix_(np.arange(3), idx, idx, idx)]
    out_bw = bandwidth_of(out_cutoff)
    side = 2 * out_bw + 1
    coeffs = np.zeros((3, side, side, side), dtype=np.complex128)
    keep = min(out_bw, bw_total)
    lo_o, hi_o = out_bw - keep, out_bw + keep + 1
    lo_s, hi_s = bw_total - keep, bw_total + keep + 1
    coeffs[:, lo_o:hi_o, lo_o:hi_o, lo_o:hi_o] = small[:, lo_s:hi_s, lo_s:hi_s, lo_s:hi_s]
    coeffs = 0.5 * (coeffs + np.conj(coeffs[:, ::-1, ::-1, ::-1]))
    return SpectralVectorField.from_stack(u.ell, out_cutoff, coeffs)


def self_convection(
    u: SpectralVectorField, out_cutoff: int | None = None, min_grid: int | None = None
) -> SpectralVectorField:
    """Nonlinear transport term (u . grad) u."""
    return convect(u, u, out_cutoff, min_grid)


def symmetrized_convection(
    w: SpectralVectorField,
    u: SpectralVectorField,
    out_cutoff: int | None = None,
    min_grid: int | None = None,
) -> SpectralVectorField:
    """Symmetric bilinear term (w . grad) u + (u . grad) w."""
    return convect(w, u, out_cutoff, min_grid) + convect(u, w, out_cutoff, min_grid)


# ---------------------------------------------------------------------------
# Lebesgue norms by quadrature.
# ---------------------------------------------------------------------------


def _pointwise_magnitude(u: Field, n: int) -> np.ndarray:
    vals = sample_values(u, n)
    if isinstance(u, SpectralScalarField):
        return np.abs(vals)
    return np.sqrt(np.sum(vals**2, axis=0))


def lp_norm(u: Field, p: float, n: int) -> float:
    """L^p(Q) norm by rectangle-rule quadrature on the n^3 grid.

    Vector fields use the pointwise Euclidean magnitude.  For p = infinity
    the grid maximum of the magnitude is returned.  Except at p = 2 (where
    the quadrature converges to the exact Parseval value) these are sampling
    approximations whose accuracy is controlled by n.
    """
    if p < 1:
        raise ValueError("L^p norms require p >= 1")
    mag = _pointwise_magnitude(u, n)
    if math.isinf(p):
        return float(np.max(mag))
    cell = (u.ell / n) ** 3
    return float((cell * np.sum(mag**p)) ** (1.0 / p))


def dj_norm(u: Field, j: int, p: float, n: int) -> float:
    """max_{|alpha| = j} ||d^alpha u||_{L^p}, the derivative-set L^p seminorm."""
    if j == 0:
        return lp_norm(u, p, n)
    return max(lp_norm(partial_derivative(u, alpha), p, n) for alpha in multi_indices(j))
