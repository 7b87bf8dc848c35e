"""Truncated Fourier representation of periodic fields on the 3-torus.

A real scalar field of period ``ell`` is stored through its Fourier
coefficients

    u(x) = sum_k c_k exp(i (k, x) 2 pi / ell),   c_k = ell^-3 int_Q u e^{-i(k,x)2pi/ell} dx,

where Q = (0, ell)^3 and k runs over integer wave vectors with shell value
(k, k) = k1^2 + k2^2 + k3^2 at most ``cutoff``.  With this normalization the
basis exponentials have squared L2(Q) norm ell^3, so Parseval reads
||u||_{L2}^2 = ell^3 sum |c_k|^2.

Coefficients live on a dense centered cube of side 2*B + 1 with
B = isqrt(cutoff) (the per-axis bandwidth); entries outside the shell
(k, k) <= cutoff are identically zero.  Real-valued fields obey the Hermitian
symmetry c_{-k} = conj(c_k), which every constructor enforces.

Fields are immutable values; all operations on them are pure functions.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Iterator, Mapping, NamedTuple

import numpy as np

__all__ = [
    "WaveVector",
    "SpectralScalarField",
    "SpectralVectorField",
    "SampledGrid",
    "scalar_from_modes",
    "vector_from_modes",
    "random_scalar_field",
    "random_vector_field",
    "write_field",
    "read_field",
    "save_field",
    "load_field",
]


class WaveVector(NamedTuple):
    """Integer mode index k = (k1, k2, k3)."""

    k1: int
    k2: int
    k3: int

    @property
    def shell(self) -> int:
        """Shell value (k, k) = k1^2 + k2^2 + k3^2."""
        return self.k1 * self.k1 + self.k2 * self.k2 + self.k3 * self.k3

    def __neg__(self) -> "WaveVector":
        return WaveVector(-self.k1, -self.k2, -self.k3)


def bandwidth_of(cutoff: int) -> int:
    """Per-axis bandwidth B = isqrt(cutoff) of the shell truncation."""
    return math.isqrt(cutoff)


def wave_index_axes(bandwidth: int) -> np.ndarray:
    """Axis of admitted integer wavenumbers, -B..B."""
    return np.arange(-bandwidth, bandwidth + 1)


_CUBE_CACHE: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}


def wave_cubes(bandwidth: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Return (K1, K2, K3, K_sq) integer cubes on the centered index layout."""
    cached = _CUBE_CACHE.get(bandwidth)
    if cached is None:
        ax = wave_index_axes(bandwidth)
        k1, k2, k3 = np.meshgrid(ax, ax, ax, indexing="ij")
        ksq = k1 * k1 + k2 * k2 + k3 * k3
        for a in (k1, k2, k3, ksq):
            a.setflags(write=False)
        cached = (k1, k2, k3, ksq)
        _CUBE_CACHE[bandwidth] = cached
    return cached


def shell_mask(bandwidth: int, cutoff: int) -> np.ndarray:
    """Boolean cube selecting modes with (k, k) <= cutoff."""
    return wave_cubes(bandwidth)[3] <= cutoff


def _prepare_coeffs(coeffs: np.ndarray, cutoff: int) -> np.ndarray:
    bw = bandwidth_of(cutoff)
    side = 2 * bw + 1
    arr = np.array(coeffs, dtype=np.complex128)
    if arr.shape != (side, side, side):
        raise ValueError(
            f"coefficient cube must have shape {(side, side, side)} for cutoff {cutoff}, "
            f"got {arr.shape}"
        )
    arr[~shell_mask(bw, cutoff)] = 0.0
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SpectralScalarField:
    """Real periodic scalar field given by truncated Fourier coefficients.

    Attributes
    ----------
    ell : float
        Period of the torus (side of the fundamental cube Q).
    cutoff : int
        Maximal admitted shell (k, k).
    coeffs : np.ndarray
        Complex cube of shape (2B+1,)*3, centered layout: entry
        [B + k1, B + k2, B + k3] holds c_k.
    """

    ell: float
    cutoff: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        if not self.ell > 0:
            raise ValueError("period ell must be positive")
        if not (isinstance(self.cutoff, (int, np.integer)) and self.cutoff >= 0):
            raise ValueError("cutoff must be a nonnegative integer")
        object.__setattr__(self, "cutoff", int(self.cutoff))
        object.__setattr__(self, "coeffs", _prepare_coeffs(self.coeffs, self.cutoff))

    @property
    def bandwidth(self) -> int:
        return bandwidth_of(self.cutoff)

    @property
    def ncomponents(self) -> int:
        return 1

    @property
    def mean(self) -> float:
        """Mean value over Q (the k = 0 coefficient)."""
        b = self.bandwidth
        return float(self.coeffs[b, b, b].real)

    def coefficient(self, k: tuple[int, int, int]) -> complex:
        """c_k, zero for modes outside the stored cube."""
        b = self.bandwidth
        if any(abs(int(ki)) > b for ki in k):
            return 0.0 + 0.0j
        return complex(self.coeffs[b + k[0], b + k[1], b + k[2]])

    def modes(self, tol: float = 0.0) -> Iterator[tuple[WaveVector, complex]]:
        """Iterate over (k, c_k) with |c_k| > tol."""
        b = self.bandwidth
        idx = np.argwhere(np.abs(self.coeffs) > tol)
        for i1, i2, i3 in idx:
            yield WaveVector(int(i1 - b), int(i2 - b), int(i3 - b)), complex(
                self.coeffs[i1, i2, i3]
            )

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralScalarField":
        return SpectralScalarField(self.ell, self.cutoff, coeffs)

    def hermitian_defect(self) -> float:
        """Max |c_{-k} - conj(c_k)| over the cube (0 for real fields)."""
        flipped = self.coeffs[::-1, ::-1, ::-1]
        return float(np.max(np.abs(flipped - np.conj(self.coeffs))))

    @staticmethod
    def zero(ell: float, cutoff: int) -> "SpectralScalarField":
        side = 2 * bandwidth_of(cutoff) + 1
        return SpectralScalarField(ell, cutoff, np.zeros((side,) * 3, dtype=np.complex128))

    def __add__(self, other: "SpectralScalarField") -> "SpectralScalarField":
        a, b = align_scalar(self, other)
        return a.with_coeffs(a.coeffs + b.coeffs)

    def __sub__(self, other: "SpectralScalarField") -> "SpectralScalarField":
        a, b = align_scalar(self, other)
        return a.with_coeffs(a.coeffs - b.coeffs)

    def __mul__(self, scalar: float) -> "SpectralScalarField":
        return self.with_coeffs(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralScalarField":
        return self.with_coeffs(-self.coeffs)


@dataclass(frozen=True)
class SpectralVectorField:
    """Real periodic vector field; three scalar components sharing ell and cutoff."""

    components: tuple[SpectralScalarField, SpectralScalarField, SpectralScalarField]

    def __post_init__(self) -> None:
        comps = tuple(self.components)
        if len(comps) != 3:
            raise ValueError("a vector field has exactly three components")
        c0 = comps[0]
        for c in comps[1:]:
            if c.ell != c0.ell or c.cutoff != c0.cutoff:
                raise ValueError("vector components must agree on ell and cutoff")
        object.__setattr__(self, "components", comps)

    @property
    def ell(self) -> float:
        return self.components[0].ell

    @property
    def cutoff(self) -> int:
        return self.components[0].cutoff

    @property
    def bandwidth(self) -> int:
        return self.components[0].bandwidth

    @property
    def ncomponents(self) -> int:
        return 3

    def coeff_stack(self) -> np.ndarray:
        """Stacked coefficient array of shape (3, 2B+1, 2B+1, 2B+1)."""
        return np.stack([c.coeffs for c in self.components])

    def with_stack(self, stack: np.ndarray) -> "SpectralVectorField":
        return SpectralVectorField(
            tuple(SpectralScalarField(self.ell, self.cutoff, stack[i]) for i in range(3))
        )

    @staticmethod
    def zero(ell: float, cutoff: int) -> "SpectralVectorField":
        z = SpectralScalarField.zero(ell, cutoff)
        return SpectralVectorField((z, z, z))

    @staticmethod
    def from_stack(ell: float, cutoff: int, stack: np.ndarray) -> "SpectralVectorField":
        return SpectralVectorField(
            tuple(SpectralScalarField(ell, cutoff, stack[i]) for i in range(3))
        )

    def hermitian_defect(self) -> float:
        return max(c.hermitian_defect() for c in self.components)

    def __add__(self, other: "SpectralVectorField") -> "SpectralVectorField":
        a, b = align_vector(self, other)
        return a.with_stack(a.coeff_stack() + b.coeff_stack())

    def __sub__(self, other: "SpectralVectorField") -> "SpectralVectorField":
        a, b = align_vector(self, other)
        return a.with_stack(a.coeff_stack() - b.coeff_stack())

    def __mul__(self, scalar: float) -> "SpectralVectorField":
        return SpectralVectorField(tuple(c * scalar for c in self.components))

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralVectorField":
        return SpectralVectorField(tuple(-c for c in self.components))


Field = SpectralScalarField | SpectralVectorField


def _is_pow_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SampledGrid:
    """Real samples of a periodic scalar field on the uniform grid x_j = j ell / n.

    The grid size n is a power of two, at least 4.
    """

    ell: float
    n: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if not self.ell > 0:
            raise ValueError("period ell must be positive")
        if not (_is_pow_two(int(self.n)) and self.n >= 4):
            raise ValueError("grid size n must be a power of two >= 4")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.n,) * 3:
            raise ValueError(f"values must have shape {(self.n,) * 3}, got {vals.shape}")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "values", vals)


def align_scalar(
    a: SpectralScalarField, b: SpectralScalarField
) -> tuple[SpectralScalarField, SpectralScalarField]:
    """Embed two scalar fields into a common cutoff (shared ell required)."""
    if a.ell != b.ell:
        raise ValueError("incompatible domains: fields have different periods")
    cut = max(a.cutoff, b.cutoff)
    return embed_scalar(a, cut), embed_scalar(b, cut)


def align_vector(
    a: SpectralVectorField, b: SpectralVectorField
) -> tuple[SpectralVectorField, SpectralVectorField]:
    if a.ell != b.ell:
        raise ValueError("incompatible domains: fields have different periods")
    cut = max(a.cutoff, b.cutoff)
    return embed_vector(a, cut), embed_vector(b, cut)


def embed_scalar(u: SpectralScalarField, cutoff: int) -> SpectralScalarField:
    """Re-express u on a cube of (larger or equal) cutoff without changing it."""
    if cutoff == u.cutoff:
        return u
    if cutoff < u.cutoff:
        raise ValueError("embed target cutoff smaller than field cutoff; truncate instead")
    bw_new = bandwidth_of(cutoff)
    bw_old = u.bandwidth
    side = 2 * bw_new + 1
    out = np.zeros((side,) * 3, dtype=np.complex128)
    lo, hi = bw_new - bw_old, bw_new + bw_old + 1
    out[lo:hi, lo:hi, lo:hi] = u.coeffs
    return SpectralScalarField(u.ell, cutoff, out)


def embed_vector(u: SpectralVectorField, cutoff: int) -> SpectralVectorField:
    if cutoff == u.cutoff:
        return u
    return SpectralVectorField(tuple(embed_scalar(c, cutoff) for c in u.components))


def truncate_scalar(u: SpectralScalarField, cutoff: int) -> SpectralScalarField:
    """Drop modes with (k, k) > cutoff."""
    if cutoff >= u.cutoff:
        return embed_scalar(u, cutoff) if cutoff > u.cutoff else u
    bw_new = bandwidth_of(cutoff)
    bw_old = u.bandwidth
    lo, hi = bw_old - bw_new, bw_old + bw_new + 1
    return SpectralScalarField(u.ell, cutoff, u.coeffs[lo:hi, lo:hi, lo:hi])


def truncate_vector(u: SpectralVectorField, cutoff: int) -> SpectralVectorField:
    return SpectralVectorField(tuple(truncate_scalar(c, cutoff) for c in u.components))


def hermitianize(coeffs: np.ndarray) -> np.ndarray:
    """Symmetrize a centered coefficient cube so c_{-k} = conj(c_k) exactly."""
    return 0.5 * (coeffs + np.conj(coeffs[::-1, ::-1, ::-1]))


def scalar_from_modes(
    ell: float,
    cutoff: int,
    modes: Mapping[tuple[int, int, int], complex],
    conjugate_pairs: bool = True,
) -> SpectralScalarField:
    """Build a scalar field from a sparse {k: c_k} map.

    With ``conjugate_pairs`` (default) the coefficient at -k is filled in as
    conj(c_k) unless the map sets it explicitly, so a real field can be given
    by one representative of each +-k pair.
    """
    bw = bandwidth_of(cutoff)
    side = 2 * bw + 1
    out = np.zeros((side,) * 3, dtype=np.complex128)
    explicit = set()
    for k, c in modes.items():
        kv = WaveVector(*map(int, k))
        if kv.shell > cutoff:
            raise ValueError(f"mode {tuple(kv)} lies outside shell cutoff {cutoff}")
        out[bw + kv.k1, bw + kv.k2, bw + kv.k3] = complex(c)
        explicit.add(tuple(kv))
    if conjugate_pairs:
        for k in list(explicit):
            neg = (-k[0], -k[1], -k[2])
            if neg not in explicit:
                out[bw + neg[0], bw + neg[1], bw + neg[2]] = np.conj(
                    out[bw + k[0], bw + k[1], bw + k[2]]
                )
    return SpectralScalarField(ell, cutoff, out)


def vector_from_modes(
    ell: float,
    cutoff: int,
    modes: Mapping[tuple[int, int, int], tuple[complex, complex, complex]],
    conjugate_pairs: bool = True,
) -> SpectralVectorField:
    """Vector analogue of :func:`scalar_from_modes` with C^3 amplitudes."""
    comps = []
    for i in range(3):
        comps.append(
            scalar_from_modes(
                ell, cutoff, {k: amp[i] for k, amp in modes.items()}, conjugate_pairs
            )
        )
    return SpectralVectorField(tuple(comps))


def random_scalar_field(
    ell: float,
    cutoff: int,
    rng: np.random.Generator,
    amplitude: float = 1.0,
    zero_mean: bool = False,
) -> SpectralScalarField:
    """Random real field with iid Gaussian coefficients inside the shell cutoff."""
    bw = bandwidth_of(cutoff)
    side = 2 * bw + 1
    raw = rng.standard_normal((side,) * 3) + 1j * rng.standard_normal((side,) * 3)
    raw = hermitianize(raw) * amplitude
    if zero_mean:
        raw[bw, bw, bw] = 0.0
    return SpectralScalarField(ell, cutoff, raw)


def random_vector_field(
    ell: float,
    cutoff: int,
    rng: np.random.Generator,
    amplitude: float = 1.0,
    zero_mean: bool = False,
) -> SpectralVectorField:
    return SpectralVectorField(
        tuple(random_scalar_field(ell, cutoff, rng, amplitude, zero_mean) for _ in range(3))
    )


# ---------------------------------------------------------------------------
# Text serialization.
#
# Format:  header line "TORUSFIELD 1 <ell> <cutoff> <ncomponents>", then one
# line "k1 k2 k3 comp re im" per stored mode with comp in 1..ncomponents.
# Only one representative of each +-k pair is stored (k = 0 counts as its own
# pair); the missing partner is restored as the complex conjugate on read.
# ---------------------------------------------------------------------------

_FMT = "{:.17g}"


def _canonical_pair_rep(k: WaveVector) -> bool:
    """True when k is the stored representative of the pair {k, -k}."""
    return tuple(k) >= tuple(-k)


def write_field(u: Field, stream: io.TextIOBase) -> None:
    comps = [u] if isinstance(u, SpectralScalarField) else list(u.components)
    stream.write(
        f"TORUSFIELD 1 {_FMT.format(u.ell)} {u.cutoff} {len(comps)}\n"
    )
    for ci, comp in enumerate(comps, start=1):
        entries = [(k, c) for k, c in comp.modes() if _canonical_pair_rep(k)]
        entries.sort(key=lambda item: tuple(item[0]))
        for k, c in entries:
            stream.write(
                f"{k.k1} {k.k2} {k.k3} {ci} "
                f"{_FMT.format(c.real)} {_FMT.format(c.imag)}\n"
            )


def parse_field_block(lines: list[str], pos: int) -> tuple[Field, int]:
    """Parse one TORUSFIELD block starting at ``lines[pos]``.

    Returns the field and the index of the first line after the block; used
    directly by composite formats (trajectory files, basis dumps).
    """
    header = lines[pos].split()
    if len(header) != 5 or header[0] != "TORUSFIELD" or header[1] != "1":
        raise ValueError(f"expected TORUSFIELD 1 header at line {pos + 1}")
    ell = float(header[2])
    cutoff = int(header[3])
    ncomp = int(header[4])
    if ncomp not in (1, 3):
        raise ValueError(f"unsupported component count {ncomp}")
    bw = bandwidth_of(cutoff)
    side = 2 * bw + 1
    stacks = np.zeros((ncomp, side, side, side), dtype=np.complex128)
    seen: set[tuple[int, int, int, int]] = set()
    pos += 1
    while pos < len(lines):
        parts = lines[pos].split()
        if not parts:
            pos += 1
            continue
        if not _looks_like_int(parts[0]):
            break  # next block's header
        if len(parts) != 6:
            raise ValueError(f"malformed mode line {pos + 1}: {lines[pos]!r}")
        k1, k2, k3, ci = (int(p) for p in parts[:4])
        c = complex(float(parts[4]), float(parts[5]))
        kv = WaveVector(k1, k2, k3)
        if kv.shell > cutoff:
            raise ValueError(f"mode {tuple(kv)} exceeds cutoff {cutoff}")
        if not 1 <= ci <= ncomp:
            raise ValueError(f"component index {ci} out of range")
        key = (k1, k2, k3, ci)
        nkey = (-k1, -k2, -k3, ci)
        if key in seen or nkey in seen:
            raise ValueError(f"duplicate mode {key[:3]} in component {ci}")
        seen.add(key)
        stacks[ci - 1, bw + k1, bw + k2, bw + k3] = c
        if (k1, k2, k3) != (0, 0, 0):
            stacks[ci - 1, bw - k1, bw - k2, bw - k3] = np.conj(c)
        pos += 1
    if ncomp == 1:
        return SpectralScalarField(ell, cutoff, stacks[0]), pos
    return SpectralVectorField.from_stack(ell, cutoff, stacks), pos


def _looks_like_int(token: str) -> bool:
    try:
        int(token)
    except ValueError:
        return False
    return True


def read_field(stream: io.TextIOBase) -> Field:
    lines = stream.read().splitlines()
    pos = 0
    while pos < len(lines) and not lines[pos].strip():
        pos += 1
    if pos == len(lines):
        raise ValueError("empty field stream")
    field, pos = parse_field_block(lines, pos)
    if any(line.strip() for line in lines[pos:]):
        raise ValueError("trailing content after field block")
    return field


def save_field(u: Field, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        write_field(u, fh)


def load_field(path) -> Field:
    with open(path, "r", encoding="ascii") as fh:
        return read_field(fh)
