"""Periodic-box fields and Fourier multipliers.

Fields live on a uniform periodic grid.  Transforms are unitary (``norm="ortho"``)
so that the cell-volume weighted L2 norm is the same on both sides.  On even
grids the Nyquist wavenumber is mapped to zero frequency; otherwise the pairing
``k <-> -k`` that keeps multiplied fields real would break along that plane.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

from .symbols import OperatorSpec, kernel_projector_of, make_curl, make_div, symbol

ZERO_MODE_POLICIES = ("as-given", "identity", "zero")


class ConjugateSymmetryError(ValueError):
    """A multiplier is not even in frequency, so it would not map real fields to real fields."""


@dataclass(frozen=True)
class SpectralGrid:
    counts: tuple
    lengths: tuple
    eps: float = 1.0

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        lengths = tuple(float(x) for x in self.lengths)
        if len(counts) != len(lengths) or not counts:
            raise ValueError(f"counts {counts} and lengths {lengths} must have equal nonzero length")
        if any(c < 2 for c in counts):
            raise ValueError(f"need at least 2 samples per axis, got {counts}")
        if any(not x > 0 for x in lengths):
            raise ValueError(f"box lengths must be positive, got {lengths}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "eps", float(self.eps))

    @property
    def d(self) -> int:
        return len(self.counts)

    @property
    def spacing(self) -> tuple:
        return tuple(x / c for x, c in zip(self.lengths, self.counts))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def with_eps(self, eps: float) -> "SpectralGrid":
        return SpectralGrid(self.counts, self.lengths, eps)

    def coordinates(self) -> list:
        """Sample positions ``j * h`` along each axis."""
        return [np.arange(c) * h for c, h in zip(self.counts, self.spacing)]

    def wavenumbers(self) -> list:
        return [np.fft.fftfreq(c, 1.0 / c).astype(int) for c in self.counts]

    def frequencies(self, rescaled: bool = False) -> np.ndarray:
        """Angular frequencies ``2 pi k / L`` on the full grid, shape ``counts + (d,)``.

        With ``rescaled`` the last component is divided by ``eps``.
        """
        return _frequencies(self, rescaled)


@lru_cache(maxsize=16)
def _frequencies(grid: SpectralGrid, rescaled: bool) -> np.ndarray:
    axes = []
    for k, n, length in zip(grid.wavenumbers(), grid.counts, grid.lengths):
        xi = 2 * np.pi * k / length
        if n % 2 == 0:
            xi[n // 2] = 0.0
        axes.append(xi)
    if rescaled:
        axes[-1] = axes[-1] / grid.eps
    out = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class VectorField:
    """``n``-channel real samples, shape ``grid.counts + (n,)``."""

    grid: SpectralGrid
    samples: np.ndarray

    def __post_init__(self):
        a = np.array(self.samples, dtype=np.float64)
        if a.ndim == self.grid.d:
            a = a[..., None]
        if a.shape[:-1] != self.grid.counts:
            raise ValueError(f"samples shape {a.shape} does not match grid {self.grid.counts}")
        if not np.all(np.isfinite(a)):
            raise ValueError("field contains non-finite samples")
        a.setflags(write=False)
        object.__setattr__(self, "samples", a)

    @property
    def channels(self) -> int:
        return self.samples.shape[-1]

    def norm(self) -> float:
        return float(np.sqrt(self.grid.cell_volume * np.sum(self.samples**2)))

    def inner(self, other: "VectorField") -> float:
        return float(self.grid.cell_volume * np.sum(self.samples * other.samples))

    def replace(self, samples) -> "VectorField":
        return VectorField(self.grid, samples)

    def __add__(self, other):
        return self.replace(self.samples + other.samples)

    def __sub__(self, other):
        return self.replace(self.samples - other.samples)

    def __neg__(self):
        return self.replace(-self.samples)


def zeros(grid: SpectralGrid, channels: int) -> VectorField:
    return VectorField(grid, np.zeros(grid.counts + (channels,)))


def stack(*fields: VectorField) -> VectorField:
    """Concatenate channels, e.g. ``stack(m, h)`` for the pair ``u = (m, h)``."""
    return VectorField(fields[0].grid, np.concatenate([f.samples for f in fields], axis=-1))


def unstack(u: VectorField, *sizes: int) -> list:
    cuts = np.cumsum(sizes)[:-1]
    return [VectorField(u.grid, s) for s in np.split(u.samples, cuts, axis=-1)]


# -- transforms ----------------------------------------------------------------


def _spatial_axes(grid: SpectralGrid) -> tuple:
    return tuple(range(grid.d))


def dft_forward(f: VectorField) -> np.ndarray:
    return scipy.fft.fftn(f.samples, axes=_spatial_axes(f.grid), norm="ortho")


def dft_inverse(coeffs: np.ndarray, grid: SpectralGrid) -> VectorField:
    out = scipy.fft.ifftn(coeffs, axes=_spatial_axes(grid), norm="ortho")
    return VectorField(grid, out.real)


def spectral_norm(coeffs: np.ndarray, grid: SpectralGrid) -> float:
    """L2 norm of a field given by its unitary DFT coefficients."""
    return float(np.sqrt(grid.cell_volume * np.sum(np.abs(coeffs) ** 2)))


def zero_frequency(grid: SpectralGrid) -> np.ndarray:
    """Lattice points whose (Nyquist-mapped) frequency vector vanishes."""
    return np.all(grid.frequencies() == 0, axis=-1)


def negate_index(a: np.ndarray, d: int) -> np.ndarray:
    """Reindex the leading ``d`` axes by ``k -> -k mod N``."""
    for ax in range(d):
        a = np.roll(np.flip(a, axis=ax), 1, axis=ax)
    return a


def multiplier_on_grid(grid: SpectralGrid, M, rescaled: bool = True) -> np.ndarray:
    if callable(M):
        return np.asarray(M(grid.frequencies(rescaled)), dtype=float)
    return np.asarray(M, dtype=float)


def apply_multiplier(f: VectorField, M, zero_mode_policy: str = "as-given", rescaled: bool = True) -> VectorField:
    """Multiply the DFT of ``f`` by the matrix field ``M(xi)`` and transform back.

    ``M`` is either a callable mapping frequencies ``(..., d)`` to matrices
    ``(..., p, n)`` or such a matrix array already evaluated on the grid.
    """
    if zero_mode_policy not in ZERO_MODE_POLICIES:
        raise ValueError(f"zero_mode_policy must be one of {ZERO_MODE_POLICIES}")
    grid = f.grid
    mats = multiplier_on_grid(grid, M, rescaled)
    if mats.shape[: grid.d] != grid.counts or mats.shape[-1] != f.channels:
        raise ValueError(f"multiplier shape {mats.shape} incompatible with field of {f.channels} channels")
    mirror = negate_index(mats, grid.d)
    if not np.allclose(mats, mirror, rtol=0, atol=1e-12 * max(1.0, np.abs(mats).max())):
        raise ConjugateSymmetryError("multiplier is not even under xi -> -xi; output would be complex")
    if zero_mode_policy != "as-given":
        mats = mats.copy()
        z = zero_frequency(grid)
        p, n = mats.shape[-2:]
        mats[z] = np.eye(p, n) if zero_mode_policy == "identity" else 0.0
    coeffs = np.matmul(mats, dft_forward(f)[..., None])[..., 0]
    return dft_inverse(coeffs, grid)


# -- A_eps-free projection --------------------------------------------------


@lru_cache(maxsize=32)
def projector_field(op: OperatorSpec, grid: SpectralGrid, use_eps: bool = True, zero_mode_policy: str = "identity") -> np.ndarray:
    """Kernel projectors of the (rescaled) symbol at every lattice frequency."""
    if op.d != grid.d:
        raise ValueError(f"operator dimension {op.d} differs from grid dimension {grid.d}")
    p = kernel_projector_of(symbol(op, grid.frequencies(use_eps)))
    z = zero_frequency(grid)
    if zero_mode_policy == "zero":
        p[z] = 0.0
    elif zero_mode_policy == "identity":
        p[z] = np.eye(op.n)
    p.setflags(write=False)
    return p


def _check_channels(u: VectorField, op: OperatorSpec):
    if u.channels != op.n:
        raise ValueError(f"field has {u.channels} channels, operator {op.name} acts on {op.n}")


def project_afree(u: VectorField, op: OperatorSpec, use_eps: bool = True, zero_mode_policy: str = "identity") -> VectorField:
    """Fourier projection of ``u`` onto fields annihilated by the operator."""
    _check_channels(u, op)
    p = projector_field(op, u.grid, use_eps, zero_mode_policy)
    coeffs = np.matmul(p, dft_forward(u)[..., None])[..., 0]
    return dft_inverse(coeffs, u.grid)


def _applied_symbol(u: VectorField, op: OperatorSpec, use_eps: bool):
    _check_channels(u, op)
    xi = u.grid.frequencies(use_eps)
    return xi, np.matmul(symbol(op, xi), dft_forward(u)[..., None])[..., 0]


def defect_norm(u: VectorField, op: OperatorSpec, use_eps: bool = True) -> float:
    """Discrete W^{-1,2} norm of ``A_eps u`` with weight ``1 / (1 + |xi|^2)``."""
    _, au = _applied_symbol(u, op, use_eps)
    xi2 = np.sum(u.grid.frequencies() ** 2, axis=-1)
    return float(np.sqrt(u.grid.cell_volume * np.sum(np.abs(au) ** 2 / (1 + xi2)[..., None])))


def row_residuals(u: VectorField, op: OperatorSpec, use_eps: bool = True) -> np.ndarray:
    """Per-row L2 norms of ``|xi|^{-1} A(xi) u_hat``, zero frequency excluded.

    This is the scale-free constraint residual: it vanishes exactly on
    operator-free fields and is bounded by ``||u||`` times the symbol norm.
    """
    xi, au = _applied_symbol(u, op, use_eps)
    xi2 = np.sum(xi**2, axis=-1)
    w = np.where(xi2 > 0, 1.0 / np.where(xi2 > 0, xi2, 1.0), 0.0)
    return np.sqrt(u.grid.cell_volume * np.sum(np.abs(au) ** 2 * w[..., None], axis=tuple(range(u.grid.d))))


def constraint_residual(u: VectorField, op: OperatorSpec, use_eps: bool = True) -> float:
    return float(np.sqrt(np.sum(row_residuals(u, op, use_eps) ** 2)))


def calibrate_defect_constant(fields, op: OperatorSpec) -> float:
    """Largest observed ``||u - P u|| / defect_norm(u)`` over ``fields``."""
    ratios = []
    for u in fields:
        den = defect_norm(u, op)
        if den > 0:
            ratios.append((u - project_afree(u, op)).norm() / den)
    return max(ratios) if ratios else 0.0


def helmholtz_decompose(f: VectorField):
    """Split ``f`` into a curl_eps-free part and a div_eps-free part.

    The mean goes to the curl-free part, so the two pieces sum to ``f`` at
    every lattice frequency and are L2-orthogonal.
    """
    if f.channels != 3 or f.grid.d != 3:
        raise ValueError("Helmholtz decomposition needs a 3-channel field on a 3D grid")
    curl_free = project_afree(f, make_curl(), zero_mode_policy="identity")
    return curl_free, f - curl_free


def div_free_part(f: VectorField) -> VectorField:
    return project_afree(f, make_div(), zero_mode_policy="zero")


def split_zero_plane(u: VectorField):
    """Split into the part without and the part with ``k_d = 0`` content.

    The ``k_d = 0`` part is the average along the last axis.
    """
    u2 = np.broadcast_to(u.samples.mean(axis=u.grid.d - 1, keepdims=True), u.samples.shape)
    return u.replace(u.samples - u2), u.replace(u2)
