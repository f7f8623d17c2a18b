"""Micromagnetic free energy on a padded periodic box.

Coordinates are already rescaled: the film is ``omega x (0, 1)`` and the
thickness parameter only enters through ``grad_eps = (d1, d2, d3 / eps)``.
Exchange derivatives are finite differences restricted to the film; the
induced field is solved spectrally on the whole box.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from .spectral import SpectralGrid, VectorField, constraint_residual, dft_forward, dft_inverse, stack
from .symbols import make_maxwell

SATURATION_TOL = 1e-8
MAXWELL_TOL = 1e-8


# -- material ------------------------------------------------------------------


@dataclass(frozen=True)
class AnisotropyModel:
    """Crystalline anisotropy density.

    uniaxial: ``K (1 - (m.e)^2 / ms^2)``; cubic (coordinate axes):
    ``K (m1^2 m2^2 + m2^2 m3^2 + m3^2 m1^2) / ms^4``; zero: nothing.
    """

    kind: str = "zero"
    axis: tuple = (1.0, 0.0, 0.0)
    strength: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "uniaxial", "cubic"):
            raise ValueError(f"unknown anisotropy kind {self.kind!r}")
        if self.strength < 0:
            raise ValueError("anisotropy strength must be nonnegative")
        axis = np.asarray(self.axis, dtype=float)
        if axis.shape != (3,) or not np.linalg.norm(axis) > 0:
            raise ValueError(f"anisotropy axis must be a nonzero 3-vector, got {self.axis}")
        object.__setattr__(self, "axis", tuple(float(v) for v in axis / np.linalg.norm(axis)))

    @property
    def easy_axis(self):
        """First easy direction, or ``None`` when there is no preference."""
        if self.kind == "uniaxial" and self.strength > 0:
            return self.axis
        if self.kind == "cubic" and self.strength > 0:
            return (1.0, 0.0, 0.0)
        return None

    def density(self, m: np.ndarray, ms: float) -> np.ndarray:
        if self.kind == "zero" or self.strength == 0:
            return np.zeros(m.shape[:-1])
        if self.kind == "uniaxial":
            return self.strength * (1 - (m @ np.asarray(self.axis)) ** 2 / ms**2)
        sq = m**2
        return self.strength * (sq[..., 0] * sq[..., 1] + sq[..., 1] * sq[..., 2] + sq[..., 2] * sq[..., 0]) / ms**4

    def gradient(self, m: np.ndarray, ms: float) -> np.ndarray:
        if self.kind == "zero" or self.strength == 0:
            return np.zeros_like(m)
        if self.kind == "uniaxial":
            e = np.asarray(self.axis)
            return -2 * self.strength * (m @ e)[..., None] * e / ms**2
        sq = m**2
        others = sq.sum(axis=-1, keepdims=True) - sq
        return 2 * self.strength * m * others / ms**4


@dataclass(frozen=True)
class MaterialParams:
    alpha: float
    m_s: float = 1.0
    anisotropy: AnisotropyModel = field(default_factory=AnisotropyModel)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"exchange constant alpha must be positive, got {self.alpha}")
        if not self.m_s > 0:
            raise ValueError(f"saturation m_s must be positive, got {self.m_s}")


# -- geometry ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SampleGeometry:
    """Film ``omega x (0, 1)`` embedded in a periodic box.

    ``omega_mask`` marks the cross section on the in-plane grid, ``film_z``
    the cells of the box that lie inside ``0 <= x3 < 1`` after centering.
    """

    grid: SpectralGrid
    omega_mask: np.ndarray
    film_z: np.ndarray
    omega_spec: tuple = ("full",)

    def __post_init__(self):
        if self.grid.d != 3:
            raise ValueError("sample geometry needs a 3D grid")
        om = np.array(self.omega_mask, dtype=bool)
        fz = np.array(self.film_z, dtype=bool)
        if om.shape != self.grid.counts[:2] or fz.shape != self.grid.counts[2:]:
            raise ValueError("mask shapes do not match the grid")
        if not om.any() or not fz.any():
            raise ValueError("cross section and film must be nonempty")
        om.setflags(write=False)
        fz.setflags(write=False)
        object.__setattr__(self, "omega_mask", om)
        object.__setattr__(self, "film_z", fz)

    @cached_property
    def film(self) -> np.ndarray:
        return self.omega_mask[:, :, None] & self.film_z[None, None, :]

    @property
    def eps(self) -> float:
        return self.grid.eps

    @property
    def omega_area(self) -> float:
        h1, h2, _ = self.grid.spacing
        return float(self.omega_mask.sum() * h1 * h2)

    @property
    def film_volume(self) -> float:
        return float(self.film.sum() * self.grid.cell_volume)

    @property
    def film_cells(self) -> int:
        return int(self.film_z.sum())

    def with_eps(self, eps: float) -> "SampleGeometry":
        return SampleGeometry(self.grid.with_eps(eps), self.omega_mask, self.film_z, self.omega_spec)

    @cached_property
    def planar_grid(self) -> SpectralGrid:
        return SpectralGrid(self.grid.counts[:2], self.grid.lengths[:2])

    @cached_property
    def stencil(self) -> "EdgeStencil":
        return EdgeStencil(self.film, self.grid.spacing)

    @cached_property
    def planar_stencil(self) -> "EdgeStencil":
        return EdgeStencil(self.omega_mask, self.grid.spacing[:2])

    def extend(self, m2d: np.ndarray) -> np.ndarray:
        """Constant extension in x3 of a planar array, zero outside the film."""
        return np.where(self.film[..., None], m2d[:, :, None, :], 0.0)


def omega_mask_for(spec: tuple, counts, lengths) -> np.ndarray:
    """Cross-section mask from ``("full",)``, ``("disk", r)`` or ``("rect", a, b)``,
    centered in the box and evaluated at cell centers."""
    (n1, n2), (l1, l2) = counts, lengths
    x = (np.arange(n1) + 0.5) * l1 / n1 - l1 / 2
    y = (np.arange(n2) + 0.5) * l2 / n2 - l2 / 2
    X, Y = np.meshgrid(x, y, indexing="ij")
    kind = spec[0]
    if kind == "full":
        return np.ones((n1, n2), dtype=bool)
    if kind == "disk":
        return X**2 + Y**2 < spec[1] ** 2
    if kind == "rect":
        return (np.abs(X) < spec[1] / 2) & (np.abs(Y) < spec[2] / 2)
    raise ValueError(f"unknown cross-section shape {kind!r}")


def make_geometry(counts, omega=("full",), padding=(2.0, 4.0), lengths=None, eps: float = 1.0) -> SampleGeometry:
    """Place the film in a box.

    Without explicit ``lengths`` the box is ``padding[0]`` times the cross
    section in-plane (unit square for ``full``, which ignores padding) and
    ``padding[1]`` times the unit film thickness vertically.
    """
    counts = tuple(int(c) for c in counts)
    kind = omega[0]
    if lengths is None:
        p_in, p_v = padding
        if kind == "full":
            inplane = (1.0, 1.0)
        elif kind == "disk":
            inplane = (p_in * 2 * omega[1],) * 2
        elif kind == "rect":
            inplane = (p_in * omega[1], p_in * omega[2])
        else:
            raise ValueError(f"unknown cross-section shape {kind!r}")
        lengths = inplane + (float(p_v),)
    grid = SpectralGrid(counts, lengths, eps)
    n3, l3 = counts[2], grid.lengths[2]
    cells = n3 / l3
    n_film = int(round(cells))
    if abs(cells - n_film) > 1e-9 or n_film < 1:
        raise ValueError(f"film thickness 1 is not a whole number of cells (N3/L3 = {cells})")
    if n_film > n3:
        raise ValueError("box is thinner than the film")
    start = (n3 - n_film) // 2
    film_z = np.zeros(n3, dtype=bool)
    film_z[start : start + n_film] = True
    return SampleGeometry(grid, omega_mask_for(omega, counts[:2], grid.lengths[:2]), film_z, tuple(omega))


# -- finite differences on a masked region ---------------------------------------


class EdgeStencil:
    """Nearest-neighbour differences between cells that both lie in ``mask``.

    Each cell's squared derivative along an axis is the mean of its forward
    and backward one-sided squares, or the single one-sided square at a face.
    Summed over cells this is a weighted sum over edges, so the energy is a
    quadratic form with an exactly computable gradient.  Linear profiles give
    the exact derivative in every cell.
    """

    def __init__(self, mask: np.ndarray, spacing):
        self.mask = np.asarray(mask, dtype=bool)
        self.spacing = tuple(spacing)
        self.weights = []
        for ax in range(self.mask.ndim):
            fwd = self.mask & np.roll(self.mask, -1, ax)
            bwd = self.mask & np.roll(self.mask, 1, ax)
            c = np.where(fwd & bwd, 0.5, 1.0) * self.mask
            self.weights.append((c + np.roll(c, -1, ax)) * fwd)

    def axis_sq(self, m: np.ndarray, ax: int) -> float:
        """``sum_cells |d_ax m|^2`` (no volume factor)."""
        dm = np.roll(m, -1, ax) - m
        return float(np.sum(self.weights[ax][..., None] * dm**2)) / self.spacing[ax] ** 2

    def axis_grad(self, m: np.ndarray, ax: int) -> np.ndarray:
        """Gradient of ``axis_sq`` with respect to the samples."""
        w = self.weights[ax][..., None]
        fwd = w * (m - np.roll(m, -1, ax))
        bwd = np.roll(w, 1, ax) * (m - np.roll(m, 1, ax))
        return 2 * (fwd + bwd) / self.spacing[ax] ** 2


def _axis_scales(eps: float) -> tuple:
    return (1.0, 1.0, 1.0 / eps**2)


def derivative_norms(m: VectorField, geometry: SampleGeometry) -> np.ndarray:
    """``||d_k m||_{L2(film)}`` for k = 1, 2, 3 (unscaled derivatives)."""
    st = geometry.stencil
    return np.sqrt([geometry.grid.cell_volume * st.axis_sq(m.samples, ax) for ax in range(3)])


def grad_eps_norm(m: VectorField, geometry: SampleGeometry, eps: float | None = None) -> float:
    eps = geometry.eps if eps is None else eps
    d = derivative_norms(m, geometry)
    return float(np.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2 / eps**2))


def exchange_energy(m: VectorField, geometry: SampleGeometry, alpha: float, eps: float | None = None) -> float:
    """``alpha * int_film |grad_eps m|^2``."""
    return alpha * grad_eps_norm(m, geometry, eps) ** 2


def exchange_gradient(m: np.ndarray, stencil: EdgeStencil, alpha: float, scales) -> np.ndarray:
    return alpha * sum(s * stencil.axis_grad(m, ax) for ax, s in enumerate(scales))


# -- magnetostatics -------------------------------------------------------------


def solve_magnetostatics(m: VectorField, eps: float | None = None, film: np.ndarray | None = None) -> VectorField:
    """Induced field with ``div_eps(m + h) = 0`` and ``curl_eps h = 0``.

    Per frequency ``h_hat = -(xi_eps . m_hat) xi_eps / |xi_eps|^2`` and the
    zero mode of ``h`` vanishes.  With ``film`` the magnetization must vanish
    outside it.
    """
    grid = m.grid if eps is None else m.grid.with_eps(eps)
    if m.channels != 3 or grid.d != 3:
        raise ValueError("magnetostatics needs a 3-channel field on a 3D grid")
    if film is not None and np.any(m.samples[~film] != 0):
        raise ValueError("magnetization must vanish outside the film")
    xi = grid.frequencies(rescaled=True)
    xi2 = np.sum(xi**2, axis=-1)
    inv = np.where(xi2 > 0, 1.0 / np.where(xi2 > 0, xi2, 1.0), 0.0)
    mh = dft_forward(VectorField(grid, m.samples))
    proj = np.sum(xi * mh, axis=-1) * inv
    return dft_inverse(-proj[..., None] * xi, grid)


def stray_energy(h: VectorField) -> float:
    """``1/2 int_box |h|^2``."""
    return 0.5 * h.norm() ** 2


def anisotropy_energy(m: VectorField, params: MaterialParams, mask: np.ndarray) -> float:
    dens = params.anisotropy.density(m.samples[mask], params.m_s)
    return float(m.grid.cell_volume * dens.sum())


# -- energies --------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyReport:
    exchange: float
    anisotropy: float
    stray: float
    total: float
    eps: float
    feasible: bool = True
    reason: str = ""

    @classmethod
    def from_terms(cls, exchange, anisotropy, stray, eps):
        return cls(exchange, anisotropy, stray, exchange + anisotropy + stray, eps)

    @classmethod
    def infeasible(cls, exchange, anisotropy, stray, eps, reason):
        return cls(exchange, anisotropy, stray, math.inf, eps, False, reason)

    def to_dict(self) -> dict:
        d = asdict(self)
        if not self.feasible:
            d["total"] = None
        return d


def saturation_error(m: VectorField, mask: np.ndarray, m_s: float) -> float:
    norms = np.linalg.norm(m.samples[mask], axis=-1)
    return float(np.max(np.abs(norms - m_s))) if norms.size else 0.0


def energy_terms(m: VectorField, h: VectorField, params: MaterialParams, geometry: SampleGeometry, eps: float | None = None) -> EnergyReport:
    """Unchecked ``F_eps`` evaluation on a given pair."""
    eps = geometry.eps if eps is None else eps
    return EnergyReport.from_terms(
        exchange_energy(m, geometry, params.alpha, eps),
        anisotropy_energy(m, params, geometry.film),
        stray_energy(h),
        eps,
    )


def evaluate_energy(m: VectorField, params: MaterialParams, geometry: SampleGeometry, eps: float | None = None):
    """Solve for ``h`` and evaluate the energy; returns ``(report, h)``."""
    eps = geometry.eps if eps is None else eps
    h = solve_magnetostatics(m, eps)
    return energy_terms(m, h, params, geometry, eps), h


def total_energy(m: VectorField, h: VectorField, params: MaterialParams, geometry: SampleGeometry, eps: float | None = None) -> EnergyReport:
    """``F_eps[m, h]`` with the constraint set enforced.

    Violations give an infeasible report with ``total = inf``.
    """
    eps = geometry.eps if eps is None else eps
    rep = energy_terms(m, h, params, geometry, eps)
    sat = saturation_error(m, geometry.film, params.m_s)
    if sat > SATURATION_TOL:
        return EnergyReport.infeasible(rep.exchange, rep.anisotropy, rep.stray, eps, f"|m| deviates from m_s by {sat:.3g}")
    if np.any(m.samples[~geometry.film] != 0):
        return EnergyReport.infeasible(rep.exchange, rep.anisotropy, rep.stray, eps, "m is nonzero outside the film")
    u = stack(VectorField(m.grid.with_eps(eps), m.samples), VectorField(m.grid.with_eps(eps), h.samples))
    res = constraint_residual(u, make_maxwell())
    if res > MAXWELL_TOL * max(1.0, u.norm()):
        return EnergyReport.infeasible(rep.exchange, rep.anisotropy, rep.stray, eps, f"Maxwell residual {res:.3g}")
    return rep


def effective_field(m: VectorField, h: VectorField, params: MaterialParams, geometry: SampleGeometry, eps: float | None = None) -> VectorField:
    """``-dF/dm`` per unit volume on the film, zero elsewhere.

    ``h`` must be the induced field of ``m``; the stray contribution is then
    ``h`` itself because the magnetostatic map is an orthogonal projection.
    """
    eps = geometry.eps if eps is None else eps
    film = geometry.film[..., None]
    g = exchange_gradient(m.samples, geometry.stencil, params.alpha, _axis_scales(eps))
    g = g + params.anisotropy.gradient(m.samples, params.m_s)
    return m.replace(np.where(film, h.samples - g, 0.0))


# -- limit functionals ----------------------------------------------------------


def limit_energy_terms(m2d: VectorField, params: MaterialParams, geometry: SampleGeometry) -> EnergyReport:
    """Unchecked reduced 2D energy; ``stray`` holds ``1/2 int_omega m3^2``."""
    mask = geometry.omega_mask
    st = geometry.planar_stencil
    dA = m2d.grid.cell_volume
    ex = params.alpha * dA * (st.axis_sq(m2d.samples, 0) + st.axis_sq(m2d.samples, 1))
    an = anisotropy_energy(m2d, params, mask)
    stray = 0.5 * dA * float(np.sum(m2d.samples[mask][:, 2] ** 2))
    return EnergyReport.from_terms(ex, an, stray, 0.0)


def limit_energy(m2d: VectorField, params: MaterialParams, geometry: SampleGeometry) -> float:
    """``int_omega alpha |grad m|^2 + phi(m) + m3^2 / 2``."""
    sat = saturation_error(m2d, geometry.omega_mask, params.m_s)
    if sat > SATURATION_TOL:
        raise ValueError(f"|m| deviates from m_s by {sat:.3g} on the cross section")
    return limit_energy_terms(m2d, params, geometry).total


def limit_effective_field(m2d: VectorField, params: MaterialParams, geometry: SampleGeometry) -> VectorField:
    s = m2d.samples
    g = exchange_gradient(s, geometry.planar_stencil, params.alpha, (1.0, 1.0))
    g = g + params.anisotropy.gradient(s, params.m_s)
    g[..., 2] += s[..., 2]
    return m2d.replace(np.where(geometry.omega_mask[..., None], -g, 0.0))


def limit_energy_3d(m: VectorField, h: VectorField, params: MaterialParams, geometry: SampleGeometry) -> EnergyReport:
    """Unchecked three-dimensional limit energy: in-plane exchange only."""
    d = derivative_norms(m, geometry)
    ex = params.alpha * (d[0] ** 2 + d[1] ** 2)
    return EnergyReport.from_terms(ex, anisotropy_energy(m, params, geometry.film), stray_energy(h), 0.0)


def uniform_state(geometry: SampleGeometry, direction, m_s: float) -> VectorField:
    e = np.asarray(direction, dtype=float)
    e = m_s * e / np.linalg.norm(e)
    return VectorField(geometry.grid, np.where(geometry.film[..., None], e, 0.0))


def planar_uniform_state(geometry: SampleGeometry, direction, m_s: float) -> VectorField:
    e = np.asarray(direction, dtype=float)
    e = m_s * e / np.linalg.norm(e)
    return VectorField(geometry.planar_grid, np.where(geometry.omega_mask[..., None], e, 0.0))

