import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crmag.energy import (
    AnisotropyModel,
    EdgeStencil,
    MaterialParams,
    SampleGeometry,
    anisotropy_energy,
    derivative_norms,
    effective_field,
    energy_terms,
    evaluate_energy,
    exchange_energy,
    limit_effective_field,
    limit_energy,
    limit_energy_terms,
    make_geometry,
    planar_uniform_state,
    solve_magnetostatics,
    stray_energy,
    total_energy,
    uniform_state,
)
from crmag.spectral import SpectralGrid, VectorField, constraint_residual, dft_forward, stack
from crmag.symbols import make_maxwell

vectors = arrays(np.float64, 3, elements=st.floats(-2, 2)).filter(lambda v: np.linalg.norm(v) > 1e-2)


def saturated_random(geometry, m_s, seed):
    rng = np.random.default_rng(seed)
    s = rng.standard_normal(geometry.grid.counts + (3,))
    s = m_s * s / np.linalg.norm(s, axis=-1, keepdims=True)
    return VectorField(geometry.grid, np.where(geometry.film[..., None], s, 0.0))


# -- material ------------------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [dict(kind="hexagonal"), dict(kind="uniaxial", strength=-1.0), dict(kind="uniaxial", axis=(0, 0, 0))],
)
def test_anisotropy_validation(kwargs):
    with pytest.raises(ValueError):
        AnisotropyModel(**kwargs)


@pytest.mark.parametrize("alpha, m_s", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
def test_params_validation(alpha, m_s):
    with pytest.raises(ValueError):
        MaterialParams(alpha, m_s)


@pytest.mark.parametrize("kind", ["zero", "uniaxial", "cubic"])
@given(m=vectors)
def test_anisotropy_even_nonnegative(kind, m):
    model = AnisotropyModel(kind, (1.0, 1.0, 0.0), 2.0)
    m_s = np.linalg.norm(m)
    a, b = model.density(m, m_s), model.density(-m, m_s)
    assert a >= -1e-12
    assert a == pytest.approx(b)


@pytest.mark.parametrize("kind", ["uniaxial", "cubic"])
def test_anisotropy_gradient_fd(kind):
    model = AnisotropyModel(kind, (0.3, 0.4, 1.0), 1.5)
    rng = np.random.default_rng(0)
    m = rng.standard_normal(3)
    t = 1e-6
    for e in np.eye(3):
        fd = (model.density(m + t * e, 1.3) - model.density(m - t * e, 1.3)) / (2 * t)
        assert model.gradient(m, 1.3) @ e == pytest.approx(fd, rel=1e-6, abs=1e-9)


# -- geometry ------------------------------------------------------------------------


def test_geometry_layout():
    g = make_geometry((16, 16, 16), ("rect", 1.0, 1.0))
    assert g.grid.lengths == (2.0, 2.0, 4.0)
    assert g.film_cells == 4
    assert g.omega_area == pytest.approx(1.0)
    assert g.film_volume == pytest.approx(1.0)
    z = np.flatnonzero(g.film_z)
    assert list(z) == [6, 7, 8, 9]


def test_geometry_disk_area():
    g = make_geometry((64, 64, 8), ("disk", 0.5), padding=(2, 1))
    assert g.omega_area == pytest.approx(np.pi / 4, rel=0.02)


def test_geometry_rejects_fractional_film():
    with pytest.raises(ValueError, match="whole number"):
        make_geometry((8, 8, 10), padding=(2, 4))


def test_geometry_rejects_empty_mask():
    g = SpectralGrid((4, 4, 4), (1, 1, 1))
    with pytest.raises(ValueError):
        SampleGeometry(g, np.zeros((4, 4), bool), np.ones(4, bool))


# -- exchange ------------------------------------------------------------------------


def test_stencil_linear_profile_exact():
    mask = np.zeros(12, bool)
    mask[3:9] = True
    st_ = EdgeStencil(mask, (0.5,))
    m = (2.0 * np.arange(12) * 0.5)[:, None]
    # slope 2 on six cells of width 0.5: sum of squared derivatives = 6 * 4
    assert st_.axis_sq(m, 0) == pytest.approx(24.0)


def test_exchange_constant_zero():
    g = make_geometry((8, 8, 16), ("rect", 1, 1))
    assert exchange_energy(uniform_state(g, (1, 1, 0), 1.0), g, 1.0) == 0.0


@pytest.mark.parametrize("n, tol", [(32, 0.04), (64, 0.01)])
def test_exchange_in_plane_rotation(n, tol):
    alpha, m_s = 0.7, 1.3
    g = make_geometry((n, 4, 4), padding=(1, 1), eps=0.3)
    x = (np.arange(n) + 0.5) / n
    plane = m_s * np.stack([np.cos(2 * np.pi * x), np.sin(2 * np.pi * x), 0 * x], -1)
    m = VectorField(g.grid, np.broadcast_to(plane[:, None, None, :], (n, 4, 4, 3)))
    expected = alpha * m_s**2 * (2 * np.pi) ** 2 * g.film_volume
    assert exchange_energy(m, g, alpha) == pytest.approx(expected, rel=tol)


@pytest.mark.parametrize("eps", [1.0, 0.5, 0.1])
def test_exchange_vertical_slope(eps):
    g = make_geometry((4, 4, 16), padding=(1, 4), eps=eps)
    z = (np.arange(16) + 0.5) * g.grid.spacing[2]
    s = 0.3
    col = np.stack([s * z, 0 * z, 0 * z], -1)
    m = VectorField(g.grid, np.where(g.film[..., None], col[None, None], 0.0))
    expected = s**2 / eps**2 * g.film_volume
    assert exchange_energy(m, g, 1.0) == pytest.approx(expected, rel=1e-12)


# -- magnetostatics ------------------------------------------------------------------


@pytest.mark.parametrize("direction", [(0, 0, 1), (1, 0, 0), (0.2, -0.5, 1.0)])
def test_uniform_full_box_no_field(direction):
    g = SpectralGrid((8, 8, 8), (1, 1, 1))
    m = VectorField(g, np.broadcast_to(direction, (8, 8, 8, 3)))
    assert solve_magnetostatics(m).norm() < 1e-14


def test_slab_analytic():
    m_s = 1.7
    g = SpectralGrid((4, 4, 64), (1, 1, 1))
    z = np.arange(64) / 64
    m3 = np.where((z >= 0.25) & (z < 0.75), m_s, 0.0)
    m = VectorField(g, np.zeros((4, 4, 64, 3)) + np.stack([0 * z, 0 * z, m3], -1))
    h = solve_magnetostatics(m)
    expected = np.zeros_like(m.samples)
    expected[..., 2] = m_s / 2 - m3
    assert (h - VectorField(g, expected)).norm() < 1e-10
    assert stray_energy(h) == pytest.approx(0.5 * (m_s / 2) ** 2 * g.volume, rel=1e-12)


@pytest.mark.parametrize("eps", [1.0, 0.25, 1 / 16])
def test_magnetostatics_constraints(eps):
    geo = make_geometry((8, 8, 16), ("disk", 0.5), eps=eps)
    m = saturated_random(geo, 1.0, 3)
    h = solve_magnetostatics(m)
    assert constraint_residual(stack(m, h), make_maxwell()) < 1e-10
    np.testing.assert_allclose(h.samples.mean(axis=(0, 1, 2)), 0, atol=1e-14)


def test_magnetostatics_support_check():
    geo = make_geometry((8, 8, 16), ("rect", 1, 1))
    m = VectorField(geo.grid, np.ones((8, 8, 16, 3)))
    with pytest.raises(ValueError, match="outside"):
        solve_magnetostatics(m, film=geo.film)


def test_stray_plancherel():
    geo = make_geometry((8, 8, 16), ("rect", 1, 1), eps=0.5)
    h = solve_magnetostatics(saturated_random(geo, 1.0, 5))
    spectral = 0.5 * h.grid.cell_volume * np.sum(np.abs(dft_forward(h)) ** 2)
    assert stray_energy(h) == pytest.approx(spectral, rel=1e-10)


# -- energies ------------------------------------------------------------------------


def test_anisotropy_examples():
    geo = make_geometry((8, 8, 16), ("rect", 1, 1))
    p = MaterialParams(1.0, 1.0, AnisotropyModel("uniaxial", (1, 0, 0), 2.5))
    assert anisotropy_energy(uniform_state(geo, (1, 0, 0), 1.0), p, geo.film) == 0.0
    assert anisotropy_energy(uniform_state(geo, (0, 0, 1), 1.0), p, geo.film) == pytest.approx(2.5 * geo.film_volume)


def test_report_sum_and_signs():
    geo = make_geometry((8, 8, 16), ("disk", 0.5), eps=0.5)
    p = MaterialParams(0.2, 1.0, AnisotropyModel("cubic", strength=0.3))
    rep, h = evaluate_energy(saturated_random(geo, 1.0, 2), p, geo)
    assert rep.total == rep.exchange + rep.anisotropy + rep.stray
    assert min(rep.exchange, rep.anisotropy, rep.stray) >= 0
    assert rep.feasible


def test_reflection_symmetry():
    geo = make_geometry((8, 8, 16), ("rect", 1, 1), eps=0.5)
    p = MaterialParams(0.2, 1.0, AnisotropyModel("uniaxial", (0, 1, 1), 0.7))
    m = saturated_random(geo, 1.0, 4)
    a, h = evaluate_energy(m, p, geo)
    b = total_energy(-m, -h, p, geo)
    assert a.total == pytest.approx(b.total, rel=1e-14)


def test_infeasible_reports():
    geo = make_geometry((8, 8, 16), ("rect", 1, 1))
    p = MaterialParams(0.2)
    m = uniform_state(geo, (1, 0, 0), 1.0)
    h = solve_magnetostatics(m)
    assert total_energy(m, h, p, geo).feasible
    rep = total_energy(m.replace(1.1 * m.samples), h, p, geo)
    assert not rep.feasible and math.isinf(rep.total)
    assert rep.to_dict()["total"] is None
    rep = total_energy(m, h.replace(np.zeros_like(h.samples)), p, geo)
    assert not rep.feasible and "Maxwell" in rep.reason
    leak = np.where(geo.film[..., None], 0.0, 1e-3)
    rep = total_energy(m.replace(m.samples + leak), h, p, geo)
    assert not rep.feasible and "outside" in rep.reason


def test_effective_field_constant_full_box():
    geo = make_geometry((8, 8, 8), padding=(1, 1))
    p = MaterialParams(1.0)
    m = uniform_state(geo, (0.3, 0.4, 0.5), 2.0)
    _, h = evaluate_energy(m, p, geo)
    assert effective_field(m, h, p, geo).norm() < 1e-12


@pytest.mark.parametrize("eps", [1.0, 0.25])
def test_effective_field_single_mode(eps):
    n, alpha = 16, 0.4
    geo = make_geometry((n, n, n), padding=(1, 1), eps=eps)
    k = (1, 2, 3)
    x = np.meshgrid(*geo.grid.coordinates(), indexing="ij")
    phase = sum(2 * np.pi * kj * xj for kj, xj in zip(k, x))
    m = VectorField(geo.grid, np.cos(phase)[..., None] * np.array([1.0, 0.0, 0.0]))
    ex = effective_field(m, m.replace(np.zeros_like(m.samples)), MaterialParams(alpha), geo)
    h = 1.0 / n
    # discrete |xi_eps|^2 of the nearest-neighbour Laplacian
    lam = sum((2 * np.sin(np.pi * kj * h) / h) ** 2 * s for kj, s in zip(k, (1, 1, 1 / eps**2)))
    np.testing.assert_allclose(ex.samples, -2 * alpha * lam * m.samples, atol=1e-9 * lam)


def _fd_check(geo, p, seed):
    m = saturated_random(geo, p.m_s, seed)
    rng = np.random.default_rng(seed + 100)
    dm = m.replace(np.where(geo.film[..., None], rng.standard_normal(m.samples.shape), 0.0))
    rep, h = evaluate_energy(m, p, geo)
    H = effective_field(m, h, p, geo)
    t = 1e-5
    fp = evaluate_energy(m + dm.replace(t * dm.samples), p, geo)[0].total
    fm = evaluate_energy(m - dm.replace(t * dm.samples), p, geo)[0].total
    fd = (fp - fm) / (2 * t)
    analytic = -H.inner(dm)
    return abs(fd - analytic) / abs(analytic)


@pytest.mark.parametrize("seed", range(4))
def test_effective_field_fd(seed):
    geo = make_geometry((8, 8, 16), ("disk", 0.5), eps=0.5)
    p = MaterialParams(0.3, 1.2, AnisotropyModel("uniaxial", (1, 0, 1), 0.8))
    assert _fd_check(geo, p, seed) < 1e-5


# -- limit functionals ---------------------------------------------------------------


@pytest.mark.parametrize("kind, axis, K", [("zero", (1, 0, 0), 0.0), ("uniaxial", (1, 0, 0), 0.8), ("cubic", (1, 0, 0), 0.5)])
def test_limit_out_of_plane_constant(kind, axis, K):
    geo = make_geometry((16, 16, 16), ("rect", 1, 1))
    m_s = 1.4
    p = MaterialParams(0.5, m_s, AnisotropyModel(kind, axis, K))
    m = planar_uniform_state(geo, (0, 0, 1), m_s)
    phi = p.anisotropy.density(np.array([0, 0, m_s]), m_s)
    assert limit_energy(m, p, geo) == pytest.approx(geo.omega_area * (phi + 0.5 * m_s**2), abs=1e-10)


def test_limit_easy_axis_zero():
    geo = make_geometry((16, 16, 16), ("disk", 0.5))
    p = MaterialParams(0.5, 1.0, AnisotropyModel("uniaxial", (1, 0, 0), 1.0))
    assert limit_energy(planar_uniform_state(geo, (1, 0, 0), 1.0), p, geo) == 0.0


def test_limit_rotation_second_order():
    alpha, K = 0.3, 0.6
    errors = []
    for n in (16, 32, 64):
        geo = make_geometry((n, n, 4), padding=(1, 4))
        x = (np.arange(n) + 0.5) / n
        plane = np.stack([np.cos(2 * np.pi * x), np.sin(2 * np.pi * x), 0 * x], -1)
        m = VectorField(geo.planar_grid, np.broadcast_to(plane[:, None], (n, n, 3)))
        p = MaterialParams(alpha, 1.0, AnisotropyModel("uniaxial", (1, 0, 0), K))
        exact = alpha * (2 * np.pi) ** 2 + K / 2
        errors.append(abs(limit_energy(m, p, geo) - exact))
    rates = np.log2(np.array(errors[:-1]) / errors[1:])
    assert np.all(rates > 1.8)


def test_limit_saturation_error():
    geo = make_geometry((8, 8, 8), ("rect", 1, 1))
    m = planar_uniform_state(geo, (1, 0, 0), 0.5)
    with pytest.raises(ValueError, match="deviates"):
        limit_energy(m, MaterialParams(1.0, 1.0), geo)


def test_limit_gradient_fd():
    geo = make_geometry((16, 16, 8), ("disk", 0.4), padding=(2, 2))
    p = MaterialParams(0.2, 1.0, AnisotropyModel("cubic", strength=0.4))
    rng = np.random.default_rng(0)
    mask = geo.omega_mask[..., None]
    s = rng.standard_normal((16, 16, 3))
    m = VectorField(geo.planar_grid, np.where(mask, s / np.linalg.norm(s, axis=-1, keepdims=True), 0))
    dm = m.replace(np.where(mask, rng.standard_normal(s.shape), 0))
    t = 1e-5
    fd = (limit_energy_terms(m + dm.replace(t * dm.samples), p, geo).total - limit_energy_terms(m - dm.replace(t * dm.samples), p, geo).total) / (2 * t)
    analytic = -limit_effective_field(m, p, geo).inner(dm)
    assert fd == pytest.approx(analytic, rel=1e-6)


def test_derivative_norms_x3_constant():
    geo = make_geometry((8, 8, 16), ("rect", 1, 1))
    m = VectorField(geo.grid, geo.extend(np.random.default_rng(0).standard_normal((8, 8, 3))))
    assert derivative_norms(m, geo)[2] == 0.0
