"""Projected gradient descent on fields with ``|m| = m_s``.

Every trial point is renormalized cell by cell, and a backtracking line search
on the true energy accepts it.  The induced field is re-solved at every energy
evaluation, so the Maxwell constraints hold exactly at each iterate.  The first
trial step of each iteration is a Barzilai-Borwein estimate.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .energy import (
    EnergyReport,
    MaterialParams,
    SampleGeometry,
    effective_field,
    evaluate_energy,
    limit_effective_field,
    limit_energy_terms,
)
from .fieldio import read_field
from .spectral import VectorField

log = logging.getLogger(__name__)

AUDIT_HEADER = ("iter", "step", "exchange", "anisotropy", "stray", "total", "grad_norm")
MIN_STEP = 1e-14
MAX_STEP = 1e6
ENERGY_ROUNDOFF = 1e-12


class ZeroVectorError(ValueError):
    pass


class MonotonicityError(RuntimeError):
    pass


@dataclass(frozen=True)
class MinimizeConfig:
    max_iters: int = 2000
    grad_tol: float = 1e-6
    step0: float = 1e-2
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    seed: int = 0
    init: str = "uniform"
    init_axis: tuple | None = None
    init_file: str | None = None

    def __post_init__(self):
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0 < self.armijo_shrink < 1:
            raise ValueError("armijo_shrink must lie in (0, 1)")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not self.step0 > 0:
            raise ValueError("step0 must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.init not in ("uniform", "random", "random-inplane", "file"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.init == "file" and not self.init_file:
            raise ValueError("init = 'file' needs init_file")


@dataclass(frozen=True)
class MinimizeResult:
    m_final: VectorField
    h_final: VectorField
    report: EnergyReport
    iterations: int
    converged: bool
    residual: float
    status: str = "converged"
    history: tuple = field(default=(), repr=False)

    @property
    def eps(self) -> float:
        return self.report.eps


def renormalize_sphere(m: VectorField, m_s: float, mask: np.ndarray | None = None) -> VectorField:
    """Scale every cell of ``mask`` to length ``m_s`` and zero the rest."""
    s = m.samples
    if mask is None:
        mask = np.ones(s.shape[:-1], dtype=bool)
    norms = np.linalg.norm(s, axis=-1)
    bad = mask & (norms == 0)
    if bad.any():
        cell = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ZeroVectorError(f"zero magnetization at cell {cell}; reinitialize")
    safe = np.where(mask, norms, 1.0)
    return m.replace(np.where(mask[..., None], m_s * s / safe[..., None], 0.0))


def tangential(H: np.ndarray, m: np.ndarray, m_s: float) -> np.ndarray:
    return H - np.sum(H * m, axis=-1, keepdims=True) * m / m_s**2


def write_audit_csv(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AUDIT_HEADER)
        for row in history:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def _descend(m, mask, m_s, evaluate: Callable, field_of: Callable, cfg: MinimizeConfig):
    dV = m.grid.cell_volume
    rep, aux = evaluate(m)
    Ht = tangential(field_of(m, aux).samples, m.samples, m_s)
    gnorm = float(np.sqrt(dV * np.sum(Ht**2)))
    history = [(0, 0.0, rep.exchange, rep.anisotropy, rep.stray, rep.total, gnorm)]
    step = cfg.step0
    prev = None
    status = "max_iters"
    it = 0
    while True:
        if gnorm < cfg.grad_tol:
            status = "converged"
            break
        if it >= cfg.max_iters:
            break
        it += 1
        if prev is not None:
            s = m.samples - prev[0]
            y = prev[1] - Ht
            sy = float(np.sum(s * y))
            if sy > 0:
                step = float(np.clip(np.sum(s * s) / sy, MIN_STEP, MAX_STEP))
        tau = step
        while True:
            trial = renormalize_sphere(m.replace(m.samples + tau * Ht), m_s, mask)
            rep_t, aux_t = evaluate(trial)
            if rep_t.total <= rep.total - cfg.armijo_c * tau * gnorm**2:
                break
            tau *= cfg.armijo_shrink
            if tau < MIN_STEP:
                log.warning("line search failed at iteration %d (energy %.12g)", it, rep.total)
                return m, aux, rep, it - 1, "line_search_failed", gnorm, history
        if rep_t.total > rep.total + ENERGY_ROUNDOFF * max(1.0, abs(rep.total)):
            raise MonotonicityError(f"energy increased from {rep.total!r} to {rep_t.total!r}")
        prev = (m.samples, Ht)
        m, rep, aux = trial, rep_t, aux_t
        Ht = tangential(field_of(m, aux).samples, m.samples, m_s)
        gnorm = float(np.sqrt(dV * np.sum(Ht**2)))
        step = tau
        history.append((it, tau, rep.exchange, rep.anisotropy, rep.stray, rep.total, gnorm))
    return m, aux, rep, it, status, gnorm, history


def _initial_state(grid, mask, params: MaterialParams, cfg: MinimizeConfig) -> VectorField:
    shape = grid.counts + (3,)
    if cfg.init == "uniform":
        axis = cfg.init_axis or params.anisotropy.easy_axis or (1.0, 0.0, 0.0)
        s = np.broadcast_to(np.asarray(axis, dtype=float), shape)
    elif cfg.init == "file":
        f = read_field(cfg.init_file)
        s = f.samples
        if s.shape != shape:
            raise ValueError(f"initial field {cfg.init_file} has shape {s.shape}, expected {shape}")
    else:
        rng = np.random.default_rng(cfg.seed)
        s = rng.standard_normal(shape)
        if cfg.init == "random-inplane":
            s[..., 2] = 0.0
    return renormalize_sphere(VectorField(grid, np.where(mask[..., None], s, 0.0)), params.m_s, mask)


def min_resolved_eps(geometry: SampleGeometry) -> float:
    return 4.0 / geometry.grid.counts[2]


def minimize_feps(geometry: SampleGeometry, params: MaterialParams, eps: float, cfg: MinimizeConfig = MinimizeConfig(), m_init: VectorField | None = None) -> MinimizeResult:
    """Minimize the thin-film energy at thickness ``eps`` over saturated ``m``.

    ``m_init`` (for warm starts) overrides ``cfg.init``.
    """
    if eps < min_resolved_eps(geometry):
        warnings.warn(
            f"eps={eps} is below 4/N3={min_resolved_eps(geometry):.4g}; "
            "vertical derivatives are under-resolved",
            stacklevel=2,
        )
    geo = geometry.with_eps(eps)
    mask = geo.film
    if m_init is None:
        m = _initial_state(geo.grid, mask, params, cfg)
    else:
        m = renormalize_sphere(VectorField(geo.grid, m_init.samples), params.m_s, mask)

    def evaluate(m):
        return evaluate_energy(m, params, geo, eps)

    def field_of(m, h):
        return effective_field(m, h, params, geo, eps)

    m, h, rep, its, status, gnorm, hist = _descend(m, mask, params.m_s, evaluate, field_of, cfg)
    return MinimizeResult(m, h, rep, its, status == "converged", gnorm, status, tuple(hist))


def limit_induced_field(m2d: VectorField) -> VectorField:
    h = np.zeros_like(m2d.samples)
    h[..., 2] = -m2d.samples[..., 2]
    return m2d.replace(h)


def minimize_limit2d(geometry: SampleGeometry, params: MaterialParams, cfg: MinimizeConfig = MinimizeConfig(), m_init: VectorField | None = None) -> MinimizeResult:
    """Minimize the reduced two-dimensional energy on the cross section.

    The reported induced field is ``-(0, 0, m3)``.
    """
    mask = geometry.omega_mask
    grid = geometry.planar_grid
    if m_init is None:
        m = _initial_state(grid, mask, params, cfg)
    else:
        m = renormalize_sphere(VectorField(grid, m_init.samples), params.m_s, mask)

    def evaluate(m):
        return limit_energy_terms(m, params, geometry), None

    def field_of(m, _):
        return limit_effective_field(m, params, geometry)

    m, _, rep, its, status, gnorm, hist = _descend(m, mask, params.m_s, evaluate, field_of, cfg)
    return MinimizeResult(m, limit_induced_field(m), rep, its, status == "converged", gnorm, status, tuple(hist))
