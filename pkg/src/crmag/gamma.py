"""Thin-film limit experiments: thickness sweeps, limit-space diagnostics and
the explicit recovery-sequence construction."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .energy import (
    MaterialParams,
    SampleGeometry,
    derivative_norms,
    grad_eps_norm,
    limit_energy_3d,
    saturation_error,
    total_energy,
)
from .minimize import MinimizeConfig, MinimizeResult, minimize_feps, minimize_limit2d
from .spectral import (
    VectorField,
    constraint_residual,
    project_afree,
    row_residuals,
    split_zero_plane,
    stack,
    unstack,
)
from .symbols import limit_operator, make_curl, make_maxwell

log = logging.getLogger(__name__)

MAXWELL = make_maxwell()
MAXWELL_LIMIT = limit_operator(MAXWELL)
RECOVERY_TOL = 1e-10
BOUND_FACTOR = 2.0
SWEEP_HEADER = ("eps", "energy_eps", "energy_limit", "d3m_norm", "h_gap", "maxwell_residual", "saturation_error")


def tail_nonincreasing(values, n: int = 3, rtol: float = 1e-9, atol: float = 1e-12) -> bool:
    """True if the last ``n`` values never increase beyond roundoff."""
    tail = list(values)[-n:]
    return all(b <= a * (1 + rtol) + atol for a, b in zip(tail, tail[1:]))


def _vertical_extension(m: VectorField) -> np.ndarray:
    e3 = np.zeros(3)
    e3[2] = 1.0
    return m.samples[..., 2:3] * e3


def reduced_field_gap(m: VectorField, h: VectorField, geometry: SampleGeometry) -> float:
    """``||h + (0, 0, m3) chi_film||`` over the box (``m`` vanishes off the film)."""
    film = geometry.film[..., None]
    return h.replace(h.samples + np.where(film, _vertical_extension(m), 0.0)).norm()


def _pair(m: VectorField, h: VectorField, grid) -> VectorField:
    return stack(VectorField(grid, m.samples), VectorField(grid, h.samples))


# -- limit-space membership ------------------------------------------------------


@dataclass(frozen=True)
class MembershipReport:
    row_residuals: tuple
    d3m_norm: float
    saturation_error: float
    reduced_gap: float
    tol: float

    @property
    def u0_residual(self) -> float:
        return float(np.sqrt(np.sum(np.square(self.row_residuals))))

    @property
    def in_limit_space(self) -> bool:
        return max(self.row_residuals) < self.tol and self.d3m_norm < self.tol and self.saturation_error < self.tol


def check_limit_membership(m: VectorField, h: VectorField, geometry: SampleGeometry, m_s: float, tol: float = 1e-10) -> MembershipReport:
    """Residuals of the four limit-operator rows, of ``d3 m`` on the film and of
    saturation, plus the distance of ``h`` from ``-(0, 0, m3)``.

    The last number is reported only: on a periodic box it need not vanish
    even when the other residuals do.
    """
    rows = row_residuals(_pair(m, h, geometry.grid), MAXWELL_LIMIT, use_eps=False)
    return MembershipReport(
        row_residuals=tuple(float(r) for r in rows),
        d3m_norm=float(derivative_norms(m, geometry)[2]),
        saturation_error=saturation_error(m, geometry.film, m_s),
        reduced_gap=reduced_field_gap(m, h, geometry),
        tol=tol,
    )


# -- recovery sequence -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RecoveryInput:
    """A limit pair ``(m0, h0)``: ``m0`` saturated and constant in x3 on the
    film, zero elsewhere, and ``(m0, h0)`` free for the limit operator."""

    m0: VectorField
    h0: VectorField
    geometry: SampleGeometry
    m_s: float = 1.0

    def __post_init__(self):
        g = self.geometry
        film = g.film
        if self.m0.samples.shape != g.grid.counts + (3,) or self.h0.samples.shape != g.grid.counts + (3,):
            raise ValueError("m0 and h0 must be 3-channel fields on the geometry grid")
        if np.any(self.m0.samples[~film] != 0):
            raise ValueError("m0 must vanish outside the film")
        sat = saturation_error(self.m0, film, self.m_s)
        if sat > RECOVERY_TOL:
            raise ValueError(f"|m0| deviates from m_s by {sat:.3g}")
        edges = g.stencil.weights[2] > 0
        jumps = np.roll(self.m0.samples, -1, axis=2) - self.m0.samples
        if np.any(jumps[edges] != 0):
            raise ValueError("m0 varies along x3 inside the film")
        res = row_residuals(_pair(self.m0, self.h0, g.grid), MAXWELL_LIMIT, use_eps=False)
        if np.max(res) > RECOVERY_TOL:
            raise ValueError(f"(m0, h0) violates the limit constraint (row residuals {res})")

    @classmethod
    def reduced(cls, m2d: VectorField, geometry: SampleGeometry, m_s: float = 1.0) -> "RecoveryInput":
        """Pair built from a planar field: ``m0`` its extension, ``h0 = -(0, 0, m3)`` on the film."""
        m0 = VectorField(geometry.grid, geometry.extend(m2d.samples))
        h0 = m0.replace(-_vertical_extension(m0))
        return cls(m0, h0, geometry, m_s)


def slab_pair(geometry: SampleGeometry, m_s: float = 1.0) -> RecoveryInput:
    """Out-of-plane magnetization ``m_s e3`` on the film with ``h = -(0, 0, m3)``."""
    plane = np.zeros(geometry.grid.counts[:2] + (3,))
    plane[..., 2] = np.where(geometry.omega_mask, m_s, 0.0)
    return RecoveryInput.reduced(VectorField(geometry.planar_grid, plane), geometry, m_s)


def recovery_sequence(inp: RecoveryInput, eps: float):
    """Feasible pair at thickness ``eps`` approximating the limit pair.

    The ``k3 = 0`` plane is removed, the remainder projected onto
    Maxwell_eps-free fields giving ``(m_hat, h_hat)``; then ``m_eps = m0`` and
    ``h_eps = P_curl_eps(h_hat - m0 + m_hat)``.
    """
    grid = inp.geometry.grid.with_eps(eps)
    m0 = VectorField(grid, inp.m0.samples)
    u1, _ = split_zero_plane(_pair(inp.m0, inp.h0, grid))
    m_hat, h_hat = unstack(project_afree(u1, MAXWELL), 3, 3)
    h_eps = project_afree(h_hat - m0 + m_hat, make_curl(), zero_mode_policy="identity")
    return m0, h_eps


@dataclass(frozen=True)
class RecoveryRecord:
    eps: float
    div_residual: float
    curl_residual: float
    saturation_error: float
    energy_eps: float
    energy_limit: float
    energy_gap: float
    h_distance: float

    @property
    def feasible(self) -> bool:
        return max(self.div_residual, self.curl_residual, self.saturation_error) < RECOVERY_TOL


RECOVERY_HEADER = tuple(RecoveryRecord.__dataclass_fields__)


def recovery_study(inp: RecoveryInput, params: MaterialParams, eps_schedule):
    """Run the construction along a schedule; returns ``(records, summary)``."""
    _check_schedule(eps_schedule)
    limit = limit_energy_3d(inp.m0, inp.h0, params, inp.geometry).total
    records = []
    for eps in eps_schedule:
        geo = inp.geometry.with_eps(eps)
        m, h = recovery_sequence(inp, eps)
        rows = row_residuals(stack(m, h), MAXWELL)
        rep = total_energy(m, h, params, geo, eps)
        records.append(
            RecoveryRecord(
                eps=float(eps),
                div_residual=float(rows[0]),
                curl_residual=float(np.sqrt(np.sum(rows[1:] ** 2))),
                saturation_error=saturation_error(m, geo.film, inp.m_s),
                energy_eps=rep.total,
                energy_limit=limit,
                energy_gap=abs(rep.total - limit),
                h_distance=(h - VectorField(h.grid, inp.h0.samples)).norm(),
            )
        )
    assertions = [
        _assertion("constraints_hold", all(r.feasible for r in records), [max(r.div_residual, r.curl_residual) for r in records]),
    ]
    if len(records) >= 2:
        assertions.append(_assertion("energy_gap_tail_decreasing", tail_nonincreasing([r.energy_gap for r in records]), [r.energy_gap for r in records]))
    return records, _summary(assertions, len(records))


# -- sweeps ----------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRecord:
    eps: float
    energy_eps: float
    energy_limit: float
    d3m_norm: float
    h_gap: float
    maxwell_residual: float
    saturation_error: float


@dataclass(frozen=True)
class SweepResult:
    records: tuple
    summary: dict
    results: tuple = field(repr=False)
    limit: MinimizeResult | None = field(default=None, repr=False)
    failure: dict | None = None

    @property
    def partial(self) -> bool:
        return self.failure is not None


def _check_schedule(eps_schedule):
    eps = np.asarray(eps_schedule, dtype=float)
    if eps.size == 0 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ValueError(f"eps schedule must be nonempty, positive and strictly decreasing: {list(eps_schedule)}")


def _assertion(name, passed, values) -> dict:
    return {"name": name, "passed": bool(passed), "values": [float(v) for v in values]}


def _summary(assertions, n_points) -> dict:
    if n_points < 2:
        return {"passed": True, "note": "insufficient points", "assertions": []}
    return {"passed": all(a["passed"] for a in assertions), "assertions": assertions}


def sweep_record(res: MinimizeResult, geometry: SampleGeometry, energy_limit: float, m_s: float) -> SweepRecord:
    geo = geometry.with_eps(res.eps)
    m, h = res.m_final, res.h_final
    return SweepRecord(
        eps=float(res.eps),
        energy_eps=res.report.total,
        energy_limit=energy_limit,
        d3m_norm=float(derivative_norms(m, geo)[2]),
        h_gap=reduced_field_gap(m, h, geo),
        maxwell_residual=constraint_residual(_pair(m, h, geo.grid), MAXWELL),
        saturation_error=saturation_error(m, geo.film, m_s),
    )


def eps_sweep(geometry: SampleGeometry, params: MaterialParams, eps_schedule, cfg: MinimizeConfig = MinimizeConfig()) -> SweepResult:
    """Minimize along a decreasing thickness schedule with warm starts and
    compare with the minimum of the reduced 2D energy."""
    _check_schedule(eps_schedule)
    limit = minimize_limit2d(geometry, params, cfg)
    energy_limit = limit.report.total
    results, records = [], []
    failure = None
    m_prev = None
    for eps in eps_schedule:
        try:
            res = minimize_feps(geometry, params, float(eps), cfg, m_init=m_prev)
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            failure = {"eps": float(eps), "status": "error", "message": str(exc)}
            break
        results.append(res)
        records.append(sweep_record(res, geometry, energy_limit, params.m_s))
        log.info("eps=%g status=%s iterations=%d energy=%.10g", eps, res.status, res.iterations, res.report.total)
        if not res.converged:
            failure = {"eps": float(eps), "status": res.status, "message": f"minimizer stopped after {res.iterations} iterations"}
            break
        m_prev = res.m_final
    if failure is None and not limit.converged:
        failure = {"eps": 0.0, "status": limit.status, "message": "reduced 2D minimization did not converge"}

    gaps = [abs(r.energy_eps - r.energy_limit) for r in records]
    assertions = [
        _assertion("d3m_norm_tail_decreasing", tail_nonincreasing([r.d3m_norm for r in records]), [r.d3m_norm for r in records]),
        _assertion("h_gap_tail_decreasing", tail_nonincreasing([r.h_gap for r in records]), [r.h_gap for r in records]),
        _assertion("energy_gap_tail_decreasing", tail_nonincreasing(gaps), gaps),
    ]
    if len(results) >= 2:
        first = check_limit_membership(results[0].m_final, results[0].h_final, geometry.with_eps(results[0].eps), params.m_s)
        last = check_limit_membership(results[-1].m_final, results[-1].h_final, geometry.with_eps(results[-1].eps), params.m_s)
        assertions.append(
            _assertion("u0_residual_shrinks", last.u0_residual <= 10 * first.u0_residual, [first.u0_residual, last.u0_residual])
        )
    summary = _summary(assertions, len(records))
    if failure is not None:
        summary["passed"] = False
        summary["failure"] = failure
    return SweepResult(tuple(records), summary, tuple(results), limit, failure)


@dataclass(frozen=True)
class CompactnessReport:
    eps: tuple
    grad_eps_norms: tuple
    d3m_norms: tuple
    cauchy_gaps: tuple
    bounded: bool
    d3_bound_holds: bool
    d3_decaying: bool
    cauchy: bool

    def to_dict(self) -> dict:
        return asdict(self)


def compactness_diagnostics(results, geometry: SampleGeometry) -> CompactnessReport:
    """Boundedness of ``||grad_eps m||``, decay of ``||d3 m||`` and L2 Cauchy
    behaviour of the magnetizations on the film along a sequence of results."""
    if len(results) < 2:
        raise ValueError("need at least two results")
    eps = [float(r.eps) for r in results]
    grads = [grad_eps_norm(r.m_final, geometry, e) for r, e in zip(results, eps)]
    d3 = [float(derivative_norms(r.m_final, geometry)[2]) for r in results]
    film = geometry.film[..., None]
    dV = geometry.grid.cell_volume
    gaps = [
        float(np.sqrt(dV * np.sum(np.where(film, a.m_final.samples - b.m_final.samples, 0.0) ** 2)))
        for a, b in zip(results, results[1:])
    ]
    bounded = max(grads) <= BOUND_FACTOR * max(grads[0], 1e-12)
    return CompactnessReport(
        eps=tuple(eps),
        grad_eps_norms=tuple(grads),
        d3m_norms=tuple(d3),
        cauchy_gaps=tuple(gaps),
        bounded=bool(bounded),
        d3_bound_holds=all(d <= e * g * (1 + 1e-12) + 1e-15 for d, e, g in zip(d3, eps, grads)),
        d3_decaying=tail_nonincreasing(d3),
        cauchy=tail_nonincreasing(gaps) if len(gaps) >= 2 else True,
    )


# -- output ----------------------------------------------------------------------


def write_records_csv(records, header, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in records:
            w.writerow([repr(float(getattr(r, k))) for k in header])


def write_sweep_csv(records, path) -> None:
    write_records_csv(records, SWEEP_HEADER, path)


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
