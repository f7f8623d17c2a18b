"""Finite-dimensional linear algebra for first-order constant-coefficient operators.

An operator ``A = sum_k A^(k) d/dx_k`` is stored as a stack of ``d`` real
``l x n`` matrices.  Everything here works pointwise in frequency space: the
symbol ``A(xi) = sum_k A^(k) xi_k``, the orthogonal projector onto its kernel,
and its Moore-Penrose pseudo-inverse.  All evaluation routines accept a batch of
frequencies with shape ``(..., d)`` and return arrays with the batch axes in
front.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

#: relative singular value cutoff used for ranks, kernels and pseudo-inverses
RANK_RTOL = 1e-10


class OperatorError(ValueError):
    """Invalid operator coefficients or a violated structural hypothesis."""


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """First-order operator given by its coefficient matrices.

    ``coeffs`` has shape ``(d, l, n)``: ``coeffs[k]`` multiplies the
    derivative along axis ``k``.
    """

    coeffs: np.ndarray
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 3:
            raise OperatorError(f"coefficients must have shape (d, l, n), got {c.shape}")
        if c.shape[0] == 0:
            raise OperatorError("operator needs at least one coefficient matrix")
        if not np.any(c):
            raise OperatorError("all coefficient matrices are zero")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def d(self) -> int:
        return self.coeffs.shape[0]

    @property
    def l(self) -> int:  # noqa: E743
        return self.coeffs.shape[1]

    @property
    def n(self) -> int:
        return self.coeffs.shape[2]

    def __eq__(self, other):
        if not isinstance(other, OperatorSpec):
            return NotImplemented
        return self.coeffs.shape == other.coeffs.shape and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash((self.coeffs.shape, self.coeffs.tobytes()))

    def __repr__(self):
        return f"OperatorSpec({self.name!r}, d={self.d}, n={self.n}, l={self.l})"


def build_operator(coeffs: Sequence, name: str = "custom") -> OperatorSpec:
    """Validate a list of ``l x n`` matrices and wrap them as an operator."""
    mats = [np.atleast_2d(np.asarray(c, dtype=float)) for c in coeffs]
    if not mats:
        raise OperatorError("empty coefficient list")
    shape = mats[0].shape
    for k, m in enumerate(mats):
        if m.ndim != 2:
            raise OperatorError(f"coefficient {k} is not a matrix (ndim={m.ndim})")
        if m.shape != shape:
            raise OperatorError(
                f"coefficient {k} has shape {m.shape}, expected {shape} like coefficient 0"
            )
    return OperatorSpec(np.stack(mats), name=name)


def make_div() -> OperatorSpec:
    """Divergence of a 3-vector field in three dimensions."""
    return build_operator(np.eye(3)[:, None, :], name="div")


def _curl_coeffs() -> np.ndarray:
    # curl h = (d2 h3 - d3 h2, d3 h1 - d1 h3, d1 h2 - d2 h1)
    c = np.zeros((3, 3, 3))
    c[0, 1, 2], c[0, 2, 1] = -1.0, 1.0
    c[1, 0, 2], c[1, 2, 0] = 1.0, -1.0
    c[2, 0, 1], c[2, 1, 0] = -1.0, 1.0
    return c


def make_curl() -> OperatorSpec:
    return OperatorSpec(_curl_coeffs(), name="curl")


def make_maxwell() -> OperatorSpec:
    """Magnetostatic operator acting on stacked ``u = (m, h)``.

    Row 0 is ``div(m + h)``, rows 1-3 are ``curl h``.
    """
    c = np.zeros((3, 4, 6))
    for k in range(3):
        c[k, 0, k] = 1.0
        c[k, 0, 3 + k] = 1.0
    c[:, 1:, 3:] = _curl_coeffs()
    return OperatorSpec(c, name="maxwell")


BUILTIN_OPERATORS = {"div": make_div, "curl": make_curl, "maxwell": make_maxwell}


def get_operator(name: str) -> OperatorSpec:
    try:
        return BUILTIN_OPERATORS[name]()
    except KeyError:
        raise OperatorError(
            f"unknown operator {name!r}; choose from {sorted(BUILTIN_OPERATORS)}"
        ) from None


# -- text serialization ------------------------------------------------------


def format_operator(op: OperatorSpec) -> str:
    """Plain-text form: header ``d n l`` then ``d`` blocks of ``l`` rows."""
    lines = [f"{op.d} {op.n} {op.l}"]
    for k in range(op.d):
        lines.append("")
        for row in op.coeffs[k]:
            lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_operator(text: str, name: str = "custom") -> OperatorSpec:
    tokens = text.split()
    if len(tokens) < 3:
        raise OperatorError("operator text needs a 'd n l' header")
    try:
        d, n, l = (int(t) for t in tokens[:3])
        values = [float(t) for t in tokens[3:]]
    except ValueError as exc:
        raise OperatorError(f"malformed operator text: {exc}") from None
    if len(values) != d * l * n:
        raise OperatorError(
            f"header announces {d}x{l}x{n}={d * l * n} entries, found {len(values)}"
        )
    return OperatorSpec(np.reshape(values, (d, l, n)), name=name)


def load_operator(path) -> OperatorSpec:
    path = Path(path)
    return parse_operator(path.read_text(), name=path.stem)


def save_operator(op: OperatorSpec, path) -> None:
    Path(path).write_text(format_operator(op))


# -- symbols -------------------------------------------------------------------


def _check_xi(op: OperatorSpec, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1:] != (op.d,):
        raise OperatorError(f"frequency has trailing dimension {xi.shape[-1:]}, operator has d={op.d}")
    return xi


def rescale_frequency(xi, eps: float) -> np.ndarray:
    """``(xi_1, ..., xi_{d-1}, xi_d / eps)``."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    xi = np.array(xi, dtype=float)
    xi[..., -1] /= eps
    return xi


def symbol(op: OperatorSpec, xi) -> np.ndarray:
    """Symbol matrices ``sum_k A^(k) xi_k`` with shape ``(..., l, n)``."""
    xi = _check_xi(op, xi)
    return np.tensordot(xi, op.coeffs, axes=([-1], [0]))


def rescaled_symbol(op: OperatorSpec, xi, eps: float) -> np.ndarray:
    """Symbol of the thickness-rescaled operator ``A(grad_eps)``."""
    return symbol(op, rescale_frequency(_check_xi(op, xi), eps))


def _svd(mats: np.ndarray):
    u, s, vt = np.linalg.svd(mats, full_matrices=True)
    smax = s[..., :1] if s.shape[-1] else s
    keep = s > RANK_RTOL * smax
    return u, s, vt, keep


def matrix_rank(mats: np.ndarray) -> np.ndarray:
    """Batched rank with the relative cutoff ``RANK_RTOL * sigma_max``."""
    _, _, _, keep = _svd(mats)
    return keep.sum(axis=-1)


def kernel_projector_of(mats: np.ndarray) -> np.ndarray:
    """Orthogonal projectors onto the kernels of a batch of ``l x n`` matrices."""
    mats = np.asarray(mats, dtype=float)
    n = mats.shape[-1]
    _, _, vt, keep = _svd(mats)
    k = keep.shape[-1]
    # rows of vt spanning the row space
    v = vt[..., :k, :] * keep[..., :, None]
    return np.eye(n) - np.einsum("...ri,...rj->...ij", v, v)


def pinv_of(mats: np.ndarray) -> np.ndarray:
    """Batched Moore-Penrose pseudo-inverse, shape ``(..., n, l)``."""
    mats = np.asarray(mats, dtype=float)
    u, s, vt, keep = _svd(mats)
    k = keep.shape[-1]
    inv_s = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return np.einsum("...ri,...r,...jr->...ij", vt[..., :k, :], inv_s, u[..., :, :k])


def kernel_projector(op: OperatorSpec, xi) -> np.ndarray:
    """Projector onto ``ker A(xi)``; the identity at ``xi = 0``."""
    return kernel_projector_of(symbol(op, xi))


def q_matrix(op: OperatorSpec, xi) -> np.ndarray:
    """Pseudo-inverse ``Q(xi)`` of the symbol, so that ``Q A = I - P``."""
    xi = _check_xi(op, xi)
    if np.any(np.all(xi == 0, axis=-1)):
        raise OperatorError("q_matrix is undefined at zero frequency")
    return pinv_of(symbol(op, xi))


# -- constant rank -------------------------------------------------------------


def sphere_points(d: int, count: int, seed: int | None = None) -> np.ndarray:
    """Deterministic quasi-uniform unit vectors plus the ``2d`` signed axes.

    ``d == 3`` uses a Fibonacci lattice, ``d == 2`` equispaced angles.  A seed
    applies a random orthogonal rotation to the lattice (axes are kept as-is).
    """
    if d == 1:
        pts = np.ones((count, 1))
    elif d == 2:
        t = 2 * np.pi * (np.arange(count) + 0.5) / count
        pts = np.stack([np.cos(t), np.sin(t)], axis=-1)
    elif d == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        r = np.sqrt(1 - z**2)
        phi = np.pi * (1 + 5**0.5) * i
        pts = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
    else:
        rng = np.random.default_rng(0 if seed is None else seed)
        pts = rng.standard_normal((count, d))
        pts /= np.linalg.norm(pts, axis=-1, keepdims=True)
    if seed is not None and d > 1:
        rng = np.random.default_rng(seed)
        q, r = np.linalg.qr(rng.standard_normal((d, d)))
        pts = pts @ (q * np.sign(np.diag(r))).T
    axes = np.concatenate([np.eye(d), -np.eye(d)])
    return np.concatenate([pts, axes])


@dataclass(frozen=True)
class RankReport:
    rank: int
    constant: bool
    samples: int
    axis_ranks: tuple
    offending: np.ndarray = field(repr=False)
    offending_ranks: np.ndarray = field(repr=False)


def check_constant_rank(op: OperatorSpec, sample_count: int = 10_000, seed: int | None = None) -> RankReport:
    """Evaluate the symbol rank on the unit sphere.

    The reported ``rank`` is the most frequent one; every frequency whose rank
    differs is listed in ``offending``.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    pts = sphere_points(op.d, sample_count, seed)
    ranks = matrix_rank(symbol(op, pts))
    values, counts = np.unique(ranks, return_counts=True)
    rank = int(values[np.argmax(counts)])
    bad = ranks != rank
    return RankReport(
        rank=rank,
        constant=not bad.any(),
        samples=len(pts),
        axis_ranks=tuple(int(r) for r in ranks[-2 * op.d : len(ranks) - op.d]),
        offending=pts[bad],
        offending_ranks=ranks[bad],
    )


# -- limit operators -----------------------------------------------------------


def limit_operator(op: OperatorSpec) -> OperatorSpec:
    """Row-wise limit operator for vanishing thickness along the last axis.

    Rows where the last coefficient matrix is nonzero keep only their
    derivative along the last axis; all other rows keep their in-plane part.
    Requires that the number of nonzero rows of the last matrix equals its rank.
    """
    last = op.coeffs[-1]
    nonzero = np.any(last != 0, axis=1)
    rank = int(np.linalg.matrix_rank(last)) if nonzero.any() else 0
    if nonzero.sum() != rank:
        raise OperatorError(
            f"last coefficient matrix has {int(nonzero.sum())} nonzero rows but rank {rank}"
        )
    coeffs = op.coeffs.copy()
    coeffs[:-1, nonzero, :] = 0.0
    return OperatorSpec(coeffs, name=f"{op.name}_0")


def auxiliary_symbol(op: OperatorSpec, xi) -> np.ndarray:
    """Row-wise switched symbol: ``[A^(d)]^i xi_d`` where that row is nonzero,
    else the in-plane part ``sum_{k<d} [A^(k)]^i xi_k``."""
    xi = _check_xi(op, xi)
    vertical = xi[..., -1, None, None] * op.coeffs[-1]
    inplane = np.tensordot(xi[..., :-1], op.coeffs[:-1], axes=([-1], [0]))
    use_vertical = np.any(vertical != 0, axis=-1, keepdims=True)
    return np.where(use_vertical, vertical, inplane)


def auxiliary_projector(op: OperatorSpec, xi) -> np.ndarray:
    return kernel_projector_of(auxiliary_symbol(op, xi))


def symbol_convergence_check(op: OperatorSpec, xi, eps_schedule) -> np.ndarray:
    """Spectral-norm distance between the rescaled and the limiting kernel
    projector at ``xi``, one entry per ``eps``."""
    eps_schedule = np.asarray(eps_schedule, dtype=float)
    if eps_schedule.size == 0 or np.any(eps_schedule <= 0) or np.any(np.diff(eps_schedule) >= 0):
        raise ValueError("eps schedule must be nonempty, positive and strictly decreasing")
    xi = _check_xi(op, xi)
    target = auxiliary_projector(op, xi)
    out = []
    for eps in eps_schedule:
        p = kernel_projector_of(rescaled_symbol(op, xi, eps))
        out.append(np.linalg.norm(p - target, ord=2, axis=(-2, -1)))
    return np.stack(out, axis=-1)
