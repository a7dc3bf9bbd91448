"""Divergence-form elliptic operators on grid masks, Dirichlet solves, and
measurement routines (Harnack ratios, rescaling checks, oscillation decay,
stationarity residuals).

Assembly is flux-form and exactly symmetric:

* diagonal terms d_i(a_ii d_i f) use coefficients averaged arithmetically to
  half-points, giving the standard 3-point flux stencil per axis;
* mixed terms d_j(a_ij d_i f) + d_i(a_ij d_j f) use centered cross stencils
  whose combined column weights are shared between the two symmetric rows,
  so the assembled matrix equals its transpose entry for entry.

Unknowns are the mask's interior points in row-major order. Values on the
first boundary ring enter through a rectangular coupling block, which both
builds Dirichlet right-hand sides and lets residual evaluation use a field's
own layer values. The 1/sqrt(det g) weight of the metric Laplacian is kept
separately: it drops from the homogeneous equation but is applied when
pointwise residual values are wanted.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy import sparse

from . import eigen
from .errors import ConfigurationError, ConvergenceError, InvalidInputError
from .grid import DomainMask, GridSpec, ScalarField, SymMatrixField, hessian, tri_pairs
from .phase import MetricField, induced_metric, phase


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    """Conjugate-gradient settings for the Dirichlet solves."""

    tolerance: float = 1e-10
    max_iterations: int | None = None  # None -> 20 * unknown count
    preconditioner: str = "diagonal"  # "diagonal" | "none"

    def __post_init__(self):
        if not (0.0 < self.tolerance < 1.0):
            raise ConfigurationError(f"tolerance must lie in (0, 1), got {self.tolerance!r}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if self.preconditioner not in ("diagonal", "none"):
            raise ConfigurationError(f"unknown preconditioner {self.preconditioner!r}")


@dataclasses.dataclass
class DivergenceFormOperator:
    """Assembled operator f -> d_j(A^{ij} d_i f) over a mask's interior."""

    spec: GridSpec
    mask: DomainMask
    coeff: SymMatrixField
    weight: np.ndarray
    matrix: sparse.csr_matrix
    boundary_matrix: sparse.csr_matrix
    interior_flat: np.ndarray
    ring_flat: np.ndarray
    eps_ratio: float

    @property
    def unknowns(self) -> int:
        return int(self.interior_flat.size)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Apply the operator using the field's own values on the boundary
        ring; the result lives on the interior and is zero elsewhere."""
        flat = np.asarray(values, dtype=float).reshape(-1)
        if flat.size != self.spec.point_count:
            raise InvalidInputError("value array does not match the operator's grid")
        out = np.zeros(self.spec.point_count)
        out[self.interior_flat] = self.matrix @ flat[self.interior_flat] + self.boundary_matrix @ flat[self.ring_flat]
        return out.reshape(self.spec.shape)


def _flat_strides(shape: tuple[int, ...]) -> np.ndarray:
    strides = np.ones(len(shape), dtype=np.int64)
    for i in range(len(shape) - 2, -1, -1):
        strides[i] = strides[i + 1] * shape[i + 1]
    return strides


def assemble_coefficients(
    coeff: SymMatrixField, mask: DomainMask, weight: np.ndarray | None = None
) -> DivergenceFormOperator:
    """Assemble f -> d_j(a^{ij} d_i f) for a raw symmetric coefficient field.

    The coefficients must be positive definite on interior + layer; the
    ellipticity ratio min/max eigenvalue over the interior is recorded.
    """
    spec = coeff.spec
    if mask.spec != spec:
        raise ConfigurationError("mask and coefficients live on different grids")
    n, h = spec.n, spec.h
    shape = spec.shape

    lam, _ = eigen.field_eigensystem(coeff)
    inside = mask.inside
    bad = inside & (lam[..., 0] <= 0.0)
    if bad.any():
        points = [tuple(int(i) for i in idx) for idx in np.argwhere(bad)]
        raise InvalidInputError(
            f"coefficients not positive definite at {len(points)} points (first: {points[:5]})"
        )
    interior = mask.interior
    eps_ratio = float(lam[..., 0][interior].min() / lam[..., -1][interior].max())

    strides = _flat_strides(shape)
    int_flat = np.flatnonzero(interior.ravel())
    unk = np.full(spec.point_count, -1, dtype=np.int64)
    unk[int_flat] = np.arange(int_flat.size)
    ring_flat = np.flatnonzero(mask.ring.ravel())
    bnd = np.full(spec.point_count, -1, dtype=np.int64)
    bnd[ring_flat] = np.arange(ring_flat.size)

    comp = {pair: coeff.values[..., k].ravel() for k, pair in enumerate(tri_pairs(n))}
    h2 = h * h
    rows, cols, vals = [], [], []

    def push(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    for i in range(n):
        a = comp[(i, i)]
        s = strides[i]
        a0 = a[int_flat]
        wp = (a0 + a[int_flat + s]) * (0.5 / h2)
        wm = (a0 + a[int_flat - s]) * (0.5 / h2)
        push(int_flat, int_flat + s, wp)
        push(int_flat, int_flat - s, wm)
        push(int_flat, int_flat, -(wp + wm))
    for i in range(n):
        for j in range(i + 1, n):
            a = comp[(i, j)]
            s, t = strides[i], strides[j]
            q = 0.25 / h2
            asp = a[int_flat + s]
            asm = a[int_flat - s]
            atp = a[int_flat + t]
            atm = a[int_flat - t]
            push(int_flat, int_flat + s + t, (asp + atp) * q)
            push(int_flat, int_flat - s - t, (asm + atm) * q)
            push(int_flat, int_flat + s - t, -(asp + atm) * q)
            push(int_flat, int_flat - s + t, -(asm + atp) * q)

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    into_interior = unk[cols] >= 0
    if not np.all(into_interior | (bnd[cols] >= 0)):
        raise ConfigurationError("stencil reaches outside interior + first ring (mask invariant broken)")

    n_unk = int_flat.size
    mat = sparse.coo_matrix(
        (vals[into_interior], (unk[rows[into_interior]], unk[cols[into_interior]])),
        shape=(n_unk, n_unk),
    ).tocsr()
    mat.eliminate_zeros()
    outer = ~into_interior
    bmat = sparse.coo_matrix(
        (vals[outer], (unk[rows[outer]], bnd[cols[outer]])),
        shape=(n_unk, ring_flat.size),
    ).tocsr()
    bmat.eliminate_zeros()

    w = np.ones(shape) if weight is None else np.asarray(weight, dtype=float)
    if w.shape != shape:
        raise InvalidInputError("weight shape does not match the grid")
    return DivergenceFormOperator(spec, mask, coeff, w, mat, bmat, int_flat, ring_flat, eps_ratio)


def assemble(metric: MetricField, mask: DomainMask) -> DivergenceFormOperator:
    """Operator of the metric Laplacian: coefficients sqrt(det g) g^{-1},
    weight sqrt(det g)."""
    coeff = SymMatrixField(metric.spec, metric.g_inv.values * metric.sqrt_det_g[..., None])
    return assemble_coefficients(coeff, mask, weight=metric.sqrt_det_g)


def _pcg(mat, rhs, tolerance, max_iterations, precond, history):
    """Preconditioned conjugate gradient for a symmetric positive definite
    system; records the relative residual per iteration."""
    if history is None:
        history = []
    x = np.zeros_like(rhs)
    r = rhs.copy()
    bnorm = math.sqrt(float(np.dot(rhs, rhs)))
    if bnorm == 0.0:
        history.append(0.0)
        return x
    z = precond * r if precond is not None else r.copy()
    p = z.copy()
    rz = float(np.dot(r, z))
    for _ in range(max_iterations):
        rel = math.sqrt(float(np.dot(r, r))) / bnorm
        history.append(rel)
        if rel <= tolerance:
            return x
        ap = mat @ p
        pap = float(np.dot(p, ap))
        if pap <= 0.0:
            raise ConvergenceError("conjugate gradient breakdown (matrix not positive definite)", history)
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        z = precond * r if precond is not None else r
        rz_next = float(np.dot(r, z))
        beta = rz_next / rz
        rz = rz_next
        p = z + beta * p
    rel = math.sqrt(float(np.dot(r, r))) / bnorm
    history.append(rel)
    if rel <= tolerance:
        return x
    raise ConvergenceError(
        f"conjugate gradient did not reach relative residual {tolerance} in {max_iterations} iterations",
        history,
    )


def solve_dirichlet(
    op: DivergenceFormOperator,
    boundary: ScalarField,
    config: SolverConfig | None = None,
    history: list | None = None,
) -> ScalarField:
    """Solve d_j(A^{ij} d_i f) = 0 with Dirichlet data on the boundary ring.

    Returns a field equal to ``boundary`` outside the interior with the
    computed interior values. The system is solved as the positive definite
    problem (-M) f = rhs by diagonally preconditioned conjugate gradients.
    """
    if boundary.spec != op.spec:
        raise ConfigurationError("boundary data lives on a different grid")
    cfg = config if config is not None else SolverConfig()
    bvals = boundary.values.reshape(-1)[op.ring_flat]
    rhs = -(op.boundary_matrix @ bvals)
    neg = -op.matrix
    precond = None
    if cfg.preconditioner == "diagonal":
        diag = neg.diagonal()
        if np.any(diag <= 0):
            raise InvalidInputError("operator diagonal not positive; cannot precondition")
        precond = 1.0 / diag
    max_iterations = cfg.max_iterations if cfg.max_iterations is not None else 20 * op.unknowns
    x = _pcg(neg, -rhs, cfg.tolerance, max_iterations, precond, history)
    # (-M) f = -rhs  <=>  M f = rhs
    out = boundary.values.copy().reshape(-1)
    out[op.interior_flat] = x
    return ScalarField(op.spec, out.reshape(op.spec.shape))


def harnack_ratio(f: ScalarField, r_inner: float, center=None) -> float:
    """max f / min f over the grid points of the ball |x - center| <= r_inner.

    The field must be strictly positive on that ball and the ball must fit
    inside the grid box.
    """
    spec = f.spec
    c = spec.center() if center is None else tuple(float(x) for x in center)
    lo, hi = spec.origin, spec.upper()
    pad = 1e-9 * spec.h
    for i in range(spec.n):
        if c[i] - r_inner < lo[i] - pad or c[i] + r_inner > hi[i] + pad:
            raise InvalidInputError("inner ball reaches outside the grid box")
    sel = spec.radius_squared(c) <= float(r_inner) ** 2
    vals = f.values[sel]
    if vals.size == 0:
        raise InvalidInputError("no grid points inside the inner ball")
    if np.any(vals <= 0.0):
        raise InvalidInputError("Harnack ratio needs strictly positive values on the inner ball")
    return float(vals.max() / vals.min())


@dataclasses.dataclass
class RescaleReport:
    """Outcome of solving the same coefficient family at two scales."""

    R: float
    max_discrepancy: float
    base_iterations: int
    scaled_iterations: int


def rescale_check(
    coeff: SymMatrixField,
    mask: DomainMask,
    boundary: ScalarField,
    R: float,
    config: SolverConfig | None = None,
) -> RescaleReport:
    """Verify scale invariance of the homogeneous equation.

    Carrying coefficients and boundary data over by grid index to the grid
    scaled by R realizes a(x/R) and b(x/R) on the blown-up domain; the two
    linear systems coincide up to an overall 1/R^2 factor, so the solutions
    must agree at corresponding points up to solver behavior. Both problems
    are actually solved; the reported number is the max interior discrepancy.
    """
    if not (np.isfinite(R) and R > 0):
        raise ConfigurationError(f"scale factor must be positive and finite, got {R!r}")
    spec = coeff.spec
    hist1: list = []
    op1 = assemble_coefficients(coeff, mask)
    f1 = solve_dirichlet(op1, boundary, config, hist1)

    spec2 = GridSpec(spec.n, spec.points_per_axis, spec.h * R, tuple(R * x for x in spec.origin))
    coeff2 = SymMatrixField(spec2, coeff.values)
    mask2 = DomainMask(spec2, mask.kind, mask.depth)
    boundary2 = ScalarField(spec2, boundary.values)
    hist2: list = []
    op2 = assemble_coefficients(coeff2, mask2)
    f2 = solve_dirichlet(op2, boundary2, config, hist2)

    interior = mask.interior
    disc = float(np.abs(f1.values[interior] - f2.values[interior]).max())
    return RescaleReport(float(R), disc, len(hist1), len(hist2))


def boundary_sign_pattern(spec: GridSpec, center=None) -> ScalarField:
    """Deterministic +/-1 boundary data by dominant offset axis.

    +1 where the last axis dominates the offset from the center ("top and
    bottom" patches in 2-D), -1 elsewhere; ties resolve to the lowest axis.
    """
    c = np.asarray(spec.center() if center is None else center, dtype=float)
    offs = np.abs(spec.meshcoords() - c)
    dominant = np.argmax(offs, axis=-1)
    return ScalarField(spec, np.where(dominant == spec.n - 1, 1.0, -1.0))


@dataclasses.dataclass
class DecayLevel:
    radius: float
    ratio: float
    alpha: float
    iterations: int


@dataclasses.dataclass
class DecayReport:
    levels: list
    fitted_alpha: float


def oscillation_decay(
    metric: MetricField,
    radii,
    center=None,
    config: SolverConfig | None = None,
    depth: int = 2,
) -> DecayReport:
    """Interior oscillation contraction of the metric Laplacian.

    For each radius R: solve the Dirichlet problem on the ball mask B_R with
    the +/-1 sign-pattern data, then record osc(B_{R/2}) / osc(B_R) with
    osc = max - min (the denominator taken over the whole masked ball, the
    numerator over interior points within R/2). Each level's exponent is
    alpha = -log2(ratio); the fitted exponent is their mean.
    """
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ConfigurationError("radii must be strictly increasing")
    spec = metric.spec
    c = spec.center() if center is None else tuple(float(x) for x in center)
    r2 = spec.radius_squared(c)
    levels = []
    for radius in radii:
        mask_r = DomainMask.ball(spec, radius, c, depth)
        op = assemble(metric, mask_r)
        data = boundary_sign_pattern(spec, c)
        hist: list = []
        f = solve_dirichlet(op, data, config, hist)
        whole = f.values[mask_r.inside]
        half_sel = mask_r.interior & (r2 <= (radius / 2.0) ** 2)
        if not half_sel.any():
            raise ConfigurationError(f"no interior points inside radius {radius / 2.0}")
        half = f.values[half_sel]
        osc_whole = float(whole.max() - whole.min())
        osc_half = float(half.max() - half.min())
        ratio = osc_half / osc_whole
        levels.append(DecayLevel(radius, ratio, -math.log2(ratio) if ratio > 0 else math.inf, len(hist)))
    fitted = float(np.mean([lv.alpha for lv in levels]))
    return DecayReport(levels, fitted)


def graph_laplacian_residual(
    u: ScalarField, mask: DomainMask, field_values: np.ndarray
) -> tuple[float, ScalarField]:
    """Pointwise metric Laplacian of the given values on u's gradient graph.

    Assembles the divergence-form operator from u's induced metric, applies
    it to the values (using their own numbers on the boundary ring, no
    homogeneous-data assumption), and divides by the area weight so the
    result matches the Laplacian pointwise. Returns (max norm over the
    interior, residual field zero outside the interior).
    """
    g = induced_metric(hessian(u))
    op = assemble(g, mask)
    raw = op.apply(field_values)
    res = np.where(mask.interior, raw / op.weight, 0.0)
    norm = float(np.abs(res[mask.interior]).max())
    return norm, ScalarField(u.spec, res)


def stationary_residual(u: ScalarField, mask: DomainMask) -> tuple[float, ScalarField]:
    """Residual of the volume-stationarity equation: the metric Laplacian of
    the potential's own phase. Zero residual characterizes volume-stationary
    gradient graphs; quadratic potentials give zero up to roundoff."""
    theta = phase(hessian(u)).theta
    return graph_laplacian_residual(u, mask, theta)
