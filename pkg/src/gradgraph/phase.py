"""Lagrangian phase of Hessian fields, the induced graph metric, the volume
functional with its exact discrete gradient, and eigenvalue functionals.

The phase of a symmetric matrix is sum(arctan(lambda_i)) over its (real)
eigenvalues; the principal arctan branch is the right one because every
eigenvalue is real, so each summand lies in (-pi/2, pi/2) and |phase| < n*pi/2.
The gradient graph of a potential u carries the metric g = I + (D2u)^T D2u,
whose area element sqrt(det g) integrates to the graph volume.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Optional

import numpy as np

from . import eigen
from .errors import ConfigurationError, FunctionalDomainError, InvalidInputError, OutOfRangeError
from .grid import (
    DomainMask,
    GridSpec,
    ScalarField,
    SymMatrixField,
    apply_cross_stencil,
    apply_second_stencil,
    central_hessian_full,
)

__all__ = [
    "PhaseField",
    "MetricField",
    "HessianFunctional",
    "PHASE",
    "TRACE",
    "LOGDET",
    "FUNCTIONALS",
    "phase",
    "induced_metric",
    "metric_from_full",
    "volume",
    "volume_gradient",
    "phase_semiconvexity_bound",
    "functional_field",
]


@dataclasses.dataclass(frozen=True)
class HessianFunctional:
    """A symmetric function of Hessian eigenvalues.

    ``evaluate`` maps an ``(..., n)`` eigenvalue array to ``(...)`` values and
    must be invariant under permutations of the last axis. ``monotone``
    declares strict monotonicity in each eigenvalue on the domain;
    ``admissible``, when given, is a per-eigenvalue domain predicate.
    """

    name: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    monotone: bool = True
    admissible: Optional[Callable[[np.ndarray], np.ndarray]] = None


def _phase_of(lam: np.ndarray) -> np.ndarray:
    return np.arctan(lam).sum(axis=-1)


PHASE = HessianFunctional("phase", _phase_of, monotone=True)
TRACE = HessianFunctional("trace", lambda lam: lam.sum(axis=-1), monotone=True)
LOGDET = HessianFunctional(
    "logdet", lambda lam: np.log(lam).sum(axis=-1), monotone=True, admissible=lambda lam: lam > 0
)

FUNCTIONALS = {f.name: f for f in (PHASE, TRACE, LOGDET)}


@dataclasses.dataclass
class PhaseField:
    """Per-point phase and the eigenvalues (ascending) it was summed from."""

    spec: GridSpec
    theta: np.ndarray
    lam: np.ndarray


@dataclasses.dataclass
class MetricField:
    """Graph metric with its precomputed area element and inverse."""

    spec: GridSpec
    g: SymMatrixField
    sqrt_det_g: np.ndarray
    g_inv: SymMatrixField


def phase(hess: SymMatrixField) -> PhaseField:
    """Phase field of a Hessian field: per-point eigenvalues via the Jacobi
    solver, theta = sum(arctan(lambda_i))."""
    lam, _ = eigen.field_eigensystem(hess)
    theta = PHASE.evaluate(lam)
    return PhaseField(hess.spec, theta, lam)


def _det_small(full: np.ndarray) -> np.ndarray:
    """Determinant of stacked small matrices (closed forms for n <= 3)."""
    n = full.shape[-1]
    if n == 1:
        return full[..., 0, 0]
    if n == 2:
        return full[..., 0, 0] * full[..., 1, 1] - full[..., 0, 1] * full[..., 1, 0]
    if n == 3:
        a = full
        c00 = a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1]
        c01 = a[..., 1, 2] * a[..., 2, 0] - a[..., 1, 0] * a[..., 2, 2]
        c02 = a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0]
        return a[..., 0, 0] * c00 + a[..., 0, 1] * c01 + a[..., 0, 2] * c02
    return np.linalg.det(full)


def _det_and_inv(full: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Determinant and inverse of stacked small matrices (adjugate closed
    forms for n <= 3, LAPACK for n = 4)."""
    n = full.shape[-1]
    det = _det_small(full)
    if n == 1:
        return det, 1.0 / full
    if n == 2:
        inv = np.empty_like(full)
        inv[..., 0, 0] = full[..., 1, 1] / det
        inv[..., 0, 1] = -full[..., 0, 1] / det
        inv[..., 1, 0] = -full[..., 1, 0] / det
        inv[..., 1, 1] = full[..., 0, 0] / det
        return det, inv
    if n == 3:
        a = full
        inv = np.empty_like(full)
        inv[..., 0, 0] = a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1]
        inv[..., 1, 0] = a[..., 1, 2] * a[..., 2, 0] - a[..., 1, 0] * a[..., 2, 2]
        inv[..., 2, 0] = a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0]
        inv[..., 0, 1] = a[..., 0, 2] * a[..., 2, 1] - a[..., 0, 1] * a[..., 2, 2]
        inv[..., 1, 1] = a[..., 0, 0] * a[..., 2, 2] - a[..., 0, 2] * a[..., 2, 0]
        inv[..., 2, 1] = a[..., 0, 1] * a[..., 2, 0] - a[..., 0, 0] * a[..., 2, 1]
        inv[..., 0, 2] = a[..., 0, 1] * a[..., 1, 2] - a[..., 0, 2] * a[..., 1, 1]
        inv[..., 1, 2] = a[..., 0, 2] * a[..., 1, 0] - a[..., 0, 0] * a[..., 1, 2]
        inv[..., 2, 2] = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
        inv /= det[..., None, None]
        return det, inv
    return det, np.linalg.inv(full)


def metric_from_full(spec: GridSpec, gfull: np.ndarray) -> MetricField:
    """Package full metric matrices into a MetricField (computes the area
    element and inverse; the metric must be positive definite)."""
    det, inv = _det_and_inv(gfull)
    if not np.all(np.isfinite(det)) or np.any(det <= 0):
        raise InvalidInputError("metric must be positive definite (nonpositive determinant found)")
    return MetricField(
        spec,
        SymMatrixField.from_full(spec, gfull),
        np.sqrt(det),
        SymMatrixField.from_full(spec, inv),
    )


def induced_metric(hess: SymMatrixField) -> MetricField:
    """Metric induced on the gradient graph: g = I + H^2 for symmetric H.

    Always positive definite: the eigenvalues of g are 1 + lambda_i^2 >= 1.
    """
    full = hess.to_full()
    g = full @ full
    n = hess.spec.n
    idx = np.arange(n)
    g[..., idx, idx] += 1.0
    return metric_from_full(hess.spec, g)


def _graph_area_parts(u: ScalarField, need_inverse: bool):
    hf = central_hessian_full(u.values, u.spec)
    a = hf @ hf
    idx = np.arange(u.spec.n)
    a[..., idx, idx] += 1.0
    if need_inverse:
        det, inv = _det_and_inv(a)
    else:
        det, inv = _det_small(a), None
    return hf, np.sqrt(det), inv


def volume(u: ScalarField, mask: DomainMask) -> float:
    """Graph volume of u over the mask: midpoint-rule sum of sqrt(det(I + H^2)).

    The quadrature region is the interior plus the one-point ring around it --
    the full set of points whose area element responds to interior values.
    Summing over exactly that set makes the discrete gradient vanish at every
    interior point whenever the Hessian is globally constant, so quadratic
    potentials are exact critical points of the discrete functional.
    """
    if mask.spec != u.spec:
        raise ConfigurationError("mask and field live on different grids")
    if mask.interior_count == 0:
        raise ConfigurationError("mask has no interior points")
    _, sdet, _ = _graph_area_parts(u, need_inverse=False)
    return float(u.spec.h ** u.spec.n * np.sum(sdet[mask.quadrature]))


def volume_gradient(u: ScalarField, mask: DomainMask) -> ScalarField:
    """Exact gradient of :func:`volume` with respect to interior values.

    Per point, d sqrt(det A) = sqrt(det A) * tr(A^{-1} H dH) with A = I + H^2
    (H commutes with A^{-1}), so the sensitivity to the Hessian entry (i, j)
    is S = sqrt(det A) * H A^{-1}. The chain rule through the second-difference
    and cross stencils is the same stencils applied to S: both weight patterns
    are even in the offset, hence self-adjoint on zero-padded grid functions.
    Returned values are zero outside the interior.
    """
    if mask.spec != u.spec:
        raise ConfigurationError("mask and field live on different grids")
    spec = u.spec
    n, h = spec.n, spec.h
    hf, sdet, ainv = _graph_area_parts(u, need_inverse=True)
    sens = sdet[..., None, None] * (hf @ ainv)
    quad = mask.quadrature
    scale = h ** n
    out = np.zeros(spec.shape)
    for i in range(n):
        w = np.where(quad, sens[..., i, i], 0.0) * scale
        out += apply_second_stencil(w, i, h)
    for i in range(n):
        for j in range(i + 1, n):
            w = np.where(quad, sens[..., i, j], 0.0) * (2.0 * scale)
            out += apply_cross_stencil(w, i, j, h)
    out[~mask.interior] = 0.0
    return ScalarField(spec, out)


def phase_semiconvexity_bound(theta_min: float, n: int) -> float:
    """Eigenvalue lower bound forced by a phase lower bound.

    Any symmetric matrix with sum(arctan(lambda_i)) >= theta_min satisfies
    lambda_min >= tan(delta - pi/2), where delta = theta_min - (n-2)*pi/2:
    if some arctan(lambda_k) were below delta - pi/2, the remaining n-1
    arctangents would have to add up to more than (n-1)*pi/2, which is
    impossible.
    """
    if not isinstance(n, int) or n < 1:
        raise OutOfRangeError(f"dimension must be a positive integer, got {n!r}")
    if not np.isfinite(theta_min):
        raise OutOfRangeError("theta_min must be finite")
    low = (n - 2) * math.pi / 2.0
    delta = theta_min - low
    if delta <= 0.0:
        raise OutOfRangeError(
            f"theta_min={theta_min} does not exceed (n-2)*pi/2={low}; no bound is implied"
        )
    if delta > math.pi:
        raise OutOfRangeError(f"theta_min={theta_min} exceeds n*pi/2; no matrix attains it")
    if delta == math.pi:
        return math.inf
    return math.tan(delta - math.pi / 2.0)


def functional_field(hess: SymMatrixField, functional: HessianFunctional) -> ScalarField:
    """Per-point value of a Hessian functional, F(lambda_1, ..., lambda_n)."""
    lam, _ = eigen.field_eigensystem(hess)
    if functional.admissible is not None:
        ok = np.all(functional.admissible(lam), axis=-1)
        if not ok.all():
            points = [tuple(int(i) for i in idx) for idx in np.argwhere(~ok)]
            raise FunctionalDomainError(
                f"eigenvalues outside the domain of '{functional.name}' at {len(points)} points "
                f"(first offenders: {points[:5]})",
                points=points,
            )
    return ScalarField(hess.spec, functional.evaluate(lam))
