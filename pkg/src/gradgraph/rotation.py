"""Coordinate rotation for semiconvex potentials and its certification.

For a potential with D2u >= -M*I, set delta = pi/2 - arctan(M) and rotate
coordinates by the map T(x) = cos(delta/n) x + sin(delta/n) Du(x). Then

    DT = cos(delta/n) I + sin(delta/n) D2u
       >= cos(delta/n) (1 + tan(delta/n) tan(delta - pi/2)) I
        = cos(delta/n) [tan(delta/n) + tan(pi/2 - delta)]
          / tan(pi/2 - delta (n-1)/n) I =: c_lower I > 0,

so T is a gradient of a strictly convex potential and a diffeomorphism. In
rotated coordinates the differential of the graph map is
B = H (cos(delta/n) I + sin(delta/n) H)^{-1}, whose eigenvalues
b_i = lambda_i / (cos(delta/n) + sin(delta/n) lambda_i) are bounded by
M0 = 1/sin(delta/n) on the semiconvex range, sandwiching the pulled-back
metric I + B^T B between I and (1 + M0^2) I.

Certification evaluates these bounds pointwise on a grid. Failure is data,
not an exception: experiments intentionally probe boundary cases.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import eigen
from .errors import OutOfRangeError
from .grid import DomainMask, ScalarField, SymMatrixField, VectorField, gradient, hessian, identity_tri

CERTIFY_TOL = 1e-8


@dataclasses.dataclass(frozen=True)
class RotationParams:
    """Derived constants of the rotation for a semiconvexity constant M."""

    n: int
    M: float
    delta: float
    c_lower: float
    M0: float
    metric_upper: float


def params_from_delta(delta: float, n: int) -> RotationParams:
    """Build params directly from the rotation angle (delta override path)."""
    if not isinstance(n, int) or n < 2:
        raise OutOfRangeError(f"rotation needs dimension n >= 2, got {n!r}")
    if not (np.isfinite(delta) and 0.0 < delta <= math.pi / 2.0):
        raise OutOfRangeError(f"delta must lie in (0, pi/2], got {delta!r}")
    m = math.tan(math.pi / 2.0 - delta)
    a = delta / n
    c_lower = math.cos(a) * (math.tan(a) + math.tan(math.pi / 2.0 - delta)) / math.tan(
        math.pi / 2.0 - delta * (n - 1) / n
    )
    m0 = 1.0 / math.sin(a)
    return RotationParams(n, m, delta, c_lower, m0, 1.0 + m0 * m0)


def derive_params(M: float, n: int) -> RotationParams:
    """Constants for a given semiconvexity bound D2u + M*I >= 0.

    M must be nonnegative; callers with a raw field first shift by the
    measured semiconvexity constant (see :func:`estimate_semiconvexity`).
    """
    if not (np.isfinite(M) and M >= 0.0):
        raise OutOfRangeError(f"semiconvexity constant must be finite and >= 0, got {M!r}")
    delta = math.pi / 2.0 - math.atan(M)
    params = params_from_delta(delta, n)
    # record the caller's M verbatim (tan(pi/2 - delta) reproduces it only to roundoff)
    return dataclasses.replace(params, M=float(M))


def estimate_semiconvexity(u: ScalarField, mask: DomainMask | None = None, margin: float = 1e-6) -> float:
    """Measured semiconvexity constant: max(0, -min lambda_min(D2u)) + margin."""
    mask = mask if mask is not None else DomainMask.box(u.spec)
    lam, _ = eigen.field_eigensystem(hessian(u))
    lmin = float(lam[..., 0][mask.interior].min())
    return max(0.0, -lmin) + margin


def apply_rotation(u: ScalarField, params: RotationParams) -> tuple[VectorField, SymMatrixField]:
    """The rotated coordinate map T and its (symmetric) differential DT."""
    spec = u.spec
    a = params.delta / params.n
    c, s = math.cos(a), math.sin(a)
    t_values = c * spec.meshcoords() + s * gradient(u).values
    dt_tri = s * hessian(u).values + c * identity_tri(spec.n)
    return VectorField(spec, t_values), SymMatrixField(spec, dt_tri)


@dataclasses.dataclass
class RotationCertificate:
    """Pointwise verification of the rotation bounds over a mask's interior.

    ``passed`` requires the semiconvexity precondition, the DT lower bound,
    and the rotated-metric sandwich to hold at every interior point within
    ``tol``, with no numerically singular DT.
    """

    params: RotationParams
    tol: float
    dt_min_eig: np.ndarray
    b_min: np.ndarray
    b_max: np.ndarray
    metric_min: np.ndarray
    metric_max: np.ndarray
    semiconvex_ok: bool
    dt_ok: bool
    metric_ok: bool
    singular: bool
    worst: dict

    @property
    def passed(self) -> bool:
        return self.semiconvex_ok and self.dt_ok and self.metric_ok and not self.singular

    def to_lines(self) -> list[tuple[str, object]]:
        p = self.params
        lines = [
            ("rotation.n", p.n),
            ("rotation.M", p.M),
            ("rotation.delta", p.delta),
            ("rotation.c_lower", p.c_lower),
            ("rotation.M0", p.M0),
            ("rotation.metric_upper", p.metric_upper),
            ("certificate.tol", self.tol),
            ("certificate.semiconvex_ok", self.semiconvex_ok),
            ("certificate.dt_ok", self.dt_ok),
            ("certificate.metric_ok", self.metric_ok),
            ("certificate.singular", self.singular),
            ("certificate.passed", self.passed),
        ]
        for name, (point, value) in self.worst.items():
            lines.append((f"certificate.worst.{name}.point", ",".join(str(i) for i in point)))
            lines.append((f"certificate.worst.{name}.value", value))
        return lines


def _worst(values: np.ndarray, where: np.ndarray, mode: str) -> tuple[tuple, float]:
    masked = np.where(where, values, math.inf if mode == "min" else -math.inf)
    flat = int(np.argmin(masked) if mode == "min" else np.argmax(masked))
    idx = np.unravel_index(flat, values.shape)
    return tuple(int(i) for i in idx), float(values[idx])


def certify(
    u: ScalarField,
    params: RotationParams,
    mask: DomainMask | None = None,
    tol: float = CERTIFY_TOL,
) -> RotationCertificate:
    """Check the rotation bounds for a sampled potential.

    Per interior point: lambda_min(DT) >= c_lower - tol, the eigenvalues of
    B = H (cos(delta/n) I + sin(delta/n) H)^{-1} within [-M0, M0] + tol, and
    the rotated metric eigenvalues 1 + b_i^2 within [1 - tol, 1 + M0^2 + tol].
    DT and B share H's eigenbasis, so everything reduces to scalar maps of
    the Hessian eigenvalues.
    """
    mask = mask if mask is not None else DomainMask.box(u.spec)
    a = params.delta / params.n
    c, s = math.cos(a), math.sin(a)

    lam, _ = eigen.field_eigensystem(hessian(u))
    interior = mask.interior

    dt_lam = c + s * lam  # ascending order preserved (s > 0)
    dt_min = dt_lam[..., 0]
    lam_min = lam[..., 0]

    with np.errstate(divide="ignore", invalid="ignore"):
        b = lam / dt_lam
    finite_b = np.all(np.isfinite(b), axis=-1)
    b_safe = np.where(np.isfinite(b), b, 0.0)
    b_min = b_safe.min(axis=-1)
    b_max = b_safe.max(axis=-1)
    b_sq = b_safe**2
    metric_min = 1.0 + b_sq.min(axis=-1)
    metric_max = 1.0 + b_sq.max(axis=-1)

    semiconvex_ok = bool(np.all(lam_min[interior] >= -params.M - tol))
    singular = bool(np.any(~finite_b[interior]) or np.any(dt_min[interior] <= 0.0))
    dt_ok = bool(np.all(dt_min[interior] >= params.c_lower - tol))
    metric_ok = not singular and bool(
        np.all(metric_max[interior] <= params.metric_upper + tol)
        and np.all(metric_min[interior] >= 1.0 - tol)
    )

    worst = {
        "hessian_min_eig": _worst(lam_min, interior, "min"),
        "dt_min_eig": _worst(dt_min, interior, "min"),
        "metric_max_eig": _worst(metric_max, interior, "max"),
        "b_max_abs": _worst(np.maximum(np.abs(b_min), np.abs(b_max)), interior, "max"),
    }
    return RotationCertificate(
        params=params,
        tol=tol,
        dt_min_eig=dt_min,
        b_min=b_min,
        b_max=b_max,
        metric_min=metric_min,
        metric_max=metric_max,
        semiconvex_ok=semiconvex_ok,
        dt_ok=dt_ok,
        metric_ok=metric_ok,
        singular=singular,
        worst=worst,
    )
