"""Volume minimization over interior grid values, plus quadratic fits.

The descent is plain gradient descent on the interior unknowns with an
Armijo backtracking line search (halving), so the functional decreases
monotonically across accepted steps. Two step-size initializations are
available: "fixed" restarts each search from twice the previously accepted
step, "bb" uses the spectral (secant) step s.s/s.y when the curvature
estimate is positive, which is dramatically faster on the stiff
fourth-order landscapes these functionals produce.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .grid import DomainMask, ScalarField
from .phase import volume, volume_gradient


@dataclasses.dataclass(frozen=True)
class DescentConfig:
    step_rule: str = "bb"  # "bb" | "fixed"
    grad_tol: float | None = None  # None -> 1e-8 * h^n
    max_steps: int = 100000
    step0: float = 1.0
    armijo: float = 1e-4
    min_step: float = 1e-14

    def __post_init__(self):
        if self.step_rule not in ("bb", "fixed"):
            raise ConfigurationError(f"unknown step rule {self.step_rule!r}")
        if self.max_steps < 0:
            raise ConfigurationError("max_steps must be >= 0")
        if not (self.step0 > 0 and self.armijo > 0 and self.min_step > 0):
            raise ConfigurationError("step0, armijo and min_step must be positive")


@dataclasses.dataclass
class MinimizeResult:
    u: ScalarField
    volume: float
    grad_max: float
    steps: int
    converged: bool
    termination: str  # "gradient_tolerance" | "max_steps" | "line_search_failure"
    f_history: list
    diagnostics: dict | None = None


def minimize_volume(u0: ScalarField, mask: DomainMask, config: DescentConfig | None = None) -> MinimizeResult:
    """Descend the graph volume over the mask's interior values.

    Boundary-layer values of ``u0`` stay frozen (they pin the function and
    its gradient there); iteration stops when the gradient max-norm falls
    to ``grad_tol`` or ``max_steps`` is reached. A line search that cannot
    find decrease above ``min_step`` terminates with diagnostics rather
    than raising: probing non-descent configurations is a legitimate
    experiment outcome.
    """
    cfg = config if config is not None else DescentConfig()
    spec = u0.spec
    tol = cfg.grad_tol if cfg.grad_tol is not None else 1e-8 * spec.h**spec.n

    vals = u0.values.copy()

    def f_of(v: np.ndarray) -> float:
        value = volume(ScalarField(spec, v), mask)
        if not np.isfinite(value):
            raise InvalidInputError("volume functional became non-finite")
        return value

    def g_of(v: np.ndarray) -> np.ndarray:
        return volume_gradient(ScalarField(spec, v), mask).values

    f_cur = f_of(vals)
    g_cur = g_of(vals)
    g_max = float(np.abs(g_cur).max())
    f_history = [f_cur]
    steps = 0
    alpha_prev = cfg.step0
    s_prev = y_prev = None
    termination = "gradient_tolerance"
    diagnostics = None

    while g_max > tol:
        if steps >= cfg.max_steps:
            termination = "max_steps"
            break
        g_norm2 = float(np.dot(g_cur.ravel(), g_cur.ravel()))
        if cfg.step_rule == "bb" and s_prev is not None:
            sy = float(np.dot(s_prev.ravel(), y_prev.ravel()))
            if sy > 0.0:
                alpha = float(np.dot(s_prev.ravel(), s_prev.ravel())) / sy
            else:
                alpha = 2.0 * alpha_prev
        elif steps == 0:
            alpha = cfg.step0
        else:
            alpha = 2.0 * alpha_prev
        alpha = min(max(alpha, cfg.min_step), 1e12)

        accepted = False
        while alpha >= cfg.min_step:
            trial = vals - alpha * g_cur
            f_trial = f_of(trial)
            if f_trial <= f_cur - cfg.armijo * alpha * g_norm2:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # distinguishes a genuine descent failure from the double-precision
            # floor, where the required Armijo decrease is below an ulp of F
            termination = "line_search_failure"
            diagnostics = {
                "last_step": alpha,
                "volume": f_cur,
                "grad_max": g_max,
                "steps": steps,
                "required_decrease": cfg.armijo * alpha * g_norm2,
                "volume_ulp": float(np.spacing(f_cur)),
            }
            break

        if f_trial > f_cur:
            raise RuntimeError("descent step increased the functional")
        g_next = g_of(trial)
        s_prev = trial - vals
        y_prev = g_next - g_cur
        vals = trial
        f_cur = f_trial
        g_cur = g_next
        g_max = float(np.abs(g_cur).max())
        alpha_prev = alpha
        steps += 1
        f_history.append(f_cur)

    converged = g_max <= tol
    return MinimizeResult(
        u=ScalarField(spec, vals),
        volume=f_cur,
        grad_max=g_max,
        steps=steps,
        converged=converged,
        termination="gradient_tolerance" if converged else termination,
        f_history=f_history,
        diagnostics=diagnostics,
    )


@dataclasses.dataclass
class QuadraticFit:
    """Least-squares degree-2 fit: value(x) = constant + linear.x + 0.5 x^T quadratic x."""

    constant: float
    linear: np.ndarray
    quadratic: np.ndarray
    max_deviation: float

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return (
            self.constant
            + pts @ self.linear
            + 0.5 * np.einsum("...i,ij,...j->...", pts, self.quadratic, pts)
        )


def quadratic_fit(u: ScalarField, mask: DomainMask, region: np.ndarray | None = None) -> QuadraticFit:
    """Fit a degree <= 2 polynomial over the region (default: the interior).

    Normal equations on the monomial basis in centered, per-axis scaled
    coordinates keep the Gram matrix well conditioned; the returned
    coefficients are mapped back to original coordinates. ``max_deviation``
    is the max-norm misfit over the region.
    """
    spec = u.spec
    n = spec.n
    sel = mask.interior if region is None else np.asarray(region, dtype=bool)
    pts = spec.meshcoords()[sel]
    y = u.values[sel]
    need = (n + 1) * (n + 2) // 2
    if pts.shape[0] < need:
        raise ConfigurationError(f"quadratic fit needs at least {need} points, got {pts.shape[0]}")
    center = pts.mean(axis=0)
    scale = np.abs(pts - center).max(axis=0)
    if np.any(scale == 0.0):
        raise ConfigurationError("degenerate region: no extent along some axis")
    xi = (pts - center) / scale

    cols = [np.ones(pts.shape[0])]
    cols.extend(xi[:, i] for i in range(n))
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    cols.extend(xi[:, i] * xi[:, j] for i, j in pairs)
    basis = np.stack(cols, axis=1)
    gram = basis.T @ basis
    rhs = basis.T @ y
    try:
        coef = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise ConfigurationError(f"quadratic fit normal equations are singular: {exc}") from exc
    if not np.all(np.isfinite(coef)):
        raise ConfigurationError("quadratic fit produced non-finite coefficients")
    fitted = basis @ coef
    max_dev = float(np.abs(y - fitted).max())

    # map a0 + sum a_i xi_i + sum_{i<=j} a_ij xi_i xi_j back to x coordinates
    constant = float(coef[0])
    linear = np.zeros(n)
    quad_coeff = np.zeros((n, n))  # c_ij with value = ... + sum_{i<=j} c_ij x_i x_j
    for i in range(n):
        a_i = coef[1 + i] / scale[i]
        linear[i] += a_i
        constant -= a_i * center[i]
    for k, (i, j) in enumerate(pairs):
        a_ij = coef[1 + n + k] / (scale[i] * scale[j])
        quad_coeff[i, j] += a_ij
        constant += a_ij * center[i] * center[j]
        linear[i] -= a_ij * center[j]
        linear[j] -= a_ij * center[i]
    quadratic = np.zeros((n, n))
    for i in range(n):
        quadratic[i, i] = 2.0 * quad_coeff[i, i]
        for j in range(i + 1, n):
            quadratic[i, j] = quad_coeff[i, j]
            quadratic[j, i] = quad_coeff[i, j]
    return QuadraticFit(constant, linear, quadratic, max_dev)
