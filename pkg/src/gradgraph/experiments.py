"""Experiment drivers behind the CLI subcommands.

Each driver takes an ExperimentConfig, runs a pipeline out of the lower
modules, and returns a Report whose judged metrics decide the process exit
code. Runs are deterministic given the config (and seed, where one is
required); reports echo the configuration so reruns are comparable line by
line.
"""

from __future__ import annotations

import math

import numpy as np

from . import elliptic, minimize as minimize_mod, rotation
from .config import ExperimentConfig
from .errors import ConfigurationError, FunctionalDomainError
from .grid import DomainMask, GridSpec, ScalarField, SymMatrixField, dump_field, hessian, tri_pairs
from .phase import (
    FUNCTIONALS,
    functional_field,
    induced_metric,
    metric_from_full,
    phase,
    phase_semiconvexity_bound,
)
from .report import Report
from . import eigen


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def make_spec(cfg: ExperimentConfig, half_width: float | None = None, points: int | None = None) -> GridSpec:
    return GridSpec.centered(
        cfg.n,
        points if points is not None else cfg.points_per_axis,
        half_width if half_width is not None else cfg.radius,
    )


def make_mask(cfg: ExperimentConfig, spec: GridSpec) -> DomainMask:
    if cfg.mask == "ball":
        radius = cfg.mask_radius if cfg.mask_radius is not None else 0.9 * cfg.radius
        return DomainMask.ball(spec, radius)
    return DomainMask.box(spec)


def quad_matrix(cfg: ExperimentConfig) -> np.ndarray:
    """Hessian of the configured quadratic, as a full symmetric matrix."""
    n = cfg.n
    q = np.eye(n)
    if cfg.quad is not None:
        for k, (i, j) in enumerate(tri_pairs(n)):
            q[i, j] = cfg.quad[k]
            q[j, i] = cfg.quad[k]
    return q


def quadratic_values(spec: GridSpec, q: np.ndarray) -> np.ndarray:
    x = spec.meshcoords()
    return 0.5 * np.einsum("...i,ij,...j->...", x, q, x)


def shape_values(cfg: ExperimentConfig, spec: GridSpec, shape: str, width: float) -> np.ndarray:
    """Unit-amplitude perturbation shapes selected by id."""
    x = spec.meshcoords()
    if shape == "none":
        return np.zeros(spec.shape)
    if shape == "gauss":
        c = np.zeros(spec.n) if cfg.shape_center is None else np.asarray(cfg.shape_center, dtype=float)
        r2 = np.einsum("...i,...i->...", x - c, x - c)
        return np.exp(-r2 / (2.0 * width * width))
    if shape == "mode":
        out = np.ones(spec.shape)
        for i in range(spec.n):
            length = spec.upper()[i] - spec.origin[i]
            out *= np.sin(cfg.shape_freq * math.pi * (x[..., i] - spec.origin[i]) / length)
        return out
    raise ConfigurationError(f"unknown perturbation shape {shape!r}")


def potential_field(cfg: ExperimentConfig, spec: GridSpec) -> ScalarField:
    """Configured potential: quadratic plus eta * shape."""
    vals = quadratic_values(spec, quad_matrix(cfg))
    if cfg.eta != 0.0:
        vals = vals + cfg.eta * shape_values(cfg, spec, cfg.shape, cfg.shape_width)
    return ScalarField(spec, vals)


def solver_config(cfg: ExperimentConfig) -> elliptic.SolverConfig:
    return elliptic.SolverConfig(
        tolerance=cfg.solver_tol,
        max_iterations=cfg.solver_max_iter if cfg.solver_max_iter > 0 else None,
    )


def descent_config(cfg: ExperimentConfig) -> minimize_mod.DescentConfig:
    return minimize_mod.DescentConfig(
        step_rule=cfg.step_rule,
        grad_tol=None if cfg.grad_tol == "auto" else float(cfg.grad_tol),
        max_steps=cfg.max_steps,
        step0=cfg.step0,
    )


def resolve_m(cfg: ExperimentConfig, u: ScalarField, mask: DomainMask) -> float:
    if cfg.M == "auto":
        return rotation.estimate_semiconvexity(u, mask)
    return float(cfg.M)


def rotation_params(cfg: ExperimentConfig, m: float) -> rotation.RotationParams:
    if cfg.delta is not None:
        return rotation.params_from_delta(cfg.delta, cfg.n)
    return rotation.derive_params(m, cfg.n)


def _echo_config(report: Report, cfg: ExperimentConfig) -> None:
    for field in (
        "n",
        "points_per_axis",
        "radius",
        "mask",
        "eta",
        "shape",
        "shape_width",
        "seed",
    ):
        value = getattr(cfg, field)
        report.add(f"config.{field}", "none" if value is None else value)


def _maybe_dump(cfg: ExperimentConfig, outdir, fields: dict) -> None:
    if not cfg.dump_fields or outdir is None:
        return
    import os

    os.makedirs(outdir, exist_ok=True)
    for name, field in fields.items():
        dump_field(field, os.path.join(outdir, f"{name}.txt"))


# ---------------------------------------------------------------------------
# experiment drivers
# ---------------------------------------------------------------------------

def run_phase_summary(cfg: ExperimentConfig, outdir=None) -> Report:
    """Phase and eigenvalue summary of the configured potential."""
    cfg.validate()
    spec = make_spec(cfg)
    mask = make_mask(cfg, spec)
    u = potential_field(cfg, spec)
    ph = phase(hessian(u))
    interior = mask.interior
    report = Report("phase")
    _echo_config(report, cfg)
    theta_int = ph.theta[interior]
    lam_int = ph.lam[..., 0][interior]
    report.add("theta.min", float(theta_int.min()))
    report.add("theta.max", float(theta_int.max()))
    report.add("lambda.min", float(lam_int.min()))
    report.add("lambda.max", float(ph.lam[..., -1][interior].max()))
    report.add_metric("theta_abs_max", float(np.abs(theta_int).max()), "<=", cfg.n * math.pi / 2.0)
    if cfg.delta is not None:
        theta_min = (cfg.n - 2) * math.pi / 2.0 + cfg.delta
        bound = phase_semiconvexity_bound(theta_min, cfg.n)
        report.add("phase_condition.theta_min", theta_min)
        report.add("phase_condition.lambda_bound", bound)
        satisfied = ph.theta >= theta_min
        violations = int(np.count_nonzero(satisfied & (ph.lam[..., 0] < bound) & interior))
        report.add_metric("phase_condition.violations", violations, "<=", 0)
    _maybe_dump(cfg, outdir, {"u": u, "theta": ScalarField(spec, ph.theta)})
    return report


def run_rotation_check(cfg: ExperimentConfig, outdir=None) -> Report:
    """Derive rotation constants, rotate, certify; the certificate is the verdict."""
    cfg.validate()
    spec = make_spec(cfg)
    mask = make_mask(cfg, spec)
    u = potential_field(cfg, spec)
    m = resolve_m(cfg, u, mask)
    params = rotation_params(cfg, m)
    t_field, dt_field = rotation.apply_rotation(u, params)
    cert = rotation.certify(u, params, mask)
    report = Report("rotate-check")
    _echo_config(report, cfg)
    for key, value in cert.to_lines():
        report.add(key, value)
    report.add_check("certificate_passed", cert.passed)
    _maybe_dump(cfg, outdir, {"u": u, "rotated_map": t_field, "rotated_differential": dt_field})
    return report


def run_minimize(cfg: ExperimentConfig, outdir=None) -> Report:
    """Volume minimization with the configured boundary data and warm start."""
    cfg.validate()
    spec = make_spec(cfg)
    mask = make_mask(cfg, spec)
    boundary = potential_field(cfg, spec)
    vals = boundary.values.copy()
    if cfg.warm_start == "quad":
        q_vals = quadratic_values(spec, quad_matrix(cfg))
        vals = np.where(mask.interior, q_vals, vals)
    elif cfg.warm_start == "perturbed":
        bump = cfg.warm_eta * shape_values(cfg, spec, "gauss", cfg.warm_width)
        vals = np.where(mask.interior, vals + bump, vals)
    u0 = ScalarField(spec, vals)

    result = minimize_mod.minimize_volume(u0, mask, descent_config(cfg))
    fit = minimize_mod.quadratic_fit(result.u, mask)
    resid_norm, resid = elliptic.stationary_residual(result.u, mask)

    report = Report("minimize")
    _echo_config(report, cfg)
    report.add("config.warm_start", cfg.warm_start)
    report.add("descent.steps", result.steps)
    report.add("descent.volume", result.volume)
    report.add("descent.grad_max", result.grad_max)
    report.add("descent.termination", result.termination)
    report.add("fit.max_deviation", fit.max_deviation)
    report.add("stationarity.residual_max", resid_norm)
    monotone = all(b <= a for a, b in zip(result.f_history, result.f_history[1:]))
    report.add_check("volume_monotone", monotone)
    report.add_check("converged", result.converged)
    _maybe_dump(cfg, outdir, {"u": result.u, "residual": resid})
    return report


def run_bernstein_sweep(cfg: ExperimentConfig, outdir=None) -> Report:
    """Flattening probe over growing domains with fixed boundary perturbation.

    Refuses to run when the configured quadratic violates the phase
    condition. Deviation thresholds on the sweep are an empirical proxy for
    flattening, not a theoretical rate; the report labels them as such.
    """
    cfg.validate()
    n = cfg.n
    q = quad_matrix(cfg)
    lam_q, _ = eigen.eig_sym(q)
    theta_q = float(np.arctan(lam_q).sum())
    delta = cfg.delta if cfg.delta is not None else 0.1
    theta_min = (n - 2) * math.pi / 2.0 + delta
    bound = phase_semiconvexity_bound(theta_min, n)
    if theta_q < theta_min:
        raise ConfigurationError(
            f"phase precondition failed: quadratic has phase {theta_q:.6g} "
            f"< required {theta_min:.6g} (delta={delta:.6g})"
        )

    report = Report("bernstein")
    _echo_config(report, cfg)
    report.add("phase_condition.theta_quadratic", theta_q)
    report.add("phase_condition.theta_min", theta_min)
    report.add("phase_condition.lambda_bound", bound)
    report.add("note.deviation_thresholds", "empirical flattening proxy, not a theoretical rate")

    rows = []
    deviations = []
    persistence = []
    for radius in cfg.radii:
        spec = GridSpec.centered(n, cfg.points_per_axis, radius)
        mask = DomainMask.box(spec)
        boundary = potential_field(cfg, spec)
        result = minimize_mod.minimize_volume(boundary.copy(), mask, descent_config(cfg))
        ph = phase(hessian(result.u))
        theta_interior_min = float(ph.theta[mask.interior].min())
        persists = theta_interior_min > (n - 2) * math.pi / 2.0
        half = mask.interior & (spec.radius_squared() <= (radius / 2.0) ** 2)
        fit = minimize_mod.quadratic_fit(result.u, mask, half)
        resid_norm, _ = elliptic.stationary_residual(result.u, mask)
        rows.append(
            (radius, fit.max_deviation, theta_interior_min, persists, resid_norm, result.steps, result.converged)
        )
        deviations.append(fit.max_deviation)
        persistence.append(persists)

    report.add_table(
        "sweep",
        ["radius", "fit_deviation", "theta_min", "phase_persists", "residual_max", "steps", "converged"],
        rows,
    )
    report.add_check("phase_persistence", all(persistence))
    if cfg.eta == 0.0:
        report.add_metric("max_deviation", max(deviations), "<=", 1e-6)
    else:
        worst_growth = max(
            (later / max(earlier, 1e-300) for earlier, later in zip(deviations, deviations[1:])),
            default=0.0,
        )
        report.add_metric("deviation_growth_factor", worst_growth, "<=", 1.1)
    return report


def rotated_metric_field(u: ScalarField, params: rotation.RotationParams):
    """Graph metric in rotated coordinates, I + B^2, built from the Hessian
    eigensystem per point (no inversion of the rotated map needed)."""
    spec = u.spec
    a = params.delta / params.n
    c, s = math.cos(a), math.sin(a)
    lam, vec = eigen.field_eigensystem(hessian(u))
    b = lam / (c + s * lam)
    w = 1.0 + b * b
    gfull = np.einsum("...ik,...k,...jk->...ij", vec, w, vec)
    return metric_from_full(spec, gfull)


def run_liouville(cfg: ExperimentConfig, outdir=None) -> Report:
    """Certified rotation, then oscillation decay and Harnack ratios of the
    rotated-coordinate metric Laplacian over growing balls."""
    cfg.validate()
    spec = make_spec(cfg)
    mask = DomainMask.box(spec)
    u = potential_field(cfg, spec)
    m = resolve_m(cfg, u, mask)
    params = rotation_params(cfg, m)
    cert = rotation.certify(u, params, mask)

    report = Report("liouville")
    _echo_config(report, cfg)
    for key, value in cert.to_lines():
        report.add(key, value)
    report.add_check("certificate_passed", cert.passed)
    if not cert.passed:
        return report

    metric = rotated_metric_field(u, params)
    scfg = solver_config(cfg)
    decay = elliptic.oscillation_decay(metric, cfg.radii, config=scfg)
    rows = [(lv.radius, lv.ratio, lv.alpha, lv.iterations) for lv in decay.levels]
    report.add_table("decay", ["radius", "ratio", "alpha", "iterations"], rows)
    report.add("decay.fitted_alpha", decay.fitted_alpha)
    report.add_metric("decay_ratio_max", max(lv.ratio for lv in decay.levels), "<=", cfg.decay_threshold)

    ratios = []
    for radius in cfg.radii:
        ball = DomainMask.ball(spec, radius)
        op = elliptic.assemble(metric, ball)
        data = ScalarField(spec, 2.0 + elliptic.boundary_sign_pattern(spec).values)
        f = elliptic.solve_dirichlet(op, data, scfg)
        ratios.append((radius, elliptic.harnack_ratio(f, radius / 4.0)))
    report.add_table("harnack", ["radius", "ratio"], ratios)
    report.add_check("harnack_ratios_finite", all(np.isfinite(r) for _, r in ratios))
    _maybe_dump(cfg, outdir, {"u": u, "area_weight": ScalarField(spec, metric.sqrt_det_g)})
    return report


def run_harnack_suite(cfg: ExperimentConfig, outdir=None) -> Report:
    """Seeded uniformly elliptic coefficient fields on a ball: positivity,
    ratio reproducibility, and scale invariance of the solves."""
    cfg.validate()
    seed = cfg.require_seed()
    rng = np.random.default_rng(seed)
    n = cfg.n
    ball_radius = cfg.mask_radius if cfg.mask_radius is not None else 4.0
    half_width = max(cfg.radius, ball_radius * 1.125)
    spec = GridSpec.centered(n, cfg.points_per_axis, half_width)
    mask = DomainMask.ball(spec, ball_radius)
    scfg = solver_config(cfg)
    x = spec.meshcoords()

    def smooth(amplitude):
        omega = rng.uniform(0.3, 1.2, size=n)
        phi = rng.uniform(0.0, 2.0 * math.pi, size=n)
        out = np.ones(spec.shape)
        for i in range(n):
            out *= np.cos(omega[i] * x[..., i] + phi[i])
        return amplitude * out

    def coefficient_field():
        tri = np.zeros(spec.shape + (n * (n + 1) // 2,))
        for k, (i, j) in enumerate(tri_pairs(n)):
            if i == j:
                tri[..., k] = 1.0 + smooth(0.4)
            else:
                tri[..., k] = smooth(0.25 / max(n - 1, 1))
        return SymMatrixField(spec, tri)

    rows = []
    positives = 0
    max_drift = 0.0
    min_eps = math.inf
    c_emp = 0.0
    for trial in range(cfg.trials):
        coeff = coefficient_field()
        data = ScalarField(spec, 2.0 + smooth(1.0))
        op = elliptic.assemble_coefficients(coeff, mask)
        min_eps = min(min_eps, op.eps_ratio)
        f1 = elliptic.solve_dirichlet(op, data, scfg)
        positive = bool(f1.values[mask.inside].min() > 0.0)
        positives += positive
        ratio1 = elliptic.harnack_ratio(f1, cfg.harnack_radius)
        f2 = elliptic.solve_dirichlet(op, data, scfg)
        ratio2 = elliptic.harnack_ratio(f2, cfg.harnack_radius)
        drift = abs(ratio1 - ratio2)
        max_drift = max(max_drift, drift)
        c_emp = max(c_emp, ratio1)
        rows.append((trial, ratio1, drift, positive, op.eps_ratio))

    report = Report("harnack")
    _echo_config(report, cfg)
    report.add("suite.trials", cfg.trials)
    report.add("suite.empirical_constant", c_emp)
    report.add_table("ratios", ["trial", "ratio", "rerun_drift", "positive", "eps_ratio"], rows)
    report.add_metric("positivity_violations", cfg.trials - positives, "<=", 0)
    report.add_metric("ratio_rerun_drift", max_drift, "<=", 1e-10)
    report.add_metric("ellipticity_ratio_min", min_eps, ">=", 0.2)

    coeff = coefficient_field()
    data = ScalarField(spec, 2.0 + smooth(1.0))
    rescale_rows = []
    worst = 0.0
    for scale_factor in cfg.rescale:
        rep = elliptic.rescale_check(coeff, mask, data, scale_factor, scfg)
        rescale_rows.append((rep.R, rep.max_discrepancy, rep.base_iterations, rep.scaled_iterations))
        worst = max(worst, rep.max_discrepancy)
    report.add_table("rescale", ["R", "max_discrepancy", "base_iterations", "scaled_iterations"], rescale_rows)
    report.add_metric("rescale_discrepancy", worst, "<=", 2.0 * cfg.solver_tol)
    return report


def run_functional_constancy(cfg: ExperimentConfig, outdir=None) -> Report:
    """Constancy of smooth eigenvalue functionals under the metric Laplacian.

    For the configured potential, evaluates each functional of the Hessian
    field, applies the assembled metric Laplacian, and reports the field
    oscillation and residual norm; the phase functional's residual is also
    cross-checked bitwise against the stationarity residual.
    """
    cfg.validate()
    spec = make_spec(cfg)
    mask = make_mask(cfg, spec)
    u = potential_field(cfg, spec)
    hess = hessian(u)

    report = Report("theorem4")
    _echo_config(report, cfg)
    rows = []
    for name in cfg.functionals:
        if name not in FUNCTIONALS:
            raise ConfigurationError(f"unknown functional {name!r} (have {sorted(FUNCTIONALS)})")
        functional = FUNCTIONALS[name]
        try:
            field = functional_field(hess, functional)
        except FunctionalDomainError as exc:
            report.add(f"functional.{name}.domain_violations", len(exc.points))
            report.add_check(f"{name}_in_domain", False)
            continue
        interior_vals = field.values[mask.interior]
        osc = float(interior_vals.max() - interior_vals.min())
        resid_norm, _ = elliptic.graph_laplacian_residual(u, mask, field.values)
        rows.append((name, osc, resid_norm))
        report.add_metric(f"{name}_oscillation", osc, "<=", 1e-10)
        report.add_metric(f"{name}_residual_max", resid_norm, "<=", 1e-10)
        if name == "phase":
            stat_norm, stat_field = elliptic.stationary_residual(u, mask)
            _, func_field = elliptic.graph_laplacian_residual(u, mask, field.values)
            mismatch = float(np.abs(stat_field.values - func_field.values).max())
            report.add_metric("phase_path_bitwise_mismatch", mismatch, "<=", 0.0)
    report.add_table("functionals", ["functional", "oscillation", "residual_max"], rows)
    return report
