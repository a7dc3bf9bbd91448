"""Rotation constants, the rotated map, and pointwise certification."""

import math

import numpy as np
import pytest

from gradgraph import (
    DomainMask,
    GridSpec,
    OutOfRangeError,
    ScalarField,
    apply_rotation,
    certify,
    derive_params,
    estimate_semiconvexity,
    params_from_delta,
)


def quadratic_field(spec, q):
    x = spec.meshcoords()
    return ScalarField(spec, 0.5 * np.einsum("...i,ij,...j->...", x, np.asarray(q, float), x))


def closed_form_c_lower(delta, n):
    a = delta / n
    return math.cos(a) * (math.tan(a) + math.tan(math.pi / 2 - delta)) / math.tan(
        math.pi / 2 - delta * (n - 1) / n
    )


def test_params_convex_case():
    # M = 0, n = 2: delta = pi/2, c_lower = cos(pi/4) * 1 / tan(pi/4) = sqrt(2)/2
    p = derive_params(0.0, 2)
    assert p.delta == pytest.approx(math.pi / 2, abs=1e-15)
    assert p.c_lower == pytest.approx(math.sqrt(2) / 2, abs=1e-14)
    assert p.c_lower == pytest.approx(0.70711, abs=5e-6)
    assert p.M0 == pytest.approx(math.sqrt(2), abs=1e-14)
    assert p.metric_upper == pytest.approx(3.0, abs=1e-13)


def test_params_m_equals_one():
    # M = 1, n = 2: delta = pi/4
    p = derive_params(1.0, 2)
    assert p.delta == pytest.approx(math.pi / 4, abs=1e-15)
    oracle = math.cos(math.pi / 8) * (math.tan(math.pi / 8) + 1.0) / math.tan(3 * math.pi / 8)
    assert p.c_lower == pytest.approx(oracle, rel=1e-14)
    assert p.c_lower == pytest.approx(0.54120, abs=5e-6)
    assert p.M0 == pytest.approx(1.0 / math.sin(math.pi / 8), rel=1e-14)
    assert p.M0 == pytest.approx(2.6131, abs=5e-5)


def test_tangent_subtraction_identity():
    # 1 + tan(delta/n) tan(delta - pi/2) equals the quotient form; both sides
    # evaluated independently at (M=1, n=2)
    delta, n = math.pi / 4, 2
    lhs = 1.0 + math.tan(delta / n) * math.tan(delta - math.pi / 2)
    rhs = (math.tan(delta / n) + math.tan(math.pi / 2 - delta)) / math.tan(
        math.pi / 2 - delta * (n - 1) / n
    )
    assert lhs == pytest.approx(1.0 - math.tan(math.pi / 8), abs=1e-15)
    assert lhs == pytest.approx(0.58579, abs=5e-6)
    assert lhs == pytest.approx(rhs, rel=1e-14)
    # c_lower computed through the quotient matches the simple product form
    p = derive_params(1.0, 2)
    assert p.c_lower == pytest.approx(math.cos(delta / n) * lhs, rel=1e-14)


def test_params_delta_relation_and_errors():
    for m in (0.0, 0.5, 2.0, 10.0):
        p = derive_params(m, 3)
        assert p.delta == pytest.approx(math.pi / 2 - math.atan(m), abs=1e-15)
        assert p.c_lower > 0
        assert p.M0 >= 1.0
    with pytest.raises(OutOfRangeError):
        derive_params(-0.5, 2)
    with pytest.raises(OutOfRangeError):
        derive_params(math.nan, 2)
    with pytest.raises(OutOfRangeError):
        derive_params(1.0, 1)
    with pytest.raises(OutOfRangeError):
        params_from_delta(2.0, 2)  # delta > pi/2


def test_c_lower_monotone_toward_convex_limit():
    # as M decreases to 0, c_lower(n=2) increases to sqrt(2)/2 from below
    values = [derive_params(m, 2).c_lower for m in (8.0, 4.0, 2.0, 1.0, 0.5, 0.25, 0.0)]
    assert all(b > a for a, b in zip(values, values[1:]))
    assert values[-1] == pytest.approx(math.sqrt(2) / 2, abs=1e-14)
    assert all(v <= math.sqrt(2) / 2 + 1e-14 for v in values)


def test_apply_rotation_flat():
    spec = GridSpec.centered(2, 9, 1.0)
    u = ScalarField(spec, np.zeros(spec.shape))
    p = derive_params(0.0, 2)
    t_field, dt_field = apply_rotation(u, p)
    c = math.cos(p.delta / 2)
    assert np.abs(t_field.values - c * spec.meshcoords()).max() < 1e-14
    assert np.abs(dt_field.to_full() - c * np.eye(2)).max() < 1e-14


def test_apply_rotation_isotropic_quadratic():
    # u = |x|^2/2, M = 0: T = (cos(pi/4) + sin(pi/4)) x = sqrt(2) x, DT = sqrt(2) I
    spec = GridSpec.centered(2, 9, 1.0)
    u = quadratic_field(spec, np.eye(2))
    p = derive_params(0.0, 2)
    t_field, dt_field = apply_rotation(u, p)
    assert np.abs(t_field.values - math.sqrt(2) * spec.meshcoords()).max() < 1e-12
    assert np.abs(dt_field.to_full() - math.sqrt(2) * np.eye(2)).max() < 1e-12


def test_apply_rotation_extremal_quadratic_eigenvalues():
    # H = diag(1, -tan(pi/8)) with M = tan(pi/8): delta = 3 pi/8 and the DT
    # eigenvalues are cos(3pi/16) + sin(3pi/16) and cos(3pi/16) - sin(3pi/16) tan(pi/8)
    m = math.tan(math.pi / 8)
    spec = GridSpec.centered(2, 9, 1.0)
    u = quadratic_field(spec, np.diag([1.0, -m]))
    p = derive_params(m, 2)
    assert p.delta == pytest.approx(3 * math.pi / 8, rel=1e-15)
    _, dt_field = apply_rotation(u, p)
    a = p.delta / 2
    lam1 = math.cos(a) + math.sin(a)
    lam2 = math.cos(a) - math.sin(a) * m
    full = dt_field.to_full()
    assert np.abs(full[..., 0, 0] - lam1).max() < 1e-11
    assert np.abs(full[..., 1, 1] - lam2).max() < 1e-11
    # extremal case: the smaller DT eigenvalue sits exactly at c_lower
    assert lam2 == pytest.approx(p.c_lower, rel=1e-14)


def test_certify_flat_passes_with_unit_metric():
    spec = GridSpec.centered(2, 11, 1.0)
    u = ScalarField(spec, np.zeros(spec.shape))
    for m in (0.0, 1.0):
        cert = certify(u, derive_params(m, 2))
        assert cert.passed
        interior = DomainMask.box(spec).interior
        assert np.abs(cert.metric_min[interior] - 1.0).max() < 1e-12
        assert np.abs(cert.metric_max[interior] - 1.0).max() < 1e-12


def test_certify_strongly_convex_quadratic():
    # u = 5 |x|^2, M = 0: B = 10 I / (cos(pi/4) + 10 sin(pi/4)), eigenvalue
    # 10 sqrt(2) / 11 ~ 1.28565 < M0 = sqrt(2); metric 1 + b^2 ~ 2.65289 < 3
    spec = GridSpec.centered(2, 11, 1.0)
    u = quadratic_field(spec, 10.0 * np.eye(2))
    p = derive_params(0.0, 2)
    cert = certify(u, p)
    assert cert.passed
    b_oracle = 10.0 / (math.cos(math.pi / 4) + 10.0 * math.sin(math.pi / 4))
    assert b_oracle == pytest.approx(10.0 * math.sqrt(2) / 11.0, rel=1e-15)
    assert b_oracle == pytest.approx(1.2856486930664501, rel=1e-12)
    interior = DomainMask.box(spec).interior
    assert np.abs(cert.b_max[interior] - b_oracle).max() < 1e-10
    assert b_oracle < p.M0
    metric_oracle = 1.0 + b_oracle**2
    assert metric_oracle == pytest.approx(2.652892561983471, rel=1e-12)
    assert np.abs(cert.metric_max[interior] - metric_oracle).max() < 1e-9
    assert metric_oracle < p.metric_upper


def test_certify_fails_on_semiconvexity_violation():
    # Hessian eigenvalue -2M violates D2u + M I >= 0
    spec = GridSpec.centered(2, 11, 1.0)
    m = 1.0
    u = quadratic_field(spec, np.diag([-2.0 * m, 0.5]))
    cert = certify(u, derive_params(m, 2))
    assert not cert.passed
    assert not cert.semiconvex_ok
    point, value = cert.worst["hessian_min_eig"]
    assert value == pytest.approx(-2.0 * m, abs=1e-10)
    assert len(point) == 2


def test_certificate_lines_roundtrip_keys():
    spec = GridSpec.centered(2, 9, 1.0)
    cert = certify(ScalarField(spec, np.zeros(spec.shape)), derive_params(0.0, 2))
    keys = [k for k, _ in cert.to_lines()]
    assert "rotation.c_lower" in keys
    assert "certificate.passed" in keys
    assert any(k.startswith("certificate.worst.") for k in keys)


def test_scalar_b_map_monotone_with_supremum():
    # t -> t / (cos(a) + sin(a) t) increases on the admissible range and
    # approaches 1/sin(a) from below
    p = derive_params(1.0, 2)
    a = p.delta / p.n
    c, s = math.cos(a), math.sin(a)
    ts = np.linspace(-p.M, 1e6, 10001)
    b = ts / (c + s * ts)
    assert np.all(np.diff(b) > 0)
    assert b.max() <= p.M0
    assert np.abs(b).max() <= p.M0


def test_rotated_map_injective_on_grid_when_certified():
    spec = GridSpec.centered(2, 7, 1.0)
    x = spec.meshcoords()
    u = ScalarField(spec, 0.5 * (x[..., 0] ** 2 + x[..., 1] ** 2) + 0.05 * np.sin(x[..., 0] * 2))
    m = estimate_semiconvexity(u)
    p = derive_params(m, 2)
    cert = certify(u, p)
    assert cert.passed
    t_field, _ = apply_rotation(u, p)
    pts = t_field.values.reshape(-1, 2)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    np.fill_diagonal(dist, np.inf)
    assert dist.min() > spec.h * p.c_lower / 2


def test_estimate_semiconvexity_margin():
    spec = GridSpec.centered(2, 9, 1.0)
    u = quadratic_field(spec, np.diag([-0.5, 2.0]))
    m = estimate_semiconvexity(u)
    assert m == pytest.approx(0.5 + 1e-6, abs=1e-9)
    convex = quadratic_field(spec, np.eye(2))
    assert estimate_semiconvexity(convex) == pytest.approx(1e-6, abs=1e-9)
