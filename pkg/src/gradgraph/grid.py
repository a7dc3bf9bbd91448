"""Uniform box grids in R^n, fields on them, and finite-difference calculus.

Point data lives in numpy arrays whose leading axes are the grid axes with
axis 0 slowest, i.e. exactly the row-major order of the text dump format.
Component axes (vector entries, matrix upper triangles) come last.

Derivatives use central differences wherever the stencil fits and one-sided
second-order formulas on the box faces; the one-sided values are diagnostic
only, every solve and quadrature in this package restricts itself to points
whose central stencils are valid.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, InvalidInputError

EXTERIOR = 0
LAYER = 1
INTERIOR = 2

_MAX_DIM = 4
_MIN_POINTS = 5


def tri_size(n: int) -> int:
    """Number of entries in the upper triangle of a symmetric n x n matrix."""
    return n * (n + 1) // 2


def tri_pairs(n: int) -> list[tuple[int, int]]:
    """Index pairs (i, j), i <= j, in the storage order of SymMatrixField."""
    return [(i, j) for i in range(n) for j in range(i, n)]


@dataclasses.dataclass(frozen=True)
class GridSpec:
    """Geometry of a uniform grid over a box.

    All axes share one spacing ``h``; the coordinate of index k along axis i
    is ``origin[i] + k * h``.
    """

    n: int
    points_per_axis: tuple[int, ...]
    h: float
    origin: tuple[float, ...]

    def __post_init__(self):
        if not isinstance(self.n, int) or not 1 <= self.n <= _MAX_DIM:
            raise ConfigurationError(f"dimension must be an integer in 1..{_MAX_DIM}, got {self.n!r}")
        counts = tuple(int(c) for c in self.points_per_axis)
        if len(counts) != self.n:
            raise ConfigurationError(f"expected {self.n} axis counts, got {len(counts)}")
        if any(c < _MIN_POINTS for c in counts):
            raise ConfigurationError(f"need at least {_MIN_POINTS} points per axis, got {counts}")
        if not (np.isfinite(self.h) and self.h > 0):
            raise ConfigurationError(f"grid spacing must be positive and finite, got {self.h!r}")
        origin = tuple(float(x) for x in self.origin)
        if len(origin) != self.n or not all(np.isfinite(x) for x in origin):
            raise ConfigurationError(f"origin must be {self.n} finite coordinates, got {self.origin!r}")
        object.__setattr__(self, "points_per_axis", counts)
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "origin", origin)

    @classmethod
    def centered(cls, n: int, points_per_axis: int, half_width: float) -> "GridSpec":
        """Box [-half_width, half_width]^n with the given point count per axis."""
        m = int(points_per_axis)
        h = 2.0 * half_width / (m - 1)
        return cls(n, (m,) * n, h, (-float(half_width),) * n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points_per_axis

    @property
    def point_count(self) -> int:
        return int(np.prod(self.points_per_axis))

    def coordinates(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.h * np.arange(self.points_per_axis[axis])

    def axes(self) -> list[np.ndarray]:
        return [self.coordinates(i) for i in range(self.n)]

    def upper(self) -> tuple[float, ...]:
        return tuple(self.origin[i] + self.h * (self.points_per_axis[i] - 1) for i in range(self.n))

    def center(self) -> tuple[float, ...]:
        hi = self.upper()
        return tuple(0.5 * (self.origin[i] + hi[i]) for i in range(self.n))

    def meshcoords(self) -> np.ndarray:
        """Coordinates of every grid point, shape ``shape + (n,)``."""
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(grids, axis=-1)

    def radius_squared(self, center=None) -> np.ndarray:
        """Squared Euclidean distance of each point from ``center`` (default box center)."""
        c = np.asarray(self.center() if center is None else center, dtype=float)
        if c.shape != (self.n,):
            raise ConfigurationError(f"center must have {self.n} coordinates")
        diff = self.meshcoords() - c
        return np.einsum("...i,...i->...", diff, diff)


def _as_values(arr, shape, what: str) -> np.ndarray:
    v = np.ascontiguousarray(arr, dtype=np.float64)
    if v.shape != shape:
        raise InvalidInputError(f"{what}: expected value shape {shape}, got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{what}: values must be finite")
    return v


@dataclasses.dataclass
class ScalarField:
    """One real value per grid point."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = _as_values(self.values, self.spec.shape, "ScalarField")

    def copy(self) -> "ScalarField":
        return ScalarField(self.spec, self.values.copy())

    @classmethod
    def from_function(cls, spec: GridSpec, fn) -> "ScalarField":
        """Sample ``fn`` (mapping a ``shape + (n,)`` coordinate array to values)."""
        return cls(spec, np.asarray(fn(spec.meshcoords()), dtype=float))

    def dump(self, path) -> None:
        dump_field(self, path)


@dataclasses.dataclass
class VectorField:
    """n real components per grid point, components on the last axis."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = _as_values(self.values, self.spec.shape + (self.spec.n,), "VectorField")

    def copy(self) -> "VectorField":
        return VectorField(self.spec, self.values.copy())

    def dump(self, path) -> None:
        dump_field(self, path)


@dataclasses.dataclass
class SymMatrixField:
    """Symmetric n x n matrix per grid point, stored as the upper triangle.

    Storage order along the component axis is row-major over pairs (i, j)
    with i <= j, see :func:`tri_pairs`; reconstruction through
    :meth:`to_full` is symmetric by construction.
    """

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = _as_values(self.values, self.spec.shape + (tri_size(self.spec.n),), "SymMatrixField")

    def copy(self) -> "SymMatrixField":
        return SymMatrixField(self.spec, self.values.copy())

    def to_full(self) -> np.ndarray:
        """Expand to full matrices, shape ``shape + (n, n)``."""
        n = self.spec.n
        out = np.empty(self.spec.shape + (n, n))
        for k, (i, j) in enumerate(tri_pairs(n)):
            out[..., i, j] = self.values[..., k]
            out[..., j, i] = self.values[..., k]
        return out

    @classmethod
    def from_full(cls, spec: GridSpec, full: np.ndarray) -> "SymMatrixField":
        """Take the upper triangle of full matrices (shape ``shape + (n, n)``)."""
        n = spec.n
        full = np.asarray(full, dtype=float)
        tri = np.empty(spec.shape + (tri_size(n),))
        for k, (i, j) in enumerate(tri_pairs(n)):
            tri[..., k] = full[..., i, j]
        return cls(spec, tri)

    @classmethod
    def constant(cls, spec: GridSpec, matrix: np.ndarray) -> "SymMatrixField":
        """The same symmetric matrix at every grid point."""
        matrix = np.asarray(matrix, dtype=float)
        full = np.broadcast_to(matrix, spec.shape + (spec.n, spec.n))
        return cls.from_full(spec, full)

    def dump(self, path) -> None:
        dump_field(self, path)


def identity_tri(n: int) -> np.ndarray:
    """Upper-triangle representation of the n x n identity."""
    tri = np.zeros(tri_size(n))
    for k, (i, j) in enumerate(tri_pairs(n)):
        if i == j:
            tri[k] = 1.0
    return tri


@dataclasses.dataclass
class DomainMask:
    """Interior / boundary-layer / exterior classification of grid points.

    The interior is the erosion of the masked region by ``depth`` rings in
    the Chebyshev metric, so every interior point carries its full
    depth-``depth`` neighborhood inside interior + layer; second-difference
    stencils of interior points never read exterior points, and the two
    frozen rings pin both the value and the normal increment of a field,
    which is what a second-order integrand needs for fixed boundary data.
    """

    spec: GridSpec
    kind: np.ndarray
    depth: int = 2

    def __post_init__(self):
        kind = np.ascontiguousarray(self.kind, dtype=np.uint8)
        if kind.shape != self.spec.shape:
            raise ConfigurationError("mask classification shape does not match the grid")
        if not np.any(kind == INTERIOR):
            raise ConfigurationError("mask has no interior points")
        self.kind = kind

    @classmethod
    def from_region(cls, spec: GridSpec, region: np.ndarray, depth: int = 2) -> "DomainMask":
        region = np.asarray(region, dtype=bool)
        structure = np.ones((3,) * spec.n, dtype=bool)
        interior = ndimage.binary_erosion(region, structure=structure, iterations=depth, border_value=0)
        if not interior.any():
            raise ConfigurationError("region too small: erosion by the boundary layer leaves no interior")
        kind = np.where(interior, INTERIOR, np.where(region, LAYER, EXTERIOR)).astype(np.uint8)
        return cls(spec, kind, depth)

    @classmethod
    def box(cls, spec: GridSpec, depth: int = 2) -> "DomainMask":
        return cls.from_region(spec, np.ones(spec.shape, dtype=bool), depth)

    @classmethod
    def ball(cls, spec: GridSpec, radius: float, center=None, depth: int = 2) -> "DomainMask":
        region = spec.radius_squared(center) <= float(radius) ** 2
        return cls.from_region(spec, region, depth)

    @property
    def interior(self) -> np.ndarray:
        return self.kind == INTERIOR

    @property
    def layer(self) -> np.ndarray:
        return self.kind == LAYER

    @property
    def exterior(self) -> np.ndarray:
        return self.kind == EXTERIOR

    @property
    def inside(self) -> np.ndarray:
        return self.kind != EXTERIOR

    @property
    def interior_count(self) -> int:
        return int(np.count_nonzero(self.kind == INTERIOR))

    @property
    def quadrature(self) -> np.ndarray:
        """Interior plus its one-point ring: every point whose central Hessian
        stencil both fits inside the mask and responds to interior values."""
        structure = np.ones((3,) * self.spec.n, dtype=bool)
        return ndimage.binary_dilation(self.interior, structure=structure) & self.inside

    @property
    def ring(self) -> np.ndarray:
        """First layer ring: layer points read by interior difference stencils."""
        structure = np.ones((3,) * self.spec.n, dtype=bool)
        return ndimage.binary_dilation(self.interior, structure=structure) & self.layer

    def validate(self) -> None:
        """Check the stencil-closure invariant (used by tests)."""
        structure = np.ones((3,) * self.spec.n, dtype=bool)
        reach = ndimage.binary_dilation(self.interior, structure=structure, iterations=self.depth)
        if np.any(reach & self.exterior):
            raise ConfigurationError("interior stencil neighborhood leaks into the exterior")


def gradient(u: ScalarField) -> VectorField:
    """First derivatives: central differences, one-sided second order at faces."""
    spec = u.spec
    if min(spec.points_per_axis) < 3:
        raise ConfigurationError("gradient needs at least 3 points per axis")
    if spec.n == 1:
        parts = [np.gradient(u.values, spec.h, edge_order=2)]
    else:
        parts = np.gradient(u.values, spec.h, edge_order=2)
    return VectorField(spec, np.stack(parts, axis=-1))


def _second_derivative(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    h2 = h * h
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h2
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2
    out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h2
    return np.moveaxis(out, 0, axis)


def hessian(u: ScalarField) -> SymMatrixField:
    """Second derivatives: 3-point second differences on the diagonal, the
    4-point centered cross stencil /(4h^2) off the diagonal; exact on
    quadratics up to roundoff. Face points fall back to one-sided
    second-order variants."""
    spec = u.spec
    if min(spec.points_per_axis) < _MIN_POINTS:
        raise ConfigurationError(f"hessian needs at least {_MIN_POINTS} points per axis")
    n, h = spec.n, spec.h
    tri = np.empty(spec.shape + (tri_size(n),))
    first = {i: np.gradient(u.values, h, axis=i, edge_order=2) for i in range(n)}
    for k, (i, j) in enumerate(tri_pairs(n)):
        if i == j:
            tri[..., k] = _second_derivative(u.values, i, h)
        else:
            tri[..., k] = np.gradient(first[i], h, axis=j, edge_order=2)
    return SymMatrixField(spec, tri)


def _axis_slices(axis: int, nd: int):
    def at(s):
        sl = [slice(None)] * nd
        sl[axis] = s
        return tuple(sl)

    return at(slice(1, -1)), at(slice(2, None)), at(slice(None, -2))


def central_hessian_full(values: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Central-stencil Hessian as full matrices, zero where the stencil does
    not fit (the outermost ring of the box)."""
    n, h = spec.n, spec.h
    out = np.zeros(spec.shape + (n, n))
    inv_h2 = 1.0 / (h * h)
    for i in range(n):
        c, p, m = _axis_slices(i, n)
        out[(*c, i, i)] = (values[p] - 2.0 * values[c] + values[m]) * inv_h2
    for i in range(n):
        for j in range(i + 1, n):
            def pair(si, sj):
                sl = [slice(None)] * n
                sl[i], sl[j] = si, sj
                return tuple(sl)

            cc = pair(slice(1, -1), slice(1, -1))
            v = (
                values[pair(slice(2, None), slice(2, None))]
                - values[pair(slice(2, None), slice(None, -2))]
                - values[pair(slice(None, -2), slice(2, None))]
                + values[pair(slice(None, -2), slice(None, -2))]
            ) * (0.25 * inv_h2)
            out[(*cc, i, j)] = v
            out[(*cc, j, i)] = v
    return out


def apply_second_stencil(w: np.ndarray, axis: int, h: float) -> np.ndarray:
    """The 3-point second-difference operator along ``axis`` with zero faces.

    The weight pattern is even in the offset, so this is also its own
    adjoint on zero-padded grid functions.
    """
    out = np.zeros_like(w)
    c, p, m = _axis_slices(axis, w.ndim)
    out[c] = (w[p] - 2.0 * w[c] + w[m]) / (h * h)
    return out


def apply_cross_stencil(w: np.ndarray, axis1: int, axis2: int, h: float) -> np.ndarray:
    """The 4-point centered cross stencil /(4h^2), zero faces, self-adjoint."""
    nd = w.ndim

    def pair(s1, s2):
        sl = [slice(None)] * nd
        sl[axis1], sl[axis2] = s1, s2
        return tuple(sl)

    out = np.zeros_like(w)
    out[pair(slice(1, -1), slice(1, -1))] = (
        w[pair(slice(2, None), slice(2, None))]
        - w[pair(slice(2, None), slice(None, -2))]
        - w[pair(slice(None, -2), slice(2, None))]
        + w[pair(slice(None, -2), slice(None, -2))]
    ) / (4.0 * h * h)
    return out


# ---------------------------------------------------------------------------
# Text dump format
#
#   n=<int>
#   dims=<d0,...>
#   h=<float>
#   origin=<x0,...>
#   <value lines: one value or comma-separated tuple per point, row-major>
#
# Reals are printed with 17 significant digits, which round-trips float64.
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def dumps_field(field) -> str:
    spec = field.spec
    flat = field.values.reshape(spec.point_count, -1)
    lines = [
        f"n={spec.n}",
        "dims=" + ",".join(str(d) for d in spec.points_per_axis),
        f"h={_fmt(spec.h)}",
        "origin=" + ",".join(_fmt(x) for x in spec.origin),
    ]
    lines.extend(",".join(_fmt(v) for v in row) for row in flat)
    return "\n".join(lines) + "\n"


def dump_field(field, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dumps_field(field))


def _parse_header(lines):
    def expect(idx, key):
        if not lines[idx].startswith(key + "="):
            raise InvalidInputError(f"dump header line {idx + 1} must start with '{key}='")
        return lines[idx][len(key) + 1 :]

    n = int(expect(0, "n"))
    dims = tuple(int(d) for d in expect(1, "dims").split(","))
    h = float(expect(2, "h"))
    origin = tuple(float(x) for x in expect(3, "origin").split(","))
    return GridSpec(n, dims, h, origin)


def _load_raw(path):
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if len(lines) < 5:
        raise InvalidInputError("dump file too short")
    spec = _parse_header(lines)
    data = np.array([[float(tok) for tok in ln.split(",")] for ln in lines[4:]])
    if data.shape[0] != spec.point_count:
        raise InvalidInputError(f"expected {spec.point_count} value lines, got {data.shape[0]}")
    return spec, data


def load_scalar_field(path) -> ScalarField:
    spec, data = _load_raw(path)
    if data.shape[1] != 1:
        raise InvalidInputError(f"scalar dump must have 1 value per line, got {data.shape[1]}")
    return ScalarField(spec, data.reshape(spec.shape))


def load_vector_field(path) -> VectorField:
    spec, data = _load_raw(path)
    if data.shape[1] != spec.n:
        raise InvalidInputError(f"vector dump must have {spec.n} values per line, got {data.shape[1]}")
    return VectorField(spec, data.reshape(spec.shape + (spec.n,)))


def load_sym_matrix_field(path) -> SymMatrixField:
    spec, data = _load_raw(path)
    k = tri_size(spec.n)
    if data.shape[1] != k:
        raise InvalidInputError(f"matrix dump must have {k} values per line, got {data.shape[1]}")
    return SymMatrixField(spec, data.reshape(spec.shape + (k,)))
