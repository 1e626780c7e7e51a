"""The two-well periodic landscape, its study region and the f = 0 cell grid.

The builtin field is

    f(x, y) = sin(pi x) sin(2 pi x) cos(pi y) cos(2 pi y)

which factors as g(x) * h(y) with g(x) = 2 sin^2(pi x) cos(pi x) and
h(y) = cos(pi y) (2 cos^2(pi y) - 1).  Every quantity the grid needs (zero
lines, cell extrema) is derived from those two univariate factors.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

PI = math.pi

# |g| peaks at cos(pi x) = +-1/sqrt(3); |h| has an interior peak at cos(pi y) = +-1/sqrt(6).
G_PEAK = 4.0 / (3.0 * math.sqrt(3.0))
H_INNER_PEAK = 2.0 / (3.0 * math.sqrt(6.0))

DEEP_DEPTH = G_PEAK
SHALLOW_DEPTH = G_PEAK * H_INNER_PEAK

# A grid line closer than this to a region edge (but not on it) leaves a zero-width cell.
EDGE_TOL = 1e-12


class DegenerateRegionError(ValueError):
    """A region edge sits within EDGE_TOL of a zero line without coinciding with it."""


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"point coordinates must be finite, got ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y


@dataclass(frozen=True)
class Region:
    x_min: float = -1.0
    x_max: float = 1.0
    y_min: float = -1.25
    y_max: float = 1.25

    def __post_init__(self):
        vals = (self.x_min, self.x_max, self.y_min, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("region bounds must be finite")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"empty region {vals}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def contains(self, x, y):
        """Closed-box membership; works elementwise on arrays."""
        return (x >= self.x_min) & (x <= self.x_max) & (y >= self.y_min) & (y <= self.y_max)


class ScalarField(Protocol):
    """Anything descent can run on: array-friendly value and gradient."""

    def value(self, x, y): ...

    def gradient(self, x, y): ...


class BuiltinField:
    """The fixed landscape with its closed-form gradient.

    ``value``/``gradient`` broadcast over numpy arrays; ``eval``/``grad`` take
    a :class:`Point2`.
    """

    def value(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.sin(PI * x) * np.sin(2 * PI * x) * np.cos(PI * y) * np.cos(2 * PI * y)

    def gradient(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        sx, cx = np.sin(PI * x), np.cos(PI * x)
        sy, cy = np.sin(PI * y), np.cos(PI * y)
        g = 2.0 * sx * sx * cx
        dg = 2.0 * PI * sx * (3.0 * cx * cx - 1.0)
        h = cy * (2.0 * cy * cy - 1.0)
        dh = -PI * sy * (6.0 * cy * cy - 1.0)
        return dg * h, g * dh

    def eval(self, p: Point2) -> float:
        return float(self.value(p.x, p.y))

    def grad(self, p: Point2) -> Point2:
        gx, gy = self.gradient(p.x, p.y)
        return Point2(float(gx), float(gy))

    # univariate factors, used by the grid builder
    @staticmethod
    def factor_x(x: float) -> float:
        return math.sin(PI * x) * math.sin(2 * PI * x)

    @staticmethod
    def factor_y(y: float) -> float:
        return math.cos(PI * y) * math.cos(2 * PI * y)

    def __eq__(self, other):
        return isinstance(other, BuiltinField)

    def __hash__(self):
        return hash(BuiltinField)

    def __repr__(self):
        return "BuiltinField()"


class CellKind(enum.Enum):
    DEEP_WELL = "DeepWell"
    SHALLOW_WELL = "ShallowWell"
    HILL = "Hill"

    @property
    def is_well(self) -> bool:
        return self is not CellKind.HILL


@dataclass(frozen=True)
class CellClass:
    kind: CellKind
    min_value: float


@dataclass(frozen=True)
class CellGrid:
    """Product partition of a region by the zero lines of f.

    ``x_lines``/``y_lines`` include the region edges.  ``cells[i][j]`` covers
    ``[x_lines[i], x_lines[i+1]) x [y_lines[j], y_lines[j+1])``.
    """

    region: Region
    x_lines: tuple[float, ...]
    y_lines: tuple[float, ...]
    cells: tuple[tuple[CellClass, ...], ...]
    deep_depth: float = DEEP_DEPTH
    shallow_depth: float = SHALLOW_DEPTH
    _xl: np.ndarray = field(init=False, repr=False, compare=False)
    _yl: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_xl", np.asarray(self.x_lines, dtype=float))
        object.__setattr__(self, "_yl", np.asarray(self.y_lines, dtype=float))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.x_lines) - 1, len(self.y_lines) - 1

    def bounds(self, i: int, j: int) -> tuple[float, float, float, float]:
        return self.x_lines[i], self.x_lines[i + 1], self.y_lines[j], self.y_lines[j + 1]

    def kind(self, i: int, j: int) -> CellKind:
        return self.cells[i][j].kind

    def iter_cells(self):
        nx, ny = self.shape
        for i in range(nx):
            for j in range(ny):
                yield i, j, self.cells[i][j]

    def locate(self, x, y):
        """Vectorised cell lookup: returns (i, j, inside) arrays; i, j are -1 outside."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        nx, ny = self.shape
        inside = self.region.contains(x, y)
        i = np.searchsorted(self._xl, x, side="right") - 1
        j = np.searchsorted(self._yl, y, side="right") - 1
        # the far edge belongs to the last cell
        i = np.minimum(i, nx - 1)
        j = np.minimum(j, ny - 1)
        i = np.where(inside, i, -1)
        j = np.where(inside, j, -1)
        return i, j, inside


def cell_of(grid: CellGrid, p: Point2) -> tuple[int, int] | None:
    """Index of the half-open cell containing ``p``, or None outside the region."""
    i, j, inside = grid.locate(p.x, p.y)
    if not bool(inside):
        return None
    return int(i), int(j)


def _zeros_in(lo: float, hi: float, offset: float, spacing: float) -> list[float]:
    """Points offset + k*spacing lying in [lo, hi]."""
    k0 = math.ceil((lo - offset) / spacing - 1e-9)
    k1 = math.floor((hi - offset) / spacing + 1e-9)
    pts = [offset + k * spacing for k in range(k0, k1 + 1)]
    return [p for p in pts if lo - EDGE_TOL <= p <= hi + EDGE_TOL]


def _grid_lines(lo: float, hi: float, zeros: list[float]) -> tuple[float, ...]:
    lines = {lo, hi}
    for z in zeros:
        if z == lo or z == hi:
            continue
        if abs(z - lo) < EDGE_TOL or abs(z - hi) < EDGE_TOL:
            raise DegenerateRegionError(
                f"zero line at {z!r} is within {EDGE_TOL} of region edge [{lo!r}, {hi!r}]; nudge the region"
            )
        if lo < z < hi:
            lines.add(z)
    return tuple(sorted(lines))


def _critical_points(lo: float, hi: float, half_angles: list[float]) -> list[float]:
    """Interior points where cos(pi t) = cos(pi a) for a in half_angles, or sin(pi t) = 0."""
    pts = []
    for a in half_angles + [0.0, 1.0]:
        for base in (a, -a):
            pts.extend(t for t in _zeros_in(lo, hi, base, 2.0) if lo < t < hi)
    return pts


def _factor_range(fn, lo: float, hi: float, half_angles: list[float]) -> tuple[float, float]:
    """Exact min/max of a factor over [lo, hi] from its endpoints and interior critical points."""
    ends = [fn(lo), fn(hi)]
    # edges are usually zero lines; drop the ~1e-16 residue of sin(k pi)
    ends = [0.0 if abs(v) < 1e-12 else v for v in ends]
    vals = ends + [fn(t) for t in _critical_points(lo, hi, half_angles)]
    return min(vals), max(vals)


# cos(pi t) values at the interior extrema of each factor
_G_CRIT = [math.acos(1 / math.sqrt(3)) / PI, math.acos(-1 / math.sqrt(3)) / PI]
_H_CRIT = [math.acos(1 / math.sqrt(6)) / PI, math.acos(-1 / math.sqrt(6)) / PI]


def separable_min(g_range: tuple[float, float], h_range: tuple[float, float]) -> float:
    """Minimum of g*h over a box given the ranges of each factor."""
    return min(a * b for a in g_range for b in h_range)


def classify_cell(center_value: float, min_value: float, deep: float, shallow: float) -> CellKind:
    if center_value >= 0:
        return CellKind.HILL
    depth = -min_value
    return CellKind.DEEP_WELL if abs(depth - deep) <= abs(depth - shallow) else CellKind.SHALLOW_WELL


def build_cell_grid(field: BuiltinField | None = None, region: Region | None = None) -> CellGrid:
    """Partition ``region`` along the zero lines of the builtin field and label each cell."""
    field = field or BuiltinField()
    region = region or Region()
    # sin(pi x) sin(2 pi x) vanishes on multiples of 1/2; cos(pi y) cos(2 pi y) on 1/2 + k and 1/4 + k/2
    xz = _zeros_in(region.x_min, region.x_max, 0.0, 0.5)
    yz = _zeros_in(region.y_min, region.y_max, 0.5, 1.0) + _zeros_in(region.y_min, region.y_max, 0.25, 0.5)
    x_lines = _grid_lines(region.x_min, region.x_max, xz)
    y_lines = _grid_lines(region.y_min, region.y_max, yz)

    g_ranges = [_factor_range(field.factor_x, a, b, _G_CRIT) for a, b in zip(x_lines, x_lines[1:])]
    h_ranges = [_factor_range(field.factor_y, a, b, _H_CRIT) for a, b in zip(y_lines, y_lines[1:])]
    cells = []
    for i, (xa, xb) in enumerate(zip(x_lines, x_lines[1:])):
        col = []
        for j, (ya, yb) in enumerate(zip(y_lines, y_lines[1:])):
            lo = separable_min(g_ranges[i], h_ranges[j]) + 0.0  # no -0.0
            centre = field.eval(Point2(0.5 * (xa + xb), 0.5 * (ya + yb)))
            col.append(CellClass(classify_cell(centre, lo, DEEP_DEPTH, SHALLOW_DEPTH), lo))
        cells.append(tuple(col))
    return CellGrid(region, x_lines, y_lines, tuple(cells))


class NonSeparableFieldError(ValueError):
    """The cell grid needs f(x, y) = g(x) h(y); the field failed that check."""


_SCAN_STEP = 1e-4
_NUMERIC_EDGE_SNAP = 1e-9


def _scan(fn, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    n = max(int(math.ceil((hi - lo) / _SCAN_STEP)), 2) + 1
    t = np.linspace(lo, hi, n)
    return t, np.asarray(fn(t), dtype=float)


def _numeric_zeros(fn, lo: float, hi: float, scale: float) -> list[float]:
    from scipy.optimize import brentq, minimize_scalar

    t, v = _scan(fn, lo, hi)
    tiny = 1e-10 * scale
    zeros = [float(tk) for tk, vk in zip(t, v) if abs(vk) <= tiny]
    for k in np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]:
        zeros.append(brentq(lambda s: float(fn(s)), t[k], t[k + 1], xtol=1e-15))
    # double roots (touching zeros) never change sign; look for dips of |f| to zero
    a = np.abs(v)
    for k in range(1, len(t) - 1):
        if a[k] <= a[k - 1] and a[k] <= a[k + 1] and a[k] > tiny and np.sign(v[k - 1]) == np.sign(v[k + 1]):
            res = minimize_scalar(lambda s: abs(float(fn(s))), bounds=(t[k - 1], t[k + 1]),
                                  method="bounded", options={"xatol": 1e-14})
            if abs(res.fun) <= 1e-8 * scale:
                zeros.append(float(res.x))
    out: list[float] = []
    for z in sorted(zeros):
        if abs(z - lo) < _NUMERIC_EDGE_SNAP:
            z = lo
        elif abs(z - hi) < _NUMERIC_EDGE_SNAP:
            z = hi
        if not out or z - out[-1] > _NUMERIC_EDGE_SNAP:
            out.append(z)
    return out


def _numeric_range(fn, lo: float, hi: float) -> tuple[float, float]:
    from scipy.optimize import minimize_scalar

    t, v = _scan(fn, lo, hi)
    result = []
    for sign, k in ((1.0, int(np.argmin(v))), (-1.0, int(np.argmax(v)))):
        best = float(v[k])
        a, b = t[max(k - 1, 0)], t[min(k + 1, len(t) - 1)]
        res = minimize_scalar(lambda s: sign * float(fn(s)), bounds=(a, b),
                              method="bounded", options={"xatol": 1e-14})
        cand = sign * float(res.fun)
        best = min(best, cand) if sign > 0 else max(best, cand)
        result.append(best)
    lo_v, hi_v = result
    return (0.0 if abs(lo_v) < 1e-12 else lo_v), (0.0 if abs(hi_v) < 1e-12 else hi_v)


def build_cell_grid_numeric(field: ScalarField, region: Region | None = None, seed: int = 0) -> CellGrid:
    """Cell grid for an arbitrary separable field (e.g. a parsed expression).

    The factors are recovered as g(x) = f(x, y0) and h(y) = f(x0, y) / f(x0, y0)
    around the largest-|f| point of a coarse scan.  Zero lines and cell extrema
    come from a 1e-4 scan refined with scipy.  Well depths are split into deep
    and shallow around the deepest and the shallowest well found.
    """
    region = region or Region()
    xs = np.linspace(region.x_min, region.x_max, 201)
    ys = np.linspace(region.y_min, region.y_max, 201)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    F = np.asarray(field.value(X, Y), dtype=float)
    if not np.all(np.isfinite(F)):
        raise ValueError("field is not finite everywhere on the region")
    k = np.unravel_index(int(np.argmax(np.abs(F))), F.shape)
    x0, y0, f0 = float(X[k]), float(Y[k]), float(F[k])
    scale = abs(f0)
    if scale == 0.0:
        raise NonSeparableFieldError("field vanishes on the whole region")

    rng = np.random.default_rng(seed)
    px = rng.uniform(region.x_min, region.x_max, 400)
    py = rng.uniform(region.y_min, region.y_max, 400)
    lhs = np.asarray(field.value(px, py)) * f0
    rhs = np.asarray(field.value(px, np.full_like(py, y0))) * np.asarray(field.value(np.full_like(px, x0), py))
    if np.max(np.abs(lhs - rhs)) > 1e-9 * scale * scale:
        raise NonSeparableFieldError("field is not a product g(x) * h(y); the f = 0 set is not a grid")

    def gfn(t):
        return field.value(t, np.full_like(np.asarray(t, dtype=float), y0))

    def hfn(t):
        return np.asarray(field.value(np.full_like(np.asarray(t, dtype=float), x0), t)) / f0

    x_lines = tuple(sorted({region.x_min, region.x_max, *_numeric_zeros(gfn, region.x_min, region.x_max, scale)}))
    y_lines = tuple(sorted({region.y_min, region.y_max, *_numeric_zeros(hfn, region.y_min, region.y_max, 1.0)}))
    g_ranges = [_numeric_range(gfn, a, b) for a, b in zip(x_lines, x_lines[1:])]
    h_ranges = [_numeric_range(hfn, a, b) for a, b in zip(y_lines, y_lines[1:])]

    mins, centres = {}, {}
    for i, (xa, xb) in enumerate(zip(x_lines, x_lines[1:])):
        for j, (ya, yb) in enumerate(zip(y_lines, y_lines[1:])):
            mins[i, j] = separable_min(g_ranges[i], h_ranges[j]) + 0.0
            centres[i, j] = float(field.value(0.5 * (xa + xb), 0.5 * (ya + yb)))
    depths = [-mins[c] for c in mins if centres[c] < 0]
    deep = max(depths) if depths else DEEP_DEPTH
    shallow = min(depths) if depths else SHALLOW_DEPTH
    cells = tuple(
        tuple(
            CellClass(classify_cell(centres[i, j], mins[i, j], deep, shallow), mins[i, j])
            for j in range(len(y_lines) - 1)
        )
        for i in range(len(x_lines) - 1)
    )
    return CellGrid(region, x_lines, y_lines, cells, deep_depth=deep, shallow_depth=shallow)


def grid_for(field, region: Region | None = None) -> CellGrid:
    """Exact grid for the builtin field, numeric grid for anything else."""
    if isinstance(field, BuiltinField):
        return build_cell_grid(field, region)
    return build_cell_grid_numeric(field, region)
