"""Sampled planar domains, maps sampled on them, and the energy functionals.

Every grid is a tensor-product lattice. Disk-like domains (disk, half-disk,
annulus) are sampled on their bounding box; the domain itself only enters
through the quadrature weights, so derivatives are always taken on a full
rectangular array. Cylinders and strips use coordinates ``(t, theta)`` with
``z = t + i*theta``; the cylinder angle is periodic with period ``2*pi``.

Energy convention: ``energy(u) = integral of |d_x u|^2 + |d_y u|^2``, with no
factor 1/2. Harmonic-map literature usually carries the 1/2; we do not.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional

import numpy as np

KINDS = ("disk", "halfdisk", "annulus", "cylinder", "strip")

# sub-samples per axis when integrating shape indicators over a dual cell
SUPERSAMPLE = 8


class GridError(ValueError):
    """Invalid grid, region, or sample construction."""


@dataclass(frozen=True)
class Grid:
    """A tensor-product sampling of one of the supported planar domains.

    ``params`` is ``(radius,)`` for disk and half-disk, ``(inner, outer)`` for
    the annulus and ``(a, b)`` for cylinder and strip. ``resolution`` is the
    node count along axis 0 (x or t) and axis 1 (y or theta).
    """

    kind: str
    params: tuple
    resolution: tuple

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        object.__setattr__(self, "resolution", tuple(int(r) for r in self.resolution))
        if self.kind not in KINDS:
            raise GridError(f"unknown grid kind {self.kind!r}")
        if len(self.resolution) != 2 or min(self.resolution) < 3:
            raise GridError(f"resolution must have two entries >= 3, got {self.resolution}")
        p = self.params
        if self.kind in ("disk", "halfdisk"):
            if len(p) != 1 or not p[0] > 0:
                raise GridError("disk radius must be positive")
        elif self.kind == "annulus":
            if len(p) != 2 or not 0 < p[0] < p[1]:
                raise GridError("annulus requires 0 < inner < outer")
        else:
            if len(p) != 2 or not p[0] < p[1]:
                raise GridError(f"{self.kind} requires a < b")
        if not all(math.isfinite(v) for v in p):
            raise GridError("grid parameters must be finite")

    # constructors --------------------------------------------------------

    @classmethod
    def disk(cls, radius: float, n: int) -> "Grid":
        return cls("disk", (radius,), (n, n))

    @classmethod
    def half_disk(cls, radius: float, n: int) -> "Grid":
        """Upper half-disk; ``n`` should be odd so both spacings agree."""
        return cls("halfdisk", (radius,), (n, (n + 1) // 2))

    @classmethod
    def annulus(cls, inner: float, outer: float, n: int) -> "Grid":
        return cls("annulus", (inner, outer), (n, n))

    @classmethod
    def cylinder(cls, a: float, b: float, nt: int, ntheta: int) -> "Grid":
        return cls("cylinder", (a, b), (nt, ntheta))

    @classmethod
    def strip(cls, a: float, b: float, nt: int, ntheta: int) -> "Grid":
        return cls("strip", (a, b), (nt, ntheta))

    # geometry -------------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.resolution

    @property
    def size(self) -> int:
        return self.resolution[0] * self.resolution[1]

    @property
    def periodic(self) -> tuple:
        return (False, self.kind == "cylinder")

    @property
    def box(self) -> tuple:
        """Coordinate extent ``((x0, x1), (y0, y1))`` of the sampled rectangle."""
        p = self.params
        if self.kind == "disk":
            return ((-p[0], p[0]), (-p[0], p[0]))
        if self.kind == "halfdisk":
            return ((-p[0], p[0]), (0.0, p[0]))
        if self.kind == "annulus":
            return ((-p[1], p[1]), (-p[1], p[1]))
        if self.kind == "cylinder":
            return ((p[0], p[1]), (0.0, 2 * math.pi))
        return ((p[0], p[1]), (0.0, 1.0))

    @cached_property
    def axes(self) -> tuple:
        (x0, x1), (y0, y1) = self.box
        n0, n1 = self.resolution
        x = np.linspace(x0, x1, n0)
        if self.periodic[1]:
            y = y0 + (y1 - y0) * np.arange(n1) / n1
        else:
            y = np.linspace(y0, y1, n1)
        return x, y

    @property
    def spacing(self) -> tuple:
        (x0, x1), (y0, y1) = self.box
        n0, n1 = self.resolution
        hy = (y1 - y0) / (n1 if self.periodic[1] else n1 - 1)
        return ((x1 - x0) / (n0 - 1), hy)

    @cached_property
    def z(self) -> np.ndarray:
        """Complex node coordinates, shape ``resolution``."""
        x, y = self.axes
        out = x[:, None] + 1j * y[None, :]
        out.flags.writeable = False
        return out

    def signed_distance(self, x, y):
        """Negative inside the domain, positive outside (None for boxes)."""
        p = self.params
        if self.kind == "disk":
            return np.hypot(x, y) - p[0]
        if self.kind == "halfdisk":
            return np.maximum(np.hypot(x, y) - p[0], -y)
        if self.kind == "annulus":
            r = np.hypot(x, y)
            return np.maximum(r - p[1], p[0] - r)
        return None

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weight of every node: dual-cell area inside the domain."""
        w = Region.full(self).weights(self)
        w.flags.writeable = False
        return w

    def node_index(self, point: complex) -> tuple:
        """Index of the node nearest to ``point``."""
        x, y = self.axes
        return int(np.argmin(np.abs(x - point.real))), int(np.argmin(np.abs(y - point.imag)))

    def segment(self, k: int) -> "Region":
        """Unit segment ``[k-1, k]`` of a cylinder or strip, indexed from 1."""
        if self.kind not in ("cylinder", "strip"):
            raise GridError("unit segments exist only on cylinders and strips")
        a = self.params[0]
        x = self.axes[0]
        i0 = int(np.argmin(np.abs(x - (a + k - 1))))
        i1 = int(np.argmin(np.abs(x - (a + k))))
        if abs(x[i0] - (a + k - 1)) > 1e-9 or abs(x[i1] - (a + k)) > 1e-9:
            raise GridError(f"segment {k} is not aligned with grid rows")
        return Region(i0, i1, 0, self.resolution[1] - 1)

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": list(self.params), "resolution": list(self.resolution)}

    @classmethod
    def from_json(cls, d: dict) -> "Grid":
        return cls(d["kind"], tuple(d["params"]), tuple(d["resolution"]))


@dataclass(frozen=True)
class Region:
    """Inclusive index box ``[i0, i1] x [j0, j1]``, optionally cut by a disk.

    With ``radius`` set, only the part of the box inside the disk (or annulus,
    when ``inner > 0``) of that center counts. Weights of adjacent boxes that
    share a row add up to the weights of their union.
    """

    i0: int
    i1: int
    j0: int
    j1: int
    center: complex = 0j
    radius: Optional[float] = None
    inner: float = 0.0
    upper_half: bool = False

    @classmethod
    def full(cls, grid: Grid) -> "Region":
        n0, n1 = grid.resolution
        return cls(0, n0 - 1, 0, n1 - 1)

    @classmethod
    def disk(cls, grid: Grid, center: complex, radius: float, inner: float = 0.0,
             upper_half: bool = False) -> "Region":
        n0, n1 = grid.resolution
        return cls(0, n0 - 1, 0, n1 - 1, complex(center), float(radius), float(inner), upper_half)

    def validate(self, grid: Grid):
        n0, n1 = grid.resolution
        if not (0 <= self.i0 <= self.i1 < n0 and 0 <= self.j0 <= self.j1 < n1):
            raise GridError(f"region {self} is not contained in grid of resolution {grid.resolution}")
        if self.radius is not None and not self.radius > self.inner >= 0:
            raise GridError("region disk needs radius > inner >= 0")

    @property
    def slices(self) -> tuple:
        return slice(self.i0, self.i1 + 1), slice(self.j0, self.j1 + 1)

    def signed_distance(self, x, y):
        sd = np.full(np.broadcast(x, y).shape, -np.inf)
        if self.radius is not None:
            r = np.hypot(x - self.center.real, y - self.center.imag)
            sd = np.maximum(r - self.radius, self.inner - r)
        if self.upper_half:
            sd = np.maximum(sd, -y)
        return sd

    def weights(self, grid: Grid) -> np.ndarray:
        self.validate(grid)
        x, y = grid.axes
        hx, hy = grid.spacing
        xa, xb = x[self.i0], x[self.i1]
        ya, yb = y[self.j0], y[self.j1]
        # dual cells clipped to the coordinate box of the region
        xl = np.clip(x - hx / 2, xa, xb)
        xr = np.clip(x + hx / 2, xa, xb)
        if grid.periodic[1] and self.j0 == 0 and self.j1 == grid.resolution[1] - 1:
            yl, yr = y - hy / 2, y + hy / 2
        else:
            yl = np.clip(y - hy / 2, ya, yb)
            yr = np.clip(y + hy / 2, ya, yb)
        area = np.outer(xr - xl, yr - yl)
        mask = np.zeros(grid.resolution, dtype=bool)
        mask[self.slices] = True
        area = np.where(mask, area, 0.0)

        shapes = []
        if grid.kind in ("disk", "halfdisk", "annulus"):
            shapes.append(grid.signed_distance)
        if self.radius is not None or self.upper_half:
            shapes.append(self.signed_distance)
        if not shapes:
            return area

        def sd(px, py):
            return np.max(np.stack([np.broadcast_to(s(px, py), np.broadcast(px, py).shape)
                                    for s in shapes]), axis=0)

        return area * _inside_fraction(sd, xl, xr, yl, yr, area > 0)


def _inside_fraction(sd: Callable, xl, xr, yl, yr, active) -> np.ndarray:
    """Fraction of each clipped dual cell where ``sd <= 0``, by supersampling.

    Cells whose centre lies farther than half a diagonal from the boundary are
    classified without subsampling.
    """
    cx = 0.5 * (xl + xr)
    cy = 0.5 * (yl + yr)
    half_diag = 0.5 * np.hypot((xr - xl)[:, None], (yr - yl)[None, :])
    d = sd(cx[:, None], cy[None, :])
    frac = np.where(d <= -half_diag, 1.0, 0.0)
    unsure = active & (np.abs(d) < half_diag + 1e-14)
    ii, jj = np.nonzero(unsure)
    if ii.size:
        s = SUPERSAMPLE
        off = (np.arange(s) + 0.5) / s
        px = xl[ii][:, None] + (xr - xl)[ii][:, None] * off[None, :]
        py = yl[jj][:, None] + (yr - yl)[jj][:, None] * off[None, :]
        inside = sd(px[:, :, None], py[:, None, :]) <= 0
        frac[ii, jj] = inside.reshape(ii.size, -1).mean(axis=1)
    return frac


@dataclass(frozen=True, eq=False)
class MapSample:
    """Samples of a map into complex ``n``-space, one vector per grid node.

    ``values`` has shape ``grid.resolution + (n,)``.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.shape[:2] != self.grid.resolution or v.ndim != 3:
            raise GridError(f"values of shape {v.shape} do not match grid {self.grid.resolution}")
        if not np.all(np.isfinite(v)):
            raise GridError("map samples must be finite")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def target_dim(self) -> int:
        return self.values.shape[2]

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable) -> "MapSample":
        """Sample ``fn(z)``; scalar-valued functions give ``n = 1``."""
        return cls(grid, fn(grid.z))

    @classmethod
    def constant(cls, grid: Grid, value) -> "MapSample":
        value = np.atleast_1d(np.asarray(value, dtype=complex))
        return cls(grid, np.broadcast_to(value, grid.resolution + value.shape))

    def with_values(self, values) -> "MapSample":
        return MapSample(self.grid, values)

    def __add__(self, other: "MapSample") -> "MapSample":
        return MapSample(self.grid, self.values + other.values)

    def __sub__(self, other: "MapSample") -> "MapSample":
        return MapSample(self.grid, self.values - other.values)

    def __mul__(self, c) -> "MapSample":
        return MapSample(self.grid, self.values * c)

    __rmul__ = __mul__


class StructureField:
    """Per-node linear complex structure on real ``2n``-space.

    Complex vectors ``a + i b`` are identified with the real vector
    ``(a_1..a_n, b_1..b_n)``, so the standard structure is
    ``[[0, -I], [I, 0]]``.
    """

    def __init__(self, grid: Grid, matrices, structure_tol: float = 1e-10):
        m = np.array(matrices, dtype=float)
        if m.ndim == 2:
            m = np.broadcast_to(m, grid.resolution + m.shape).copy()
        if m.shape[:2] != grid.resolution or m.ndim != 4 or m.shape[2] != m.shape[3] or m.shape[2] % 2:
            raise GridError(f"structure matrices of shape {m.shape} do not fit grid {grid.resolution}")
        defect = np.linalg.norm(m @ m + np.eye(m.shape[2]), ord=2, axis=(2, 3)).max()
        if not defect <= structure_tol:
            raise GridError(f"J^2 + I has operator norm {defect:.3e} > {structure_tol:.1e}")
        m.flags.writeable = False
        self.grid = grid
        self.matrices = m
        self.defect = float(defect)

    @property
    def target_dim(self) -> int:
        return self.matrices.shape[2] // 2

    @classmethod
    def standard(cls, grid: Grid, n: int = 1) -> "StructureField":
        return cls(grid, standard_structure(n))

    @classmethod
    def conjugated(cls, grid: Grid, gauge) -> "StructureField":
        """``P J_st P^{-1}`` for a per-node (or constant) invertible ``P``."""
        p = np.asarray(gauge, dtype=float)
        if p.ndim == 2:
            p = np.broadcast_to(p, grid.resolution + p.shape)
        jst = standard_structure(p.shape[-1] // 2)
        return cls(grid, p @ jst @ np.linalg.inv(p))

    def distance_to_standard(self) -> float:
        """``max`` over nodes of the operator norm of ``J - J_st``."""
        jst = standard_structure(self.target_dim)
        return float(np.linalg.norm(self.matrices - jst, ord=2, axis=(2, 3)).max())

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Apply ``J`` nodewise to a complex field of shape ``(n0, n1, n)``."""
        return from_real(np.einsum("ijab,ijb->ija", self.matrices, to_real(v)))


def standard_structure(n: int) -> np.ndarray:
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, -eye], [eye, zero]])


def to_real(v: np.ndarray) -> np.ndarray:
    return np.concatenate([v.real, v.imag], axis=-1)


def from_real(r: np.ndarray) -> np.ndarray:
    n = r.shape[-1] // 2
    return r[..., :n] + 1j * r[..., n:]


# derivatives and norms ------------------------------------------------------


def gradient(u: MapSample) -> tuple:
    """``(d_x u, d_y u)`` by second-order finite differences.

    Centered in the interior, second-order one-sided at non-periodic edges,
    wrapped on the periodic cylinder angle.
    """
    g = u.grid
    hx, hy = g.spacing
    v = u.values
    dx = np.gradient(v, hx, axis=0, edge_order=2)
    if g.periodic[1]:
        dy = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2 * hy)
    else:
        dy = np.gradient(v, hy, axis=1, edge_order=2)
    return dx, dy


def energy_density(u: MapSample) -> np.ndarray:
    """Pointwise ``|d_x u|^2 + |d_y u|^2`` summed over target components."""
    dx, dy = gradient(u)
    return np.sum(dx.real ** 2 + dx.imag ** 2 + dy.real ** 2 + dy.imag ** 2, axis=-1)


def _region_weights(grid: Grid, region: Optional[Region]) -> np.ndarray:
    return grid.weights if region is None else region.weights(grid)


def energy(u: MapSample, region: Optional[Region] = None) -> float:
    """Squared ``L^2`` norm of ``du`` over ``region`` (whole domain by default)."""
    return float(np.sum(energy_density(u) * _region_weights(u.grid, region)))


def lp_norm_du(u: MapSample, p: float, region: Optional[Region] = None) -> float:
    """``(integral of |du|^p)^(1/p)`` with ``|du|`` the Frobenius norm of ``du``."""
    if not p >= 1 or not math.isfinite(p):
        raise ValueError(f"p must be finite and >= 1, got {p}")
    w = _region_weights(u.grid, region)
    return float(np.sum(energy_density(u) ** (p / 2) * w) ** (1 / p))


def restrict(u: MapSample, region: Region) -> MapSample:
    """Copy ``u`` onto the sub-grid covered by ``region``.

    Cylinders and strips restrict to full-angle row ranges. Disk grids
    restrict to a centered disk whose radius lands on a node.
    """
    g = u.grid
    region.validate(g)
    n0, n1 = g.resolution
    x, y = g.axes
    if g.kind in ("cylinder", "strip"):
        if region.radius is not None or region.j0 != 0 or region.j1 != n1 - 1:
            raise GridError("cylinder/strip restriction needs full-angle row ranges")
        if region.i1 - region.i0 < 2:
            raise GridError("restricted region is empty or too thin")
        sub = Grid(g.kind, (x[region.i0], x[region.i1]), (region.i1 - region.i0 + 1, n1))
        return MapSample(sub, u.values[region.i0:region.i1 + 1])
    if g.kind != "disk" or region.radius is None or region.center != 0:
        raise GridError("disk restriction needs a centered disk region on a disk grid")
    r = region.radius
    i0 = int(np.argmin(np.abs(x + r)))
    i1 = int(np.argmin(np.abs(x - r)))
    if abs(x[i0] + r) > 1e-9 * max(1.0, r) or i1 - i0 < 2:
        raise GridError("restriction radius must land on a node and span >= 3 nodes")
    sub = Grid("disk", (x[i1],), (i1 - i0 + 1, i1 - i0 + 1))
    return MapSample(sub, u.values[i0:i1 + 1, i0:i1 + 1])


# file formats ---------------------------------------------------------------


def write_csv(u: MapSample, path) -> None:
    """Write node samples as CSV plus a ``.json`` sidecar grid descriptor."""
    path = Path(path)
    n = u.target_dim
    cols = ["t", "theta"] + [f"{p}{k}" for k in range(n) for p in ("re", "im")]
    z = u.grid.z.reshape(-1)
    vals = u.values.reshape(-1, n)
    data = np.empty((z.size, 2 + 2 * n))
    data[:, 0] = z.real
    data[:, 1] = z.imag
    data[:, 2::2] = vals.real
    data[:, 3::2] = vals.imag
    lines = [",".join(cols)]
    lines += [",".join(repr(float(v)) for v in row) for row in data]
    path.write_text("\n".join(lines) + "\n")
    desc = u.grid.to_json() | {"target_dim": n}
    sidecar(path).write_text(json.dumps(desc, sort_keys=True) + "\n")


def sidecar(path) -> Path:
    path = Path(path)
    return path.with_suffix(".json")


def read_csv(path) -> MapSample:
    path = Path(path)
    desc = json.loads(sidecar(path).read_text())
    grid = Grid.from_json(desc)
    n = int(desc["target_dim"])
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape != (grid.size, 2 + 2 * n):
        raise GridError(f"{path}: expected {grid.size} rows of {2 + 2 * n} columns, got {data.shape}")
    vals = data[:, 2::2] + 1j * data[:, 3::2]
    return MapSample(grid, vals.reshape(grid.resolution + (n,)))
