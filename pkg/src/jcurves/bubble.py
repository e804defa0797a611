"""Bubble detection for sequences of sampled maps.

A point ``y`` is a bubble point of ``u_n`` when every disk around ``y``
carries energy above ``eps`` for all large ``n``. Detection runs a dyadic
sequence of patch covers; at each scale a patch is bad when its energy
exceeds ``eps`` on every member of the tail of the family, and only patches
inside bad patches of the previous scale are examined.

The concentration scale ``r_n`` is the largest radius at which no disk of
that radius carries more than ``eps``; the concentration center ``x_n``
attains it, and ``v_n(z) = u_n(x_n + r_n z)`` is the rescaled map.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.integrate import quad
from scipy.interpolate import RegularGridInterpolator
from scipy.signal import fftconvolve
from scipy.spatial import cKDTree

from .core import (
    SUPERSAMPLE,
    Grid,
    GridError,
    MapSample,
    Region,
    StructureField,
    energy,
    energy_density,
)

LABELS = ("3'", "3''", "3'_b", "3''_b", "3'''_b", "3''''_b", "none")


class SaturationError(ValueError):
    """Even the smallest resolvable disk carries more than ``eps``."""


@dataclass(frozen=True, eq=False)
class SequenceFamily:
    members: tuple
    structures: Optional[tuple] = None

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("empty family")
        g = members[0].grid
        if any(m.grid != g for m in members):
            raise GridError("family members live on different grids")
        object.__setattr__(self, "members", members)
        if self.structures is not None:
            st = tuple(self.structures)
            if len(st) != len(members) or any(not isinstance(s, StructureField) for s in st):
                raise ValueError("need one StructureField per member")
            object.__setattr__(self, "structures", st)

    @property
    def grid(self) -> Grid:
        return self.members[0].grid

    def __len__(self):
        return len(self.members)

    def tail(self) -> tuple:
        """Second half of the family (at least two members)."""
        n = len(self.members)
        return self.members[min(n // 2, max(n - 2, 0)):]


@dataclass
class CoverSpec:
    centers: np.ndarray
    radius: float
    multiplicity: int
    a: float

    @property
    def count(self) -> int:
        return len(self.centers)

    def to_json(self) -> dict:
        return {"centers": [[float(c.real), float(c.imag)] for c in self.centers],
                "radius": self.radius, "multiplicity": self.multiplicity, "a": self.a}


@dataclass
class BubbleReport:
    points: list
    radii: list
    centers: list
    subcase: str
    profile_energy: float
    eps: float
    bound_factor: float = 4.0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "points": [[p.real, p.imag] for p in self.points],
            "radii": list(self.radii),
            "centers": [None if not np.isfinite(c) else [c.real, c.imag] for c in self.centers],
            "subcase": self.subcase,
            "profile_energy": self.profile_energy,
            "eps": self.eps,
            "bound_factor": self.bound_factor,
            **self.extra,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


# helpers -----------------------------------------------------------------------


def _domain_mask(grid: Grid) -> np.ndarray:
    return grid.weights > 0


def _nodes(grid: Grid, mask: np.ndarray) -> np.ndarray:
    z = grid.z[mask]
    return np.column_stack([z.real, z.imag])


def _weighted_density(u: MapSample) -> np.ndarray:
    return energy_density(u) * u.grid.weights


def disk_kernel(h: tuple, r: float) -> np.ndarray:
    """Area fraction of each grid cell (centred at offsets) inside ``|z| < r``."""
    hx, hy = h
    mx, my = int(math.ceil(r / hx)) + 1, int(math.ceil(r / hy)) + 1
    s = SUPERSAMPLE
    off = (np.arange(s) + 0.5) / s - 0.5
    ix = np.arange(-mx, mx + 1)
    iy = np.arange(-my, my + 1)
    px = (ix[:, None] + off[None, :]).ravel() * hx
    py = (iy[:, None] + off[None, :]).ravel() * hy
    inside = (px[:, None] ** 2 + py[None, :] ** 2) < r * r
    return inside.reshape(ix.size, s, iy.size, s).mean(axis=(1, 3))


def disk_energies(u: MapSample, r: float, dens: Optional[np.ndarray] = None) -> np.ndarray:
    """Energy of ``u`` on ``Delta(x, r)`` for every node ``x``.

    Cells cut by the circle contribute by area fraction, so the result is
    continuous in ``r``.
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    wd = _weighted_density(u) if dens is None else dens
    k = disk_kernel(u.grid.spacing, r)
    out = fftconvolve(wd, k, mode="same")
    return np.maximum(out, 0.0)


def _center_mask(grid: Grid, region: Optional[Region], margin: float) -> np.ndarray:
    """Nodes allowed as centers: inside ``region`` (default: the domain shrunk
    by ``margin``)."""
    x, y = grid.z.real, grid.z.imag
    if region is None:
        return grid.signed_distance(x, y) <= -margin + 1e-12
    region.validate(grid)
    mask = np.zeros(grid.shape, dtype=bool)
    mask[region.slices()] = True
    return mask & (region.signed_distance(x, y) <= 1e-12) & (grid.signed_distance(x, y) <= 1e-12)


# cover -------------------------------------------------------------------------


def patch_cover(grid: Grid, a: float) -> CoverSpec:
    """Hexagonal-lattice cover of the domain nodes by disks of diameter < a.

    Lattice spacing ``d = a / 1.25``, disk radius ``0.6 d``; every point lies
    within ``d / sqrt(3)`` of the lattice and in at most 3 disks.
    Multiplicity is counted over all nodes.
    """
    h = max(grid.spacing)
    if not a > 2 * h:
        raise GridError(f"patch size {a} not resolved by spacing {h}")
    d = a / 1.25
    rad = 0.6 * d
    (x0, x1), (y0, y1) = grid.box
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    ry = int(math.ceil((y1 - y0) / (d * math.sqrt(3) / 2))) + 2
    rx = int(math.ceil((x1 - x0) / d)) + 2
    jj = np.arange(-ry, ry + 1)
    ii = np.arange(-rx, rx + 1)
    I, Jm = np.meshgrid(ii, jj, indexing="ij")
    pts = (cx + d * (I + 0.5 * (Jm % 2))) + 1j * (cy + d * math.sqrt(3) / 2 * Jm)
    pts = pts.ravel()
    nodes = _nodes(grid, _domain_mask(grid))
    tree = cKDTree(nodes)
    hits = tree.query_ball_point(np.column_stack([pts.real, pts.imag]), rad, return_length=True)
    pts = pts[np.asarray(hits) > 0]
    counts = cKDTree(np.column_stack([pts.real, pts.imag])).query_ball_point(
        nodes, rad, return_length=True)
    counts = np.asarray(counts)
    if counts.min() < 1:
        raise ArithmeticError("cover leaves a node uncovered")
    mult = int(counts.max())
    if mult > 3:
        raise ArithmeticError(f"cover multiplicity {mult} exceeds 3")
    order = np.lexsort((pts.imag, pts.real))
    return CoverSpec(pts[order], rad, mult, float(a))


def _patch_matrix(grid: Grid, centers: np.ndarray, rad: float):
    nodes_mask = _domain_mask(grid)
    flat = np.flatnonzero(nodes_mask.ravel())
    tree = cKDTree(_nodes(grid, nodes_mask))
    lists = tree.query_ball_point(np.column_stack([centers.real, centers.imag]), rad)
    rows = np.repeat(np.arange(len(lists)), [len(l) for l in lists])
    cols = flat[np.concatenate([np.asarray(l, dtype=int) for l in lists])] if len(lists) else []
    return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(lists), grid.size))


def find_bubble_points(fam: SequenceFamily, eps: float, a: Optional[float] = None,
                       a_min: Optional[float] = None) -> list:
    """Bubble points of a family by dyadic patch refinement.

    Scales run ``a, a/2, ...`` down to ``a_min`` (default eight spacings).
    The returned points are, per cluster of finest-scale bad patches, the node
    maximizing the tail-minimum disk energy at the finest patch radius.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if len(fam) < 3:
        raise ValueError("need at least 3 family members")
    grid = fam.grid
    h = max(grid.spacing)
    (x0, x1), (y0, y1) = grid.box
    a = 0.25 * max(x1 - x0, y1 - y0) if a is None else float(a)
    a_min = 8 * h if a_min is None else float(a_min)
    dens = np.stack([_weighted_density(u).ravel() for u in fam.tail()], axis=1)
    prev = None
    bad = None
    scale = a
    while True:
        cover = patch_cover(grid, scale)
        centers = cover.centers
        if prev is not None:
            # nested refinement: keep patches centred in a bad parent
            pc, prad = prev
            near = cKDTree(np.column_stack([pc.real, pc.imag])).query_ball_point(
                np.column_stack([centers.real, centers.imag]), prad, return_length=True)
            centers = centers[np.asarray(near) > 0]
        if centers.size == 0:
            return []
        E = _patch_matrix(grid, centers, cover.radius) @ dens
        bad = centers[E.min(axis=1) > eps]
        if bad.size == 0:
            return []
        prev = (bad, cover.radius)
        if scale / 2 < a_min:
            break
        scale /= 2
    # cluster finest bad patches that overlap
    rad = prev[1]
    pts = np.column_stack([bad.real, bad.imag])
    pairs = cKDTree(pts).query_pairs(2 * rad, output_type="ndarray")
    graph = sparse.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
                              shape=(len(bad), len(bad))) if len(pairs) else \
        sparse.coo_matrix((len(bad), len(bad)))
    ncomp, labels = sparse.csgraph.connected_components(graph, directed=False)
    tail_min = np.min(np.stack([disk_energies(u, rad) for u in fam.tail()]), axis=0)
    out = []
    z = grid.z
    for c in range(ncomp):
        cl = bad[labels == c]
        d = np.min(np.abs(z[..., None] - cl[None, None, :]), axis=-1)
        cand = np.where((d <= rad) & _domain_mask(grid), tail_min, -np.inf)
        out.append(complex(z.ravel()[_argmax_first(cand)]))
    return sorted(out, key=lambda p: (p.real, p.imag))


def _argmax_first(E: np.ndarray, rtol: float = 1e-12) -> int:
    """Lowest row-major index among entries within ``rtol`` of the maximum."""
    flat = E.ravel()
    top = flat.max()
    return int(np.flatnonzero(flat >= top - rtol * abs(top))[0])


# concentration scale, center, rescaling ------------------------------------------


def maximal_radius(u: MapSample, eps: float, rho: float,
                   center_region: Optional[Region] = None, rtol: float = 1e-3) -> float:
    """Largest ``r <= rho / 2`` with every centred disk energy at most ``eps``.

    Bisection down to ``rtol`` grid spacings. Centers default to the nodes
    at distance at least ``rho / 2`` from the boundary.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not rho > 0:
        raise ValueError("rho must be positive")
    grid = u.grid
    cap = rho / 2
    mask = _center_mask(grid, center_region, cap)
    if not mask.any():
        raise GridError("no admissible centers")
    dens = _weighted_density(u)

    def sup(r):
        return float(disk_energies(u, r, dens)[mask].max())

    if sup(cap) <= eps:
        return cap
    h = min(grid.spacing)
    lo = h
    if sup(lo) > eps:
        raise SaturationError(f"a disk of radius {lo:.3g} already carries more than eps")
    hi = cap
    while hi - lo > rtol * h:
        mid = 0.5 * (lo + hi)
        if sup(mid) <= eps:
            lo = mid
        else:
            hi = mid
    return lo


def concentration_center(u: MapSample, r: float, eps: float,
                         center_region: Optional[Region] = None) -> tuple:
    """Node maximizing the energy of ``Delta(x, r)``; returns ``(x, energy)``.

    Ties go to the lowest row-major node index. The maximum must reach
    ``eps`` up to the largest single-cell energy.
    """
    grid = u.grid
    mask = _center_mask(grid, center_region, r)
    if not mask.any():
        raise GridError("no admissible centers")
    dens = _weighted_density(u)
    E = np.where(mask, disk_energies(u, r, dens), -np.inf)
    idx = _argmax_first(E)
    best = float(E.ravel()[idx])
    cell = float(dens.max())
    if best < eps - cell:
        raise ValueError(f"no disk of radius {r:.4g} reaches eps (best {best:.4g}); "
                         "was the cap attained?")
    return complex(grid.z.ravel()[idx]), best


def rescale(u: MapSample, x: complex, r: float, out_radius: float,
            n: Optional[int] = None) -> MapSample:
    """``v(z) = u(x + r z)`` on a disk grid of radius ``out_radius``.

    Bilinear interpolation; ``n`` defaults to the first axis resolution of
    ``u``. The window ``Delta(x, r * out_radius)`` must lie in the domain.
    """
    grid = u.grid
    if not (r > 0 and out_radius > 0):
        raise ValueError("radii must be positive")
    x = complex(x)
    R = r * out_radius
    # window inside: the boundary circle sampled finely
    ang = np.linspace(0, 2 * np.pi, 721)
    ring = x + R * np.exp(1j * ang)
    if np.any(grid.signed_distance(ring.real, ring.imag) > 1e-9 * max(1.0, R)):
        raise GridError("rescaling window leaves the domain")
    n = grid.resolution[0] if n is None else int(n)
    out = Grid.disk(out_radius, n)
    pts = x + r * out.z
    ax, ay = grid.axes
    px = np.clip(pts.real, ax[0], ax[-1])
    py = np.clip(pts.imag, ay[0], ay[-1])
    vals = np.empty(out.shape + (u.target_dim,), dtype=complex)
    for c in range(u.target_dim):
        f = RegularGridInterpolator((ax, ay), u.values[..., c], method="linear")
        vals[..., c] = f(np.stack([px, py], axis=-1))
    return MapSample(out, vals)


# subcases ----------------------------------------------------------------------


def is_bounded(series, bound_factor: float = 4.0) -> bool:
    """Max of the last third at most ``bound_factor`` times the mean of the first.

    Comparing against the mean (not the max) of the first third lets linear
    growth register as unbounded on series of ten or more terms.
    """
    s = np.abs(np.asarray(series, dtype=float))
    if s.size < 5:
        raise ValueError("series too short (need at least 5 terms)")
    m = s.size // 3
    return bool(s[-m:].max() <= bound_factor * s[:m].mean())


def classify_subcase(Rn, rn, rhon=None, bound_factor: float = 4.0) -> str:
    """Subcase label from the growth of ``R_n / r_n`` (and ``rho_n``).

    Interior: ``3'`` if ``R/r`` is bounded, else ``3''``. Boundary (``rhon``
    given): ``3'_b`` if ``R/r`` is bounded; otherwise ``3''_b`` if
    ``rho/r`` is bounded, ``3'''_b`` if ``R/rho`` is bounded, else
    ``3''''_b``.
    """
    R = np.asarray(Rn, dtype=float)
    r = np.asarray(rn, dtype=float)
    if R.shape != r.shape or R.ndim != 1:
        raise ValueError("series must be one-dimensional and of equal length")
    if R.size < 5:
        raise ValueError("series too short (need at least 5 terms)")
    if np.any(r <= 0):
        raise ValueError("r_n must be positive")
    R_r = is_bounded(R / r, bound_factor)
    if rhon is None:
        return "3'" if R_r else "3''"
    rho = np.asarray(rhon, dtype=float)
    if rho.shape != R.shape:
        raise ValueError("rho_n has a different length")
    if R_r:
        return "3'_b"
    if np.any(rho <= 0):
        raise ValueError("rho_n must be positive when R_n / r_n is unbounded")
    if is_bounded(rho / r, bound_factor):
        return "3''_b"
    if is_bounded(R / rho, bound_factor):
        return "3'''_b"
    return "3''''_b"


# quantization ------------------------------------------------------------------


def oscillation(u: MapSample, region: Optional[Region] = None) -> float:
    """``max |u - u(c)|`` over domain nodes, ``c`` the node nearest the center."""
    grid = u.grid
    mask = _domain_mask(grid) if region is None else region.weights(grid) > 0
    n0, n1 = grid.resolution
    ref = u.values[n0 // 2, n1 // 2]
    return float(np.max(np.linalg.norm(u.values[mask] - ref, axis=-1))) if mask.any() else 0.0


def quantization_gate(v: MapSample, eps3: float) -> dict:
    """Energy and oscillation of a rescaled limit; a bubble candidate carries
    energy at least ``eps3``."""
    if not eps3 > 0:
        raise ValueError("eps3 must be positive")
    e = energy(v)
    return {"energy": e, "oscillation": oscillation(v), "eps3": float(eps3),
            "verdict": "bubble-candidate" if e >= eps3 else "below-quantization"}


# synthetic families --------------------------------------------------------------


@dataclass(frozen=True)
class BumpProfile:
    """Concentration profile ``g(z) = A z exp(-|z|**2 / w**2) psi(|z| / S)``.

    ``psi(t) = exp(1 - 1/(1 - t**2))`` cuts off smoothly at ``|z| = S``
    (default ``3 w``). The energy density peaks at the origin, so the disk of
    radius ``r`` carrying the most energy is centred there. ``A`` normalizes
    the energy to ``target_energy``; with ``w = 2`` a fifth of the energy
    sits in ``|z| < 0.69``.
    """

    target_energy: float
    width: float = 2.0
    support: float = 6.0

    def _phi(self, x):
        # radial factor and its x-derivative, x = |z|**2 < S**2
        w2, S2 = self.width ** 2, self.support ** 2
        x = np.asarray(x, dtype=float)
        inside = x < S2
        q = np.where(inside, 1 - x / S2, 1.0)
        phi = np.where(inside, np.exp(-x / w2 + 1 - 1 / q), 0.0)
        dphi = phi * (-1 / w2 - 1 / (S2 * q * q))
        return phi, dphi

    def density(self, x):
        """Energy density ``|dg|**2`` at ``|z|**2 = x`` for ``A = 1``."""
        phi, dphi = self._phi(x)
        return 2 * ((phi + x * dphi) ** 2 + (x * dphi) ** 2)

    @property
    def amplitude(self) -> float:
        unit = math.pi * quad(lambda x: float(self.density(x)), 0, self.support ** 2,
                              limit=400, epsabs=1e-13, epsrel=1e-12)[0]
        return math.sqrt(self.target_energy / unit)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        phi, _ = self._phi(np.abs(z) ** 2)
        return self.amplitude * z * phi

    def sample(self, grid: Grid, center: complex = 0, scale: float = 1.0) -> MapSample:
        amp = self.amplitude
        phi = lambda z: self._phi(np.abs(z) ** 2)[0]
        return MapSample.from_function(grid, lambda z: amp * ((z - center) / scale) * phi((z - center) / scale))


def concentrating_family(grid: Grid, eps: float, ns: Sequence[int], center: complex = 0,
                         factor: float = 5.0) -> SequenceFamily:
    """``u_n = g((z - center) / 2**-n)`` with ``energy(g) = factor * eps``."""
    g = BumpProfile(factor * eps)
    return SequenceFamily(tuple(g.sample(grid, center, 2.0 ** -n) for n in ns))


def convergent_family(grid: Grid, total: float, count: int, center: complex = 0,
                      width: float = 0.5) -> SequenceFamily:
    """Bumps of fixed width ``width * (1 + 1/n)`` and energy ``total``."""
    g = BumpProfile(total)
    return SequenceFamily(tuple(g.sample(grid, center, width * (1 + 1 / n)) for n in range(1, count + 1)))


# end-to-end scan -----------------------------------------------------------------


def bubble_scan(fam: SequenceFamily, eps: float, rho: float, node: complex = 0,
                boundary: bool = False, bound_factor: float = 4.0,
                a: Optional[float] = None, a_min: Optional[float] = None) -> BubbleReport:
    """Detect bubble points and collect per-member ``r_n``, ``x_n``.

    ``R_n = |x_n - node|``; for boundary families ``rho_n = Im x_n``. The
    subcase is classified when a bubble point exists and the family has at
    least 5 members.
    """
    pts = find_bubble_points(fam, eps, a, a_min)
    radii, centers, extra = [], [], {}
    if not pts:
        return BubbleReport([], [], [], "none", 0.0, float(eps), bound_factor)
    for u in fam.members:
        r = maximal_radius(u, eps, rho)
        if r >= rho / 2:
            radii.append(r)
            centers.append(complex("nan"))
            continue
        x, _ = concentration_center(u, r, eps)
        radii.append(r)
        centers.append(x)
    ok = [i for i, c in enumerate(centers) if np.isfinite(c)]
    label = "none"
    if len(ok) >= 5:
        r = np.array([radii[i] for i in ok])
        c = np.array([centers[i] for i in ok])
        R = np.abs(c - node)
        label = classify_subcase(R, r, c.imag if boundary else None, bound_factor)
    # profile energy: last member rescaled onto the largest window that fits
    profile = 0.0
    if ok:
        i = ok[-1]
        x = centers[i]
        room = -float(fam.grid.signed_distance(np.array([x.real]), np.array([x.imag]))[0])
        out_r = min(8.0, 0.99 * room / radii[i])
        v = rescale(fam.members[i], x, radii[i], out_r)
        profile = energy(v)
        extra["profile_radius"] = out_r
    return BubbleReport(pts, radii, centers, label, profile, float(eps), bound_factor, extra)
