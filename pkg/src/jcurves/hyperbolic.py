"""Collar geometry, Teichmuller dimension and plumbing bookkeeping.

Model collar of a closed geodesic of length ``l`` on a surface of curvature
-1, in conformal coordinates ``(rho, theta)`` with ``|rho| < pi**2 / l``::

    ds = (l / 2pi) / cos(l rho / 2pi) * |d rho + i d theta|

Neck annuli ``{|lam| < |zeta| < 1}`` are glued by ``zeta * zeta' = lam``;
their modulus ``log(1/|lam|)`` bounds the length of the core geodesic
through ``l <= 2 pi**2 / log(1/|lam|)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Grid

TWO_PI = 2.0 * math.pi


class CollarHypothesisError(ValueError):
    """Geodesic length above 1, outside the range of the collar estimates."""


# pants graphs ------------------------------------------------------------------


@dataclass(frozen=True)
class PantsGraph:
    """Trivalent decomposition graph.

    Vertices are pants. Each edge is an inner circle joining two (possibly
    equal) pants; a marked edge is contracted to a node. ``tails`` and
    ``marked_tails`` list the vertex carrying each boundary circle and each
    marked point.
    """

    vertices: int
    edges: tuple = ()
    tails: tuple = ()
    marked_tails: tuple = ()

    def __post_init__(self):
        edges = tuple((int(e[0]), int(e[1]), bool(e[2]) if len(e) > 2 else False)
                      for e in self.edges)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "tails", tuple(int(v) for v in self.tails))
        object.__setattr__(self, "marked_tails", tuple(int(v) for v in self.marked_tails))
        n = self.vertices
        if n < 1:
            raise ValueError("a pants graph needs at least one vertex")
        degree = np.zeros(n, dtype=int)
        for i, j, _ in edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) has an endpoint outside 0..{n - 1}")
            degree[i] += 1
            degree[j] += 1
        for v in self.tails + self.marked_tails:
            if not 0 <= v < n:
                raise ValueError(f"tail on vertex {v} outside 0..{n - 1}")
            degree[v] += 1
        bad = np.flatnonzero(degree != 3)
        if bad.size:
            raise ValueError(f"vertices {bad.tolist()} do not have degree 3")
        if not self._connected():
            raise ValueError("pants graph is disconnected")
        if 2 * self.genus + self.m + self.b < 3:
            raise ValueError("2g + m + b < 3: no hyperbolic structure")

    def _connected(self) -> bool:
        seen, stack = {0}, [0]
        adj = {v: set() for v in range(self.vertices)}
        for i, j, _ in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        while stack:
            for w in adj[stack.pop()] - seen:
                seen.add(w)
                stack.append(w)
        return len(seen) == self.vertices

    @property
    def b(self) -> int:
        return len(self.tails)

    @property
    def m(self) -> int:
        return len(self.marked_tails)

    @property
    def genus(self) -> int:
        # Euler characteristic: -vertices = 2 - 2g - b - m
        return (2 + self.vertices - self.b - self.m) // 2

    @property
    def marked_edges(self) -> list:
        return [k for k, e in enumerate(self.edges) if e[2]]

    @classmethod
    def standard(cls, g: int, m: int = 0, b: int = 0) -> "PantsGraph":
        """A chain-type decomposition of the surface of type ``(g, m, b)``."""
        if g < 0 or m < 0 or b < 0 or 2 * g + m + b < 3:
            raise ValueError(f"no pants decomposition for (g, m, b) = ({g}, {m}, {b})")
        ends = ["t"] * b + ["m"] * m
        n = 2 * g - 2 + b + m
        edges, tails, marked = [], [], []

        def attach(v, kind):
            (tails if kind == "t" else marked).append(v)

        if g == 0:
            # caterpillar: vertex k joined to k+1, free slots take the ends
            for k in range(n - 1):
                edges.append((k, k + 1))
            slots = [0, 0] + [k for k in range(1, n - 1)] + [n - 1, n - 1]
            if n == 1:
                slots = [0, 0, 0]
            for v, kind in zip(slots, ends):
                attach(v, kind)
        else:
            # g loops hanging off a path of 2g - 2 + b + m vertices
            if n == 1:
                edges.append((0, 0))
                attach(0, ends[0])
            else:
                for k in range(n - 1):
                    edges.append((k, k + 1))
                free = []
                for k in range(n):
                    deg = (k > 0) + (k < n - 1)
                    free.extend([k] * (3 - deg))
                loops = 0
                k = 0
                pairs = []
                # close genus with loops at vertices that have two free slots
                while loops < g and k < len(free) - 1:
                    if free[k] == free[k + 1]:
                        pairs.append(free[k])
                        loops += 1
                        k += 2
                    else:
                        k += 1
                rest = list(free)
                for v in pairs:
                    rest.remove(v)
                    rest.remove(v)
                    edges.append((v, v))
                # remaining genus: join free slots pairwise
                while loops < g:
                    edges.append((rest.pop(0), rest.pop(0)))
                    loops += 1
                for v, kind in zip(rest, ends):
                    attach(v, kind)
        return cls(n, tuple(edges), tuple(tails), tuple(marked))

    def to_json(self) -> dict:
        return {
            "vertices": self.vertices,
            "edges": [{"v": [i, j], "marked": mk} for i, j, mk in self.edges],
            "tails": list(self.tails),
            "marked_tails": list(self.marked_tails),
        }

    @classmethod
    def from_json(cls, d: dict) -> "PantsGraph":
        edges = tuple((e["v"][0], e["v"][1], bool(e.get("marked", False))) for e in d.get("edges", []))
        return cls(int(d["vertices"]), edges, tuple(d.get("tails", [])),
                   tuple(d.get("marked_tails", [])))


def teich_dimension(g: PantsGraph) -> int:
    """Complex dimension ``3g - 3 + m + 2b`` of the deformation space."""
    g_, m, b = g.genus, g.m, g.b
    if 2 * g_ + m + b < 3:
        raise ValueError("2g + m + b < 3")
    return 3 * g_ - 3 + m + 2 * b


def wrap_angle(x):
    """Reduce to ``[0, 2pi)``; values that round to ``2pi`` map to 0."""
    y = np.mod(np.asarray(x, dtype=float), TWO_PI)
    y = np.where(y >= TWO_PI, 0.0, y)
    return float(y) if y.ndim == 0 else y


@dataclass(frozen=True)
class FNCoords:
    """Fenchel-Nielsen lengths and twists, per tail and per edge."""

    tail_lengths: tuple
    edge_lengths: tuple
    edge_twists: tuple = None
    tail_twists: tuple = None

    def __post_init__(self):
        for name in ("tail_lengths", "edge_lengths"):
            arr = np.asarray(getattr(self, name), dtype=float).ravel()
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise ValueError(f"{name} must be positive and finite")
            object.__setattr__(self, name, tuple(arr.tolist()))
        for name, ref in (("edge_twists", self.edge_lengths), ("tail_twists", self.tail_lengths)):
            val = getattr(self, name)
            arr = np.zeros(len(ref)) if val is None else np.asarray(val, dtype=float).ravel()
            if arr.size != len(ref) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite, one per length")
            object.__setattr__(self, name, tuple(np.atleast_1d(wrap_angle(arr)).tolist()))

    def check(self, g: PantsGraph):
        if len(self.tail_lengths) != g.b or len(self.edge_lengths) != len(g.edges):
            raise ValueError("coordinate counts do not match the graph")

    def twist(self, edge: int, dtheta: float) -> "FNCoords":
        """Coordinates with ``dtheta`` added to one edge twist, wrapped."""
        tw = list(self.edge_twists)
        tw[edge] = wrap_angle(tw[edge] + dtheta)
        return FNCoords(self.tail_lengths, self.edge_lengths, tuple(tw), self.tail_twists)


@dataclass(frozen=True)
class PlumbingParams:
    """Plumbing moduli: ``0 < |lam| < 1`` per edge, ``0 < |lam| <= 1`` per tail.

    Marked edges are nodes and carry ``None``.
    """

    edges: tuple
    tails: tuple = ()

    def __post_init__(self):
        e = tuple(None if v is None else complex(v) for v in self.edges)
        t = tuple(complex(v) for v in self.tails)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "tails", t)
        for k, v in enumerate(e):
            if v is not None and not (0 < abs(v) < 1):
                raise ValueError(f"edge {k}: need 0 < |lambda| < 1, got {abs(v)!r}")
        for k, v in enumerate(t):
            if not (0 < abs(v) <= 1):
                raise ValueError(f"tail {k}: need 0 < |lambda| <= 1, got {abs(v)!r}")

    def to_json(self) -> dict:
        enc = lambda v: None if v is None else [v.real, v.imag]
        return {"edges": [enc(v) for v in self.edges], "tails": [enc(v) for v in self.tails]}

    @classmethod
    def from_json(cls, d: dict) -> "PlumbingParams":
        dec = lambda v: None if v is None else complex(v[0], v[1])
        return cls(tuple(dec(v) for v in d["edges"]), tuple(dec(v) for v in d.get("tails", [])))


@dataclass(frozen=True)
class CollarSpec:
    length: float
    a_star: float = 2.0

    def __post_init__(self):
        if not (math.isfinite(self.length) and self.length > 0):
            raise ValueError("collar length must be positive")
        if not (math.isfinite(self.a_star) and self.a_star > 0):
            raise ValueError("a_star must be positive")


# collar geometry ---------------------------------------------------------------


def _check_length(l):
    if not (np.all(np.isfinite(l)) and np.all(np.asarray(l) > 0)):
        raise ValueError("geodesic length must be positive and finite")


def collar_half_width(l: float) -> float:
    """Extent ``pi**2 / l`` of the collar coordinate."""
    _check_length(l)
    return math.pi ** 2 / l


def collar_metric_factor(l: float, rho):
    """Conformal factor ``(l / 2pi) / cos(l rho / 2pi)`` of the collar metric."""
    _check_length(l)
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) >= math.pi ** 2 / l):
        raise ValueError(f"rho outside the collar |rho| < {math.pi ** 2 / l:.6g}")
    out = (l / TWO_PI) / np.cos(l * rho / TWO_PI)
    return float(out) if out.ndim == 0 else out


def laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Five-point Laplacian; non-periodic boundary nodes are NaN."""
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise ValueError(f"field shape {f.shape} != grid shape {grid.shape}")
    out = np.zeros_like(f)
    for ax, (h, per) in enumerate(zip(grid.spacing, grid.periodic)):
        if per:
            out += (np.roll(f, -1, ax) - 2 * f + np.roll(f, 1, ax)) / h ** 2
        else:
            d = np.full_like(f, np.nan)
            sl = [slice(None)] * 2
            sl[ax] = slice(1, -1)
            lo, hi = list(sl), list(sl)
            lo[ax], hi[ax] = slice(None, -2), slice(2, None)
            d[tuple(sl)] = (f[tuple(hi)] - 2 * f[tuple(sl)] + f[tuple(lo)]) / h ** 2
            out += d
    return out


def gauss_curvature(grid: Grid, factor) -> np.ndarray:
    """Curvature ``-lap(log f) / f**2`` of the metric ``f**2 |dz|**2``.

    ``factor`` is an array on the grid or a callable of the node coordinate
    ``z``. Boundary rows of non-periodic axes are NaN.
    """
    if min(grid.resolution) < 5:
        raise ValueError("gauss_curvature needs at least 5 nodes per axis")
    f = factor(grid.z) if callable(factor) else factor
    f = np.broadcast_to(np.asarray(f, dtype=float), grid.shape)
    if not np.all(np.isfinite(f)) or np.any(f <= 0):
        raise ValueError("metric factor must be positive and finite")
    return -laplacian(grid, np.log(f)) / f ** 2


def collar_log_radius_upper(l: float) -> float:
    """Upper bound ``pi**2 / l`` on the log conformal radius of a collar."""
    return collar_half_width(l)


def geodesic_annulus_log_radius_bound(l: float) -> float:
    """Bound ``2 pi**2 / l`` on the modulus of an annulus around a geodesic."""
    return 2.0 * collar_half_width(l)


def _x_minus_arctan(x: float) -> float:
    # nonnegative for x >= 0; series avoids cancellation at small x
    if x < 1e-2:
        x2 = x * x
        return x * x2 * (1 / 3 - x2 * (1 / 5 - x2 * (1 / 7 - x2 / 9)))
    return x - math.atan(x)


def collar_width(spec: CollarSpec) -> float:
    """Collar half width ``rho*`` at which each collar half has area ``a_star``.

    ``rho* = pi**2/l - (2 pi/l) arctan(l / a_star)``, evaluated as the lower
    bound ``pi**2/l - 2 pi/a_star`` plus a nonnegative correction so the
    inequality survives rounding.
    """
    l, a = spec.length, spec.a_star
    if l > 1:
        raise CollarHypothesisError(f"collar estimates assume l <= 1, got {l}")
    lower = math.pi ** 2 / l - 2 * math.pi / a
    return lower + (2 * math.pi / l) * _x_minus_arctan(l / a)


def collar_area(l: float, rho: float) -> float:
    """Area ``2 l tan(l rho / 2pi)`` of the collar part ``|rho'| < rho``."""
    collar_metric_factor(l, rho)
    return 2 * l * math.tan(l * rho / TWO_PI)


def _log_cot(l, rho):
    u = (math.pi ** 2 - l * rho) / (4 * math.pi)
    return -math.log(math.tan(u))


def trim_width(l: float, rho_lo: float, rho_hi: float) -> float:
    """Conformal width ``int f d rho`` of the collar band ``[rho_lo, rho_hi]``."""
    _check_length(l)
    top = math.pi ** 2 / l
    if not (0 <= rho_lo <= rho_hi < top):
        raise ValueError(f"need 0 <= rho_lo <= rho_hi < {top:.6g}")
    return _log_cot(l, rho_hi) - _log_cot(l, rho_lo)


# plumbing ----------------------------------------------------------------------


def plumb(zeta: complex, lam: complex) -> complex:
    """Partner coordinate ``lam / zeta`` across a neck ``zeta * zeta' = lam``.

    Defined on the closed annulus ``|lam| <= |zeta| <= 1``, which the map
    sends to itself, swapping the two boundary circles. The radial check
    allows a few ulps so rounded images of boundary points are accepted.
    """
    zeta, lam = complex(zeta), complex(lam)
    if zeta == 0:
        raise ValueError("zeta = 0 is not on the neck")
    if lam == 0:
        raise ValueError("lambda = 0 is a node, not a neck")
    slack = 1 + 8 * np.finfo(float).eps
    if not (abs(lam) <= abs(zeta) * slack and abs(zeta) <= slack):
        raise ValueError(f"|zeta| = {abs(zeta)!r} outside the annulus [{abs(lam)!r}, 1]")
    return lam / zeta


def neck_modulus(lam: complex) -> float:
    return math.log(1.0 / abs(lam))


def validate_family(g: PantsGraph, params: PlumbingParams, modulus_cap: float = 50.0) -> dict:
    """Check plumbing moduli against a graph and report the necks.

    Per unmarked edge: modulus ``log(1/|lam|)`` and the geodesic length bound
    ``2 pi**2 / modulus``. Edges with modulus above ``modulus_cap`` are
    flagged as pinching.
    """
    if len(params.edges) != len(g.edges):
        raise ValueError(f"{len(params.edges)} edge moduli for {len(g.edges)} edges")
    if len(params.tails) != g.b:
        raise ValueError(f"{len(params.tails)} tail moduli for {g.b} tails")
    rows = []
    for k, ((i, j, marked), lam) in enumerate(zip(g.edges, params.edges)):
        row = {"edge": k, "v": [i, j], "marked": marked}
        if marked:
            if lam is not None:
                raise ValueError(f"edge {k} is a node; give null, not a modulus")
            row.update(node=True)
        else:
            if lam is None:
                raise ValueError(f"edge {k} has no modulus; declare nodes as marked edges")
            mod = neck_modulus(lam)
            row.update(node=False, **{"lambda": [lam.real, lam.imag]}, neck_modulus=mod,
                       length_bound=2 * math.pi ** 2 / mod, pinching=mod > modulus_cap)
        rows.append(row)
    return {
        "genus": g.genus,
        "b": g.b,
        "m": g.m,
        "teich_dimension": teich_dimension(g),
        "edges": rows,
        "nodes": g.marked_edges,
        "tails": [{"tail": k, "modulus": neck_modulus(v) if abs(v) < 1 else 0.0}
                  for k, v in enumerate(params.tails)],
    }


def track_degeneration(g: PantsGraph, family: Sequence[PlumbingParams],
                       bound_factor: float = 4.0) -> dict:
    """Flag edges whose neck moduli grow along a family.

    An edge degenerates when its modulus sequence is nondecreasing and the
    last value exceeds ``bound_factor`` times the first.
    """
    if len(family) < 2:
        raise ValueError("need at least two family members")
    reports = [validate_family(g, p) for p in family]
    out = []
    for k, (_, _, marked) in enumerate(g.edges):
        if marked:
            continue
        seq = np.array([r["edges"][k]["neck_modulus"] for r in reports])
        flag = bool(np.all(np.diff(seq) >= 0) and seq[-1] > bound_factor * seq[0])
        out.append({"edge": k, "moduli": seq.tolist(), "degenerating": flag})
    return {"bound_factor": bound_factor, "edges": out}


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2)
