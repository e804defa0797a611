"""Cauchy-Green transform, d-bar operators and the perturbative solver.

The transform is ``(Tf)(z) = (1/pi) * integral f(w) / (z - w) dA(w)`` over
the disk, a right inverse of ``d/dz-bar``: ``T(1) = conj(z)`` inside the unit
disk. Quadrature is the grid's node rule, except in the cell carrying the
target node, where the kernel is integrated in closed form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    Grid,
    GridError,
    MapSample,
    Region,
    StructureField,
    from_real,
    gradient,
    lp_norm_du,
    standard_structure,
    to_real,
)

# complex entries per block in the dense transform sum
_BLOCK = 2_000_000


class TotalRealityError(ValueError):
    """A subspace fails to be totally real, or a boundary condition fails."""


class ConvergenceGateError(ValueError):
    """``J`` is too far from the standard structure for the Neumann series."""


# totally real subspaces -----------------------------------------------------


class TotallyRealSubspace:
    """Real ``n``-dimensional subspace ``W`` of complex ``n``-space.

    ``basis`` is a real ``2n x n`` matrix in the ``(re, im)`` layout used by
    :class:`~jcurves.core.StructureField`. Construction fails unless
    ``W`` and ``J_st W`` are transverse.
    """

    def __init__(self, basis, total_real_tol: float = 1e-8):
        b = np.array(basis, dtype=float)
        if b.ndim != 2 or b.shape[0] != 2 * b.shape[1]:
            raise TotalRealityError(f"basis must be 2n x n, got shape {b.shape}")
        n = b.shape[1]
        if np.linalg.matrix_rank(b) < n:
            raise TotalRealityError("basis does not have rank n")
        q, _ = np.linalg.qr(b)
        jq = standard_structure(n) @ q
        smin = np.linalg.svd(np.hstack([q, jq]), compute_uv=False).min()
        if not smin > total_real_tol:
            raise TotalRealityError(f"W meets J_st W: smallest singular value {smin:.2e}")
        # principal angles between W and J_st W
        cosines = np.clip(np.linalg.svd(q.T @ jq, compute_uv=False), 0.0, 1.0)
        self.dim = n
        self.basis = q
        self.min_singular_value = float(smin)
        self.lower_angle = float(np.arccos(cosines.max()))

    @classmethod
    def real(cls, n: int = 1) -> "TotallyRealSubspace":
        """The standard real subspace ``R^n``."""
        return cls(np.vstack([np.eye(n), np.zeros((n, n))]))

    @classmethod
    def from_complex(cls, vectors, **kw) -> "TotallyRealSubspace":
        """Real span of the columns of a complex ``n x n`` matrix."""
        c = np.atleast_2d(np.asarray(vectors, dtype=complex))
        return cls(np.vstack([c.real, c.imag]), **kw)

    @classmethod
    def rotated_line(cls, beta: float) -> "TotallyRealSubspace":
        """``e^{i beta} R`` inside the complex line."""
        return cls([[math.cos(beta)], [math.sin(beta)]])

    @property
    def complex_basis(self) -> np.ndarray:
        return from_real(self.basis.T).T

    def distance(self, v: np.ndarray) -> np.ndarray:
        """Euclidean distance of complex vectors (last axis) to ``W``."""
        r = to_real(np.asarray(v, dtype=complex))
        resid = r - (r @ self.basis) @ self.basis.T
        return np.linalg.norm(resid, axis=-1)

    def reflection(self, v: np.ndarray) -> np.ndarray:
        """Anti-linear reflection fixing ``W``: ``A conj(A^{-1} v)``."""
        a = self.complex_basis
        coeff = np.linalg.solve(a, np.moveaxis(np.asarray(v, dtype=complex), -1, 0).reshape(self.dim, -1))
        out = a @ np.conj(coeff)
        return np.moveaxis(out.reshape((self.dim,) + np.shape(v)[:-1]), 0, -1)

    def intersection_dim(self, other: "TotallyRealSubspace", tol: float = 1e-8) -> int:
        """Real dimension of ``W cap W'`` from singular values of the joint basis."""
        s = np.linalg.svd(np.hstack([self.basis, other.basis]), compute_uv=False)
        rank = int(np.sum(s > tol * max(1.0, s.max())))
        return 2 * self.dim - rank


# d-bar operators -------------------------------------------------------------


def dbar_std(u: MapSample) -> MapSample:
    """``(d_x u + i d_y u) / 2`` nodewise."""
    dx, dy = gradient(u)
    return MapSample(u.grid, 0.5 * (dx + 1j * dy))


def dbar_J(u: MapSample, J: StructureField) -> MapSample:
    """``(d_x u + J(z) d_y u) / 2`` nodewise."""
    if J.grid != u.grid:
        raise GridError("structure field lives on a different grid")
    if J.target_dim != u.target_dim:
        raise GridError(f"structure acts on C^{J.target_dim}, map takes values in C^{u.target_dim}")
    dx, dy = gradient(u)
    return MapSample(u.grid, 0.5 * (dx + J.apply(dy)))


def _perturbation(u: MapSample, J: StructureField) -> np.ndarray:
    """``(dbar_J - dbar_std) u = (J - J_st) d_y u / 2``."""
    _, dy = gradient(u)
    return 0.5 * (J.apply(dy) - 1j * dy)


# Cauchy transform ------------------------------------------------------------


def _rect_kernel_integral(s1, s2, t1, t2):
    """Closed form of the integral of ``1/(s + i t)`` over ``[s1,s2] x [t1,t2]``."""

    def atan_ratio(a, b):
        # a * arctan(b / a), extended by 0 on a == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(a == 0, 0.0, a * np.arctan(b / np.where(a == 0, 1.0, a)))

    def half_log(a, b):
        with np.errstate(divide="ignore", invalid="ignore"):
            r2 = a * a + b * b
            return np.where(r2 == 0, 0.0, 0.5 * b * np.log(np.where(r2 == 0, 1.0, r2)))

    def prim(s, t):
        re = half_log(s, t) - t + atan_ratio(s, t)
        im = half_log(t, s) - s + atan_ratio(t, s)
        return re - 1j * im

    return prim(s2, t2) - prim(s1, t2) - prim(s2, t1) + prim(s1, t1)


def _self_cell_terms(grid: Grid, weights: np.ndarray) -> np.ndarray:
    """``integral over own cell of dA(w) / (z - w)`` scaled by the domain fraction."""
    x, y = grid.axes
    hx, hy = grid.spacing
    (x0, x1), (y0, y1) = grid.box
    sl = np.clip(x - hx / 2, x0, x1) - x
    sr = np.clip(x + hx / 2, x0, x1) - x
    tl = np.clip(y - hy / 2, y0, y1) - y
    tr = np.clip(y + hy / 2, y0, y1) - y
    area = np.outer(sr - sl, tr - tl)
    frac = np.divide(weights, area, out=np.zeros_like(weights), where=area > 0)
    integral = _rect_kernel_integral(sl[:, None], sr[:, None], tl[None, :], tr[None, :])
    return -frac * integral


def cauchy_transform(f: MapSample) -> MapSample:
    """Cauchy-Green transform of ``f`` (supported on the disk) at every node.

    Returns values on the whole bounding box, so ``d-bar`` of the result can
    be taken with the ordinary stencils. Inside the disk ``dbar(Tf) = f``.
    """
    grid = f.grid
    if grid.kind != "disk":
        raise GridError(f"cauchy_transform supports disk grids only, got {grid.kind}")
    w = grid.weights
    src = w.reshape(-1) > 0
    zs = grid.z.reshape(-1)[src]
    qs = (f.values.reshape(-1, f.target_dim)[src] * w.reshape(-1)[src, None])
    zt = grid.z.reshape(-1)
    out = np.empty((zt.size, f.target_dim), dtype=complex)
    step = max(1, _BLOCK // max(1, zs.size))
    for start in range(0, zt.size, step):
        d = zt[start:start + step, None] - zs[None, :]
        kern = np.divide(1.0, d, out=np.zeros_like(d), where=d != 0)
        out[start:start + step] = kern @ qs
    selfterm = _self_cell_terms(grid, w).reshape(-1, 1) * f.values.reshape(-1, f.target_dim)
    out = (out + selfterm) / math.pi
    return MapSample(grid, out.reshape(f.values.shape))


# perturbative solver -----------------------------------------------------------


@dataclass
class SolveReport:
    """Outcome of :func:`neumann_solve`.

    ``residual`` is ``|| g + (dbar_J - dbar_std) T g - f ||`` for the final
    density ``g``, i.e. ``|| dbar_J u - f ||`` with ``dbar_std T`` taken to
    be the identity it is in the continuum. ``defect`` is the measured
    ``|| dbar_std T g - g ||`` of the discrete transform.
    """

    iterations: int
    residual: float
    converged: bool
    contraction: list = field(default_factory=list)
    tol: float = 0.0
    norm_p: float = 2.0
    defect: float = float("nan")
    density: Optional[MapSample] = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "contraction": list(self.contraction),
            "tol": self.tol,
            "norm_p": self.norm_p,
            "defect": self.defect,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _lp(values: np.ndarray, weights: np.ndarray, p: float) -> float:
    mag2 = np.sum(values.real ** 2 + values.imag ** 2, axis=-1)
    return float(np.sum(mag2 ** (p / 2) * weights) ** (1 / p))


def neumann_residual(g: MapSample, f: MapSample, J: StructureField, p: float = 2.0,
                     u: Optional[MapSample] = None) -> float:
    """Residual of ``(dbar_J o T) g = f`` with ``dbar_std o T = Id``."""
    u = cauchy_transform(g) if u is None else u
    w = f.grid.weights
    r = (g.values + _perturbation(u, J) - f.values) * (w > 0)[..., None]
    return _lp(r, w, p)


def neumann_solve(f: MapSample, J: StructureField, tol: float = 1e-8, max_iter: int = 50,
                  p: float = 2.0):
    """Solve ``dbar_J u = f`` on the disk by the Neumann series in ``T``.

    Iterates ``g <- f - (dbar_J - dbar_std)(T g)`` from ``g = f`` and returns
    ``u = T g`` with its :class:`SolveReport`. Among all solutions this is the
    one represented as a Cauchy transform; adding a holomorphic map gives the
    others. Non-convergence is reported, not raised.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if J.grid != f.grid or J.target_dim != f.target_dim:
        raise GridError("structure field does not match the right-hand side")
    dist = J.distance_to_standard()
    if not dist < 1:
        raise ConvergenceGateError(f"||J - J_st|| = {dist:.3f} >= 1: the series need not converge")
    grid = f.grid
    w = grid.weights
    inside = (w > 0)[..., None]
    fv = f.values * inside
    g = fv
    u = cauchy_transform(MapSample(grid, g))
    contraction = []
    prev_step = None
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        g_next = (fv - _perturbation(u, J)) * inside
        step = _lp(g_next - g, w, p)
        if prev_step is not None and prev_step > 0:
            contraction.append(step / prev_step)
        prev_step = step
        g = g_next
        u = cauchy_transform(MapSample(grid, g))
        # fixed-point residual of the new iterate, recomputed from scratch
        if neumann_residual(MapSample(grid, g), f, J, p, u=u) <= tol:
            converged = True
            break
    density = MapSample(grid, g)
    residual = neumann_residual(density, f, J, p, u=u)
    defect = _lp((dbar_std(u).values - g) * inside, w, p)
    report = SolveReport(iterations, residual, converged and residual <= tol, contraction,
                         tol, p, defect, density)
    return u, report


# Calderon-Zygmund constant ----------------------------------------------------


def d_holo(u: MapSample) -> MapSample:
    """``(d_x u - i d_y u) / 2`` nodewise."""
    dx, dy = gradient(u)
    return MapSample(u.grid, 0.5 * (dx - 1j * dy))


def cz_ratio(f: MapSample, p: float) -> float:
    """``|| d(Tf) ||_p / || f ||_p`` over the disk."""
    w = f.grid.weights
    denom = _lp(f.values, w, p)
    if denom == 0:
        raise ValueError("test function vanishes on the disk")
    return _lp(d_holo(cauchy_transform(f)).values, w, p) / denom


def random_bumps(grid: Grid, rng: np.random.Generator, count: int = 3) -> MapSample:
    """Sum of Gaussian bumps with random complex amplitudes inside ``|z| < 0.4 R``."""
    radius = grid.box[0][1]
    vals = np.zeros(grid.resolution, dtype=complex)
    for _ in range(count):
        c = 0.4 * radius * np.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
        width = radius * rng.uniform(0.08, 0.15)
        amp = rng.normal() + 1j * rng.normal()
        vals += amp * np.exp(-np.abs(grid.z - c) ** 2 / width ** 2)
    return MapSample(grid, vals)


def cz_norm_estimate(p: float, trials: int, seed: int, grid: Optional[Grid] = None,
                     witnesses=()) -> float:
    """Empirical lower estimate of the ``L^p`` norm of ``d o T``.

    Maximum of :func:`cz_ratio` over ``trials`` seeded random bump sums and
    any extra ``witnesses``; the same seed always gives the same value.
    """
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    if trials < 1:
        raise ValueError("need at least one trial")
    grid = Grid.disk(1.0, 65) if grid is None else grid
    rng = np.random.default_rng(seed)
    best = 0.0
    for f in witnesses:
        best = max(best, cz_ratio(f, p))
    for _ in range(trials):
        best = max(best, cz_ratio(random_bumps(grid, rng), p))
    return best


def epsilon_p(c_p: float) -> float:
    """Admissible ``||J - J_st||`` radius ``1 / (1 + C_p)``."""
    if not c_p >= 0:
        raise ValueError("C_p must be nonnegative")
    return 1.0 / (1.0 + c_p)


# boundary reflection and a priori ratios --------------------------------------


def reflect_extend(u: MapSample, W: Optional[TotallyRealSubspace] = None,
                   boundary_tol: float = 1e-6) -> MapSample:
    """Extend a half-disk sample to the full disk by ``u(conj z) = tau_W u(z)``.

    ``tau_W`` is the anti-linear reflection fixing ``W`` (plain complex
    conjugation for ``W = R^n``). The samples on the real segment must lie in
    ``W`` to within ``boundary_tol`` times the largest sample magnitude.
    """
    grid = u.grid
    if grid.kind != "halfdisk":
        raise GridError("reflect_extend needs a half-disk sample")
    W = TotallyRealSubspace.real(u.target_dim) if W is None else W
    if W.dim != u.target_dim:
        raise GridError("boundary subspace dimension differs from the target dimension")
    scale = max(1.0, float(np.abs(u.values).max()))
    offending = float(W.distance(u.values[:, 0, :]).max())
    if offending > boundary_tol * scale:
        raise TotalRealityError(f"boundary values leave W by up to {offending:.3e}")
    n0, n1 = grid.resolution
    full = Grid("disk", grid.params, (n0, 2 * n1 - 1))
    lower = W.reflection(u.values[:, :0:-1, :])
    return MapSample(full, np.concatenate([lower, u.values], axis=1))


def first_apriori_ratio(u: MapSample, p: float) -> float:
    """``||du||_{L^p(half disk)} / ||du||_{L^2(disk)}`` on a disk grid."""
    if not p > 2:
        raise ValueError("the first a priori estimate concerns p > 2")
    if u.grid.kind != "disk":
        raise GridError("first_apriori_ratio needs a disk grid")
    denom = lp_norm_du(u, 2.0)
    if denom == 0:
        raise ValueError("constant map: ratio undefined")
    r = u.grid.params[0]
    return lp_norm_du(u, p, Region.disk(u.grid, 0, r / 2)) / denom


def sheared_structure(grid: Grid, delta: float, width: Optional[float] = 0.5) -> StructureField:
    """``n = 1`` structure ``P J_st P^-1``, ``P = diag(a, 1/a)``, with
    ``a**-2 = 1 + delta exp(-|z|**2 / width**2)``.

    ``J - J_st`` has operator norm ``delta exp(-|z|**2 / width**2)``, so the
    sup distance to the standard structure is ``delta`` (attained at 0).
    ``width=None`` makes the shear uniform.
    """
    if not delta >= 0:
        raise ValueError("delta must be nonnegative")
    if width is None:
        bump = np.ones(grid.resolution)
    else:
        bump = np.exp(-np.abs(grid.z) ** 2 / width ** 2)
    a = 1.0 / np.sqrt(1.0 + delta * bump)
    P = np.zeros(grid.resolution + (2, 2))
    P[..., 0, 0] = a
    P[..., 1, 1] = 1.0 / a
    return StructureField.conjugated(grid, P)
