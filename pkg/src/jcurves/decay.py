"""Energy decay on long cylinders and strips.

Cylinder maps are expanded as ``u = sum_k v_k(t) exp(i k theta)``; a
holomorphic map has ``v_k(t) = c_k exp(k t)``, and the energy of one circle is
``4 pi sum_k k**2 |v_k(t)|**2``. Unit segments ``Z_i = [i-1, i]`` of
``Z(0, l)`` are numbered from 1.

Strips ``[a, b] x [0, 1]`` with totally real boundary conditions
``u(t, 0) in W0``, ``u(t, 1) in W1`` decay at the rate set by the smallest
positive eigenvalue of ``Q(v) = int |v'|**2`` on paths from ``W0`` to ``W1``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .core import Grid, GridError, MapSample, energy_density
from .dbar import TotallyRealSubspace

GAMMA_1 = 2.0 / math.e ** 2


# Fourier modes -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ModeSpectrum:
    """Circle Fourier coefficients of a cylinder map.

    Attributes
    ----------
    t : (nt,) array
    k : (2K+1,) integer array, ``-K..K``
    coeffs : (nt, 2K+1, n) complex array, ``v_k(t)``
    mean_square : (nt,) circle mean of ``|u|**2``
    tail : (nt,) power in the discarded modes ``|k| > K``
    fit : (2K+1, n) least-squares ``c_k`` with ``v_k(t) ~ c_k exp(k t)``
    fit_residual : (2K+1,) misfit of that law per mode, relative to the norm
        of all coefficients
    """

    t: np.ndarray
    k: np.ndarray
    coeffs: np.ndarray
    mean_square: np.ndarray
    tail: np.ndarray
    fit: np.ndarray
    fit_residual: np.ndarray

    @property
    def K(self) -> int:
        return int(self.k[-1])

    def parseval_defect(self) -> float:
        """Largest ``|sum_k |v_k|**2 + tail - mean|u|**2|`` over circles,
        relative to ``max(mean|u|**2, 1)``."""
        power = np.sum(np.abs(self.coeffs) ** 2, axis=(1, 2)) + self.tail
        scale = np.maximum(self.mean_square, 1.0)
        return float(np.max(np.abs(power - self.mean_square) / scale))

    def holomorphy_residual(self) -> float:
        return float(self.fit_residual.max())

    def coefficient(self, k: int) -> np.ndarray:
        return self.fit[int(k) + self.K]


def cylinder_modes(u: MapSample, K: Optional[int] = None) -> ModeSpectrum:
    """Fourier-analyse ``u`` on every circle ``{t} x S^1``.

    ``K`` defaults to a quarter of the angular resolution.
    """
    grid = u.grid
    if grid.kind != "cylinder":
        raise GridError("cylinder_modes needs a cylinder grid")
    nt, nth = grid.resolution
    K = nth // 4 if K is None else int(K)
    if K < 0 or nth < 2 * K + 2:
        raise GridError(f"{nth} angular nodes cannot resolve modes up to |k| = {K}")
    spec = np.fft.fft(u.values, axis=1) / nth
    ks = np.arange(-K, K + 1)
    idx = np.mod(ks, nth)
    coeffs = spec[:, idx, :]
    keep = np.zeros(nth, dtype=bool)
    keep[idx] = True
    tail = np.sum(np.abs(spec[:, ~keep, :]) ** 2, axis=(1, 2))
    mean_square = np.mean(np.sum(np.abs(u.values) ** 2, axis=2), axis=1)
    t = grid.axes[0]
    # weighted fit of v_k(t) = c_k e^{kt}; weights e^{kt} make it scale free
    fit = np.empty((ks.size, u.target_dim), dtype=complex)
    res = np.empty(ks.size)
    total = np.linalg.norm(coeffs)
    for m, k in enumerate(ks):
        e = np.exp(k * t)
        v = coeffs[:, m, :]
        c = (e @ v) / (e @ e)
        fit[m] = c
        res[m] = np.linalg.norm(v - np.outer(e, c)) / total if total > 0 else 0.0
    return ModeSpectrum(t, ks, coeffs, mean_square, tail, fit, res)


def circle_energy_density(spectrum: ModeSpectrum, t) -> np.ndarray:
    """``4 pi sum_k k**2 |c_k|**2 exp(2 k t)`` from the fitted coefficients."""
    t = np.asarray(t, dtype=float)
    lo, hi = spectrum.t[0], spectrum.t[-1]
    if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
        raise ValueError(f"t outside the sampled range [{lo}, {hi}]")
    k = spectrum.k.astype(float)
    amp = np.sum(np.abs(spectrum.fit) ** 2, axis=1)
    out = 4 * np.pi * np.sum(k ** 2 * amp * np.exp(2 * np.multiply.outer(t, k)), axis=-1)
    return float(out) if out.ndim == 0 else out


def mode_segment_energy(k: int, c: complex, lo: float, hi: float) -> float:
    """Exact energy of ``c exp(k (t + i theta))`` on ``[lo, hi] x S^1``."""
    if k == 0:
        return 0.0
    return 2 * np.pi * abs(k) * abs(c) ** 2 * abs(math.exp(2 * k * hi) - math.exp(2 * k * lo))


def synth_cylinder(grid: Grid, modes: dict) -> MapSample:
    """``sum_k c_k exp(k (t + i theta))`` on a cylinder grid."""
    z = grid.z
    vals = np.zeros(grid.shape, dtype=complex)
    for k, c in modes.items():
        vals += c * np.exp(k * z)
    return MapSample(grid, vals)


def random_holomorphic_modes(rng: np.random.Generator, kmax: int, t_span: float) -> dict:
    """Random complex ``c_k``, ``|k| <= kmax``, balanced near a random ``t``.

    ``c_k`` is a standard complex normal times ``exp(-k s)`` with
    ``s ~ U(0, t_span)``, so no single mode swamps the others on the whole
    cylinder.
    """
    s = rng.uniform(0, t_span)
    return {k: complex(rng.normal(), rng.normal()) * math.exp(-k * s)
            for k in range(-kmax, kmax + 1)}


# segment energies and the three-annuli inequality ---------------------------------


def segment_energies(u: MapSample) -> np.ndarray:
    """Energies of the unit segments of a cylinder or strip, from 1 upward."""
    grid = u.grid
    if grid.kind not in ("cylinder", "strip"):
        raise GridError("segment energies need a cylinder or strip grid")
    a, b = grid.params
    l = b - a
    if abs(l - round(l)) > 1e-9 or round(l) < 1:
        raise GridError("grid length must be a whole number of unit segments")
    dens = energy_density(u)
    return np.array([float(np.sum(dens * grid.segment(k).weights(grid)))
                     for k in range(1, int(round(l)) + 1)])


def three_segment_ratio(E) -> float:
    """``2 E3 / (E2 + E4)`` for consecutive segment energies ``(E2, E3, E4)``."""
    E2, E3, E4 = (float(x) for x in E)
    if min(E2, E3, E4) < 0:
        raise ValueError("energies must be nonnegative")
    if E2 + E4 <= 0:
        raise ValueError("outer segments carry no energy")
    return 2 * E3 / (E2 + E4)


def lambda_from_gamma(gamma: float) -> float:
    """Root ``lam >= 1`` of ``lam = (gamma / 2) (lam**2 + 1)``."""
    gamma = float(gamma)
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    return (1 + math.sqrt((1 - gamma) * (1 + gamma))) / gamma


def lambda_residual(gamma: float, lam: float) -> float:
    """Relative defect ``|1 - (gamma / 2)(lam + 1/lam)|`` of the recurrence."""
    return abs(1 - 0.5 * gamma * (lam + 1 / lam))


def decay_envelope(E2: float, E_last: float, lam: float, k: int, l: int) -> float:
    """Bound ``lam**-(k-2) E2 + lam**-(l-1-k) E_last`` on the energy of ``Z_k``."""
    if not lam > 1:
        raise ValueError("lambda must exceed 1")
    if not 2 <= k <= l - 1:
        raise ValueError(f"segment index {k} outside 2..{l - 1}")
    return lam ** -(k - 2) * E2 + lam ** -(l - 1 - k) * E_last


@dataclass
class DecayReport:
    """Per-segment energies ``E_i`` (``i = 1..l``) and the removability call."""

    energies: list
    eps: float
    gamma: float
    lambda_min: float
    i0: int
    tail_ok: bool
    rate: Optional[float]
    threshold_violations: list = field(default_factory=list)
    envelope_violations: list = field(default_factory=list)
    verdict: str = "removable"

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


def fit_rate(E, idx) -> Optional[float]:
    """Least-squares slope of ``log E_i`` against ``i``; zeros excluded."""
    E = np.asarray(E, dtype=float)
    idx = np.asarray(idx, dtype=float)
    keep = E > 0
    if keep.sum() < 2:
        return None
    return float(np.polyfit(idx[keep], np.log(E[keep]), 1)[0])


def removability_diagnostic(u: MapSample, eps: float = 0.1, gamma: float = 0.9,
                            i0: Optional[int] = None, slack: float = 0.02) -> DecayReport:
    """Decide whether the end ``t -> +inf`` of a cylinder map looks removable.

    Tail condition: ``E_i <= eps`` for all ``i >= i0`` (default ``ceil(l/2)``).
    Rate condition: the fitted slope of ``log E_i`` over the tail is at most
    ``-log lambda_min`` with ``lambda_min = lambda_from_gamma(gamma)``.
    Envelope violations are the segments exceeding the two-sided decay
    envelope with ``lambda_min`` by more than ``slack``.
    """
    if u.grid.kind != "cylinder":
        raise GridError("removability needs a cylinder grid")
    if not eps > 0:
        raise ValueError("eps must be positive")
    E = segment_energies(u)
    l = E.size
    if l < 5:
        raise ValueError(f"need at least 5 unit segments, got {l}")
    i0 = math.ceil(l / 2) if i0 is None else int(i0)
    if not 1 <= i0 <= l - 1:
        raise ValueError(f"i0 must lie in 1..{l - 1}")
    lam = lambda_from_gamma(gamma)
    idx = np.arange(1, l + 1)
    tail = E[i0 - 1:]
    thr = [int(i) for i in idx[i0 - 1:][tail > eps]]
    env = [k for k in range(2, l) if E[k - 1] > (1 + slack) * decay_envelope(E[1], E[l - 2], lam, k, l)]
    tail_ok = not thr
    if np.all(tail == 0):
        rate, removable = None, tail_ok
    else:
        rate = fit_rate(tail, idx[i0 - 1:])
        removable = tail_ok and rate is not None and rate <= -math.log(lam)
    return DecayReport(E.tolist(), float(eps), float(gamma), lam, i0, tail_ok, rate, thr, env,
                       "removable" if removable else "non-removable")


# strip eigenproblem ------------------------------------------------------------


@dataclass
class StripEigenResult:
    eigenvalues: list
    zero_dim: int
    intersection_dim: int
    lambda1: Optional[float]
    gamma_w: float
    N: int

    def to_json(self) -> dict:
        return asdict(self)


def _strip_matrices(W0: TotallyRealSubspace, W1: TotallyRealSubspace, N: int):
    """P1 stiffness and consistent mass on paths with ends in ``W0``, ``W1``."""
    n2 = 2 * W0.dim
    h = 1.0 / N
    main = np.full(N + 1, 2.0)
    main[[0, -1]] = 1.0
    lap = sparse.diags([main, -np.ones(N), -np.ones(N)], [0, -1, 1]) / h
    mm = np.full(N + 1, 4.0)
    mm[[0, -1]] = 2.0
    mass = sparse.diags([mm, np.ones(N), np.ones(N)], [0, -1, 1]) * (h / 6)
    eye = sparse.identity(n2)
    K = sparse.kron(lap, eye, format="csr")
    M = sparse.kron(mass, eye, format="csr")
    # end nodes constrained to the subspaces: v_0 = B0 c0, v_N = B1 c1
    blocks = [W0.basis] + [sparse.identity(n2)] * (N - 1) + [W1.basis]
    P = sparse.block_diag(blocks, format="csr")
    return (P.T @ K @ P).tocsc(), (P.T @ M @ P).tocsc()


def strip_eigs(W0: TotallyRealSubspace, W1: TotallyRealSubspace, N: int = 1000,
               count: Optional[int] = None, eigen_tol: float = 1e-8) -> StripEigenResult:
    """Lowest eigenvalues of ``Q(v) = int_0^1 |v'|**2`` with ``v(0) in W0``, ``v(1) in W1``.

    Linear finite elements on ``N`` cells; the natural boundary conditions
    ``v'(0) perp W0``, ``v'(1) perp W1`` come out of the weak form.
    Eigenvalues below ``eigen_tol * pi**2`` count as zero.
    """
    if W0.dim != W1.dim:
        raise ValueError("boundary subspaces have different dimensions")
    if N < 50:
        raise ValueError(f"N must be at least 50, got {N}")
    n = W0.dim
    count = 2 * n + 2 if count is None else int(count)
    K, M = _strip_matrices(W0, W1, N)
    size = K.shape[0]
    count = min(count, size - 2)
    # generic start vector: a symmetric one misses repeated eigenvalues
    v0 = np.random.default_rng(0).standard_normal(size)
    vals = spla.eigsh(K, k=count, M=M, sigma=-1.0, which="LM", v0=v0,
                      return_eigenvectors=False, tol=1e-13)
    vals = np.sort(vals)
    thresh = eigen_tol * math.pi ** 2
    zero = int(np.sum(vals < thresh))
    if np.any(vals < -thresh):
        raise ArithmeticError("negative eigenvalue from a positive semidefinite form")
    inter = W0.intersection_dim(W1)
    pos = vals[vals >= thresh]
    lam1 = float(pos[0]) if pos.size else None
    return StripEigenResult(vals.tolist(), zero, inter, lam1,
                            gamma_w(lam1) if lam1 is not None else 1.0, N)


def strip_lambda1_exact(beta: float) -> float:
    """``lambda_1`` for ``W0 = R``, ``W1 = exp(i beta) R`` (``n = 1``)."""
    b = math.fmod(beta, math.pi)
    b = b + math.pi if b < 0 else b
    w = min(b, math.pi - b)
    return w * w if w > 0 else math.pi ** 2


def gamma_w(lambda1: float) -> float:
    """``2 / (1 + cosh(2 sqrt(lambda1)))``."""
    if lambda1 < 0:
        raise ValueError("lambda1 must be nonnegative")
    return 2.0 / (1.0 + math.cosh(2 * math.sqrt(lambda1)))


# three strips ------------------------------------------------------------------


class BoundViolation(ArithmeticError):
    """The three-strips ratio exceeded its bound."""


def _exp_square_integral(a, b, alpha, p, q):
    # int_p^q (a e^{alpha t} + b e^{-alpha t})^2 dt
    two = 2 * alpha
    return (a * a * (math.exp(two * q) - math.exp(two * p)) / two
            + 2 * a * b * (q - p)
            + b * b * (math.exp(-two * p) - math.exp(-two * q)) / two)


def three_strips_sharp(alpha: float) -> float:
    """Supremum over ``(a, b)`` of the three-strips ratio.

    Vanishing determinant of the quadratic form gives
    ``(1 + s) / (1 + s cosh 2 alpha)`` with ``s = sinh(alpha) / alpha``.
    """
    s = math.sinh(alpha) / alpha
    return (1 + s) / (1 + s * math.cosh(2 * alpha))


def three_strips_check(a: float, b: float, alpha: float) -> tuple:
    """Middle-to-outer ratio for ``a exp(alpha t) + b exp(-alpha t)`` on ``[0, 3]``.

    Returns ``(ratio, bound)`` with ``ratio = 2 I[1,2] / (I[0,1] + I[2,3])``
    and ``bound = 2 / (1 + cosh 2 alpha)``; raises if the bound fails.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if a == 0 and b == 0:
        raise ValueError("(a, b) = (0, 0) is trivial")
    mid = _exp_square_integral(a, b, alpha, 1, 2)
    outer = _exp_square_integral(a, b, alpha, 0, 1) + _exp_square_integral(a, b, alpha, 2, 3)
    ratio = 2 * mid / outer
    bound = 2.0 / (1.0 + math.cosh(2 * alpha))
    if ratio > bound * (1 + 1e-12):
        raise BoundViolation(f"ratio {ratio} exceeds bound {bound} at a={a}, b={b}, alpha={alpha}")
    return ratio, bound


# exponents ---------------------------------------------------------------------


def corner_sobolev_exponent(alpha: float) -> float:
    """Threshold ``p* = 2 / (1 - alpha)`` for ``z**alpha`` to lie in ``L^{1,p}``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return 2.0 / (1.0 - alpha)


def boundary_decay_exponent(lambda_b: float) -> float:
    """Integrability exponent ``4 pi / (2 pi - log lambda_b)``."""
    if not 1 < lambda_b < math.exp(2 * math.pi):
        raise ValueError("lambda_b must lie in (1, exp(2 pi))")
    return 4 * math.pi / (2 * math.pi - math.log(lambda_b))


# strip energy gate -------------------------------------------------------------


@dataclass
class GateVerdict:
    energies: list
    eps: float
    first_violation: Optional[int]
    oscillation: float
    osc_tol: float
    status: str

    def to_json(self) -> dict:
        return asdict(self)


def check_strip_boundary(u: MapSample, W0: TotallyRealSubspace, W1: TotallyRealSubspace,
                         boundary_tol: float = 1e-6) -> float:
    """Largest distance of the boundary rows from ``W0`` / ``W1``, scaled."""
    from .dbar import TotalRealityError

    if u.grid.kind != "strip":
        raise GridError("needs a strip grid")
    scale = max(1.0, float(np.abs(u.values).max()))
    off = max(float(W0.distance(u.values[:, 0, :]).max()),
              float(W1.distance(u.values[:, -1, :]).max())) / scale
    if off > boundary_tol:
        raise TotalRealityError(f"boundary rows leave W0/W1 by {off:.3e} (relative)")
    return off


def nonconstancy_energy_gate(u: MapSample, W0: TotallyRealSubspace, W1: TotallyRealSubspace,
                             eps: float, osc_tol: float = 1e-2,
                             boundary_tol: float = 1e-6) -> GateVerdict:
    """Low energy on every unit strip segment should force near-constancy.

    Status ``"violation"`` reports the first segment with energy above
    ``eps``; otherwise ``"near-constant"`` if the oscillation
    ``max |u - u(center)|`` is at most ``osc_tol`` and ``"gate-failed"`` if not.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    check_strip_boundary(u, W0, W1, boundary_tol)
    E = segment_energies(u)
    over = np.flatnonzero(E > eps)
    n0, n1 = u.grid.resolution
    ref = u.values[n0 // 2, n1 // 2]
    osc = float(np.max(np.linalg.norm(u.values - ref, axis=-1)))
    if over.size:
        status, first = "violation", int(over[0]) + 1
    else:
        first = None
        status = "near-constant" if osc <= osc_tol else "gate-failed"
    return GateVerdict(E.tolist(), float(eps), first, osc, float(osc_tol), status)
