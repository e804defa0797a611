"""Independent reference computations shared by the unit and acceptance tests.

Nothing here calls the code under test.
"""

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar


def shooting_eigenvalues(beta, count, lam_max):
    """Eigenvalues of -v'' = lam v, v(0) in R, v'(0) in iR, v(1) in e^{i beta}R,
    v'(1) perp e^{i beta}R, by integrating the ODE from both initial data.

    Eigenvalues are the zeros of the smallest singular value of the 2x2
    end-condition matrix; double eigenvalues (beta = pi/2) do not change the
    sign of its determinant, so zeros are located as local minima.
    """
    d = np.array([math.cos(beta), math.sin(beta)])
    n = np.array([-math.sin(beta), math.cos(beta)])

    def end(lam, y0):
        f = lambda t, y: [y[2], y[3], -lam * y[0], -lam * y[1]]
        return solve_ivp(f, (0, 1), y0, method="DOP853", rtol=1e-12, atol=1e-13).y[:, -1]

    def smin(lam):
        # x(0) free, x'(0) = 0; y(0) = 0, y'(0) free
        a = end(lam, [1, 0, 0, 0])
        b = end(lam, [0, 0, 0, 1])
        m = np.array([[a[:2] @ n, b[:2] @ n], [a[2:] @ d, b[2:] @ d]])
        return np.linalg.svd(m, compute_uv=False)[-1]

    grid = np.linspace(1e-3, lam_max, 60)
    vals = [smin(x) for x in grid]
    roots = []
    for i in range(1, len(grid) - 1):
        if vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1]:
            res = minimize_scalar(smin, bounds=(grid[i - 1], grid[i + 1]), method="bounded",
                                  options={"xatol": 1e-12})
            if res.fun < 1e-7:
                roots.append(float(res.x))
    return roots[:count]


def zk_ratio(k, p):
    """Closed form of ||du||_{L^p(|z|<1/2)} / ||du||_{L^2(|z|<1)} for u = z**k,
    using |du| = sqrt(2) k |z|**(k-1)."""
    num = 2 ** (p / 2) * k ** p * 2 * math.pi * 0.5 ** (p * (k - 1) + 2) / (p * (k - 1) + 2)
    return num ** (1 / p) / math.sqrt(2 * math.pi * k)
