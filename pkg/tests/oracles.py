"""Independent reference implementations used to derive expected values.

Nothing here imports the package under test: densities come from
scipy.stats, derivatives from finite differences, flows from solve_ivp,
and set queries from linear scans.
"""

import math

import numpy as np
from scipy import integrate
from scipy.stats import multivariate_normal


def mixture_pdf(weights, means, covs):
    comps = [multivariate_normal(mean=np.atleast_1d(m), cov=np.atleast_2d(c)) for m, c in zip(means, covs)]
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()

    def f(x):
        return float(sum(wi * c.pdf(np.atleast_1d(x)) for wi, c in zip(w, comps)))
    return f


def fd_grad(f, x, step=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def fd_hess(f, x, step=1e-4):
    x = np.asarray(x, dtype=float)
    d = len(x)
    H = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = step
            ej[j] = step
            H[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * step**2)
    return H


def kernel_mass(k, d):
    """Integral over R^d of k(|x|^2) by direct Cartesian quadrature (d <= 2)."""
    if d == 1:
        return integrate.quad(lambda t: k(t * t), -1.0, 1.0, limit=200)[0]
    if d == 2:
        return integrate.dblquad(lambda y, x: k(x * x + y * y), -1.0, 1.0,
                                 lambda x: -math.sqrt(1 - x * x), lambda x: math.sqrt(1 - x * x))[0]
    raise ValueError("kernel_mass supports d <= 2")


def kde_brute(sample, x, h, k, mass):
    """Textbook KDE: (1 / (n h^d mass)) sum_i k(|x - x_i|^2 / h^2), every point visited."""
    X = np.atleast_2d(np.asarray(sample, dtype=float))
    if X.shape[0] == 1 and np.ndim(sample) == 1:
        X = X.T
    n, d = X.shape
    total = 0.0
    for xi in X:
        u = float(np.sum((np.asarray(x) - xi) ** 2)) / h**2
        if u < 1.0:
            total += k(u)
    return total / (n * h**d * mass)


def weighted_mean_shift(sample, x, h, k):
    """sum k_i x_i / sum k_i - x over the open window, by linear scan."""
    X = np.atleast_2d(np.asarray(sample, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    num = np.zeros_like(x)
    den = 0.0
    for xi in X:
        u = float(np.sum((x - xi) ** 2)) / h**2
        if u < 1.0:
            w = k(u)
            num += w * xi
            den += w
    return num / den - x


def flow_endpoint(grad, x0, t_end=200.0):
    """Endpoint of dx/dt = grad(x) by an off-the-shelf stiff-capable integrator."""
    sol = integrate.solve_ivp(lambda t, y: grad(y), (0.0, t_end), np.atleast_1d(np.asarray(x0, float)),
                              method="LSODA", rtol=1e-10, atol=1e-12)
    return sol.y[:, -1]


def linear_scan(points, x, r):
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P.reshape(-1, 1)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.array([i for i, p in enumerate(P) if math.dist(p, x) <= r], dtype=int)


def disk_argmax(f, x, eps, n_radial=400, n_angle=2000):
    """Best value of f over a dense polar grid of the closed disk B(x, eps)."""
    x = np.asarray(x, dtype=float)
    best = (f(x), x)
    for r in np.linspace(eps / n_radial, eps, n_radial):
        for t in np.linspace(0.0, 2 * math.pi, n_angle, endpoint=False):
            y = x + r * np.array([math.cos(t), math.sin(t)])
            v = f(y)
            if v > best[0]:
                best = (v, y)
    return best


def interval_argmax(f, a, b, n=200001):
    t = np.linspace(a, b, n)
    v = np.array([f(s) for s in t])
    i = int(np.argmax(v))
    return t[i], v[i]
