"""Pure numpy implementations of the numerical kernels.

Every function here has a compiled twin in ``_kernels.pyx`` with the same
signature and semantics. ``modeseek._backend`` picks one at import time.
"""

import math

import numpy as np

# Flow integrator return codes (shared with the compiled core).
FLOW_CRITICAL = 0
FLOW_MAX_ARC = 1
FLOW_MAX_STEPS = 2
FLOW_NONFINITE = 3

# Dormand-Prince 5(4) tableau.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b5 - b4 for b5, b4 in zip(_B5, _B4))


# ---------------------------------------------------------------------------
# Gaussian mixtures
#
# A mixture is passed as (coefs, means, precs): coefs[j] = w_j / sqrt((2 pi)^d
# det S_j), means (K, d), precs (K, d, d) = inverse covariances.
# ---------------------------------------------------------------------------


def mix_value(x, coefs, means, precs):
    diff = x - means
    q = np.einsum("ki,kij,kj->k", diff, precs, diff)
    return float(np.dot(coefs, np.exp(-0.5 * q)))


def mix_value_grad(x, coefs, means, precs):
    diff = x - means
    pd = np.einsum("kij,kj->ki", precs, diff)
    e = coefs * np.exp(-0.5 * np.einsum("ki,ki->k", diff, pd))
    return float(e.sum()), -(e @ pd)


def mix_derivs(x, coefs, means, precs):
    diff = x - means
    pd = np.einsum("kij,kj->ki", precs, diff)
    e = coefs * np.exp(-0.5 * np.einsum("ki,ki->k", diff, pd))
    grad = -(e @ pd)
    hess = np.einsum("k,ki,kj->ij", e, pd, pd) - np.einsum("k,kij->ij", e, precs)
    return float(e.sum()), grad, hess


def mix_values(X, coefs, means, precs):
    diff = X[:, None, :] - means[None, :, :]
    q = np.einsum("nki,kij,nkj->nk", diff, precs, diff)
    return np.exp(-0.5 * q) @ coefs


def mix_derivs_batch(X, coefs, means, precs):
    diff = X[:, None, :] - means[None, :, :]
    pd = np.einsum("kij,nkj->nki", precs, diff)
    e = coefs[None, :] * np.exp(-0.5 * np.einsum("nki,nki->nk", diff, pd))
    F = e.sum(axis=1)
    G = -np.einsum("nk,nki->ni", e, pd)
    H = np.einsum("nk,nki,nkj->nij", e, pd, pd) - np.einsum("nk,kij->nij", e, precs)
    return F, G, H


# ---------------------------------------------------------------------------
# Windowed kernel sums for power profiles k(u) = (1 - u)^m on [0, 1)
# ---------------------------------------------------------------------------


def kde_sums(x, sample, idx, h, power, order):
    """Raw windowed sums over ``sample[idx]`` at query ``x``.

    Returns ``(s0, s1, s2, s3)`` with u_i = |x - x_i|^2 / h^2 and only u_i < 1
    contributing:

    - s0 = sum k(u_i)
    - s1 = sum k(u_i) (x_i - x)            (mean-shift numerator)
    - s2 = sum k'(u_i) (x - x_i)            (order >= 1)
    - s3 = sum k''(u_i) (x - x_i)(x - x_i)^T, plus sum k'(u_i) on the
      diagonal scaled by h^2 / 2           (order >= 2)

    Profile constants and the 1/(n h^d) factor are applied by the caller.
    """
    d = x.shape[0]
    pts = sample[idx]
    diff = x - pts
    u = np.einsum("ij,ij->i", diff, diff) / (h * h)
    inside = u < 1.0
    diff = diff[inside]
    t = 1.0 - u[inside]
    m = power
    k = t**m if m > 0 else np.ones_like(t)
    s0 = float(k.sum())
    s1 = -(k @ diff)
    s2 = np.zeros(d)
    s3 = np.zeros((d, d))
    if order >= 1 and m >= 1:
        dk = -m * t ** (m - 1)
        s2 = dk @ diff
        if order >= 2:
            if m >= 2:
                d2k = m * (m - 1) * t ** (m - 2)
                s3 = np.einsum("i,ij,ik->jk", d2k, diff, diff)
            s3 = s3 + np.eye(d) * (dk.sum() * h * h / 2.0)
    return s0, s1, s2, s3


# ---------------------------------------------------------------------------
# Gradient-flow integration for mixtures
# ---------------------------------------------------------------------------


def _field(g, unit_speed):
    if unit_speed:
        n = math.sqrt(float(g @ g))
        return g / n if n > 0 else g
    return g


def flow_mixture(x0, coefs, means, precs, rtol, atol, h_max, grad_stop,
                 max_arc, max_step_len, unit_speed, max_steps):
    """Integrate dx/dt = grad f (or grad f / |grad f|) with adaptive DP5(4).

    Returns ``(points, code)`` where points is an (m, d) array starting at x0.
    """
    return flow_generic(
        lambda y: mix_value_grad(y, coefs, means, precs),
        lambda y: mix_derivs(y, coefs, means, precs),
        x0, rtol, atol, h_max, grad_stop, max_arc, max_step_len, unit_speed, max_steps,
    )


def flow_generic(value_grad, derivs, x0, rtol, atol, h_max, grad_stop,
                 max_arc, max_step_len, unit_speed, max_steps):
    """``flow_mixture`` for any density given as callables."""
    y = np.array(x0, dtype=float)
    f, g, H = derivs(y)
    points = [y.copy()]
    gnorm = math.sqrt(float(g @ g))
    if gnorm <= grad_stop:
        return np.array(points), FLOW_CRITICAL
    k1 = _field(g, unit_speed)
    hn = math.sqrt(float(np.sum(H * H)))
    h = h_max if hn == 0 else min(h_max, 0.1 / hn)
    arc = 0.0
    steps = 0
    ks = [None] * 7
    while True:
        if steps >= max_steps:
            return np.array(points), FLOW_MAX_STEPS
        cap = h_max
        if hn > 0:
            cap = min(cap, (0.1 * gnorm / hn) if unit_speed else (0.1 / hn))
        speed = math.sqrt(float(k1 @ k1))
        if speed > 0 and max_step_len > 0:
            cap = min(cap, max_step_len / speed)
        h = min(h, cap)
        ks[0] = k1
        for s in range(1, 7):
            ys = y.copy()
            for j, a in enumerate(_A[s]):
                if a != 0.0:
                    ys += h * a * ks[j]
            if s < 6:
                _, gs = value_grad(ys)
                ks[s] = _field(gs, unit_speed)
            else:
                y_new = ys
                f_new, g_new, H_new = derivs(y_new)
                ks[6] = _field(g_new, unit_speed)
        err_vec = np.zeros_like(y)
        for j in range(7):
            if _E[j] != 0.0:
                err_vec += h * _E[j] * ks[j]
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec) / scale))
        steps += 1
        if not math.isfinite(err) or not math.isfinite(f_new):
            return np.array(points), FLOW_NONFINITE
        disp = math.sqrt(float((y_new - y) @ (y_new - y)))
        if max_step_len > 0 and disp > max_step_len:
            # the cap uses the start-of-step speed; reject steps that outran it
            h *= max(0.2, 0.9 * max_step_len / disp)
            continue
        if err <= 1.0:
            arc += disp
            y = y_new
            g = g_new
            H = H_new
            points.append(y.copy())
            k1 = ks[6]
            gnorm = math.sqrt(float(g @ g))
            hn = math.sqrt(float(np.sum(H * H)))
            if gnorm <= grad_stop:
                return np.array(points), FLOW_CRITICAL
            if arc > max_arc:
                return np.array(points), FLOW_MAX_ARC
        fac = 5.0 if err == 0.0 else 0.9 * err ** -0.2
        h *= min(5.0, max(0.2, fac))
