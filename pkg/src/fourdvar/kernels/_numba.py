"""Loop-based kernels compiled with numba.

Everything here takes plain arrays plus integer codes so that a single
compiled specialisation serves every model. ``kind``: 0 = L63, 1 = L96,
2 = linear ``f(x) = A x`` with ``A`` stored row-major in ``params``.
``scheme``: 0 = Heun, 1 = explicit midpoint, 2 = classical RK4.
"""
import numpy as np

from .._jit import njit


@njit
def _rhs_into(kind, params, x, out):
    n = x.shape[0]
    if kind == 0:
        sigma, rho, beta = params[0], params[1], params[2]
        out[0] = sigma * (x[1] - x[0])
        out[1] = x[0] * (rho - x[2]) - x[1]
        out[2] = x[0] * x[1] - beta * x[2]
    elif kind == 2:
        for a in range(n):
            acc = 0.0
            for b in range(n):
                acc += params[a * n + b] * x[b]
            out[a] = acc
    else:
        forcing = params[0]
        for j in range(n):
            jm2 = (j - 2) % n
            jm1 = (j - 1) % n
            jp1 = (j + 1) % n
            out[j] = (x[jp1] - x[jm2]) * x[jm1] - x[j] + forcing


@njit
def _jac_apply_into(kind, params, x, X, out):
    # out = J(x) @ X without forming J
    n = x.shape[0]
    m = X.shape[1]
    if kind == 0:
        sigma, rho, beta = params[0], params[1], params[2]
        for c in range(m):
            a0 = X[0, c]
            a1 = X[1, c]
            a2 = X[2, c]
            out[0, c] = sigma * (a1 - a0)
            out[1, c] = (rho - x[2]) * a0 - a1 - x[0] * a2
            out[2, c] = x[1] * a0 + x[0] * a1 - beta * a2
    elif kind == 2:
        for a in range(n):
            for c in range(m):
                acc = 0.0
                for b in range(n):
                    acc += params[a * n + b] * X[b, c]
                out[a, c] = acc
    else:
        for j in range(n):
            jm2 = (j - 2) % n
            jm1 = (j - 1) % n
            jp1 = (j + 1) % n
            w_m2 = -x[jm1]
            w_m1 = x[jp1] - x[jm2]
            w_p1 = x[jm1]
            for c in range(m):
                out[j, c] = (w_m2 * X[jm2, c] + w_m1 * X[jm1, c]
                             - X[j, c] + w_p1 * X[jp1, c])


@njit
def rhs(kind, params, x):
    out = np.empty_like(x)
    _rhs_into(kind, params, x, out)
    return out


@njit
def rhs_jacobian(kind, params, x):
    n = x.shape[0]
    out = np.empty((n, n))
    _jac_apply_into(kind, params, x, np.eye(n), out)
    return out


@njit
def _step_into(kind, params, scheme, dt, x, out, k1, k2, k3, k4, tmp):
    n = x.shape[0]
    _rhs_into(kind, params, x, k1)
    if scheme == 0:
        for j in range(n):
            tmp[j] = x[j] + dt * k1[j]
        _rhs_into(kind, params, tmp, k2)
        for j in range(n):
            out[j] = x[j] + 0.5 * dt * (k1[j] + k2[j])
    elif scheme == 1:
        for j in range(n):
            tmp[j] = x[j] + 0.5 * dt * k1[j]
        _rhs_into(kind, params, tmp, k2)
        for j in range(n):
            out[j] = x[j] + dt * k2[j]
    else:
        for j in range(n):
            tmp[j] = x[j] + 0.5 * dt * k1[j]
        _rhs_into(kind, params, tmp, k2)
        for j in range(n):
            tmp[j] = x[j] + 0.5 * dt * k2[j]
        _rhs_into(kind, params, tmp, k3)
        for j in range(n):
            tmp[j] = x[j] + dt * k3[j]
        _rhs_into(kind, params, tmp, k4)
        for j in range(n):
            out[j] = x[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])


@njit
def step(kind, params, scheme, dt, x):
    n = x.shape[0]
    out = np.empty(n)
    _step_into(kind, params, scheme, dt, x, out, np.empty(n), np.empty(n),
               np.empty(n), np.empty(n), np.empty(n))
    return out


@njit
def _tangent_into(kind, params, scheme, dt, x, X, out, k1, k2, k3, tmp,
                  K1, K2, K3, K4, T):
    # out = d step(x) @ X, chain rule through the RK stages
    n, m = X.shape
    _rhs_into(kind, params, x, k1)
    _jac_apply_into(kind, params, x, X, K1)
    if scheme == 0:
        for j in range(n):
            tmp[j] = x[j] + dt * k1[j]
            for c in range(m):
                T[j, c] = X[j, c] + dt * K1[j, c]
        _jac_apply_into(kind, params, tmp, T, K2)
        for j in range(n):
            for c in range(m):
                out[j, c] = X[j, c] + 0.5 * dt * (K1[j, c] + K2[j, c])
    elif scheme == 1:
        for j in range(n):
            tmp[j] = x[j] + 0.5 * dt * k1[j]
            for c in range(m):
                T[j, c] = X[j, c] + 0.5 * dt * K1[j, c]
        _jac_apply_into(kind, params, tmp, T, K2)
        for j in range(n):
            for c in range(m):
                out[j, c] = X[j, c] + dt * K2[j, c]
    else:
        for j in range(n):
            tmp[j] = x[j] + 0.5 * dt * k1[j]
            for c in range(m):
                T[j, c] = X[j, c] + 0.5 * dt * K1[j, c]
        _rhs_into(kind, params, tmp, k2)
        _jac_apply_into(kind, params, tmp, T, K2)
        for j in range(n):
            tmp[j] = x[j] + 0.5 * dt * k2[j]
            for c in range(m):
                T[j, c] = X[j, c] + 0.5 * dt * K2[j, c]
        _rhs_into(kind, params, tmp, k3)
        _jac_apply_into(kind, params, tmp, T, K3)
        for j in range(n):
            tmp[j] = x[j] + dt * k3[j]
            for c in range(m):
                T[j, c] = X[j, c] + dt * K3[j, c]
        _jac_apply_into(kind, params, tmp, T, K4)
        for j in range(n):
            for c in range(m):
                out[j, c] = X[j, c] + dt / 6.0 * (
                    K1[j, c] + 2.0 * K2[j, c] + 2.0 * K3[j, c] + K4[j, c])


@njit
def tangent_step(kind, params, scheme, dt, x, X):
    n, m = X.shape
    out = np.empty((n, m))
    _tangent_into(kind, params, scheme, dt, x, X, out,
                  np.empty(n), np.empty(n), np.empty(n), np.empty(n),
                  np.empty((n, m)), np.empty((n, m)), np.empty((n, m)),
                  np.empty((n, m)), np.empty((n, m)))
    return out


@njit
def integrate(kind, params, scheme, dt, x0, nsteps):
    """Return ``(states, fail)``; ``fail`` is the first non-finite step or -1."""
    n = x0.shape[0]
    states = np.empty((nsteps + 1, n))
    states[0] = x0
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    for i in range(nsteps):
        _step_into(kind, params, scheme, dt, states[i], states[i + 1],
                   k1, k2, k3, k4, tmp)
        for j in range(n):
            if not np.isfinite(states[i + 1, j]):
                return states, i + 1
    return states, -1


@njit
def tangent_window(kind, params, scheme, dt, states, steps):
    """Tangent-linear propagators M_{0,i} for each ``i`` in ascending ``steps``."""
    n = states.shape[1]
    nout = steps.shape[0]
    mats = np.empty((nout, n, n))
    X = np.eye(n)
    Y = np.empty((n, n))
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    tmp = np.empty(n)
    K1 = np.empty((n, n))
    K2 = np.empty((n, n))
    K3 = np.empty((n, n))
    K4 = np.empty((n, n))
    T = np.empty((n, n))
    i = 0
    for q in range(nout):
        target = steps[q]
        while i < target:
            _tangent_into(kind, params, scheme, dt, states[i], X, Y,
                          k1, k2, k3, tmp, K1, K2, K3, K4, T)
            X, Y = Y, X
            i += 1
        mats[q] = X
    return mats
