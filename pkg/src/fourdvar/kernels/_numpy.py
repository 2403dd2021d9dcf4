"""Vectorised numpy kernels; same signatures as the numba backend."""
import numpy as np


def rhs(kind, params, x):
    if kind == 0:
        sigma, rho, beta = params[0], params[1], params[2]
        return np.array([
            sigma * (x[1] - x[0]),
            x[0] * (rho - x[2]) - x[1],
            x[0] * x[1] - beta * x[2],
        ])
    if kind == 2:
        return _linear_matrix(params, x.shape[0]) @ x
    return (np.roll(x, -1) - np.roll(x, 2)) * np.roll(x, 1) - x + params[0]


def _linear_matrix(params, n):
    return np.asarray(params).reshape(n, n)


def _jac_apply(kind, params, x, X):
    if kind == 2:
        return _linear_matrix(params, x.shape[0]) @ X
    if kind == 0:
        return rhs_jacobian(kind, params, x) @ X
    # row j couples to columns j-2, j-1, j, j+1 (cyclic)
    w_m2 = -np.roll(x, 1)
    w_m1 = np.roll(x, -1) - np.roll(x, 2)
    w_p1 = np.roll(x, 1)
    return (w_m2[:, None] * np.roll(X, 2, axis=0)
            + w_m1[:, None] * np.roll(X, 1, axis=0)
            - X
            + w_p1[:, None] * np.roll(X, -1, axis=0))


def rhs_jacobian(kind, params, x):
    if kind == 0:
        sigma, rho, beta = params[0], params[1], params[2]
        return np.array([
            [-sigma, sigma, 0.0],
            [rho - x[2], -1.0, -x[0]],
            [x[1], x[0], -beta],
        ])
    if kind == 2:
        return _linear_matrix(params, x.shape[0]).copy()
    return _jac_apply(kind, params, x, np.eye(x.shape[0]))


def step(kind, params, scheme, dt, x):
    k1 = rhs(kind, params, x)
    if scheme == 0:
        k2 = rhs(kind, params, x + dt * k1)
        return x + 0.5 * dt * (k1 + k2)
    if scheme == 1:
        return x + dt * rhs(kind, params, x + 0.5 * dt * k1)
    k2 = rhs(kind, params, x + 0.5 * dt * k1)
    k3 = rhs(kind, params, x + 0.5 * dt * k2)
    k4 = rhs(kind, params, x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def tangent_step(kind, params, scheme, dt, x, X):
    k1 = rhs(kind, params, x)
    K1 = _jac_apply(kind, params, x, X)
    if scheme == 0:
        K2 = _jac_apply(kind, params, x + dt * k1, X + dt * K1)
        return X + 0.5 * dt * (K1 + K2)
    if scheme == 1:
        K2 = _jac_apply(kind, params, x + 0.5 * dt * k1, X + 0.5 * dt * K1)
        return X + dt * K2
    x2 = x + 0.5 * dt * k1
    k2 = rhs(kind, params, x2)
    K2 = _jac_apply(kind, params, x2, X + 0.5 * dt * K1)
    x3 = x + 0.5 * dt * k2
    k3 = rhs(kind, params, x3)
    K3 = _jac_apply(kind, params, x3, X + 0.5 * dt * K2)
    K4 = _jac_apply(kind, params, x + dt * k3, X + dt * K3)
    return X + dt / 6.0 * (K1 + 2.0 * K2 + 2.0 * K3 + K4)


def integrate(kind, params, scheme, dt, x0, nsteps):
    states = np.empty((nsteps + 1, x0.shape[0]))
    states[0] = x0
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(nsteps):
            states[i + 1] = step(kind, params, scheme, dt, states[i])
            if not np.all(np.isfinite(states[i + 1])):
                return states, i + 1
    return states, -1


def tangent_window(kind, params, scheme, dt, states, steps):
    n = states.shape[1]
    mats = np.empty((len(steps), n, n))
    X = np.eye(n)
    i = 0
    for q, target in enumerate(steps):
        while i < target:
            X = tangent_step(kind, params, scheme, dt, states[i], X)
            i += 1
        mats[q] = X
    return mats
