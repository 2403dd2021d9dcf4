"""Lorenz-63 / Lorenz-96 dynamics, explicit Runge-Kutta stepping and the
exact tangent-linear model of the discrete schemes.

The tangent linear model is the Jacobian of the *discrete* step, obtained by
differentiating each RK stage, so gradients built from it are consistent with
the discrete cost to rounding error.
"""
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import kernels

DEFAULT_DT = 0.025

_DEFAULT_PARAMS = {
    "L63": {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0},
    "L96": {"F": 8.0},
}
_DEFAULT_SCHEME = {"L63": "heun", "L96": "rk4", "linear": "rk4"}
_DEFAULT_N = {"L63": 3, "L96": 40}


class NonFiniteState(FloatingPointError):
    """Model integration produced NaN or Inf."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite model state at step {step}")


@dataclass(frozen=True)
class ModelSpec:
    """Model kind, dimension, time step, RK scheme and parameters.

    ``kind="linear"`` is a test model ``f(x) = A x`` with ``params={"A": A}``.
    """

    kind: str = "L63"
    n: Optional[int] = None
    dt: float = DEFAULT_DT
    scheme: Optional[str] = None
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in kernels.KIND_CODES:
            raise ValueError(f"unknown model kind {self.kind!r}")
        params = dict(_DEFAULT_PARAMS.get(self.kind, {}))
        params.update(self.params)
        if self.kind == "linear":
            if "A" not in params:
                raise ValueError("linear model needs params['A']")
            A = np.array(params["A"], dtype=float)
            if A.ndim != 2 or A.shape[0] != A.shape[1]:
                raise ValueError("params['A'] must be square")
            params["A"] = A
            n = A.shape[0] if self.n is None else self.n
            if n != A.shape[0]:
                raise ValueError("n does not match params['A']")
        else:
            unknown = set(params) - set(_DEFAULT_PARAMS[self.kind])
            if unknown:
                raise ValueError(f"unknown {self.kind} parameters: {sorted(unknown)}")
            params = {k: float(v) for k, v in params.items()}
            n = _DEFAULT_N[self.kind] if self.n is None else int(self.n)
        if self.kind == "L63" and n != 3:
            raise ValueError("L63 has n = 3")
        if self.kind == "L96" and n < 4:
            raise ValueError("L96 needs n >= 4")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        scheme = self.scheme or _DEFAULT_SCHEME[self.kind]
        if scheme not in kernels.SCHEME_CODES:
            raise ValueError(f"unknown RK scheme {scheme!r}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "scheme", scheme)
        object.__setattr__(self, "params", params)

    @property
    def kind_code(self):
        return kernels.KIND_CODES[self.kind]

    @property
    def scheme_code(self):
        return kernels.SCHEME_CODES[self.scheme]

    @property
    def param_array(self):
        if self.kind == "L63":
            p = self.params
            return np.array([p["sigma"], p["rho"], p["beta"]])
        if self.kind == "L96":
            return np.array([self.params["F"]])
        return np.ascontiguousarray(self.params["A"]).ravel()

    def to_dict(self):
        params = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                  for k, v in self.params.items()}
        return {"kind": self.kind, "n": self.n, "dt": self.dt,
                "scheme": self.scheme, "params": params}


@dataclass(frozen=True)
class Trajectory:
    """States at steps ``0..N`` stored as an ``(N + 1, n)`` array."""

    states: np.ndarray
    dt: float

    @property
    def N(self):
        return self.states.shape[0] - 1

    def __len__(self):
        return self.states.shape[0]

    def __getitem__(self, i):
        return self.states[i]


def _as_state(spec, x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (spec.n,):
        raise ValueError(f"expected state of shape ({spec.n},), got {x.shape}")
    return x


def rhs(spec, x):
    """Time derivative of the continuous model at ``x``."""
    x = _as_state(spec, x)
    return kernels.rhs(spec.kind_code, spec.param_array, x)


def rhs_jacobian(spec, x):
    """Analytic Jacobian ``d rhs / d x``."""
    x = _as_state(spec, x)
    return kernels.rhs_jacobian(spec.kind_code, spec.param_array, x)


def step(spec, x):
    """Advance one RK step of size ``spec.dt``."""
    x = _as_state(spec, x)
    with np.errstate(over="ignore", invalid="ignore"):
        out = kernels.step(spec.kind_code, spec.param_array, spec.scheme_code,
                           spec.dt, x)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(1)
    return out


def step_tlm(spec, x):
    """Exact Jacobian of :func:`step` at ``x``."""
    x = _as_state(spec, x)
    with np.errstate(over="ignore", invalid="ignore"):
        out = kernels.tangent_step(spec.kind_code, spec.param_array,
                                   spec.scheme_code, spec.dt, x, np.eye(spec.n))
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(1, "non-finite tangent linear model")
    return out


def propagate(spec, x0, N):
    """Integrate ``N`` steps from ``x0``; raises :class:`NonFiniteState`."""
    if N < 0:
        raise ValueError("N must be non-negative")
    x0 = _as_state(spec, x0)
    states, fail = kernels.integrate(spec.kind_code, spec.param_array,
                                     spec.scheme_code, spec.dt, x0, int(N))
    if fail >= 0:
        raise NonFiniteState(int(fail))
    return Trajectory(states, spec.dt)


def propagate_tlm_many(spec, traj, steps):
    """``M_{0,i}`` for every ``i`` in ``steps`` (ascending), as an array."""
    steps = np.asarray(steps, dtype=np.int64)
    if steps.size and (steps.min() < 0 or steps.max() > traj.N):
        raise IndexError(f"step index out of range [0, {traj.N}]")
    if np.any(np.diff(steps) < 0):
        raise ValueError("steps must be ascending")
    with np.errstate(over="ignore", invalid="ignore"):
        mats = kernels.tangent_window(spec.kind_code, spec.param_array,
                                      spec.scheme_code, spec.dt,
                                      np.ascontiguousarray(traj.states), steps)
    if not np.all(np.isfinite(mats)):
        raise NonFiniteState(int(steps[-1]), "non-finite tangent linear model")
    return mats


def propagate_tlm(spec, traj, i):
    """Tangent-linear propagator ``M_{0,i}`` along ``traj``."""
    if not 0 <= i <= traj.N:
        raise IndexError(f"step {i} out of range [0, {traj.N}]")
    return propagate_tlm_many(spec, traj, [i])[0]
