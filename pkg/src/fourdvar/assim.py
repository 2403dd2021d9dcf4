"""Preconditioned strong-constraint 4D-Var as a nonlinear least-squares problem.

With ``B = var_b * I`` the control variable is ``v = (x0 - xb) / sigma_b`` and

    r(v) = [ v ; (y_i - H_i M_{0,i}(sigma_b v + xb)) / sigma_o_i  for each i ]
    J(v) = [ I ; -(sigma_b / sigma_o_i) H_i M_{0,i}                 for each i ]

``H_i`` selects state components. Jacobians are assembled densely.
"""
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from . import models
from .models import ModelSpec, NonFiniteState, Trajectory


@dataclass(frozen=True)
class ObsEntry:
    step: int
    components: Tuple[int, ...]
    values: np.ndarray
    var_o: float

    def __post_init__(self):
        comps = tuple(int(c) for c in self.components)
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if len(comps) < 1:
            raise ValueError("observation entry needs at least one component")
        if len(set(comps)) != len(comps):
            raise ValueError("observed components must be distinct")
        if values.shape != (len(comps),):
            raise ValueError("values must match components")
        if not self.var_o > 0:
            raise ValueError("var_o must be positive")
        object.__setattr__(self, "step", int(self.step))
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "var_o", float(self.var_o))


class ObservationSet:
    """Observation entries ordered by strictly increasing time step."""

    def __init__(self, entries: Sequence[ObsEntry] = ()):
        entries = tuple(entries)
        steps = [e.step for e in entries]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("observation steps must be strictly increasing")
        self.entries = entries
        self.steps = np.array(steps, dtype=np.int64)

    @property
    def p(self):
        return sum(len(e.components) for e in self.entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __repr__(self):
        return f"ObservationSet(steps={self.steps.tolist()}, p={self.p})"


@dataclass(frozen=True)
class AssimilationProblem:
    spec: ModelSpec
    N: int
    xb: np.ndarray
    var_b: float
    obs: ObservationSet

    def __post_init__(self):
        xb = np.ascontiguousarray(self.xb, dtype=np.float64)
        if xb.shape != (self.spec.n,):
            raise ValueError("background has wrong dimension")
        if not self.var_b > 0:
            raise ValueError("var_b must be positive (B full rank)")
        if self.N < 0:
            raise ValueError("N must be non-negative")
        for e in self.obs:
            if not 0 <= e.step <= self.N:
                raise ValueError(f"observation step {e.step} outside [0, {self.N}]")
            if min(e.components) < 0 or max(e.components) >= self.spec.n:
                raise ValueError("observed component out of range")
        object.__setattr__(self, "xb", xb)
        object.__setattr__(self, "var_b", float(self.var_b))
        object.__setattr__(self, "N", int(self.N))

    @property
    def n(self):
        return self.spec.n

    @property
    def sigma_b(self):
        return float(np.sqrt(self.var_b))

    @property
    def m(self):
        """Residual length ``n + p``."""
        return self.spec.n + self.obs.p


@dataclass(frozen=True)
class Evaluation:
    """Residual and cost at ``v`` with the trajectory kept for the Jacobian."""

    v: np.ndarray
    traj: Trajectory
    r: np.ndarray
    cost: float


def _check_control(prob, v):
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.shape != (prob.n,):
        raise ValueError(f"expected control of shape ({prob.n},), got {v.shape}")
    return v


def control_to_state(prob, v):
    v = _check_control(prob, v)
    return prob.sigma_b * v + prob.xb


def state_to_control(prob, x0):
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    if x0.shape != (prob.n,):
        raise ValueError("state has wrong dimension")
    return (x0 - prob.xb) / prob.sigma_b


def evaluate(prob, v):
    """One function evaluation: integrate the model and form ``r(v)``."""
    v = _check_control(prob, v)
    traj = models.propagate(prob.spec, control_to_state(prob, v), prob.N)
    blocks = [v]
    for e in prob.obs:
        xi = traj.states[e.step]
        blocks.append((e.values - xi[list(e.components)]) / np.sqrt(e.var_o))
    r = np.concatenate(blocks)
    cost = 0.5 * float(r @ r)
    if not np.isfinite(cost):
        raise NonFiniteState(prob.N, "non-finite cost")
    return Evaluation(v, traj, r, cost)


def residual(prob, v):
    ev = evaluate(prob, v)
    return ev.r, ev.traj


def cost(prob, v):
    return evaluate(prob, v).cost


def jacobian_at(prob, ev):
    """Assemble ``J(v)`` reusing the trajectory stored in ``ev``."""
    n = prob.n
    J = np.empty((prob.m, n))
    J[:n] = np.eye(n)
    if len(prob.obs):
        mats = models.propagate_tlm_many(prob.spec, ev.traj, prob.obs.steps)
        row = n
        for e, M in zip(prob.obs, mats):
            p_i = len(e.components)
            J[row:row + p_i] = -(prob.sigma_b / np.sqrt(e.var_o)) * M[list(e.components)]
            row += p_i
    return J


def jacobian(prob, v):
    return jacobian_at(prob, evaluate(prob, v))


def gradient(prob, v):
    ev = evaluate(prob, v)
    return jacobian_at(prob, ev).T @ ev.r


def gn_hessian(prob, v):
    """Gauss-Newton Hessian ``J^T J`` (symmetrised against rounding)."""
    J = jacobian(prob, v)
    S = J.T @ J
    return 0.5 * (S + S.T)


def condition_number(S, *, atol=1e-12):
    """Ratio of extreme eigenvalues of a symmetric positive definite matrix."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(1.0, np.abs(S).max())
    if np.abs(S - S.T).max() > atol * scale:
        raise ValueError("matrix is not symmetric")
    eig = np.linalg.eigvalsh(S)
    if eig[0] <= 0:
        raise ValueError("matrix is not positive definite")
    return float(eig[-1] / eig[0])
