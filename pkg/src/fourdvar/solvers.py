"""Gauss-Newton outer loops with exact inner solves.

Three methods share the same step machinery and stopping logic:

* ``GN``  plain Gauss-Newton, ``S s = -g``;
* ``LS``  GN direction with backtracking-Armijo line search;
* ``REG`` quadratic regularisation, ``(S + gamma I) s = -g`` with a
  ratio test on actual versus predicted decrease.

Evaluation accounting: the initial function evaluation counts as ``l = 1`` and
the initial Jacobian as ``kJ = 1``. Before every further evaluation the budget
``kJ + l <= tau_e`` is checked and the solver stops if it would be exceeded.
"""
import enum
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from . import assim
from .models import NonFiniteState

METHODS = ("GN", "LS", "REG")
STOP_MODES = ("relfunc", "gradnorm")


class StopReason(str, enum.Enum):
    BUDGET = "Budget"
    REL_FUNC = "RelFunc"
    GRAD_NORM = "GradNorm"
    MAX_BACKTRACKS = "MaxBacktracks"
    NON_FINITE = "NonFinite"

    def __str__(self):
        return self.value


class NotSPD(np.linalg.LinAlgError):
    """Cholesky factorisation broke down."""


@dataclass(frozen=True)
class LineSearchOptions:
    alpha0: float = 1.0
    beta: float = 0.1
    tau: float = 0.5
    max_backtracks: int = 60

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if self.max_backtracks < 0:
            raise ValueError("max_backtracks must be non-negative")


@dataclass(frozen=True)
class RegOptions:
    gamma0: float = 1.0
    eta1: float = 0.1
    eta2: float = 0.9
    decrease: float = 0.5
    increase: float = 2.0

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")
        if not 0 < self.eta1 <= self.eta2 < 1:
            raise ValueError("need 0 < eta1 <= eta2 < 1")
        if not 0 < self.decrease < 1 < self.increase:
            raise ValueError("need 0 < decrease < 1 < increase")


@dataclass(frozen=True)
class SolverOptions:
    method: str = "GN"
    tau_e: int = 8
    tau_s: float = 1e-5
    tau_g: float = 1e-5
    stop_mode: str = "relfunc"
    ls: LineSearchOptions = field(default_factory=LineSearchOptions)
    reg: RegOptions = field(default_factory=RegOptions)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.stop_mode not in STOP_MODES:
            raise ValueError(f"unknown stop mode {self.stop_mode!r}")
        if int(self.tau_e) != self.tau_e or self.tau_e < 2:
            raise ValueError("tau_e must be an integer >= 2")
        if not self.tau_s > 0 or not self.tau_g > 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class IterationRecord:
    """One trial point, i.e. one function evaluation after the initial one.

    ``cost`` is the trial cost (``inf`` when the model blew up), ``base_cost``
    and ``grad_norm`` refer to the iterate the step was taken from and
    ``alpha_or_gamma`` is the step length (GN, LS) or regularisation
    parameter (REG) used for this trial.
    """

    k: int
    l: int
    kJ: int
    cost: float
    base_cost: float
    grad_norm: float
    step_norm: float
    accepted: bool
    alpha_or_gamma: float
    slope: float = float("nan")
    predicted: float = float("nan")
    rho: float = float("nan")
    gamma_next: float = float("nan")


@dataclass(frozen=True)
class SolverTrace:
    method: str
    iterations: Tuple[IterationRecord, ...]
    v0: np.ndarray
    initial_cost: float
    final_v: np.ndarray
    final_cost: float
    best_v: np.ndarray
    best_cost: float
    final_grad_norm: float
    final_step_norm: float
    stop_reason: StopReason
    l: int
    kJ: int

    @property
    def n_accepted(self):
        return sum(1 for rec in self.iterations if rec.accepted)

    def accepted_costs(self):
        return [self.initial_cost] + [r.cost for r in self.iterations if r.accepted]


def spd_solve(A, b):
    """Solve ``A s = b`` for symmetric positive definite ``A`` via Cholesky."""
    try:
        factor = scipy.linalg.cho_factor(A, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NotSPD(f"Cholesky factorisation failed: {exc}") from exc
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def step_solve(Jm, r, gamma=0.0):
    """Step ``s`` solving ``(J^T J + gamma I) s = -J^T r``.

    Uses Cholesky on the normal equations. When rounding in ``J^T J`` destroys
    definiteness (extreme ``sigma_b / sigma_o``) the same step is computed as
    the least-squares solution of ``[J; sqrt(gamma) I] s = -[r; 0]``.
    """
    g = Jm.T @ r
    n = Jm.shape[1]
    try:
        return spd_solve(Jm.T @ Jm + gamma * np.eye(n), -g)
    except NotSPD:
        A = np.vstack([Jm, np.sqrt(gamma) * np.eye(n)]) if gamma > 0 else Jm
        b = -np.concatenate([r, np.zeros(n)]) if gamma > 0 else -r
        return np.linalg.lstsq(A, b, rcond=None)[0]


def check_stop(opts, *, l, kJ, k, prev_cost, cost, grad_norm,
               next_fevals=1, next_jevals=0):
    """Return the first satisfied stopping reason, or ``None`` to continue.

    ``prev_cost`` is the cost of the previous accepted iterate (``None`` at
    ``k = 0``); ``grad_norm`` may be ``None`` when no Jacobian is available
    at the current iterate. The budget test looks ahead at the evaluations
    the next action needs.
    """
    if grad_norm is not None and grad_norm == 0.0:
        return StopReason.GRAD_NORM
    if opts.stop_mode == "relfunc":
        if k >= 1 and prev_cost is not None:
            if abs(prev_cost - cost) / (1.0 + cost) <= opts.tau_s:
                return StopReason.REL_FUNC
    elif grad_norm is not None and grad_norm <= opts.tau_g:
        return StopReason.GRAD_NORM
    if kJ + l + next_fevals + next_jevals > opts.tau_e:
        return StopReason.BUDGET
    return None


class _Run:
    """Counters, records and best-iterate bookkeeping for one solver run."""

    def __init__(self, prob, v0, opts):
        self.prob = prob
        self.opts = opts
        self.v0 = np.array(v0, dtype=np.float64)
        self.l = 0
        self.kJ = 0
        self.k = 0
        self.records = []
        self.best = None
        self.prev_v = None

    def affordable(self, nf, nj):
        return self.kJ + self.l + nf + nj <= self.opts.tau_e

    def evaluate(self, v):
        self.l += 1
        try:
            return assim.evaluate(self.prob, v)
        except NonFiniteState:
            return None

    def jacobian(self, ev):
        self.kJ += 1
        try:
            Jm = assim.jacobian_at(self.prob, ev)
        except NonFiniteState:
            return None
        if not np.all(np.isfinite(Jm)):
            return None
        return Jm

    def accept(self, base_v, ev):
        self.k += 1
        self.prev_v = base_v
        if self.best is None or ev.cost < self.best.cost:
            self.best = ev

    def finish(self, method, initial_cost, ev, grad_norm, reason):
        best = self.best
        if best is None:
            best_v, best_cost = self.v0, initial_cost
        else:
            best_v, best_cost = best.v, best.cost
        final_v = self.v0 if ev is None else ev.v
        final_cost = initial_cost if ev is None else ev.cost
        if self.prev_v is None:
            step_norm = float("nan")
        else:
            step_norm = float(np.linalg.norm(final_v - self.prev_v))
        return SolverTrace(
            method=method,
            iterations=tuple(self.records),
            v0=self.v0,
            initial_cost=initial_cost,
            final_v=final_v,
            final_cost=final_cost,
            best_v=best_v,
            best_cost=best_cost,
            final_grad_norm=float("nan") if grad_norm is None else grad_norm,
            final_step_norm=step_norm,
            stop_reason=StopReason(reason),
            l=self.l,
            kJ=self.kJ,
        )


def _start(run, method):
    """Initial function and Jacobian evaluation shared by all methods."""
    ev = run.evaluate(run.v0)
    if ev is None:
        trace = run.finish(method, float("inf"), None, None, StopReason.NON_FINITE)
        return None, None, None, trace
    Jm = run.jacobian(ev)
    if Jm is None:
        trace = run.finish(method, ev.cost, ev, None, StopReason.NON_FINITE)
        return None, None, None, trace
    return ev, Jm, Jm.T @ ev.r, None


def solve_gn(prob, v0, opts=None):
    opts = opts or SolverOptions(method="GN")
    run = _Run(prob, v0, opts)
    ev, Jm, g, trace = _start(run, "GN")
    if trace is not None:
        return trace
    initial_cost = ev.cost
    prev_cost = None
    while True:
        gnorm = float(np.linalg.norm(g))
        reason = check_stop(opts, l=run.l, kJ=run.kJ, k=run.k, prev_cost=prev_cost,
                            cost=ev.cost, grad_norm=gnorm,
                            next_fevals=1, next_jevals=1)
        if reason is not None:
            break
        s = step_solve(Jm, ev.r)
        ev_new = run.evaluate(ev.v + s)
        J_new = run.jacobian(ev_new) if ev_new is not None else None
        if J_new is None:
            # the pair of evaluations is charged atomically so kJ == l holds
            if ev_new is None:
                run.kJ += 1
            run.records.append(IterationRecord(
                k=run.k, l=run.l, kJ=run.kJ,
                cost=float("inf") if ev_new is None else ev_new.cost,
                base_cost=ev.cost, grad_norm=gnorm,
                step_norm=float(np.linalg.norm(s)), accepted=False,
                alpha_or_gamma=1.0))
            reason = StopReason.NON_FINITE
            break
        run.accept(ev.v, ev_new)
        run.records.append(IterationRecord(
            k=run.k, l=run.l, kJ=run.kJ, cost=ev_new.cost, base_cost=ev.cost,
            grad_norm=gnorm, step_norm=float(np.linalg.norm(s)), accepted=True,
            alpha_or_gamma=1.0))
        prev_cost = ev.cost
        ev, Jm, g = ev_new, J_new, J_new.T @ ev_new.r
    return run.finish("GN", initial_cost, ev, float(np.linalg.norm(g)), reason)


def _after_accept(run, opts, ev, prev_cost):
    """Jacobian at a freshly accepted iterate, or the reason we cannot get one."""
    if not run.affordable(0, 1):
        reason = check_stop(opts, l=run.l, kJ=run.kJ, k=run.k, prev_cost=prev_cost,
                            cost=ev.cost, grad_norm=None,
                            next_fevals=0, next_jevals=1)
        return None, reason or StopReason.BUDGET
    Jm = run.jacobian(ev)
    if Jm is None:
        return None, StopReason.NON_FINITE
    return Jm, None


def solve_ls(prob, v0, opts=None):
    opts = opts or SolverOptions(method="LS")
    ls = opts.ls
    run = _Run(prob, v0, opts)
    ev, Jm, g, trace = _start(run, "LS")
    if trace is not None:
        return trace
    initial_cost = ev.cost
    prev_cost = None
    gnorm = float(np.linalg.norm(g))
    while True:
        reason = check_stop(opts, l=run.l, kJ=run.kJ, k=run.k, prev_cost=prev_cost,
                            cost=ev.cost, grad_norm=gnorm, next_fevals=1)
        if reason is not None:
            break
        s = step_solve(Jm, ev.r)
        slope = float(s @ g)
        if not slope < 0:
            raise RuntimeError(f"Gauss-Newton step is not a descent direction (slope={slope})")
        alpha = ls.alpha0
        backtracks = 0
        accepted = None
        while True:
            if not run.affordable(1, 0):
                reason = StopReason.BUDGET
                break
            trial = run.evaluate(ev.v + alpha * s)
            trial_cost = float("inf") if trial is None else trial.cost
            ok = trial_cost <= ev.cost + ls.beta * alpha * slope
            if ok:
                run.accept(ev.v, trial)
            run.records.append(IterationRecord(
                k=run.k, l=run.l, kJ=run.kJ, cost=trial_cost, base_cost=ev.cost,
                grad_norm=gnorm, step_norm=float(alpha * np.linalg.norm(s)),
                accepted=ok, alpha_or_gamma=alpha, slope=slope))
            if ok:
                accepted = trial
                break
            backtracks += 1
            if backtracks > ls.max_backtracks:
                reason = StopReason.MAX_BACKTRACKS
                break
            alpha *= ls.tau
        if accepted is None:
            break
        prev_cost = ev.cost
        ev = accepted
        Jm, reason = _after_accept(run, opts, ev, prev_cost)
        if Jm is None:
            gnorm = None
            break
        g = Jm.T @ ev.r
        gnorm = float(np.linalg.norm(g))
    return run.finish("LS", initial_cost, ev, gnorm, reason)


def solve_reg(prob, v0, opts=None):
    opts = opts or SolverOptions(method="REG")
    rg = opts.reg
    run = _Run(prob, v0, opts)
    ev, Jm, g, trace = _start(run, "REG")
    if trace is not None:
        return trace
    initial_cost = ev.cost
    prev_cost = None
    gamma = rg.gamma0
    gnorm = float(np.linalg.norm(g))
    while True:
        reason = check_stop(opts, l=run.l, kJ=run.kJ, k=run.k, prev_cost=prev_cost,
                            cost=ev.cost, grad_norm=gnorm, next_fevals=1)
        if reason is not None:
            break
        s = step_solve(Jm, ev.r, gamma)
        Js = Jm @ s
        # J(v) - m(s) expanded so the 0.5 ||r||^2 terms cancel exactly
        predicted = -float(g @ s) - 0.5 * float(Js @ Js) - 0.5 * gamma * float(s @ s)
        if not predicted > 0:
            raise RuntimeError(f"non-positive predicted decrease {predicted} with nonzero gradient")
        trial = run.evaluate(ev.v + s)
        if trial is None:
            rho = float("-inf")
            trial_cost = float("inf")
        else:
            trial_cost = trial.cost
            rho = (ev.cost - trial_cost) / predicted
        ok = rho >= rg.eta1
        if rho >= rg.eta2:
            gamma_next = rg.decrease * gamma
        elif ok:
            gamma_next = gamma
        else:
            gamma_next = rg.increase * gamma
        if ok:
            run.accept(ev.v, trial)
        run.records.append(IterationRecord(
            k=run.k, l=run.l, kJ=run.kJ, cost=trial_cost, base_cost=ev.cost,
            grad_norm=gnorm, step_norm=float(np.linalg.norm(s)), accepted=ok,
            alpha_or_gamma=gamma, predicted=predicted, rho=rho,
            gamma_next=gamma_next))
        gamma = gamma_next
        if not ok:
            continue
        prev_cost = ev.cost
        ev = trial
        Jm, reason = _after_accept(run, opts, ev, prev_cost)
        if Jm is None:
            gnorm = None
            break
        g = Jm.T @ ev.r
        gnorm = float(np.linalg.norm(g))
    return run.finish("REG", initial_cost, ev, gnorm, reason)


_SOLVERS = {"GN": solve_gn, "LS": solve_ls, "REG": solve_reg}


def solve(prob, v0=None, opts: Optional[SolverOptions] = None):
    """Run the method named by ``opts.method`` from ``v0`` (default: background)."""
    opts = opts or SolverOptions()
    if v0 is None:
        v0 = np.zeros(prob.n)
    return _SOLVERS[opts.method](prob, v0, opts)
