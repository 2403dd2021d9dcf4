"""Numerical verification suite: derivative checks, full-rank check,
affine-problem exactness and solver trace audits.

Model calls go through the ``models`` module attributes so that a patched
(deliberately broken) tangent linear model is seen by the checks.
"""
from dataclasses import dataclass

import numpy as np

from . import assim, models, solvers, twin
from .assim import AssimilationProblem, ObsEntry, ObservationSet

TAYLOR_EPS = tuple(10.0 ** -k for k in range(2, 8))
TAYLOR_BAND = (1.8, 2.2)
FD_STEP = 1e-6
FD_RTOL = 1e-6
RANK_ATOL = 1e-10
AFFINE_TOL = 1e-8
AFFINE_OPTIONS = {"tau_e": 200, "stop_mode": "gradnorm", "tau_g": 1e-12}
_U = np.finfo(float).eps


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: object
    tolerance: str
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        text = f"{status} {self.name}: measured {self.measured} (tolerance {self.tolerance})"
        return f"{text} {self.detail}".rstrip()


def fd_gradient(prob, v, h=FD_STEP):
    """Central-difference gradient of the cost."""
    g = np.empty(prob.n)
    for j in range(prob.n):
        e = np.zeros(prob.n)
        e[j] = h
        g[j] = (assim.cost(prob, v + e) - assim.cost(prob, v - e)) / (2 * h)
    return g


def gradient_error(prob, v, h=FD_STEP):
    g = assim.gradient(prob, v)
    g_fd = fd_gradient(prob, v, h)
    return float(np.linalg.norm(g_fd - g) / max(np.linalg.norm(g), 1e-300))


def taylor_ratios(func, jac, x, d, eps=TAYLOR_EPS):
    """First-order Taylor remainders of ``func`` around ``x`` along ``d``.

    For each ``e`` in ``eps`` the normalised remainder
    ``||func(x + e d) - func(x) - e jac d|| / ||e d||`` is computed together
    with its value at ``e / 2``. Returns ``(eps, ratios, in_regime)``; a pair
    is in the linear-convergence regime when the remainder at ``e / 2`` is
    well above the rounding floor ``u (||func(x)|| + ||jac|| (||x|| + 1)) / e``.
    """
    fx = func(x)
    Jd = jac @ d
    dn = np.linalg.norm(d)
    # rounding in func(x + e d) is amplified by the local Jacobian
    scale = np.linalg.norm(fx) + np.linalg.norm(jac, 2) * (np.linalg.norm(x) + 1.0)
    floor_scale = 100 * _U * max(scale, 1.0) / dn

    def remainder(e):
        return np.linalg.norm(func(x + e * d) - fx - e * Jd) / (e * dn)

    ratios, regime = [], []
    for e in eps:
        r1, r2 = remainder(e), remainder(e / 2)
        ratios.append(r1 / r2 if r2 > 0 else np.inf)
        regime.append(r2 > floor_scale / (e / 2))
    return np.asarray(eps), np.asarray(ratios), np.asarray(regime)


def step_taylor(spec, x, d, eps=TAYLOR_EPS):
    return taylor_ratios(lambda y: models.step(spec, y), models.step_tlm(spec, x),
                         x, d, eps)


def window_taylor(prob, v, d, eps=TAYLOR_EPS):
    """Taylor test of the stacked residual against the assembled Jacobian."""
    return taylor_ratios(lambda w: assim.evaluate(prob, w).r,
                         assim.jacobian(prob, v), v, d, eps)


def settled_ratios(ratios, regime, band=TAYLOR_BAND):
    """In-regime ratios from the first one inside ``band`` onwards.

    Leading pairs at the largest steps may still be pre-asymptotic.
    """
    inside = ratios[regime]
    ok = (inside >= band[0]) & (inside <= band[1])
    if not ok.any():
        return inside
    return inside[int(np.argmax(ok)):]


def taylor_ok(ratios, regime, band=TAYLOR_BAND, min_pairs=2):
    """Accept when the in-regime ratios settle inside ``band``.

    When no pair rises above the rounding floor the map is linear to working
    precision and passes.
    """
    if not regime.any():
        return True
    settled = settled_ratios(ratios, regime, band)
    return bool(settled.size >= min_pairs
                and np.all((settled >= band[0]) & (settled <= band[1])))


def _taylor_check(name, runs):
    passed, worst = True, 2.0
    for ratios, regime in runs:
        passed &= taylor_ok(ratios, regime)
        settled = settled_ratios(ratios, regime)
        if settled.size:
            cur = settled[np.argmax(np.abs(settled - 2.0))]
            if abs(cur - 2.0) > abs(worst - 2.0):
                worst = cur
    return CheckResult(name, passed, f"{worst:.4f}",
                       f"in [{TAYLOR_BAND[0]}, {TAYLOR_BAND[1]}]")


def min_gn_eigenvalue(prob, v):
    """Smallest eigenvalue of ``J^T J`` as ``sigma_min(J)**2``.

    The singular values of ``J`` avoid the rounding of forming ``J^T J``.
    """
    return float(np.linalg.svd(assim.jacobian(prob, v), compute_uv=False)[-1] ** 2)


def affine_problem(spec, xb, var_b, components, values, var_o):
    """Problem observed only at step 0, so its residual is affine in ``v``."""
    obs = ObservationSet([ObsEntry(0, tuple(components), values, var_o)])
    return AssimilationProblem(spec, 1, xb, var_b, obs)


def affine_solution(prob):
    """Closed-form minimiser from the normal equations, built directly."""
    (entry,) = prob.obs.entries
    n = prob.n
    H = np.eye(n)[list(entry.components)]
    c = prob.sigma_b / np.sqrt(entry.var_o)
    lhs = np.eye(n) + c * c * H.T @ H
    rhs = c * H.T @ (entry.values - H @ prob.xb) / np.sqrt(entry.var_o)
    return np.linalg.solve(lhs, rhs)


def audit_trace(trace, opts):
    """List of violated solver contracts for one trace (empty when clean)."""
    bad = []
    if trace.kJ + trace.l > opts.tau_e:
        bad.append(f"budget kJ + l = {trace.kJ + trace.l} > {opts.tau_e}")
    if trace.kJ > trace.l:
        bad.append("kJ > l")
    n_acc = trace.n_accepted
    if trace.method == "GN":
        if trace.kJ != trace.l:
            bad.append("GN with kJ != l")
    elif trace.stop_reason != solvers.StopReason.NON_FINITE:
        ok_counts = trace.kJ == n_acc + 1 or (
            trace.kJ == n_acc and trace.stop_reason in (
                solvers.StopReason.BUDGET, solvers.StopReason.REL_FUNC))
        if not ok_counts:
            bad.append(f"kJ = {trace.kJ} with {n_acc} accepted iterations")
    costs = trace.accepted_costs()
    if trace.method == "LS":
        for rec in trace.iterations:
            if rec.accepted and not rec.cost <= rec.base_cost + opts.ls.beta * rec.alpha_or_gamma * rec.slope:
                bad.append(f"Armijo violated at l = {rec.l}")
            if not rec.slope < 0:
                bad.append(f"non-descent direction at l = {rec.l}")
        if any(b >= a for a, b in zip(costs, costs[1:])):
            bad.append("LS accepted costs not strictly decreasing")
    if trace.method == "REG":
        reg = opts.reg
        for rec in trace.iterations:
            if rec.accepted and not rec.rho >= reg.eta1:
                bad.append(f"REG accepted with rho = {rec.rho} at l = {rec.l}")
            if not rec.predicted > 0:
                bad.append(f"non-positive predicted decrease at l = {rec.l}")
            if rec.rho >= reg.eta2:
                factor = reg.decrease
            elif rec.rho >= reg.eta1:
                factor = 1.0
            else:
                factor = reg.increase
            if rec.gamma_next != factor * rec.alpha_or_gamma:
                bad.append(f"gamma update {rec.alpha_or_gamma} -> {rec.gamma_next} at l = {rec.l}")
        if any(b > a for a, b in zip(costs, costs[1:])):
            bad.append("REG accepted costs increased")
    return bad


def run_checks(cfg, n_problems=5, seed=12345):
    """Run the whole suite on problems drawn from a :class:`TwinConfig`."""
    rng = np.random.default_rng(seed)
    results = []
    fixed_ref = twin.reference_for(cfg, 0) if cfg.reference == "fixed" else None
    problems = []
    for i in range(n_problems):
        real = twin.make_realization(cfg, i, fixed_ref)
        problems.append((real, real.problem(cfg)))

    errs = []
    for _, prob in problems:
        v = rng.standard_normal(prob.n)
        errs.append(gradient_error(prob, v))
    worst = max(errs)
    results.append(CheckResult("fd_gradient", worst <= FD_RTOL, f"{worst:.3e}",
                               f"<= {FD_RTOL:g}"))

    if problems[0][1].obs.p == 0:
        prob = problems[0][1]
        v = rng.standard_normal(prob.n)
        diff = float(np.abs(assim.gradient(prob, v) - v).max())
        results.append(CheckResult("gradient_equals_v_without_obs", diff <= 1e-14,
                                   f"{diff:.3e}", "<= 1e-14"))

    runs = []
    for real, prob in problems:
        d = rng.standard_normal(prob.n)
        d /= np.linalg.norm(d)
        runs.append(step_taylor(cfg.spec, real.x_ref, d)[1:])
    results.append(_taylor_check("tlm_taylor_step", runs))

    runs = []
    for _, prob in problems:
        v = 0.1 * rng.standard_normal(prob.n)
        d = rng.standard_normal(prob.n)
        d /= np.linalg.norm(d)
        runs.append(window_taylor(prob, v, d)[1:])
    results.append(_taylor_check("tlm_taylor_window", runs))

    lam = min(min_gn_eigenvalue(prob, rng.standard_normal(prob.n)) for _, prob in problems)
    results.append(CheckResult("gn_hessian_full_rank", lam >= 1 - RANK_ATOL,
                               f"{lam:.12f}", f">= 1 - {RANK_ATOL:g}"))

    real, prob = problems[0]
    comps = cfg.obs_components
    values = real.x_ref[list(comps)] + rng.standard_normal(len(comps))
    aff = affine_problem(cfg.spec, real.x_b, cfg.var_b, comps, values, cfg.var_o)
    v_star = affine_solution(aff)
    errs, gn_steps = {}, None
    for method in solvers.METHODS:
        opts = solvers.SolverOptions(method=method, **AFFINE_OPTIONS)
        trace = solvers.solve(aff, np.zeros(aff.n), opts)
        errs[method] = float(np.linalg.norm(trace.best_v - v_star)
                             / max(1.0, np.linalg.norm(v_star)))
        if method == "GN":
            gn_steps = trace.n_accepted
    worst = max(errs.values())
    results.append(CheckResult("affine_exact_solution", worst <= AFFINE_TOL and gn_steps == 1,
                               f"{worst:.3e}", f"<= {AFFINE_TOL:g}",
                               f"(GN accepted steps: {gn_steps})"))

    violations = []
    for idx, (real, prob) in enumerate(problems):
        for method in cfg.methods:
            opts = cfg.options_for(method)
            trace = solvers.solve(prob, np.zeros(prob.n), opts)
            violations += [f"[{idx}/{method}] {v}" for v in audit_trace(trace, opts)]
    results.append(CheckResult("solver_trace_audit", not violations,
                               f"{len(violations)} violations", "0",
                               "; ".join(violations[:5])))
    return results
