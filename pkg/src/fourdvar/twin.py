"""Twin experiments: synthetic truth, background, observations, and budgeted
runs of GN / LS / REG on identical realizations.

Random streams are derived from ``(base_seed, realization index, stream tag)``
through :class:`numpy.random.SeedSequence`, so any realization can be rebuilt
on its own and ensembles give the same table in any execution order.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from . import assim, models, solvers
from .assim import AssimilationProblem, ObsEntry, ObservationSet
from .models import ModelSpec, NonFiniteState
from .profiles import analysis_rmse
from .results import EnsembleResultRow, ResultTable

log = logging.getLogger(__name__)

SPINUP_STEPS = 1000
LAYOUTS = ("Nobs1", "Nobs2", "Nobs3", "Nobs4", "none")

STREAM_REFERENCE = 0
STREAM_BACKGROUND = 1
STREAM_OBSERVATION = 2

DEFAULT_VAR_O = {"L63": 1.0, "L96": 0.25}
VAR_B_GRID = {"L63": (25.0, 6.25, 1.0, 0.25), "L96": (6.25, 1.5625, 0.25, 0.0625)}
T_A_GRID = (0.05, 0.1, 0.2, 1.0)


class ConfigError(ValueError):
    pass


def default_components(spec):
    if spec.kind == "L63":
        return (0, 2)
    return tuple(range(spec.n // 2))


def stream_seed(base_seed, index, tag):
    return np.random.SeedSequence([int(base_seed), int(index), int(tag)])


@dataclass(frozen=True)
class TwinConfig:
    spec: ModelSpec = field(default_factory=ModelSpec)
    t_a: float = 1.0
    var_b: float = 25.0
    var_o: Optional[float] = None
    obs_layout: str = "Nobs1"
    obs_components: Optional[Tuple[int, ...]] = None
    n_r: int = 100
    base_seed: int = 0
    reference: str = "fixed"
    methods: Tuple[str, ...] = solvers.METHODS
    solver: solvers.SolverOptions = field(default_factory=solvers.SolverOptions)

    def __post_init__(self):
        if self.var_o is None:
            if self.spec.kind not in DEFAULT_VAR_O:
                raise ConfigError(f"var_o required for model {self.spec.kind}")
            object.__setattr__(self, "var_o", DEFAULT_VAR_O[self.spec.kind])
        if self.obs_components is None:
            object.__setattr__(self, "obs_components", default_components(self.spec))
        object.__setattr__(self, "obs_components",
                           tuple(int(c) for c in self.obs_components))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.var_b > 0 or not self.var_o > 0:
            raise ConfigError("var_b and var_o must be positive")
        if self.obs_layout not in LAYOUTS:
            raise ConfigError(f"unknown observation layout {self.obs_layout!r}")
        if self.reference not in ("fixed", "per_realization"):
            raise ConfigError("reference must be 'fixed' or 'per_realization'")
        if self.n_r < 1:
            raise ConfigError("n_r must be >= 1")
        unknown = [m for m in self.methods if m not in solvers.METHODS]
        if unknown or not self.methods:
            raise ConfigError(f"bad method list {self.methods}")
        comps = self.obs_components
        if not comps or len(set(comps)) != len(comps) or min(comps) < 0 \
                or max(comps) >= self.spec.n:
            raise ConfigError("observed components must be distinct indices in [0, n)")
        layout_steps(self.obs_layout, self.N)

    @property
    def N(self):
        ratio = self.t_a / self.spec.dt
        N = int(round(ratio))
        if N < 1 or abs(ratio - N) > 1e-9 * max(1.0, ratio):
            raise ConfigError(f"t_a = {self.t_a} is not a positive multiple of dt = {self.spec.dt}")
        return N

    def options_for(self, method):
        return solvers.SolverOptions(
            method=method, tau_e=self.solver.tau_e, tau_s=self.solver.tau_s,
            tau_g=self.solver.tau_g, stop_mode=self.solver.stop_mode,
            ls=self.solver.ls, reg=self.solver.reg)


def layout_steps(layout, N):
    """Observation time steps for a layout in a window of ``N`` steps.

    ``"none"`` gives an empty set (background term only).
    """
    if layout == "none":
        return []
    if layout == "Nobs1":
        return [N]
    if layout == "Nobs2":
        if N % 2:
            raise ConfigError("Nobs2 needs an even number of steps")
        return [N // 2, N]
    if layout == "Nobs3":
        if N % 4:
            raise ConfigError("Nobs3 needs N divisible by 4")
        return [N // 4, N // 2, 3 * N // 4, N]
    if layout == "Nobs4":
        if N % 2:
            raise ConfigError("Nobs4 needs an even number of steps")
        return list(range(2, N + 1, 2))
    raise ConfigError(f"unknown observation layout {layout!r}")


def make_reference(spec, seed, spinup=SPINUP_STEPS):
    """Uniform(0, 1) start spun up onto the attractor."""
    rng = np.random.default_rng(seed)
    x_rand = rng.uniform(0.0, 1.0, size=spec.n)
    return models.propagate(spec, x_rand, spinup).states[-1].copy()


def make_background(x_ref, var_b, seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(np.shape(x_ref))
    return np.asarray(x_ref, dtype=float) + np.sqrt(var_b) * z


def make_observations(traj, layout, components, var_o, seed, N=None):
    N = traj.N if N is None else N
    steps = layout_steps(layout, N)
    rng = np.random.default_rng(seed)
    comps = list(components)
    entries = []
    for i in steps:
        noise = np.sqrt(var_o) * rng.standard_normal(len(comps))
        entries.append(ObsEntry(i, tuple(comps), traj.states[i][comps] + noise, var_o))
    return ObservationSet(entries)


@dataclass(frozen=True)
class Realization:
    index: int
    seed_b: Tuple[int, ...]
    seed_o: Tuple[int, ...]
    x_ref: np.ndarray
    x_b: np.ndarray
    obs: ObservationSet

    def problem(self, cfg):
        return AssimilationProblem(cfg.spec, cfg.N, self.x_b, cfg.var_b, self.obs)


def reference_for(cfg, index):
    ref_index = 0 if cfg.reference == "fixed" else index
    return make_reference(cfg.spec, stream_seed(cfg.base_seed, ref_index, STREAM_REFERENCE))


def make_realization(cfg, index, x_ref=None):
    if x_ref is None:
        x_ref = reference_for(cfg, index)
    key = (int(cfg.base_seed), int(index))
    x_b = make_background(x_ref, cfg.var_b, stream_seed(*key, STREAM_BACKGROUND))
    traj = models.propagate(cfg.spec, x_ref, cfg.N)
    obs = make_observations(traj, cfg.obs_layout, cfg.obs_components, cfg.var_o,
                            stream_seed(*key, STREAM_OBSERVATION))
    return Realization(index, key + (STREAM_BACKGROUND,), key + (STREAM_OBSERVATION,),
                       x_ref, x_b, obs)


def _row(index, trace, prob, x_ref):
    try:
        rmse = analysis_rmse(assim.control_to_state(prob, trace.best_v), x_ref)
    except ValueError:
        rmse = float("nan")
    return EnsembleResultRow(
        seed_index=index, method=trace.method, l=trace.l, kJ=trace.kJ,
        cost_final=trace.final_cost, cost_best=trace.best_cost,
        grad_norm_final=trace.final_grad_norm,
        step_norm_final=trace.final_step_norm, rmse=rmse,
        stop_reason=str(trace.stop_reason), cost_initial=trace.initial_cost)


def run_realization(cfg, realization, keep_traces=False):
    """Run every configured method from ``v0 = 0`` on one realization."""
    prob = realization.problem(cfg)
    v0 = np.zeros(prob.n)
    rows, traces = [], {}
    for method in cfg.methods:
        trace = solvers.solve(prob, v0, cfg.options_for(method))
        rows.append(_row(realization.index, trace, prob, realization.x_ref))
        if keep_traces:
            traces[(realization.index, method)] = trace
    if keep_traces:
        return rows, traces
    return rows


def _failure_rows(cfg, index):
    nan = float("nan")
    return [EnsembleResultRow(index, m, 0, 0, nan, nan, nan, nan, nan,
                              str(solvers.StopReason.NON_FINITE), nan)
            for m in cfg.methods]


def _run_indices(cfg, indices, keep_traces):
    fixed_ref = None
    if cfg.reference == "fixed":
        fixed_ref = reference_for(cfg, 0)
    rows, traces = [], {}
    for index in indices:
        try:
            real = make_realization(cfg, index, fixed_ref)
            out = run_realization(cfg, real, keep_traces=keep_traces)
        except NonFiniteState as exc:
            log.warning("realization %d could not be generated: %s", index, exc)
            rows.extend(_failure_rows(cfg, index))
            continue
        if keep_traces:
            rows.extend(out[0])
            traces.update(out[1])
        else:
            rows.extend(out)
    return rows, traces


def run_ensemble(cfg, workers=1, order: Optional[Sequence[int]] = None,
                 keep_traces=False):
    """Run ``cfg.n_r`` realizations; the table is sorted by index and method."""
    indices = list(range(cfg.n_r)) if order is None else [int(i) for i in order]
    if sorted(indices) != list(range(cfg.n_r)):
        raise ValueError("order must be a permutation of range(n_r)")
    workers = max(1, int(workers or 1))
    if workers == 1 or len(indices) < 2:
        rows, traces = _run_indices(cfg, indices, keep_traces)
    else:
        chunks = [indices[w::workers] for w in range(workers)]
        rows, traces = [], {}
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_indices, cfg, chunk, keep_traces)
                       for chunk in chunks if chunk]
            for fut in futures:
                r, t = fut.result()
                rows.extend(r)
                traces.update(t)
    rank = {m: i for i, m in enumerate(cfg.methods)}
    rows.sort(key=lambda row: (row.seed_index, rank[row.method]))
    return ResultTable(rows, traces)
