"""Experiment configuration files (YAML).

Every section is optional; omitted values take the standard twin-experiment
defaults. Unknown keys are rejected with the offending line number. A run's
``*_meta.json`` is itself a valid config: its ``config`` entry is used.

Example::

    model: {kind: L63}
    window: {t_a: 1.0}
    noise: {var_b: 25.0}
    obs: {layout: Nobs1}
    ensemble: {n_r: 100, base_seed: 0}
    solvers: {tau_e: 8}
    output: {directory: out, prefix: background_l63}
"""
from dataclasses import dataclass

import yaml

from . import solvers
from .models import ModelSpec
from .twin import LAYOUTS, ConfigError, TwinConfig

SCHEMA = {
    "model": {"kind": str, "n": int, "dt": float, "scheme": str, "params": dict},
    "window": {"t_a": float},
    "noise": {"var_b": float, "var_o": float},
    "obs": {"layout": str, "components": list},
    "ensemble": {"n_r": int, "base_seed": int, "workers": int, "reference": str},
    "solvers": {"methods": list, "tau_e": int, "tau_s": float, "tau_g": float,
                "stop_mode": str, "ls": dict, "reg": dict},
    "output": {"directory": str, "prefix": str},
}
_SUBSCHEMA = {
    ("solvers", "ls"): {"alpha0": float, "beta": float, "tau": float,
                        "max_backtracks": int},
    ("solvers", "reg"): {"gamma0": float, "eta1": float, "eta2": float,
                         "decrease": float, "increase": float},
}


@dataclass(frozen=True)
class ExperimentConfig:
    twin: TwinConfig
    workers: int = 1
    directory: str = "out"
    prefix: str = "run"

    def to_dict(self):
        t = self.twin
        s = t.solver
        return {
            "model": t.spec.to_dict(),
            "window": {"t_a": t.t_a},
            "noise": {"var_b": t.var_b, "var_o": t.var_o},
            "obs": {"layout": t.obs_layout, "components": list(t.obs_components)},
            "ensemble": {"n_r": t.n_r, "base_seed": t.base_seed,
                         "workers": self.workers, "reference": t.reference},
            "solvers": {
                "methods": list(t.methods), "tau_e": s.tau_e, "tau_s": s.tau_s,
                "tau_g": s.tau_g, "stop_mode": s.stop_mode,
                "ls": {"alpha0": s.ls.alpha0, "beta": s.ls.beta, "tau": s.ls.tau,
                       "max_backtracks": s.ls.max_backtracks},
                "reg": {"gamma0": s.reg.gamma0, "eta1": s.reg.eta1, "eta2": s.reg.eta2,
                        "decrease": s.reg.decrease, "increase": s.reg.increase},
            },
            "output": {"directory": self.directory, "prefix": self.prefix},
        }


class _Located(dict):
    """dict that remembers the source line of each key."""

    def __init__(self, line):
        super().__init__()
        self.line = line
        self.key_lines = {}


def _to_python(loader, node):
    if isinstance(node, yaml.MappingNode):
        out = _Located(node.start_mark.line + 1)
        for key_node, value_node in node.value:
            key = loader.construct_object(key_node, deep=True)
            out[key] = _to_python(loader, value_node)
            out.key_lines[key] = key_node.start_mark.line + 1
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_to_python(loader, item) for item in node.value]
    return loader.construct_object(node, deep=True)


def _parse_yaml(text, source):
    loader = yaml.SafeLoader(text)
    try:
        node = loader.get_single_node()
        if node is None:
            return _Located(1)
        data = _to_python(loader, node)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{source}{line}: invalid YAML: {exc}") from None
    finally:
        loader.dispose()
    if not isinstance(data, dict):
        raise ConfigError(f"{source}:1: top level must be a mapping")
    return data


def _where(source, mapping, key=None):
    if isinstance(mapping, _Located):
        line = mapping.key_lines.get(key, mapping.line)
        return f"{source}:{line}"
    return source


def _coerce(value, kind, where, key):
    if kind is float:
        if isinstance(value, bool):
            raise ConfigError(f"{where}: {key} must be a number")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: {key} must be a number, got {value!r}") from None
    if kind is int:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ConfigError(f"{where}: {key} must be an integer")
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: {key} must be an integer, got {value!r}") from None
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: {key} must be a string")
        return value
    if not isinstance(value, kind):
        raise ConfigError(f"{where}: {key} must be a {kind.__name__}")
    return value


def _section(data, name, source):
    raw = data.get(name) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{_where(source, data, name)}: section {name!r} must be a mapping")
    schema = SCHEMA[name]
    out = {}
    for key, value in raw.items():
        where = _where(source, raw, key)
        if key not in schema:
            raise ConfigError(f"{where}: unknown key {key!r} in section {name!r}")
        if value is None:
            continue
        sub = _SUBSCHEMA.get((name, key))
        if sub is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: {name}.{key} must be a mapping")
            vals = {}
            for k2, v2 in value.items():
                w2 = _where(source, value, k2)
                if k2 not in sub:
                    raise ConfigError(f"{w2}: unknown key {k2!r} in {name}.{key}")
                vals[k2] = _coerce(v2, sub[k2], w2, f"{name}.{key}.{k2}")
            out[key] = vals
        else:
            out[key] = _coerce(value, schema[key], where, f"{name}.{key}")
    return out


def from_mapping(data, source="<config>"):
    """Validate a parsed mapping and build an :class:`ExperimentConfig`."""
    if "config" in data and set(data) - set(SCHEMA):
        data = data["config"]
        if not isinstance(data, dict):
            raise ConfigError(f"{source}: 'config' entry must be a mapping")
    for key in data:
        if key not in SCHEMA:
            raise ConfigError(f"{_where(source, data, key)}: unknown section {key!r}")
    sec = {name: _section(data, name, source) for name in SCHEMA}
    try:
        m = sec["model"]
        params = m.get("params", {})
        spec = ModelSpec(kind=m.get("kind", "L63"), n=m.get("n"),
                         dt=m.get("dt", 0.025), scheme=m.get("scheme"),
                         params={k: float(v) for k, v in params.items()})
        s = sec["solvers"]
        opts = solvers.SolverOptions(
            tau_e=s.get("tau_e", 8), tau_s=s.get("tau_s", 1e-5),
            tau_g=s.get("tau_g", 1e-5), stop_mode=s.get("stop_mode", "relfunc"),
            ls=solvers.LineSearchOptions(**s.get("ls", {})),
            reg=solvers.RegOptions(**s.get("reg", {})))
        obs = sec["obs"]
        ens = sec["ensemble"]
        comps = obs.get("components")
        layout = obs.get("layout", "Nobs1")
        if layout not in LAYOUTS:
            raise ConfigError(f"unknown observation layout {layout!r}")
        twin_cfg = TwinConfig(
            spec=spec, t_a=sec["window"].get("t_a", 1.0),
            var_b=sec["noise"].get("var_b", 25.0 if spec.kind == "L63" else 6.25),
            var_o=sec["noise"].get("var_o"), obs_layout=layout,
            obs_components=None if comps is None else tuple(int(c) for c in comps),
            n_r=ens.get("n_r", 100), base_seed=ens.get("base_seed", 0),
            reference=ens.get("reference", "fixed"),
            methods=tuple(s.get("methods", solvers.METHODS)), solver=opts)
        workers = ens.get("workers", 1)
        if workers < 1:
            raise ConfigError("ensemble.workers must be >= 1")
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    out = sec["output"]
    return ExperimentConfig(twin_cfg, workers=workers,
                            directory=out.get("directory", "out"),
                            prefix=out.get("prefix", "run"))


def loads(text, source="<string>"):
    return from_mapping(_parse_yaml(text, source), source)


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from None
    return loads(text, str(path))


def dumps(cfg: ExperimentConfig):
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
