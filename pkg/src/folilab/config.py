"""Experiment configuration: a flat INI file with strictly validated keys."""

import configparser
import io
from dataclasses import dataclass, field as dc_field

from .errors import ConfigError, FolilabError
from .models import DriftSpec, get_model
from .sde import SimConfig

_SCHEMA = {
    "model": {"name", "alpha", "R", "r"},
    "sim": {"dt", "T", "n_paths", "seed", "record_every", "burn_in"},
    "drift": {"kind", "c"},
    "grid": {"dims", "geometry_axis"},
    "test_functions": {"set"},
    "measure": {"candidate", "n_particles", "t", "bump_sigma"},
    "output": {"directory", "figures"},
    "tolerances": {"geometry", "tv_invariant", "tv_control", "cocycle"},
}

_MODEL_PARAM_KEYS = {"alpha", "R", "r"}


@dataclass
class ExperimentConfig:
    model_name: str
    model_params: dict = dc_field(default_factory=dict)
    dt: float = 0.01
    T: float = 100.0
    n_paths: int = 16
    seed: int = 12345
    record_every: int = 10
    burn_in: float = 0.1
    drift: DriftSpec = dc_field(default_factory=DriftSpec)
    grid_dims: tuple = ()
    geometry_axis: int = 0           # 0 -> per-dimension default
    tf_set: str = "trig"
    candidate: str = "lebesgue"
    n_particles: int = 100000
    t_measure: float = 1.0
    bump_sigma: float = 0.2
    out_dir: str = "out"
    figures: bool = True
    tol_geometry: float = 1e-5
    tol_tv_invariant: float = 0.05
    tol_tv_control: float = 0.2
    tol_cocycle: float = 0.1

    def model(self):
        return get_model(self.model_name, self.model_params)

    def sim_config(self):
        try:
            return SimConfig(dt=self.dt, T=self.T, n_paths=self.n_paths,
                             seed=self.seed, drift=self.drift,
                             record_every=self.record_every, burn_in=self.burn_in)
        except FolilabError as exc:
            raise ConfigError(str(exc)) from exc


def _get(parser, section, key, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        if cast is bool:
            low = raw.strip().lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse '{raw}'") from exc


def parse_config(text):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str        # keys are case sensitive (R vs r, T)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        unknown = set(parser.options(section)) - _SCHEMA[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")

    if not parser.has_option("model", "name"):
        raise ConfigError("config must set [model] name")
    name = parser.get("model", "name")
    params = {}
    for key in parser.options("model"):
        if key == "name":
            continue
        try:
            params[key] = float(parser.get("model", key))
        except ValueError as exc:
            raise ConfigError(f"[model] {key}: cannot parse") from exc

    cfg = ExperimentConfig(
        model_name=name,
        model_params=params,
        dt=_get(parser, "sim", "dt", float, 0.01),
        T=_get(parser, "sim", "T", float, 100.0),
        n_paths=_get(parser, "sim", "n_paths", int, 16),
        seed=_get(parser, "sim", "seed", int, 12345),
        record_every=_get(parser, "sim", "record_every", int, 10),
        burn_in=_get(parser, "sim", "burn_in", float, 0.1),
        drift=DriftSpec(kind=_get(parser, "drift", "kind", str, "none"),
                        c=_get(parser, "drift", "c", float, 0.0)),
        geometry_axis=_get(parser, "grid", "geometry_axis", int, 0),
        tf_set=_get(parser, "test_functions", "set", str, "trig"),
        candidate=_get(parser, "measure", "candidate", str, "lebesgue"),
        n_particles=_get(parser, "measure", "n_particles", int, 100000),
        t_measure=_get(parser, "measure", "t", float, 1.0),
        bump_sigma=_get(parser, "measure", "bump_sigma", float, 0.2),
        out_dir=_get(parser, "output", "directory", str, "out"),
        figures=_get(parser, "output", "figures", bool, True),
        tol_geometry=_get(parser, "tolerances", "geometry", float, 1e-5),
        tol_tv_invariant=_get(parser, "tolerances", "tv_invariant", float, 0.05),
        tol_tv_control=_get(parser, "tolerances", "tv_control", float, 0.2),
        tol_cocycle=_get(parser, "tolerances", "cocycle", float, 0.1),
    )

    if parser.has_option("grid", "dims"):
        try:
            dims = tuple(int(v) for v in parser.get("grid", "dims").split(","))
        except ValueError as exc:
            raise ConfigError("[grid] dims must be comma-separated integers") from exc
        cfg.grid_dims = dims

    return _validate(cfg)


def _validate(cfg):
    try:
        model = cfg.model()
    except FolilabError as exc:
        raise ConfigError(str(exc)) from exc
    if not cfg.grid_dims:
        cfg.grid_dims = (32,) * model.dim
    if len(cfg.grid_dims) != model.dim:
        raise ConfigError(f"[grid] dims must have {model.dim} entries for "
                          f"model '{cfg.model_name}'")
    positive = {"dt": cfg.dt, "T": cfg.T, "n_paths": cfg.n_paths,
                "record_every": cfg.record_every, "n_particles": cfg.n_particles,
                "bump_sigma": cfg.bump_sigma, "geometry tolerance": cfg.tol_geometry}
    for label, value in positive.items():
        if not value > 0:
            raise ConfigError(f"{label} must be positive (got {value})")
    if any(n < 1 for n in cfg.grid_dims):
        raise ConfigError("grid dims must be >= 1")
    if not (0.0 <= cfg.burn_in < 1.0):
        raise ConfigError("burn_in must lie in [0, 1)")
    if cfg.T < cfg.dt:
        raise ConfigError("T must be at least dt")
    if cfg.t_measure < 0:
        raise ConfigError("measure t must be nonnegative")
    if cfg.seed < 0:
        raise ConfigError("seed must be nonnegative")
    if cfg.drift.kind not in ("none", "leaf_constant"):
        raise ConfigError(f"unknown drift kind '{cfg.drift.kind}'")
    if cfg.candidate not in ("lebesgue", "bump"):
        raise ConfigError(f"unknown candidate measure '{cfg.candidate}'")
    if cfg.tf_set != "trig":
        raise ConfigError(f"unknown test function set '{cfg.tf_set}'")
    return cfg


def load_config(path, out_dir=None, seed=None):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc}") from exc
    if out_dir is not None:
        cfg.out_dir = str(out_dir)
    if seed is not None:
        cfg.seed = int(seed)
    return cfg


def serialize_config(cfg):
    """Canonical text form; parse(serialize(cfg)) reproduces cfg exactly."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["model"] = {"name": cfg.model_name}
    for key, value in sorted(cfg.model_params.items()):
        parser["model"][key] = repr(value)
    parser["sim"] = {
        "dt": repr(cfg.dt), "T": repr(cfg.T), "n_paths": str(cfg.n_paths),
        "seed": str(cfg.seed), "record_every": str(cfg.record_every),
        "burn_in": repr(cfg.burn_in),
    }
    parser["drift"] = {"kind": cfg.drift.kind, "c": repr(cfg.drift.c)}
    parser["grid"] = {"dims": ",".join(str(n) for n in cfg.grid_dims),
                      "geometry_axis": str(cfg.geometry_axis)}
    parser["test_functions"] = {"set": cfg.tf_set}
    parser["measure"] = {"candidate": cfg.candidate,
                         "n_particles": str(cfg.n_particles),
                         "t": repr(cfg.t_measure),
                         "bump_sigma": repr(cfg.bump_sigma)}
    parser["output"] = {"directory": cfg.out_dir,
                        "figures": "true" if cfg.figures else "false"}
    parser["tolerances"] = {"geometry": repr(cfg.tol_geometry),
                            "tv_invariant": repr(cfg.tol_tv_invariant),
                            "tv_control": repr(cfg.tol_tv_control),
                            "cocycle": repr(cfg.tol_cocycle)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
