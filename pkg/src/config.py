"""
YAML configuration: network files and study files.

Quantities carry their unit in the key (``length_m``, ``L_pos_mH_per_km``,
``S_sc_MVA``). Several units are accepted per quantity; files written by
``dump_network`` use SI units so that they load back unchanged.
"""

import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from .cider_resources import FOLLOWING, FORMING, CiderSpec, Setpoint
from .controller_stages import ControllerStageParams
from .exceptions import ConfigError, HpfError
from .filter_stages import CAPACITIVE, INDUCTIVE, FilterStageParams
from .harmonic_core import SpectralParams
from .hpf_solver import SolverConfig
from .network_model import (LineSpec, LoadSpec, NetworkSpec, PerUnitBase,
                            ResourceAttachment, TheveninSpec)
from .simulator import TdsConfig

logger = logging.getLogger(__name__)

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")
BUNDLED_PREFIX = "bundled:"
THREADS_ENV = "HPF_THREADS"

STUDIES = ("resource_forming", "resource_following", "system", "robustness", "scalability")

# unit suffix -> power of ten applied to the value; the first entry is the SI unit
LENGTH = {"m": 0, "km": 3}
OHM_PER_KM = {"ohm_per_km": 0}
H_PER_KM = {"H_per_km": 0, "mH_per_km": -3}
F_PER_KM = {"F_per_km": 0, "uF_per_km": -6, "nF_per_km": -9}
OHM = {"ohm": 0, "mOhm": -3}
HENRY = {"H": 0, "mH": -3, "uH": -6}
FARAD = {"F": 0, "uF": -6}
SIEMENS = {"S": 0}
SECOND = {"s": 0, "ms": -3}
VOLT = {"V_rms": 0}
HERTZ = {"Hz": 0}
VA = {"VA": 0, "kVA": 3, "MVA": 6}
WATT = {"W": 0, "kW": 3}
VAR = {"var": 0, "kvar": 3}
FRACTION = {"": 0, "pct": -2}
RADIAN = {"rad": 0}

_MISSING = object()


def _scale(value: float, exponent: int) -> float:
    if exponent >= 0:
        return value * 10 ** exponent
    return value / 10 ** (-exponent)


def _line_map(node: yaml.Node, path: str, out: Dict[str, int]) -> Dict[str, int]:
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            child = f"{path}.{key.value}" if path else str(key.value)
            _line_map(value, child, out)
            out[child] = key.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _line_map(item, f"{path}[{i}]", out)
    return out


def bundled_path(name: str) -> str:
    """Path of a bundled data file, e.g. ``cigre_lv_modified``."""
    filename = name if name.endswith(".yaml") else f"{name}.yaml"
    return os.path.join(DATA_DIR, filename)


def resolve_path(reference: str, relative_to: Optional[str] = None) -> str:
    if reference.startswith(BUNDLED_PREFIX):
        return bundled_path(reference[len(BUNDLED_PREFIX):])
    if relative_to and not os.path.isabs(reference):
        return os.path.join(os.path.dirname(os.path.abspath(relative_to)), reference)
    return reference


class _Reader:
    """Typed access to parsed YAML with field paths and line numbers in errors."""

    def __init__(self, text: str, source: str):
        self.source = source
        try:
            root = yaml.compose(text)
            self.data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"{source}: invalid YAML ({getattr(exc, 'problem', exc)})",
                              None, None if mark is None else mark.line + 1) from exc
        self.lines = _line_map(root, "", {}) if root is not None else {}
        if not isinstance(self.data, dict):
            raise ConfigError(f"{source}: top level must be a mapping")

    @classmethod
    def from_file(cls, path: str) -> "_Reader":
        if not os.path.isfile(path):
            raise ConfigError(f"file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            return cls(fh.read(), path)

    def error(self, path: str, message: str) -> ConfigError:
        return ConfigError(message, path, self.lines.get(path))

    @contextmanager
    def context(self, path: str) -> Iterator[None]:
        """Turn model validation errors into ConfigError at ``path``."""
        try:
            yield
        except ConfigError:
            raise
        except HpfError as exc:
            raise self.error(path, str(exc)) from exc

    def mapping(self, data: Any, path: str) -> Dict[str, Any]:
        if not isinstance(data, dict):
            raise self.error(path, "expected a mapping")
        return data

    def sequence(self, data: Dict[str, Any], key: str, path: str, default: Any = _MISSING) -> List[Any]:
        value = data.get(key, default)
        where = f"{path}.{key}" if path else key
        if value is _MISSING:
            raise self.error(path, f"missing field '{key}'")
        if value is None:
            return []
        if not isinstance(value, list):
            raise self.error(where, "expected a list")
        return value

    def bounds(self, data: Dict[str, Any], key: str, path: str,
               default: Tuple[float, float]) -> Tuple[float, float]:
        """Two-element numeric list; entries are checked as ``key[0]`` and ``key[1]``."""
        values = self.sequence(data, key, path, default=list(default))
        if len(values) != 2:
            raise self.error(f"{path}.{key}" if path else key, "expected two bounds")
        items = {f"{key}[{i}]": v for i, v in enumerate(values)}
        low, high = (self.number(items, f"{key}[{i}]", path) for i in range(2))
        return low, high

    def text(self, data: Dict[str, Any], key: str, path: str, default: Any = _MISSING) -> str:
        value = data.get(key, default)
        if value is _MISSING:
            raise self.error(path, f"missing field '{key}'")
        if value is not None and not isinstance(value, (str, int)):
            raise self.error(f"{path}.{key}" if path else key, "expected a string")
        return value if value is None else str(value)

    def number(self, data: Dict[str, Any], key: str, path: str, default: Any = _MISSING,
               minimum: Optional[float] = None, positive: bool = False) -> float:
        where = f"{path}.{key}" if path else key
        value = data.get(key, default)
        if value is _MISSING:
            raise self.error(path, f"missing field '{key}'")
        if value is None:
            return value
        if isinstance(value, str):
            # PyYAML reads exponent literals without a dot (1e-8) as strings
            try:
                value = float(value)
            except ValueError:
                raise self.error(where, "expected a number") from None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(where, "expected a number")
        value = float(value)
        if not np.isfinite(value):
            raise self.error(where, "must be finite")
        if positive and not value > 0:
            raise self.error(where, "must be > 0")
        if minimum is not None and value < minimum:
            raise self.error(where, f"must be >= {minimum:g}")
        return value

    def integer(self, data: Dict[str, Any], key: str, path: str, default: Any = _MISSING,
                minimum: Optional[int] = None) -> int:
        value = self.number(data, key, path, default, minimum)
        if value is None:
            return value
        if value != int(value):
            raise self.error(f"{path}.{key}" if path else key, "expected an integer")
        return int(value)

    def quantity(self, data: Dict[str, Any], name: str, units: Dict[str, int], path: str,
                 default: Any = _MISSING, minimum: Optional[float] = None,
                 positive: bool = False) -> float:
        """Value of ``name`` given under exactly one unit-suffixed key, in SI."""
        keys = {(f"{name}_{suffix}" if suffix else name): exponent for suffix, exponent in units.items()}
        present = [k for k in keys if k in data]
        if len(present) > 1:
            raise self.error(path, f"'{name}' given more than once: {', '.join(present)}")
        if not present:
            if default is _MISSING:
                raise self.error(path, f"missing field '{next(iter(keys))}'")
            return default
        key = present[0]
        value = self.number(data, key, path, minimum=None)
        value = _scale(value, keys[key])
        where = f"{path}.{key}" if path else key
        if positive and not value > 0:
            raise self.error(where, "must be > 0")
        if minimum is not None and value < minimum:
            raise self.error(where, f"must be >= {minimum:g}")
        return value

    def check_keys(self, data: Dict[str, Any], allowed: Sequence[str], path: str) -> None:
        unknown = sorted(set(data) - set(allowed))
        if unknown:
            raise self.error(f"{path}.{unknown[0]}" if path else unknown[0], "unknown field")



# Network files

def _parse_line_type(r: _Reader, entry: Dict[str, Any], path: str) -> Dict[str, Tuple[float, float]]:
    r.mapping(entry, path)
    return {
        "seq_R": (r.quantity(entry, "R_pos", OHM_PER_KM, path, minimum=0.0),
                  r.quantity(entry, "R_zero", OHM_PER_KM, path, minimum=0.0)),
        "seq_L": (r.quantity(entry, "L_pos", H_PER_KM, path, minimum=0.0),
                  r.quantity(entry, "L_zero", H_PER_KM, path, minimum=0.0)),
        "seq_C": (r.quantity(entry, "C_pos", F_PER_KM, path, default=0.0, minimum=0.0),
                  r.quantity(entry, "C_zero", F_PER_KM, path, default=0.0, minimum=0.0)),
    }


def _parse_line(r: _Reader, entry: Any, path: str, line_types: Dict[str, Dict]) -> LineSpec:
    entry = r.mapping(entry, path)
    type_name = r.text(entry, "type", path, default="")
    if type_name:
        if type_name not in line_types:
            raise r.error(f"{path}.type", f"unknown line type '{type_name}'")
        params = line_types[type_name]
    else:
        params = _parse_line_type(r, entry, path)
    with r.context(path):
        return LineSpec(from_node=r.text(entry, "from", path), to_node=r.text(entry, "to", path),
                        length=r.quantity(entry, "length", LENGTH, path, positive=True),
                        line_type=type_name, **params)


def _parse_thevenin(r: _Reader, entry: Any, path: str) -> TheveninSpec:
    entry = r.mapping(entry, path)
    table = []
    for i, row in enumerate(r.sequence(entry, "harmonics", path, default=[])):
        row_path = f"{path}.harmonics[{i}]"
        row = r.mapping(row, row_path)
        table.append((r.integer(row, "h", row_path, minimum=1),
                      r.quantity(row, "mag", FRACTION, row_path, minimum=0.0),
                      r.number(row, "angle_deg", row_path, default=0.0)))
    with r.context(path):
        return TheveninSpec(node=r.text(entry, "node", path),
                            V_n=r.quantity(entry, "V_n", VOLT, path, positive=True),
                            S_sc=r.quantity(entry, "S_sc", VA, path, positive=True),
                            R_over_X=r.number(entry, "R_over_X", path, minimum=0.0),
                            harmonic_table=tuple(table),
                            Z_sc=r.quantity(entry, "Z_sc", OHM, path, default=None, positive=True))


def _parse_load(r: _Reader, entry: Any, path: str) -> LoadSpec:
    entry = r.mapping(entry, path)
    weights = entry.get("weights", [1 / 3, 1 / 3, 1 / 3])
    if not isinstance(weights, list) or len(weights) != 3:
        raise r.error(f"{path}.weights", "expected three phase weights")
    with r.context(path):
        return LoadSpec(node=r.text(entry, "node", path),
                        S=r.quantity(entry, "S", VA, path, minimum=0.0),
                        pf=r.number(entry, "pf", path),
                        weights=tuple(float(w) for w in weights),
                        connection=r.text(entry, "connection", path, default="wye_grounded"),
                        name=r.text(entry, "name", path, default=""))


def _parse_filter(r: _Reader, entry: Any, path: str) -> FilterStageParams:
    entry = r.mapping(entry, path)
    kind = r.text(entry, "kind", path)
    with r.context(path):
        if kind == INDUCTIVE:
            return FilterStageParams.inductive(L=r.quantity(entry, "L", HENRY, path, positive=True),
                                               R=r.quantity(entry, "R", OHM, path, default=0.0))
        if kind == CAPACITIVE:
            return FilterStageParams.capacitive(C=r.quantity(entry, "C", FARAD, path, positive=True),
                                                G=r.quantity(entry, "G", SIEMENS, path, default=0.0))
    raise r.error(f"{path}.kind", f"expected '{INDUCTIVE}' or '{CAPACITIVE}', got '{kind}'")


def _parse_controller(r: _Reader, entry: Any, path: str) -> ControllerStageParams:
    entry = r.mapping(entry, path)
    with r.context(path):
        return ControllerStageParams(K_fb=r.number(entry, "K_fb", path),
                                     T_fb=r.quantity(entry, "T_fb", SECOND, path, positive=True),
                                     K_ft=r.number(entry, "K_ft", path, default=0.0),
                                     K_ff_mode=r.text(entry, "K_ff_mode", path, default="auto_from_filter"))


def _parse_setpoint(r: _Reader, entry: Dict[str, Any], kind: str, f1: float, path: str) -> Setpoint:
    with r.context(path):
        if kind == FORMING:
            return Setpoint.forming(r.quantity(entry, "V_sigma", VOLT, path, minimum=0.0),
                                    r.quantity(entry, "f_sigma", HERTZ, path, default=f1, positive=True))
        S = r.quantity(entry, "S", VA, path, default=None, minimum=0.0)
        if S is not None:
            return Setpoint.from_apparent_power(S, r.number(entry, "pf", path))
        return Setpoint.following(r.quantity(entry, "P_sigma", WATT, path),
                                  r.quantity(entry, "Q_sigma", VAR, path, default=0.0))


def _parse_resource(r: _Reader, entry: Any, path: str, cider_types: Dict[str, Dict],
                    f1: float) -> ResourceAttachment:
    entry = r.mapping(entry, path)
    type_name = r.text(entry, "type", path, default="")
    if type_name:
        if type_name not in cider_types:
            raise r.error(f"{path}.type", f"unknown resource type '{type_name}'")
        definition, def_path = cider_types[type_name], f"cider_types.{type_name}"
    else:
        definition, def_path = entry, path
    kind = r.text(definition, "kind", def_path)
    if kind not in (FORMING, FOLLOWING):
        raise r.error(f"{def_path}.kind", f"expected '{FORMING}' or '{FOLLOWING}', got '{kind}'")
    filters = [_parse_filter(r, f, f"{def_path}.filters[{i}]")
               for i, f in enumerate(r.sequence(definition, "filters", def_path))]
    controllers = [_parse_controller(r, c, f"{def_path}.controllers[{i}]")
                   for i, c in enumerate(r.sequence(definition, "controllers", def_path))]
    node = r.text(entry, "node", path)
    with r.context(path):
        cider = CiderSpec(name=r.text(entry, "name", path, default=f"{kind}_{node}"), kind=kind,
                          filters=tuple(filters), controllers=tuple(controllers),
                          setpoint=_parse_setpoint(r, entry, kind, f1, path),
                          legs=r.text(definition, "legs", def_path, default=None),
                          rated_power=r.quantity(definition, "rated_power", VA, def_path, default=0.0),
                          theta0=r.quantity(entry, "theta0", RADIAN, path, default=0.0),
                          f1=f1)
        return ResourceAttachment(node=node, cider=cider)


def parse_network(text: str, source: str = "<string>") -> NetworkSpec:
    """Parse a network description from YAML text."""
    r = _Reader(text, source)
    data = r.data
    f1 = r.quantity(data, "f1", HERTZ, "", default=50.0, positive=True)
    base_entry = r.mapping(data.get("base", {}), "base")
    with r.context("base"):
        base = PerUnitBase(P_b=r.quantity(base_entry, "P_b", WATT, "base", default=10e3, positive=True),
                           V_b=r.quantity(base_entry, "V_b", VOLT, "base", default=230.0, positive=True))

    nodes = r.sequence(data, "nodes", "")
    if not all(isinstance(n, (str, int)) for n in nodes):
        raise r.error("nodes", "node identifiers must be strings")
    line_types = {str(name): _parse_line_type(r, entry, f"line_types.{name}")
                  for name, entry in r.mapping(data.get("line_types", {}) or {}, "line_types").items()}
    cider_types = {str(name): r.mapping(entry, f"cider_types.{name}")
                   for name, entry in r.mapping(data.get("cider_types", {}) or {}, "cider_types").items()}

    lines = [_parse_line(r, e, f"lines[{i}]", line_types)
             for i, e in enumerate(r.sequence(data, "lines", "", default=[]))]
    thevenin = _parse_thevenin(r, data["thevenin"], "thevenin") if data.get("thevenin") else None
    loads = [_parse_load(r, e, f"loads[{i}]") for i, e in enumerate(r.sequence(data, "loads", "", default=[]))]
    resources = [_parse_resource(r, e, f"resources[{i}]", cider_types, f1)
                 for i, e in enumerate(r.sequence(data, "resources", "", default=[]))]

    with r.context("nodes"):
        net = NetworkSpec(nodes=tuple(str(n) for n in nodes), lines=tuple(lines), thevenin=thevenin,
                          loads=tuple(loads), resources=tuple(resources), base=base, f1=f1,
                          name=r.text(data, "name", "", default="network"))
    logger.info("Loaded network '%s' from %s: %d nodes, %d lines, %d loads, %d resources",
                net.name, source, len(net.nodes), len(net.lines), len(net.loads), len(net.resources))
    return net


def load_network(path: str) -> NetworkSpec:
    """
    Read and validate a network file.

    Args:
        path (str): YAML file, or ``bundled:<name>``

    Raises:
        ConfigError: With the field path and line of the first violation
    """
    path = resolve_path(path)
    if not os.path.isfile(path):
        raise ConfigError(f"network file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return parse_network(fh.read(), path)


def _filter_entry(f: FilterStageParams) -> Dict[str, Any]:
    if f.kind == INDUCTIVE:
        return {"kind": INDUCTIVE, "L_H": f.series_value, "R_ohm": f.loss_value}
    return {"kind": CAPACITIVE, "C_F": f.series_value, "G_S": f.loss_value}


def _resource_entry(r: ResourceAttachment) -> Dict[str, Any]:
    spec = r.cider
    entry = {"name": spec.name, "node": r.node, "kind": spec.kind, "legs": spec.legs,
             "rated_power_VA": spec.rated_power, "theta0_rad": spec.theta0,
             "filters": [_filter_entry(f) for f in spec.filters],
             "controllers": [{"K_fb": c.K_fb, "T_fb_s": c.T_fb, "K_ft": c.K_ft, "K_ff_mode": c.K_ff_mode}
                             for c in spec.controllers]}
    if spec.kind == FORMING:
        entry.update(V_sigma_V_rms=spec.setpoint.V_sigma, f_sigma_Hz=spec.setpoint.f_sigma)
    else:
        entry.update(P_sigma_W=spec.setpoint.P_sigma, Q_sigma_var=spec.setpoint.Q_sigma)
    return entry


def network_to_dict(net: NetworkSpec) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "name": net.name,
        "f1_Hz": net.f1,
        "base": {"P_b_W": net.base.P_b, "V_b_V_rms": net.base.V_b},
        "nodes": list(net.nodes),
        "lines": [{"from": l.from_node, "to": l.to_node, "length_m": l.length,
                   "R_pos_ohm_per_km": l.seq_R[0], "R_zero_ohm_per_km": l.seq_R[1],
                   "L_pos_H_per_km": l.seq_L[0], "L_zero_H_per_km": l.seq_L[1],
                   "C_pos_F_per_km": l.seq_C[0], "C_zero_F_per_km": l.seq_C[1]}
                  for l in net.lines],
        "loads": [{"name": l.name, "node": l.node, "S_VA": l.S, "pf": l.pf, "weights": list(l.weights),
                   "connection": l.connection} for l in net.loads],
        "resources": [_resource_entry(r) for r in net.resources],
    }
    if net.thevenin is not None:
        te = net.thevenin
        data["thevenin"] = {"node": te.node, "V_n_V_rms": te.V_n, "S_sc_VA": te.S_sc,
                            "R_over_X": te.R_over_X,
                            "harmonics": [{"h": h, "mag": m, "angle_deg": a} for h, m, a in te.harmonic_table]}
        if te.Z_sc is not None:
            data["thevenin"]["Z_sc_ohm"] = te.Z_sc
    return data


def dump_network(net: NetworkSpec, path: str) -> None:
    """Write a network file in SI units; ``load_network`` reads it back unchanged."""
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(network_to_dict(net), fh, sort_keys=False, default_flow_style=None)


# Study files

@dataclass(frozen=True)
class StudyConfig:
    """
    One study run.

    Attributes:
        study (str): Study name, one of STUDIES
        network_path (str): Resolved network file
        spectral (SpectralParams): f1 and h_max
        solver (SolverConfig): Newton settings
        tds (TdsConfig): Time-domain settings
        output_dir (str): Directory for the artefacts
        seed (int): Seed for random initial points
        repeats (int): HPF repetitions for the timing statistics
        with_oracle (bool): Run the time-domain comparison
        robustness_runs (int): Random initialisations in the robustness study
        scalability_orders: h_max values of the scalability sweep
        scalability_replace: Following-resource nodes replaced one after another by loads
    """
    study: str
    network_path: str
    spectral: SpectralParams = field(default_factory=SpectralParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    tds: TdsConfig = field(default_factory=TdsConfig)
    output_dir: str = "results"
    seed: int = 0
    repeats: int = 50
    with_oracle: bool = False
    robustness_runs: int = 20
    scalability_orders: Tuple[int, ...] = (11, 13, 15, 17, 19, 21, 23, 25)
    scalability_replace: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ConfigError(f"unknown study '{self.study}' (expected one of {', '.join(STUDIES)})", "study")
        if self.repeats < 1 or self.robustness_runs < 1:
            raise ConfigError("repeats and robustness runs must be >= 1")

    def network(self) -> NetworkSpec:
        return load_network(self.network_path)

    def with_overrides(self, study: Optional[str] = None, seed: Optional[int] = None,
                       output_dir: Optional[str] = None, with_oracle: Optional[bool] = None,
                       h_max: Optional[int] = None, tol: Optional[float] = None) -> "StudyConfig":
        """
        Copy with command-line overrides applied (None leaves a field unchanged).

        A new h_max is checked like one read from the study file: it must
        cover the source harmonics and keep the time step fine enough.
        """
        cfg = self
        try:
            if study is not None:
                cfg = replace(cfg, study=study)
            if seed is not None:
                cfg = replace(cfg, seed=int(seed))
            if output_dir is not None:
                cfg = replace(cfg, output_dir=output_dir)
            if with_oracle:
                cfg = replace(cfg, with_oracle=True)
            if h_max is not None:
                cfg = replace(cfg, spectral=SpectralParams(cfg.spectral.f1, int(h_max)))
                _check_orders(cfg)
                try:
                    cfg.tds.validate(cfg.spectral)
                except HpfError as exc:
                    raise ConfigError(str(exc), "tds") from exc
            if tol is not None:
                cfg = replace(cfg, solver=replace(cfg.solver, tol=float(tol)))
        except ConfigError:
            raise
        except HpfError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg


def _check_orders(cfg: StudyConfig, r: Optional[_Reader] = None) -> None:
    """Study f1 must match the network and h_max must cover every source harmonic."""
    def fail(path: str, message: str) -> ConfigError:
        return r.error(path, message) if r is not None else ConfigError(message, path)

    net = cfg.network()
    if not np.isclose(net.f1, cfg.spectral.f1):
        raise fail("spectral.f1_Hz", f"study f1 = {cfg.spectral.f1} Hz, network f1 = {net.f1} Hz")
    if net.thevenin is None:
        return
    # fundamental is implicit; an empty table is a pure sinusoid
    highest = max((h for h, _, _ in net.thevenin.harmonic_table), default=1)
    if cfg.spectral.h_max < highest:
        raise fail("spectral.h_max",
                   f"h_max = {cfg.spectral.h_max} is below the highest source harmonic {highest}")


def load_study_config(path: str) -> StudyConfig:
    """
    Read a study file.

    The network reference is resolved relative to the study file unless it
    is absolute or ``bundled:<name>``.

    Raises:
        ConfigError: On schema violations or missing files
    """
    path = resolve_path(path)
    r = _Reader.from_file(path)
    data = r.data
    r.check_keys(data, ("study", "network", "spectral", "solver", "tds", "output_dir", "seed",
                        "repeats", "with_oracle", "robustness", "scalability"), "")
    network_path = resolve_path(r.text(data, "network", ""), path)
    if not os.path.isfile(network_path):
        raise r.error("network", f"network file not found: {network_path}")

    spectral = r.mapping(data.get("spectral", {}) or {}, "spectral")
    with r.context("spectral"):
        sp = SpectralParams(f1=r.quantity(spectral, "f1", HERTZ, "spectral", default=50.0, positive=True),
                            h_max=r.integer(spectral, "h_max", "spectral", default=25, minimum=1))

    solver = r.mapping(data.get("solver", {}) or {}, "solver")
    with r.context("solver"):
        solver_cfg = SolverConfig(
            tol=r.number(solver, "tol", "solver", default=1e-8, positive=True),
            max_iter=r.integer(solver, "max_iter", "solver", default=50, minimum=1),
            fd_step=r.number(solver, "fd_step", "solver", default=1e-6, positive=True),
            init=r.text(solver, "init", "solver", default="flat"),
            max_halvings=r.integer(solver, "max_halvings", "solver", default=6, minimum=0))

    tds = r.mapping(data.get("tds", {}) or {}, "tds")
    with r.context("tds"):
        tds_cfg = TdsConfig(
            dt=r.quantity(tds, "dt", SECOND, "tds", default=2e-6, positive=True),
            t_end=r.quantity(tds, "t_end", SECOND, "tds", default=3.0, positive=True),
            steady_state_window=r.integer(tds, "steady_state_window", "tds", default=5, minimum=1),
            steady_detect_tol=r.number(tds, "steady_detect_tol", "tds", default=1e-7, positive=True),
            min_time=r.quantity(tds, "min_time", SECOND, "tds", default=0.5, minimum=0.0),
            ramp_time=r.quantity(tds, "ramp_time", SECOND, "tds", default=0.05, minimum=0.0))
        tds_cfg.validate(sp)

    robustness = r.mapping(data.get("robustness", {}) or {}, "robustness")
    scalability = r.mapping(data.get("scalability", {}) or {}, "scalability")
    orders = r.sequence(scalability, "h_max", "scalability", default=[11, 13, 15, 17, 19, 21, 23, 25])
    if not all(isinstance(h, int) and h >= 1 for h in orders):
        raise r.error("scalability.h_max", "expected positive integer orders")
    replace_nodes = r.sequence(scalability, "replace_nodes", "scalability", default=[])

    mag_range = r.bounds(robustness, "mag_range_pu", "robustness", default=(0.0, 10.0))
    phase_range = r.bounds(robustness, "phase_range_rad", "robustness", default=(0.0, 2.0 * np.pi))
    with r.context("robustness"):
        solver_cfg = replace(solver_cfg, mag_range=mag_range, phase_range=phase_range)

    output_dir = r.text(data, "output_dir", "", default="results")
    with r.context("study"):
        cfg = StudyConfig(study=r.text(data, "study", ""), network_path=network_path, spectral=sp,
                          solver=solver_cfg, tds=tds_cfg, output_dir=output_dir,
                          seed=r.integer(data, "seed", "", default=0, minimum=0),
                          repeats=r.integer(data, "repeats", "", default=50, minimum=1),
                          with_oracle=bool(data.get("with_oracle", False)),
                          robustness_runs=r.integer(robustness, "runs", "robustness", default=20, minimum=1),
                          scalability_orders=tuple(orders),
                          scalability_replace=tuple(str(n) for n in replace_nodes))
    _check_orders(cfg, r)
    logger.info("Loaded study '%s' from %s", cfg.study, path)
    return cfg


def thread_count() -> int:
    """Worker threads for independent scenarios, from HPF_THREADS (default 1)."""
    value = os.environ.get(THREADS_ENV, "1")
    try:
        threads = int(value)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got '{value}'") from exc
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1")
    return threads
