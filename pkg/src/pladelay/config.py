"""Scenario and deployment files (YAML) with field-level validation.

A scenario is a tree of small dataclasses. Parsing reports every problem
at once, each tagged with its dotted field path and source line.
"""

from __future__ import annotations

import ast
import dataclasses
import math
import operator
import typing
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from .channel import (
    ArrayConfig,
    Attacker,
    Deployment,
    PathLossModel,
    db_to_linear,
    p0_for_edge_snr,
    square_grid_deployment,
)

UPPER_RIGHT = ("D12", "D13", "D14", "D17", "D18", "D19", "D22", "D23", "D24")
DEFAULT_SEED = 20240601


class ConfigError(ValueError):
    """Invalid scenario; ``errors`` holds ``{"field", "line", "message"}`` dicts."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = [f"{e['field']} (line {e['line']}): {e['message']}" if e.get("line") else f"{e['field']}: {e['message']}" for e in self.errors]
        super().__init__("; ".join(lines))


@dataclass
class GridSpec:
    nx: int = 5
    ny: int = 5
    spacing: float = 5.0
    origin: list = field(default_factory=lambda: [0.0, 0.0])


@dataclass
class DeploymentSpec:
    file: Optional[str] = None
    grid: GridSpec = field(default_factory=GridSpec)
    n_rx: int = 4
    delta_r: float = 0.5
    carrier_freq: float = 2.4e9
    beta: float = 3.0
    edge_snr_db: float = 15.0
    pathloss_exponent: str = "half"
    rice_k_db: float = 6.0
    corr: float = 0.0


@dataclass
class PlaSpec:
    enabled: bool = True
    p_fa: float = 1e-2
    threshold: Optional[float] = None


@dataclass
class EveSpec:
    device: Optional[str] = None
    position: Optional[list] = None
    distance: Optional[float] = None
    aoa: Optional[float] = None
    rice_k_db: Optional[float] = None


@dataclass
class AttackSpec:
    type: str = "baseline"
    eve: EveSpec = field(default_factory=EveSpec)
    n_sybil: int = 0
    sybil_ids: Optional[list] = None
    p_attack: float = 0.0
    k_rc: int = 4


@dataclass
class SncSpec:
    u: float = 0.5
    alpha: Optional[float] = None
    u_reference: str = "attack-free"
    epsilon: float = 1e-6
    w: float = 10.0
    w_max: int = 30
    variance: str = "approx"
    moment_match: str = "moments"


@dataclass
class SimSpec:
    enabled: bool = False
    frames: int = 10**6
    warmup: Optional[int] = None
    replications: int = 1
    seed: int = DEFAULT_SEED
    max_w: int = 200


@dataclass
class DetectSpec:
    targets: Optional[list] = None
    mc_samples: int = 100_000
    mc_metric: str = "md_l2"


@dataclass
class ScenarioFile:
    deployment: DeploymentSpec = field(default_factory=DeploymentSpec)
    target: str = "D12"
    active: list = field(default_factory=lambda: list(UPPER_RIGHT))
    n_frame: int = 288
    pla: PlaSpec = field(default_factory=PlaSpec)
    attack: AttackSpec = field(default_factory=AttackSpec)
    snc: SncSpec = field(default_factory=SncSpec)
    sim: SimSpec = field(default_factory=SimSpec)
    detect: DetectSpec = field(default_factory=DetectSpec)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


CHOICES = {
    "attack.type": ("baseline", "sybil", "disassociation"),
    "snc.u_reference": ("attack-free", "point", "protected-full-attack"),
    "snc.variance": ("approx", "exact"),
    "snc.moment_match": ("moments", "offset"),
    "deployment.pathloss_exponent": ("half", "full"),
    "detect.mc_metric": ("md_l2", "md"),
}


class _LineLoader(yaml.SafeLoader):
    pass


def _compose_lines(text: str):
    """Parse YAML and collect ``{dotted.path: line}`` for every mapping key."""
    node = yaml.compose(text, Loader=_LineLoader)
    lines: dict = {}

    def walk(n, prefix):
        if isinstance(n, yaml.MappingNode):
            for k, v in n.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                lines[path] = k.start_mark.line + 1
                walk(v, path)

    if node is not None:
        walk(node, "")
    data = yaml.safe_load(text) if node is not None else {}
    return data or {}, lines


def _coerce(value, hint, path, errors, lines):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        hint = next(a for a in args if a is not type(None))
        origin = typing.get_origin(hint)
    if dataclasses.is_dataclass(hint):
        return _build(hint, value, path, errors, lines)
    try:
        if hint is bool:
            if not isinstance(value, bool):
                raise TypeError("expected true or false")
            return value
        if hint is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError("expected an integer")
            return int(value)
        if hint is float:
            if isinstance(value, bool):
                raise TypeError("expected a number")
            if isinstance(value, str):
                try:
                    return parse_number(value)
                except SyntaxError:
                    raise ValueError(f"expected a number, got {value!r}")
            return float(value)
        if hint is str:
            if not isinstance(value, str):
                raise TypeError("expected a string")
            return value
        if hint is list or origin is list:
            if not isinstance(value, list):
                raise TypeError("expected a list")
            return list(value)
    except (TypeError, ValueError) as exc:
        errors.append({"field": path, "line": lines.get(path), "message": str(exc)})
        return None
    return value


def _build(cls, data, prefix, errors, lines):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        errors.append({"field": prefix or "<root>", "line": lines.get(prefix), "message": "expected a mapping"})
        return cls()
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in names:
            errors.append({"field": path, "line": lines.get(path), "message": "unknown field"})
            continue
        kwargs[key] = _coerce(value, hints[key], path, errors, lines)
    return cls(**{k: v for k, v in kwargs.items() if v is not None or _optional(hints[k])})


def _optional(hint) -> bool:
    return typing.get_origin(hint) is typing.Union and type(None) in typing.get_args(hint)


def validate(sc: ScenarioFile, lines=None, known_ids=None) -> list:
    lines = lines or {}
    errors = []

    def err(path, msg):
        # Cross-field problems point at the closest enclosing key present in the file.
        key, line = path, lines.get(path)
        while line is None and "." in key:
            key = key.rsplit(".", 1)[0]
            line = lines.get(key)
        errors.append({"field": path, "line": line, "message": msg})

    for path, allowed in CHOICES.items():
        obj = sc
        for part in path.split("."):
            obj = getattr(obj, part)
        if obj not in allowed:
            err(path, f"must be one of {list(allowed)}, got {obj!r}")
    if not 0.0 < sc.pla.p_fa < 1.0:
        err("pla.p_fa", "must lie in (0, 1)")
    if sc.pla.threshold is not None and sc.pla.threshold < 0:
        err("pla.threshold", "must be >= 0")
    if sc.snc.alpha is None and not 0.0 < sc.snc.u < 1.0:
        err("snc.u", "must lie in (0, 1)")
    if sc.snc.alpha is not None and sc.snc.alpha < 0:
        err("snc.alpha", "must be >= 0")
    if not 0.0 < sc.snc.epsilon <= 1.0:
        err("snc.epsilon", "must lie in (0, 1]")
    if not 0.0 <= sc.attack.p_attack <= 1.0:
        err("attack.p_attack", "must lie in [0, 1]")
    if sc.attack.k_rc < 1:
        err("attack.k_rc", "must be >= 1")
    if sc.attack.n_sybil < 0:
        err("attack.n_sybil", "must be >= 0")
    if sc.n_frame < 1:
        err("n_frame", "must be >= 1")
    if sc.deployment.n_rx < 1:
        err("deployment.n_rx", "must be >= 1")
    if not -1.0 < sc.deployment.corr < 1.0:
        err("deployment.corr", "must lie in (-1, 1)")
    if sc.sim.frames < 1 or sc.sim.replications < 1:
        err("sim.frames", "frames and replications must be >= 1")
    if sc.sim.warmup is not None and not 0 <= sc.sim.warmup < sc.sim.frames:
        err("sim.warmup", "must satisfy 0 <= warmup < frames")
    if sc.detect.mc_samples < 10_000:
        err("detect.mc_samples", "must be >= 10000")
    eve = sc.attack.eve
    ways = sum(x is not None for x in (eve.device, eve.position)) + (eve.distance is not None or eve.aoa is not None)
    if ways > 1:
        err("attack.eve", "give exactly one of device, position or distance/aoa")
    if (eve.distance is None) != (eve.aoa is None):
        err("attack.eve", "distance and aoa go together")
    if sc.attack.type != "baseline" and ways == 0:
        err("attack.eve", f"{sc.attack.type} attack needs an attacker location")
    if sc.target not in sc.active:
        err("target", "target must be one of the active devices")
    if known_ids is not None:
        known = set(known_ids)
        for path, ids in (
            ("active", sc.active),
            ("attack.sybil_ids", sc.attack.sybil_ids or []),
            ("detect.targets", sc.detect.targets or []),
        ):
            for dev in ids:
                if dev not in known:
                    err(path, f"unknown device id {dev!r}")
        if sc.target not in known:
            err("target", f"unknown device id {sc.target!r}")
        if eve.device is not None and eve.device not in known:
            err("attack.eve.device", f"unknown device id {eve.device!r}")
        overlap = set(sc.attack.sybil_ids or []) & set(sc.active)
        if overlap:
            err("attack.sybil_ids", f"Sybil ids overlap the active set: {sorted(overlap)}")
    return errors


def parse_scenario(text: str, track_lines: bool = True) -> ScenarioFile:
    """Scenario from YAML text; raises :class:`ConfigError` listing every problem."""
    try:
        data, lines = _compose_lines(text)
        if not track_lines:
            lines = {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError([{"field": "<yaml>", "line": mark.line + 1 if mark else None, "message": str(exc)}])
    errors: list = []
    sc = _build(ScenarioFile, data, "", errors, lines)
    errors += validate(sc, lines)
    if errors:
        raise ConfigError(errors)
    sc._lines = lines
    return sc


def load_scenario(path) -> ScenarioFile:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def scenario_from_dict(data: dict) -> ScenarioFile:
    return parse_scenario(yaml.safe_dump(data), track_lines=False)


_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def parse_number(text: str) -> float:
    """Number or simple arithmetic expression in ``pi`` (e.g. ``3*pi/4``)."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        raise ValueError(f"unsupported expression {text!r}")

    return ev(ast.parse(text.strip(), mode="eval"))


def set_path(sc: ScenarioFile, key: str, raw: Any) -> ScenarioFile:
    """Copy of ``sc`` with ``key`` (dotted path) replaced; strings are parsed as YAML scalars."""
    value = yaml.safe_load(raw) if isinstance(raw, str) else raw
    if isinstance(raw, str) and isinstance(value, str):
        try:
            value = parse_number(raw)
        except (ValueError, SyntaxError):
            pass
    data = sc.to_dict()
    node = data
    parts = key.split(".")
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError([{"field": key, "line": None, "message": "unknown field"}])
        node = node[part]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ConfigError([{"field": key, "line": None, "message": "unknown field"}])
    node[parts[-1]] = value
    return scenario_from_dict(data)


def deployment_to_dict(dep: Deployment) -> dict:
    out = {
        "access_point": [0.0, 0.0],
        "array": {
            "n_rx": dep.array.n_rx,
            "delta_r": dep.array.delta_r,
            "carrier_freq": dep.array.carrier_freq,
            "orientation": list(dep.array.orientation),
        },
        "pathloss": {"p0": dep.pathloss.p0, "beta": dep.pathloss.beta, "exponent": dep.pathloss.exponent},
        "rice_k": dep.rice_k,
        "corr": dep.corr,
        "devices": {k: list(v) for k, v in dep.devices.items()},
    }
    if dep.attacker is not None:
        out["attacker"] = {"position": list(dep.attacker.position), "rice_k": dep.attacker.rice_k}
    return out


def deployment_from_dict(data: dict) -> Deployment:
    try:
        arr = data.get("array", {})
        pl = data.get("pathloss", {})
        att = data.get("attacker")
        return Deployment(
            devices={str(k): tuple(v) for k, v in data["devices"].items()},
            array=ArrayConfig(
                n_rx=arr.get("n_rx", 4),
                delta_r=arr.get("delta_r", 0.5),
                carrier_freq=arr.get("carrier_freq", 2.4e9),
                orientation=tuple(arr.get("orientation", ArrayConfig().orientation)),
            ),
            pathloss=PathLossModel(p0=pl.get("p0", 1.0), beta=pl.get("beta", 3.0), exponent=pl.get("exponent", "half")),
            rice_k=data.get("rice_k", db_to_linear(6.0)),
            corr=data.get("corr", 0.0),
            attacker=Attacker(tuple(att["position"]), att.get("rice_k", 1.0)) if att else None,
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError([{"field": "deployment", "line": None, "message": f"malformed deployment file: {exc}"}])


def write_deployment(dep: Deployment, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(deployment_to_dict(dep), fh, sort_keys=False)


def read_deployment(path) -> Deployment:
    with open(path, encoding="utf-8") as fh:
        return deployment_from_dict(yaml.safe_load(fh))


def build_deployment(spec: DeploymentSpec) -> Deployment:
    """Deployment from a file reference or the square-grid parameters.

    Array, Rice and correlation settings in the scenario override the file.
    """
    if spec.file is not None:
        dep = read_deployment(spec.file)
        return dep.with_(
            array=ArrayConfig(spec.n_rx, spec.delta_r, spec.carrier_freq, dep.array.orientation),
            rice_k=db_to_linear(spec.rice_k_db),
            corr=spec.corr,
        )
    g = spec.grid
    dep = square_grid_deployment(
        nx=g.nx,
        ny=g.ny,
        spacing=g.spacing,
        origin=tuple(g.origin),
        array=ArrayConfig(spec.n_rx, spec.delta_r, spec.carrier_freq),
        beta=spec.beta,
        edge_snr_db=spec.edge_snr_db,
        rice_k=db_to_linear(spec.rice_k_db),
        corr=spec.corr,
    )
    if spec.pathloss_exponent != "half":
        p0 = p0_for_edge_snr(list(dep.devices.values()), spec.edge_snr_db, spec.beta, spec.pathloss_exponent)
        dep = dep.with_(pathloss=PathLossModel(p0=p0, beta=spec.beta, exponent=spec.pathloss_exponent))
    return dep
