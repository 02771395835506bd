"""YAML scenario files.

A scenario has five blocks; every field has a default, so ``{}`` is a valid
file describing the built-in template with ``L = 3``, ``a = b = 1``::

    system:
      template: corollary2        # or "custom"
      params: {L: 3, a: "1", b: "1"}
      # custom only:
      # n: 2
      # f: ["x2", "-x1"]
      # g: ["0", "1"]
      # V: "x1^2/2 + x2^2/2"
    classifier: {eps0: null, n_max: 7, grid: {lo: [-1,-1,-1], hi: [1,1,1], step: 0.25}}
    synth: {cap: 0.25, u_magnitudes: [...], rhos: [0.5, 1, 2, 4], t_min: 1.0e-5, ...}
    simulation: {partition: {rule: uniform, delta: 0.25}, horizon: 200, R: 2, ...}
    output: {dir: out, formats: [csv, json]}
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import yaml

from . import symexpr as sx
from .classifier import GridSpec
from .liealg import VectorField
from .simloop import Partition
from .symexpr import ParseError, ScalarField
from .synth import SynthParams
from .systems import ConfigError, SystemDef, check_template_exponent, corollary2

TEMPLATES = ("corollary2", "custom")
FORMATS = ("csv", "json")

_DEFAULT_SYNTH = SynthParams()


def _default_system() -> dict:
    return {"template": "corollary2", "params": {"L": 3, "a": "1", "b": "1"}}


def _default_classifier() -> dict:
    return {"eps0": None, "n_max": 7,
            "grid": {"lo": [-1.0, -1.0, -1.0], "hi": [1.0, 1.0, 1.0], "step": 0.25,
                     "exclude_radius": 1e-6}}


def _default_synth() -> dict:
    return {"cap": 0.25, **_DEFAULT_SYNTH.to_dict()}


def _default_simulation() -> dict:
    return {"partition": {"rule": "uniform", "delta": 0.25}, "horizon": 200.0, "R": 2.0,
            "radius": 0.01, "x0": [0.5, 0.5, 0.5], "deltas": [0.1, 0.5, 1.0], "samples": 20,
            "sweep_horizon": 20.0, "seed": 0}


def _default_output() -> dict:
    return {"dir": "out", "formats": list(FORMATS)}


def _merge(defaults: dict, given: dict | None, block: str) -> dict:
    if given is None:
        return defaults
    if not isinstance(given, dict):
        raise ConfigError(f"block {block!r} must be a mapping")
    unknown = set(given) - set(defaults) - ({"n", "f", "g", "V"} if block == "system" else set())
    if unknown:
        raise ConfigError(f"unknown keys in {block!r}: {sorted(unknown)}")
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(out.get(k), dict) and isinstance(v, dict) and k != "params":
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    return out


def _number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    return float(value)


@dataclass
class ScenarioConfig:
    system: dict = field(default_factory=_default_system)
    classifier: dict = field(default_factory=_default_classifier)
    synth: dict = field(default_factory=_default_synth)
    simulation: dict = field(default_factory=_default_simulation)
    output: dict = field(default_factory=_default_output)

    @classmethod
    def from_dict(cls, data: dict | None) -> "ScenarioConfig":
        data = data or {}
        if not isinstance(data, dict):
            raise ConfigError("a scenario file must contain a mapping")
        unknown = set(data) - {"system", "classifier", "synth", "simulation", "output"}
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        sysblock = data.get("system") or {}
        if not isinstance(sysblock, dict):
            raise ConfigError("block 'system' must be a mapping")
        template = sysblock.get("template", "corollary2")
        sys_defaults = _default_system() if template == "corollary2" else {
            "template": "custom", "params": {}, "n": None, "f": None, "g": None, "V": None}
        cfg = cls(
            _merge(sys_defaults, data.get("system"), "system"),
            _merge(_default_classifier(), data.get("classifier"), "classifier"),
            _merge(_default_synth(), data.get("synth"), "synth"),
            _merge(_default_simulation(), data.get("simulation"), "simulation"),
            _merge(_default_output(), data.get("output"), "output"),
        )
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return copy.deepcopy({"system": self.system, "classifier": self.classifier,
                              "synth": self.synth, "simulation": self.simulation,
                              "output": self.output})

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)

    # -- validation and construction -------------------------------------

    def validate(self) -> None:
        s = self.system
        if s.get("template") not in TEMPLATES:
            raise ConfigError(f"system.template must be one of {TEMPLATES}, got {s.get('template')!r}")
        if s["template"] == "corollary2":
            check_template_exponent(s["params"].get("L", 3))
        else:
            for key in ("n", "f", "g", "V"):
                if s.get(key) is None:
                    raise ConfigError(f"custom systems need system.{key}")
        for fmt in self.output.get("formats", []):
            if fmt not in FORMATS:
                raise ConfigError(f"unknown output format {fmt!r}")
        self.build_system()  # expressions must parse
        self.grid()
        self.synth_params()
        self.partition()
        sim = self.simulation
        for key in ("horizon", "R", "radius", "sweep_horizon"):
            if not _number(sim[key], f"simulation.{key}") > 0:
                raise ConfigError(f"simulation.{key} must be positive")

    def build_system(self, **overrides) -> SystemDef:
        s = self.system
        c = self.classifier
        kw = {"eps0": c.get("eps0"), "n_max": int(c.get("n_max", 7))}
        kw.update(overrides)
        try:
            if s["template"] == "corollary2":
                p = s["params"]
                return corollary2(p.get("L", 3), str(p.get("a", "1")), str(p.get("b", "1")), **kw)
            n = int(s["n"])
            names = {k: _param_value(v, n) for k, v in (s.get("params") or {}).items()}
            f = VectorField(n, tuple(sx.parse_expr(str(e), n, names) for e in s["f"]))
            g = VectorField(n, tuple(sx.parse_expr(str(e), n, names) for e in s["g"]))
            V = ScalarField(n, sx.parse_expr(str(s["V"]), n, names))
            return SystemDef(f, g, V, name="custom", params=dict(s.get("params") or {}), **kw)
        except (ParseError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid system definition: {exc}") from exc

    def grid(self) -> GridSpec:
        g = self.classifier["grid"]
        try:
            return GridSpec(tuple(g["lo"]), tuple(g["hi"]), float(g["step"]),
                            float(g.get("exclude_radius", 1e-6)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid classifier.grid: {exc}") from exc

    def synth_params(self) -> SynthParams:
        d = dict(self.synth)
        cap = d.pop("cap")
        if not _number(cap, "synth.cap") > 0:
            raise ConfigError("synth.cap must be positive")
        try:
            return SynthParams.from_dict(d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid synth block: {exc}") from exc

    def partition(self, horizon: float | None = None) -> Partition:
        p = self.simulation["partition"]
        T = float(horizon if horizon is not None else self.simulation["horizon"])
        rule = p.get("rule")
        try:
            if rule == "uniform":
                return Partition.uniform(float(p["delta"]), T)
            if rule == "random":
                return Partition.random(float(p["lo"]), float(p["hi"]), T,
                                        int(p.get("seed", self.simulation.get("seed", 0))))
            if rule == "explicit":
                return Partition.explicit(p["times"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid simulation.partition: {exc}") from exc
        raise ConfigError(f"unknown partition rule {rule!r}")


def _param_value(v, n):
    if isinstance(v, bool):
        raise ConfigError(f"parameter value {v!r} is not a number or expression")
    if isinstance(v, int):
        return v
    if isinstance(v, float):
        return Fraction(v)
    return sx.parse_expr(str(v), n)


def load(path: str | Path) -> ScenarioConfig:
    """Read a scenario; ``OSError`` propagates, malformed content raises ``ConfigError``."""
    text = Path(path).read_text()
    return loads(text)


def loads(text: str) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    return ScenarioConfig.from_dict(data)
