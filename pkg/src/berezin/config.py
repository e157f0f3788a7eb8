"""Experiment configuration: a small YAML schema with strict validation.

The semantic content round-trips exactly through parse -> serialize ->
parse; complex numbers are written back in a canonical "a+bj" form.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import yaml

SUITES = ("tuynman", "toeplitz-asymptotics", "norm-limit", "hitchin-eqcond",
          "transport-holonomy", "projection-derivative", "formal-derivation",
          "formal-flatness", "trivialization", "invariant-star", "all")


class ConfigError(ValueError):
    pass


def parse_complex(value, where: str) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        text = value.strip().replace(" ", "").replace("i", "j")
        if text in ("j", "+j"):
            text = "1j"
        try:
            return complex(text)
        except ValueError:
            raise ConfigError(f"field {where!r}: cannot parse complex value {value!r}")
    raise ConfigError(f"field {where!r}: cannot parse complex value {value!r}")


def format_complex(z: complex) -> str:
    return f"{z.real:.17g}{z.imag:+.17g}j"


@dataclass
class ExperimentConfig:
    suite: str
    kind: str
    grid: dict
    k_min: int
    k_max: int
    k_stride: int = 1
    sigmas: list = field(default_factory=lambda: [1j])
    paths: list = field(default_factory=list)
    functions: list = field(default_factory=list)  # raw specs, see make_function
    order: int = 2
    step: float = 0.05
    fd_step: float = 1e-4
    seed: int = 20240
    tolerances: dict = field(default_factory=dict)
    output_dir: str | None = None

    def k_values(self) -> list:
        ks = list(range(self.k_min, self.k_max + 1, self.k_stride))
        if not ks:
            raise ConfigError("field 'k_range': empty level range")
        return ks

    def tolerance(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default))


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"field {where!r}: missing required key {key!r}")
    return mapping[key]


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed YAML: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    suite = _require(raw, "suite", "suite")
    if suite not in SUITES:
        raise ConfigError(f"field 'suite': unknown suite {suite!r} (choose from {', '.join(SUITES)})")
    model = _require(raw, "model", "model")
    kind = _require(model, "kind", "model.kind")
    if kind not in ("torus", "sphere"):
        raise ConfigError(f"field 'model.kind': unknown kind {kind!r}")
    grid = {k: int(v) for k, v in model.items() if k != "kind"}
    expected = {"torus": {"n"}, "sphere": {"n_theta", "n_phi"}}[kind]
    if set(grid) != expected:
        raise ConfigError(f"field 'model': {kind} grid needs exactly {sorted(expected)}, got {sorted(grid)}")
    kr = _require(raw, "k_range", "k_range")
    k_min = int(_require(kr, "min", "k_range.min"))
    k_max = int(_require(kr, "max", "k_range.max"))
    k_stride = int(kr.get("stride", 1))
    if k_min < 1 or k_max < k_min or k_stride < 1:
        raise ConfigError("field 'k_range': need 1 <= min <= max and stride >= 1")

    sigmas = [parse_complex(s, f"sigma[{i}]") for i, s in enumerate(raw.get("sigma", ["1j"]))]
    if kind == "torus":
        for i, s in enumerate(sigmas):
            if s.imag <= 0:
                raise ConfigError(f"field 'sigma[{i}]': {s} not in the upper half-plane")
    paths = [[parse_complex(s, f"paths[{i}][{j}]") for j, s in enumerate(p)]
             for i, p in enumerate(raw.get("paths", []))]
    functions = list(raw.get("functions", []))
    for i, spec in enumerate(functions):
        if not isinstance(spec, dict) or not ({"name", "modes"} & set(spec)):
            raise ConfigError(f"field 'functions[{i}]': need a mapping with 'name' or 'modes'")

    cfg = ExperimentConfig(
        suite=suite, kind=kind, grid=grid, k_min=k_min, k_max=k_max, k_stride=k_stride,
        sigmas=sigmas, paths=paths, functions=functions,
        order=int(raw.get("order", 2)),
        step=float(raw.get("step", 0.05)),
        fd_step=float(raw.get("fd_step", 1e-4)),
        seed=int(raw.get("seed", 20240)),
        tolerances={str(k): float(v) for k, v in (raw.get("tolerances") or {}).items()},
        output_dir=raw.get("output_dir"),
    )
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {
        "suite": cfg.suite,
        "model": {"kind": cfg.kind, **cfg.grid},
        "k_range": {"min": cfg.k_min, "max": cfg.k_max, "stride": cfg.k_stride},
        "sigma": [format_complex(s) for s in cfg.sigmas],
        "paths": [[format_complex(s) for s in p] for p in cfg.paths],
        "functions": cfg.functions,
        "order": cfg.order,
        "step": cfg.step,
        "fd_step": cfg.fd_step,
        "seed": cfg.seed,
        "tolerances": cfg.tolerances,
    }
    if cfg.output_dir is not None:
        out["output_dir"] = cfg.output_dir
    return out


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True)


def make_function(cfg: ExperimentConfig, spec: dict):
    """Build the function object named by one entry of cfg.functions."""
    from .functions import SphereFunction, TorusFunction

    if cfg.kind == "torus":
        if "modes" in spec:
            modes = {}
            for row in spec["modes"]:
                if len(row) not in (3, 4):
                    raise ConfigError("torus mode rows are [p, q, re] or [p, q, re, im]")
                p, q = int(row[0]), int(row[1])
                amp = complex(float(row[2]), float(row[3]) if len(row) == 4 else 0.0)
                modes[(p, q)] = modes.get((p, q), 0.0) + amp
            return TorusFunction(modes)
        name = spec["name"]
        if name == "cos2pix":
            return TorusFunction.cos_x()
        raise ConfigError(f"unknown torus function name {name!r}")
    if "name" not in spec:
        raise ConfigError("sphere functions are named: x1, x2, x3 or products like x3*x1")
    return SphereFunction.parse(spec["name"])


def default_functions(cfg: ExperimentConfig) -> list:
    from .functions import SphereFunction, TorusFunction

    if cfg.functions:
        return [make_function(cfg, s) for s in cfg.functions]
    if cfg.kind == "torus":
        return [TorusFunction.cos_x()]
    return [SphereFunction.parse("x3"), SphereFunction.parse("x1")]
