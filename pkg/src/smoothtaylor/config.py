"""Experiment configuration: a versioned JSON document.

Minimal example::

    {
      "schema_version": 1,
      "model_path": "model.json",
      "input_paths": ["img0.tsr", "img1.png"],
      "methods": [{"name": "ig", "baseline": "zero", "steps": 50},
                  {"name": "smoothtaylor", "sigma": 0.5, "roots": 150}],
      "seed": 0,
      "output_dir": "out"
    }

Relative paths resolve against the config file's directory.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field

from .adaptive import AdaptiveConfig
from .perturbation import PerturbEvalConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


_METHOD_PARAMS = {
    "gradient": {},
    "ig": {"baseline": ("zero", "noise"), "steps": int, "baselines": int},
    "smoothgrad": {"sigma": float, "samples": int},
    "smoothtaylor": {"sigma": float, "roots": int},
}
_REQUIRED = {
    "gradient": (),
    "ig": ("baseline", "steps"),
    "smoothgrad": ("sigma", "samples"),
    "smoothtaylor": ("sigma", "roots"),
}


@dataclass(frozen=True)
class MethodSpec:
    name: str
    params: tuple = ()  # sorted (key, value) pairs

    def get(self, key, default=None):
        return dict(self.params).get(key, default)

    @property
    def tag(self):
        p = dict(self.params)
        if self.name == "ig":
            if p["baseline"] == "zero":
                return f"ig-zero_M{p['steps']}"
            return f"ig-noise_M{p['steps']}_N{p.get('baselines', 1)}"
        if self.name == "smoothgrad":
            return f"smoothgrad_s{p['sigma']:g}_N{p['samples']}"
        if self.name == "smoothtaylor":
            return f"smoothtaylor_s{p['sigma']:g}_R{p['roots']}"
        return self.name

    @property
    def param_string(self):
        p = dict(self.params)
        if self.name == "ig":
            s = f"baseline={p['baseline']};M={p['steps']}"
            return s + (f";N={p.get('baselines', 1)}" if p["baseline"] == "noise" else "")
        if self.name == "smoothgrad":
            return f"sigma={p['sigma']:g};N={p['samples']}"
        if self.name == "smoothtaylor":
            return f"sigma={p['sigma']:g};R={p['roots']}"
        return ""


def parse_method(d):
    if not isinstance(d, dict) or "name" not in d:
        raise ConfigError(f"method spec needs a 'name': {d!r}")
    name = d["name"]
    if name not in _METHOD_PARAMS:
        raise ConfigError(f"unknown method {name!r}; known: {sorted(_METHOD_PARAMS)}")
    allowed = _METHOD_PARAMS[name]
    extra = set(d) - set(allowed) - {"name"}
    if extra:
        raise ConfigError(f"method {name!r} does not take {sorted(extra)}")
    missing = [k for k in _REQUIRED[name] if k not in d]
    if missing:
        raise ConfigError(f"method {name!r} is missing {missing}")
    params = {}
    for key, kind in allowed.items():
        if key not in d:
            continue
        val = d[key]
        if isinstance(kind, tuple):
            if val not in kind:
                raise ConfigError(f"{name}.{key} must be one of {kind}")
        else:
            try:
                val = kind(val)
            except (TypeError, ValueError):
                raise ConfigError(f"{name}.{key} must be {kind.__name__}") from None
            if val <= 0:
                raise ConfigError(f"{name}.{key} must be positive")
        params[key] = val
    return MethodSpec(name, tuple(sorted(params.items())))


@dataclass
class ExperimentConfig:
    model_path: str
    input_paths: list
    methods: list = field(default_factory=list)
    perturbation: PerturbEvalConfig = field(default_factory=PerturbEvalConfig)
    tv: dict = field(default_factory=dict)
    adaptive: AdaptiveConfig = None
    seed: int = 0
    output_dir: str = "out"
    input_value_range: object = None
    normalization: dict = None
    score_kind: str = "probability"
    workers: int = 1
    gradcheck: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def digest(self):
        """Hash of the settings that affect results (not output location or workers)."""
        keep = {k: v for k, v in self.raw.items() if k not in ("output_dir", "workers")}
        return hashlib.sha256(json.dumps(keep, sort_keys=True).encode()).hexdigest()


def _resolve(base, path):
    return path if os.path.isabs(path) else os.path.normpath(os.path.join(base, path))


def _build(cls, d, what, **overrides):
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise ConfigError(f"{what} must be an object")
    try:
        return cls(**{**d, **overrides})
    except TypeError as exc:
        raise ConfigError(f"bad {what}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"bad {what}: {exc}") from None


def _value_range(vr):
    """``[lo, hi]`` or ``[[lo, hi], ...]`` (per channel) as nested tuples."""
    if vr is None:
        return None
    try:
        if all(isinstance(v, list) for v in vr):
            out = tuple((float(lo), float(hi)) for lo, hi in vr)
        else:
            lo, hi = vr
            out = (float(lo), float(hi))
    except (TypeError, ValueError):
        raise ConfigError("input_value_range must be [lo, hi] or a list of per-channel pairs") from None
    return out


def parse_config(raw, base_dir=".", seed=None, output_dir=None, workers=None):
    """Validate a config dict; command-line overrides win over file values."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    if seed is not None:
        raw["seed"] = seed
    if "seed" not in raw:
        raise ConfigError("config needs a 'seed' (or pass --seed)")
    if output_dir is not None:
        raw["output_dir"] = output_dir
    if workers is not None:
        raw["workers"] = workers
    if "model_path" not in raw:
        raise ConfigError("config needs 'model_path'")
    seed_val = int(raw["seed"])
    if not 0 <= seed_val < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")

    ev = raw.get("eval", {})
    if isinstance(ev, list):
        if len(ev) > 1:
            raise ConfigError("only one eval block is supported per config")
        ev = ev[0] if ev else {}
    vr = _value_range(raw.get("input_value_range"))
    pert = _build(PerturbEvalConfig, ev.get("perturbation"), "eval.perturbation", seed=seed_val, value_range=vr)
    tv = dict(ev.get("tv") or {})
    unknown = set(tv) - {"include_last", "min_size", "enabled"}
    if unknown:
        raise ConfigError(f"unknown eval.tv options {sorted(unknown)}")

    adaptive = None
    if raw.get("adaptive") is not None:
        adaptive = _build(AdaptiveConfig, raw["adaptive"], "adaptive", seed=seed_val)

    kind = raw.get("score_kind", "probability")
    if kind not in ("logit", "probability"):
        raise ConfigError("score_kind must be 'logit' or 'probability'")
    workers_val = int(raw.get("workers", 1))
    if workers_val < 1:
        raise ConfigError("workers must be >= 1")
    inputs = raw.get("input_paths", [])
    if not isinstance(inputs, list):
        raise ConfigError("input_paths must be a list")

    return ExperimentConfig(
        model_path=_resolve(base_dir, raw["model_path"]),
        input_paths=[_resolve(base_dir, p) for p in inputs],
        methods=[parse_method(m) for m in raw.get("methods", [])],
        perturbation=pert,
        tv=tv,
        adaptive=adaptive,
        seed=seed_val,
        output_dir=_resolve(base_dir, raw.get("output_dir", "out")),
        input_value_range=vr,
        normalization=raw.get("normalization"),
        score_kind=kind,
        workers=workers_val,
        gradcheck=dict(raw.get("gradcheck") or {}),
        raw=raw,
    )


def load_config(path, **overrides):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(raw, os.path.dirname(os.path.abspath(path)), **overrides)
