"""Experiment configuration: schema, normalization and tolerance profiles.

A configuration is a YAML (or JSON) mapping::

    system:
      builder: qubit | transverse_ising | xxz | matrices
      params: {...}                  # builder keyword arguments
    ensemble: {beta: 1.0, mu: 0.0}
    protocol:
      t_i: 0.0
      t_f: 10.0
      steps: 2000
      drives:
        - {source: 0, form: pulse, amplitude: 0.05, center: 4.0, width: 1.0}
    tasks:
      - {name: static-susc}
      - {name: fdr-check, f: [symmetric, bkm]}
    output: {dir: results, format: csv}
    tolerance_profile: strict
    seed: null

For ``builder: matrices`` the parameters are ``H0``, optional ``N``,
``sources`` (list of matrices or of mappings with ``phi``, ``phi2`` and
``phi3``), ``labels``, ``parity`` and ``basis_real``.  A matrix is a nested
list of reals or a mapping ``{re: [[...]], im: [[...]]}``.

Normalization fills every default, so dumping a normalized configuration
and parsing it again gives the same mapping.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import ConfigParse, ValidationError

TOLERANCE_PROFILES: dict[str, dict[str, float]] = {
    # exact identities evaluated in floating point
    "strict": {"identity": 1e-12, "reconstruction": 1e-10, "jarzynski": 1e-10, "crooks": 1e-8},
    # finite-difference and quadrature checks
    "numeric": {"finite_difference": 1e-5, "legendre": 1e-4, "quadrature": 1e-6, "kk_l2": 1e-3},
}

TASKS = (
    "spectrum",
    "respond",
    "static-susc",
    "fdr-check",
    "volterra-check",
    "work-stats",
    "kk",
    "reference-models",
    "fluid-current",
)

BUILDERS = {
    "qubit": {"omega0": 1.0, "tilt": 0.0},
    "transverse_ising": {"L": 3, "J": 1.0, "h": 0.5, "periodic": False},
    "xxz": {"L": 3, "J": 1.0, "delta": 0.5, "fields": None},
    "matrices": {"H0": None, "N": None, "sources": [], "labels": None, "parity": None, "basis_real": False},
}

TASK_DEFAULTS: dict[str, dict[str, Any]] = {
    "spectrum": {},
    "respond": {"m": 0, "n": 0, "t_max": 10.0, "points": 201},
    "static-susc": {"order": 2},
    "fdr-check": {"f": ["const1", "linear", "symmetric", "power(0.5)", "bkm", "root_mean"]},
    "volterra-check": {"orders": [1, 2], "amplitudes": [0.02, 0.04, 0.08], "observable": 0},
    "work-stats": {"xi": [0.5]},
    "kk": {"model": "lorentzian", "omega0": 0.0, "gamma": 1.0, "points": 4096, "half_widths": 20.0, "m": 0, "n": 0},
    "reference-models": {"R": 1.0, "C": 1.0, "omega0": 1.0, "zeta": 0.1, "t_max": 20.0, "points": 401},
    "fluid-current": {"sigma": 1.0, "D": 0.5, "tau": 0.1, "points": 100},
}

DEFAULT_CONFIG: dict[str, Any] = {
    "system": {"builder": "qubit", "params": {}},
    "ensemble": {"beta": 1.0, "mu": 0.0},
    "protocol": {"t_i": 0.0, "t_f": 10.0, "steps": 2000, "drives": []},
    "tasks": [],
    "output": {"dir": "results", "format": "csv"},
    "tolerance_profile": "strict",
    "seed": None,
}

DRIVE_KEYS = {
    "constant": (),
    "step": ("height", "t_step"),
    "ramp": ("delta",),
    "pulse": ("amplitude", "center", "width"),
    "sinusoid": ("amplitude", "frequency", "phase"),
    "tabulated": ("times", "values"),
}


def load_config(path: str | Path) -> dict:
    """Read, parse and normalize a configuration file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParse(f"cannot read {path}: {exc}") from exc
    return parse_config(text, json_hint=str(path).endswith(".json"))


def parse_config(text: str, json_hint: bool = False) -> dict:
    try:
        raw = json.loads(text) if json_hint else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigParse(f"malformed configuration: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigParse("configuration must be a mapping at the top level")
    return normalize(raw)


def _reject_unknown(given: dict, allowed, path: str):
    for key in given:
        if key not in allowed:
            raise ValidationError(f"unknown key {key!r}", path=f"{path}.{key}" if path else key)


def _number(x, path: str, positive: bool = False, integer: bool = False):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ValidationError(f"expected a number, got {x!r}", path=path)
    if integer and int(x) != x:
        raise ValidationError(f"expected an integer, got {x!r}", path=path)
    if positive and not x > 0:
        raise ValidationError(f"expected a positive value, got {x!r}", path=path)
    return int(x) if integer else float(x)


def _plain(obj):
    """Convert tuples and numpy scalars to plain YAML/JSON types."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def normalize(raw: dict) -> dict:
    """Validate ``raw`` and return a fully populated configuration."""
    _reject_unknown(raw, DEFAULT_CONFIG, "")
    cfg = copy.deepcopy(DEFAULT_CONFIG)

    sysraw = raw.get("system", {}) or {}
    _reject_unknown(sysraw, ("builder", "params"), "system")
    builder = sysraw.get("builder", "qubit")
    if builder not in BUILDERS:
        raise ValidationError(f"unknown builder {builder!r}", path="system.builder")
    params = dict(BUILDERS[builder])
    given = sysraw.get("params", {}) or {}
    _reject_unknown(given, params, "system.params")
    params.update(given)
    if builder == "matrices" and params["H0"] is None:
        raise ValidationError("matrices builder needs H0", path="system.params.H0")
    cfg["system"] = {"builder": builder, "params": params}

    ens = raw.get("ensemble", {}) or {}
    _reject_unknown(ens, ("beta", "mu"), "ensemble")
    cfg["ensemble"] = {
        "beta": _number(ens.get("beta", 1.0), "ensemble.beta", positive=True),
        "mu": _number(ens.get("mu", 0.0), "ensemble.mu"),
    }

    prot = raw.get("protocol", {}) or {}
    _reject_unknown(prot, DEFAULT_CONFIG["protocol"], "protocol")
    t_i = _number(prot.get("t_i", 0.0), "protocol.t_i")
    t_f = _number(prot.get("t_f", 10.0), "protocol.t_f")
    if not t_f > t_i:
        raise ValidationError("t_f must exceed t_i", path="protocol.t_f")
    steps = _number(prot.get("steps", 2000), "protocol.steps", positive=True, integer=True)
    drives = []
    for i, d in enumerate(prot.get("drives", []) or []):
        path = f"protocol.drives[{i}]"
        if not isinstance(d, dict):
            raise ValidationError("drive must be a mapping", path=path)
        form = d.get("form")
        if form not in DRIVE_KEYS:
            raise ValidationError(f"unknown drive form {form!r}", path=f"{path}.form")
        _reject_unknown(d, ("source", "form") + DRIVE_KEYS[form], path)
        if "source" not in d:
            raise ValidationError("drive needs a source index", path=f"{path}.source")
        entry = {"source": _number(d["source"], f"{path}.source", integer=True), "form": form}
        for key in DRIVE_KEYS[form]:
            if key in d:
                val = d[key]
                entry[key] = [float(v) for v in val] if isinstance(val, list) else _number(val, f"{path}.{key}")
        drives.append(entry)
    cfg["protocol"] = {"t_i": t_i, "t_f": t_f, "steps": steps, "drives": drives}

    tasks = []
    for i, t in enumerate(raw.get("tasks", []) or []):
        if isinstance(t, str):
            t = {"name": t}
        if not isinstance(t, dict) or "name" not in t:
            raise ValidationError("task must be a name or a mapping with 'name'", path=f"tasks[{i}]")
        name = t["name"]
        if name not in TASKS:
            raise ValidationError(f"unknown task {name!r}", path=f"tasks[{i}].name")
        opts = copy.deepcopy(TASK_DEFAULTS[name])
        _reject_unknown({k: v for k, v in t.items() if k != "name"}, opts, f"tasks[{i}]")
        opts.update({k: v for k, v in t.items() if k != "name"})
        tasks.append({"name": name, **opts})
    cfg["tasks"] = tasks

    out = raw.get("output", {}) or {}
    _reject_unknown(out, ("dir", "format"), "output")
    fmt = out.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ValidationError(f"unknown output format {fmt!r}", path="output.format")
    cfg["output"] = {"dir": str(out.get("dir", "results")), "format": fmt}

    prof = raw.get("tolerance_profile", "strict")
    if prof not in TOLERANCE_PROFILES:
        raise ValidationError(f"unknown tolerance profile {prof!r}", path="tolerance_profile")
    cfg["tolerance_profile"] = prof
    seed = raw.get("seed")
    cfg["seed"] = None if seed is None else _number(seed, "seed", integer=True)
    return _plain(cfg)


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def task_options(name: str, overrides: dict | None = None) -> dict:
    opts = copy.deepcopy(TASK_DEFAULTS[name])
    for k, v in (overrides or {}).items():
        if k not in opts:
            raise ValidationError(f"unknown option {k!r} for task {name}", path=f"{name}.{k}")
        opts[k] = v
    return {"name": name, **opts}
