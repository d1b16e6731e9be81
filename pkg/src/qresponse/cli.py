"""Command line front end.

Every subcommand runs one task and writes one result file.  ``run`` executes
all tasks listed in a configuration file.  Exit codes: 0 success, 2 the
configuration could not be parsed, 3 invalid input, 4 numerical failure.
Errors are reported on standard error as one JSON record.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__
from . import analytic, correlators, dynamics, thermal, workstats
from .config import (
    DEFAULT_CONFIG,
    TASKS,
    TOLERANCE_PROFILES,
    config_hash,
    dump_config,
    load_config,
    normalize,
    task_options,
)
from .errors import ConfigParse, NumericalFailure, QResponseError, ValidationError
from .linalg import monotone_function
from .model import (
    SourceCoupling,
    SystemSpec,
    TimeParity,
    build_qubit,
    build_transverse_ising,
    build_xxz_chain,
)

CONVENTIONS = {
    "fourier": "f(t) = (1/2pi) int dw exp(-i w t) f(w)",
    "heisenberg": "A(t) = exp(i t K) A exp(-i t K), K = H - mu N",
    "retarded": "Delta_R(t) = Delta_inf delta(t) + i theta(t) Tr{rho [phi_m(t), phi_n]}",
    "metric": "mostly plus (-,+,+,+); p_mu = (-p0, p)",
}


@dataclass
class ResultTable:
    """Named columns of equal length plus a metadata block."""

    columns: dict[str, list]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValidationError(f"result columns have unequal lengths {sorted(lengths)}")


# --------------------------------------------------------------------------
# building blocks from the configuration


def _matrix(obj, path: str) -> np.ndarray:
    try:
        if isinstance(obj, dict):
            extra = set(obj) - {"re", "im"}
            if extra:
                raise ValidationError(f"unknown matrix keys {sorted(extra)}", path=path)
            re = np.asarray(obj.get("re", 0.0), dtype=float)
            im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
            return re + 1j * im
        return np.asarray(obj, dtype=float).astype(complex)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"malformed matrix: {exc}", path=path) from exc


def build_system(sysconf: dict) -> SystemSpec:
    b, p = sysconf["builder"], sysconf["params"]
    if b == "qubit":
        return build_qubit(p["omega0"], p["tilt"])
    if b == "transverse_ising":
        return build_transverse_ising(int(p["L"]), p["J"], p["h"], bool(p["periodic"]))
    if b == "xxz":
        return build_xxz_chain(int(p["L"]), p["J"], p["delta"], p["fields"])
    base = "system.params"
    H0 = _matrix(p["H0"], f"{base}.H0")
    N = None if p["N"] is None else _matrix(p["N"], f"{base}.N")
    sources = []
    for i, s in enumerate(p["sources"]):
        path = f"{base}.sources[{i}]"
        if isinstance(s, dict) and "phi" in s:
            extra = set(s) - {"phi", "phi2", "phi3"}
            if extra:
                raise ValidationError(f"unknown source keys {sorted(extra)}", path=path)
            phi2 = {int(k): _matrix(v, f"{path}.phi2.{k}") for k, v in (s.get("phi2") or {}).items()}
            phi3 = {}
            for k, v in (s.get("phi3") or {}).items():
                a, c = (int(x) for x in str(k).split(","))
                phi3[(a, c)] = _matrix(v, f"{path}.phi3.{k}")
            sources.append(SourceCoupling(_matrix(s["phi"], f"{path}.phi"), phi2, phi3))
        else:
            sources.append(_matrix(s, path))
    parity = None
    if p["parity"] is not None:
        parity = TimeParity(tuple(int(e) for e in p["parity"]), bool(p["basis_real"]))
    return SystemSpec(H0, N, sources, labels=p["labels"], parity=parity)


def build_protocol(pconf: dict, spec: SystemSpec) -> dynamics.DriveProtocol:
    drives = {}
    for i, d in enumerate(pconf["drives"]):
        n = d["source"]
        if not 0 <= n < spec.n_sources:
            raise ValidationError(f"drive targets unknown source {n}", path=f"protocol.drives[{i}].source")
        params = {k: v for k, v in d.items() if k not in ("source", "form")}
        drives[n] = dynamics.SourceDrive.make(d["form"], **params)
    return dynamics.DriveProtocol.build(pconf["t_i"], pconf["t_f"], spec.j_init, drives)


# --------------------------------------------------------------------------
# tasks


def _pairs(spec: SystemSpec):
    return [(m, n) for m in range(spec.n_sources) for n in range(spec.n_sources)]


def task_spectrum(cfg, opts, spec, state) -> ResultTable:
    return ResultTable(
        {
            "index": list(range(state.dim)),
            "energy": list(state.energies),
            "energy_H": list(state.h_diag),
            "number": list(state.n_diag),
            "weight": list(state.weights),
        },
        {"logZ": state.logZ},
    )


def task_respond(cfg, opts, spec, state) -> ResultTable:
    m, n = int(opts["m"]), int(opts["n"])
    K = correlators.linear_response(state, spec, m, n)
    t = np.linspace(0.0, float(opts["t_max"]), int(opts["points"]))
    return ResultTable(
        {"t": list(t), "delayed": list(K.delayed(t))},
        {
            "instantaneous": K.instantaneous,
            "lines_omega": list(K.spectral.omegas),
            "lines_weight_re": list(K.spectral.weights.real),
            "lines_weight_im": list(K.spectral.weights.imag),
        },
    )


def task_static_susc(cfg, opts, spec, state) -> ResultTable:
    beta, mu = cfg["ensemble"]["beta"], cfg["ensemble"]["mu"]
    chiT = thermal.chi_T_mu(spec, beta, mu)
    chiSN = thermal.chi_S_N(spec, beta, mu)
    L = thermal.suzuki_limit(spec, beta, mu)
    pairs = _pairs(spec)
    return ResultTable(
        {
            "m": [p[0] for p in pairs],
            "n": [p[1] for p in pairs],
            "chi_T_mu": [chiT[p] for p in pairs],
            "chi_S_N": [chiSN[p] for p in pairs],
            "L": [L[p] for p in pairs],
        },
        {"suzuki_residual": float(np.max(np.abs(chiT - chiSN - L)))},
    )


def task_fdr_check(cfg, opts, spec, state) -> ResultTable:
    tags = opts["f"] if isinstance(opts["f"], list) else [opts["f"]]
    cols: dict[str, list] = {k: [] for k in ("f", "m", "n", "omega", "ratio_re", "ratio_im", "coefficient", "rel_dev")}
    for tag in tags:
        f = monotone_function(tag)
        for m, n in _pairs(spec):
            om, ratio, coef, dev = correlators.fdr_table(state, m, n, f)
            cols["f"] += [f.name] * om.size
            cols["m"] += [m] * om.size
            cols["n"] += [n] * om.size
            cols["omega"] += list(om)
            cols["ratio_re"] += list(ratio.real)
            cols["ratio_im"] += list(ratio.imag)
            cols["coefficient"] += list(coef)
            cols["rel_dev"] += list(dev)
    worst = max(cols["rel_dev"], default=0.0)
    cols["max_dev"] = [worst] * len(cols["f"])
    return ResultTable(cols, {"max_rel_dev": worst})


def _default_drive(cfg, spec):
    pconf = dict(cfg["protocol"])
    if not pconf["drives"]:
        span = pconf["t_f"] - pconf["t_i"]
        pconf["drives"] = [
            {"source": 0, "form": "pulse", "amplitude": 1.0,
             "center": pconf["t_i"] + 0.4 * span, "width": 0.1 * span}
        ]
    return build_protocol(pconf, spec)


def task_volterra_check(cfg, opts, spec, state) -> ResultTable:
    base = _default_drive(cfg, spec)
    m = int(opts["observable"])
    spec._check_index(m)
    orders = [int(o) for o in opts["orders"]]
    amps = [float(a) for a in opts["amplitudes"]]
    K = dynamics.volterra_kernels(state, spec, m, max(orders))
    cols: dict[str, list] = {"kind": [], "order": [], "amplitude": [], "value": []}
    errs: dict[int, list] = {o: [] for o in orders}
    for lam in amps:
        prot = base.shifted(lam)
        tr = dynamics.propagate(spec, state, prot, cfg["protocol"]["steps"])
        for o in orders:
            pred = dynamics.volterra_predict(K, prot, o, tr.times)
            e = float(np.max(np.abs(pred - tr.Phi[:, m])))
            errs[o].append(e)
            cols["kind"].append("error")
            cols["order"].append(o)
            cols["amplitude"].append(lam)
            cols["value"].append(e)
    summary = {}
    for o in orders:
        slope = dynamics.convergence_exponent(amps, errs[o]) if len(amps) > 1 else float("nan")
        summary[f"exponent_order{o}"] = slope
        cols["kind"].append("exponent")
        cols["order"].append(o)
        cols["amplitude"].append(float("nan"))
        cols["value"].append(slope)
    return ResultTable(cols, summary)


def task_work_stats(cfg, opts, spec, state) -> ResultTable:
    prot = build_protocol(cfg["protocol"], spec)
    tr = dynamics.propagate(spec, state, prot, cfg["protocol"]["steps"])
    dist = workstats.work_distribution(spec, state, prot, tr.U_final)
    meta = {
        "mean_work": dist.mean(),
        "mean_work_power": dynamics.mean_work(tr, prot, spec),
        "delta_omega": workstats.free_energy_change(spec, state, prot),
        "jarzynski_residual": workstats.jarzynski_check(dist, state, spec, prot),
    }
    for xi in opts["xi"]:
        meta[f"Z_W({float(xi)!r})"] = workstats.characteristic_Zw(dist, float(xi))
    return ResultTable({"W": list(dist.W), "p": list(dist.p)}, meta)


def task_kk(cfg, opts, spec, state) -> ResultTable:
    n = int(opts["points"])
    model = opts["model"]
    if model == "lorentzian":
        w0, g = float(opts["omega0"]), float(opts["gamma"])
        half = abs(w0) + float(opts["half_widths"]) * g
        om = np.linspace(-half, half, n)
        vals = 1.0 / (w0 - om - 1j * g)
    elif model == "response":
        K = correlators.linear_response(state, spec, int(opts["m"]), int(opts["n"]))
        g = float(opts["gamma"])
        half = np.max(np.abs(K.spectral.omegas), initial=0.0) + float(opts["half_widths"]) * g
        om = np.linspace(-half, half, n)
        vals = K.frequency(om, eps=g) - K.instantaneous
    else:
        raise ValidationError(f"unknown kk model {model!r}", path="kk.model")
    out = analytic.kramers_kronig(analytic.FrequencyGrid(om, vals))
    return ResultTable(
        {
            "omega": list(om),
            "re": list(vals.real),
            "im": list(vals.imag),
            "re_from_im": list(out.values.real),
            "im_from_re": list(out.values.imag),
        },
        {
            "rel_l2_re": analytic.relative_l2(out.values.real, vals.real),
            "rel_l2_im": analytic.relative_l2(out.values.imag, vals.imag),
        },
    )


def task_reference_models(cfg, opts, spec, state) -> ResultTable:
    R, C = float(opts["R"]), float(opts["C"])
    w0, z = float(opts["omega0"]), float(opts["zeta"])
    t = np.linspace(-0.1 * opts["t_max"], opts["t_max"], int(opts["points"]))
    return ResultTable(
        {
            "t": list(t),
            "rc": list(analytic.rc_response(R, C, times=t)),
            "oscillator": list(analytic.oscillator_response(w0, z, times=t)),
        },
        {
            "rc_static": complex(analytic.rc_response(R, C, omegas=0.0)).real,
            "rc_poles": [str(p) for p in analytic.rc_poles(R, C)],
            "oscillator_poles": [str(p) for p in analytic.oscillator_poles(w0, z)],
        },
    )


def task_fluid_current(cfg, opts, spec, state) -> ResultTable:
    fp = analytic.FluidParams(float(opts["sigma"]), float(opts["D"]), float(opts["tau"]))
    n = int(opts["points"])
    if cfg["seed"] is not None:
        rng = np.random.default_rng(cfg["seed"])
        p0s = rng.normal(size=n)
        ps = rng.normal(size=(n, 3))
    else:
        # deterministic sample points when no seed is given
        k = np.arange(1, n + 1)
        p0s = np.sin(1.3 * k) * 2.0
        ps = np.column_stack([np.cos(0.7 * k), np.sin(1.9 * k), np.cos(2.3 * k + 0.5)])
    cols: dict[str, list] = {k: [] for k in ("p0", "px", "py", "pz", "G00_re", "G00_im", "ward_residual")}
    for p0, p in zip(p0s, ps):
        G = analytic.fluid_current_response(fp, p0, p)
        cols["p0"].append(float(p0))
        cols["px"].append(float(p[0]))
        cols["py"].append(float(p[1]))
        cols["pz"].append(float(p[2]))
        cols["G00_re"].append(G[0, 0].real)
        cols["G00_im"].append(G[0, 0].imag)
        cols["ward_residual"].append(analytic.ward_residual(fp, p0, p))
    meta = {"max_ward_residual": max(cols["ward_residual"])}
    if fp.D > 0:
        meta["static_G00"] = analytic.fluid_current_response(fp, 0.0, [0.3, 0.4, 0.5])[0, 0].real
        meta["sigma_over_D"] = fp.susceptibility
    return ResultTable(cols, meta)


TASK_FUNCS: dict[str, Callable] = {
    "spectrum": task_spectrum,
    "respond": task_respond,
    "static-susc": task_static_susc,
    "fdr-check": task_fdr_check,
    "volterra-check": task_volterra_check,
    "work-stats": task_work_stats,
    "kk": task_kk,
    "reference-models": task_reference_models,
    "fluid-current": task_fluid_current,
}
NEEDS_SYSTEM = set(TASKS) - {"reference-models", "fluid-current"}


# --------------------------------------------------------------------------
# output


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return x


def write_table(table: ResultTable, path: Path, fmt: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = _jsonable(table.metadata)
    if fmt == "json":
        doc = {"metadata": meta, "columns": _jsonable(table.columns)}
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        return
    names = list(table.columns)
    lines = [f"# {k}: {json.dumps(v, sort_keys=True)}" for k, v in sorted(meta.items())]
    lines.append(",".join(names))
    for row in zip(*(table.columns[n] for n in names)):
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def run_tasks(cfg: dict, out_dir: str | None = None, fmt: str | None = None) -> list[Path]:
    """Execute every task of a normalized configuration, returning written paths."""
    out = Path(out_dir or cfg["output"]["dir"])
    fmt = fmt or cfg["output"]["format"]
    spec = state = None
    if any(t["name"] in NEEDS_SYSTEM for t in cfg["tasks"]):
        spec = build_system(cfg["system"])
        state = thermal.gibbs(spec, cfg["ensemble"]["beta"], cfg["ensemble"]["mu"])
    written = []
    for i, task in enumerate(cfg["tasks"]):
        name = task["name"]
        opts = {k: v for k, v in task.items() if k != "name"}
        table = TASK_FUNCS[name](cfg, opts, spec, state)
        table.metadata = {
            "task": name,
            "tool_version": __version__,
            "config_hash": config_hash(cfg),
            "tolerance_profile": cfg["tolerance_profile"],
            "tolerances": TOLERANCE_PROFILES[cfg["tolerance_profile"]],
            "conventions": CONVENTIONS,
            **table.metadata,
        }
        suffix = f"_{i}" if sum(t["name"] == name for t in cfg["tasks"]) > 1 else ""
        path = out / f"{name}{suffix}.{fmt}"
        write_table(table, path, fmt)
        written.append(path)
    return written


# --------------------------------------------------------------------------
# argument parsing


def _csv_list(cast):
    def parse(text: str):
        try:
            return [cast(x) for x in text.split(",") if x.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    return parse


TASK_FLAGS: dict[str, list[tuple[str, dict]]] = {
    "respond": [("--m", {"type": int}), ("--n", {"type": int}), ("--t-max", {"type": float, "dest": "t_max"})],
    "static-susc": [("--order", {"type": int})],
    "fdr-check": [("--f", {"type": _csv_list(str)})],
    "volterra-check": [
        ("--orders", {"type": _csv_list(int)}),
        ("--amplitudes", {"type": _csv_list(float)}),
        ("--observable", {"type": int}),
    ],
    "work-stats": [("--xi", {"type": _csv_list(float)})],
    "kk": [("--model", {"type": str}), ("--gamma", {"type": float}), ("--points", {"type": int})],
    "reference-models": [
        ("--R", {"type": float, "dest": "R"}),
        ("--C", {"type": float, "dest": "C"}),
        ("--omega0", {"type": float}),
        ("--zeta", {"type": float}),
    ],
    "fluid-current": [
        ("--sigma", {"type": float}),
        ("--D", {"type": float, "dest": "D"}),
        ("--tau", {"type": float}),
        ("--points", {"type": int}),
    ],
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qresponse", description="Exact response functions of finite quantum systems.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML or JSON configuration file")
        p.add_argument("--out", help="output directory (overrides the configuration)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--tolerance-profile", choices=sorted(TOLERANCE_PROFILES), dest="tolerance_profile")
        p.add_argument("--dump-config", action="store_true", help="print the normalized configuration and exit")

    run = sub.add_parser("run", help="run every task listed in a configuration")
    run.add_argument("config_path")
    common(run)
    for name in TASKS:
        p = sub.add_parser(name, help=f"run the {name} task")
        common(p)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="task option override (value parsed as YAML)")
        for flag, kw in TASK_FLAGS.get(name, []):
            p.add_argument(flag, default=None, **kw)
    return ap


def _error(exc: Exception, code: int) -> int:
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    path = getattr(exc, "path", None)
    if path:
        rec["path"] = path
    sys.stderr.write(json.dumps(rec) + "\n")
    return code


def _build_config(args) -> dict:
    if args.command == "run":
        cfg = load_config(args.config_path)
    elif args.config:
        cfg = load_config(args.config)
    else:
        cfg = normalize({})
    if args.tolerance_profile:
        cfg["tolerance_profile"] = args.tolerance_profile
    if args.command != "run":
        overrides = {}
        existing = [t for t in cfg["tasks"] if t["name"] == args.command]
        if existing:
            overrides = {k: v for k, v in existing[0].items() if k != "name"}
        for item in args.set:
            if "=" not in item:
                raise ValidationError(f"--set expects KEY=VALUE, got {item!r}", path=item)
            k, v = item.split("=", 1)
            overrides[k.strip()] = yaml.safe_load(v)
        for flag, kw in TASK_FLAGS.get(args.command, []):
            dest = kw.get("dest", flag.lstrip("-").replace("-", "_"))
            val = getattr(args, dest, None)
            if val is not None:
                overrides[dest] = val
        cfg["tasks"] = [task_options(args.command, overrides)]
        cfg = normalize(cfg)
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _build_config(args)
        if args.dump_config:
            sys.stdout.write(dump_config(cfg))
            return 0
        paths = run_tasks(cfg, args.out, args.format)
        for p in paths:
            sys.stdout.write(f"{p}\n")
        return 0
    except ConfigParse as exc:
        return _error(exc, 2)
    except ValidationError as exc:
        return _error(exc, 3)
    except NumericalFailure as exc:
        return _error(exc, 4)
    except QResponseError as exc:
        return _error(exc, 3)


if __name__ == "__main__":
    sys.exit(main())
