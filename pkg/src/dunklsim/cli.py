"""Command-line entry point.

Subcommands: simulate, converge, girsanov, moments, invariants.  Every run
reads a strict-schema JSON config, re-validates numeric preconditions, and
writes its artifacts plus a manifest (the fully resolved config, itself a
valid config) into the output directory.  Reruns are byte-identical for any
thread count.

Exit codes: 0 success (and, for `invariants`, all checks passed);
2 config schema violation; 3 numeric precondition violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import mc, models, rootsys
from .coeff import DriftSpec, constant_drift, heckman_opdam, no_drift
from .errors import ConfigSchemaError, DunklSimError
from .invariants import run_invariant_suite
from .models import ModelSpec
from .scheme import EpsRule, SchemeConfig, path_to_csv, simulate_path

COMMANDS = ("simulate", "converge", "girsanov", "moments", "invariants")

_FUNCTIONALS = {
    "abs_terminal": lambda times, states: float(np.linalg.norm(states[-1])),
    "unit": lambda times, states: 1.0,
}


# ---------------------------------------------------------------------------
# strict schema validation + default resolution
# ---------------------------------------------------------------------------


def _fail(path: str, msg: str):
    raise ConfigSchemaError(path, msg)


def _expect_mapping(obj, path):
    if not isinstance(obj, dict):
        _fail(path, "must be a JSON object")
    return obj


def _expect_keys(obj, path, required, optional=()):
    unknown = sorted(set(obj) - set(required) - set(optional))
    if unknown:
        _fail(f"{path}.{unknown[0]}", "unknown key (strict schema)")
    for key in required:
        if key not in obj:
            _fail(f"{path}.{key}", "missing required key")


def _as_number(obj, path):
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        _fail(path, "must be a number")
    return float(obj)


def _as_int(obj, path):
    if isinstance(obj, bool) or not isinstance(obj, int):
        _fail(path, "must be an integer")
    return int(obj)


def _as_str(obj, path, choices=None):
    if not isinstance(obj, str):
        _fail(path, "must be a string")
    if choices is not None and obj not in choices:
        _fail(path, f"must be one of {sorted(choices)}")
    return obj


def _as_number_list(obj, path):
    if not isinstance(obj, list) or not obj:
        _fail(path, "must be a non-empty array of numbers")
    return [_as_number(v, f"{path}[{i}]") for i, v in enumerate(obj)]


def _resolve_model(doc, path) -> dict:
    doc = _expect_mapping(doc, path)
    if "preset" in doc:
        _expect_keys(doc, path, ("preset",), ("params", "extra_drift"))
        name = _as_str(doc["preset"], f"{path}.preset", models.PRESET_NAMES)
        params = _expect_mapping(doc.get("params", {}), f"{path}.params")
        allowed = {"k", "d", "r", "x0"}
        _expect_keys(params, f"{path}.params", (), tuple(allowed))
        out = {"preset": name, "params": dict(params)}
    elif "custom_file" in doc:
        _expect_keys(doc, path, ("custom_file", "x0"), ("multiplicity_scale", "extra_drift"))
        out = {"custom_file": _as_str(doc["custom_file"], f"{path}.custom_file"),
               "x0": _as_number_list(doc["x0"], f"{path}.x0")}
    else:
        _fail(path, "must contain either 'preset' or 'custom_file'")
    if "extra_drift" in doc:
        ed = _expect_mapping(doc["extra_drift"], f"{path}.extra_drift")
        kind = _as_str(ed.get("kind", ""), f"{path}.extra_drift.kind",
                       ("none", "constant", "heckman_opdam"))
        if kind == "constant":
            _expect_keys(ed, f"{path}.extra_drift", ("kind", "vector"))
            out["extra_drift"] = {"kind": kind,
                                  "vector": _as_number_list(ed["vector"],
                                                            f"{path}.extra_drift.vector")}
        else:
            _expect_keys(ed, f"{path}.extra_drift", ("kind",))
            out["extra_drift"] = {"kind": kind}
    return out


def _resolve_scheme(doc, path, need_n_steps: bool) -> dict:
    doc = _expect_mapping(doc, path)
    required = ("n_steps",) if need_n_steps else ()
    _expect_keys(doc, path, required,
                 ("variant", "n_steps", "horizon", "eps_rule", "solver_tol",
                  "initial_margin"))
    out = {
        "variant": _as_str(doc.get("variant", "semi_implicit"), f"{path}.variant",
                           ("semi_implicit", "truncated")),
        "horizon": _as_number(doc.get("horizon", 1.0), f"{path}.horizon"),
        "solver_tol": _as_number(doc.get("solver_tol", 1e-12), f"{path}.solver_tol"),
        "initial_margin": _as_number(doc.get("initial_margin", 0.0),
                                     f"{path}.initial_margin"),
    }
    if "n_steps" in doc:
        out["n_steps"] = _as_int(doc["n_steps"], f"{path}.n_steps")
    rule = _expect_mapping(doc.get("eps_rule", {"kind": "scaled", "c": 2.0}),
                           f"{path}.eps_rule")
    kind = _as_str(rule.get("kind", ""), f"{path}.eps_rule.kind", ("scaled", "fixed"))
    if kind == "scaled":
        _expect_keys(rule, f"{path}.eps_rule", ("kind",), ("c",))
        out["eps_rule"] = {"kind": "scaled", "c": _as_number(rule.get("c", 2.0),
                                                             f"{path}.eps_rule.c")}
    else:
        _expect_keys(rule, f"{path}.eps_rule", ("kind", "eps"))
        out["eps_rule"] = {"kind": "fixed", "eps": _as_number(rule["eps"],
                                                              f"{path}.eps_rule.eps")}
    return out


def _resolve_mc(doc, path, command: str) -> dict:
    doc = _expect_mapping(doc, path)
    required = {"simulate": ("seed",),
                "converge": ("M", "n_values", "n_ref", "p", "seed"),
                "girsanov": ("M", "seed"),
                "moments": ("M", "seed"),
                "invariants": ("seed",)}[command]
    _expect_keys(doc, path, required, ("M", "n_values", "n_ref", "p", "seed", "threads"))
    out: dict = {"seed": _as_int(doc["seed"], f"{path}.seed")}
    if not 0 <= out["seed"] < 2 ** 64:
        _fail(f"{path}.seed", "must fit in 64 bits")
    if "M" in doc:
        out["M"] = _as_int(doc["M"], f"{path}.M")
    elif command == "simulate":
        out["M"] = 1
    if "n_values" in doc:
        vals = doc["n_values"]
        if not isinstance(vals, list) or not vals:
            _fail(f"{path}.n_values", "must be a non-empty array of integers")
        out["n_values"] = [_as_int(v, f"{path}.n_values[{i}]") for i, v in enumerate(vals)]
    if "n_ref" in doc:
        out["n_ref"] = _as_int(doc["n_ref"], f"{path}.n_ref")
    if "p" in doc:
        out["p"] = _as_number(doc["p"], f"{path}.p")
    return out


def resolve_config(doc: dict, command: str) -> dict:
    """Validate against the strict schema and fill every default, returning
    the manifest-ready resolved config."""
    doc = _expect_mapping(doc, "config")
    sections = {
        "simulate": (("model", "scheme", "mc", "output"), ()),
        "converge": (("model", "scheme", "mc", "output"), ()),
        "girsanov": (("model", "scheme", "mc", "girsanov", "output"), ()),
        "moments": (("model", "scheme", "mc", "moments", "output"), ()),
        "invariants": (("model", "mc", "output"), ("invariants",)),
    }[command]
    _expect_keys(doc, "config", sections[0], sections[1] + ("command",))
    if "command" in doc:
        declared = _as_str(doc["command"], "config.command", COMMANDS)
        if declared != command:
            _fail("config.command", f"declares {declared!r} but the subcommand is {command!r}")

    resolved: dict = {"command": command,
                      "model": _resolve_model(doc["model"], "config.model"),
                      "output": _as_str(doc["output"], "config.output")}
    if command != "invariants":
        need_n = command in ("simulate", "girsanov", "moments")
        resolved["scheme"] = _resolve_scheme(doc["scheme"], "config.scheme", need_n)
    resolved["mc"] = _resolve_mc(doc["mc"], "config.mc", command)

    if command == "girsanov":
        g = _expect_mapping(doc["girsanov"], "config.girsanov")
        _expect_keys(g, "config.girsanov", ("nu",), ("functional",))
        nu = g["nu"]
        if isinstance(nu, list):
            nu = _as_number_list(nu, "config.girsanov.nu")
        else:
            nu = _as_number(nu, "config.girsanov.nu")
        resolved["girsanov"] = {
            "nu": nu,
            "functional": _as_str(g.get("functional", "abs_terminal"),
                                  "config.girsanov.functional", tuple(_FUNCTIONALS)),
        }
    if command == "moments":
        msec = _expect_mapping(doc["moments"], "config.moments")
        _expect_keys(msec, "config.moments", ("q_list",))
        resolved["moments"] = {"q_list": _as_number_list(msec["q_list"],
                                                         "config.moments.q_list")}
    if command == "invariants":
        isec = _expect_mapping(doc.get("invariants", {}), "config.invariants")
        _expect_keys(isec, "config.invariants", (), ("n_points", "n_pairs"))
        resolved["invariants"] = {
            "n_points": _as_int(isec.get("n_points", 1000), "config.invariants.n_points"),
            "n_pairs": _as_int(isec.get("n_pairs", 10000), "config.invariants.n_pairs"),
        }
    return resolved


# ---------------------------------------------------------------------------
# construction from a resolved config
# ---------------------------------------------------------------------------


def _build_model(section: dict) -> ModelSpec:
    if "preset" in section:
        params = dict(section["params"])
        model = models.preset(section["preset"], **params)
    else:
        rs = rootsys.load_custom(section["custom_file"])
        model = ModelSpec(DriftSpec(rs=rs), np.asarray(section["x0"], dtype=float),
                          "custom")
    if "extra_drift" in section:
        kind = section["extra_drift"]["kind"]
        rs = model.rs
        if kind == "none":
            drift = no_drift(rs.dim)
        elif kind == "constant":
            drift = constant_drift(section["extra_drift"]["vector"])
        else:
            drift = heckman_opdam(rs)
        model = ModelSpec(DriftSpec(rs=rs, extra_drift=drift), model.x0,
                          model.label, model.derived_transform, model.warnings)
    return model


def _build_eps_rule(section: dict) -> EpsRule:
    if section["kind"] == "scaled":
        return EpsRule.scaled(section["c"])
    return EpsRule.fixed(section["eps"])


def _build_scheme_config(section: dict, n_steps: int | None = None) -> SchemeConfig:
    return SchemeConfig(
        variant=section["variant"],
        n_steps=section["n_steps"] if n_steps is None else n_steps,
        horizon=section["horizon"],
        eps_rule=_build_eps_rule(section["eps_rule"]),
        solver_tol=section["solver_tol"],
        initial_margin=section["initial_margin"],
    )


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(outdir: Path, resolved: dict) -> None:
    _write_json(outdir / "manifest.json", resolved)


# ---------------------------------------------------------------------------
# command implementations
# ---------------------------------------------------------------------------


def _cmd_simulate(resolved: dict, outdir: Path, threads: int) -> int:
    model = _build_model(resolved["model"])
    config = _build_scheme_config(resolved["scheme"])
    n_paths = resolved["mc"]["M"]
    seed = resolved["mc"]["seed"]
    for m in range(n_paths):
        incs = mc.path_increments(seed, m, config.n_steps, config.horizon,
                                  model.rs.dim)
        path = simulate_path(model, config, incs)
        if model.derived_transform == "square_components":
            path = models.wishart_transform(path)
        with open(outdir / f"path_{m:04d}.csv", "w", encoding="utf-8", newline="\n") as fh:
            path_to_csv(path, fh)
    _write_manifest(outdir, resolved)
    return 0


def _cmd_converge(resolved: dict, outdir: Path, threads: int) -> int:
    model = _build_model(resolved["model"])
    sch = resolved["scheme"]
    mcfg = resolved["mc"]
    report = mc.strong_error_study(
        model, sch["variant"], mcfg["n_values"], mcfg["n_ref"], mcfg["M"],
        mcfg["p"], mcfg["seed"], horizon=sch["horizon"],
        eps_rule=_build_eps_rule(sch["eps_rule"]), solver_tol=sch["solver_tol"],
        threads=threads)
    with open(outdir / "report.csv", "w", encoding="utf-8", newline="\n") as fh:
        report.to_csv(fh)
    _write_json(outdir / "report.json", report.summary_dict())
    _write_manifest(outdir, resolved)
    return 0


def _cmd_girsanov(resolved: dict, outdir: Path, threads: int) -> int:
    model = _build_model(resolved["model"])
    g = _FUNCTIONALS[resolved["girsanov"]["functional"]]
    comparison = mc.weighted_expectation(
        g, model.rs, resolved["girsanov"]["nu"], model.x0, resolved["mc"]["M"],
        resolved["scheme"]["n_steps"], resolved["mc"]["seed"],
        horizon=resolved["scheme"]["horizon"],
        solver_tol=resolved["scheme"]["solver_tol"], threads=threads)
    with open(outdir / "girsanov.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("estimator,mean,std_error\n")
        fh.write(f"direct,{comparison.direct_mean:.17g},{comparison.direct_se:.17g}\n")
        fh.write(f"weighted,{comparison.weighted_mean:.17g},{comparison.weighted_se:.17g}\n")
        fh.write(f"weight_mean,{comparison.z_mean:.17g},{comparison.z_se:.17g}\n")
    gap = abs(comparison.direct_mean - comparison.weighted_mean)
    combined = (comparison.direct_se ** 2 + comparison.weighted_se ** 2) ** 0.5
    _write_json(outdir / "girsanov.json", {
        "direct": [comparison.direct_mean, comparison.direct_se],
        "weighted": [comparison.weighted_mean, comparison.weighted_se],
        "weight_mean": [comparison.z_mean, comparison.z_se],
        "abs_difference": gap,
        "combined_se": combined,
    })
    _write_manifest(outdir, resolved)
    return 0


def _cmd_moments(resolved: dict, outdir: Path, threads: int) -> int:
    model = _build_model(resolved["model"])
    rows = mc.moment_scan(model, resolved["moments"]["q_list"], resolved["mc"]["M"],
                          resolved["scheme"]["n_steps"], resolved["mc"]["seed"],
                          horizon=resolved["scheme"]["horizon"],
                          solver_tol=resolved["scheme"]["solver_tol"], threads=threads)
    with open(outdir / "moments.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("kind,q,root_index,estimate,std_error,"
                 "in_window_terminal,in_window_sup,heavy_tail_flag\n")
        for r in rows:
            idx = "" if r.root_index is None else str(r.root_index)
            fh.write(f"{r.kind},{r.q:.17g},{idx},{r.estimate:.17g},"
                     f"{r.std_error:.17g},{str(r.in_window_terminal).lower()},"
                     f"{str(r.in_window_sup).lower()},{str(r.heavy_tail_flag).lower()}\n")
    _write_manifest(outdir, resolved)
    return 0


def _cmd_invariants(resolved: dict, outdir: Path, threads: int) -> int:
    model = _build_model(resolved["model"])
    isec = resolved["invariants"]
    checks = run_invariant_suite(model.rs, n_points=isec["n_points"],
                                 n_pairs=isec["n_pairs"], seed=resolved["mc"]["seed"])
    all_passed = all(c.passed for c in checks)
    _write_json(outdir / "invariants.json", {
        "system": model.rs.name,
        "dim": model.rs.dim,
        "checks": [c.to_dict() for c in checks],
        "all_passed": all_passed,
    })
    _write_manifest(outdir, resolved)
    return 0 if all_passed else 1


_RUNNERS = {
    "simulate": _cmd_simulate,
    "converge": _cmd_converge,
    "girsanov": _cmd_girsanov,
    "moments": _cmd_moments,
    "invariants": _cmd_invariants,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dunklsim",
        description="Chamber-valued singular-drift SDE simulation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="JSON config file")
        cmd.add_argument("--output", default=None, help="output directory (overrides config)")
        cmd.add_argument("--threads", type=int, default=None,
                         help="worker threads (default: available parallelism; "
                              "results are identical for any value)")
        cmd.add_argument("--seed", type=int, default=None, help="overrides config mc.seed")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                print(f"error: config is not valid JSON (line {exc.lineno}, "
                      f"column {exc.colno}): {exc.msg}", file=sys.stderr)
                return 2
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2

    try:
        resolved = resolve_config(doc, args.command)
    except ConfigSchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            print("error: --seed must fit in 64 bits", file=sys.stderr)
            return 2
        resolved["mc"]["seed"] = int(args.seed)
    if args.output is not None:
        resolved["output"] = args.output
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)

    outdir = Path(resolved["output"])
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        return _RUNNERS[args.command](resolved, outdir, threads)
    except ConfigSchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DunklSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
