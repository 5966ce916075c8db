"""Command-line front end: load a scenario, run checks, emit a report bundle.

Usage:  inclusafe COMMAND CONFIG [flags]

COMMAND is one of verify, falsify, margin, modulus, all.  CONFIG is a JSON
file or the name of a built-in scenario.  Reports are written as one JSON
bundle per invocation (sorted keys; the timestamp lives in its own field so
bundles from identical config + seed compare byte-identical without it),
plus columnar text files for any witness trajectories.

Exit codes: 0 all requested checks passed / nothing falsified; 1 a check
failed, was inconclusive, a witness was found, or no positive margin
exists; 2 configuration error.
"""
from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import math
import os
import sys
import tempfile
from typing import Optional

import numpy as np
from jsonschema import Draft202012Validator

from . import __version__, scenarios
from .barrier import SMOOTHNESS_TAGS, boundary_extract, candidate_check
from .checker import (
    check_clarke,
    check_nominal,
    check_robust_strict,
    check_uniform_unweighted,
    check_uniform_weighted,
    synthesize_margin,
)
from .flow import FalsifyBudget, falsify
from .modulus import build_modulus, verify_modulus
from .numerics import scale_box
from .svmap import PerturbedSystem

__all__ = ["ConfigError", "load_config", "run", "main", "SCHEMA"]

COMMANDS = ("verify", "falsify", "margin", "modulus", "all")


class ConfigError(Exception):
    """Configuration problems that map to exit code 2."""


def _num(minimum=None, exclusive=None):
    out = {"type": "number"}
    if minimum is not None:
        out["minimum"] = minimum
    if exclusive is not None:
        out["exclusiveMinimum"] = exclusive
    return out


_TOLERANCE_PROPS = {
    "tol": _num(0),
    "tol_strict": _num(0),
    "tol_boundary": _num(exclusive=0),
    "grad_rtol": _num(exclusive=0),
    "contains_tol": _num(0),
    "interface_slack": _num(0),
    "collar_cells": _num(exclusive=0),
    "collar_width": {"type": ["number", "null"]},
    "clarke_radius_scale": _num(exclusive=0),
    "clarke_samples": {"type": "integer", "minimum": 1},
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dimension", "dynamics", "barrier", "initial", "unsafe", "box", "resolution"],
    "properties": {
        "name": {"type": "string"},
        "dimension": {"type": "integer", "minimum": 1},
        "box": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "array",
                "minItems": 2,
                "maxItems": 2,
                "items": {"type": "number"},
            },
        },
        "resolution": {
            "anyOf": [
                {"type": "integer", "minimum": 2},
                {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 2}},
            ]
        },
        "initial": {"type": "string"},
        "unsafe": {"type": "string"},
        "depth": {"type": "string"},
        "barrier": {
            "type": "object",
            "additionalProperties": False,
            "required": ["value", "smoothness"],
            "properties": {
                "value": {"type": "string"},
                "gradient": {"type": ["array", "null"], "items": {"type": "string"}},
                "smoothness": {"enum": list(SMOOTHNESS_TAGS)},
                "singular": {"type": ["string", "null"]},
                "name": {"type": "string"},
            },
        },
        "dynamics": {
            "type": "object",
            "additionalProperties": False,
            "required": ["pieces"],
            "properties": {
                "pieces": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["when", "image"],
                        "properties": {
                            "when": {"type": "string"},
                            "label": {"type": "string"},
                            "image": {
                                "type": "object",
                                "additionalProperties": False,
                                "required": ["kind"],
                                "properties": {
                                    "kind": {"enum": ["constant", "affine", "polynomial"]},
                                    "points": {"type": "array"},
                                    "matrix": {"type": "array"},
                                    "offset": {"type": "array"},
                                    "components": {"type": "array", "items": {"type": "string"}},
                                    "radius": _num(0),
                                },
                            },
                        },
                    },
                }
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": _TOLERANCE_PROPS,
        },
        "perturbation": {
            "type": "object",
            "additionalProperties": False,
            "required": ["margin"],
            "properties": {
                "margin": _num(exclusive=0),
                "sense_margin": _num(exclusive=0),
                "mode": {"enum": ["none", "image", "strong"]},
                "density": {"type": "integer", "minimum": 1},
            },
        },
        "hints": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["x0", "velocity"],
                "properties": {
                    "x0": {"type": "array", "items": {"type": "number"}},
                    "velocity": {"type": "array", "items": {"type": "string"}},
                    "label": {"type": "string"},
                },
            },
        },
        "boundary_points": {"type": "array"},
        "falsify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "starts": {"type": "integer", "minimum": 1},
                "horizon": _num(exclusive=0),
                "step": _num(exclusive=0),
                "seed": {"type": "integer"},
            },
        },
        "margin": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "bracket": _num(exclusive=0),
                "density": {"type": "integer", "minimum": 1},
                "rel_tol": _num(exclusive=0),
            },
        },
        "modulus": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "log_step": _num(exclusive=0),
                "density": {"type": "integer", "minimum": 1},
                "samples": {"type": "integer", "minimum": 1},
                "delta_max": _num(exclusive=0),
                "seed": {"type": "integer"},
            },
        },
    },
}

_VALIDATOR = Draft202012Validator(SCHEMA)


def load_config(path: str) -> dict:
    """Read and schema-check a config (a file path or a built-in name).

    Parse errors report line and column; schema violations are listed
    exhaustively, one per line.
    """
    if os.path.exists(path):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as e:
            raise ConfigError(f"cannot read config {path!r}: {e}") from e
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(
                f"parse error in {path!r} at line {e.lineno}, column {e.colno}: {e.msg}"
            ) from e
    elif path in scenarios.BUILTIN:
        cfg = scenarios.builtin_config(path)
    else:
        raise ConfigError(
            f"config file not found: {path!r} (and it is not a built-in scenario; "
            f"built-ins: {', '.join(scenarios.BUILTIN)})"
        )
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    errors = sorted(_VALIDATOR.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            loc = "/" + "/".join(str(p) for p in e.absolute_path)
            lines.append(f"  {loc or '/'}: {e.message}")
        raise ConfigError("invalid config:\n" + "\n".join(lines))
    return cfg


def _config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _jsonable(obj):
    """Recursively convert report objects to strict-JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isfinite(f):
            return f
        return {math.inf: "inf", -math.inf: "-inf"}.get(f, "nan")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _atomic_write(path: str, text: str):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_trajectory(path: str, traj, barrier_values: bool) -> None:
    n = traj.states.shape[1]
    cols = ["t"] + [f"x{i + 1}" for i in range(n)] + (["B"] if barrier_values else [])
    lines = ["# " + " ".join(cols)]
    for k in range(len(traj)):
        row = [f"{traj.times[k]:.17g}"] + [f"{v:.17g}" for v in traj.states[k]]
        if barrier_values:
            row.append(f"{traj.values[k]:.17g}")
        lines.append(" ".join(row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _applicable_checks(scenario) -> list[str]:
    bar = scenario.barrier
    out = ["candidate-signs"]
    # collar and boundary decrease checks evaluate the gradient directly, so
    # they only apply when the candidate ships an oracle; kinked candidates
    # without one are covered by the sampled generalized-gradient check
    if bar.gradient is not None:
        out += ["nominal-nonincrease", "robust-strict"]
    if bar.smoothness == "lipschitz":
        out.append("clarke-strict")
    if bar.gradient is not None and bar.smoothness not in ("lsc", "usc"):
        out.append("uniform-plain")
    return out


def _run_check(check_id: str, scenario, grid, modulus_pair=None):
    if check_id == "candidate-signs":
        return candidate_check(scenario)
    if check_id == "nominal-nonincrease":
        return check_nominal(scenario, grid)
    if check_id == "robust-strict":
        return check_robust_strict(scenario, grid)
    if check_id == "clarke-strict":
        return check_clarke(scenario, grid)
    if check_id == "uniform-plain":
        return check_uniform_unweighted(scenario, grid)
    if check_id.startswith("uniform-weighted-c"):
        variant = "C" + check_id.rsplit("c", 1)[1]
        if modulus_pair is None:
            modulus_pair = build_modulus(_base_map(scenario))
        return check_uniform_weighted(scenario, grid, modulus_pair, variant=variant)
    raise ConfigError(f"unknown check id {check_id!r}")


def _base_map(scenario):
    dyn = scenario.dynamics
    return dyn.base if isinstance(dyn, PerturbedSystem) else dyn


def _modulus_summary(pair, report=None) -> dict:
    t = pair.tables
    out = {
        "degenerate": pair.degenerate,
        "flags": dict(pair.flags),
        "kind": t.get("kind"),
        "onset": t.get("onset"),
        "scale": t.get("scale"),
    }
    if report is not None:
        out["verification"] = report.to_dict()
    return out


def run(
    config_path: str,
    command: str,
    *,
    check: Optional[str] = None,
    mode: Optional[str] = None,
    eps: Optional[float] = None,
    seed: int = 0,
    box_scale: Optional[float] = None,
    out: Optional[str] = None,
    density: Optional[int] = None,
) -> tuple[dict, int]:
    """Execute one command against one config; returns (bundle, exit code).

    Flag precedence: flags override config values, which override defaults.
    Raises ConfigError for problems that should exit with code 2.
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    cfg = load_config(config_path)
    cfg_hash = _config_hash(cfg)

    # flag overrides (applied to a working copy; the hash covers the load)
    work = json.loads(json.dumps(cfg))
    if box_scale is not None:
        if box_scale <= 0:
            raise ConfigError("--box-scale must be positive")
        work["box"] = [[float(a), float(b)] for a, b in scale_box(work["box"], box_scale)]
    if eps is not None:
        if eps <= 0:
            raise ConfigError("--eps must be positive")
        pert = work.get("perturbation", {})
        pert["margin"] = float(eps)
        pert.setdefault("mode", "strong")
        work["perturbation"] = pert
    if mode is not None:
        if "perturbation" not in work:
            raise ConfigError("--mode requires --eps or a perturbation section in the config")
        work["perturbation"]["mode"] = mode
    if density is not None:
        if "perturbation" in work:
            work["perturbation"]["density"] = int(density)

    try:
        bundle_scenario = scenarios.bundle_from_config(work)
    except ConfigError:
        raise
    except Exception as e:  # expression errors, inconsistent sets, bad shapes
        raise ConfigError(f"cannot build scenario: {e}") from e
    scenario = bundle_scenario.scenario

    out_dir = out or "inclusafe-reports"
    os.makedirs(out_dir, exist_ok=True)

    artifacts: dict = {}
    checks: list = []
    margin_out = None
    modulus_out = None
    fals_out = None
    exit_code = 0

    fal_cfg = work.get("falsify", {})
    fal_density = density if density is not None else work.get("perturbation", {}).get("density", 9)
    fal_mode = (mode or work.get("perturbation", {}).get("mode", "strong"))
    eps_arg = eps if eps is not None else work.get("perturbation", {}).get("margin")

    needs_grid = command in ("verify", "margin", "all")
    grid = boundary_extract(scenario) if needs_grid else None

    if command in ("verify", "all"):
        pair = None
        if check is not None and command == "verify":
            ids = [check]
        else:
            ids = _applicable_checks(scenario)
            if command == "all" and scenario.barrier.gradient is not None \
                    and scenario.barrier.smoothness not in ("lsc", "usc"):
                ids.append("uniform-weighted-c1")
        for cid in ids:
            if cid.startswith("uniform-weighted") and pair is None:
                pair = build_modulus(_base_map(scenario))
            rep = _run_check(cid, scenario, grid, modulus_pair=pair)
            checks.append(rep.to_dict())
            if not rep.passed:
                exit_code = 1

    if command in ("margin", "all"):
        mcfg = work.get("margin", {})
        synth = synthesize_margin(
            scenario,
            grid,
            mcfg.get("bracket", 1.0),
            density=int(mcfg.get("density", fal_density)),
            rel_tol=mcfg.get("rel_tol", 1e-3),
        )
        margin_out = synth.to_dict()
        if synth.eps_star <= 0.0:
            exit_code = 1

    if command in ("modulus", "all"):
        mocfg = work.get("modulus", {})
        kwargs = {}
        if "log_step" in mocfg:
            kwargs["log_step"] = float(mocfg["log_step"])
        if "density" in mocfg:
            kwargs["density"] = int(mocfg["density"])
        pair = build_modulus(_base_map(scenario), **kwargs)
        mreport = verify_modulus(
            _base_map(scenario),
            pair,
            scenario.box,
            samples=int(mocfg.get("samples", 1000)),
            delta_max=float(mocfg.get("delta_max", 1.0)),
            seed=int(mocfg.get("seed", seed)),
        )
        modulus_out = _modulus_summary(pair, mreport)
        if pair.tables:
            tbl_name = "modulus-tables.json"
            _atomic_write(
                os.path.join(out_dir, tbl_name),
                json.dumps(_jsonable(pair.tables), sort_keys=True, indent=2, allow_nan=False),
            )
            artifacts["modulus_tables"] = tbl_name
        if not mreport.passed:
            exit_code = 1

    if command in ("falsify", "all"):
        if eps_arg is None and command == "falsify":
            raise ConfigError("falsify needs --eps or a perturbation section in the config")
        if eps_arg is not None or "perturbation" in work:
            budget = FalsifyBudget(
                starts=int(fal_cfg.get("starts", 200)),
                horizon=float(fal_cfg.get("horizon", 5.0)),
                step=float(fal_cfg["step"]) if "step" in fal_cfg else None,
                seed=int(fal_cfg.get("seed", seed)),
            )
            # when the config itself carries the perturbation, integrate it
            # as-is; an explicit eps re-wraps the base dynamics
            explicit = eps if eps is not None else (
                eps_arg if not isinstance(scenario.dynamics, PerturbedSystem) else None
            )
            result = falsify(
                scenario,
                explicit,
                budget,
                hints=bundle_scenario.hints(eps_arg),
                mode=fal_mode if fal_mode != "none" else "strong",
                density=fal_density,
            )
            fals_out = result.to_dict()
            if result.found:
                exit_code = 1
                traj_name = "trajectory-witness.txt"
                _write_trajectory(
                    os.path.join(out_dir, traj_name),
                    result.trajectory,
                    barrier_values=result.trajectory.values is not None,
                )
                artifacts["trajectory"] = traj_name

    bundle = {
        "bundle_version": 1,
        "tool": {"name": "inclusafe", "version": __version__},
        "command": command,
        "scenario": scenario.name,
        "config_sha256": cfg_hash,
        "seed": seed,
        "flags": {
            "check": check,
            "mode": mode,
            "eps": eps,
            "box_scale": box_scale,
            "density": density,
        },
        "expected_notes": bundle_scenario.expected,
        "checks": checks,
        "margin": margin_out,
        "modulus": modulus_out,
        "falsification": fals_out,
        "artifacts": artifacts,
        "exit_code": exit_code,
    }
    # the timestamp lives in its own top-level field: dropping that single
    # key must make bundles from identical config + seed byte-identical
    stamped = dict(_jsonable(bundle))
    stamped["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    bundle_name = f"bundle-{command}.json"
    _atomic_write(
        os.path.join(out_dir, bundle_name),
        json.dumps(stamped, sort_keys=True, indent=2, allow_nan=False),
    )
    return stamped, exit_code


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="inclusafe",
        description="sampled safety verification and falsification for differential inclusions",
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("config", help="config JSON path or built-in scenario name")
    p.add_argument("--check", help="run a single check id (verify only)")
    p.add_argument("--mode", choices=["none", "image", "strong"], help="perturbation mode")
    p.add_argument("--eps", type=float, help="constant perturbation margin")
    p.add_argument("--seed", type=int, default=0, help="seed for sampled searches")
    p.add_argument("--box-scale", type=float, dest="box_scale", help="shrink/grow the domain box")
    p.add_argument("--out", help="output directory (default: inclusafe-reports)")
    p.add_argument("--density", type=int, help="ball lattice density override")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        bundle, code = run(
            args.config,
            args.command,
            check=args.check,
            mode=args.mode,
            eps=args.eps,
            seed=args.seed,
            box_scale=args.box_scale,
            out=args.out,
            density=args.density,
        )
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    for rep in bundle.get("checks", []):
        print(f"[{rep['check_id']}] {rep['verdict']} margin={rep['margin']}")
    if bundle.get("margin") is not None:
        print(f"[margin] eps_star={bundle['margin']['eps_star']}")
    if bundle.get("modulus") is not None:
        ver = bundle["modulus"].get("verification") or {}
        print(
            f"[modulus] degenerate={bundle['modulus']['degenerate']}"
            f" verified={ver.get('passed')} min_slack={ver.get('min_slack')}"
        )
    if bundle.get("falsification") is not None:
        f = bundle["falsification"]
        print(f"[falsify] found={f['found']} depth={f['depth']} policy={f['policy']}")
    out_dir = args.out or "inclusafe-reports"
    print(f"bundle: {os.path.join(out_dir, 'bundle-' + args.command + '.json')}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
