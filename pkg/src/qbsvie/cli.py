"""Batch front-end: JSON run configs in, result bundles (JSON and CSV) out.

    qbsvie --config configs/solve_type1.json --out results/ --format both
    qbsvie --config cfg.json --override driver.N=200 --override generator.0.a=0.3
    qbsvie --print-schema
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .bsde import solve_bsde
from .bsvie import (PicardConfig, cascaded_partition_scheme, continuity_modulus, inconsistency_demo,
                    msolution_residual, partition_error, solve_type1_general, solve_type2_msolution,
                    type1_diagnostics, type1_residual, type2_residual)
from .driver import DriverSpec, build_driver
from .generator import from_spec as generator_from_spec
from .grid import TimeGrid
from .position import from_spec as position_from_spec
from .risk import RiskMeasureSpec, check_axioms

SCHEMA_VERSION = 1
EXPERIMENTS = ("solve-type1", "solve-type2", "partition-convergence", "risk-axioms",
               "bsde-oracle", "inconsistency-demo")

_term = {"type": "object", "required": ["name"], "properties": {"name": {"type": "string"}}}
SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "qbsvie run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["experiment", "generator", "position"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "driver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "backend": {"enum": ["lattice", "path-tree", "monte-carlo"]},
                "N": {"type": "integer", "minimum": 1},
                "T": {"type": "number", "exclusiveMinimum": 0},
                "paths": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer", "minimum": 0},
                "basis_degree": {"type": "integer", "minimum": 0},
                "tree_cap": {"type": "integer", "minimum": 1},
            },
        },
        "generator": {"oneOf": [_term, {"type": "array", "minItems": 1, "items": _term}]},
        "position": {"type": "object", "required": ["payoff"],
                     "properties": {"payoff": {"type": "string"}}},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "picard": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "picard_max_iter": {"type": "integer", "minimum": 1},
                "axiom": {"type": ["number", "null"], "exclusiveMinimum": 0},
            },
        },
        "levels": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "oracle": {"type": ["number", "null"]},
        "risk": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "r": {"type": "number", "minimum": 0},
                "instances": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "format": {"enum": ["json", "csv", "both"]},
            },
        },
    },
}

DEFAULTS = {
    "driver": {"backend": "lattice", "N": 100, "T": 1.0, "paths": 4096, "seed": 0,
               "basis_degree": 4, "tree_cap": 22},
    "tolerances": {"picard": None, "picard_max_iter": 200, "axiom": None},
    "risk": {"r": 0.0, "instances": 50, "seed": 0},
    "output": {"dir": "results", "format": "both"},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    driver: dict
    generator: object
    position: dict
    tolerances: dict
    risk: dict
    output: dict
    levels: list | None = None
    oracle: float | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        try:
            jsonschema.validate(raw, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"{where}: {exc.message}") from None
        cfg = copy.deepcopy(raw)
        for key, dflt in DEFAULTS.items():
            cfg[key] = {**dflt, **cfg.get(key, {})}
        return cls(**cfg)

    def as_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @property
    def config_hash(self) -> str:
        """sha256 of the canonical config without its output section."""
        body = {k: v for k, v in self.as_dict().items() if k != "output"}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``a.b.c=value`` overrides; values parse as JSON, falling back to strings."""
    out = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        path, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        keys = path.split(".")
        node = out
        for k in keys[:-1]:
            if isinstance(node, list):
                node = node[int(k)]
            else:
                node = node.setdefault(k, {})
        last = keys[-1]
        if isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
    return out


def load_config(path, overrides=()) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return RunConfig.from_dict(apply_overrides(raw, list(overrides)))


# -- bundles ----------------------------------------------------------------------

@dataclass
class ResultBundle:
    experiment: str
    summary: dict
    fields: dict = field(default_factory=dict)  # name -> {"columns": [...], "rows": [[...]]}
    diagnostics: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "ResultBundle":
        return cls(**json.loads(text))


def _clean(x):
    """Plain JSON types; non-finite floats become None."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def _nodes(v) -> list:
    return [float(a) for a in np.asarray(v, dtype=float).ravel()]


def y_table(grid: TimeGrid, Y: list, name: str = "Y") -> dict:
    rows = [[i, grid.time(i), float(np.mean(y)), float(np.min(y)), float(np.max(y)), _nodes(y)]
            for i, y in enumerate(Y)]
    return {"columns": ["i", "t", f"{name}_mean", f"{name}_min", f"{name}_max", "values"], "rows": rows}


def z_table(grid: TimeGrid, Z: list, driver, square: bool = False) -> dict:
    """One row per (i, j); Z(t_i, t_N) is zero (no increment after T)."""
    n = grid.steps
    rows = []
    for i in range(n + 1):
        for j in range(0 if square else i, n + 1):
            v = Z[j][i] if j < n else np.zeros(driver.n_nodes(n))
            rows.append([i, j, grid.time(i), grid.time(j), float(np.mean(v)), float(np.min(v)),
                         float(np.max(v)), _nodes(v)])
    return {"columns": ["i", "j", "t_i", "t_j", "Z_mean", "Z_min", "Z_max", "values"], "rows": rows}


# -- experiments ------------------------------------------------------------------

def _driver(cfg: RunConfig, steps: int | None = None):
    d = cfg.driver
    grid = TimeGrid(d["T"], steps or d["N"])
    return build_driver(grid, DriverSpec(d["backend"], d["paths"], d["seed"], d["basis_degree"],
                                         d["tree_cap"]))


def _picard(cfg: RunConfig) -> PicardConfig:
    return PicardConfig(cfg.tolerances["picard"], cfg.tolerances["picard_max_iter"])


def _solve_type1(cfg):
    driver = _driver(cfg)
    g, psi = generator_from_spec(cfg.generator), position_from_spec(cfg.position)
    sol = solve_type1_general(driver, g, psi, picard=_picard(cfg))
    diag = type1_diagnostics(driver, sol)
    summary = {"Y0": sol.y0, "iterations": sol.iterations, "differences": sol.differences,
               "contraction_ratios": sol.ratios, "residual": type1_residual(driver, sol),
               "continuity_modulus": continuity_modulus(driver, sol.Y)}
    fields = {"Y": y_table(driver.grid, sol.Y), "Z": z_table(driver.grid, sol.Z, driver)}
    return summary, fields, diag.as_dict()


def _solve_type2(cfg):
    driver = _driver(cfg)
    g, psi = generator_from_spec(cfg.generator), position_from_spec(cfg.position)
    pc = _picard(cfg)
    sol = solve_type2_msolution(driver, g, psi, outer=pc, picard=pc)
    diag = type1_diagnostics(driver, sol.inner)
    summary = {"Y0": sol.y0, "outer_changes": sol.changes,
               "msolution_residual": msolution_residual(driver, sol),
               "residual": type2_residual(driver, sol)}
    fields = {"Y": y_table(driver.grid, sol.Y), "Z": z_table(driver.grid, sol.Z, driver, square=True)}
    return summary, fields, diag.as_dict()


def _partition(cfg):
    driver = _driver(cfg)
    g, psi = generator_from_spec(cfg.generator), position_from_spec(cfg.position)
    n = driver.steps
    levels = cfg.levels or [2 ** k for k in range(1, 20) if 2 ** k <= n // 4 and n % 2 ** k == 0]
    ref = solve_type1_general(driver, g, psi, picard=_picard(cfg))
    rows, prev = [], None
    for m in levels:
        sch = cascaded_partition_scheme(driver, g, psi, TimeGrid(driver.grid.horizon, m))
        err = partition_error(sch.Y, ref.Y)
        rows.append([m, err, prev / err if prev is not None and err > 0 else None])
        prev = err
    errors = [r[1] for r in rows]
    summary = {"Y0_type1": ref.y0, "levels": levels, "errors": errors,
               "nonincreasing": all(b <= a for a, b in zip(errors, errors[1:])),
               "final_error": errors[-1]}
    return summary, {"convergence": {"columns": ["N_pi", "error", "ratio"], "rows": rows}}, {}


def _risk(cfg):
    driver = _driver(cfg)
    spec = RiskMeasureSpec(generator_from_spec(cfg.generator), cfg.risk["r"])
    rep = check_axioms(driver, spec, cfg.risk["instances"], cfg.risk["seed"],
                       tol=cfg.tolerances["axiom"], picard=_picard(cfg))
    summary = {"rho0": rep.rho0, "ok": rep.ok,
               "worst": {k: v.worst for k, v in rep.verdicts.items()}}
    rows = [[k, v.claimed, v.worst, v.tolerance, v.as_dict()["status"]] for k, v in rep.verdicts.items()]
    fields = {"rho": y_table(driver.grid, rep.rho, "rho"),
              "axioms": {"columns": ["axiom", "claimed", "worst", "tolerance", "status"], "rows": rows}}
    return summary, fields, rep.as_dict()


def closed_form_oracle(g, psi_spec: dict, horizon: float) -> float | None:
    """ln E[exp(q xi)]/q for a pure quadratic y-free generator and xi = a W(T)."""
    if g.uses_y or g.uses_zprime or callable(g.quad) or not g.has_quad:
        return None
    probe = np.linspace(-2.0, 2.0, 5)
    if np.any(g.explicit(0.0, 0.0, probe, probe, probe) != 0.0):
        return None
    a = {"terminal": lambda p: p.get("a", 1.0),
         "linear_terminal": lambda p: p.get("a", 1.0) * horizon}.get(psi_spec["payoff"])
    if a is None:
        return None
    return 0.5 * g.quad * a(psi_spec) ** 2 * horizon


def _bsde_oracle(cfg):
    g, psi = generator_from_spec(cfg.generator), position_from_spec(cfg.position)
    oracle = cfg.oracle if cfg.oracle is not None else \
        closed_form_oracle(g, cfg.position, cfg.driver["T"])
    levels = cfg.levels or [cfg.driver["N"]]
    rows, values, prev = [], [], None
    diag = {}
    for n in levels:
        driver = _driver(cfg, n)
        sol = solve_bsde(driver, g, driver.evaluate_position(psi, n))
        values.append(sol.y0)
        err = None if oracle is None else abs(sol.y0 - oracle)
        rows.append([n, err, prev / err if prev is not None and err else None])
        prev = err
    summary = {"Y0": values[-1], "Y0_levels": values, "oracle": oracle,
               "error": rows[-1][1], "levels": levels}
    return summary, {"convergence": {"columns": ["N", "error", "ratio"], "rows": rows}}, diag


def _inconsistency(cfg):
    driver = _driver(cfg)
    g, psi = generator_from_spec(cfg.generator), position_from_spec(cfg.position)
    pc = _picard(cfg)
    rep = inconsistency_demo(driver, g, psi, picard=pc)
    tol = pc.tolerance(driver)
    summary = {"naive_gap": rep.gap, "witness": rep.witness, "naive_Y0": rep.naive_y0,
               "bsvie_Y0": rep.bsvie_y0, "bsvie_residual": rep.bsvie_residual, "tolerance": tol,
               "gap_exceeds_10x_tolerance": rep.gap > 10 * tol,
               "bsvie_residual_within_tolerance": rep.bsvie_residual <= tol}
    return summary, {}, {}


RUNNERS = {
    "solve-type1": _solve_type1,
    "solve-type2": _solve_type2,
    "partition-convergence": _partition,
    "risk-axioms": _risk,
    "bsde-oracle": _bsde_oracle,
    "inconsistency-demo": _inconsistency,
}


def run(cfg: RunConfig) -> ResultBundle:
    summary, fields, diag = RUNNERS[cfg.experiment](cfg)
    prov = {"config_hash": cfg.config_hash, "seed": cfg.driver["seed"], "version": __version__,
            "config": cfg.as_dict()}
    prov["config"].pop("output", None)
    return ResultBundle(cfg.experiment, _clean(summary), _clean(fields), _clean(diag), _clean(prov))


def emit(bundle: ResultBundle, out_dir, fmt: str = "both") -> list[Path]:
    """Write bundle.json and/or one CSV per field; returns the written paths."""
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if fmt in ("json", "both"):
            p = out / "bundle.json"
            p.write_text(bundle.to_json())
            written.append(p)
        if fmt in ("csv", "both"):
            prov = bundle.provenance
            for name, table in bundle.fields.items():
                p = out / f"{name}.csv"
                with p.open("w", newline="") as fh:
                    fh.write(f"# config_hash={prov.get('config_hash')} seed={prov.get('seed')} "
                             f"version={prov.get('version')} experiment={bundle.experiment}\n")
                    w = csv.writer(fh)
                    w.writerow(table["columns"])
                    for row in table["rows"]:
                        w.writerow([" ".join(repr(v) for v in c) if isinstance(c, list) else
                                    ("" if c is None else c) for c in row])
                written.append(p)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write results: {exc.strerror}", exc.filename) from None
    return written


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qbsvie", description="Quadratic BSVIE experiments.")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output directory (default: output.dir of the config)")
    p.add_argument("--format", choices=["json", "csv", "both"])
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dot-path override, repeatable")
    p.add_argument("--print-schema", action="store_true", help="print the config JSON schema")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.print_schema:
        print(json.dumps(SCHEMA, indent=2))
        return 0
    if not args.config:
        _fail("usage", "--config is required", None)
        return 2
    experiment = None
    try:
        cfg = load_config(args.config, args.override)
        experiment = cfg.experiment
        bundle = run(cfg)
        paths = emit(bundle, args.out or cfg.output["dir"], args.format or cfg.output["format"])
    except ConfigError as exc:
        _fail("config", str(exc), experiment)
        return 2
    except Exception as exc:  # surfaced as machine-readable JSON
        _fail(type(exc).__name__, str(exc), experiment, getattr(exc, "info", None))
        return 1
    print(json.dumps({"experiment": bundle.experiment, "summary": bundle.summary,
                      "files": [str(p) for p in paths]}, indent=1))
    return 0


def _fail(kind, message, experiment, info=None):
    err = {"error": kind, "message": message, "experiment": experiment}
    if info:
        err["info"] = _clean(info)
    print(json.dumps(err), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
