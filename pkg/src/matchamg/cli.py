"""Command-line benchmark runner.

Subcommands ``solve``, ``analyze``, ``sweep`` and ``gen`` read an optional
YAML configuration; every flag mirrors a configuration key and overrides the
file.  Exit status: 0 on success/convergence, 2 on non-convergence, 1 on error.
"""

from __future__ import annotations

import argparse
import contextlib
import copy
import csv
import io
import json
import re
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np
import yaml

from . import mmio
from .analysis import convergence_table, table_to_csv
from .coarsening import CoarseningConfig, build_hierarchy
from .problems import PoissonSpec, block3d_partition, initial_weight, poisson7pt, process_grid
from .smoothers import SmootherConfig, SmootherKind, setup_smoother
from .solvers import (CoarsestConfig, CycleConfig, KrylovConfig, MultilevelPreconditioner,
                      SolveReport, fcg_solve)

__all__ = [
    "ExperimentConfig",
    "ExperimentError",
    "DEFAULTS",
    "load_config",
    "validate_report",
    "solve_report",
    "run_solve",
    "run_analysis",
    "run_sweep",
    "run_gen",
    "main",
]

DEFAULTS: dict = {
    "mode": "solve",
    "output": None,
    "problem": {"n": 16, "np": 1, "k": [1.0, 1.0, 1.0]},
    "weight": {"sweeps": 0, "seed": 0},
    "coarsening": {"sweeps": 3, "smoothed": False, "max_coarse_size": None,
                   "max_levels": 20, "min_coarsening_ratio": 1.2},
    "smoother": {"kind": "HGS", "sweeps": 1, "damping": 1.0, "invk_fill": 1,
                 "omega_opt": False},
    "cycle": {"kind": "V", "pre_sweeps": 1, "post_sweeps": 1,
              "coarsest_rtol": 1e-4, "coarsest_maxit": 30},
    "krylov": {"rtol": 1e-6, "maxit": 500},
    "analysis": {"nps": [1], "smoothers": ["HGS"], "omegas": ["one"], "measure": False},
    "sweep": {"sizes": [16, 32]},
}


class ExperimentError(RuntimeError):
    """A component failure annotated with the module (and level) it came from."""


@contextlib.contextmanager
def _stage(module: str, where: str = ""):
    try:
        yield
    except ExperimentError:
        raise
    except Exception as exc:
        ctx = f"{module}" + (f", {where}" if where else "")
        raise ExperimentError(f"[{ctx}] {type(exc).__name__}: {exc}") from exc


def _schema(name: str) -> dict:
    text = resources.files("matchamg").joinpath("schemas", name).read_text()
    return json.loads(text)


class _Loader(yaml.SafeLoader):
    pass


# accept 1e-6 style floats, which YAML 1.1 would read as strings
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?(?:[eE][-+]?[0-9]+)$|"
               r"^[-+]?(?:[0-9][0-9_]*)\.[0-9_]*$|^[-+]?\.[0-9_]+(?:[eE][-+]?[0-9]+)?$"),
    list("-+0123456789."))


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path=None, overrides: Optional[dict] = None) -> dict:
    """Defaults, then the YAML file, then ``overrides``; validated by schema."""
    doc = {}
    if path is not None:
        doc = yaml.load(Path(path).read_text(), Loader=_Loader) or {}
        if not isinstance(doc, dict):
            raise ValueError(f"{path}: configuration must be a mapping")
    schema = _schema("config.schema.json")
    jsonschema.validate(doc, schema)
    cfg = _merge(DEFAULTS, doc)
    if overrides:
        cfg = _merge(cfg, overrides)
    jsonschema.validate(cfg, schema)
    return cfg


@dataclass(frozen=True)
class ExperimentConfig:
    problem: PoissonSpec
    coarsening: CoarseningConfig
    smoother: SmootherConfig
    cycle: CycleConfig
    krylov: KrylovConfig
    mode: str = "solve"
    output_path: Optional[str] = None
    weight_sweeps: int = 0
    weight_seed: int = 0
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = _merge(DEFAULTS, d)
        jsonschema.validate(d, _schema("config.schema.json"))
        pr = d["problem"]
        shape = pr.get("shape") or [pr["n"]] * 3
        nprocs = pr["np"]
        if nprocs > int(np.prod(shape)):
            raise ValueError(f"np = {nprocs} exceeds the number of unknowns {int(np.prod(shape))}")
        spec = PoissonSpec(*shape, *pr["k"], *process_grid(nprocs))
        co, sm, cy, kr = d["coarsening"], d["smoother"], d["cycle"], d["krylov"]
        return cls(
            problem=spec,
            coarsening=CoarseningConfig(co["sweeps"], co["smoothed"], co["max_coarse_size"],
                                        co["max_levels"], co["min_coarsening_ratio"]),
            smoother=SmootherConfig(SmootherKind(sm["kind"]), sm["sweeps"], sm["damping"],
                                    sm["invk_fill"], sm["omega_opt"]),
            cycle=CycleConfig(cy["kind"], cy["pre_sweeps"], cy["post_sweeps"],
                              CoarsestConfig(cy["coarsest_rtol"], cy["coarsest_maxit"])),
            krylov=KrylovConfig(kr["rtol"], kr["maxit"]),
            mode=d["mode"],
            output_path=d["output"],
            weight_sweeps=d["weight"]["sweeps"],
            weight_seed=d["weight"]["seed"],
            raw=d,
        )


def _as_experiment(cfg) -> ExperimentConfig:
    return cfg if isinstance(cfg, ExperimentConfig) else ExperimentConfig.from_dict(cfg)


def validate_report(report: dict) -> None:
    jsonschema.validate(report, _schema("report.schema.json"))


def solve_report(cfg) -> dict:
    """Generate, set up and solve; return the JSON-ready report."""
    cfg = _as_experiment(cfg)
    spec = cfg.problem
    with _stage("problem-gen"):
        a, b = poisson7pt(spec)
        part = block3d_partition(spec)
        w = initial_weight(a, part, cfg.weight_sweeps, seed=cfg.weight_seed)

    t0 = time.perf_counter()
    with _stage("coarsening"):
        h = build_hierarchy(a, w, part, cfg.coarsening)
    smoothers = []
    for lev, lvl in enumerate(h.levels[:-1]):
        with _stage("smoothers", f"level {lev}"):
            smoothers.append(setup_smoother(lvl.a, lvl.partition, cfg.smoother))
    with _stage("solvers", f"coarsest level {h.nl - 1}"):
        prec = MultilevelPreconditioner(h, smoothers, cfg.cycle)
    setup_seconds = time.perf_counter() - t0

    with _stage("solvers", "FCG"):
        _, rep = fcg_solve(a, b, prec, cfg.krylov)
    summary = h.summary()
    return {
        "problem": {"shape": [spec.nx, spec.ny, spec.nz], "np": spec.nprocs,
                    "k": [spec.k1, spec.k2, spec.k3]},
        "n": spec.n,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "relative_residual_history": rep.relative_residual_history,
        "opc": summary["opc"],
        "kopc": summary["kopc"],
        "avg_cr": summary["avg_cr"],
        "nl": summary["nl"],
        "levels": summary["levels"],
        "setup_seconds": setup_seconds,
        "solve_seconds": rep.solve_seconds,
        "coarsest_iterations": list(prec.coarsest.iterations),
        "config": cfg.raw,
    }


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def run_solve(cfg) -> SolveReport:
    """Solve one problem, write the JSON report to the output path (or stdout)."""
    cfg = _as_experiment(cfg)
    report = solve_report(cfg)
    validate_report(report)
    _write(cfg.output_path, json.dumps(report, indent=2) + "\n")
    return SolveReport(report["iterations"], report["relative_residual_history"],
                       report["converged"], report["opc"], report["setup_seconds"],
                       report["solve_seconds"])


def run_analysis(cfg) -> str:
    """Convergence-constant table over the configured np values and smoothers."""
    cfg = _as_experiment(cfg)
    an = cfg.raw["analysis"]
    spec = cfg.problem
    if spec.nx != spec.ny or spec.ny != spec.nz:
        raise ValueError("analysis runs on cubic grids only")
    for nprocs in an["nps"]:
        if nprocs > spec.n:
            raise ValueError(f"np = {nprocs} exceeds the number of unknowns {spec.n}")
    # omega_opt needs a real spectrum of M^{-1}A: Gauss-Seidel kinds keep omega = 1
    rows = [(kind, om == "opt") for kind in an["smoothers"] for om in an["omegas"]
            if not (om == "opt" and SmootherKind(kind).is_gauss_seidel)]
    with _stage("analysis"):
        records = convergence_table(
            spec.nx, an["nps"], rows, sweeps=cfg.coarsening.sweeps_per_level,
            smoothed=cfg.coarsening.smooth_prolongator, invk_fill=cfg.smoother.invk_fill,
            measure=an["measure"], k=(spec.k1, spec.k2, spec.k3))
    text = table_to_csv(records)
    _write(cfg.output_path, text)
    return text


SWEEP_COLUMNS = ["n", "nl", "opc", "kopc", "avg_cr", "iterations", "converged",
                 "setup_seconds", "solve_seconds"]


def run_sweep(cfg) -> str:
    """One solve per size in ``sweep.sizes``; CSV rows of hierarchy and solve metrics."""
    cfg = _as_experiment(cfg)
    base = cfg.raw
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for size in base["sweep"]["sizes"]:
        sub = _merge(base, {"problem": {"n": size}})
        sub["problem"].pop("shape", None)
        rep = solve_report(ExperimentConfig.from_dict(sub))
        writer.writerow({key: rep[key] for key in SWEEP_COLUMNS})
    text = buf.getvalue()
    _write(cfg.output_path, text)
    return text


def run_gen(cfg, rhs_path: Optional[str] = None) -> str:
    """Write the Poisson matrix (and optionally the right-hand side) to disk."""
    cfg = _as_experiment(cfg)
    path = cfg.output_path or "poisson.mtx"
    with _stage("problem-gen"):
        a, b = poisson7pt(cfg.problem)
    mmio.write_matrix(path, a, symmetric=True)
    if rhs_path:
        mmio.write_vector(rhs_path, b)
    return path


# (flag, config key, argparse keyword arguments)
_FLAGS = [
    ("--n", "problem.n", dict(type=int, help="grid points per axis (cube)")),
    ("--shape", "problem.shape", dict(type=int, nargs=3, metavar=("NX", "NY", "NZ"))),
    ("--np", "problem.np", dict(type=int, help="number of emulated processes (row blocks)")),
    ("--k", "problem.k", dict(type=float, nargs=3, metavar=("K1", "K2", "K3"),
                              help="diffusion coefficients per axis")),
    ("--weight-sweeps", "weight.sweeps", dict(type=int)),
    ("--seed", "weight.seed", dict(type=int)),
    ("--sweeps", "coarsening.sweeps", dict(type=int, help="matching sweeps per level")),
    ("--smoothed", "coarsening.smoothed", dict(action=argparse.BooleanOptionalAction)),
    ("--max-coarse-size", "coarsening.max_coarse_size", dict(type=int)),
    ("--max-levels", "coarsening.max_levels", dict(type=int)),
    ("--min-coarsening-ratio", "coarsening.min_coarsening_ratio", dict(type=float)),
    ("--smoother", "smoother.kind", dict(choices=[k.value for k in SmootherKind])),
    ("--smoother-sweeps", "smoother.sweeps", dict(type=int)),
    ("--damping", "smoother.damping", dict(type=float)),
    ("--invk-fill", "smoother.invk_fill", dict(type=int)),
    ("--omega-opt", "smoother.omega_opt", dict(action=argparse.BooleanOptionalAction)),
    ("--cycle", "cycle.kind", dict(choices=["V", "K"])),
    ("--pre-sweeps", "cycle.pre_sweeps", dict(type=int)),
    ("--post-sweeps", "cycle.post_sweeps", dict(type=int)),
    ("--coarsest-rtol", "cycle.coarsest_rtol", dict(type=float)),
    ("--coarsest-maxit", "cycle.coarsest_maxit", dict(type=int)),
    ("--rtol", "krylov.rtol", dict(type=float)),
    ("--maxit", "krylov.maxit", dict(type=int)),
    ("--nps", "analysis.nps", dict(type=int, nargs="+")),
    ("--smoothers", "analysis.smoothers", dict(nargs="+", choices=[k.value for k in SmootherKind])),
    ("--omegas", "analysis.omegas", dict(nargs="+", choices=["one", "opt"])),
    ("--measure", "analysis.measure", dict(action=argparse.BooleanOptionalAction)),
    ("--sizes", "sweep.sizes", dict(type=int, nargs="+")),
    ("--output", "output", dict(help="report / table path (default: stdout)")),
]


def _dest(key: str) -> str:
    return "cfg__" + key.replace(".", "__")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="matchamg", description="AMG with compatible weighted matching: benchmark runner")
    sub = parser.add_subparsers(dest="mode", required=True)
    helps = {"solve": "generate, set up and solve one problem (JSON report)",
             "analyze": "two-level convergence constants (CSV table)",
             "sweep": "solve over a list of sizes (CSV table)",
             "gen": "write the Poisson matrix in MatrixMarket format"}
    for mode, text in helps.items():
        p = sub.add_parser(mode, help=text)
        p.add_argument("--config", help="YAML configuration file")
        for flag, key, kw in _FLAGS:
            p.add_argument(flag, dest=_dest(key), default=None, **kw)
        if mode == "gen":
            p.add_argument("--rhs", help="also write the right-hand side here")
    return parser


def _overrides(ns: argparse.Namespace) -> dict:
    out: dict = {}
    for _, key, _ in _FLAGS:
        val = getattr(ns, _dest(key))
        if val is None:
            continue
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = list(val) if isinstance(val, (list, tuple)) else val
    return out


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        over = _overrides(ns)
        over["mode"] = ns.mode
        raw = load_config(ns.config, over)
        if "n" in over.get("problem", {}) and "shape" not in over["problem"]:
            raw["problem"].pop("shape", None)  # --n overrides a file-level shape
        cfg = ExperimentConfig.from_dict(raw)
        if ns.mode == "solve":
            rep = run_solve(cfg)
            return 0 if rep.converged else 2
        if ns.mode == "analyze":
            run_analysis(cfg)
            return 0
        if ns.mode == "sweep":
            text = run_sweep(cfg)
            rows = list(csv.DictReader(io.StringIO(text)))
            return 0 if all(r["converged"] == "True" for r in rows) else 2
        run_gen(cfg, ns.rhs)
        return 0
    except (ExperimentError, ValueError, OverflowError, OSError,
            jsonschema.ValidationError, yaml.YAMLError) as exc:
        msg = exc.message if isinstance(exc, jsonschema.ValidationError) else str(exc)
        print(f"matchamg: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
