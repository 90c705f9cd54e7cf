"""Dispatch an ExperimentConfig to its suite and persist the artifacts."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from . import suites
from .config import ExperimentConfig, effective_dict
from .fields import FieldError, field_from_description, source_from_description
from .models import ModelError, model_from_description
from .quadrature import Budget
from .regularity import ProbeSet, default_time_pairs


class SetupError(ValueError):
    """The config is well-formed JSON but names things that cannot be built."""


def _budget(cfg: ExperimentConfig) -> Budget:
    b = cfg.budget
    return Budget(samples=b.samples, max_samples=b.max_samples,
                  scale_with_lambda=b.scale_with_lambda, quad_tol=b.quad_tol,
                  grading_levels=b.grading_levels, panel_order=b.panel_order)


def _probes(pc, N: int, seed: int) -> ProbeSet:
    return ProbeSet.seeded(N, pc.points, pc.directions, pc.magnitudes, pc.delta_min,
                           pc.delta_max, pc.radius, seed, pc.extra_points or None)


def prepare(cfg: ExperimentConfig) -> dict:
    """Build the model and every field the suite needs; raises SetupError."""
    try:
        model = model_from_description(cfg.model)
        N = model.dimension
        p = cfg.params
        objs = {"model": model}
        if cfg.suite == "smoothing":
            objs["phi"] = [field_from_description(d, N) for d in p.phi]
        elif cfg.suite in ("schauder", "zygmund", "solve", "residual"):
            objs["phi"] = field_from_description(p.phi, N)
            objs["psi"] = source_from_description(p.psi, N)
        elif cfg.suite == "interpolation":
            objs["family"] = [field_from_description(d, N) for d in p.family]
        elif cfg.suite == "sde":
            objs["phi"] = [field_from_description(d, N) for d in p.phi]
            if len(p.x) != N:
                raise SetupError(f"params.x has length {len(p.x)}, model has N = {N}")
        if cfg.suite in ("schauder", "zygmund", "interpolation"):
            objs["probes"] = _probes(p.probes, N, cfg.seed)
        for key in ("x_set", "x_probe"):
            pts = getattr(p, key, None)
            if pts is not None and np.atleast_2d(np.asarray(pts, float)).shape[1] != N:
                raise SetupError(f"params.{key} rows must have length N = {N}")
        return objs
    except (ModelError, FieldError, TypeError, KeyError) as exc:
        raise SetupError(str(exc)) from exc


def execute(cfg: ExperimentConfig, objs: dict | None = None) -> suites.SuiteResult:
    objs = objs or prepare(cfg)
    model, p = objs["model"], cfg.params
    budget = _budget(cfg)
    if cfg.suite == "theta":
        pairs = default_time_pairs(model, p.count, p.gap_min, p.gap_max, p.anchor)
        return suites.theta_suite(model, pairs, p.tolerance, p.optimality)
    if cfg.suite == "smoothing":
        pairs = default_time_pairs(model, p.count, p.gap_min, p.gap_max, p.anchor)
        b = Budget(samples=p.samples, max_samples=budget.max_samples, scale_with_lambda=False,
                   quad_tol=budget.quad_tol, grading_levels=budget.grading_levels,
                   panel_order=budget.panel_order)
        return suites.smoothing_suite(model, objs["phi"], p.n_max, pairs, budget=b,
                                      seed=cfg.seed, method=cfg.method, align=p.align)
    if cfg.suite == "schauder":
        return suites.schauder_suite(model, objs["phi"], objs["psi"], p.alpha, p.t, p.s_grid,
                                     objs["probes"], p.theta, cfg.method, budget, cfg.seed,
                                     p.tol, p.sharpness_offset)
    if cfg.suite == "zygmund":
        return suites.zygmund_suite(model, objs["phi"], objs["psi"], p.alpha, p.t, p.s_grid,
                                    objs["probes"], p.theta, cfg.method, budget, cfg.seed,
                                    p.tol, p.axes)
    if cfg.suite == "interpolation":
        return suites.interpolation_check(objs["family"], p.alpha1, p.alpha, p.alpha2,
                                          objs["probes"])
    if cfg.suite == "sde":
        return suites.sde_suite(model, p.x, p.s, p.t, p.dt, p.path_count, objs["phi"],
                                cfg.seed, cfg.workers)
    if cfg.suite == "solve":
        return suites.solve_suite(model, objs["phi"], objs["psi"], p.t, p.s_grid, p.x_set,
                                  cfg.method, budget, cfg.seed)
    if cfg.suite == "residual":
        return suites.residual_suite(model, objs["phi"], objs["psi"], p.t, p.s_probe,
                                     p.x_probe, p.tolerance, cfg.method, budget, cfg.seed)
    raise SetupError(f"unknown suite {cfg.suite!r}")


# ---------------------------------------------------------------------------
# artifacts


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def write_artifacts(cfg: ExperimentConfig, result: suites.SuiteResult, out: Path) -> list:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    (out / "effective_config.json").write_text(
        json.dumps(effective_dict(cfg), indent=2, sort_keys=True) + "\n")
    written.append("effective_config.json")
    for name, (header, rows) in sorted(result.tables.items()):
        (out / f"{name}.csv").write_text(csv_text(header, rows))
        written.append(f"{name}.csv")
    summary = result.summary()
    summary["seed"] = cfg.seed
    summary["tables"] = sorted(result.tables)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append("summary.json")
    return written
