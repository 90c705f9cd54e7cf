"""Verification suites built on the estimators and the seminorm probes.

Every suite returns a :class:`SuiteResult`: hard checks (which decide the
exit status of a CLI run), soft informational numbers, and data tables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fields import FIELD_BUILDERS, FieldFunction, SourceTerm, const
from .gaussian import smoothing_bundle
from .kolmogorov import derivative_u0, derivative_u1
from .models import OperatorFamily, evolution_bound
from .quadrature import Budget
from .regularity import (ProbeSet, SeminormReport, combine_reports, default_time_pairs,
                         estimate_theta, holder_from_values, holder_seminorm,
                         loglog_slope, stencil_values, zygmund_from_values)
from .transition import apply_P, derivative_P

Array = np.ndarray

ROUTING_MARGIN = 0.05
# field probes compare values at one shared quadrature rule, so a looser
# inner tolerance costs little accuracy and saves an order of magnitude
FIELD_BUDGET = Budget(quad_tol=1e-6, grading_levels=12, panel_order=6)
BOUNDED_SLOPE = 0.1

# which estimate a summary checks
THEOREM_TAGS = {
    "theta": "smoothing-operator-blowup-rate",
    "smoothing": "derivative-smoothing-bound",
    "schauder": "schauder-estimate",
    "zygmund": "zygmund-borderline-estimate",
    "interpolation": "holder-interpolation-inequality",
    "sde": "transition-law-identification",
    "solve": "mild-solution-representation",
    "residual": "kolmogorov-equation-residual",
}


class RoutingError(ValueError):
    pass


@dataclass
class SuiteResult:
    suite: str
    checks: dict = field(default_factory=dict)  # name -> bool (hard)
    info: dict = field(default_factory=dict)  # soft numbers
    tables: dict = field(default_factory=dict)  # name -> (header, rows)

    @property
    def theorem(self) -> str:
        return THEOREM_TAGS[self.suite]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def failures(self) -> list:
        return [k for k, v in self.checks.items() if not v]

    def summary(self) -> dict:
        return {"suite": self.suite, "theorem": self.theorem, "passed": self.passed,
                "checks": {k: bool(v) for k, v in self.checks.items()},
                "failed": self.failures, "info": _plain(self.info)}


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _report_table(reports: dict) -> tuple:
    names = list(reports)
    mags = reports[names[0]].magnitudes
    rows = [[float(d)] + [float(reports[n].per_scale_sup[i]) for n in names]
            for i, d in enumerate(mags)]
    return ["delta"] + names, rows


# ---------------------------------------------------------------------------
# theta


def theta_suite(model: OperatorFamily, time_pairs=None, tolerance: float = 0.05,
                optimality: bool = True) -> SuiteResult:
    from .regularity import InsufficientModes, theta_optimality
    pairs = time_pairs or default_time_pairs(model)
    fit = estimate_theta(model, pairs)
    res = SuiteResult("theta")
    res.info.update(fit.summary())
    res.tables["lambda_norms"] = (["gap", "lambda_norm"],
                                  [[float(g), float(n)] for g, n in zip(fit.gaps, fit.norms)])
    star = getattr(model, "params", {}).get("theta_star")
    if star is not None:
        res.info["theta_star"] = star
        res.checks["theta_within_tolerance"] = abs(fit.theta - star) <= tolerance
        if optimality and "a" in model.params:
            try:
                opt = theta_optimality(model, pairs)
                res.info["optimality"] = opt.summary()
                res.checks["optimality_certified"] = opt.certified
                res.tables["lower_envelope"] = (
                    ["gap", "min_lambda_norm"],
                    [[float(g), float(v)] for g, v in zip(opt.gaps, opt.minima)])
            except InsufficientModes as exc:
                res.info["optimality"] = {"skipped": str(exc)}
    return res


# ---------------------------------------------------------------------------
# smoothing bound


def top_direction(bundle) -> Array:
    _, _, vt = np.linalg.svd(bundle.lam)
    h = vt[0]
    return h * np.sign(h[np.argmax(np.abs(h))])


RIDGE_FIELDS = ("absolute", "cosine", "sine", "step")


def align_ridge(phi: FieldFunction, direction: Array) -> FieldFunction:
    """The same ridge profile y -> g(<c, y>) with c turned onto ``direction``."""
    if phi.label not in RIDGE_FIELDS:
        return phi
    c = np.asarray(phi.params["c"], dtype=float)
    params = dict(phi.params, c=(np.linalg.norm(c) * direction).tolist())
    return FIELD_BUILDERS[phi.label](len(c), params)


def smoothing_suite(model: OperatorFamily, phi_set: Sequence[FieldFunction], n_max: int,
                    time_pairs: Sequence, offsets: Optional[Sequence[float]] = None,
                    budget: Optional[Budget] = None, seed: int = 0,
                    method: str = "auto", align: bool = True) -> SuiteResult:
    """R_n = max |D^n P phi(x)(h..h)| / (|phi|_inf |h|^n |Lambda|^n) per time pair.

    h is the top right-singular vector of Lambda(t,s); the probe states are
    x = u h / |Lambda h| for u in ``offsets``, so that the Gaussian argument
    sweeps a fixed window regardless of the time pair. With ``align`` the
    ridge fields are turned onto Q^{-1} U h, the one direction in which a
    bounded function can make |D^n P phi| comparable to |Lambda|^n.
    """
    budget = budget or Budget(samples=2**15, scale_with_lambda=False)
    offsets = np.linspace(-2, 2, 9) if offsets is None else np.asarray(offsets, float)
    res = SuiteResult("smoothing")
    rows = []
    gaps = np.array([t - s for s, t in time_pairs])
    R = np.zeros((n_max, len(time_pairs)))
    for j, (s, t) in enumerate(time_pairs):
        b = smoothing_bundle(model, s, t)
        b.require_nondegenerate()
        h = top_direction(b)
        lam = b.lambda_op_norm
        X = (offsets[:, None] * h[None, :]) / float(np.linalg.norm(b.lam @ h))
        X = X - np.linalg.solve(b.U, b.offset) if np.any(b.offset) else X
        fields = phi_set
        if align:
            ridge = b.law.root.pinv_sqrt(b.lam @ h)
            fields = [align_ridge(phi, ridge / np.linalg.norm(ridge)) for phi in phi_set]
        for n in range(1, n_max + 1):
            best, best_err = 0.0, 0.0
            for phi in fields:
                sup = phi.sup_bound if phi.sup_bound else float(np.max(np.abs(phi(X))))
                if sup == 0:
                    continue
                est = derivative_P(model, phi, s, t, X, np.tile(h, (n, 1)), method, budget,
                                   seed)
                vals = np.abs(np.asarray(est.value)) / (sup * lam**n)
                i = int(np.argmax(vals))
                if vals[i] > best:
                    best, best_err = float(vals[i]), float(np.asarray(est.stderr)[i] / (sup * lam**n))
            R[n - 1, j] = best
            rows.append([n, s, t, t - s, lam, best, best_err])
    res.tables["ratios"] = (["n", "s", "t", "gap", "lambda_norm", "R_n", "R_n_stderr"], rows)
    per_n = {}
    for n in range(1, n_max + 1):
        r = R[n - 1]
        slope = loglog_slope(gaps, r) if np.all(r > 0) else 0.0
        verdict = "bounded" if abs(slope) <= BOUNDED_SLOPE else "unstable"
        per_n[n] = {"C_n": float(r.max()), "slope": slope, "verdict": verdict}
        res.checks[f"bounded_n{n}"] = verdict == "bounded"
    res.info["per_order"] = per_n
    res.info["gap_decades"] = float(np.log10(gaps.max() / gaps.min()))
    return res


# ---------------------------------------------------------------------------
# Schauder / Zygmund


def _derivative_field(model, phi, psi, s, t, H, theta, method, budget, seed, tol):
    """x -> D^n u(s, x)(H) as a batch evaluator."""
    n = len(H)
    budget = budget or FIELD_BUDGET

    def f(X):
        X = np.atleast_2d(X)
        if n == 0:
            from .kolmogorov import u_value
            return u_value(model, phi, psi, s, t, X, method, budget, seed)[0]
        v1 = derivative_u1(model, psi, s, t, X, H, theta=theta, formula="weight",
                           method=method, budget=budget, seed=seed, tol=tol)
        out = np.asarray(v1.value, dtype=float)
        if not _is_zero_field(phi):
            v0 = derivative_u0(model, phi, s, t, X, H, method, budget, seed)
            out = out + np.asarray(v0.value)
        return out

    return f


def _is_zero_field(phi: FieldFunction) -> bool:
    return phi.label == "const" and phi.params.get("value", 1.0) == 0.0


def _theta_for(model, theta):
    if theta is not None:
        return float(theta)
    return estimate_theta(model, default_time_pairs(model)).theta


def _norm_phi(phi: FieldFunction) -> float:
    if _is_zero_field(phi):
        return 0.0
    bound = phi.sup_bound or 0.0
    return bound + (phi.declared_seminorm or 0.0)


def _norm_psi(psi: SourceTerm, t: float) -> float:
    sup = psi.sup_bound(t) or 0.0
    return sup + (psi.declared_holder_bound or 0.0)


def schauder_suite(model: OperatorFamily, phi: FieldFunction, psi: SourceTerm, alpha: float,
                   t: float, s_grid: Sequence[float], probes: ProbeSet,
                   theta: Optional[float] = None, method: str = "auto",
                   budget: Optional[Budget] = None, seed: int = 0, tol: float = 1e-5,
                   sharpness_offset: float = 0.2) -> SuiteResult:
    """Probe [D^n u(s, .)]_{C^beta} with n + beta = alpha + 1/theta, uniformly in s."""
    th = _theta_for(model, theta)
    exponent = alpha + 1.0 / th
    if abs(exponent - round(exponent)) < ROUTING_MARGIN:
        raise RoutingError(f"alpha + 1/theta = {exponent:.3f} is within {ROUTING_MARGIN} of "
                           "an integer: use the Zygmund suite")
    n = int(math.floor(exponent))
    beta = exponent - n
    sharp = min(1.0, beta + sharpness_offset)
    res = SuiteResult("schauder")
    res.info.update({"theta_hat": th, "exponent": exponent, "derivative_order": n,
                     "holder_exponent": beta, "sharpness_exponent": sharp})
    N = model.dimension
    reports, sharp_reports = {}, {}
    for s in s_grid:
        if s >= t:
            continue
        per_axis, per_axis_sharp = [], []
        for a in range(N):
            H = np.tile(np.eye(N)[a], (n, 1))
            f = _derivative_field(model, phi, psi, s, t, H, th, method, budget, seed, tol)
            vals = stencil_values(f, probes, (0, 1))
            per_axis.append(holder_from_values(vals, probes, beta))
            per_axis_sharp.append(holder_from_values(vals, probes, sharp))
        reports[f"s={s:.6g}"] = combine_reports(per_axis)
        sharp_reports[f"s={s:.6g}"] = combine_reports(per_axis_sharp)
    overall = combine_reports(list(reports.values()))
    sharp_overall = combine_reports(list(sharp_reports.values()))
    denom = _norm_phi(phi) + _norm_psi(psi, t)
    res.info.update({
        "seminorm_sup": overall.global_estimate, "slope": overall.slope,
        "verdict": overall.verdict,
        "per_s": {k: r.summary() for k, r in reports.items()},
        "ratio_to_data_norm": overall.global_estimate / denom if denom else None,
        "sharpness": sharp_overall.summary(),
    })
    res.checks["scale_stable"] = overall.verdict == "bounded"
    res.checks["uniform_in_s"] = all(r.verdict == "bounded" for r in reports.values())
    res.tables["per_scale"] = _report_table(reports)
    res.tables["sharpness_per_scale"] = _report_table(sharp_reports)
    return res


def zygmund_suite(model: OperatorFamily, phi: FieldFunction, psi: SourceTerm, alpha: float,
                  t: float, s_grid: Sequence[float], probes: ProbeSet,
                  theta: Optional[float] = None, method: str = "auto",
                  budget: Optional[Budget] = None, seed: int = 0, tol: float = 1e-5,
                  axes: Optional[Sequence[int]] = None) -> SuiteResult:
    """Probe [D^{k-1} u(s, .)]_{Z^1} at the borderline alpha + 1/theta = k.

    The Lipschitz quotient of the same derivative field (a proxy for the
    sup of D^k u) is reported alongside as a contrast.
    """
    th = _theta_for(model, theta)
    exponent = alpha + 1.0 / th
    k = int(round(exponent))
    if abs(exponent - k) >= ROUTING_MARGIN:
        raise RoutingError(f"alpha + 1/theta = {exponent:.3f} is not within "
                           f"{ROUTING_MARGIN} of an integer: use the Schauder suite")
    res = SuiteResult("zygmund")
    res.info.update({"theta_hat": th, "exponent": exponent, "k": k})
    N = model.dimension
    axes = range(N) if axes is None else axes
    zyg, lip = {}, {}
    for s in s_grid:
        if s >= t:
            continue
        per_z, per_l = [], []
        for a in axes:
            H = np.tile(np.eye(N)[a], (k - 1, 1))
            f = _derivative_field(model, phi, psi, s, t, H, th, method, budget, seed, tol)
            vals = stencil_values(f, probes, (0, 1, 2))
            per_z.append(zygmund_from_values(vals, probes))
            per_l.append(holder_from_values(vals, probes, 1.0))
        zyg[f"s={s:.6g}"] = combine_reports(per_z)
        lip[f"s={s:.6g}"] = combine_reports(per_l)
    z = combine_reports(list(zyg.values()))
    c = combine_reports(list(lip.values()))
    res.info.update({"zygmund": z.summary(), "ck_proxy": c.summary(),
                     "per_s": {key: r.summary() for key, r in zyg.items()}})
    res.checks["zygmund_bounded"] = z.verdict == "bounded"
    res.tables["zygmund_per_scale"] = _report_table(zyg)
    res.tables["ck_proxy_per_scale"] = _report_table(lip)
    return res


# ---------------------------------------------------------------------------
# interpolation


def sup_norm(f: FieldFunction, probes: ProbeSet) -> float:
    pts = probes.stencil_points((0, 1)).reshape(-1, probes.base_points.shape[1])
    return float(np.max(np.abs(f(pts))))


def holder_norm(f: FieldFunction, alpha: float, probes: ProbeSet) -> float:
    """Probe estimate of |f|_{C^alpha} = sum_j sup|D^j f| + [D^n f]_{alpha - n}."""
    base = sup_norm(f, probes)
    if alpha == 0:
        return base
    n = int(math.floor(alpha))
    frac = alpha - n
    pts = probes.stencil_points((0, 1)).reshape(-1, probes.base_points.shape[1])
    total = base
    for j in range(1, n + 1):
        total += max(float(np.max(np.abs(f.directional(j, pts, np.tile(e, (j, 1))))))
                     for e in probes.directions)
    if frac > 0:
        if n == 0:
            total += holder_seminorm(f, frac, probes).global_estimate
        else:
            total += max(holder_seminorm(lambda X, e=e: f.directional(n, X, np.tile(e, (n, 1))),
                                         frac, probes).global_estimate
                         for e in probes.directions)
    return total


def interpolation_check(psi_set: Sequence[FieldFunction], alpha1: float, alpha: float,
                        alpha2: float, probes: ProbeSet) -> SuiteResult:
    """Single constant C_fit with |psi|_a <= C |psi|_a1^{1-lam} |psi|_a2^{lam}."""
    if not 0 <= alpha1 < alpha < alpha2:
        raise ValueError("need 0 <= alpha1 < alpha < alpha2")
    lam = (alpha - alpha1) / (alpha2 - alpha1)
    res = SuiteResult("interpolation")
    rows, ratios = [], []
    for f in psi_set:
        lhs = holder_norm(f, alpha, probes)
        n1 = holder_norm(f, alpha1, probes)
        n2 = holder_norm(f, alpha2, probes)
        rhs = n1 ** (1 - lam) * n2**lam
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
        ratios.append(ratio)
        rows.append([f.label, json_params(f), lhs, n1, n2, rhs, ratio])
    c_fit = float(max(ratios)) if ratios else 0.0
    res.tables["norms"] = (["field", "params", "norm_alpha", "norm_alpha1", "norm_alpha2",
                            "interpolated", "ratio"], rows)
    res.info.update({"C_fit": c_fit, "alpha1": alpha1, "alpha": alpha, "alpha2": alpha2})
    res.checks["finite_constant"] = math.isfinite(c_fit)
    return res


def json_params(f: FieldFunction) -> str:
    import json
    return json.dumps(_plain(f.params), sort_keys=True)


# ---------------------------------------------------------------------------
# Hoelder transfer


def holder_transfer_check(model: OperatorFamily, phi: FieldFunction, s: float, t: float,
                          probes: ProbeSet, method: str = "auto",
                          budget: Optional[Budget] = None, seed: int = 0) -> dict:
    """[P_{s,t} phi]_{C^alpha} against M_emp^alpha [phi]_{C^alpha}."""
    if phi.declared_class != "Calpha" or phi.declared_seminorm is None:
        raise ValueError("needs a field with a declared Hoelder seminorm")
    a = phi.order
    rep = holder_seminorm(lambda X: np.asarray(apply_P(model, phi, s, t, X, method, budget,
                                                       seed).value), a, probes)
    bound = evolution_bound(model) ** a * phi.declared_seminorm
    return {"measured": rep.global_estimate, "bound": bound,
            "holds": rep.global_estimate <= bound * 1.05}


# ---------------------------------------------------------------------------
# forward-process law, mild solution table, PDE residual


def sde_suite(model: OperatorFamily, x, s: float, t: float, dt: float, path_count: int,
              phi_set: Sequence[FieldFunction], seed: int = 0, workers: int = 1) -> SuiteResult:
    """Euler-Maruyama ensemble against the Gaussian law and P_{s,t} phi."""
    from .sde import law_check, simulate, weak_check
    ens = simulate(model, x, s, t, dt, path_count, seed, workers=workers, coupled=True)
    law = law_check(ens, model)
    res = SuiteResult("sde")
    res.info["law"] = law.summary()
    res.checks["law_z_within_threshold"] = law.passed
    rows = []
    N = model.dimension
    for i in range(N):
        rows.append(["mean", i, i, float(law.mean_diff[i]), float(law.mean_allowance[i]),
                     float(law.mean_z[i])])
    for i in range(N):
        for j in range(N):
            rows.append(["cov", i, j, float(law.cov_diff[i, j]),
                         float(law.cov_allowance[i, j]), float(law.cov_z[i, j])])
    res.tables["law_z"] = (["moment", "i", "j", "difference", "bias_allowance", "z"], rows)
    wrows = []
    for phi in phi_set:
        w = weak_check(ens, phi, model)
        res.checks[f"weak_{phi.label}"] = w.passed
        wrows.append([phi.label, json_params(phi), w.simulated, w.simulated_stderr, w.analytic,
                      w.analytic_stderr, w.bias_allowance, int(w.passed)])
    res.tables["weak"] = (["field", "params", "simulated", "simulated_stderr", "analytic",
                           "analytic_stderr", "bias_allowance", "passed"], wrows)
    return res


def solve_suite(model: OperatorFamily, phi: FieldFunction, psi: SourceTerm, t: float,
                s_grid: Sequence[float], x_set, method: str = "auto",
                budget: Optional[Budget] = None, seed: int = 0) -> SuiteResult:
    """Tabulate u = u0 + u1; the terminal row must reproduce phi."""
    from .kolmogorov import solve_u
    table = solve_u(model, phi, psi, t, s_grid, x_set, method, budget, seed)
    res = SuiteResult("solve")
    res.tables["solution"] = (table.header(), [list(map(float, r)) for r in table.rows()])
    res.checks["finite"] = bool(np.all(np.isfinite(table.u)))
    res.checks["time_integral_converged"] = not bool(np.any(table.flagged))
    at_t = np.isclose(table.s, t)
    if np.any(at_t):
        err = float(np.max(np.abs(table.u[at_t] - phi(table.x)[None, :])))
        res.info["terminal_error"] = err
        res.checks["terminal_condition"] = err <= 1e-12
    res.info["max_stderr"] = float(np.max(table.u0_stderr + table.u1_stderr))
    return res


def residual_suite(model: OperatorFamily, phi: FieldFunction, psi: SourceTerm, t: float,
                   s_probe, x_probe, tolerance: float = 1e-3, method: str = "auto",
                   budget: Optional[Budget] = None, seed: int = 0) -> SuiteResult:
    from .kolmogorov import pde_residual
    rep = pde_residual(model, phi, psi, t, s_probe, x_probe, method, budget, seed)
    res = SuiteResult("residual")
    rows = [[float(s), *map(float, x), float(rep.residual[i, j])]
            for i, s in enumerate(rep.s) for j, x in enumerate(rep.x)]
    res.tables["residual"] = (["s"] + [f"x{i}" for i in range(rep.x.shape[1])] + ["residual"],
                              rows)
    res.info["max_residual"] = rep.max_residual
    res.checks["residual_within_tolerance"] = rep.max_residual <= tolerance
    return res
