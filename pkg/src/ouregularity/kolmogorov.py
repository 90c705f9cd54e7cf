"""Mild solution u = u0 + u1 of the backward Kolmogorov problem

    d_s u + L(s) u = psi(s, .),   u(t, .) = phi,

with u0(s,x) = P_{s,t} phi(x) and u1(s,x) = -int_s^t P_{s,sigma} psi(sigma, .)(x) dsigma.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fields import FieldFunction, SourceTerm, const
from .gaussian import gauss_legendre
from .models import OperatorFamily
from .quadrature import Budget, MONTE_CARLO, TENSOR
from .transition import (MCEstimate, TransitionError, apply_P, derivative_P,
                         derivative_P_transfer)

Array = np.ndarray


class KolmogorovError(ValueError):
    pass


@dataclass
class GradedTimeMesh:
    """Nodes s + (t-s)(j/M)^{1/(1-gamma)}, clustered toward s."""

    s: float
    t: float
    exponent: float
    node_count: int

    def __post_init__(self):
        if not 0 <= self.exponent < 1:
            raise KolmogorovError(
                f"grading exponent {self.exponent:.3f} is not in [0, 1): the kernel "
                "(sigma - s)^(-gamma) is not integrable")
        if not self.t > self.s:
            raise KolmogorovError("mesh needs s < t")
        if self.node_count < 1:
            raise KolmogorovError("node count must be positive")

    @property
    def nodes(self) -> Array:
        j = np.arange(self.node_count + 1) / self.node_count
        return self.s + (self.t - self.s) * j ** (1.0 / (1.0 - self.exponent))

    def rule(self, order: int = 8, levels: int = 6) -> tuple[Array, Array]:
        """Gauss-Legendre in v = ((sigma - s)/(t - s))^{1-gamma} on the panels j/M.

        The panel edges are exactly the mesh nodes; the Jacobian
        v^{p-1}, p = 1/(1-gamma), cancels a (sigma - s)^{-gamma} kernel.  The
        first panel is additionally split geometrically toward v = 0.
        """
        p = 1.0 / (1.0 - self.exponent)
        M = self.node_count
        x, w = gauss_legendre(order)
        L = self.t - self.s
        inner = (1.0 / M) * 2.0 ** -np.arange(levels, 0, -1) if self.exponent > 0 \
            else np.zeros(0)
        edges = np.concatenate([[0.0], inner, np.arange(1, M + 1) / M])
        # gaps below 1e-12 |s| cannot be represented next to s; the sliver
        # [0, v_cut] is covered by one node at v_cut, i.e. the bounded
        # v-integrand is extended as a constant
        v_cut = (1e-12 * abs(self.s) / L) ** (1.0 / p) if self.exponent > 0 else 0.0
        if v_cut > 0:
            edges = np.concatenate([[v_cut], edges[edges > 2 * v_cut]])
        h = np.diff(edges)
        v = (edges[:-1, None] + h[:, None] * x).ravel()
        wv = (h[:, None] * w).ravel()
        if v_cut > 0:
            v, wv = np.concatenate([[v_cut], v]), np.concatenate([[v_cut], wv])
        sigma = self.s + L * v**p
        # Jacobian at the gap each node actually carries after rounding
        vr = ((sigma - self.s) / L) ** (1.0 / p)
        return sigma, L * p * vr ** (p - 1.0) * wv


@dataclass
class SolutionTable:
    s: Array
    x: Array  # (P, N)
    u0: Array  # (S, P)
    u0_stderr: Array
    u1: Array
    u1_stderr: Array
    flagged: Array  # bool (S, P)

    @property
    def u(self) -> Array:
        return self.u0 + self.u1

    def rows(self):
        for i, s in enumerate(self.s):
            for j, x in enumerate(self.x):
                yield [s, *x, self.u0[i, j], self.u0_stderr[i, j], self.u1[i, j],
                       self.u1_stderr[i, j], self.u0[i, j] + self.u1[i, j]]

    def header(self) -> list:
        return ["s"] + [f"x{i}" for i in range(self.x.shape[1])] + \
            ["u0", "u0_stderr", "u1", "u1_stderr", "u"]


def _combine(est_list, weights):
    vals = sum(w * np.asarray(e.value) for w, e in zip(weights, est_list))
    errs = sum(abs(w) * np.asarray(e.stderr) for w, e in zip(weights, est_list))
    return vals, errs


def time_integral_u1(model, psi: SourceTerm, s: float, t: float, X: Array,
                     method="auto", budget: Optional[Budget] = None, seed: int = 0,
                     tag: int = 0, tol: float = 1e-9, max_panels: int = 256):
    """u1(s, X) by composite Gauss-Legendre in sigma (panels doubled to ``tol``)."""
    M = len(X)
    if s >= t or psi.is_zero:
        return np.zeros(M), np.zeros(M), True
    xg, wg = gauss_legendre(6)
    panels = 2
    prev = None
    while True:
        edges = np.linspace(s, t, panels + 1)
        h = np.diff(edges)
        sig = (edges[:-1, None] + h[:, None] * xg).ravel()
        wts = (h[:, None] * wg).ravel()
        ests = [apply_P(model, psi.at(sg), s, sg, X, method, budget, seed, tag) for sg in sig]
        val, err = _combine(ests, wts)
        val, err = -val, err
        if prev is not None:
            delta = np.max(np.abs(val - prev))
            if delta <= max(3 * np.max(err), tol):
                return val, err + np.abs(val - prev), True
        if panels >= max_panels:
            return val, err + (np.abs(val - prev) if prev is not None else 0), False
        prev = val
        panels *= 2


def solve_u(model: OperatorFamily, phi: FieldFunction, psi: SourceTerm, t: float,
            s_grid: Sequence[float], x_set, method: str = "auto",
            budget: Optional[Budget] = None, seed: int = 0, tol: float = 1e-9) -> SolutionTable:
    """Table of u0 and u1 over s_grid x x_set (samples shared across x per s-row)."""
    s_grid = np.asarray(s_grid, dtype=float)
    if np.any(s_grid < 0) or np.any(s_grid > t):
        raise KolmogorovError("s grid must lie in [0, t]")
    X = np.atleast_2d(np.asarray(x_set, dtype=float))
    S, P = len(s_grid), len(X)
    u0 = np.zeros((S, P)); e0 = np.zeros((S, P))
    u1 = np.zeros((S, P)); e1 = np.zeros((S, P))
    flagged = np.zeros((S, P), dtype=bool)
    for i, s in enumerate(s_grid):
        est = apply_P(model, phi, s, t, X, method, budget, seed, tag=2 * i)
        u0[i], e0[i] = est.value, est.stderr
        v, e, ok = time_integral_u1(model, psi, s, t, X, method, budget, seed, 2 * i + 1, tol)
        u1[i], e1[i] = v, e
        flagged[i] = not ok
    return SolutionTable(s_grid, X, u0, e0, u1, e1, flagged)


def grading_exponent(k: int, theta: float, psi: SourceTerm) -> float:
    if psi.declared_class == "C0alpha":
        return max(0.0, (k - psi.alpha)) * theta
    return k * theta


def model_theta(model: OperatorFamily) -> float:
    theta = getattr(model, "params", {}).get("theta_star")
    if theta is not None:
        return float(theta)
    from .regularity import estimate_theta, default_time_pairs
    key = ("theta_hat",)
    if key not in model.cache:
        model.cache[key] = estimate_theta(model, default_time_pairs(model)).theta
    return model.cache[key]


def derivative_u1(model: OperatorFamily, psi: SourceTerm, s: float, t: float, x, H,
                  theta: Optional[float] = None, formula: str = "auto", method: str = "auto",
                  budget: Optional[Budget] = None, seed: int = 0, tol: float = 1e-4,
                  start_nodes: int = 8, max_nodes: int = 512,
                  levels: int = 6, order: int = 8) -> MCEstimate:
    """D^k u1(s, x)(h_1..h_k) = -int_s^t D^k P_{s,sigma} psi(sigma, .)(x)(h..) dsigma.

    ``formula="weight"`` differentiates through the Gaussian weight I_k and
    integrates over a mesh graded with the exponent of the kernel's
    singularity; ``"transfer"`` differentiates psi itself (smooth psi only,
    bounded integrand, uniform mesh).  M is doubled until the value settles
    within max(3 stderr, tol).
    """
    N = model.dimension
    H = np.atleast_2d(np.asarray(H, dtype=float)) if np.size(H) else np.zeros((0, N))
    k = len(H)
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if psi.is_zero or not s < t:
        z = 0.0 if single else np.zeros(len(X))
        return MCEstimate(z, z, 0, TENSOR, seed)
    if formula == "auto":
        formula = "transfer" if (psi.field.derivative is not None
                                 and psi.field.max_derivative >= k) else "weight"
    if formula == "transfer":
        gamma = 0.0
        op = lambda sg, tag: derivative_P_transfer(model, psi.at(sg), s, sg, X, H, method,
                                                   budget, seed, tag)
    elif formula == "weight":
        th = model_theta(model) if theta is None else float(theta)
        gamma = grading_exponent(k, th, psi)
        if gamma >= 1:
            raise KolmogorovError(
                f"kernel (sigma-s)^(-{gamma:.3f}) is not integrable: need "
                f"{'(k - alpha)' if psi.declared_class == 'C0alpha' else 'k'} * theta < 1")
        op = lambda sg, tag: derivative_P(model, psi.at(sg), s, sg, X, H, method, budget,
                                          seed, tag)
    else:
        raise KolmogorovError(f"unknown formula {formula!r}")
    M = start_nodes
    prev = None
    while True:
        mesh = GradedTimeMesh(s, t, gamma, M)
        sig, wts = mesh.rule(order=order, levels=levels)
        ests = [op(sg, 0) for sg in sig]
        val, err = _combine(ests, wts)
        val = -val
        if prev is not None:
            delta = float(np.max(np.abs(val - prev[0])))
            if delta <= max(3 * float(np.max(err)), tol) or M >= max_nodes:
                err = err + np.abs(val - prev[0])
                break
        prev = (val, err)
        M *= 2
    if single:
        val, err = float(val[0]), float(err[0])
    return MCEstimate(val, err, ests[0].sample_count, ests[0].method, seed)


def derivative_u0(model, phi: FieldFunction, s, t, X, H, method="auto", budget=None,
                  seed=0) -> MCEstimate:
    k = len(H)
    if phi.derivative is not None and phi.max_derivative >= k:
        return derivative_P_transfer(model, phi, s, t, X, H, method, budget, seed)
    return derivative_P(model, phi, s, t, X, H, method, budget, seed)


def u_value(model, phi, psi, s, t, X, method="auto", budget=None, seed=0, tol=1e-11):
    a = apply_P(model, phi, s, t, X, method, budget, seed)
    b, e, _ = time_integral_u1(model, psi, s, t, X, method, budget, seed, 1, tol)
    return np.asarray(a.value) + b, np.asarray(a.stderr) + e


@dataclass
class ResidualReport:
    s: Array
    x: Array
    residual: Array  # (S, P)
    components: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual))


def pde_residual(model: OperatorFamily, phi: FieldFunction, psi: SourceTerm, t: float,
                 s_probe, x_probe, method: str = "auto", budget: Optional[Budget] = None,
                 seed: int = 0, ds: Optional[float] = None) -> ResidualReport:
    """|d_s u + 1/2 Tr(B B^T D^2 u) + <A x + f, grad u> - psi(s, x)| at the probes."""
    N = model.dimension
    if N > 3:
        raise KolmogorovError("residual check is restricted to N <= 3")
    s_probe = np.atleast_1d(np.asarray(s_probe, dtype=float))
    X = np.atleast_2d(np.asarray(x_probe, dtype=float))
    ds = 1e-4 * t if ds is None else ds
    if np.any(s_probe - ds < 0) or np.any(s_probe + ds >= t):
        raise KolmogorovError("probe times must be strictly interior")
    E = np.eye(N)
    res = np.zeros((len(s_probe), len(X)))
    comps = {"ds_u": [], "grad_u": [], "hess_u": []}
    for i, s in enumerate(s_probe):
        up, _ = u_value(model, phi, psi, s + ds, t, X, method, budget, seed)
        um, _ = u_value(model, phi, psi, s - ds, t, X, method, budget, seed)
        dsu = (up - um) / (2 * ds)
        grad = np.zeros((len(X), N))
        hess = np.zeros((len(X), N, N))
        for a in range(N):
            g0 = derivative_u0(model, phi, s, t, X, E[[a]], method, budget, seed)
            g1 = derivative_u1(model, psi, s, t, X, E[[a]], method=method, budget=budget,
                               seed=seed, tol=1e-10)
            grad[:, a] = np.asarray(g0.value) + np.asarray(g1.value)
            for b in range(a, N):
                Hab = E[[a, b]]
                h0 = derivative_u0(model, phi, s, t, X, Hab, method, budget, seed)
                h1 = derivative_u1(model, psi, s, t, X, Hab, method=method, budget=budget,
                                   seed=seed, tol=1e-10)
                hess[:, a, b] = hess[:, b, a] = np.asarray(h0.value) + np.asarray(h1.value)
        Bs = model.diffusion(s)
        BB = Bs @ Bs.T
        drift = X @ model.drift(s).T + model.forcing(s)
        gen = 0.5 * np.einsum("ij,pij->p", BB, hess) + np.sum(drift * grad, axis=1)
        res[i] = np.abs(dsu + gen - psi(s, X))
        comps["ds_u"].append(dsu); comps["grad_u"].append(grad); comps["hess_u"].append(hess)
    return ResidualReport(s_probe, X, res, {k: np.array(v) for k, v in comps.items()})
