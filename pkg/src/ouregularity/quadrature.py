"""Expectations under N(m, Q) for a batch of means sharing one covariance.

Three engines:

* tensor Gauss-Hermite in the eigenbasis of Q (smooth integrands, N <= 6);
* a windowed piecewise Gauss-Legendre tensor rule in state coordinates, cut
  at the integrand's axis-aligned breakpoints and graded toward singular
  points (non-smooth integrands, N <= 3, Q of full rank);
* Monte Carlo with common random numbers across the batch.

Integrands have signature ``g(points, y) -> values`` where ``points`` has
shape (M, K, N), ``y = points - m`` is the centred sample (broadcastable to
``points``) and the result has shape (M, K).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .fields import Breakpoint
from .gaussian import PsdSqrt, gauss_legendre
from .rng import standard_normals

Array = np.ndarray

TENSOR = "tensorQuadrature"
MONTE_CARLO = "monteCarlo"
GH_MAX_DIM = 6
WINDOW_MAX_DIM = 3
WINDOW_HALF_WIDTH = 9.0


class QuadratureError(RuntimeError):
    pass


@dataclass
class Budget:
    samples: int = 2**16
    max_samples: int = 2**20
    scale_with_lambda: bool = True
    quad_tol: float = 1e-9
    max_nodes: int = 2_000_000
    grading_levels: int = 24
    panel_order: int = 8

    def mc_count(self, variance_scale: float = 1.0) -> int:
        n = self.samples * (max(1.0, variance_scale) if self.scale_with_lambda else 1.0)
        return int(min(self.max_samples, max(1, math.ceil(n))))


@dataclass
class QuadResult:
    values: Array
    errors: Array
    count: int
    method: str


def _chunked_rows(M: int, K: int, N: int, limit: int = 4_000_000):
    step = max(1, limit // max(1, K * max(N, 1)))
    for a in range(0, M, step):
        yield slice(a, min(M, a + step))


# ---------------------------------------------------------------------------
# Gauss-Hermite


_HE_CACHE: dict[int, tuple[Array, Array]] = {}


def hermite_rule(n: int) -> tuple[Array, Array]:
    """Probabilists' Gauss-Hermite nodes and weights normalised to sum 1."""
    if n not in _HE_CACHE:
        x, w = np.polynomial.hermite_e.hermegauss(n)
        _HE_CACHE[n] = (x, w / w.sum())
    return _HE_CACHE[n]


def _gh_grid(root: PsdSqrt, n: int) -> tuple[Array, Array]:
    idx = np.flatnonzero(root.retained)
    r = len(idx)
    N = len(root.eigenvalues)
    if r == 0:
        return np.zeros((1, N)), np.ones(1)
    x, w = hermite_rule(n)
    grids = np.meshgrid(*([x] * r), indexing="ij")
    Z = np.stack([g.ravel() for g in grids], axis=-1)
    W = np.ones(len(Z))
    for g in np.meshgrid(*([w] * r), indexing="ij"):
        W = W * g.ravel()
    V = root.eigenvectors[:, idx]
    Y = (Z * np.sqrt(root.eigenvalues[idx])) @ V.T
    return Y, W


def _gh_apply(g, means: Array, Y: Array, W: Array) -> tuple[Array, Array]:
    M = len(means)
    out = np.empty(M)
    mag = np.empty(M)
    for sl in _chunked_rows(M, len(Y), means.shape[1]):
        pts = means[sl, None, :] + Y[None, :, :]
        v = g(pts, Y[None, :, :])
        out[sl] = v @ W
        mag[sl] = np.abs(v) @ W
    return out, mag


def _settled(vals: Array, prev: Array, mag: Array, tol: float) -> tuple[bool, float]:
    """Relative change, measured against the integral of |g| to absorb cancellation."""
    scale = np.maximum(1.0, np.maximum(np.abs(vals), mag))
    delta = float(np.max(np.abs(vals - prev) / scale))
    return delta <= tol, delta


def gauss_hermite(g, means: Array, root: PsdSqrt, budget: Budget) -> QuadResult:
    r = max(1, root.effective_rank)
    n = 4
    prev = None
    while True:
        if n**r > budget.max_nodes:
            if prev is None:
                raise QuadratureError("tensor rule too large for this dimension")
            return QuadResult(prev[0], np.full(len(means), prev[1]), prev[2], TENSOR)
        Y, W = _gh_grid(root, n)
        vals, mag = _gh_apply(g, means, Y, W)
        if prev is not None:
            ok, delta = _settled(vals, prev[0], mag, budget.quad_tol)
            if ok:
                return QuadResult(vals, np.abs(vals - prev[0]), len(W), TENSOR)
            prev = (vals, float(delta), len(W))
        else:
            prev = (vals, math.inf, len(W))
        n *= 2


# ---------------------------------------------------------------------------
# windowed piecewise Gauss-Legendre


def _template(uniform: int, graded: bool, levels: int, order: int) -> tuple[Array, Array]:
    """Nodes and weights on [0, 1]; graded templates cluster toward both ends."""
    if graded:
        left = [0.0] + [0.25 * 2.0**-j for j in range(levels, -1, -1)]
        mid = list(np.linspace(0.25, 0.75, uniform + 1)[1:-1])
        right = [1.0 - e for e in reversed(left)]
        edges = np.array(left + mid + right)
    else:
        edges = np.linspace(0.0, 1.0, uniform + 1)
    x, w = gauss_legendre(order)
    h = np.diff(edges)
    return (edges[:-1, None] + h[:, None] * x).ravel(), (h[:, None] * w).ravel()


def _axis_rule(lo: Array, hi: Array, cuts: Sequence[float], tmpl) -> tuple[Array, Array]:
    """Per-row nodes/weights on [lo, hi] split at the (clipped) cut points."""
    u, wu = tmpl
    M = len(lo)
    inner = np.clip(np.array(sorted(cuts), dtype=float)[None, :], lo[:, None], hi[:, None]) \
        if len(cuts) else np.zeros((M, 0))
    edges = np.concatenate([lo[:, None], inner, hi[:, None]], axis=1)
    a, h = edges[:, :-1], np.diff(edges, axis=1)
    nodes = (a[:, :, None] + h[:, :, None] * u).reshape(M, -1)
    weights = (h[:, :, None] * wu).reshape(M, -1)
    return nodes, weights


def windowed_rule(g, means: Array, Q: Array, root: PsdSqrt, breakpoints: Sequence[Breakpoint],
                  budget: Budget) -> QuadResult:
    M, N = means.shape
    sd = np.sqrt(np.diag(Q))
    invsqrt = root.pinv_sqrt_matrix
    logdet = float(np.sum(np.log(root.eigenvalues)))
    norm = -0.5 * (N * math.log(2 * math.pi) + logdet)
    cuts = [[b.value for b in breakpoints if b.axis == i] for i in range(N)]
    graded = [any(b.singular for b in breakpoints if b.axis == i) for i in range(N)]
    uniform = 4
    prev = None
    while True:
        tmpls = [_template(uniform, graded[i], budget.grading_levels, budget.panel_order)
                 for i in range(N)]
        K = int(np.prod([len(t[0]) * (len(cuts[i]) + 1) for i, t in enumerate(tmpls)]))
        if K > budget.max_nodes:
            if prev is None:
                raise QuadratureError("windowed rule too large")
            return QuadResult(prev[0], np.full(M, prev[1]), prev[2], TENSOR)
        vals = np.empty(M)
        mag = np.empty(M)
        for sl in _chunked_rows(M, K, N):
            m = means[sl]
            axes = [_axis_rule(m[:, i] - WINDOW_HALF_WIDTH * sd[i],
                               m[:, i] + WINDOW_HALF_WIDTH * sd[i], cuts[i], tmpls[i])
                    for i in range(N)]
            pts, wts = _tensor_rows(axes)
            y = pts - m[:, None, :]
            z = y @ invsqrt
            dens = np.exp(norm - 0.5 * np.sum(z * z, axis=-1))
            v = g(pts, y) * wts * dens
            vals[sl] = np.sum(v, axis=1)
            mag[sl] = np.sum(np.abs(v), axis=1)
        if prev is not None:
            ok, delta = _settled(vals, prev[0], mag, budget.quad_tol)
            if ok:
                return QuadResult(vals, np.abs(vals - prev[0]), K, TENSOR)
            prev = (vals, delta, K)
        else:
            prev = (vals, math.inf, K)
        uniform *= 2


def _tensor_rows(axes) -> tuple[Array, Array]:
    M = axes[0][0].shape[0]
    if len(axes) == 1:
        return axes[0][0][:, :, None], axes[0][1]
    nodes = [a[0] for a in axes]
    weights = [a[1] for a in axes]
    N = len(axes)
    shape = [M] + [n.shape[1] for n in nodes]
    pts = np.empty(shape + [N])
    W = np.ones(shape)
    for i in range(N):
        view = [M] + [1] * N
        view[i + 1] = nodes[i].shape[1]
        pts[..., i] = nodes[i].reshape(view)
        W = W * weights[i].reshape(view)
    K = int(np.prod(shape[1:]))
    return pts.reshape(M, K, N), W.reshape(M, K)


# ---------------------------------------------------------------------------
# Monte Carlo


MC_CHUNK = 2**14


def monte_carlo(g, means: Array, root: PsdSqrt, count: int, seed: int, tag: int = 0,
                workers: int = 1) -> QuadResult:
    M, N = means.shape
    Z = standard_normals(seed, count, N, tag=tag, workers=workers)
    R = root.sqrt_factor
    s1 = np.zeros(M)
    s2 = np.zeros(M)
    for a in range(0, count, MC_CHUNK):
        Y = Z[a:a + MC_CHUNK] @ R.T
        for sl in _chunked_rows(M, len(Y), N):
            v = g(means[sl, None, :] + Y[None], Y[None])
            s1[sl] += v.sum(axis=1)
            s2[sl] += (v * v).sum(axis=1)
    mean = s1 / count
    var = np.maximum(s2 / count - mean**2, 0.0)
    err = np.sqrt(var / max(count - 1, 1))
    return QuadResult(mean, err, count, MONTE_CARLO)


# ---------------------------------------------------------------------------
# dispatcher


def choose_method(method: str, N: int, rank: int, smooth: bool, breakpoints) -> str:
    if method == MONTE_CARLO:
        return MONTE_CARLO
    window_ok = N <= WINDOW_MAX_DIM and rank == N
    if method == TENSOR:
        if smooth and N <= GH_MAX_DIM:
            return "hermite"
        if breakpoints and window_ok:
            return "window"
        if not smooth and not breakpoints and N <= GH_MAX_DIM:
            raise QuadratureError("non-smooth integrand without breakpoints: use monteCarlo")
        if N > GH_MAX_DIM:
            raise QuadratureError("tensor quadrature needs N <= 6")
        raise QuadratureError("windowed quadrature needs N <= 3 and a full-rank covariance")
    if method != "auto":
        raise QuadratureError(f"unknown method {method!r}")
    if smooth and N <= GH_MAX_DIM:
        return "hermite"
    if breakpoints and window_ok:
        return "window"
    return MONTE_CARLO


def expectation(g, means: Array, Q: Array, root: PsdSqrt, *, method: str = "auto",
                smooth: bool = True, breakpoints: Sequence[Breakpoint] = (),
                budget: Budget | None = None, seed: int = 0, tag: int = 0,
                variance_scale: float = 1.0, workers: int = 1) -> QuadResult:
    budget = budget or Budget()
    means = np.atleast_2d(np.asarray(means, dtype=float))
    N = means.shape[1]
    kind = choose_method(method, N, root.effective_rank, smooth, breakpoints)
    if kind == "hermite":
        return gauss_hermite(g, means, root, budget)
    if kind == "window":
        return windowed_rule(g, means, Q, root, breakpoints, budget)
    return monte_carlo(g, means, root, budget.mc_count(variance_scale), seed, tag, workers)
