"""P_{s,t} phi and its derivatives by Gaussian integration by parts.

All estimators accept one state ``x`` of shape (N,) or a batch (M, N); the
returned :class:`MCEstimate` carries scalar or (M,) values accordingly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .combinatorics import enumerate_partial_matchings, matching_count, max_pairs
from .fields import FieldFunction
from .gaussian import SmoothingBundle, smoothing_bundle
from .models import OperatorFamily, evolve
from .gaussian import _cached_integrals, GaussianLaw, psd_sqrt
from .quadrature import MONTE_CARLO, TENSOR, Budget, expectation

Array = np.ndarray

MAX_ORDER = 6


class TransitionError(ValueError):
    pass


@dataclass
class MCEstimate:
    value: object  # float or (M,) array
    stderr: object
    sample_count: int
    method: str
    seed: int = 0

    def __post_init__(self):
        if np.any(np.asarray(self.stderr) < 0):
            raise ValueError("stderr must be non-negative")

    def as_dict(self) -> dict:
        v, e = np.asarray(self.value), np.asarray(self.stderr)
        return {"value": v.tolist(), "stderr": e.tolist(), "sample_count": self.sample_count,
                "method": self.method, "seed": self.seed}


def _batch(x, N) -> tuple[Array, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[-1] != N:
        raise TransitionError(f"state has dimension {X.shape[-1]}, model has {N}")
    return X, single


def _pack(res, single: bool, seed: int) -> MCEstimate:
    v, e = res.values, res.errors
    if single:
        v, e = float(v[0]), float(e[0])
    return MCEstimate(v, e, res.count, res.method, seed)


def _directions(H, N) -> Array:
    H = np.asarray(H, dtype=float)
    if H.size == 0:
        return np.zeros((0, N))
    H = np.atleast_2d(H)
    if H.shape[1] != N:
        raise TransitionError("directions must be N-vectors")
    return H


def _transition_law(model, s, t):
    """(U, g, Q, root) for the pair (s, t) without requiring non-degeneracy."""
    U = evolve(model, s, t).entries
    Q, g = _cached_integrals(model, s, t)
    key = ("law", float(s), float(t))
    if key not in model.cache:
        model.cache[key] = GaussianLaw.from_covariance(Q)
    return U, g, model.cache[key]


# ---------------------------------------------------------------------------
# weights


def weight_I_n(bundle: SmoothingBundle, y, H) -> Array:
    """I_n(y)(h_1, ..., h_n): signed sum over partial matchings of the w_i and g_ij."""
    bundle.require_nondegenerate()
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n = len(H)
    if n < 1:
        raise TransitionError("I_n needs n >= 1")
    LH = H @ bundle.lam.T  # rows Lambda h_i
    w = bundle.law.root.pinv_sqrt(y) @ LH.T  # (..., n)
    G = LH @ LH.T
    return _wick_sum(w, G)


def _wick_sum(w: Array, G: Array) -> Array:
    n = G.shape[0]
    out = np.zeros(w.shape[:-1])
    for s in range(max_pairs(n) + 1):
        sign = -1.0 if s % 2 else 1.0
        for pairs, rest in enumerate_partial_matchings(n, s):
            c = sign
            for i, j in pairs:
                c *= G[i, j]
            if c == 0.0:
                continue
            term = np.full(w.shape[:-1], c)
            for i in rest:
                term = term * w[..., i]
            out = out + term
    return out


def _weight_fn(bundle: SmoothingBundle, H: Array):
    """Closure y -> I_n(y)(H) with Lambda h_i and the Gram matrix precomputed."""
    if len(H) == 0:
        return None
    bundle.require_nondegenerate()
    LH = H @ bundle.lam.T
    G = LH @ LH.T
    P = bundle.law.root.pinv_sqrt(LH).T  # Q^{-1/2} Lambda h_i as columns

    def weight(y):
        return _wick_sum(y @ P, G)

    return weight


def _variance_scale(bundle: SmoothingBundle, H: Array) -> float:
    if len(H) == 0:
        return 1.0
    return float(np.prod([np.sum((bundle.lam @ h) ** 2) for h in H]))


# ---------------------------------------------------------------------------
# operators


def apply_P(model: OperatorFamily, phi: FieldFunction, s: float, t: float, x,
            method: str = "auto", budget: Optional[Budget] = None, seed: int = 0,
            tag: int = 0, workers: int = 1) -> MCEstimate:
    """P_{s,t} phi(x) = E phi(m^x(t,s) + Y), Y ~ N(0, Q(t,s))."""
    model.check_times(s, t)
    X, single = _batch(x, model.dimension)
    if s == t:
        v = phi(X)
        return MCEstimate(float(v[0]) if single else v, 0.0 if single else np.zeros(len(X)),
                          0, TENSOR, seed)
    U, g, law = _transition_law(model, s, t)
    means = X @ U.T + g
    res = expectation(lambda pts, y: phi(pts), means, law.covariance, law.root,
                      method=method, smooth=phi.smooth, breakpoints=phi.breakpoints,
                      budget=budget, seed=seed, tag=tag, workers=workers)
    return _pack(res, single, seed)


def derivative_P(model: OperatorFamily, phi: FieldFunction, s: float, t: float, x, H,
                 method: str = "auto", budget: Optional[Budget] = None, seed: int = 0,
                 tag: int = 0, workers: int = 1) -> MCEstimate:
    """D^n P_{s,t} phi(x)(h_1..h_n) = E phi(m^x + Y) I_n(Y)(h_1..h_n), bounded phi."""
    return derivative_P_mixed(model, phi, s, t, x, np.zeros((0, model.dimension)), H,
                              method, budget, seed, tag, workers)


def derivative_P_transfer(model: OperatorFamily, phi: FieldFunction, s: float, t: float,
                          x, H, method: str = "auto", budget: Optional[Budget] = None,
                          seed: int = 0, tag: int = 0, workers: int = 1) -> MCEstimate:
    """P_{s,t}[D^k phi(.)(U h_1, ..., U h_k)](x); valid at s = t."""
    model.check_times(s, t)
    H = _directions(H, model.dimension)
    k = len(H)
    if k > phi.max_derivative or (k and phi.derivative is None):
        raise TransitionError(f"{phi.label} has no analytic derivative of order {k}")
    X, single = _batch(x, model.dimension)
    if s == t:
        v = phi.directional(k, X, H)
        return MCEstimate(float(v[0]) if single else v, 0.0 if single else np.zeros(len(X)),
                          0, TENSOR, seed)
    U, g, law = _transition_law(model, s, t)
    UH = H @ U.T
    means = X @ U.T + g
    res = expectation(lambda pts, y: phi.directional(k, pts, UH), means, law.covariance,
                      law.root, method=method, smooth=phi.smooth,
                      breakpoints=phi.breakpoints, budget=budget, seed=seed, tag=tag,
                      workers=workers)
    return _pack(res, single, seed)


def derivative_P_mixed(model: OperatorFamily, phi: FieldFunction, s: float, t: float, x,
                       H_transfer, H_weight, method: str = "auto",
                       budget: Optional[Budget] = None, seed: int = 0, tag: int = 0,
                       workers: int = 1) -> MCEstimate:
    """E D^k phi(m^x + Y)(U h_1..U h_k) I_n(Y)(h_{k+1}..h_{k+n})."""
    model.check_times(s, t)
    N = model.dimension
    Ht = _directions(H_transfer, N)
    Hw = _directions(H_weight, N)
    k, n = len(Ht), len(Hw)
    if n == 0:
        return derivative_P_transfer(model, phi, s, t, x, Ht, method, budget, seed, tag,
                                     workers)
    if n > MAX_ORDER:
        raise TransitionError(f"weight order capped at {MAX_ORDER}")
    if not s < t:
        raise TransitionError("derivative weights need s < t (no smoothing at s = t)")
    if k and (phi.derivative is None or k > phi.max_derivative):
        raise TransitionError(f"{phi.label} has no analytic derivative of order {k}")
    bundle = smoothing_bundle(model, s, t)
    bundle.require_nondegenerate()
    X, single = _batch(x, N)
    weight = _weight_fn(bundle, Hw)
    UH = Ht @ bundle.U.T
    means = X @ bundle.U.T + bundle.offset
    # E I_n = 0, so the value at the mean is a free control variate
    if k:
        def g(pts, y):
            base = phi.directional(k, pts[:, :1] - y[:, :1], UH)
            return (phi.directional(k, pts, UH) - base) * weight(y)
    else:
        def g(pts, y):
            return (phi(pts) - phi(pts[:, :1] - y[:, :1])) * weight(y)
    res = expectation(g, means, bundle.law.covariance, bundle.law.root, method=method,
                      smooth=phi.smooth, breakpoints=phi.breakpoints, budget=budget,
                      seed=seed, tag=tag, variance_scale=_variance_scale(bundle, Hw),
                      workers=workers)
    return _pack(res, single, seed)


# ---------------------------------------------------------------------------
# finite-difference oracles


def finite_difference_P(model, phi, s, t, x, H, step: float = 1e-3, method="auto",
                        budget=None, seed=0) -> MCEstimate:
    """Central differences of apply_P in the directions H (shared seed).

    The mixed derivative of order n uses the 2^n-point tensor stencil; the
    error estimate is the Richardson difference against step/2 plus the
    propagated sampling error.
    """
    X, single = _batch(x, model.dimension)
    H = _directions(H, model.dimension)

    def stencil(eps):
        n = len(H)
        signs = np.array(np.meshgrid(*([[-1.0, 1.0]] * n), indexing="ij")).reshape(n, -1).T
        pts = [X + eps * (sg @ H) for sg in signs]
        coef = np.prod(signs, axis=1) / (2 * eps) ** n
        allx = np.concatenate(pts, axis=0)
        est = apply_P(model, phi, s, t, allx, method, budget, seed)
        vals = np.asarray(est.value).reshape(len(signs), len(X))
        errs = np.asarray(est.stderr).reshape(len(signs), len(X))
        return coef @ vals, np.sqrt((coef**2) @ errs**2), est

    v1, e1, est = stencil(step)
    v2, e2, _ = stencil(step / 2)
    rich = (4 * v2 - v1) / 3
    err = np.abs(v2 - v1) + e2
    if single:
        rich, err = float(rich[0]), float(err[0])
    return MCEstimate(rich, err, est.sample_count, est.method, seed)
