"""Gaussian laws of the OU transition: covariance, mean, square roots, Lambda."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .models import DiagonalModel, OperatorFamily, backward_propagators, evolve
from .rng import standard_normals

Array = np.ndarray

CLIP_THRESHOLD = 1e-12
RANGE_TOLERANCE = 1e-6


class GaussianError(ValueError):
    pass


class DegenerateBundle(GaussianError):
    pass


# ---------------------------------------------------------------------------
# square roots


@dataclass
class PsdSqrt:
    sqrt_factor: Array
    eigenvalues: Array  # after clipping
    eigenvectors: Array
    raw_eigenvalues: Array
    retained: Array  # boolean mask

    def pinv_sqrt(self, y: Array) -> Array:
        """Apply Q^{-1/2} (pseudo-inverse) to the trailing axis of ``y``."""
        V = self.eigenvectors
        inv = np.zeros_like(self.eigenvalues)
        inv[self.retained] = 1.0 / np.sqrt(self.eigenvalues[self.retained])
        return ((np.asarray(y) @ V) * inv) @ V.T

    @property
    def pinv_sqrt_matrix(self) -> Array:
        return self.pinv_sqrt(np.eye(len(self.eigenvalues)))

    @property
    def effective_rank(self) -> int:
        return int(self.retained.sum())


def psd_sqrt(Q: Array, clip_threshold: float = CLIP_THRESHOLD) -> PsdSqrt:
    """Symmetric square root with relative eigenvalue clipping."""
    Q = np.asarray(Q, dtype=float)
    scale = max(np.linalg.norm(Q, 2), 1e-300)
    asym = np.linalg.norm(Q - Q.T, 2)
    if asym > 1e-10 * scale:
        raise GaussianError(f"matrix is not symmetric (defect {asym:.2e})")
    Qs = 0.5 * (Q + Q.T)
    lam, V = np.linalg.eigh(Qs)
    tr = float(np.trace(Qs))
    if lam.size and lam.min() < -1e-8 * max(abs(tr), 1e-300):
        raise GaussianError(f"significantly negative spectrum: {lam.min():.3e}")
    top = lam.max() if lam.size else 0.0
    retained = lam > clip_threshold * top if top > 0 else np.zeros_like(lam, dtype=bool)
    clipped = np.where(retained, lam, 0.0)
    R = (V * np.sqrt(clipped)) @ V.T
    return PsdSqrt(R, clipped, V, lam, retained)


# ---------------------------------------------------------------------------
# laws and bundles


@dataclass
class GaussianLaw:
    mean: Array
    covariance: Array
    root: PsdSqrt
    clip_threshold: float = CLIP_THRESHOLD

    @property
    def sqrt_factor(self) -> Array:
        return self.root.sqrt_factor

    @property
    def effective_rank(self) -> int:
        return self.root.effective_rank

    @property
    def trace(self) -> float:
        return float(np.trace(self.covariance))

    @classmethod
    def from_covariance(cls, Q: Array, mean: Optional[Array] = None,
                        clip_threshold: float = CLIP_THRESHOLD) -> "GaussianLaw":
        Q = np.asarray(Q, float)
        m = np.zeros(Q.shape[0]) if mean is None else np.asarray(mean, float)
        return cls(m, 0.5 * (Q + Q.T), psd_sqrt(Q, clip_threshold), clip_threshold)


@dataclass
class SmoothingBundle:
    s: float
    t: float
    U: Array
    law: GaussianLaw
    offset: Array  # g(t, s)
    lam: Array
    lambda_op_norm: float
    range_residual: float
    degenerate: bool

    def require_nondegenerate(self) -> None:
        if self.degenerate:
            raise DegenerateBundle(
                f"range condition fails at (s,t)=({self.s},{self.t}): "
                f"residual {self.range_residual:.2e}"
            )

    def mean(self, x: Array) -> Array:
        """m^x(t, s) for x of shape (..., N)."""
        return np.asarray(x, float) @ self.U.T + self.offset

    def to_dict(self) -> dict:
        return {
            "s": self.s, "t": self.t, "U": self.U.tolist(),
            "Q": self.law.covariance.tolist(), "g": self.offset.tolist(),
            "Lambda": self.lam.tolist(), "lambda_op_norm": self.lambda_op_norm,
            "range_residual": self.range_residual, "degenerate": self.degenerate,
            "clip_threshold": self.law.clip_threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SmoothingBundle":
        law = GaussianLaw.from_covariance(np.array(d["Q"]), clip_threshold=d["clip_threshold"])
        return cls(d["s"], d["t"], np.array(d["U"]), law, np.array(d["g"]),
                   np.array(d["Lambda"]), d["lambda_op_norm"], d["range_residual"],
                   d["degenerate"])


# ---------------------------------------------------------------------------
# time quadrature for Q(t,s) and g(t,s)

_GL_CACHE: dict[int, tuple[Array, Array]] = {}


def gauss_legendre(n: int) -> tuple[Array, Array]:
    """Nodes and weights on [0, 1]."""
    if n not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (0.5 * (x + 1.0), 0.5 * w)
    return _GL_CACHE[n]


def _panel_edges(s: float, t: float, depth: int, sub: int) -> Array:
    """Panels graded geometrically toward t, each split into ``sub`` pieces."""
    L = t - s
    coarse = [s] + [t - L * 2.0**-j for j in range(1, depth + 1)] + [t]
    edges = []
    for a, b in zip(coarse[:-1], coarse[1:]):
        edges.extend(np.linspace(a, b, sub + 1)[:-1])
    edges.append(t)
    return np.array(edges)


def _time_rule(s, t, depth, sub, order=8):
    edges = _panel_edges(s, t, depth, sub)
    x, w = gauss_legendre(order)
    h = np.diff(edges)
    nodes = (edges[:-1, None] + h[:, None] * x[None, :]).ravel()
    weights = (h[:, None] * w[None, :]).ravel()
    return nodes, weights


def _grading_depth(model: OperatorFamily, L: float) -> int:
    key = ("rate_bound",)
    if key not in model.cache:
        if isinstance(model, DiagonalModel):
            rates = np.abs(np.array([model.alpha(t) for t in model.time_grid(65)]))
            model.cache[key] = float(rates.max())
        else:
            model.cache[key] = model.drift_bound(65)
    rate = model.cache[key]
    return max(2, int(math.ceil(math.log2(max(1.0, 2.0 * L * rate)))) + 6)


def _integrands(model: OperatorFamily, t: float, nodes: Array):
    """(U(t,r) B B* U(t,r)*, U(t,r) f(r)) at each node, diagonal models as vectors."""
    if isinstance(model, DiagonalModel):
        rates = np.array([model.integrated_rates(r, t) for r in nodes])
        betas = np.array([model.beta(r) for r in nodes])
        cov = np.exp(2.0 * rates) * betas**2
        if model.has_forcing():
            fs = np.array([model.forcing(r) for r in nodes])
            drift = np.exp(rates) * fs
        else:
            drift = None
        return cov, drift
    Us = backward_propagators(model, t, nodes)
    Bs = np.array([model.diffusion(r) for r in nodes])
    UB = Us @ Bs
    cov = UB @ np.transpose(UB, (0, 2, 1))
    if model.has_forcing():
        fs = np.array([model.forcing(r) for r in nodes])
        drift = np.einsum("kij,kj->ki", Us, fs)
    else:
        drift = None
    return cov, drift


def _time_integrals(model: OperatorFamily, s: float, t: float, rtol: float = 1e-10,
                    max_sub: int = 256):
    """Composite Gauss-Legendre for Q(t,s) and g(t,s), refined until Tr Q settles."""
    N = model.dimension
    if s == t:
        return np.zeros((N, N)), np.zeros(N)
    depth = _grading_depth(model, t - s)
    sub = 1
    prev = None
    while True:
        nodes, weights = _time_rule(s, t, depth, sub)
        cov, drift = _integrands(model, t, nodes)
        Q = np.tensordot(weights, cov, axes=1)
        g = np.zeros(N) if drift is None else weights @ drift
        # diagonal models: every mode must settle, not just the trace
        tr = Q.copy() if Q.ndim == 1 else np.array([np.trace(Q)])
        if prev is not None:
            ptr, pg = prev
            ok_tr = bool(np.all(np.abs(tr - ptr) <= rtol * np.abs(tr) + 1e-300))
            ok_g = np.max(np.abs(g - pg), initial=0.0) <= rtol * max(1.0, np.max(np.abs(g), initial=0.0))
            if ok_tr and ok_g:
                break
        if sub >= max_sub:
            raise GaussianError("time quadrature did not converge")
        prev = (tr, g)
        sub *= 2
    if Q.ndim == 1:
        Q = np.diag(Q)
    return Q, g


def covariance(model: OperatorFamily, s: float, t: float) -> GaussianLaw:
    """Q(t,s) = int_s^t U(t,r) B(r) B(r)* U(t,r)* dr as a centred law."""
    if s > t:
        raise GaussianError("covariance needs s <= t")
    model.check_times(s, t)
    Q, _ = _cached_integrals(model, s, t)
    return GaussianLaw.from_covariance(Q)


def _cached_integrals(model, s, t):
    key = ("integrals", float(s), float(t))
    if key not in model.cache:
        model.cache[key] = _time_integrals(model, s, t)
    return model.cache[key]


def mean(model: OperatorFamily, x, s: float, t: float) -> Array:
    """m^x(t,s) = U(t,s) x + int_s^t U(t,r) f(r) dr."""
    if s > t:
        raise GaussianError("mean needs s <= t")
    U = evolve(model, s, t).entries
    _, g = _cached_integrals(model, s, t)
    return U @ np.asarray(x, float) + g


def diagonal_covariance_oracle(model: DiagonalModel, s: float, t: float) -> Array:
    """Per-mode t_k(t,s) by scipy's adaptive quadrature (independent check)."""
    out = np.empty(model.dimension)
    for k in range(model.dimension):
        def integrand(r, k=k):
            rate, _ = integrate.quad(lambda tau: model.alpha(tau)[k], r, t, epsabs=1e-14)
            return math.exp(2 * rate) * model.beta(r)[k] ** 2
        val, _ = integrate.quad(integrand, s, t, epsabs=1e-14, epsrel=1e-12, limit=500)
        out[k] = val
    return out


def smoothing_bundle(model: OperatorFamily, s: float, t: float,
                     range_tol: float = RANGE_TOLERANCE,
                     clip_threshold: float = CLIP_THRESHOLD) -> SmoothingBundle:
    """U(t,s), Q(t,s) and Lambda(t,s) = Q^{-1/2} U(t,s) for s < t."""
    if not s < t:
        raise GaussianError("smoothing bundle needs s < t")
    key = ("bundle", float(s), float(t), range_tol, clip_threshold)
    if key in model.cache:
        return model.cache[key]
    U = evolve(model, s, t).entries
    Q, g = _cached_integrals(model, s, t)
    law = GaussianLaw.from_covariance(Q, clip_threshold=clip_threshold)
    lam = law.root.pinv_sqrt(U.T).T  # columns: Q^{-1/2} U e_j
    recon = law.sqrt_factor @ lam
    range_residual = float(np.linalg.norm(recon - U) / max(np.linalg.norm(U), 1e-300))
    norm = float(np.linalg.svd(lam, compute_uv=False)[0])
    bundle = SmoothingBundle(s, t, U, law, g, lam, norm, range_residual,
                             range_residual > range_tol)
    if len(model.cache) < 20000:
        model.cache[key] = bundle
    return bundle


def sample(law: GaussianLaw, count: int, seed: int, tag: int = 0, workers: int = 1) -> Array:
    """Draws m + R z with z from the counter-based normal stream."""
    z = standard_normals(seed, count, len(law.mean), tag=tag, workers=workers)
    return law.mean + z @ law.sqrt_factor.T


def cm_weight(bundle: SmoothingBundle, h: Array, eps: float, y: Array) -> Array:
    """Radon-Nikodym density of N(eps U h, Q) with respect to N(0, Q) at y."""
    bundle.require_nondegenerate()
    lh = bundle.lam @ np.asarray(h, float)
    proj = bundle.law.root.pinv_sqrt(y) @ lh
    return np.exp(-0.5 * eps**2 * float(lh @ lh) + eps * proj)


def trace_truncation_curve(model: OperatorFamily, s: float, t: float,
                           truncations) -> list[tuple[int, float]]:
    """Traces of leading principal submatrices of Q(t,s)."""
    truncations = [int(n) for n in truncations]
    if any(b <= a for a, b in zip(truncations, truncations[1:])):
        raise GaussianError("truncations must be increasing")
    if truncations and truncations[-1] > model.dimension:
        raise GaussianError("truncation exceeds the model dimension")
    Q = covariance(model, s, t).covariance
    d = np.diag(Q)
    return [(n, float(d[:n].sum())) for n in truncations]
