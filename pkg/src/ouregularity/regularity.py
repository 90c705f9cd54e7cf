"""Multi-scale seminorm probing and blow-up exponent fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .gaussian import DegenerateBundle, smoothing_bundle
from .models import DiagonalModel, OperatorFamily

Array = np.ndarray

GROWTH_SLOPE = -0.1


class InsufficientModes(ValueError):
    pass


@dataclass
class ProbeSet:
    base_points: Array  # (P, N)
    directions: Array  # (D, N), unit norm
    magnitudes: Array  # (L,), strictly increasing

    def __post_init__(self):
        self.base_points = np.atleast_2d(np.asarray(self.base_points, dtype=float))
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        self.magnitudes = np.asarray(self.magnitudes, dtype=float)
        if np.any(np.diff(self.magnitudes) <= 0):
            raise ValueError("probe magnitudes must be strictly increasing")
        norms = np.linalg.norm(self.directions, axis=1)
        if np.any(np.abs(norms - 1) > 1e-12):
            raise ValueError("probe directions must have unit norm")

    @classmethod
    def seeded(cls, N: int, P: int = 16, D: int = 16, L: int = 12, delta_min: float = 1e-4,
               delta_max: float = 1e-1, radius: float = 2.0, seed: int = 0,
               extra_points: Optional[Sequence] = None) -> "ProbeSet":
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
        g = rng.standard_normal((P, N))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = radius * rng.random(P) ** (1.0 / N)
        base = g * r[:, None]
        if extra_points is not None and len(extra_points):
            base = np.concatenate([np.atleast_2d(np.asarray(extra_points, float)), base])
        d = rng.standard_normal((D, N))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return cls(base, d, np.logspace(math.log10(delta_min), math.log10(delta_max), L))

    def union(self, other: "ProbeSet") -> "ProbeSet":
        mags = np.union1d(self.magnitudes, other.magnitudes)
        return ProbeSet(np.concatenate([self.base_points, other.base_points]),
                        np.concatenate([self.directions, other.directions]), mags)

    def stencil_points(self, offsets: Sequence[int]) -> Array:
        """Array (P, D, L, len(offsets), N) of x_i + o * delta_l * e_j."""
        x = self.base_points[:, None, None, None, :]
        e = self.directions[None, :, None, None, :]
        d = self.magnitudes[None, None, :, None, None]
        o = np.asarray(offsets, dtype=float)[None, None, None, :, None]
        return x + o * d * e


@dataclass
class SeminormReport:
    kind: str  # "holder" or "zygmund"
    exponent: float
    magnitudes: Array
    per_scale_sup: Array
    global_estimate: float
    slope: float
    verdict: str

    def as_rows(self) -> list:
        return [[float(d), float(v)] for d, v in zip(self.magnitudes, self.per_scale_sup)]

    def summary(self) -> dict:
        return {"kind": self.kind, "exponent": self.exponent,
                "global_estimate": self.global_estimate, "slope": self.slope,
                "verdict": self.verdict}


def loglog_slope(x: Array, y: Array) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = y > 0
    if ok.sum() < 2:
        return 0.0
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def make_report(kind: str, exponent: float, magnitudes, per_scale) -> SeminormReport:
    per_scale = np.asarray(per_scale, float)
    slope = loglog_slope(magnitudes, per_scale)
    verdict = "growing" if slope < GROWTH_SLOPE else "bounded"
    return SeminormReport(kind, exponent, np.asarray(magnitudes, float), per_scale,
                          float(per_scale.max(initial=0.0)), slope, verdict)


def evaluate_unique(f: Callable[[Array], Array], pts: Array) -> Array:
    """f on an array of points (..., N), calling f once per distinct point."""
    shape = pts.shape[:-1]
    flat = pts.reshape(-1, pts.shape[-1])
    uniq, inv = np.unique(flat, axis=0, return_inverse=True)
    vals = np.asarray(f(uniq), dtype=float)
    return vals[inv.ravel()].reshape(shape)


def stencil_values(f, probes: ProbeSet, offsets=(0, 1, 2)) -> Array:
    """(P, D, L, len(offsets)) values; offset 0 is shared across scales."""
    return evaluate_unique(f, probes.stencil_points(offsets))


def holder_from_values(vals: Array, probes: ProbeSet, alpha: float) -> SeminormReport:
    diff = np.abs(vals[..., 1] - vals[..., 0])  # (P, D, L)
    sup = diff.max(axis=(0, 1)) / probes.magnitudes**alpha
    return make_report("holder", alpha, probes.magnitudes, sup)


def zygmund_from_values(vals: Array, probes: ProbeSet) -> SeminormReport:
    second = np.abs(vals[..., 2] - 2 * vals[..., 1] + vals[..., 0])
    sup = second.max(axis=(0, 1)) / probes.magnitudes
    return make_report("zygmund", 1.0, probes.magnitudes, sup)


def holder_seminorm(f, alpha: float, probes: ProbeSet) -> SeminormReport:
    """Per-scale sup of |f(x + delta e) - f(x)| / delta^alpha."""
    if not 0 < alpha <= 1:
        raise ValueError("Hoelder exponent must lie in (0, 1]")
    return holder_from_values(stencil_values(f, probes, (0, 1)), probes, alpha)


def zygmund_seminorm(f, probes: ProbeSet) -> SeminormReport:
    """Per-scale sup of |f(x + 2 delta e) - 2 f(x + delta e) + f(x)| / delta."""
    return zygmund_from_values(stencil_values(f, probes, (0, 1, 2)), probes)


def combine_reports(reports: Sequence[SeminormReport]) -> SeminormReport:
    """Pointwise sup over reports sharing the same magnitudes (e.g. over s)."""
    sup = np.max([r.per_scale_sup for r in reports], axis=0)
    r0 = reports[0]
    return make_report(r0.kind, r0.exponent, r0.magnitudes, sup)


# ---------------------------------------------------------------------------
# blow-up exponent


@dataclass
class ThetaFit:
    theta: float
    constant: float
    residual: float
    gaps: Array
    norms: Array

    def summary(self) -> dict:
        return {"theta_hat": self.theta, "C_hat": self.constant, "fit_residual": self.residual}


def default_time_pairs(model: OperatorFamily, count: int = 12, gap_min: float = 1e-4,
                       gap_max: float = 1e-1, anchor: Optional[float] = None) -> list:
    T = model.horizon
    gap_max = min(gap_max, 0.5 * T)
    s = 0.25 * T if anchor is None else anchor
    gaps = np.logspace(math.log10(gap_min), math.log10(gap_max), count)
    return [(s, min(T, s + g)) for g in gaps]


def _fit(gaps, norms) -> tuple[float, float, float]:
    X = np.log(gaps)
    Y = np.log(norms)
    A = np.vstack([np.ones_like(X), X]).T
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - Y) ** 2)))
    return -float(coef[1]), float(math.exp(coef[0])), resid


def estimate_theta(model: OperatorFamily, time_pairs: Sequence) -> ThetaFit:
    """Least-squares fit of log ||Lambda(t,s)|| = log C - theta log(t - s)."""
    pairs = [(float(s), float(t)) for s, t in time_pairs]
    gaps = np.array([t - s for s, t in pairs])
    if len(pairs) < 8:
        raise ValueError("need at least 8 time pairs")
    if gaps.max() / gaps.min() < 100 * (1 - 1e-9):
        raise ValueError("time pairs must span at least two decades of t - s")
    norms = []
    for s, t in pairs:
        b = smoothing_bundle(model, s, t)
        b.require_nondegenerate()
        norms.append(b.lambda_op_norm)
    norms = np.array(norms)
    theta, C, resid = _fit(gaps, norms)
    return ThetaFit(theta, C, resid, gaps, norms)


@dataclass
class OptimalityFit:
    theta_low: float
    constant: float
    theta_star: float
    certified: bool
    saturation: float  # N^a * delta_min
    saturated: bool
    gaps: Array
    minima: Array

    def summary(self) -> dict:
        return {"theta_low": self.theta_low, "c_hat": self.constant,
                "theta_star": self.theta_star, "certified": self.certified,
                "saturation": self.saturation, "saturated": self.saturated}


SATURATION_WINDOW = 0.1


def theta_optimality(model: DiagonalModel, time_pairs: Sequence, jitter: int = 5,
                     seed: int = 0, strict: bool = True) -> OptimalityFit:
    """Lower-envelope exponent: fit to minima of ||Lambda|| over jittered pairs.

    For each nominal gap the start time is moved across the horizon and the
    gap is perturbed by up to 5%; the minimum norm over these variants is fitted.
    """
    p = getattr(model, "params", {})
    if "a" not in p or "theta_star" not in p:
        raise ValueError("theta_optimality needs an Example-1 diagonal model")
    gaps = np.array(sorted(float(t - s) for s, t in time_pairs))
    saturation = model.dimension ** p["a"] * gaps.min()
    saturated = saturation >= SATURATION_WINDOW
    if strict and not saturated:
        raise InsufficientModes(
            f"N^a * min gap = {saturation:.3g} < {SATURATION_WINDOW}: the supremum over "
            "modes does not saturate; increase N or the smallest gap")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(11,)))
    T = model.horizon
    minima = []
    for g in gaps:
        vals = []
        for j in range(jitter):
            gg = g * (1 + 0.05 * (rng.random() - 0.5) * 2) if j else g
            s = (T - gg) * (j / max(jitter - 1, 1))
            s = min(max(s, 0.0), T - gg)
            vals.append(smoothing_bundle(model, s, s + gg).lambda_op_norm)
        minima.append(min(vals))
    minima = np.array(minima)
    theta, c, _ = _fit(gaps, minima)
    return OptimalityFit(theta, c, p["theta_star"], theta >= p["theta_star"] - 0.1,
                         saturation, saturated, gaps, minima)
