"""Euler-Maruyama simulation of dX = (A X + f) dt + B dW as an independent oracle."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .fields import FieldFunction
from .gaussian import covariance, mean
from .models import OperatorFamily
from .rng import BLOCK, block_generator, map_blocks
from .transition import apply_P

Array = np.ndarray

Z_THRESHOLD = 4.0
# the Richardson estimate 2|E_dt - E_dt/2| of the Euler bias is exact only to
# leading order; the allowance carries 50% slack for the O(dt^2) remainder
BIAS_SLACK = 1.5
MAGIC = b"OUEN"
HEADER = struct.Struct("<4sIIQdddQ")  # magic, version, N, paths, dt, s, t, seed


class SimulationError(ValueError):
    pass


@dataclass
class PathEnsemble:
    s: float
    t: float
    dt: float
    path_count: int
    terminal_states: Array  # (paths, N)
    seed: int
    x: Optional[Array] = None
    refined_states: Optional[Array] = None  # same noise, step dt/2
    tag: int = 0

    def __post_init__(self):
        if self.terminal_states.shape[0] != self.path_count:
            raise SimulationError("terminal state rows must equal the path count")


def step_count(s: float, t: float, dt: float) -> int:
    if not dt > 0:
        raise SimulationError("dt must be positive")
    n = int(round((t - s) / dt))
    if n < 1 or abs(n * dt - (t - s)) > 1e-12 * max(1.0, t - s):
        raise SimulationError(f"dt={dt} does not divide t - s = {t - s}")
    return n


def _coefficients(model, s, dt, n):
    times = s + dt * np.arange(2 * n) / 2.0
    A = np.array([model.drift(tau) for tau in times])
    B = np.array([model.diffusion(tau) for tau in times])
    f = np.array([model.forcing(tau) for tau in times])
    return A, B, f


def simulate(model: OperatorFamily, x, s: float, t: float, dt: float, path_count: int,
             seed: int, workers: int = 1, coupled: bool = False, tag: int = 0) -> PathEnsemble:
    """Euler-Maruyama from X_s = x; with ``coupled`` also the dt/2 scheme on the same noise."""
    if path_count < 1:
        raise SimulationError("path count must be positive")
    model.check_times(s, t)
    n = step_count(s, t, dt)
    N = model.dimension
    x = np.asarray(x, dtype=float).reshape(N)
    A, B, f = _coefficients(model, s, dt, n)
    h = dt / 2.0
    sq, sqh = math.sqrt(dt), math.sqrt(h)
    nblocks = -(-path_count // BLOCK)

    def run(j):
        rows = min(BLOCK, path_count - j * BLOCK)
        gen = block_generator(seed, tag, j)
        X = np.tile(x, (rows, 1))
        Xf = X.copy() if coupled else None
        for k in range(n):
            xi1 = gen.standard_normal((rows, N))
            xi2 = gen.standard_normal((rows, N))
            i0 = 2 * k
            if coupled:
                Xf = Xf + (Xf @ A[i0].T + f[i0]) * h + sqh * (xi1 @ B[i0].T)
                Xf = Xf + (Xf @ A[i0 + 1].T + f[i0 + 1]) * h + sqh * (xi2 @ B[i0 + 1].T)
            xi = (xi1 + xi2) / math.sqrt(2.0)
            X = X + (X @ A[i0].T + f[i0]) * dt + sq * (xi @ B[i0].T)
        return X, Xf

    parts = map_blocks(run, nblocks, workers)
    X = np.concatenate([p[0] for p in parts])
    Xf = np.concatenate([p[1] for p in parts]) if coupled else None
    return PathEnsemble(s, t, dt, path_count, X, seed, x, Xf, tag)


# ---------------------------------------------------------------------------
# checks


def _moments(X: Array):
    n = len(X)
    mu = X.mean(axis=0)
    C = X - mu
    cov = C.T @ C / max(n - 1, 1)
    se_mu = np.sqrt(np.diag(cov) / n)
    prod = C[:, :, None] * C[:, None, :]
    se_cov = prod.std(axis=0) / math.sqrt(n)
    return mu, cov, se_mu, se_cov


def with_refinement(ens: PathEnsemble, model: OperatorFamily) -> PathEnsemble:
    """The ensemble with its dt/2 partner, re-simulated on the same noise if missing."""
    if ens.refined_states is not None:
        return ens
    if ens.x is None:
        raise SimulationError("ensemble has no start state; cannot rerun at dt/2")
    return simulate(model, ens.x, ens.s, ens.t, ens.dt, ens.path_count, ens.seed,
                    coupled=True, tag=ens.tag)


def _bias(a, b):
    return BIAS_SLACK * 2 * np.abs(a - b)


def _zscore(diff, se, allowance):
    se = np.maximum(se, 1e-12 * np.maximum(1.0, np.abs(diff)))
    excess = np.maximum(np.abs(diff) - allowance, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, excess / np.where(se > 0, se, 1.0),
                     np.where(excess > 0, np.inf, 0.0))
    return z


@dataclass
class LawReport:
    mean_z: Array
    cov_z: Array
    mean_diff: Array
    cov_diff: Array
    mean_allowance: Array
    cov_allowance: Array
    passed: bool
    max_z: float

    def summary(self) -> dict:
        return {"max_z": self.max_z, "passed": self.passed,
                "mean_z": self.mean_z.tolist(), "cov_z": self.cov_z.tolist()}


def law_check(ens: PathEnsemble, model: OperatorFamily, threshold: float = Z_THRESHOLD) -> LawReport:
    """z-scores of empirical mean and covariance against N(m^x(t,s), Q(t,s)).

    The Euler bias allowance comes from a dt/2 run on the same Brownian
    increments (first-order weak error), simulated here if not supplied.
    """
    ens = with_refinement(ens, model)
    m = mean(model, ens.x, ens.s, ens.t)
    Q = covariance(model, ens.s, ens.t).covariance
    mu, cov, se_mu, se_cov = _moments(ens.terminal_states)
    mu_f, cov_f, _, _ = _moments(ens.refined_states)
    a_mu, a_cov = _bias(mu, mu_f), _bias(cov, cov_f)
    zm = _zscore(mu - m, se_mu, a_mu)
    zc = _zscore(cov - Q, se_cov, a_cov)
    mz = float(max(zm.max(initial=0), zc.max(initial=0)))
    return LawReport(zm, zc, mu - m, cov - Q, a_mu, a_cov, mz <= threshold, mz)


@dataclass
class WeakComparison:
    simulated: float
    simulated_stderr: float
    analytic: float
    analytic_stderr: float
    bias_allowance: float
    passed: bool

    def summary(self) -> dict:
        return dict(vars(self))


def weak_check(ens: PathEnsemble, phi: FieldFunction, model: OperatorFamily, s=None, t=None,
               x=None, method: str = "auto", threshold: float = Z_THRESHOLD) -> WeakComparison:
    """Ensemble average of phi(X_t) against P_{s,t} phi(x)."""
    s = ens.s if s is None else s
    t = ens.t if t is None else t
    x = ens.x if x is None else np.asarray(x, float)
    if abs(s - ens.s) > 1e-12 or abs(t - ens.t) > 1e-12 or not np.allclose(x, ens.x):
        raise SimulationError("ensemble does not match (s, t, x)")
    ens = with_refinement(ens, model)
    v = phi(ens.terminal_states)
    sim, se = float(v.mean()), float(v.std() / math.sqrt(len(v)))
    bias = float(_bias(sim, float(phi(ens.refined_states).mean())))
    ref = apply_P(model, phi, s, t, x, method=method, seed=ens.seed + 1)
    diff = abs(sim - ref.value)
    ok = diff <= threshold * math.hypot(se, ref.stderr) + bias
    return WeakComparison(sim, se, float(ref.value), float(ref.stderr), bias, bool(ok))


def weak_error_ratio(model: OperatorFamily, x, s: float, t: float, dt: float,
                     path_count: int, seed: int) -> dict:
    """|E X_t(dt) - m| / |E X_t(dt/2) - m| from one coupled run."""
    ens = simulate(model, x, s, t, dt, path_count, seed, coupled=True)
    m = mean(model, ens.x, s, t)
    e1 = np.abs(ens.terminal_states.mean(axis=0) - m)
    e2 = np.abs(ens.refined_states.mean(axis=0) - m)
    return {"error_dt": e1.tolist(), "error_half": e2.tolist(),
            "ratio": (e1 / e2).tolist()}


# ---------------------------------------------------------------------------
# persistence


def save_ensemble(path, ens: PathEnsemble) -> None:
    """Little-endian header followed by float64 rows of terminal states."""
    X = np.ascontiguousarray(ens.terminal_states, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, 1, X.shape[1], ens.path_count, ens.dt, ens.s, ens.t,
                             ens.seed))
        fh.write(X.tobytes())


def load_ensemble(path) -> PathEnsemble:
    data = Path(path).read_bytes()
    magic, version, N, paths, dt, s, t, seed = HEADER.unpack_from(data)
    if magic != MAGIC or version != 1:
        raise SimulationError("not an ensemble file")
    X = np.frombuffer(data, dtype="<f8", offset=HEADER.size).reshape(paths, N).copy()
    return PathEnsemble(s, t, dt, paths, X, seed)
