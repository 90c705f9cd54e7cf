"""Time-dependent linear operator families and their evolution operators.

A model is the coefficient triple (A(t), B(t), f(t)) of the linear SDE

    dX = (A(t) X + f(t)) dt + B(t) dW

on R^N.  Two concrete flavours exist: :class:`DiagonalModel`, where A and B
act mode by mode (this covers scalar models and the spectral Example-1
family), and :class:`DenseModel` with full matrices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

Array = np.ndarray


class ModelError(ValueError):
    pass


class IntegratorError(RuntimeError):
    def __init__(self, message: str, defect: float):
        super().__init__(f"{message} (achieved cocycle defect {defect:.3e})")
        self.defect = defect


class OperatorFamily:
    """Base class: evaluators for A(t), B(t), f(t) on an N-dimensional space."""

    structure = "dense"

    def __init__(self, dimension: int, horizon: float, name: str = ""):
        if dimension < 1:
            raise ModelError("dimension must be a positive integer")
        if not horizon > 0:
            raise ModelError("horizon must be positive")
        self.dimension = int(dimension)
        self.horizon = float(horizon)
        self.name = name
        self.cache: dict = {}

    def drift(self, t: float) -> Array:
        raise NotImplementedError

    def diffusion(self, t: float) -> Array:
        raise NotImplementedError

    def forcing(self, t: float) -> Array:
        raise NotImplementedError

    def closed_form_U(self, s: float, t: float) -> Optional[Array]:
        return None

    def has_forcing(self) -> bool:
        return True

    def check_times(self, s: float, t: float) -> None:
        if not (0.0 <= s <= t <= self.horizon * (1 + 1e-12)):
            raise ModelError(
                f"times must satisfy 0 <= s <= t <= T={self.horizon}, got s={s}, t={t}"
            )

    def time_grid(self, count: int = 257) -> Array:
        return np.linspace(0.0, self.horizon, count)

    def diffusion_bound(self, count: int = 257) -> float:
        """sup_t ||B(t)|| over a fine grid."""
        return max(np.linalg.norm(self.diffusion(t), 2) for t in self.time_grid(count))

    def forcing_bound(self, count: int = 257) -> float:
        return max(np.max(np.abs(self.forcing(t))) for t in self.time_grid(count))

    def drift_bound(self, count: int = 257) -> float:
        return max(np.linalg.norm(self.drift(t), 2) for t in self.time_grid(count))

    def describe(self) -> dict:
        return {"type": self.structure, "N": self.dimension, "T": self.horizon, "name": self.name}


class DiagonalModel(OperatorFamily):
    """A(t) = diag(alpha(t)), B(t) = diag(beta(t)).

    ``alpha`` and ``beta`` map a time to an (N,) array.  ``alpha_integral``,
    when given, returns the vector of exact integrals of alpha over [s, t];
    otherwise the integrals are computed by adaptive quadrature.
    """

    structure = "diagonal"

    def __init__(
        self,
        dimension: int,
        horizon: float,
        alpha: Callable[[float], Array],
        beta: Callable[[float], Array],
        forcing: Optional[Callable[[float], Array]] = None,
        alpha_integral: Optional[Callable[[float, float], Array]] = None,
        name: str = "",
        params: Optional[dict] = None,
        scalar: bool = False,
    ):
        super().__init__(dimension, horizon, name)
        self.alpha = alpha
        self.beta = beta
        self._forcing = forcing
        self.alpha_integral = alpha_integral
        self.params = dict(params or {})
        if scalar:
            if dimension != 1:
                raise ModelError("scalar models have N = 1")
            self.structure = "scalar"

    def drift(self, t):
        return np.diag(np.asarray(self.alpha(t), dtype=float))

    def diffusion(self, t):
        return np.diag(np.asarray(self.beta(t), dtype=float))

    def forcing(self, t):
        if self._forcing is None:
            return np.zeros(self.dimension)
        return np.asarray(self._forcing(t), dtype=float)

    def has_forcing(self):
        return self._forcing is not None

    def integrated_rates(self, s: float, t: float) -> Array:
        """Vector of int_s^t alpha_k(tau) dtau."""
        if s == t:
            return np.zeros(self.dimension)
        if self.alpha_integral is not None:
            return np.asarray(self.alpha_integral(s, t), dtype=float)
        val, _ = integrate.quad_vec(lambda tau: np.asarray(self.alpha(tau), float), s, t,
                                    epsabs=1e-12, epsrel=1e-12)
        return val

    def closed_form_U(self, s, t):
        return np.diag(np.exp(self.integrated_rates(s, t)))

    # Example-1 style diagnostics
    def mode_extremes(self, count: int = 513) -> tuple[Array, Array]:
        """(mu_k, lambda_k) = (min_t alpha_k, max_t alpha_k) over a fine grid."""
        vals = np.array([self.alpha(t) for t in self.time_grid(count)])
        return vals.min(axis=0), vals.max(axis=0)

    def trace_proxy(self, count: int = 513) -> float:
        """sum_k ||beta_k||_inf^2 / |lambda_k| over retained modes."""
        _, lam = self.mode_extremes(count)
        bsup = np.max(np.abs([self.beta(t) for t in self.time_grid(count)]), axis=0)
        if np.any(lam >= 0):
            return math.inf
        return float(np.sum(bsup**2 / np.abs(lam)))

    @property
    def theta_star(self) -> Optional[float]:
        return self.params.get("theta_star")


class DenseModel(OperatorFamily):
    structure = "dense"

    def __init__(self, dimension, horizon, drift, diffusion, forcing=None,
                 closed_form_U=None, name=""):
        super().__init__(dimension, horizon, name)
        self._drift = drift
        self._diffusion = diffusion
        self._forcing = forcing
        self._closed_U = closed_form_U

    def drift(self, t):
        return np.asarray(self._drift(t), dtype=float)

    def diffusion(self, t):
        return np.asarray(self._diffusion(t), dtype=float)

    def forcing(self, t):
        if self._forcing is None:
            return np.zeros(self.dimension)
        return np.asarray(self._forcing(t), dtype=float)

    def has_forcing(self):
        return self._forcing is not None

    def closed_form_U(self, s, t):
        if self._closed_U is None:
            return None
        return np.asarray(self._closed_U(s, t), dtype=float)


# ---------------------------------------------------------------------------
# evolution operator


@dataclass
class EvolutionMatrix:
    s: float
    t: float
    entries: Array
    integrator_tolerance: float
    defect: float = 0.0
    steps: int = 0


def _rk4(model: OperatorFamily, s: float, t: float, n: int) -> Array:
    N = model.dimension
    U = np.eye(N)
    h = (t - s) / n
    for i in range(n):
        tau = s + i * h
        A0 = model.drift(tau)
        Am = model.drift(tau + 0.5 * h)
        A1 = model.drift(tau + h)
        k1 = A0 @ U
        k2 = Am @ (U + 0.5 * h * k1)
        k3 = Am @ (U + 0.5 * h * k2)
        k4 = A1 @ (U + h * k3)
        U = U + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return U


def evolve(model: OperatorFamily, s: float, t: float, tol: float = 1e-10,
           max_steps: int = 2**16) -> EvolutionMatrix:
    """U(t, s), the solution of dU/dt = A(t) U with U(s, s) = I."""
    model.check_times(s, t)
    N = model.dimension
    if s == t:
        return EvolutionMatrix(s, t, np.eye(N), tol)
    closed = model.closed_form_U(s, t)
    if closed is not None:
        return EvolutionMatrix(s, t, closed, tol)
    r = 0.5 * (s + t)
    n = 8
    while True:
        full = _rk4(model, s, t, n)
        composed = _rk4(model, r, t, n) @ _rk4(model, s, r, n)
        defect = float(np.linalg.norm(full - composed, 2))
        if defect <= tol:
            return EvolutionMatrix(s, t, composed, tol, defect, 2 * n)
        n *= 2
        if n > max_steps:
            raise IntegratorError("RK4 step floor reached", defect)


def step_size_for(model: OperatorFamily, tol: float = 1e-10) -> float:
    """Largest RK4 step that meets ``tol`` on the whole horizon (cached)."""
    key = ("rk4_step", tol)
    if key not in model.cache:
        ev = evolve(model, 0.0, model.horizon, tol)
        model.cache[key] = model.horizon / max(ev.steps, 1) if ev.steps else model.horizon / 64
    return model.cache[key]


def backward_propagators(model: OperatorFamily, t: float, nodes: Array,
                         tol: float = 1e-10) -> Array:
    """U(t, r) for every r in ``nodes`` (all <= t), by one backward RK4 sweep.

    V(r) = U(t, r) solves dV/dr = -V A(r), V(t) = I.
    """
    nodes = np.asarray(nodes, dtype=float)
    N = model.dimension
    out = np.empty((len(nodes), N, N))
    if model.closed_form_U(0.0, 0.0) is not None:
        for i, r in enumerate(nodes):
            out[i] = model.closed_form_U(r, t)
        return out
    hmax = step_size_for(model, tol)
    order = np.argsort(-nodes)
    V = np.eye(N)
    cur = t

    def f(r, V):
        return -V @ model.drift(r)

    for idx in order:
        target = nodes[idx]
        span = cur - target
        if span > 0:
            n = max(1, int(math.ceil(span / hmax)))
            h = -span / n
            for _ in range(n):
                k1 = f(cur, V)
                k2 = f(cur + 0.5 * h, V + 0.5 * h * k1)
                k3 = f(cur + 0.5 * h, V + 0.5 * h * k2)
                k4 = f(cur + h, V + h * k3)
                V = V + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                cur = cur + h
            cur = target
        out[idx] = V
    return out


def cocycle_defect(model: OperatorFamily, s: float, r: float, t: float) -> float:
    U_ts = evolve(model, s, t).entries
    U_tr = evolve(model, r, t).entries
    U_rs = evolve(model, s, r).entries
    return float(np.linalg.norm(U_ts - U_tr @ U_rs, 2))


def evolution_bound(model: OperatorFamily, count: int = 9) -> float:
    """M_emp: max ||U(t,s)|| over an (s, t) grid."""
    grid = np.linspace(0.0, model.horizon, count)
    best = 1.0
    for i, s in enumerate(grid):
        for t in grid[i:]:
            best = max(best, float(np.linalg.norm(evolve(model, s, t).entries, 2)))
    return best


# ---------------------------------------------------------------------------
# built-in models


@dataclass
class Example1Params:
    N: int = 64
    a: float = 2.0
    b: float = 1.0
    c1: float = 1.0
    c2: float = 0.5
    eps: float = 0.25
    omega: float = 1.0
    T: float = 1.0

    def validate(self) -> None:
        if self.N < 1:
            raise ModelError("N must be >= 1")
        if not self.a > 0:
            raise ModelError("a must be > 0")
        if self.b < 0:
            raise ModelError("b must be >= 0")
        if not (self.c1 >= self.c2 > 0):
            raise ModelError("need c1 >= c2 > 0")
        if not (0 <= self.eps < 1):
            raise ModelError("modulation amplitude must lie in [0, 1)")
        if self.omega < 0:
            raise ModelError("modulation frequency must be >= 0")
        if self.c1 - self.eps < self.c2:
            raise ModelError("c1 - eps must dominate c2 so that lambda_k <= -c2 k^a")


def make_example1(params: Example1Params | None = None, **kw) -> DiagonalModel:
    """Diagonal model alpha_k = -k^a (c1 + eps sin wt), beta_k = k^-b (1 + eps cos wt)."""
    p = params or Example1Params(**kw)
    p.validate()
    k = np.arange(1, p.N + 1, dtype=float)
    ka = k**p.a
    kb = k ** (-p.b)
    c1, eps, om = p.c1, p.eps, p.omega

    def alpha(t):
        return -ka * (c1 + eps * math.sin(om * t))

    def beta(t):
        return kb * (1.0 + eps * math.cos(om * t))

    def alpha_integral(s, t):
        if om == 0:
            g = (c1 + 0.0) * (t - s)
        else:
            g = c1 * (t - s) + (eps / om) * (math.cos(om * s) - math.cos(om * t))
        return -ka * g

    params = dict(vars(p))
    params["theta_star"] = 0.5 + p.b / p.a
    return DiagonalModel(p.N, p.T, alpha, beta, None, alpha_integral,
                         name="example1", params=params)


def make_scalar(A: float = -1.0, B: float = 1.0, f: float = 0.0, T: float = 1.0,
                name: str = "scalarOU") -> DiagonalModel:
    """Constant-coefficient scalar OU model dX = (A X + f) dt + B dW."""
    a_vec = np.array([float(A)])
    b_vec = np.array([float(B)])
    forcing = None if f == 0 else (lambda t: np.array([float(f)]))
    return DiagonalModel(1, T, lambda t: a_vec, lambda t: b_vec, forcing,
                         lambda s, t: a_vec * (t - s), name=name,
                         params={"A": A, "B": B, "f": f}, scalar=True)


def make_heat(N: int = 1, T: float = 1.0) -> DiagonalModel:
    """A = 0, B = sqrt(2) I: the generator is the Laplacian."""
    zero = np.zeros(N)
    b_vec = np.full(N, math.sqrt(2.0))
    return DiagonalModel(N, T, lambda t: zero, lambda t: b_vec, None,
                         lambda s, t: np.zeros(N), name="heat" if N == 1 else f"heat{N}d",
                         params={"theta_star": 0.5}, scalar=(N == 1))


def make_dense_example(T: float = 1.0) -> DenseModel:
    """Two-dimensional rotating, damped model with time-dependent coefficients."""

    def drift(t):
        return np.array([[-1.0, 0.5 * math.cos(t)], [-0.5 * math.cos(t), -0.7]])

    def diffusion(t):
        return np.array([[1.0, 0.0], [0.3 * math.sin(t), 0.8]])

    def forcing(t):
        return np.array([0.2, -0.1 * math.sin(t)])

    return DenseModel(2, T, drift, diffusion, forcing, name="dense2")


@dataclass
class TabulatedCoefficients:
    """Coefficient tables sampled on a time grid, linearly interpolated."""

    times: Array
    A: Array
    B: Array
    f: Optional[Array] = None

    def interp(self, table: Array, t: float) -> Array:
        times = self.times
        j = int(np.clip(np.searchsorted(times, t) - 1, 0, len(times) - 2))
        w = (t - times[j]) / (times[j + 1] - times[j])
        w = min(max(w, 0.0), 1.0)
        return (1 - w) * table[j] + w * table[j + 1]


def dense_from_tables(N: int, T: float, times, A, B, f=None, name="dense") -> DenseModel:
    tab = TabulatedCoefficients(np.asarray(times, float), np.asarray(A, float),
                                np.asarray(B, float), None if f is None else np.asarray(f, float))
    if tab.A.shape != (len(tab.times), N, N) or tab.B.shape != (len(tab.times), N, N):
        raise ModelError("coefficient tables must have shape (len(times), N, N)")
    if tab.f is not None and tab.f.shape != (len(tab.times), N):
        raise ModelError("forcing table must have shape (len(times), N)")
    if tab.times[0] > 0 or tab.times[-1] < T:
        raise ModelError("time grid must cover [0, T]")
    fo = None if tab.f is None else (lambda t: tab.interp(tab.f, t))
    return DenseModel(N, T, lambda t: tab.interp(tab.A, t), lambda t: tab.interp(tab.B, t),
                      fo, name=name)


BUILTIN_MODELS = {
    "dense2": lambda: make_dense_example(),
    "example1": lambda: make_example1(),
    "heat": lambda: make_heat(1),
    "heat2d": lambda: make_heat(2),
    "scalarOU": lambda: make_scalar(),
}


def model_from_description(desc: dict) -> OperatorFamily:
    """Build a model from its JSON description (see README for the schema)."""
    if "builtin" in desc:
        name = desc["builtin"]
        if name not in BUILTIN_MODELS:
            raise ModelError(f"unknown builtin model {name!r}")
        if name == "example1" and "params" in desc:
            return make_example1(Example1Params(**desc["params"]))
        return BUILTIN_MODELS[name]()
    kind = desc.get("type")
    if "N" not in desc:
        raise ModelError("model description requires N")
    N = int(desc["N"])
    T = float(desc.get("T", 1.0))
    params = dict(desc.get("params", {}))
    if kind == "scalar":
        if N != 1:
            raise ModelError("scalar models have N = 1")
        return make_scalar(params.get("A", -1.0), params.get("B", 1.0), params.get("f", 0.0), T)
    if kind == "diagonal":
        if params.get("heat"):
            return make_heat(N, T)
        return make_example1(Example1Params(N=N, T=T, **params))
    if kind == "dense":
        tables = desc.get("tables")
        if tables is None:
            raise ModelError("dense models need coefficient tables")
        return dense_from_tables(N, T, tables["times"], tables["A"], tables["B"],
                                 tables.get("f"))
    raise ModelError(f"unknown model type {kind!r}")
