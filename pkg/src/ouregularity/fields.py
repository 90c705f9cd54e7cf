"""Scalar fields on state space with declared regularity and derivatives.

Evaluators are vectorised over leading axes: ``f(y)`` with ``y`` of shape
(..., N) returns shape (...).  ``directional(k, y, H)`` returns the k-th
derivative D^k f(y)(H[0], ..., H[k-1]) for a (k, N) array of directions.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

Array = np.ndarray

FIELD_CLASSES = ("Bb", "Calpha", "Ck", "Zk")


class FieldError(ValueError):
    pass


@dataclass(frozen=True)
class Breakpoint:
    """Location on one coordinate axis where the field is not smooth."""

    axis: int
    value: float
    singular: bool = False  # unbounded derivatives nearby (Hoelder cusp)


@dataclass
class FieldFunction:
    label: str
    evaluator: Callable[[Array], Array]
    declared_class: str = "Bb"
    order: float = 0.0  # alpha for Calpha, k for Ck / Zk
    declared_seminorm: Optional[float] = None
    derivative: Optional[Callable[[int, Array, Array], Array]] = None
    max_derivative: int = 0
    sup_bound: Optional[float] = None
    breakpoints: tuple = ()
    smooth: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.declared_class not in FIELD_CLASSES:
            raise FieldError(f"unknown class {self.declared_class!r}")

    def __call__(self, y) -> Array:
        return self.evaluator(np.asarray(y, dtype=float))

    def directional(self, k: int, y, H) -> Array:
        y = np.asarray(y, dtype=float)
        H = np.atleast_2d(np.asarray(H, dtype=float)) if k else np.zeros((0, y.shape[-1]))
        if k == 0:
            return self(y)
        if self.derivative is None or k > self.max_derivative:
            raise FieldError(f"{self.label}: no analytic derivative of order {k}")
        if len(H) != k:
            raise FieldError("need exactly k directions")
        return self.derivative(k, y, H)

    def scaled(self, c: float) -> "FieldFunction":
        """c * f with matching metadata."""
        d = self.derivative
        return FieldFunction(
            f"{c}*{self.label}", lambda y: c * self.evaluator(y), self.declared_class,
            self.order,
            None if self.declared_seminorm is None else abs(c) * self.declared_seminorm,
            None if d is None else (lambda k, y, H: c * d(k, y, H)),
            self.max_derivative,
            None if self.sup_bound is None else abs(c) * self.sup_bound,
            self.breakpoints, self.smooth, dict(self.params, scale=c),
        )

    def describe(self) -> dict:
        return {"label": self.label, "class": self.declared_class, "order": self.order,
                "declared_seminorm": self.declared_seminorm, "sup_bound": self.sup_bound}


def _vec(c, N=None) -> Array:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if N is not None and c.shape != (N,):
        raise FieldError(f"expected a vector of length {N}")
    return c


def _axis_of(c: Array) -> Optional[int]:
    nz = np.flatnonzero(c)
    return int(nz[0]) if len(nz) == 1 else None


def const(value: float = 1.0) -> FieldFunction:
    value = float(value)
    return FieldFunction(
        "const", lambda y: np.full(y.shape[:-1], value), "Ck", math.inf, 0.0,
        lambda k, y, H: np.zeros(y.shape[:-1]), 99, abs(value), smooth=True,
        params={"value": value},
    )


def linear(c, b: float = 0.0) -> FieldFunction:
    c = _vec(c)

    def deriv(k, y, H):
        if k == 1:
            return np.full(y.shape[:-1], float(H[0] @ c))
        return np.zeros(y.shape[:-1])

    return FieldFunction("linear", lambda y: y @ c + b, "Ck", math.inf,
                         float(np.linalg.norm(c)), deriv, 99, None, smooth=True,
                         params={"c": c.tolist(), "b": b})


def quadratic(M, c=None) -> FieldFunction:
    """y^T M y (+ <c, y>)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    S = 0.5 * (M + M.T)
    c = np.zeros(len(M)) if c is None else _vec(c, len(M))

    def f(y):
        return np.einsum("...i,ij,...j->...", y, S, y) + y @ c

    def deriv(k, y, H):
        if k == 1:
            return 2.0 * (y @ S) @ H[0] + H[0] @ c
        if k == 2:
            return np.full(y.shape[:-1], 2.0 * float(H[0] @ S @ H[1]))
        return np.zeros(y.shape[:-1])

    return FieldFunction("quadratic", f, "Ck", math.inf, None, deriv, 99, None,
                         smooth=True, params={"M": M.tolist(), "c": c.tolist()})


def polynomial(terms: dict) -> FieldFunction:
    """Sum of coef * prod_i y_i^{e_i} for ``{(e_1, ..., e_N): coef}``."""
    items = [(tuple(int(e) for e in exps), float(cf)) for exps, cf in terms.items()]
    if not items:
        raise FieldError("empty polynomial")
    N = len(items[0][0])
    if any(len(e) != N for e, _ in items):
        raise FieldError("inconsistent exponent lengths")
    degree = max(sum(e) for e, _ in items)

    def eval_terms(y, terms_):
        out = np.zeros(y.shape[:-1])
        for exps, cf in terms_:
            if cf == 0:
                continue
            mon = np.full(y.shape[:-1], cf)
            for i, e in enumerate(exps):
                if e:
                    mon = mon * y[..., i] ** e
            out = out + mon
        return out

    def partial(idx):
        res = []
        for exps, cf in items:
            e = list(exps)
            c = cf
            for i in idx:
                c *= e[i]
                e[i] -= 1
                if c == 0:
                    break
            if c != 0:
                res.append((tuple(e), c))
        return res

    cache: dict = {}

    def deriv(k, y, H):
        out = np.zeros(y.shape[:-1])
        if k > degree:
            return out
        for idx in itertools.product(range(N), repeat=k):
            coef = float(np.prod([H[j, i] for j, i in enumerate(idx)]))
            if coef == 0:
                continue
            key = tuple(sorted(idx))
            if key not in cache:
                cache[key] = partial(key)
            out = out + coef * eval_terms(y, cache[key])
        return out

    return FieldFunction("polynomial", lambda y: eval_terms(y, items), "Ck", math.inf,
                         None, deriv, 99, None, smooth=True,
                         params={"terms": {str(k): v for k, v in items}, "degree": degree})


def cosine(c, phase: float = 0.0, label: str = "cosine") -> FieldFunction:
    """cos(<c, y> + phase)."""
    c = _vec(c)

    def deriv(k, y, H):
        z = y @ c + phase + 0.5 * math.pi * k
        return np.cos(z) * float(np.prod(H @ c))

    nc = float(np.linalg.norm(c))
    return FieldFunction(label, lambda y: np.cos(y @ c + phase), "Ck", math.inf,
                         nc, deriv, 99, 1.0, smooth=True,
                         params={"c": c.tolist(), "phase": phase})


def sine(c) -> FieldFunction:
    return cosine(c, -0.5 * math.pi, label="sine")


def step(c, a: float = 0.0) -> FieldFunction:
    """Indicator of <c, y> > a."""
    c = _vec(c)
    ax = _axis_of(c)
    bps = (Breakpoint(ax, a / c[ax]),) if ax is not None else ()
    return FieldFunction("step", lambda y: (y @ c > a).astype(float), "Bb", 0.0, None,
                         None, 0, 1.0, bps, params={"c": c.tolist(), "a": a})


def checker(a: float = 0.0, b: float = 0.0) -> FieldFunction:
    """sign(y_1 - a) sign(y_2 - b): bounded, discontinuous across two lines."""

    def f(y):
        return np.sign(y[..., 0] - a) * np.sign(y[..., 1] - b)

    return FieldFunction("checker", f, "Bb", 0.0, None, None, 0, 1.0,
                         (Breakpoint(0, a), Breakpoint(1, b)), params={"a": a, "b": b})


def holder_cusp(alpha: float, x0=0.0) -> FieldFunction:
    """min(1, |y - x0|^alpha), Hoelder of order alpha with seminorm 1."""
    if not 0 < alpha <= 1:
        raise FieldError("cusp exponent must lie in (0, 1]")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))

    def f(y):
        r = np.sqrt(np.sum((y - x0) ** 2, axis=-1)) if len(x0) > 1 or y.shape[-1] > 1 \
            else np.abs(y[..., 0] - x0[0])
        return np.minimum(1.0, r**alpha)

    bps = ()
    if len(x0) == 1:
        bps = (Breakpoint(0, x0[0], True), Breakpoint(0, x0[0] - 1.0),
               Breakpoint(0, x0[0] + 1.0))
    return FieldFunction("holderCusp", f, "Calpha", alpha, 1.0, None, 0, 1.0, bps,
                         params={"alpha": alpha, "x0": x0.tolist()})


def absolute(c) -> FieldFunction:
    """|<c, y>|, Lipschitz with constant |c|."""
    c = _vec(c)
    ax = _axis_of(c)
    bps = (Breakpoint(ax, 0.0),) if ax is not None else ()

    def deriv(k, y, H):
        if k == 1:
            return np.sign(y @ c) * float(H[0] @ c)
        return np.zeros(y.shape[:-1])

    return FieldFunction("absolute", lambda y: np.abs(y @ c), "Calpha", 1.0,
                         float(np.linalg.norm(c)), deriv, 1, None, bps,
                         params={"c": c.tolist()})


def gaussian_bump(c, width: float = 1.0) -> FieldFunction:
    """exp(-|y - c|^2 / (2 width^2)); smooth, bounded, with closed-form derivatives."""
    c = _vec(c)
    w2 = width**2

    def f(y):
        return np.exp(-np.sum((y - c) ** 2, axis=-1) / (2 * w2))

    def deriv(k, y, H):
        # D^k exp(-|z|^2/2) = Hermite-type tensor; expand via probabilists' recursion
        z = (y - c) / width
        Hs = H / width
        val = f(y)
        return val * _hermite_directional(k, z, Hs)

    return FieldFunction("gaussianBump", f, "Ck", math.inf, None, deriv, 6, 1.0,
                         smooth=True, params={"c": c.tolist(), "width": width})


def _hermite_directional(k: int, z: Array, H: Array) -> Array:
    """(-1)^k He_k-type polynomial: D^k e^{-|z|^2/2} / e^{-|z|^2/2} along H."""
    from .combinatorics import enumerate_partial_matchings, max_pairs
    a = z @ H.T  # (..., k)
    G = H @ H.T
    out = np.zeros(z.shape[:-1])
    for s in range(max_pairs(k) + 1):
        for pairs, rest in enumerate_partial_matchings(k, s):
            term = np.full(z.shape[:-1], (-1.0) ** s)
            for i, j in pairs:
                term = term * G[i, j]
            for i in rest:
                term = term * (-a[..., i])
            out = out + term
    return out


def normal_cdf(x):
    return special.ndtr(x)


FIELD_BUILDERS = {
    "absolute": lambda N, p: absolute(p.get("c", [1.0] + [0.0] * (N - 1))),
    "checker": lambda N, p: checker(p.get("a", 0.0), p.get("b", 0.0)),
    "const": lambda N, p: const(p.get("value", 1.0)),
    "cosine": lambda N, p: cosine(p.get("c", [1.0] * N), p.get("phase", 0.0)),
    "gaussianBump": lambda N, p: gaussian_bump(p.get("c", [0.0] * N), p.get("width", 1.0)),
    "holderCusp": lambda N, p: holder_cusp(p.get("alpha", 0.5), p.get("x0", [0.0] * N)),
    "linear": lambda N, p: linear(p.get("c", [1.0] * N), p.get("b", 0.0)),
    "polynomial": lambda N, p: polynomial({tuple(e): cf for e, cf in p["terms"]}),
    "quadratic": lambda N, p: quadratic(p.get("M", np.eye(N).tolist()), p.get("c")),
    "sine": lambda N, p: sine(p.get("c", [1.0] * N)),
    "step": lambda N, p: step(p.get("c", [1.0] + [0.0] * (N - 1)), p.get("a", 0.0)),
}

FIELD_PARAMS = {
    "absolute": {"c"}, "checker": {"a", "b"}, "const": {"value"}, "cosine": {"c", "phase"},
    "gaussianBump": {"c", "width"}, "holderCusp": {"alpha", "x0"}, "linear": {"c", "b"},
    "polynomial": {"terms"}, "quadratic": {"M", "c"}, "sine": {"c"}, "step": {"c", "a"},
}


def _check_keys(desc: dict, allowed: set, what: str):
    extra = sorted(set(desc) - {"name", "params"})
    if extra:
        raise FieldError(f"{what}: unknown key(s) {', '.join(extra)}")
    bad = sorted(set(desc.get("params", {})) - allowed)
    if bad:
        raise FieldError(f"{what} {desc.get('name')!r}: unknown parameter(s) {', '.join(bad)}")


def field_from_description(desc, N: int) -> FieldFunction:
    """``"cosine"`` or ``{"name": "cosine", "params": {...}}``."""
    if isinstance(desc, str):
        desc = {"name": desc}
    if not isinstance(desc, dict):
        raise FieldError("field description must be a name or an object")
    name = desc.get("name")
    if name not in FIELD_BUILDERS:
        raise FieldError(f"unknown field {name!r}")
    _check_keys(desc, FIELD_PARAMS[name], "field")
    return FIELD_BUILDERS[name](N, dict(desc.get("params", {})))


# ---------------------------------------------------------------------------
# source terms psi(sigma, y)


@dataclass
class SourceTerm:
    """psi(sigma, y) = modulation(sigma) * field(y) + offset(sigma)."""

    label: str
    field: FieldFunction
    modulation: Callable[[float], float] = lambda s: 1.0
    declared_class: str = "C0"  # "C0" or "C0alpha"
    alpha: float = 0.0
    declared_holder_bound: Optional[float] = None
    params: dict = field(default_factory=dict)

    def at(self, sigma: float) -> FieldFunction:
        m = float(self.modulation(sigma))
        return self.field if m == 1.0 else self.field.scaled(m)

    def __call__(self, sigma: float, y) -> Array:
        return self.modulation(sigma) * self.field(y)

    @property
    def is_zero(self) -> bool:
        return self.params.get("zero", False)

    def sup_bound(self, horizon: float) -> Optional[float]:
        if self.field.sup_bound is None:
            return None
        ms = max(abs(self.modulation(s)) for s in np.linspace(0, horizon, 257))
        return ms * self.field.sup_bound


def stationary_source(f: FieldFunction, label: Optional[str] = None) -> SourceTerm:
    cls = "C0alpha" if f.declared_class == "Calpha" else "C0"
    bound = f.declared_seminorm if cls == "C0alpha" else None
    alpha = f.order if cls == "C0alpha" else 0.0
    return SourceTerm(label or f.label, f, declared_class=cls, alpha=alpha,
                      declared_holder_bound=bound)


def zero_source(N: int) -> SourceTerm:
    return SourceTerm("zero", const(0.0), params={"zero": True})


def modulated_source(f: FieldFunction, amplitude: float = 0.5,
                     frequency: float = 1.0) -> SourceTerm:
    """(1 + amplitude * sin(frequency sigma)) f(y)."""
    src = stationary_source(f, f"modulated({f.label})")
    src.modulation = lambda s: 1.0 + amplitude * math.sin(frequency * s)
    if src.declared_holder_bound is not None:
        src.declared_holder_bound *= 1.0 + abs(amplitude)
    src.params = {"amplitude": amplitude, "frequency": frequency}
    return src


SOURCE_BUILDERS = {
    "modulated": lambda N, p: modulated_source(
        field_from_description(p.get("field", "cosine"), N),
        p.get("amplitude", 0.5), p.get("frequency", 1.0)),
    "stationary": lambda N, p: stationary_source(
        field_from_description(p.get("field", "cosine"), N)),
    "zero": lambda N, p: zero_source(N),
}

SOURCE_PARAMS = {"modulated": {"field", "amplitude", "frequency"}, "stationary": {"field"},
                 "zero": set()}


def source_from_description(desc, N: int) -> SourceTerm:
    """A source name, or a field description used as a stationary source."""
    if isinstance(desc, str):
        desc = {"name": desc}
    if not isinstance(desc, dict):
        raise FieldError("source description must be a name or an object")
    name = desc.get("name")
    if name in SOURCE_BUILDERS:
        _check_keys(desc, SOURCE_PARAMS[name], "source")
        return SOURCE_BUILDERS[name](N, dict(desc.get("params", {})))
    return stationary_source(field_from_description(desc, N))
