"""Model and payoff definitions: polynomial tables and named presets.

A vector field is declared as a table of monomials per output component,
``[[coef, [p_1, ..., p_d]], ...]``; gradients and Hessians are derived from
the table analytically, so declared derivatives are exact by construction
(they still go through the mandatory finite-difference probe).  Arbitrary
callbacks remain a library-level API via VectorFieldSet itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .malliavin import Payoff, VectorFieldSet


def _mono(x, powers):
    out = np.ones(x.shape[:-1])
    for k, p in enumerate(powers):
        if p:
            out = out * x[..., k] ** p
    return out


def _poly_value(x, comp_terms):
    d = x.shape[-1]
    out = np.zeros(x.shape[:-1] + (len(comp_terms),))
    for a, terms in enumerate(comp_terms):
        for coef, powers in terms:
            out[..., a] += coef * _mono(x, powers)
    return out


def _poly_grad(x, comp_terms):
    d = x.shape[-1]
    out = np.zeros(x.shape[:-1] + (len(comp_terms), d))
    for a, terms in enumerate(comp_terms):
        for coef, powers in terms:
            for b, pb in enumerate(powers):
                if pb:
                    dp = list(powers)
                    dp[b] -= 1
                    out[..., a, b] += coef * pb * _mono(x, dp)
    return out


def _poly_hess(x, comp_terms):
    d = x.shape[-1]
    out = np.zeros(x.shape[:-1] + (len(comp_terms), d, d))
    for a, terms in enumerate(comp_terms):
        for coef, powers in terms:
            for b, pb in enumerate(powers):
                if not pb:
                    continue
                for c, pc in enumerate(powers):
                    if b == c:
                        if pb >= 2:
                            dp = list(powers)
                            dp[b] -= 2
                            out[..., a, b, b] += coef * pb * (pb - 1) * _mono(x, dp)
                    elif pc:
                        dp = list(powers)
                        dp[b] -= 1
                        dp[c] -= 1
                        out[..., a, b, c] += coef * pb * pc * _mono(x, dp)
    return out


def _normalize_table(table, d):
    """One field's table: list over components of [coef, powers] pairs."""
    norm = []
    for comp in table:
        terms = []
        for entry in comp:
            coef, powers = entry
            powers = [int(p) for p in powers]
            if len(powers) != d or any(p < 0 for p in powers):
                raise ConfigurationError(f"bad monomial powers {powers} for d={d}")
            terms.append((float(coef), powers))
        norm.append(terms)
    if len(norm) != d:
        raise ConfigurationError(f"field table has {len(norm)} components, d={d}")
    return norm


def polynomial_fields(d, m, tables, bound=np.inf, lipschitz=np.inf, probe_scale=1.0):
    """VectorFieldSet from m+1 monomial tables (index 0 is the drift X_0)."""
    if len(tables) != m + 1:
        raise ConfigurationError(f"need m+1={m + 1} field tables, got {len(tables)}")
    norm = [_normalize_table(t, d) for t in tables]

    def make(fn, table):
        return lambda x, _t=table: fn(np.asarray(x, dtype=np.float64), _t)

    return VectorFieldSet(
        d=d,
        m=m,
        X=[make(_poly_value, t) for t in norm],
        grad_X=[make(_poly_grad, t) for t in norm],
        hess_X=[make(_poly_hess, t) for t in norm],
        bound=bound,
        lipschitz=lipschitz,
        probe_scale=probe_scale,
    )


@dataclass
class Model:
    """A vector-field model plus its initial state and explicit config form."""

    name: str
    vf: VectorFieldSet
    x0: np.ndarray
    config: dict = None

    def __post_init__(self):
        if self.config is None:
            self.config = {"name": self.name, "d": self.vf.d, "m": self.vf.m}


def _zero_table(d):
    return [[] for _ in range(d)]


def _table_config(name, d, m, tables, x0):
    return {
        "name": name,
        "d": d,
        "m": m,
        "x0": [float(v) for v in np.atleast_1d(x0)],
        "fields": [
            [[[float(c), [int(p) for p in pw]] for c, pw in comp] for comp in table]
            for table in tables
        ],
    }


def _table_model(name, d, m, tables, x0) -> Model:
    vf = polynomial_fields(d, m, tables)
    x0 = np.asarray(x0, dtype=np.float64)
    return Model(name, vf, x0, _table_config(name, d, m, tables, x0))


def linear_1d() -> Model:
    """d = m = 1, X_1(x) = x, X_0 = 0, x0 = 1: the closed-form test model."""
    return _table_model("linear1d", 1, 1, [_zero_table(1), [[(1.0, [1])]]], [1.0])


def zero_model(d=1, m=1) -> Model:
    return _table_model("zero", d, m, [_zero_table(d) for _ in range(m + 1)], np.zeros(d))


def additive_1d() -> Model:
    """d = m = 1, X_1 = 1, X_0 = 0: the state is x0 plus the driving line."""
    return _table_model("ou", 1, 1, [_zero_table(1), [[(1.0, [0])]]], [0.0])


MODEL_PRESETS = {
    "linear1d": linear_1d,
    "zero": zero_model,
    "ou": additive_1d,
}


def model_from_config(cfg) -> Model:
    """Build a model from a preset name or an explicit polynomial spec."""
    if isinstance(cfg, str):
        cfg = {"preset": cfg}
    if "preset" in cfg:
        name = cfg["preset"]
        if name not in MODEL_PRESETS:
            raise ConfigurationError(
                f"unknown model preset {name!r}; known: {sorted(MODEL_PRESETS)}"
            )
        model = MODEL_PRESETS[name]()
        if "x0" in cfg:
            model.x0 = np.asarray(cfg["x0"], dtype=np.float64)
            model.config["x0"] = [float(v) for v in model.x0]
        return model
    try:
        d = int(cfg["d"])
        m = int(cfg["m"])
        tables = cfg["fields"]
        x0 = np.asarray(cfg.get("x0", np.zeros(d)), dtype=np.float64)
    except KeyError as exc:
        raise ConfigurationError(f"model config missing field {exc}") from exc
    if isinstance(tables, dict):
        tables = [tables[str(i)] for i in range(m + 1)]
    tables = [
        [[(float(c), [int(x) for x in pw]) for c, pw in comp] for comp in table]
        for table in tables
    ]
    return _table_model(cfg.get("name", "custom"), d, m, tables, x0)


def coordinate_payoff(j=0, d=1) -> Payoff:
    def f(x):
        return x[..., j]

    def grad(x):
        g = np.zeros_like(x)
        g[..., j] = 1.0
        return g

    def hess(x):
        return np.zeros(x.shape + (d,))

    return Payoff(f, grad, hess, bounded=False, name=f"coordinate[{j}]", d=d)


def square_payoff(j=0, d=1) -> Payoff:
    def f(x):
        return x[..., j] ** 2

    def grad(x):
        g = np.zeros_like(x)
        g[..., j] = 2.0 * x[..., j]
        return g

    def hess(x):
        h = np.zeros(x.shape + (d,))
        h[..., j, j] = 2.0
        return h

    return Payoff(f, grad, hess, bounded=False, name=f"square[{j}]", d=d)


def constant_payoff(c=1.0, d=1) -> Payoff:
    def f(x):
        return np.full(x.shape[:-1], float(c))

    def grad(x):
        return np.zeros_like(x)

    def hess(x):
        return np.zeros(x.shape + (d,))

    return Payoff(f, grad, hess, bounded=True, name=f"constant[{c}]", d=d)


PAYOFF_PRESETS = {
    "coordinate": coordinate_payoff,
    "square": square_payoff,
    "constant": constant_payoff,
}


def payoff_from_config(cfg, d=1) -> Payoff:
    if isinstance(cfg, str):
        cfg = {"preset": cfg}
    name = cfg.get("preset")
    if name not in PAYOFF_PRESETS:
        raise ConfigurationError(
            f"unknown payoff preset {name!r}; known: {sorted(PAYOFF_PRESETS)}"
        )
    kwargs = {k: v for k, v in cfg.items() if k != "preset"}
    return PAYOFF_PRESETS[name](d=d, **kwargs)
