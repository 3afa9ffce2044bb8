"""State and linearization lines driven by OU rows, and the objects C, Gamma, R, L.

For each fixed t the state solves the Ito-form equation

    d_s x = X_i(x) d_s z^i + Xt0(x) ds,      Xt0 = X0 + (1/2) sum_i grad(X_i).X_i,

by explicit Euler with previsible evaluation; the derivative flow U uses the
matching corrected drift grad(Xt0), and U^{-1} follows its own linear
recursion (never a per-step matrix inversion).  Along a line the package
then forms

    C  = int U^{-1} X_i(x) (x) U^{-1} X_i(x) dr        (left endpoint)
    R  = - int U^{-1} X_i(x) o d z^i                   (midpoint weights)
    L  = U [ R + int U^{-1} {hess(X_i):Gamma} o dz^i
               + int U^{-1} {hess(X0):Gamma} dr
               + int U^{-1} grad(X_i).X_i dr ]
    Gamma = U C U^T   (exact, by construction)

with Gamma inside the L integrand frozen at the left endpoint.  All arrays
carry arbitrary leading batch axes; callbacks must broadcast over them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ModelError, NumericsError, ShapeError
from .lattice import Stream, normal_grid

_PROBE_POINTS = 8
_PROBE_H = 1e-4
_PROBE_RTOL = 1e-4


def _probe_points(d: int, scale: float, seed: int = 0) -> np.ndarray:
    z = normal_grid(seed, 0, Stream.PROBE, _PROBE_POINTS, 1, d)[:, 0, :]
    return scale * z


def _check_jacobian(fn, jac, x, h, name):
    d = x.shape[-1]
    for b in range(d):
        e = np.zeros(d)
        e[b] = h
        fd = (fn(x + e) - fn(x - e)) / (2 * h)
        declared = jac(x)[..., b]
        err = np.abs(fd - declared)
        tol = _PROBE_RTOL * np.maximum(1.0, np.abs(declared))
        if np.any(err > tol):
            raise ModelError(
                f"{name}: finite differences disagree with declared derivative "
                f"(max err {float(err.max()):.3e} in column {b})"
            )


def _cumsum0(terms: np.ndarray, node_axis: int) -> np.ndarray:
    """Exclusive partial sums: a zero slab prepended along node_axis."""
    out = np.cumsum(terms, axis=node_axis)
    pad = list(out.shape)
    pad[node_axis] = 1
    return np.concatenate([np.zeros(pad), out], axis=node_axis)


@dataclass
class VectorFieldSet:
    """Vector fields X_0..X_m with first and second derivative callbacks.

    X[i]: (..., d) -> (..., d); grad_X[i] -> (..., d, d) with [a, b] = d_b X^a;
    hess_X[i] -> (..., d, d, d) with [a, b, c] = d_b d_c X^a (symmetric in b, c).
    Probing against central differences at construction is mandatory: a wrong
    Hessian silently corrupts L.
    """

    d: int
    m: int
    X: list
    grad_X: list
    hess_X: list
    bound: float = np.inf
    lipschitz: float = np.inf
    probe_scale: float = 1.0

    def __post_init__(self):
        if len(self.X) != self.m + 1 or len(self.grad_X) != self.m + 1 or len(self.hess_X) != self.m + 1:
            raise ModelError(f"need m+1={self.m + 1} callbacks for X, grad_X, hess_X")
        pts = _probe_points(self.d, self.probe_scale)
        h = _PROBE_H * self.probe_scale
        for i in range(self.m + 1):
            _check_jacobian(self.X[i], self.grad_X[i], pts, h, f"X_{i}")
            _check_jacobian(self.grad_X[i], self.hess_X[i], pts, h, f"grad X_{i}")

    def diffusion(self, x) -> np.ndarray:
        """Stack X_1..X_m(x) as (..., d, m)."""
        return np.stack([self.X[i](x) for i in range(1, self.m + 1)], axis=-1)

    def diffusion_jac(self, x) -> np.ndarray:
        return np.stack([self.grad_X[i](x) for i in range(1, self.m + 1)], axis=-1)

    def ito_drift(self, x) -> np.ndarray:
        """Xt0 = X0 + (1/2) sum_i grad(X_i).X_i."""
        out = self.X[0](x)
        for i in range(1, self.m + 1):
            out = out + 0.5 * np.einsum("...ab,...b->...a", self.grad_X[i](x), self.X[i](x))
        return out

    def ito_drift_jac(self, x) -> np.ndarray:
        """Jacobian of Xt0: grad X0 + (1/2) sum_i (hess X_i : X_i + grad X_i grad X_i)."""
        out = self.grad_X[0](x)
        for i in range(1, self.m + 1):
            J = self.grad_X[i](x)
            out = out + 0.5 * (
                np.einsum("...abc,...c->...ab", self.hess_X[i](x), self.X[i](x))
                + np.einsum("...ac,...cb->...ab", J, J)
            )
        return out


@dataclass
class Payoff:
    """Test function with declared gradient and Hessian (probed on build)."""

    f: Callable
    grad_f: Callable
    hess_f: Callable
    bounded: bool = False
    name: str = "payoff"
    d: int = 1
    probe_scale: float = 1.0

    def __post_init__(self):
        pts = _probe_points(self.d, self.probe_scale)
        h = _PROBE_H * self.probe_scale
        _check_jacobian(
            lambda x: self.f(x)[..., None],
            lambda x: self.grad_f(x)[..., None, :],
            pts, h, self.name,
        )
        _check_jacobian(self.grad_f, self.hess_f, pts, h, f"grad {self.name}")


@dataclass
class MalliavinState:
    """Per-line trajectories over the s-index (arrays share leading batch axes)."""

    x: np.ndarray       # (..., n+1, d)
    U: np.ndarray       # (..., n+1, d, d)
    U_inv: np.ndarray   # (..., n+1, d, d)
    C: np.ndarray       # (..., n+1, d, d)
    Gamma: np.ndarray   # (..., n+1, d, d)
    R: np.ndarray       # (..., n+1, d)
    L: np.ndarray       # (..., n+1, d)
    ds: float

    def uu_inv_drift(self) -> float:
        """Max |U U^{-1} - I|: tracked scheme error of the inverse recursion."""
        eye = np.eye(self.U.shape[-1])
        return float(np.max(np.abs(self.U @ self.U_inv - eye)))


def _line_values(z_line):
    if hasattr(z_line, "values"):
        return np.asarray(z_line.values, dtype=np.float64), z_line.step
    return np.asarray(z_line, dtype=np.float64), None


def solve_state_line(vf: VectorFieldSet, z_line, x0, ds: float = None):
    """Euler sweep of the state, derivative flow and its inverse along one line.

    z_line: driving path values (..., n+1, m) (an OU row at fixed t, or the
    boundary motion itself at t=0).  Returns (x, U, U_inv) at all nodes.
    """
    z, step = _line_values(z_line)
    if ds is None:
        ds = step
    if ds is None:
        raise ShapeError("ds must be given when z_line is a bare array")
    if z.shape[-1] != vf.m:
        raise ShapeError(f"driving path has {z.shape[-1]} components, model has m={vf.m}")
    n = z.shape[-2] - 1
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim == 0:
        x0 = x0[None]
    batch = np.broadcast_shapes(z.shape[:-2], x0.shape[:-1])
    d = vf.d
    x = np.zeros(batch + (n + 1, d))
    U = np.zeros(batch + (n + 1, d, d))
    U_inv = np.zeros(batch + (n + 1, d, d))
    eye = np.eye(d)
    x[..., 0, :] = x0
    U[..., 0, :, :] = eye
    U_inv[..., 0, :, :] = eye
    for k in range(n):
        xk = x[..., k, :]
        dz = z[..., k + 1, :] - z[..., k, :]
        diff = vf.diffusion(xk)
        x[..., k + 1, :] = (
            xk + np.einsum("...am,...m->...a", diff, dz) + vf.ito_drift(xk) * ds
        )
        M = np.einsum("...abm,...m->...ab", vf.diffusion_jac(xk), dz)
        A = M + vf.ito_drift_jac(xk) * ds
        U[..., k + 1, :, :] = U[..., k, :, :] + A @ U[..., k, :, :]
        U_inv[..., k + 1, :, :] = U_inv[..., k, :, :] @ (eye - A + A @ A)
    if not np.all(np.isfinite(x[..., n, :])):
        bad = np.argwhere(~np.isfinite(x))
        raise NumericsError(
            "non-finite state along the line",
            cell=(int(bad[0][-2]),),
            path=tuple(int(v) for v in bad[0][:-2]),
        )
    return x, U, U_inv


def compute_malliavin_line(
    vf: VectorFieldSet, x, U, U_inv, z_line, ds: float = None, fault: Optional[str] = None
) -> MalliavinState:
    """C, Gamma, R, L along one line from a solved (x, U, U^-1) trajectory.

    fault="flip-r-sign" negates the R term inside L only; it exists so the
    verification suite can demonstrate that a wrong formula is detected.
    """
    z, step = _line_values(z_line)
    if ds is None:
        ds = step
    if fault not in (None, "flip-r-sign"):
        raise ModelError(f"unknown fault {fault!r}")
    dz = np.diff(z, axis=-2)
    # g[..., k, :, i] = U_k^{-1} X_{i+1}(x_k)
    g = np.einsum("...ab,...bm->...am", U_inv, vf.diffusion(x))
    g_l = g[..., :-1, :, :]
    C = _cumsum0(np.einsum("...am,...bm->...ab", g_l, g_l) * ds, node_axis=-3)
    Gamma = np.einsum("...ab,...bc,...dc->...ad", U, C, U)
    g_mid = 0.5 * (g_l + g[..., 1:, :, :])
    R = -_cumsum0(np.einsum("...am,...m->...a", g_mid, dz), node_axis=-2)
    # hess(X_i):Gamma with Gamma frozen at the left endpoint; midpoint weights
    # on the dz contraction, left endpoint on the dr terms.
    hs = np.stack([vf.hess_X[i](x) for i in range(1, vf.m + 1)], axis=-1)
    uinv_h = np.einsum("...ab,...bcdm->...acdm", U_inv, hs)
    gam_l = Gamma[..., :-1, :, :]
    h_left = np.einsum("...acdm,...cd->...am", uinv_h[..., :-1, :, :, :, :], gam_l)
    h_right = np.einsum("...acdm,...cd->...am", uinv_h[..., 1:, :, :, :, :], gam_l)
    t_hess_z = _cumsum0(
        np.einsum("...am,...m->...a", 0.5 * (h_left + h_right), dz), node_axis=-2
    )
    uinv_h0 = np.einsum("...ab,...bcd->...acd", U_inv, vf.hess_X[0](x))
    t_hess_dr = _cumsum0(
        np.einsum("...acd,...cd->...a", uinv_h0[..., :-1, :, :, :], gam_l) * ds,
        node_axis=-2,
    )
    jx = np.zeros(x.shape)
    for i in range(1, vf.m + 1):
        jx = jx + np.einsum("...ab,...b->...a", vf.grad_X[i](x), vf.X[i](x))
    t_bracket = _cumsum0(
        np.einsum("...ab,...b->...a", U_inv[..., :-1, :, :], jx[..., :-1, :]) * ds,
        node_axis=-2,
    )
    r_in_l = -R if fault == "flip-r-sign" else R
    L = np.einsum("...ab,...b->...a", U, r_in_l + t_hess_z + t_hess_dr + t_bracket)
    return MalliavinState(x=x, U=U, U_inv=U_inv, C=C, Gamma=Gamma, R=R, L=L, ds=ds)


def apply_L(payoff: Payoff, state: MalliavinState, s_index: int) -> np.ndarray:
    """The operator value L^i d_i g + Gamma^{ij} d_i d_j g at one node."""
    xk = state.x[..., s_index, :]
    term1 = np.einsum("...a,...a->...", state.L[..., s_index, :], payoff.grad_f(xk))
    term2 = np.einsum("...ab,...ab->...", state.Gamma[..., s_index, :, :], payoff.hess_f(xk))
    return term1 + term2
