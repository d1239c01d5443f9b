"""Covariant dynamics on a Poisson-W manifold.

Three right-hand sides are available:

``transport``
    ``xdot_a = {H, x_a} - w x_a``, i.e. the flow of ``X_H^M``.  It is the only
    choice for which ``Df/dt = fdot + w f = {H, f}`` holds for every observable.
``eq1-literal``
    ``xdot = J.DH - w x``.
``nghs-literal``
    ``xdot = J.DH``.

Pointwise identities are evaluated with jets on a :class:`LocalCalculus`;
time integration uses compiled float code because it is strictly sequential.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .expr import NumericDomainError, ScalarExpr, compile_floats, derivative
from .frames import commutator, nghs_velocity, structure_constants, u_local
from .manifold import LocalCalculus, ManifoldError, PoissonWManifold, _finish, _open, tsum

log = logging.getLogger(__name__)

CONVENTIONS = ("transport", "eq1-literal", "nghs-literal")
METHODS = ("RK4", "RK45")

__all__ = [
    "CONVENTIONS",
    "IntegrationError",
    "TrajectoryConfig",
    "Trajectory",
    "CompiledFlow",
    "rhs",
    "integrate",
    "transport_residual",
    "second_order",
    "second_order_at",
    "covariant_force",
    "reciprocal_tensor",
    "divergence_identity",
    "t6_identity",
    "general_operator_residual",
]


class IntegrationError(RuntimeError):
    """Integration failed; ``t_last`` is the last time with a finite state."""

    def __init__(self, message: str, t_last: float):
        super().__init__(f"{message} (last good t = {t_last:.17g})")
        self.t_last = t_last


def _check_convention(convention: str):
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")


# -- pointwise (jet) operations -------------------------------------------------


def rhs_local(lc: LocalCalculus, H, convention: str = "transport"):
    """Coordinate components of xdot as jets."""
    _check_convention(convention)
    H = lc.field(H)
    if convention == "transport":
        return lc.XM(H)
    v = lc.to_coordinates(nghs_velocity(lc, H))
    if convention == "nghs-literal":
        return v
    w = lc.w(H)
    return [v[a] - w * lc.coord(a) for a in range(lc.n)]


def rhs(M: PoissonWManifold, H, convention: str, x) -> np.ndarray:
    lc = _open(M, x, 1)
    out = rhs_local(lc, M.expr(H), convention)
    return _finish(lc, np.stack([lc.value(c) for c in out], axis=-1))


def transport_local(lc: LocalCalculus, H, f, convention: str = "transport"):
    """r = grad f . xdot + w f - {H, f} (jet)."""
    H, f = lc.field(H), lc.field(f)
    return lc.apply(rhs_local(lc, H, convention), f) + lc.w(H) * f - lc.gpwb(H, f)


def transport_residual(M: PoissonWManifold, H, f, x, convention: str = "transport"):
    lc = _open(M, x, 1)
    return _finish(lc, lc.value(transport_local(lc, M.expr(H), M.expr(f), convention)))


def second_order_local(lc: LocalCalculus, H, f):
    """(f'' + 2w f' + beta f, d/dt{H,f} + w{H,f}) along the transport flow."""
    H, f = lc.field(H), lc.field(f)
    xdot = rhs_local(lc, H, "transport")
    w = lc.w(H)
    fdot = lc.apply(xdot, f)
    fddot = lc.apply(xdot, fdot)
    wdot = lc.apply(xdot, w)
    beta = w * w + wdot
    opform = fddot + 2.0 * w * fdot + beta * f
    G = lc.gpwb(H, f)
    chained = lc.apply(xdot, G) + w * G
    return opform, chained


def second_order_at(M: PoissonWManifold, H, f, x):
    lc = _open(M, x, 2)
    op, ch = second_order_local(lc, M.expr(H), M.expr(f))
    return _finish(lc, lc.value(op)), _finish(lc, lc.value(ch))


def second_order(M: PoissonWManifold, H, traj: "Trajectory", t: float, f):
    """Both forms of the second covariant time derivative at grid time ``t``."""
    if traj.convention != "transport":
        raise ValueError("second_order needs a transport-convention trajectory")
    idx = int(np.argmin(np.abs(traj.t - t)))
    if idx == 0 or idx == len(traj.t) - 1:
        raise ValueError(f"t={t} is not an interior grid point")
    return second_order_at(M, H, f, traj.x[idx])


def momentum_coordinate(lc: LocalCalculus, k: int):
    """p_k: conjugate momentum x_{m+k} for k < m, the coordinate itself otherwise."""
    m = lc.n // 2
    return lc.coord(m + k) if k < m else lc.coord(k)


def covariant_force_local(lc: LocalCalculus, H):
    """F°_k = -D_k H + p_k w (jets)."""
    if lc.n % 2:
        raise ManifoldError("covariant force needs a phase-space dimension n = 2m")
    H = lc.field(H)
    w = lc.w(H)
    return [-lc.D(k, H) + momentum_coordinate(lc, k) * w for k in range(lc.n)]


def covariant_force(M: PoissonWManifold, H, x) -> np.ndarray:
    lc = _open(M, x, 1)
    F = covariant_force_local(lc, M.expr(H))
    return _finish(lc, np.stack([lc.value(f) for f in F], axis=-1))


def reciprocal_tensor_local(lc: LocalCalculus, H):
    """Reciprocal tensor f_kj and the residual of its j != k closed form.

    Returns ``(f, r)`` with ``f`` of shape (B, n, n) and ``r`` the residual
    table ``f_kj - u_jk - (L_kj w + (L_kj chi) w)`` (zero on the diagonal).
    """
    H = lc.field(H)
    n = lc.n
    Fo = covariant_force_local(lc, H)
    DF = [[lc.value(lc.D(j, Fo[k])) for j in range(n)] for k in range(n)]
    f = np.zeros((lc.B, n, n))
    for k in range(n):
        for j in range(n):
            f[:, k, j] = DF[k][j] - DF[j][k]
    u = u_local(lc, H)
    w = lc.w(H)
    wv = lc.value(w)
    p = [lc.value(momentum_coordinate(lc, k)) for k in range(n)]
    Ew = [lc.value(lc.E(k, w)) for k in range(n)]
    Ec = [lc.value(lc.E(k, lc.chi)) for k in range(n)]
    r = np.zeros_like(f)
    for k in range(n):
        for j in range(n):
            if j == k:
                continue
            Lw = p[k] * Ew[j] - p[j] * Ew[k]
            Lchi = p[k] * Ec[j] - p[j] * Ec[k]
            r[:, k, j] = f[:, k, j] - u[:, j, k] - (Lw + Lchi * wv)
    return f, r


def reciprocal_tensor(M: PoissonWManifold, H, x):
    lc = _open(M, x, 2)
    f, r = reciprocal_tensor_local(lc, M.expr(H))
    return _finish(lc, f), _finish(lc, r)


def divergence_local(lc: LocalCalculus, H):
    """(lhs, rhs_stated, rhs_derived) of the divergence identity (values).

    ``D_k (v_k + w x_k) = E_k v_k + A_k v_k + x_k D_k w + w E_k x_k``, so the
    re-derived right-hand side is ``div v + A.v + x.Dw + tr(e) w`` where
    ``tr(e) = sum_k E_k x_k`` equals n for the coordinate frame.
    """
    H = lc.field(H)
    n = lc.n
    v = nghs_velocity(lc, H)
    w = lc.w(H)
    x = [lc.coord(k) for k in range(n)]
    lhs = tsum(lc.D(k, v[k] + w * x[k]) for k in range(n))
    div = tsum(lc.E(k, v[k]) for k in range(n))
    xDw = tsum(x[k] * lc.D(k, w) for k in range(n))
    Av = tsum(lc.A(k) * v[k] for k in range(n))
    trace = tsum(lc.E(k, x[k]) for k in range(n))
    wv = lc.value(w)
    base = lc.value(div) + lc.value(xDw)
    rhs_stated = base + 2.0 * wv
    rhs_derived = base + lc.value(Av) + lc.value(trace) * wv
    return lc.value(lhs), rhs_stated, rhs_derived


def divergence_identity(M: PoissonWManifold, H, x):
    lc = _open(M, x, 2)
    return tuple(_finish(lc, a) for a in divergence_local(lc, M.expr(H)))


def t6_local(lc: LocalCalculus, H, c: np.ndarray | None = None, literal: bool = False):
    """(lhs_j, rhs_j) for [D_i, D_j] Dx^i/dt with Dx^i/dt = v^i + w x^i.

    ``literal=True`` differentiates the commutator directly and needs depth 3.
    """
    H = lc.field(H)
    n = lc.n
    if c is None:
        c = structure_constants(lc)
    v = nghs_velocity(lc, H)
    w = lc.w(H)
    x = [lc.coord(i) for i in range(n)]
    g = [v[i] + w * x[i] for i in range(n)]
    if literal:
        lhs = np.stack(
            [lc.value(tsum(commutator(lc, i, j, g[i]) for i in range(n))) for j in range(n)], axis=-1
        )
    else:
        Dg = np.stack([np.stack([lc.value(lc.D(k, g[i])) for k in range(n)], -1) for i in range(n)], -2)
        lhs = np.einsum("bijk,bik->bj", c, Dg)
    vv = np.stack([lc.value(a) for a in v], -1)
    xv = lc.points
    wv = lc.value(w)
    div = lc.value(tsum(lc.E(k, v[k]) for k in range(n)))
    Dw = np.stack([lc.value(lc.D(k, w)) for k in range(n)], -1)
    A = np.stack([lc.value(lc.A(k)) for k in range(n)], -1)
    trace_c = np.einsum("biji->bj", c)
    theta = np.einsum("bi,bijk->bjk", xv, c)
    wji = np.einsum("bk,bkji->bji", vv, c)
    rhs_ = (
        trace_c * (div + wv)[:, None]
        + np.einsum("bjk,bk->bj", theta, Dw)
        + np.einsum("bji,bi->bj", wji, A)
    )
    return lhs, rhs_


def t6_identity(M: PoissonWManifold, H, x, literal: bool = False):
    lc = _open(M, x, 3 if literal else 2)
    lhs, rhs_ = t6_local(lc, M.expr(H), literal=literal)
    return _finish(lc, lhs), _finish(lc, rhs_)


def general_operator_local(lc: LocalCalculus, H, f, c: np.ndarray | None = None):
    """(lhs, rhs) of [D_i,D_j]{H,f} = F_ij {H,f} + w c_ij^k E_k f, shape (B,n,n).

    With ``lc.depth >= 3`` the left side is the literal nested commutator,
    otherwise the structure-function form of F_ij.
    """
    H, f = lc.field(H), lc.field(f)
    n = lc.n
    if c is None:
        c = structure_constants(lc)
    G = lc.gpwb(H, f)
    DG = np.stack([lc.value(lc.D(k, G)) for k in range(n)], -1)
    Ef = np.stack([lc.value(lc.E(k, f)) for k in range(n)], -1)
    FG = np.einsum("bijk,bk->bij", c, DG)
    wv = lc.value(lc.w(H))
    rhs_ = FG + wv[:, None, None] * np.einsum("bijk,bk->bij", c, Ef)
    if lc.depth >= 3:
        lhs = np.zeros_like(FG)
        for i in range(n):
            for j in range(n):
                if i != j:
                    lhs[:, i, j] = lc.value(commutator(lc, i, j, G))
    else:
        lhs = FG
    return lhs, rhs_


def general_operator_residual(M: PoissonWManifold, H, f, x):
    lc = _open(M, x, 3)
    lhs, rhs_ = general_operator_local(lc, M.expr(H), M.expr(f))
    return _finish(lc, np.abs(lhs - rhs_).reshape(lc.B, -1).max(axis=1))


# -- time integration -----------------------------------------------------------


class CompiledFlow:
    """Float-compiled right-hand side: ``x -> (xdot, w, H)``."""

    def __init__(self, M: PoissonWManifold, H: ScalarExpr, convention: str = "transport"):
        _check_convention(convention)
        n = self.n = M.n
        self.convention = convention
        exprs = [H.root] + [derivative(H.root, a) for a in range(n)]
        if M.structural_override is None:
            exprs += [M.chi.root] + [derivative(M.chi.root, a) for a in range(n)]
        else:
            exprs += [M.chi.root] + [a.root for a in M.structural_override]
        exprs += [M.J[i][j].root for i in range(n) for j in range(n)]
        self.has_frame = M.frame is not None
        self.override = M.structural_override is not None
        if self.has_frame:
            exprs += [M.frame[i][a].root for i in range(n) for a in range(n)]
        self._f = compile_floats(exprs, n)

    def __call__(self, x):
        n = self.n
        vals = np.asarray(self._f(tuple(x)), dtype=float)
        Hv = vals[0]
        gH = vals[1 : 1 + n]
        gchi = vals[2 + n : 2 + 2 * n]
        off = 2 + 2 * n
        J = vals[off : off + n * n].reshape(n, n)
        if self.has_frame:
            e = vals[off + n * n : off + 2 * n * n].reshape(n, n)
            EH = e @ gH
            A = gchi if self.override else e @ gchi
        else:
            e = None
            EH = gH
            A = gchi
        DH = EH + A * Hv
        w = DH @ J @ A
        if self.convention == "transport":
            comps = J.T @ DH
        else:
            comps = J @ DH
        xdot = comps if e is None else e.T @ comps
        if self.convention == "eq1-literal":
            xdot = xdot - w * np.asarray(x, dtype=float)
        return xdot, w, Hv


@dataclass
class TrajectoryConfig:
    manifold: PoissonWManifold
    H: ScalarExpr
    x0: tuple
    t0: float = 0.0
    t1: float = 1.0
    h: float = 1e-3
    method: str = "RK4"
    convention: str = "transport"
    observables: tuple = ()
    rtol: float = 1e-8
    atol: float = 1e-10
    min_step: float = 1e-12

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("step size h must be positive")
        if not self.t1 > self.t0:
            raise ValueError("t1 must exceed t0")
        self.method = str(self.method).upper()
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        _check_convention(self.convention)
        if self.method == "RK45" and self.rtol < 1e-12:
            raise ValueError("RK45 relative tolerance must be >= 1e-12")
        if len(self.x0) != self.manifold.n:
            raise ValueError("x0 dimension does not match the manifold")


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    w: np.ndarray
    H: np.ndarray
    s: np.ndarray
    I: np.ndarray
    observables: dict = field(default_factory=dict)
    convention: str = "transport"
    method: str = "RK4"

    def drift(self) -> float:
        """max_t |I(t) - I(t0)|."""
        return float(np.max(np.abs(self.I - self.I[0])))


def _grid(cfg: TrajectoryConfig) -> np.ndarray:
    steps = int(round((cfg.t1 - cfg.t0) / cfg.h))
    if not math.isclose(cfg.t0 + steps * cfg.h, cfg.t1, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError("(t1 - t0) must be an integer multiple of h")
    return cfg.t0 + cfg.h * np.arange(steps + 1)


@np.errstate(all="ignore")
def _rk4(flow: CompiledFlow, x0, grid: np.ndarray):
    n = flow.n
    N = len(grid)
    X = np.empty((N, n))
    S = np.empty(N)
    W = np.empty(N)
    Hs = np.empty(N)
    x = np.asarray(x0, dtype=float).copy()
    s = 0.0
    h = grid[1] - grid[0]
    for k in range(N):
        try:
            k1x, k1w, Hv = flow(x)
        except NumericDomainError as exc:
            raise IntegrationError(f"domain error: {exc}", grid[k - 1] if k else grid[0]) from exc
        X[k], S[k], W[k], Hs[k] = x, s, k1w, Hv
        if k == N - 1:
            break
        try:
            k2x, k2w, _ = flow(x + 0.5 * h * k1x)
            k3x, k3w, _ = flow(x + 0.5 * h * k2x)
            k4x, k4w, _ = flow(x + h * k3x)
        except NumericDomainError as exc:
            raise IntegrationError(f"domain error: {exc}", grid[k]) from exc
        x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        s = s + (h / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        if not (np.all(np.isfinite(x)) and math.isfinite(s)):
            raise IntegrationError("non-finite state", grid[k])
    return X, S, W, Hs


@np.errstate(all="ignore")
def _rk45(flow: CompiledFlow, x0, grid: np.ndarray, cfg: TrajectoryConfig):
    last = [grid[0]]

    def fun(t, y):
        xdot, w, _ = flow(y[:-1])
        last[0] = t
        return np.append(xdot, w)

    y0 = np.append(np.asarray(x0, dtype=float), 0.0)
    try:
        sol = solve_ivp(fun, (grid[0], grid[-1]), y0, method="RK45", t_eval=grid,
                        rtol=cfg.rtol, atol=cfg.atol)
    except NumericDomainError as exc:
        raise IntegrationError(f"domain error: {exc}", last[0]) from exc
    if sol.status != 0 or not np.all(np.isfinite(sol.y)):
        raise IntegrationError(sol.message, float(sol.t[-1]) if len(sol.t) else grid[0])
    if len(sol.t) > 1 and np.min(np.diff(sol.t)) <= 0:
        raise IntegrationError("non-monotone output grid", float(sol.t[-1]))
    Y = sol.y.T
    X, S = Y[:, :-1], Y[:, -1]
    W = np.empty(len(grid))
    Hs = np.empty(len(grid))
    for k, x in enumerate(X):
        _, W[k], Hs[k] = flow(x)
    return X, S, W, Hs


def integrate(cfg: TrajectoryConfig) -> Trajectory:
    """Integrate the augmented system (x, s) with s' = w on a fixed output grid."""
    M = cfg.manifold
    flow = CompiledFlow(M, cfg.H, cfg.convention)
    grid = _grid(cfg)
    if cfg.method == "RK4":
        X, S, W, Hs = _rk4(flow, cfg.x0, grid)
    else:
        X, S, W, Hs = _rk45(flow, cfg.x0, grid, cfg)
    obs = {}
    if cfg.observables:
        fn = compile_floats([o.root for o in cfg.observables], M.n)
        vals = np.array([fn(tuple(x)) for x in X])
        for i, o in enumerate(cfg.observables):
            obs[str(o)] = vals[:, i]
    log.debug("integrated %d steps with %s/%s", len(grid) - 1, cfg.method, cfg.convention)
    return Trajectory(grid, X, W, Hs, S, Hs * np.exp(S), obs, cfg.convention, cfg.method)
