"""Structure functions of anholonomic frames and curvature of D.

For a frame ``E_i`` the structure functions are defined by
``[E_i, E_j] = c_ij^k E_k``.  Because ``A_k = E_k chi`` the commutator of the
covariant derivatives closes on the frame: ``[D_i, D_j] = c_ij^k D_k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifold import LocalCalculus, PoissonWManifold, _finish, _open, tsum

__all__ = [
    "StructureFunctions",
    "structure_constants",
    "structure_functions",
    "lemma1_jacobi_residual",
    "curvature_apply",
    "qsu",
    "force",
    "u_tensor",
    "t_quantity",
    "reciprocal_force_check",
    "qsu_coefficients",
    "nghs_velocity_values",
]


@dataclass(frozen=True)
class StructureFunctions:
    """``c[..., i, j, k] = c_ij^k`` and the frame condition number."""

    c: np.ndarray
    cond: np.ndarray


def structure_constants(lc: LocalCalculus) -> np.ndarray:
    """c_ij^k at every point of ``lc``, shape (B, n, n, n)."""
    n, B = lc.n, lc.B
    c = np.zeros((B, n, n, n))
    if lc.e is None:
        return c
    if lc.depth < 1:
        raise ValueError("structure functions need depth >= 1")
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    rhs = np.empty((B, n, len(pairs)))
    for col, (i, j) in enumerate(pairs):
        br = lc.lie(lc.e[i], lc.e[j])
        rhs[:, :, col] = np.stack([lc.value(b) for b in br], axis=-1)
    et = np.swapaxes(lc.frame_values, 1, 2)
    sol = np.full_like(rhs, np.nan)
    ok = lc.frame_ok
    if ok.any():
        # [E_i, E_j]^a = c_ij^k e_k^a  ->  e^T c_ij = bracket
        sol[ok] = np.linalg.solve(et[ok], rhs[ok])
    for col, (i, j) in enumerate(pairs):
        c[:, i, j, :] = sol[:, :, col]
        c[:, j, i, :] = -sol[:, :, col]
    return c


def structure_functions(M: PoissonWManifold, x) -> StructureFunctions:
    lc = _open(M, x, 1)
    c = structure_constants(lc)
    return StructureFunctions(_finish(lc, c), _finish(lc, lc.cond))


def jacobi_cyclic(c: np.ndarray) -> np.ndarray:
    """c_ij^r c_rk^s + c_jk^r c_ri^s + c_ki^r c_rj^s, shape (B, n, n, n, n)."""
    return (
        np.einsum("bijr,brks->bijks", c, c)
        + np.einsum("bjkr,bris->bijks", c, c)
        + np.einsum("bkir,brjs->bijks", c, c)
    )


def lemma1_jacobi_residual(M: PoissonWManifold, x):
    """Largest entry of the cyclic structure-function sum at x."""
    lc = _open(M, x, 1)
    cyc = jacobi_cyclic(structure_constants(lc))
    return _finish(lc, np.abs(cyc).reshape(lc.B, -1).max(axis=1))


def commutator(lc: LocalCalculus, i: int, j: int, g):
    """[D_i, D_j] g by nested differentiation."""
    g = lc.field(g)
    return lc.D(i, lc.D(j, g)) - lc.D(j, lc.D(i, g))


def curvature_structural(lc: LocalCalculus, c: np.ndarray, i: int, j: int, g):
    """c_ij^k D_k g (c taken as point values)."""
    g = lc.field(g)
    return tsum(c[:, i, j, k] * lc.D(k, g) for k in range(lc.n))


def curvature_apply(M: PoissonWManifold, i: int, j: int, g, x):
    """(commutator, structural) values of F_ij g at x."""
    lc = _open(M, x, 2)
    g = M.expr(g)
    c = structure_constants(lc)
    com = lc.value(commutator(lc, i, j, g))
    struct = lc.value(curvature_structural(lc, c, i, j, g))
    return _finish(lc, com), _finish(lc, struct)


def nghs_velocity(lc: LocalCalculus, H):
    """Frame components v_k = J_kj D_j H of the NGHS velocity (jets)."""
    DH = [lc.D(j, H) for j in range(lc.n)]
    return [tsum(lc.J[k][j] * DH[j] for j in range(lc.n)) for k in range(lc.n)]


def nghs_velocity_values(lc: LocalCalculus, H) -> np.ndarray:
    return np.stack([lc.value(v) for v in nghs_velocity(lc, H)], axis=-1)


def qsu_coefficients(c: np.ndarray, v: np.ndarray) -> np.ndarray:
    """w_i^k = v^j c_ij^k, shape (B, n, n)."""
    return np.einsum("bj,bijk->bik", v, c)


def _velocity(lc: LocalCalculus, v, H):
    if v is None:
        if H is None:
            raise ValueError("either v or H is needed for the Qsu velocity")
        return nghs_velocity_values(lc, H)
    return np.broadcast_to(np.asarray(v, dtype=float), (lc.B, lc.n))


def qsu_local(lc: LocalCalculus, c: np.ndarray, v: np.ndarray, i: int, g):
    """q_i g = w_i^k D_k g (jet)."""
    wk = qsu_coefficients(c, v)
    g = lc.field(g)
    return tsum(wk[:, i, k] * lc.D(k, g) for k in range(lc.n))


def qsu(M: PoissonWManifold, v, i: int, g, x, H=None):
    """Qsu quantity q_i g at x; ``v=None`` uses the NGHS velocity of ``H``."""
    lc = _open(M, x, 1)
    v = _velocity(lc, v, M.expr(H) if H is not None else None)
    return _finish(lc, lc.value(qsu_local(lc, structure_constants(lc), v, i, M.expr(g))))


def force_local(lc: LocalCalculus, H):
    return [-lc.D(k, H) for k in range(lc.n)]


def force(M: PoissonWManifold, H, x) -> np.ndarray:
    """Force field F_k = -D_k H at x."""
    lc = _open(M, x, 1)
    F = force_local(lc, M.expr(H))
    return _finish(lc, np.stack([lc.value(f) for f in F], axis=-1))


def u_local(lc: LocalCalculus, H) -> np.ndarray:
    """u_kj = D_j F_k - D_k F_j, shape (B, n, n)."""
    F = force_local(lc, lc.field(H))
    n = lc.n
    DF = [[lc.value(lc.D(j, F[k])) for j in range(n)] for k in range(n)]
    u = np.zeros((lc.B, n, n))
    for k in range(n):
        for j in range(n):
            u[:, k, j] = DF[k][j] - DF[j][k]
    return u


def u_tensor(M: PoissonWManifold, H, x) -> np.ndarray:
    lc = _open(M, x, 2)
    return _finish(lc, u_local(lc, M.expr(H)))


def t_local(lc: LocalCalculus, c: np.ndarray, v: np.ndarray, H) -> np.ndarray:
    """t_k = -w_k^j F_j, shape (B, n)."""
    F = np.stack([lc.value(f) for f in force_local(lc, lc.field(H))], axis=-1)
    return -np.einsum("bkj,bj->bk", qsu_coefficients(c, v), F)


def t_quantity(M: PoissonWManifold, v, H, x) -> np.ndarray:
    lc = _open(M, x, 1)
    H = M.expr(H)
    v = _velocity(lc, v, H)
    return _finish(lc, t_local(lc, structure_constants(lc), v, H))


def reciprocal_force_local(lc: LocalCalculus, c: np.ndarray, v: np.ndarray, H):
    """Residuals of (u_ji; t_i) = (F_ij; q_i) H under both global signs.

    Returns ``{"+": (u_res, t_res), "-": (u_res, t_res)}`` with per-point
    maxima over indices.
    """
    H = lc.field(H)
    n = lc.n
    u = u_local(lc, H)
    FH = np.zeros_like(u)
    for i in range(n):
        for j in range(n):
            FH[:, i, j] = lc.value(curvature_structural(lc, c, i, j, H))
    t = t_local(lc, c, v, H)
    qH = np.stack([lc.value(qsu_local(lc, c, v, i, H)) for i in range(n)], axis=-1)
    u_ji = np.swapaxes(u, 1, 2)
    out = {}
    for name, s in (("+", 1.0), ("-", -1.0)):
        out[name] = (
            np.abs(u_ji - s * FH).reshape(lc.B, -1).max(axis=1),
            np.abs(t - s * qH).max(axis=1),
        )
    return out


def reciprocal_force_check(M: PoissonWManifold, v, H, x) -> dict:
    lc = _open(M, x, 2)
    H = M.expr(H)
    v = _velocity(lc, v, H)
    res = reciprocal_force_local(lc, structure_constants(lc), v, H)
    return {k: (_finish(lc, a), _finish(lc, b)) for k, (a, b) in res.items()}
