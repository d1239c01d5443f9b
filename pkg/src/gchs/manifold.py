"""Poisson-W manifolds and the generalized Poisson-W bracket.

A manifold is an open box of R^n with an antisymmetric structure matrix
``J(x)``, a structure function ``chi`` and an optional frame ``E_i = e_i^a d_a``
(rows of ``frame``).  Without a frame the coordinate basis is used.

Every operation here is evaluated on a :class:`LocalCalculus`, which holds the
jets of the manifold data at a batch of points.  Composite quantities are jets
too, so a derivative of a bracket is just another :func:`~gchs.jets.partial`.
Each derivative taken costs one level of jet depth.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import jets
from .expr import ExprError, NumericDomainError, ScalarExpr, evaluate, parse
from .jets import Jet, partial

ANTISYMMETRY_TOL = 1e-12
MAX_FRAME_COND = 1e8

__all__ = [
    "ManifoldError",
    "FrameError",
    "PoissonWManifold",
    "LocalCalculus",
    "structural_derivative",
    "covariant_D",
    "gpwb",
    "gpwb_decomposed",
    "vec_X",
    "vec_XM",
    "w_dynamics",
    "lie_bracket",
    "bracket_XM_expansion",
    "omega_pair",
]


class ManifoldError(ValueError):
    """Invalid manifold data (shape mismatch, J not antisymmetric, ...)."""


class FrameError(ValueError):
    """Frame singular or ill-conditioned at an evaluation point."""


def tsum(terms):
    """Sum an iterable of carriers; an empty sum is the constant 0."""
    total = 0.0
    for t in terms:
        total = t if isinstance(total, float) and total == 0.0 else total + t
    return total


def _is_zero(x) -> bool:
    return isinstance(x, float) and x == 0.0


def _is_one(x) -> bool:
    return isinstance(x, float) and x == 1.0


def _mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return 0.0
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    return a * b


@dataclass(frozen=True, eq=False)
class PoissonWManifold:
    n: int
    J: tuple
    chi: ScalarExpr
    frame: tuple | None = None
    canonical: bool = False
    names: tuple = ()
    # Diagnostic override of A_i = E_i chi.  Breaks the FORCED identities by
    # design; only negative-test fixtures set it.
    structural_override: tuple | None = None
    validation_box: tuple | None = None

    def __post_init__(self):
        n = self.n
        if n < 1:
            raise ManifoldError("dimension must be >= 1")
        if not self.names:
            object.__setattr__(self, "names", tuple(f"x{i + 1}" for i in range(n)))
        if len(self.J) != n or any(len(row) != n for row in self.J):
            raise ManifoldError(f"J must be {n}x{n}")
        exprs = [self.chi, *itertools.chain.from_iterable(self.J)]
        if self.frame is not None:
            if len(self.frame) != n or any(len(row) != n for row in self.frame):
                raise ManifoldError(f"frame must be {n}x{n}")
            exprs += list(itertools.chain.from_iterable(self.frame))
        if self.structural_override is not None:
            if len(self.structural_override) != n:
                raise ManifoldError(f"structural override needs {n} components")
            exprs += list(self.structural_override)
        for e in exprs:
            if e.n != n:
                raise ManifoldError(f"expression {e} is defined on R^{e.n}, expected R^{n}")
        if self.canonical and n % 2:
            raise ManifoldError("canonical structure needs an even dimension")
        if self.validation_box is None:
            object.__setattr__(self, "validation_box", tuple((-1.0, 1.0) for _ in range(n)))
        self._validate_J()

    # -- construction -----------------------------------------------------
    @classmethod
    def build(cls, n: int, J, chi: str | ScalarExpr = "0", frame=None, names=None,
              structural_override=None, validation_box=None) -> "PoissonWManifold":
        """Build from strings.  ``J`` is ``"canonical"`` or an n x n nested list."""
        names = tuple(names) if names else ()

        def p(s):
            return s if isinstance(s, ScalarExpr) else parse(str(s), n, names or None)

        canonical = isinstance(J, str) and J == "canonical"
        if canonical:
            J = canonical_matrix(n)
        Jx = tuple(tuple(p(s) for s in row) for row in J)
        fr = None if frame is None else tuple(tuple(p(s) for s in row) for row in frame)
        ov = None if structural_override is None else tuple(p(s) for s in structural_override)
        return cls(n, Jx, p(chi), fr, canonical, names, ov,
                   None if validation_box is None else tuple(map(tuple, validation_box)))

    def expr(self, f) -> ScalarExpr:
        if isinstance(f, ScalarExpr):
            return f
        return parse(str(f), self.n, self.names)

    def validation_points(self) -> np.ndarray:
        box = np.asarray(self.validation_box, dtype=float)
        if self.n <= 4:
            axes = [np.linspace(lo, hi, 3) for lo, hi in box]
            return np.array(list(itertools.product(*axes)))
        rng = np.random.default_rng(0)
        return box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((100, self.n))

    def _validate_J(self):
        pts = self.validation_points()
        cols = [pts[:, a] for a in range(self.n)]
        with np.errstate(all="ignore"):
            Jv = np.empty((len(pts), self.n, self.n))
            for i, j in itertools.product(range(self.n), repeat=2):
                Jv[:, i, j] = evaluate(self.J[i][j].root, cols)
        gap = np.abs(Jv + np.swapaxes(Jv, 1, 2))
        ok = np.isfinite(gap).all(axis=(1, 2))
        bad = np.argwhere(gap[ok] > ANTISYMMETRY_TOL)
        if len(bad):
            _, i, j = bad[0]
            raise ManifoldError(
                f"J must be antisymmetric: J{i + 1}{j + 1} + J{j + 1}{i + 1} = "
                f"{gap[ok][tuple(bad[0])]:.3g} at {pts[ok][bad[0][0]].tolist()}"
            )

    def local(self, x, depth: int = 2) -> "LocalCalculus":
        return LocalCalculus(self, x, depth)


def canonical_matrix(n: int) -> list[list[str]]:
    """Canonical structure matrix on (q1..qm, p1..pm): J_{q_i p_i} = 1."""
    m = n // 2
    J = [["0"] * n for _ in range(n)]
    for i in range(m):
        J[i][m + i] = "1"
        J[m + i][i] = "-1"
    return J


class LocalCalculus:
    """Jets of a manifold's data at a batch of points.

    ``x`` is a point ``(n,)`` or a batch ``(B, n)``; ``depth`` is the number of
    derivative orders carried by the primitive fields.
    """

    def __init__(self, M: PoissonWManifold, x, depth: int = 2):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (M.n,):
            raise ValueError(f"point dimension {x.shape[-1:]} does not match manifold dimension {M.n}")
        self.M = M
        self.n = n = M.n
        self.single = x.ndim == 1
        self.points = np.atleast_2d(x)
        self.B = len(self.points)
        self.depth = depth
        self._cache: dict[int, tuple] = {}
        with np.errstate(all="ignore"):
            self.coords = [jets.variable(self.points[:, a], a, n, depth) for a in range(n)]
            self.J = [[self.field(M.J[i][j]) for j in range(n)] for i in range(n)]
            self.chi = self.field(M.chi)
            self.e = None
            if M.frame is not None:
                self.e = [[self.field(M.frame[i][a]) for a in range(n)] for i in range(n)]
            if M.structural_override is not None:
                self._A = [self.field(a) for a in M.structural_override]
            else:
                self._A = [self.E(i, self.chi) for i in range(n)]
        self._check()

    # -- validity ---------------------------------------------------------
    def _check(self):
        n = self.n
        Jv = np.stack([np.stack([self.value(self.J[i][j]) for j in range(n)], -1) for i in range(n)], -2)
        self.J_values = Jv
        finite = np.isfinite(Jv).all(axis=(1, 2)) & np.isfinite(self.value(self.chi))
        antisym = np.abs(Jv + np.swapaxes(Jv, 1, 2)).max(axis=(1, 2)) <= ANTISYMMETRY_TOL
        antisym |= ~finite
        if self.e is None:
            self.frame_values = np.broadcast_to(np.eye(n), (self.B, n, n))
            self.cond = np.ones(self.B)
        else:
            ev = np.stack([np.stack([self.value(self.e[i][a]) for a in range(n)], -1) for i in range(n)], -2)
            self.frame_values = ev
            efin = np.isfinite(ev).all(axis=(1, 2))
            cond = np.full(self.B, np.inf)
            if efin.any():
                cond[efin] = np.linalg.cond(ev[efin])
            self.cond = cond
            finite &= efin
        self.antisymmetric = antisym
        self.frame_ok = self.cond <= MAX_FRAME_COND
        self.valid = finite & antisym & self.frame_ok

    def require_valid(self):
        """Raise for the first invalid point (single-point API)."""
        if not np.all(self.antisymmetric):
            raise ManifoldError("J is not antisymmetric at the evaluation point")
        if not np.all(self.frame_ok):
            raise FrameError(f"frame ill-conditioned (cond={self.cond.max():.3g} > {MAX_FRAME_COND:g})")
        if not np.all(self.valid):
            raise NumericDomainError("manifold data not finite at the evaluation point")

    # -- fields -----------------------------------------------------------
    def field(self, f):
        """Jet of ``f`` (expression, string, jet or constant) at the points."""
        if isinstance(f, (Jet, np.ndarray, float, int)):
            return float(f) if isinstance(f, int) else f
        if isinstance(f, str):
            f = self.M.expr(f)
        hit = self._cache.get(id(f))
        if hit is not None:
            return hit[1]
        with np.errstate(all="ignore"):
            out = evaluate(f.root, self.coords)
        if not isinstance(out, (Jet, np.ndarray)):
            out = float(out)
        self._cache[id(f)] = (f, out)
        return out

    def value(self, j) -> np.ndarray:
        return np.broadcast_to(np.asarray(jets.strip(j), dtype=float), (self.B,))

    def coord(self, a: int):
        return self.coords[a]

    # -- frame and covariant derivatives -----------------------------------
    def E(self, i: int, f):
        """Frame derivative E_i f (one jet level lower)."""
        f = self.field(f)
        if isinstance(f, float):
            return 0.0
        if self.e is None:
            return partial(f, i)
        return tsum(_mul(self.e[i][a], partial(f, a)) for a in range(self.n) if not _is_zero(self.e[i][a]))

    def A(self, i: int):
        """Structural derivative A_i = E_i chi."""
        return self._A[i]

    def D(self, i: int, f):
        """Covariant derivative D_i f = E_i f + A_i f."""
        f = self.field(f)
        return self.E(i, f) + _mul(self.A(i), f) if not _is_zero(f) else 0.0

    # -- brackets -----------------------------------------------------------
    def _contract(self, a: Sequence, b: Sequence):
        return tsum(
            _mul(_mul(self.J[i][j], a[i]), b[j])
            for i in range(self.n)
            for j in range(self.n)
            if not _is_zero(self.J[i][j])
        )

    def gpwb(self, f, g):
        """{f, g} = J_ij D_i f D_j g."""
        return self._contract([self.D(i, f) for i in range(self.n)], [self.D(j, g) for j in range(self.n)])

    def ghs(self, f, g):
        """{f, g}_GHS = J_ij E_i f E_j g (equal to X_f g)."""
        return self._contract([self.E(i, f) for i in range(self.n)], [self.E(j, g) for j in range(self.n)])

    def xchi(self, g):
        """X_chi g = J_ij A_i E_j g."""
        return self._contract(self._A, [self.E(j, g) for j in range(self.n)])

    def xchi_pair(self, f, g):
        """X_chi(f, g) = f X_chi g - g X_chi f."""
        f, g = self.field(f), self.field(g)
        return _mul(f, self.xchi(g)) - _mul(g, self.xchi(f))

    def w(self, H):
        """W dynamics w = {H, 1}."""
        return self.gpwb(H, 1.0)

    # -- vector fields (coordinate components) -------------------------------
    def to_coordinates(self, comps: Sequence):
        """Coordinate components of sum_j comps[j] E_j."""
        if self.e is None:
            return list(comps)
        return [
            tsum(_mul(comps[j], self.e[j][a]) for j in range(self.n) if not _is_zero(self.e[j][a]))
            for a in range(self.n)
        ]

    def _hamiltonian_field(self, grad: Sequence):
        return self.to_coordinates(
            [tsum(_mul(self.J[i][j], grad[i]) for i in range(self.n) if not _is_zero(self.J[i][j]))
             for j in range(self.n)]
        )

    def X(self, f):
        """X_f = J_ij (E_i f) E_j."""
        return self._hamiltonian_field([self.E(i, f) for i in range(self.n)])

    def X_chi(self):
        """X_chi = J_ij A_i E_j."""
        return self._hamiltonian_field(self._A)

    def XM(self, f):
        """X_f^M = X_f + f X_chi."""
        f = self.field(f)
        return [a + _mul(f, b) for a, b in zip(self.X(f), self.X_chi())]

    def apply(self, V: Sequence, K):
        """Directional derivative V K = V^a d_a K."""
        K = self.field(K)
        if isinstance(K, float):
            return 0.0
        return tsum(_mul(V[a], partial(K, a)) for a in range(self.n))

    def lie(self, V: Sequence, W: Sequence):
        """[V, W]^b = V^a d_a W^b - W^a d_a V^b."""
        return [self.apply(V, W[b]) - self.apply(W, V[b]) for b in range(self.n)]


# -- public single-point / batch operations ------------------------------------


def _finish(lc: LocalCalculus, arr):
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NumericDomainError("non-finite result (domain error)")
    if lc.single:
        arr = arr[0]
        return float(arr) if arr.ndim == 0 else arr
    return arr


def _open(M: PoissonWManifold, x, depth: int) -> LocalCalculus:
    lc = M.local(x, depth)
    lc.require_valid()
    return lc


def _vec(lc: LocalCalculus, comps) -> np.ndarray:
    return np.stack([lc.value(c) for c in comps], axis=-1)


def structural_derivative(M: PoissonWManifold, x) -> np.ndarray:
    """A_i(x) = (E_i chi)(x)."""
    lc = _open(M, x, 1)
    return _finish(lc, _vec(lc, [lc.A(i) for i in range(M.n)]))


def covariant_D(M: PoissonWManifold, f, x) -> np.ndarray:
    """(D_i f)(x) for i = 1..n."""
    lc = _open(M, x, 1)
    f = M.expr(f)
    return _finish(lc, _vec(lc, [lc.D(i, f) for i in range(M.n)]))


def gpwb(M: PoissonWManifold, f, g, x):
    """Generalized Poisson-W bracket {f, g}(x)."""
    lc = _open(M, x, 1)
    return _finish(lc, lc.value(lc.gpwb(M.expr(f), M.expr(g))))


def gpwb_decomposed(M: PoissonWManifold, f, g, x):
    """({f,g}_GHS, X_chi(f,g)) at x; the parts sum to the bracket."""
    lc = _open(M, x, 1)
    f, g = M.expr(f), M.expr(g)
    return _finish(lc, lc.value(lc.ghs(f, g))), _finish(lc, lc.value(lc.xchi_pair(f, g)))


def vec_X(M: PoissonWManifold, f, x) -> np.ndarray:
    """Coordinate components of X_f at x."""
    lc = _open(M, x, 1)
    return _finish(lc, _vec(lc, lc.X(M.expr(f))))


def vec_XM(M: PoissonWManifold, f, x) -> np.ndarray:
    """Coordinate components of the non-symplectic field X_f^M at x."""
    lc = _open(M, x, 1)
    return _finish(lc, _vec(lc, lc.XM(M.expr(f))))


def w_dynamics(M: PoissonWManifold, H, x):
    """w = {H, 1} at x."""
    lc = _open(M, x, 1)
    return _finish(lc, lc.value(lc.w(M.expr(H))))


def lie_bracket(V: Sequence, W: Sequence, x, names=None) -> np.ndarray:
    """[V, W](x) for vector fields given by component expressions."""
    n = len(V)
    if len(W) != n:
        raise ValueError("vector fields must have the same dimension")

    def p(s):
        return s if isinstance(s, ScalarExpr) else parse(str(s), n, names)

    M = PoissonWManifold.build(n, [["0"] * n for _ in range(n)], "0", names=names)
    lc = M.local(x, 1)
    out = lc.lie([lc.field(p(v)) for v in V], [lc.field(p(w)) for w in W])
    return _finish(lc, _vec(lc, out))


def xm_expansion(lc: LocalCalculus, f, g, K):
    """Both sides of the X^M Lie-bracket expansion applied to K (jets)."""
    f, g, K = lc.field(f), lc.field(g), lc.field(K)
    lhs = lc.apply(lc.lie(lc.XM(f), lc.XM(g)), K)
    Xf, Xg, Xc = lc.X(f), lc.X(g), lc.X_chi()
    coeff = 2.0 * lc.apply(Xf, g) + lc.xchi_pair(f, g)
    rhs = (
        lc.apply(lc.lie(Xf, Xg), K)
        + _mul(f, lc.apply(lc.lie(Xc, Xg), K))
        + _mul(g, lc.apply(lc.lie(Xf, Xc), K))
        + _mul(coeff, lc.apply(Xc, K))
    )
    return lhs, rhs


def bracket_XM_expansion(M: PoissonWManifold, f, g, K, x):
    """(lhs, rhs) of [X_f^M, X_g^M]K against its term-by-term expansion."""
    lc = _open(M, x, 2)
    lhs, rhs = xm_expansion(lc, M.expr(f), M.expr(g), M.expr(K))
    return _finish(lc, lc.value(lhs)), _finish(lc, lc.value(rhs))


def omega(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Omega(u, v) = sum_i (u^{p_i} v^{q_i} - u^{q_i} v^{p_i}); last axis 2m."""
    m = u.shape[-1] // 2
    uq, up = u[..., :m], u[..., m:]
    vq, vp = v[..., :m], v[..., m:]
    return (up * vq - uq * vp).sum(axis=-1)


def omega_pair(M: PoissonWManifold, u, v, x=None):
    """Canonical 2-form Omega = dp_i ^ dq^i evaluated on two vectors."""
    if M.n % 2:
        raise ManifoldError("Omega pairing needs an even dimension n = 2m")
    if not M.canonical:
        raise ManifoldError("Omega pairing is only defined for the canonical structure matrix")
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    if u.shape[-1] != M.n or v.shape[-1] != M.n:
        raise ValueError("vector dimension does not match the manifold")
    out = omega(u, v)
    return float(out) if np.ndim(out) == 0 else out
