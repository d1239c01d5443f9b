"""Numerical audit of the bracket, frame and dynamics identities.

Each identity is evaluated at uniformly drawn points of a box.  Residuals are
normalized as ``|lhs - rhs| / (1 + max(|lhs|, |rhs|))``.  FORCED identities
hold algebraically under the adopted conventions and must stay below their
tolerance; REPORTED identities are measured and published without a verdict.
Sign-sensitive identities are evaluated under both global signs and the report
names the sign that matches.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import frames
from .dynamics import (
    CONVENTIONS,
    divergence_local,
    general_operator_local,
    reciprocal_tensor_local,
    second_order_local,
    t6_local,
    transport_local,
)
from .expr import ScalarExpr
from .frames import commutator, curvature_structural, jacobi_cyclic, qsu_local, structure_constants
from .manifold import LocalCalculus, PoissonWManifold, omega, tsum, xm_expansion

FORCED = "FORCED"
REPORTED = "REPORTED"
DEFAULT_TOL = 1e-8
CSV_HEADER = ["identity_id", "class", "samples", "rejected", "max_residual", "mean_residual", "sign_note", "verdict"]

__all__ = [
    "FORCED",
    "REPORTED",
    "IdentitySpec",
    "IdentityResult",
    "AuditReport",
    "AuditProblem",
    "CATALOG",
    "catalog_ids",
    "run_audit",
    "jacobi_residual",
    "normalized",
]


def normalized(lhs, rhs) -> np.ndarray:
    """Per-point normalized residual, maximised over any trailing axes."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    r = np.abs(lhs - rhs) / (1.0 + np.maximum(np.abs(lhs), np.abs(rhs)))
    return r.reshape(r.shape[0], -1).max(axis=1) if r.ndim > 1 else r


def _worst(arrays) -> np.ndarray:
    # NaN must win so the point is rejected rather than silently passing
    return np.stack(list(arrays)).max(axis=0)


# -- problem definition ----------------------------------------------------------


@dataclass(frozen=True)
class AuditProblem:
    """Everything an audit needs besides the sample points."""

    manifold: PoissonWManifold
    H: ScalarExpr
    pool: tuple
    box: tuple
    v: tuple | None = None
    name: str = "scenario"

    def __post_init__(self):
        if len(self.pool) < 3:
            raise ValueError("the test-function pool needs at least 3 expressions")
        if len(self.box) != self.manifold.n:
            raise ValueError("box needs one interval per coordinate")


class _Context:
    """Per-chunk evaluation state shared by the identity evaluators."""

    def __init__(self, problem: AuditProblem, points: np.ndarray, consts: np.ndarray):
        self.problem = problem
        self.M = problem.manifold
        self.lc = LocalCalculus(self.M, points, depth=2)
        self.points = points
        self.consts = consts
        self.H = problem.H
        self.pool = list(problem.pool)
        self._lc3 = None
        self._c = None

    @property
    def lc3(self) -> LocalCalculus:
        if self._lc3 is None:
            self._lc3 = LocalCalculus(self.M, self.points, depth=3)
        return self._lc3

    @property
    def c(self) -> np.ndarray:
        if self._c is None:
            self._c = structure_constants(self.lc)
        return self._c

    @property
    def v(self) -> np.ndarray:
        if self.problem.v is not None:
            return np.broadcast_to(np.asarray(self.problem.v, dtype=float), (self.lc.B, self.lc.n))
        return frames.nghs_velocity_values(self.lc, self.H)

    def pairs(self):
        P = len(self.pool)
        return [(self.pool[i], self.pool[(i + 1) % P]) for i in range(P)]

    def triples(self):
        P = len(self.pool)
        return [(self.pool[i], self.pool[(i + 1) % P], self.pool[(i + 2) % P]) for i in range(P)]

    def val(self, j) -> np.ndarray:
        return self.lc.value(j)


@dataclass
class Outcome:
    residual: np.ndarray | None = None
    signs: dict | None = None
    extra: dict = field(default_factory=dict)
    cls: str | None = None
    aux: np.ndarray | None = None


@dataclass(frozen=True)
class IdentitySpec:
    id: str
    description: str
    cls: str
    evaluator: Callable[[_Context], Outcome]
    tol: float | None = DEFAULT_TOL
    needs_phase: bool = False
    needs_canonical: bool = False
    sign_sensitive: bool = False

    def skip_reason(self, M: PoissonWManifold) -> str | None:
        if self.needs_phase and M.n % 2:
            return f"needs an even phase-space dimension (n={M.n})"
        if self.needs_canonical and not M.canonical:
            return "needs the canonical structure matrix"
        return None


# -- evaluators ------------------------------------------------------------------


def _antisymmetry(ctx):
    lc = ctx.lc
    return Outcome(_worst(normalized(ctx.val(lc.gpwb(f, g)), -ctx.val(lc.gpwb(g, f))) for f, g in ctx.pairs()))


def _bilinearity(ctx):
    lc = ctx.lc
    a, b = ctx.consts
    out = []
    for f, g, h in ctx.triples():
        combo = a * lc.field(f) + b * lc.field(g)
        lhs = ctx.val(lc.gpwb(combo, h))
        rhs = a * ctx.val(lc.gpwb(f, h)) + b * ctx.val(lc.gpwb(g, h))
        out.append(normalized(lhs, rhs))
    return Outcome(_worst(out))


def jacobi_terms(lc: LocalCalculus, f, g, h):
    """The three cyclic terms of {f,{g,h}} + {g,{h,f}} + {h,{f,g}} (jets)."""
    return (
        lc.gpwb(f, lc.gpwb(g, h)),
        lc.gpwb(g, lc.gpwb(h, f)),
        lc.gpwb(h, lc.gpwb(f, g)),
    )


def jacobi_residual(M: PoissonWManifold, f, g, h, x):
    """|{f,{g,h}} + {g,{h,f}} + {h,{f,g}}| at x."""
    from .manifold import _finish, _open

    lc = _open(M, x, 2)
    t = jacobi_terms(lc, M.expr(f), M.expr(g), M.expr(h))
    return _finish(lc, np.abs(sum(lc.value(a) for a in t)))


def _jacobi(ctx):
    out = []
    for f, g, h in ctx.triples():
        a, b, c = (ctx.val(t) for t in jacobi_terms(ctx.lc, f, g, h))
        out.append(normalized(a + b, -c))
    return Outcome(_worst(out))


def _decomposition(ctx):
    lc = ctx.lc
    return Outcome(_worst(
        normalized(ctx.val(lc.gpwb(f, g)), ctx.val(lc.ghs(f, g)) + ctx.val(lc.xchi_pair(f, g)))
        for f, g in ctx.pairs()
    ))


def _leibniz(ctx):
    lc = ctx.lc
    out = []
    for f, g, h in ctx.triples():
        fg = lc.field(f) * lc.field(g)
        out.append(normalized(ctx.val(lc.gpwb(fg, h)), ctx.val(lc.ghs(fg, h)) + ctx.val(lc.xchi_pair(fg, h))))
    return Outcome(_worst(out))


def _lie_form(ctx):
    lc = ctx.lc
    out = []
    for f, g in ctx.pairs():
        lhs = ctx.val(lc.gpwb(f, g))
        rhs = ctx.val(lc.apply(lc.XM(f), g)) - ctx.val(lc.field(g)) * ctx.val(lc.xchi(f))
        out.append(normalized(lhs, rhs))
    return Outcome(_worst(out))


def _t4_expansion(ctx):
    out = []
    for f, g, K in ctx.triples():
        lhs, rhs = xm_expansion(ctx.lc, f, g, K)
        out.append(normalized(ctx.val(lhs), ctx.val(rhs)))
    return Outcome(_worst(out))


def _t4_hamiltonian(ctx):
    lc = ctx.lc
    H = lc.field(ctx.H)
    w = lc.w(H)
    plus, minus = [], []
    for f, g in ctx.pairs():
        f, g = lc.field(f), lc.field(g)
        lhs = ctx.val(lc.apply(lc.lie(lc.XM(f), lc.XM(g)), H)) - ctx.val(lc.apply(lc.lie(lc.X(f), lc.X(g)), H))
        Xfg = ctx.val(lc.ghs(f, g))
        pair_chi = ctx.val(lc.xchi_pair(f, g))
        Xw_pair = ctx.val(f * lc.ghs(w, g) - g * lc.ghs(w, f))
        chiH_pair = ctx.val(f * lc.xchi(lc.ghs(H, g)) - g * lc.xchi(lc.ghs(H, f)))
        wv = ctx.val(w)
        fhat = wv * pair_chi + Xw_pair + chiH_pair
        plus.append(normalized(lhs, 2.0 * wv * Xfg + fhat))
        minus.append(normalized(lhs, -2.0 * wv * Xfg - fhat))
    return Outcome(signs={"+": _worst(plus), "-": _worst(minus)})


def _energy(ctx):
    return Outcome(normalized(ctx.val(ctx.lc.gpwb(ctx.H, ctx.H)), 0.0))


def _w_form(ctx):
    # X_H chi differentiates chi itself, so an A that is not E chi shows up here
    lc = ctx.lc
    H = lc.field(ctx.H)
    return Outcome(normalized(ctx.val(lc.w(H)), ctx.val(lc.ghs(H, lc.chi))))


def _force_form(ctx):
    lc = ctx.lc
    H = lc.field(ctx.H)
    F = frames.force_local(lc, H)
    out = []
    for f in ctx.pool:
        rhs = tsum(F[i] * lc.J[j][i] * lc.D(j, f) for i in range(lc.n) for j in range(lc.n))
        out.append(normalized(ctx.val(lc.gpwb(H, f)), ctx.val(rhs)))
    return Outcome(_worst(out))


def _curvature(ctx):
    lc = ctx.lc
    out = []
    for g in ctx.pool:
        for i in range(lc.n):
            for j in range(i + 1, lc.n):
                out.append(normalized(ctx.val(commutator(lc, i, j, g)),
                                      ctx.val(curvature_structural(lc, ctx.c, i, j, g))))
    return Outcome(_worst(out))


def _qsu(ctx):
    lc = ctx.lc
    v = ctx.v
    out = []
    for g in ctx.pool:
        for i in range(lc.n):
            lhs = sum(v[:, j] * ctx.val(commutator(lc, i, j, g)) for j in range(lc.n))
            out.append(normalized(lhs, ctx.val(qsu_local(lc, ctx.c, v, i, g))))
    return Outcome(_worst(out))


def _le1_antisymmetry(ctx):
    c = ctx.c
    return Outcome(normalized(c, -np.swapaxes(c, 1, 2)))


def _le1_jacobi(ctx):
    return Outcome(normalized(jacobi_cyclic(ctx.c), 0.0), aux=ctx.c.reshape(ctx.lc.B, -1))


def _le1_bracket_chi(ctx):
    lc = ctx.lc
    n = lc.n
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            if lc.e is None:
                lhs = np.zeros(lc.B)
            else:
                lhs = ctx.val(lc.apply(lc.lie(lc.e[i], lc.e[j]), lc.chi))
            rhs = sum(ctx.c[:, i, j, r] * ctx.val(lc.A(r)) for r in range(n))
            out.append(normalized(lhs, rhs))
    return Outcome(_worst(out) if out else np.zeros(lc.B))


def _c2_u(ctx):
    lc = ctx.lc
    u = frames.u_local(lc, ctx.H)
    F = np.stack([ctx.val(f) for f in frames.force_local(lc, lc.field(ctx.H))], -1)
    cF = np.einsum("bkji,bi->bkj", ctx.c, F)
    return Outcome(signs={"+": normalized(u, cF), "-": normalized(u, -cF)})


def _c2_t(ctx):
    lc = ctx.lc
    v = ctx.v
    t = frames.t_local(lc, ctx.c, v, ctx.H)
    qH = np.stack([ctx.val(qsu_local(lc, ctx.c, v, k, ctx.H)) for k in range(lc.n)], -1)
    return Outcome(normalized(t, qH))


def _reciprocal_force(ctx):
    lc = ctx.lc
    n = lc.n
    H = lc.field(ctx.H)
    v = ctx.v
    u = frames.u_local(lc, H)
    FH = np.stack([np.stack([ctx.val(curvature_structural(lc, ctx.c, i, j, H)) for j in range(n)], -1)
                   for i in range(n)], -2)
    t = frames.t_local(lc, ctx.c, v, H)
    qH = np.stack([ctx.val(qsu_local(lc, ctx.c, v, i, H)) for i in range(n)], -1)
    u_ji = np.swapaxes(u, 1, 2)
    parts = {}
    for name, s in (("+", 1.0), ("-", -1.0)):
        parts[name] = (normalized(u_ji, s * FH), normalized(t, s * qH))
    return Outcome(
        signs={k: np.maximum(a, b) for k, (a, b) in parts.items()},
        extra={f"u{k}": a for k, (a, _) in parts.items()} | {f"t{k}": b for k, (_, b) in parts.items()},
    )


def _second_order(ctx):
    lc = ctx.lc
    fs = list(ctx.pool) + [lc.coord(a) for a in range(lc.n)]
    out = []
    for f in fs:
        op, ch = second_order_local(lc, ctx.H, f)
        out.append(normalized(ctx.val(op), ctx.val(ch)))
    return Outcome(_worst(out))


def _transport(ctx):
    lc = ctx.lc
    res = {}
    for conv in CONVENTIONS:
        res[conv] = _worst(
            normalized(ctx.val(transport_local(lc, ctx.H, f, conv)), 0.0) for f in ctx.pool
        )
    return Outcome(res["transport"], extra={k: v for k, v in res.items() if k != "transport"})


def _divergence_derived(ctx):
    lhs, _, derived = divergence_local(ctx.lc, ctx.H)
    return Outcome(normalized(lhs, derived))


def _divergence_stated(ctx):
    lhs, stated, _ = divergence_local(ctx.lc, ctx.H)
    return Outcome(normalized(lhs, stated))


def _t6(ctx):
    lhs, rhs = t6_local(ctx.lc, ctx.H, ctx.c)
    return Outcome(normalized(lhs, rhs))


def _general_operator(ctx):
    out = []
    for f in ctx.pool:
        lhs, rhs = general_operator_local(ctx.lc3, ctx.H, f, ctx.c)
        out.append(normalized(lhs, rhs))
    return Outcome(_worst(out))


def _reciprocal_antisymmetry(ctx):
    f, _ = reciprocal_tensor_local(ctx.lc, ctx.H)
    return Outcome(normalized(f, -np.swapaxes(f, 1, 2)))


def _reciprocal_jk(ctx):
    f, r = reciprocal_tensor_local(ctx.lc, ctx.H)
    # r = f - (closed form), so the closed form is f - r
    return Outcome(normalized(f, f - r))


def _omega(ctx):
    lc = ctx.lc
    H = lc.field(ctx.H)
    XH = np.stack([ctx.val(c) for c in lc.XM(H)], -1)
    plus, minus = [], []
    for f in ctx.pool:
        Xf = np.stack([ctx.val(c) for c in lc.XM(f)], -1)
        om = omega(XH, Xf)
        br = ctx.val(lc.gpwb(H, f))
        plus.append(normalized(om, br))
        minus.append(normalized(om, -br))
    return Outcome(signs={"+": _worst(plus), "-": _worst(minus)})


CATALOG: tuple[IdentitySpec, ...] = (
    IdentitySpec("I01-th3-antisymmetry", "{f,g} = -{g,f}", FORCED, _antisymmetry),
    IdentitySpec("I02-th3-bilinearity", "{af+bg,h} = a{f,h} + b{g,h}", FORCED, _bilinearity),
    IdentitySpec("I03-th3-jacobi", "{f,{g,h}} + {g,{h,f}} + {h,{f,g}} = 0", REPORTED, _jacobi, tol=None),
    IdentitySpec("I04-le5-decomposition", "{f,g} = {f,g}_GHS + X_chi(f,g)", FORCED, _decomposition),
    IdentitySpec("I05-th3-leibniz", "{fg,h} = {fg,h}_GHS + X_chi(fg,h)", FORCED, _leibniz),
    IdentitySpec("I06-le5-lie-derivative-form", "{f,g} = L_{X_f^M} g - L_{g X_chi} f", FORCED, _lie_form),
    IdentitySpec("I07-t4-expansion", "[X_f^M,X_g^M]K term-by-term expansion", FORCED, _t4_expansion),
    IdentitySpec("I08-t4-hamiltonian", "[X_f^M,X_g^M]H - [X_f,X_g]H = 2w X_f g + fhat_X(f,g)",
                 REPORTED, _t4_hamiltonian, tol=None, sign_sensitive=True),
    IdentitySpec("I09-energy", "{H,H} = 0", FORCED, _energy),
    IdentitySpec("I10-w-form", "w = {H,1} = X_H chi", FORCED, _w_form),
    IdentitySpec("I11-c1-force-form", "{H,f} = F_i J_ji D_j f", FORCED, _force_form),
    IdentitySpec("I12-cc1-curvature", "[D_i,D_j] g = c_ij^k D_k g", FORCED, _curvature),
    IdentitySpec("I13-cc1-qsu", "F_ij v^j g = w_i^k D_k g", FORCED, _qsu),
    IdentitySpec("I14-le1-antisymmetry", "c_ij^k + c_ji^k = 0", FORCED, _le1_antisymmetry),
    IdentitySpec("I15-le1-jacobi", "cyclic c c sum = 0 (FORCED for constant c)", REPORTED, _le1_jacobi),
    IdentitySpec("I16-le1-bracket-chi", "[E_i,E_j] chi = c_ij^r A_r", FORCED, _le1_bracket_chi),
    IdentitySpec("I17-c2-u", "u_kj = D_j F_k - D_k F_j = (+/-) c_kj^i F_i", FORCED, _c2_u,
                 sign_sensitive=True),
    IdentitySpec("I18-c2-t", "t_k = q_k H = -w_k^j F_j", FORCED, _c2_t),
    IdentitySpec("I19-reciprocal-force", "(u_ji; t_i) = (F_ij; q_i) H", REPORTED, _reciprocal_force,
                 tol=None, sign_sensitive=True),
    IdentitySpec("I20-t1-second-order", "f'' + 2w f' + beta f = d/dt{H,f} + w{H,f}", FORCED, _second_order),
    IdentitySpec("I21-covariant-evolution", "grad f . xdot + w f = {H,f} (transport)", FORCED, _transport),
    IdentitySpec("I22-t2-divergence-derived", "D.(Dx/dt) = div v + A.v + x.Dw + tr(e) w", FORCED,
                 _divergence_derived),
    IdentitySpec("I23-t2-divergence-stated", "D.(Dx/dt) = div v + (x.D + 2) w", REPORTED, _divergence_stated,
                 tol=None),
    IdentitySpec("I24-t6", "[D_i,D_j] Dx^i/dt = c_ij^i(div v + w) + theta_j^k D_k w + w_j^i A_i",
                 REPORTED, _t6, tol=None),
    IdentitySpec("I25-general-operator", "[D_i,D_j]{H,f} = F_ij{H,f} + w c_ij^k E_k f", REPORTED,
                 _general_operator, tol=None),
    IdentitySpec("I26-reciprocal-tensor-antisymmetry", "f_kj = -f_jk", FORCED, _reciprocal_antisymmetry,
                 needs_phase=True),
    IdentitySpec("I27-reciprocal-tensor-jk", "f_kj = u_jk + (L_kj + L_kj chi) w, j != k", REPORTED,
                 _reciprocal_jk, tol=None, needs_phase=True),
    IdentitySpec("I28-omega-pairing", "Omega(X_H^M, X_f^M) = (+/-){H,f}", FORCED, _omega,
                 needs_canonical=True, sign_sensitive=True),
)


def catalog_ids() -> list[str]:
    return [item.id for item in CATALOG]


# -- report ------------------------------------------------------------------------


@dataclass
class IdentityResult:
    identity_id: str
    cls: str
    samples: int
    rejected: int
    max_residual: float
    mean_residual: float
    sign_note: str
    verdict: str
    sign: str | None = None

    def row(self) -> list[str]:
        def fmt(x):
            return "" if x != x else f"{x:.17g}"

        return [self.identity_id, self.cls, str(self.samples), str(self.rejected),
                fmt(self.max_residual), fmt(self.mean_residual), self.sign_note, self.verdict]


@dataclass
class AuditReport:
    scenario: str
    seed: int
    samples: int
    box: tuple
    results: list
    usable_fraction: float

    @property
    def failed(self) -> bool:
        return any(r.verdict == "fail" for r in self.results)

    @property
    def unusable(self) -> bool:
        return self.usable_fraction < 0.5

    def __getitem__(self, identity_id: str) -> IdentityResult:
        for r in self.results:
            if r.identity_id == identity_id:
                return r
        raise KeyError(identity_id)

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.results:
            writer.writerow(r.row())
        return buf.getvalue() if fh is None else ""


def _stats(r: np.ndarray):
    if len(r) == 0:
        return float("nan"), float("nan")
    return float(r.max()), float(r.mean())


def _summarize(item: IdentitySpec, valid: np.ndarray, out: Outcome, total: int) -> IdentityResult:
    cls = out.cls or item.cls
    tol = item.tol if item.tol is not None else DEFAULT_TOL
    if out.signs is None:
        r = out.residual
        ok = valid & np.isfinite(r)
        used = r[ok]
        mx, mean = _stats(used)
        notes = []
        for name, arr in out.extra.items():
            e = arr[ok]
            notes.append(f"{name} max={_stats(e)[0]:.3g}")
        verdict = "reported" if cls == REPORTED else ("pass" if mx <= tol else "fail")
        return IdentityResult(item.id, cls, int(ok.sum()), total - int(ok.sum()), mx, mean,
                              "; ".join(notes), verdict)

    rp, rm = out.signs["+"], out.signs["-"]
    ok = valid & np.isfinite(rp) & np.isfinite(rm)
    rp, rm = rp[ok], rm[ok]
    plus_only = (rp <= tol) & (rm > tol)
    minus_only = (rm <= tol) & (rp > tol)
    both = (rp <= tol) & (rm <= tol)
    neither = (rp > tol) & (rm > tol)
    extra = "; ".join(f"{k} max={_stats(v[ok])[0]:.3g}" for k, v in out.extra.items())
    if cls == FORCED:
        if plus_only.any() and minus_only.any():
            sign = "inconsistent"
            used = np.minimum(rp, rm)
            verdict = "fail"
        else:
            sign = "+" if plus_only.any() else "-" if minus_only.any() else "degenerate"
            used = rm if sign == "-" else rp
            verdict = "pass" if len(used) and used.max() <= tol else "fail"
            if sign == "degenerate" and neither.any():
                verdict = "fail"
        note = (f"sign={sign}; determined+={int(plus_only.sum())} determined-={int(minus_only.sum())} "
                f"degenerate={int(both.sum())} unmatched={int(neither.sum())}")
    else:
        mp, mm = _stats(rp)[0], _stats(rm)[0]
        sign = "+" if mp <= mm else "-"
        used = rp if sign == "+" else rm
        verdict = "reported"
        note = f"closer sign={sign}; max+={mp:.3g} max-={mm:.3g}"
    if extra:
        note = f"{note}; {extra}"
    mx, mean = _stats(used)
    return IdentityResult(item.id, cls, int(ok.sum()), total - int(ok.sum()), mx, mean, note, verdict, sign)


def _sample(problem: AuditProblem, samples: int, seed: int):
    rng = np.random.Generator(np.random.PCG64(seed))
    box = np.asarray(problem.box, dtype=float)
    points = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((samples, problem.manifold.n))
    consts = rng.uniform(-2.0, 2.0, size=2)
    return points, consts


def _evaluate_chunk(problem, points, consts, specs):
    ctx = _Context(problem, points, consts)
    results = {}
    with np.errstate(all="ignore"):
        for item in specs:
            results[item.id] = item.evaluator(ctx)
    return ctx.lc.valid.copy(), results


def _concat(outcomes: list) -> Outcome:
    first = outcomes[0]

    def cat(get):
        return np.concatenate([get(o) for o in outcomes])

    return Outcome(
        residual=None if first.residual is None else cat(lambda o: o.residual),
        signs=None if first.signs is None else {k: cat(lambda o, k=k: o.signs[k]) for k in first.signs},
        extra={k: cat(lambda o, k=k: o.extra[k]) for k in first.extra},
        cls=first.cls,
        aux=None if first.aux is None else cat(lambda o: o.aux),
    )


def run_audit(problem: AuditProblem, samples: int = 500, seed: int = 0, identities="all",
              threads: int | None = None, chunk: int = 256) -> AuditReport:
    """Evaluate the identity catalog at ``samples`` seeded uniform points."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    M = problem.manifold
    wanted = catalog_ids() if identities in ("all", None) else list(identities)
    unknown = set(wanted) - set(catalog_ids())
    if unknown:
        raise ValueError(f"unknown identities: {sorted(unknown)}")
    selected = [s for s in CATALOG if s.id in wanted]
    active = [s for s in selected if s.skip_reason(M) is None]

    points, consts = _sample(problem, samples, seed)
    chunks = [points[i : i + chunk] for i in range(0, samples, chunk)]
    threads = threads or os.cpu_count() or 1
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda p: _evaluate_chunk(problem, p, consts, active), chunks))
    else:
        parts = [_evaluate_chunk(problem, p, consts, active) for p in chunks]
    valid = np.concatenate([v for v, _ in parts])

    results = []
    for item in selected:
        reason = item.skip_reason(M)
        if reason is not None:
            results.append(IdentityResult(item.id, item.cls, 0, 0, float("nan"), float("nan"),
                                          f"skipped: {reason}", "skipped"))
            continue
        out = _concat([r[item.id] for _, r in parts])
        if item.id == "I15-le1-jacobi":
            out.cls = FORCED if _constant_structure(out.aux, valid) else REPORTED
        results.append(_summarize(item, valid, out, samples))
    return AuditReport(problem.name, seed, samples, tuple(map(tuple, problem.box)), results,
                       float(valid.mean()))


def _constant_structure(c: np.ndarray, valid: np.ndarray) -> bool:
    """True when the sampled structure functions do not vary over the box."""
    c = c[valid & np.all(np.isfinite(c), axis=1)]
    if len(c) == 0:
        return False
    return bool(np.ptp(c, axis=0).max() <= 1e-12 * (1.0 + np.abs(c).max()))
