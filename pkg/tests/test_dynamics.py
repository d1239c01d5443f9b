import numpy as np
import pytest

import oracles
from conftest import HEIS_FRAME, HEIS_J
from gchs.dynamics import (
    CONVENTIONS,
    IntegrationError,
    TrajectoryConfig,
    covariant_force,
    divergence_identity,
    general_operator_residual,
    integrate,
    reciprocal_tensor,
    rhs,
    second_order,
    second_order_at,
    t6_identity,
    transport_residual,
)
from gchs.frames import u_tensor
from gchs.manifold import PoissonWManifold, covariant_D, gpwb, w_dynamics

H_OSC = "0.5*(q1^2+p1^2)"


def osc(chi="0"):
    return PoissonWManifold.build(2, "canonical", chi)


def cfg(M, H, x0, t1=1.0, h=1e-3, **kw):
    return TrajectoryConfig(M, M.expr(H), tuple(x0), 0.0, t1, h, **kw)


# -- right-hand sides -----------------------------------------------------------------------


def test_rhs_abelian_circle_speed(rng):
    M = osc()
    for x in rng.uniform(-2, 2, size=(10, 2)):
        for conv in CONVENTIONS:
            v = rhs(M, H_OSC, conv, x)
            assert v @ v == pytest.approx(x @ x)


def test_rhs_examples():
    assert not rhs(osc(), "3", "transport", (1.0, 2.0)).any()
    # a constant H still has D_q H = A_q H when chi varies: {3, p} = 3, w = 0
    np.testing.assert_allclose(rhs(osc("q1"), "3", "transport", (1.0, 2.0)), [0, 3])
    np.testing.assert_allclose(rhs(osc("q1"), H_OSC, "transport", (1.0, 2.0)), [-2, 3.5])


def test_rhs_conventions_relate():
    M, x = osc("q1"), np.array([1.0, 2.0])
    nghs = rhs(M, H_OSC, "nghs-literal", x)
    np.testing.assert_allclose(nghs, -rhs(M, H_OSC, "transport", x))
    w = w_dynamics(M, H_OSC, x)
    np.testing.assert_allclose(rhs(M, H_OSC, "eq1-literal", x), nghs - w * x)


def test_transport_residual(heisenberg, rng):
    f = "x1^2*x3 - x2 + x1*x2*x3"
    for x in rng.uniform(-1, 1, size=(10, 3)):
        assert abs(transport_residual(heisenberg, "x1*x3 + x2^2", f, x)) <= 1e-10
    for conv in CONVENTIONS:
        assert abs(transport_residual(osc("q1"), H_OSC, "1", (0.3, 0.8), conv)) <= 1e-14
    assert abs(transport_residual(osc("q1"), H_OSC, "q1*p1", (0.3, 0.8), "nghs-literal")) > 1e-3


def test_transport_matches_fd_of_observable():
    # d/dt f along the flow, by differencing a short trajectory, plus w f equals {H, f}
    M, f = osc("0.3*q1"), "q1*p1^2"
    x0 = np.array([0.4, -0.7])
    tr = integrate(cfg(M, H_OSC, x0, t1=2e-3, h=1e-3))
    fv = [oracles.value(M.expr(f), x) for x in tr.x]
    fdot = (-3 * fv[0] + 4 * fv[1] - fv[2]) / 2e-3
    assert fdot + tr.w[0] * fv[0] == pytest.approx(gpwb(M, H_OSC, f, x0), abs=1e-5)


# -- integration ----------------------------------------------------------------------------


@pytest.mark.parametrize("method", ["RK4", "RK45"])
def test_harmonic_oscillator_closed_form(method):
    tr = integrate(cfg(osc(), H_OSC, (1, 0), method=method))
    np.testing.assert_allclose(tr.x[-1], [np.cos(1), np.sin(1)], atol=1e-6)
    assert tr.t[-1] == 1.0 and len(tr.t) == 1001


def test_nghs_literal_runs_backwards():
    tr = integrate(cfg(osc(), H_OSC, (1, 0), convention="nghs-literal"))
    np.testing.assert_allclose(tr.x[-1], [np.cos(1), -np.sin(1)], atol=1e-6)


def test_zero_rhs_is_stationary():
    tr = integrate(cfg(osc(), "2", (0.3, -0.2), t1=0.5, h=0.1))
    assert np.array_equal(tr.x, np.tile([0.3, -0.2], (6, 1)))
    assert not tr.s.any()


def test_invariant_is_conserved_and_H_transports(heisenberg):
    H = "0.5*x1^2 + 0.5*x2^2 + 0.5*x3^2 + 0.1*x1*x3"
    tr = integrate(cfg(heisenberg, H, (0.5, 0.2, -0.3), t1=10.0))
    assert tr.drift() <= 1e-7
    # pointwise Hdot + w H = 0 along the trajectory
    for x in tr.x[::500]:
        assert abs(transport_residual(heisenberg, H, H, x)) <= 1e-9
    assert np.ptp(tr.H) > 1e-2  # H itself is not conserved when w != 0


def test_rk4_convergence_order():
    M = osc("0.3*q1")
    H = "0.5*p1^2 + 10*q1^2"
    drifts = [integrate(cfg(M, H, (1, 0), t1=10.0, h=h)).drift() for h in (1e-3, 5e-4)]
    assert drifts[0] <= 1e-7
    assert np.log2(drifts[0] / drifts[1]) == pytest.approx(4.0, abs=0.3)


def test_observables_recorded():
    M = osc()
    tr = integrate(TrajectoryConfig(M, M.expr(H_OSC), (1, 0), 0, 1, 1e-2,
                                    observables=(M.expr("q1^2 + p1^2"),)))
    (vals,) = tr.observables.values()
    np.testing.assert_allclose(vals, 1, atol=1e-9)


def test_blow_up_reports_last_time():
    with pytest.raises(IntegrationError) as info:
        integrate(cfg(osc(), "-p1*q1^2", (1, 0), t1=2.0))
    assert 0.9 < info.value.t_last < 1.1
    with pytest.raises(IntegrationError):
        integrate(cfg(osc(), "-p1*q1^2", (1, 0), t1=2.0, method="RK45"))


def test_domain_error_reports_last_time():
    with pytest.raises(IntegrationError, match="domain"):
        integrate(cfg(osc(), "-p1*log(q1)", (0.5, 0), t1=3.0))


@pytest.mark.parametrize(
    "kw",
    [dict(h=0.0), dict(t1=0.0), dict(h=0.3), dict(method="euler"), dict(convention="other"),
     dict(method="RK45", rtol=1e-13)],
)
def test_config_validation(kw):
    M = osc()
    base = dict(t1=1.0, h=1e-2)
    base.update(kw)
    t1, h = base.pop("t1"), base.pop("h")
    with pytest.raises(ValueError):
        integrate(TrajectoryConfig(M, M.expr(H_OSC), (1, 0), 0.0, t1, h, **base))


# -- second-order operator ---------------------------------------------------------------------------


def test_second_order_coordinate_is_acceleration_flow():
    M = osc("0.3*q1 + 0.1*p1^2")
    H = "0.5*p1^2 + q1^2"
    tr = integrate(cfg(M, H, (0.6, 0.1), t1=0.02, h=1e-3))
    k = 10
    dt = 1e-3
    acc = (tr.x[k + 1] - 2 * tr.x[k] + tr.x[k - 1]) / dt**2
    vel = (tr.x[k + 1] - tr.x[k - 1]) / (2 * dt)
    wdot = (tr.w[k + 1] - tr.w[k - 1]) / (2 * dt)
    beta = tr.w[k] ** 2 + wdot
    for i in range(2):
        opform, chained = second_order(M, H, tr, tr.t[k], f"x{i + 1}")
        assert opform == pytest.approx(chained, abs=1e-10)
        fd = acc[i] + 2 * tr.w[k] * vel[i] + beta * tr.x[k, i]
        assert opform == pytest.approx(fd, abs=1e-4)


def test_second_order_abelian_oscillator():
    M = osc()
    for x in np.random.default_rng(3).uniform(-1, 1, size=(5, 2)):
        opform, chained = second_order_at(M, H_OSC, "q1", x)
        assert opform == pytest.approx(-x[0], abs=1e-14)
        assert chained == pytest.approx(-x[0], abs=1e-14)


def test_second_order_momentum_form(rng):
    M = PoissonWManifold.build(4, "canonical", "0.2*q1*p2 + 0.1*q2")
    H = "0.5*p1^2 + 0.5*p2^2 + 0.5*q1^2 + q2^2 + 0.1*q1^2*q2"
    for x in rng.uniform(-1, 1, size=(10, 4)):
        for f in ("p1", "p2"):
            opform, chained = second_order_at(M, H, f, x)
            assert abs(opform - chained) <= 1e-7 * (1 + abs(opform))


def test_second_order_needs_interior_transport_point():
    M = osc()
    tr = integrate(cfg(M, H_OSC, (1, 0), t1=0.1, h=0.01))
    with pytest.raises(ValueError):
        second_order(M, H_OSC, tr, 0.0, "q1")
    tr2 = integrate(cfg(M, H_OSC, (1, 0), t1=0.1, h=0.01, convention="nghs-literal"))
    with pytest.raises(ValueError):
        second_order(M, H_OSC, tr2, 0.05, "q1")


# -- covariant force and reciprocal tensor --------------------------------------------------------------


def test_covariant_force_examples(rng):
    x = np.array([1.0, 2.0])
    np.testing.assert_allclose(covariant_force(osc(), H_OSC, x), -x)
    assert not covariant_force(osc(), "5", x).any()
    # w = -2 and p = 2 for both indices: (-3.5 - 4, -2 - 4)
    np.testing.assert_allclose(covariant_force(osc("q1"), H_OSC, x), [-7.5, -6])
    with pytest.raises(ValueError):
        covariant_force(PoissonWManifold.build(3, HEIS_J, "0", frame=HEIS_FRAME), "x1", (0, 0, 0))


def test_covariant_force_fd_oracle():
    # F_0 = dp/dt + p w along the nghs-literal flow (xdot = J.DH)
    M, x0 = osc("q1"), np.array([1.0, 2.0])
    dt = 1e-4
    tr = integrate(cfg(M, H_OSC, x0, t1=2 * dt, h=dt, convention="nghs-literal"))
    p = tr.x[:, 1]
    pdot = (-3 * p[0] + 4 * p[1] - p[2]) / (2 * dt)
    assert covariant_force(M, H_OSC, x0)[0] == pytest.approx(pdot + p[0] * tr.w[0], abs=1e-6)


def test_reciprocal_tensor(rng):
    M = osc("q1")
    for x in rng.uniform(-1, 1, size=(10, 2)):
        f, r = reciprocal_tensor(M, "q1^2*p1 + p1^2", x)
        assert np.abs(f + f.T).max() <= 1e-10
        assert np.isfinite(r).all() and not np.diag(r).any()
    M0 = osc()
    x = (0.3, 0.5)
    f, _ = reciprocal_tensor(M0, "q1^2*p1 + p1^2", x)
    np.testing.assert_allclose(f, u_tensor(M0, "q1^2*p1 + p1^2", x), atol=1e-14)


# -- divergence, t6 and the general operator ------------------------------------------------------------------


def test_divergence_abelian():
    lhs, stated, derived = divergence_identity(osc(), "q1^3*p1 + p1^2", (0.3, -0.6))
    assert lhs == pytest.approx(derived, abs=1e-14)
    assert stated == pytest.approx(derived, abs=1e-14)


def test_divergence_when_A_orthogonal_to_v(rng):
    # chi depends on q only and H does not depend on p, so A.v = 0
    M = osc("sin(q1)")
    for x in rng.uniform(-1, 1, size=(10, 2)):
        lhs, stated, derived = divergence_identity(M, "q1^2 + 2", x)
        assert stated == pytest.approx(derived, abs=1e-12)
        assert lhs == pytest.approx(derived, abs=1e-12)


def test_divergence_generic_three_dimensional(heisenberg, rng):
    H = "x1*x3 + 0.5*x2^2 + x1"
    for x in rng.uniform(-1, 1, size=(10, 3)):
        lhs, stated, derived = divergence_identity(heisenberg, H, x)
        assert abs(lhs - derived) <= 1e-8


@pytest.mark.parametrize(
    "M, H, trace",
    [
        (PoissonWManifold.build(2, "canonical", "q1"), "q1^2*p1 + p1^2", 2),
        (PoissonWManifold.build(3, HEIS_J, "x2", frame=HEIS_FRAME), "x1*x3 + 0.5*x2^2 + x1", 3),
        (PoissonWManifold.build(4, "canonical", "0.2*q1*p2 + 0.1*q2"), "p1^2 + q2*p2 + q1^2", 4),
    ],
)
def test_divergence_gap_is_multiple_of_w(M, H, trace, rng):
    # A.v = -w for v = J.DH, so the two right-hand sides differ by (tr(e) - 3) w
    for x in rng.uniform(-1, 1, size=(10, M.n)):
        lhs, stated, _ = divergence_identity(M, H, x)
        assert lhs - stated == pytest.approx((trace - 3) * w_dynamics(M, H, x), abs=1e-12)


def test_divergence_lhs_fd_oracle(heisenberg, rng):
    H = "x1*x3 + 0.5*x2^2"
    M = heisenberg

    def g(y):  # v_k + w x_k with v = J.DH in frame components
        J = np.array([[oracles.value(c, y) for c in row] for row in M.J])
        return J @ covariant_D(M, H, y) + w_dynamics(M, H, y) * np.asarray(y)

    for x in rng.uniform(-1, 1, size=(3, 3)):
        e = np.array([[oracles.value(c, x) for c in row] for row in M.frame])
        A = e @ oracles.grad(M.chi, x)
        jac = oracles.jacobian(g, x)  # jac[k, a]
        lhs_fd = np.trace(e @ jac.T) + A @ g(x)
        assert divergence_identity(M, H, x)[0] == pytest.approx(lhs_fd, abs=1e-7)


def test_t6_identity(heisenberg, rng):
    lhs, rhs_ = t6_identity(osc("q1"), H_OSC, (0.2, 0.3))
    assert not lhs.any() and not rhs_.any()
    for x in rng.uniform(-1, 1, size=(5, 3)):
        lhs, rhs_ = t6_identity(heisenberg, "x1*x3 + x2", x)
        lit, _ = t6_identity(heisenberg, "x1*x3 + x2", x, literal=True)
        np.testing.assert_allclose(lit, lhs, atol=1e-12)
        assert np.isfinite(rhs_).all()


def test_general_operator_reported(heisenberg, rng):
    r = general_operator_residual(heisenberg, "x1*x3 + x2", "x1*x2", rng.uniform(-1, 1, size=(5, 3)))
    assert r.shape == (5,) and np.isfinite(r).all()
    assert general_operator_residual(osc("q1"), H_OSC, "q1*p1", (0.1, 0.2)) == 0
