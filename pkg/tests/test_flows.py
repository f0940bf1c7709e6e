"""Integration and certificate machinery.

Matrix exponentials from scipy serve as the independent reference for
the fixed-step integrator and the variational flow.
"""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from sipkit.errors import DegenerateArgumentError, DivergenceError
from sipkit.flows import (
    CertificateResult,
    Trajectory,
    distance_series,
    integrate,
    overshoot_fit,
    variational_flow,
    verify_contraction,
)
from sipkit.measures import VectorField, lognorm_closed
from sipkit.spaces import NormSpec, dini_plus, norm, sip


def test_integrate_scalar_decay_against_closed_form():
    f = VectorField.linear(np.array([[-1.0]]))
    tr = integrate(f, [1.0], (0.0, 2.0), 1e-3)
    assert tr.states[-1, 0] == pytest.approx(math.exp(-2.0), abs=1e-10)
    assert tr.times[-1] == pytest.approx(2.0, abs=1e-12)


def test_integrate_rk4_order():
    # halving the step should cut the error by ~16x
    f = VectorField.autonomous(lambda u: np.array([u[1], -u[0]]), 2)
    exact = np.array([math.cos(1.0), -math.sin(1.0)])
    errs = []
    for h in (0.1, 0.05):
        tr = integrate(f, [1.0, 0.0], (0.0, 1.0), h)
        errs.append(np.linalg.norm(tr.states[-1] - exact))
    assert errs[0] / errs[1] > 12.0


def test_integrate_matrix_against_expm():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(4, 4))
    A -= (lognorm_closed(A, 2.0).value + 0.5) * np.eye(4)
    u0 = rng.normal(size=4)
    tr = integrate(VectorField.linear(A), u0, (0.0, 1.0), 1e-3)
    assert np.allclose(tr.states[-1], expm(A) @ u0, atol=1e-9)


def test_integrate_uniform_grid_and_validation():
    f = VectorField.linear(np.array([[-1.0]]))
    tr = integrate(f, [1.0], (0.0, 1.0), 0.3)  # step rescaled to fit
    dt = np.diff(tr.times)
    assert np.max(dt) - np.min(dt) <= 1e-15
    with pytest.raises(DegenerateArgumentError):
        integrate(f, [1.0], (1.0, 0.0), 0.1)
    with pytest.raises(DegenerateArgumentError):
        integrate(f, [1.0], (0.0, 1.0), -0.1)


def test_integrate_blowup_sentinel():
    f = VectorField.autonomous(lambda u: u**2, 1)
    with pytest.raises(DivergenceError) as err:
        integrate(f, [2.0], (0.0, 5.0), 1e-3)
    assert err.value.t is not None and 0.0 < err.value.t < 5.0


def test_variational_flow_matches_expm():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(3, 3))
    du0 = rng.normal(size=3)
    base, pert = variational_flow(VectorField.linear(A), rng.normal(size=3), du0, (0.0, 1.0), 1e-3)
    assert np.allclose(pert.states[-1], expm(A) @ du0, atol=1e-8)


def test_variational_flow_nonlinear_tracks_pair_difference():
    f = VectorField.autonomous(lambda u: -(u**3) - u, 1, jac=lambda u: np.array([[-3 * u[0] ** 2 - 1]]))
    eps = 1e-6
    base, pert = variational_flow(f, [0.8], [1.0], (0.0, 1.0), 1e-3)
    tr_a = integrate(f, [0.8], (0.0, 1.0), 1e-3)
    tr_b = integrate(f, [0.8 + eps], (0.0, 1.0), 1e-3)
    finite = (tr_b.states[-1, 0] - tr_a.states[-1, 0]) / eps
    assert pert.states[-1, 0] == pytest.approx(finite, rel=1e-5)


def test_dini_of_distance_bounded_by_rate_times_distance():
    # upper Dini derivative of ||u1 - u2|| along the flow is at most the
    # one-sided Lipschitz rate times the distance
    A = np.array([[-1.0, 2.0], [0.0, -2.0]])
    f = VectorField.linear(A)
    for p in (1.0, 2.0, math.inf):
        spec = NormSpec(p=p)
        mu = lognorm_closed(A, p).value
        u0, v0 = np.array([1.0, -0.5]), np.array([-0.3, 0.4])

        def dist(s):
            if s <= 0.0:
                return norm(u0 - v0, spec)
            tr_u = integrate(f, u0, (0.0, s), 1e-4)
            tr_v = integrate(f, v0, (0.0, s), 1e-4)
            return norm(tr_u.states[-1] - tr_v.states[-1], spec)

        d0 = norm(u0 - v0, spec)
        slope = dini_plus(dist, 0.0)
        assert slope <= mu * d0 + 1e-4
        # and the slope is exactly the semi-inner-product quotient
        ref = sip(u0 - v0, A @ (u0 - v0), spec) / d0
        assert slope == pytest.approx(ref, abs=1e-4)


def test_overshoot_fit_recovers_exponential():
    ts = np.linspace(0.0, 2.0, 80)
    lam, kap = overshoot_fit(ts, 3.0 * np.exp(-1.7 * ts))
    assert lam == pytest.approx(-1.7, abs=1e-10)
    assert kap == pytest.approx(3.0, rel=1e-10)


def test_overshoot_fit_clamps_kappa_to_one():
    ts = np.linspace(0.0, 1.0, 50)
    lam, kap = overshoot_fit(ts, np.exp(-2.0 * ts))
    assert kap == 1.0
    with pytest.raises(DegenerateArgumentError):
        overshoot_fit([0.0, 1.0], [1.0, 0.1])


def test_verify_contraction_passes_scalar_decay():
    f = VectorField.linear(np.array([[-1.0]]))
    res = verify_contraction(
        f, [([1.0], [0.0]), ([0.2], [-0.4])], rate=-1.0, overshoot=1.0, t_span=(0.0, 2.0), h=1e-3
    )
    assert res.passed
    assert res.fitted_rate == pytest.approx(-1.0, abs=1e-3)
    assert res.fitted_overshoot == pytest.approx(1.0, abs=1e-6)


def test_verify_contraction_rejects_overclaimed_rate():
    # symmetric system with slowest mode -1: claiming -1.5 must fail when
    # that mode is excited
    A = np.diag([-1.0, -3.0])
    f = VectorField.linear(A)
    res = verify_contraction(
        f, [([1.0, 0.0], [0.0, 0.0])], rate=-1.5, overshoot=1.0, t_span=(0.0, 1.0), h=1e-3
    )
    assert not res.passed
    assert res.max_violation > 0.0
    assert res.fitted_rate == pytest.approx(-1.0, abs=1e-3)


def test_verify_contraction_weighted_envelope_with_overshoot():
    # rate certified in a weighted norm transfers to the plain norm with
    # the weight's condition number as overshoot
    A = np.array([[-1.0, 10.0], [0.0, -1.0]])
    th = np.diag([1.0, 10.0])
    wspec = NormSpec(p=2.0, weight=th)
    lam = lognorm_closed(th @ A @ np.linalg.inv(th), 2.0).value
    kappa = np.linalg.cond(th)
    f = VectorField.linear(A)
    pairs = [([1.0, 0.3], [-0.2, 0.1]), ([0.0, 1.0], [0.0, 0.0])]
    res_plain = verify_contraction(
        f, pairs, NormSpec(p=2.0), rate=lam, overshoot=kappa * (1 + 1e-9), t_span=(0.0, 3.0), h=1e-3
    )
    assert res_plain.passed
    res_weighted = verify_contraction(
        f, pairs, wspec, rate=lam, overshoot=1.0, t_span=(0.0, 3.0), h=1e-3
    )
    assert res_weighted.passed


def test_verify_contraction_validates_inputs():
    f = VectorField.linear(np.array([[-1.0]]))
    with pytest.raises(DegenerateArgumentError):
        verify_contraction(f, [], rate=-1.0)
    with pytest.raises(DegenerateArgumentError):
        verify_contraction(f, [([1.0], [0.0])], rate=-1.0, overshoot=0.5)


def test_trajectory_shape_guards():
    with pytest.raises(DegenerateArgumentError):
        Trajectory(times=np.array([0.0, 0.1, 0.3]), states=np.zeros((3, 1)), step=0.1)
    with pytest.raises(DegenerateArgumentError):
        Trajectory(times=np.array([0.0, 0.1]), states=np.zeros((3, 1)), step=0.1)


def test_distance_series_in_requested_norm():
    t = np.arange(3) * 0.5
    a = Trajectory(times=t, states=np.array([[1.0, 1.0]] * 3), step=0.5)
    b = Trajectory(times=t, states=np.zeros((3, 2)), step=0.5)
    assert np.allclose(distance_series(a, b, NormSpec(p=1.0)), 2.0)
    assert np.allclose(distance_series(a, b, NormSpec(p=math.inf)), 1.0)
