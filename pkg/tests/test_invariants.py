import math

import numpy as np
import pytest

from sipkit.errors import (
    DegenerateArgumentError,
    DegenerateProjectionError,
    DimensionError,
    RegularityError,
    SymmetryError,
)
from sipkit.flows import Trajectory, integrate
from sipkit.invariants import (
    DiffeoSymmetry,
    LinearSymmetry,
    ManifoldSpec,
    SubspaceSpec,
    equivariance_residual,
    limit_cycle_certificate,
    manifold_certificate,
    newton_project,
    set_distance_decay,
    spatiotemporal_residual,
    subspace_certificate,
)
from sipkit.measures import Ball, Box, DomainSampler, Sphere, VectorField
from sipkit.spaces import NormSpec, norm, sip


def box_sampler(lo, hi, count=40, seed=1):
    return DomainSampler(Box(np.asarray(lo, float), np.asarray(hi, float)), count=count, seed=seed)


def hopf_field(omega=3.0):
    def g(t, u):
        r2 = u[0] ** 2 + u[1] ** 2
        return np.array([u[0] * (1 - r2) - omega * u[1], u[1] * (1 - r2) + omega * u[0]])

    return VectorField(g, 2, name="hopf")


def circle_manifold():
    return ManifoldSpec(
        phi=lambda u: np.array([u[0] ** 2 + u[1] ** 2 - 1.0]),
        dim=2,
        codim=1,
        dphi=lambda u: np.array([[2.0 * u[0], 2.0 * u[1]]]),
    )


# ------------------------------------------------------------ subspaces


def test_subspace_exact_rates_linear_axis():
    # axis e1 is invariant for the triangular field; transverse rate is -2
    A = np.array([[-1.0, 1.0], [0.0, -2.0]])
    f = VectorField.linear(A)
    sub = SubspaceSpec(np.diag([1.0, 0.0]))
    samp = box_sampler([-2, -2], [2, 2])
    for p, kind in ((1.0, "exact-closed-form"), (2.0, "eigen-exact"), (math.inf, "exact-closed-form")):
        rep = subspace_certificate(f, sub, samp, NormSpec(p=p))
        assert rep.invariance_residual == 0.0
        assert rep.rate.kind == kind
        assert abs(rep.rate.value - (-2.0)) < 1e-12
        assert rep.passed


def test_subspace_sampled_rate_tracks_exact():
    A = np.array([[-1.0, 1.0], [0.0, -2.0]])
    f = VectorField.linear(A)
    sub = SubspaceSpec(np.diag([1.0, 0.0]))
    samp = box_sampler([-2, -2], [2, 2])
    rep = subspace_certificate(f, sub, samp, NormSpec(p=3.0))
    assert rep.rate.kind == "sampled-lower-bound"
    # one-dimensional complement: every probe sees the full rate
    assert abs(rep.rate.value - (-2.0)) < 1e-9
    assert rep.passed


def test_subspace_invariance_failure_detected():
    # lower-triangular coupling pushes flow off the e1 axis
    B = np.array([[-1.0, 0.0], [1.0, -2.0]])
    sub = SubspaceSpec(np.diag([1.0, 0.0]))
    rep = subspace_certificate(VectorField.linear(B), sub, box_sampler([-2, -2], [2, 2]))
    assert rep.invariance_residual > 0.5
    assert not rep.passed


def test_subspace_nonlinear_field_sampled():
    # e1 axis invariant, transverse quotient -2 - 3*u1^2 with sup -2 at u1 = 0
    def g(u):
        return np.array([-u[0] + u[1] ** 2, -2.0 * u[1] - u[1] ** 3])

    f = VectorField.autonomous(g, 2)
    sub = SubspaceSpec(np.diag([1.0, 0.0]))
    rep = subspace_certificate(f, sub, box_sampler([-1, -1], [1, 1], count=60))
    assert rep.invariance_residual <= 1e-10
    assert rep.rate.value <= -2.0 + 1e-4
    assert rep.rate.value >= -2.2
    assert rep.passed


def test_subspace_random_linear_two_routes():
    # sampled probe supremum must lower-bound the compressed eigen rate
    # and land close to it for small complements
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = rng.integers(2, 5)
        A = rng.normal(size=(n, n))
        V = np.linalg.qr(rng.normal(size=(n, n)))[0][:, : rng.integers(1, n)]
        P = V @ V.T
        sub = SubspaceSpec(P)
        f = VectorField.linear(A)
        samp = DomainSampler(Ball(np.zeros(n), 1.0), count=10, seed=int(rng.integers(1e6)))
        exact = subspace_certificate(f, sub, samp, NormSpec(p=2.0)).rate.value
        # force the sampled route through a weighted spec equal to identity
        w = NormSpec(p=2.0, weight=np.eye(n))
        sampled = subspace_certificate(f, sub, samp, w).rate.value
        assert sampled <= exact + 1e-9
        assert exact - sampled <= 0.5


def test_subspace_coordinate_compression_p1_pinf():
    rng = np.random.default_rng(11)
    from sipkit.measures import lognorm_closed

    for _ in range(20):
        n = 5
        A = rng.normal(size=(n, n))
        keep = np.zeros(n)
        idx = rng.choice(n, size=2, replace=False)
        keep[idx] = 1.0
        sub = SubspaceSpec(np.diag(1.0 - keep))  # complement = chosen coordinates
        f = VectorField.linear(A)
        samp = DomainSampler(Ball(np.zeros(n), 1.0), count=5, seed=3)
        for p in (1.0, math.inf):
            rep = subspace_certificate(f, sub, samp, NormSpec(p=p))
            want = lognorm_closed(A[np.ix_(sorted(idx), sorted(idx))], p).value
            assert abs(rep.rate.value - want) < 1e-12


def test_subspace_projection_validation():
    with pytest.raises(DegenerateArgumentError):
        SubspaceSpec(np.array([[1.0, 1.0], [0.0, 2.0]]))
    with pytest.raises(DimensionError):
        SubspaceSpec(np.ones((2, 3)))
    sub = SubspaceSpec(np.eye(2))
    with pytest.raises(DegenerateProjectionError):
        subspace_certificate(
            VectorField.linear(-np.eye(2)), sub, box_sampler([-1, -1], [1, 1])
        )


# ------------------------------------------------------------ manifolds


def test_newton_projection_accuracy():
    man = circle_manifold()
    z = newton_project(man, np.array([2.0, 0.0]))
    assert abs(np.linalg.norm(z) - 1.0) < 1e-12
    z2 = newton_project(man, np.array([0.3, -0.4]))
    assert abs(np.linalg.norm(z2) - 1.0) < 1e-10


def test_manifold_certificate_circle():
    gf = hopf_field()
    man = circle_manifold()
    seeds = DomainSampler(Sphere(np.zeros(2), 1.3), count=12, seed=2)
    amb = DomainSampler(Sphere(np.zeros(2), 1.0), count=30, seed=3)
    rep = manifold_certificate(gf, man, seeds, amb)
    assert rep.tangency_residual <= 1e-10
    assert abs(rep.rate.value - (-2.0)) < 1e-6
    assert rep.min_singular_value > 1.0
    assert rep.zero_points == 12
    assert rep.passed


def test_manifold_tangency_failure():
    # radial drift through the circle: phi' f = 2 r^2 (1 - r^2) + 2 r^2 * 0.5 on r=1
    def g(t, u):
        r2 = u[0] ** 2 + u[1] ** 2
        return np.array([u[0] * (1 - r2) + 0.5 * u[0], u[1] * (1 - r2) + 0.5 * u[1]])

    gf = VectorField(g, 2)
    man = circle_manifold()
    seeds = DomainSampler(Sphere(np.zeros(2), 1.3), count=8, seed=2)
    amb = DomainSampler(Sphere(np.zeros(2), 1.0), count=20, seed=3)
    rep = manifold_certificate(gf, man, seeds, amb)
    assert rep.tangency_residual > 0.5
    assert not rep.passed


def test_manifold_regularity_error():
    # duplicated constraint rows make Dphi rank deficient everywhere
    man = ManifoldSpec(
        phi=lambda u: np.array([u[0] - u[1], u[0] - u[1]]),
        dim=2,
        codim=2,
        dphi=lambda u: np.array([[1.0, -1.0], [1.0, -1.0]]),
    )
    f = VectorField.linear(-np.eye(2))
    seeds = box_sampler([-1, -1], [1, 1], count=4)
    amb = box_sampler([-1, -1], [1, 1], count=4, seed=9)
    with pytest.raises(RegularityError):
        manifold_certificate(f, man, seeds, amb)


def test_manifold_linear_constraint_two_routes():
    # linear constraint Cu = 0 with linear field: the constraint-weighted
    # quotient is the Rayleigh quotient of sym(C A C^+), eigen oracle
    rng = np.random.default_rng(13)
    for _ in range(15):
        n, m = 4, 2
        C = rng.normal(size=(m, n))
        A_mat = rng.normal(size=(n, n))
        man = ManifoldSpec(phi=lambda u, C=C: C @ u, dim=n, codim=m, dphi=lambda u, C=C: C)
        f = VectorField.linear(A_mat)
        seeds = DomainSampler(Ball(np.zeros(n), 1.0), count=4, seed=5)
        amb = DomainSampler(Ball(np.zeros(n), 1.0), count=6, seed=6)
        rep = manifold_certificate(f, man, seeds, amb)
        M = C @ A_mat @ np.linalg.pinv(C)
        want = float(np.linalg.eigvalsh((M + M.T) / 2.0)[-1])
        assert rep.rate.value <= want + 1e-9
        assert want - rep.rate.value <= 0.3


def test_manifold_projection_consistency_with_subspace():
    # the subspace certificate and the constraint certificate describe the
    # same structure when phi(u) = Q u; rates must agree
    A = np.array([[-1.0, 1.0], [0.0, -2.0]])
    f = VectorField.linear(A)
    Q = np.diag([0.0, 1.0])
    sub = SubspaceSpec(np.eye(2) - Q)
    man = ManifoldSpec(phi=lambda u: np.array([u[1]]), dim=2, codim=1, dphi=lambda u: np.array([[0.0, 1.0]]))
    samp = box_sampler([-2, -2], [2, 2])
    seeds = box_sampler([-2, -2], [2, 2], count=6, seed=8)
    r1 = subspace_certificate(f, sub, samp, NormSpec(p=2.0)).rate.value
    r2 = manifold_certificate(f, man, seeds, samp, NormSpec(p=2.0)).rate.value
    assert abs(r1 - r2) < 1e-9


# ----------------------------------------------------------- symmetries


def test_equivariance_rotation_of_rotational_field():
    gf = hopf_field()
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    samp = DomainSampler(Ball(np.zeros(2), 1.5), count=50, seed=4)
    assert equivariance_residual(gf, LinearSymmetry(R), samp) <= 1e-12


def test_equivariance_violation_detected():
    f = VectorField.linear(np.diag([-1.0, -2.0]))
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    samp = DomainSampler(Ball(np.zeros(2), 1.5), count=50, seed=4)
    assert equivariance_residual(f, LinearSymmetry(R), samp) > 0.1


def test_equivariance_diffeo_finite_difference_push():
    # scaling commutes with any linear field; push-forward taken by
    # finite differences when no derivative is supplied
    f = VectorField.linear(np.array([[-1.0, 0.5], [0.0, -2.0]]))
    sym = DiffeoSymmetry(h=lambda u: 2.0 * u)
    samp = DomainSampler(Ball(np.zeros(2), 1.0), count=30, seed=5)
    assert equivariance_residual(f, sym, samp) <= 1e-7


def test_spatiotemporal_rotating_drive():
    # quarter-turn spatial shift compensates a quarter-period time shift
    def fd(t, u):
        return -u + np.array([np.cos(t), np.sin(t)])

    fdf = VectorField(fd, 2)
    dt = np.pi / 2
    T = np.array([[np.cos(dt), np.sin(dt)], [-np.sin(dt), np.cos(dt)]])
    samp = DomainSampler(Ball(np.zeros(2), 1.5), count=30, seed=6)
    res = spatiotemporal_residual(fdf, T, dt, 4, samp, times=(0.0, 0.3, 1.7))
    assert res <= 1e-12


def test_spatiotemporal_requires_root_of_identity():
    def fd(t, u):
        return -u

    fdf = VectorField(fd, 2)
    T = np.array([[0.0, 1.0], [-1.0, 0.0]])
    samp = DomainSampler(Ball(np.zeros(2), 1.0), count=5, seed=6)
    with pytest.raises(SymmetryError):
        spatiotemporal_residual(fdf, T, 0.1, 3, samp)
    with pytest.raises(DegenerateArgumentError):
        spatiotemporal_residual(fdf, T, 0.1, 0, samp)


# --------------------------------------------------------- limit cycles


def test_limit_cycle_certificate_hopf():
    gf = hopf_field(omega=3.0)
    man = circle_manifold()
    amb = DomainSampler(Sphere(np.zeros(2), 1.0), count=30, seed=3)
    theta = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    loop = np.c_[np.cos(theta), np.sin(theta)]
    rep = limit_cycle_certificate(gf, man, period=2 * np.pi / 3.0, loop_points=loop, ambient_sampler=amb)
    assert rep.tangency_residual <= 1e-10
    assert abs(rep.rate.value - (-2.0)) < 1e-6
    assert rep.periodicity_residual <= 1e-10
    assert abs(rep.min_speed - 3.0) < 1e-10
    assert rep.passed


def test_limit_cycle_speed_floor_fails_gradient_field():
    # purely radial field: circle is invariant and attracting but motion
    # on it stalls, so no periodic orbit certificate
    def g(t, u):
        r2 = u[0] ** 2 + u[1] ** 2
        return np.array([u[0] * (1 - r2), u[1] * (1 - r2)])

    gf = VectorField(g, 2)
    man = circle_manifold()
    amb = DomainSampler(Sphere(np.zeros(2), 1.0), count=20, seed=3)
    theta = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    loop = np.c_[np.cos(theta), np.sin(theta)]
    rep = limit_cycle_certificate(gf, man, period=1.0, loop_points=loop, ambient_sampler=amb)
    assert rep.tangency_residual <= 1e-10
    assert rep.rate.value < 0
    assert rep.min_speed <= 1e-8
    assert not rep.passed


def test_limit_cycle_period_validation():
    gf = hopf_field()
    man = circle_manifold()
    amb = DomainSampler(Sphere(np.zeros(2), 1.0), count=5, seed=3)
    with pytest.raises(DegenerateArgumentError):
        limit_cycle_certificate(gf, man, period=0.0, loop_points=[[1.0, 0.0]], ambient_sampler=amb)


# ------------------------------------------------------- distance decay


def test_set_distance_decay_hopf_radius():
    gf = hopf_field()
    tr = integrate(gf, np.array([1.6, 0.0]), (0.0, 4.0), 1e-3)
    fit = set_distance_decay(tr, lambda s: abs(np.hypot(s[0], s[1]) - 1.0))
    # linearized radial rate at the circle is -2; transient is faster
    assert fit.rate <= -1.9
    assert not fit.floored
    assert fit.monotonicity_violations == 0
    assert fit.samples == len(tr.times)


def test_set_distance_decay_floored_sentinel():
    f = VectorField.linear(np.array([[-1.0]]))
    tr = integrate(f, np.array([0.0]), (0.0, 1.0), 1e-2)
    fit = set_distance_decay(tr, lambda s: abs(s[0]))
    assert fit.rate == -math.inf
    assert fit.floored


def test_set_distance_decay_counts_violations():
    times = np.linspace(0.0, 5.0, 200)
    states = (np.exp(-times) * (1.1 + np.cos(8.0 * times)))[:, None]
    tr = Trajectory(times=times, states=states, step=times[1] - times[0])
    fit = set_distance_decay(tr, lambda s: abs(s[0]))
    assert fit.monotonicity_violations > 10
    assert fit.rate < -0.5


def test_set_distance_decay_rejects_negative_oracle():
    f = VectorField.linear(np.array([[-1.0]]))
    tr = integrate(f, np.array([1.0]), (0.0, 1.0), 1e-2)
    with pytest.raises(DegenerateArgumentError):
        set_distance_decay(tr, lambda s: -1.0)
