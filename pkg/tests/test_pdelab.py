import math

import numpy as np
import pytest

from sipkit.errors import (
    CertificateRefusedError,
    DegenerateArgumentError,
    DimensionError,
    StepSizeError,
    UnsupportedNormError,
)
from sipkit.flows import integrate, overshoot_fit
from sipkit.measures import Ball, DomainSampler, Points, VectorField
from sipkit.pdelab import (
    Grid1D,
    Grid2D,
    SobolevSpec,
    build_laplacian,
    conservation_rate,
    demean,
    difference_operator,
    fixed_point_solve,
    mass_zero_basis,
    pattern_report,
    poincare_rate,
    rd_simulate,
    sobolev_rate,
    total_mass,
)
from sipkit.spaces import NormSpec, norm


def central_difference(grid):
    N = grid.n
    return (np.roll(np.eye(N), -1, axis=1) - np.roll(np.eye(N), 1, axis=1)) / (2.0 * grid.h)


def discrete_gap(grid):
    # first nonconstant Fourier mode of the periodic second difference
    h = grid.h
    return -(2.0 / h**2) * (1.0 - math.cos(2.0 * math.pi * h / grid.length))


# ------------------------------------------------------------- operators


def test_laplacian_frozen_stencil():
    L = build_laplacian(Grid1D(3, "dirichlet"))
    want = np.array([[-32.0, 16.0, 0.0], [16.0, -32.0, 16.0], [0.0, 16.0, -32.0]])
    assert np.array_equal(L, want)


def test_laplacian_symmetric_and_dissipative_all_bcs():
    rng = np.random.default_rng(3)
    for bc in ("dirichlet", "neumann", "periodic"):
        L = build_laplacian(Grid1D(24, bc))
        assert np.array_equal(L, L.T)
        for v in rng.normal(size=(100, 24)):
            assert v @ L @ v <= 1e-10
        if bc != "dirichlet":
            assert np.max(np.abs(L.sum(axis=1))) <= 1e-10  # constants in kernel


def test_laplacian_dirichlet_spectrum():
    g = Grid1D(128, "dirichlet")
    L = build_laplacian(g)
    h = g.h
    want = -(4.0 / h**2) * math.sin(math.pi * h / 2.0) ** 2
    assert abs(np.linalg.eigvalsh(L)[-1] - want) < 1e-8


def test_difference_operator_shapes_and_composition():
    g = Grid1D(10, "dirichlet")
    D1 = difference_operator(g, 1)
    assert D1.shape == (11, 10)
    assert np.allclose(-(D1.T @ D1), build_laplacian(g))
    gp = Grid1D(10, "periodic")
    for k in range(1, 5):
        assert difference_operator(gp, k).shape == (10, 10)
    gn = Grid1D(10, "neumann")
    assert difference_operator(gn, 2).shape == (8, 10)
    with pytest.raises(DegenerateArgumentError):
        difference_operator(g, 5)
    with pytest.raises(UnsupportedNormError):
        difference_operator(Grid2D(4, "dirichlet"), 2)


def test_grid_validation_and_spacing():
    assert Grid1D(7, "dirichlet").h == 1.0 / 8.0
    assert Grid1D(8, "periodic").h == 1.0 / 8.0
    assert Grid1D(9, "neumann").h == 1.0 / 8.0
    with pytest.raises(DimensionError):
        Grid1D(2)
    with pytest.raises(DegenerateArgumentError):
        Grid1D(5, "robin")
    with pytest.raises(DegenerateArgumentError):
        Grid1D(5, "dirichlet", length=0.0)


def test_grid2d_laplacian_kron_structure():
    g = Grid2D((3, 4), "dirichlet")
    L2 = build_laplacian(g)
    gx, gy = g.axes
    Lx, Ly = build_laplacian(gx), build_laplacian(gy)
    rng = np.random.default_rng(4)
    U = rng.normal(size=(3, 4))
    assert np.allclose(L2 @ U.ravel(), (Lx @ U + U @ Ly.T).ravel())
    assert np.array_equal(L2, L2.T)


# ---------------------------------------------------------- spectral gap


def test_poincare_dirichlet_second_order_convergence():
    errs = []
    for n in (16, 32, 64, 128):
        rate = poincare_rate(Grid1D(n, "dirichlet")).value
        errs.append(abs(rate + math.pi**2))
    assert errs[-1] <= 0.01 * math.pi**2
    for a, b in zip(errs, errs[1:]):
        assert 3.5 <= a / b <= 4.5  # O(h^2)


def test_poincare_periodic_mass_zero():
    g = Grid1D(128, "periodic")
    r = poincare_rate(g)
    assert abs(r.value + 4.0 * math.pi**2) <= 0.005 * 4.0 * math.pi**2
    assert abs(r.value - discrete_gap(g)) < 1e-9


def test_poincare_neumann_degenerate_flag():
    r = poincare_rate(Grid1D(32, "neumann"))
    assert r.value == 0.0
    assert "degenerate" in r.note


def test_poincare_rejects_other_norms():
    with pytest.raises(UnsupportedNormError):
        poincare_rate(Grid1D(16, "dirichlet"), NormSpec(p=1.0))


# -------------------------------------------------------------- simulate


def test_rd_heat_mode_decay_periodic():
    g = Grid1D(64, "periodic")
    u0 = demean(np.sin(2.0 * np.pi * g.points))
    h_t = 0.9 * g.h**2 / 2.0
    tr = rd_simulate(1.0, None, g, u0, (0.0, 0.1), h_t)
    d = np.array([np.linalg.norm(s) for s in tr.states])
    assert d[-1] <= math.exp(-4.0 * math.pi**2 * (1.0 - 0.02) * tr.times[-1]) * d[0]
    lam, _ = overshoot_fit(tr.times, d)
    assert abs(lam - discrete_gap(g)) <= 0.005 * abs(discrete_gap(g))


def test_rd_mean_channel_decays_with_reaction():
    # the mean is untouched by diffusion and obeys d/dt mean = -mean
    g = Grid1D(32, "periodic")
    u0 = 1.0 + 0.2 * np.sin(2.0 * np.pi * g.points)
    h_t = 0.9 * g.h**2 / 2.0
    tr = rd_simulate(1.0, lambda t, U: -U, g, u0, (0.0, 0.5), h_t)
    m0 = tr.states[0].mean()
    mT = tr.states[-1].mean()
    assert abs(mT - m0 * math.exp(-tr.times[-1])) < 1e-8


def test_rd_neumann_conserves_mass():
    g = Grid1D(33, "neumann")
    u0 = 1.0 + np.cos(np.pi * g.points)
    tr = rd_simulate(1.0, None, g, u0, (0.0, 0.2), 0.9 * g.h**2 / 2.0)
    m = total_mass(g, tr.states)
    assert np.max(np.abs(m - m[0])) <= 1e-10


def test_rd_stability_guard():
    g = Grid1D(32, "periodic")
    u0 = np.zeros(32)
    limit = g.h**2 / 2.0
    with pytest.raises(StepSizeError) as ei:
        rd_simulate(1.0, None, g, u0, (0.0, 0.1), 2.0 * limit)
    assert ei.value.suggested <= limit + 1e-15
    tr = rd_simulate(1.0, None, g, np.sin(2 * np.pi * g.points), (0.0, 0.05), ei.value.suggested)
    assert np.all(np.isfinite(tr.states))


def test_rd_validation():
    g = Grid1D(16, "periodic")
    with pytest.raises(DegenerateArgumentError):
        rd_simulate(0.0, None, g, np.zeros(16), (0.0, 0.1), 1e-4)
    with pytest.raises(DimensionError):
        rd_simulate(1.0, None, g, np.zeros(7), (0.0, 0.1), 1e-4)


# --------------------------------------------------------------- patterns


def test_pattern_suppression_passes_for_decay_reaction():
    g = Grid1D(64, "periodic")
    samp = DomainSampler(Ball(np.zeros(64), 1.0), count=8, seed=0)
    rep = pattern_report(1.0, lambda t, u: -u, g, samp, mode="suppression")
    assert rep.invariance_residual <= 1e-12
    assert abs(rep.reaction_rate + 1.0) < 1e-8
    assert rep.condition_implemented
    # unscaled comparison is against the (negative) diffusion rate itself;
    # it fails here and is recorded, not enforced
    assert not rep.condition_unscaled
    gap = discrete_gap(g)
    assert abs(rep.predicted_bound - (gap - 1.0)) < 1e-6
    assert rep.simulated_rate <= rep.predicted_bound + 1e-3
    assert rep.mode1_growth < 1.0
    assert rep.passed


def test_pattern_suppression_fails_above_gap():
    g = Grid1D(64, "periodic")
    samp = DomainSampler(Ball(np.zeros(64), 1.0), count=8, seed=0)
    lam = 1.2 * 4.0 * math.pi**2
    rep = pattern_report(1.0, lambda t, u: lam * u, g, samp, mode="suppression", t_span=0.15)
    assert not rep.condition_implemented
    assert rep.predicted_bound > 0
    assert rep.mode1_growth > 1.0
    assert not rep.passed


def test_pattern_excitation_anti_synchronized_mode():
    g = Grid1D(64, "periodic")
    L = build_laplacian(g)
    ustar = np.sin(2.0 * np.pi * g.points)
    lam1 = float(ustar @ (L @ ustar) / (ustar @ ustar))  # exact grid eigenvalue
    c = abs(lam1) / 2.0
    rep = pattern_report(
        (1.0, 1.0),
        lambda t, own, other: c * (own - other),
        g,
        mode="excitation",
        witness=ustar,
        t_span=0.4,
    )
    assert max(rep.stationarity_residuals) <= 1e-8
    assert rep.sum_mode_rate < -30.0
    assert abs(rep.pattern_mode_rate) <= 1e-6  # marginal: the pattern persists
    assert rep.simulated_sum_ratio < 1e-3
    assert rep.simulated_pattern_ratio > 0.9
    assert rep.passed


def test_pattern_excitation_needs_witness():
    g = Grid1D(16, "periodic")
    with pytest.raises(DegenerateArgumentError):
        pattern_report((1.0, 1.0), lambda t, a, b: a - b, g, mode="excitation", witness=None)
    with pytest.raises(DegenerateArgumentError):
        pattern_report(
            (1.0, 1.0), lambda t, a, b: a - b, g, mode="excitation", witness=np.zeros(16)
        )
    with pytest.raises(DegenerateArgumentError):
        pattern_report(1.0, lambda t, u: -u, g, mode="bloom")


# ----------------------------------------------------------------- sobolev


def test_sobolev_scalar_field_rate_is_minus_one():
    g = Grid1D(32, "periodic")
    F = VectorField.linear(-np.eye(32))
    for k in (0, 1, 2):
        r = sobolev_rate(F, g, SobolevSpec(k=k, p=2.0))
        assert abs(r.value + 1.0) < 1e-9
    samp = DomainSampler(Ball(np.zeros(32), 1.0), count=20, seed=1)
    r = sobolev_rate(F, g, SobolevSpec(k=1, p=3.0), sampler=samp)
    assert abs(r.value + 1.0) < 1e-9


def test_sobolev_laplacian_mass_zero_hits_gap():
    g = Grid1D(64, "periodic")
    F = VectorField.linear(build_laplacian(g))
    r = sobolev_rate(F, g, SobolevSpec(k=1, p=2.0), mass_zero=True)
    assert abs(r.value - discrete_gap(g)) < 1e-6
    assert r.value <= -4.0 * math.pi**2 + 0.05


def test_sobolev_shift_property():
    g = Grid1D(48, "periodic")
    L = build_laplacian(g)
    base = sobolev_rate(VectorField.linear(L), g, SobolevSpec(k=1), mass_zero=True).value
    shifted = sobolev_rate(
        VectorField.linear(L + 3.0 * np.eye(48)), g, SobolevSpec(k=1), mass_zero=True
    ).value
    assert abs(shifted - base - 3.0) < 1e-8


def test_sobolev_regularity_envelope_on_pairs():
    # simulated pairs never violate the stacked-norm exponential envelope
    g = Grid1D(32, "periodic")
    L = build_laplacian(g)
    F = VectorField.linear(L - np.eye(32))
    sob = SobolevSpec(k=1, p=2.0)
    lam = sobolev_rate(F, g, sob).value
    assert abs(lam + 1.0) < 1e-9  # constants decay slowest
    spec = sob.norm_spec(g)
    h_t = 0.9 * g.h**2 / 2.0
    rng = np.random.default_rng(9)
    for _ in range(3):
        a = rng.normal(size=32)
        b = rng.normal(size=32)
        ta = integrate(F, a, (0.0, 0.2), h_t)
        tb = integrate(F, b, (0.0, 0.2), h_t)
        d0 = norm(a - b, spec)
        for t, sa, sb in zip(ta.times[::40], ta.states[::40], tb.states[::40]):
            assert norm(sa - sb, spec) <= math.exp(lam * t) * d0 * (1.0 + 1e-5)


def test_sobolev_spec_validation():
    with pytest.raises(DegenerateArgumentError):
        SobolevSpec(k=5)
    g = Grid1D(16, "periodic")
    F = VectorField.autonomous(lambda u: -(u**3), 16)
    with pytest.raises(DegenerateArgumentError):
        sobolev_rate(F, g, SobolevSpec(k=1))  # nonlinear path needs a sampler


# ----------------------------------------------------------- conservation


def test_conservation_linear_advection_skew():
    g = Grid1D(64, "periodic")
    samp = DomainSampler(Ball(np.zeros(64), 1.0), count=6, seed=0)
    rep = conservation_rate(lambda u: 2.0 * u, g, samp)
    assert abs(rep.rate.value) <= 1e-8
    assert rep.skewness_residual <= 1e-8


def test_conservation_quadratic_flux_matches_gradient_estimate():
    g = Grid1D(64, "periodic")
    x = g.points
    profiles = np.array([a * np.sin(2.0 * np.pi * x) for a in (0.5, 1.0, 1.5)])
    samp = DomainSampler(Points(profiles), count=3, seed=0)
    rep = conservation_rate(lambda u: 0.5 * u**2, g, samp)
    Dc = central_difference(g)
    target = max(-np.min(Dc @ u) / 2.0 for u in profiles)
    assert rep.rate.value > 0
    assert 0.5 * target <= rep.rate.value <= 1.5 * target


def test_conservation_odd_difference_operators():
    g = Grid1D(64, "periodic")
    Dc = central_difference(g)
    # flux linearization = third difference: composite operator is the
    # symmetric fourth difference whose Nyquist mode is neutral (even n)
    rep = conservation_rate(None, g, flux_prime_operator=np.linalg.matrix_power(Dc, 3))
    assert abs(rep.rate.value) <= 1e-8
    # flux linearization = second difference: composite is the odd third
    # difference, skew on the periodic grid
    rep2 = conservation_rate(None, g, flux_prime_operator=np.linalg.matrix_power(Dc, 2))
    assert abs(rep2.rate.value) <= 1e-8
    assert rep2.skewness_residual <= 1e-8


def test_conservation_simulation_preserves_mass():
    g = Grid1D(64, "periodic")
    Dc = central_difference(g)
    u0 = 0.1 * np.sin(2.0 * np.pi * g.points) + 0.3

    def claw(t, u):
        return -(Dc @ (0.5 * u**2))

    tr = integrate(VectorField(claw, 64, name="burgers"), u0, (0.0, 1.0), 1e-3)
    m = total_mass(g, tr.states)
    assert np.max(np.abs(m - m[0])) <= 1e-8


def test_conservation_preconditions():
    with pytest.raises(DegenerateArgumentError):
        conservation_rate(lambda u: u, Grid1D(16, "dirichlet"))
    with pytest.raises(DegenerateArgumentError):
        conservation_rate(lambda u: u**2, Grid1D(16, "periodic"))


# ----------------------------------------------------------- fixed points


def test_fixed_point_linear_poisson_matches_direct_solve():
    g = Grid1D(64, "dirichlet")
    L = build_laplacian(g)
    F = VectorField.linear(L, b=np.ones(64))
    u, rep = fixed_point_solve(F, g, tol=1e-8)
    direct = np.linalg.solve(L, -np.ones(64))
    assert np.max(np.abs(u - direct)) <= 1e-8
    assert rep.converged
    assert rep.rate_estimate.value < 0
    assert rep.residuals[-1] <= 1e-8
    assert rep.fitted_rate < -5.0


def test_fixed_point_pure_diffusion_returns_zero():
    g = Grid1D(32, "dirichlet")
    F = VectorField.linear(build_laplacian(g))
    u, rep = fixed_point_solve(F, g, tol=1e-9, u0=np.linspace(-1, 1, 32))
    assert np.max(np.abs(u)) <= 1e-8
    assert rep.converged


def test_fixed_point_nonlinear_multistart_agreement():
    g = Grid1D(64, "dirichlet")
    L = build_laplacian(g)
    F = VectorField(
        lambda t, u: L @ u + np.tanh(u),
        64,
        jac=lambda t, u: L + np.diag(1.0 - np.tanh(u) ** 2),
    )
    rng = np.random.default_rng(11)
    sols = []
    for _ in range(2):
        u, rep = fixed_point_solve(F, g, tol=1e-8, u0=rng.normal(size=64))
        assert rep.converged
        assert "sampled" in rep.rate_estimate.note
        sols.append(u)
    assert np.max(np.abs(sols[0] - sols[1])) <= 1e-6


def test_fixed_point_refuses_nonnegative_rate():
    g = Grid1D(16, "dirichlet")
    F = VectorField.linear(0.5 * np.eye(3))
    with pytest.raises(CertificateRefusedError):
        fixed_point_solve(F, g, tol=1e-6)
    u, rep = fixed_point_solve(F, g, tol=1e-6, u0=np.full(3, 1e-3), h_t=1e-3, max_t=1.0, force=True)
    assert rep.forced
    assert not rep.converged  # expanding flow cannot reach stationarity
