"""Grid-discretized PDE applications.

Finite-difference Laplacians for dirichlet, neumann, and periodic
boundaries (all built as -D^T D from the bc-consistent first difference,
hence symmetric with exact summation by parts), spectral-gap rates,
method-of-lines reaction-diffusion simulation, pattern suppression and
excitation reports, Sobolev-type stacked rates, conservation-law rate
analysis on the mass-zero subspace, and a contraction-backed fixed-point
solver for time-independent equations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import orth

from .errors import (
    CertificateRefusedError,
    DegenerateArgumentError,
    DimensionError,
    StepSizeError,
    UnsupportedNormError,
)
from .flows import Trajectory, integrate, overshoot_fit
from .measures import (
    EIGEN,
    SAMPLED,
    DomainSampler,
    RateEstimate,
    VectorField,
    integral_rate,
)
from .spaces import NormSpec, norm

__all__ = [
    "Grid1D",
    "Grid2D",
    "SobolevSpec",
    "SuppressionReport",
    "ExcitationReport",
    "ConservationReport",
    "FixedPointReport",
    "build_laplacian",
    "difference_operator",
    "poincare_rate",
    "total_mass",
    "rd_simulate",
    "pattern_report",
    "sobolev_rate",
    "conservation_rate",
    "fixed_point_solve",
    "mass_zero_basis",
    "demean",
    "DemeanedRegion",
]

_BCS = ("dirichlet", "neumann", "periodic")


# ------------------------------------------------------------------ grids


def _spacing(n, bc, length):
    if bc == "dirichlet":
        return length / (n + 1)
    if bc == "periodic":
        return length / n
    return length / (n - 1)  # neumann, vertex-centered


@dataclass(frozen=True)
class Grid1D:
    n: int
    bc: str = "dirichlet"
    length: float = 1.0

    def __post_init__(self):
        if self.n < 3:
            raise DimensionError("grid needs at least 3 interior points")
        if self.bc not in _BCS:
            raise DegenerateArgumentError(f"unknown boundary condition '{self.bc}'")
        if self.length <= 0:
            raise DegenerateArgumentError("domain length must be positive")

    @property
    def h(self):
        return _spacing(self.n, self.bc, self.length)

    @property
    def points(self):
        if self.bc == "dirichlet":
            return self.h * np.arange(1, self.n + 1)
        return self.h * np.arange(self.n)

    @property
    def size(self):
        return self.n

    @property
    def ndim(self):
        return 1


@dataclass(frozen=True)
class Grid2D:
    n: tuple
    bc: str = "dirichlet"
    lengths: tuple = (1.0, 1.0)

    def __post_init__(self):
        n = self.n if isinstance(self.n, tuple) else (int(self.n), int(self.n))
        object.__setattr__(self, "n", (int(n[0]), int(n[1])))
        if min(self.n) < 3:
            raise DimensionError("grid needs at least 3 interior points per axis")
        if self.bc not in _BCS:
            raise DegenerateArgumentError(f"unknown boundary condition '{self.bc}'")
        if min(self.lengths) <= 0:
            raise DegenerateArgumentError("domain lengths must be positive")

    @property
    def axes(self):
        return (
            Grid1D(self.n[0], self.bc, self.lengths[0]),
            Grid1D(self.n[1], self.bc, self.lengths[1]),
        )

    @property
    def h(self):
        return min(ax.h for ax in self.axes)

    @property
    def size(self):
        return self.n[0] * self.n[1]

    @property
    def ndim(self):
        return 2


# -------------------------------------------------------------- operators


def _first_difference(grid: Grid1D):
    """bc-consistent forward difference; the Laplacian is -D^T D.

    dirichlet: (n+1) x n with zero boundary values folded in;
    periodic: n x n circulant; neumann: (n-1) x n interior differences
    (the symmetrized mirror-ghost realization).
    """
    n, h = grid.n, grid.h
    if grid.bc == "periodic":
        D = -np.eye(n) + np.roll(np.eye(n), -1, axis=1)
        return D / h
    if grid.bc == "dirichlet":
        D = np.zeros((n + 1, n))
        for i in range(n + 1):
            if i < n:
                D[i, i] = 1.0
            if i > 0:
                D[i, i - 1] = -1.0
        return D / h
    D = np.zeros((n - 1, n))
    for i in range(n - 1):
        D[i, i] = -1.0
        D[i, i + 1] = 1.0
    return D / h


def _plain_forward(m, h):
    D = np.zeros((m - 1, m))
    for i in range(m - 1):
        D[i, i] = -1.0
        D[i, i + 1] = 1.0
    return D / h


def difference_operator(grid, order: int = 1):
    """Order-th difference operator consistent with the grid's bc.

    Periodic grids compose the circulant first difference; bounded grids
    chain interior forward differences after the bc-aware first one.
    2-d grids support order 1 only (stacked axis gradients).
    """
    if order < 1 or order > 4:
        raise DegenerateArgumentError("difference order must be in 1..4")
    if isinstance(grid, Grid2D):
        if order != 1:
            raise UnsupportedNormError("2-d stacks support first differences only")
        gx, gy = grid.axes
        Dx = _first_difference(gx)
        Dy = _first_difference(gy)
        return np.vstack(
            [np.kron(Dx, np.eye(gy.n)), np.kron(np.eye(gx.n), Dy)]
        )
    D = _first_difference(grid)
    if grid.bc == "periodic":
        return np.linalg.matrix_power(D, order)
    for _ in range(order - 1):
        D = _plain_forward(D.shape[0], grid.h) @ D
    return D


def build_laplacian(grid):
    """Second-difference Laplacian; symmetric for every bc by the
    -D^T D construction (summation by parts is exact)."""
    if isinstance(grid, Grid2D):
        gx, gy = grid.axes
        Lx = build_laplacian(gx)
        Ly = build_laplacian(gy)
        return np.kron(Lx, np.eye(gy.n)) + np.kron(np.eye(gx.n), Ly)
    D = _first_difference(grid)
    return -(D.T @ D)


@dataclass(frozen=True)
class SobolevSpec:
    """Stacked-difference norm of order k: ||u||^p = sum_j ||D^j u||_p^p,
    j = 0..k."""

    k: int
    p: float = 2.0

    def __post_init__(self):
        if not (0 <= self.k <= 4):
            raise DegenerateArgumentError("stacking order k must be in 0..4")

    def norm_spec(self, grid) -> NormSpec:
        if self.k == 0:
            return NormSpec(p=self.p)
        ops = tuple(difference_operator(grid, j) for j in range(1, self.k + 1))
        return NormSpec(p=self.p, stack=ops)


# ------------------------------------------------------- mass-zero tools


def mass_zero_basis(n: int):
    """Orthonormal basis of the mean-zero subspace (columns)."""
    P = np.eye(n) - np.full((n, n), 1.0 / n)
    return orth(P)


def demean(u):
    u = np.asarray(u, dtype=float)
    return u - u.mean()


class DemeanedRegion:
    """Region adapter: every drawn or projected point is mean-removed,
    realizing exact sampling of the mass-zero subspace."""

    def __init__(self, region):
        self.region = region

    @property
    def dim(self):
        return self.region.dim

    @property
    def scale(self):
        return self.region.scale

    def draw(self, rng, count):
        pts = self.region.draw(rng, count)
        return pts - pts.mean(axis=1, keepdims=True)

    def project(self, x):
        y = self.region.project(x)
        return y - y.mean()


# ---------------------------------------------------------- spectral gap


def poincare_rate(grid, spec: NormSpec = NormSpec()) -> RateEstimate:
    """l2 rate of the (projected) Laplacian: the negated spectral gap.

    dirichlet: largest eigenvalue of the Laplacian (tends to -pi^2 per
    unit axis); periodic: largest eigenvalue off the constant mode
    (tends to -4 pi^2); neumann: the constant mode stays, so the rate
    degenerates to 0 (flagged, not an error).
    """
    if spec.p != 2.0 or spec.weight is not None or spec.stack:
        raise UnsupportedNormError("spectral-gap rate is an l2 computation")
    L = build_laplacian(grid)
    if grid.bc == "dirichlet":
        val = float(np.linalg.eigvalsh(L)[-1])
        return RateEstimate(val, EIGEN)
    if grid.bc == "periodic":
        V = mass_zero_basis(L.shape[0])
        val = float(np.linalg.eigvalsh(V.T @ L @ V)[-1])
        return RateEstimate(val, EIGEN, note="mass-zero projection applied")
    return RateEstimate(0.0, EIGEN, note="degenerate: constant mode is invariant")


def total_mass(grid, u):
    """Discrete integral h * sum(u); rows of a trajectory give a series."""
    u = np.asarray(u, dtype=float)
    cell = grid.h if isinstance(grid, Grid1D) else grid.axes[0].h * grid.axes[1].h
    return cell * u.sum(axis=-1)


# ------------------------------------------------------------- simulation


def _stability_limit(grid, alphas):
    d = grid.ndim
    return grid.h**2 / (2.0 * d * max(alphas))


def rd_simulate(alphas, reaction, grid, u0, t_span, h_t) -> Trajectory:
    """Method-of-lines reaction-diffusion integration (RK4 in time).

    State stacks the components: u = (u_1, ..., u_m), du_i/dt =
    alpha_i Lap u_i + reaction_i(t, U).  reaction takes (t, U) with U of
    shape (m, N) and returns the same shape; None means pure diffusion.
    The explicit stepper enforces h_t <= h^2 / (2 d max(alpha)).
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    if np.any(alphas <= 0):
        raise DegenerateArgumentError("diffusivities must be positive")
    m = alphas.size
    N = grid.size
    u0 = np.asarray(u0, dtype=float)
    if u0.shape == (N,) and m == 1:
        u0 = u0[None, :]
    if u0.shape != (m, N):
        raise DimensionError(f"initial state has shape {u0.shape}, expected {(m, N)}")
    limit = _stability_limit(grid, alphas)
    if h_t > limit:
        raise StepSizeError(
            f"explicit step {h_t:.3e} exceeds the diffusion stability limit",
            suggested=limit,
        )
    L = build_laplacian(grid)

    def field(t, w):
        U = w.reshape(m, N)
        dU = alphas[:, None] * (U @ L.T)
        if reaction is not None:
            dU = dU + np.asarray(reaction(t, U), dtype=float)
        return dU.ravel()

    return integrate(VectorField(field, m * N, name="reaction-diffusion"), u0.ravel(), t_span, h_t)


# ---------------------------------------------------------------- patterns


@dataclass(frozen=True)
class SuppressionReport:
    invariance_residual: float
    reaction_rate: float
    diffusion_rate: float
    condition_implemented: bool
    condition_unscaled: bool
    predicted_bound: float
    simulated_rate: float
    mode1_growth: float
    passed: bool


@dataclass(frozen=True)
class ExcitationReport:
    stationarity_residuals: tuple
    sum_mode_rate: float
    pattern_mode_rate: float
    simulated_sum_ratio: float
    simulated_pattern_ratio: float
    passed: bool


def _complement_rate(J, V):
    M = V.T @ J @ V
    return float(np.linalg.eigvalsh((M + M.T) / 2.0)[-1])


def _suppression_report(alpha, f, grid, sampler, times, t_span, h_t, tol):
    N = grid.size
    L = build_laplacian(grid)
    V = mass_zero_basis(N)
    field = VectorField(f, N)
    # invariance of the constant subspace under the reaction
    inv = 0.0
    rates = []
    for t in times:
        for u in sampler.points():
            cu = np.full(N, u.mean())
            inv = max(inv, float(np.linalg.norm(demean(field(t, cu)))))
            rates.append(_complement_rate(field.jacobian(t, u), V))
    m_f = max(rates)
    m_lap = _complement_rate(L, V)
    cond_impl = m_f < alpha * abs(m_lap)
    cond_unscaled = m_f < m_lap  # no alpha scaling; dimension-inconsistent, logged only
    predicted = alpha * m_lap + m_f

    x = grid.points
    u0 = 0.5 + 0.3 * np.sin(2.0 * np.pi * x / grid.length)
    if h_t is None:
        h_t = 0.9 * _stability_limit(grid, (alpha,))
    tr = rd_simulate(
        (alpha,), lambda t, U: np.asarray(f(t, U[0]))[None, :], grid, u0, (0.0, t_span), h_t
    )
    dist = np.array([np.linalg.norm(demean(s)) for s in tr.states])
    mode = np.sin(2.0 * np.pi * x / grid.length)
    mode /= np.linalg.norm(mode)
    amp0 = abs(float(mode @ demean(tr.states[0])))
    amp1 = abs(float(mode @ demean(tr.states[-1])))
    growth = amp1 / amp0 if amp0 > 0 else math.inf
    if np.all(dist > 1e-280):
        sim_rate, _ = overshoot_fit(tr.times, dist)
    else:
        sim_rate = -math.inf
    passed = bool(cond_impl and inv <= tol and sim_rate <= predicted + 1e-3)
    return SuppressionReport(
        invariance_residual=inv,
        reaction_rate=m_f,
        diffusion_rate=m_lap,
        condition_implemented=cond_impl,
        condition_unscaled=cond_unscaled,
        predicted_bound=predicted,
        simulated_rate=float(sim_rate),
        mode1_growth=float(growth),
        passed=passed,
    )


def _excitation_report(alphas, f, grid, witness, times, t_span, h_t, tol):
    a1, a2 = float(alphas[0]), float(alphas[1])
    N = grid.size
    L = build_laplacian(grid)
    ustar = np.asarray(witness, dtype=float)
    if ustar.shape != (N,) or np.linalg.norm(ustar) == 0.0:
        raise DegenerateArgumentError("excitation mode needs a nonzero grid witness")
    # stationarity of the anti-synchronized pair (u*, -u*): each
    # component's reaction must cancel its own diffusion there
    r1 = float(np.linalg.norm(np.asarray(f(0.0, ustar, -ustar)) + a1 * (L @ ustar)))
    r2 = float(np.linalg.norm(np.asarray(f(0.0, -ustar, ustar)) - a2 * (L @ ustar)))

    def stacked(t, w):
        u1, u2 = w[:N], w[N:]
        return np.concatenate(
            [a1 * (L @ u1) + np.asarray(f(t, u1, u2)), a2 * (L @ u2) + np.asarray(f(t, u2, u1))]
        )

    F = VectorField(stacked, 2 * N)
    anti = np.concatenate([ustar, -ustar])
    J = F.jacobian(0.0, anti)
    Vz = mass_zero_basis(N)
    Vsum = np.vstack([Vz, Vz]) / math.sqrt(2.0)
    Vdiff = np.vstack([Vz, -Vz]) / math.sqrt(2.0)
    sum_rate = _complement_rate(J, Vsum)
    diff_rate = _complement_rate(J, Vdiff)

    if h_t is None:
        h_t = 0.9 * _stability_limit(grid, (a1, a2))
    x = grid.points
    bump = demean(0.2 * np.cos(4.0 * np.pi * x / grid.length) + 0.1 * np.sin(2.0 * np.pi * x / grid.length))
    u0 = np.vstack([ustar + bump, -ustar + bump])
    tr = rd_simulate(
        (a1, a2),
        lambda t, U: np.vstack([f(t, U[0], U[1]), f(t, U[1], U[0])]),
        grid,
        u0,
        (0.0, t_span),
        h_t,
    )
    s0 = demean(tr.states[0][:N] + tr.states[0][N:])
    sT = demean(tr.states[-1][:N] + tr.states[-1][N:])
    d0 = tr.states[0][:N] - tr.states[0][N:]
    dT = tr.states[-1][:N] - tr.states[-1][N:]
    sum_ratio = float(np.linalg.norm(sT) / np.linalg.norm(s0)) if np.linalg.norm(s0) > 0 else 0.0
    pat_ratio = float(np.linalg.norm(dT) / np.linalg.norm(d0)) if np.linalg.norm(d0) > 0 else 0.0
    passed = bool(
        r1 <= tol
        and r2 <= tol
        and sum_rate < 0.0
        and sum_ratio < 0.5
        and pat_ratio > 0.25
    )
    return ExcitationReport(
        stationarity_residuals=(r1, r2),
        sum_mode_rate=sum_rate,
        pattern_mode_rate=diff_rate,
        simulated_sum_ratio=sum_ratio,
        simulated_pattern_ratio=pat_ratio,
        passed=passed,
    )


def pattern_report(
    alphas,
    f,
    grid,
    sampler: DomainSampler = None,
    mode: str = "suppression",
    witness=None,
    times=(0.0,),
    t_span: float = 0.3,
    h_t=None,
    tol: float = 1e-8,
):
    """Pattern analysis on a diffusion-coupled system.

    suppression: scalar reaction f(t, u); checks that the reaction keeps
    grid constants invariant, evaluates the sufficient rate condition
    M_Q(f) < alpha |M_Q(Lap)| (the unscaled comparison against M_Q(Lap)
    itself is evaluated and logged but not enforced), and verifies by
    simulation that the distance to constants decays no slower than the
    predicted bound.

    excitation: two components with cross reaction f(t, own, other);
    checks the stationarity residuals of the anti-synchronized witness
    pair, the contraction of the synchronized (sum) mode, and by
    simulation that the sum decays while the pattern persists.
    """
    if mode == "suppression":
        alpha = float(np.atleast_1d(alphas)[0])
        if sampler is None:
            raise DegenerateArgumentError("suppression mode needs a state sampler")
        return _suppression_report(alpha, f, grid, sampler, times, t_span, h_t, tol)
    if mode == "excitation":
        pair = np.atleast_1d(np.asarray(alphas, dtype=float))
        if pair.size == 1:
            pair = np.repeat(pair, 2)
        return _excitation_report(pair, f, grid, witness, times, t_span, h_t, tol)
    raise DegenerateArgumentError(f"unknown pattern mode '{mode}'")


# ---------------------------------------------------------- Sobolev rates


def sobolev_rate(
    F: VectorField,
    grid,
    sob: SobolevSpec,
    sampler: DomainSampler = None,
    times=(0.0,),
    mass_zero: bool = False,
) -> RateEstimate:
    """Rate of F in the stacked difference norm of order k.

    Linear F with p=2 reduces to a generalized symmetric eigenproblem
    with the stacked Gram matrix; otherwise the integral rate is sampled
    in the stacked norm.  mass_zero restricts to mean-zero states
    (exact compression on the linear path, demeaned sampling otherwise).
    """
    spec = sob.norm_spec(grid)
    if F.matrix is not None and sob.p == 2.0:
        A = F.matrix
        N = A.shape[0]
        S = [np.eye(N)] + [np.asarray(D) for D in (spec.stack or ())]
        G = sum(D.T @ D for D in S)
        M = sum(D.T @ D @ A for D in S)
        H = (M + M.T) / 2.0
        if mass_zero:
            V = mass_zero_basis(N)
            H = V.T @ H @ V
            G = V.T @ G @ V
        from scipy.linalg import eigh

        val = float(eigh(H, G, eigvals_only=True)[-1])
        return RateEstimate(val, EIGEN, note=f"stacked order {sob.k}")
    if sampler is None:
        raise DegenerateArgumentError("nonlinear stacked rates need a sampler")
    if mass_zero:
        sampler = DomainSampler(DemeanedRegion(sampler.region), sampler.count, sampler.seed)
    return integral_rate(F, sampler, spec, times)


# ------------------------------------------------------ conservation laws


@dataclass(frozen=True)
class ConservationReport:
    rate: RateEstimate
    skewness_residual: float


def conservation_rate(
    flux,
    grid: Grid1D,
    sampler: DomainSampler = None,
    flux_prime_operator=None,
    times=(0.0,),
) -> ConservationReport:
    """Rate of the linearized conservation law A(u)v = -d/dx (f'(u) v)
    on the mass-zero subspace (periodic grid, central differences).

    flux is the scalar flux f; alternatively flux_prime_operator gives
    f' directly as a (possibly nonlocal) matrix.  The skewness residual
    is the largest symmetric-part norm seen, zero exactly when the
    linearization is skew (linear advection, odd difference operators).
    """
    if grid.bc != "periodic":
        raise DegenerateArgumentError("conservation analysis assumes a periodic grid")
    N = grid.n
    h = grid.h
    Dc = (np.roll(np.eye(N), -1, axis=1) - np.roll(np.eye(N), 1, axis=1)) / (2.0 * h)
    V = mass_zero_basis(N)

    def rate_of(u):
        if flux_prime_operator is not None:
            G = np.asarray(flux_prime_operator, dtype=float)
        else:
            eps = 1e-6
            fp = (np.asarray(flux(u + eps)) - np.asarray(flux(u - eps))) / (2.0 * eps)
            G = np.diag(fp)
        A = -Dc @ G
        M = V.T @ A @ V
        H = (M + M.T) / 2.0
        return float(np.linalg.eigvalsh(H)[-1]), float(np.linalg.norm(H, 2))

    if flux_prime_operator is not None:
        val, skew = rate_of(np.zeros(N))
        return ConservationReport(RateEstimate(val, EIGEN, samples=1), skew)
    if sampler is None:
        raise DegenerateArgumentError("state-dependent flux needs a sampler")
    best, worst_skew = -math.inf, 0.0
    count = 0
    for u in sampler.points():
        v, s = rate_of(demean(u))
        best = max(best, v)
        worst_skew = max(worst_skew, s)
        count += 1
    return ConservationReport(
        RateEstimate(best, SAMPLED, samples=count, note="eigen-exact per sampled state"),
        worst_skew,
    )


# ----------------------------------------------------------- fixed points


@dataclass(frozen=True)
class FixedPointReport:
    rate_estimate: RateEstimate
    times: np.ndarray
    residuals: np.ndarray
    fitted_rate: float
    converged: bool
    forced: bool


def fixed_point_solve(
    F: VectorField,
    grid,
    spec: NormSpec = NormSpec(),
    tol: float = 1e-8,
    max_t: float = 50.0,
    u0=None,
    h_t=None,
    sampler: DomainSampler = None,
    force: bool = False,
):
    """Solve F(u) = 0 by integrating du/dt = F(u) to stationarity.

    The contraction rate of F is measured first; a nonnegative rate
    refuses the certificate (force=True integrates anyway).  Returns
    (u*, report) with the residual history and its fitted decay rate.
    """
    N = F.dim
    if F.matrix is not None:
        from .measures import operator_rate

        est = operator_rate(F.matrix, spec)
    else:
        if sampler is None:
            from .measures import Ball

            sampler = DomainSampler(Ball(np.zeros(N), 1.0), count=12, seed=0)
        from .measures import differential_rate

        est = differential_rate(F, sampler, spec, times=(0.0,), ascent_starts=1)
        est = RateEstimate(
            est.value, est.kind, est.samples, est.ascent_iters,
            note="sampled lower bound; contraction not globally certified",
        )
    if est.value >= 0.0 and not force:
        raise CertificateRefusedError(
            f"measured rate {est.value:.3e} is not negative; pass force=True to integrate anyway"
        )
    if u0 is None:
        u0 = np.zeros(N)
    u = np.asarray(u0, dtype=float).copy()
    if h_t is None:
        h_t = 0.2 * grid.h**2
    chunk = max(h_t, max_t / 400.0)
    t = 0.0
    ts, res = [0.0], [float(np.linalg.norm(F(0.0, u)))]
    converged = res[0] <= tol
    while t < max_t and not converged:
        tr = integrate(F, u, (t, t + chunk), h_t)
        u = tr.states[-1]
        t = tr.times[-1]
        ts.append(t)
        res.append(float(np.linalg.norm(F(0.0, u))))
        converged = res[-1] <= tol
    ts = np.array(ts)
    res = np.array(res)
    positive = res > 1e-280
    if positive.sum() >= 3:
        fitted, _ = overshoot_fit(ts[positive], res[positive])
    else:
        fitted = -math.inf
    report = FixedPointReport(
        rate_estimate=est,
        times=ts,
        residuals=res,
        fitted_rate=float(fitted),
        converged=bool(converged),
        forced=bool(force),
    )
    return u, report
