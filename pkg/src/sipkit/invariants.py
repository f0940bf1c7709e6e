"""Certificates for invariant structure: subspaces, zero sets of
constraint maps, symmetries, and limit cycles.

Contraction toward a structure is certified in two parts: an algebraic
residual showing the structure is dynamically consistent (invariance,
tangency, equivariance, periodicity) and a negative projected rate.  The
projected rate restricts probes to the directions the constraint actually
measures: complement-projected directions for subspaces, least-norm
preimages of codomain probes for constraint maps.  Both residual and rate
are sampled suprema and inherit the certified-lower-bound reading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import orth

from .errors import (
    DegenerateArgumentError,
    DegenerateProjectionError,
    DimensionError,
    RegularityError,
    SymmetryError,
)
from .flows import Trajectory, overshoot_fit
from .measures import (
    EIGEN,
    EXACT,
    SAMPLED,
    DomainSampler,
    RateEstimate,
    VectorField,
    _ascent_max,
    lognorm_closed,
)
from .spaces import NormSpec, norm, sip

__all__ = [
    "SubspaceSpec",
    "ManifoldSpec",
    "LinearSymmetry",
    "DiffeoSymmetry",
    "SubspaceReport",
    "ManifoldReport",
    "LimitCycleReport",
    "DecayFit",
    "subspace_certificate",
    "manifold_certificate",
    "equivariance_residual",
    "spatiotemporal_residual",
    "limit_cycle_certificate",
    "set_distance_decay",
    "newton_project",
]

PROJECTION_TOL = 1e-10
RANK_TOL = 1e-8
DISTANCE_FLOOR = 1e-300


# --------------------------------------------------------------- types


@dataclass(frozen=True)
class SubspaceSpec:
    """A projection P onto the target subspace; Q = I - P is derived."""

    P: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise DimensionError(f"projection must be square, got {P.shape}")
        drift = np.linalg.norm(P @ P - P, 2)
        if drift > PROJECTION_TOL:
            raise DegenerateArgumentError(f"not a projection: ||P^2 - P|| = {drift:.3e}")
        object.__setattr__(self, "P", P)

    @property
    def Q(self):
        return np.eye(self.P.shape[0]) - self.P

    @property
    def dim(self):
        return self.P.shape[0]


@dataclass(frozen=True)
class ManifoldSpec:
    """Zero set of a constraint map phi: R^n -> R^m with full-rank Dphi."""

    phi: object
    dim: int
    codim: int
    dphi: object = None

    def value(self, u):
        out = np.atleast_1d(np.asarray(self.phi(np.asarray(u, dtype=float)), dtype=float))
        if out.shape != (self.codim,):
            raise DimensionError(f"constraint returned shape {out.shape}, expected ({self.codim},)")
        return out

    def jacobian(self, u):
        u = np.asarray(u, dtype=float)
        if self.dphi is not None:
            J = np.atleast_2d(np.asarray(self.dphi(u), dtype=float))
            if J.shape != (self.codim, self.dim):
                raise DimensionError(f"constraint jacobian has shape {J.shape}")
            return J
        J = np.zeros((self.codim, self.dim))
        for j in range(self.dim):
            h = 1e-6 * (1.0 + abs(u[j]))
            e = np.zeros(self.dim)
            e[j] = h
            J[:, j] = (self.value(u + e) - self.value(u - e)) / (2.0 * h)
        return J


@dataclass(frozen=True)
class LinearSymmetry:
    T: np.ndarray

    def apply(self, u):
        return self.T @ u

    def push(self, u, w):
        return self.T @ w


@dataclass(frozen=True)
class DiffeoSymmetry:
    h: object
    dh: object = None
    h_inv: object = None

    def apply(self, u):
        return np.asarray(self.h(np.asarray(u)), dtype=float)

    def push(self, u, w):
        u = np.asarray(u, dtype=float)
        w = np.asarray(w, dtype=float)
        if self.dh is not None:
            return np.asarray(self.dh(u), dtype=float) @ w
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return np.zeros_like(w)
        eps = 1e-6 * (1.0 + np.linalg.norm(u)) / nw
        return (self.apply(u + eps * w) - self.apply(u - eps * w)) / (2.0 * eps)


@dataclass(frozen=True)
class SubspaceReport:
    invariance_residual: float
    rate: RateEstimate
    passed: bool
    tol: float


@dataclass(frozen=True)
class ManifoldReport:
    tangency_residual: float
    rate: RateEstimate
    passed: bool
    tol: float
    zero_points: int
    min_singular_value: float


@dataclass(frozen=True)
class LimitCycleReport:
    tangency_residual: float
    rate: RateEstimate
    periodicity_residual: float
    min_speed: float
    passed: bool
    tol: float


@dataclass(frozen=True)
class DecayFit:
    rate: float
    overshoot: float
    monotonicity_violations: int
    floored: bool
    samples: int


# ----------------------------------------------------------- subspaces


def _coordinate_support(Q):
    """Indices when Q is a 0/1 diagonal projection, else None."""
    d = np.diag(Q)
    if np.linalg.norm(Q - np.diag(d), 2) > 1e-12:
        return None
    on = np.abs(d - 1.0) <= 1e-12
    off = np.abs(d) <= 1e-12
    if not np.all(on | off):
        return None
    return np.where(on)[0]


def _projected_rate_linear(A, Q, spec: NormSpec):
    """Exact compression rate for linear fields where a closed form exists."""
    if spec.weight is not None or spec.stack:
        return None
    if spec.p == 2.0:
        V = orth(Q)
        M = V.T @ Q @ A @ V
        val = float(np.linalg.eigvalsh((M + M.T) / 2.0)[-1])
        return RateEstimate(val, EIGEN, note="compressed to complement range")
    idx = _coordinate_support(Q)
    if idx is not None and spec.p in (1.0, math.inf):
        sub = A[np.ix_(idx, idx)]
        est = lognorm_closed(sub, spec.p)
        return RateEstimate(est.value, EXACT, note="coordinate compression")
    return None


def _projected_rate_sampled(jac_at, Q, sampler: DomainSampler, spec: NormSpec, times):
    pts = sampler.points()
    rng = np.random.default_rng((sampler.seed, 2))
    n = Q.shape[0]
    probes = rng.normal(size=(32, n)) @ Q.T
    keep = [w for w in probes if norm(w, spec) > 1e-12]
    if not keep:
        raise DegenerateProjectionError("complement projection annihilates every probe")
    probes = [w / norm(w, spec) for w in keep]

    def rate_at(t, u):
        J = jac_at(t, u)
        best = -math.inf
        for w in probes:
            best = max(best, sip(w, Q @ (J @ w), spec))
        return best

    evals = [(rate_at(t, u), t, u) for t in times for u in pts]
    evals.sort(key=lambda r: r[0], reverse=True)
    best = evals[0][0]
    used = 0
    step = 0.05 * max(sampler.region.scale, 1e-6)
    if step > 0:
        for val, t, u in evals[:2]:
            _, got, it = _ascent_max(
                lambda x, t=t: rate_at(t, x), u, step, sampler.region.project, iters=25
            )
            used += it
            best = max(best, got)
    return RateEstimate(float(best), SAMPLED, samples=len(evals) * len(probes), ascent_iters=used)


def subspace_certificate(
    f: VectorField,
    sub: SubspaceSpec,
    sampler: DomainSampler,
    spec: NormSpec = NormSpec(),
    times=(0.0,),
    tol: float = 1e-8,
) -> SubspaceReport:
    """Certify flow-invariance of range(P) plus transverse contraction.

    Invariance: sup ||Q f(t, P v)|| over sampled v must stay within tol.
    Rate: sup of sip(w, Q Df(t,u) w)/||w||^2 over complement directions
    w in range(Q); exact by compression for linear fields when the norm
    admits it, sampled otherwise.  Passes when the residual is small and
    the rate is strictly negative.
    """
    if sub.dim != f.dim:
        raise DimensionError("projection and field dimensions differ")
    Q = sub.Q
    if np.linalg.norm(Q, 2) <= 1e-12:
        raise DegenerateProjectionError("projection covers the whole space; no complement to probe")
    pts = sampler.points()
    residual = 0.0
    for t in times:
        for v in pts:
            residual = max(residual, norm(Q @ f(t, sub.P @ v), spec))
    if f.matrix is not None:
        rate = _projected_rate_linear(f.matrix, Q, spec)
        if rate is None:
            rate = _projected_rate_sampled(lambda t, u: f.matrix, Q, sampler, spec, times)
    else:
        rate = _projected_rate_sampled(f.jacobian, Q, sampler, spec, times)
    passed = bool(residual <= tol and rate.value < 0.0)
    return SubspaceReport(invariance_residual=float(residual), rate=rate, passed=passed, tol=tol)


# ----------------------------------------------------------- manifolds


def newton_project(man: ManifoldSpec, u0, iters: int = 15, tol: float = 1e-12):
    """Gauss-Newton projection of a seed point onto the zero set."""
    z = np.array(u0, dtype=float)
    for _ in range(iters):
        r = man.value(z)
        if np.linalg.norm(r) <= tol:
            return z
        J = man.jacobian(z)
        z = z - np.linalg.pinv(J) @ r
    if np.linalg.norm(man.value(z)) > 1e-8:
        raise RegularityError("projection onto the zero set did not converge", point=z)
    return z


def _check_regular(man: ManifoldSpec, z):
    J = man.jacobian(z)
    smin = float(np.linalg.svd(J, compute_uv=False)[-1])
    if smin <= RANK_TOL:
        raise RegularityError(
            f"constraint jacobian is rank-deficient (sigma_min = {smin:.3e})", point=z
        )
    return smin


def _constraint_rate(f, man: ManifoldSpec, sampler: DomainSampler, spec: NormSpec, times):
    """sup over states of the constraint-weighted rate.

    Probes are least-norm preimages of codomain directions, i.e. the
    directions the constraint map actually measures; tangent directions
    are in the kernel of Dphi and carry no information here.
    """
    pts = sampler.points()
    rng = np.random.default_rng((sampler.seed, 3))
    ys = rng.normal(size=(16, man.codim))
    ys = [y / np.linalg.norm(y) for y in ys if np.linalg.norm(y) > 0]

    def rate_at(t, u):
        J = man.jacobian(u)
        if np.linalg.svd(J, compute_uv=False)[-1] <= RANK_TOL:
            return -math.inf  # constraint blind here; skip the point
        pinvJ = np.linalg.pinv(J)
        A = f.jacobian(t, u)
        best = -math.inf
        for y in ys:
            du = pinvJ @ y
            a = J @ du
            na = norm(a, spec)
            if na < 1e-12:
                continue
            b = J @ (A @ du)
            best = max(best, sip(a, b, spec) / na**2)
        return best

    evals = [(rate_at(t, u), t, u) for t in times for u in pts]
    finite = [e for e in evals if np.isfinite(e[0])]
    if not finite:
        raise DegenerateProjectionError("no constraint-visible probe directions found")
    finite.sort(key=lambda r: r[0], reverse=True)
    best = finite[0][0]
    used = 0
    step = 0.05 * max(sampler.region.scale, 1e-6)
    if step > 0:
        for val, t, u in finite[:2]:
            _, got, it = _ascent_max(
                lambda x, t=t: rate_at(t, x), u, step, sampler.region.project, iters=25
            )
            used += it
            best = max(best, got)
    return RateEstimate(float(best), SAMPLED, samples=len(finite) * len(ys), ascent_iters=used)


def manifold_certificate(
    f: VectorField,
    man: ManifoldSpec,
    seed_sampler: DomainSampler,
    ambient_sampler: DomainSampler,
    spec: NormSpec = NormSpec(),
    times=(0.0,),
    tol: float = 1e-8,
) -> ManifoldReport:
    """Certify flow-invariance of the constraint zero set plus transverse
    contraction measured through the constraint map.

    Seeds are Newton-projected onto the zero set (each checked for full
    row rank of Dphi); tangency sup ||Dphi(z) f(t,z)|| must stay within
    tol and the constraint-weighted rate must be negative.
    """
    zs = [newton_project(man, u) for u in seed_sampler.points()]
    smin = math.inf
    for z in zs:
        smin = min(smin, _check_regular(man, z))
    tangency = 0.0
    for t in times:
        for z in zs:
            tangency = max(tangency, norm(man.jacobian(z) @ f(t, z), spec))
    rate = _constraint_rate(f, man, ambient_sampler, spec, times)
    passed = bool(tangency <= tol and rate.value < 0.0)
    return ManifoldReport(
        tangency_residual=float(tangency),
        rate=rate,
        passed=passed,
        tol=tol,
        zero_points=len(zs),
        min_singular_value=float(smin),
    )


# ----------------------------------------------------------- symmetries


def equivariance_residual(f: VectorField, sym, sampler: DomainSampler, times=(0.0,)) -> float:
    """sup over samples of || f(t, T u) - T_* f(t, u) ||_2."""
    worst = 0.0
    for t in times:
        for u in sampler.points():
            lhs = f(t, sym.apply(u))
            rhs = sym.push(u, f(t, u))
            worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return worst


def spatiotemporal_residual(
    f: VectorField, T, delta_t: float, order: int, sampler: DomainSampler, times=(0.0,)
) -> float:
    """sup over samples of || f(t, T u) - T f(t + delta_t, u) ||_2.

    T must be a k-th root of the identity (k = order); solutions of such
    systems approach order*delta_t-periodic behaviour when contracting.
    """
    T = np.asarray(T, dtype=float)
    if order < 1:
        raise DegenerateArgumentError("order must be a positive integer")
    drift = np.linalg.norm(np.linalg.matrix_power(T, order) - np.eye(T.shape[0]), 2)
    if drift > 1e-8:
        raise SymmetryError(f"T^{order} deviates from the identity by {drift:.3e}")
    worst = 0.0
    for t in times:
        for u in sampler.points():
            lhs = f(t, T @ u)
            rhs = T @ f(t + delta_t, u)
            worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return worst


# --------------------------------------------------------- limit cycles


def limit_cycle_certificate(
    g: VectorField,
    man: ManifoldSpec,
    period: float,
    loop_points,
    ambient_sampler: DomainSampler,
    spec: NormSpec = NormSpec(),
    times=(0.0,),
    tol: float = 1e-8,
    speed_floor: float = 1e-8,
) -> LimitCycleReport:
    """Certify an attracting periodic orbit supported on a closed curve.

    Four conditions: the loop is tangent to the flow, the constraint-
    weighted rate toward the loop is negative, the field is period-
    periodic on the loop, and the speed never vanishes there (so the
    motion on the loop cannot stall).
    """
    if period <= 0:
        raise DegenerateArgumentError("period must be positive")
    loop = np.atleast_2d(np.asarray(loop_points, dtype=float))
    zs = [newton_project(man, z) for z in loop]
    for z in zs:
        _check_regular(man, z)
    tangency = 0.0
    periodicity = 0.0
    speed = math.inf
    for t in times:
        for z in zs:
            v = g(t, z)
            tangency = max(tangency, norm(man.jacobian(z) @ v, spec))
            periodicity = max(periodicity, float(np.linalg.norm(v - g(t + period, z))))
            speed = min(speed, float(np.linalg.norm(v)))
    rate = _constraint_rate(g, man, ambient_sampler, spec, times)
    passed = bool(
        tangency <= tol and rate.value < 0.0 and periodicity <= tol and speed > speed_floor
    )
    return LimitCycleReport(
        tangency_residual=float(tangency),
        rate=rate,
        periodicity_residual=float(periodicity),
        min_speed=float(speed),
        passed=passed,
        tol=tol,
    )


# ------------------------------------------------------ distance decay


def set_distance_decay(traj: Trajectory, distance_oracle, floor: float = DISTANCE_FLOOR) -> DecayFit:
    """Fit an exponential envelope to a distance-to-set signal along a
    trajectory.

    Distances are clamped at the floor before the log fit; a signal that
    sits entirely at the floor reports rate -inf (already inside the set).
    Counts strict monotonicity violations as a diagnostic.
    """
    raw = np.array([float(distance_oracle(s)) for s in traj.states])
    if np.any(raw < 0):
        raise DegenerateArgumentError("distance oracle returned a negative value")
    d = np.maximum(raw, floor)
    if np.all(d <= floor * 10.0):
        return DecayFit(
            rate=-math.inf, overshoot=1.0, monotonicity_violations=0, floored=True, samples=len(d)
        )
    viol = int(np.sum(d[1:] > d[:-1] * (1.0 + 1e-9) + 1e-15))
    lam, kap = overshoot_fit(traj.times, d)
    return DecayFit(
        rate=lam, overshoot=kap, monotonicity_violations=viol, floored=False, samples=len(d)
    )
