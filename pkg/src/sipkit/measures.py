"""Contraction-rate functionals: log norms and sampled suprema.

Two routes to the same number are kept deliberately separate.  The closed
forms (lognorm_closed, operator_rate) evaluate known formulas; the limit
route (lognorm_limit) extrapolates (||I + hA|| - 1)/h directly.  Sampled
suprema are certified lower bounds: probes drawn from a DomainSampler,
refined by projected finite-difference ascent, and flagged as such in the
returned RateEstimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    ConditioningError,
    DegenerateArgumentError,
    DimensionError,
    EvaluationError,
    UnsupportedNormError,
)
from .spaces import NormSpec, _ladder_limit, norm, sip

__all__ = [
    "RateEstimate",
    "Box",
    "Sphere",
    "Ball",
    "Points",
    "DomainSampler",
    "VectorField",
    "WeightFamily",
    "lognorm_closed",
    "lognorm_limit",
    "operator_norm",
    "operator_rate",
    "integral_rate",
    "differential_rate",
    "weighted_rate",
    "lp_comparison_bound",
]

EXACT = "exact-closed-form"
EIGEN = "eigen-exact"
SAMPLED = "sampled-lower-bound"

BLOWUP = 1e100


@dataclass(frozen=True)
class RateEstimate:
    """A rate value together with how it was obtained.

    kind is one of 'exact-closed-form', 'eigen-exact', or
    'sampled-lower-bound'; sampled estimates also carry how many probes
    and ascent iterations went into them.
    """

    value: float
    kind: str
    samples: int = 0
    ascent_iters: int = 0
    note: str = ""

    @property
    def is_exact(self) -> bool:
        return self.kind in (EXACT, EIGEN)


# ------------------------------------------------------------- sampling


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("box corners must be matching 1-d tuples")
        if np.any(hi <= lo):
            raise DegenerateArgumentError("box must have positive extent")
        object.__setattr__(self, "lo", tuple(lo))
        object.__setattr__(self, "hi", tuple(hi))

    @property
    def dim(self):
        return len(self.lo)

    def draw(self, rng, count):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return rng.uniform(lo, hi, size=(count, self.dim))

    def project(self, x):
        return np.clip(x, np.asarray(self.lo), np.asarray(self.hi))

    @property
    def scale(self):
        return float(np.max(np.asarray(self.hi) - np.asarray(self.lo)))


@dataclass(frozen=True)
class Sphere:
    """Points on the sphere surface of the given radius."""

    center: tuple
    radius: float

    @property
    def dim(self):
        return len(self.center)

    def draw(self, rng, count):
        g = rng.normal(size=(count, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return np.asarray(self.center) + self.radius * g

    def project(self, x):
        c = np.asarray(self.center)
        d = x - c
        r = np.linalg.norm(d)
        if r == 0.0:
            d = np.zeros_like(d)
            d[0] = 1.0
            r = 1.0
        return c + self.radius * d / r

    @property
    def scale(self):
        return float(self.radius)


@dataclass(frozen=True)
class Ball:
    """Points inside the ball (uniform in volume)."""

    center: tuple
    radius: float

    @property
    def dim(self):
        return len(self.center)

    def draw(self, rng, count):
        g = rng.normal(size=(count, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = rng.uniform(size=(count, 1)) ** (1.0 / self.dim)
        return np.asarray(self.center) + self.radius * r * g

    def project(self, x):
        c = np.asarray(self.center)
        d = x - c
        r = np.linalg.norm(d)
        if r <= self.radius:
            return x
        return c + self.radius * d / r

    @property
    def scale(self):
        return float(self.radius)


@dataclass(frozen=True)
class Points:
    """An explicit probe list; sampling cycles through it."""

    points: tuple

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", tuple(map(tuple, arr)))

    @property
    def dim(self):
        return len(self.points[0])

    def draw(self, rng, count):
        arr = np.asarray(self.points)
        idx = np.arange(count) % arr.shape[0]
        return arr[idx]

    def project(self, x):
        return x

    @property
    def scale(self):
        return 0.0  # no ascent on explicit lists


@dataclass(frozen=True)
class DomainSampler:
    """Deterministic probe source: same seed, same points, every call."""

    region: object
    count: int = 100
    seed: int = 0

    def points(self) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        return self.region.draw(rng, self.count)

    def pairs(self):
        rng = np.random.default_rng((self.seed, 1))
        a = self.region.draw(rng, self.count)
        b = self.region.draw(rng, self.count)
        # nudge coincident pairs apart; the quotient needs u != v
        bad = np.linalg.norm(a - b, axis=1) < 1e-10
        if np.any(bad):
            b[bad] = b[bad] + 1e-6 * (1.0 + np.abs(b[bad]))
        return a, b

    @property
    def dim(self):
        return self.region.dim


# ---------------------------------------------------------- vector fields


@dataclass
class VectorField:
    """Time-varying field f(t, u) with an optional analytic Jacobian.

    ``matrix`` (and optional ``offset``) mark the field as affine, which
    rate functionals exploit to return exact values.
    """

    fn: Callable
    dim: int
    jac: Callable | None = None
    matrix: np.ndarray | None = None
    offset: np.ndarray | None = None
    name: str = ""

    @classmethod
    def linear(cls, A, b=None, name="linear"):
        A = np.asarray(A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"linear field needs a square matrix, got {A.shape}")
        b = None if b is None else np.asarray(b, dtype=A.dtype)

        def fn(t, u):
            out = A @ u
            return out if b is None else out + b

        return cls(fn=fn, dim=A.shape[0], jac=lambda t, u: A, matrix=A, offset=b, name=name)

    @classmethod
    def autonomous(cls, g, dim, jac=None, name=""):
        jfn = None if jac is None else (lambda t, u: jac(u))
        return cls(fn=lambda t, u: g(u), dim=dim, jac=jfn, name=name)

    def __call__(self, t, u):
        u = np.asarray(u)
        out = np.asarray(self.fn(float(t), u))
        if out.shape != u.shape:
            raise EvaluationError(
                f"field returned shape {out.shape} for input shape {u.shape}", point=u
            )
        if not np.all(np.isfinite(out)):
            raise EvaluationError("field returned non-finite values", point=u)
        return out

    def jacobian(self, t, u):
        u = np.asarray(u, dtype=float)
        if self.jac is not None:
            J = np.asarray(self.jac(float(t), u))
            if J.shape != (self.dim, self.dim):
                raise EvaluationError(f"jacobian returned shape {J.shape}", point=u)
            return J
        # central differences, relative step per coordinate
        J = np.zeros((self.dim, self.dim))
        for j in range(self.dim):
            h = 1e-6 * (1.0 + abs(u[j]))
            e = np.zeros(self.dim)
            e[j] = h
            J[:, j] = (self(t, u + e) - self(t, u - e)) / (2.0 * h)
        return J


# ------------------------------------------------------------- ascent


def _fd_gradient(fun, x, rel=1e-6):
    g = np.zeros(x.shape[0])
    fx = fun(x)
    for j in range(x.shape[0]):
        h = rel * (1.0 + abs(x[j]))
        e = np.zeros(x.shape[0])
        e[j] = h
        g[j] = (fun(x + e) - fx) / h
    return g


def _ascent_max(fun, x0, step, project=None, iters=50):
    """Greedy finite-difference ascent; returns (x, fun(x), iters used)."""
    x = np.array(x0, dtype=float)
    fx = fun(x)
    used = 0
    for _ in range(iters):
        used += 1
        g = _fd_gradient(fun, x)
        ng = np.linalg.norm(g)
        if not np.isfinite(ng) or ng == 0.0:
            break
        cand = x + step * g / ng
        if project is not None:
            cand = project(cand)
        fc = fun(cand)
        if np.isfinite(fc) and fc > fx:
            x, fx = cand, fc
            step *= 1.3
        else:
            step *= 0.5
        if step < 1e-12:
            break
    return x, fx, used


# ------------------------------------------------------------ log norms


def _as_square(A):
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    return A


def lognorm_closed(A, p) -> RateEstimate:
    """Closed-form log norm (matrix measure) for p in {1, 2, inf}.

    p=1 runs over columns, p=inf over rows, p=2 is the largest eigenvalue
    of the symmetric (Hermitian) part.
    """
    A = _as_square(A)
    n = A.shape[0]
    if p == 1.0:
        offdiag = np.abs(A).sum(axis=0) - np.abs(np.diag(A))
        val = float(np.max(np.real(np.diag(A)) + offdiag))
        return RateEstimate(val, EXACT)
    if p == math.inf:
        offdiag = np.abs(A).sum(axis=1) - np.abs(np.diag(A))
        val = float(np.max(np.real(np.diag(A)) + offdiag))
        return RateEstimate(val, EXACT)
    if p == 2.0:
        H = (A + A.conj().T) / 2.0
        val = float(np.linalg.eigvalsh(H)[-1])
        return RateEstimate(val, EIGEN)
    raise UnsupportedNormError(f"no closed-form log norm for p={p}; use lognorm_limit")


def operator_norm(A, p, samples=200, seed=0):
    """Operator p-norm; exact for p in {1, 2, inf}, sampled otherwise."""
    A = _as_square(A)
    if p == 1.0:
        return float(np.abs(A).sum(axis=0).max()), EXACT
    if p == math.inf:
        return float(np.abs(A).sum(axis=1).max()), EXACT
    if p == 2.0:
        return float(np.linalg.norm(A, 2)), EIGEN
    # sampled sphere maximization with ascent refinement
    rng = np.random.default_rng(seed)
    n = A.shape[1]
    best_v, best = None, -math.inf
    vs = rng.normal(size=(samples, n))
    for v in vs:
        v = v / _pnorm(v, p)
        val = _pnorm(A @ v, p)
        if val > best:
            best, best_v = val, v

    def obj(v):
        nv = _pnorm(v, p)
        if nv < 1e-300:
            return -math.inf
        return _pnorm(A @ v, p) / nv

    _, best, _ = _ascent_max(obj, best_v, step=0.1)
    return float(best), SAMPLED


def _pnorm(x, p):
    a = np.abs(x)
    if p == math.inf:
        return float(a.max())
    if p == 1.0:
        return float(a.sum())
    return float((a**p).sum() ** (1.0 / p))


def _weighted_conjugate(A, spec: NormSpec):
    """Return (B, base_p) with the weight folded in: ||.||_w of A equals
    the plain p-norm picture of B."""
    A = _as_square(A)
    if spec.stack:
        raise UnsupportedNormError("stacked norms have no square conjugation; use sampled rates")
    if spec.weight is None:
        return A, spec.p
    W = spec.weight
    return W @ A @ np.linalg.inv(W), spec.p


def lognorm_limit(A, spec: NormSpec = NormSpec(), samples=200, seed=0) -> RateEstimate:
    """Log norm by its definition: extrapolated limit of (||I+hA||-1)/h.

    Independent of the closed forms; for p outside {1, 2, inf} the operator
    norm inside the quotient is itself a sampled lower bound (the probe set
    is frozen across the h ladder so the quotient stays smooth in h).
    """
    B, p = _weighted_conjugate(A, spec)
    n = B.shape[0]
    eye = np.eye(n, dtype=B.dtype)
    if p in (1.0, 2.0, math.inf):

        def quot(h):
            return (operator_norm(eye + h * B, p)[0] - 1.0) / h

        val = _ladder_limit(quot)
        kind = EIGEN if p == 2.0 else EXACT
        return RateEstimate(float(val), kind, note="h-ladder limit")
    rng = np.random.default_rng(seed)
    vs = rng.normal(size=(samples, n))
    vs /= np.array([_pnorm(v, p) for v in vs])[:, None]

    def quot(h):
        M = eye + h * B
        return (max(_pnorm(M @ v, p) for v in vs) - 1.0) / h

    val = _ladder_limit(quot)
    return RateEstimate(float(val), SAMPLED, samples=samples, note="h-ladder limit")


def operator_rate(A, spec: NormSpec = NormSpec(), sampler=None, samples=200, seed=0) -> RateEstimate:
    """sup of sip(v, Av)/||v||^2 over v != 0 in the given norm.

    Equals the log norm; closed forms where available, otherwise a sampled
    numerical-range supremum with ascent refinement.
    """
    A = _as_square(A)
    try:
        B, p = _weighted_conjugate(A, spec)
        if p in (1.0, 2.0, math.inf):
            est = lognorm_closed(B, p)
            note = "" if spec.weight is None else "weight-conjugated"
            return RateEstimate(est.value, est.kind, note=note)
    except UnsupportedNormError:
        pass
    # sampled numerical range in the (possibly weighted/stacked) norm
    rng = np.random.default_rng(seed)
    vs = rng.normal(size=(samples, A.shape[1]))

    def quot(v):
        nv = norm(v, spec)
        if nv < 1e-150:
            return -math.inf
        return sip(v, A @ v, spec) / nv**2

    best_v, best = None, -math.inf
    for v in vs:
        val = quot(v)
        if val > best:
            best, best_v = val, v
    _, best, used = _ascent_max(quot, best_v, step=0.1)
    return RateEstimate(float(best), SAMPLED, samples=samples, ascent_iters=used)


# --------------------------------------------------------- rate functionals


def _affine_exact(f: VectorField, spec: NormSpec, seed=0):
    try:
        B, p = _weighted_conjugate(f.matrix, spec)
    except UnsupportedNormError:
        return None
    if p in (1.0, 2.0, math.inf):
        est = lognorm_closed(B, p)
        note = "affine field" if spec.weight is None else "affine field, weight-conjugated"
        return RateEstimate(est.value, est.kind, note=note)
    est = lognorm_limit(f.matrix, spec, seed=seed)
    return RateEstimate(est.value, est.kind, samples=est.samples, note="affine field, h-ladder")


def integral_rate(
    f: VectorField,
    sampler: DomainSampler,
    spec: NormSpec = NormSpec(),
    times=(0.0,),
    ascent_starts=5,
) -> RateEstimate:
    """One-sided Lipschitz rate: sup over pairs of
    sip(u - v, f(t,u) - f(t,v)) / ||u - v||^2.

    Exact for affine fields; otherwise a sampled lower bound over the
    sampler's region, refined by ascent from the best starting pairs.
    """
    if f.matrix is not None:
        est = _affine_exact(f, spec, seed=sampler.seed if sampler else 0)
        if est is not None:
            return est
    if sampler is None:
        raise DegenerateArgumentError("sampled rate needs a DomainSampler")
    a, b = sampler.pairs()
    n = sampler.dim

    def quot_at(t, u, v):
        d = u - v
        nd = norm(d, spec)
        if nd < 1e-12:
            return -math.inf
        return sip(d, f(t, u) - f(t, v), spec) / nd**2

    evaluations = []
    for t in times:
        for u, v in zip(a, b):
            evaluations.append((quot_at(t, u, v), t, u, v))
    evaluations.sort(key=lambda r: r[0], reverse=True)
    best = evaluations[0][0]
    used_total = 0
    step = 0.05 * max(sampler.region.scale, 1e-6)
    if step > 0:
        proj = sampler.region.project

        for val, t, u, v in evaluations[:ascent_starts]:

            def obj(x, t=t):
                return quot_at(t, x[:n], x[n:])

            def project(x):
                return np.concatenate([proj(x[:n]), proj(x[n:])])

            _, got, used = _ascent_max(obj, np.concatenate([u, v]), step, project)
            used_total += used
            best = max(best, got)
    return RateEstimate(
        float(best), SAMPLED, samples=len(evaluations), ascent_iters=used_total
    )


def differential_rate(
    f: VectorField,
    sampler: DomainSampler,
    spec: NormSpec = NormSpec(),
    times=(0.0,),
    ascent_starts=3,
) -> RateEstimate:
    """sup over states of the log norm of the Jacobian.

    The inner log norm is exact for p in {1, 2, inf} (weighted included);
    the outer sup over states is sampled with ascent unless the field is
    affine, in which case the single exact value is returned.
    """
    if f.matrix is not None:
        est = _affine_exact(f, spec, seed=sampler.seed if sampler else 0)
        if est is not None:
            return est
    if sampler is None:
        raise DegenerateArgumentError("sampled rate needs a DomainSampler")
    pts = sampler.points()

    def mu_at(t, u):
        J = f.jacobian(t, u)
        return operator_rate(J, spec, samples=64, seed=sampler.seed).value

    evaluations = []
    for t in times:
        for u in pts:
            evaluations.append((mu_at(t, u), t, u))
    evaluations.sort(key=lambda r: r[0], reverse=True)
    best = evaluations[0][0]
    used_total = 0
    step = 0.05 * max(sampler.region.scale, 1e-6)
    if step > 0:
        for val, t, u in evaluations[:ascent_starts]:
            _, got, used = _ascent_max(
                lambda x, t=t: mu_at(t, x), u, step, sampler.region.project, iters=25
            )
            used_total += used
            best = max(best, got)
    return RateEstimate(float(best), SAMPLED, samples=len(evaluations), ascent_iters=used_total)


# ----------------------------------------------------------- weights


@dataclass
class WeightFamily:
    """State- and time-dependent weight Theta(t, u).

    ``dt`` is the partial time derivative, ``du`` the directional state
    derivative (t, u, w) -> D Theta(t,u)[w]; both fall back to central
    differences when omitted.
    """

    theta: Callable
    dt: Callable | None = None
    du: Callable | None = None

    def matrix(self, t, u):
        W = np.asarray(self.theta(float(t), np.asarray(u)), dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ConditioningError(f"weight family returned shape {W.shape}")
        c = np.linalg.cond(W)
        if not np.isfinite(c) or c > 1e12:
            raise ConditioningError(f"weight family condition number {c:.3e} exceeds 1e12")
        return W

    def total_derivative(self, t, u, direction):
        """d/dt Theta along a trajectory moving with the given velocity."""
        if self.dt is not None:
            Wt = np.asarray(self.dt(float(t), np.asarray(u)), dtype=float)
        else:
            h = 1e-6 * (1.0 + abs(t))
            Wt = (self.matrix(t + h, u) - self.matrix(t - h, u)) / (2.0 * h)
        w = np.asarray(direction, dtype=float)
        if self.du is not None:
            Wu = np.asarray(self.du(float(t), np.asarray(u), w), dtype=float)
        else:
            nw = np.linalg.norm(w)
            if nw == 0.0:
                Wu = np.zeros_like(Wt)
            else:
                h = 1e-6 * (1.0 + np.linalg.norm(u)) / nw
                Wu = (self.matrix(t, u + h * w) - self.matrix(t, u - h * w)) / (2.0 * h)
        return Wt + Wu


def weighted_rate(
    f: VectorField,
    theta,
    spec: NormSpec = NormSpec(),
    mode: str = "constant",
    sampler: DomainSampler | None = None,
    times=(0.0,),
) -> RateEstimate:
    """Contraction rate of f measured through the weight.

    mode='constant' conjugates by a fixed matrix (exact for affine fields
    and closed-form exponents).  mode='varying' evaluates the generator
    d(Theta)/dt + Theta Df at sampled states and returns the sup of the
    log norm of (generator) Theta^{-1} in the base norm.
    """
    if spec.weight is not None or spec.stack:
        raise ConditioningError("pass the weight via `theta`, not inside spec")
    if mode == "constant":
        W = np.asarray(theta, dtype=float)
        wspec = NormSpec(p=spec.p, weight=W, field_kind=spec.field_kind)
        return integral_rate(f, sampler, wspec, times=times)
    if mode != "varying":
        raise DegenerateArgumentError(f"unknown mode {mode!r}")
    fam = theta if isinstance(theta, WeightFamily) else WeightFamily(theta=theta)
    if sampler is None:
        raise DegenerateArgumentError("varying weights need a DomainSampler")
    pts = sampler.points()

    def rate_at(t, u):
        W = fam.matrix(t, u)
        J = f.jacobian(t, u)
        G = fam.total_derivative(t, u, f(t, u)) + W @ J
        return operator_rate(G @ np.linalg.inv(W), spec, samples=64, seed=sampler.seed).value

    evaluations = [(rate_at(t, u), t, u) for t in times for u in pts]
    evaluations.sort(key=lambda r: r[0], reverse=True)
    best = evaluations[0][0]
    used_total = 0
    step = 0.05 * max(sampler.region.scale, 1e-6)
    if step > 0:
        for val, t, u in evaluations[:2]:
            _, got, used = _ascent_max(
                lambda x, t=t: rate_at(t, x), u, step, sampler.region.project, iters=25
            )
            used_total += used
            best = max(best, got)
    return RateEstimate(
        float(best), SAMPLED, samples=len(evaluations), ascent_iters=used_total, note="varying weight"
    )


# ----------------------------------------------------- norm comparison


def lp_comparison_bound(lambda2, p, t, init_dist, measure_e=None, box_bound=None) -> float:
    """Distance bound in the l^p norm driven by a mean-square rate.

    Below p=2 the domain measure enters; above p=2 a uniform box bound
    does as well, with the decay exponent scaled by 2/p.
    """
    if t < 0:
        raise DegenerateArgumentError("t must be nonnegative")
    if init_dist < 0:
        raise DegenerateArgumentError("init_dist must be nonnegative")
    if p == 2.0:
        return float(math.exp(lambda2 * t) * init_dist)
    if p < 2.0:
        if measure_e is None or measure_e <= 0:
            raise DegenerateArgumentError("p < 2 needs a positive domain measure")
        return float(measure_e ** (1.0 / p - 0.5) * math.exp(lambda2 * t) * init_dist)
    # p > 2, including p = inf
    if box_bound is None or box_bound <= 0:
        raise DegenerateArgumentError("p > 2 needs a positive uniform box bound")
    expo = 2.0 / p if p != math.inf else 0.0
    if expo > 0.0:
        if measure_e is None or measure_e <= 0:
            raise DegenerateArgumentError("finite p > 2 needs a positive domain measure")
        inner = math.exp(lambda2 * t) * measure_e ** (0.5 - 1.0 / p) * init_dist
        return float(box_bound ** (1.0 - expo) * inner**expo)
    return float(box_bound)
