"""Combination calculus for interconnected systems.

Given contraction rates of subsystems, these routines bound the rate of
the assembled system: nonnegative additive mixes, skew-adjoint feedback
pairs, block-diagonal products in l^p product norms, feedforward
cascades, and continuum (quadrature-weighted) families.  Each bound is
paired with a direct computation on the combined system so conservatism
is visible.  The zero-diagonal unitary used by the divergence corollary
is constructed explicitly from numerical-range convexity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur

from .errors import DegenerateArgumentError, DimensionError
from .flows import integrate, overshoot_fit
from .measures import (
    DomainSampler,
    RateEstimate,
    VectorField,
    integral_rate,
    operator_rate,
)
from .spaces import NormSpec, norm, sip

__all__ = [
    "BlockSystem",
    "AdditiveReport",
    "FeedbackReport",
    "ProductReport",
    "ContinuumReport",
    "additive_rate",
    "feedback_certificate",
    "product_lp_rate",
    "feedforward_bound",
    "continuum_rate",
    "zero_diagonal_unitary",
    "trapezoid_rule",
]


# ----------------------------------------------------------------- types


def _as_block_callback(entry):
    if entry is None:
        return None
    if callable(entry):
        return entry
    M = np.asarray(entry, dtype=float)
    return lambda t, u, M=M: M


class BlockSystem:
    """An n-of-blocks square grid of jacobian-block callbacks J_ij(t, u).

    Entries may be callables, constant matrices, or None (zero block).
    The state u handed to callbacks is the full stacked vector.  Block
    norms and the product norm share the exponent product_p, so the
    product norm coincides with the plain l^p norm of the stacked vector.
    """

    def __init__(self, blocks, dims, product_p: float = 2.0):
        dims = tuple(int(d) for d in dims)
        if any(d < 1 for d in dims):
            raise DimensionError("block dimensions must be positive")
        n = len(dims)
        if len(blocks) != n or any(len(row) != n for row in blocks):
            raise DimensionError(f"blocks must form a {n}x{n} grid")
        if not (1.0 <= product_p or product_p == math.inf):
            raise DegenerateArgumentError(f"product exponent {product_p} outside [1, inf]")
        self.blocks = tuple(tuple(_as_block_callback(e) for e in row) for row in blocks)
        self.dims = dims
        self.product_p = float(product_p)

    @property
    def n_blocks(self):
        return len(self.dims)

    @property
    def total_dim(self):
        return int(sum(self.dims))

    def block(self, i, j, t, u):
        cb = self.blocks[i][j]
        if cb is None:
            return np.zeros((self.dims[i], self.dims[j]))
        M = np.atleast_2d(np.asarray(cb(t, u), dtype=float))
        if M.shape != (self.dims[i], self.dims[j]):
            raise DimensionError(
                f"block ({i},{j}) returned shape {M.shape}, expected {(self.dims[i], self.dims[j])}"
            )
        return M

    def assemble(self, t, u):
        n = self.n_blocks
        return np.block([[self.block(i, j, t, u) for j in range(n)] for i in range(n)])

    def diagonal(self, t, u):
        n = self.n_blocks
        return np.block(
            [
                [
                    self.block(i, j, t, u) if i == j else np.zeros((self.dims[i], self.dims[j]))
                    for j in range(n)
                ]
                for i in range(n)
            ]
        )

    def off_diagonal(self, t, u):
        return self.assemble(t, u) - self.diagonal(t, u)


@dataclass(frozen=True)
class AdditiveReport:
    bound: float
    direct: RateEstimate
    component_rates: tuple


@dataclass(frozen=True)
class FeedbackReport:
    skewness_residual: float
    block_rates: tuple
    composite_rate: float
    zero_range_residual: float
    equivalence_gap: float


@dataclass(frozen=True)
class ProductReport:
    per_block: tuple
    product_rate: float
    simulated_rate: float
    dominance_ok: bool


@dataclass(frozen=True)
class ContinuumReport:
    pointwise_rate: float
    weighted_mass: float
    bound: float
    direct: RateEstimate
    nodes: int


# -------------------------------------------------------------- additive


def _as_time_callback(a):
    if callable(a):
        return a
    val = float(a)
    return lambda t: val


def additive_rate(
    f1: VectorField,
    f2: VectorField,
    alpha1,
    alpha2,
    spec: NormSpec = NormSpec(),
    sampler: DomainSampler = None,
    times=(0.0,),
) -> AdditiveReport:
    """Subadditive rate bound for a nonnegative mix a1 f1 + a2 f2.

    Bound: sup_t a1(t) M1 + a2(t) M2 with M_i the component rates over
    the sampled region.  A direct sampled rate of the combined field is
    attached; it can only improve on the bound.
    """
    if f1.dim != f2.dim:
        raise DimensionError("component fields have different dimensions")
    a1, a2 = _as_time_callback(alpha1), _as_time_callback(alpha2)
    vals = [(float(a1(t)), float(a2(t))) for t in times]
    if any(v1 < 0 or v2 < 0 for v1, v2 in vals):
        raise DegenerateArgumentError("mixing weights must be nonnegative")
    if min(v1 + v2 for v1, v2 in vals) <= 0:
        raise DegenerateArgumentError("mixing weights must not vanish simultaneously")
    m1 = integral_rate(f1, sampler, spec, times).value
    m2 = integral_rate(f2, sampler, spec, times).value
    bound = max(v1 * m1 + v2 * m2 for v1, v2 in vals)

    def g(t, u):
        return a1(t) * f1(t, u) + a2(t) * f2(t, u)

    direct = integral_rate(VectorField(g, f1.dim, name="additive-mix"), sampler, spec, times)
    return AdditiveReport(bound=float(bound), direct=direct, component_rates=(m1, m2))


# -------------------------------------------------------------- feedback


def _zero_range_residual(F, spec: NormSpec, seed=0):
    """sup over unit v of |sip(v, Fv)|; exact via symmetric eigenvalues
    in the plain l2 norm, sampled probes otherwise."""
    if spec.p == 2.0 and spec.weight is None and not spec.stack:
        w = np.linalg.eigvalsh((F + F.T) / 2.0)
        return float(np.max(np.abs(w)))
    rng = np.random.default_rng(seed)
    vs = rng.normal(size=(200, F.shape[0]))
    worst = 0.0
    for v in vs:
        nv = norm(v, spec)
        if nv < 1e-150:
            continue
        worst = max(worst, abs(sip(v / nv, F @ (v / nv), spec)))
    return float(worst)


def feedback_certificate(
    sys: BlockSystem,
    spec: NormSpec = NormSpec(),
    sampler: DomainSampler = None,
    times=(0.0,),
) -> FeedbackReport:
    """Rate report for a two-block feedback interconnection.

    Reports the skew-adjointness residual sup ||J12 + J21^T|| of the
    coupling, per-block rates, the composite rate of the assembled
    jacobian, and the zero-range residual of the off-diagonal part.
    When the coupling is skew-adjoint and the norm is plain l2, the
    composite rate collapses to the larger block rate (equivalence_gap
    reports the observed difference).
    """
    if sys.n_blocks != 2:
        raise DimensionError("feedback certificate needs exactly two blocks")
    if sampler is None:
        states = [np.zeros(sys.total_dim)]
    else:
        if sampler.dim != sys.total_dim:
            raise DimensionError("sampler dimension does not match the block system")
        states = list(sampler.points())
    skew = 0.0
    rates = [-math.inf, -math.inf]
    composite = -math.inf
    zr = 0.0
    for t in times:
        for u in states:
            J12 = sys.block(0, 1, t, u)
            J21 = sys.block(1, 0, t, u)
            skew = max(skew, float(np.linalg.norm(J12 + J21.T, 2)))
            for i in range(2):
                rates[i] = max(rates[i], operator_rate(sys.block(i, i, t, u), spec).value)
            composite = max(composite, operator_rate(sys.assemble(t, u), spec).value)
            zr = max(zr, _zero_range_residual(sys.off_diagonal(t, u), spec))
    return FeedbackReport(
        skewness_residual=skew,
        block_rates=tuple(rates),
        composite_rate=float(composite),
        zero_range_residual=zr,
        equivalence_gap=float(composite - max(rates)),
    )


# --------------------------------------------------------------- product


def product_lp_rate(
    sys: BlockSystem,
    sampler: DomainSampler = None,
    times=(0.0,),
    horizon: float = 4.0,
    step: float = 1e-2,
    n_perturbations: int = 3,
    seed: int = 0,
) -> ProductReport:
    """Product-norm rate of a block system from its diagonal blocks.

    per_block[i] = sup over samples of the rate of J_ii in l^product_p;
    the diagonal-operator rate in the product norm is their maximum.
    A perturbation of the assembled system (frozen at the first sampled
    state) is integrated and its fitted decay rate must not exceed the
    product rate; off-diagonal coupling must be zero-range for that to
    hold, which is exactly what the dominance flag probes.
    """
    p = sys.product_p
    spec = NormSpec(p=p)
    if sampler is None:
        states = [np.zeros(sys.total_dim)]
    else:
        states = list(sampler.points())
    per = [-math.inf] * sys.n_blocks
    for t in times:
        for u in states:
            for i in range(sys.n_blocks):
                per[i] = max(per[i], operator_rate(sys.block(i, i, t, u), spec).value)
    product = max(per)
    A = sys.assemble(times[0], states[0])
    lin = VectorField.linear(A)
    rng = np.random.default_rng(seed)
    fitted = -math.inf
    for _ in range(n_perturbations):
        d0 = rng.normal(size=sys.total_dim)
        d0 /= norm(d0, spec)
        tr = integrate(lin, d0, (0.0, horizon), step)
        dist = np.array([norm(s, spec) for s in tr.states])
        lam, _ = overshoot_fit(tr.times, dist)
        fitted = max(fitted, lam)
    return ProductReport(
        per_block=tuple(per),
        product_rate=float(product),
        simulated_rate=float(fitted),
        dominance_ok=bool(fitted <= product + 1e-6),
    )


# ------------------------------------------------------------ feedforward


def feedforward_bound(lam1, lam2, gain, d1_0, d2_0, t, formula: str = "convolution") -> float:
    """Perturbation bound for a cascade where block 1 drives block 2.

    formula="convolution" is the standard variation-of-constants bound
    d2_0 e^{lam2 t} + gain d1_0 (e^{lam1 t} - e^{lam2 t})/(lam1 - lam2),
    with the t e^{lam1 t} limit form at lam1 = lam2.  formula="rate-sum"
    evaluates d2_0 e^{lam2 t} + gain d1_0 / (lam1 + lam2) e^{lam1 t},
    an alternative closed form whose denominator is the sum of the two
    rates; for stable rates it can go negative, so it is reported for
    comparison only and never used as a dominance-tested bound.
    """
    if not (lam1 < 0 and lam2 < 0):
        raise DegenerateArgumentError("cascade rates must be negative")
    if gain < 0:
        raise DegenerateArgumentError("gain must be nonnegative")
    base = d2_0 * math.exp(lam2 * t)
    if formula == "rate-sum":
        return base + gain * d1_0 / (lam1 + lam2) * math.exp(lam1 * t)
    if formula != "convolution":
        raise DegenerateArgumentError(f"unknown formula '{formula}'")
    if abs(lam1 - lam2) < 1e-12:
        return base + gain * d1_0 * t * math.exp(lam1 * t)
    return base + gain * d1_0 * (math.exp(lam1 * t) - math.exp(lam2 * t)) / (lam1 - lam2)


# -------------------------------------------------------------- continuum


def trapezoid_rule(n: int = 64, length: float = 1.0):
    """Composite trapezoid nodes/weights on [0, length]."""
    if n < 2:
        raise DegenerateArgumentError("need at least two quadrature nodes")
    nodes = np.linspace(0.0, length, n)
    h = length / (n - 1)
    weights = np.full(n, h)
    weights[0] = weights[-1] = h / 2.0
    return nodes, weights


def continuum_rate(
    f_family,
    phi,
    spec: NormSpec = NormSpec(),
    sampler: DomainSampler = None,
    nodes=None,
    weights=None,
    times=(0.0,),
) -> ContinuumReport:
    """Rate bound for a quadrature-weighted continuum of fields.

    f_family(t, x, u) is a field for every index x; phi >= 0 weights the
    indices.  Bound: (sum_i w_i phi(x_i)) * sup_i rate(f(.,x_i,.)).  The
    direct rate of the combined field sum_i w_i phi(x_i) f(t, x_i, u) is
    attached; subadditivity puts it at or below the bound.
    """
    if nodes is None or weights is None:
        nodes, weights = trapezoid_rule()
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if nodes.shape != weights.shape or nodes.ndim != 1:
        raise DimensionError("nodes and weights must be matching 1-d arrays")
    phis = np.array([float(phi(x)) for x in nodes])
    if np.any(phis < 0):
        raise DegenerateArgumentError("continuum weight must be nonnegative at every node")
    mass = float(np.sum(weights * phis))
    if mass <= 0:
        raise DegenerateArgumentError("continuum weight has zero total mass")
    dim = sampler.dim

    pointwise = -math.inf
    for x in nodes:
        fx = VectorField(lambda t, u, x=x: np.asarray(f_family(t, x, u), dtype=float), dim)
        pointwise = max(pointwise, integral_rate(fx, sampler, spec, times, ascent_starts=2).value)

    coeff = weights * phis

    def g(t, u):
        acc = np.zeros(dim)
        for c, x in zip(coeff, nodes):
            if c != 0.0:
                acc += c * np.asarray(f_family(t, x, u), dtype=float)
        return acc

    direct = integral_rate(VectorField(g, dim, name="continuum-mix"), sampler, spec, times)
    return ContinuumReport(
        pointwise_rate=float(pointwise),
        weighted_mass=mass,
        bound=float(mass * pointwise),
        direct=direct,
        nodes=len(nodes),
    )


# ------------------------------------------------- zero-diagonal unitary


def _range_point(B, target):
    """Unit vector xi with xi* B xi = target for a 2x2 B whose numerical
    range contains the target.

    Parameterizing xi = (sqrt(1-s), sqrt(s) e^{i phi}) over the Schur
    form sweeps the full numerical range (an ellipse); the modulus
    condition is a real quadratic in s solved in closed form.
    """
    T, Z = schur(np.asarray(B, dtype=complex), output="complex")
    t00, t11, t01 = T[0, 0], T[1, 1], T[0, 1]
    d = t11 - t00
    a2 = abs(d) ** 2 + abs(t01) ** 2
    if a2 <= 1e-30:
        xi = np.array([1.0, 0.0], dtype=complex)
        return Z @ xi
    b = 2.0 * (np.conj(d) * (target - t00)).real + abs(t01) ** 2
    c = abs(target - t00) ** 2
    disc = max(b * b - 4.0 * a2 * c, 0.0)
    roots = [(b - math.sqrt(disc)) / (2.0 * a2), (b + math.sqrt(disc)) / (2.0 * a2)]
    s = min((min(max(r, 0.0), 1.0) for r in roots), key=lambda r: abs(r - 0.5))
    cs = math.sqrt(max(1.0 - s, 0.0)) * math.sqrt(max(s, 0.0))
    cross = target - ((1.0 - s) * t00 + s * t11)
    if cs * abs(t01) > 1e-30 and abs(cross) > 0:
        phase = cross / (cs * t01)
        phase /= abs(phase)
    else:
        phase = 1.0
    xi = np.array([math.sqrt(max(1.0 - s, 0.0)), math.sqrt(max(s, 0.0)) * phase], dtype=complex)
    return Z @ xi


def _pair_vector(A, q1, q2, target):
    """Unit vector in span(q1, q2) whose Rayleigh quotient hits target."""
    q1 = q1 / np.linalg.norm(q1)
    w2 = q2 - np.vdot(q1, q2) * q1
    nw = np.linalg.norm(w2)
    if nw < 1e-12:
        return None
    w2 = w2 / nw
    V = np.column_stack([q1, w2])
    B = V.conj().T @ A @ V
    xi = _range_point(B, target)
    v = V @ xi
    return v / np.linalg.norm(v)


def _rayleigh_zero_vector(A):
    """Unit v with v* A v = 0 for a trace-free A.

    The mean of the eigenvalues is zero, so zero lies in their convex
    hull; pick it off an eigenvalue, an eigen-segment, or a triangle
    split into two segment problems (numerical-range convexity makes
    every segment step solvable inside a 2-d compression).
    """
    n = A.shape[0]
    lam, Q = np.linalg.eig(A)
    scale = max(np.max(np.abs(lam)), 1e-30)
    k = int(np.argmin(np.abs(lam)))
    if abs(lam[k]) <= 1e-12 * scale:
        v = Q[:, k]
        return v / np.linalg.norm(v)
    order = np.argsort(-np.abs(lam))
    for ii in range(n):
        for jj in range(ii + 1, n):
            i, j = order[ii], order[jj]
            dlam = lam[j] - lam[i]
            if abs(dlam) <= 1e-14 * scale:
                continue
            m = -lam[i] / dlam
            if abs(m.imag) <= 1e-10 and -1e-10 <= m.real <= 1.0 + 1e-10:
                v = _pair_vector(A, Q[:, i], Q[:, j], 0.0)
                if v is not None:
                    return v
    for ii in range(n):
        for jj in range(ii + 1, n):
            for kk in range(jj + 1, n):
                i, j, k3 = order[ii], order[jj], order[kk]
                # z = kappa*lam_k on the segment [lam_i, lam_j]
                M = np.array(
                    [
                        [(lam[j] - lam[i]).real, -lam[k3].real],
                        [(lam[j] - lam[i]).imag, -lam[k3].imag],
                    ]
                )
                rhs = np.array([-lam[i].real, -lam[i].imag])
                det = np.linalg.det(M)
                if abs(det) <= 1e-14 * scale**2:
                    continue
                m, kappa = np.linalg.solve(M, rhs)
                if not (-1e-10 <= m <= 1.0 + 1e-10) or kappa >= -1e-12:
                    continue
                z = kappa * lam[k3]
                y = _pair_vector(A, Q[:, i], Q[:, j], z)
                if y is None:
                    continue
                qk = Q[:, k3] / np.linalg.norm(Q[:, k3])
                w = qk - np.vdot(y, qk) * y
                nw = np.linalg.norm(w)
                if nw < 1e-12:
                    continue
                w = w / nw
                V = np.column_stack([y, w])
                B2 = V.conj().T @ A @ V
                xi = _range_point(B2, 0.0)
                v = V @ xi
                return v / np.linalg.norm(v)
    raise DegenerateArgumentError("could not locate zero in the numerical range")


def _first_column_unitary(v):
    """Unitary whose first column is the unit vector v (Householder)."""
    n = v.shape[0]
    v = v / np.linalg.norm(v)
    theta = np.angle(v[0]) if abs(v[0]) > 0 else 0.0
    w = v + np.exp(1j * theta) * np.eye(n, dtype=complex)[:, 0]
    H = np.eye(n, dtype=complex) - 2.0 * np.outer(w, w.conj()) / np.vdot(w, w).real
    U1 = H.copy()
    U1[:, 0] *= -np.exp(1j * theta)
    return U1


def zero_diagonal_unitary(A, tol: float = 1e-8) -> np.ndarray:
    """Unitary U such that U* A U has (numerically) zero diagonal.

    Requires Tr A = 0 up to tol relative to ||A||; the construction
    finds a unit Rayleigh-zero vector (convexity of the numerical range
    guarantees one), rotates it into the first coordinate by a
    Householder reflection, and recurses on the deflated block.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"operator must be square, got {A.shape}")
    n = A.shape[0]
    nrm = np.linalg.norm(A, 2)
    if nrm == 0.0:
        return np.eye(n, dtype=complex)
    if abs(np.trace(A)) > tol * nrm:
        raise DegenerateArgumentError(
            f"trace {np.trace(A):.3e} is not zero relative to the operator norm"
        )
    if np.max(np.abs(np.diag(A))) <= tol * nrm:
        return np.eye(n, dtype=complex)
    U = np.eye(n, dtype=complex)
    B = A.copy()
    for k in range(n - 1):
        sub = B[k:, k:]
        v = _rayleigh_zero_vector(sub)
        U1 = _first_column_unitary(v)
        E = np.eye(n, dtype=complex)
        E[k:, k:] = U1
        U = U @ E
        B = E.conj().T @ B @ E
    return U
