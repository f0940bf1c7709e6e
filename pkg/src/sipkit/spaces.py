"""Norms, one-sided semi-inner products, and Dini derivative estimates.

Every rate computed by this package is a supremum of quotients built from
a norm and the semi-inner product compatible with it.  This module owns
those primitives: weighted and stacked l^p norms, their right/left
semi-inner products in closed form, a slow difference-quotient reference
for the same quantity, and one-sided derivative estimates for scalar
signals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConditioningError,
    DegenerateArgumentError,
    DimensionError,
    UnsupportedNormError,
)

__all__ = [
    "NormSpec",
    "as_vector",
    "norm",
    "sip",
    "complex_sip",
    "gateaux_sip",
    "dini_plus",
    "conjugate_exponent",
]

# Absolute tolerance for treating a coordinate as zero in the p=1 forms.
ZERO_COORD_TOL = 1e-14
# Relative tolerance for membership in the max-attaining set for p=inf.
ARGMAX_REL_TOL = 1e-12
# Condition-number ceiling for weights.
COND_LIMIT = 1e12

# Difference-quotient ladder shared by the Gateaux reference and dini_plus.
_H_LADDER = tuple(10.0 ** (-k) for k in range(4, 10))


def as_vector(entries, dtype=None) -> np.ndarray:
    """Validate and return a 1-d array with finite entries."""
    v = np.asarray(entries, dtype=dtype)
    if v.ndim != 1 or v.size == 0:
        raise DimensionError(f"expected a nonempty 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DegenerateArgumentError("vector has non-finite entries")
    return v


def conjugate_exponent(p: float) -> float:
    if p == 1.0:
        return math.inf
    if p == math.inf:
        return 1.0
    return p / (p - 1.0)


@dataclass(frozen=True, eq=False)
class NormSpec:
    """Which norm a computation runs in.

    p=2 with no weight is the plain Euclidean case.  A square invertible
    ``weight`` matrix measures vectors after the change of coordinates it
    induces.  ``stack`` holds grid difference operators; when present the
    norm is the stacked one (p-th powers of the derivative levels summed),
    and ``sobolev_k`` reports how many derivative levels are attached.
    """

    p: float = 2.0
    weight: np.ndarray | None = None
    stack: tuple[np.ndarray, ...] | None = field(default=None, repr=False)
    field_kind: str = "real"

    def __post_init__(self):
        if not (self.p >= 1.0):
            raise UnsupportedNormError(f"p must satisfy p >= 1, got {self.p}")
        if self.field_kind not in ("real", "complex"):
            raise DegenerateArgumentError(f"unknown field {self.field_kind!r}")
        if self.weight is not None:
            w = np.asarray(self.weight, dtype=complex if self.field_kind == "complex" else float)
            if w.ndim != 2 or w.shape[0] != w.shape[1]:
                raise ConditioningError(f"weight must be square, got shape {w.shape}")
            c = np.linalg.cond(w)
            if not np.isfinite(c) or c > COND_LIMIT:
                raise ConditioningError(f"weight condition number {c:.3e} exceeds {COND_LIMIT:.0e}")
            object.__setattr__(self, "weight", w)
        if self.weight is not None and self.stack is not None:
            raise ConditioningError("weight and stack are mutually exclusive")

    @property
    def sobolev_k(self) -> int:
        return 0 if self.stack is None else len(self.stack)


def _transform(v: np.ndarray, spec: NormSpec) -> np.ndarray:
    """Map v into the coordinates the norm actually measures."""
    if spec.weight is not None:
        if spec.weight.shape[1] != v.shape[0]:
            raise DimensionError(
                f"weight acts on dimension {spec.weight.shape[1]}, vector has {v.shape[0]}"
            )
        return spec.weight @ v
    if spec.stack:
        parts = [v]
        for op in spec.stack:
            if op.shape[1] != v.shape[0]:
                raise DimensionError("stack operator does not match vector dimension")
            parts.append(op @ v)
        return np.concatenate(parts)
    return v


def _raw_norm(x: np.ndarray, p: float) -> float:
    a = np.abs(x)
    if p == math.inf:
        return float(a.max())
    if p == 1.0:
        return float(a.sum())
    if p == 2.0:
        return float(np.sqrt((a * a).sum()))
    return float((a**p).sum() ** (1.0 / p))


def norm(v, spec: NormSpec = NormSpec()) -> float:
    """Weighted (or stacked) l^p norm of v under spec."""
    v = as_vector(v, dtype=complex if spec.field_kind == "complex" else None)
    return _raw_norm(_transform(v, spec), spec.p)


def _sip_raw(u: np.ndarray, v: np.ndarray, p: float, side: str) -> float:
    """One-sided semi-inner product of untransformed coordinate vectors.

    Right (side='plus') and left (side='minus') derivatives of the norm,
    scaled so that _sip_raw(u, u) equals the squared norm.  For 1 < p < inf
    the two sides agree and the closed form below is the classical one; the
    p=1 and p=inf branches implement the one-sided limits directly.
    """
    nu = _raw_norm(u, p)
    if nu == 0.0:
        raise DegenerateArgumentError("semi-inner product undefined at u = 0")
    if p == 2.0:
        return float(np.real(np.vdot(u, v)))
    if p == 1.0:
        # Coordinates at zero contribute |v_i| from the right, -|v_i| from
        # the left; everywhere else the modulus is differentiable.
        zero = np.abs(u) <= ZERO_COORD_TOL
        live = ~zero
        s = 0.0
        if np.any(live):
            s += float(np.sum(np.real(np.conj(u[live]) * v[live]) / np.abs(u[live])))
        kink = float(np.sum(np.abs(v[zero])))
        s += kink if side == "plus" else -kink
        return nu * s
    if p == math.inf:
        amax = np.abs(u).max()
        idx = np.abs(u) >= amax * (1.0 - ARGMAX_REL_TOL)
        slopes = np.real(np.conj(u[idx]) * v[idx]) / np.abs(u[idx])
        pick = slopes.max() if side == "plus" else slopes.min()
        return nu * float(pick)
    # 1 < p < inf: Gateaux differentiable, both sides coincide.
    a = np.abs(u)
    live = a > 0.0
    terms = np.zeros(u.shape[0])
    terms[live] = a[live] ** (p - 2.0) * np.real(np.conj(u[live]) * v[live])
    return float(nu ** (2.0 - p) * terms.sum())


def sip(u, v, spec: NormSpec = NormSpec(), side: str = "plus") -> float:
    """Semi-inner product (u, v) compatible with norm(.., spec).

    Returns the one-sided derivative ||u|| * d/dh ||u + h v|| at h -> 0
    from the requested side, in closed form.  Positive-homogeneous and
    subadditive in v; sip(u, u) recovers norm(u)^2.
    """
    if side not in ("plus", "minus"):
        raise DegenerateArgumentError(f"side must be 'plus' or 'minus', got {side!r}")
    dtype = complex if spec.field_kind == "complex" else None
    u = as_vector(u, dtype=dtype)
    v = as_vector(v, dtype=dtype)
    if u.shape != v.shape:
        raise DimensionError(f"shape mismatch {u.shape} vs {v.shape}")
    return _sip_raw(_transform(u, spec), _transform(v, spec), spec.p, side)


def complex_sip(u, v, spec: NormSpec) -> complex:
    """Complex-valued semi-inner product for complex l^p, 1 < p < inf.

    Conjugate-homogeneous in u, linear in v, with real part equal to
    sip(u, v); at p=2 it is the Hermitian inner product.  The p=1 and
    p=inf norms are not smooth enough to support it.
    """
    if spec.field_kind != "complex":
        raise UnsupportedNormError("complex_sip requires a complex-field spec")
    if spec.p in (1.0, math.inf):
        raise UnsupportedNormError("complex semi-inner product needs 1 < p < inf")
    u = as_vector(u, dtype=complex)
    v = as_vector(v, dtype=complex)
    if u.shape != v.shape:
        raise DimensionError(f"shape mismatch {u.shape} vs {v.shape}")
    tu, tv = _transform(u, spec), _transform(v, spec)
    p = spec.p
    nu = _raw_norm(tu, p)
    if nu == 0.0:
        raise DegenerateArgumentError("semi-inner product undefined at u = 0")
    a = np.abs(tu)
    live = a > 0.0
    terms = np.zeros(tu.shape[0], dtype=complex)
    terms[live] = a[live] ** (p - 2.0) * np.conj(tu[live]) * tv[live]
    return complex(nu ** (2.0 - p) * terms.sum())


def _ladder_limit(q):
    """Extrapolate difference quotients q(h) over the shared h ladder.

    Richardson-extrapolates successive ladder pairs (geometric ratio 0.1)
    and returns the pair whose extrapolant agrees best with its neighbour,
    which self-selects the window where truncation and cancellation
    balance.  Returns +/-inf when the quotients grow without bound.
    """
    vals = np.array([q(h) for h in _H_LADDER])
    if not np.all(np.isfinite(vals)):
        bad = vals[~np.isfinite(vals)]
        return math.inf if (bad > 0).any() else -math.inf
    mags = np.abs(vals)
    if mags[-1] > 1e10 and mags[-1] > 50.0 * max(mags[0], 1.0):
        return math.inf if vals[-1] > 0 else -math.inf
    # Quotients that keep growing geometrically as h shrinks have no limit.
    if mags[0] > 0 and np.all(mags[1:] >= 1.5 * mags[:-1]) and mags[-1] >= 50.0 * mags[0]:
        return math.inf if vals[-1] > 0 else -math.inf
    # q(h) = L + c h: with h' = h/10, L = (10 q(h') - q(h)) / 9.
    exts = (10.0 * vals[1:] - vals[:-1]) / 9.0
    if len(exts) == 1:
        return float(exts[0])
    gaps = np.abs(np.diff(exts))
    k = int(np.argmin(gaps))
    return float(exts[k + 1])


def gateaux_sip(u, v, spec: NormSpec = NormSpec(), side: str = "plus") -> float:
    """Difference-quotient reference for sip().

    Evaluates ||u|| (||u + h v|| - ||u||)/h over a shrinking ladder of h
    and extrapolates.  Slow; used to cross-check the closed forms.
    """
    dtype = complex if spec.field_kind == "complex" else None
    u = as_vector(u, dtype=dtype)
    v = as_vector(v, dtype=dtype)
    nu = norm(u, spec)
    if nu == 0.0:
        raise DegenerateArgumentError("semi-inner product undefined at u = 0")
    sgn = 1.0 if side == "plus" else -1.0

    def quot(h):
        hh = sgn * h
        return (norm(u + hh * v, spec) - nu) / hh

    return nu * _ladder_limit(quot)


def dini_plus(signal, t: float) -> float:
    """Upper right Dini derivative estimate of a scalar signal at t.

    ``signal`` is either a callable s(t) or a pair (times, values) of
    sampled data.  Callables go through the extrapolated ladder; sampled
    data uses the first available forward quotient.  Divergent quotients
    return +/-inf rather than raising.
    """
    if callable(signal):
        s0 = float(signal(t))

        def quot(h):
            return (float(signal(t + h)) - s0) / h

        return _ladder_limit(quot)
    times, values = signal
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or times.ndim != 1:
        raise DimensionError("sampled signal needs matching 1-d times and values")
    ahead = np.where(times > t + 1e-15)[0]
    if ahead.size == 0:
        raise DegenerateArgumentError(f"no samples to the right of t = {t}")
    here = int(np.argmin(np.abs(times - t)))
    j = int(ahead[0])
    if here == j:
        raise DegenerateArgumentError("degenerate sample spacing at t")
    return float((values[j] - values[here]) / (times[j] - times[here]))
