"""Trajectory integration and empirical contraction certificates.

A fixed-step classical Runge-Kutta integrator (deterministic and
reproducible by construction), co-integration of linearized
perturbations, and the certificate machinery that checks claimed decay
envelopes kappa * exp(lambda (t - s)) against simulated pair distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateArgumentError, DivergenceError
from .measures import BLOWUP, VectorField
from .spaces import NormSpec, norm

__all__ = [
    "Trajectory",
    "CertificateResult",
    "integrate",
    "variational_flow",
    "distance_series",
    "verify_contraction",
    "overshoot_fit",
]


@dataclass(frozen=True)
class Trajectory:
    """Uniformly spaced solution samples: states[k] at times[k]."""

    times: np.ndarray
    states: np.ndarray
    step: float

    def __post_init__(self):
        if self.times.ndim != 1 or self.states.ndim != 2:
            raise DegenerateArgumentError("trajectory needs 1-d times and 2-d states")
        if self.times.shape[0] != self.states.shape[0]:
            raise DegenerateArgumentError("times and states disagree in length")
        dt = np.diff(self.times)
        if dt.size and (np.max(dt) - np.min(dt)) > 1e-12 * max(1.0, abs(float(self.times[-1]))):
            raise DegenerateArgumentError("trajectory spacing is not uniform")

    @property
    def dim(self):
        return self.states.shape[1]

    def state(self, k):
        return self.states[k]


def _span(t_span):
    try:
        t0, t1 = float(t_span[0]), float(t_span[1])
    except TypeError:
        t0, t1 = 0.0, float(t_span)
    if not t1 > t0:
        raise DegenerateArgumentError(f"need t1 > t0, got ({t0}, {t1})")
    return t0, t1


def _rk4_step(f, t, u, h):
    k1 = f(t, u)
    k2 = f(t + 0.5 * h, u + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, u + 0.5 * h * k2)
    k4 = f(t + h, u + h * k3)
    return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(f: VectorField, u0, t_span, h: float) -> Trajectory:
    """Classical fixed-step RK4.

    The step is rescaled to divide the span exactly so the sample grid is
    uniform; integration aborts with DivergenceError once the state norm
    crosses the blow-up sentinel.
    """
    t0, t1 = _span(t_span)
    if not h > 0:
        raise DegenerateArgumentError("step must be positive")
    n = max(1, int(round((t1 - t0) / h)))
    h_eff = (t1 - t0) / n
    u = np.array(u0, dtype=float)
    if u.ndim != 1:
        raise DegenerateArgumentError("initial state must be a vector")
    out = np.empty((n + 1, u.shape[0]))
    out[0] = u
    for k in range(n):
        t = t0 + k * h_eff
        u = _rk4_step(f, t, u, h_eff)
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > BLOWUP:
            raise DivergenceError(f"state blew up at t = {t + h_eff:.6g}", t=t + h_eff)
        out[k + 1] = u
    times = t0 + np.arange(n + 1) * h_eff
    return Trajectory(times=times, states=out, step=h_eff)


def variational_flow(f: VectorField, u0, du0, t_span, h: float):
    """Co-integrate the state and a linearized perturbation with one stepper.

    Returns (state trajectory, perturbation trajectory) on the same grid;
    the perturbation obeys d(du)/dt = Df(t, u(t)) du.
    """
    u0 = np.asarray(u0, dtype=float)
    du0 = np.asarray(du0, dtype=float)
    if u0.shape != du0.shape:
        raise DegenerateArgumentError("state and perturbation dimensions differ")
    n = u0.shape[0]

    def stacked(t, z):
        u, du = z[:n], z[n:]
        return np.concatenate([f(t, u), f.jacobian(t, u) @ du])

    joint = integrate(VectorField(fn=stacked, dim=2 * n), np.concatenate([u0, du0]), t_span, h)
    base = Trajectory(times=joint.times, states=joint.states[:, :n], step=joint.step)
    pert = Trajectory(times=joint.times, states=joint.states[:, n:], step=joint.step)
    return base, pert


def distance_series(tr_a: Trajectory, tr_b: Trajectory, spec: NormSpec = NormSpec()) -> np.ndarray:
    if tr_a.states.shape != tr_b.states.shape:
        raise DegenerateArgumentError("trajectories have different shapes")
    return np.array([norm(d, spec) for d in (tr_a.states - tr_b.states)])


def overshoot_fit(times, distances):
    """Least-squares fit of log d(t) = log kappa + lambda t.

    Returns (lambda, kappa) with kappa clamped up to 1 when the fit lands
    within its own residual noise of 1 (an overshoot constant below one
    is never reported).  Needs at least three positive samples.
    """
    times = np.asarray(times, dtype=float)
    distances = np.asarray(distances, dtype=float)
    keep = distances > 0.0
    if keep.sum() < 3:
        raise DegenerateArgumentError("overshoot fit needs at least 3 positive distances")
    t, d = times[keep], np.log(distances[keep])
    lam, logk = np.polyfit(t, d, 1)
    resid = d - (lam * t + logk)
    noise = float(np.sqrt(np.mean(resid**2)))
    kappa = math.exp(logk)
    if kappa < 1.0 and logk > -(3.0 * noise + 1e-9):
        kappa = 1.0
    return float(lam), float(kappa)


@dataclass(frozen=True)
class CertificateResult:
    """Outcome of an empirical decay-envelope check."""

    passed: bool
    claimed_rate: float
    claimed_overshoot: float
    max_violation: float
    fitted_rate: float
    fitted_overshoot: float
    pairs_checked: int
    grid_points: int
    tolerance: float


def verify_contraction(
    f: VectorField,
    pairs,
    spec: NormSpec = NormSpec(),
    rate: float = 0.0,
    overshoot: float = 1.0,
    t_span=(0.0, 1.0),
    h: float = 1e-2,
    atol: float = 1e-6,
    rtol: float = 1e-6,
) -> CertificateResult:
    """Integrate initial pairs and test d(t) <= overshoot e^{rate (t-s)} d(s).

    The inequality is checked on strided grid anchors (stride ~ N/50) for
    every s <= t, with tolerance atol + rtol * envelope.  The returned
    fitted rate/overshoot come from the worst-decaying pair.
    """
    if overshoot < 1.0:
        raise DegenerateArgumentError("overshoot constant below 1 is vacuous")
    if not pairs:
        raise DegenerateArgumentError("need at least one initial pair")
    worst_violation = -math.inf
    fitted = []
    n_grid = 0
    for u0, v0 in pairs:
        tr_u = integrate(f, u0, t_span, h)
        tr_v = integrate(f, v0, t_span, h)
        d = distance_series(tr_u, tr_v, spec)
        t = tr_u.times
        stride = max(1, len(t) // 50)
        idx = np.arange(0, len(t), stride)
        if idx[-1] != len(t) - 1:
            idx = np.append(idx, len(t) - 1)
        n_grid = len(idx)
        ts, ds = t[idx], d[idx]
        # all anchor pairs s <= t at once
        dt = ts[None, :] - ts[:, None]
        envelope = overshoot * np.exp(rate * dt) * ds[:, None]
        viol = ds[None, :] - (envelope + atol + rtol * np.abs(envelope))
        upper = np.triu_indices_from(viol, k=0)
        worst_violation = max(worst_violation, float(viol[upper].max()))
        try:
            fitted.append(overshoot_fit(t, d))
        except DegenerateArgumentError:
            fitted.append((-math.inf, 1.0))
    worst_fit = max(fitted, key=lambda lk: lk[0])
    return CertificateResult(
        passed=bool(worst_violation <= 0.0),
        claimed_rate=float(rate),
        claimed_overshoot=float(overshoot),
        max_violation=float(worst_violation),
        fitted_rate=worst_fit[0],
        fitted_overshoot=worst_fit[1],
        pairs_checked=len(pairs),
        grid_points=n_grid,
        tolerance=atol,
    )
