"""Closed loops on the control sphere and the RF waveforms that realize them.

A loop is a pair of angle functions (theta(t), phi(t)) on [0, T] tracing the
unit vector q = (sin theta cos phi, sin theta sin phi, cos theta).  Loops
carry analytic derivative functions rather than relying on numerical
differentiation: the effective Hamiltonian is proportional to dq/dt, so
derivative noise would leak straight into the dynamics.

The catalog covers the six experiment loops l1..l6 and the three great
circles p1..p3 used for path-ordering diagnostics, each parameterized by the
traversal rate (duration T = 2*pi/rate):

    l1: theta = rate*t, phi = 0        (great circle in the x-z plane)
    l2: theta = rate*t, phi = pi/2     (great circle in the y-z plane)
    l3: theta = pi/2,   phi = rate*t   (equator)
    l4: theta = rate*t, phi = pi/4     (great circle, diagonal plane)
    l5: theta = pi/4,   phi = rate*t   (45-degree cone)
    l6: theta = rate*t, phi = rate*t   (spiral through both poles)
    p1: theta = rate*t, phi = -pi/2    (y-z plane, reverse sense of l2)
    p2: theta = rate*t, phi = 0        (same as l1)
    p3: theta = pi/2,   phi = rate*t   (same as l3)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

__all__ = [
    "ParameterLoop",
    "make_loop",
    "loop_labels",
    "EXPERIMENT_LABELS",
    "GREAT_CIRCLE_LABELS",
    "rf_amplitude",
    "rf_phase",
    "synthesize_waveform",
]

EXPERIMENT_LABELS = ("l1", "l2", "l3", "l4", "l5", "l6")
GREAT_CIRCLE_LABELS = ("p1", "p2", "p3")


@dataclass(frozen=True)
class ParameterLoop:
    """A closed path (theta(t), phi(t)) with analytic derivatives.

    ``theta_const`` marks loops whose polar angle is constant, which lets the
    RF phase integral be evaluated in closed form.  Closure of the traced q
    path is checked at construction (|q(0) - q(T)| <= 1e-9).
    """

    theta: Callable[[np.ndarray], np.ndarray]
    phi: Callable[[np.ndarray], np.ndarray]
    dtheta: Callable[[np.ndarray], np.ndarray]
    dphi: Callable[[np.ndarray], np.ndarray]
    duration: float
    label: str = "custom"
    theta_const: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("loop duration must be positive")
        gap = float(np.linalg.norm(self.q_of_t(0.0) - self.q_of_t(self.duration)))
        if gap > 1e-9:
            raise ValueError(f"loop {self.label!r} is not closed: |q(0)-q(T)| = {gap:.2e}")

    def _check_t(self, t):
        t = np.asarray(t, dtype=float)
        slack = 1e-9 * self.duration
        if np.any(t < -slack) or np.any(t > self.duration + slack):
            raise ValueError(f"time outside [0, {self.duration}] for loop {self.label!r}")
        return t

    def q_of_t(self, t) -> np.ndarray:
        """Unit control vector q(t); shape (3,) for scalar t, (..., 3) for arrays."""
        t = self._check_t(t)
        th = self.theta(t)
        ph = self.phi(t)
        st = np.sin(th)
        return np.stack(
            np.broadcast_arrays(st * np.cos(ph), st * np.sin(ph), np.cos(th)), axis=-1
        )

    def dq_dt(self, t) -> np.ndarray:
        """Analytic time derivative of q(t), orthogonal to q since |q| = 1."""
        t = self._check_t(t)
        th, ph = self.theta(t), self.phi(t)
        dth, dph = self.dtheta(t), self.dphi(t)
        st, ct = np.sin(th), np.cos(th)
        sp, cp = np.sin(ph), np.cos(ph)
        return np.stack(
            np.broadcast_arrays(
                ct * cp * dth - st * sp * dph,
                ct * sp * dth + st * cp * dph,
                -st * dth,
            ),
            axis=-1,
        )


def _angles(spec, rate: float):
    """(value_fn, derivative_fn, const_value) for a swept or constant angle."""
    if spec == "sweep":
        return (lambda t: rate * np.asarray(t, float),
                lambda t: np.full_like(np.asarray(t, float), rate),
                None)
    value = float(spec)
    return (lambda t: np.full_like(np.asarray(t, float), value),
            lambda t: np.zeros_like(np.asarray(t, float)),
            value)


_CATALOG = {
    "l1": ("sweep", 0.0),
    "l2": ("sweep", math.pi / 2),
    "l3": (math.pi / 2, "sweep"),
    "l4": ("sweep", math.pi / 4),
    "l5": (math.pi / 4, "sweep"),
    "l6": ("sweep", "sweep"),
    "p1": ("sweep", -math.pi / 2),
    "p2": ("sweep", 0.0),
    "p3": (math.pi / 2, "sweep"),
}


def loop_labels() -> tuple[str, ...]:
    return tuple(_CATALOG)


def make_loop(label: str, loop_rate: float) -> ParameterLoop:
    """Construct a cataloged loop with traversal rate ``loop_rate`` (rad/s)."""
    if label not in _CATALOG:
        raise ValueError(f"unknown loop label {label!r}; known: {', '.join(_CATALOG)}")
    if loop_rate <= 0:
        raise ValueError("loop_rate must be positive")
    theta_spec, phi_spec = _CATALOG[label]
    theta, dtheta, theta_const = _angles(theta_spec, loop_rate)
    phi, dphi, _ = _angles(phi_spec, loop_rate)
    return ParameterLoop(
        theta=theta, phi=phi, dtheta=dtheta, dphi=dphi,
        duration=2.0 * math.pi / loop_rate, label=label, theta_const=theta_const,
    )


def rf_amplitude(loop: ParameterLoop, t, omega0: float, omega: float):
    """Signed Rabi-frequency envelope 2*omega0*sin(theta(t))*cos(omega*t), rad/s."""
    if omega0 <= 0 or omega <= 0:
        raise ValueError("omega0 and omega must be positive")
    t = loop._check_t(t)
    return 2.0 * omega0 * np.sin(loop.theta(t)) * np.cos(omega * t)


def _phase_integral_scalar(loop: ParameterLoop, t: float, omega: float) -> float:
    """integral_0^t cos(theta(u)) cos(omega u) du by adaptive quadrature.

    Integrated piecewise over half-periods of the fast cosine so the adaptive
    rule never sees more than one oscillation at a time (abs tol 1e-10).
    """
    if loop.theta_const is not None:
        return math.cos(loop.theta_const) * math.sin(omega * t) / omega
    total = 0.0
    edges = np.arange(0.0, t, math.pi / omega)
    edges = np.append(edges, t)
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = quad(lambda u: math.cos(float(loop.theta(u))) * math.cos(omega * u),
                      a, b, epsabs=1e-10, epsrel=1e-12, limit=200)
        total += val
    return total


def rf_phase(loop: ParameterLoop, t, omega0: float, omega: float):
    """Phase modulation phi(t) + pi/2 - omega0 * integral cos(theta) cos(omega u) du.

    Returned unwrapped (no artificial 2*pi jumps); continuous on [0, T].
    """
    if omega0 <= 0 or omega <= 0:
        raise ValueError("omega0 and omega must be positive")
    tarr = loop._check_t(t)
    if tarr.ndim == 0:
        integral = _phase_integral_scalar(loop, float(tarr), omega)
        return float(loop.phi(tarr)) + math.pi / 2.0 - omega0 * integral
    integrals = _phase_integral_grid(loop, tarr, omega)
    return np.asarray(loop.phi(tarr), float) + math.pi / 2.0 - omega0 * integrals


def _phase_integral_grid(loop: ParameterLoop, ts: np.ndarray, omega: float) -> np.ndarray:
    """Cumulative phase integral on an increasing grid via prefix-sum Simpson.

    One pass over the grid instead of one adaptive quadrature per sample,
    which would cost O(n^2) in total.
    """
    ts = np.asarray(ts, dtype=float)
    if ts.ndim != 1 or ts.size < 1:
        raise ValueError("grid must be a 1-d array of times")
    if np.any(np.diff(ts) <= 0):
        raise ValueError("grid must be strictly increasing")
    if loop.theta_const is not None:
        return math.cos(loop.theta_const) * np.sin(omega * ts) / omega

    def f(u):
        return np.cos(np.asarray(loop.theta(u), float)) * np.cos(omega * u)

    mids = 0.5 * (ts[:-1] + ts[1:])
    fa, fm, fb = f(ts[:-1]), f(mids), f(ts[1:])
    seg = (ts[1:] - ts[:-1]) / 6.0 * (fa + 4.0 * fm + fb)
    out = np.empty_like(ts)
    out[0] = 0.0
    np.cumsum(seg, out=out[1:])
    if ts[0] != 0.0:
        out += _phase_integral_scalar(loop, float(ts[0]), omega)
    return out


def synthesize_waveform(loop: ParameterLoop, config, sample_rate: float):
    """Sample the physical RF drive over one loop.

    Returns (times, samples) where samples = amplitude(t) * sin(omega_rf*t +
    phase(t)) in Rabi-frequency units (rad/s).  ``sample_rate`` (Hz) must
    exceed twice the modulated-carrier frequency omega_rf/2pi + omega/2pi.
    Sample count is floor(T * sample_rate) + 1 starting at t = 0.
    """
    nyquist = 2.0 * (config.omega_rf + config.omega) / (2.0 * math.pi)
    if sample_rate <= nyquist:
        raise ValueError(f"sample_rate {sample_rate:.3g} Hz below Nyquist {nyquist:.3g} Hz")
    n = int(math.floor(loop.duration * sample_rate)) + 1
    ts = np.arange(n) / sample_rate
    amp = rf_amplitude(loop, ts, config.omega0, config.omega)
    phase = rf_phase(loop, ts, config.omega0, config.omega)
    return ts, amp * np.sin(config.omega_rf * ts + phase)
