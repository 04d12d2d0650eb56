"""Hamiltonians for a periodically driven spin and their effective-frame forms.

The physical setting is N = 2F+1 magnetic sublevels driven by a modulated RF
field.  In the frame rotating with the carrier, the drive reduces to

    H(t) = omega0 * (q(t) . F) * cos(omega * t),

a fictitious magnetic field of strength omega0 pointing along the unit vector
q(t), with the whole term modulated at the drive frequency omega.  Averaging
over one drive period in the basis of the micromotion operator leaves an
effective Hamiltonian proportional to the loop motion alone,

    H_eff(t) = g * (q x dq/dt) . F,        g = 1 - J0(omega0 / omega),

so a static q produces no dynamics at all: the dressed levels are degenerate
and transport around closed q loops is purely geometric.  Static offsets
(detuning, quadratic Zeeman) are not modulated and acquire their own
effective forms, built here as well.

All frequencies are angular (rad/s) throughout; anything quoted in Hz gets
multiplied by 2*pi at the boundary (config parsing), never here.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .loops import ParameterLoop
from .spin import SpinOperators, Unitary, expm_generator, spin_matrices

__all__ = [
    "DrivingConfig",
    "GaugeConnection",
    "bessel_j0",
    "g_factor",
    "h_rotating",
    "h_lab",
    "micromotion",
    "h_floquet",
    "h_detuning_floquet",
    "quadratic_zeeman",
    "epsilon_from_zeeman",
]

# ---------------------------------------------------------------------------
# Bessel J0, implemented in-repo so the coupling constant is bit-reproducible
# across platforms.  Power series below |x| = 12, Hankel asymptotic beyond;
# verified against an exponentially convergent quadrature rule to < 2e-12
# over [0, 50].

_J0_SPLIT = 12.0


def _hankel_symbols(count: int) -> list[float]:
    # (0, m) = product_{j=1..m} -(2j-1)^2 / (m * 8), starting from 1
    vals = [1.0]
    for m in range(1, count):
        vals.append(vals[-1] * (-((2 * m - 1) ** 2)) / (m * 8.0))
    return vals


_J0_SYMBOLS = _hankel_symbols(22)


def bessel_j0(x: float) -> float:
    """Zeroth-order Bessel function of the first kind."""
    x = abs(float(x))
    if x <= _J0_SPLIT:
        total = 1.0
        term = 1.0
        k = 0
        while abs(term) > 1e-18:
            k += 1
            term *= -(x * x) / (4.0 * k * k)
            total += term
        return total
    chi = x - 0.25 * math.pi
    p = sum((-1) ** k * _J0_SYMBOLS[2 * k] / x ** (2 * k) for k in range(11))
    q = sum((-1) ** k * _J0_SYMBOLS[2 * k + 1] / x ** (2 * k + 1) for k in range(10))
    return math.sqrt(2.0 / (math.pi * x)) * (p * math.cos(chi) - q * math.sin(chi))


def g_factor(omega0: float, omega: float) -> float:
    """Geometric coupling constant g = 1 - J0(omega0/omega)."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    return 1.0 - bessel_j0(omega0 / omega)


# ---------------------------------------------------------------------------
# Configuration

_ADIABATIC_RATIO_WARN = 0.2


@dataclass(frozen=True)
class DrivingConfig:
    """All physical rates of one driving configuration, in rad/s.

    omega0    drive strength (peak fictitious field)
    omega     modulation (Floquet) frequency
    loop_rate traversal rate of the control loop, duration T = 2*pi/loop_rate
    omega_rf  RF carrier frequency (lab frame)
    omega_z   linear Zeeman splitting (lab frame)
    delta     static detuning vector (rad/s, 3 components)
    epsilon   quadratic Zeeman coefficient
    spin_f    spin quantum number of the manifold
    """

    omega0: float
    omega: float
    loop_rate: float
    spin_f: float
    omega_rf: float = 2.0 * math.pi * 1.25e6
    omega_z: float = 2.0 * math.pi * 1.25e6
    delta: tuple[float, float, float] = (0.0, 0.0, 0.0)
    epsilon: float = 0.0

    def __post_init__(self):
        if self.omega0 <= 0 or self.omega <= 0 or self.loop_rate <= 0:
            raise ValueError("omega0, omega and loop_rate must all be positive")
        d = np.asarray(self.delta, dtype=float)
        if d.shape != (3,):
            raise ValueError("delta must have exactly three components")
        object.__setattr__(self, "delta", (float(d[0]), float(d[1]), float(d[2])))
        spin_matrices(self.spin_f)  # validates spin_f and the dimension cap
        if self.adiabaticity > _ADIABATIC_RATIO_WARN:
            warnings.warn(
                f"loop_rate/omega = {self.adiabaticity:.3f} exceeds "
                f"{_ADIABATIC_RATIO_WARN}; loop traversal is not adiabatic "
                "relative to the drive",
                stacklevel=2,
            )

    @property
    def adiabaticity(self) -> float:
        """Diagnostic ratio loop_rate/omega; small means adiabatic traversal."""
        return self.loop_rate / self.omega

    @property
    def loop_duration(self) -> float:
        return 2.0 * math.pi / self.loop_rate

    @property
    def g(self) -> float:
        return g_factor(self.omega0, self.omega)

    @property
    def delta_vec(self) -> np.ndarray:
        return np.asarray(self.delta, dtype=float)

    @property
    def spin(self) -> SpinOperators:
        return spin_matrices(self.spin_f)

    def with_delta_z(self, delta_z: float) -> "DrivingConfig":
        return replace(self, delta=(self.delta[0], self.delta[1], float(delta_z)))


@dataclass(frozen=True)
class GaugeConnection:
    """Matrix-valued connection A(q) = g * (F x q) on the control sphere.

    Each of the three components is Hermitian and traceless, and the vector
    of components is transverse to q: q . A(q) = 0.
    """

    g: float
    spin: SpinOperators

    def at(self, q) -> np.ndarray:
        """Components (A_x, A_y, A_z) at control point q, shape (3, N, N)."""
        q = np.asarray(q, dtype=float)
        s = self.spin
        return self.g * np.stack([
            s.fy * q[2] - s.fz * q[1],
            s.fz * q[0] - s.fx * q[2],
            s.fx * q[1] - s.fy * q[0],
        ])

    def line_element(self, q, dq) -> np.ndarray:
        """dq . A(q) = g * (q x dq) . F, the generator of transport along dq."""
        q = np.asarray(q, dtype=float)
        dq = np.asarray(dq, dtype=float)
        return self.g * self.spin.dot(np.cross(q, dq))


# ---------------------------------------------------------------------------
# Frame Hamiltonians


def h_rotating(
    t: float,
    loop: ParameterLoop,
    config: DrivingConfig,
    include_detuning: bool = False,
    include_quadratic_zeeman: bool = False,
) -> np.ndarray:
    """Rotating-frame drive omega0 * (q(t).F) * cos(omega t), optionally with
    the static detuning delta.F and quadratic Zeeman terms added."""
    ops = config.spin
    h = config.omega0 * math.cos(config.omega * t) * ops.dot(loop.q_of_t(t))
    if include_detuning and any(config.delta):
        h = h + ops.dot(config.delta_vec)
    if include_quadratic_zeeman and config.epsilon:
        h = h + quadratic_zeeman(config)
    return h


def h_lab(t: float, loop: ParameterLoop, config: DrivingConfig) -> np.ndarray:
    """Lab-frame Hamiltonian: modulated RF coupling on F_x plus the Zeeman term.

    H = amplitude(t) * sin(omega_rf t + phase(t)) * F_x + omega_z * F_z
    with the amplitude/phase waveforms that realize the loop.
    """
    from .loops import rf_amplitude, rf_phase

    ops = config.spin
    amp = float(rf_amplitude(loop, t, config.omega0, config.omega))
    phase = float(rf_phase(loop, t, config.omega0, config.omega))
    return amp * math.sin(config.omega_rf * t + phase) * ops.fx + config.omega_z * ops.fz


def micromotion(t: float, loop: ParameterLoop, config: DrivingConfig) -> Unitary:
    """Micromotion operator M(t) = exp[-i omega0 (q.F) sin(omega t) / omega].

    Sign convention: effective-frame states are M(t)^dag applied to
    rotating-frame states; with this choice the numerically propagated
    effective dynamics reproduces the closed-form loop holonomies.  M equals
    the identity whenever sin(omega t) = 0, where the dressed and bare bases
    coincide (stroboscopic instants).
    """
    ops = config.spin
    s = config.omega0 * math.sin(config.omega * t) / config.omega
    return expm_generator(ops.dot(loop.q_of_t(t)), s)


def h_floquet(t: float, loop: ParameterLoop, config: DrivingConfig) -> np.ndarray:
    """Effective (drive-averaged) Hamiltonian g * (q x dq/dt) . F."""
    ops = config.spin
    q = loop.q_of_t(t)
    dq = loop.dq_dt(t)
    return config.g * ops.dot(np.cross(q, dq))


def h_detuning_floquet(t: float, loop: ParameterLoop, config: DrivingConfig) -> np.ndarray:
    """Effective form of a static detuning: (1-g) delta.F + g (q.delta)(q.F)."""
    ops = config.spin
    g = config.g
    q = loop.q_of_t(t)
    d = config.delta_vec
    return (1.0 - g) * ops.dot(d) + g * float(np.dot(q, d)) * ops.dot(q)


def quadratic_zeeman(config: DrivingConfig) -> np.ndarray:
    """Quadratic Zeeman term epsilon * (I - F_z^2) in the bare spin basis."""
    ops = config.spin
    return config.epsilon * (np.eye(ops.dim, dtype=complex) - ops.fz @ ops.fz)


# Rb-87 ground-state constants used by the quadratic-shift law below.
_E_HF = 2.0 * math.pi * 6.834682610904e9  # hyperfine splitting, rad/s
_OMEGA_B = 2.0 * math.pi * 0.7e6          # linear Zeeman rate, rad/s per gauss
_NUCLEAR_SPIN = 1.5
# electron spin g minus the (tiny, opposite-sign) nuclear contribution,
# in units of the Bohr magneton
_G_S = 2.0023193
_G_I_BOHR = -0.0009951414
_MU_B = 2.0 * math.pi * 1.3996245e6       # Bohr magneton, rad/s per gauss


def epsilon_from_zeeman(omega_z: float, sign: float = 1.0) -> float:
    """Quadratic Zeeman coefficient implied by a linear splitting omega_z.

    |epsilon| = (g_s mu_B - g_I mu_N)^2 / (E_hf * omega_B^2 * (1 + 2I)^2) * omega_z^2
    with Rb-87 constants.  For omega_z = 2*pi*1.25 MHz this gives
    epsilon = 2*pi*0.229 kHz.  The measurement only fixes |epsilon|; pass
    sign=-1.0 for the opposite branch.
    """
    if omega_z < 0:
        raise ValueError("omega_z must be non-negative")
    dmu = (_G_S - _G_I_BOHR) * _MU_B
    coeff = dmu * dmu / (_E_HF * _OMEGA_B**2 * (1.0 + 2.0 * _NUCLEAR_SPIN) ** 2)
    return math.copysign(coeff * omega_z * omega_z, sign)


# ---------------------------------------------------------------------------
# Fast generator closures used by the propagators.  These reproduce the
# per-operation functions above but hoist all per-call setup out of the
# integration loop.


def rotating_generator(loop: ParameterLoop, config: DrivingConfig):
    """callable t -> rotating-frame Hamiltonian including detuning and
    quadratic Zeeman whenever the config carries them."""
    ops = config.spin
    n = ops.dim
    fflat = np.ascontiguousarray(ops.fstack.reshape(3, n * n))
    omega0, omega = config.omega0, config.omega
    theta, phi = loop.theta, loop.phi
    static = np.zeros((n, n), dtype=complex)
    if any(config.delta):
        static = static + ops.dot(config.delta_vec)
    if config.epsilon:
        static = static + quadratic_zeeman(config)

    def h(t: float) -> np.ndarray:
        th = float(theta(t))
        ph = float(phi(t))
        st = math.sin(th)
        amp = omega0 * math.cos(omega * t)
        vec = np.array([amp * st * math.cos(ph), amp * st * math.sin(ph), amp * math.cos(th)])
        return (vec @ fflat).reshape(n, n) + static

    return h


def floquet_generator(loop: ParameterLoop, config: DrivingConfig):
    """callable t -> effective-frame generator: geometric term plus the
    effective detuning, plus the micromotion-conjugated quadratic Zeeman term
    when epsilon is nonzero (no closed period-averaged form is used for it)."""
    ops = config.spin
    n = ops.dim
    fflat = np.ascontiguousarray(ops.fstack.reshape(3, n * n))
    g = config.g
    one_minus_g = 1.0 - g
    delta = config.delta_vec
    has_delta = bool(any(config.delta))
    theta, phi = loop.theta, loop.phi
    dtheta, dphi = loop.dtheta, loop.dphi
    epsilon = config.epsilon
    if epsilon:
        hqz = quadratic_zeeman(config)
        omega0_over_omega = config.omega0 / config.omega
        omega = config.omega

    def h(t: float) -> np.ndarray:
        th, ph = float(theta(t)), float(phi(t))
        dth, dph = float(dtheta(t)), float(dphi(t))
        st, ct = math.sin(th), math.cos(th)
        sp, cp = math.sin(ph), math.cos(ph)
        qx, qy, qz = st * cp, st * sp, ct
        dx = ct * cp * dth - st * sp * dph
        dy = ct * sp * dth + st * cp * dph
        dz = -st * dth
        # g * (q x dq)
        vx = g * (qy * dz - qz * dy)
        vy = g * (qz * dx - qx * dz)
        vz = g * (qx * dy - qy * dx)
        if has_delta:
            qd = g * (qx * delta[0] + qy * delta[1] + qz * delta[2])
            vx += one_minus_g * delta[0] + qd * qx
            vy += one_minus_g * delta[1] + qd * qy
            vz += one_minus_g * delta[2] + qd * qz
        hmat = (np.array([vx, vy, vz]) @ fflat).reshape(n, n)
        if epsilon:
            s = omega0_over_omega * math.sin(omega * t)
            qf = (np.array([qx, qy, qz]) @ fflat).reshape(n, n)
            w, v = np.linalg.eigh(qf)
            mdag = (v * np.exp(1j * s * w)) @ v.conj().T
            hmat = hmat + mdag @ hqz @ mdag.conj().T
        return hmat

    return h
