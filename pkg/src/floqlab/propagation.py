"""Evolution-operator integration and loop holonomies.

The workhorse is an embedded Dormand-Prince 5(4) integrator for the matrix
equation dU/dt = -i H(t) U with U(t0) = identity.  Per-step error control
runs at the requested tolerance; whenever the accumulated unitarity drift
max|U^H U - I| exceeds min(10*tol, 1e-8) the state is snapped back to the
closest unitary by polar projection.  The core operates on a stacked batch
of matrices so parameter sweeps (many detunings at once) integrate in a
single pass; the batch shares step control, which costs nothing here because
sweep members have comparable stiffness.

Holonomies for a closed control loop are available three ways:
  * closed form, for the cataloged loops where the transport generator is
    constant along the path;
  * a path-ordered product of segment exponentials (midpoint rule);
  * direct time-ordered integration of the effective generator, which is the
    only route once detuning or quadratic Zeeman terms break the degeneracy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hamiltonians import DrivingConfig, floquet_generator, g_factor, rotating_generator
from .loops import ParameterLoop, make_loop
from .spin import Unitary, expm_generator, spin_matrices

__all__ = [
    "IntegrationError",
    "UnsupportedLoopError",
    "PropagationResult",
    "propagate",
    "stroboscopic_trajectory",
    "bloch_trajectory",
    "holonomy_closed_form",
    "holonomy_path_ordered",
    "holonomy_nonadiabatic",
    "ideal_holonomy",
    "spin_rotation_coefficients",
    "CLOSED_FORM_LABELS",
]

_TOL_RANGE = (1e-13, 1e-4)
_DRIFT_CAP = 1e-8  # stored unitaries never drift beyond this


class IntegrationError(RuntimeError):
    """Step-size underflow or budget exhaustion, with diagnostics attached."""

    def __init__(self, message: str, *, t: float, step: float, steps: int, rejected: int):
        super().__init__(f"{message} (t={t:.6e}, h={step:.3e}, steps={steps}, rejected={rejected})")
        self.t = t
        self.step = step
        self.steps = steps
        self.rejected = rejected


class UnsupportedLoopError(ValueError):
    """Requested a closed-form holonomy for a loop that has none."""


@dataclass
class PropagationResult:
    """Final evolution operator plus optional samples and step diagnostics."""

    final: Unitary
    trajectory: list[tuple[float, np.ndarray]] | None
    steps: int
    rejected: int
    reunitarizations: int
    max_drift: float


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4

_MAX_STEPS = 50_000_000


def _polar_project(u: np.ndarray) -> np.ndarray:
    """Closest unitary to u (batched): U (U^H U)^(-1/2), via SVD."""
    w, _, vh = np.linalg.svd(u)
    return w @ vh


def _unitarity_drift(u: np.ndarray) -> float:
    eye = np.eye(u.shape[-1])
    return float(np.max(np.abs(np.swapaxes(u, -1, -2).conj() @ u - eye)))


def _dopri5(hamiltonian, y0: np.ndarray, t0: float, t1: float, tol: float,
            max_step: float, checkpoints: np.ndarray):
    """Integrate dU/dt = -i H(t) U over [t0, t1], landing exactly on each
    checkpoint.  ``hamiltonian`` maps t to (N, N) or to the batch shape of y0.

    Returns (samples, diagnostics) where samples[i] is the state at
    checkpoints[i].
    """
    span = t1 - t0
    y = np.array(y0, dtype=complex)
    t = t0
    drift_threshold = min(10.0 * tol, _DRIFT_CAP)
    h_pref = min(span / 100.0, max_step)
    hmin = 16.0 * np.finfo(float).eps * max(abs(t0), abs(t1), span)

    steps = rejected = reunit = 0
    max_drift = 0.0
    samples = []
    k = [None] * 7
    k[0] = -1j * (hamiltonian(t) @ y)

    for target in checkpoints:
        while t < target - 1e-14 * span:
            h = min(h_pref, max_step, target - t)
            if h < hmin:
                raise IntegrationError(
                    "step size underflow", t=t, step=h, steps=steps, rejected=rejected
                )
            for i in range(1, 7):
                yi = y + h * sum(a * ki for a, ki in zip(_DP_A[i], k))
                k[i] = -1j * (hamiltonian(t + _DP_C[i] * h) @ yi)
            y5 = y + h * sum(b * ki for b, ki in zip(_DP_B5, k) if b)
            err_mat = h * sum(e * ki for e, ki in zip(_DP_E, k) if e)
            scale = tol + tol * max(float(np.max(np.abs(y))), float(np.max(np.abs(y5))))
            err = float(np.sqrt(np.mean((np.abs(err_mat) / scale) ** 2)))
            if err <= 1.0:
                t_new = t + h
                drift = _unitarity_drift(y5)
                max_drift = max(max_drift, drift)
                if drift > drift_threshold:
                    y5 = _polar_project(y5)
                    reunit += 1
                    k[6] = -1j * (hamiltonian(t_new) @ y5)
                t, y = t_new, y5
                k[0] = k[6]  # first-same-as-last
                steps += 1
                if steps > _MAX_STEPS:
                    raise IntegrationError(
                        "step budget exhausted", t=t, step=h, steps=steps, rejected=rejected
                    )
                factor = min(5.0, max(0.2, 0.9 * err ** -0.2)) if err > 0 else 5.0
                if h < h_pref:
                    # step was clamped to land on a checkpoint; keep the
                    # controller's preference so later steps do not crawl
                    h_pref = max(h_pref, h * factor)
                else:
                    h_pref = h * factor
            else:
                rejected += 1
                h_pref = h * max(0.2, 0.9 * err ** -0.2)
        t = target
        samples.append(y.copy())

    diag = {"steps": steps, "rejected": rejected, "reunitarizations": reunit, "max_drift": max_drift}
    return samples, diag


def propagate(hamiltonian, t0: float, t1: float, tol: float = 1e-10, *,
              max_step: float | None = None, sample_times=None) -> PropagationResult:
    """Integrate the evolution operator for ``hamiltonian`` from t0 to t1.

    ``hamiltonian`` is a callable t -> Hermitian (N, N) array.  ``tol`` is the
    per-step error tolerance (allowed range 1e-13 .. 1e-4).  When
    ``sample_times`` is given, the integrator lands on each time exactly and
    the result carries (t, U(t)) samples.
    """
    if not (t1 > t0):
        raise ValueError("need t1 > t0")
    if not (_TOL_RANGE[0] <= tol <= _TOL_RANGE[1]):
        raise ValueError(f"tol must lie in [{_TOL_RANGE[0]}, {_TOL_RANGE[1]}]")
    h0 = np.asarray(hamiltonian(t0), dtype=complex)
    if h0.ndim != 2 or h0.shape[0] != h0.shape[1]:
        raise ValueError("hamiltonian(t) must return a square matrix")
    dim = h0.shape[0]

    if sample_times is None:
        checkpoints = np.array([t1])
    else:
        checkpoints = np.asarray(sample_times, dtype=float)
        if checkpoints.ndim != 1 or checkpoints.size == 0:
            raise ValueError("sample_times must be a non-empty 1-d sequence")
        if np.any(np.diff(checkpoints) <= 0):
            raise ValueError("sample_times must be strictly increasing")
        if checkpoints[0] < t0 - 1e-12 or checkpoints[-1] > t1 + 1e-12 * max(abs(t1), 1.0):
            raise ValueError("sample_times must lie within [t0, t1]")
        if abs(checkpoints[-1] - t1) > 1e-12 * max(abs(t1), 1.0):
            checkpoints = np.append(checkpoints, t1)

    y0 = np.eye(dim, dtype=complex)
    samples, diag = _dopri5(hamiltonian, y0, t0, t1, tol, max_step or (t1 - t0), checkpoints)

    trajectory = None
    if sample_times is not None:
        n_wanted = len(np.asarray(sample_times))
        trajectory = [(float(tk), uk) for tk, uk in zip(checkpoints[:n_wanted], samples[:n_wanted])]
    final = Unitary(samples[-1], atol=_DRIFT_CAP)
    return PropagationResult(
        final=final,
        trajectory=trajectory,
        steps=diag["steps"],
        rejected=diag["rejected"],
        reunitarizations=diag["reunitarizations"],
        max_drift=diag["max_drift"],
    )


def _propagate_batch(hamiltonian, dim: int, batch: int, t0: float, t1: float,
                     tol: float, max_step: float) -> np.ndarray:
    """Internal batched run: ``hamiltonian`` maps t to (batch, N, N); returns
    the final (batch, N, N) stack of unitaries (polar-corrected like the
    public path)."""
    y0 = np.broadcast_to(np.eye(dim, dtype=complex), (batch, dim, dim)).copy()
    samples, _ = _dopri5(hamiltonian, y0, t0, t1, tol, max_step, np.array([t1]))
    return samples[-1]


# ---------------------------------------------------------------------------
# Trajectories


def _max_step_for(config: DrivingConfig, frame: str) -> float:
    if frame == "rotating":
        # resolve the drive oscillation: at least 50 accepted steps per period
        return math.pi / (25.0 * config.omega)
    # effective frame is smooth on the loop timescale
    return config.loop_duration / 50.0


def stroboscopic_trajectory(loop: ParameterLoop, config: DrivingConfig,
                            frame: str = "rotating", tol: float = 1e-10):
    """Evolution operators sampled at t_k = k*pi/omega over one loop.

    At these instants the micromotion operator is the identity, so the
    dressed and bare descriptions coincide and the two frames may be compared
    point by point.  Requires the loop duration to be an integer number of
    drive half-periods (the loop rate a sub-harmonic of the drive).
    """
    if frame not in ("rotating", "floquet"):
        raise ValueError("frame must be 'rotating' or 'floquet'")
    half_periods = loop.duration * config.omega / math.pi
    if abs(half_periods - round(half_periods)) > 1e-9:
        raise ValueError(
            "loop duration must be an integer multiple of pi/omega; "
            "choose the loop rate as a sub-harmonic of the drive frequency"
        )
    n = int(round(half_periods))
    t_k = np.arange(1, n + 1) * (math.pi / config.omega)
    gen = rotating_generator(loop, config) if frame == "rotating" else floquet_generator(loop, config)
    result = propagate(gen, 0.0, loop.duration, tol,
                       max_step=_max_step_for(config, frame), sample_times=t_k)
    dim = config.spin.dim
    return [(0.0, np.eye(dim, dtype=complex))] + result.trajectory


def bloch_trajectory(samples, initial_state) -> np.ndarray:
    """Spin expectation values (<fx>, <fy>, <fz>) along a trajectory.

    ``samples`` is a PropagationResult with a trajectory, or a list of
    (t, U) pairs.  Returns an (n, 3) array; for spin 1/2 multiply by 2 to
    land on the unit Bloch sphere.
    """
    if isinstance(samples, PropagationResult):
        if samples.trajectory is None:
            raise ValueError("propagation result carries no trajectory samples")
        samples = samples.trajectory
    psi0 = np.asarray(initial_state, dtype=complex).ravel()
    psi0 = psi0 / np.linalg.norm(psi0)
    dim = psi0.size
    f = 0.5 * (dim - 1)
    ops = spin_matrices(f)
    out = np.empty((len(samples), 3))
    for i, (_, u) in enumerate(samples):
        psi = np.asarray(u) @ psi0
        for j, m in enumerate((ops.fx, ops.fy, ops.fz)):
            out[i, j] = np.vdot(psi, m @ psi).real
    return out


# ---------------------------------------------------------------------------
# Holonomies

# Unit axis n such that the loop holonomy is exp(-i 2*pi*g n.F): these are
# the loops whose transport generator g*(q x dq).F is constant along the path.
_CLOSED_FORM_AXES = {
    "l1": (0.0, 1.0, 0.0),
    "l2": (-1.0, 0.0, 0.0),
    "l3": (0.0, 0.0, 1.0),
    "l4": (-math.sqrt(0.5), math.sqrt(0.5), 0.0),
    "p1": (1.0, 0.0, 0.0),
    "p2": (0.0, 1.0, 0.0),
    "p3": (0.0, 0.0, 1.0),
}
CLOSED_FORM_LABELS = tuple(_CLOSED_FORM_AXES)


def holonomy_closed_form(label: str, g: float, spin_f: float) -> Unitary:
    """Closed-form loop holonomy exp(-i 2*pi*g n.F) for cataloged loops.

    Raises UnsupportedLoopError for l5 and l6, whose transport generators do
    not commute along the path; use the numeric routes for those.
    """
    axis = _CLOSED_FORM_AXES.get(label)
    if axis is None:
        raise UnsupportedLoopError(
            f"no closed form for loop {label!r}; use holonomy_path_ordered or "
            "holonomy_nonadiabatic"
        )
    ops = spin_matrices(spin_f)
    return expm_generator(ops.dot(axis), 2.0 * math.pi * g)


def _ordered_product(mats: np.ndarray) -> np.ndarray:
    """Product mats[-1] @ ... @ mats[0] by pairwise tree reduction."""
    while mats.shape[0] > 1:
        m = mats.shape[0]
        even = mats[0 : m - m % 2]
        paired = even[1::2] @ even[0::2]
        if m % 2:
            mats = np.concatenate([paired, mats[-1:]], axis=0)
        else:
            mats = paired
    return mats[0]


def holonomy_path_ordered(loop: ParameterLoop, g: float, spin_f: float,
                          n_segments: int = 10_000) -> Unitary:
    """Path-ordered product of segment transport exponentials.

    Each segment contributes exp(-i dq . A(q_mid)) with the connection
    evaluated at the segment midpoint; the midpoint rule makes the ordering
    error second order in the segment count.
    """
    if n_segments < 16:
        raise ValueError("need at least 16 segments")
    ops = spin_matrices(spin_f)
    ts = np.linspace(0.0, loop.duration, n_segments + 1)
    qs = loop.q_of_t(ts)
    mids = loop.q_of_t(0.5 * (ts[:-1] + ts[1:]))
    dq = qs[1:] - qs[:-1]
    axes = g * np.cross(mids, dq)  # (n, 3); generator of each segment
    gens = np.tensordot(axes, ops.fstack, axes=([1], [0]))
    w, v = np.linalg.eigh(gens)
    segs = (v * np.exp(-1j * w)[:, None, :]) @ np.swapaxes(v, -1, -2).conj()
    return Unitary(_ordered_product(segs))


def holonomy_nonadiabatic(loop: ParameterLoop, config: DrivingConfig,
                          tol: float = 1e-10) -> Unitary:
    """Loop holonomy from time-ordered integration of the effective generator.

    The generator is the geometric transport term plus the effective detuning
    term, plus the micromotion-conjugated quadratic Zeeman term when epsilon
    is nonzero.  With detuning and epsilon both zero this converges to the
    path-ordered (purely geometric) holonomy.
    """
    gen = floquet_generator(loop, config)
    result = propagate(gen, 0.0, loop.duration, tol, max_step=_max_step_for(config, "floquet"))
    return result.final


def holonomy_nonadiabatic_delta_sweep(loop: ParameterLoop, config: DrivingConfig,
                                      delta_z_values, tol: float = 1e-10) -> np.ndarray:
    """Holonomies for a sweep of z detunings, integrated as one batch.

    Returns an array of shape (len(delta_z_values), N, N).  Equivalent to
    calling holonomy_nonadiabatic once per with_delta_z(value), but the whole
    grid shares a single adaptive integration pass.
    """
    values = np.asarray(delta_z_values, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("delta_z_values must be a non-empty 1-d sequence")
    gens = [floquet_generator(loop, config.with_delta_z(dz)) for dz in values]

    def h(t: float) -> np.ndarray:
        return np.stack([g(t) for g in gens])

    dim = config.spin.dim
    return _propagate_batch(h, dim, values.size, 0.0, loop.duration, tol,
                            _max_step_for(config, "floquet"))


def ideal_holonomy(loop: ParameterLoop, g: float, spin_f: float,
                   n_segments: int = 20_000) -> Unitary:
    """Detuning-free target holonomy: closed form when available, otherwise a
    high-resolution path-ordered product."""
    if loop.label in _CLOSED_FORM_AXES:
        return holonomy_closed_form(loop.label, g, spin_f)
    return holonomy_path_ordered(loop, g, spin_f, n_segments)


def holonomy_for_config(loop: ParameterLoop, config: DrivingConfig) -> Unitary:
    """Ideal holonomy at the configured drive strength (g from omega0/omega)."""
    return ideal_holonomy(loop, g_factor(config.omega0, config.omega), config.spin_f)


# ---------------------------------------------------------------------------
# Structure checks


def spin_rotation_coefficients(u, spin_f: float):
    """Decompose a unitary as exp(-i (c0 I + c . F)) and report the residual.

    Uses the principal matrix logarithm, so it is only meaningful while the
    rotation angle keeps all generator eigenvalues inside (-pi, pi).  The
    residual is the max-norm part of the log-generator outside
    span{I, fx, fy, fz}; detuning-free loop holonomies sit in that span for
    every spin (they are spin-rotations), so their residual vanishes.
    """
    u = u.matrix if isinstance(u, Unitary) else np.asarray(u, dtype=complex)
    ops = spin_matrices(spin_f)
    vals, vecs = np.linalg.eig(u)
    log_gen = vecs @ np.diag(-np.angle(vals)) @ np.linalg.inv(vecs)
    h = 0.5 * (log_gen + log_gen.conj().T)  # u is normal; symmetrize roundoff
    dim = ops.dim
    c0 = float(np.trace(h).real) / dim
    coeffs = np.array([
        (np.trace(h @ m).real) / (np.trace(m @ m).real) for m in (ops.fx, ops.fy, ops.fz)
    ])
    model = c0 * np.eye(dim) + np.tensordot(coeffs, ops.fstack, axes=1)
    residual = float(np.max(np.abs(h - model)))
    return c0, coeffs, residual
